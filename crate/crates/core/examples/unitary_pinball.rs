//! Unitary 2D pinball: the field splits and recombines through the lattice
//! with no detectors, and a close pair of trajectories stays close.
//!
//! Pass the number of rows (1 to 3) as the first argument; each row adds
//! roughly a minute on one core.

use pinball::bohm::quantile_ahead;
use pinball::geometry::{DetectorLayout, PinballGeometry};
use pinball::measurement::{run_unitary_pinball, UnitarySetup};
use pinball::wavefield::{gaussian_packet, Grid, PacketSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let levels: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(1);
    let grid = Grid::new_2d([1024, 512], [102.4, 51.2])?;
    let geometry = PinballGeometry {
        levels,
        apex: [0.0, -12.0],
        row_spacing: 8.0,
        pitch: 16.0,
        height: 50.78125,
        width: 0.25,
        half_length: 6.0,
        detectors: DetectorLayout { enabled: false },
    };
    let packet = PacketSpec::new_2d([-8.0, -20.0], [10.0, 10.0], [1.0, 1.0]);
    let setup = UnitarySetup {
        grid: grid.clone(),
        duration: UnitarySetup::duration_past_last_row(&packet, &geometry, 6.0),
        geometry,
        packet: packet.clone(),
        dt: 1e-3,
    };
    let d0 = 0.01;
    let pair = [[-8.3, -20.0], [-8.3 + d0, -20.0]];
    let run = run_unitary_pinball(&setup, &pair)?;

    let m0 = gaussian_packet(&grid, &packet)?.marginal_1d(0);
    let mf = run.final_psi.marginal_1d(0);
    let q = |m: &[f64], x: f64| quantile_ahead(m, grid.lower(0), grid.spacing(0), x);
    let end: Vec<_> = run.trajectories.iter().map(|t| t.last().unwrap()).collect();
    let dq0 = (q(&m0, pair[0][0]) - q(&m0, pair[1][0])).abs();
    let dq1 = (q(&mf, end[0][0]) - q(&mf, end[1][0])).abs();
    println!(
        "t = {:.2}, {} steps, norm drift {:.1e}",
        run.final_psi.time(),
        run.steps,
        run.max_norm_drift
    );
    for (i, p) in end.iter().enumerate() {
        println!(
            "particle {i}: final ({:.4}, {:.4}) arms {:?}",
            p[0],
            p[1],
            run.bits(i)
        );
    }
    println!(
        "lateral quantile separation {dq0:.3e} -> {dq1:.3e} (ratio {:.2})",
        dq1 / dq0
    );
    Ok(())
}

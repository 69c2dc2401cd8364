//! An ensemble sampled from |psi|^2 stays distributed as |psi(t)|^2 after
//! scattering, checked with a Kolmogorov-Smirnov test.

use pinball::bohm::sample_ensemble;
use pinball::geometry::Barrier;
use pinball::measurement::{run_single_barrier, SingleBarrierSetup};
use pinball::stats::{ks_p_value, ks_statistic, GridCdf};
use pinball::wavefield::{gaussian_packet, Grid, PacketSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(2000);
    let grid = Grid::new_1d(2048, 40.96)?;
    let packet = PacketSpec::new_1d(-8.0, 10.0, 1.0);
    let barrier = Barrier::new_1d(0.0, 50.78125, 0.25);
    let setup = SingleBarrierSetup::new(grid.clone(), packet.clone(), barrier, 1e-3);
    let psi0 = gaussian_packet(&grid, &packet)?;
    let particles = sample_ensemble(&psi0, n, &mut ChaCha8Rng::seed_from_u64(5))?;
    let run = run_single_barrier(&setup, &particles)?;

    let cdf = GridCdf::new(
        &run.final_psi.marginal_1d(0),
        grid.lower(0),
        grid.spacing(0),
    );
    let d = ks_statistic(&run.final_positions(), |x| cdf.cdf(x));
    println!(
        "{n} particles at t = {:.2}: D = {d:.4}, p = {:.3}",
        run.final_psi.time(),
        ks_p_value(d, n)
    );
    Ok(())
}

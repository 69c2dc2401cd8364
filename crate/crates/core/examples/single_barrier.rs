//! Bohm trajectories through one calibrated barrier: the front of the packet
//! is transmitted, the back reflected, and no two trajectories cross.

use pinball::bohm::sample_ensemble;
use pinball::geometry::Barrier;
use pinball::measurement::{run_single_barrier, SingleBarrierSetup};
use pinball::wavefield::{gaussian_packet, Grid, PacketSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const H_STAR: f64 = 50.78125;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Grid::new_1d(2048, 40.96)?;
    let packet = PacketSpec::new_1d(-8.0, 10.0, 1.0);
    let setup = SingleBarrierSetup::new(
        grid.clone(),
        packet.clone(),
        Barrier::new_1d(0.0, H_STAR, 0.25),
        1e-3,
    );
    let psi0 = gaussian_packet(&grid, &packet)?;
    let particles = sample_ensemble(&psi0, 40, &mut ChaCha8Rng::seed_from_u64(3))?;
    let run = run_single_barrier(&setup, &particles)?;

    let mut rows: Vec<_> = run.q0.iter().zip(run.outcomes(0.0)).collect();
    rows.sort_by(|a, b| a.0.total_cmp(b.0));
    for (q, outcome) in rows {
        println!("q0 = {q:.4}  {outcome:?}");
    }
    println!(
        "T = {:.6}, half-rule violations {}, worst reordering {:.3} cells, capped {}",
        run.transmission,
        run.half_rule_violations(0.0, 0.02),
        run.max_reordering_cells(),
        run.guidance.capped
    );
    Ok(())
}

//! Measured pinball: detection and collapse after every barrier turn the
//! internal coordinate into an orbit of the doubling map.

use pinball::chaos::{bits_to_string, compare_to_oracle, oracle_orbit, QuantileSequence};
use pinball::measurement::{run_measured_pinball, MeasuredSetup};
use pinball::wavefield::Grid;

const H_STAR: f64 = 76.5625;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let q0: f64 = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(0.3);
    let mut setup = MeasuredSetup::new(Grid::new_1d(2048, 40.96)?, 10.0, 1.0, H_STAR, 0.05);
    setup.levels = 8;
    let particle = run_measured_pinball(&setup, q0)?;

    let oracle = oracle_orbit(particle.q0, setup.levels);
    println!(
        "{:>5} {:>10} {:>10} {:>6}",
        "level", "q", "oracle", "branch"
    );
    for (e, o) in particle.events.iter().zip(&oracle) {
        println!(
            "{:>5} {:>10.6} {:>10.6} {:>6?}",
            e.level, e.q_before, o, e.outcome
        );
    }
    let cmp = compare_to_oracle(
        &QuantileSequence::from_events(&particle.events),
        particle.q0,
    );
    println!(
        "record {}  final node {}  weight {:.4}  max deviation {:.2e}",
        bits_to_string(particle.record.bits()),
        particle.final_node(),
        particle.weight,
        cmp.max_deviation
    );
    Ok(())
}

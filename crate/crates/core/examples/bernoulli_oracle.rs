//! The exact doubling map: orbits, symbolic paths and how fast nearby seeds
//! separate.

use pinball::chaos::{
    bits_to_string, first_mismatch, lyapunov_oracle, oracle_orbit, symbolic_path, DivergenceReport,
    QuantileSequence,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("orbit of 0.3: {:?}", oracle_orbit(0.3, 6));
    println!(
        "path of 1/3:  {}",
        bits_to_string(&symbolic_path(1.0 / 3.0, 8))
    );

    let (a, b) = (0.3, 0.3 + 2f64.powi(-10));
    let first = first_mismatch(&symbolic_path(a, 16), &symbolic_path(b, 16));
    println!("seeds 2^-10 apart first disagree at level {first:?}");

    let seq = QuantileSequence::oracle(a, 12);
    println!(
        "oracle Lyapunov exponent {:.6} (ln 2 = {:.6})",
        lyapunov_oracle(&seq)?,
        2f64.ln()
    );

    let report = DivergenceReport::from_pair(&seq, &QuantileSequence::oracle(b, 12));
    report.write_csv(std::io::stdout().lock())?;
    Ok(())
}

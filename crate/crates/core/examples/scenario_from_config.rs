//! Parse a scenario config, run it into a temporary directory and print the
//! manifest.

use pinball::scenario::{parse_config, run_scenario, RunOptions};

const CONFIG: &str = "\
scenario = pinball_measured
barrier.width = 0.05
barrier.height = 76.5625
measure.levels = 4
particles.q0 = 0.3, 0.7
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = parse_config(CONFIG)?;
    let out = std::env::temp_dir().join("pinball_scenario_example");
    let manifest = run_scenario(
        &cfg,
        &RunOptions {
            out: out.clone(),
            overwrite: true,
        },
    )?;
    println!("{}", serde_json::to_string_pretty(&manifest)?);
    println!("outputs in {}", out.display());
    Ok(())
}

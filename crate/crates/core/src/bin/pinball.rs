use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pinball::scenario::{
    calibrate_from_config, exit, load_config, run_scenario, verify_golden, RunOptions,
};

#[derive(Parser)]
#[command(name = "pinball", version, about = "Quantum pinball simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its outputs and manifest.
    Run {
        config: PathBuf,
        /// Output directory; defaults to `output.dir` or `out/<config name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace results of an earlier run in the output directory.
        #[arg(long)]
        overwrite: bool,
    },
    /// Calibrate the barrier height of a config and print the report.
    Calibrate { config: PathBuf },
    /// Compare an output directory against golden data.
    Verify { out: PathBuf, golden: PathBuf },
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("PINBALL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("PINBALL_THREADS={v:?} is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn default_out(config: &Path) -> PathBuf {
    let stem = config
        .file_stem()
        .map_or("run".into(), |s| s.to_string_lossy());
    PathBuf::from("out").join(stem.as_ref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(exit::CONFIG as u8);
    }
    let code = match cli.command {
        Command::Run {
            config,
            out,
            overwrite,
        } => run(&config, out, overwrite),
        Command::Calibrate { config } => calibrate(&config),
        Command::Verify { out, golden } => match verify_golden(&out, &golden) {
            Ok(report) => {
                print!("{report}");
                if report.passed() {
                    exit::OK
                } else {
                    exit::ASSERTION
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit::ABORT
            }
        },
    };
    ExitCode::from(code as u8)
}

fn run(config: &Path, out: Option<PathBuf>, overwrite: bool) -> i32 {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit::CONFIG;
        }
    };
    let out = out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| default_out(config));
    let manifest = match run_scenario(
        &cfg,
        &RunOptions {
            out: out.clone(),
            overwrite,
        },
    ) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    println!(
        "{} {:?} in {:.1} s -> {}",
        manifest.scenario,
        manifest.status,
        manifest.wall_time_s,
        out.display()
    );
    for (k, v) in &manifest.metrics {
        println!("  {k} = {v}");
    }
    for a in &manifest.assertions {
        println!(
            "  [{}] {}: {}",
            if a.passed { "ok" } else { "FAIL" },
            a.name,
            a.detail
        );
    }
    if let Some(e) = &manifest.error {
        eprintln!("error: {e}");
    }
    manifest.exit_code()
}

fn calibrate(config: &Path) -> i32 {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit::CONFIG;
        }
    };
    match calibrate_from_config(&cfg) {
        Ok(report) => {
            let mut stdout = std::io::stdout().lock();
            if let Err(e) = report.write_csv(&mut stdout) {
                eprintln!("error: {e}");
                return exit::ABORT;
            }
            let (t, r) = (report.transmission(), report.reflection());
            eprintln!(
                "h* = {:?}  T = {t:.6}  R + T - 1 = {:.2e}",
                report.height(),
                t + r - 1.0
            );
            if (t - cfg.calibration.target).abs() <= cfg.calibration.tol
                && (t + r - 1.0).abs() <= 1e-6
            {
                exit::OK
            } else {
                exit::ASSERTION
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit::ABORT
        }
    }
}

//! Acceptance suite: runs every shipped scenario once, then checks each
//! criterion against the written outputs and prints one PASS/FAIL line per
//! criterion. Exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pinball::chaos::{bit_of, oracle_orbit, symbolic_path};
use pinball::chaos::{compare_to_oracle, QuantileSequence};
use pinball::geometry::{
    calibrate_half_transmission, transmission_coefficient, Barrier, CalibrationOptions,
};
use pinball::measurement::{run_measured_ensemble, run_measured_pinball, MeasuredSetup};
use pinball::scenario::{load_config, run_scenario, RunManifest, RunOptions, RunStatus};
use pinball::stats::median;
use pinball::wavefield::{gaussian_packet, Grid, PacketSpec, Spectral, SplitStep};

const GRID_1D: (usize, f64) = (2048, 40.96);

struct Suite {
    results: Vec<(String, bool)>,
}

impl Suite {
    fn check(&mut self, name: &str, passed: bool, detail: impl AsRef<str>) {
        println!(
            "{} {name}: {}",
            if passed { "PASS" } else { "FAIL" },
            detail.as_ref()
        );
        self.results.push((name.to_string(), passed));
    }
}

struct Shipped {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Shipped {
    fn metric(&self, name: &str) -> f64 {
        self.manifest.metric(name).unwrap_or(f64::NAN)
    }

    fn wall(&self) -> f64 {
        self.manifest.wall_time_s
    }

    fn table(&self, file: &str) -> Vec<BTreeMap<String, String>> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(self.dir.join(file))
            .unwrap_or_else(|e| panic!("{file}: {e}"));
        let headers = reader.headers().unwrap().clone();
        reader
            .records()
            .map(|r| {
                let r = r.unwrap();
                headers
                    .iter()
                    .map(String::from)
                    .zip(r.iter().map(String::from))
                    .collect()
            })
            .collect()
    }
}

fn num(row: &BTreeMap<String, String>, col: &str) -> f64 {
    row[col].parse().unwrap_or(f64::NAN)
}

fn run_shipped(root: &Path) -> BTreeMap<String, Shipped> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "cfg"))
        .collect();
    paths.sort();
    let mut out = BTreeMap::new();
    for path in paths {
        let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
        let cfg = load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let run_dir = root.join(&stem);
        let manifest = run_scenario(
            &cfg,
            &RunOptions {
                out: run_dir.clone(),
                overwrite: false,
            },
        )
        .unwrap_or_else(|e| panic!("{stem}: {e}"));
        out.insert(
            stem,
            Shipped {
                dir: run_dir,
                manifest,
            },
        );
    }
    out
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let mut suite = Suite {
        results: Vec::new(),
    };
    let start = Instant::now();
    let runs = run_shipped(tmp.path());

    for (name, run) in &runs {
        let failed: Vec<_> = run
            .manifest
            .failed_assertions()
            .map(|a| a.name.as_str())
            .collect();
        suite.check(
            &format!("shipped config {name}"),
            run.manifest.status == RunStatus::Passed && run.wall() < 600.0,
            format!(
                "status {:?}, {:.1} s (limit 600 s), failed assertions {failed:?}",
                run.manifest.status,
                run.wall()
            ),
        );
    }

    // Calibration
    let cal = &runs["calibrate"];
    let (t, r) = (cal.metric("transmission"), cal.metric("reflection"));
    suite.check(
        "calibration",
        (t - 0.5).abs() <= 1e-3 && (t + r - 1.0).abs() <= 1e-6 && cal.wall() < 120.0,
        format!(
            "h* = {}, |T - 0.5| = {:.2e} (<= 1e-3), |R + T - 1| = {:.2e} (<= 1e-6), {:.1} s (< 120 s)",
            cal.metric("h_star"),
            (t - 0.5).abs(),
            (t + r - 1.0).abs(),
            cal.wall()
        ),
    );

    // Front/back-half determinism, from the events file
    let sb = &runs["single_barrier"];
    let events = sb.table("events.csv");
    let wrong = events
        .iter()
        .filter(|e| {
            let (q, b) = (num(e, "q_before"), &e["branch"]);
            (q < 0.48 && b != "1") || (q > 0.52 && b != "0")
        })
        .count();
    suite.check(
        "front_back_half",
        events.len() == 200 && wrong == 0 && sb.wall() < 120.0,
        format!(
            "{} trajectories, {wrong} on the wrong side outside q in [0.48, 0.52], {:.1} s (< 120 s)",
            events.len(),
            sb.wall()
        ),
    );

    // Non-crossing, from the trajectory file
    let dx = GRID_1D.1 / GRID_1D.0 as f64;
    let mut by_id: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for row in sb.table("trajectories.csv") {
        by_id
            .entry(row["trajectory_id"].parse().unwrap())
            .or_default()
            .push(num(&row, "x"));
    }
    let mut tracks: Vec<Vec<f64>> = by_id.into_values().collect();
    tracks.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let samples = tracks.iter().map(Vec::len).min().unwrap_or(0);
    let worst = (0..samples)
        .flat_map(|k| tracks.windows(2).map(move |w| (w[0][k] - w[1][k]) / dx))
        .fold(0.0f64, f64::max);
    suite.check(
        "non_crossing",
        tracks.len() == 200 && worst <= 1.0,
        format!(
            "{} trajectories over {samples} output steps, largest order reversal {worst:.3} cells (<= 1)",
            tracks.len()
        ),
    );

    // Unitarity
    let drift = runs
        .values()
        .map(|r| r.metric("max_norm_drift"))
        .filter(|d| !d.is_nan())
        .fold(0.0f64, f64::max);
    let (width_err, t_end) = free_gaussian_width_error();
    suite.check(
        "unitarity",
        drift < 1e-10 && width_err < 5e-3,
        format!(
            "max norm drift {drift:.2e} over shipped scenarios (< 1e-10), free Gaussian width error {:.3e} at t = {t_end} (< 0.5%)",
            width_err
        ),
    );

    // Bernoulli map reproduction
    let pm = &runs["pinball_measured"];
    let rec = pm.table("records.csv");
    let q0 = num(&rec[0], "q0");
    let sim: Vec<f64> = (0..4).map(|l| num(&rec[0], &format!("q_{l}"))).collect();
    let oracle = oracle_orbit(q0, 4);
    let printed = [0.3, 0.6, 0.2, 0.4];
    let dev = sim
        .iter()
        .zip(oracle.iter().zip(printed))
        .map(|(s, (o, p))| (s - o).abs().max((s - p).abs()))
        .fold(0.0f64, f64::max);
    let bits: Vec<bool> = rec[0]["bits"].chars().take(4).map(|c| c == '1').collect();
    let bits_ok =
        bits == symbolic_path(q0, 4) && bits == sim.iter().map(|&q| bit_of(q)).collect::<Vec<_>>();
    suite.check(
        "bernoulli_q0_0.3",
        dev < 0.02 && bits_ok,
        format!("q = {sim:?}, max deviation from 0.3, 0.6, 0.2, 0.4 and from the oracle {dev:.2e} (< 0.02), bits {} match: {bits_ok}", &rec[0]["bits"][..4]),
    );

    let be = &runs["bernoulli_ensemble"];
    let rec = be.table("records.csv");
    let first: Vec<f64> = rec
        .chunks(2)
        .map(|p| {
            p[0]["bits"]
                .chars()
                .zip(p[1]["bits"].chars())
                .position(|(a, b)| a != b)
                .map_or(f64::INFINITY, |i| (i + 1) as f64)
        })
        .collect();
    let med = median(&first);
    suite.check(
        "bernoulli_first_mismatch",
        first.len() == 50 && (9.0..=12.0).contains(&med),
        format!(
            "{} pairs with dq0 = 2^-10, median first mismatch level {med} (in [9, 12])",
            first.len()
        ),
    );
    let rates: Vec<f64> = (0..first.len())
        .filter_map(|i| divergence_lyapunov(&be.dir.join(format!("divergence_{i:03}.csv"))))
        .collect();
    let lyap = rates.iter().sum::<f64>() / rates.len() as f64;
    suite.check(
        "bernoulli_lyapunov",
        (lyap - 2f64.ln()).abs() <= 0.1,
        format!(
            "mean pair rate {lyap:.4} over {} pairs (ln 2 +/- 0.1)",
            rates.len()
        ),
    );
    let bern_wall = pm.wall() + be.wall();
    suite.check(
        "bernoulli_runtime",
        bern_wall < 300.0,
        format!("{bern_wall:.1} s (< 300 s)"),
    );

    // Figure 1 analog
    let un = &runs["pinball_unitary"];
    let ratio = un.metric("max_pair_ratio");
    suite.check(
        "figure1_no_divergence",
        un.metric("pairs") == 20.0 && ratio < 10.0 && un.wall() < 600.0,
        format!(
            "{} pairs 0.01 sigma apart on 1024 x 512, largest final/initial quantile separation ratio {ratio:.3} (< 10), position ratio {:.1}, {:.1} s (< 600 s)",
            un.metric("pairs"),
            un.metric("max_pair_ratio_position"),
            un.wall()
        ),
    );
    let rate = un.metric("mean_pair_rate");
    suite.check(
        "figure1_pair_rate",
        rate <= 0.05,
        format!(
            "mean per-level expansion rate {rate:.4} (<= 0.05), largest single pair {:.4}",
            un.metric("max_pair_rate")
        ),
    );

    // Figure 2 analog: the same pairs through the measured pinball
    let q_pairs: Vec<f64> = un
        .table("records.csv")
        .iter()
        .map(|r| num(r, "q0"))
        .collect();
    let h_narrow = runs["calibrate_narrow"].metric("h_star");
    let mut setup = measured_setup(h_narrow);
    setup.levels = 12;
    setup.record_trajectories = false;
    let t0 = Instant::now();
    let measured = run_measured_ensemble(&setup, &q_pairs).expect("figure 2 run");
    let split = measured
        .particles
        .chunks(2)
        .filter(|p| p[0].record.hamming(&p[1].record) >= 1)
        .count();
    let npairs = measured.particles.len() / 2;
    suite.check(
        "figure2_paths_diverge",
        npairs == 20 && split as f64 >= 0.9 * npairs as f64,
        format!(
            "{split} of {npairs} pairs on different lattice paths by level 12 (>= 90%), {:.1} s",
            t0.elapsed().as_secs_f64()
        ),
    );

    // Equivariance
    let es = &runs["ensemble_stats"];
    suite.check(
        "equivariance",
        es.metric("particles") == 1e4 && es.metric("ks_p_value") >= 0.01,
        format!(
            "{} particles, KS D = {:.4}, p = {:.3} (>= 0.01)",
            es.metric("particles"),
            es.metric("ks_statistic"),
            es.metric("ks_p_value")
        ),
    );

    // Negative control
    let grid = Grid::new_1d(GRID_1D.0, GRID_1D.1).unwrap();
    let mut opts = CalibrationOptions::new(grid.clone(), 10.0, 1.0, 0.05, 1e-3);
    opts.target = 0.6;
    let h60 = calibrate_half_transmission(&opts).expect("calibration to 0.6");
    let mut setup = measured_setup(h60.height());
    setup.levels = 3;
    let particle = run_measured_pinball(&setup, 0.3).expect("negative control run");
    let cmp = compare_to_oracle(
        &QuantileSequence::from_events(&particle.events),
        particle.q0,
    );
    let dev = cmp.max_deviation_within(3);
    suite.check(
        "negative_control",
        dev > 0.05,
        format!(
            "T = {:.4}, q = {:?}, deviation from the oracle by level 3 {dev:.3} (> 0.05)",
            h60.transmission(),
            particle.quantiles()
        ),
    );

    // Supplementary checks
    let capped: f64 = runs
        .values()
        .map(|r| r.metric("guidance_capped"))
        .filter(|c| !c.is_nan())
        .sum();
    suite.check(
        "no_capped_velocities",
        capped == 0.0,
        format!("{capped} capped evaluations over shipped scenarios"),
    );
    let leak = runs
        .values()
        .map(|r| r.metric("max_boundary_mass"))
        .filter(|d| !d.is_nan())
        .fold(0.0f64, f64::max);
    suite.check(
        "boundary_leak",
        leak < 1e-6,
        format!("largest mass within 5 cells of the edge {leak:.2e} (< 1e-6)"),
    );
    let h = cal.metric("h_star");
    let barrier = Barrier::new_1d(0.0, h, 0.25);
    let packet = PacketSpec::new_1d(-8.0, 10.0, 1.0);
    let t_full = transmission_coefficient(&grid, &barrier, &packet, 1e-3)
        .unwrap()
        .transmission;
    let t_half = transmission_coefficient(&grid, &barrier, &packet, 5e-4)
        .unwrap()
        .transmission;
    suite.check(
        "dt_halving",
        (t_full - t_half).abs() < 1e-3,
        format!("T(h*) = {t_full:.6} at dt = 1e-3, {t_half:.6} at dt = 5e-4 (difference < 1e-3)"),
    );

    let failed: Vec<_> = suite
        .results
        .iter()
        .filter(|r| !r.1)
        .map(|r| r.0.as_str())
        .collect();
    println!(
        "{} of {} criteria passed in {:.1} s",
        suite.results.len() - failed.len(),
        suite.results.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}

fn measured_setup(height: f64) -> MeasuredSetup {
    let grid = Grid::new_1d(GRID_1D.0, GRID_1D.1).unwrap();
    MeasuredSetup::new(grid, 10.0, 1.0, height, 0.05)
}

/// Lyapunov value on the summary line of a divergence report.
fn divergence_lyapunov(path: &Path) -> Option<f64> {
    let text = std::fs::read_to_string(path).ok()?;
    let summary = text.lines().find(|l| l.starts_with('#'))?;
    summary
        .trim_start_matches('#')
        .split(',')
        .find_map(|kv| kv.trim().strip_prefix("lyapunov="))?
        .parse()
        .ok()
}

/// Relative error of the free-Gaussian width against `sigma sqrt(1 + t²/4σ⁴)`.
fn free_gaussian_width_error() -> (f64, f64) {
    let grid = Grid::new_1d(2048, 81.92).unwrap();
    let mut psi = gaussian_packet(&grid, &PacketSpec::new_1d(-20.0, 10.0, 1.0)).unwrap();
    let mut stepper = SplitStep::new(&grid, &vec![0.0; grid.len()], 1e-3).unwrap();
    let mut fft = Spectral::new(&grid);
    let mut worst = 0.0f64;
    for _ in 0..4 {
        for _ in 0..1000 {
            stepper.step(&mut psi);
        }
        let t = psi.time();
        let width = psi.observables(&mut fft).position_variance[0].sqrt();
        let analytic = (1.0 + t * t / 4.0).sqrt();
        worst = worst.max((width / analytic - 1.0).abs());
    }
    (worst, psi.time())
}

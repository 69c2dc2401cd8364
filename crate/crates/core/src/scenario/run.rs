use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    config_hash, exit, sha256_hex, Assertion, ConfigError, FileEntry, HeightSpec, RunManifest,
    RunStatus, ScenarioConfig, ScenarioKind, MANIFEST,
};
use crate::bohm::{
    position_at_quantile, quantile_ahead, sample_ensemble, GuidanceStats, Trajectory,
};
use crate::chaos::{
    bit_of, compare_to_oracle, log_separation_slope, DivergenceReport, QuantileSequence, MIN_LEVELS,
};
use crate::geometry::{
    build_potential, calibrate_half_transmission, Barrier, CalibrationOptions, CalibrationReport,
    DetectorLayout, Outcome, PinballGeometry,
};
use crate::measurement::{
    run_measured_ensemble, run_single_barrier, run_unitary_pinball, MeasuredSetup,
    SingleBarrierSetup, UnitarySetup,
};
use crate::stats::{ks_p_value, ks_statistic, median, GridCdf};
use crate::wavefield::io::write_snapshot_csv;
use crate::wavefield::{gaussian_packet, Grid, PacketSpec, Point};
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Replace the results of an earlier run in `out`.
    pub overwrite: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0} already holds results; pass --overwrite to replace them")]
    OutputExists(PathBuf),
    #[error("cannot prepare output directory {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::OutputExists(_) => exit::CONFIG,
            RunError::Output { .. } => exit::ABORT,
        }
    }
}

/// Output files, metrics and assertions collected during a run.
struct Ctx {
    dir: PathBuf,
    files: Vec<FileEntry>,
    metrics: BTreeMap<String, f64>,
    assertions: Vec<Assertion>,
}

impl Ctx {
    fn write(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<(), Error> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        fs::write(self.dir.join(name), &buf)?;
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(&buf),
            bytes: buf.len() as u64,
        });
        Ok(())
    }

    fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.assertions.push(Assertion {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    fn guidance(&mut self, stats: &GuidanceStats) {
        self.metric("guidance_evaluations", stats.evaluations as f64);
        self.metric("guidance_capped", stats.capped as f64);
        self.metric("guidance_nodes", stats.nodes as f64);
        self.check(
            "no_capped_velocities",
            stats.capped == 0,
            format!(
                "{} of {} evaluations capped",
                stats.capped, stats.evaluations
            ),
        );
    }

    fn norm(&mut self, drift: f64, tol: f64) {
        self.metric("max_norm_drift", drift);
        self.check(
            "norm_conserved",
            drift < tol,
            format!("max |norm - 1| = {drift:.3e}, tolerance {tol:.1e}"),
        );
    }
}

/// Run one scenario and write its outputs and manifest into `opts.out`.
///
/// Errors are returned only when the run could not start. Failures during
/// the run produce a manifest with status `aborted`.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunManifest, RunError> {
    prepare_output(&opts.out, opts.overwrite)?;
    let start = Instant::now();
    let mut ctx = Ctx {
        dir: opts.out.clone(),
        files: Vec::new(),
        metrics: BTreeMap::new(),
        assertions: Vec::new(),
    };
    let result = ctx
        .write("config.cfg", |w| {
            w.write_all(super::serialize_config(cfg).as_bytes())
        })
        .and_then(|_| match cfg.kind {
            ScenarioKind::Calibrate => calibrate(cfg, &mut ctx),
            ScenarioKind::SingleBarrier => single_barrier(cfg, &mut ctx, false),
            ScenarioKind::EnsembleStats => single_barrier(cfg, &mut ctx, true),
            ScenarioKind::PinballMeasured => measured(cfg, &mut ctx),
            ScenarioKind::PinballUnitary => unitary(cfg, &mut ctx),
        });
    let status = match &result {
        Err(_) => RunStatus::Aborted,
        Ok(()) if ctx.assertions.iter().all(|a| a.passed) => RunStatus::Passed,
        Ok(()) => RunStatus::Failed,
    };
    let manifest = RunManifest {
        scenario: cfg.kind.to_string(),
        status,
        config_hash: config_hash(&ScenarioConfig {
            output_dir: None,
            ..cfg.clone()
        }),
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        files: ctx.files,
        metrics: ctx.metrics,
        assertions: ctx.assertions,
        error: result.err().map(|e| e.to_string()),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(opts.out.join(MANIFEST), text + "\n").map_err(|source| RunError::Output {
        path: opts.out.clone(),
        source,
    })?;
    Ok(manifest)
}

/// Create `dir`, refusing to touch earlier results unless `overwrite` is set.
/// With `overwrite`, only the files listed in the old manifest are removed.
fn prepare_output(dir: &Path, overwrite: bool) -> Result<(), RunError> {
    let io_err = |source| RunError::Output {
        path: dir.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(io_err)?;
    let occupied = fs::read_dir(dir).map_err(io_err)?.next().is_some();
    if !occupied {
        return Ok(());
    }
    if !overwrite {
        return Err(RunError::OutputExists(dir.to_path_buf()));
    }
    let manifest = dir.join(MANIFEST);
    if let Ok(text) = fs::read_to_string(&manifest) {
        if let Ok(old) = serde_json::from_str::<RunManifest>(&text) {
            for f in old.files {
                let _ = fs::remove_file(dir.join(f.path));
            }
        }
        fs::remove_file(&manifest).map_err(io_err)?;
    }
    Ok(())
}

const DEFAULT_1D_GRID: (usize, f64) = (2048, 40.96);

fn grid_1d(cfg: &ScenarioConfig) -> Result<Grid, Error> {
    Ok(Grid::new_1d(cfg.grid_n[0], cfg.grid_length[0])?)
}

/// Bisect the barrier height for the config's packet and width. 2D configs
/// calibrate the lateral (perpendicular) coordinate on a default 1D grid.
pub fn calibrate_from_config(cfg: &ScenarioConfig) -> Result<CalibrationReport, Error> {
    let grid = if cfg.kind.dims() == 1 {
        grid_1d(cfg)?
    } else {
        Grid::new_1d(DEFAULT_1D_GRID.0, DEFAULT_1D_GRID.1)?
    };
    let mut opts = CalibrationOptions::new(
        grid,
        cfg.packet_momentum[0],
        cfg.packet_sigma[0],
        cfg.barrier_width,
        cfg.dt,
    );
    opts.target = cfg.calibration.target;
    opts.tol = cfg.calibration.tol;
    opts.bracket = cfg.calibration.bracket;
    Ok(calibrate_half_transmission(&opts)?)
}

fn record_calibration(ctx: &mut Ctx, report: &CalibrationReport) -> Result<(), Error> {
    ctx.write("calibration.csv", |w| report.write_csv(w))?;
    ctx.metric("h_star", report.height());
    ctx.metric("transmission", report.transmission());
    ctx.metric("reflection", report.reflection());
    ctx.metric("calibration_iterations", report.samples.len() as f64);
    Ok(())
}

/// Selected height in a calibration CSV written by an earlier run.
fn read_reference(path: &Path) -> Result<f64, Error> {
    let bad = |message: String| {
        Error::Config(ConfigError::Reference {
            path: path.to_path_buf(),
            message,
        })
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("no `{name}` column")))
    };
    let (hc, sc) = (col("h")?, col("selected")?);
    for row in reader.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        if &row[sc] == "1" {
            return row[hc]
                .parse()
                .map_err(|_| bad(format!("bad height {:?}", &row[hc])));
        }
    }
    Err(bad("no selected row".into()))
}

fn barrier_height(cfg: &ScenarioConfig, ctx: &mut Ctx) -> Result<f64, Error> {
    let h = match (cfg.barrier_height, &cfg.calibration.reference) {
        (HeightSpec::Fixed(h), _) => h,
        (HeightSpec::Auto, Some(path)) => read_reference(path)?,
        (HeightSpec::Auto, None) => {
            let report = calibrate_from_config(cfg)?;
            record_calibration(ctx, &report)?;
            report.height()
        }
    };
    ctx.metric("barrier_height", h);
    Ok(h)
}

fn calibrate(cfg: &ScenarioConfig, ctx: &mut Ctx) -> Result<(), Error> {
    let report = calibrate_from_config(cfg)?;
    record_calibration(ctx, &report)?;
    let (t, r) = (report.transmission(), report.reflection());
    let c = &cfg.calibration;
    ctx.check(
        "transmission_on_target",
        (t - c.target).abs() <= c.tol,
        format!("T = {t:.6}, target {} +/- {:.1e}", c.target, c.tol),
    );
    ctx.check(
        "probability_conserved",
        (t + r - 1.0).abs() <= 1e-6,
        format!("R + T - 1 = {:.3e}", t + r - 1.0),
    );
    Ok(())
}

fn fmt_f(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        String::new()
    }
}

fn write_trajectories<W: Write>(
    w: &mut W,
    trajectories: &[Trajectory],
    dims: usize,
) -> std::io::Result<()> {
    writeln!(w, "t,x,y,trajectory_id")?;
    for tr in trajectories {
        for (t, p) in &tr.samples {
            let y = if dims == 2 {
                fmt_f(p[1])
            } else {
                String::new()
            };
            writeln!(w, "{:?},{},{},{}", t, fmt_f(p[0]), y, tr.id)?;
        }
    }
    Ok(())
}

fn rng(cfg: &ScenarioConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.particles.seed)
}

/// Interleave each base value with its partner.
fn with_partners<T: Copy>(base: Vec<T>, partner: Option<impl Fn(T) -> T>) -> Vec<T> {
    match partner {
        None => base,
        Some(f) => base.into_iter().flat_map(|b| [b, f(b)]).collect(),
    }
}

fn single_barrier(cfg: &ScenarioConfig, ctx: &mut Ctx, ensemble: bool) -> Result<(), Error> {
    let grid = grid_1d(cfg)?;
    let packet = PacketSpec::new_1d(
        cfg.packet_center[0],
        cfg.packet_momentum[0],
        cfg.packet_sigma[0],
    );
    let h = barrier_height(cfg, ctx)?;
    let barrier = Barrier::new_1d(0.0, h, cfg.barrier_width);
    let mut setup = SingleBarrierSetup::new(grid.clone(), packet.clone(), barrier, cfg.dt);
    if let Some(d) = cfg.duration {
        setup.duration = d;
    }
    let psi0 = gaussian_packet(&grid, &packet)?;
    let base: Vec<Point> = if cfg.particles.q0.is_empty() {
        sample_ensemble(&psi0, cfg.particles.count, &mut rng(cfg))?
    } else {
        let m = psi0.marginal_1d(0);
        cfg.particles
            .q0
            .iter()
            .map(|&q| {
                [
                    position_at_quantile(&m, grid.lower(0), grid.spacing(0), q),
                    0.0,
                ]
            })
            .collect()
    };
    let positions = with_partners(
        base,
        cfg.particles
            .pair_dx
            .map(|d| move |p: Point| [p[0] + d, 0.0]),
    );
    let run = run_single_barrier(&setup, &positions)?;

    let outcomes = run.outcomes(0.0);
    let q_after = run.lobe_quantiles(0.0);
    let finals = run.final_positions();
    if ensemble {
        ctx.write("ensemble.csv", |w| {
            writeln!(w, "trajectory_id,x0,q0,x_final,q_final,branch")?;
            for i in 0..positions.len() {
                writeln!(
                    w,
                    "{},{:?},{:?},{},{:?},{}",
                    i,
                    positions[i][0],
                    run.q0[i],
                    fmt_f(finals[i]),
                    q_after[i],
                    u8::from(outcomes[i].bit())
                )?;
            }
            Ok(())
        })?;
    } else {
        ctx.write("trajectories.csv", |w| {
            write_trajectories(w, &run.trajectories, 1)
        })?;
        ctx.write("events.csv", |w| {
            writeln!(w, "trajectory_id,level,q_before,branch,q_after")?;
            for i in 0..positions.len() {
                writeln!(
                    w,
                    "{},0,{:?},{},{:?}",
                    i,
                    run.q0[i],
                    u8::from(outcomes[i].bit()),
                    q_after[i]
                )?;
            }
            Ok(())
        })?;
        ctx.write("psi_final.csv", |w| write_snapshot_csv(&run.final_psi, w))?;
    }

    let n = positions.len();
    let transmitted = outcomes
        .iter()
        .filter(|o| **o == Outcome::Transmitted)
        .count();
    let frac = transmitted as f64 / n as f64;
    ctx.metric("particles", n as f64);
    ctx.metric("transmission", run.transmission);
    ctx.metric("reflection", run.reflection);
    ctx.metric("transmitted_fraction", frac);
    ctx.metric("max_boundary_mass", run.max_boundary_mass);
    ctx.norm(run.max_norm_drift, cfg.tolerance.norm_drift);
    ctx.guidance(&run.guidance);

    let band = cfg.tolerance.half_band;
    let violations = run.half_rule_violations(0.0, band);
    ctx.metric("half_rule_violations", violations as f64);
    ctx.check(
        "front_half_transmits",
        violations == 0,
        format!("{violations} particles with |q0 - 1/2| > {band} on the wrong side"),
    );
    let reorder = run.max_reordering_cells();
    ctx.metric("max_reordering_cells", reorder);
    ctx.check(
        "trajectories_do_not_cross",
        reorder <= cfg.tolerance.crossing_cells,
        format!(
            "largest order reversal {reorder:.3} cells, tolerance {}",
            cfg.tolerance.crossing_cells
        ),
    );

    if ensemble {
        let dx = grid.spacing(0);
        let cdf = GridCdf::new(&run.final_psi.marginal_1d(0), grid.lower(0), dx);
        let d = ks_statistic(&finals, |x| cdf.cdf(x));
        let p = ks_p_value(d, n);
        ctx.metric("ks_statistic", d);
        ctx.metric("ks_p_value", p);
        ctx.check(
            "equivariance_ks",
            p >= cfg.tolerance.ks_alpha,
            format!("D = {d:.4}, p = {p:.4}, alpha {}", cfg.tolerance.ks_alpha),
        );
        let t = run.transmission;
        let sigma = (t * (1.0 - t) / n as f64).sqrt();
        ctx.check(
            "transmitted_fraction_matches_t",
            (frac - t).abs() <= 3.0 * sigma,
            format!(
                "fraction {frac:.4} vs T = {t:.4} (3 sigma = {:.4})",
                3.0 * sigma
            ),
        );
    }
    Ok(())
}

fn measured(cfg: &ScenarioConfig, ctx: &mut Ctx) -> Result<(), Error> {
    let grid = grid_1d(cfg)?;
    let h = barrier_height(cfg, ctx)?;
    let mut setup = MeasuredSetup::new(
        grid,
        cfg.packet_momentum[0],
        cfg.packet_sigma[0],
        h,
        cfg.barrier_width,
    );
    setup.dt = cfg.dt;
    setup.levels = cfg.measure_levels;
    setup.eps_sep = cfg.eps_sep;
    setup.pitch = cfg.geometry.pitch;
    setup.launch_sigmas = -cfg.packet_center[0] / cfg.packet_sigma[0];

    let base: Vec<f64> = if cfg.particles.q0.is_empty() {
        let mut r = rng(cfg);
        (0..cfg.particles.count).map(|_| r.gen::<f64>()).collect()
    } else {
        cfg.particles.q0.clone()
    };
    let pairs = cfg.particles.pair_dq.is_some();
    let q0s = with_partners(
        base,
        cfg.particles.pair_dq.map(|d| {
            move |q: f64| {
                if (0.0..1.0).contains(&(q + d)) {
                    q + d
                } else {
                    q - d
                }
            }
        }),
    );
    let run = run_measured_ensemble(&setup, &q0s)?;

    ctx.write("events.csv", |w| {
        writeln!(w, "trajectory_id,level,q_before,branch,q_after")?;
        for p in &run.particles {
            for e in &p.events {
                writeln!(
                    w,
                    "{},{},{:?},{},{:?}",
                    p.id,
                    e.level,
                    e.q_before,
                    u8::from(e.outcome.bit()),
                    e.q_after
                )?;
            }
        }
        Ok(())
    })?;
    ctx.write("records.csv", |w| {
        write!(w, "run_id,q0,bits,final_node,weight")?;
        for l in 0..setup.levels {
            write!(w, ",q_{l}")?;
        }
        writeln!(w)?;
        for p in &run.particles {
            write!(
                w,
                "{},{:?},{},{},{:?}",
                p.id,
                p.q0,
                p.record,
                p.final_node(),
                p.weight
            )?;
            for q in p.quantiles() {
                write!(w, ",{q:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    let trajectories: Vec<Trajectory> =
        run.particles.iter().map(|p| p.trajectory.clone()).collect();
    ctx.write("trajectories.csv", |w| {
        write_trajectories(w, &trajectories, 1)
    })?;

    ctx.metric("runs", run.particles.len() as f64);
    ctx.metric("branch_levels", run.branch_levels as f64);
    ctx.metric("max_boundary_mass", run.max_boundary_mass);
    ctx.metric("max_gap_residual", run.max_residual);
    ctx.norm(run.max_norm_drift, cfg.tolerance.norm_drift);
    ctx.guidance(&run.guidance);

    let check_levels = cfg.tolerance.oracle_levels.min(setup.levels);
    let (mut worst, mut mismatches) = (0.0f64, 0usize);
    let mut inconsistent = 0;
    for p in &run.particles {
        let seq = QuantileSequence::from_events(&p.events);
        let cmp = compare_to_oracle(&seq, p.q0);
        worst = worst.max(cmp.max_deviation_within(check_levels));
        if cmp.first_mismatch.is_some_and(|m| m <= check_levels) {
            mismatches += 1;
        }
        inconsistent += p
            .events
            .iter()
            .filter(|e| {
                (e.q_before - 0.5).abs() > cfg.tolerance.half_band
                    && e.outcome.bit() != bit_of(e.q_before)
            })
            .count();
    }
    ctx.metric("max_oracle_deviation", worst);
    ctx.metric("oracle_bit_mismatches", mismatches as f64);
    ctx.check(
        "doubling_map_reproduced",
        worst <= cfg.tolerance.quantile && mismatches == 0,
        format!(
            "max |q - oracle| = {worst:.3e} over {check_levels} levels (tolerance {}), {mismatches} runs with bit mismatches",
            cfg.tolerance.quantile
        ),
    );
    ctx.metric("record_inconsistencies", inconsistent as f64);
    ctx.check(
        "records_follow_coordinate",
        inconsistent == 0,
        format!("{inconsistent} detections disagree with q before scattering"),
    );

    if pairs {
        let mut first = Vec::new();
        let mut rates = Vec::new();
        let mut split = 0;
        let npairs = run.particles.len() / 2;
        for i in 0..npairs {
            let a = QuantileSequence::from_events(&run.particles[2 * i].events);
            let b = QuantileSequence::from_events(&run.particles[2 * i + 1].events);
            let report = DivergenceReport::from_pair(&a, &b);
            ctx.write(&format!("divergence_{i:03}.csv"), |w| report.write_csv(w))?;
            first.push(report.first_mismatch.map_or(f64::INFINITY, |m| m as f64));
            if a.len() >= MIN_LEVELS {
                rates.extend(report.lyapunov);
            }
            split += usize::from(
                run.particles[2 * i]
                    .record
                    .hamming(&run.particles[2 * i + 1].record)
                    >= 1,
            );
        }
        ctx.metric("pairs", npairs as f64);
        ctx.metric("median_first_mismatch", median(&first));
        ctx.metric("split_fraction", split as f64 / npairs as f64);
        if !rates.is_empty() {
            ctx.metric(
                "mean_pair_lyapunov",
                rates.iter().sum::<f64>() / rates.len() as f64,
            );
        }
    }
    Ok(())
}

fn unitary(cfg: &ScenarioConfig, ctx: &mut Ctx) -> Result<(), Error> {
    let grid = Grid::new_2d(
        [cfg.grid_n[0], cfg.grid_n[1]],
        [cfg.grid_length[0], cfg.grid_length[1]],
    )?;
    let h = barrier_height(cfg, ctx)?;
    let g = &cfg.geometry;
    let geometry = PinballGeometry {
        levels: g.levels,
        apex: g.apex,
        row_spacing: g.row_spacing,
        pitch: g.pitch,
        height: h,
        width: cfg.barrier_width,
        half_length: g.half_length,
        detectors: DetectorLayout { enabled: false },
    };
    let packet = PacketSpec::new_2d(
        [cfg.packet_center[0], cfg.packet_center[1]],
        [cfg.packet_momentum[0], cfg.packet_momentum[1]],
        [cfg.packet_sigma[0], cfg.packet_sigma[1]],
    );
    let duration = cfg
        .duration
        .unwrap_or_else(|| UnitarySetup::duration_past_last_row(&packet, &geometry, 6.0));
    let psi0 = gaussian_packet(&grid, &packet)?;
    let base = sample_ensemble(&psi0, cfg.particles.count, &mut rng(cfg))?;
    let pairs = cfg.particles.pair_dx.is_some();
    let positions = with_partners(
        base.clone(),
        cfg.particles
            .pair_dx
            .map(|d| move |p: Point| [p[0] + d, p[1]]),
    );
    let setup = UnitarySetup {
        grid: grid.clone(),
        geometry: geometry.clone(),
        packet,
        dt: cfg.dt,
        duration,
    };
    let run = run_unitary_pinball(&setup, &positions)?;

    ctx.write("trajectories.csv", |w| {
        write_trajectories(w, &run.trajectories, 2)
    })?;
    let m0 = psi0.marginal_1d(0);
    let mf = run.final_psi.marginal_1d(0);
    let (x0, dx) = (grid.lower(0), grid.spacing(0));
    let q_init: Vec<f64> = positions
        .iter()
        .map(|p| quantile_ahead(&m0, x0, dx, p[0]))
        .collect();
    let finals: Vec<Point> = run
        .trajectories
        .iter()
        .map(|t| t.last().unwrap_or([f64::NAN; 2]))
        .collect();
    let q_final: Vec<f64> = finals
        .iter()
        .map(|p| quantile_ahead(&mf, x0, dx, p[0]))
        .collect();
    ctx.write("records.csv", |w| {
        write!(w, "run_id,q0,bits,final_node,q_final")?;
        for l in 0..g.levels {
            write!(w, ",q_{l}")?;
        }
        writeln!(w)?;
        for i in 0..positions.len() {
            let bits: String = run
                .bits(i)
                .iter()
                .map(|b| match b {
                    Some(true) => '1',
                    Some(false) => '0',
                    None => '-',
                })
                .collect();
            let node = run.arms[i]
                .last()
                .copied()
                .flatten()
                .map(|a| a.node + usize::from(a.outcome.bit()));
            write!(
                w,
                "{},{:?},{},{},{:?}",
                i,
                q_init[i],
                bits,
                node.map_or(String::new(), |n| n.to_string()),
                q_final[i]
            )?;
            for l in 0..g.levels {
                let q = run.level_quantiles[i].iter().find(|(lv, _)| *lv == l);
                write!(w, ",{}", q.map_or(String::new(), |(_, q)| format!("{q:?}")))?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    let potential = build_potential(&geometry, &grid)?;
    ctx.write("potential.csv", |w| {
        writeln!(w, "x,y,v")?;
        let stride = 4;
        for j in (0..grid.n(1)).step_by(stride) {
            for i in (0..grid.n(0)).step_by(stride) {
                let k = grid.index(i, j);
                writeln!(
                    w,
                    "{:?},{:?},{:?}",
                    grid.coord(0, i),
                    grid.coord(1, j),
                    potential[k]
                )?;
            }
        }
        Ok(())
    })?;

    ctx.metric("particles", positions.len() as f64);
    ctx.metric("duration", duration);
    ctx.metric("steps", run.steps as f64);
    ctx.metric("max_boundary_mass", run.max_boundary_mass);
    ctx.norm(run.max_norm_drift, cfg.tolerance.norm_drift);
    ctx.guidance(&run.guidance);

    // equivariance of the lateral coordinate, base particles only
    let stride = if pairs { 2 } else { 1 };
    let lateral: Vec<f64> = finals.iter().step_by(stride).map(|p| p[0]).collect();
    let cdf = GridCdf::new(&mf, x0, dx);
    let d = ks_statistic(&lateral, |x| cdf.cdf(x));
    let p = ks_p_value(d, lateral.len());
    ctx.metric("ks_statistic", d);
    ctx.metric("ks_p_value", p);
    ctx.check(
        "lateral_equivariance_ks",
        p >= cfg.tolerance.ks_alpha,
        format!("D = {d:.4}, p = {p:.4} over {} particles", lateral.len()),
    );

    if pairs {
        let npairs = positions.len() / 2;
        let (mut worst_q, mut worst_xy) = (0.0f64, 0.0f64);
        let mut rates = Vec::new();
        for i in 0..npairs {
            let (a, b) = (2 * i, 2 * i + 1);
            let rq = (q_final[a] - q_final[b]).abs() / (q_init[a] - q_init[b]).abs();
            let d0 = (positions[a][0] - positions[b][0]).hypot(positions[a][1] - positions[b][1]);
            let d1 = (finals[a][0] - finals[b][0]).hypot(finals[a][1] - finals[b][1]);
            worst_q = worst_q.max(rq);
            worst_xy = worst_xy.max(d1 / d0);
            let seq = |k: usize| {
                QuantileSequence::from_quantiles(
                    run.level_quantiles[k].iter().map(|(_, q)| *q).collect(),
                )
            };
            let report = DivergenceReport::from_pair(&seq(a), &seq(b));
            ctx.write(&format!("divergence_{i:03}.csv"), |w| report.write_csv(w))?;
            // the lateral side is not a detector record, so fit every row
            let seps: Vec<f64> = report.rows.iter().map(|r| r.dq).collect();
            rates.extend(log_separation_slope(&seps).ok());
        }
        ctx.metric("pairs", npairs as f64);
        if !rates.is_empty() {
            ctx.metric(
                "mean_pair_rate",
                rates.iter().sum::<f64>() / rates.len() as f64,
            );
            ctx.metric(
                "max_pair_rate",
                rates.iter().cloned().fold(f64::MIN, f64::max),
            );
        }
        ctx.metric("max_pair_ratio", worst_q);
        ctx.metric("max_pair_ratio_position", worst_xy);
        ctx.check(
            "pairs_do_not_diverge",
            worst_q < cfg.tolerance.ratio,
            format!(
                "largest final / initial |dq| = {worst_q:.3}, tolerance {}",
                cfg.tolerance.ratio
            ),
        );
    }
    Ok(())
}

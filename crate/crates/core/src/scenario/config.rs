//! Flat `key = value` scenario configs.
//!
//! One setting per line, `#` starts a comment, keys use dotted section
//! prefixes (`grid.n = 2048`). Lists are comma separated. Parsing reports
//! every problem at once rather than stopping at the first.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Calibrate,
    SingleBarrier,
    PinballUnitary,
    PinballMeasured,
    EnsembleStats,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Calibrate,
        ScenarioKind::SingleBarrier,
        ScenarioKind::PinballUnitary,
        ScenarioKind::PinballMeasured,
        ScenarioKind::EnsembleStats,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Calibrate => "calibrate",
            ScenarioKind::SingleBarrier => "single_barrier",
            ScenarioKind::PinballUnitary => "pinball_unitary",
            ScenarioKind::PinballMeasured => "pinball_measured",
            ScenarioKind::EnsembleStats => "ensemble_stats",
        }
    }

    /// Spatial dimension of the scenario's grid.
    pub fn dims(self) -> usize {
        match self {
            ScenarioKind::PinballUnitary => 2,
            _ => 1,
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ScenarioKind::ALL.iter().map(|k| k.name()).collect();
                format!("expected one of {}", names.join(", "))
            })
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Barrier height: fixed, or found by calibration to the target transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeightSpec {
    Fixed(f64),
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub target: f64,
    pub tol: f64,
    pub bracket: Option<(f64, f64)>,
    /// Calibration CSV from an earlier run whose selected height is reused.
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    pub levels: usize,
    pub apex: [f64; 2],
    pub row_spacing: f64,
    pub pitch: f64,
    pub half_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticlesConfig {
    /// Explicit internal coordinates; when empty `count` are drawn with `seed`.
    pub q0: Vec<f64>,
    pub seed: u64,
    pub count: usize,
    /// Each particle gets a partner offset by this much in `q`.
    pub pair_dq: Option<f64>,
    /// Each particle gets a partner offset by this much along axis 0.
    pub pair_dx: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub norm_drift: f64,
    /// Per-level `|q - oracle|` bound over the first `oracle_levels` levels.
    pub quantile: f64,
    pub oracle_levels: usize,
    /// Particles with `|q - 1/2|` below this are exempt from the half rule.
    pub half_band: f64,
    /// Allowed trajectory overlap, in grid cells.
    pub crossing_cells: f64,
    /// Largest final / initial pair separation in unitary runs.
    pub ratio: f64,
    pub ks_alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub grid_n: Vec<usize>,
    pub grid_length: Vec<f64>,
    pub packet_center: Vec<f64>,
    pub packet_momentum: Vec<f64>,
    pub packet_sigma: Vec<f64>,
    pub barrier_width: f64,
    pub barrier_height: HeightSpec,
    pub calibration: CalibrationConfig,
    pub geometry: GeometryConfig,
    pub particles: ParticlesConfig,
    pub dt: f64,
    pub duration: Option<f64>,
    pub measure_levels: usize,
    pub eps_sep: f64,
    pub output_dir: Option<PathBuf>,
    pub tolerance: Tolerances,
}

/// One problem found while parsing; `line` is 0 for missing keys.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: ", self.line)?;
        }
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}", join_issues(.0))]
    Invalid(Vec<ConfigIssue>),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("calibration reference {path}: {message}")]
    Reference { path: PathBuf, message: String },
}

impl ConfigError {
    pub fn issues(&self) -> &[ConfigIssue] {
        match self {
            ConfigError::Invalid(v) => v,
            _ => &[],
        }
    }
}

fn join_issues(issues: &[ConfigIssue]) -> String {
    let mut s = format!("{} config error(s)", issues.len());
    for i in issues {
        let _ = write!(s, "\n  {i}");
    }
    s
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

/// Key lookup that records problems instead of returning early.
struct Fields {
    entries: BTreeMap<String, Entry>,
    issues: Vec<ConfigIssue>,
}

impl Fields {
    fn issue(&mut self, key: &str, message: impl Into<String>) {
        let line = self.entries.get(key).map_or(0, |e| e.line);
        self.issues.push(ConfigIssue {
            line,
            key: key.to_string(),
            message: message.into(),
        });
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            e.value.clone()
        })
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.raw(key)?;
        match raw.parse::<T>() {
            Ok(v) => Some(v),
            Err(e) => {
                self.issue(key, format!("cannot parse {raw:?}: {e}"));
                None
            }
        }
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Option<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        let raw = self.raw(key)?;
        if raw.is_empty() {
            return Some(Vec::new());
        }
        let mut out = Vec::new();
        for part in raw.split(',') {
            match part.trim().parse::<T>() {
                Ok(v) => out.push(v),
                Err(e) => {
                    self.issue(key, format!("cannot parse {:?}: {e}", part.trim()));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: fmt::Display,
    {
        self.parse(key).unwrap_or(default)
    }

    fn check(&mut self, ok: bool, key: &str, constraint: &str) {
        if !ok {
            self.issue(key, format!("must be {constraint}"));
        }
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut fields = Fields {
        entries: BTreeMap::new(),
        issues: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            fields.issues.push(ConfigIssue {
                line: i + 1,
                key: line.to_string(),
                message: "expected `key = value`".into(),
            });
            continue;
        };
        let key = k.trim().to_string();
        if let Some(prev) = fields.entries.get(&key) {
            let first = prev.line;
            fields.issues.push(ConfigIssue {
                line: i + 1,
                key,
                message: format!("duplicate key (first set on line {first})"),
            });
            continue;
        }
        fields.entries.insert(
            key,
            Entry {
                line: i + 1,
                value: v.trim().to_string(),
                used: false,
            },
        );
    }

    let kind = match fields.raw("scenario") {
        Some(s) => match s.parse::<ScenarioKind>() {
            Ok(k) => Some(k),
            Err(e) => {
                fields.issue("scenario", format!("unknown kind {s:?}, {e}"));
                None
            }
        },
        None => {
            fields.issue("scenario", "missing required key");
            None
        }
    };
    // Defaults below depend on the kind; fall back to a 1D scenario so the
    // remaining keys are still checked.
    let k = kind.unwrap_or(ScenarioKind::SingleBarrier);
    let dims = k.dims();
    let two_d = dims == 2;

    let grid_n =
        fields
            .list::<usize>("grid.n")
            .unwrap_or(if two_d { vec![1024, 512] } else { vec![2048] });
    let grid_length = fields.list::<f64>("grid.length").unwrap_or(if two_d {
        vec![102.4, 51.2]
    } else {
        vec![40.96]
    });
    let geometry = GeometryConfig {
        levels: fields.or("geometry.levels", 3),
        apex: {
            let v = fields
                .list::<f64>("geometry.apex")
                .unwrap_or(vec![0.0, -12.0]);
            if v.len() == 2 {
                [v[0], v[1]]
            } else {
                fields.issue("geometry.apex", "must have 2 components");
                [0.0, -12.0]
            }
        },
        row_spacing: fields.or("geometry.row_spacing", 8.0),
        pitch: fields.or("geometry.pitch", 16.0),
        half_length: fields.or("geometry.half_length", 6.0),
    };
    let default_center = if two_d {
        vec![geometry.apex[0] - 8.0, geometry.apex[1] - 8.0]
    } else {
        vec![-8.0]
    };
    let packet_center = fields
        .list::<f64>("packet.center")
        .unwrap_or(default_center);
    let packet_momentum = fields
        .list::<f64>("packet.momentum")
        .unwrap_or(vec![10.0; dims]);
    let packet_sigma = fields
        .list::<f64>("packet.sigma")
        .unwrap_or(vec![1.0; dims]);
    let default_width = if k == ScenarioKind::PinballMeasured {
        0.05
    } else {
        0.25
    };
    let barrier_width = fields.or("barrier.width", default_width);
    let barrier_height = match fields.raw("barrier.height").as_deref() {
        None | Some("auto") => HeightSpec::Auto,
        Some(s) => match s.parse::<f64>() {
            Ok(h) => HeightSpec::Fixed(h),
            Err(_) => {
                fields.issue(
                    "barrier.height",
                    format!("expected a number or `auto`, got {s:?}"),
                );
                HeightSpec::Auto
            }
        },
    };
    let calibration = CalibrationConfig {
        target: fields.or("calibration.target", 0.5),
        tol: fields.or("calibration.tol", 1e-3),
        bracket: fields.list::<f64>("calibration.bracket").and_then(|v| {
            if v.len() == 2 {
                Some((v[0], v[1]))
            } else {
                fields.issue("calibration.bracket", "must have 2 components");
                None
            }
        }),
        reference: fields.raw("calibration.ref").map(PathBuf::from),
    };
    let particles = ParticlesConfig {
        q0: fields.list::<f64>("particles.q0").unwrap_or_default(),
        seed: fields.or("particles.seed", 1),
        count: fields.or("particles.count", 0),
        pair_dq: fields.parse("particles.pair_dq"),
        pair_dx: fields.parse("particles.pair_dx"),
    };
    let dt = fields.or("time.dt", 1e-3);
    let duration = fields.parse("time.duration");
    let measure_levels = fields.or("measure.levels", 4);
    let eps_sep = fields.or("measure.eps_sep", crate::measurement::DEFAULT_EPS_SEP);
    let output_dir = fields.raw("output.dir").map(PathBuf::from);
    let tolerance = Tolerances {
        norm_drift: fields.or("tolerance.norm_drift", 1e-10),
        quantile: fields.or("tolerance.quantile", 0.02),
        oracle_levels: fields.or("tolerance.oracle_levels", 4),
        half_band: fields.or("tolerance.half_band", 0.02),
        crossing_cells: fields.or("tolerance.crossing_cells", 1.0),
        ratio: fields.or("tolerance.ratio", 10.0),
        ks_alpha: fields.or("tolerance.ks_alpha", 0.01),
    };

    let unknown: Vec<String> = fields
        .entries
        .iter()
        .filter(|(_, e)| !e.used)
        .map(|(k, _)| k.clone())
        .collect();
    for key in unknown {
        fields.issue(&key, "unknown key");
    }

    fields.check(
        grid_n.len() == dims && grid_n.iter().all(|&n| n >= 8),
        "grid.n",
        &format!("{dims} size(s) of at least 8 for scenario {k}"),
    );
    fields.check(
        grid_length.len() == dims && grid_length.iter().all(|&l| positive(l)),
        "grid.length",
        &format!("{dims} positive length(s)"),
    );
    fields.check(
        packet_center.len() == dims && packet_center.iter().all(|x| x.is_finite()),
        "packet.center",
        &format!("{dims} finite component(s)"),
    );
    fields.check(
        packet_momentum.len() == dims && packet_momentum.iter().all(|x| x.is_finite()),
        "packet.momentum",
        &format!("{dims} finite component(s)"),
    );
    fields.check(
        packet_sigma.len() == dims && packet_sigma.iter().all(|&s| positive(s)),
        "packet.sigma",
        &format!("{dims} component(s) > 0"),
    );
    fields.check(positive(barrier_width), "barrier.width", "> 0");
    if let HeightSpec::Fixed(h) = barrier_height {
        fields.check(
            h >= 0.0 && h.is_finite(),
            "barrier.height",
            ">= 0 or `auto`",
        );
    }
    fields.check(
        calibration.target > 0.0 && calibration.target < 1.0,
        "calibration.target",
        "in (0, 1)",
    );
    fields.check(positive(calibration.tol), "calibration.tol", "> 0");
    if let Some((lo, hi)) = calibration.bracket {
        fields.check(
            lo >= 0.0 && hi > lo,
            "calibration.bracket",
            "0 <= low < high",
        );
    }
    fields.check(
        (1..=3).contains(&geometry.levels),
        "geometry.levels",
        "between 1 and 3",
    );
    fields.check(
        positive(geometry.row_spacing),
        "geometry.row_spacing",
        "> 0",
    );
    fields.check(positive(geometry.pitch), "geometry.pitch", "> 0");
    fields.check(
        positive(geometry.half_length),
        "geometry.half_length",
        "> 0",
    );
    fields.check(
        particles.q0.iter().all(|q| (0.0..1.0).contains(q)),
        "particles.q0",
        "values in [0, 1)",
    );
    if let Some(d) = particles.pair_dq {
        fields.check(
            d != 0.0 && d.abs() < 0.5,
            "particles.pair_dq",
            "nonzero with |dq| < 0.5",
        );
    }
    if let Some(d) = particles.pair_dx {
        fields.check(d != 0.0 && d.is_finite(), "particles.pair_dx", "nonzero");
    }
    fields.check(positive(dt), "time.dt", "> 0");
    if let Some(d) = duration {
        fields.check(positive(d), "time.duration", "> 0");
    }
    fields.check(
        (1..=16).contains(&measure_levels),
        "measure.levels",
        "between 1 and 16",
    );
    fields.check(
        eps_sep > 0.0 && eps_sep < 1.0,
        "measure.eps_sep",
        "in (0, 1)",
    );
    fields.check(
        positive(tolerance.norm_drift),
        "tolerance.norm_drift",
        "> 0",
    );
    fields.check(positive(tolerance.quantile), "tolerance.quantile", "> 0");
    fields.check(
        tolerance.half_band >= 0.0 && tolerance.half_band < 0.5,
        "tolerance.half_band",
        "in [0, 0.5)",
    );
    fields.check(
        tolerance.crossing_cells >= 0.0,
        "tolerance.crossing_cells",
        ">= 0",
    );
    fields.check(positive(tolerance.ratio), "tolerance.ratio", "> 0");
    fields.check(
        tolerance.ks_alpha > 0.0 && tolerance.ks_alpha < 1.0,
        "tolerance.ks_alpha",
        "in (0, 1)",
    );
    if let Some(k) = kind {
        let has_particles = !particles.q0.is_empty() || particles.count > 0;
        match k {
            ScenarioKind::Calibrate => {}
            ScenarioKind::PinballMeasured | ScenarioKind::SingleBarrier => {
                fields.check(has_particles, "particles", "given as q0 or a count > 0");
            }
            ScenarioKind::EnsembleStats | ScenarioKind::PinballUnitary => {
                fields.check(particles.count > 0, "particles.count", "> 0");
            }
        }
    }

    if !fields.issues.is_empty() {
        fields.issues.sort_by_key(|i| i.line);
        return Err(ConfigError::Invalid(fields.issues));
    }
    Ok(ScenarioConfig {
        kind: kind.expect("kind checked above"),
        grid_n,
        grid_length,
        packet_center,
        packet_momentum,
        packet_sigma,
        barrier_width,
        barrier_height,
        calibration,
        geometry,
        particles,
        dt,
        duration,
        measure_levels,
        eps_sep,
        output_dir,
        tolerance,
    })
}

/// Parse a config file. Relative paths inside it are resolved against the
/// file's directory and the calibration reference must exist.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = parse_config(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    if let Some(r) = &cfg.calibration.reference {
        let resolved = base.join(r);
        if !resolved.is_file() {
            return Err(ConfigError::Reference {
                path: resolved,
                message: "file not found".into(),
            });
        }
        cfg.calibration.reference = Some(resolved);
    }
    if let Some(d) = &cfg.output_dir {
        cfg.output_dir = Some(base.join(d));
    }
    Ok(cfg)
}

fn list<T: fmt::Debug>(v: &[T]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Every setting, defaults included, in a form [`parse_config`] reads back
/// to an identical config.
pub fn serialize_config(cfg: &ScenarioConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("scenario", cfg.kind.to_string());
    kv("grid.n", list(&cfg.grid_n));
    kv("grid.length", list(&cfg.grid_length));
    kv("packet.center", list(&cfg.packet_center));
    kv("packet.momentum", list(&cfg.packet_momentum));
    kv("packet.sigma", list(&cfg.packet_sigma));
    kv("barrier.width", format!("{:?}", cfg.barrier_width));
    kv(
        "barrier.height",
        match cfg.barrier_height {
            HeightSpec::Auto => "auto".into(),
            HeightSpec::Fixed(h) => format!("{h:?}"),
        },
    );
    kv(
        "calibration.target",
        format!("{:?}", cfg.calibration.target),
    );
    kv("calibration.tol", format!("{:?}", cfg.calibration.tol));
    if let Some((lo, hi)) = cfg.calibration.bracket {
        kv("calibration.bracket", list(&[lo, hi]));
    }
    if let Some(r) = &cfg.calibration.reference {
        kv("calibration.ref", r.display().to_string());
    }
    kv("geometry.levels", cfg.geometry.levels.to_string());
    kv("geometry.apex", list(&cfg.geometry.apex));
    kv(
        "geometry.row_spacing",
        format!("{:?}", cfg.geometry.row_spacing),
    );
    kv("geometry.pitch", format!("{:?}", cfg.geometry.pitch));
    kv(
        "geometry.half_length",
        format!("{:?}", cfg.geometry.half_length),
    );
    kv("particles.q0", list(&cfg.particles.q0));
    kv("particles.seed", cfg.particles.seed.to_string());
    kv("particles.count", cfg.particles.count.to_string());
    if let Some(d) = cfg.particles.pair_dq {
        kv("particles.pair_dq", format!("{d:?}"));
    }
    if let Some(d) = cfg.particles.pair_dx {
        kv("particles.pair_dx", format!("{d:?}"));
    }
    kv("time.dt", format!("{:?}", cfg.dt));
    if let Some(d) = cfg.duration {
        kv("time.duration", format!("{d:?}"));
    }
    kv("measure.levels", cfg.measure_levels.to_string());
    kv("measure.eps_sep", format!("{:?}", cfg.eps_sep));
    if let Some(d) = &cfg.output_dir {
        kv("output.dir", d.display().to_string());
    }
    let t = &cfg.tolerance;
    kv("tolerance.norm_drift", format!("{:?}", t.norm_drift));
    kv("tolerance.quantile", format!("{:?}", t.quantile));
    kv("tolerance.oracle_levels", t.oracle_levels.to_string());
    kv("tolerance.half_band", format!("{:?}", t.half_band));
    kv(
        "tolerance.crossing_cells",
        format!("{:?}", t.crossing_cells),
    );
    kv("tolerance.ratio", format!("{:?}", t.ratio));
    kv("tolerance.ks_alpha", format!("{:?}", t.ks_alpha));
    s
}

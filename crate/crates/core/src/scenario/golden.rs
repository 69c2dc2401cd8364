//! Compare a run's CSV outputs against a golden directory.
//!
//! The golden directory holds the expected CSVs plus `tolerances.cfg`, whose
//! lines are
//!
//! ```text
//! default = 1e-9              # absolute tolerance for any numeric cell
//! relative = 0                # added relative tolerance, times |expected|
//! events.csv:q_after = 1e-6   # one column of one file
//! *:q_before = 1e-6           # one column in every file
//! manifest.json:h_star = 1e-9 # one manifest metric
//! ```
//!
//! Cells that do not parse as numbers must match exactly. Lines starting with
//! `#` inside CSVs are summaries and are skipped. If the golden directory
//! holds a `manifest.json`, its metrics are compared too.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use super::{RunManifest, MANIFEST};

pub const TOLERANCES_FILE: &str = "tolerances.cfg";

#[derive(Debug, thiserror::Error)]
pub enum GoldenError {
    #[error("directory {0} does not exist")]
    MissingDir(PathBuf),
    #[error("output file {0} is missing")]
    MissingFile(PathBuf),
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenTolerances {
    pub default_abs: f64,
    pub relative: f64,
    /// Keyed by `(file, column)`; file `*` applies to every file.
    pub columns: BTreeMap<(String, String), f64>,
}

impl Default for GoldenTolerances {
    fn default() -> Self {
        GoldenTolerances {
            default_abs: 1e-9,
            relative: 0.0,
            columns: BTreeMap::new(),
        }
    }
}

impl GoldenTolerances {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut tol = GoldenTolerances::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| format!("line {}: bad tolerance {:?}", i + 1, value.trim()))?;
            if value.is_nan() || value < 0.0 {
                return Err(format!("line {}: tolerance must be >= 0", i + 1));
            }
            match key.trim() {
                "default" => tol.default_abs = value,
                "relative" => tol.relative = value,
                k => {
                    let (file, col) = k
                        .split_once(':')
                        .ok_or_else(|| format!("line {}: expected `file:column`", i + 1))?;
                    tol.columns
                        .insert((file.trim().to_string(), col.trim().to_string()), value);
                }
            }
        }
        Ok(tol)
    }

    pub fn absolute(&self, file: &str, column: &str) -> f64 {
        let key = |f: &str| (f.to_string(), column.to_string());
        self.columns
            .get(&key(file))
            .or_else(|| self.columns.get(&key("*")))
            .copied()
            .unwrap_or(self.default_abs)
    }

    fn within(&self, file: &str, column: &str, expected: f64, actual: f64) -> bool {
        if expected.is_nan() || actual.is_nan() {
            return expected.is_nan() && actual.is_nan();
        }
        let tol = self.absolute(file, column) + self.relative * expected.abs();
        (expected - actual).abs() <= tol
    }
}

/// One exceedance. `row` is the 1-based data row; 0 refers to the header or
/// the file as a whole.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDiff {
    pub file: String,
    pub row: usize,
    pub column: String,
    pub expected: String,
    pub actual: String,
    pub tolerance: Option<f64>,
}

impl fmt::Display for CellDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} row {} column {}: expected {}, got {}",
            self.file, self.row, self.column, self.expected, self.actual
        )?;
        if let Some(t) = self.tolerance {
            write!(f, " (tolerance {t:e})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoldenReport {
    pub files: usize,
    pub cells: usize,
    pub diffs: Vec<CellDiff>,
}

impl GoldenReport {
    pub fn passed(&self) -> bool {
        self.diffs.is_empty()
    }
}

impl fmt::Display for GoldenReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}: {} files, {} cells compared, {} differences",
            if self.passed() { "PASS" } else { "FAIL" },
            self.files,
            self.cells,
            self.diffs.len()
        )?;
        for d in &self.diffs {
            writeln!(f, "  {d}")?;
        }
        Ok(())
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<Table, GoldenError> {
    let malformed = |e: csv::Error| GoldenError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(path)
        .map_err(malformed)?;
    let header = reader
        .headers()
        .map_err(malformed)?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for r in reader.records() {
        rows.push(r.map_err(malformed)?.iter().map(String::from).collect());
    }
    Ok(Table { header, rows })
}

fn compare_cell(
    tol: &GoldenTolerances,
    report: &mut GoldenReport,
    file: &str,
    row: usize,
    column: &str,
    expected: &str,
    actual: &str,
) {
    report.cells += 1;
    let numeric = expected
        .trim()
        .parse::<f64>()
        .ok()
        .zip(actual.trim().parse::<f64>().ok());
    let ok = match numeric {
        Some((e, a)) => tol.within(file, column, e, a),
        None => expected == actual,
    };
    if !ok {
        report.diffs.push(CellDiff {
            file: file.to_string(),
            row,
            column: column.to_string(),
            expected: expected.to_string(),
            actual: actual.to_string(),
            tolerance: numeric.map(|(e, _)| tol.absolute(file, column) + tol.relative * e.abs()),
        });
    }
}

fn compare_csv(
    tol: &GoldenTolerances,
    report: &mut GoldenReport,
    name: &str,
    golden: &Path,
    output: &Path,
) -> Result<(), GoldenError> {
    let g = read_table(golden)?;
    let o = read_table(output)?;
    report.files += 1;
    let diff = |column: &str, expected: String, actual: String| CellDiff {
        file: name.to_string(),
        row: 0,
        column: column.to_string(),
        expected,
        actual,
        tolerance: None,
    };
    if g.header != o.header {
        report
            .diffs
            .push(diff("<header>", g.header.join(","), o.header.join(",")));
        return Ok(());
    }
    if g.rows.len() != o.rows.len() {
        report.diffs.push(diff(
            "<rows>",
            g.rows.len().to_string(),
            o.rows.len().to_string(),
        ));
    }
    for (r, (gr, or)) in g.rows.iter().zip(&o.rows).enumerate() {
        for (c, column) in g.header.iter().enumerate() {
            let e = gr.get(c).map_or("", String::as_str);
            let a = or.get(c).map_or("", String::as_str);
            compare_cell(tol, report, name, r + 1, column, e, a);
        }
    }
    Ok(())
}

fn read_manifest(path: &Path) -> Result<RunManifest, GoldenError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| GoldenError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Check every CSV in `golden` (and its manifest metrics, if present) against
/// the file of the same name in `output`.
pub fn verify_golden(output: &Path, golden: &Path) -> Result<GoldenReport, GoldenError> {
    for dir in [output, golden] {
        if !dir.is_dir() {
            return Err(GoldenError::MissingDir(dir.to_path_buf()));
        }
    }
    let tol_path = golden.join(TOLERANCES_FILE);
    let tol = if tol_path.is_file() {
        GoldenTolerances::parse(&std::fs::read_to_string(&tol_path)?).map_err(|message| {
            GoldenError::Malformed {
                path: tol_path.clone(),
                message,
            }
        })?
    } else {
        GoldenTolerances::default()
    };
    let mut names: Vec<String> = std::fs::read_dir(golden)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();

    let mut report = GoldenReport::default();
    for name in &names {
        let out = output.join(name);
        if !out.is_file() {
            return Err(GoldenError::MissingFile(out));
        }
        compare_csv(&tol, &mut report, name, &golden.join(name), &out)?;
    }

    let golden_manifest = golden.join(MANIFEST);
    if golden_manifest.is_file() {
        let out = output.join(MANIFEST);
        if !out.is_file() {
            return Err(GoldenError::MissingFile(out));
        }
        let g = read_manifest(&golden_manifest)?;
        let o = read_manifest(&out)?;
        report.files += 1;
        for (key, expected) in &g.metrics {
            match o.metrics.get(key) {
                Some(actual) => compare_cell(
                    &tol,
                    &mut report,
                    MANIFEST,
                    0,
                    key,
                    &format!("{expected:?}"),
                    &format!("{actual:?}"),
                ),
                None => report.diffs.push(CellDiff {
                    file: MANIFEST.to_string(),
                    row: 0,
                    column: key.clone(),
                    expected: format!("{expected:?}"),
                    actual: "<missing>".into(),
                    tolerance: None,
                }),
            }
        }
        let (gs, os) = (format!("{:?}", g.status), format!("{:?}", o.status));
        compare_cell(&tol, &mut report, MANIFEST, 0, "status", &gs, &os);
    }
    Ok(report)
}

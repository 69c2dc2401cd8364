//! de Broglie-Bohm guidance, trajectory integration, `|Ψ|²` sampling and the
//! internal coordinate.
//!
//! The internal coordinate of a particle is its quantile in the lateral
//! marginal `ρ(x) = ∫|Ψ|² dy`, measured from the `+x` side: `q = 0` is the
//! particle furthest along `+x`, `q = 1` the one furthest along `-x`. One
//! dimensional Bohm flow never reorders particles, so `q` is conserved by the
//! unitary evolution.

mod guidance;

pub use guidance::{
    rk4_step, GuidanceSnapshot, GuidanceStats, Lockstep, VelocityEval, VelocityField,
    DEFAULT_SUBSTEPS, DENSITY_FLOOR,
};

use rand::Rng;

use crate::geometry::Outcome;
use crate::stats::GridCdf;
use crate::wavefield::{Point, WavefieldError, Wavefunction};

#[derive(Debug, thiserror::Error)]
pub enum BohmError {
    #[error("particle {index} left the grid at ({:.3}, {:.3}), t = {time:.4}", position[0], position[1])]
    LeftGrid {
        index: usize,
        position: Point,
        time: f64,
    },
    #[error("wavefunction has no mass to sample from")]
    EmptyDensity,
    #[error(
        "particle at x = {x:.4} is not inside a single dominant lobe (lobe mass {lobe_mass:.4})"
    )]
    NotSingleLobe { x: f64, lobe_mass: f64 },
    #[error("internal coordinate {0} outside [0, 1]")]
    InvalidCoordinate(f64),
    #[error(transparent)]
    Wavefield(#[from] WavefieldError),
}

/// Time-stamped particle positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    pub samples: Vec<(f64, Point)>,
}

impl Trajectory {
    pub fn new(id: usize) -> Self {
        Trajectory {
            id,
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, p: Point) {
        self.samples.push((t, p));
    }

    pub fn last(&self) -> Option<Point> {
        self.samples.last().map(|s| s.1)
    }
}

/// One barrier encounter: internal coordinate before, outcome, and internal
/// coordinate inside the packet that continues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterEvent {
    pub level: usize,
    pub q_before: f64,
    pub outcome: Outcome,
    pub q_after: f64,
}

/// Draw `count` positions from `|ψ|²`.
///
/// In 2D the lateral coordinate is drawn from the marginal and the progress
/// coordinate from the conditional density, interpolated linearly between the
/// two neighbouring columns.
pub fn sample_ensemble<R: Rng + ?Sized>(
    psi: &Wavefunction,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Point>, BohmError> {
    let grid = psi.grid();
    let marginal = psi.marginal_1d(0);
    let cdf_x = GridCdf::new(&marginal, grid.lower(0), grid.spacing(0));
    if cdf_x.total().is_nan() || cdf_x.total() <= 0.0 {
        return Err(BohmError::EmptyDensity);
    }
    if grid.dims() == 1 {
        return Ok((0..count)
            .map(|_| [cdf_x.inverse(rng.gen::<f64>()), 0.0])
            .collect());
    }
    let rho = psi.density();
    let (nx, ny) = (grid.n(0), grid.n(1));
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let x = cdf_x.inverse(rng.gen::<f64>());
        let u = (x - grid.lower(0)) / grid.spacing(0);
        let i = (u.floor() as usize).min(nx - 2);
        let s = (u - i as f64).clamp(0.0, 1.0);
        let column: Vec<f64> = (0..ny)
            .map(|j| (1.0 - s) * rho[j * nx + i] + s * rho[j * nx + i + 1])
            .collect();
        let cdf_y = GridCdf::new(&column, grid.lower(1), grid.spacing(1));
        out.push([x, cdf_y.inverse(rng.gen::<f64>())]);
    }
    Ok(out)
}

/// Fraction of `marginal` (sampled at `x0 + i dx`) lying on the `+x` side of `x`.
pub fn quantile_ahead(marginal: &[f64], x0: f64, dx: f64, x: f64) -> f64 {
    let cdf = GridCdf::new(marginal, x0, dx);
    1.0 - cdf.cdf(x)
}

/// Position whose `+x`-side mass fraction is `q`; inverse of [`quantile_ahead`].
pub fn position_at_quantile(marginal: &[f64], x0: f64, dx: f64, q: f64) -> f64 {
    GridCdf::new(marginal, x0, dx).inverse(1.0 - q)
}

/// Share of the marginal a lobe must hold to count as dominant.
pub const LOBE_MASS: f64 = 0.99;
/// Lobe boundary, relative to the peak of the marginal.
pub const LOBE_THRESHOLD: f64 = 0.02;

/// Internal coordinate of a particle at `p` inside a single-lobe packet.
///
/// Fails with [`BohmError::NotSingleLobe`] when the contiguous region around
/// the particle where the marginal exceeds 2 % of its peak holds less than
/// 99 % of the mass.
pub fn internal_coordinate(psi: &Wavefunction, p: Point) -> Result<f64, BohmError> {
    let grid = psi.grid();
    let marginal = psi.marginal_1d(0);
    let dx = grid.spacing(0);
    let total: f64 = marginal.iter().sum::<f64>() * dx;
    if total.is_nan() || total <= 0.0 {
        return Err(BohmError::EmptyDensity);
    }
    let peak = marginal.iter().cloned().fold(0.0, f64::max);
    let level = LOBE_THRESHOLD * peak;
    let n = marginal.len();
    let i = (((p[0] - grid.lower(0)) / dx).round().max(0.0) as usize).min(n - 1);
    let mut lo = i;
    while lo > 0 && marginal[lo - 1] > level {
        lo -= 1;
    }
    let mut hi = i;
    while hi + 1 < n && marginal[hi + 1] > level {
        hi += 1;
    }
    let lobe_mass = marginal[lo..=hi].iter().sum::<f64>() * dx / total;
    if lobe_mass < LOBE_MASS {
        return Err(BohmError::NotSingleLobe { x: p[0], lobe_mass });
    }
    Ok(quantile_ahead(&marginal, grid.lower(0), dx, p[0]))
}

//! Detector records, branch collapse and the pinball engines.
//!
//! Detectors are not extra grid dimensions. A detection splits the field into
//! the parts inside the reflected and transmitted arm regions, keeps the part
//! holding the particle (the effective wavefunction) and appends one bit to
//! the branch record. Discarded parts are dropped on the spot and never read
//! again.

mod measured;
mod single;
mod unitary;

pub use measured::{
    recenter, run_measured_ensemble, run_measured_pinball, MeasuredParticle, MeasuredRun,
    MeasuredSetup, Recentering,
};
pub use single::{run_single_barrier, SingleBarrierRun, SingleBarrierSetup};
pub use unitary::{run_unitary_pinball, ArmVisit, UnitaryRun, UnitarySetup};

use crate::bohm::BohmError;
use crate::geometry::{GeometryError, Outcome, Region};
use crate::wavefield::{Point, WavefieldError, Wavefunction};

/// Default residual mass below which the lobes count as separated. Looser
/// values leave enough amplitude at the mask edge for the cut to scatter
/// measurable mass to the grid boundary.
pub const DEFAULT_EPS_SEP: f64 = 1e-6;
/// Boundary mass (within five cells) that aborts a run.
pub const LEAK_TOLERANCE: f64 = 1e-6;
/// Trajectory output cadence, in PDE steps.
pub const OUTPUT_EVERY: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum MeasurementError {
    #[error("detection refused: residual mass {residual:.3e} exceeds {eps_sep:.1e}")]
    PrematureDetection { residual: f64, eps_sep: f64 },
    #[error("particle at ({:.4}, {:.4}) lies in neither detector region", position[0], position[1])]
    ParticleInGap { position: Point },
    #[error("no detection at level {level} by t = {time:.3}")]
    NoDetection { level: usize, time: f64 },
    #[error("boundary mass {mass:.3e} exceeds {LEAK_TOLERANCE:.0e} at t = {time:.3}")]
    BoundaryLeak { mass: f64, time: f64 },
    #[error("invalid setup: {0}")]
    InvalidSetup(String),
    #[error(transparent)]
    Wavefield(#[from] WavefieldError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Bohm(#[from] BohmError),
}

/// Ordered detector outcomes, one bit per completed scattering
/// (1 = transmitted, 0 = reflected).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct DetectorRecord {
    bits: Vec<bool>,
}

impl DetectorRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        DetectorRecord { bits }
    }

    pub fn push(&mut self, outcome: Outcome) {
        self.bits.push(outcome.bit());
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Lattice node reached: one step toward `+x` per transmission.
    pub fn final_node(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn hamming(&self, other: &DetectorRecord) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
            + self.bits.len().abs_diff(other.bits.len())
    }
}

impl std::fmt::Display for DetectorRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// One decohered history: effective wavefunction, record and probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub psi: Wavefunction,
    pub record: DetectorRecord,
    pub weight: f64,
    /// Mass dropped at detections because it sat in the gap between regions.
    pub residual: f64,
}

impl Branch {
    pub fn new(psi: Wavefunction) -> Self {
        Branch {
            psi,
            record: DetectorRecord::new(),
            weight: 1.0,
            residual: 0.0,
        }
    }
}

/// Masses inside the two detector regions and outside both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overlap {
    pub mass_r: f64,
    pub mass_t: f64,
    pub residual: f64,
}

pub fn separation_overlap(psi: &Wavefunction, region_r: &Region, region_t: &Region) -> Overlap {
    let grid = psi.grid();
    let dv = grid.cell_volume();
    let (mut mr, mut mt, mut total) = (0.0, 0.0, 0.0);
    for (idx, z) in psi.amplitudes().iter().enumerate() {
        let m = z.norm_sqr() * dv;
        total += m;
        let p = grid.point(idx);
        if region_r.contains(p) {
            mr += m;
        } else if region_t.contains(p) {
            mt += m;
        }
    }
    Overlap {
        mass_r: mr,
        mass_t: mt,
        residual: (total - mr - mt).max(0.0),
    }
}

/// Result of a detection on one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Collapse {
    pub branch: Branch,
    pub outcome: Outcome,
    /// Mass of the kept region before renormalization.
    pub kept_mass: f64,
    /// Mass of the region that was thrown away.
    pub discarded_mass: f64,
}

/// Zero `psi` outside `region`, renormalize and return the pre-collapse
/// mass of the region.
pub fn collapse_to(psi: &mut Wavefunction, region: &Region) -> Result<f64, MeasurementError> {
    let grid = psi.grid().clone();
    for (idx, z) in psi.amplitudes_mut().iter_mut().enumerate() {
        if !region.contains(grid.point(idx)) {
            *z = Default::default();
        }
    }
    Ok(psi.normalize()?)
}

/// Detect which region holds the particle, collapse onto it and extend the
/// record.
pub fn detect_and_collapse(
    branch: &Branch,
    particle: Point,
    region_r: &Region,
    region_t: &Region,
    eps_sep: f64,
) -> Result<Collapse, MeasurementError> {
    let overlap = separation_overlap(&branch.psi, region_r, region_t);
    if overlap.residual >= eps_sep {
        return Err(MeasurementError::PrematureDetection {
            residual: overlap.residual,
            eps_sep,
        });
    }
    let (outcome, region, discarded) = if region_t.contains(particle) {
        (Outcome::Transmitted, region_t, overlap.mass_r)
    } else if region_r.contains(particle) {
        (Outcome::Reflected, region_r, overlap.mass_t)
    } else {
        return Err(MeasurementError::ParticleInGap { position: particle });
    };
    let mut psi = branch.psi.clone();
    let kept_mass = collapse_to(&mut psi, region)?;
    let mut record = branch.record.clone();
    record.push(outcome);
    Ok(Collapse {
        branch: Branch {
            psi,
            record,
            weight: branch.weight * kept_mass,
            residual: branch.residual + branch.weight * overlap.residual,
        },
        outcome,
        kept_mass,
        discarded_mass: discarded,
    })
}

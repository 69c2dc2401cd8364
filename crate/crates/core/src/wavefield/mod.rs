//! Grid wavefunctions and unitary split-operator time evolution.

mod grid;
pub mod io;
mod propagator;
mod spectral;
mod wavefunction;

pub use grid::{Grid, Point, MIN_POINTS};
pub use propagator::{free_flight, gradient_from_spectrum, SplitStep};
pub use spectral::Spectral;
pub use wavefunction::{gaussian_packet, Observables, PacketSpec, Wavefunction};

#[derive(Debug, thiserror::Error)]
pub enum WavefieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid packet: {0}")]
    InvalidPacket(String),
    #[error(
        "packet center {center} on axis {axis} is {margin:.3} from the boundary; need {needed:.3}"
    )]
    TooCloseToBoundary {
        axis: usize,
        center: f64,
        margin: f64,
        needed: f64,
    },
    #[error("sigma {sigma} on axis {axis} is under-resolved by spacing {spacing}")]
    UnderResolved {
        axis: usize,
        sigma: f64,
        spacing: f64,
    },
    #[error("expected {expected} grid values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("time step {0} must be finite and nonzero")]
    InvalidStep(f64),
    #[error("non-finite value in field")]
    NonFinite,
    #[error("bad snapshot: {0}")]
    BadSnapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

use crate::bohm::BohmError;
use crate::chaos::ChaosError;
use crate::geometry::GeometryError;
use crate::measurement::MeasurementError;
use crate::scenario::ConfigError;
use crate::wavefield::WavefieldError;

/// Any error raised by the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Wavefield(#[from] WavefieldError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Bohm(#[from] BohmError),
    #[error(transparent)]
    Chaos(#[from] ChaosError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

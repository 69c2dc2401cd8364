//! Quantum pinball: wavepackets scattering through a lattice of half-silvered
//! barriers, de Broglie-Bohm trajectories riding the evolving field, and a
//! detector model that turns the particle's position inside its packet into a
//! doubling-map orbit.
//!
//! The crate is organized bottom-up:
//!
//! - [`wavefield`]: grids, Gaussian packets, Strang split-operator stepping.
//! - [`geometry`]: Gaussian barriers, the triangular lattice, arm regions and
//!   calibration of barrier height to a target transmission.
//! - [`bohm`]: guidance velocity, RK4 trajectories, `|Ψ|²` sampling and the
//!   internal (quantile) coordinate.
//! - [`measurement`]: detector records, branch collapse and the measured /
//!   unitary pinball engines.
//! - [`chaos`]: the exact doubling-map oracle, symbolic paths, Lyapunov
//!   estimates and divergence reports.
//! - [`scenario`]: the key-value config format, scenario runner, manifests and
//!   golden-file verification behind the `pinball` binary.
//!
//! Units are ħ = 1 and m = 1 throughout.

pub mod bohm;
pub mod chaos;
pub mod geometry;
pub mod measurement;
pub mod scenario;
pub mod stats;
pub mod wavefield;

mod error;

pub use error::Error;

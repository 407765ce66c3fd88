//! Spectral EPR steering between the fundamental and second harmonic of a
//! doubly resonant intracavity SHG system.
//!
//! - [`model`]: operating point, Hopf threshold and classical steady state.
//! - [`linear`]: drift/diffusion of the linearized fluctuations, stability,
//!   intracavity spectrum, Lyapunov covariance and output quadrature spectra.
//! - [`steering`]: Reid inferred variances, EPR products, per-frequency
//!   classification and parameter-grid asymmetry maps.
//! - [`stochastic`]: nonlinear positive-P trajectories used as an
//!   independent check of the linearized results.
//!
//! The crate is `no_std` and only needs `alloc`; parallel drivers, file
//! formats and the command line live in the `shgsteer` crate.

#![no_std]

extern crate alloc;

pub mod error;
pub mod linear;
pub mod model;
pub mod steering;
pub mod stochastic;

pub use error::{Error, Result};
pub use linear::{FluctuationSystem, OutputSpectra, SpectralMatrix, Stability};
pub use model::{critical_pump, SteadyState, SystemParams};
pub use steering::{AsymmetryCell, Classification, SteeringPoint, SteeringScan};
pub use stochastic::{EnsembleRun, EnsembleStats, IntegrationConfig, SpectrumEstimate};
pub use nalgebra::Matrix4;
pub use num_complex::Complex64;

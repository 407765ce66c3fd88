use alloc::boxed::Box;

use crate::stochastic::EnsembleStats;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter {
        field: &'static str,
        reason: &'static str,
    },

    #[error("steady-state solver did not converge (best alpha = {best}, residual = {residual:e})")]
    SolverFailure { best: f64, residual: f64 },

    #[error("steady state residual {residual:e} exceeds tolerance {tolerance:e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },

    #[error("pump epsilon = {epsilon} is at or above the Hopf threshold epsilon_c = {critical}")]
    AboveThreshold { epsilon: f64, critical: f64 },

    #[error("drift matrix is not stable (min Re(lambda) = {min_real_part:e})")]
    Unstable { min_real_part: f64 },

    #[error("eigenvalue iteration failed for drift matrix {matrix:?}")]
    Eigensolver { matrix: [[f64; 4]; 4] },

    #[error("singular linear system in {context}")]
    Singular { context: &'static str },

    #[error("imaginary residue {residue:e} of output spectrum exceeds round-off bound")]
    ImaginaryResidue { residue: f64 },

    #[error("non-positive measured variance {value} in inference denominator")]
    NonPositiveVariance { value: f64 },

    #[error("grid `{name}` is invalid: {reason}")]
    InvalidGrid {
        name: &'static str,
        reason: &'static str,
    },

    #[error("sampling window {window} is shorter than required {required} (50 correlation times)")]
    WindowTooShort { window: f64, required: f64 },

    #[error("{discarded} of {total} trajectories diverged (limit 5%)")]
    DivergenceRate {
        discarded: usize,
        total: usize,
        partial: Option<Box<EnsembleStats>>,
    },
}

impl Error {
    /// True for errors that mean the operating point is at or beyond the Hopf point.
    pub fn is_instability(&self) -> bool {
        matches!(self, Error::AboveThreshold { .. } | Error::Unstable { .. })
    }

    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. } | Error::InvalidGrid { .. } | Error::WindowTooShort { .. }
        )
    }
}

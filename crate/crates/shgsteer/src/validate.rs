//! Agreement chain between the stochastic ensemble, the Lyapunov covariance
//! and the integrated linear spectrum.

use std::fmt;

use serde::Serialize;
use shgsteer_core::linear::{self, FluctuationSystem};
use shgsteer_core::stochastic::{EnsembleRun, IntegrationConfig};
use shgsteer_core::{Complex64, Error, Matrix4, Result, SystemParams};

use crate::parallel;

/// Statistical checks pass within this many standard errors.
pub const SIGMA: f64 = 3.0;
/// Relative tolerance of the spectral integral against the Lyapunov solution.
pub const INTEGRAL_REL_TOL: f64 = 1e-3;
pub const INTEGRAL_HALF_WIDTH: f64 = 200.0;
const QUADRATURE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst discrepancy, in standard errors or as a relative error.
    pub measured: f64,
    pub limit: f64,
    pub unit: &'static str,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {:.3e} {} (limit {})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.unit,
            self.limit
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub n_kept: usize,
    pub n_discarded: usize,
}

impl ValidationReport {
    pub fn failed(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn all_passed(&self) -> bool {
        self.failed() == 0
    }
}

/// `|d| / se`, with a zero error bar only accepting an exact match.
pub fn z_score(d: f64, se: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else if se > 0.0 {
        d.abs() / se
    } else {
        f64::INFINITY
    }
}

fn sigma_check(name: String, z: f64) -> Check {
    Check {
        name,
        passed: z <= SIGMA,
        measured: z,
        limit: SIGMA,
        unit: "se",
    }
}

/// Largest entrywise `|x - y| / |y|`; an exactly zero reference only matches zero.
pub fn max_relative_error(x: &Matrix4<f64>, y: &Matrix4<f64>) -> f64 {
    x.iter()
        .zip(y.iter())
        .map(|(a, b)| {
            let d = (a - b).abs();
            if d == 0.0 {
                0.0
            } else {
                d / b.abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Flips the sign of the fundamental/harmonic coupling in the drift. Used
/// only as a negative control: the reference moments become wrong while the
/// simulation is untouched.
pub fn corrupt_drift_sign(sys: &FluctuationSystem) -> FluctuationSystem {
    let mut bad = *sys;
    for (i, j) in [(0, 2), (1, 3), (2, 0), (3, 1)] {
        bad.drift[(i, j)] = -bad.drift[(i, j)];
    }
    bad
}

pub fn covariance_z(run: &EnsembleRun, reference: &Matrix4<f64>) -> f64 {
    let s = &run.stats;
    (0..16)
        .map(|k| z_score(s.covariance[k] - reference[k], s.standard_errors[k]))
        .fold(0.0, f64::max)
}

/// Worst z-score of the ensemble means against `target` (ordered as
/// `alpha, alpha+, beta, beta+`), over real and imaginary parts.
pub fn means_z(run: &EnsembleRun, target: [f64; 4]) -> f64 {
    run.stats
        .means
        .iter()
        .zip(target)
        .map(|(m, t)| z_score(m.value.re - t, m.se_re).max(z_score(m.value.im, m.se_im)))
        .fold(0.0, f64::max)
}

/// Worst z-score of every spectrum estimate against the linear spectrum of `sys`.
pub fn spectrum_z(run: &EnsembleRun, sys: &FluctuationSystem) -> Result<Vec<(f64, f64)>> {
    run.spectra
        .iter()
        .map(|est| {
            let exact = linear::intracavity_spectrum(sys, est.omega)?.values;
            let z = (0..16)
                .map(|k| {
                    let d: Complex64 = est.values[k] - exact[k];
                    z_score(d.re, est.se_re[k]).max(z_score(d.im, est.se_im[k]))
                })
                .fold(0.0, f64::max);
            Ok((est.omega, z))
        })
        .collect()
}

/// Steady state shifted by the leading fluctuation correction, ordered as
/// `alpha, alpha+, beta, beta+`.
pub fn corrected_means(sys: &FluctuationSystem, cov: &Matrix4<f64>) -> Result<[f64; 4]> {
    let shift = linear::mean_shift(sys, cov)?;
    let (a, b) = (sys.ss.alpha_ss, sys.ss.beta_ss);
    Ok([a + shift[0], a + shift[1], b + shift[2], b + shift[3]])
}

/// Runs the full chain. A divergence rate above the limit is returned as
/// [`Error::DivergenceRate`] rather than as a failed check.
pub fn agreement_chain(
    params: &SystemParams,
    cfg: &IntegrationConfig,
    omegas: &[f64],
    corrupt: bool,
) -> Result<ValidationReport> {
    params.require_below_threshold()?;
    let sys = linear::linearize(params)?;
    let stability = linear::stability_eigenvalues(&sys)?;
    if !stability.stable {
        return Err(Error::Unstable {
            min_real_part: stability.margin,
        });
    }
    let reference = if corrupt { corrupt_drift_sign(&sys) } else { sys };
    let lyapunov = linear::lyapunov_covariance(&reference)?;
    let integral = linear::spectral_integral(&reference, INTEGRAL_HALF_WIDTH, QUADRATURE_TOL)?.total();

    let run = parallel::run_ensemble(params, cfg, omegas)?;
    let stats = &run.stats;
    let total = stats.n_kept + stats.n_discarded;

    let mut checks = vec![
        Check {
            name: "spectral integral vs lyapunov".into(),
            passed: max_relative_error(&integral, &lyapunov) <= INTEGRAL_REL_TOL,
            measured: max_relative_error(&integral, &lyapunov),
            limit: INTEGRAL_REL_TOL,
            unit: "rel",
        },
        Check {
            name: "discarded trajectories".into(),
            passed: true,
            measured: stats.n_discarded as f64 / total as f64,
            limit: 0.05,
            unit: "frac",
        },
        sigma_check("ensemble covariance vs lyapunov".into(), covariance_z(&run, &lyapunov)),
        sigma_check(
            "ensemble means vs corrected steady state".into(),
            means_z(&run, corrected_means(&reference, &lyapunov)?),
        ),
        sigma_check(
            "conjugacy in the mean".into(),
            z_score(stats.conjugacy_defect.value.re, stats.conjugacy_defect.se_re)
                .max(z_score(stats.conjugacy_defect.value.im, stats.conjugacy_defect.se_im)),
        ),
    ];
    for (omega, z) in spectrum_z(&run, &reference)? {
        checks.push(sigma_check(format!("spectrum at omega = {omega}"), z));
    }
    Ok(ValidationReport {
        checks,
        n_kept: stats.n_kept,
        n_discarded: stats.n_discarded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg() -> IntegrationConfig {
        IntegrationConfig {
            t_transient: 10.0,
            t_sample: 60.0,
            n_trajectories: 24,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn z_scores() {
        assert_eq!(z_score(0.0, 0.0), 0.0);
        assert_eq!(z_score(1e-300, 0.0), f64::INFINITY);
        assert_eq!(z_score(-2.0, 0.5), 4.0);
    }

    #[test]
    fn zero_pump_passes_exactly() {
        let p = SystemParams::new(1.0, 1.0, 0.01, 0.0).unwrap();
        let report = agreement_chain(&p, &quick_cfg(), &[0.0, 2.0], false).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{c}");
            assert_eq!(c.measured, 0.0, "{c}");
        }
    }

    #[test]
    fn corrupted_drift_fails_covariance() {
        let p = SystemParams::with_pump_fraction(1.0, 1.0, 0.01, 0.6).unwrap();
        let report = agreement_chain(&p, &quick_cfg(), &[], true).unwrap();
        let cov = report
            .checks
            .iter()
            .find(|c| c.name == "ensemble covariance vs lyapunov")
            .unwrap();
        assert!(!cov.passed, "{cov}");
    }

    #[test]
    fn above_threshold_is_rejected() {
        let p = SystemParams::with_pump_fraction(1.0, 1.0, 0.01, 1.1).unwrap();
        let err = agreement_chain(&p, &quick_cfg(), &[], false).unwrap_err();
        assert!(err.is_instability());
    }
}

//! Operating point of the doubly resonant SHG cavity and its classical
//! (noise-free) steady state.
//!
//! The pump amplitude is taken real and non-negative. With that phase
//! convention the below-threshold fixed point is real, with the fundamental
//! amplitude non-negative and the harmonic amplitude non-positive.

use crate::error::{Error, Result};

/// The four rates defining one operating point, all in units of `gamma_a`
/// when `gamma_a = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub kappa: f64,
    pub epsilon: f64,
}

impl SystemParams {
    pub fn new(gamma_a: f64, gamma_b: f64, kappa: f64, epsilon: f64) -> Result<Self> {
        let params = Self {
            gamma_a,
            gamma_b,
            kappa,
            epsilon,
        };
        params.validate()?;
        Ok(params)
    }

    /// Builds the operating point with `epsilon = pump_fraction * epsilon_c`.
    pub fn with_pump_fraction(
        gamma_a: f64,
        gamma_b: f64,
        kappa: f64,
        pump_fraction: f64,
    ) -> Result<Self> {
        if !pump_fraction.is_finite() || pump_fraction < 0.0 {
            return Err(Error::InvalidParameter {
                field: "pump_fraction",
                reason: "must be finite and non-negative",
            });
        }
        let mut params = Self::new(gamma_a, gamma_b, kappa, 0.0)?;
        params.epsilon = pump_fraction * critical_pump(&params);
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field, value: f64| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    field,
                    reason: "must be finite and strictly positive",
                })
            }
        };
        positive("gamma_a", self.gamma_a)?;
        positive("gamma_b", self.gamma_b)?;
        positive("kappa", self.kappa)?;
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::InvalidParameter {
                field: "epsilon",
                reason: "must be finite and non-negative",
            });
        }
        Ok(())
    }

    /// Rejects operating points at or above the Hopf threshold, where the
    /// linearized spectra are meaningless.
    pub fn require_below_threshold(&self) -> Result<()> {
        self.validate()?;
        let critical = critical_pump(self);
        if self.epsilon >= critical {
            return Err(Error::AboveThreshold {
                epsilon: self.epsilon,
                critical,
            });
        }
        Ok(())
    }

    pub fn pump_fraction(&self) -> f64 {
        self.epsilon / critical_pump(self)
    }

    /// Coefficient of the cubic term after eliminating the harmonic, `kappa^2 / (2 gamma_b)`.
    fn cubic_coefficient(&self) -> f64 {
        self.kappa * self.kappa / (2.0 * self.gamma_b)
    }
}

/// Classical mean-field amplitudes below threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub alpha_ss: f64,
    pub beta_ss: f64,
    pub residual: f64,
}

/// Pump amplitude at which the below-threshold fixed point undergoes a Hopf
/// bifurcation into self-pulsing.
pub fn critical_pump(params: &SystemParams) -> f64 {
    let SystemParams {
        gamma_a,
        gamma_b,
        kappa,
        ..
    } = *params;
    (gamma_b + 2.0 * gamma_a) * libm::sqrt(2.0 * gamma_b * (gamma_a + gamma_b)) / kappa
}

/// Residual tolerance used when the caller does not supply one.
pub fn default_tolerance(epsilon: f64) -> f64 {
    1e-12 * epsilon.max(1.0)
}

/// `|epsilon - gamma_a alpha - kappa^2 alpha^3 / (2 gamma_b)|`.
pub fn steady_state_residual(params: &SystemParams, ss: &SteadyState) -> f64 {
    libm::fabs(cubic(params, ss.alpha_ss) - params.epsilon)
}

fn cubic(params: &SystemParams, alpha: f64) -> f64 {
    params.gamma_a * alpha + params.cubic_coefficient() * alpha * alpha * alpha
}

fn cubic_slope(params: &SystemParams, alpha: f64) -> f64 {
    params.gamma_a + 3.0 * params.cubic_coefficient() * alpha * alpha
}

const MAX_BISECTIONS: usize = 200;
const MAX_POLISH: usize = 8;

/// Solves `epsilon = gamma_a alpha + kappa^2 alpha^3 / (2 gamma_b)` for the
/// unique non-negative root, then sets `beta_ss = -kappa alpha^2 / (2 gamma_b)`.
///
/// Bracketed bisection on `[0, epsilon / gamma_a]` followed by a few Newton
/// steps that are only accepted while they stay inside the bracket and
/// reduce the residual.
pub fn solve_steady_state(params: &SystemParams, tol: f64) -> Result<SteadyState> {
    params.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            field: "tol",
            reason: "must be strictly positive",
        });
    }
    let eps = params.epsilon;
    let mut lo = 0.0;
    let mut hi = eps / params.gamma_a;
    let residual_at = |alpha: f64| libm::fabs(cubic(params, alpha) - eps);

    let mut best = 0.5 * (lo + hi);
    let mut best_residual = residual_at(best);
    for _ in 0..MAX_BISECTIONS {
        if best_residual <= tol || hi - lo <= f64::EPSILON * hi {
            break;
        }
        if cubic(params, best) < eps {
            lo = best;
        } else {
            hi = best;
        }
        best = 0.5 * (lo + hi);
        best_residual = residual_at(best);
    }

    for _ in 0..MAX_POLISH {
        let step = (cubic(params, best) - eps) / cubic_slope(params, best);
        let candidate = best - step;
        if !(lo..=hi).contains(&candidate) {
            break;
        }
        let r = residual_at(candidate);
        if r >= best_residual {
            break;
        }
        best = candidate;
        best_residual = r;
    }

    if best_residual > tol {
        return Err(Error::SolverFailure {
            best,
            residual: best_residual,
        });
    }
    Ok(SteadyState {
        alpha_ss: best,
        beta_ss: -params.kappa / (2.0 * params.gamma_b) * best * best,
        residual: best_residual,
    })
}

/// [`solve_steady_state`] with [`default_tolerance`].
pub fn steady_state(params: &SystemParams) -> Result<SteadyState> {
    solve_steady_state(params, default_tolerance(params.epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn equal_damping() -> SystemParams {
        SystemParams::new(1.0, 1.0, 0.01, 360.0).unwrap()
    }

    /// Plain bisection to machine precision on the monotone cubic.
    fn bisection_oracle(params: &SystemParams) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, params.epsilon / params.gamma_a + 1.0);
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            let f = params.gamma_a * mid
                + params.kappa * params.kappa / (2.0 * params.gamma_b) * mid.powi(3);
            if f < params.epsilon {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn critical_pump_values() {
        let p = SystemParams::new(1.0, 1.0, 0.01, 0.0).unwrap();
        assert_relative_eq!(critical_pump(&p), 600.0, max_relative = 1e-12);
        let p = SystemParams::new(1.0, 0.25, 0.01, 0.0).unwrap();
        assert_relative_eq!(critical_pump(&p), 100.0 * 2.25 * 0.625_f64.sqrt(), max_relative = 1e-12);
        assert!((critical_pump(&p) - 177.8781).abs() < 1e-3);
        let doubled = SystemParams::new(1.0, 1.0, 0.02, 0.0).unwrap();
        assert_relative_eq!(critical_pump(&doubled), 300.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_pump_is_vacuum() {
        let p = SystemParams::new(1.0, 1.0, 0.01, 0.0).unwrap();
        let ss = steady_state(&p).unwrap();
        assert_eq!(ss.alpha_ss, 0.0);
        assert_eq!(ss.beta_ss, 0.0);
    }

    #[test]
    fn steady_state_at_360_matches_bisection_oracle() {
        let p = equal_damping();
        let ss = steady_state(&p).unwrap();
        let oracle = bisection_oracle(&p);
        assert_relative_eq!(ss.alpha_ss, oracle, max_relative = 1e-12);
        assert!((ss.alpha_ss - 159.003).abs() < 1e-2);
        assert!((ss.beta_ss + 126.410).abs() < 1e-2);
        assert_relative_eq!(ss.beta_ss, -0.005 * oracle * oracle, max_relative = 1e-12);
        assert!(ss.residual <= default_tolerance(360.0));
    }

    #[test]
    fn weak_coupling_reduces_to_empty_cavity() {
        let p = SystemParams::new(2.0, 1.0, 1e-9, 3.0).unwrap();
        let ss = steady_state(&p).unwrap();
        assert_relative_eq!(ss.alpha_ss, 1.5, max_relative = 1e-9);
    }

    #[test]
    fn residual_examples() {
        let p = equal_damping();
        let origin = SteadyState {
            alpha_ss: 0.0,
            beta_ss: 0.0,
            residual: 0.0,
        };
        assert_eq!(steady_state_residual(&p, &origin), 360.0);

        let ss = steady_state(&p).unwrap();
        assert!(steady_state_residual(&p, &ss) < 1e-9);
        let delta = 1e-6;
        let perturbed = SteadyState {
            alpha_ss: ss.alpha_ss + delta,
            ..ss
        };
        let slope = 1.0 + 3.0 * 0.01 * 0.01 / 2.0 * ss.alpha_ss * ss.alpha_ss;
        assert_relative_eq!(
            steady_state_residual(&p, &perturbed),
            slope * delta,
            max_relative = 1e-4
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(SystemParams::new(0.0, 1.0, 0.01, 1.0).is_err());
        assert!(SystemParams::new(1.0, -1.0, 0.01, 1.0).is_err());
        assert!(SystemParams::new(1.0, 1.0, f64::NAN, 1.0).is_err());
        assert!(SystemParams::new(1.0, 1.0, 0.01, -1.0).is_err());
        assert!(solve_steady_state(&equal_damping(), 0.0).is_err());
    }

    #[test]
    fn threshold_check() {
        let below = SystemParams::with_pump_fraction(1.0, 1.0, 0.01, 0.6).unwrap();
        assert!(below.require_below_threshold().is_ok());
        assert_relative_eq!(below.epsilon, 360.0, max_relative = 1e-14);
        let above = SystemParams::with_pump_fraction(1.0, 1.0, 0.01, 1.1).unwrap();
        assert!(matches!(
            above.require_below_threshold(),
            Err(Error::AboveThreshold { .. })
        ));
    }

    #[test]
    fn impossible_tolerance_reports_best_iterate() {
        match solve_steady_state(&equal_damping(), 1e-300) {
            Err(Error::SolverFailure { best, residual }) => {
                assert!((best - 159.003).abs() < 1e-2);
                assert!(residual < 1e-9);
            }
            other => panic!("expected solver failure, got {other:?}"),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn alpha_increasing_in_pump(ga in 0.2f64..3.0, gb in 0.05f64..3.0, e1 in 0.0f64..500.0, de in 1e-3f64..100.0) {
                let p1 = SystemParams::new(ga, gb, 0.01, e1).unwrap();
                let p2 = SystemParams::new(ga, gb, 0.01, e1 + de).unwrap();
                let a1 = steady_state(&p1).unwrap();
                let a2 = steady_state(&p2).unwrap();
                prop_assert!(a2.alpha_ss > a1.alpha_ss);
                prop_assert!(a1.beta_ss <= 0.0 && a2.beta_ss <= 0.0);
                prop_assert!(a1.alpha_ss >= 0.0);
            }

            #[test]
            fn scaled_rates_still_solve(ga in 0.2f64..3.0, gb in 0.05f64..3.0, frac in 0.0f64..0.99, s in 0.1f64..10.0) {
                let p = SystemParams::with_pump_fraction(ga, gb, 0.01, frac).unwrap();
                let scaled = SystemParams::new(s * ga, s * gb, 0.01, s * p.epsilon).unwrap();
                let ss = steady_state(&scaled).unwrap();
                prop_assert!(steady_state_residual(&scaled, &ss) <= default_tolerance(scaled.epsilon));
                prop_assert!((ss.beta_ss + 0.01 / (2.0 * s * gb) * ss.alpha_ss * ss.alpha_ss).abs() <= 1e-12 * ss.beta_ss.abs().max(1.0));
            }
        }
    }
}

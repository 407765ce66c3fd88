//! Reid inferred variances and EPR-steering products from output spectra,
//! classified per analysis frequency, plus the parameter-grid summary of
//! where steering is symmetric.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linear::{self, FluctuationSystem, OutputSpectra, XA, XB, YA, YB};
use crate::model::SystemParams;

/// Spectral variances of each quadrature after optimal linear inference
/// from the same quadrature of the other mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferredVariances {
    pub xa: f64,
    pub ya: f64,
    pub xb: f64,
    pub yb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EprProducts {
    /// `V_inf(X_b) V_inf(Y_b)`: harmonic inferred from measurements on the fundamental.
    pub b_given_a: f64,
    /// `V_inf(X_a) V_inf(Y_a)`: fundamental inferred from measurements on the harmonic.
    pub a_given_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Classification {
    NoSteering,
    /// Only `b_given_a < 1`: measurements on the fundamental steer the harmonic.
    OnlyBSteerable,
    /// Only `a_given_b < 1`: measurements on the harmonic steer the fundamental.
    OnlyASteerable,
    Symmetric,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::NoSteering => "none",
            Classification::OnlyBSteerable => "only_b",
            Classification::OnlyASteerable => "only_a",
            Classification::Symmetric => "symmetric",
        }
    }
}

impl core::fmt::Display for Classification {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringPoint {
    pub omega: f64,
    pub spectra: OutputSpectra,
    pub inferred: InferredVariances,
    pub epr: EprProducts,
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringScan {
    pub params: SystemParams,
    pub omegas: Vec<f64>,
    pub points: Vec<SteeringPoint>,
}

impl SteeringScan {
    /// `(min over the grid of b_given_a, omega where it occurs)`; the first
    /// grid point wins ties.
    pub fn min_b_given_a(&self) -> (f64, f64) {
        self.argmin(|p| p.epr.b_given_a)
    }

    pub fn min_a_given_b(&self) -> (f64, f64) {
        self.argmin(|p| p.epr.a_given_b)
    }

    fn argmin(&self, key: impl Fn(&SteeringPoint) -> f64) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NAN), |best, p| {
                let k = key(p);
                if k < best.0 {
                    (k, p.omega)
                } else {
                    best
                }
            })
    }

    pub fn any_symmetric(&self) -> bool {
        self.points
            .iter()
            .any(|p| p.classification == Classification::Symmetric)
    }
}

pub fn inferred_variances(v: &OutputSpectra) -> Result<InferredVariances> {
    for q in [XA, YA, XB, YB] {
        let value = v.variance(q);
        if !(value > 0.0) {
            return Err(Error::NonPositiveVariance { value });
        }
    }
    let cx = v.covariance(XA, XB);
    let cy = v.covariance(YA, YB);
    Ok(InferredVariances {
        xb: v.variance(XB) - cx * cx / v.variance(XA),
        yb: v.variance(YB) - cy * cy / v.variance(YA),
        xa: v.variance(XA) - cx * cx / v.variance(XB),
        ya: v.variance(YA) - cy * cy / v.variance(YB),
    })
}

pub fn epr_products(inf: &InferredVariances) -> EprProducts {
    EprProducts {
        b_given_a: inf.xb * inf.yb,
        a_given_b: inf.xa * inf.ya,
    }
}

/// Strict comparison against 1; a product equal to 1 does not steer.
pub fn classify(epr: &EprProducts) -> Classification {
    match (epr.b_given_a < 1.0, epr.a_given_b < 1.0) {
        (true, true) => Classification::Symmetric,
        (true, false) => Classification::OnlyBSteerable,
        (false, true) => Classification::OnlyASteerable,
        (false, false) => Classification::NoSteering,
    }
}

pub fn steering_point(sys: &FluctuationSystem, omega: f64) -> Result<SteeringPoint> {
    let spectra = linear::output_spectra_at(sys, omega)?;
    let inferred = inferred_variances(&spectra)?;
    let epr = epr_products(&inferred);
    Ok(SteeringPoint {
        omega,
        spectra,
        inferred,
        epr,
        classification: classify(&epr),
    })
}

pub fn validate_omegas(omegas: &[f64]) -> Result<()> {
    if omegas.is_empty() {
        return Err(Error::InvalidGrid {
            name: "omega",
            reason: "must not be empty",
        });
    }
    if omegas.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidGrid {
            name: "omega",
            reason: "must be finite",
        });
    }
    if omegas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid {
            name: "omega",
            reason: "must be strictly increasing",
        });
    }
    Ok(())
}

/// Linearizes `params` and checks that the fixed point is stable, as needed
/// before any spectral evaluation.
pub fn stable_system(params: &SystemParams) -> Result<FluctuationSystem> {
    params.require_below_threshold()?;
    let sys = linear::linearize(params)?;
    let stability = linear::stability_eigenvalues(&sys)?;
    if !stability.stable {
        return Err(Error::Unstable {
            min_real_part: stability.margin,
        });
    }
    Ok(sys)
}

pub fn frequency_scan(params: &SystemParams, omegas: &[f64]) -> Result<SteeringScan> {
    validate_omegas(omegas)?;
    let sys = stable_system(params)?;
    let points = omegas
        .iter()
        .map(|&w| steering_point(&sys, w))
        .collect::<Result<Vec<_>>>()?;
    Ok(SteeringScan {
        params: *params,
        omegas: omegas.to_vec(),
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSummary {
    /// 1 when some scanned frequency is steerable in both directions.
    pub indicator: u8,
    pub min_b_given_a: f64,
    pub min_a_given_b: f64,
    /// True when `b_given_a < 1` somewhere but `a_given_b >= 1` everywhere.
    pub only_b_steers: bool,
    /// True when `a_given_b < 1` somewhere but `b_given_a >= 1` everywhere.
    pub only_a_steers: bool,
}

#[derive(Debug, Clone)]
pub struct AsymmetryCell {
    pub gamma_ratio: f64,
    pub pump_fraction: f64,
    pub outcome: Result<CellSummary>,
}

impl AsymmetryCell {
    /// Indicator with failed cells reported as -1.
    pub fn indicator(&self) -> i8 {
        match &self.outcome {
            Ok(s) => s.indicator as i8,
            Err(_) => -1,
        }
    }
}

pub fn summarize(scan: &SteeringScan) -> CellSummary {
    let (min_b_given_a, _) = scan.min_b_given_a();
    let (min_a_given_b, _) = scan.min_a_given_b();
    CellSummary {
        indicator: scan.any_symmetric() as u8,
        min_b_given_a,
        min_a_given_b,
        only_b_steers: min_b_given_a < 1.0 && !(min_a_given_b < 1.0),
        only_a_steers: min_a_given_b < 1.0 && !(min_b_given_a < 1.0),
    }
}

/// One cell of the asymmetry map at `gamma_b = gamma_ratio * gamma_a`,
/// `epsilon = pump_fraction * epsilon_c`. Failures stay inside the cell.
pub fn asymmetry_cell(
    gamma_a: f64,
    kappa: f64,
    gamma_ratio: f64,
    pump_fraction: f64,
    omegas: &[f64],
) -> AsymmetryCell {
    let outcome = SystemParams::with_pump_fraction(gamma_a, gamma_ratio * gamma_a, kappa, pump_fraction)
        .and_then(|p| frequency_scan(&p, omegas))
        .map(|scan| summarize(&scan));
    AsymmetryCell {
        gamma_ratio,
        pump_fraction,
        outcome,
    }
}

pub fn validate_map_grids(gamma_ratios: &[f64], pump_fractions: &[f64], omegas: &[f64]) -> Result<()> {
    if gamma_ratios.is_empty() || pump_fractions.is_empty() {
        return Err(Error::InvalidGrid {
            name: "gamma_ratio/pump_fraction",
            reason: "must not be empty",
        });
    }
    if pump_fractions.iter().any(|f| !(*f < 1.0)) {
        return Err(Error::InvalidGrid {
            name: "pump_fraction",
            reason: "every pump fraction must be below 1",
        });
    }
    validate_omegas(omegas)
}

/// Cells in row-major order: the outer loop runs over `gamma_ratios`.
pub fn asymmetry_map(
    gamma_a: f64,
    kappa: f64,
    gamma_ratios: &[f64],
    pump_fractions: &[f64],
    omegas: &[f64],
) -> Result<Vec<AsymmetryCell>> {
    validate_map_grids(gamma_ratios, pump_fractions, omegas)?;
    Ok(gamma_ratios
        .iter()
        .flat_map(|&r| {
            pump_fractions
                .iter()
                .map(move |&f| asymmetry_cell(gamma_a, kappa, r, f, omegas))
        })
        .collect())
}

/// `start, start + step, ...` up to and including `stop` (within half a step).
pub fn stepped_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::InvalidGrid {
            name: "stepped",
            reason: "needs finite start <= stop and positive step",
        });
    }
    let n = libm::floor((stop - start) / step + 0.5) as usize;
    Ok((0..=n).map(|k| start + step * k as f64).collect())
}

/// Fractions `0.05, 0.10, ..., 2.00` rounded to the nearest hundredth so
/// that grid values compare equal to their decimal labels.
pub fn default_gamma_ratios() -> Vec<f64> {
    (1..=40).map(|k| k as f64 * 5.0 / 100.0).collect()
}

pub fn default_pump_fractions() -> Vec<f64> {
    (1..=19).map(|k| k as f64 * 5.0 / 100.0).collect()
}

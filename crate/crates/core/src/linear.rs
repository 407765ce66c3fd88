//! Linearized fluctuations around the classical steady state.
//!
//! Fluctuations `dX = (d alpha, d alpha+, d beta, d beta+)` obey the
//! Ornstein-Uhlenbeck equation `dX/dt = -A X + B dW` with `D = B B^T`.
//! From the drift and diffusion this module evaluates the stationary
//! intracavity spectrum `S(w) = (A + i w)^-1 D (A^T - i w)^-1`, the
//! stationary covariance (Lyapunov equation) and the vacuum-normalized
//! output quadrature spectra seen by homodyne detection.

use alloc::vec::Vec;

use nalgebra::{Matrix4, SMatrix, SVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{default_tolerance, steady_state_residual, SteadyState, SystemParams};

/// Indices into the output quadrature basis `(X_a, Y_a, X_b, Y_b)`.
pub const XA: usize = 0;
pub const YA: usize = 1;
pub const XB: usize = 2;
pub const YB: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuationSystem {
    pub drift: Matrix4<f64>,
    pub diffusion: Matrix4<f64>,
    pub params: SystemParams,
    pub ss: SteadyState,
}

/// `S(w)` in the `(d alpha, d alpha+, d beta, d beta+)` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralMatrix {
    pub omega: f64,
    pub values: Matrix4<Complex64>,
}

/// Output quadrature spectral (co)variances at one analysis frequency,
/// ordered `(X_a, Y_a, X_b, Y_b)`. Vacuum is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputSpectra {
    pub omega: f64,
    pub v: Matrix4<f64>,
}

impl OutputSpectra {
    pub fn variance(&self, q: usize) -> f64 {
        self.v[(q, q)]
    }

    pub fn covariance(&self, p: usize, q: usize) -> f64 {
        self.v[(p, q)]
    }

    /// Single-mode uncertainty products `(V(X_a) V(Y_a), V(X_b) V(Y_b))`.
    pub fn uncertainty_products(&self) -> (f64, f64) {
        (
            self.variance(XA) * self.variance(YA),
            self.variance(XB) * self.variance(YB),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub eigenvalues: [Complex64; 4],
    /// Smallest real part; the fixed point is stable iff this is positive.
    pub margin: f64,
    pub stable: bool,
}

pub fn build_fluctuation_system(params: &SystemParams, ss: &SteadyState) -> Result<FluctuationSystem> {
    params.validate()?;
    let residual = steady_state_residual(params, ss);
    let tolerance = default_tolerance(params.epsilon);
    if !(residual <= tolerance) {
        return Err(Error::ResidualTooLarge {
            residual,
            tolerance,
        });
    }
    let SystemParams {
        gamma_a,
        gamma_b,
        kappa,
        ..
    } = *params;
    let (a, b) = (ss.alpha_ss, ss.beta_ss);
    #[rustfmt::skip]
    let drift = Matrix4::new(
        gamma_a,    -kappa * b, -kappa * a, 0.0,
        -kappa * b, gamma_a,    0.0,        -kappa * a,
        kappa * a,  0.0,        gamma_b,    0.0,
        0.0,        kappa * a,  0.0,        gamma_b,
    );
    let diffusion = Matrix4::from_diagonal(&nalgebra::Vector4::new(kappa * b, kappa * b, 0.0, 0.0));
    Ok(FluctuationSystem {
        drift,
        diffusion,
        params: *params,
        ss: *ss,
    })
}

/// Solves the steady state with the default tolerance and linearizes around it.
pub fn linearize(params: &SystemParams) -> Result<FluctuationSystem> {
    let ss = crate::model::steady_state(params)?;
    build_fluctuation_system(params, &ss)
}

const SCHUR_MAX_ITER: usize = 10_000;

pub fn stability_eigenvalues(sys: &FluctuationSystem) -> Result<Stability> {
    let schur = Schur::try_new(sys.drift, f64::EPSILON, SCHUR_MAX_ITER).ok_or_else(|| {
        Error::Eigensolver {
            matrix: rows(&sys.drift),
        }
    })?;
    let ev = schur.complex_eigenvalues();
    let mut eigenvalues = [ev[0], ev[1], ev[2], ev[3]];
    eigenvalues.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    let margin = eigenvalues
        .iter()
        .map(|l| l.re)
        .fold(f64::INFINITY, f64::min);
    if !margin.is_finite() {
        return Err(Error::Eigensolver {
            matrix: rows(&sys.drift),
        });
    }
    Ok(Stability {
        eigenvalues,
        margin,
        stable: margin > 0.0,
    })
}

fn rows(m: &Matrix4<f64>) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = m[(i, j)];
        }
    }
    out
}

fn complexify(m: &Matrix4<f64>) -> Matrix4<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Evaluates `S(w)` with two LU solves: `X = (A + i w)^-1 D`, then
/// `S^T = (A - i w)^-1 X^T` since `(A^T - i w)^T = A - i w`.
pub fn intracavity_spectrum(sys: &FluctuationSystem, omega: f64) -> Result<SpectralMatrix> {
    let a = complexify(&sys.drift);
    let d = complexify(&sys.diffusion);
    let shift = Matrix4::from_diagonal_element(Complex64::new(0.0, omega));
    let singular = Error::Singular {
        context: "intracavity spectrum",
    };
    let x = (a + shift).lu().solve(&d).ok_or(singular.clone())?;
    let st = (a - shift).lu().solve(&x.transpose()).ok_or(singular)?;
    Ok(SpectralMatrix {
        omega,
        values: st.transpose(),
    })
}

/// Stationary covariance `C` with `A C + C A^T = D`, from the vectorized
/// 16x16 system `(I (x) A + A (x) I) vec(C) = vec(D)`.
pub fn lyapunov_covariance(sys: &FluctuationSystem) -> Result<Matrix4<f64>> {
    let a = &sys.drift;
    let mut k = SMatrix::<f64, 16, 16>::zeros();
    // vec is column-major: C[(i, j)] lives at i + 4 j.
    for i in 0..4 {
        for j in 0..4 {
            let row = i + 4 * j;
            for m in 0..4 {
                // (A C)_{ij} = sum_m A_{im} C_{mj}
                k[(row, m + 4 * j)] += a[(i, m)];
                // (C A^T)_{ij} = sum_m C_{im} A_{jm}
                k[(row, i + 4 * m)] += a[(j, m)];
            }
        }
    }
    let rhs = SVector::<f64, 16>::from_iterator(sys.diffusion.iter().copied());
    let sol = k.lu().solve(&rhs).ok_or(Error::Singular {
        context: "Lyapunov equation (marginal stability)",
    })?;
    Ok(Matrix4::from_iterator(sol.iter().copied()))
}

/// Leading-order shift of the ensemble means away from the classical
/// steady state caused by the quadratic terms of the drift acting on the
/// stationary moments `cov`: solves `A dmu = (k C_{a+ b}, k C_{a b+}, -k/2 C_{aa}, -k/2 C_{a+a+})`.
pub fn mean_shift(sys: &FluctuationSystem, cov: &Matrix4<f64>) -> Result<nalgebra::Vector4<f64>> {
    let k = sys.params.kappa;
    let source = nalgebra::Vector4::new(
        k * cov[(1, 2)],
        k * cov[(0, 3)],
        -0.5 * k * cov[(0, 0)],
        -0.5 * k * cov[(1, 1)],
    );
    sys.drift.lu().solve(&source).ok_or(Error::Singular {
        context: "mean shift",
    })
}

/// Rows map `(d alpha, d alpha+, d beta, d beta+)` onto `(X_a, Y_a, X_b, Y_b)`
/// with `X = a + a^dag`, `Y = -i (a - a^dag)`.
pub fn quadrature_map() -> Matrix4<Complex64> {
    let o = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    #[rustfmt::skip]
    let q = Matrix4::new(
        one, one, o,   o,
        -i,  i,   o,   o,
        o,   o,   one, one,
        o,   o,   -i,  i,
    );
    q
}

const IMAGINARY_RESIDUE_LIMIT: f64 = 1e-10;

/// Input-output transform to measurable spectra:
/// `v = 1 + 2 G^1/2 Re[sym(Q S Q^T)] G^1/2`, `G = diag(ga, ga, gb, gb)`.
///
/// The positive-P variables enter quadratures linearly without conjugation,
/// so the quadrature spectrum is `Q S Q^T`. For a real steady state this
/// matrix is Hermitian; its symmetric part is real up to round-off, which
/// is asserted.
pub fn output_quadrature_spectra(sys: &FluctuationSystem, s: &SpectralMatrix) -> Result<OutputSpectra> {
    let q = quadrature_map();
    let m = q * s.values * q.transpose();
    let sym = (m + m.transpose()).map(|z| z * 0.5);
    let scale = sym.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let residue = sym.iter().map(|z| libm::fabs(z.im)).fold(0.0, f64::max);
    if residue > IMAGINARY_RESIDUE_LIMIT * scale {
        return Err(Error::ImaginaryResidue {
            residue: residue / scale,
        });
    }
    let p = &sys.params;
    let root = [
        libm::sqrt(p.gamma_a),
        libm::sqrt(p.gamma_a),
        libm::sqrt(p.gamma_b),
        libm::sqrt(p.gamma_b),
    ];
    let v = Matrix4::from_fn(|i, j| {
        let vacuum = if i == j { 1.0 } else { 0.0 };
        vacuum + 2.0 * root[i] * root[j] * sym[(i, j)].re
    });
    Ok(OutputSpectra { omega: s.omega, v })
}

/// Output spectra at one frequency, straight from the fluctuation system.
pub fn output_spectra_at(sys: &FluctuationSystem, omega: f64) -> Result<OutputSpectra> {
    let s = intracavity_spectrum(sys, omega)?;
    output_quadrature_spectra(sys, &s)
}

/// `(1 / 2 pi) \int S(w) dw`, split into the adaptively integrated window
/// `[-half_width, half_width]` and the analytic contribution of the tails,
/// where `S(w) ~ D / w^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralIntegral {
    pub window: Matrix4<f64>,
    pub tail: Matrix4<f64>,
    pub evaluations: usize,
}

impl SpectralIntegral {
    pub fn total(&self) -> Matrix4<f64> {
        self.window + self.tail
    }
}

const MAX_SIMPSON_DEPTH: u32 = 40;

/// Adaptive Simpson quadrature of `Re S(w)`. `Re S` is even in `w`
/// (S(-w) = S(w)^T = conj S(w)) and `Im S` is odd, so only `[0, W]` is
/// integrated.
pub fn spectral_integral(sys: &FluctuationSystem, half_width: f64, rel_tol: f64) -> Result<SpectralIntegral> {
    if !(half_width > 0.0) || !(rel_tol > 0.0) {
        return Err(Error::InvalidParameter {
            field: "half_width/rel_tol",
            reason: "must be strictly positive",
        });
    }
    let mut evaluations = 0usize;
    let mut eval = |w: f64| -> Result<Matrix4<f64>> {
        evaluations += 1;
        Ok(intracavity_spectrum(sys, w)?.values.map(|z| z.re))
    };
    let max_abs = |m: &Matrix4<f64>| m.iter().map(|x| libm::fabs(*x)).fold(0.0, f64::max);

    struct Panel {
        a: f64,
        b: f64,
        fa: Matrix4<f64>,
        fm: Matrix4<f64>,
        fb: Matrix4<f64>,
        whole: Matrix4<f64>,
        depth: u32,
    }
    let simpson = |a: f64, b: f64, fa: &Matrix4<f64>, fm: &Matrix4<f64>, fb: &Matrix4<f64>| {
        (fa + fm * 4.0 + fb) * ((b - a) / 6.0)
    };

    // Seed with uniform panels so narrow resonances are not skipped.
    const SEED_PANELS: usize = 64;
    let mut stack = Vec::with_capacity(SEED_PANELS);
    let mut coarse = Matrix4::zeros();
    let h = half_width / SEED_PANELS as f64;
    let mut f_left = eval(0.0)?;
    for k in 0..SEED_PANELS {
        let a = k as f64 * h;
        let b = a + h;
        let fm = eval(0.5 * (a + b))?;
        let fb = eval(b)?;
        let whole = simpson(a, b, &f_left, &fm, &fb);
        coarse += whole;
        stack.push(Panel {
            a,
            b,
            fa: f_left,
            fm,
            fb,
            whole,
            depth: 0,
        });
        f_left = fb;
    }
    let tol = rel_tol * max_abs(&coarse).max(f64::MIN_POSITIVE) / SEED_PANELS as f64;

    let mut total = Matrix4::zeros();
    while let Some(p) = stack.pop() {
        let m = 0.5 * (p.a + p.b);
        let flm = eval(0.5 * (p.a + m))?;
        let frm = eval(0.5 * (m + p.b))?;
        let left = simpson(p.a, m, &p.fa, &flm, &p.fm);
        let right = simpson(m, p.b, &p.fm, &frm, &p.fb);
        let refined = left + right;
        let err = max_abs(&(refined - p.whole));
        let local_tol = tol * (p.b - p.a) / h;
        if err <= 15.0 * local_tol || p.depth >= MAX_SIMPSON_DEPTH {
            total += refined + (refined - p.whole) / 15.0;
        } else {
            stack.push(Panel {
                a: p.a,
                b: m,
                fa: p.fa,
                fm: flm,
                fb: p.fm,
                whole: left,
                depth: p.depth + 1,
            });
            stack.push(Panel {
                a: m,
                b: p.b,
                fa: p.fm,
                fm: frm,
                fb: p.fb,
                whole: right,
                depth: p.depth + 1,
            });
        }
    }

    let two_pi = 2.0 * core::f64::consts::PI;
    // Both half-lines of D / w^2 beyond the window give 2 D / W.
    let tail = sys.diffusion * (2.0 / half_width / two_pi);
    Ok(SpectralIntegral {
        window: total * (2.0 / two_pi),
        tail,
        evaluations,
    })
}

/// Evenly spaced grid of `count` points from `min` to `max` inclusive.
pub fn linspace(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 || !min.is_finite() || !max.is_finite() {
        return Err(Error::InvalidGrid {
            name: "omega",
            reason: "needs finite bounds and at least one point",
        });
    }
    if count == 1 {
        return Ok(alloc::vec![min]);
    }
    if !(max > min) {
        return Err(Error::InvalidGrid {
            name: "omega",
            reason: "max must exceed min",
        });
    }
    let span = max - min;
    let last = (count - 1) as f64;
    Ok((0..count).map(|k| min + span * k as f64 / last).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::critical_pump;
    use approx::assert_relative_eq;

    fn equal_damping() -> FluctuationSystem {
        linearize(&SystemParams::with_pump_fraction(1.0, 1.0, 0.01, 0.6).unwrap()).unwrap()
    }

    fn slow_harmonic() -> FluctuationSystem {
        linearize(&SystemParams::with_pump_fraction(1.0, 0.25, 0.01, 0.6).unwrap()).unwrap()
    }

    fn vacuum() -> FluctuationSystem {
        linearize(&SystemParams::new(1.0, 0.5, 0.01, 0.0).unwrap()).unwrap()
    }

    fn max_abs_c(m: &Matrix4<Complex64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_pump_decouples() {
        let sys = vacuum();
        assert_eq!(sys.drift, Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, 0.5, 0.5)));
        assert_eq!(sys.diffusion, Matrix4::zeros());
        let st = stability_eigenvalues(&sys).unwrap();
        assert!(st.stable);
        let mut re: Vec<f64> = st.eigenvalues.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert_eq!(re, [0.5, 0.5, 1.0, 1.0]);
        for w in [-3.0, 0.0, 7.5] {
            let s = intracavity_spectrum(&sys, w).unwrap();
            assert_eq!(max_abs_c(&s.values), 0.0);
            let v = output_quadrature_spectra(&sys, &s).unwrap();
            assert_eq!(v.v, Matrix4::identity());
        }
        assert_eq!(lyapunov_covariance(&sys).unwrap(), Matrix4::zeros());
    }

    #[test]
    fn equal_damping_drift_entries() {
        let sys = equal_damping();
        assert!((sys.drift[(0, 1)] - 1.26410).abs() < 1e-4);
        assert!((sys.drift[(2, 0)] - 1.59003).abs() < 1e-4);
        assert!((sys.diffusion[(0, 0)] + 1.26410).abs() < 1e-4);
        assert_eq!(sys.drift[(0, 2)], -sys.drift[(2, 0)]);
    }

    #[test]
    fn drift_invariant_under_conjugation_swap() {
        let sys = slow_harmonic();
        let perm = [1usize, 0, 3, 2];
        let swapped = Matrix4::from_fn(|i, j| sys.drift[(perm[i], perm[j])]);
        assert_eq!(swapped, sys.drift);
    }

    #[test]
    fn rejects_unsolved_steady_state() {
        let p = SystemParams::new(1.0, 1.0, 0.01, 360.0).unwrap();
        let bogus = SteadyState {
            alpha_ss: 100.0,
            beta_ss: -50.0,
            residual: 0.0,
        };
        assert!(matches!(
            build_fluctuation_system(&p, &bogus),
            Err(Error::ResidualTooLarge { .. })
        ));
    }

    #[test]
    fn operating_points_are_stable_and_above_threshold_is_not() {
        assert!(stability_eigenvalues(&equal_damping()).unwrap().stable);
        assert!(stability_eigenvalues(&slow_harmonic()).unwrap().stable);
        for gb in [1.0, 0.25] {
            let p = SystemParams::with_pump_fraction(1.0, gb, 0.01, 1.001).unwrap();
            assert!(!stability_eigenvalues(&linearize(&p).unwrap()).unwrap().stable);
        }
    }

    #[test]
    fn spectrum_decays_like_inverse_square() {
        let sys = equal_damping();
        let d = sys.diffusion[(0, 0)].abs();
        for w in [1e3, 2e3] {
            let s = intracavity_spectrum(&sys, w).unwrap();
            assert_relative_eq!(max_abs_c(&s.values) * w * w, d, max_relative = 5e-3);
        }
    }

    #[test]
    fn spectrum_is_transposed_under_frequency_reversal() {
        let sys = slow_harmonic();
        for w in [0.3, 1.7, 12.0] {
            let plus = intracavity_spectrum(&sys, w).unwrap().values;
            let minus = intracavity_spectrum(&sys, -w).unwrap().values;
            let scale = max_abs_c(&plus);
            assert!(max_abs_c(&(minus - plus.transpose())) <= 1e-12 * scale);
            let vp = output_spectra_at(&sys, w).unwrap().v;
            let vm = output_spectra_at(&sys, -w).unwrap().v;
            assert!((vp - vm).amax() <= 1e-12);
        }
    }

    #[test]
    fn lyapunov_solution_satisfies_equation() {
        for sys in [equal_damping(), slow_harmonic()] {
            let c = lyapunov_covariance(&sys).unwrap();
            let r = sys.drift * c + c * sys.drift.transpose() - sys.diffusion;
            assert!(r.amax() < 1e-13);
            assert!((c - c.transpose()).amax() < 1e-13);
        }
    }

    #[test]
    fn spectral_integral_matches_lyapunov() {
        for sys in [equal_damping(), slow_harmonic()] {
            let c = lyapunov_covariance(&sys).unwrap();
            let integral = spectral_integral(&sys, 200.0, 1e-9).unwrap().total();
            for (x, y) in integral.iter().zip(c.iter()) {
                assert!((x - y).abs() <= 1e-4 * y.abs(), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn output_spectra_are_symmetric_and_above_heisenberg_floor() {
        for sys in [equal_damping(), slow_harmonic()] {
            for w in linspace(-20.0, 20.0, 201).unwrap() {
                let v = output_spectra_at(&sys, w).unwrap();
                assert_eq!(v.v, v.v.transpose());
                let (pa, pb) = v.uncertainty_products();
                assert!(pa >= 1.0 && pb >= 1.0, "w={w} {pa} {pb}");
                for q in 0..4 {
                    assert!(v.variance(q) > 0.0);
                }
            }
        }
    }

    #[test]
    fn output_approaches_vacuum_at_high_frequency() {
        let v = output_spectra_at(&equal_damping(), 1e4).unwrap();
        assert!((v.v - Matrix4::identity()).amax() < 1e-6);
    }

    #[test]
    fn critical_pump_brackets_eigenvalue_crossing() {
        for gb in [0.1, 0.25, 0.7, 1.0, 2.0] {
            let base = SystemParams::new(1.0, gb, 0.01, 0.0).unwrap();
            let ec = critical_pump(&base);
            let margin = |f: f64| {
                let p = SystemParams::new(1.0, gb, 0.01, ec * f).unwrap();
                stability_eigenvalues(&linearize(&p).unwrap()).unwrap().margin
            };
            assert!(margin(1.0 - 1e-6) > 0.0);
            assert!(margin(1.0 + 1e-6) < 0.0);
        }
    }

    #[test]
    fn linspace_endpoints() {
        let g = linspace(-20.0, 20.0, 1001).unwrap();
        assert_eq!(g.len(), 1001);
        assert_eq!(g[0], -20.0);
        assert_eq!(g[500], 0.0);
        assert_eq!(g[1000], 20.0);
        assert_eq!(linspace(0.0, 0.0, 1).unwrap(), [0.0]);
        assert!(linspace(1.0, 0.0, 3).is_err());
        assert!(linspace(0.0, 1.0, 0).is_err());
    }
}

//! Full nonlinear positive-P integration of the SHG Langevin equations
//!
//! ```text
//! d alpha  = (eps - ga alpha  + k alpha+ beta ) dt + sqrt(k beta ) dW1
//! d alpha+ = (eps - ga alpha+ + k alpha beta+) dt + sqrt(k beta+) dW2
//! d beta   = (-gb beta  - k/2 alpha^2 ) dt
//! d beta+  = (-gb beta+ - k/2 alpha+^2) dt
//! ```
//!
//! used as an independent check on the linearized results: ensemble means
//! against the classical steady state, equal-time moments against the
//! Lyapunov covariance and windowed Fourier transforms against `S(w)`.
//!
//! The noise only enters the fundamental and its amplitude depends on the
//! harmonic, which carries no noise, so Ito and Stratonovich forms agree and
//! the midpoint scheme needs no drift correction.
//!
//! Each trajectory draws from its own ChaCha8 stream (`stream = index`), and
//! [`reduce_ensemble`] folds trajectories in index order, so results are
//! bitwise reproducible for a given seed however trajectories are scheduled.

use alloc::boxed::Box;
use alloc::vec::Vec;

use nalgebra::Matrix4;
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linear::{self, FluctuationSystem};
use crate::model::{self, critical_pump, SteadyState, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationConfig {
    pub dt: f64,
    pub t_transient: f64,
    pub t_sample: f64,
    pub n_trajectories: usize,
    pub seed: u64,
    pub divergence_radius: f64,
    /// Moments and transforms are sampled every `sample_stride` steps.
    pub sample_stride: usize,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_transient: 20.0,
            t_sample: 200.0,
            n_trajectories: 10_000,
            seed: 0,
            divergence_radius: 1e6,
            sample_stride: 10,
        }
    }
}

impl IntegrationConfig {
    pub fn validate(&self, params: &SystemParams, ss: &SteadyState) -> Result<()> {
        let invalid = |field, reason| Err(Error::InvalidParameter { field, reason });
        let max_rate = params.gamma_a.max(params.gamma_b);
        if !(self.dt > 0.0) || self.dt > 0.01 / max_rate {
            return invalid("dt", "must be positive and at most 0.01 / max(gamma_a, gamma_b)");
        }
        if !(self.t_transient >= 0.0) || !self.t_transient.is_finite() {
            return invalid("t_transient", "must be finite and non-negative");
        }
        if !(self.t_sample > 0.0) || !self.t_sample.is_finite() {
            return invalid("t_sample", "must be finite and positive");
        }
        if self.n_trajectories == 0 {
            return invalid("n_trajectories", "must be at least 1");
        }
        if self.sample_stride == 0 {
            return invalid("sample_stride", "must be at least 1");
        }
        if self.sample_count() < 2 {
            return invalid("t_sample", "must cover at least two samples");
        }
        if !(self.divergence_radius > 10.0 * libm::fabs(ss.alpha_ss)) {
            return invalid("divergence_radius", "must exceed 10 |alpha_ss|");
        }
        Ok(())
    }

    fn steps(&self, t: f64) -> usize {
        libm::round(t / self.dt) as usize
    }

    pub fn transient_steps(&self) -> usize {
        self.steps(self.t_transient)
    }

    pub fn sample_count(&self) -> usize {
        self.steps(self.t_sample) / self.sample_stride.max(1)
    }

    pub fn sample_interval(&self) -> f64 {
        self.dt * self.sample_stride as f64
    }

    /// Length of the sampled record, `sample_count * sample_interval`.
    pub fn window(&self) -> f64 {
        self.sample_count() as f64 * self.sample_interval()
    }
}

/// The per-trajectory random stream for `index` under master `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Principal square root; the cut lies on the negative real axis.
#[inline]
fn principal_sqrt(z: Complex64) -> Complex64 {
    let r = libm::sqrt(z.re * z.re + z.im * z.im);
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let t = libm::sqrt(0.5 * (r + libm::fabs(z.re)));
    if z.re >= 0.0 {
        Complex64::new(t, z.im / (2.0 * t))
    } else {
        Complex64::new(libm::fabs(z.im) / (2.0 * t), libm::copysign(t, z.im))
    }
}

type State = [Complex64; 4];

#[derive(Debug, Clone, Copy)]
struct Equations {
    eps: Complex64,
    gamma_a: f64,
    gamma_b: f64,
    kappa: f64,
}

impl Equations {
    fn new(p: &SystemParams) -> Self {
        Self {
            eps: Complex64::new(p.epsilon, 0.0),
            gamma_a: p.gamma_a,
            gamma_b: p.gamma_b,
            kappa: p.kappa,
        }
    }

    #[inline]
    fn increment(&self, x: &State, dt: f64, dw: [f64; 2]) -> State {
        let [a, ap, b, bp] = *x;
        let k = self.kappa;
        [
            (self.eps - a * self.gamma_a + ap * b * k) * dt + principal_sqrt(b * k) * dw[0],
            (self.eps - ap * self.gamma_a + a * bp * k) * dt + principal_sqrt(bp * k) * dw[1],
            (-b * self.gamma_b - a * a * (0.5 * k)) * dt,
            (-bp * self.gamma_b - ap * ap * (0.5 * k)) * dt,
        ]
    }
}

const MIDPOINT_ITERATIONS: usize = 3;

/// One semi-implicit midpoint step: three fixed-point sweeps for the
/// midpoint, then extrapolation to the end of the step.
#[inline]
fn midpoint_step(eq: &Equations, x: &mut State, dt: f64, dw: [f64; 2]) {
    let mut mid = *x;
    for _ in 0..MIDPOINT_ITERATIONS {
        let inc = eq.increment(&mid, dt, dw);
        for i in 0..4 {
            mid[i] = x[i] + inc[i] * 0.5;
        }
    }
    for i in 0..4 {
        x[i] = mid[i] * 2.0 - x[i];
    }
}

/// Time averages of one trajectory over the sampling window, taken on the
/// deviations `y = x - x_ss` from the classical steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    pub diverged: bool,
    /// Time average of `y_i`.
    pub mean: [Complex64; 4],
    /// Time average of `y_i y_j`.
    pub second: [[Complex64; 4]; 4],
    /// Per analysis frequency: `sum_k w_k y(t_k) e^{-i w t_k} h` followed by
    /// `sum_k w_k y(t_k) e^{+i w t_k} h`, four components each, with the
    /// Hann taper `w_k`.
    pub transforms: Vec<[Complex64; 8]>,
}

impl TrajectorySummary {
    fn discarded(n_omegas: usize) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self {
            diverged: true,
            mean: [zero; 4],
            second: [[zero; 4]; 4],
            transforms: alloc::vec![[zero; 8]; n_omegas],
        }
    }
}

/// Hann taper on `n` samples. Tapering removes the `O(1/T)` bias that a
/// rectangular window leaves in the periodogram.
#[inline]
fn hann(k: usize, n: usize) -> f64 {
    let s = libm::sin(core::f64::consts::PI * (k as f64 + 0.5) / n as f64);
    s * s
}

/// `h sum_k w_k^2`: the tapered periodogram divided by this is an estimate
/// of `S(w)`.
pub fn taper_norm(cfg: &IntegrationConfig) -> f64 {
    let n = cfg.sample_count();
    let sum_sq: f64 = (0..n).map(|k| hann(k, n) * hann(k, n)).sum();
    cfg.sample_interval() * sum_sq
}

fn steady_vector(ss: &SteadyState) -> State {
    let a = Complex64::new(ss.alpha_ss, 0.0);
    let b = Complex64::new(ss.beta_ss, 0.0);
    [a, a, b, b]
}

/// Integrates one trajectory from the classical steady state with the
/// supplied random source.
pub fn run_trajectory<R: RngCore>(
    params: &SystemParams,
    cfg: &IntegrationConfig,
    ss: &SteadyState,
    omegas: &[f64],
    rng: &mut R,
) -> TrajectorySummary {
    let eq = Equations::new(params);
    let center = steady_vector(ss);
    let mut x = center;
    let sqrt_dt = libm::sqrt(cfg.dt);
    let radius = cfg.divergence_radius;
    let escaped = |x: &State| x.iter().any(|z| !(z.norm_sqr() <= radius * radius));

    let step = |x: &mut State, rng: &mut R| {
        let n1: f64 = StandardNormal.sample(rng);
        let n2: f64 = StandardNormal.sample(rng);
        midpoint_step(&eq, x, cfg.dt, [n1 * sqrt_dt, n2 * sqrt_dt]);
    };

    for _ in 0..cfg.transient_steps() {
        step(&mut x, rng);
        if escaped(&x) {
            return TrajectorySummary::discarded(omegas.len());
        }
    }

    let zero = Complex64::new(0.0, 0.0);
    let mut sum1 = [zero; 4];
    let mut sum2 = [[zero; 4]; 4];
    let mut transforms = alloc::vec![[zero; 8]; omegas.len()];
    let h = cfg.sample_interval();
    let n = cfg.sample_count();
    for k in 0..n {
        let y = [x[0] - center[0], x[1] - center[1], x[2] - center[2], x[3] - center[3]];
        for i in 0..4 {
            sum1[i] += y[i];
            for j in 0..4 {
                sum2[i][j] += y[i] * y[j];
            }
        }
        let t = k as f64 * h;
        let weight = hann(k, n) * h;
        for (acc, &w) in transforms.iter_mut().zip(omegas) {
            let (s, c) = libm::sincos(w * t);
            let minus = Complex64::new(c * weight, -s * weight);
            let plus = Complex64::new(c * weight, s * weight);
            for i in 0..4 {
                acc[i] += y[i] * minus;
                acc[4 + i] += y[i] * plus;
            }
        }
        for _ in 0..cfg.sample_stride {
            step(&mut x, rng);
        }
        if escaped(&x) {
            return TrajectorySummary::discarded(omegas.len());
        }
    }

    let inv = 1.0 / n as f64;
    TrajectorySummary {
        diverged: false,
        mean: sum1.map(|z| z * inv),
        second: sum2.map(|row| row.map(|z| z * inv)),
        transforms,
    }
}

/// Trajectory `index` of the ensemble defined by `cfg`.
pub fn simulate_trajectory(
    params: &SystemParams,
    cfg: &IntegrationConfig,
    ss: &SteadyState,
    omegas: &[f64],
    index: u64,
) -> TrajectorySummary {
    let mut rng = trajectory_rng(cfg.seed, index);
    run_trajectory(params, cfg, ss, omegas, &mut rng)
}

/// A complex ensemble estimate with separate standard errors for its real
/// and imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexEstimate {
    pub value: Complex64,
    pub se_re: f64,
    pub se_im: f64,
}

impl ComplexEstimate {
    /// True when both parts lie within `k` standard errors of `target`.
    pub fn consistent_with(&self, target: Complex64, k: f64) -> bool {
        libm::fabs(self.value.re - target.re) <= k * self.se_re
            && libm::fabs(self.value.im - target.im) <= k * self.se_im
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub mean_alpha: Complex64,
    pub mean_beta: Complex64,
    /// Ensemble means of `(alpha, alpha+, beta, beta+)` with errors.
    pub means: [ComplexEstimate; 4],
    /// Real part of the steady-state moments `<dX_i dX_j>`.
    pub covariance: Matrix4<f64>,
    pub standard_errors: Matrix4<f64>,
    /// Imaginary part of the same moments; zero in the ensemble limit.
    pub covariance_imag: Matrix4<f64>,
    /// Mean of `alpha+ - conj(alpha)`.
    pub conjugacy_defect: ComplexEstimate,
    pub n_kept: usize,
    pub n_discarded: usize,
    pub above_threshold: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate {
    pub omega: f64,
    pub values: Matrix4<Complex64>,
    pub se_re: Matrix4<f64>,
    pub se_im: Matrix4<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRun {
    pub stats: EnsembleStats,
    pub spectra: Vec<SpectrumEstimate>,
}

/// Number of contiguous trajectory blocks for spectral error bars.
pub const SPECTRUM_BLOCKS: usize = 100;

const MAX_DISCARD_FRACTION: f64 = 0.05;

struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn new() -> Self {
        Self { n: 0, sum: 0.0, sum_sq: 0.0 }
    }

    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Standard error of the mean.
    fn standard_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.mean();
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        libm::sqrt(var / n)
    }
}

fn complex_estimate(values: impl Iterator<Item = Complex64>) -> (ComplexEstimate, Moments, Moments) {
    let mut re = Moments::new();
    let mut im = Moments::new();
    for z in values {
        re.push(z.re);
        im.push(z.im);
    }
    let est = ComplexEstimate {
        value: Complex64::new(re.mean(), im.mean()),
        se_re: re.standard_error(),
        se_im: im.standard_error(),
    };
    (est, re, im)
}

/// Folds trajectory summaries, in order, into ensemble statistics and
/// spectral estimates for `omegas`.
///
/// The covariance of each kept trajectory is taken about the ensemble mean,
/// and its standard error is the spread of those per-trajectory values.
/// Spectra use the centred tapered cross-products `(F_i - <F_i>)(G_j - <G_j>) / U`
/// with `U` from [`taper_norm`],
/// with errors from [`SPECTRUM_BLOCKS`] contiguous blocks.
pub fn reduce_ensemble(
    params: &SystemParams,
    cfg: &IntegrationConfig,
    ss: &SteadyState,
    omegas: &[f64],
    summaries: &[TrajectorySummary],
) -> Result<EnsembleRun> {
    let total = summaries.len();
    let kept: Vec<&TrajectorySummary> = summaries.iter().filter(|s| !s.diverged).collect();
    let n_kept = kept.len();
    let n_discarded = total - n_kept;
    let too_many = n_discarded as f64 > MAX_DISCARD_FRACTION * total as f64;
    if n_kept == 0 {
        return Err(Error::DivergenceRate {
            discarded: n_discarded,
            total,
            partial: None,
        });
    }

    let center = steady_vector(ss);
    let mut mu = [Complex64::new(0.0, 0.0); 4];
    let mut means = [ComplexEstimate {
        value: Complex64::new(0.0, 0.0),
        se_re: 0.0,
        se_im: 0.0,
    }; 4];
    for i in 0..4 {
        let (est, _, _) = complex_estimate(kept.iter().map(|s| s.mean[i]));
        mu[i] = est.value;
        means[i] = ComplexEstimate {
            value: est.value + center[i],
            ..est
        };
    }

    let mut covariance = Matrix4::zeros();
    let mut covariance_imag = Matrix4::zeros();
    let mut standard_errors = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            let per_traj = kept.iter().map(|s| {
                s.second[i][j] - mu[i] * s.mean[j] - s.mean[i] * mu[j] + mu[i] * mu[j]
            });
            let (est, _, _) = complex_estimate(per_traj);
            covariance[(i, j)] = est.value.re;
            covariance_imag[(i, j)] = est.value.im;
            standard_errors[(i, j)] = est.se_re;
        }
    }

    let (conjugacy_defect, _, _) = complex_estimate(kept.iter().map(|s| s.mean[1] - s.mean[0].conj()));

    let stats = EnsembleStats {
        mean_alpha: means[0].value,
        mean_beta: means[2].value,
        means,
        covariance,
        standard_errors,
        covariance_imag,
        conjugacy_defect,
        n_kept,
        n_discarded,
        above_threshold: params.epsilon >= critical_pump(params),
    };

    let spectra = spectral_estimates(cfg, omegas, &kept);

    if too_many {
        return Err(Error::DivergenceRate {
            discarded: n_discarded,
            total,
            partial: Some(Box::new(stats)),
        });
    }
    Ok(EnsembleRun { stats, spectra })
}

fn spectral_estimates(cfg: &IntegrationConfig, omegas: &[f64], kept: &[&TrajectorySummary]) -> Vec<SpectrumEstimate> {
    let n = kept.len();
    let norm = taper_norm(cfg);
    let blocks = SPECTRUM_BLOCKS.min(n).max(1);
    let bessel = if n > 1 { n as f64 / (n as f64 - 1.0) } else { 1.0 };
    let zero = Complex64::new(0.0, 0.0);

    omegas
        .iter()
        .enumerate()
        .map(|(w_idx, &omega)| {
            let mut bar = [zero; 8];
            for s in kept {
                for (b, t) in bar.iter_mut().zip(s.transforms[w_idx].iter()) {
                    *b += *t;
                }
            }
            let bar = bar.map(|z| z / n as f64);

            let mut block_sums = alloc::vec![Matrix4::<Complex64>::zeros(); blocks];
            let mut block_counts = alloc::vec![0usize; blocks];
            for (k, s) in kept.iter().enumerate() {
                let blk = k * blocks / n;
                let f = &s.transforms[w_idx];
                let m = Matrix4::from_fn(|i, j| (f[i] - bar[i]) * (f[4 + j] - bar[4 + j]) / norm);
                block_sums[blk] += m;
                block_counts[blk] += 1;
            }
            let values = block_sums.iter().fold(Matrix4::zeros(), |acc, m| acc + m) * Complex64::new(bessel / n as f64, 0.0);

            let mut se_re = Matrix4::zeros();
            let mut se_im = Matrix4::zeros();
            if blocks > 1 {
                for i in 0..4 {
                    for j in 0..4 {
                        let mut re = Moments::new();
                        let mut im = Moments::new();
                        for (sum, &count) in block_sums.iter().zip(&block_counts) {
                            let z = sum[(i, j)] / count as f64;
                            re.push(z.re);
                            im.push(z.im);
                        }
                        se_re[(i, j)] = re.standard_error();
                        se_im[(i, j)] = im.standard_error();
                    }
                }
            }
            SpectrumEstimate {
                omega,
                values,
                se_re,
                se_im,
            }
        })
        .collect()
}

/// Checks inputs shared by the ensemble entry points and returns the
/// classical steady state used as the starting point.
pub fn prepare(params: &SystemParams, cfg: &IntegrationConfig) -> Result<SteadyState> {
    params.validate()?;
    let ss = model::steady_state(params)?;
    cfg.validate(params, &ss)?;
    Ok(ss)
}

/// Rejects spectral estimation when the sampling window is shorter than
/// 50 correlation times `1 / min Re(lambda)` of the linearized drift.
pub fn check_spectral_window(sys: &FluctuationSystem, cfg: &IntegrationConfig) -> Result<()> {
    let stability = linear::stability_eigenvalues(sys)?;
    if !stability.stable {
        return Err(Error::Unstable {
            min_real_part: stability.margin,
        });
    }
    let required = 50.0 / stability.margin;
    if cfg.window() < required {
        return Err(Error::WindowTooShort {
            window: cfg.window(),
            required,
        });
    }
    Ok(())
}

/// Serial ensemble with spectral estimates at `omegas`.
pub fn run_ensemble(params: &SystemParams, cfg: &IntegrationConfig, omegas: &[f64]) -> Result<EnsembleRun> {
    let ss = prepare(params, cfg)?;
    if !omegas.is_empty() {
        check_spectral_window(&linear::build_fluctuation_system(params, &ss)?, cfg)?;
    }
    let summaries: Vec<TrajectorySummary> = (0..cfg.n_trajectories as u64)
        .map(|k| simulate_trajectory(params, cfg, &ss, omegas, k))
        .collect();
    reduce_ensemble(params, cfg, &ss, omegas, &summaries)
}

pub fn integrate_ensemble(params: &SystemParams, cfg: &IntegrationConfig) -> Result<EnsembleStats> {
    run_ensemble(params, cfg, &[]).map(|run| run.stats)
}

pub fn stochastic_spectrum(params: &SystemParams, cfg: &IntegrationConfig, omegas: &[f64]) -> Result<Vec<SpectrumEstimate>> {
    if omegas.is_empty() {
        return Err(Error::InvalidGrid {
            name: "omega",
            reason: "must not be empty",
        });
    }
    run_ensemble(params, cfg, omegas).map(|run| run.spectra)
}

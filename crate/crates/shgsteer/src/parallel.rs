//! Rayon drivers over the pure functions in `shgsteer-core`.
//!
//! Every driver computes independent items in parallel, collects them in
//! input order and then reduces serially, so results are bitwise equal to
//! the serial core routines.

use rayon::prelude::*;
use shgsteer_core::steering::{self, AsymmetryCell, SteeringScan};
use shgsteer_core::stochastic::{self, EnsembleRun, IntegrationConfig, TrajectorySummary};
use shgsteer_core::{linear, Result, SystemParams};

pub fn frequency_scan(params: &SystemParams, omegas: &[f64]) -> Result<SteeringScan> {
    steering::validate_omegas(omegas)?;
    let sys = steering::stable_system(params)?;
    let points = omegas
        .par_iter()
        .map(|&w| steering::steering_point(&sys, w))
        .collect::<Result<Vec<_>>>()?;
    Ok(SteeringScan {
        params: *params,
        omegas: omegas.to_vec(),
        points,
    })
}

pub fn asymmetry_map(
    gamma_a: f64,
    kappa: f64,
    gamma_ratios: &[f64],
    pump_fractions: &[f64],
    omegas: &[f64],
) -> Result<Vec<AsymmetryCell>> {
    steering::validate_map_grids(gamma_ratios, pump_fractions, omegas)?;
    let cells: Vec<(f64, f64)> = gamma_ratios
        .iter()
        .flat_map(|&r| pump_fractions.iter().map(move |&f| (r, f)))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(r, f)| steering::asymmetry_cell(gamma_a, kappa, r, f, omegas))
        .collect())
}

/// Parallel counterpart of [`stochastic::run_ensemble`].
pub fn run_ensemble(params: &SystemParams, cfg: &IntegrationConfig, omegas: &[f64]) -> Result<EnsembleRun> {
    let ss = stochastic::prepare(params, cfg)?;
    if !omegas.is_empty() {
        stochastic::check_spectral_window(&linear::build_fluctuation_system(params, &ss)?, cfg)?;
    }
    let summaries: Vec<TrajectorySummary> = (0..cfg.n_trajectories as u64)
        .into_par_iter()
        .map(|k| stochastic::simulate_trajectory(params, cfg, &ss, omegas, k))
        .collect();
    stochastic::reduce_ensemble(params, cfg, &ss, omegas, &summaries)
}

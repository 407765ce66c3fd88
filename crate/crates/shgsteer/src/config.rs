//! Run configuration: built-in defaults, an optional JSON file, then
//! command-line flags, in increasing precedence. The resolved form is
//! embedded in every JSON output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shgsteer_core::stochastic::IntegrationConfig;
use shgsteer_core::{linear, steering, SystemParams};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// How the pump amplitude was specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pump {
    Fraction(f64),
    Epsilon(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticConfig {
    pub dt: f64,
    pub t_transient: f64,
    pub t_sample: f64,
    pub n_trajectories: usize,
    pub seed: u64,
    pub divergence_radius: f64,
    pub sample_stride: usize,
}

impl Default for StochasticConfig {
    fn default() -> Self {
        let d = IntegrationConfig::default();
        Self {
            dt: d.dt,
            t_transient: d.t_transient,
            t_sample: d.t_sample,
            n_trajectories: d.n_trajectories,
            seed: d.seed,
            divergence_radius: d.divergence_radius,
            sample_stride: d.sample_stride,
        }
    }
}

impl StochasticConfig {
    pub fn integration(&self) -> IntegrationConfig {
        IntegrationConfig {
            dt: self.dt,
            t_transient: self.t_transient,
            t_sample: self.t_sample,
            n_trajectories: self.n_trajectories,
            seed: self.seed,
            divergence_radius: self.divergence_radius,
            sample_stride: self.sample_stride,
        }
    }
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub gamma_a: f64,
    /// Absent for the asymmetry map, which sweeps `gamma_b / gamma_a` instead.
    pub gamma_b: Option<f64>,
    pub kappa: f64,
    pub pump: Pump,
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_points: usize,
    pub gamma_ratios: Vec<f64>,
    pub pump_fractions: Vec<f64>,
    pub stochastic: StochasticConfig,
    pub validate_omegas: Vec<f64>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

/// Every field optional; absent fields fall through to the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub gamma_a: Option<f64>,
    pub gamma_b: Option<f64>,
    pub kappa: Option<f64>,
    pub pump_frac: Option<f64>,
    pub epsilon: Option<f64>,
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub omega_points: Option<usize>,
    pub gamma_ratios: Option<Vec<f64>>,
    pub pump_fractions: Option<Vec<f64>>,
    pub dt: Option<f64>,
    pub t_transient: Option<f64>,
    pub t_sample: Option<f64>,
    pub n_trajectories: Option<usize>,
    pub seed: Option<u64>,
    pub divergence_radius: Option<f64>,
    pub sample_stride: Option<usize>,
    pub validate_omegas: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

pub const DEFAULT_GAMMA_A: f64 = 1.0;
pub const DEFAULT_KAPPA: f64 = 0.01;
pub const DEFAULT_PUMP_FRACTION: f64 = 0.6;
pub const DEFAULT_OMEGA_MIN: f64 = -20.0;
pub const DEFAULT_OMEGA_MAX: f64 = 20.0;
pub const DEFAULT_OMEGA_POINTS: usize = 1001;
pub const DEFAULT_VALIDATE_OMEGAS: [f64; 3] = [0.0, 2.0, 5.0];

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// Values in `over` win over values in `self`.
    pub fn overlay(self, over: ConfigFile) -> ConfigFile {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigFile { $($f: over.$f.or(self.$f)),* } };
        }
        let mut merged = pick!(
            gamma_a, gamma_b, kappa, pump_frac, epsilon, omega_min, omega_max, omega_points,
            gamma_ratios, pump_fractions, dt, t_transient, t_sample, n_trajectories, seed,
            divergence_radius, sample_stride, validate_omegas, out, format
        );
        // A pump given on the command line replaces the file's, whichever form it takes.
        if over.pump_frac.is_some() || over.epsilon.is_some() {
            merged.pump_frac = over.pump_frac;
            merged.epsilon = over.epsilon;
        }
        merged
    }

    /// Fills defaults and checks every field before any computation starts.
    /// `gamma_b` has no default.
    pub fn resolve(self) -> Result<RunConfig, CliError> {
        let pump = match (self.pump_frac, self.epsilon) {
            (Some(_), Some(_)) => {
                return Err(CliError::Invalid {
                    field: "pump",
                    reason: "give either --pump-frac or --epsilon, not both".into(),
                })
            }
            (_, Some(e)) => Pump::Epsilon(e),
            (Some(f), None) => Pump::Fraction(f),
            (None, None) => Pump::Fraction(DEFAULT_PUMP_FRACTION),
        };
        let defaults = StochasticConfig::default();
        let cfg = RunConfig {
            gamma_a: self.gamma_a.unwrap_or(DEFAULT_GAMMA_A),
            gamma_b: self.gamma_b,
            kappa: self.kappa.unwrap_or(DEFAULT_KAPPA),
            pump,
            omega_min: self.omega_min.unwrap_or(DEFAULT_OMEGA_MIN),
            omega_max: self.omega_max.unwrap_or(DEFAULT_OMEGA_MAX),
            omega_points: self.omega_points.unwrap_or(DEFAULT_OMEGA_POINTS),
            gamma_ratios: self.gamma_ratios.unwrap_or_else(steering::default_gamma_ratios),
            pump_fractions: self.pump_fractions.unwrap_or_else(steering::default_pump_fractions),
            stochastic: StochasticConfig {
                dt: self.dt.unwrap_or(defaults.dt),
                t_transient: self.t_transient.unwrap_or(defaults.t_transient),
                t_sample: self.t_sample.unwrap_or(defaults.t_sample),
                n_trajectories: self.n_trajectories.unwrap_or(defaults.n_trajectories),
                seed: self.seed.unwrap_or(defaults.seed),
                divergence_radius: self.divergence_radius.unwrap_or(defaults.divergence_radius),
                sample_stride: self.sample_stride.unwrap_or(defaults.sample_stride),
            },
            validate_omegas: self
                .validate_omegas
                .unwrap_or_else(|| DEFAULT_VALIDATE_OMEGAS.to_vec()),
            out: self.out,
            format: self.format.unwrap_or(Format::Csv),
        };
        if cfg.gamma_b.is_some() {
            cfg.params()?;
        }
        cfg.omegas()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn params(&self) -> Result<SystemParams, CliError> {
        let gamma_b = self.gamma_b.ok_or(CliError::Missing("--gamma-b"))?;
        let p = match self.pump {
            Pump::Fraction(f) => SystemParams::with_pump_fraction(self.gamma_a, gamma_b, self.kappa, f),
            Pump::Epsilon(e) => SystemParams::new(self.gamma_a, gamma_b, self.kappa, e),
        };
        p.map_err(CliError::from)
    }

    pub fn omegas(&self) -> Result<Vec<f64>, CliError> {
        Ok(linear::linspace(self.omega_min, self.omega_max, self.omega_points)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let cfg = ConfigFile {
            gamma_b: Some(1.0),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert_eq!(cfg.gamma_a, 1.0);
        assert_eq!(cfg.kappa, 0.01);
        assert_eq!(cfg.pump, Pump::Fraction(0.6));
        assert_eq!((cfg.omega_min, cfg.omega_max, cfg.omega_points), (-20.0, 20.0, 1001));
        assert_eq!(cfg.stochastic.n_trajectories, 10_000);
        assert_eq!(cfg.format, Format::Csv);
    }

    #[test]
    fn flags_override_file() {
        let file: ConfigFile = serde_json::from_str(r#"{"gamma_b": 0.25, "kappa": 0.02, "pump_frac": 0.5, "seed": 3}"#).unwrap();
        let flags = ConfigFile {
            kappa: Some(0.01),
            epsilon: Some(100.0),
            ..Default::default()
        };
        let cfg = file.overlay(flags).resolve().unwrap();
        assert_eq!(cfg.gamma_b, Some(0.25));
        assert_eq!(cfg.kappa, 0.01);
        assert_eq!(cfg.pump, Pump::Epsilon(100.0));
        assert_eq!(cfg.stochastic.seed, 3);
    }

    #[test]
    fn invalid_fields_fail_fast() {
        let no_gamma_b = ConfigFile::default().resolve().unwrap();
        assert!(matches!(no_gamma_b.params(), Err(CliError::Missing(_))));
        let bad = ConfigFile {
            gamma_b: Some(-1.0),
            ..Default::default()
        };
        assert!(bad.resolve().is_err());
        let bad_grid = ConfigFile {
            gamma_b: Some(1.0),
            omega_points: Some(0),
            ..Default::default()
        };
        assert!(bad_grid.resolve().is_err());
        assert!(serde_json::from_str::<ConfigFile>(r#"{"gamma_c": 1}"#).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ConfigFile {
            gamma_b: Some(0.25),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }
}

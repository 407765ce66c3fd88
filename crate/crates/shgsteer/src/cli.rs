//! Subcommands `critical`, `steady`, `spectrum`, `asymmetry-map` and `validate`.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use shgsteer_core::{linear, model, steering};

use crate::config::{ConfigFile, Format, RunConfig};
use crate::error::{exit, CliError};
use crate::output::{self, CellFailure, MapRow, SpectrumRow};
use crate::{parallel, validate};

#[derive(Debug, Parser)]
#[command(name = "shgsteer", version, about = "Spectral EPR steering in intracavity second harmonic generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the Hopf threshold epsilon_c.
    Critical {
        #[command(flatten)]
        point: PointArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Print the classical steady state.
    Steady {
        #[command(flatten)]
        point: PointArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Output spectra, inferred variances and EPR products over a frequency grid.
    Spectrum {
        #[command(flatten)]
        point: PointArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Symmetric-steering indicator over a gamma_b/gamma_a by pump-fraction grid.
    AsymmetryMap {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma separated gamma_b/gamma_a values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        gamma_ratios: Option<Vec<f64>>,
        /// Comma separated epsilon/epsilon_c values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        pump_fractions: Option<Vec<f64>>,
    },
    /// Cross-check the linearized results against a stochastic ensemble.
    Validate {
        #[command(flatten)]
        point: PointArgs,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        stochastic: StochasticArgs,
        /// Flip the coupling sign of the reference drift (negative control).
        #[arg(long, hide = true)]
        corrupt_drift_sign: bool,
    },
}

#[derive(Debug, Args)]
pub struct PointArgs {
    #[arg(long, required_unless_present = "config", allow_hyphen_values = true)]
    pub gamma_b: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON file with default values; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_a: Option<f64>,
    /// [default: 0.01]
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
    /// Pump as a fraction of epsilon_c [default: 0.6].
    #[arg(long, conflicts_with = "epsilon", allow_hyphen_values = true)]
    pub pump_frac: Option<f64>,
    /// Absolute pump amplitude.
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<f64>,
    /// [default: -20]
    #[arg(long, allow_hyphen_values = true)]
    pub omega_min: Option<f64>,
    /// [default: 20]
    #[arg(long, allow_hyphen_values = true)]
    pub omega_max: Option<f64>,
    /// [default: 1001]
    #[arg(long)]
    pub omega_points: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// [default: csv]
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct StochasticArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub dt: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub t_transient: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub t_sample: Option<f64>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub divergence_radius: Option<f64>,
    #[arg(long)]
    pub sample_stride: Option<usize>,
    /// Comma separated frequencies for the stochastic spectrum [default: 0,2,5].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub validate_omegas: Option<Vec<f64>>,
}

impl CommonArgs {
    fn overrides(&self) -> ConfigFile {
        ConfigFile {
            gamma_a: self.gamma_a,
            kappa: self.kappa,
            pump_frac: self.pump_frac,
            epsilon: self.epsilon,
            omega_min: self.omega_min,
            omega_max: self.omega_max,
            omega_points: self.omega_points,
            seed: self.seed,
            out: self.out.clone(),
            format: self.format,
            ..Default::default()
        }
    }

    fn resolve(&self, extra: ConfigFile) -> Result<RunConfig, CliError> {
        let base = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        base.overlay(self.overrides().overlay(extra)).resolve()
    }
}

fn point_overrides(point: &PointArgs) -> ConfigFile {
    ConfigFile {
        gamma_b: point.gamma_b,
        ..Default::default()
    }
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::SUCCESS };
        }
    };
    match run(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command, stdout: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Critical { point, common } => cmd_critical(&common.resolve(point_overrides(&point))?, stdout),
        Command::Steady { point, common } => cmd_steady(&common.resolve(point_overrides(&point))?, stdout),
        Command::Spectrum { point, common } => cmd_spectrum(&common.resolve(point_overrides(&point))?, stdout),
        Command::AsymmetryMap {
            common,
            gamma_ratios,
            pump_fractions,
        } => {
            let extra = ConfigFile {
                gamma_ratios,
                pump_fractions,
                ..Default::default()
            };
            cmd_asymmetry_map(&common.resolve(extra)?, stdout)
        }
        Command::Validate {
            point,
            common,
            stochastic,
            corrupt_drift_sign,
        } => {
            let extra = ConfigFile {
                gamma_b: point.gamma_b,
                dt: stochastic.dt,
                t_transient: stochastic.t_transient,
                t_sample: stochastic.t_sample,
                n_trajectories: stochastic.trajectories,
                divergence_radius: stochastic.divergence_radius,
                sample_stride: stochastic.sample_stride,
                validate_omegas: stochastic.validate_omegas,
                ..Default::default()
            };
            cmd_validate(&common.resolve(extra)?, corrupt_drift_sign, stdout)
        }
    }
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::io("<stdout>", e))
}

fn emit_report<T: Serialize>(cfg: &RunConfig, json: &T, text: String, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cfg.format {
        Format::Json => {
            let bytes = output::to_json(json)?;
            match &cfg.out {
                Some(path) => output::write_atomic(path, &bytes),
                None => stdout.write_all(&bytes).map_err(|e| CliError::io("<stdout>", e)),
            }
        }
        Format::Csv => emit(stdout, &text),
    }
}

#[derive(Serialize)]
struct CriticalReport<'a> {
    config: &'a RunConfig,
    critical_pump: f64,
}

pub fn cmd_critical(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let p = cfg.params()?;
    let ec = model::critical_pump(&p);
    let text = format!(
        "gamma_a = {}\ngamma_b = {}\nkappa = {}\nepsilon_c = {}\n",
        p.gamma_a,
        p.gamma_b,
        p.kappa,
        output::fmt_f64(ec)
    );
    emit_report(cfg, &CriticalReport { config: cfg, critical_pump: ec }, text, stdout)?;
    Ok(exit::SUCCESS)
}

#[derive(Serialize)]
struct SteadyReport<'a> {
    config: &'a RunConfig,
    params: output::ParamsJson,
    critical_pump: f64,
    steady_state: output::SteadyJson,
}

pub fn cmd_steady(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let p = cfg.params()?;
    let ec = model::critical_pump(&p);
    let ss = model::steady_state(&p)?;
    let text = format!(
        "epsilon = {}\nepsilon_c = {}\npump_fraction = {}\nalpha_ss = {}\nbeta_ss = {}\nresidual = {:e}\n",
        output::fmt_f64(p.epsilon),
        output::fmt_f64(ec),
        output::fmt_f64(p.pump_fraction()),
        output::fmt_f64(ss.alpha_ss),
        output::fmt_f64(ss.beta_ss),
        ss.residual
    );
    let report = SteadyReport {
        config: cfg,
        params: (&p).into(),
        critical_pump: ec,
        steady_state: (&ss).into(),
    };
    emit_report(cfg, &report, text, stdout)?;
    Ok(exit::SUCCESS)
}

pub fn cmd_spectrum(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let p = cfg.params()?;
    let omegas = cfg.omegas()?;
    // Fails with an instability error before anything is written.
    let sys = steering::stable_system(&p)?;
    let stability = linear::stability_eigenvalues(&sys)?;
    let scan = parallel::frequency_scan(&p, &omegas)?;
    let rows: Vec<SpectrumRow> = scan.points.iter().map(SpectrumRow::from).collect();
    let summary = output::SpectrumSummary::new(cfg, &scan, model::critical_pump(&p), &sys.ss, &stability.eigenvalues);

    match (cfg.format, &cfg.out) {
        (Format::Csv, Some(path)) => {
            output::write_atomic(path, &output::spectrum_csv(&rows)?)?;
            output::write_atomic(&output::summary_path(path), &output::to_json(&summary)?)?;
        }
        (Format::Csv, None) => stdout
            .write_all(&output::spectrum_csv(&rows)?)
            .map_err(|e| CliError::io("<stdout>", e))?,
        (Format::Json, out) => {
            let doc = output::to_json(&output::SpectrumDocument {
                summary: &summary,
                rows: &rows,
            })?;
            match out {
                Some(path) => output::write_atomic(path, &doc)?,
                None => stdout.write_all(&doc).map_err(|e| CliError::io("<stdout>", e))?,
            }
        }
    }
    Ok(exit::SUCCESS)
}

pub fn cmd_asymmetry_map(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let omegas = cfg.omegas()?;
    let cells = parallel::asymmetry_map(cfg.gamma_a, cfg.kappa, &cfg.gamma_ratios, &cfg.pump_fractions, &omegas)?;
    if let Some(err) = cells.iter().all(|c| c.outcome.is_err()).then(|| cells[0].outcome.clone().unwrap_err()) {
        return Err(CliError::AllCellsFailed(err));
    }
    let rows: Vec<MapRow> = cells.iter().map(MapRow::from).collect();
    let failures: Vec<CellFailure> = cells
        .iter()
        .filter_map(|c| {
            c.outcome.as_ref().err().map(|e| CellFailure {
                gamma_ratio: c.gamma_ratio,
                pump_fraction: c.pump_fraction,
                reason: e.to_string(),
            })
        })
        .collect();
    for f in &failures {
        eprintln!(
            "warning: cell ({}, {}) failed: {}",
            f.gamma_ratio, f.pump_fraction, f.reason
        );
    }
    let summary = output::MapSummary {
        config: cfg.clone(),
        omega_grid: output::GridJson {
            min: cfg.omega_min,
            max: cfg.omega_max,
            points: cfg.omega_points,
        },
        cells: cells.len(),
        failures,
    };
    match (cfg.format, &cfg.out) {
        (Format::Csv, Some(path)) => {
            output::write_atomic(path, &output::map_csv(&rows)?)?;
            output::write_atomic(&output::summary_path(path), &output::to_json(&summary)?)?;
        }
        (Format::Csv, None) => stdout
            .write_all(&output::map_csv(&rows)?)
            .map_err(|e| CliError::io("<stdout>", e))?,
        (Format::Json, out) => {
            let doc = output::to_json(&output::MapDocument {
                summary: &summary,
                rows: &rows,
            })?;
            match out {
                Some(path) => output::write_atomic(path, &doc)?,
                None => stdout.write_all(&doc).map_err(|e| CliError::io("<stdout>", e))?,
            }
        }
    }
    Ok(exit::SUCCESS)
}

#[derive(Serialize)]
struct ValidateDocument<'a> {
    config: &'a RunConfig,
    report: &'a validate::ValidationReport,
}

pub fn cmd_validate(cfg: &RunConfig, corrupt: bool, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let p = cfg.params()?;
    let icfg = cfg.stochastic.integration();
    let report = match validate::agreement_chain(&p, &icfg, &cfg.validate_omegas, corrupt) {
        Ok(r) => r,
        Err(e @ shgsteer_core::Error::DivergenceRate { .. }) => {
            emit(stdout, &format!("FAIL divergence: {e}\n"))?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    let mut text = String::new();
    for c in &report.checks {
        text.push_str(&format!("{c}\n"));
    }
    text.push_str(&format!(
        "trajectories kept {} discarded {}\n",
        report.n_kept, report.n_discarded
    ));
    emit(stdout, &text)?;
    if let Some(path) = &cfg.out {
        let doc = output::to_json(&ValidateDocument {
            config: cfg,
            report: &report,
        })?;
        output::write_atomic(path, &doc)?;
    }
    if report.all_passed() {
        Ok(exit::SUCCESS)
    } else {
        Err(CliError::Validation {
            failed: report.failed(),
            total: report.checks.len(),
        })
    }
}

//! Tables and summaries written by the command line.
//!
//! Floats in CSV are written with 17 significant digits so that every value
//! round-trips exactly. JSON numbers use serde's shortest round-trip form.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use shgsteer_core::linear::{XA, XB, YA, YB};
use shgsteer_core::steering::{AsymmetryCell, SteeringPoint, SteeringScan};
use shgsteer_core::{Complex64, SteadyState, SystemParams};

use crate::config::RunConfig;
use crate::error::CliError;

pub const SPECTRUM_COLUMNS: [&str; 14] = [
    "omega",
    "v_xa",
    "v_ya",
    "v_xb",
    "v_yb",
    "v_xaxb",
    "v_yayb",
    "vinf_xa",
    "vinf_ya",
    "vinf_xb",
    "vinf_yb",
    "epr_b_given_a",
    "epr_a_given_b",
    "classification",
];

pub const MAP_COLUMNS: [&str; 5] = [
    "gamma_ratio",
    "pump_fraction",
    "indicator",
    "min_epr_b_given_a",
    "min_epr_a_given_b",
];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One spectrum table row as plain numbers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub omega: f64,
    pub v_xa: f64,
    pub v_ya: f64,
    pub v_xb: f64,
    pub v_yb: f64,
    pub v_xaxb: f64,
    pub v_yayb: f64,
    pub vinf_xa: f64,
    pub vinf_ya: f64,
    pub vinf_xb: f64,
    pub vinf_yb: f64,
    pub epr_b_given_a: f64,
    pub epr_a_given_b: f64,
    pub classification: &'static str,
}

impl From<&SteeringPoint> for SpectrumRow {
    fn from(p: &SteeringPoint) -> Self {
        let v = &p.spectra;
        SpectrumRow {
            omega: p.omega,
            v_xa: v.variance(XA),
            v_ya: v.variance(YA),
            v_xb: v.variance(XB),
            v_yb: v.variance(YB),
            v_xaxb: v.covariance(XA, XB),
            v_yayb: v.covariance(YA, YB),
            vinf_xa: p.inferred.xa,
            vinf_ya: p.inferred.ya,
            vinf_xb: p.inferred.xb,
            vinf_yb: p.inferred.yb,
            epr_b_given_a: p.epr.b_given_a,
            epr_a_given_b: p.epr.a_given_b,
            classification: p.classification.as_str(),
        }
    }
}

impl SpectrumRow {
    fn fields(&self) -> Vec<String> {
        let mut out: Vec<String> = [
            self.omega,
            self.v_xa,
            self.v_ya,
            self.v_xb,
            self.v_yb,
            self.v_xaxb,
            self.v_yayb,
            self.vinf_xa,
            self.vinf_ya,
            self.vinf_xb,
            self.vinf_yb,
            self.epr_b_given_a,
            self.epr_a_given_b,
        ]
        .iter()
        .map(|&x| fmt_f64(x))
        .collect();
        out.push(self.classification.to_string());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapRow {
    pub gamma_ratio: f64,
    pub pump_fraction: f64,
    pub indicator: i8,
    pub min_epr_b_given_a: Option<f64>,
    pub min_epr_a_given_b: Option<f64>,
}

impl From<&AsymmetryCell> for MapRow {
    fn from(c: &AsymmetryCell) -> Self {
        let ok = c.outcome.as_ref().ok();
        MapRow {
            gamma_ratio: c.gamma_ratio,
            pump_fraction: c.pump_fraction,
            indicator: c.indicator(),
            min_epr_b_given_a: ok.map(|s| s.min_b_given_a),
            min_epr_a_given_b: ok.map(|s| s.min_a_given_b),
        }
    }
}

impl MapRow {
    fn fields(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        vec![
            fmt_f64(self.gamma_ratio),
            fmt_f64(self.pump_fraction),
            self.indicator.to_string(),
            opt(self.min_epr_b_given_a),
            opt(self.min_epr_a_given_b),
        ]
    }
}

pub fn spectrum_csv(rows: &[SpectrumRow]) -> Result<Vec<u8>, CliError> {
    table_csv(&SPECTRUM_COLUMNS, rows.iter().map(SpectrumRow::fields))
}

pub fn map_csv(rows: &[MapRow]) -> Result<Vec<u8>, CliError> {
    table_csv(&MAP_COLUMNS, rows.iter().map(MapRow::fields))
}

fn table_csv(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Invalid {
        field: "csv",
        reason: e.to_string(),
    };
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::Invalid {
        field: "csv",
        reason: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamsJson {
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub pump_fraction: f64,
}

impl From<&SystemParams> for ParamsJson {
    fn from(p: &SystemParams) -> Self {
        ParamsJson {
            gamma_a: p.gamma_a,
            gamma_b: p.gamma_b,
            kappa: p.kappa,
            epsilon: p.epsilon,
            pump_fraction: p.pump_fraction(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexJson {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexJson {
    fn from(z: Complex64) -> Self {
        ComplexJson { re: z.re, im: z.im }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyJson {
    pub alpha_ss: f64,
    pub beta_ss: f64,
    pub residual: f64,
}

impl From<&SteadyState> for SteadyJson {
    fn from(s: &SteadyState) -> Self {
        SteadyJson {
            alpha_ss: s.alpha_ss,
            beta_ss: s.beta_ss,
            residual: s.residual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridJson {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Minimum {
    pub value: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub config: RunConfig,
    pub params: ParamsJson,
    pub critical_pump: f64,
    pub steady_state: SteadyJson,
    pub eigenvalues: Vec<ComplexJson>,
    pub omega_grid: GridJson,
    pub min_epr_b_given_a: Minimum,
    pub min_epr_a_given_b: Minimum,
}

impl SpectrumSummary {
    pub fn new(
        config: &RunConfig,
        scan: &SteeringScan,
        critical_pump: f64,
        ss: &SteadyState,
        eigenvalues: &[Complex64],
    ) -> Self {
        let (b, wb) = scan.min_b_given_a();
        let (a, wa) = scan.min_a_given_b();
        SpectrumSummary {
            config: config.clone(),
            params: ParamsJson::from(&scan.params),
            critical_pump,
            steady_state: ss.into(),
            eigenvalues: eigenvalues.iter().map(|&z| z.into()).collect(),
            omega_grid: GridJson {
                min: config.omega_min,
                max: config.omega_max,
                points: config.omega_points,
            },
            min_epr_b_given_a: Minimum { value: b, omega: wb },
            min_epr_a_given_b: Minimum { value: a, omega: wa },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumDocument<'a> {
    pub summary: &'a SpectrumSummary,
    pub rows: &'a [SpectrumRow],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub gamma_ratio: f64,
    pub pump_fraction: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct MapSummary {
    pub config: RunConfig,
    /// Frequencies every cell was scanned over; "all frequencies" means these.
    pub omega_grid: GridJson,
    pub cells: usize,
    pub failures: Vec<CellFailure>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MapDocument<'a> {
    pub summary: &'a MapSummary,
    pub rows: &'a [MapRow],
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Invalid {
        field: "json",
        reason: e.to_string(),
    })?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// `equal.csv` -> `equal.summary.json`.
pub fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary.json")
}

#[cfg(test)]
mod tests {
    use super::*;
    use shgsteer_core::steering;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -126.41032456, 6.02e23, 5e-324, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(600.0), "6.0000000000000000e2");
    }

    #[test]
    fn spectrum_header_is_fixed() {
        let bytes = spectrum_csv(&[]).unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "omega,v_xa,v_ya,v_xb,v_yb,v_xaxb,v_yayb,vinf_xa,vinf_ya,vinf_xb,vinf_yb,epr_b_given_a,epr_a_given_b,classification\n"
        );
    }

    #[test]
    fn rows_carry_scan_values() {
        let p = SystemParams::with_pump_fraction(1.0, 1.0, 0.01, 0.6).unwrap();
        let scan = steering::frequency_scan(&p, &[0.0, 1.0]).unwrap();
        let rows: Vec<SpectrumRow> = scan.points.iter().map(SpectrumRow::from).collect();
        assert_eq!(rows[1].omega, 1.0);
        assert_eq!(rows[0].epr_b_given_a, scan.points[0].epr.b_given_a);
        let text = String::from_utf8(spectrum_csv(&rows).unwrap()).unwrap();
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let first = reader.records().next().unwrap().unwrap();
        assert_eq!(first.len(), 14);
        assert_eq!(first[11].parse::<f64>().unwrap(), rows[0].epr_b_given_a);
    }

    #[test]
    fn failed_cells_have_empty_minima() {
        let cell = AsymmetryCell {
            gamma_ratio: 0.5,
            pump_fraction: 1.2,
            outcome: Err(shgsteer_core::Error::AboveThreshold {
                epsilon: 1.0,
                critical: 0.5,
            }),
        };
        let row = MapRow::from(&cell);
        assert_eq!(row.indicator, -1);
        assert_eq!(row.fields()[3], "");
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert_eq!(summary_path(&path), dir.path().join("t.summary.json"));
    }
}

//! CSV and JSON writers for sweep grids, trajectories and run manifests.
//!
//! Numbers are written with 12 significant digits in their shortest form,
//! so repeated runs with the same inputs produce identical files.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::coupling::Hamiltonian;
use crate::error::{Error, Result};
use crate::experiments::SweepGrid;
use crate::observables::{DiffusionSeries, RingPopulations};
use crate::spectral::CirculantSpectrum;

/// Shortest decimal form of `x` rounded to 12 significant digits.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        // drop the sign of negative zero
        return "0".into();
    }
    rounded.to_string()
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_rows<I, R>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        let row: Vec<String> = row.into_iter().collect();
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Long-form table: one column per axis, then `statistic,value`.
pub fn write_results_csv(grid: &SweepGrid, path: &Path) -> Result<()> {
    let mut header: Vec<String> = grid.axes.iter().map(|a| a.name.clone()).collect();
    header.push("statistic".into());
    header.push("value".into());
    let rows = grid.stats.iter().flat_map(|stat| {
        (0..grid.len()).map(move |f| {
            let idx = grid.unravel(f);
            let mut row: Vec<String> = grid.axes.iter().zip(&idx).map(|(a, &i)| a.format(i)).collect();
            row.push(stat.name.clone());
            row.push(format_number(stat.values[f]));
            row
        })
    });
    write_rows(path, &header, rows)
}

/// Fitted exponents, crossovers and level curves. Keys are written as
/// `name=value` pairs joined by `;`.
pub fn write_records_csv(grid: &SweepGrid, path: &Path) -> Result<()> {
    let header = ["record", "keys", "value", "r_squared"].map(String::from);
    let rows = grid.records.iter().map(|r| {
        let keys = r
            .keys
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        vec![
            r.name.clone(),
            keys,
            format_number(r.value),
            r.r_squared.map(format_number).unwrap_or_default(),
        ]
    });
    write_rows(path, &header, rows)
}

/// `time,ring,population` with `ring` the signed offset from the middle.
pub fn write_populations_csv(path: &Path, times: &[f64], pops: &[RingPopulations]) -> Result<()> {
    if times.len() != pops.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            found: pops.len(),
        });
    }
    let header = ["time", "ring", "population"].map(String::from);
    let rows = times.iter().zip(pops).flat_map(|(&t, p)| {
        p.offsets
            .iter()
            .zip(&p.p)
            .map(move |(&r, &x)| vec![format_number(t), format_number(r), format_number(x)])
    });
    write_rows(path, &header, rows)
}

/// `time,sigma`, plus an `analytic` column when closed-form values are given.
pub fn write_sigma_csv(path: &Path, series: &DiffusionSeries, analytic: Option<&[f64]>) -> Result<()> {
    if let Some(a) = analytic {
        if a.len() != series.times.len() {
            return Err(Error::DimensionMismatch {
                expected: series.times.len(),
                found: a.len(),
            });
        }
    }
    let mut header = vec!["time".to_string(), "sigma".to_string()];
    if analytic.is_some() {
        header.push("analytic".into());
    }
    let rows = (0..series.times.len()).map(|i| {
        let mut row = vec![format_number(series.times[i]), format_number(series.sigma[i])];
        if let Some(a) = analytic {
            row.push(format_number(a[i]));
        }
        row
    });
    write_rows(path, &header, rows)
}

/// Non-zero entries as `row,col,value`.
pub fn write_hamiltonian_csv(path: &Path, h: &Hamiltonian) -> Result<()> {
    let m = h.matrix();
    let header = ["row", "col", "value"].map(String::from);
    let rows = (0..m.nrows()).flat_map(|i| {
        (0..m.ncols())
            .filter(move |&j| m[(i, j)] != 0.0)
            .map(move |j| vec![i.to_string(), j.to_string(), format_number(m[(i, j)])])
    });
    write_rows(path, &header, rows)
}

pub fn write_spectrum_csv(path: &Path, eigenvalues: &[f64]) -> Result<()> {
    let header = ["index", "eigenvalue"].map(String::from);
    let rows = eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &e)| vec![i.to_string(), format_number(e)]);
    write_rows(path, &header, rows)
}

/// `p,q,eigenvalue` in Fourier-order labelling.
pub fn write_circulant_spectrum_csv(path: &Path, spectrum: &CirculantSpectrum) -> Result<()> {
    let header = ["p", "q", "eigenvalue"].map(String::from);
    let rows = spectrum
        .labelled()
        .map(|(p, q, e)| vec![p.to_string(), q.to_string(), format_number(e)]);
    write_rows(path, &header, rows)
}

/// Provenance written next to every run's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    /// The configuration with every default filled in.
    pub config: serde_json::Value,
    pub base_seed: u64,
    /// Seed derivation scheme for realization `r` at grid point `p`.
    pub seed_scheme: String,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
    /// Command-specific extras, such as rescaled near-field times.
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value, base_seed: u64) -> Self {
        Manifest {
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            base_seed,
            seed_scheme: "ChaCha8(SHA-256(tag, base_seed, point, realization))".into(),
            wall_time_seconds: 0.0,
            outputs: Vec::new(),
            details: serde_json::Value::Null,
        }
    }
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{run_scaling_experiment, ExperimentKind, Profile, SweepSpec};

    #[test]
    fn number_format() {
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(0.1 + 0.2), "0.3");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(1e-20), "0.00000000000000000001");
        assert_eq!(format_number(f64::NAN), "NaN");
        assert_eq!(format_number(123456789012345.0), "123456789012000");
    }

    #[test]
    fn results_table_is_long_form() {
        let mut spec = SweepSpec::with_profile(ExperimentKind::Scaling, Profile::Fast);
        spec.rings = 5;
        spec.n_values = vec![1, 2, 3];
        let grid = run_scaling_experiment(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out/results.csv");
        write_results_csv(&grid, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("state,spacing,n,t_nominal,statistic,value"));
        assert_eq!(lines.count(), grid.len() * grid.stats.len());
        let records = dir.path().join("records.csv");
        write_records_csv(&grid, &records).unwrap();
        let text = fs::read_to_string(&records).unwrap();
        assert!(text.contains("alpha,state=delocalized;spacing=10;t_nominal=1,"));
    }
}

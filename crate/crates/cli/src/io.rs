//! CSV matrices and JSON sidecars.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hsl_core::synth::{SynthInstance, SynthSpec};
use hsl_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Reads a numeric CSV with one sample per row. With `header`, the first line is skipped.
pub fn read_matrix_csv(path: &Path, header: bool) -> Result<Matrix, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_reader(file);
    let shown = path.display();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths {
                pos,
                expected_len,
                len,
            } => CliError::Data(format!(
                "{shown}:{}: ragged row with {len} cells, expected {expected_len}",
                pos.as_ref().map_or(0, |p| p.line())
            )),
            _ => CliError::Data(format!("{shown}: {e}")),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .enumerate()
            .map(|(col, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::Data(format!(
                    "{shown}:{line}:{}: non-numeric cell {cell:?}",
                    col + 1
                ))),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(CliError::Data(format!("{shown}: no data rows")));
    }
    Ok(Matrix::from_rows(&rows)?)
}

/// Writes `m` with shortest round-trip float formatting, so reading it back is exact.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for r in 0..m.rows() {
        w.write_record(m.row(r).iter().map(|v| v.to_string()))
            .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Data(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    out.flush().map_err(|e| CliError::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// `dir/data.csv` → `dir/data.truth.json`.
pub fn sidecar_path(data: &Path) -> PathBuf {
    let stem = data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    data.with_file_name(format!("{stem}.truth.json"))
}

/// Ground truth written next to generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub schema_version: u32,
    pub spec: SynthSpec,
    pub z: Matrix,
    pub a: Matrix,
    pub w: Matrix,
    pub b: Vec<f64>,
    pub support_lowr: Vec<usize>,
    pub support_highd: Vec<usize>,
}

impl TruthSidecar {
    pub fn from_instance(inst: &SynthInstance<f64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            spec: inst.spec.clone(),
            z: inst.true_z.clone(),
            a: inst.true_a.clone(),
            w: inst.true_w.clone(),
            b: inst.true_b.clone(),
            support_lowr: inst.support_lowr.clone(),
            support_highd: inst.support_highd.clone(),
        }
    }

    pub fn into_instance(self, x: Matrix) -> Result<SynthInstance<f64>, CliError> {
        let (n, p) = x.shape();
        if self.z.rows() != n || self.a.cols() != p || self.w.shape() != (n, p) || self.b.len() != p
        {
            return Err(CliError::Data(format!(
                "ground truth shapes do not match the {n}x{p} data matrix"
            )));
        }
        Ok(SynthInstance {
            spec: self.spec,
            x,
            true_z: self.z,
            true_a: self.a,
            true_w: self.w,
            true_b: self.b,
            support_lowr: self.support_lowr,
            support_highd: self.support_highd,
        })
    }
}

pub fn read_truth(path: &Path) -> Result<TruthSidecar, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Data matrix plus ground truth when a sidecar sits next to it.
pub fn load_dataset(
    path: &Path,
    header: bool,
) -> Result<(Matrix, Option<SynthInstance<f64>>), CliError> {
    let x = read_matrix_csv(path, header)?;
    let side = sidecar_path(path);
    if side.exists() {
        let inst = read_truth(&side)?.into_instance(x.clone())?;
        Ok((x, Some(inst)))
    } else {
        Ok((x, None))
    }
}

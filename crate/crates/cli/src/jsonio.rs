//! Artifact schemas and file handling.
//!
//! All artifacts are JSON with matrices stored row-major under explicit
//! `rows`/`cols`. Every derived artifact embeds the seed and an FNV-1a hash
//! of its input artifact (computed over the canonical bytes, i.e. with the
//! `meta` key removed), so a pipeline run can be audited end to end.
//! Timestamps live only inside `meta`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>, CliError> {
        if self.data.len() != self.rows || self.data.iter().any(|r| r.len() != self.cols) {
            return Err(CliError::schema("matrix data does not match rows/cols"));
        }
        Ok(DMatrix::from_fn(self.rows, self.cols, |i, j| self.data[i][j]))
    }
}

/// Bare row-major nested arrays, used for the plant document.
pub fn nested_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, CliError> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(CliError::schema(format!("{what} must be a nonempty matrix")));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(CliError::schema(format!("{what} has ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn matrix_to_nested(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn vector_list(vs: &[DVector<f64>]) -> Vec<Vec<f64>> {
    vs.iter().map(|v| v.iter().copied().collect()).collect()
}

/// The plant document: `{"A": [[...]], "B": [[...]], "C": [[...]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantJson {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
}

impl PlantJson {
    pub fn from_model(m: &niosyn_core::StateSpaceModel) -> Self {
        Self {
            a: matrix_to_nested(m.a()),
            b: matrix_to_nested(m.b()),
            c: matrix_to_nested(m.c()),
        }
    }

    pub fn to_model(&self) -> Result<niosyn_core::StateSpaceModel, CliError> {
        niosyn_core::StateSpaceModel::new(
            nested_to_matrix(&self.a, "A")?,
            nested_to_matrix(&self.b, "B")?,
            nested_to_matrix(&self.c, "C")?,
        )
        .map_err(|e| CliError::schema(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaJson {
    pub created_unix_ms: u128,
    pub tool: String,
}

impl MetaJson {
    pub fn now() -> Self {
        Self {
            created_unix_ms: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            tool: format!("niosyn {}", env!("CARGO_PKG_VERSION")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogJson {
    pub u_meas: Vec<Vec<f64>>,
    pub y_meas: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentationJson {
    pub a_a: MatrixJson,
    pub b_a: MatrixJson,
    pub c_a: MatrixJson,
    pub dya_bar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanJson {
    pub num_experiments: usize,
    pub samples_per_experiment: usize,
    pub input_amplitude: f64,
    pub du_bar: f64,
    pub dy_bar: f64,
    pub x0_amplitude: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataJson {
    pub meta: MetaJson,
    pub seed: u64,
    pub ell: usize,
    pub p: usize,
    pub m: usize,
    pub n_cols: usize,
    pub config_hash: String,
    pub plan: PlanJson,
    pub augmentation: Option<AugmentationJson>,
    pub logs: Vec<LogJson>,
    pub psi1: MatrixJson,
    pub psi0: MatrixJson,
    pub u1: MatrixJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftJson {
    pub p: usize,
    pub m: usize,
    pub ell: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaJson {
    pub dy_bar: f64,
    pub du_bar: f64,
    pub dya_bar: f64,
    pub scale: f64,
    pub n_cols: usize,
    /// The resulting isotropic level `scale * n_cols * ((ell+1)(dy+dya)^2 + ell du^2)`.
    pub level: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificationJson {
    pub samples: usize,
    pub failures: usize,
    pub worst_lyapunov_slack: f64,
    pub worst_spectral_radius: f64,
    pub all_pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllerJson {
    pub meta: MetaJson,
    pub seed: u64,
    pub data_hash: String,
    pub theta: ThetaJson,
    pub epsilon: f64,
    pub variant: String,
    pub shift: ShiftJson,
    pub k: MatrixJson,
    pub p_lyap: MatrixJson,
    pub y: MatrixJson,
    pub achieved_margin: f64,
    pub p_condition: f64,
    pub assumption2_margin: f64,
    pub augmentation: Option<AugmentationJson>,
    pub certification: CertificationJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosedLoopJson {
    pub dim: usize,
    /// Eigenvalues as `[re, im]` pairs.
    pub eigenvalues: Vec<[f64; 2]>,
    pub spectral_radius: f64,
    pub schur: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoisyRunJson {
    pub seed: u64,
    pub horizon: usize,
    pub du_bar: f64,
    pub dy_bar: f64,
    pub x0: Vec<f64>,
    pub tail_max_y: f64,
    pub max_y: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportJson {
    pub meta: MetaJson,
    pub seed: u64,
    pub plant_hash: String,
    pub controller_hash: String,
    pub closed_loop: ClosedLoopJson,
    pub noisy_run: Option<NoisyRunJson>,
    pub verdict: String,
}

/// Machine-readable failure document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorJson {
    pub error: ErrorBody,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

/// FNV-1a 64-bit over the canonical bytes of a JSON value (the `meta` key
/// removed, compact encoding).
pub fn content_hash(value: &serde_json::Value) -> String {
    let mut clone = value.clone();
    if let Some(obj) = clone.as_object_mut() {
        obj.remove("meta");
    }
    let bytes = serde_json::to_vec(&clone).expect("value serializes");
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<serde_json::Value, CliError> {
    let v = serde_json::to_value(value).map_err(|e| CliError::schema(e.to_string()))?;
    let text = serde_json::to_string_pretty(&v).map_err(|e| CliError::schema(e.to_string()))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))?;
    Ok(v)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(T, String), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::schema(format!("{}: {e}", path.display())))?;
    let hash = content_hash(&value);
    let typed: T = serde_json::from_value(value)
        .map_err(|e| CliError::schema(format!("{}: {e}", path.display())))?;
    Ok((typed, hash))
}

pub fn write_csv_matrix(path: &Path, m: &DMatrix<f64>) -> Result<(), CliError> {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))
}

//! Model and certificate files.
//!
//! A model file is TOML:
//!
//! ```toml
//! name = "batch_reactor"
//! node_dims = [1, 1]          # sizes of the node blocks of e
//!
//! [a11]                       # likewise a12, a21, a22
//! rows = 6
//! cols = 6
//! data = [ ... ]              # row-major
//!
//! [[gains]]                   # optional, one per protocol family
//! family = "tod"              # "tod" or "rr"
//! m = 1.0
//! gamma = 16.92
//! l = 15.73                   # checked against M·‖A22‖ to 0.1 %
//! eps_lmi = 0.001
//! p = [ ... ]                 # row-major n_x × n_x
//! ```
//!
//! A certificate file is TOML with `model_hash`, `n_x`, `p` (row-major),
//! `gamma`, `l`, `eta`, `eps_lmi` and `m`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::certify::{compute_l, Certificate, CertifyError, LinearNcsModel};
use crate::numerics::{Matrix, SymMatrix};
use crate::protocols::{NodePartition, ProtocolKind};

/// Relative tolerance between a stored `L` and `M·‖A22‖`.
pub const L_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("no `{0}` gains in the model file")]
    MissingGains(&'static str),
    #[error("certificate belongs to model {found}, expected {expected}")]
    HashMismatch { expected: String, found: String },
    #[error(transparent)]
    Certify(#[from] CertifyError),
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Field { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixEntry {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixEntry {
    fn to_matrix(&self, field: &str) -> Result<Matrix<f64>, ModelError> {
        if self.data.len() != self.rows * self.cols {
            return Err(field_err(
                field,
                format!("{} entries for a {}x{} matrix", self.data.len(), self.rows, self.cols),
            ));
        }
        if let Some(k) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(field_err(field, format!("entry {k} is not finite")));
        }
        Matrix::from_row_major(self.rows, self.cols, self.data.clone()).map_err(|e| field_err(field, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainEntry {
    family: String,
    m: f64,
    gamma: f64,
    l: f64,
    eps_lmi: f64,
    p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    name: String,
    node_dims: Vec<usize>,
    a11: MatrixEntry,
    a12: MatrixEntry,
    a21: MatrixEntry,
    a22: MatrixEntry,
    #[serde(default)]
    gains: Vec<GainEntry>,
}

/// Stored certificate data for one protocol family.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSpec {
    /// `"tod"` or `"rr"`.
    pub family: String,
    pub m: f64,
    pub gamma: f64,
    pub l: f64,
    pub eps_lmi: f64,
    pub p: SymMatrix<f64>,
}

/// A parsed model file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub model: LinearNcsModel<f64>,
    pub gains: Vec<GainSpec>,
}

impl ModelSpec {
    pub fn gains_for(&self, kind: ProtocolKind) -> Option<&GainSpec> {
        self.gains.iter().find(|g| g.family == kind.family())
    }

    /// Builds and verifies the stored certificate for `kind`.
    pub fn certificate(&self, kind: ProtocolKind) -> Result<Certificate<f64>, ModelError> {
        let g = self.gains_for(kind).ok_or(ModelError::MissingGains(kind.family()))?;
        let l = compute_l(g.m, &self.model.a22)?;
        if (l - g.l).abs() > L_TOLERANCE * l.max(g.l) {
            return Err(field_err(
                format!("gains.{}.l", g.family),
                format!("stored {} differs from M·‖A22‖ = {l}", g.l),
            ));
        }
        Ok(Certificate::build(&self.model, g.p.clone(), g.gamma, g.eps_lmi, g.m)?)
    }

    pub fn hash(&self) -> String {
        model_hash(&self.model)
    }
}

/// Parses a model file from a string.
pub fn parse_model(text: &str) -> Result<ModelSpec, ModelError> {
    let file: ModelFile = toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    let partition = NodePartition::new(file.node_dims.clone()).map_err(|e| field_err("node_dims", e.to_string()))?;
    let model = LinearNcsModel::new(
        file.a11.to_matrix("a11")?,
        file.a12.to_matrix("a12")?,
        file.a21.to_matrix("a21")?,
        file.a22.to_matrix("a22")?,
        partition,
    )
    .map_err(|e| match e {
        CertifyError::Dimension { field, .. } => field_err(field, e.to_string()),
        other => other.into(),
    })?;
    let nx = model.n_x();
    let mut gains = Vec::with_capacity(file.gains.len());
    for (k, g) in file.gains.into_iter().enumerate() {
        let at = |f: &str| format!("gains[{k}].{f}");
        if g.family != "tod" && g.family != "rr" {
            return Err(field_err(at("family"), format!("`{}` is neither \"tod\" nor \"rr\"", g.family)));
        }
        for (name, v) in [("m", g.m), ("gamma", g.gamma), ("l", g.l), ("eps_lmi", g.eps_lmi)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(field_err(at(name), format!("must be positive, got {v}")));
            }
        }
        if g.p.len() != nx * nx {
            return Err(field_err(at("p"), format!("{} entries, expected {}", g.p.len(), nx * nx)));
        }
        let p = Matrix::from_row_major(nx, nx, g.p).map_err(|e| field_err(at("p"), e.to_string()))?;
        let p = SymMatrix::new(p).map_err(|e| field_err(at("p"), e.to_string()))?;
        gains.push(GainSpec { family: g.family, m: g.m, gamma: g.gamma, l: g.l, eps_lmi: g.eps_lmi, p });
    }
    Ok(ModelSpec { name: file.name, model, gains })
}

/// Reads and parses a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<ModelSpec, ModelError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io { path: path.to_path_buf(), source })?;
    parse_model(&text)
}

/// SHA-256 over the node sizes and the bit patterns of `A11..A22`.
pub fn model_hash(model: &LinearNcsModel<f64>) -> String {
    let mut h = Sha256::new();
    for &d in model.partition.node_dims() {
        h.update((d as u64).to_le_bytes());
    }
    for m in [&model.a11, &model.a12, &model.a21, &model.a22] {
        h.update((m.rows() as u64).to_le_bytes());
        h.update((m.cols() as u64).to_le_bytes());
        for v in m.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertificateFile {
    model_hash: String,
    n_x: usize,
    p: Vec<f64>,
    gamma: f64,
    l: f64,
    eta: f64,
    eps_lmi: f64,
    m: f64,
}

/// Serializes `cert` for `model`.
pub fn certificate_to_string(cert: &Certificate<f64>, model: &LinearNcsModel<f64>) -> String {
    let file = CertificateFile {
        model_hash: model_hash(model),
        n_x: cert.p.order(),
        p: cert.p.as_matrix().as_slice().to_vec(),
        gamma: cert.gamma,
        l: cert.l,
        eta: cert.eta,
        eps_lmi: cert.eps_lmi,
        m: cert.m,
    };
    toml::to_string(&file).expect("certificate fields are plain numbers")
}

/// Parses a certificate and checks that it belongs to `model` and still
/// satisfies the LMI.
pub fn parse_certificate(text: &str, model: &LinearNcsModel<f64>) -> Result<Certificate<f64>, ModelError> {
    let file: CertificateFile = toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    let expected = model_hash(model);
    if file.model_hash != expected {
        return Err(ModelError::HashMismatch { expected, found: file.model_hash });
    }
    if file.p.len() != file.n_x * file.n_x {
        return Err(field_err("p", format!("{} entries, expected {}", file.p.len(), file.n_x * file.n_x)));
    }
    let p = Matrix::from_row_major(file.n_x, file.n_x, file.p).map_err(|e| field_err("p", e.to_string()))?;
    let p = SymMatrix::new(p).map_err(|e| field_err("p", e.to_string()))?;
    let cert = Certificate { p, gamma: file.gamma, l: file.l, eta: file.eta, eps_lmi: file.eps_lmi, m: file.m };
    cert.validate(model)?;
    Ok(cert)
}

pub fn write_certificate(
    path: impl AsRef<Path>,
    cert: &Certificate<f64>,
    model: &LinearNcsModel<f64>,
) -> Result<(), ModelError> {
    let path = path.as_ref();
    fs::write(path, certificate_to_string(cert, model))
        .map_err(|source| ModelError::Io { path: path.to_path_buf(), source })
}

pub fn read_certificate(path: impl AsRef<Path>, model: &LinearNcsModel<f64>) -> Result<Certificate<f64>, ModelError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io { path: path.to_path_buf(), source })?;
    parse_certificate(&text, model)
}

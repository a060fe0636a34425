//! User embeddings learned from training interactions.

mod cdae;
mod vae;

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cdae::{train_cdae, CdaeConfig, CdaeModel, CorruptedInput};
pub use vae::{kl_standard_normal, train_vae, VaeConfig, VaeForward, VaeModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EmbeddingKind {
    #[serde(rename = "CDAE")]
    Cdae,
    #[serde(rename = "VAE")]
    Vae,
}

impl EmbeddingKind {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingKind::Cdae => "CDAE",
            EmbeddingKind::Vae => "VAE",
        }
    }
}

impl FromStr for EmbeddingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CDAE" => Ok(EmbeddingKind::Cdae),
            "VAE" => Ok(EmbeddingKind::Vae),
            _ => Err(Error::InvalidArgument(format!("unknown embedding kind `{s}`"))),
        }
    }
}

/// Technique plus embedding width, e.g. `CDAE50` or `VAE200`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbeddingSource {
    pub kind: EmbeddingKind,
    pub size: usize,
}

impl fmt::Display for EmbeddingSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.name(), self.size)
    }
}

/// One row of metafeatures per dense user index.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub user_ids: Vec<String>,
    pub values: Array2<f64>,
    pub source: EmbeddingSource,
}

impl EmbeddingMatrix {
    pub fn n_users(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// CSV with header `user_id,f0..f{k-1}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "user_id")?;
        for j in 0..self.dim() {
            write!(w, ",f{j}")?;
        }
        writeln!(w)?;
        for (id, row) in self.user_ids.iter().zip(self.values.rows()) {
            write!(w, "{id}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, source: EmbeddingSource) -> Result<EmbeddingMatrix> {
        let mut user_ids = Vec::new();
        let mut flat = Vec::new();
        let mut dim = None;
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse { line: n + 1, message: e.to_string() })?;
            if n == 0 {
                dim = Some(line.split(',').count() - 1);
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            user_ids.push(parts.next().unwrap_or_default().to_owned());
            let before = flat.len();
            for p in parts {
                flat.push(p.parse::<f64>().map_err(|_| Error::Parse {
                    line: n + 1,
                    message: format!("bad value `{p}`"),
                })?);
            }
            if Some(flat.len() - before) != dim {
                return Err(Error::Parse { line: n + 1, message: "wrong column count".into() });
            }
        }
        let dim = dim.ok_or(Error::EmptyDataset)?;
        let values = Array2::from_shape_vec((user_ids.len(), dim), flat).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(EmbeddingMatrix { user_ids, values, source })
    }
}

/// A trained embedding model.
pub enum EmbeddingModel<'a> {
    Cdae(&'a CdaeModel),
    Vae(&'a VaeModel),
}

/// CDAE: rows of the per-user matrix V. VAE: encoder mean of each user's
/// full training vector.
pub fn extract_embeddings(
    model: EmbeddingModel<'_>,
    train: &crate::sparse::SparseBinary,
    user_ids: &[String],
) -> Result<EmbeddingMatrix> {
    if user_ids.len() != train.n_rows() {
        return Err(Error::Shape(format!("{} ids for {} users", user_ids.len(), train.n_rows())));
    }
    let (values, source) = match model {
        EmbeddingModel::Cdae(m) => {
            if m.n_items() != train.n_cols() || m.user_emb.nrows() != train.n_rows() {
                return Err(Error::Shape(format!(
                    "CDAE trained on {}x{}, matrix is {}x{}",
                    m.user_emb.nrows(),
                    m.n_items(),
                    train.n_rows(),
                    train.n_cols()
                )));
            }
            let source = EmbeddingSource { kind: EmbeddingKind::Cdae, size: m.hidden() };
            (m.user_emb.clone(), source)
        }
        EmbeddingModel::Vae(m) => {
            if m.n_items() != train.n_cols() {
                return Err(Error::Shape(format!(
                    "VAE trained on {} items, matrix has {}",
                    m.n_items(),
                    train.n_cols()
                )));
            }
            let source = EmbeddingSource { kind: EmbeddingKind::Vae, size: m.latent() };
            (m.encode_mean(train), source)
        }
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::diverged("non-finite embedding"));
    }
    Ok(EmbeddingMatrix { user_ids: user_ids.to_vec(), values, source })
}

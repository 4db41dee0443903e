use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K × d` table of latent vectors; each trajectory token names one row.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    entries: Array2<f64>,
}

impl Codebook {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if entries.nrows() < 2 {
            return Err(Error::Shape(format!("codebook needs at least 2 entries, got {}", entries.nrows())));
        }
        if !entries.iter().all(|v| v.is_finite()) {
            return Err(Error::Shape("codebook contains non-finite entries".into()));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn dim(&self) -> usize {
        self.entries.ncols()
    }
}

/// Discrete view of a trajectory: codebook ids plus the total duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajTokenSeq {
    pub ids: Vec<usize>,
    pub duration_s: f64,
}

/// Nearest codebook row for every latent row; ties go to the lowest index.
pub fn nearest_ids(entries: &ArrayView2<f64>, latent: &ArrayView2<f64>) -> Vec<usize> {
    latent
        .rows()
        .into_iter()
        .map(|z| {
            let mut best = (0, f64::INFINITY);
            for (k, c) in entries.rows().into_iter().enumerate() {
                let d: f64 = z.iter().zip(c.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.1 {
                    best = (k, d);
                }
            }
            best.0
        })
        .collect()
}

/// Replaces each latent row with its nearest codebook entry.
pub fn quantize(cb: &Codebook, latent: &Array2<f64>) -> Result<(Vec<usize>, Array2<f64>)> {
    if latent.ncols() != cb.dim() {
        return Err(Error::Shape(format!("latent width {} vs codebook dim {}", latent.ncols(), cb.dim())));
    }
    let ids = nearest_ids(&cb.entries.view(), &latent.view());
    let mut q = Array2::zeros(latent.raw_dim());
    for (r, &k) in ids.iter().enumerate() {
        q.row_mut(r).assign(&cb.entries.row(k));
    }
    Ok((ids, q))
}

use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::error::{Error, Result};

/// Partially observed matrix with entries in `[-1, 1]`.
///
/// Missing cells are stored as `0.0` in the dense view, which is exactly the
/// zero-imputed matrix used by the estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationMatrix {
    dense: DenseMatrix,
    mask: Vec<bool>,
}

impl ObservationMatrix {
    /// Build from a dense matrix and a row-major observation mask. Values at
    /// unobserved cells are discarded.
    pub fn new(dense: DenseMatrix, mask: Vec<bool>) -> Result<Self> {
        let (m, n) = dense.shape();
        if mask.len() != m * n {
            return Err(Error::dims(
                format!("mask of {} cells", m * n),
                format!("{}", mask.len()),
            ));
        }
        let mut values = dense.into_vec();
        for (idx, (v, &seen)) in values.iter_mut().zip(&mask).enumerate() {
            if !seen {
                *v = 0.0;
            } else if !(-1.0..=1.0).contains(v) {
                return Err(Error::validation(format!(
                    "observed entry ({}, {}) = {} outside [-1, 1]",
                    idx / n,
                    idx % n,
                    v
                )));
            }
        }
        Ok(Self {
            dense: DenseMatrix::new(m, n, values)?,
            mask,
        })
    }

    /// Row-major cells, `None` meaning missing.
    pub fn from_cells(rows: usize, cols: usize, cells: &[Option<f64>]) -> Result<Self> {
        if cells.len() != rows * cols {
            return Err(Error::dims(
                format!("{} cells", rows * cols),
                format!("{}", cells.len()),
            ));
        }
        let values = cells.iter().map(|c| c.unwrap_or(0.0)).collect();
        let mask = cells.iter().map(Option::is_some).collect();
        Self::new(DenseMatrix::new(rows, cols, values)?, mask)
    }

    pub fn fully_observed(dense: DenseMatrix) -> Result<Self> {
        let cells = dense.rows() * dense.cols();
        Self::new(dense, vec![true; cells])
    }

    pub fn rows(&self) -> usize {
        self.dense.rows()
    }

    pub fn cols(&self) -> usize {
        self.dense.cols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.dense.shape()
    }

    /// Zero-imputed dense view.
    pub fn dense(&self) -> &DenseMatrix {
        &self.dense
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.cols() + j]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.is_observed(i, j).then(|| self.dense[(i, j)])
    }

    pub fn num_observed(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// p̂ = |Ω| / (mn).
    pub fn observed_fraction(&self) -> f64 {
        self.num_observed() as f64 / self.mask.len() as f64
    }

    /// Observed `(row, col)` pairs in row-major order.
    pub fn observed_indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.cols();
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(idx, _)| (idx / n, idx % n))
    }

    pub fn cells(&self) -> Vec<Option<f64>> {
        self.mask
            .iter()
            .zip(self.dense.as_slice())
            .map(|(&seen, &v)| seen.then_some(v))
            .collect()
    }
}

/// Fully known matrix with entries in `[-1, 1]`; only synthetic runs have one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DenseMatrix", into = "DenseMatrix")]
pub struct GroundTruthMatrix(DenseMatrix);

impl GroundTruthMatrix {
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        if let Some(v) = matrix
            .as_slice()
            .iter()
            .find(|v| !(-1.0..=1.0).contains(*v))
        {
            return Err(Error::validation(format!(
                "ground truth entry {v} outside [-1, 1]"
            )));
        }
        Ok(Self(matrix))
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }
}

impl TryFrom<DenseMatrix> for GroundTruthMatrix {
    type Error = Error;

    fn try_from(m: DenseMatrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<GroundTruthMatrix> for DenseMatrix {
    fn from(g: GroundTruthMatrix) -> Self {
        g.0
    }
}

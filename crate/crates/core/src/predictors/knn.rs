//! User-based K-nearest-neighbour collaborative filtering with adjusted cosine
//! similarity (rows centred by column means).

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 10 }
    }
}

impl KnnConfig {
    pub fn validate(&self, rows: usize) -> Result<()> {
        if self.k == 0 || self.k >= rows {
            return Err(Error::validation(format!(
                "k must satisfy 0 < k < m, got k={} with m={rows}",
                self.k
            )));
        }
        Ok(())
    }
}

pub fn column_means(b: &DenseMatrix) -> Vec<f64> {
    let (m, n) = b.shape();
    let mut means = vec![0.0; n];
    for i in 0..m {
        for (acc, v) in means.iter_mut().zip(b.row(i)) {
            *acc += v;
        }
    }
    means.iter_mut().for_each(|v| *v /= m as f64);
    means
}

fn centered_row(b: &DenseMatrix, means: &[f64], i: usize) -> Vec<f64> {
    b.row(i).iter().zip(means).map(|(x, mu)| x - mu).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub fn adjusted_cosine_similarity(b: &DenseMatrix, i: usize, j: usize) -> Result<f64> {
    b.row_checked(i)?;
    b.row_checked(j)?;
    let means = column_means(b);
    let (ci, cj) = (centered_row(b, &means, i), centered_row(b, &means, j));
    // fixed operand order keeps sim(i, j) == sim(j, i) bit for bit
    Ok(if i <= j { cosine(&ci, &cj) } else { cosine(&cj, &ci) })
}

/// All pairwise similarities, m × m.
pub fn similarity_matrix(b: &DenseMatrix) -> Array2<f64> {
    let (m, n) = b.shape();
    let means = column_means(b);
    let mut centered = Array2::from_shape_vec((m, n), b.as_slice().to_vec())
        .expect("shape matches the source matrix");
    for mut row in centered.rows_mut() {
        for (x, mu) in row.iter_mut().zip(&means) {
            *x -= mu;
        }
    }
    let norms: Vec<f64> = centered
        .rows()
        .into_iter()
        .map(|r: ArrayView1<f64>| r.dot(&r).sqrt())
        .collect();
    let mut sim = centered.dot(&centered.t());
    for i in 0..m {
        for j in 0..m {
            let d = norms[i] * norms[j];
            sim[[i, j]] = if d == 0.0 {
                0.0
            } else {
                (sim[[i, j]] / d).clamp(-1.0, 1.0)
            };
        }
    }
    sim
}

/// Indices of the `k` largest similarities excluding `i`; ties go to the lower index.
fn top_k(sims: &[f64], i: usize, k: usize) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..sims.len()).filter(|&j| j != i).collect();
    let cmp = |a: &usize, b: &usize| sims[*b].total_cmp(&sims[*a]).then(a.cmp(b));
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, cmp);
        candidates.truncate(k);
    }
    candidates.sort_by(cmp);
    candidates
}

fn weighted_prediction(b: &DenseMatrix, sims: &[f64], neighbors: &[usize], means: &[f64]) -> Vec<f64> {
    let denom: f64 = neighbors.iter().map(|&j| sims[j].abs()).sum();
    if denom == 0.0 {
        return means.to_vec();
    }
    let mut out = vec![0.0; b.cols()];
    for &j in neighbors {
        let w = sims[j] / denom;
        for (o, x) in out.iter_mut().zip(b.row(j)) {
            *o += w * x;
        }
    }
    out
}

pub fn knn_predict(b: &DenseMatrix, i: usize, cfg: &KnnConfig) -> Result<Vec<f64>> {
    cfg.validate(b.rows())?;
    b.row_checked(i)?;
    let means = column_means(b);
    let ci = centered_row(b, &means, i);
    let sims: Vec<f64> = (0..b.rows())
        .map(|j| {
            let cj = centered_row(b, &means, j);
            if i <= j {
                cosine(&ci, &cj)
            } else {
                cosine(&cj, &ci)
            }
        })
        .collect();
    let neighbors = top_k(&sims, i, cfg.k);
    Ok(weighted_prediction(b, &sims, &neighbors, &means))
}

/// Predictions for every row, parallel over rows.
pub fn knn_predict_all(b: &DenseMatrix, cfg: &KnnConfig) -> Result<DenseMatrix> {
    cfg.validate(b.rows())?;
    let means = column_means(b);
    let sim = similarity_matrix(b);
    let rows: Vec<Vec<f64>> = (0..b.rows())
        .into_par_iter()
        .map(|i| {
            let sims = sim.row(i).to_vec();
            let neighbors = top_k(&sims, i, cfg.k);
            weighted_prediction(b, &sims, &neighbors, &means)
        })
        .collect();
    DenseMatrix::from_rows(&rows)
}

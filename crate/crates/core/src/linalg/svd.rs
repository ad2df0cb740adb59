//! One-sided (Hestenes) Jacobi singular value decomposition.
//!
//! The working matrix is the input or its transpose, whichever has at least as
//! many rows as columns. Pairs of columns are rotated until every pair is
//! orthogonal to within `tol` relative to the product of their norms. Column
//! norms are then the singular values, the normalised columns are one side of
//! the decomposition and the accumulated rotations are the other.

use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_SVD_TOL: f64 = 1e-10;

/// Sweep cap is `max_sweeps_per_dim × min(m, n)`.
pub const DEFAULT_SWEEPS_PER_DIM: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvdOptions {
    pub tol: f64,
    /// Overrides the default cap of `100 × min(m, n)` sweeps.
    pub max_sweeps: Option<usize>,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_SVD_TOL,
            max_sweeps: None,
        }
    }
}

/// Thin SVD `M = Σ_ℓ σ_ℓ u_ℓ v_ℓᵀ` with `k = min(m, n)` components.
///
/// Singular values are sorted descending. The largest-magnitude entry of every
/// left vector is non-negative (the right vector is flipped along with it).
/// Ties between equal singular values leave the subspace basis arbitrary; only
/// rotation-invariant quantities should be derived from tied components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralDecomposition {
    singular_values: Vec<f64>,
    left: DenseMatrix,
    right: DenseMatrix,
}

impl SpectralDecomposition {
    /// Assemble a decomposition from explicit factors. `left` is m×k, `right` is n×k.
    pub fn from_parts(
        singular_values: Vec<f64>,
        left: DenseMatrix,
        right: DenseMatrix,
    ) -> Result<Self> {
        let k = singular_values.len();
        if left.cols() != k || right.cols() != k {
            return Err(Error::dims(
                format!("{k} singular vectors per side"),
                format!("{} left, {} right", left.cols(), right.cols()),
            ));
        }
        if singular_values.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::validation("singular values must be finite and >= 0"));
        }
        if singular_values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::validation("singular values must be sorted descending"));
        }
        Ok(Self {
            singular_values,
            left,
            right,
        })
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// m×k matrix whose columns are the left singular vectors.
    pub fn left(&self) -> &DenseMatrix {
        &self.left
    }

    /// n×k matrix whose columns are the right singular vectors.
    pub fn right(&self) -> &DenseMatrix {
        &self.right
    }

    pub fn rank_k(&self) -> usize {
        self.singular_values.len()
    }

    pub fn left_vector(&self, l: usize) -> Vec<f64> {
        self.left.column(l)
    }

    pub fn right_vector(&self, l: usize) -> Vec<f64> {
        self.right.column(l)
    }

    /// `Σ_{ℓ ∈ components} weight(σ_ℓ) · u_ℓ v_ℓᵀ`, an m×n matrix.
    pub fn weighted_outer_sum(
        &self,
        components: &[usize],
        weight: impl Fn(f64) -> f64,
    ) -> DenseMatrix {
        let m = self.left.rows();
        let n = self.right.rows();
        let weights: Vec<f64> = components
            .iter()
            .map(|&l| weight(self.singular_values[l]))
            .collect();
        let right_cols: Vec<Vec<f64>> = components.iter().map(|&l| self.right.column(l)).collect();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for ((&l, w), v) in components.iter().zip(&weights).zip(&right_cols) {
                let coef = w * self.left[(i, l)];
                if coef == 0.0 {
                    continue;
                }
                for (o, vj) in row.iter_mut().zip(v) {
                    *o += coef * vj;
                }
            }
        }
        DenseMatrix::new(m, n, out).expect("outer sum of finite factors is finite")
    }

    /// `U Σ Vᵀ` over every component.
    pub fn reconstruct(&self) -> DenseMatrix {
        let all: Vec<usize> = (0..self.rank_k()).collect();
        self.weighted_outer_sum(&all, |s| s)
    }
}

pub fn svd(matrix: &DenseMatrix, tol: f64) -> Result<SpectralDecomposition> {
    svd_with(
        matrix,
        SvdOptions {
            tol,
            ..SvdOptions::default()
        },
    )
}

pub fn svd_with(matrix: &DenseMatrix, opts: SvdOptions) -> Result<SpectralDecomposition> {
    if !(opts.tol.is_finite() && opts.tol > 0.0) {
        return Err(Error::validation(format!(
            "svd tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let (m, n) = matrix.shape();
    let transposed = m < n;
    // working matrix is p×k, p ≥ k, stored column-major
    let (p, k) = if transposed { (n, m) } else { (m, n) };
    let mut work = vec![0.0; p * k];
    for i in 0..m {
        for (j, &v) in matrix.row(i).iter().enumerate() {
            if transposed {
                work[i * p + j] = v;
            } else {
                work[j * p + i] = v;
            }
        }
    }
    let mut rot = vec![0.0; k * k];
    for c in 0..k {
        rot[c * k + c] = 1.0;
    }

    let cap = opts
        .max_sweeps
        .unwrap_or(DEFAULT_SWEEPS_PER_DIM * k.max(1));
    let mut norms: Vec<f64> = (0..k).map(|c| sq_norm(&work[c * p..(c + 1) * p])).collect();
    // columns this small are numerically zero; rotating them only churns rounding noise
    let total: f64 = norms.iter().sum();
    let floor = total * (f64::EPSILON * p as f64).powi(2);
    let mut converged = false;
    for _sweep in 0..cap {
        let mut rotated = false;
        for i in 0..k.saturating_sub(1) {
            for j in (i + 1)..k {
                let alpha = norms[i];
                let beta = norms[j];
                if alpha <= floor || beta <= floor {
                    continue;
                }
                let (ci, cj) = column_pair(&mut work, p, i, j);
                let gamma = dot(ci, cj);
                if gamma.abs() <= opts.tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(ci, cj, c, s);
                let (ri, rj) = column_pair(&mut rot, k, i, j);
                rotate(ri, rj, c, s);
                norms[i] = alpha - t * gamma;
                norms[j] = beta + t * gamma;
            }
        }
        // refresh against drift of the incremental updates
        for (c, nrm) in norms.iter_mut().enumerate() {
            *nrm = sq_norm(&work[c * p..(c + 1) * p]);
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { sweeps: cap });
    }

    let mut order: Vec<usize> = (0..k).collect();
    let sigma_raw: Vec<f64> = norms.iter().map(|v| v.sqrt()).collect();
    order.sort_by(|&a, &b| sigma_raw[b].total_cmp(&sigma_raw[a]).then(a.cmp(&b)));
    let sigma: Vec<f64> = order.iter().map(|&c| sigma_raw[c]).collect();
    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    let negligible = sigma_max * f64::EPSILON * p as f64;

    // orthonormal columns from the rotated work matrix, completed where σ is negligible
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut pending = Vec::new();
    for (slot, &c) in order.iter().enumerate() {
        let s = sigma[slot];
        if s > negligible && s > 0.0 {
            basis.push(work[c * p..(c + 1) * p].iter().map(|v| v / s).collect());
        } else {
            basis.push(Vec::new());
            pending.push(slot);
        }
    }
    complete_basis(&mut basis, &pending, p);
    let other: Vec<Vec<f64>> = order
        .iter()
        .map(|&c| rot[c * k..(c + 1) * k].to_vec())
        .collect();

    // sign convention on the left vectors
    let (mut left_cols, mut right_cols) = if transposed {
        (other, basis)
    } else {
        (basis, other)
    };
    for (u, v) in left_cols.iter_mut().zip(right_cols.iter_mut()) {
        let pivot = u
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |best, (idx, &x)| {
                if x.abs() > best.1 {
                    (idx, x.abs())
                } else {
                    best
                }
            })
            .0;
        if u[pivot] < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }

    let left = columns_to_matrix(&left_cols, m);
    let right = columns_to_matrix(&right_cols, n);
    SpectralDecomposition::from_parts(sigma, left, right)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sq_norm(a: &[f64]) -> f64 {
    dot(a, a)
}

fn column_pair(data: &mut [f64], len: usize, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(i < j);
    let (head, tail) = data.split_at_mut(j * len);
    (&mut head[i * len..(i + 1) * len], &mut tail[..len])
}

#[inline]
fn rotate(ci: &mut [f64], cj: &mut [f64], c: f64, s: f64) {
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fill `basis[slot]` for every pending slot with a unit vector orthogonal to
/// all other columns, by Gram–Schmidt on the standard basis.
fn complete_basis(basis: &mut [Vec<f64>], pending: &[usize], dim: usize) {
    let mut candidate = 0usize;
    for &slot in pending {
        loop {
            assert!(candidate < dim, "ran out of completion candidates");
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            // two passes of classical Gram–Schmidt
            for _ in 0..2 {
                for (other, col) in basis.iter().enumerate() {
                    if other == slot || col.is_empty() {
                        continue;
                    }
                    let proj = dot(&e, col);
                    for (x, y) in e.iter_mut().zip(col) {
                        *x -= proj * y;
                    }
                }
            }
            let nrm = sq_norm(&e).sqrt();
            if nrm > 0.1 {
                e.iter_mut().for_each(|x| *x /= nrm);
                basis[slot] = e;
                break;
            }
        }
    }
}

fn columns_to_matrix(cols: &[Vec<f64>], rows: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols.len(), |i, l| cols[l][i])
}

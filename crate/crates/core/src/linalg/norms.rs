use serde::{Deserialize, Serialize};

use super::{svd, DenseMatrix, DEFAULT_SVD_TOL};
use crate::error::{Error, Result};

/// Row-distance norm order. Only ℓ¹ and ℓ² appear in the fairness metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LqNorm {
    L1,
    L2,
}

impl LqNorm {
    pub fn order(self) -> u32 {
        match self {
            LqNorm::L1 => 1,
            LqNorm::L2 => 2,
        }
    }

    pub fn of(self, x: &[f64]) -> f64 {
        match self {
            LqNorm::L1 => x.iter().map(|v| v.abs()).sum(),
            LqNorm::L2 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// `‖a − b‖_q` without allocating.
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let diffs = a.iter().zip(b).map(|(x, y)| x - y);
        match self {
            LqNorm::L1 => diffs.map(f64::abs).sum(),
            LqNorm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        }
    }
}

impl TryFrom<u32> for LqNorm {
    type Error = Error;

    fn try_from(q: u32) -> Result<Self> {
        match q {
            1 => Ok(LqNorm::L1),
            2 => Ok(LqNorm::L2),
            other => Err(Error::validation(format!(
                "norm order must be 1 or 2, got {other}"
            ))),
        }
    }
}

/// Largest absolute entry, `max_{ij} |M_ij|`.
pub fn entrywise_max_abs(matrix: &DenseMatrix) -> f64 {
    matrix
        .as_slice()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest column ℓ¹ norm, `max_k Σ_i |M_ik|`.
pub fn column_l1_max(matrix: &DenseMatrix) -> f64 {
    let mut sums = vec![0.0; matrix.cols()];
    for i in 0..matrix.rows() {
        for (s, v) in sums.iter_mut().zip(matrix.row(i)) {
            *s += v.abs();
        }
    }
    sums.into_iter().fold(0.0, f64::max)
}

pub fn lq_row_distance(matrix: &DenseMatrix, i: usize, j: usize, q: LqNorm) -> Result<f64> {
    let a = matrix.row_checked(i)?;
    let b = matrix.row_checked(j)?;
    Ok(q.distance(a, b))
}

/// `‖M‖_{q,∞}`: the largest row q-norm.
pub fn max_row_norm(matrix: &DenseMatrix, q: LqNorm) -> f64 {
    (0..matrix.rows())
        .map(|i| q.of(matrix.row(i)))
        .fold(0.0, f64::max)
}

pub fn nuclear_norm(matrix: &DenseMatrix) -> Result<f64> {
    let dec = svd(matrix, DEFAULT_SVD_TOL)?;
    Ok(dec.singular_values().iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn max_abs_examples() {
        let m = DenseMatrix::from_rows(&[[1.0, -2.0], [0.5, 0.0]]).unwrap();
        assert_eq!(entrywise_max_abs(&m), 2.0);
        assert_eq!(entrywise_max_abs(&DenseMatrix::zeros(3, 4)), 0.0);
    }

    #[test]
    fn column_l1_examples() {
        let m = DenseMatrix::from_rows(&[[1.0, -1.0], [2.0, 0.0]]).unwrap();
        assert_eq!(column_l1_max(&m), 3.0);
        assert_eq!(column_l1_max(&DenseMatrix::identity(3)), 1.0);
        let ones = DenseMatrix::from_fn(7, 4, |_, _| 1.0);
        assert_eq!(column_l1_max(&ones), 7.0);
    }

    #[test]
    fn row_distance_examples() {
        let m = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(lq_row_distance(&m, 0, 2, LqNorm::L2).unwrap(), 0.0);
        assert_eq!(lq_row_distance(&m, 0, 1, LqNorm::L1).unwrap(), 2.0);
        assert_abs_diff_eq!(
            lq_row_distance(&m, 0, 1, LqNorm::L2).unwrap(),
            std::f64::consts::SQRT_2,
            epsilon = 1e-15
        );
        assert!(matches!(
            lq_row_distance(&m, 0, 3, LqNorm::L1),
            Err(Error::Index { .. })
        ));
        assert!(LqNorm::try_from(3).is_err());
    }

    #[test]
    fn nuclear_norm_examples() {
        let d = DenseMatrix::from_diagonal(&[3.0, 2.0]).unwrap();
        assert_abs_diff_eq!(nuclear_norm(&d).unwrap(), 5.0, epsilon = 1e-12);
        assert_eq!(nuclear_norm(&DenseMatrix::zeros(3, 2)).unwrap(), 0.0);
        // 4·u vᵀ with unit u, v
        let u = [0.6, 0.8];
        let v = [1.0 / 3.0_f64.sqrt(); 3];
        let r1 = DenseMatrix::from_fn(2, 3, |i, j| 4.0 * u[i] * v[j]);
        assert_abs_diff_eq!(nuclear_norm(&r1).unwrap(), 4.0, epsilon = 1e-12);
    }

    fn matrix_strategy(max_dim: usize) -> impl Strategy<Value = DenseMatrix> {
        (1..=max_dim, 1..=max_dim).prop_flat_map(|(m, n)| {
            prop::collection::vec(-5.0..5.0f64, m * n)
                .prop_map(move |v| DenseMatrix::new(m, n, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn max_abs_matches_flat_scan(m in matrix_strategy(12)) {
            let mut best = 0.0f64;
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    if m[(i, j)].abs() > best {
                        best = m[(i, j)].abs();
                    }
                }
            }
            prop_assert_eq!(entrywise_max_abs(&m), best);
        }

        #[test]
        fn nuclear_dominates_frobenius(m in matrix_strategy(10)) {
            let nuc = nuclear_norm(&m).unwrap();
            prop_assert!(nuc >= m.frobenius_norm() - 1e-8);
        }

        // ‖Tx‖₂ ≤ ‖T‖_∞ ‖x‖₁ √m and ‖Tx‖₁ ≤ ‖x‖₁ max_k ‖t_k‖₁
        #[test]
        fn lemma_inequalities(
            t in matrix_strategy(20),
            seed in prop::collection::vec(-3.0..3.0f64, 20),
        ) {
            let x: Vec<f64> = seed.iter().cycle().take(t.cols()).copied().collect();
            let tx = t.mat_vec(&x).unwrap();
            let x1 = LqNorm::L1.of(&x);
            let rows = t.rows() as f64;
            prop_assert!(LqNorm::L2.of(&tx) <= entrywise_max_abs(&t) * x1 * rows.sqrt() + 1e-12);
            prop_assert!(LqNorm::L1.of(&tx) <= x1 * column_l1_max(&t) + 1e-12);
        }
    }
}

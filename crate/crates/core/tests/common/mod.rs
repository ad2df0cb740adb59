#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use svtfair::{svt, DenseMatrix, GroundTruthMatrix, ObservationMatrix, ShrinkageFn, SvtEstimate};

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations,
/// sorted descending. Deliberately shares no code with the library SVD.
pub fn symmetric_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    for _sweep in 0..200 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Singular values as square roots of the eigenvalues of MᵀM, top min(m, n).
pub fn singular_values_from_mtm(m: &DenseMatrix) -> Vec<f64> {
    let (r, c) = m.shape();
    let mtm: Vec<Vec<f64>> = (0..c)
        .map(|i| (0..c).map(|j| (0..r).map(|t| m[(t, i)] * m[(t, j)]).sum()).collect())
        .collect();
    symmetric_eigenvalues(&mtm)
        .into_iter()
        .take(r.min(c))
        .map(|l| l.max(0.0).sqrt())
        .collect()
}

/// Singular values via the eigenvalues of the smaller Gram matrix.
pub fn oracle_singular_values(m: &DenseMatrix) -> Vec<f64> {
    let (r, c) = m.shape();
    let k = r.min(c);
    let gram: Vec<Vec<f64>> = if c <= r {
        (0..c)
            .map(|i| (0..c).map(|j| (0..r).map(|t| m[(t, i)] * m[(t, j)]).sum()).collect())
            .collect()
    } else {
        (0..r)
            .map(|i| (0..r).map(|j| (0..c).map(|t| m[(i, t)] * m[(j, t)]).sum()).collect())
            .collect()
    };
    let mut out: Vec<f64> = symmetric_eigenvalues(&gram)
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    out.truncate(k);
    out
}

pub fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DenseMatrix {
    DenseMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

/// Low-rank signal in [-1, 1] plus bounded noise, observed with probability
/// `p`. Returns the observations and the noiseless signal.
pub fn random_observations_with_truth(
    rng: &mut ChaCha8Rng,
    m: usize,
    n: usize,
    p: f64,
) -> (ObservationMatrix, GroundTruthMatrix) {
    let rank = rng.random_range(1..=3usize);
    let u = random_matrix(rng, m, rank);
    let v = random_matrix(rng, rank, n);
    let signal = u.matmul(&v).unwrap().scale(1.0 / rank as f64);
    let noisy = DenseMatrix::from_fn(m, n, |i, j| (signal[(i, j)] + rng.random_range(-0.2..0.2)).clamp(-1.0, 1.0));
    let mut mask: Vec<bool> = (0..m * n).map(|_| rng.random_bool(p)).collect();
    mask[0] = true;
    let dense = DenseMatrix::from_fn(m, n, |i, j| if mask[i * n + j] { noisy[(i, j)] } else { 0.0 });
    (
        ObservationMatrix::new(dense, mask).unwrap(),
        GroundTruthMatrix::new(signal).unwrap(),
    )
}

pub fn random_observations(rng: &mut ChaCha8Rng, m: usize, n: usize, p: f64) -> ObservationMatrix {
    random_observations_with_truth(rng, m, n, p).0
}

/// One member of the theorem-check family: m ≤ 30, n ≤ 60, unclipped SVT with
/// linear ψ and a random threshold below the top singular value.
pub struct TheoremInstance {
    pub obs: ObservationMatrix,
    pub truth: GroundTruthMatrix,
    pub est: SvtEstimate,
    pub beta: f64,
}

pub fn theorem_instance(seed: u64) -> TheoremInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(3..=30);
    let n = rng.random_range(3..=60);
    let p = rng.random_range(0.2..1.0);
    let (obs, truth) = random_observations_with_truth(&mut rng, m, n, p);
    let sigma1 = svtfair::linalg::svd(obs.dense(), 1e-12).unwrap().singular_values()[0];
    let tau = rng.random_range(0.0..1.0) * sigma1;
    let beta = rng.random_range(0.5..3.0);
    let est = svt(&obs, tau, ShrinkageFn::linear(beta).unwrap(), false).unwrap();
    TheoremInstance { obs, truth, est, beta }
}

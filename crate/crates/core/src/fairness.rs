//! Individual-fairness certificates for SVT pre-processing.
//!
//! K₂ is the factor by which the pre-processing stage rescales the Lipschitz
//! constant of a downstream map with respect to the observed rows:
//!
//! ```text
//! K₂ = ‖ Σ_{ℓ∈S(τ)} ψ(σ_ℓ)/σ_ℓ² · u_ℓ v_ℓᵀ ‖_∞ · √n · max_k ‖z_k‖₁
//! ```
//!
//! where ‖·‖_∞ is the largest absolute entry and z_k are the columns of the
//! zero-imputed observations. The theorem checks below evaluate the resulting
//! inequalities on every ordered pair of rows using a fixed unit-norm linear
//! functional as the downstream map, which is 1-Lipschitz in both ℓ¹ and ℓ².

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{ShrinkageFn, SvtEstimate};
use crate::linalg::{
    column_l1_max, entrywise_max_abs, max_row_norm, DenseMatrix, GroundTruthMatrix, LqNorm,
    ObservationMatrix,
};

/// Slack allowed in the pairwise inequality checks.
pub const THEOREM_TOL: f64 = 1e-8;

fn ensure_from_obs(obs: &ObservationMatrix, est: &SvtEstimate) -> Result<()> {
    let dec = &est.decomposition;
    let shape = (dec.left().rows(), dec.right().rows());
    if shape != obs.shape() {
        return Err(Error::dims(
            format!("estimate of shape {:?}", obs.shape()),
            format!("{shape:?}"),
        ));
    }
    Ok(())
}

pub fn k2_constant(obs: &ObservationMatrix, est: &SvtEstimate) -> Result<f64> {
    ensure_from_obs(obs, est)?;
    if est.kept_set.is_empty() {
        return Ok(0.0);
    }
    let psi = est.psi;
    let weighted = est
        .decomposition
        .weighted_outer_sum(&est.kept_set, |s| psi.apply(s) / (s * s));
    let n = obs.cols() as f64;
    Ok(entrywise_max_abs(&weighted) * n.sqrt() * column_l1_max(obs.dense()))
}

/// β√(r·m)/τ.
pub fn k2_bound(beta: f64, rank_kept: usize, m: usize, tau: f64) -> Result<f64> {
    if tau == 0.0 {
        return Err(Error::ZeroThreshold);
    }
    if !(tau.is_finite() && tau > 0.0) || !(beta.is_finite() && beta > 0.0) {
        return Err(Error::validation(format!(
            "bound needs beta > 0 and tau > 0, got beta={beta}, tau={tau}"
        )));
    }
    Ok(beta * ((rank_kept * m) as f64).sqrt() / tau)
}

/// Intermediate bound `(β/τ) · ‖Σ u_ℓ v_ℓᵀ‖_∞ · √n · max_k ‖z_k‖₁` obtained by
/// replacing each σ_ℓ in K₂ with the threshold. Requires linear ψ.
pub fn k2_chain_bound(obs: &ObservationMatrix, est: &SvtEstimate) -> Result<f64> {
    ensure_from_obs(obs, est)?;
    if est.kept_set.is_empty() {
        return Ok(0.0);
    }
    if est.tau == 0.0 {
        return Err(Error::ZeroThreshold);
    }
    let projector = est.decomposition.weighted_outer_sum(&est.kept_set, |_| 1.0);
    let n = obs.cols() as f64;
    Ok(est.psi.slope() / est.tau
        * entrywise_max_abs(&projector)
        * n.sqrt()
        * column_l1_max(obs.dense()))
}

/// Smallest μ₁ with `‖Σ_{ℓ∈S(τ)} u_ℓ v_ℓᵀ‖_∞ ≤ √(μ₁ r / (mn))`.
pub fn incoherence_parameter(est: &SvtEstimate) -> Result<f64> {
    let r = est.kept_set.len();
    if r == 0 {
        return Err(Error::NoKeptComponents);
    }
    let dec = &est.decomposition;
    let (m, n) = (dec.left().rows() as f64, dec.right().rows() as f64);
    let projector = dec.weighted_outer_sum(&est.kept_set, |_| 1.0);
    let peak = entrywise_max_abs(&projector);
    Ok(peak * peak * m * n / r as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessCertificate {
    pub k2: f64,
    pub k2_bound: Option<f64>,
    pub mu1: Option<f64>,
    pub rank_kept: usize,
    pub tau: f64,
    pub beta: Option<f64>,
    /// `μ₁ ≤ 1`, the incoherence level under which the bound is claimed.
    pub incoherence_premise: Option<bool>,
    /// `k2 ≤ k2_bound`, evaluated only when the premise holds. A `false` here
    /// is a recorded violation, not an error.
    pub bound_holds: Option<bool>,
}

pub fn certify(obs: &ObservationMatrix, est: &SvtEstimate) -> Result<FairnessCertificate> {
    let k2 = k2_constant(obs, est)?;
    let beta = match est.psi {
        ShrinkageFn::Linear { beta } => Some(beta),
        ShrinkageFn::Identity => Some(1.0),
    };
    let rank_kept = est.rank_kept();
    let mu1 = (rank_kept > 0).then(|| incoherence_parameter(est)).transpose()?;
    let k2_bound = match (beta, rank_kept, est.tau > 0.0) {
        (Some(b), r, true) if r > 0 => Some(k2_bound(b, r, obs.rows(), est.tau)?),
        _ => None,
    };
    let incoherence_premise = mu1.map(|mu| mu <= 1.0 + THEOREM_TOL);
    Ok(FairnessCertificate {
        k2,
        k2_bound,
        mu1,
        rank_kept,
        tau: est.tau,
        beta,
        incoherence_premise,
        bound_holds: match (k2_bound, incoherence_premise) {
            (Some(b), Some(true)) => Some(k2 <= b + THEOREM_TOL),
            _ => None,
        },
    })
}

/// Mean pairwise ratio `‖g_i − g_j‖₂ / ‖X_i − X_j‖_q` over ordered pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IfRatio {
    pub value: f64,
    pub q: LqNorm,
    pub pairs_used: usize,
    pub pairs_skipped_zero_denominator: usize,
}

/// IF on Z (ℓ¹ denominator) and, when a ground truth exists, on A (ℓ²).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IfMetrics {
    pub if_on_z: IfRatio,
    pub if_on_a: Option<IfRatio>,
}

fn ensure_same_rows(predictions: &DenseMatrix, reference: &DenseMatrix) -> Result<()> {
    if predictions.rows() != reference.rows() {
        return Err(Error::dims(
            format!("{} prediction rows", reference.rows()),
            format!("{}", predictions.rows()),
        ));
    }
    Ok(())
}

/// Averages over ordered pairs `i ≠ j` whose reference distance is nonzero.
/// Pairs are accumulated in a fixed order so the sum is reproducible.
pub fn if_ratio(predictions: &DenseMatrix, reference: &DenseMatrix, q: LqNorm) -> Result<IfRatio> {
    ensure_same_rows(predictions, reference)?;
    let m = reference.rows();
    let mut total = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for i in 0..m {
        for j in (i + 1)..m {
            let denom = q.distance(reference.row(i), reference.row(j));
            if denom == 0.0 {
                skipped += 2;
                continue;
            }
            let num = LqNorm::L2.distance(predictions.row(i), predictions.row(j));
            // (i, j) and (j, i) contribute identically
            total += 2.0 * (num / denom);
            used += 2;
        }
    }
    if used == 0 {
        return Err(Error::DegenerateReference);
    }
    Ok(IfRatio {
        value: total / used as f64,
        q,
        pairs_used: used,
        pairs_skipped_zero_denominator: skipped,
    })
}

/// Ratios for `num_pairs` distinct unordered pairs drawn uniformly with a
/// seeded generator. Zero-denominator pairs are redrawn.
pub fn pairwise_ratio_sample(
    predictions: &DenseMatrix,
    reference: &DenseMatrix,
    q: LqNorm,
    num_pairs: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    ensure_same_rows(predictions, reference)?;
    if num_pairs == 0 {
        return Err(Error::validation("num_pairs must be at least 1"));
    }
    let m = reference.rows();
    let available = m * m.saturating_sub(1) / 2;
    if num_pairs > available {
        return Err(Error::validation(format!(
            "{num_pairs} distinct pairs requested but only {available} exist"
        )));
    }
    let max_attempts = 100 * num_pairs + 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(num_pairs * 2);
    let mut ratios = Vec::with_capacity(num_pairs);
    let mut attempts = 0usize;
    while ratios.len() < num_pairs {
        if attempts >= max_attempts {
            return Err(Error::RetriesExhausted {
                wanted: num_pairs,
                attempts,
            });
        }
        attempts += 1;
        let a = rng.random_range(0..m);
        let b = rng.random_range(0..m);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if !seen.insert(key) {
            continue;
        }
        let denom = q.distance(reference.row(key.0), reference.row(key.1));
        if denom == 0.0 {
            continue;
        }
        let num = LqNorm::L2.distance(predictions.row(key.0), predictions.row(key.1));
        ratios.push(num / denom);
    }
    Ok(ratios)
}

/// `h(i, B) = ⟨w, B_i⟩` with `‖w‖₂ = 1`. Lipschitz constant 1 for ℓ² (Cauchy–Schwarz)
/// and for ℓ¹ (since ‖w‖_∞ ≤ ‖w‖₂).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe {
    weights: Vec<f64>,
}

impl LinearProbe {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let norm = LqNorm::L2.of(&weights);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::validation("probe weights must be finite and nonzero"));
        }
        Ok(Self {
            weights: weights.into_iter().map(|w| w / norm).collect(),
        })
    }

    /// Gaussian direction normalised to the unit sphere.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            if let Ok(p) = Self::new(w) {
                return p;
            }
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lipschitz(&self) -> f64 {
        1.0
    }

    pub fn apply_row(&self, row: &[f64]) -> f64 {
        self.weights.iter().zip(row).map(|(w, x)| w * x).sum()
    }

    /// One prediction per row, as an m×1 matrix.
    pub fn apply(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if b.cols() != self.weights.len() {
            return Err(Error::dims(
                format!("{} columns", self.weights.len()),
                format!("{}", b.cols()),
            ));
        }
        let out = (0..b.rows()).map(|i| self.apply_row(b.row(i))).collect();
        DenseMatrix::new(b.rows(), 1, out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub i: usize,
    pub j: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub pairs_checked: usize,
    /// Largest `lhs − rhs` over all pairs; ≤ tol means the inequality held everywhere.
    pub max_excess: f64,
    pub tol: f64,
    pub violations: Vec<Violation>,
}

impl TheoremCheck {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_pairs(m: usize, tol: f64, mut sides: impl FnMut(usize, usize) -> (f64, f64)) -> TheoremCheck {
    let mut max_excess = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    let mut pairs = 0usize;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let (lhs, rhs) = sides(i, j);
            pairs += 1;
            let excess = lhs - rhs;
            max_excess = max_excess.max(excess);
            if excess > tol {
                violations.push(Violation { i, j, lhs, rhs });
            }
        }
    }
    TheoremCheck {
        pairs_checked: pairs,
        max_excess: if pairs == 0 { 0.0 } else { max_excess },
        tol,
        violations,
    }
}

/// `|h(i, Â) − h(j, Â)| ≤ K₁ K₂ ‖Z_i − Z_j‖₁` for every ordered pair, on the
/// unclipped estimate.
pub fn check_theorem_41(
    obs: &ObservationMatrix,
    est: &SvtEstimate,
    probe: &LinearProbe,
    tol: f64,
) -> Result<TheoremCheck> {
    let k2 = k2_constant(obs, est)?;
    let h = probe.apply(&est.a_hat_unclipped)?;
    let z = obs.dense();
    let k1 = probe.lipschitz();
    Ok(check_pairs(obs.rows(), tol, |i, j| {
        let lhs = (h[(i, 0)] - h[(j, 0)]).abs();
        let rhs = k1 * k2 * LqNorm::L1.distance(z.row(i), z.row(j));
        (lhs, rhs)
    }))
}

/// `‖pred_i − pred_j‖₂ ≤ K₁‖A_i − A_j‖_q + 2K₁‖Â − A‖_{q,∞}` for every ordered pair.
pub fn check_theorem_43(
    truth: &GroundTruthMatrix,
    a_hat: &DenseMatrix,
    predictions: &DenseMatrix,
    k1: f64,
    q: LqNorm,
    tol: f64,
) -> Result<TheoremCheck> {
    let a = truth.matrix();
    let err = a_hat.sub(a)?;
    ensure_same_rows(predictions, a)?;
    let spread = 2.0 * k1 * max_row_norm(&err, q);
    Ok(check_pairs(a.rows(), tol, |i, j| {
        let lhs = LqNorm::L2.distance(predictions.row(i), predictions.row(j));
        let rhs = k1 * q.distance(a.row(i), a.row(j)) + spread;
        (lhs, rhs)
    }))
}

/// Everything the `audit` command reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub k2: f64,
    pub k2_bound: Option<f64>,
    pub mu1: Option<f64>,
    pub rank_kept: usize,
    pub tau: f64,
    pub if_on_z: Option<IfRatio>,
    pub if_on_a: Option<IfRatio>,
    pub mse_h: Option<f64>,
    pub mse_f: Option<f64>,
    pub violations: Vec<ReportedViolation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportedViolation {
    pub check: String,
    #[serde(flatten)]
    pub violation: Violation,
}

//! Singular value thresholding and the universal threshold rule.
//!
//! `svt` zero-imputes the observations, takes a full SVD, keeps every
//! component whose singular value is strictly above `tau`, rescales the kept
//! singular values with the shrinkage function and finally clips to `[-1, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    svd, DenseMatrix, GroundTruthMatrix, ObservationMatrix, SpectralDecomposition,
    DEFAULT_SVD_TOL,
};

/// Default `w` in `τ = √(w · dim · p̂)`.
pub const DEFAULT_W: f64 = 2.01;

/// Increasing map applied to kept singular values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShrinkageFn {
    Identity,
    Linear { beta: f64 },
}

impl ShrinkageFn {
    pub fn linear(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::validation(format!(
                "shrinkage slope must be positive, got {beta}"
            )));
        }
        Ok(ShrinkageFn::Linear { beta })
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ShrinkageFn::Identity => x,
            ShrinkageFn::Linear { beta } => beta * x,
        }
    }

    /// β for the linear family; identity counts as β = 1.
    pub fn slope(self) -> f64 {
        match self {
            ShrinkageFn::Identity => 1.0,
            ShrinkageFn::Linear { beta } => beta,
        }
    }
}

/// Which dimension enters the universal threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionRule {
    /// `max(m, n)`.
    #[default]
    MaxDim,
    /// The number of columns `n`.
    Columns,
}

impl DimensionRule {
    pub fn pick(self, rows: usize, cols: usize) -> usize {
        match self {
            DimensionRule::MaxDim => rows.max(cols),
            DimensionRule::Columns => cols,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UsvtParams {
    pub w: f64,
    /// Entry variance bound σ²; when present the threshold uses q̂ instead of p̂.
    #[serde(default)]
    pub noise_var: Option<f64>,
    #[serde(default)]
    pub dimension: DimensionRule,
}

impl Default for UsvtParams {
    fn default() -> Self {
        Self {
            w: DEFAULT_W,
            noise_var: None,
            dimension: DimensionRule::MaxDim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvtEstimate {
    /// Clipped reconstruction, always in `[-1, 1]`.
    pub a_hat: DenseMatrix,
    pub a_hat_unclipped: DenseMatrix,
    /// Whether callers asked for the clipped output (see [`SvtEstimate::output`]).
    pub clip: bool,
    /// Indices ℓ with σ_ℓ > τ, ascending.
    pub kept_set: Vec<usize>,
    pub tau: f64,
    pub psi: ShrinkageFn,
    /// SVD of the zero-imputed observations.
    pub decomposition: SpectralDecomposition,
    pub p_hat: f64,
}

impl SvtEstimate {
    /// The matrix delivered downstream: clipped iff `clip` was requested.
    pub fn output(&self) -> &DenseMatrix {
        if self.clip {
            &self.a_hat
        } else {
            &self.a_hat_unclipped
        }
    }

    pub fn rank_kept(&self) -> usize {
        self.kept_set.len()
    }
}

/// Summary written next to an estimate matrix file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateMetadata {
    pub tau: f64,
    pub rank_kept: usize,
    pub p_hat: f64,
    pub w: Option<f64>,
    pub noise_var: Option<f64>,
    pub psi: ShrinkageFn,
    pub clip: bool,
    pub singular_values: Vec<f64>,
}

impl EstimateMetadata {
    pub fn new(est: &SvtEstimate, params: Option<&UsvtParams>) -> Self {
        Self {
            tau: est.tau,
            rank_kept: est.rank_kept(),
            p_hat: est.p_hat,
            w: params.map(|p| p.w),
            noise_var: params.and_then(|p| p.noise_var),
            psi: est.psi,
            clip: est.clip,
            singular_values: est.decomposition.singular_values().to_vec(),
        }
    }
}

pub fn impute_zeros(obs: &ObservationMatrix) -> DenseMatrix {
    obs.dense().clone()
}

/// `τ = √(w · dim · p̂)`, or `√(w · dim · q̂)` with
/// `q̂ = p̂σ² + p̂(1 − p̂)(1 − σ²)` when a variance bound is supplied.
pub fn usvt_threshold(obs: &ObservationMatrix, params: &UsvtParams) -> Result<f64> {
    if !(params.w.is_finite() && params.w > 0.0) {
        return Err(Error::validation(format!("w must be positive, got {}", params.w)));
    }
    let observed = obs.num_observed();
    if observed == 0 {
        return Err(Error::NoObservations);
    }
    let p_hat = obs.observed_fraction();
    let dim = params.dimension.pick(obs.rows(), obs.cols()) as f64;
    let rate = match params.noise_var {
        None => p_hat,
        Some(var) => {
            if !(0.0..=1.0).contains(&var) {
                return Err(Error::validation(format!(
                    "noise variance must lie in [0, 1], got {var}"
                )));
            }
            p_hat * var + p_hat * (1.0 - p_hat) * (1.0 - var)
        }
    };
    Ok((params.w * dim * rate).sqrt())
}

pub fn svt(
    obs: &ObservationMatrix,
    tau: f64,
    psi: ShrinkageFn,
    clip: bool,
) -> Result<SvtEstimate> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::validation(format!(
            "threshold must be non-negative, got {tau}"
        )));
    }
    let z = impute_zeros(obs);
    let decomposition = svd(&z, DEFAULT_SVD_TOL)?;
    let kept_set: Vec<usize> = decomposition
        .singular_values()
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > tau)
        .map(|(l, _)| l)
        .collect();
    let a_hat_unclipped = decomposition.weighted_outer_sum(&kept_set, |s| psi.apply(s));
    let a_hat = a_hat_unclipped.clip_unit();
    Ok(SvtEstimate {
        a_hat,
        a_hat_unclipped,
        clip,
        kept_set,
        tau,
        psi,
        decomposition,
        p_hat: obs.observed_fraction(),
    })
}

/// SVT with the universal threshold and ψ(x) = x / p̂.
pub fn usvt(obs: &ObservationMatrix, params: &UsvtParams, clip: bool) -> Result<SvtEstimate> {
    let tau = usvt_threshold(obs, params)?;
    let psi = ShrinkageFn::linear(1.0 / obs.observed_fraction())?;
    svt(obs, tau, psi, clip)
}

#[derive(Clone, Copy, Debug)]
pub enum MseScope<'a> {
    All,
    /// Only cells outside the observation mask of this matrix.
    Unobserved(&'a ObservationMatrix),
}

pub fn mse_vs_truth(
    estimate: &DenseMatrix,
    truth: &GroundTruthMatrix,
    scope: MseScope<'_>,
) -> Result<f64> {
    let truth = truth.matrix();
    estimate.ensure_same_shape(truth)?;
    let pairs = estimate.as_slice().iter().zip(truth.as_slice());
    match scope {
        MseScope::All => {
            let total: f64 = pairs.map(|(e, t)| (e - t) * (e - t)).sum();
            Ok(total / truth.as_slice().len() as f64)
        }
        MseScope::Unobserved(obs) => {
            if obs.shape() != truth.shape() {
                return Err(Error::dims(
                    format!("{:?} mask", truth.shape()),
                    format!("{:?}", obs.shape()),
                ));
            }
            let (total, count) = pairs
                .zip(obs.mask())
                .filter(|(_, &seen)| !seen)
                .fold((0.0, 0usize), |(acc, c), ((e, t), _)| {
                    (acc + (e - t) * (e - t), c + 1)
                });
            if count == 0 {
                return Err(Error::EmptyTestSet);
            }
            Ok(total / count as f64)
        }
    }
}

//! Synthetic clustered ground truth and noisy partial observations.
//!
//! Every draw comes from its own ChaCha8 stream keyed off the master seed, so
//! the ground truth for a seed does not change when the mask probability or
//! the noise level changes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, GroundTruthMatrix, ObservationMatrix};

const STREAM_TRUTH: u64 = 0;
const STREAM_MASK: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_MASK_PROBS: u64 = 3;

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// How the second parameter of the noise law is read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseInterpretation {
    #[default]
    Variance,
    Sd,
}

/// Additive Gaussian noise `N(0, param)` on observed cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub param: f64,
    #[serde(default)]
    pub interpretation: NoiseInterpretation,
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self {
            param: 0.0,
            interpretation: NoiseInterpretation::Sd,
        }
    }

    pub fn sd(&self) -> f64 {
        match self.interpretation {
            NoiseInterpretation::Variance => self.param.sqrt(),
            NoiseInterpretation::Sd => self.param,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.param.is_finite() && self.param >= 0.0) {
            return Err(Error::validation(format!(
                "noise parameter must be non-negative, got {}",
                self.param
            )));
        }
        Ok(())
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            param: 0.1,
            interpretation: NoiseInterpretation::Variance,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterAssignment {
    /// Each row picks a cluster uniformly at random.
    #[default]
    Uniform,
    /// Row i goes to cluster `i mod c`.
    Balanced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub m: usize,
    pub n: usize,
    pub c: usize,
    pub mean_range: (f64, f64),
    pub cov_diag_range: (f64, f64),
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub assignment: ClusterAssignment,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            m: 200,
            n: 800,
            c: 10,
            mean_range: (-1.0, 1.0),
            cov_diag_range: (0.0, 0.1),
            noise: NoiseConfig::default(),
            assignment: ClusterAssignment::Uniform,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.c == 0 {
            return Err(Error::validation("m, n and c must be positive"));
        }
        if self.c > self.m {
            return Err(Error::validation(format!(
                "{} clusters for {} rows",
                self.c, self.m
            )));
        }
        let (lo, hi) = self.mean_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::validation(format!("bad mean range ({lo}, {hi})")));
        }
        let (vlo, vhi) = self.cov_diag_range;
        if !(vlo.is_finite() && vhi.is_finite() && 0.0 <= vlo && vlo <= vhi) {
            return Err(Error::validation(format!(
                "bad variance range ({vlo}, {vhi})"
            )));
        }
        self.noise.validate()
    }
}

/// Ground truth together with the mixture that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSample {
    pub truth: GroundTruthMatrix,
    pub labels: Vec<usize>,
    /// c × n.
    pub means: DenseMatrix,
    /// c × n diagonal variances.
    pub variances: DenseMatrix,
}

fn uniform_in(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

pub fn gen_ground_truth(cfg: &SynthConfig) -> Result<GroundTruthSample> {
    cfg.validate()?;
    let (m, n, c) = (cfg.m, cfg.n, cfg.c);
    let mut rng = substream(cfg.seed, STREAM_TRUTH);
    let means = DenseMatrix::from_fn(c, n, |_, _| uniform_in(&mut rng, cfg.mean_range));
    let variances = DenseMatrix::from_fn(c, n, |_, _| uniform_in(&mut rng, cfg.cov_diag_range));
    let labels: Vec<usize> = match cfg.assignment {
        ClusterAssignment::Uniform => (0..m).map(|_| rng.random_range(0..c)).collect(),
        ClusterAssignment::Balanced => (0..m).map(|i| i % c).collect(),
    };
    let values = DenseMatrix::from_fn(m, n, |i, j| {
        let k = labels[i];
        let z: f64 = rng.sample(StandardNormal);
        (means[(k, j)] + variances[(k, j)].sqrt() * z).clamp(-1.0, 1.0)
    });
    Ok(GroundTruthSample {
        truth: GroundTruthMatrix::new(values)?,
        labels,
        means,
        variances,
    })
}

fn check_probability(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::validation(format!(
            "observation probability must lie in (0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Draws the mask from per-cell probabilities and applies clipped noise.
fn observe(
    a: &GroundTruthMatrix,
    noise: &NoiseConfig,
    seed: u64,
    prob: impl Fn(usize, usize) -> f64,
) -> Result<ObservationMatrix> {
    noise.validate()?;
    let a = a.matrix();
    let (m, n) = a.shape();
    let sd = noise.sd();
    let mut mask_rng = substream(seed, STREAM_MASK);
    let mut noise_rng = substream(seed, STREAM_NOISE);
    let mut values = Vec::with_capacity(m * n);
    let mut mask = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            let u: f64 = mask_rng.random();
            // drawn for every cell so the noise of a cell does not depend on the mask
            let eta: f64 = noise_rng.sample::<f64, _>(StandardNormal) * sd;
            let seen = u < prob(i, j);
            mask.push(seen);
            values.push(if seen {
                (a[(i, j)] + eta).clamp(-1.0, 1.0)
            } else {
                0.0
            });
        }
    }
    ObservationMatrix::new(DenseMatrix::new(m, n, values)?, mask)
}

pub fn mask_uniform(
    a: &GroundTruthMatrix,
    p: f64,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<ObservationMatrix> {
    check_probability(p)?;
    observe(a, noise, seed, |_, _| p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterMask {
    pub observations: ObservationMatrix,
    /// One length-n probability vector per cluster, each summing to `p·n`.
    pub probabilities: Vec<Vec<f64>>,
    /// Entries that exceeded 1 before capping, over all clusters.
    pub capped_entries: usize,
}

/// `n` uniforms scaled to sum `p·n`, with entries above 1 capped and the
/// excess spread evenly over the uncapped entries until none exceed 1.
pub fn cluster_probabilities(rng: &mut ChaCha8Rng, n: usize, p: f64) -> (Vec<f64>, usize) {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let sum: f64 = raw.iter().sum();
    let target = p * n as f64;
    let mut probs: Vec<f64> = if sum > 0.0 {
        raw.iter().map(|x| x * target / sum).collect()
    } else {
        vec![p; n]
    };
    let capped_initially = probs.iter().filter(|&&x| x > 1.0).count();
    let mut fixed = vec![false; n];
    loop {
        let mut excess = 0.0;
        for (x, f) in probs.iter_mut().zip(fixed.iter_mut()) {
            if !*f && *x >= 1.0 {
                excess += *x - 1.0;
                *x = 1.0;
                *f = true;
            }
        }
        let free = fixed.iter().filter(|&&f| !f).count();
        if excess <= 0.0 || free == 0 {
            break;
        }
        let share = excess / free as f64;
        for (x, _) in probs.iter_mut().zip(&fixed).filter(|(_, &f)| !f) {
            *x += share;
        }
    }
    (probs, capped_initially)
}

pub fn mask_cluster(
    a: &GroundTruthMatrix,
    labels: &[usize],
    p: f64,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<ClusterMask> {
    check_probability(p)?;
    let (m, n) = a.shape();
    if labels.len() != m {
        return Err(Error::dims(format!("{m} labels"), format!("{}", labels.len())));
    }
    let clusters = labels.iter().max().map_or(0, |k| k + 1);
    let mut rng = substream(seed, STREAM_MASK_PROBS);
    let mut probabilities = Vec::with_capacity(clusters);
    let mut capped_entries = 0;
    for _ in 0..clusters {
        let (probs, capped) = cluster_probabilities(&mut rng, n, p);
        capped_entries += capped;
        probabilities.push(probs);
    }
    let observations = observe(a, noise, seed, |i, j| probabilities[labels[i]][j])?;
    Ok(ClusterMask {
        observations,
        probabilities,
        capped_entries,
    })
}

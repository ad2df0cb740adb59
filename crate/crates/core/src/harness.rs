//! Experiment grids, aggregation over seeds, and report files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{gen_ground_truth, mask_cluster, mask_uniform, SynthConfig};
use crate::error::{Error, Result};
use crate::estimation::{mse_vs_truth, usvt, DimensionRule, MseScope, SvtEstimate, UsvtParams};
use crate::fairness::{
    certify, check_theorem_41, check_theorem_43, if_ratio, k2_constant, pairwise_ratio_sample,
    AuditReport, LinearProbe, ReportedViolation, Violation, THEOREM_TOL,
};
use crate::ingest::{load_movielens, MovieLensOptions, Subsample};
use crate::io::write_text;
use crate::linalg::{DenseMatrix, GroundTruthMatrix, LqNorm, ObservationMatrix};
use crate::predictors::knn::{knn_predict_all, KnnConfig};
use crate::predictors::mlp::{mlp_train, TrainConfig};

pub const OUTPUT_DIR_ENV: &str = "SVTFAIR_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Exp1,
    Exp2,
    Exp3,
    Exp4,
    Audit,
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp1" => Ok(Self::Exp1),
            "exp2" => Ok(Self::Exp2),
            "exp3" => Ok(Self::Exp3),
            "exp4" => Ok(Self::Exp4),
            "audit" => Ok(Self::Audit),
            other => Err(Error::validation(format!("unknown experiment {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvtSettings {
    pub w: f64,
    pub noise_var: Option<f64>,
    /// Deliver the clipped estimate to the downstream predictor.
    pub clip: bool,
    #[serde(default)]
    pub dimension: DimensionRule,
}

impl SvtSettings {
    pub fn params(&self) -> UsvtParams {
        UsvtParams {
            w: self.w,
            noise_var: self.noise_var,
            dimension: self.dimension,
        }
    }
}

impl Default for SvtSettings {
    fn default() -> Self {
        Self {
            w: crate::estimation::DEFAULT_W,
            noise_var: None,
            clip: true,
            dimension: DimensionRule::MaxDim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovieLensSettings {
    /// Defaults to `$SVTFAIR_MOVIELENS` or `data/ml-1m/ratings.dat`.
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub options: MovieLensOptions,
    pub num_pairs: usize,
    pub pair_seed: u64,
    pub histogram_bins: usize,
}

impl Default for MovieLensSettings {
    fn default() -> Self {
        Self {
            path: None,
            options: MovieLensOptions {
                subsample: Some(Subsample {
                    max_users: 2000,
                    max_movies: 2000,
                    seed: 0,
                }),
                ..MovieLensOptions::default()
            },
            num_pairs: 10_000,
            pair_seed: 0,
            histogram_bins: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Observation probabilities (exp1, exp3) or column counts (exp4).
    pub grid: Vec<f64>,
    pub num_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Observation probability for grids over `n`.
    #[serde(default = "default_p")]
    pub p: f64,
    pub synth: SynthConfig,
    #[serde(default)]
    pub knn: KnnConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub svt: SvtSettings,
    /// Train and evaluate the downstream networks; off gives SVT-only tables.
    #[serde(default = "default_true")]
    pub run_predictors: bool,
    #[serde(default)]
    pub movielens: Option<MovieLensSettings>,
    pub output_dir: PathBuf,
}

fn default_p() -> f64 {
    0.2
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn exp1() -> Self {
        Self {
            experiment: ExperimentKind::Exp1,
            grid: vec![0.05, 0.1, 0.2, 0.4],
            num_seeds: 10,
            base_seed: 0,
            p: default_p(),
            synth: SynthConfig::default(),
            knn: KnnConfig::default(),
            train: TrainConfig::default(),
            svt: SvtSettings {
                noise_var: Some(1e-4),
                ..SvtSettings::default()
            },
            run_predictors: true,
            movielens: None,
            output_dir: PathBuf::from("results"),
        }
    }

    pub fn exp3() -> Self {
        Self {
            experiment: ExperimentKind::Exp3,
            ..Self::exp1()
        }
    }

    pub fn exp4() -> Self {
        Self {
            experiment: ExperimentKind::Exp4,
            grid: vec![25.0, 100.0, 400.0, 800.0],
            p: 0.2,
            synth: SynthConfig {
                m: 500,
                c: 20,
                ..SynthConfig::default()
            },
            svt: SvtSettings {
                noise_var: Some(1e-4),
                dimension: DimensionRule::Columns,
                ..SvtSettings::default()
            },
            ..Self::exp1()
        }
    }

    pub fn exp2() -> Self {
        Self {
            experiment: ExperimentKind::Exp2,
            grid: vec![],
            num_seeds: 1,
            svt: SvtSettings {
                noise_var: None,
                dimension: DimensionRule::Columns,
                ..SvtSettings::default()
            },
            run_predictors: true,
            movielens: Some(MovieLensSettings::default()),
            ..Self::exp1()
        }
    }

    pub fn preset(kind: ExperimentKind) -> Result<Self> {
        match kind {
            ExperimentKind::Exp1 => Ok(Self::exp1()),
            ExperimentKind::Exp2 => Ok(Self::exp2()),
            ExperimentKind::Exp3 => Ok(Self::exp3()),
            ExperimentKind::Exp4 => Ok(Self::exp4()),
            ExperimentKind::Audit => Err(Error::validation("audit has no preset grid")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_seeds == 0 {
            return Err(Error::validation("num_seeds must be at least 1"));
        }
        match self.experiment {
            ExperimentKind::Exp1 | ExperimentKind::Exp3 => {
                if self.grid.is_empty() {
                    return Err(Error::validation("grid must not be empty"));
                }
                if let Some(p) = self.grid.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
                    return Err(Error::validation(format!("grid probability {p} outside (0, 1]")));
                }
            }
            ExperimentKind::Exp4 => {
                if self.grid.is_empty() {
                    return Err(Error::validation("grid must not be empty"));
                }
                if let Some(n) = self.grid.iter().find(|&&n| !(n >= 1.0 && n.fract() == 0.0)) {
                    return Err(Error::validation(format!("grid column count {n} is not a positive integer")));
                }
                if !(self.p > 0.0 && self.p <= 1.0) {
                    return Err(Error::validation(format!("p = {} outside (0, 1]", self.p)));
                }
            }
            ExperimentKind::Exp2 => {
                let ml = self
                    .movielens
                    .as_ref()
                    .ok_or_else(|| Error::validation("exp2 needs a movielens section"))?;
                if ml.num_pairs == 0 {
                    return Err(Error::validation("num_pairs must be at least 1"));
                }
                if ml.histogram_bins == 0 {
                    return Err(Error::validation("histogram_bins must be at least 1"));
                }
            }
            ExperimentKind::Audit => {}
        }
        self.synth.validate()?;
        if self.run_predictors {
            self.train.validate()?;
        }
        Ok(())
    }

    /// `$SVTFAIR_OUTPUT_DIR` wins over the configured directory.
    pub fn resolved_output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output_dir.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "MSE(h)")]
    MseH,
    #[serde(rename = "MSE(f)")]
    MseF,
    #[serde(rename = "IF1h(Z)")]
    If1H,
    #[serde(rename = "IF1f(Z)")]
    If1F,
    #[serde(rename = "K2")]
    K2,
    #[serde(rename = "IF2h(A)")]
    If2H,
    #[serde(rename = "IF2f(A)")]
    If2F,
    #[serde(rename = "MSE_svt(A)")]
    MseSvt,
    #[serde(rename = "rank")]
    Rank,
    #[serde(rename = "p_hat")]
    PHat,
    #[serde(rename = "tau")]
    Tau,
}

impl Metric {
    pub const ALL: [Metric; 11] = [
        Metric::MseH,
        Metric::MseF,
        Metric::If1H,
        Metric::If1F,
        Metric::K2,
        Metric::If2H,
        Metric::If2F,
        Metric::MseSvt,
        Metric::Rank,
        Metric::PHat,
        Metric::Tau,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::MseH => "MSE(h)",
            Metric::MseF => "MSE(f)",
            Metric::If1H => "IF1h(Z)",
            Metric::If1F => "IF1f(Z)",
            Metric::K2 => "K2",
            Metric::If2H => "IF2h(A)",
            Metric::If2F => "IF2f(A)",
            Metric::MseSvt => "MSE_svt(A)",
            Metric::Rank => "rank",
            Metric::PHat => "p_hat",
            Metric::Tau => "tau",
        }
    }
}

/// Metrics of one (grid value, seed) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub column: usize,
    pub grid_value: f64,
    pub seed: u64,
    pub metrics: BTreeMap<Metric, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub column: usize,
    pub grid_value: f64,
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    /// Twice the sample standard deviation over seeds.
    pub two_sd: f64,
    pub runs: usize,
}

impl Cell {
    pub fn from_samples(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Self {
            mean,
            two_sd: 2.0 * var.sqrt(),
            runs: xs.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: Metric,
    /// `None` where fewer than `num_seeds` runs produced the metric.
    pub cells: Vec<Option<Cell>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub config: ExperimentConfig,
    /// `"p"` or `"n"`.
    pub column_label: String,
    pub columns: Vec<f64>,
    pub rows: Vec<MetricRow>,
    pub runs: Vec<RunRecord>,
    pub errors: Vec<RunError>,
}

impl ResultTable {
    pub fn row(&self, metric: Metric) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    /// Column means of a metric, `None` for gaps.
    pub fn means(&self, metric: Metric) -> Vec<Option<f64>> {
        self.row(metric)
            .map(|r| r.cells.iter().map(|c| c.map(|c| c.mean)).collect())
            .unwrap_or_else(|| vec![None; self.columns.len()])
    }

    fn assemble(config: &ExperimentConfig, column_label: &str, outcomes: Vec<(RunRecord, Option<String>)>) -> Self {
        let mut runs = Vec::new();
        let mut errors = Vec::new();
        for (record, err) in outcomes {
            if let Some(message) = err {
                errors.push(RunError {
                    column: record.column,
                    grid_value: record.grid_value,
                    seed: record.seed,
                    message,
                });
            }
            runs.push(record);
        }
        let rows = Metric::ALL
            .iter()
            .filter_map(|&metric| {
                let cells: Vec<Option<Cell>> = (0..config.grid.len())
                    .map(|col| {
                        let xs: Vec<f64> = runs
                            .iter()
                            .filter(|r| r.column == col)
                            .filter_map(|r| r.metrics.get(&metric).copied())
                            .collect();
                        if xs.len() == config.num_seeds {
                            Cell::from_samples(&xs)
                        } else {
                            None
                        }
                    })
                    .collect();
                cells.iter().any(Option::is_some).then_some(MetricRow { metric, cells })
            })
            .collect();
        Self {
            config: config.clone(),
            column_label: column_label.to_string(),
            columns: config.grid.clone(),
            rows,
            runs,
            errors,
        }
    }
}

/// Data and estimate shared by both pipelines of a run.
struct SyntheticRun {
    truth: GroundTruthMatrix,
    obs: ObservationMatrix,
    est: SvtEstimate,
}

fn synthetic_run(cfg: &ExperimentConfig, value: f64, seed: u64) -> Result<SyntheticRun> {
    let (synth, p) = match cfg.experiment {
        ExperimentKind::Exp4 => (
            SynthConfig {
                n: value as usize,
                seed,
                ..cfg.synth.clone()
            },
            cfg.p,
        ),
        _ => (
            SynthConfig {
                seed,
                ..cfg.synth.clone()
            },
            value,
        ),
    };
    let sample = gen_ground_truth(&synth)?;
    let obs = match cfg.experiment {
        ExperimentKind::Exp3 => mask_cluster(&sample.truth, &sample.labels, p, &synth.noise, seed)?.observations,
        _ => mask_uniform(&sample.truth, p, &synth.noise, seed)?,
    };
    let est = usvt(&obs, &cfg.svt.params(), cfg.svt.clip)?;
    Ok(SyntheticRun {
        truth: sample.truth,
        obs,
        est,
    })
}

fn checked(metric: Metric, v: f64) -> Result<(Metric, f64)> {
    if v.is_finite() {
        Ok((metric, v))
    } else {
        Err(Error::validation(format!("{} is not finite", metric.name())))
    }
}

fn run_one(cfg: &ExperimentConfig, run: &SyntheticRun, seed: u64, out: &mut BTreeMap<Metric, f64>) -> Result<()> {
    let SyntheticRun { truth, obs, est } = run;
    for (metric, v) in [
        (Metric::PHat, est.p_hat),
        (Metric::Tau, est.tau),
        (Metric::Rank, est.rank_kept() as f64),
        (Metric::K2, k2_constant(obs, est)?),
        (Metric::MseSvt, mse_vs_truth(&est.a_hat, truth, MseScope::All)?),
    ] {
        let (m, v) = checked(metric, v)?;
        out.insert(m, v);
    }
    if !cfg.run_predictors {
        return Ok(());
    }
    let train = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let z = obs.dense();
    let a_hat = est.output();
    // identical mask and seed give both networks the same train/validation split
    let (model_h, _) = mlp_train(z, obs.mask(), &train)?;
    let h = model_h.predict_all(z)?;
    let (model_f, _) = mlp_train(a_hat, obs.mask(), &train)?;
    let f = model_f.predict_all(a_hat)?;
    let unobserved = MseScope::Unobserved(obs);
    let a = truth.matrix();
    for (metric, v) in [
        (Metric::MseH, mse_vs_truth(&h, truth, unobserved)?),
        (Metric::MseF, mse_vs_truth(&f, truth, unobserved)?),
        (Metric::If1H, if_ratio(&h, z, LqNorm::L1)?.value),
        (Metric::If1F, if_ratio(&f, z, LqNorm::L1)?.value),
        (Metric::If2H, if_ratio(&h, a, LqNorm::L2)?.value),
        (Metric::If2F, if_ratio(&f, a, LqNorm::L2)?.value),
    ] {
        let (m, v) = checked(metric, v)?;
        out.insert(m, v);
    }
    Ok(())
}

fn run_grid(cfg: &ExperimentConfig, expected: ExperimentKind, column_label: &str) -> Result<ResultTable> {
    if cfg.experiment != expected {
        return Err(Error::validation(format!(
            "config is for {:?}, not {expected:?}",
            cfg.experiment
        )));
    }
    cfg.validate()?;
    let tasks: Vec<(usize, f64, u64)> = cfg
        .grid
        .iter()
        .enumerate()
        .flat_map(|(col, &v)| (0..cfg.num_seeds as u64).map(move |s| (col, v, s)))
        .map(|(col, v, s)| (col, v, cfg.base_seed + s))
        .collect();
    let outcomes: Vec<(RunRecord, Option<String>)> = tasks
        .par_iter()
        .map(|&(column, grid_value, seed)| {
            let mut metrics = BTreeMap::new();
            // metrics computed before a failure are kept
            let err = synthetic_run(cfg, grid_value, seed)
                .and_then(|run| run_one(cfg, &run, seed, &mut metrics))
                .err()
                .map(|e| e.to_string());
            (
                RunRecord {
                    column,
                    grid_value,
                    seed,
                    metrics,
                },
                err,
            )
        })
        .collect();
    Ok(ResultTable::assemble(cfg, column_label, outcomes))
}

/// Uniform masks over a grid of observation probabilities.
pub fn run_experiment1(cfg: &ExperimentConfig) -> Result<ResultTable> {
    run_grid(cfg, ExperimentKind::Exp1, "p")
}

/// Cluster-dependent masks over a grid of observation probabilities.
pub fn run_experiment3(cfg: &ExperimentConfig) -> Result<ResultTable> {
    run_grid(cfg, ExperimentKind::Exp3, "p")
}

/// Uniform masks at fixed `p` over a grid of column counts.
pub fn run_experiment4(cfg: &ExperimentConfig) -> Result<ResultTable> {
    run_grid(cfg, ExperimentKind::Exp4, "n")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub max: f64,
}

impl RatioSummary {
    pub fn of(xs: &[f64]) -> Option<Self> {
        let cell = Cell::from_samples(xs)?;
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 0 {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        } else {
            sorted[mid]
        };
        Some(Self {
            count: xs.len(),
            mean: cell.mean,
            sd: cell.two_sd / 2.0,
            median,
            max: *sorted.last().expect("nonempty"),
        })
    }
}

/// Shared bins for the two ratio samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub with_svt: Vec<usize>,
    pub without_svt: Vec<usize>,
}

impl Histogram {
    pub fn build(with_svt: &[f64], without_svt: &[f64], bins: usize) -> Self {
        let hi = with_svt
            .iter()
            .chain(without_svt)
            .copied()
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let width = hi / bins as f64;
        let edges = (0..=bins).map(|k| k as f64 * width).collect();
        let count = |xs: &[f64]| {
            let mut c = vec![0usize; bins];
            for &x in xs {
                c[((x / width) as usize).min(bins - 1)] += 1;
            }
            c
        };
        Self {
            edges,
            with_svt: count(with_svt),
            without_svt: count(without_svt),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exp2Report {
    pub config: ExperimentConfig,
    pub shape: (usize, usize),
    pub p_hat: f64,
    pub tau: f64,
    pub rank_kept: usize,
    pub lines_read: Option<usize>,
    pub duplicates: Option<usize>,
    pub with_svt: RatioSummary,
    pub without_svt: RatioSummary,
    pub histogram: Histogram,
}

/// K-NN on Z and on SVT(Z) for given observations, ratios sampled on the same pairs.
pub fn run_experiment2_on(obs: &ObservationMatrix, cfg: &ExperimentConfig) -> Result<Exp2Report> {
    cfg.validate()?;
    let ml = cfg
        .movielens
        .as_ref()
        .ok_or_else(|| Error::validation("exp2 needs a movielens section"))?;
    let est = usvt(obs, &cfg.svt.params(), cfg.svt.clip)?;
    let z = obs.dense();
    let without = knn_predict_all(z, &cfg.knn)?;
    let with = knn_predict_all(est.output(), &cfg.knn)?;
    let r_without = pairwise_ratio_sample(&without, z, LqNorm::L1, ml.num_pairs, ml.pair_seed)?;
    let r_with = pairwise_ratio_sample(&with, z, LqNorm::L1, ml.num_pairs, ml.pair_seed)?;
    let summary = |xs: &[f64]| RatioSummary::of(xs).ok_or(Error::EmptyTestSet);
    Ok(Exp2Report {
        config: cfg.clone(),
        shape: obs.shape(),
        p_hat: est.p_hat,
        tau: est.tau,
        rank_kept: est.rank_kept(),
        lines_read: None,
        duplicates: None,
        with_svt: summary(&r_with)?,
        without_svt: summary(&r_without)?,
        histogram: Histogram::build(&r_with, &r_without, ml.histogram_bins),
    })
}

pub fn run_experiment2(cfg: &ExperimentConfig) -> Result<Exp2Report> {
    cfg.validate()?;
    let ml = cfg
        .movielens
        .as_ref()
        .ok_or_else(|| Error::validation("exp2 needs a movielens section"))?;
    let path = ml
        .path
        .clone()
        .or_else(crate::ingest::default_dataset_path)
        .ok_or_else(|| Error::MissingDataset {
            path: PathBuf::from("data/ml-1m/ratings.dat"),
            hint: format!(
                "set SVTFAIR_MOVIELENS or pass --path; {}",
                crate::ingest::DOWNLOAD_HINT
            ),
        })?;
    let data = load_movielens(&path, &ml.options)?;
    let mut report = run_experiment2_on(&data.observations, cfg)?;
    report.lines_read = Some(data.lines_read);
    report.duplicates = Some(data.duplicates);
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

fn format_cell(cell: Option<Cell>) -> String {
    match cell {
        Some(c) => format!("{:.2}±{:.3}", c.mean, c.two_sd),
        None => "NA".to_string(),
    }
}

pub fn table_to_csv(table: &ResultTable) -> Result<String> {
    let mut out = format!("# config={}\n", serde_json::to_string(&table.config)?);
    let header: Vec<String> = table
        .columns
        .iter()
        .map(|v| format!("{}={}", table.column_label, v))
        .collect();
    out.push_str(&format!("metric,{}\n", header.join(",")));
    for row in &table.rows {
        let cells: Vec<String> = row.cells.iter().map(|&c| format_cell(c)).collect();
        out.push_str(&format!("{},{}\n", row.metric.name(), cells.join(",")));
    }
    for e in &table.errors {
        out.push_str(&format!(
            "# error {}={} seed={}: {}\n",
            table.column_label, e.grid_value, e.seed, e.message
        ));
    }
    Ok(out)
}

pub fn emit_report(table: &ResultTable, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => table_to_csv(table)?,
        ReportFormat::Json => serde_json::to_string_pretty(table)? + "\n",
    };
    write_text(path, &text)
}

/// Inputs for an audit of one observation matrix.
pub struct AuditInputs<'a> {
    pub obs: &'a ObservationMatrix,
    pub truth: Option<&'a GroundTruthMatrix>,
    /// Estimate to audit instead of recomputing it from `obs`.
    pub a_hat: Option<&'a DenseMatrix>,
    /// Output of the pipeline under audit, usually with pre-processing.
    pub predictions: Option<&'a DenseMatrix>,
    /// Output of the same predictor without pre-processing.
    pub baseline: Option<&'a DenseMatrix>,
    pub svt: SvtSettings,
    pub probe_seed: u64,
}

fn reported(check: &str, violations: Vec<Violation>) -> impl Iterator<Item = ReportedViolation> + '_ {
    violations.into_iter().map(move |violation| ReportedViolation {
        check: check.to_string(),
        violation,
    })
}

pub fn run_audit(inputs: &AuditInputs<'_>) -> Result<AuditReport> {
    let obs = inputs.obs;
    let est = usvt(obs, &inputs.svt.params(), inputs.svt.clip)?;
    let cert = certify(obs, &est)?;
    let probe = LinearProbe::random(obs.cols(), inputs.probe_seed);
    let mut violations: Vec<ReportedViolation> =
        reported("if_on_z", check_theorem_41(obs, &est, &probe, THEOREM_TOL)?.violations).collect();
    if let (Some(bound), Some(false)) = (cert.k2_bound, cert.bound_holds) {
        violations.push(ReportedViolation {
            check: "k2_bound".into(),
            violation: Violation {
                i: 0,
                j: 0,
                lhs: cert.k2,
                rhs: bound,
            },
        });
    }
    let a_hat = inputs.a_hat.unwrap_or(est.output());
    if let Some(truth) = inputs.truth {
        let probed = probe.apply(a_hat)?;
        for q in [LqNorm::L1, LqNorm::L2] {
            let check = check_theorem_43(truth, a_hat, &probed, probe.lipschitz(), q, THEOREM_TOL)?;
            violations.extend(reported(&format!("if_on_a_l{}", q.order()), check.violations));
        }
    }
    let mse = |pred: Option<&DenseMatrix>| -> Result<Option<f64>> {
        match (pred, inputs.truth) {
            (Some(p), Some(t)) => Ok(Some(mse_vs_truth(p, t, MseScope::Unobserved(obs))?)),
            _ => Ok(None),
        }
    };
    let if_on_z = inputs
        .predictions
        .map(|p| if_ratio(p, obs.dense(), LqNorm::L1))
        .transpose()?;
    let if_on_a = match (inputs.predictions, inputs.truth) {
        (Some(p), Some(t)) => Some(if_ratio(p, t.matrix(), LqNorm::L2)?),
        _ => None,
    };
    Ok(AuditReport {
        k2: cert.k2,
        k2_bound: cert.k2_bound,
        mu1: cert.mu1,
        rank_kept: cert.rank_kept,
        tau: cert.tau,
        if_on_z,
        if_on_a,
        mse_h: mse(inputs.baseline)?,
        mse_f: mse(inputs.predictions)?,
        violations,
    })
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use svtfair::datagen::{gen_ground_truth, mask_cluster, mask_uniform, NoiseConfig, NoiseInterpretation, SynthConfig};
use svtfair::estimation::{DimensionRule, EstimateMetadata};
use svtfair::harness::{
    emit_report, run_audit, run_experiment1, run_experiment2, run_experiment3, run_experiment4,
    AuditInputs, ExperimentConfig, ExperimentKind, MovieLensSettings, ReportFormat, ResultTable, SvtSettings,
};
use svtfair::io::{read_dense, read_json, read_observations, sidecar_path, write_dense, write_json, write_observations};
use svtfair::{usvt, Error, GroundTruthMatrix, Result};

#[derive(Parser)]
#[command(name = "svtfair", version, about = "Singular value thresholding with individual-fairness audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mask {
    Uniform,
    Cluster,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dimension {
    Max,
    Cols,
}

impl From<Dimension> for DimensionRule {
    fn from(d: Dimension) -> Self {
        match d {
            Dimension::Max => DimensionRule::MaxDim,
            Dimension::Cols => DimensionRule::Columns,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Name {
    Exp1,
    Exp2,
    Exp3,
    Exp4,
}

#[derive(clap::Args)]
struct SvtArgs {
    #[arg(long, default_value_t = svtfair::estimation::DEFAULT_W)]
    w: f64,
    /// Upper bound on the observation noise variance.
    #[arg(long)]
    noise_var: Option<f64>,
    /// Keep the unclipped reconstruction.
    #[arg(long)]
    no_clip: bool,
    #[arg(long, value_enum, default_value = "max")]
    dimension: Dimension,
}

impl SvtArgs {
    fn settings(&self) -> SvtSettings {
        SvtSettings {
            w: self.w,
            noise_var: self.noise_var,
            clip: !self.no_clip,
            dimension: self.dimension.into(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a clustered ground truth and a masked, noisy observation.
    Synth {
        #[arg(long, default_value_t = 200)]
        m: usize,
        #[arg(long, default_value_t = 800)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        c: usize,
        #[arg(long, default_value_t = 0.2)]
        p: f64,
        /// Noise variance, or standard deviation with --noise-sd.
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long)]
        noise_sd: bool,
        #[arg(long, value_enum, default_value = "uniform")]
        mask: Mask,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "synth")]
        out_dir: PathBuf,
    },
    /// Estimate a matrix from an observation file.
    Svt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        svt: SvtArgs,
    },
    /// Fairness certificate and IF metrics for given matrices.
    Audit {
        /// Observations with NA for missing cells.
        #[arg(long)]
        observed: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        estimate: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Predictions of the same model trained without pre-processing.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        probe_seed: u64,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        svt: SvtArgs,
    },
    /// Run an experiment grid from a preset or a JSON config.
    Experiment {
        #[arg(long, value_enum)]
        name: Name,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        num_seeds: Option<usize>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// K-NN with and without SVT on MovieLens ratings.
    Movielens {
        #[arg(long)]
        path: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_config(name: ExperimentKind, path: Option<&Path>) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = match path {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::preset(name)?,
    };
    if cfg.experiment != name {
        return Err(Error::Validation(format!(
            "config describes {:?} but {name:?} was requested",
            cfg.experiment
        )));
    }
    Ok(cfg)
}

fn write_table(table: &ResultTable, format: Format) -> Result<()> {
    let dir = table.config.resolved_output_dir();
    let stem = format!("{:?}", table.config.experiment).to_lowercase();
    let (fmt, ext) = match format {
        Format::Csv => (ReportFormat::Csv, "csv"),
        Format::Json => (ReportFormat::Json, "json"),
    };
    let path = dir.join(format!("{stem}.{ext}"));
    emit_report(table, fmt, &path)?;
    if matches!(format, Format::Csv) {
        print!("{}", svtfair::harness::table_to_csv(table)?);
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run_exp2(cfg: &ExperimentConfig) -> Result<()> {
    let report = run_experiment2(cfg)?;
    let path = cfg.resolved_output_dir().join("exp2.json");
    write_json(&path, &report)?;
    print_json(&report)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            m,
            n,
            c,
            p,
            noise,
            noise_sd,
            mask,
            seed,
            out_dir,
        } => {
            let cfg = SynthConfig {
                m,
                n,
                c,
                noise: NoiseConfig {
                    param: noise,
                    interpretation: if noise_sd {
                        NoiseInterpretation::Sd
                    } else {
                        NoiseInterpretation::Variance
                    },
                },
                seed,
                ..SynthConfig::default()
            };
            let sample = gen_ground_truth(&cfg)?;
            let obs = match mask {
                Mask::Uniform => mask_uniform(&sample.truth, p, &cfg.noise, seed)?,
                Mask::Cluster => mask_cluster(&sample.truth, &sample.labels, p, &cfg.noise, seed)?.observations,
            };
            write_dense(out_dir.join("truth.csv"), sample.truth.matrix())?;
            write_observations(out_dir.join("observed.csv"), &obs)?;
            write_json(out_dir.join("labels.json"), &sample.labels)?;
            write_json(out_dir.join("config.json"), &cfg)?;
            eprintln!(
                "wrote {} ({} of {} cells observed)",
                out_dir.display(),
                obs.num_observed(),
                m * n
            );
            Ok(())
        }
        Command::Svt { input, output, svt } => {
            let obs = read_observations(&input)?;
            let settings = svt.settings();
            let params = settings.params();
            let est = usvt(&obs, &params, settings.clip)?;
            write_dense(&output, est.output())?;
            let meta = EstimateMetadata::new(&est, Some(&params));
            write_json(sidecar_path(&output), &meta)?;
            print_json(&meta)
        }
        Command::Audit {
            observed,
            truth,
            estimate,
            predictions,
            baseline,
            probe_seed,
            output,
            svt,
        } => {
            let obs = read_observations(&observed)?;
            let truth = truth.map(|p| read_dense(p).and_then(GroundTruthMatrix::new)).transpose()?;
            let a_hat = estimate.map(read_dense).transpose()?;
            let predictions = predictions.map(read_dense).transpose()?;
            let baseline = baseline.map(read_dense).transpose()?;
            let report = run_audit(&AuditInputs {
                obs: &obs,
                truth: truth.as_ref(),
                a_hat: a_hat.as_ref(),
                predictions: predictions.as_ref(),
                baseline: baseline.as_ref(),
                svt: svt.settings(),
                probe_seed,
            })?;
            match output {
                Some(path) => write_json(path, &report),
                None => print_json(&report),
            }
        }
        Command::Experiment {
            name,
            config,
            num_seeds,
            format,
        } => {
            let kind = match name {
                Name::Exp1 => ExperimentKind::Exp1,
                Name::Exp2 => ExperimentKind::Exp2,
                Name::Exp3 => ExperimentKind::Exp3,
                Name::Exp4 => ExperimentKind::Exp4,
            };
            let mut cfg = load_config(kind, config.as_deref())?;
            if let Some(s) = num_seeds {
                cfg.num_seeds = s;
            }
            let table = match kind {
                ExperimentKind::Exp1 => run_experiment1(&cfg)?,
                ExperimentKind::Exp3 => run_experiment3(&cfg)?,
                ExperimentKind::Exp4 => run_experiment4(&cfg)?,
                _ => return run_exp2(&cfg),
            };
            write_table(&table, format)
        }
        Command::Movielens { path, config } => {
            let mut cfg = load_config(ExperimentKind::Exp2, config.as_deref())?;
            let ml = cfg.movielens.get_or_insert_with(MovieLensSettings::default);
            if path.is_some() {
                ml.path = path;
            }
            run_exp2(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

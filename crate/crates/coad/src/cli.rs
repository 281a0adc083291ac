//! Command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use coad_core::augment::{inject, DistortionKind};
use coad_core::data::{estimate_period, RawSeries};
use coad_core::metrics::MetricsReport;
use coad_core::model::{CoadModel, Fusion, Granularity, Masking, Scoring};
use coad_core::score::{detect, DetectOptions};
use coad_core::spectral::StftWindow;
use coad_core::synth::{gen_periodic, SynthConfig};
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Context, Failure, Outcome};
use crate::io;
use crate::run::{evaluate_series, resolve, score_series, train_model, Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "coad", version, about = "Cooperative classification/reconstruction anomaly detection for univariate series")]
pub struct Cli {
    /// Seed for initialization, augmentation and random masks.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (per-dataset subdirectories for manifests).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Resolved `config.json` from an earlier run to start from.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write model.ckpt, config.json and train.csv.
    Train(TrainArgs),
    /// Score the test region and write scores.csv.
    Detect(DetectArgs),
    /// Compute metrics from scores.csv and write report.json.
    Eval(EvalArgs),
    /// Write a copy of a series with anomalies of one kind injected into its test region.
    Inject(InjectArgs),
    /// Write the synthetic periodic fixture.
    Synth(SynthArgs),
    /// Measure detect throughput and report the parameter count.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct Source {
    /// Dataset file (UCR-named .txt or .csv with `value`,`label` columns).
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    pub data: Option<PathBuf>,
    /// File listing one dataset per line (`#` comments).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Override the train/test boundary.
    #[arg(long)]
    pub split: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// Dominant period; estimated from the training data when omitted.
    #[arg(long)]
    pub period: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub frame_len: Option<usize>,
    #[arg(long)]
    pub stft_window: Option<StftWindow>,
    /// soft, hard, random or grating.
    #[arg(long)]
    pub masking: Option<Masking>,
    /// patch, step or window.
    #[arg(long)]
    pub granularity: Option<Granularity>,
    /// max, mean, feat_add or feat_gate.
    #[arg(long)]
    pub fusion: Option<Fusion>,
    /// joint, recon_only or cls_only.
    #[arg(long)]
    pub scoring: Option<Scoring>,
    #[arg(long)]
    pub bidirectional: bool,
    /// Give the residual stage its own encoders.
    #[arg(long)]
    pub no_share: bool,
    #[arg(long)]
    pub mask_ratio: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Training window stride (default: window length).
    #[arg(long)]
    pub stride: Option<usize>,
    /// Gradient-norm limit; 0 disables clipping.
    #[arg(long)]
    pub clip: Option<f64>,
    /// Probability that a training window is distorted.
    #[arg(long)]
    pub distort_prob: Option<f64>,
    /// Drop a distortion kind from training (repeatable).
    #[arg(long, value_delimiter = ',')]
    pub exclude_kind: Vec<DistortionKind>,
    /// Score smoothing width stored for later detect runs.
    #[arg(long)]
    pub smoothing: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub source: Source,
    /// Model file (default: <out>/model.ckpt).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub scoring: Option<Scoring>,
    #[arg(long)]
    pub smoothing: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: Source,
    /// Scores file (default: <out>/scores.csv).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Also write the per-dataset table with its mean row.
    #[arg(long)]
    pub aggregate: bool,
}

#[derive(Debug, Args)]
pub struct InjectArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Distortion kind injected into the test region.
    #[arg(long)]
    pub test_kind: DistortionKind,
    #[arg(long, default_value_t = 5)]
    pub count: usize,
    #[arg(long)]
    pub split: Option<usize>,
    /// Anomaly length bound (default: the estimated period).
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Use this kind for every anomaly.
    #[arg(long)]
    pub test_kind: Option<DistortionKind>,
    #[arg(long)]
    pub len: Option<usize>,
    #[arg(long)]
    pub split: Option<usize>,
    #[arg(long)]
    pub period: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 1_000_000)]
    pub points: usize,
    #[command(flatten)]
    pub model: ModelArgs,
}

impl ModelArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            period: self.period,
            window: self.window,
            patch: self.patch,
            hidden: self.hidden,
            bins: self.bins,
            layers: self.layers,
            lambda: self.lambda,
            frame_len: self.frame_len,
            stft_window: self.stft_window,
            masking: self.masking,
            granularity: self.granularity,
            fusion: self.fusion,
            scoring: self.scoring,
            bidirectional: self.bidirectional.then_some(true),
            share_encoders: self.no_share.then_some(false),
            mask_ratio: self.mask_ratio,
            ..Overrides::default()
        }
    }
}

impl TrainArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            epochs: self.epochs,
            batch: self.batch,
            lr: self.lr,
            stride: self.stride,
            clip: self.clip,
            distort_probability: self.distort_prob,
            exclude_kinds: self.exclude_kind.clone(),
            smoothing: self.smoothing,
            ..self.model.overrides()
        }
    }
}

/// One dataset with its output directory.
struct Job {
    data: PathBuf,
    dir: PathBuf,
}

fn jobs(source: &Source, out: &Path) -> Outcome<Vec<Job>> {
    match (&source.data, &source.manifest) {
        (Some(d), _) => Ok(vec![Job {
            data: d.clone(),
            dir: out.to_path_buf(),
        }]),
        (None, Some(m)) => Ok(io::read_manifest(m)?
            .into_iter()
            .map(|data| Job {
                dir: out.join(io::stem(&data)),
                data,
            })
            .collect()),
        (None, None) => Err(Failure::usage("either --data or --manifest is required")),
    }
}

/// Runs `f` on each job in parallel, keeping manifest order.
fn fan_out<T: Send>(jobs: &[Job], f: impl Fn(&Job) -> Outcome<T> + Sync) -> Outcome<Vec<T>> {
    jobs.par_iter().map(&f).collect::<Vec<_>>().into_iter().collect()
}

fn base_config(explicit: Option<&Path>, dir: &Path) -> Outcome<Option<RunConfig>> {
    match explicit {
        Some(p) => io::read_json(p).map(Some),
        None => {
            let p = dir.join("config.json");
            if p.exists() {
                io::read_json(&p).map(Some)
            } else {
                Ok(None)
            }
        }
    }
}

pub fn run(cli: Cli) -> Outcome<()> {
    let out = cli.out.clone();
    let default_out = || out.clone().unwrap_or_else(|| PathBuf::from("run"));
    match &cli.command {
        Command::Train(a) => cmd_train(&cli, a, &default_out()),
        Command::Detect(a) => cmd_detect(&cli, a, &default_out()),
        Command::Eval(a) => cmd_eval(&cli, a, &default_out()),
        Command::Inject(a) => cmd_inject(&cli, a, &out.clone().unwrap_or_else(|| PathBuf::from("."))),
        Command::Synth(a) => cmd_synth(&cli, a, &out.clone().unwrap_or_else(|| PathBuf::from("."))),
        Command::Bench(a) => cmd_bench(&cli, a),
    }
}

fn cmd_train(cli: &Cli, args: &TrainArgs, out: &Path) -> Outcome<()> {
    let base: Option<RunConfig> = cli.config.as_deref().map(io::read_json).transpose()?;
    let overrides = args.overrides();
    let jobs = jobs(&args.source, out)?;
    fan_out(&jobs, |job| {
        let series = io::load_series(&job.data, args.source.split.or(base.as_ref().map(|b| b.split)))?;
        let seed = cli.seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(0);
        let mut run = resolve(&series, base.as_ref(), &overrides, seed, job.dir.clone())?;
        run.dataset = Some(job.data.clone());
        run.manifest = args.source.manifest.clone();
        let kinds: Vec<&str> = run.train.augment.kinds.iter().map(|k| k.name()).collect();
        info!(
            "{}: period {}, window {}, {} epochs, {} active kinds ({})",
            series.name,
            run.period,
            run.model.window,
            run.train.epochs,
            kinds.len(),
            kinds.join(", ")
        );
        io::write_json(&job.dir.join("config.json"), &run)?;
        let mut log = io::TrainLog::create(&job.dir.join("train.csv"))?;
        let start = Instant::now();
        let mut log_error = None;
        let (model, _) = train_model(&run, &series, &mut |r| {
            if log_error.is_none() {
                log_error = log.append(r, start.elapsed().as_secs_f64()).err();
            }
            if r.epoch % 10 == 0 || r.epoch + 1 == run.train.epochs {
                info!("{}: epoch {} loss {:.5} (bce {:.5}, mse {:.5})", series.name, r.epoch, r.loss.total, r.loss.bce, r.loss.mse);
            }
        })
        .context(format!("training on {}", job.data.display()))?;
        if let Some(e) = log_error {
            return Err(e);
        }
        log.finish()?;
        io::write_checkpoint(&job.dir.join("model.ckpt"), &model)?;
        info!("{}: wrote {}", series.name, job.dir.display());
        Ok(())
    })?;
    Ok(())
}

fn cmd_detect(cli: &Cli, args: &DetectArgs, out: &Path) -> Outcome<()> {
    let jobs = jobs(&args.source, out)?;
    fan_out(&jobs, |job| {
        let base = base_config(cli.config.as_deref(), &job.dir)?;
        let split = args.source.split.or(base.as_ref().map(|b| b.split));
        let series = io::load_series(&job.data, split)?;
        let ckpt = args.checkpoint.clone().unwrap_or_else(|| job.dir.join("model.ckpt"));
        let model = io::read_checkpoint(&ckpt)?;
        let scoring = args.scoring.unwrap_or(model.config.scoring);
        let smoothing = args
            .smoothing
            .or(base.as_ref().map(|b| b.smoothing))
            .unwrap_or(model.config.patch);
        let seed = cli.seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(0);
        let scores = score_series(&model, &series, scoring, smoothing, seed)
            .context(format!("scoring {}", job.data.display()))?;
        io::write_scores(&job.dir.join("scores.csv"), series.split, &scores)?;
        info!("{}: scored {} test points ({scoring})", series.name, scores.scores.len());
        Ok(())
    })?;
    Ok(())
}

fn cmd_eval(cli: &Cli, args: &EvalArgs, out: &Path) -> Outcome<()> {
    let jobs = jobs(&args.source, out)?;
    let reports = fan_out(&jobs, |job| {
        let base = base_config(cli.config.as_deref(), &job.dir)?;
        let split = args.source.split.or(base.as_ref().map(|b| b.split));
        let series = io::load_series(&job.data, split)?;
        let path = args.scores.clone().unwrap_or_else(|| job.dir.join("scores.csv"));
        let scores = io::read_scores(&path)?;
        let expected: Vec<usize> = (series.split..series.len()).collect();
        if scores.index != expected {
            return Err(Failure::data(format!(
                "{} does not cover test indices {}..{}",
                path.display(),
                series.split,
                series.len()
            )));
        }
        let report = evaluate_series(&series, &scores.smoothed)?;
        io::write_json(&job.dir.join("report.json"), &report)?;
        Ok(report)
    })?;
    for r in &reports {
        info!("{}: vus_pr {:.4}, auc_pr {:.4}, f1 {:.4}", r.dataset, r.vus_pr, r.auc_pr, r.f1);
    }
    if args.aggregate {
        let mean = MetricsReport::mean("mean", &reports).expect("at least one dataset");
        let table = aggregate_table(&reports, &mean);
        print!("{table}");
        io::write_text(&out.join("aggregate.csv"), &aggregate_csv(&reports, &mean))?;
        #[derive(Serialize)]
        struct Aggregate<'a> {
            datasets: &'a [MetricsReport],
            mean: &'a MetricsReport,
        }
        io::write_json(
            &out.join("aggregate.json"),
            &Aggregate {
                datasets: &reports,
                mean: &mean,
            },
        )?;
    }
    Ok(())
}

/// Fixed-width table: one row per dataset, then the mean, metrics as
/// percentages.
pub fn aggregate_table(reports: &[MetricsReport], mean: &MetricsReport) -> String {
    let width = reports.iter().map(|r| r.dataset.len()).max().unwrap_or(0).max(7);
    let headers = ["F1", "AUC-PR", "R-AUC-PR", "VUS-PR", "Top-1", "Top-3", "Top-5"];
    let mut s = format!("{:<width$}", "dataset");
    for h in headers {
        let _ = write!(s, " {h:>9}");
    }
    s.push('\n');
    for r in reports.iter().chain(std::iter::once(mean)) {
        let _ = write!(s, "{:<width$}", r.dataset);
        for v in r.values() {
            let _ = write!(s, " {:>9.2}", 100.0 * v);
        }
        s.push('\n');
    }
    s.push_str("(R-AUC-PR and VUS-PR use a linear-ramp buffer)\n");
    s
}

fn aggregate_csv(reports: &[MetricsReport], mean: &MetricsReport) -> String {
    let mut s = String::from("dataset");
    for c in MetricsReport::COLUMNS {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    for r in reports.iter().chain(std::iter::once(mean)) {
        s.push_str(&r.dataset);
        for v in r.values() {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// Places `count` events of `kind` in equal slices of the test region with
/// lengths in `[max_len/2, max_len]`.
pub fn inject_series(
    series: &RawSeries,
    kind: DistortionKind,
    count: usize,
    max_len: usize,
    seed: u64,
) -> Outcome<(Vec<f64>, Vec<u8>, Vec<(usize, usize)>)> {
    let test = series.len() - series.split;
    let slice = test / count.max(1);
    let max_len = max_len.max(1);
    if count == 0 || slice < 3 * max_len {
        return Err(Failure::usage(format!(
            "cannot fit {count} anomalies of length ≤ {max_len} into {test} test points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = series.values.clone();
    let mut labels = series.labels.clone().unwrap_or_else(|| vec![0; series.len()]);
    let mut ranges = Vec::with_capacity(count);
    for j in 0..count {
        let len = rng.random_range(max_len.div_ceil(2)..=max_len);
        let lo = series.split + j * slice + max_len;
        let hi = series.split + (j + 1) * slice - max_len - len;
        let start = rng.random_range(lo..=hi);
        let end = start + len - 1;
        inject(&mut values, kind, start, end, &mut rng);
        labels[start..=end].fill(1);
        ranges.push((start, end));
    }
    Ok((values, labels, ranges))
}

fn cmd_inject(cli: &Cli, args: &InjectArgs, out: &Path) -> Outcome<()> {
    let series = io::load_series(&args.data, args.split)?;
    let max_len = match args.max_len {
        Some(m) => m,
        None => estimate_period(series.train(), None)?.period,
    };
    let (values, labels, ranges) = inject_series(&series, args.test_kind, args.count, max_len, cli.seed.unwrap_or(0))?;
    let (s, e) = ranges[0];
    let name = format!("{}_{}_{}_{s}_{e}.txt", series.name, args.test_kind.name(), series.split);
    let path = io::write_ucr(out, &name, &values, Some(&labels))?;
    info!("injected {} {} anomalies", ranges.len(), args.test_kind);
    println!("{}", path.display());
    Ok(())
}

fn cmd_synth(cli: &Cli, args: &SynthArgs, out: &Path) -> Outcome<()> {
    let mut cfg = SynthConfig::default();
    if let Some(k) = args.test_kind {
        cfg = cfg.with_kind(k);
    }
    if let Some(len) = args.len {
        let scale = |i: usize| i * len / cfg.len;
        for a in &mut cfg.anomalies {
            let n = a.end - a.start;
            a.start = scale(a.start);
            a.end = a.start + n;
        }
        cfg.split = scale(cfg.split);
        cfg.len = len;
    }
    cfg.split = args.split.unwrap_or(cfg.split);
    cfg.period = args.period.unwrap_or(cfg.period);
    cfg.noise_std = args.noise.unwrap_or(cfg.noise_std);
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    let synth = gen_periodic(&cfg)?;
    let path = io::write_ucr(out, &cfg.file_name(), &synth.series.values, synth.series.labels.as_deref())?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub points: usize,
    pub seconds: f64,
    pub points_per_second: f64,
    pub param_count: usize,
    pub window: usize,
    pub patch: usize,
    pub hidden: usize,
    pub layers: usize,
    pub bins: usize,
}

/// Times detect over an untrained model at the given configuration.
pub fn bench(points: usize, overrides: &Overrides, seed: u64) -> Outcome<BenchReport> {
    let period = overrides.period.unwrap_or(50);
    let config = overrides.model_config(period, None);
    let model = CoadModel::init(config, &mut ChaCha8Rng::seed_from_u64(seed))?;
    if points < model.config.window + 1 {
        return Err(Failure::usage(format!("need more than {} points", model.config.window)));
    }
    let series = gen_periodic(&SynthConfig {
        len: points,
        split: 1,
        period: period as f64,
        anomalies: vec![],
        seed,
        ..SynthConfig::default()
    })?
    .series;
    let opts = DetectOptions::for_model(&model);
    let start = Instant::now();
    let scores = detect(&model, &series.values, 0..points, &opts)?;
    let seconds = start.elapsed().as_secs_f64();
    debug_assert_eq!(scores.scores.len(), points);
    let c = &model.config;
    Ok(BenchReport {
        points,
        seconds,
        points_per_second: points as f64 / seconds,
        param_count: model.params.param_count(),
        window: c.window,
        patch: c.patch,
        hidden: c.hidden,
        layers: c.layers,
        bins: c.bins,
    })
}

fn cmd_bench(cli: &Cli, args: &BenchArgs) -> Outcome<()> {
    let report = bench(args.points, &args.model.overrides(), cli.seed.unwrap_or(0))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(out) = &cli.out {
        io::write_json(&out.join("bench.json"), &report)?;
    }
    Ok(())
}

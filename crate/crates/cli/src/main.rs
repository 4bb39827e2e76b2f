use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nqa_core::fixtures::{learning_corpus, write_scene, AnalyticScene};
use nqa_core::geometry::Visibility;
use nqa_core::metrics::{evaluate_csv, EvalReport};
use nqa_core::model::{ModelConfig, QualityModel};
use nqa_core::pipeline::{extract, ExtractConfig, LoadedManifest, SceneFeatures, SceneManifest};
use nqa_core::pnsg::{PnsgConfig, DEFAULT_BINS, DEFAULT_RESAMPLE};
use nqa_core::train::{train, AdamConfig, TrainConfig};

#[derive(Parser)]
#[command(name = "nqa", version, about = "No-reference quality assessment for view-synthesis scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render an analytic scene (or a labelled corpus) with its sparse model and manifest.
    Synth(SynthArgs),
    /// Compute viewwise features and per-round PNSG dumps for one scene.
    Extract(ExtractArgs),
    /// Train a model on labelled manifests.
    Train(TrainArgs),
    /// Predict quality for each manifest.
    Predict(PredictArgs),
    /// Write the labels of manifests as a truth CSV.
    Labels(LabelsArgs),
    /// Compare prediction and truth CSVs.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Scene description as JSON; defaults to an 8-view Lambertian orbit.
    #[arg(long, conflicts_with = "corpus")]
    config: Option<PathBuf>,
    /// Write this many labelled noise-corpus scenes into `out/<scene_id>/`.
    #[arg(long)]
    corpus: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "synthetic")]
    scene_id: String,
    #[arg(long, default_value = "default")]
    method_id: String,
    #[arg(long, default_value = "synthetic")]
    dataset: String,
    #[arg(long, allow_negative_numbers = true)]
    label: Option<f64>,
}

#[derive(Args, Clone)]
struct SamplingArgs {
    /// Surface points sampled per round.
    #[arg(long, default_value_t = nqa_core::pipeline::DEFAULT_POINTS)]
    points: usize,
    #[arg(long, default_value_t = nqa_core::pipeline::DEFAULT_ROUNDS)]
    rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Decide visibility by projection alone instead of reconstruction tracks.
    #[arg(long)]
    geometric: bool,
}

impl SamplingArgs {
    fn config(&self, bins: usize, resample: usize) -> ExtractConfig {
        ExtractConfig {
            pnsg: PnsgConfig {
                bins,
                resample,
                ..Default::default()
            },
            points: self.points,
            rounds: self.rounds,
            seed: self.seed,
            visibility: if self.geometric {
                Visibility::Geometric
            } else {
                Visibility::Track
            },
        }
    }
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value_t = DEFAULT_RESAMPLE)]
    resample: usize,
    #[command(flatten)]
    sampling: SamplingArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Compact,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(required = true)]
    manifests: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss log (epoch, train_loss, val_loss).
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long)]
    ablate_pointwise: bool,
    #[arg(long, value_enum, default_value = "default")]
    preset: Preset,
    /// Full model configuration as JSON; overrides --preset, --bins and --resample.
    #[arg(long)]
    model_config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value_t = DEFAULT_RESAMPLE)]
    resample: usize,
    /// Train on every scene instead of holding one out per dataset.
    #[arg(long)]
    no_validation: bool,
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    #[command(flatten)]
    sampling: SamplingArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(required = true)]
    manifests: Vec<PathBuf>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    sampling: SamplingArgs,
}

#[derive(Args)]
struct LabelsArgs {
    #[arg(required = true)]
    manifests: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Also write the JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    if let Some(n) = a.corpus {
        for c in learning_corpus(n, a.seed) {
            let m = SceneManifest {
                scene_id: c.scene_id.clone(),
                method_id: a.method_id.clone(),
                dataset: a.dataset.clone(),
                views: Vec::new(),
                colmap_dir: PathBuf::new(),
                label: Some(c.label),
            };
            write_scene(&c.scene, &a.out.join(&c.scene_id), m)?;
        }
        return Ok(());
    }
    let mut scene = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            serde_json::from_str::<AnalyticScene>(&text).with_context(|| format!("invalid scene config {}", p.display()))?
        }
        None => AnalyticScene::default(),
    };
    if let Some(n) = &mut scene.noise {
        n.seed = a.seed;
    }
    let m = SceneManifest {
        scene_id: a.scene_id,
        method_id: a.method_id,
        dataset: a.dataset,
        views: Vec::new(),
        colmap_dir: PathBuf::new(),
        label: a.label,
    };
    write_scene(&scene, &a.out, m)?;
    Ok(())
}

fn scene_features(path: &Path, cfg: &ExtractConfig) -> Result<(LoadedManifest, SceneFeatures)> {
    let m = LoadedManifest::load(path)?;
    let bundle = m.bundle().with_context(|| format!("cannot load scene {}", path.display()))?;
    let f = extract(&bundle, cfg).with_context(|| format!("feature extraction failed for {}", path.display()))?;
    Ok((m, f))
}

fn cmd_extract(a: ExtractArgs) -> Result<()> {
    let cfg = a.sampling.config(a.bins, a.resample);
    let (_, f) = scene_features(&a.manifest, &cfg)?;
    f.write_dir(&a.out)?;
    log::info!("wrote {} rounds to {}", f.rounds.len(), a.out.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut mc = match &a.model_config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            serde_json::from_str::<ModelConfig>(&text).with_context(|| format!("invalid model config {}", p.display()))?
        }
        None => match a.preset {
            Preset::Default => {
                let mut c = ModelConfig::default();
                c.pointwise.bins = a.bins;
                c.pointwise.resample = a.resample;
                c
            }
            Preset::Compact => ModelConfig::compact(a.bins, a.resample),
        },
    };
    mc.ablate_pointwise |= a.ablate_pointwise;
    mc.seed = a.sampling.seed;
    let cfg = a.sampling.config(mc.pointwise.bins, mc.pointwise.resample);
    let mut examples = Vec::with_capacity(a.manifests.len());
    for p in &a.manifests {
        let (m, f) = scene_features(p, &cfg)?;
        let Some(label) = m.manifest.label else {
            bail!("manifest {} has no label", p.display());
        };
        examples.push(f.training_example(&m.manifest, label));
    }
    let tc = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        adam: AdamConfig {
            lr: a.lr,
            ..Default::default()
        },
        seed: a.sampling.seed,
        holdout_validation: !a.no_validation,
        checkpoint_dir: a.checkpoint_dir.clone(),
    };
    let outcome = train(QualityModel::new(mc), &examples, &tc)?;
    outcome.model.save(&a.out)?;
    if let Some(p) = &a.log {
        let mut w = csv::Writer::from_writer(output(Some(p))?);
        w.write_record(["epoch", "train_loss", "val_loss"])?;
        for e in &outcome.log {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_loss.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
    }
    log::info!("best epoch {}", outcome.best_epoch);
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let model = QualityModel::load(&a.model).with_context(|| format!("cannot load model {}", a.model.display()))?;
    let cfg = a
        .sampling
        .config(model.config.pointwise.bins, model.config.pointwise.resample);
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["scene_id", "method_id", "pred"])?;
    for p in &a.manifests {
        let (m, f) = scene_features(p, &cfg)?;
        let pred = model
            .predict_rounds(&f.views, &f.point_rounds())
            .with_context(|| format!("prediction failed for {}", p.display()))?;
        w.write_record([m.manifest.scene_id, m.manifest.method_id, format!("{pred:?}")])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_labels(a: LabelsArgs) -> Result<()> {
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["scene_id", "method_id", "truth"])?;
    for p in &a.manifests {
        let m = LoadedManifest::load(p)?.manifest;
        let Some(label) = m.label else {
            bail!("manifest {} has no label", p.display());
        };
        w.write_record([m.scene_id, m.method_id, format!("{label:?}")])?;
    }
    w.flush()?;
    Ok(())
}

fn open(p: &Path) -> Result<File> {
    File::open(p).with_context(|| format!("cannot open {}", p.display()))
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let report: EvalReport = evaluate_csv(open(&a.pred)?, open(&a.truth)?)?;
    if let Some(p) = &a.json {
        std::fs::write(p, report.to_json() + "\n").with_context(|| format!("cannot write {}", p.display()))?;
    }
    let mut out = io::stdout().lock();
    match a.format {
        Format::Table => write!(out, "{}", report.table())?,
        Format::Json => writeln!(out, "{}", report.to_json())?,
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("NQA_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("NQA_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            bail!("NQA_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Labels(a) => cmd_labels(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

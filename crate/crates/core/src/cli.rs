//! Command-line interface.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clustering::evaluate_embeddings;
use crate::dataio::{load_csv, load_idx, make_synthetic, save_csv, Dataset, Split, SyntheticSpec};
use crate::error::{Error, Result};
use crate::numerics::{Checkpoint, Tensor2};
use crate::training::{build_epoch_pool, diagnostics_csv, fit, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "hub-vae", version, about = "Hub-regularized variational autoencoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write a checkpoint and training log.
    Train(TrainArgs),
    /// Cluster the test-split embeddings of a trained model.
    Eval(EvalArgs),
    /// Recompute hub diagnostics for a trained model.
    Hubs(HubsArgs),
    /// Sample from the prior component of one pool hub.
    Generate(GenerateArgs),
    /// Write a synthetic Gaussian-blob dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV dataset, label in the last column.
    #[arg(long, conflicts_with = "images")]
    data: Option<PathBuf>,
    /// The CSV has no label column.
    #[arg(long)]
    unlabeled: bool,
    /// IDX image file.
    #[arg(long, requires = "labels")]
    images: Option<PathBuf>,
    /// IDX label file.
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
    /// IDX image file of the test set.
    #[arg(long, requires_all = ["images", "test_labels"])]
    test_images: Option<PathBuf>,
    /// IDX label file of the test set.
    #[arg(long, requires = "test_images")]
    test_labels: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self, seed: u64) -> Result<Dataset> {
        if let Some(path) = &self.data {
            return Ok(load_csv(path, !self.unlabeled)?.with_default_splits(seed));
        }
        match (&self.images, &self.labels) {
            (Some(images), Some(labels)) => {
                let train = load_idx(images, labels)?;
                match (&self.test_images, &self.test_labels) {
                    (Some(ti), Some(tl)) => train.with_test_set(load_idx(ti, tl)?, seed),
                    _ => Ok(train.with_default_splits(seed)),
                }
            }
            _ => Err(Error::Parameter("pass --data or --images/--labels".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Ablation {
    NoSelection,
    NoContrastive,
    BaselineGaussian,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// TOML file with training settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lookahead: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    components: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Defaults to the number of classes of a labelled dataset.
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dynamic_binarization: bool,
    #[arg(long, value_enum)]
    ablation: Vec<Ablation>,
    /// Output directory for checkpoint.bin and trainlog.jsonl.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also write one hub-diagnostics CSV per epoch here.
    #[arg(long)]
    hubs_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Number of k-means clusters; defaults to the number of classes.
    #[arg(long)]
    clusters: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write test-split embeddings (posterior means) and labels as CSV.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct HubsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// TOML file with training settings (batch size, lambda, selection).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Position in the checkpoint's hub pool.
    #[arg(long, default_value_t = 0)]
    hub: usize,
    #[arg(long, default_value_t = 16)]
    count: usize,
    /// Sampling seed; defaults to the checkpoint seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write probabilities here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dump each sample's probabilities as a PGM image (28x28 or 16x16 data only).
    #[arg(long)]
    pgm_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    clusters: usize,
    #[arg(long, default_value_t = 10)]
    dim: usize,
    #[arg(long, default_value_t = 143)]
    per_cluster: usize,
    #[arg(long, default_value_t = 3.0)]
    spread: f64,
    #[arg(long, default_value_t = 0.3)]
    std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Hubs(a) => hubs(a),
        Command::Generate(a) => generate(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => TrainConfig::from_file(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.seed {
        config.seed = v;
    }
    if let Some(v) = a.epochs {
        config.max_epochs = v;
        config.lookahead = config.lookahead.min(v);
    }
    if let Some(v) = a.lookahead {
        config.lookahead = v;
    }
    if let Some(v) = a.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = a.components {
        config.components = v;
    }
    if let Some(v) = a.latent_dim {
        config.latent_dim = v;
    }
    if let Some(v) = a.hidden {
        config.hidden = v;
    }
    if let Some(v) = a.clusters {
        config.clusters = Some(v);
    }
    if let Some(v) = a.lr {
        config.learning_rate = v;
    }
    config.dynamic_binarization |= a.dynamic_binarization;
    for ab in &a.ablation {
        match ab {
            Ablation::NoSelection => config.no_selection = true,
            Ablation::NoContrastive => config.no_contrastive = true,
            Ablation::BaselineGaussian => config.baseline_gaussian = true,
        }
    }

    let data = a.data.load(config.seed)?;
    if config.clusters.is_none() {
        config.clusters = data.num_classes();
    }
    let result = fit(&data.training_data(), &config)?;

    std::fs::create_dir_all(&a.out_dir)?;
    let ckpt = Checkpoint {
        model: result.model,
        pool: result.pool.map(|p| p.hubs).unwrap_or_default(),
        seed: config.seed,
    };
    ckpt.save(&a.out_dir.join("checkpoint.bin"))?;
    std::fs::write(a.out_dir.join("trainlog.jsonl"), result.log.to_jsonl()?)?;
    if let Some(dir) = &a.hubs_dir {
        std::fs::create_dir_all(dir)?;
        for (epoch, rows) in result.hub_diagnostics.iter().enumerate() {
            std::fs::write(dir.join(format!("hubs_epoch{epoch:03}.csv")), diagnostics_csv(rows))?;
        }
    }
    log::info!("best epoch {}", result.best_epoch);
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let data = a.data.load(ckpt.seed)?;
    let truth = data.split_labels(Split::Test).ok_or_else(|| Error::Parameter("eval needs labels".into()))?;
    let x = data.split_x(Split::Test);
    let (means, _) = ckpt.model.encode_posteriors(&x)?;
    let clusters = a.clusters.or(data.num_classes()).unwrap_or(1);
    let report = evaluate_embeddings(&means, &truth, clusters, ckpt.seed)?;
    if let Some(path) = &a.embeddings {
        std::fs::write(path, embeddings_csv(&means, &truth))?;
    }
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_output(a.out.as_deref(), &json)
}

fn embeddings_csv(means: &Tensor2, labels: &[usize]) -> String {
    let mut out = String::new();
    for (row, l) in means.row_iter().zip(labels) {
        for v in row {
            write!(out, "{v},").unwrap();
        }
        writeln!(out, "{l}").unwrap();
    }
    out
}

fn hubs(a: HubsArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let mut config = match &a.config {
        Some(p) => TrainConfig::from_file(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.batch_size {
        config.batch_size = v;
    }
    let data = a.data.load(ckpt.seed)?;
    let train = data.split_x(Split::Train);
    let labels = data.split_labels(Split::Train);
    let mut rng = ChaCha8Rng::seed_from_u64(ckpt.seed);
    let build = build_epoch_pool(&ckpt.model, &train, labels.as_deref(), &config, 0, &mut rng)?;
    write_output(a.out.as_deref(), &diagnostics_csv(&build.diagnostics))
}

fn generate(a: GenerateArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let data = a.data.load(ckpt.seed)?;
    let train = data.split_x(Split::Train);
    let &index = ckpt.pool.get(a.hub).ok_or_else(|| {
        Error::Parameter(format!("hub {} out of range for a pool of {}", a.hub, ckpt.pool.len()))
    })?;
    if index >= train.rows() {
        return Err(Error::Parameter(format!("pool index {index} outside the training split")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed.unwrap_or(ckpt.seed));
    let gen = ckpt.model.generate(train.row(index), a.count, &mut rng)?;

    let mut csv = String::new();
    for row in gen.probs.row_iter() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    write_output(a.out.as_deref(), &csv)?;

    if let Some(dir) = &a.pgm_dir {
        let side = match gen.probs.cols() {
            784 => 28,
            256 => 16,
            d => return Err(Error::Parameter(format!("no image shape for {d} columns"))),
        };
        std::fs::create_dir_all(dir)?;
        for (i, row) in gen.probs.row_iter().enumerate() {
            std::fs::write(dir.join(format!("sample{i:03}.pgm")), pgm(row, side))?;
        }
    }
    Ok(())
}

/// Binary greyscale PGM of a square image.
pub fn pgm(pixels: &[f64], side: usize) -> Vec<u8> {
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        clusters: a.clusters,
        dim: a.dim,
        per_cluster: a.per_cluster,
        spread: a.spread,
        std: a.std,
        seed: a.seed,
    };
    save_csv(&make_synthetic(&spec)?, &a.out)
}

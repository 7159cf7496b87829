//! `chroma` subcommands. Exit status is 0 on success, 1 on runtime errors and
//! 2 on usage errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use chroma_core::analysis::{evaluate_grid, EvalReport};
use chroma_core::datagen::{build_dataset, BandLayout, ColorScheme, LabeledDataset, Source, Split};
use chroma_core::layers::{CustomDropoutConfig, NormKind, EQUAL_GRAY_WEIGHTS};
use chroma_core::model::{InputStage, Model, ModelConfig};
use chroma_core::optim::OptimizerConfig;
use chroma_core::train::{train, ModelSnapshot, TrainConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::container::{read_dataset, write_dataset};
use crate::error::{Error, Result};
use crate::idx::{default_data_dir, load_source};
use crate::plan::{dataset_label, model_label, run_plan, ExperimentPlan, Scale, DESK_EPOCHS, DESK_TRAIN, DESK_VAL, FULL_EPOCHS};
use crate::report::{write_csv_dir, write_json};
use crate::snapshot::{read_snapshot, write_snapshot, SnapshotFile};

#[derive(Debug, Parser)]
#[command(name = "chroma", version, about = "Colorized MNIST generation, CNN training and cross-distribution evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a colorized dataset container from raw IDX files.
    GenData(GenDataArgs),
    /// Train a model and write its best-validation snapshot.
    Train(TrainArgs),
    /// Evaluate snapshots on datasets and write a report.
    EvalMatrix(EvalMatrixArgs),
    /// Generate data, train every model and evaluate them in one run.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SourceArg {
    Mnist,
    Fashionmnist,
}

impl From<SourceArg> for Source {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Mnist => Source::Mnist,
            SourceArg::Fashionmnist => Source::FashionMnist,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Green,
    Single,
    Thirds,
}

impl From<SchemeArg> for ColorScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Green => ColorScheme::GreenOnly,
            SchemeArg::Single => ColorScheme::RandomSingleChannel,
            SchemeArg::Thirds => ColorScheme::HorizontalThirds,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BandsArg {
    Rows,
    Columns,
}

impl From<BandsArg> for BandLayout {
    fn from(b: BandsArg) -> Self {
        match b {
            BandsArg::Rows => BandLayout::Rows,
            BandsArg::Columns => BandLayout::Columns,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    Batch,
    Layer,
    Instance,
    None,
}

impl From<NormArg> for Option<NormKind> {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Batch => Some(NormKind::Batch),
            NormArg::Layer => Some(NormKind::Layer),
            NormArg::Instance => Some(NormKind::Instance),
            NormArg::None => None,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InputArg {
    Plain3,
    Gray4,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScaleArg {
    Desk,
    Full,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub source: SourceArg,
    #[arg(long, value_enum)]
    pub scheme: SchemeArg,
    #[arg(long, value_enum)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Orientation of the three bands for `--scheme thirds`.
    #[arg(long, value_enum, default_value = "rows")]
    pub bands: BandsArg,
    /// Directory holding `<source>/*-ubyte` files [default: $CHROMA_DATA_DIR or ./data].
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

/// Model and input-stage flags shared by `train` and `reproduce`.
#[derive(Debug, Args)]
pub struct InputStageArgs {
    #[arg(long = "input", value_enum, default_value = "plain3")]
    pub input: InputArg,
    /// Probability of hiding the color channels per batch (gray4 only).
    #[arg(long, default_value_t = 0.5)]
    pub dropout_prob: f32,
    /// Weights of R, G, B in the appended gray channel.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub gray_weights: Option<Vec<f32>>,
    /// Draw the dropout decision per sample instead of per batch.
    #[arg(long)]
    pub per_sample_dropout: bool,
}

impl InputStageArgs {
    fn stage(&self) -> Result<InputStage> {
        Ok(match self.input {
            InputArg::Plain3 => InputStage::Plain3,
            InputArg::Gray4 => {
                let gray_weights = match &self.gray_weights {
                    Some(w) => [w[0], w[1], w[2]],
                    None => EQUAL_GRAY_WEIGHTS,
                };
                let cfg = CustomDropoutConfig { prob: self.dropout_prob, gray_weights, per_sample: self.per_sample_dropout };
                cfg.validate()?;
                InputStage::Gray4(cfg)
            }
        })
    }
}

/// Optimizer flags shared by `train` and `reproduce`.
#[derive(Debug, Args)]
pub struct OptimizerArgs {
    #[arg(long, value_enum, default_value = "adam")]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f32,
    /// Momentum for `--optimizer sgd`.
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f32,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
}

impl OptimizerArgs {
    fn config(&self) -> OptimizerConfig {
        match self.optimizer {
            OptimizerArg::Adam => match OptimizerConfig::default() {
                OptimizerConfig::Adam { beta1, beta2, eps, .. } => OptimizerConfig::Adam { lr: self.lr, beta1, beta2, eps },
                other => other,
            },
            OptimizerArg::Sgd => OptimizerConfig::SgdMomentum { lr: self.lr, momentum: self.momentum },
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training dataset container.
    #[arg(long)]
    pub data: PathBuf,
    /// Validation dataset container.
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long, value_enum, default_value = "batch")]
    pub norm: NormArg,
    #[command(flatten)]
    pub input_stage: InputStageArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    #[arg(long, default_value_t = FULL_EPOCHS)]
    pub epochs: usize,
    /// Seeds initialization, and shuffling unless `--shuffle-seed` is given.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
    /// Train on only the first N training images.
    #[arg(long)]
    pub subset: Option<usize>,
    /// Validate on only the first N validation images.
    #[arg(long)]
    pub val_subset: Option<usize>,
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [32, 64, 128])]
    pub conv_widths: Vec<usize>,
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [512, 256])]
    pub dense_widths: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalMatrixArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub snapshots: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    pub datasets: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write `matrix.csv`, `confidence.csv` and `class_counts.csv` here.
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(long, value_enum, default_value = "mnist")]
    pub source: SourceArg,
    /// Schemes to train a model on; all three are always evaluated.
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["green", "single", "thirds"])]
    pub schemes: Vec<SchemeArg>,
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["batch"])]
    pub norms: Vec<NormArg>,
    #[command(flatten)]
    pub input_stage: InputStageArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    #[arg(long, value_enum, default_value = "rows")]
    pub bands: BandsArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "desk")]
    pub scale: ScaleArg,
    /// Desk-scale training images.
    #[arg(long, default_value_t = DESK_TRAIN)]
    pub train_subset: usize,
    /// Desk-scale validation images.
    #[arg(long, default_value_t = DESK_VAL)]
    pub val_subset: usize,
    /// Desk-scale test images [default: all].
    #[arg(long)]
    pub test_subset: Option<usize>,
    /// [default: 10 at desk scale, 50 at full scale]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Models trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Output directory for datasets, snapshots and the report.
    #[arg(long)]
    pub out: PathBuf,
}

impl ReproduceArgs {
    pub fn plan(&self) -> Result<ExperimentPlan> {
        let mut schemes: Vec<ColorScheme> = Vec::new();
        for s in &self.schemes {
            let s = ColorScheme::from(*s);
            if !schemes.contains(&s) {
                schemes.push(s);
            }
        }
        let mut norms = Vec::new();
        for n in &self.norms {
            let n = Option::<NormKind>::from(*n);
            if !norms.contains(&n) {
                norms.push(n);
            }
        }
        let scale = match self.scale {
            ScaleArg::Desk => Scale::Desk {
                train: self.train_subset,
                val: self.val_subset,
                test: self.test_subset,
                epochs: self.epochs.unwrap_or(DESK_EPOCHS),
            },
            ScaleArg::Full => Scale::Full { epochs: self.epochs.unwrap_or(FULL_EPOCHS) },
        };
        Ok(ExperimentPlan {
            source: self.source.into(),
            schemes,
            norms,
            input_stage: self.input_stage.stage()?,
            bands: self.bands.into(),
            seed: self.seed,
            scale,
            batch_size: self.optimizer.batch_size,
            optimizer: self.optimizer.config(),
        })
    }
}

fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn gen_data(args: &GenDataArgs) -> Result<()> {
    let split = Split::from(args.split);
    let source = Source::from(args.source);
    let dir = args.data_dir.clone().unwrap_or_else(default_data_dir);
    let raw = load_source(&dir, source, split.file())?;
    let ds = build_dataset(source, &raw, split, args.scheme.into(), args.seed, args.bands.into())?;
    let m = write_dataset(&ds, &args.out)?;
    say(&format!(
        "wrote {} {} images scheme {:?} seed {} crc32 {:08x} to {}",
        dataset_label(&ds.provenance),
        m.count,
        ds.provenance.scheme,
        args.seed,
        m.crc32,
        args.out.display()
    ));
    Ok(())
}

fn load_subset(path: &Path, n: Option<usize>) -> Result<LabeledDataset> {
    let ds = read_dataset(path)?;
    Ok(match n {
        Some(n) => ds.truncated(n),
        None => ds,
    })
}

fn train_cmd(args: &TrainArgs) -> Result<()> {
    let train_set = load_subset(&args.data, args.subset)?;
    let val_set = load_subset(&args.val, args.val_subset)?;
    let config = ModelConfig {
        conv_widths: [args.conv_widths[0], args.conv_widths[1], args.conv_widths[2]],
        dense_widths: [args.dense_widths[0], args.dense_widths[1]],
        norm: args.norm.into(),
        input_stage: args.input_stage.stage()?,
        seed: args.seed,
        ..ModelConfig::default()
    };
    let train_config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.optimizer.batch_size,
        optimizer: args.optimizer.config(),
        shuffle_seed: args.shuffle_seed.unwrap_or(args.seed),
    };
    let model = Model::new(&config)?;
    let id = model_label(train_set.provenance.source, train_set.provenance.scheme, &config);
    say(&format!("model {id} parameters {} train {} val {}", model.parameter_count(), train_set.len(), val_set.len()));
    let snapshot = train(model, &train_set, &val_set, &train_config, |r| {
        say(&format!("epoch {}/{} loss {:.4} val_acc {:.4}", r.epoch, args.epochs, r.train_loss, r.val_accuracy))
    })?;
    say(&format!("best val_acc {:.4} at epoch {}", snapshot.best_val_accuracy, snapshot.epoch_of_best));
    write_snapshot(&SnapshotFile { id, train_data: Some(train_set.provenance), snapshot }, &args.out)?;
    say(&format!("wrote {}", args.out.display()));
    Ok(())
}

fn unique_ids(ids: Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(ids.len());
    for id in ids {
        let mut candidate = id.clone();
        let mut k = 2;
        while out.contains(&candidate) {
            candidate = format!("{id}#{k}");
            k += 1;
        }
        out.push(candidate);
    }
    out
}

fn eval_matrix(args: &EvalMatrixArgs) -> Result<()> {
    let snapshots = args.snapshots.iter().map(|p| read_snapshot(p)).collect::<Result<Vec<_>>>()?;
    let datasets = args.datasets.iter().map(|p| read_dataset(p)).collect::<Result<Vec<_>>>()?;
    let model_ids = unique_ids(snapshots.iter().map(|s| s.id.clone()).collect());
    let dataset_ids = unique_ids(datasets.iter().map(|d| dataset_label(&d.provenance)).collect());
    let models: Vec<(String, &ModelSnapshot)> = model_ids.into_iter().zip(snapshots.iter().map(|s| &s.snapshot)).collect();
    let sets: Vec<(String, &LabeledDataset)> = dataset_ids.into_iter().zip(datasets.iter()).collect();
    let report: EvalReport = evaluate_grid(&models, &sets)?;
    for e in &report.matrix {
        say(&format!("{} on {} accuracy {:.4}", e.model, e.dataset, e.accuracy));
    }
    write_json(&report, &args.out)?;
    if let Some(dir) = &args.csv_dir {
        write_csv_dir(&report, dir)?;
    }
    say(&format!("wrote {}", args.out.display()));
    Ok(())
}

fn reproduce(args: &ReproduceArgs) -> Result<()> {
    let plan = args.plan()?;
    let dir = args.data_dir.clone().unwrap_or_else(default_data_dir);
    let lock = Mutex::new(());
    let log = |line: &str| {
        let _guard = lock.lock();
        say(line);
    };
    let outcome = run_plan(&plan, &dir, &args.out, args.jobs, &log)?;
    say(&format!("wrote {}", outcome.report_path.display()));
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::EvalMatrix(a) => eval_matrix(a),
        Command::Reproduce(a) => reproduce(a),
    }
}

pub fn main<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", single_line(&e));
            ExitCode::from(1)
        }
    }
}

fn single_line(e: &Error) -> String {
    e.to_string().replace('\n', " ")
}

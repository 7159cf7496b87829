//! End-to-end experiment: generate every colorized test set, train one model
//! per (training scheme, normalization), evaluate all models on all test sets.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chroma_core::analysis::{evaluate_grid, EvalReport};
use chroma_core::datagen::{
    build_dataset, dataset_id, model_id, BandLayout, ColorScheme, IdxFile, LabeledDataset, Provenance, Source, Split,
    VALIDATION_SIZE,
};
use chroma_core::layers::NormKind;
use chroma_core::model::{InputStage, Model, ModelConfig};
use chroma_core::optim::OptimizerConfig;
use chroma_core::train::{train, ModelSnapshot, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::container::{write_atomic, write_dataset};
use crate::error::{Error, IoContext, Result};
use crate::idx::load_source;
use crate::report::{write_csv_dir, write_json};
use crate::snapshot::{write_snapshot, SnapshotFile};

pub const DESK_TRAIN: usize = 10_000;
pub const DESK_VAL: usize = 2_000;
pub const DESK_EPOCHS: usize = 10;
pub const FULL_EPOCHS: usize = 50;
/// Written while `reproduce` runs; left behind, naming the failed stage, if it aborts.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scale {
    /// Every training and validation image.
    Full { epochs: usize },
    /// The first `train` training and `val` validation images, and the first
    /// `test` test images when set.
    Desk { train: usize, val: usize, test: Option<usize>, epochs: usize },
}

impl Scale {
    pub fn desk() -> Self {
        Scale::Desk { train: DESK_TRAIN, val: DESK_VAL, test: None, epochs: DESK_EPOCHS }
    }

    pub fn epochs(&self) -> usize {
        match *self {
            Scale::Full { epochs } | Scale::Desk { epochs, .. } => epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub source: Source,
    /// Schemes a model is trained on.
    pub schemes: Vec<ColorScheme>,
    /// One model per entry and scheme; `None` trains without normalization.
    pub norms: Vec<Option<NormKind>>,
    pub input_stage: InputStage,
    pub bands: BandLayout,
    /// Seeds data generation, initialization and shuffling alike, so every
    /// model starts from the same weights.
    pub seed: u64,
    pub scale: Scale,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            source: Source::Mnist,
            schemes: ColorScheme::ALL.to_vec(),
            norms: vec![Some(NormKind::Batch)],
            input_stage: InputStage::Plain3,
            bands: BandLayout::Rows,
            seed: 0,
            scale: Scale::desk(),
            batch_size: 128,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// `MM1` for the default configuration, with `-layer`, `-none`, `-gray4`
/// suffixes for variants.
pub fn model_label(source: Source, scheme: ColorScheme, config: &ModelConfig) -> String {
    let mut id = model_id(source, scheme);
    match config.norm {
        Some(NormKind::Batch) => {}
        Some(kind) => id.push_str(&format!("-{}", kind.name())),
        None => id.push_str("-none"),
    }
    if matches!(config.input_stage, InputStage::Gray4(_)) {
        id.push_str("-gray4");
    }
    id
}

/// `MD3` for test sets, `MD3-train` / `MD3-val` otherwise.
pub fn dataset_label(p: &Provenance) -> String {
    let id = dataset_id(p.source, p.scheme);
    match p.split {
        Split::Test => id,
        split => format!("{id}-{}", split.name()),
    }
}

#[derive(Debug, Clone)]
pub struct Job {
    pub id: String,
    pub scheme: ColorScheme,
    pub config: ModelConfig,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::Plan(String::from("plan needs at least one scheme")));
        }
        if self.norms.is_empty() {
            return Err(Error::Plan(String::from("plan needs at least one normalization")));
        }
        if let Scale::Desk { train, val, test, .. } = self.scale {
            if train == 0 || val == 0 || val > VALIDATION_SIZE || test == Some(0) {
                return Err(Error::Plan(format!("desk subsets must be positive and val ≤ {VALIDATION_SIZE}")));
            }
        }
        for job in self.jobs() {
            self.train_config().validate(&job.config)?;
            job.config.validate()?;
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.scale.epochs(),
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            shuffle_seed: self.seed,
        }
    }

    pub fn jobs(&self) -> Vec<Job> {
        let mut out = Vec::new();
        for &scheme in &self.schemes {
            for &norm in &self.norms {
                let config =
                    ModelConfig { norm, input_stage: self.input_stage, seed: self.seed, ..ModelConfig::default() };
                out.push(Job { id: model_label(self.source, scheme, &config), scheme, config });
            }
        }
        out
    }

    fn settings(&self) -> BTreeMap<String, String> {
        let plan = serde_json::to_string(self).expect("plan serializes");
        BTreeMap::from([(String::from("plan"), plan)])
    }
}

/// Datasets for one scheme: train and val sets (when trained on) and the
/// test set.
struct SchemeData {
    train: Option<(LabeledDataset, LabeledDataset)>,
    test: LabeledDataset,
}

fn subset(ds: LabeledDataset, n: Option<usize>) -> LabeledDataset {
    match n {
        Some(n) if n < ds.len() => ds.truncated(n),
        _ => ds,
    }
}

fn stage<T>(marker: &Path, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    write_atomic(marker, format!("running stage: {name}\n").as_bytes())?;
    f().inspect_err(|e| {
        let _ = write_atomic(marker, format!("failed at stage {name}: {e}\n").as_bytes());
    })
}

/// Artifacts of a finished run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: EvalReport,
    pub report_path: PathBuf,
    pub snapshots: Vec<(String, ModelSnapshot)>,
}

/// Runs `plan` with raw IDX files from `data_dir`, writing datasets,
/// snapshots and the report under `out_dir`. Up to `jobs` models train at once.
pub fn run_plan(
    plan: &ExperimentPlan,
    data_dir: &Path,
    out_dir: &Path,
    jobs: usize,
    log: &(dyn Fn(&str) + Sync),
) -> Result<Outcome> {
    plan.validate()?;
    fs::create_dir_all(out_dir).at(out_dir)?;
    let marker = out_dir.join(INCOMPLETE_MARKER);
    let (train_n, val_n, test_n) = match plan.scale {
        Scale::Full { .. } => (None, None, None),
        Scale::Desk { train, val, test, .. } => (Some(train), Some(val), test),
    };

    let data: Vec<(ColorScheme, SchemeData)> = stage(&marker, "datasets", || {
        let raw_train = load_source(data_dir, plan.source, IdxFile::Train)?;
        let raw_test = load_source(data_dir, plan.source, IdxFile::Test)?;
        if let Some(n) = train_n {
            let available = raw_train.len().saturating_sub(VALIDATION_SIZE);
            if n > available {
                return Err(Error::Plan(format!("desk subset {n} exceeds the {available} training images")));
            }
        }
        let dir = out_dir.join("datasets");
        let mut out = Vec::new();
        for scheme in ColorScheme::ALL {
            let build = |raw, split| build_dataset(plan.source, raw, split, scheme, plan.seed, plan.bands);
            let save = |ds: &LabeledDataset| -> Result<()> {
                let path = dir.join(format!("{}.cmds", dataset_label(&ds.provenance)));
                let m = write_dataset(ds, &path)?;
                log(&format!("dataset {} {} images crc32 {:08x}", m.id, m.count, m.crc32));
                Ok(())
            };
            let train = if plan.schemes.contains(&scheme) {
                let tr = subset(build(&raw_train, Split::Train)?, train_n);
                let va = subset(build(&raw_train, Split::Val)?, val_n);
                save(&tr)?;
                save(&va)?;
                Some((tr, va))
            } else {
                None
            };
            let test = subset(build(&raw_test, Split::Test)?, test_n);
            save(&test)?;
            out.push((scheme, SchemeData { train, test }));
        }
        Ok(out)
    })?;

    let snapshots = stage(&marker, "train", || {
        let all = plan.jobs();
        let train_config = plan.train_config();
        let results: Mutex<Vec<Option<Result<ModelSnapshot>>>> = Mutex::new((0..all.len()).map(|_| None).collect());
        let next = Mutex::new(0usize);
        let worker = || loop {
            let i = {
                let mut n = next.lock().expect("job counter");
                let i = *n;
                *n += 1;
                i
            };
            let Some(job) = all.get(i) else { return };
            let (tr, va) = data
                .iter()
                .find(|(s, _)| *s == job.scheme)
                .and_then(|(_, d)| d.train.as_ref())
                .expect("trained schemes have training data");
            let total = train_config.epochs;
            let result = Model::new(&job.config).map_err(Error::from).and_then(|model| {
                log(&format!("train {} parameters {}", job.id, model.parameter_count()));
                train(model, tr, va, &train_config, |r| {
                    log(&format!(
                        "train {} epoch {}/{total} loss {:.4} val_acc {:.4}",
                        job.id, r.epoch, r.train_loss, r.val_accuracy
                    ))
                })
                .map_err(Error::from)
            });
            results.lock().expect("results")[i] = Some(result);
        };
        std::thread::scope(|s| {
            for _ in 1..jobs.clamp(1, all.len()) {
                s.spawn(worker);
            }
            worker();
        });
        let dir = out_dir.join("models");
        let mut out = Vec::new();
        for (job, result) in all.iter().zip(results.into_inner().expect("results")) {
            let snapshot = result.expect("every job ran")?;
            let (tr, _) = data.iter().find(|(s, _)| *s == job.scheme).and_then(|(_, d)| d.train.as_ref()).expect("trained");
            let file = SnapshotFile { id: job.id.clone(), train_data: Some(tr.provenance), snapshot };
            write_snapshot(&file, &dir.join(format!("{}.cmsn", job.id)))?;
            log(&format!(
                "model {} best_val_acc {:.4} epoch {}",
                job.id, file.snapshot.best_val_accuracy, file.snapshot.epoch_of_best
            ));
            out.push((job.id.clone(), file.snapshot));
        }
        Ok(out)
    })?;

    let report = stage(&marker, "evaluate", || {
        let models: Vec<(String, &ModelSnapshot)> = snapshots.iter().map(|(id, s)| (id.clone(), s)).collect();
        let tests: Vec<(String, &LabeledDataset)> =
            data.iter().map(|(_, d)| (dataset_label(&d.test.provenance), &d.test)).collect();
        let mut report = evaluate_grid(&models, &tests)?;
        report.provenance.settings = plan.settings();
        for e in &report.matrix {
            log(&format!("eval {} on {} accuracy {:.4}", e.model, e.dataset, e.accuracy));
        }
        Ok(report)
    })?;

    let report_path = out_dir.join("report.json");
    stage(&marker, "report", || {
        write_json(&report, &report_path)?;
        write_csv_dir(&report, &out_dir.join("csv"))
    })?;
    fs::remove_file(&marker).at(&marker)?;
    Ok(Outcome { report, report_path, snapshots })
}

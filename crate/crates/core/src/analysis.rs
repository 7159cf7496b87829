//! Cross-distribution result tables: the model × dataset accuracy matrix,
//! per-class mean confidence split by correctness, and per-class counts.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::datagen::{LabeledDataset, Provenance, CLASSES};
use crate::error::Result;
use crate::model::ModelConfig;
use crate::train::{evaluate, Evaluation, ModelSnapshot, Prediction, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub model: String,
    pub dataset: String,
    pub accuracy: f64,
}

/// Mean max-probability of one class's predictions, split by correctness.
/// A bucket without members is absent rather than zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceEntry {
    pub model: String,
    pub dataset: String,
    pub class: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incorrect: Option<f64>,
    pub correct_count: usize,
    pub incorrect_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub model: String,
    pub dataset: String,
    pub class: u8,
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub count: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub id: String,
    pub config: ModelConfig,
    pub train_config: TrainConfig,
    pub best_val_accuracy: f64,
    pub epoch_of_best: usize,
}

impl ModelRecord {
    pub fn new(id: &str, snapshot: &ModelSnapshot) -> Self {
        Self {
            id: String::from(id),
            config: snapshot.config.clone(),
            train_config: snapshot.train_config.clone(),
            best_val_accuracy: snapshot.best_val_accuracy,
            epoch_of_best: snapshot.epoch_of_best,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportProvenance {
    pub datasets: Vec<DatasetRecord>,
    pub models: Vec<ModelRecord>,
    /// Free-form run settings, such as the experiment plan.
    #[serde(default)]
    pub settings: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub matrix: Vec<MatrixEntry>,
    pub confidence: Vec<ConfidenceEntry>,
    pub class_counts: Vec<ClassCount>,
    pub provenance: ReportProvenance,
}

impl EvalReport {
    /// Accuracy of `model` on `dataset`, if evaluated.
    pub fn accuracy(&self, model: &str, dataset: &str) -> Option<f64> {
        self.matrix.iter().find(|e| e.model == model && e.dataset == dataset).map(|e| e.accuracy)
    }

    /// Adds all three tables for one evaluated pair.
    pub fn push_cell(&mut self, model: &str, dataset: &str, eval: &Evaluation) {
        self.matrix.push(MatrixEntry {
            model: String::from(model),
            dataset: String::from(dataset),
            accuracy: eval.accuracy,
        });
        self.confidence.extend(confidence_report(model, dataset, &eval.predictions));
        self.class_counts.extend(class_count_report(model, dataset, &eval.predictions));
    }
}

/// Per-class mean confidence over `CLASSES` classes. Classes with no
/// examples at all are skipped.
pub fn confidence_report(model: &str, dataset: &str, predictions: &[Prediction]) -> Vec<ConfidenceEntry> {
    let mut sums = [[0.0f64; 2]; CLASSES];
    let mut counts = [[0usize; 2]; CLASSES];
    for p in predictions {
        let bucket = usize::from(!p.correct());
        sums[p.label as usize][bucket] += p.max_prob;
        counts[p.label as usize][bucket] += 1;
    }
    let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
    (0..CLASSES)
        .filter(|&c| counts[c][0] + counts[c][1] > 0)
        .map(|c| ConfidenceEntry {
            model: String::from(model),
            dataset: String::from(dataset),
            class: c as u8,
            correct: mean(sums[c][0], counts[c][0]),
            incorrect: mean(sums[c][1], counts[c][1]),
            correct_count: counts[c][0],
            incorrect_count: counts[c][1],
        })
        .collect()
}

pub fn class_count_report(model: &str, dataset: &str, predictions: &[Prediction]) -> Vec<ClassCount> {
    let mut correct = [0usize; CLASSES];
    let mut total = [0usize; CLASSES];
    for p in predictions {
        total[p.label as usize] += 1;
        correct[p.label as usize] += usize::from(p.correct());
    }
    (0..CLASSES)
        .map(|c| ClassCount {
            model: String::from(model),
            dataset: String::from(dataset),
            class: c as u8,
            correct: correct[c],
            total: total[c],
        })
        .collect()
}

/// Mean over classes of the incorrect-bucket confidence, ignoring classes
/// whose bucket is empty.
pub fn mean_incorrect_confidence(entries: &[ConfidenceEntry], model: &str, dataset: &str) -> Option<f64> {
    let vals: Vec<f64> =
        entries.iter().filter(|e| e.model == model && e.dataset == dataset).filter_map(|e| e.incorrect).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Evaluates every snapshot on every dataset, row-major by model.
pub fn evaluate_grid(
    snapshots: &[(String, &ModelSnapshot)],
    datasets: &[(String, &LabeledDataset)],
) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for (model_id, snapshot) in snapshots {
        let mut model = snapshot.model()?;
        for (dataset_id, ds) in datasets {
            let eval = crate::train::evaluate_model(&mut model, ds)?;
            report.push_cell(model_id, dataset_id, &eval);
        }
    }
    report.provenance = ReportProvenance {
        datasets: datasets
            .iter()
            .map(|(id, ds)| DatasetRecord { id: id.clone(), count: ds.len(), provenance: ds.provenance })
            .collect(),
        models: snapshots.iter().map(|(id, s)| ModelRecord::new(id, s)).collect(),
        settings: BTreeMap::new(),
    };
    Ok(report)
}

/// Only the accuracy matrix of [`evaluate_grid`].
pub fn accuracy_matrix(
    snapshots: &[(String, &ModelSnapshot)],
    datasets: &[(String, &LabeledDataset)],
) -> Result<Vec<MatrixEntry>> {
    let mut out = Vec::with_capacity(snapshots.len() * datasets.len());
    for (model_id, snapshot) in snapshots {
        for (dataset_id, ds) in datasets {
            out.push(MatrixEntry {
                model: model_id.clone(),
                dataset: dataset_id.clone(),
                accuracy: evaluate(snapshot, ds)?.accuracy,
            });
        }
    }
    Ok(out)
}

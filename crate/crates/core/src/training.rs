//! Mini-batch training with on-the-fly augmentation, and the
//! accuracy/precision/recall evaluation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{resample_patch, NET_INPUT};
use crate::error::{Error, Result};
use crate::nn::{argmax_rows, scc_loss, AdamConfig, AdamState, Mode, Model, Tensor4, CLASS_COUNT};
use crate::sampling::{augment, AugmentationConfig, Label, Patch, PatchSet, CHANNELS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub augmentation: AugmentationConfig,
    pub seed: u64,
    /// Stop once the test loss has not improved for this many epochs, keeping
    /// the best parameters seen.
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            augmentation: AugmentationConfig::default(),
            seed: 0,
            early_stop_patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate {} must be a non-negative real",
                self.learning_rate
            )));
        }
        self.augmentation.validate()
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: TrainConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Confusion counts with Landslide as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut m = ConfusionMatrix::default();
        for (truth, pred) in pairs {
            match (truth, pred) {
                (Label::Landslide, Label::Landslide) => m.tp += 1,
                (Label::NonLandslide, Label::Landslide) => m.fp += 1,
                (Label::NonLandslide, Label::NonLandslide) => m.tn += 1,
                (Label::Landslide, Label::NonLandslide) => m.fn_ += 1,
            }
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// `None` when nothing was predicted positive.
    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// `None` when there are no positives.
    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }
}

// Serialized as {"tp","fp","tn","fn"}.
mod confusion_serde {
    use super::ConfusionMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wire {
        tp: u64,
        fp: u64,
        tn: u64,
        #[serde(rename = "fn")]
        fn_: u64,
    }

    pub fn serialize<S: Serializer>(m: &ConfusionMatrix, s: S) -> Result<S::Ok, S::Error> {
        Wire {
            tp: m.tp,
            fp: m.fp,
            tn: m.tn,
            fn_: m.fn_,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ConfusionMatrix, D::Error> {
        let w = Wire::deserialize(d)?;
        Ok(ConfusionMatrix {
            tp: w.tp,
            fp: w.fp,
            tn: w.tn,
            fn_: w.fn_,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub accuracy: f64,
    /// `null` when undefined (no positive predictions).
    pub precision: Option<f64>,
    /// `null` when undefined (no positive samples).
    pub recall: Option<f64>,
    #[serde(with = "confusion_serde")]
    pub confusion: ConfusionMatrix,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        EvalReport {
            dataset: None,
            accuracy: confusion.accuracy(),
            precision: confusion.precision(),
            recall: confusion.recall(),
            confusion,
            loss_curve: Vec::new(),
        }
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{:.2}", 100.0 * x))
}

/// Plain-text table with the Dataset / Accuracy / Precision / Recall columns.
pub fn format_table(reports: &[EvalReport]) -> String {
    let rows: Vec<[String; 4]> = reports
        .iter()
        .map(|r| {
            [
                r.dataset.clone().unwrap_or_else(|| "-".into()),
                pct(Some(r.accuracy)),
                pct(r.precision),
                pct(r.recall),
            ]
        })
        .collect();
    let head = ["Dataset Name", "Accuracy(%)", "Precision(%)", "Recall(%)"];
    let widths: Vec<usize> = (0..4)
        .map(|i| {
            rows.iter()
                .map(|r| r[i].len())
                .chain([head[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, cells: [&str; 4]| {
        let _ = writeln!(
            out,
            "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}",
            cells[0],
            cells[1],
            cells[2],
            cells[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3]
        );
    };
    line(&mut out, head);
    let total: usize = widths.iter().sum::<usize>() + 6;
    let _ = writeln!(out, "{}", "-".repeat(total));
    for r in &rows {
        line(&mut out, [&r[0], &r[1], &r[2], &r[3]]);
    }
    out
}

/// Resamples patches to the network input size and stacks them.
pub fn batch_tensor(patches: &[&Patch]) -> Result<Tensor4<f32>> {
    let mut data = Vec::with_capacity(patches.len() * NET_INPUT * NET_INPUT * CHANNELS);
    for p in patches {
        data.extend(resample_patch(&p.pixels));
    }
    Tensor4::new([patches.len(), NET_INPUT, NET_INPUT, CHANNELS], data)
}

const EVAL_BATCH: usize = 64;

/// Landslide probability for every patch, in input order. Batches are
/// evaluated in parallel; the result does not depend on the thread count.
pub fn predict_probabilities(model: &Model<f32>, patches: &[Patch]) -> Result<Vec<f32>> {
    let chunks: Vec<Vec<f32>> = patches
        .par_chunks(EVAL_BATCH)
        .map(|chunk| {
            let refs: Vec<&Patch> = chunk.iter().collect();
            let x = batch_tensor(&refs)?;
            model.forward(&x, Mode::Infer)
        })
        .collect::<Result<_>>()?;
    Ok(chunks.concat())
}

fn mean_loss(model: &Model<f32>, patches: &[Patch]) -> Result<f64> {
    let probs = predict_probabilities(model, patches)?;
    let labels: Vec<usize> = patches.iter().map(|p| p.label.index()).collect();
    Ok(scc_loss(&probs, &labels, CLASS_COUNT)?.loss as f64)
}

/// Argmax predictions against the patch labels.
pub fn evaluate(model: &Model<f32>, patches: &[Patch]) -> Result<EvalReport> {
    if patches.is_empty() {
        return Err(Error::Empty("no patches to evaluate".into()));
    }
    let probs = predict_probabilities(model, patches)?;
    let preds = argmax_rows(&probs, CLASS_COUNT);
    let confusion = ConfusionMatrix::from_pairs(
        patches
            .iter()
            .zip(preds)
            .map(|(p, k)| (p.label, Label::from_index(k).expect("two classes"))),
    );
    Ok(EvalReport::from_confusion(confusion))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model<f32>,
    pub adam: AdamState<f32>,
    pub report: EvalReport,
    pub epochs_run: usize,
}

/// Runs `cfg.epochs` epochs of shuffled, augmented mini-batch Adam training,
/// then evaluates on the test split with augmentation and dropout off.
/// `adam` resumes a saved optimizer state; otherwise a fresh one is created.
pub fn train_with_state(
    mut model: Model<f32>,
    adam: Option<AdamState<f32>>,
    set: &PatchSet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if set.train.is_empty() || set.test.is_empty() {
        return Err(Error::Empty(
            "train and test splits must both be non-empty".into(),
        ));
    }
    let input = model.input_shape();
    if (input.h, input.w, input.c) != (NET_INPUT, NET_INPUT, CHANNELS) {
        return Err(Error::ShapeMismatch(format!(
            "model input {}x{}x{} does not match resampled patches {NET_INPUT}x{NET_INPUT}x{CHANNELS}",
            input.h, input.w, input.c
        )));
    }
    let mut adam = match adam {
        Some(mut st) => {
            st.config.lr = cfg.learning_rate;
            st
        }
        None => AdamState::for_params(
            AdamConfig {
                lr: cfg.learning_rate,
                ..AdamConfig::default()
            },
            model.params(),
        ),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut aug_rng = ChaCha8Rng::seed_from_u64(cfg.augmentation.seed);
    let mut order: Vec<usize> = (0..set.train.len()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Model<f32>, usize)> = None;
    let mut epochs_run = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0f64;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<Patch> = if cfg.augmentation.is_identity() {
                idx.iter().map(|&i| set.train[i].clone()).collect()
            } else {
                idx.iter()
                    .map(|&i| augment(&set.train[i], &cfg.augmentation, &mut aug_rng))
                    .collect()
            };
            let refs: Vec<&Patch> = batch.iter().collect();
            let x = batch_tensor(&refs)?;
            let labels: Vec<usize> = batch.iter().map(|p| p.label.index()).collect();
            let out = model.loss_and_grads(&x, &labels, Mode::Train(&mut rng))?;
            adam.step(model.params_mut(), &out.grads)?;
            weighted += out.loss as f64 * idx.len() as f64;
        }
        let epoch_loss = weighted / set.train.len() as f64;
        loss_curve.push(epoch_loss);
        epochs_run = epoch + 1;
        debug!("epoch {epochs_run}: train loss {epoch_loss:.6}");

        if let Some(patience) = cfg.early_stop_patience {
            let test_loss = mean_loss(&model, &set.test)?;
            let improved = best.as_ref().is_none_or(|(b, _, _)| test_loss < *b);
            if improved {
                best = Some((test_loss, model.clone(), epoch));
            } else if epoch - best.as_ref().map_or(0, |b| b.2) >= patience {
                info!("early stop after epoch {epochs_run}: test loss has not improved for {patience} epochs");
                break;
            }
        }
    }
    if let Some((_, m, _)) = best {
        model = m;
    }
    let mut report = evaluate(&model, &set.test)?;
    report.loss_curve = loss_curve;
    Ok(TrainOutcome {
        model,
        adam,
        report,
        epochs_run,
    })
}

pub fn train(
    model: Model<f32>,
    set: &PatchSet,
    cfg: &TrainConfig,
) -> Result<(Model<f32>, EvalReport)> {
    let out = train_with_state(model, None, set, cfg)?;
    Ok((out.model, out.report))
}

//! Full-batch self-training loop with three labelling strategies.
//!
//! Every iteration first regenerates labels for each weak image from the
//! current model (the label-generation flow), then takes one gradient step
//! on the objective built from those labels with the labels held fixed.
//!
//! - `raw-assign`: the coarse image label becomes the target of the
//!   proposal that scores highest on it.
//! - `self-train`: thresholded argmax pseudo labels, no expansion, no image
//!   term.
//! - `lhst`: expanded, merged and reliability-weighted box labels plus the
//!   weighted image term on the mean-pooled proposal features.
//!
//! All methods share the supervised term on the fully labelled split.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::hierarchy::LabelVector;
use crate::loss::{box_loss, lhst_objective, LossBreakdown, ObjectiveConfig, Reduction, WeakSample};
use crate::matrix_io::format_value;
use crate::pseudo::{
    argmax, argmax_pseudo, filter_predictions, generate_weighted_labels, ImageScoreVector, PredictionMatrix,
    PseudoLabelConfig, WeightedBoxLabels, WeightedImageLabel,
};

use super::model::{ModelGrad, ToyModel};
use super::world::{Dataset, SynthWorld};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    RawAssign,
    SelfTrain,
    Lhst,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::RawAssign, Method::SelfTrain, Method::Lhst];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::RawAssign => "raw-assign",
            Method::SelfTrain => "self-train",
            Method::Lhst => "lhst",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub iters: usize,
    pub lr: f64,
    pub threshold: f64,
    /// Seeds the model initialization.
    pub seed: u64,
    /// `Mean` averages the weak terms over images and the supervised term
    /// over labelled samples, which keeps the step size independent of the
    /// dataset size.
    pub reduction: Reduction,
    /// Passed through to the `lhst` label generation.
    pub confirm_pseudo: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Lhst,
            iters: 1000,
            lr: 0.5,
            threshold: 0.75,
            seed: 0,
            reduction: Reduction::Mean,
            confirm_pseudo: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidThreshold(self.threshold));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::InvalidConfig(format!("learning rate {} must be > 0", self.lr)));
        }
        Ok(())
    }
}

/// Labels generated for one weak image in one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTargets {
    pub boxes: WeightedBoxLabels,
    /// Image score at label time and the image label; only `lhst` has an
    /// image term. The score is recomputed from the model in the objective.
    pub image: Option<(ImageScoreVector, WeightedImageLabel)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub method: Method,
    /// Objective before each update.
    pub trace: Vec<LossBreakdown>,
    pub initial_accuracy: f64,
    pub final_accuracy: f64,
    pub model: ToyModel,
}

impl SimResult {
    /// Tab-separated trace followed by a summary block.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# iter\tdet_loss\tbox_loss\timage_loss\ttotal\n");
        for (i, b) in self.trace.iter().enumerate() {
            out.push_str(&format!(
                "{i}\t{}\t{}\t{}\t{}\n",
                format_value(b.det_loss),
                format_value(b.box_loss),
                format_value(b.image_loss),
                format_value(b.total)
            ));
        }
        out.push_str("# summary\n");
        out.push_str(&format!("method\t{}\n", self.method));
        out.push_str(&format!("iterations\t{}\n", self.trace.len()));
        out.push_str(&format!("initial_accuracy\t{}\n", format_value(self.initial_accuracy)));
        out.push_str(&format!("final_accuracy\t{}\n", format_value(self.final_accuracy)));
        out
    }
}

/// Weak data laid out for batched forward passes.
struct Prepared {
    /// All weak proposals stacked.
    proposals: Array2<f64>,
    /// Row range of each image inside `proposals`.
    ranges: Vec<std::ops::Range<usize>>,
    /// Mean-pooled proposal features per image.
    pooled: Array2<f64>,
    det_x: Array2<f64>,
    /// A labelled sample is positive for its leaf and every ancestor.
    det_labels: WeightedBoxLabels,
}

impl Prepared {
    fn new(world: &SynthWorld, data: &Dataset) -> Self {
        let f = world.config.features;
        let total: usize = data.weak.iter().map(|w| w.proposals.nrows()).sum();
        let mut proposals = Array2::zeros((total, f));
        let mut pooled = Array2::zeros((data.weak.len(), f));
        let mut ranges = Vec::with_capacity(data.weak.len());
        let mut at = 0;
        for (i, img) in data.weak.iter().enumerate() {
            let n = img.proposals.nrows();
            proposals.slice_mut(ndarray::s![at..at + n, ..]).assign(&img.proposals);
            pooled
                .row_mut(i)
                .assign(&img.proposals.mean_axis(Axis(0)).expect("images have proposals"));
            ranges.push(at..at + n);
            at += n;
        }
        let c = world.class_count();
        let mut det_x = Array2::zeros((data.det.len(), f));
        let mut labels = Array2::from_elem((data.det.len(), c), false);
        for (i, s) in data.det.iter().enumerate() {
            det_x.row_mut(i).assign(&s.features);
            for level in 0..=world.level(s.leaf) {
                labels[[i, world.ancestor_at(s.leaf, level)]] = true;
            }
        }
        let det_labels = WeightedBoxLabels {
            weights: Array2::ones(labels.dim()),
            labels,
            kept_indices: (0..data.det.len()).collect(),
        };
        Self {
            proposals,
            ranges,
            pooled,
            det_x,
            det_labels,
        }
    }
}

fn prediction_matrix(probs: Array2<f64>, iteration: usize) -> Result<PredictionMatrix> {
    PredictionMatrix::new(probs, false).map_err(|_| Error::NonFiniteLoss {
        what: "model output",
        iteration: Some(iteration),
    })
}

/// Label-generation flow for every weak image under the current model.
fn make_targets(
    world: &SynthWorld,
    data: &Dataset,
    prep: &Prepared,
    model: &ToyModel,
    cfg: &TrainConfig,
    iteration: usize,
) -> Result<Vec<ImageTargets>> {
    let probs = model.probs(&prep.proposals);
    let c = world.class_count();
    let pseudo_cfg = PseudoLabelConfig {
        threshold: cfg.threshold,
        confirm_pseudo: cfg.confirm_pseudo,
        ..Default::default()
    };
    let mut out = Vec::with_capacity(data.weak.len());
    for (i, img) in data.weak.iter().enumerate() {
        let preds = prediction_matrix(
            probs.slice(ndarray::s![prep.ranges[i].clone(), ..]).to_owned(),
            iteration,
        )?;
        let targets = match cfg.method {
            Method::RawAssign => {
                let scores = preds
                    .probs()
                    .rows()
                    .into_iter()
                    .map(|row| img.y_cls.ones().map(|c| row[c]).fold(f64::NEG_INFINITY, f64::max));
                let best = argmax(scores).expect("images have proposals");
                let mut labels = Array2::from_elem((1, c), false);
                labels.row_mut(0).assign(&Array1::from(img.y_cls.bits().to_vec()));
                ImageTargets {
                    boxes: WeightedBoxLabels {
                        labels,
                        weights: Array2::ones((1, c)),
                        kept_indices: vec![best],
                    },
                    image: None,
                }
            }
            Method::SelfTrain => {
                let kept = filter_predictions(&preds, cfg.threshold)?;
                let labels = argmax_pseudo(&kept);
                ImageTargets {
                    boxes: WeightedBoxLabels {
                        weights: Array2::ones(labels.dim()),
                        labels,
                        kept_indices: kept.source_rows().to_vec(),
                    },
                    image: None,
                }
            }
            Method::Lhst => {
                let p_image = ImageScoreVector::new(model.probs_one(prep.pooled.row(i)).to_vec())
                    .map_err(|_| Error::NonFiniteLoss {
                        what: "model output",
                        iteration: Some(iteration),
                    })?;
                let generated = generate_weighted_labels(
                    &preds,
                    &img.y_cls,
                    &world.graph,
                    &world.vocab,
                    Some(&p_image),
                    &pseudo_cfg,
                )?;
                ImageTargets {
                    boxes: generated.boxes,
                    image: Some((p_image, generated.image)),
                }
            }
        };
        out.push(targets);
    }
    Ok(out)
}

/// Objective and its parameter gradient with the targets held fixed.
/// Gradients go through the sigmoid: `d/dz [w BCE(sigmoid(z), y)] = w (p - y)`.
fn loss_and_grad(
    world: &SynthWorld,
    prep: &Prepared,
    model: &ToyModel,
    targets: &[ImageTargets],
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, ModelGrad)> {
    let c = world.class_count();
    let mut grad = ModelGrad::zeros_like(model);

    let det_count = prep.det_x.nrows();
    let det_scale = match cfg.reduction {
        Reduction::Mean if det_count > 0 => 1.0 / det_count as f64,
        _ => 1.0,
    };
    let det_probs = prediction_matrix(model.probs(&prep.det_x), 0)?;
    let det_sum = box_loss(&det_probs, &prep.det_labels)?;
    for (n, row) in det_probs.probs().rows().into_iter().enumerate() {
        let d = Array1::from_shape_fn(c, |k| {
            row[k] - if prep.det_labels.labels[[n, k]] { 1.0 } else { 0.0 }
        });
        grad.add_row(prep.det_x.row(n), d.view(), det_scale);
    }

    let weak_scale = match cfg.reduction {
        Reduction::Mean if !targets.is_empty() => 1.0 / targets.len() as f64,
        _ => 1.0,
    };
    let probs = model.probs(&prep.proposals);
    let no_image = (
        ImageScoreVector::new(vec![0.5; c])?,
        WeightedImageLabel {
            label: LabelVector::zeros(c),
            weights: vec![0.0; c],
        },
    );
    let mut kept_preds = Vec::with_capacity(targets.len());
    for (range, t) in prep.ranges.iter().zip(targets) {
        let rows: Vec<usize> = t.boxes.kept_indices.iter().map(|&k| range.start + k).collect();
        let kept = probs.select(Axis(0), &rows);
        for (j, &r) in rows.iter().enumerate() {
            let d = Array1::from_shape_fn(c, |k| {
                let y = if t.boxes.labels[[j, k]] { 1.0 } else { 0.0 };
                t.boxes.weights[[j, k]] * (kept[[j, k]] - y)
            });
            grad.add_row(prep.proposals.row(r), d.view(), weak_scale);
        }
        kept_preds.push(prediction_matrix(kept, 0)?);
    }
    let pooled_probs = model.probs(&prep.pooled);
    let mut image_scores = Vec::with_capacity(targets.len());
    for (i, t) in targets.iter().enumerate() {
        let Some((_, label)) = &t.image else {
            image_scores.push(None);
            continue;
        };
        let p_image = ImageScoreVector::new(pooled_probs.row(i).to_vec()).map_err(|_| Error::NonFiniteLoss {
            what: "model output",
            iteration: None,
        })?;
        let d = Array1::from_shape_fn(c, |k| {
            let y = if label.label.get(k) { 1.0 } else { 0.0 };
            label.weights[k] * (p_image.probs()[k] - y)
        });
        grad.add_row(prep.pooled.row(i), d.view(), weak_scale);
        image_scores.push(Some((p_image, label)));
    }

    let batch: Vec<WeakSample<'_>> = targets
        .iter()
        .zip(&kept_preds)
        .zip(&image_scores)
        .map(|((t, preds), scored)| {
            let (p_image, image) = match scored {
                Some((p, label)) => (p, *label),
                None => (&no_image.0, &no_image.1),
            };
            WeakSample {
                preds,
                p_image,
                boxes: &t.boxes,
                image,
            }
        })
        .collect();
    let det_loss = det_sum * det_scale;
    let objective = ObjectiveConfig {
        reduction: cfg.reduction,
        ..Default::default()
    };
    let breakdown = lhst_objective(&|| det_loss, &batch, &objective)?;
    Ok((breakdown, grad))
}

/// Fraction of samples whose highest-scoring leaf class is their true leaf.
pub fn fine_accuracy(world: &SynthWorld, model: &ToyModel, samples: &[super::world::Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let leaves = world.leaves();
    let correct = samples
        .iter()
        .filter(|s| {
            let z = model.logits_one(s.features.view());
            let best = argmax(z.iter().skip(leaves.start).copied()).expect("at least one leaf");
            leaves.start + best == s.leaf
        })
        .count();
    correct as f64 / samples.len() as f64
}

pub fn train(world: &SynthWorld, data: &Dataset, cfg: &TrainConfig) -> Result<SimResult> {
    train_observed(world, data, cfg, |_, _| {})
}

/// Like [`train`], calling `observer(iteration, targets)` after labels are
/// generated in each iteration.
pub fn train_observed<F>(
    world: &SynthWorld,
    data: &Dataset,
    cfg: &TrainConfig,
    mut observer: F,
) -> Result<SimResult>
where
    F: FnMut(usize, &[ImageTargets]),
{
    cfg.validate()?;
    let prep = Prepared::new(world, data);
    let mut model = ToyModel::init(world.class_count(), world.config.features, cfg.seed);
    let initial_accuracy = fine_accuracy(world, &model, &data.test);
    let mut trace = Vec::with_capacity(cfg.iters);
    for iteration in 0..cfg.iters {
        if !model.is_finite() {
            return Err(Error::NonFiniteLoss {
                what: "model parameter",
                iteration: Some(iteration),
            });
        }
        let targets = make_targets(world, data, &prep, &model, cfg, iteration)?;
        observer(iteration, &targets);
        let (breakdown, grad) = loss_and_grad(world, &prep, &model, &targets, cfg).map_err(|e| match e {
            Error::NonFiniteLoss { what, .. } => Error::NonFiniteLoss {
                what,
                iteration: Some(iteration),
            },
            other => other,
        })?;
        trace.push(breakdown);
        grad.apply(&mut model, cfg.lr);
    }
    Ok(SimResult {
        method: cfg.method,
        trace,
        initial_accuracy,
        final_accuracy: fine_accuracy(world, &model, &data.test),
        model,
    })
}

/// One run per method, same world, same seed.
pub fn compare_methods(world: &SynthWorld, data: &Dataset, cfg: &TrainConfig) -> Result<Vec<SimResult>> {
    Method::ALL
        .into_iter()
        .map(|method| train(world, data, &TrainConfig { method, ..cfg.clone() }))
        .collect()
}

/// `lhst` final accuracy for each threshold, everything else fixed.
pub fn threshold_sweep(
    world: &SynthWorld,
    data: &Dataset,
    t_values: &[f64],
    cfg: &TrainConfig,
) -> Result<Vec<(f64, f64)>> {
    if let Some(&bad) = t_values.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidThreshold(bad));
    }
    t_values
        .iter()
        .map(|&t| {
            let run = TrainConfig {
                method: Method::Lhst,
                threshold: t,
                ..cfg.clone()
            };
            train(world, data, &run).map(|r| (t, r.final_accuracy))
        })
        .collect()
}

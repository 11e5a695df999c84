//! Reliability-weighted binary cross-entropy losses and their gradients.
//!
//! The box loss is a plain double sum over proposals and classes of
//! `BCE(p, y) * w`, the image loss is the same over classes for the image
//! score, and the overall objective adds a supervised detection term
//! supplied by the caller. Weights are constants here: they come out of the
//! label-generation flow and no gradient flows through them.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::pseudo::{ImageScoreVector, PredictionMatrix, WeightedBoxLabels, WeightedImageLabel};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-7;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// `w * (-y ln p - (1 - y) ln(1 - p))` with `p` clamped.
pub fn weighted_bce(p: f64, y: bool, w: f64) -> f64 {
    let p = clamp_prob(p);
    let bce = if y { -p.ln() } else { -(-p).ln_1p() };
    w * bce
}

/// `d weighted_bce / dp = w (p - y) / (p (1 - p))`, `p` clamped.
pub fn weighted_bce_grad(p: f64, y: bool, w: f64) -> f64 {
    let p = clamp_prob(p);
    let y = if y { 1.0 } else { 0.0 };
    w * (p - y) / (p * (1.0 - p))
}

fn check_box_shapes(preds: &PredictionMatrix, wl: &WeightedBoxLabels) -> Result<()> {
    Error::check_dim("box labels rows", preds.rows(), wl.labels.nrows())?;
    Error::check_dim("box labels classes", preds.classes(), wl.labels.ncols())?;
    Error::check_dim("box weights rows", preds.rows(), wl.weights.nrows())?;
    Error::check_dim("box weights classes", preds.classes(), wl.weights.ncols())
}

fn check_image_shapes(p_image: &ImageScoreVector, wl: &WeightedImageLabel) -> Result<()> {
    Error::check_dim("image label", p_image.len(), wl.label.len())?;
    Error::check_dim("image weights", p_image.len(), wl.weights.len())
}

/// Sum over kept proposals and classes, row-major. Zero when no proposal
/// survived filtering.
pub fn box_loss(preds: &PredictionMatrix, wl: &WeightedBoxLabels) -> Result<f64> {
    check_box_shapes(preds, wl)?;
    let mut total = 0.0;
    for ((&p, &y), &w) in preds.probs().iter().zip(wl.labels.iter()).zip(wl.weights.iter()) {
        total += weighted_bce(p, y, w);
    }
    Ok(total)
}

pub fn image_loss(p_image: &ImageScoreVector, wl: &WeightedImageLabel) -> Result<f64> {
    check_image_shapes(p_image, wl)?;
    let mut total = 0.0;
    for ((&p, &y), &w) in p_image.probs().iter().zip(wl.label.bits()).zip(&wl.weights) {
        total += weighted_bce(p, y, w);
    }
    Ok(total)
}

/// Gradient of [`box_loss`] with respect to each probability.
pub fn grad_wrt_probs(preds: &PredictionMatrix, wl: &WeightedBoxLabels) -> Result<Array2<f64>> {
    check_box_shapes(preds, wl)?;
    let mut grad = Array2::zeros(preds.probs().dim());
    for (((g, &p), &y), &w) in grad
        .iter_mut()
        .zip(preds.probs().iter())
        .zip(wl.labels.iter())
        .zip(wl.weights.iter())
    {
        *g = weighted_bce_grad(p, y, w);
    }
    Ok(grad)
}

/// Gradient of [`image_loss`] with respect to each image probability.
pub fn image_grad_wrt_probs(p_image: &ImageScoreVector, wl: &WeightedImageLabel) -> Result<Vec<f64>> {
    check_image_shapes(p_image, wl)?;
    Ok(p_image
        .probs()
        .iter()
        .zip(wl.label.bits())
        .zip(&wl.weights)
        .map(|((&p, &y), &w)| weighted_bce_grad(p, y, w))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub det_loss: f64,
    pub box_loss: f64,
    pub image_loss: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(det_loss: f64, box_loss: f64, image_loss: f64) -> Self {
        Self {
            det_loss,
            box_loss,
            image_loss,
            total: det_loss + box_loss + image_loss,
        }
    }
}

/// Supplies the fully supervised detection term of the objective.
pub trait DetectionLoss {
    fn det_loss(&self) -> f64;
}

impl<F: Fn() -> f64> DetectionLoss for F {
    fn det_loss(&self) -> f64 {
        self()
    }
}

/// A constant detection term, e.g. read from a file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedDetectionLoss(pub f64);

impl DetectionLoss for FixedDetectionLoss {
    fn det_loss(&self) -> f64 {
        self.0
    }
}

/// How the weak terms are aggregated over the batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    /// Plain sum over images.
    #[default]
    Sum,
    /// Sum divided by the number of weak images.
    Mean,
}

/// Optional multipliers on the three terms (all 1 by default) and the batch
/// reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub det_scale: f64,
    pub box_scale: f64,
    pub image_scale: f64,
    pub reduction: Reduction,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            det_scale: 1.0,
            box_scale: 1.0,
            image_scale: 1.0,
            reduction: Reduction::Sum,
        }
    }
}

/// One weakly labelled image ready for loss computation. `preds` must hold
/// exactly the rows that survived filtering.
#[derive(Debug, Clone, Copy)]
pub struct WeakSample<'a> {
    pub preds: &'a PredictionMatrix,
    pub p_image: &'a ImageScoreVector,
    pub boxes: &'a WeightedBoxLabels,
    pub image: &'a WeightedImageLabel,
}

fn finite(value: f64, what: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteLoss {
            what,
            iteration: None,
        })
    }
}

/// Detection term plus the box and image losses summed over the batch.
pub fn lhst_objective<D: DetectionLoss + ?Sized>(
    det: &D,
    batch: &[WeakSample<'_>],
    config: &ObjectiveConfig,
) -> Result<LossBreakdown> {
    let det_loss = finite(det.det_loss(), "detection")?;
    if det_loss < 0.0 {
        return Err(Error::Invariant(format!("detection loss {det_loss} is negative")));
    }
    let mut boxes = 0.0;
    let mut image = 0.0;
    for sample in batch {
        boxes += box_loss(sample.preds, sample.boxes)?;
        image += image_loss(sample.p_image, sample.image)?;
    }
    if config.reduction == Reduction::Mean && !batch.is_empty() {
        let n = batch.len() as f64;
        boxes /= n;
        image /= n;
    }
    let breakdown = LossBreakdown::new(
        config.det_scale * det_loss,
        config.box_scale * finite(boxes, "box")?,
        config.image_scale * finite(image, "image")?,
    );
    finite(breakdown.total, "total")?;
    Ok(breakdown)
}

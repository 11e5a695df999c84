//! Pseudo box labels for one weakly labelled image.
//!
//! Pipeline: expand the image label through the hierarchy, drop proposals
//! whose top score is below the threshold, take the argmax class of each
//! survivor, OR the expanded image label into every row, and attach
//! reliability weights. A weight equals the predicted probability on classes
//! that were added by expansion and 1 everywhere else.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::hierarchy::{expand_labels_with_depth, expanded_mask, HierarchyGraph, LabelVector, Vocabulary};

/// Tolerance for the row-sum check on softmax outputs.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

pub const DEFAULT_THRESHOLD: f64 = 0.75;

/// `N x C` per-proposal class probabilities.
///
/// `normalized` marks softmax output (rows sum to one); per-class sigmoid
/// scores leave it unset. `source_rows` maps each row back to the proposal
/// index it had before filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    probs: Array2<f64>,
    normalized: bool,
    source_rows: Vec<usize>,
}

impl PredictionMatrix {
    pub fn new(probs: Array2<f64>, normalized: bool) -> Result<Self> {
        if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Invariant(format!("probability {bad} outside [0, 1]")));
        }
        if normalized {
            for (n, row) in probs.rows().into_iter().enumerate() {
                let sum: f64 = row.sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::Invariant(format!("row {n} sums to {sum}, expected 1")));
                }
            }
        }
        let source_rows = (0..probs.nrows()).collect();
        Ok(Self {
            probs,
            normalized,
            source_rows,
        })
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn rows(&self) -> usize {
        self.probs.nrows()
    }

    pub fn classes(&self) -> usize {
        self.probs.ncols()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Original proposal index of every row.
    pub fn source_rows(&self) -> &[usize] {
        &self.source_rows
    }

    /// Keeps the given local rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            probs: self.probs.select(Axis(0), rows),
            normalized: self.normalized,
            source_rows: rows.iter().map(|&r| self.source_rows[r]).collect(),
        }
    }
}

/// Class probabilities for the whole-image proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageScoreVector(Vec<f64>);

impl ImageScoreVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Invariant(format!("probability {bad} outside [0, 1]")));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Merged box labels with their reliability weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedBoxLabels {
    pub labels: Array2<bool>,
    pub weights: Array2<f64>,
    /// Proposal indices (before filtering) of the rows above.
    pub kept_indices: Vec<usize>,
}

impl WeightedBoxLabels {
    pub fn empty(classes: usize) -> Self {
        Self {
            labels: Array2::from_elem((0, classes), false),
            weights: Array2::zeros((0, classes)),
            kept_indices: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.labels.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.nrows() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedImageLabel {
    pub label: LabelVector,
    pub weights: Vec<f64>,
}

/// How to derive the image-level score when the caller does not supply one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImageReduction {
    /// Per-class maximum over all proposals.
    #[default]
    Max,
    /// Per-class mean over all proposals.
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelConfig {
    pub threshold: f64,
    pub image_reduction: ImageReduction,
    /// Give weight 1 to expanded classes that are also the proposal's own
    /// argmax. Off by default.
    pub confirm_pseudo: bool,
    /// Hop limit for hierarchy expansion, unlimited when `None`.
    pub max_depth: Option<usize>,
}

impl Default for PseudoLabelConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            image_reduction: ImageReduction::Max,
            confirm_pseudo: false,
            max_depth: None,
        }
    }
}

/// Everything produced for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedLabels {
    pub boxes: WeightedBoxLabels,
    pub image: WeightedImageLabel,
    /// Expanded image label.
    pub y_hier: LabelVector,
    /// Classes added by expansion.
    pub mask: LabelVector,
}

/// Keeps the rows whose maximum probability reaches `t`.
pub fn filter_predictions(preds: &PredictionMatrix, t: f64) -> Result<PredictionMatrix> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidThreshold(t));
    }
    let kept: Vec<usize> = preds
        .probs
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(_, row)| row.iter().any(|&p| p >= t))
        .map(|(n, _)| n)
        .collect();
    Ok(preds.select_rows(&kept))
}

pub(crate) fn argmax(row: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (c, p) in row.enumerate() {
        // strict comparison keeps the lowest index on ties
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((c, p));
        }
    }
    best.map(|(c, _)| c)
}

/// One-hot argmax per row; ties go to the lowest class index.
pub fn argmax_pseudo(preds: &PredictionMatrix) -> Array2<bool> {
    let mut out = Array2::from_elem(preds.probs.dim(), false);
    for (n, row) in preds.probs.rows().into_iter().enumerate() {
        if let Some(c) = argmax(row.iter().copied()) {
            out[[n, c]] = true;
        }
    }
    out
}

/// Elementwise OR of every pseudo row with the expanded image label.
pub fn merge_labels(pseudo: &Array2<bool>, y_hier: &LabelVector) -> Result<Array2<bool>> {
    Error::check_dim("merge_labels", y_hier.len(), pseudo.ncols())?;
    let mut out = pseudo.clone();
    for mut row in out.rows_mut() {
        for (cell, &h) in row.iter_mut().zip(y_hier.bits()) {
            *cell |= h;
        }
    }
    Ok(out)
}

/// `w[n][c] = p[n][c]` on expanded classes, 1 elsewhere.
pub fn reliability_weights(preds: &PredictionMatrix, mask: &LabelVector) -> Result<Array2<f64>> {
    Error::check_dim("reliability_weights", mask.len(), preds.classes())?;
    let mut w = preds.probs.clone();
    for mut row in w.rows_mut() {
        for (v, &m) in row.iter_mut().zip(mask.bits()) {
            if !m {
                *v = 1.0;
            }
        }
    }
    Ok(w)
}

/// Image-level analogue of [`reliability_weights`].
pub fn image_weights(p_image: &ImageScoreVector, mask: &LabelVector) -> Result<Vec<f64>> {
    Error::check_dim("image_weights", mask.len(), p_image.len())?;
    Ok(p_image
        .probs()
        .iter()
        .zip(mask.bits())
        .map(|(&p, &m)| if m { p } else { 1.0 })
        .collect())
}

/// Reduces all (unfiltered) proposals to an image-level score.
pub fn image_score_from_proposals(
    preds: &PredictionMatrix,
    reduction: ImageReduction,
) -> Result<ImageScoreVector> {
    if preds.rows() == 0 {
        return Err(Error::Invariant(
            "cannot reduce an image score from zero proposals".into(),
        ));
    }
    let probs = preds.probs();
    let scores = match reduction {
        ImageReduction::Max => probs
            .columns()
            .into_iter()
            .map(|col| col.iter().copied().fold(0.0, f64::max))
            .collect(),
        ImageReduction::Mean => probs
            .columns()
            .into_iter()
            .map(|col| col.sum() / col.len() as f64)
            .collect(),
    };
    ImageScoreVector::new(scores)
}

/// Full label-generation flow for one image. `p_image` may be supplied by
/// the detector; otherwise it is reduced from the unfiltered proposals.
pub fn generate_weighted_labels(
    preds: &PredictionMatrix,
    y_cls: &LabelVector,
    graph: &HierarchyGraph,
    vocab: &Vocabulary,
    p_image: Option<&ImageScoreVector>,
    config: &PseudoLabelConfig,
) -> Result<GeneratedLabels> {
    Error::check_dim("generate_weighted_labels", vocab.len(), preds.classes())?;
    let y_hier = expand_labels_with_depth(graph, vocab, y_cls, config.max_depth)?;
    let mask = expanded_mask(y_cls, &y_hier)?;

    let p_image = match p_image {
        Some(p) => p.clone(),
        None => image_score_from_proposals(preds, config.image_reduction)?,
    };
    let image = WeightedImageLabel {
        label: y_hier.clone(),
        weights: image_weights(&p_image, &mask)?,
    };

    let kept = filter_predictions(preds, config.threshold)?;
    let boxes = if kept.rows() == 0 {
        WeightedBoxLabels::empty(preds.classes())
    } else {
        let pseudo = argmax_pseudo(&kept);
        let labels = merge_labels(&pseudo, &y_hier)?;
        let mut weights = reliability_weights(&kept, &mask)?;
        if config.confirm_pseudo {
            for (mut w_row, own_row) in weights.rows_mut().into_iter().zip(pseudo.rows()) {
                for ((w, &own), &m) in w_row.iter_mut().zip(own_row.iter()).zip(mask.bits()) {
                    if own && m {
                        *w = 1.0;
                    }
                }
            }
        }
        WeightedBoxLabels {
            labels,
            weights,
            kept_indices: kept.source_rows().to_vec(),
        }
    };

    Ok(GeneratedLabels {
        boxes,
        image,
        y_hier,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn preds(p: Array2<f64>) -> PredictionMatrix {
        PredictionMatrix::new(p, false).unwrap()
    }

    #[test]
    fn prediction_matrix_validation() {
        assert!(PredictionMatrix::new(array![[1.2]], false).is_err());
        assert!(PredictionMatrix::new(array![[0.5, 0.4]], true).is_err());
        assert!(PredictionMatrix::new(array![[0.5, 0.5]], true).is_ok());
        assert!(PredictionMatrix::new(array![[f64::NAN]], false).is_err());
    }

    #[test]
    fn zero_threshold_keeps_everything() {
        let p = preds(array![[0.0, 0.0], [0.1, 0.2]]);
        let kept = filter_predictions(&p, 0.0).unwrap();
        assert_eq!(kept.rows(), 2);
        assert_eq!(kept.source_rows(), &[0, 1]);
    }

    #[test]
    fn threshold_boundaries() {
        let p = preds(array![[1.0, 0.0], [0.999, 0.001], [0.2, 1.0]]);
        assert_eq!(filter_predictions(&p, 1.0 + 1e-9).unwrap_err(), Error::InvalidThreshold(1.0 + 1e-9));
        assert!(filter_predictions(&p, -0.1).is_err());
        let kept = filter_predictions(&p, 1.0).unwrap();
        assert_eq!(kept.source_rows(), &[0, 2]);
    }

    #[test]
    fn filtering_can_empty_the_matrix() {
        let p = preds(array![[0.3, 0.2]]);
        let kept = filter_predictions(&p, 0.75).unwrap();
        assert_eq!(kept.probs().dim(), (0, 2));
    }

    #[test]
    fn nested_filter_tracks_original_rows() {
        let p = preds(array![[0.1], [0.8], [0.9], [0.95]]);
        let once = filter_predictions(&p, 0.5).unwrap();
        let twice = filter_predictions(&once, 0.92).unwrap();
        assert_eq!(twice.source_rows(), &[3]);
    }

    #[test]
    fn argmax_clear_max_and_ties() {
        let a = argmax_pseudo(&preds(array![[0.1, 0.7, 0.2]]));
        assert_eq!(a, array![[false, true, false]]);
        let a = argmax_pseudo(&preds(array![[0.5, 0.5]]));
        assert_eq!(a, array![[true, false]]);
    }

    #[test]
    fn merge_cases() {
        let pseudo = array![[false, false, true]];
        assert_eq!(merge_labels(&pseudo, &LabelVector::zeros(3)).unwrap(), pseudo);
        assert_eq!(merge_labels(&pseudo, &LabelVector::one_hot(3, 2)).unwrap(), pseudo);
        let merged = merge_labels(&pseudo, &LabelVector::one_hot(3, 0)).unwrap();
        assert_eq!(merged, array![[true, false, true]]);
        assert!(merge_labels(&pseudo, &LabelVector::zeros(2)).is_err());
    }

    #[test]
    fn weight_cases() {
        let p = preds(array![[0.2, 0.3], [0.4, 0.9]]);
        assert_eq!(reliability_weights(&p, &LabelVector::zeros(2)).unwrap(), Array2::<f64>::ones((2, 2)));
        assert_eq!(reliability_weights(&p, &LabelVector::new(vec![true, true])).unwrap(), p.probs().clone());
        assert_eq!(
            reliability_weights(&p, &LabelVector::one_hot(2, 1)).unwrap(),
            array![[1.0, 0.3], [1.0, 0.9]]
        );
        assert!(reliability_weights(&p, &LabelVector::zeros(3)).is_err());
    }

    #[test]
    fn image_weight_cases() {
        let p = ImageScoreVector::new(vec![0.9, 0.8, 0.7, 0.4, 0.1]).unwrap();
        assert_eq!(image_weights(&p, &LabelVector::zeros(5)).unwrap(), vec![1.0; 5]);
        assert_eq!(
            image_weights(&p, &LabelVector::one_hot(5, 3)).unwrap(),
            vec![1.0, 1.0, 1.0, 0.4, 1.0]
        );
        assert!(image_weights(&p, &LabelVector::zeros(4)).is_err());
    }

    #[test]
    fn image_reductions() {
        let p = preds(array![[0.2, 0.6], [0.4, 0.0]]);
        let max = image_score_from_proposals(&p, ImageReduction::Max).unwrap();
        assert_eq!(max.probs(), &[0.4, 0.6]);
        let mean = image_score_from_proposals(&p, ImageReduction::Mean).unwrap();
        assert!((mean.probs()[0] - 0.3).abs() < 1e-15);
        assert!((mean.probs()[1] - 0.3).abs() < 1e-15);
        assert!(image_score_from_proposals(&preds(Array2::zeros((0, 2))), ImageReduction::Max).is_err());
    }
}

use lhst_core::loss::{box_loss, grad_wrt_probs, image_grad_wrt_probs, image_loss, weighted_bce};
use lhst_core::pseudo::{
    filter_predictions, generate_weighted_labels, reliability_weights, ImageScoreVector, PredictionMatrix,
    PseudoLabelConfig, WeightedBoxLabels, WeightedImageLabel,
};
use lhst_core::{expand_labels, HierarchyGraph, LabelVector, Vocabulary};
use lhst_testkit::dag::{random_bits, random_dag, random_vocab, vocab_text};
use lhst_testkit::numeric::{bce_term, central_diff, relative_error, weighted_sum};
use lhst_testkit::pseudo::derive;
use lhst_testkit::rng;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Probabilities drawn partly from a coarse grid so ties and exact
/// threshold hits occur.
fn prob(r: &mut ChaCha8Rng) -> f64 {
    if r.random_bool(0.3) {
        [0.0, 0.25, 0.5, 0.65, 0.75, 0.85, 1.0][r.random_range(0..7)]
    } else {
        r.random::<f64>()
    }
}

struct Instance {
    graph: HierarchyGraph,
    vocab: Vocabulary,
    probs: Vec<Vec<f64>>,
    y_cls: Vec<bool>,
    p_image: Vec<f64>,
    t: f64,
}

fn instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let n = r.random_range(1..=8);
    let c = r.random_range(1..=6);
    let nodes = r.random_range(1..=8);
    let density = r.random_range(0.0..0.5);
    let dag = random_dag(&mut r, nodes, density);
    let classes = random_vocab(&mut r, nodes, c, 0.8);
    let graph = HierarchyGraph::parse_str(&dag.to_hierarchy_text(&mut r)).unwrap();
    let vocab = Vocabulary::parse_str(&vocab_text(&dag, &classes), &graph).unwrap();
    let probs = (0..n).map(|_| (0..c).map(|_| prob(&mut r)).collect()).collect();
    let y_cls = random_bits(&mut r, c, 0.3);
    let p_image = (0..c).map(|_| prob(&mut r)).collect();
    let t = if r.random_bool(0.5) { 0.75 } else { prob(&mut r) };
    Instance {
        graph,
        vocab,
        probs,
        y_cls,
        p_image,
        t,
    }
}

fn matrix(rows: &[Vec<f64>], c: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), c), |(i, j)| rows[i][j])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn pipeline_matches_straight_line_oracle(seed in any::<u64>()) {
        let k = instance(seed);
        let c = k.y_cls.len();
        let preds = PredictionMatrix::new(matrix(&k.probs, c), false).unwrap();
        let y_cls = LabelVector::new(k.y_cls.clone());
        let p_image = ImageScoreVector::new(k.p_image.clone()).unwrap();
        let cfg = PseudoLabelConfig { threshold: k.t, ..Default::default() };
        let out = generate_weighted_labels(&preds, &y_cls, &k.graph, &k.vocab, Some(&p_image), &cfg).unwrap();

        let y_hier = expand_labels(&k.graph, &k.vocab, &y_cls).unwrap();
        let want = derive(&k.probs, &k.y_cls, y_hier.bits(), k.t, &k.p_image);
        prop_assert_eq!(&out.boxes.kept_indices, &want.kept);
        prop_assert_eq!(out.boxes.rows(), want.kept.len());
        for (j, row) in want.labels.iter().enumerate() {
            prop_assert_eq!(&out.boxes.labels.row(j).to_vec(), row);
            for (col, &w) in want.weights[j].iter().enumerate() {
                prop_assert!((out.boxes.weights[[j, col]] - w).abs() <= 1e-12);
            }
        }
        prop_assert_eq!(out.image.label.bits(), &want.image_label[..]);
        for (a, b) in out.image.weights.iter().zip(&want.image_weights) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn labels_dominate_pseudo_and_expansion(seed in any::<u64>()) {
        let k = instance(seed);
        let c = k.y_cls.len();
        let preds = PredictionMatrix::new(matrix(&k.probs, c), false).unwrap();
        let y_cls = LabelVector::new(k.y_cls.clone());
        let cfg = PseudoLabelConfig { threshold: k.t, ..Default::default() };
        let out = generate_weighted_labels(&preds, &y_cls, &k.graph, &k.vocab, None, &cfg).unwrap();
        for (j, row) in out.boxes.labels.rows().into_iter().enumerate() {
            prop_assert!(row.iter().any(|&b| b));
            for col in 0..c {
                prop_assert!(row[col] >= out.y_hier.get(col));
                let w = out.boxes.weights[[j, col]];
                prop_assert!((0.0..=1.0).contains(&w));
                if !out.mask.get(col) {
                    prop_assert_eq!(w, 1.0);
                }
            }
        }
    }

    #[test]
    fn filtering_commutes_with_weighting(seed in any::<u64>()) {
        let k = instance(seed);
        let c = k.y_cls.len();
        let preds = PredictionMatrix::new(matrix(&k.probs, c), false).unwrap();
        let mask = LabelVector::new(random_bits(&mut rng(seed ^ 0xA5), c, 0.5));
        let kept = filter_predictions(&preds, k.t).unwrap();
        let filtered_then_weighted = reliability_weights(&kept, &mask).unwrap();
        let weighted_then_selected = reliability_weights(&preds, &mask)
            .unwrap()
            .select(ndarray::Axis(0), kept.source_rows());
        prop_assert_eq!(filtered_then_weighted, weighted_then_selected);
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>()) {
        let k = instance(seed);
        let c = k.y_cls.len();
        let preds = PredictionMatrix::new(matrix(&k.probs, c), false).unwrap();
        let y_cls = LabelVector::new(k.y_cls.clone());
        let cfg = PseudoLabelConfig { threshold: k.t, ..Default::default() };
        let a = generate_weighted_labels(&preds, &y_cls, &k.graph, &k.vocab, None, &cfg).unwrap();
        let b = generate_weighted_labels(&preds, &y_cls, &k.graph, &k.vocab, None, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }
}

fn random_box_case(r: &mut ChaCha8Rng) -> (PredictionMatrix, WeightedBoxLabels) {
    let n = r.random_range(1..=10);
    let c = r.random_range(1..=8);
    let probs = Array2::from_shape_fn((n, c), |_| r.random::<f64>());
    let labels = Array2::from_shape_fn((n, c), |_| r.random_bool(0.4));
    let weights = Array2::from_shape_fn((n, c), |_| r.random::<f64>());
    (
        PredictionMatrix::new(probs, false).unwrap(),
        WeightedBoxLabels {
            labels,
            weights,
            kept_indices: (0..n).collect(),
        },
    )
}

fn rows<T: Clone>(a: &Array2<T>) -> Vec<Vec<T>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

#[test]
fn losses_match_term_by_term_sums() {
    let mut r = rng(404);
    for _ in 0..300 {
        let (preds, wl) = random_box_case(&mut r);
        let got = box_loss(&preds, &wl).unwrap();
        let want = weighted_sum(&rows(preds.probs()), &rows(&wl.labels), &rows(&wl.weights));
        assert!(relative_error(got, want) <= 1e-10, "{got} vs {want}");

        let c = preds.classes();
        let p: Vec<f64> = (0..c).map(|_| r.random()).collect();
        let label = random_bits(&mut r, c, 0.5);
        let weights: Vec<f64> = (0..c).map(|_| r.random()).collect();
        let got = image_loss(
            &ImageScoreVector::new(p.clone()).unwrap(),
            &WeightedImageLabel {
                label: LabelVector::new(label.clone()),
                weights: weights.clone(),
            },
        )
        .unwrap();
        let want: f64 = (0..c).map(|k| bce_term(p[k], label[k], weights[k])).sum();
        assert!(relative_error(got, want) <= 1e-10);
    }
}

#[test]
fn ln2_anchor() {
    assert!((weighted_bce(0.5, true, 1.0) - std::f64::consts::LN_2).abs() <= 1e-12);
    assert!((weighted_bce(0.5, false, 1.0) - std::f64::consts::LN_2).abs() <= 1e-12);
}

#[test]
fn gradients_match_central_differences() {
    let mut r = rng(55);
    for _ in 0..100 {
        let n = r.random_range(1..=4);
        let c = r.random_range(1..=5);
        let probs = Array2::from_shape_fn((n, c), |_| r.random_range(0.05..0.95));
        let labels = Array2::from_shape_fn((n, c), |_| r.random_bool(0.5));
        let weights = Array2::from_shape_fn((n, c), |_| r.random_range(0.0..1.0));
        let wl = WeightedBoxLabels {
            labels,
            weights,
            kept_indices: (0..n).collect(),
        };
        let preds = PredictionMatrix::new(probs.clone(), false).unwrap();
        let analytic = grad_wrt_probs(&preds, &wl).unwrap();
        let flat: Vec<f64> = probs.iter().copied().collect();
        let numeric = central_diff(
            |x| {
                let m = PredictionMatrix::new(Array2::from_shape_vec((n, c), x.to_vec()).unwrap(), false).unwrap();
                box_loss(&m, &wl).unwrap()
            },
            &flat,
            1e-5,
        );
        for (a, b) in analytic.iter().zip(&numeric) {
            assert!(relative_error(*a, *b) <= 1e-5, "{a} vs {b}");
        }

        let p: Vec<f64> = (0..c).map(|_| r.random_range(0.05..0.95)).collect();
        let image = WeightedImageLabel {
            label: LabelVector::new(random_bits(&mut r, c, 0.5)),
            weights: (0..c).map(|_| r.random()).collect(),
        };
        let analytic = image_grad_wrt_probs(&ImageScoreVector::new(p.clone()).unwrap(), &image).unwrap();
        let numeric = central_diff(|x| image_loss(&ImageScoreVector::new(x.to_vec()).unwrap(), &image).unwrap(), &p, 1e-5);
        for (a, b) in analytic.iter().zip(&numeric) {
            assert!(relative_error(*a, *b) <= 1e-5, "{a} vs {b}");
        }
    }
}

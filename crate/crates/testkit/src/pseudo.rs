//! Straight-line re-derivation of the pseudo-label pipeline from the
//! definitions: threshold filter, argmax, OR-merge, reliability weights.

#[derive(Debug, Clone, PartialEq)]
pub struct OracleLabels {
    pub kept: Vec<usize>,
    pub labels: Vec<Vec<bool>>,
    pub weights: Vec<Vec<f64>>,
    pub image_label: Vec<bool>,
    pub image_weights: Vec<f64>,
}

pub fn derive(
    probs: &[Vec<f64>],
    y_cls: &[bool],
    y_hier: &[bool],
    t: f64,
    p_image: &[f64],
) -> OracleLabels {
    let c_count = y_cls.len();
    let expanded: Vec<bool> = (0..c_count).map(|c| y_hier[c] != y_cls[c]).collect();

    let mut out = OracleLabels {
        kept: vec![],
        labels: vec![],
        weights: vec![],
        image_label: y_hier.to_vec(),
        image_weights: (0..c_count)
            .map(|c| if expanded[c] { p_image[c] } else { 1.0 })
            .collect(),
    };
    for (n, row) in probs.iter().enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max < t {
            continue;
        }
        // first index attaining the max
        let arg = row.iter().position(|&p| p == max).unwrap();
        out.kept.push(n);
        out.labels
            .push((0..c_count).map(|c| c == arg || y_hier[c]).collect());
        out.weights.push(
            (0..c_count)
                .map(|c| if expanded[c] { row[c] } else { 1.0 })
                .collect(),
        );
    }
    out
}

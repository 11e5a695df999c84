//! Loss, gradient and similarity oracles.

/// Weighted BCE computed entirely through `ln_1p` on exact arguments, a
/// different arithmetic path from the engine's.
pub fn bce_term(p: f64, y: bool, w: f64) -> f64 {
    let p = p.clamp(1e-7, 1.0 - 1e-7);
    if y {
        -w * (p - 1.0).ln_1p()
    } else {
        -w * (-p).ln_1p()
    }
}

/// Explicit term-by-term double sum.
pub fn weighted_sum(probs: &[Vec<f64>], labels: &[Vec<bool>], weights: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for n in 0..probs.len() {
        for c in 0..probs[n].len() {
            total += bce_term(probs[n][c], labels[n][c], weights[n][c]);
        }
    }
    total
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_diff<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let plus = f(&probe);
            probe[i] = x[i] - h;
            let minus = f(&probe);
            probe[i] = x[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Exhaustive nearest-synset scan. `synsets[s]` lists the lemma vectors of
/// synset `s`, in the same order the synset ids sort. Returns
/// `(synset, lemma, similarity)`; ties go to the earliest synset, then the
/// earliest lemma.
pub fn nearest_synset(query: &[f64], synsets: &[Vec<Vec<f64>>]) -> (usize, usize, f64) {
    let mut best = (usize::MAX, usize::MAX, f64::NEG_INFINITY);
    for (s, lemmas) in synsets.iter().enumerate() {
        for (l, v) in lemmas.iter().enumerate() {
            let sim: f64 = query.iter().zip(v).map(|(a, b)| a * b).sum();
            if sim > best.2 {
                best = (s, l, sim);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_matches_closed_form() {
        assert!((bce_term(0.5, true, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(bce_term(0.3, false, 0.0), 0.0);
    }

    #[test]
    fn central_diff_on_quadratic() {
        let g = central_diff(|v| v[0] * v[0] + 3.0 * v[1], &[2.0, 1.0], 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }
}

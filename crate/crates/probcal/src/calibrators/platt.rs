//! Sigmoid calibration fitted by Newton descent.
//!
//! Targets are the prior-smoothed values `(N+ + 1)/(N+ + 2)` for positives
//! and `1/(N- + 2)` for negatives rather than the raw labels, which keeps
//! small calibration splits from producing overconfident sigmoids.

use crate::data::PredictionSet;
use crate::util::{ln1pexp, sigmoid};

use super::FitError;

const GRAD_TOL: f64 = 1e-10;
const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 50;

/// Returns the fitted `(slope, intercept)`.
pub(super) fn fit(cal_set: &PredictionSet) -> Result<(f64, f64), FitError> {
    let n_pos = cal_set.labels().iter().filter(|&&y| y == 1).count();
    let n_neg = cal_set.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(FitError::OneClassOnly);
    }

    let t_pos = (n_pos as f64 + 1.0) / (n_pos as f64 + 2.0);
    let t_neg = 1.0 / (n_neg as f64 + 2.0);
    let targets: Vec<f64> = cal_set
        .labels()
        .iter()
        .map(|&y| if y == 1 { t_pos } else { t_neg })
        .collect();
    let scores = cal_set.scores();

    let nll = |a: f64, b: f64| -> f64 {
        scores
            .iter()
            .zip(&targets)
            .map(|(&s, &t)| {
                let z = a * s + b;
                ln1pexp(z) - t * z
            })
            .sum()
    };

    let mut a = 0.0;
    let mut b = ((n_pos as f64 + 1.0) / (n_neg as f64 + 1.0)).ln();
    let mut current = nll(a, b);

    for _ in 0..MAX_ITER {
        let mut g_a = 0.0;
        let mut g_b = 0.0;
        let mut h_aa = 0.0;
        let mut h_ab = 0.0;
        let mut h_bb = 0.0;
        for (&s, &t) in scores.iter().zip(&targets) {
            let p = sigmoid(a * s + b);
            let r = p - t;
            let w = p * (1.0 - p);
            g_a += r * s;
            g_b += r;
            h_aa += w * s * s;
            h_ab += w * s;
            h_bb += w;
        }
        if (g_a * g_a + g_b * g_b).sqrt() < GRAD_TOL {
            return Ok((a, b));
        }

        // Tiny damping keeps the 2x2 solve well-posed when all scores are
        // equal (the slope direction is then unidentifiable). The stopping
        // rule is on the gradient, so the fixed point is unaffected.
        let damp = 1e-12 * (1.0 + h_aa + h_bb);
        let h_aa = h_aa + damp;
        let h_bb = h_bb + damp;
        let det = h_aa * h_bb - h_ab * h_ab;
        let step_a = (h_bb * g_a - h_ab * g_b) / det;
        let step_b = (h_aa * g_b - h_ab * g_a) / det;

        let mut scale = 1.0;
        let mut halvings = 0;
        loop {
            let candidate = nll(a - scale * step_a, b - scale * step_b);
            if candidate <= current || halvings >= MAX_HALVINGS {
                a -= scale * step_a;
                b -= scale * step_b;
                current = candidate;
                break;
            }
            scale *= 0.5;
            halvings += 1;
        }
    }

    Err(FitError::NoConverge {
        iterations: MAX_ITER,
    })
}

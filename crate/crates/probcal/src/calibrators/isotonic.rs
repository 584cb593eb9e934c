//! Pool-adjacent-violators fit with linear interpolation between
//! breakpoints.

use crate::data::PredictionSet;

/// Weighted PAV over the canonically sorted calibration set.
///
/// Duplicate scores are pooled into one weighted point first, so the result
/// is a well-defined function of score: one breakpoint per distinct score,
/// fitted values non-decreasing.
pub(super) fn fit(cal_set: &PredictionSet) -> (Vec<f64>, Vec<f64>) {
    let sorted = cal_set.canonical_sort();

    // Collapse tied scores to (score, mean label, count).
    let mut xs: Vec<f64> = Vec::new();
    let mut means: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let scores = sorted.scores();
    let labels = sorted.labels();
    let mut i = 0;
    while i < scores.len() {
        let x = scores[i];
        let mut sum = 0.0;
        let mut count = 0.0;
        while i < scores.len() && scores[i] == x {
            sum += f64::from(labels[i]);
            count += 1.0;
            i += 1;
        }
        xs.push(x);
        means.push(sum / count);
        weights.push(count);
    }

    // Stack-based PAV: merge backwards while the monotone constraint is
    // violated, tracking how many distinct scores each block spans.
    let mut value: Vec<f64> = Vec::with_capacity(xs.len());
    let mut weight: Vec<f64> = Vec::with_capacity(xs.len());
    let mut span: Vec<usize> = Vec::with_capacity(xs.len());
    for k in 0..xs.len() {
        value.push(means[k]);
        weight.push(weights[k]);
        span.push(1);
        while value.len() > 1 && value[value.len() - 2] > value[value.len() - 1] {
            let (v1, w1, s1) = (
                value.pop().unwrap(),
                weight.pop().unwrap(),
                span.pop().unwrap(),
            );
            let last = value.len() - 1;
            let merged_w = weight[last] + w1;
            value[last] = (value[last] * weight[last] + v1 * w1) / merged_w;
            weight[last] = merged_w;
            span[last] += s1;
        }
    }

    // Expand blocks back to one fitted value per distinct score.
    let mut fitted = Vec::with_capacity(xs.len());
    for (v, s) in value.iter().zip(&span) {
        for _ in 0..*s {
            fitted.push(*v);
        }
    }
    (xs, fitted)
}

/// Piecewise-linear evaluation: exact at breakpoints, linear between them,
/// clamped to the boundary values outside the fitted range.
pub(super) fn interpolate(breakpoints: &[f64], values: &[f64], s: f64) -> f64 {
    match breakpoints.binary_search_by(|x| x.total_cmp(&s)) {
        Ok(j) => values[j],
        Err(0) => values[0],
        Err(j) if j == breakpoints.len() => values[values.len() - 1],
        Err(j) => {
            let (x0, x1) = (breakpoints[j - 1], breakpoints[j]);
            let (v0, v1) = (values[j - 1], values[j]);
            v0 + (v1 - v0) * (s - x0) / (x1 - x0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PredictionSet;

    fn fit_on(scores: &[f64], labels: &[u8]) -> (Vec<f64>, Vec<f64>) {
        fit(&PredictionSet::new(scores.to_vec(), labels.to_vec()).unwrap())
    }

    #[test]
    fn pools_a_single_violation() {
        let (xs, vs) = fit_on(&[0.1, 0.2, 0.3], &[1, 0, 1]);
        assert_eq!(xs, vec![0.1, 0.2, 0.3]);
        assert_eq!(vs, vec![0.5, 0.5, 1.0]);
    }

    #[test]
    fn cascading_merge() {
        // All ones then a zero: everything pools into one block.
        let (_, vs) = fit_on(&[0.1, 0.2, 0.3, 0.4], &[1, 1, 1, 0]);
        assert_eq!(vs, vec![0.75, 0.75, 0.75, 0.75]);
    }

    #[test]
    fn tied_scores_share_a_value() {
        let (xs, vs) = fit_on(&[0.5, 0.5, 0.5, 0.7], &[0, 1, 1, 1]);
        assert_eq!(xs, vec![0.5, 0.7]);
        assert!((vs[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(vs[1], 1.0);
    }

    #[test]
    fn interpolation_between_breakpoints() {
        let bp = [0.1, 0.2, 0.3];
        let vals = [0.5, 0.5, 1.0];
        assert_eq!(interpolate(&bp, &vals, 0.25), 0.75);
        assert_eq!(interpolate(&bp, &vals, 0.2), 0.5);
        assert_eq!(interpolate(&bp, &vals, 0.05), 0.5);
        assert_eq!(interpolate(&bp, &vals, 0.35), 1.0);
    }
}

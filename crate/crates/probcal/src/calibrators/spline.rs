//! Logistic calibration on a natural cubic spline basis.
//!
//! Knots sit at equally spaced empirical score quantiles. Coefficients are
//! fitted by ridge-penalized maximum likelihood; the penalty is chosen from
//! a fixed log-spaced grid by 5-fold log-loss on the calibration set, with
//! ties resolved toward the stronger penalty.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::FitError;
use crate::data::PredictionSet;
use crate::util::{ln1pexp, logit, sigmoid};

const MIN_POINTS: usize = 10;
const OUTPUT_CLAMP: f64 = 1e-6;
const INNER_FOLDS: usize = 5;
const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 50;

pub(super) struct SplineFit {
    pub knots: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub ridge_lambda: f64,
}

pub(super) fn fit(cal_set: &PredictionSet, num_knots: usize) -> Result<SplineFit, FitError> {
    assert!(num_knots >= 3, "spline calibration needs at least 3 knots");
    if cal_set.len() < MIN_POINTS {
        return Err(FitError::TooFewPoints {
            needed: MIN_POINTS,
            got: cal_set.len(),
        });
    }
    let n_pos = cal_set.labels().iter().filter(|&&y| y == 1).count();
    if n_pos == 0 || n_pos == cal_set.len() {
        return Err(FitError::OneClassOnly);
    }

    let sorted = cal_set.canonical_sort();
    let mut distinct: Vec<f64> = sorted.scores().to_vec();
    distinct.dedup();
    if distinct.len() < num_knots {
        return Err(FitError::TooFewPoints {
            needed: num_knots,
            got: distinct.len(),
        });
    }

    // Quantile knots over all scores; if ties collapse some of them, fall
    // back to quantiles of the distinct values, which are strictly
    // increasing whenever there are at least `num_knots` of them.
    let knots = quantile_knots(sorted.scores(), num_knots)
        .unwrap_or_else(|| quantile_knots(&distinct, num_knots).expect("distinct >= num_knots"));

    let n = sorted.len();
    let k = num_knots;
    let mut flat = vec![0.0; n * k];
    for (i, &s) in sorted.scores().iter().enumerate() {
        basis_row(&knots, s, &mut flat[i * k..(i + 1) * k]);
    }
    let x = DMatrix::from_row_slice(n, k, &flat);
    let y = DVector::from_iterator(n, sorted.labels().iter().map(|&v| f64::from(v)));

    // Interleaved folds over the sorted order: deterministic and roughly
    // score-stratified.
    let lambda_grid: Vec<f64> = (0..9).map(|i| 10f64.powi(i - 6)).collect();
    let mut best_lambda = *lambda_grid.last().unwrap();
    let mut best_loss = f64::INFINITY;
    for &lambda in lambda_grid.iter().rev() {
        let mut total = 0.0;
        for fold in 0..INNER_FOLDS {
            let train: Vec<usize> = (0..n).filter(|i| i % INNER_FOLDS != fold).collect();
            let test: Vec<usize> = (0..n).filter(|i| i % INNER_FOLDS == fold).collect();
            let beta = irls(&x.select_rows(&train), &y.select_rows(&train), lambda);
            let z = x.select_rows(&test) * &beta;
            let loss: f64 = z
                .iter()
                .zip(&test)
                .map(|(&zi, &row)| ln1pexp(zi) - y[row] * zi)
                .sum::<f64>()
                / test.len() as f64;
            total += loss;
        }
        let mean = total / INNER_FOLDS as f64;
        if mean < best_loss {
            best_loss = mean;
            best_lambda = lambda;
        }
    }

    let beta = irls(&x, &y, best_lambda);
    Ok(SplineFit {
        knots,
        coefficients: beta.iter().copied().collect(),
        ridge_lambda: best_lambda,
    })
}

/// Knot locations at quantile levels `j/(K-1)` of the given sorted values.
/// Returns `None` when ties make the knots non-increasing.
fn quantile_knots(sorted_values: &[f64], num_knots: usize) -> Option<Vec<f64>> {
    let m = sorted_values.len();
    let knots: Vec<f64> = (0..num_knots)
        .map(|j| {
            let pos = (m - 1) as f64 * j as f64 / (num_knots - 1) as f64;
            sorted_values[pos.round() as usize]
        })
        .collect();
    knots.windows(2).all(|w| w[0] < w[1]).then_some(knots)
}

fn cube_plus(v: f64) -> f64 {
    if v > 0.0 {
        v * v * v
    } else {
        0.0
    }
}

/// Natural cubic spline basis: intercept, linear term, and K-2 curvature
/// terms that are linear beyond the boundary knots.
fn basis_row(knots: &[f64], s: f64, out: &mut [f64]) {
    let k = knots.len();
    let last = knots[k - 1];
    out[0] = 1.0;
    out[1] = s;
    let d = |j: usize| (cube_plus(s - knots[j]) - cube_plus(s - last)) / (last - knots[j]);
    let d_penultimate = d(k - 2);
    for j in 0..k - 2 {
        out[j + 2] = d(j) - d_penultimate;
    }
}

/// Ridge-penalized logistic fit; the intercept is left unpenalized. Newton
/// steps with backtracking; runs to the gradient tolerance or the iteration
/// cap, whichever comes first.
fn irls(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let n = x.nrows();
    let k = x.ncols();
    let mut beta = DVector::zeros(k);
    beta[0] = logit((y.sum() / n as f64).clamp(1e-6, 1.0 - 1e-6));

    let penalized_nll = |beta: &DVector<f64>| -> f64 {
        let z = x * beta;
        let data: f64 = z
            .iter()
            .zip(y.iter())
            .map(|(&zi, &yi)| ln1pexp(zi) - yi * zi)
            .sum();
        let penalty: f64 = beta.iter().skip(1).map(|b| b * b).sum::<f64>() * lambda / 2.0;
        data + penalty
    };
    let mut current = penalized_nll(&beta);

    for _ in 0..MAX_ITER {
        let z = x * &beta;
        let p = z.map(sigmoid);

        let mut grad = x.transpose() * (&p - y);
        for j in 1..k {
            grad[j] += lambda * beta[j];
        }
        if grad.amax() < GRAD_TOL {
            break;
        }

        let mut xw = x.clone();
        for i in 0..n {
            let w = p[i] * (1.0 - p[i]);
            xw.row_mut(i) *= w;
        }
        let mut hess = x.transpose() * xw;
        for j in 1..k {
            hess[(j, j)] += lambda;
        }
        for j in 0..k {
            hess[(j, j)] += 1e-12;
        }

        let step = match Cholesky::new(hess) {
            Some(chol) => chol.solve(&grad),
            // Severely ill-conditioned Hessian: fall back to a small
            // gradient step rather than aborting the fit.
            None => grad.clone() * 1e-3,
        };

        let mut scale = 1.0;
        let mut halvings = 0;
        loop {
            let candidate_beta = &beta - &step * scale;
            let candidate = penalized_nll(&candidate_beta);
            if candidate <= current || halvings >= MAX_HALVINGS {
                beta = candidate_beta;
                current = candidate;
                break;
            }
            scale *= 0.5;
            halvings += 1;
        }
    }
    beta
}

/// Evaluates the fitted spline at one score, clamping the output away from
/// the hard 0/1 boundaries.
pub(super) fn predict(knots: &[f64], coefficients: &[f64], s: f64) -> f64 {
    let mut row = vec![0.0; knots.len()];
    basis_row(knots, s, &mut row);
    let z: f64 = row
        .iter()
        .zip(coefficients)
        .map(|(b, c)| b * c)
        .sum();
    sigmoid(z).clamp(OUTPUT_CLAMP, 1.0 - OUTPUT_CLAMP)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_linear_beyond_boundary_knots() {
        // Second differences vanish outside the knot range for a natural
        // spline.
        let knots = [0.1, 0.3, 0.5, 0.7, 0.9];
        let k = knots.len();
        let eval = |s: f64| {
            let mut row = vec![0.0; k];
            basis_row(&knots, s, &mut row);
            row
        };
        for base in [0.92, 1.05, 1.2] {
            let h = 0.01;
            let lo = eval(base - h);
            let mid = eval(base);
            let hi = eval(base + h);
            for j in 0..k {
                let second = hi[j] - 2.0 * mid[j] + lo[j];
                assert!(second.abs() < 1e-9, "basis {j} curves at {base}: {second}");
            }
        }
    }

    #[test]
    fn quantile_knots_are_strictly_increasing() {
        let values: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let knots = quantile_knots(&values, 6).unwrap();
        assert_eq!(knots.len(), 6);
        assert!(knots.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(knots[0], 0.0);
        assert_eq!(knots[5], 1.0);

        let tied = vec![0.5; 50];
        assert!(quantile_knots(&tied, 6).is_none());
    }

    #[test]
    fn irls_recovers_an_intercept_only_fit() {
        // Constant design column: the fit reduces to the empirical log-odds.
        let x = DMatrix::from_element(40, 1, 1.0);
        let y = DVector::from_fn(40, |i, _| f64::from(i < 10));
        let beta = irls(&x, &y, 1e-6);
        assert!((sigmoid(beta[0]) - 0.25).abs() < 1e-6);
    }
}

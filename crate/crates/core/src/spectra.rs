//! First- and second-order calculus of Wishart eigenvalues, and the
//! deterministic drift of the eigenvalue evolution.
//!
//! With X = N^T N, eigenvalue lambda_i and orthonormal eigenvectors U, the
//! maps N -> lambda_i(N) have closed-form derivatives in each matrix entry
//! N_{kh}:
//!
//! * gradient: 2 U_{hi} (N U)_{ki};
//! * second diagonal derivative: 2 U_{hi}^2 + 2 sum_{j != i}
//!   (U_{hi} (N U)_{kj} + U_{hj} (N U)_{ki})^2 / (lambda_i - lambda_j);
//! * summed over all entries the second derivatives collapse to
//!   2 (p + sum_{j != i} (lambda_i + lambda_j) / (lambda_i - lambda_j)).
//!
//! For fractional entries with Hurst exponent H the mean evolution of
//! lambda_i carries the deterministic drift
//! 2H (p + sum_{j != i} (lambda_i + lambda_j)/(lambda_i - lambda_j)) s^{2H-1};
//! the time integral of that drift predicts the Monte Carlo mean of
//! lambda_i(t) because the remaining martingale-type term is centered.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::Hurst;
use crate::mat::Mat;
use crate::stats;
use crate::wishart::{EigenDecomposition, Scale, SpectrumPath};

/// Relative eigenvalue-gap floor below which perturbation formulas are
/// refused: gaps must exceed `1e-8 x max |lambda|`.
pub const MIN_RELATIVE_GAP: f64 = 1e-8;

/// Gradient of one ordered eigenvalue with respect to every matrix entry.
#[derive(Clone, Debug, PartialEq)]
pub struct EigGradient {
    /// Index of the eigenvalue (0 = largest).
    pub index: usize,
    /// The eigenvalue itself.
    pub lambda: f64,
    /// p x n matrix of partial derivatives d lambda / d N_{kh}.
    pub values: Mat,
}

impl EigGradient {
    /// Squared Frobenius norm; equals 4 lambda_i in exact arithmetic.
    pub fn frobenius_sq(&self) -> f64 {
        self.values.data().iter().map(|x| x * x).sum()
    }
}

/// Deterministic drift of every ordered eigenvalue at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftVector {
    pub s: f64,
    pub hurst: Hurst,
    pub p: usize,
    pub values: Vec<f64>,
}

fn check_distinct(lambda: &[f64]) -> Result<()> {
    let top = lambda.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let floor = MIN_RELATIVE_GAP * top.max(f64::MIN_POSITIVE);
    for (j, w) in lambda.windows(2).enumerate() {
        if w[0] < w[1] {
            return Err(Error::Usage(format!(
                "eigenvalues must be sorted descending; positions {j} and {} hold {} < {}",
                j + 1,
                w[0],
                w[1]
            )));
        }
        if w[0] - w[1] <= floor {
            return Err(Error::Precondition(format!(
                "eigenvalues {j} and {} nearly collide: {} vs {} (gap {:.3e} <= {:.3e})",
                j + 1,
                w[0],
                w[1],
                w[0] - w[1],
                floor
            )));
        }
    }
    Ok(())
}

fn check_shapes(nmat: &Mat, dec: &EigenDecomposition, i: usize) -> Result<()> {
    let n = nmat.cols();
    if dec.u.rows() != n || dec.u.cols() != n || dec.lambda.len() != n {
        return Err(Error::Usage(format!(
            "decomposition dimension {} does not match the {} x {n} data matrix",
            dec.lambda.len(),
            nmat.rows()
        )));
    }
    if i >= n {
        return Err(Error::Usage(format!(
            "eigenvalue index {i} out of range for n = {n}"
        )));
    }
    check_distinct(&dec.lambda)
}

/// Product N * U, the data matrix rotated into the eigenbasis.
fn rotated(nmat: &Mat, u: &Mat) -> Mat {
    nmat.matmul(u)
}

/// Gradient of eigenvalue `i` of N^T N with respect to the entries of N.
pub fn eig_gradient(nmat: &Mat, dec: &EigenDecomposition, i: usize) -> Result<EigGradient> {
    check_shapes(nmat, dec, i)?;
    let (p, n) = (nmat.rows(), nmat.cols());
    let nu = rotated(nmat, &dec.u);
    let mut values = Mat::zeros(p, n);
    for k in 0..p {
        let w_ki = nu[(k, i)];
        for h in 0..n {
            values[(k, h)] = 2.0 * dec.u[(h, i)] * w_ki;
        }
    }
    Ok(EigGradient {
        index: i,
        lambda: dec.lambda[i],
        values,
    })
}

/// Second derivative of eigenvalue `i` in each diagonal direction N_{kh}.
pub fn eig_second_diag(nmat: &Mat, dec: &EigenDecomposition, i: usize) -> Result<Mat> {
    check_shapes(nmat, dec, i)?;
    let (p, n) = (nmat.rows(), nmat.cols());
    let nu = rotated(nmat, &dec.u);
    let mut values = Mat::zeros(p, n);
    for k in 0..p {
        for h in 0..n {
            let mut acc = 2.0 * dec.u[(h, i)] * dec.u[(h, i)];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let cross = dec.u[(h, i)] * nu[(k, j)] + dec.u[(h, j)] * nu[(k, i)];
                acc += 2.0 * cross * cross / (dec.lambda[i] - dec.lambda[j]);
            }
            values[(k, h)] = acc;
        }
    }
    Ok(values)
}

/// sum_{j != i} (lambda_i + lambda_j) / (lambda_i - lambda_j).
fn interaction_sum(lambda: &[f64], i: usize) -> f64 {
    let li = lambda[i];
    lambda
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &lj)| (li + lj) / (li - lj))
        .sum()
}

/// Closed form of the total second derivative of eigenvalue `i`:
/// 2 (p + sum_{j != i} (lambda_i + lambda_j)/(lambda_i - lambda_j)).
pub fn second_derivative_sum(lambda: &[f64], p: usize, i: usize) -> Result<f64> {
    if i >= lambda.len() {
        return Err(Error::Usage(format!(
            "eigenvalue index {i} out of range for n = {}",
            lambda.len()
        )));
    }
    check_distinct(lambda)?;
    Ok(2.0 * (p as f64 + interaction_sum(lambda, i)))
}

/// Drift of every ordered eigenvalue at time `s`.
pub fn drift(lambda: &[f64], p: usize, hurst: Hurst, s: f64) -> Result<DriftVector> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Domain(format!("drift requires s > 0, got {s}")));
    }
    check_distinct(lambda)?;
    let two_h = 2.0 * hurst.value();
    let time_factor = two_h * s.powf(two_h - 1.0);
    let values = (0..lambda.len())
        .map(|i| (p as f64 + interaction_sum(lambda, i)) * time_factor)
        .collect();
    Ok(DriftVector {
        s,
        hurst,
        p,
        values,
    })
}

/// Weights of the exact product rule for one quadrature cell [a, b] with
/// weight function 2H s^{2H-1}: `w0` integrates the weight, `w1` integrates
/// the weight times the linear ramp (s - a)/(b - a).
fn cell_weights(a: f64, b: f64, two_h: f64) -> (f64, f64) {
    let w0 = b.powf(two_h) - a.powf(two_h);
    let moment = two_h / (two_h + 1.0) * (b.powf(two_h + 1.0) - a.powf(two_h + 1.0));
    let w1 = (moment - a * w0) / (b - a);
    (w0, w1)
}

/// Time integral of the drift along one eigenvalue path, by a trapezoid rule
/// in the smooth factor with the s^{2H-1} weight integrated in closed form.
/// `g[k][i]` holds p + interaction sum at grid index k (k >= 1).
fn drift_quadrature(g: &[Vec<f64>], times: &[f64], two_h: f64, i: usize) -> f64 {
    // First cell [0, t_1]: the smooth factor is frozen at t_1 because the
    // interaction ratios are undefined at the degenerate origin; the
    // remaining weight integrates to t_1^{2H}.
    let mut total = g[0][i] * times[1].powf(two_h);
    for k in 1..g.len() {
        let (a, b) = (times[k], times[k + 1]);
        let (w0, w1) = cell_weights(a, b, two_h);
        total += g[k - 1][i] * w0 + (g[k][i] - g[k - 1][i]) * w1;
    }
    total
}

/// Outcome of comparing simulated eigenvalue means against the drift
/// prediction at a fixed time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanDriftReport {
    pub t: f64,
    /// Per-eigenvalue prediction lambda_i(0) + mean integrated drift.
    pub prediction: Vec<f64>,
    /// Monte Carlo mean of lambda_i(t).
    pub observed: Vec<f64>,
    /// observed - prediction.
    pub diff: Vec<f64>,
    /// Standard error of the per-path difference.
    pub diff_se: Vec<f64>,
}

fn drift_factors(path: &SpectrumPath, p: usize, upto: usize) -> Result<Vec<Vec<f64>>> {
    (1..=upto)
        .map(|k| {
            let row = path.row(k);
            check_distinct(row).map_err(|e| match e {
                Error::Precondition(msg) => {
                    Error::Precondition(format!("at grid index {k}: {msg}"))
                }
                other => other,
            })?;
            Ok((0..row.len())
                .map(|i| p as f64 + interaction_sum(row, i))
                .collect())
        })
        .collect()
}

/// Predicted mean of each ordered eigenvalue at grid time `t`:
/// lambda_i(0) plus the ensemble average of the integrated drift.
pub fn mean_drift_integral(
    lambda0: &[f64],
    p: usize,
    hurst: Hurst,
    ensemble: &[SpectrumPath],
    t: f64,
) -> Result<Vec<f64>> {
    Ok(mean_drift_report(lambda0, p, hurst, ensemble, t)?.prediction)
}

/// Full comparison of drift predictions with observed eigenvalue means.
pub fn mean_drift_report(
    lambda0: &[f64],
    p: usize,
    hurst: Hurst,
    ensemble: &[SpectrumPath],
    t: f64,
) -> Result<MeanDriftReport> {
    let first = ensemble
        .first()
        .ok_or_else(|| Error::Usage("mean drift needs a non-empty ensemble".into()))?;
    let n = first.n;
    if lambda0.len() != n {
        return Err(Error::Usage(format!(
            "initial spectrum has length {}, ensemble has n = {n}",
            lambda0.len()
        )));
    }
    if ensemble
        .iter()
        .any(|s| s.grid != first.grid || s.hurst != hurst || s.n != n || s.scale != first.scale)
    {
        return Err(Error::Usage(
            "ensemble paths must share grid, Hurst exponent, dimension and scale".into(),
        ));
    }
    let upto = first.grid.index_of(t).ok_or_else(|| {
        Error::Usage(format!(
            "time {t} is not a grid point of the ensemble (horizon {}, {} steps)",
            first.grid.horizon(),
            first.grid.steps()
        ))
    })?;
    if upto == 0 {
        return Err(Error::Usage("mean drift needs a strictly positive time".into()));
    }
    let times: Vec<f64> = first.grid.points().collect();
    let two_h = 2.0 * hurst.value();
    let scale_div = match first.scale {
        Scale::Unscaled => 1.0,
        Scale::Scaled => n as f64,
    };

    // Per-path integrated drift and per-path terminal eigenvalues.
    let mut per_path_pred = vec![Vec::with_capacity(ensemble.len()); n];
    let mut per_path_obs = vec![Vec::with_capacity(ensemble.len()); n];
    for path in ensemble {
        let g = drift_factors(path, p, upto)?;
        let row_t = path.row(upto);
        let row_0 = path.row(0);
        for i in 0..n {
            let q = drift_quadrature(&g, &times, two_h, i) / scale_div;
            per_path_pred[i].push(row_0[i] + q);
            per_path_obs[i].push(row_t[i]);
        }
    }
    let mut prediction = Vec::with_capacity(n);
    let mut observed = Vec::with_capacity(n);
    let mut diff = Vec::with_capacity(n);
    let mut diff_se = Vec::with_capacity(n);
    for i in 0..n {
        let d: Vec<f64> = per_path_obs[i]
            .iter()
            .zip(&per_path_pred[i])
            .map(|(o, q)| o - q)
            .collect();
        prediction.push(stats::mean(&per_path_pred[i]));
        observed.push(stats::mean(&per_path_obs[i]));
        diff.push(stats::mean(&d));
        diff_se.push(stats::standard_error(&d));
    }
    let _ = lambda0;
    Ok(MeanDriftReport {
        t,
        prediction,
        observed,
        diff,
        diff_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::TimeGrid;
    use crate::rng::GaussianStream;
    use crate::wishart::eigh_sorted;

    fn h(v: f64) -> Hurst {
        Hurst::new(v).unwrap()
    }

    fn random_data_matrix(p: usize, n: usize, seed: u64) -> Mat {
        let stream = GaussianStream::new(seed);
        let mut m = Mat::zeros(p, n);
        for k in 0..p {
            for hh in 0..n {
                m[(k, hh)] = stream.normal(k as u64, hh as u64);
            }
        }
        m
    }

    fn eigenvalues_of(nmat: &Mat) -> Vec<f64> {
        eigh_sorted(&nmat.gram()).unwrap().lambda
    }

    #[test]
    fn gradient_matches_central_differences() {
        // Step 1e-6 central differences on the full eigensolve.
        for (p, n, seed) in [(3, 2, 1), (5, 4, 2), (8, 6, 3)] {
            let nmat = random_data_matrix(p, n, seed);
            let dec = eigh_sorted(&nmat.gram()).unwrap();
            for i in 0..n {
                let grad = eig_gradient(&nmat, &dec, i).unwrap();
                let mut worst = 0.0f64;
                for k in 0..p {
                    for hh in 0..n {
                        let step = 1e-6;
                        let mut plus = nmat.clone();
                        plus[(k, hh)] += step;
                        let mut minus = nmat.clone();
                        minus[(k, hh)] -= step;
                        let fd = (eigenvalues_of(&plus)[i] - eigenvalues_of(&minus)[i])
                            / (2.0 * step);
                        let denom = fd.abs().max(1.0);
                        worst = worst.max((grad.values[(k, hh)] - fd).abs() / denom);
                    }
                }
                assert!(
                    worst <= 1e-6,
                    "gradient vs finite differences: rel err {worst} at p={p}, n={n}, i={i}"
                );
            }
        }
    }

    #[test]
    fn gradient_on_diagonal_matrix_is_explicit() {
        // N = diag(2, 1): top eigenvalue 4 = (N_{00})^2, so the only nonzero
        // derivative is d lambda_0 / d N_{00} = 2 N_{00} = 4.
        let nmat = Mat::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let dec = eigh_sorted(&nmat.gram()).unwrap();
        let grad = eig_gradient(&nmat, &dec, 0).unwrap();
        assert!((grad.values[(0, 0)] - 4.0).abs() < 1e-14);
        for (k, hh) in [(0, 1), (1, 0), (1, 1)] {
            assert!(grad.values[(k, hh)].abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_norm_equals_four_lambda() {
        let nmat = random_data_matrix(7, 5, 11);
        let dec = eigh_sorted(&nmat.gram()).unwrap();
        for i in 0..5 {
            let grad = eig_gradient(&nmat, &dec, i).unwrap();
            let got = grad.frobenius_sq();
            let want = 4.0 * dec.lambda[i];
            assert!(
                (got - want).abs() <= 1e-10 * want.abs().max(1.0),
                "||grad||^2 = {got}, 4 lambda = {want} at i = {i}"
            );
        }
    }

    #[test]
    fn second_diag_matches_finite_differences_and_closed_sum() {
        for (p, n, seed) in [(3, 2, 21), (6, 4, 22)] {
            let nmat = random_data_matrix(p, n, seed);
            let dec = eigh_sorted(&nmat.gram()).unwrap();
            for i in 0..n {
                let sd2 = eig_second_diag(&nmat, &dec, i).unwrap();
                // Entry sum against the closed form, tight relative tolerance.
                let total: f64 = sd2.data().iter().sum();
                let closed = second_derivative_sum(&dec.lambda, p, i).unwrap();
                assert!(
                    (total - closed).abs() <= 1e-9 * closed.abs().max(1.0),
                    "sum of second derivatives {total} vs closed form {closed}"
                );
                // Each entry against second central differences, step 1e-4.
                let step = 1e-4;
                for k in 0..p {
                    for hh in 0..n {
                        let mut plus = nmat.clone();
                        plus[(k, hh)] += step;
                        let mut minus = nmat.clone();
                        minus[(k, hh)] -= step;
                        let fd = (eigenvalues_of(&plus)[i] - 2.0 * dec.lambda[i]
                            + eigenvalues_of(&minus)[i])
                            / (step * step);
                        assert!(
                            (sd2[(k, hh)] - fd).abs() <= 1e-3,
                            "second derivative ({k},{hh}) = {}, fd = {fd}",
                            sd2[(k, hh)]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn closed_sum_hand_value() {
        // n = p = 2, lambda = (3, 1), top index: 2 (2 + (3+1)/(3-1)) = 8.
        let got = second_derivative_sum(&[3.0, 1.0], 2, 0).unwrap();
        assert!((got - 8.0).abs() < 1e-15, "got {got}");
        let bottom = second_derivative_sum(&[3.0, 1.0], 2, 1).unwrap();
        assert!((bottom - 0.0).abs() < 1e-15, "got {bottom}");
    }

    #[test]
    fn colliding_eigenvalues_are_refused_with_named_pair() {
        let lambda = [5.0, 5.0 + 4e-8, 1.0];
        // Descending order first.
        let sorted = [lambda[1], lambda[0], lambda[2]];
        let err = second_derivative_sum(&sorted, 4, 0).unwrap_err();
        match err {
            Error::Precondition(msg) => {
                assert!(
                    msg.contains("0 and 1"),
                    "message should name the colliding pair: {msg}"
                );
            }
            other => panic!("expected precondition error, got {other}"),
        }
        let unsorted = [1.0, 3.0];
        assert!(matches!(
            second_derivative_sum(&unsorted, 4, 0),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn drift_sums_to_trace_identity() {
        let lambda = [9.0, 4.0, 1.0, 0.2];
        let p = 7;
        for (hv, s) in [(0.75, 0.6), (0.6, 2.0), (0.9, 0.35)] {
            let d = drift(&lambda, p, h(hv), s).unwrap();
            let total: f64 = d.values.iter().sum();
            let want = 2.0 * hv * (lambda.len() * p) as f64 * s.powf(2.0 * hv - 1.0);
            assert!(
                (total - want).abs() <= 1e-12 * want.abs(),
                "drift sum {total} vs 2H n p s^(2H-1) = {want}"
            );
        }
    }

    #[test]
    fn drift_reduces_to_time_homogeneous_form_at_half() {
        // At H = 1/2 the time factor 2H s^{2H-1} is identically 1.
        let lambda = [4.0, 1.5, 0.5];
        let a = drift(&lambda, 5, h(0.5), 0.3).unwrap();
        let b = drift(&lambda, 5, h(0.5), 2.7).unwrap();
        for i in 0..3 {
            assert!((a.values[i] - b.values[i]).abs() < 1e-14);
            let want = 5.0 + interaction_sum(&lambda, i);
            assert!((a.values[i] - want).abs() < 1e-14);
        }
        assert!(drift(&lambda, 5, h(0.75), 0.0).is_err());
    }

    #[test]
    fn two_by_two_interaction_is_antisymmetric() {
        let lambda = [3.0, 1.0];
        let d = drift(&lambda, 4, h(0.8), 1.3).unwrap();
        let factor = 2.0 * 0.8 * 1.3f64.powf(0.6);
        assert!((d.values[0] + d.values[1] - 2.0 * 4.0 * factor).abs() < 1e-13);
        // (lambda_1 + lambda_2)/(lambda_1 - lambda_2) = 2 enters with
        // opposite signs.
        assert!((d.values[0] - (4.0 + 2.0) * factor).abs() < 1e-13);
        assert!((d.values[1] - (4.0 - 2.0) * factor).abs() < 1e-13);
    }

    /// A synthetic ensemble whose rows scale exactly self-similarly, so the
    /// integrand's smooth factor is constant in time and the quadrature is
    /// exact: prediction = lambda_i(0) + (p + interaction) t^{2H}.
    #[test]
    fn drift_integral_is_exact_on_self_similar_paths() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let hurst = h(0.75);
        let mu = [5.0, 2.0, 0.5];
        let rows: Vec<Vec<f64>> = grid
            .points()
            .map(|t| mu.iter().map(|m| m * t.powf(1.5)).collect())
            .collect();
        let path =
            SpectrumPath::from_rows(grid, hurst, Scale::Unscaled, &rows).unwrap();
        let p = 6;
        let pred = mean_drift_integral(&[0.0; 3], p, hurst, &[path], 1.0).unwrap();
        for i in 0..3 {
            let want = (p as f64 + interaction_sum(&mu, i)) * 1.0f64;
            assert!(
                (pred[i] - want).abs() <= 1e-12 * want.abs().max(1.0),
                "prediction {} vs exact {want} at i = {i}",
                pred[i]
            );
        }
        // Summed over i the interaction cancels: total = sum lambda(0) + p n t^{2H}.
        let total: f64 = pred.iter().sum();
        assert!((total - (p * 3) as f64).abs() < 1e-12, "total {total}");
    }

    #[test]
    fn drift_integral_validates_time_and_ensemble() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let rows: Vec<Vec<f64>> = grid
            .points()
            .map(|t| vec![2.0 * t.powf(1.2) + 1.0, t.powf(1.2) + 0.5])
            .collect();
        let path =
            SpectrumPath::from_rows(grid, h(0.6), Scale::Unscaled, &rows).unwrap();
        assert!(mean_drift_integral(&[1.0, 0.5], 3, h(0.6), &[path.clone()], 0.33).is_err());
        assert!(mean_drift_integral(&[1.0, 0.5], 3, h(0.6), &[path.clone()], 0.0).is_err());
        assert!(mean_drift_integral(&[1.0, 0.5], 3, h(0.6), &[], 0.5).is_err());
        assert!(mean_drift_integral(&[1.0], 3, h(0.6), &[path.clone()], 0.5).is_err());
        // Hurst mismatch between argument and ensemble is refused.
        assert!(mean_drift_integral(&[1.0, 0.5], 3, h(0.7), &[path], 0.5).is_err());
    }
}

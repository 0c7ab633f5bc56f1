//! Statistical analysis of simulated spectra: distances between empirical
//! spectral measures and the dilated limit law, collision diagnostics for
//! adjacent eigenvalues, the fourth-order structure function used to read off
//! path regularity, inverse-moment scaling of the top spectral gap, and the
//! closed-form joint eigenvalue log-density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::Hurst;
use crate::limit_law::DilatedMp;
use crate::quad::integrate;
use crate::stats::{linear_fit, mean, pairwise_sum};
use crate::wishart::{SpectrumPath, NEAR_DEGENERATE_GAP};

/// A finite empirical measure with equal weights on its atoms.
#[derive(Clone, Debug)]
pub struct EmpiricalMeasure {
    atoms: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Usage(
                "empirical measure needs at least one atom".into(),
            ));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "empirical measure atoms must be finite, got {bad}"
            )));
        }
        let mut atoms = values.to_vec();
        atoms.sort_by(f64::total_cmp);
        Ok(Self { atoms })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    /// Right-continuous CDF: fraction of atoms <= x.
    pub fn cdf(&self, x: f64) -> f64 {
        self.atoms.partition_point(|&a| a <= x) as f64 / self.atoms.len() as f64
    }

    /// Left limit of the CDF: fraction of atoms strictly below x.
    pub fn cdf_left(&self, x: f64) -> f64 {
        self.atoms.partition_point(|&a| a < x) as f64 / self.atoms.len() as f64
    }

    /// Integral of a test function: (1/n) sum_i f(atom_i).
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let values: Vec<f64> = self.atoms.iter().map(|&x| f(x)).collect();
        mean(&values)
    }

    /// Kolmogorov-Smirnov distance to a dilated limit law. The supremum of
    /// |F_emp - F| is attained at a jump of either CDF, so it suffices to
    /// compare one-sided limits at every empirical atom and at zero (the only
    /// possible jump of the law).
    pub fn ks_distance(&self, law: &DilatedMp) -> f64 {
        let mut sup: f64 = 0.0;
        let mut check = |x: f64| {
            sup = sup
                .max((self.cdf(x) - law.cdf(x)).abs())
                .max((self.cdf_left(x) - law.cdf_left(x)).abs());
        };
        check(0.0);
        for &x in &self.atoms {
            check(x);
        }
        sup
    }

    /// 1-Wasserstein distance to a dilated limit law: the integral over
    /// quantile levels of |F_emp^{-1}(q) - F_law^{-1}(q)|, evaluated in the
    /// equivalent x-domain form as the integral of |F_emp - F_law| (the two
    /// are equal because both integrals measure the area between the CDFs).
    /// The line is split at every empirical atom, at zero, and at the support
    /// edges, so each cell integrand is |constant - F| with F smooth; cells
    /// are handled by adaptive quadrature. The distance is zero exactly when
    /// the two measures coincide, which against an n-atom empirical measure
    /// is possible only for the degenerate point-mass law.
    pub fn wasserstein1(&self, law: &DilatedMp) -> Result<f64> {
        if law.t == 0.0 {
            // Distance to the point mass at zero is the mean absolute atom.
            return Ok(mean(&self.atoms.iter().map(|x| x.abs()).collect::<Vec<_>>()));
        }
        let (edge_lo, edge_hi) = law.edges();
        let lo = self.atoms[0].min(0.0);
        let hi = self.atoms[self.atoms.len() - 1].max(edge_hi);
        let mut cuts: Vec<f64> = Vec::with_capacity(self.atoms.len() + 4);
        cuts.push(lo);
        for c in [0.0, edge_lo, edge_hi] {
            if c > lo && c < hi {
                cuts.push(c);
            }
        }
        cuts.extend(self.atoms.iter().copied().filter(|&x| x > lo && x < hi));
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let tol = 1e-9 * (hi - lo).max(1.0) / cuts.len() as f64;
        let mut total = 0.0;
        for pair in cuts.windows(2) {
            let (u, v) = (pair[0], pair[1]);
            if v - u <= 0.0 {
                continue;
            }
            let level = self.cdf(u);
            total += integrate(|x| (level - law.cdf(x)).abs(), u, v, tol)?.value;
        }
        Ok(total)
    }
}

/// Kolmogorov-Smirnov distance between samples and a dilated limit law.
pub fn ks_distance(values: &[f64], law: &DilatedMp) -> Result<f64> {
    Ok(EmpiricalMeasure::new(values)?.ks_distance(law))
}

/// 1-Wasserstein distance between samples and a dilated limit law.
pub fn wasserstein1(values: &[f64], law: &DilatedMp) -> Result<f64> {
    EmpiricalMeasure::new(values)?.wasserstein1(law)
}

/// Adjacent-gap statistics of a single spectral path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    /// Minimal adjacent gap at every grid index (index 0 included; simulated
    /// paths start with all eigenvalues equal at zero, so entry 0 is zero
    /// there by construction).
    pub per_time: Vec<f64>,
    /// Smallest gap over positive times (grid index >= 1).
    pub min_gap: f64,
    /// Grid index attaining the minimum.
    pub time_index: usize,
    /// Number of exact collisions (a gap of exactly zero) at positive times.
    pub exact_ties: usize,
    /// Number of positive-time gaps below the near-degeneracy threshold.
    pub near_degenerate: usize,
}

/// Per-time and global minimal adjacent gaps of one path. Collision counts
/// skip the start of the grid, where the process begins degenerate.
pub fn gap_stats(path: &SpectrumPath) -> Result<GapStats> {
    if path.n < 2 {
        return Err(Error::Usage(
            "adjacent-gap statistics need at least two eigenvalues".into(),
        ));
    }
    let mut stats = GapStats {
        per_time: Vec::with_capacity(path.grid.steps() + 1),
        min_gap: f64::INFINITY,
        time_index: 0,
        exact_ties: 0,
        near_degenerate: 0,
    };
    for k in 0..=path.grid.steps() {
        let row_min = path
            .row(k)
            .windows(2)
            .map(|pair| pair[0] - pair[1])
            .fold(f64::INFINITY, f64::min);
        stats.per_time.push(row_min);
        if k == 0 {
            continue;
        }
        if row_min == 0.0 {
            stats.exact_ties += 1;
        }
        if row_min < NEAR_DEGENERATE_GAP {
            stats.near_degenerate += 1;
        }
        if row_min < stats.min_gap {
            stats.min_gap = row_min;
            stats.time_index = k;
        }
    }
    Ok(stats)
}

/// Gap diagnostics aggregated over an ensemble, with the distribution of
/// per-replica global minima kept for persistence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Smallest adjacent gap observed over every replica, positive time, and
    /// neighbour pair.
    pub min_gap: f64,
    /// Replica index attaining the minimum.
    pub replica: usize,
    /// Time-grid index attaining the minimum.
    pub time_index: usize,
    /// Total exact collisions across the ensemble.
    pub exact_ties: usize,
    /// Total gaps below the near-degeneracy threshold.
    pub near_degenerate: usize,
    /// Global minimum gap of each replica.
    pub replica_minima: Vec<f64>,
}

pub fn gap_report(ensemble: &[SpectrumPath]) -> Result<GapReport> {
    let first = ensemble
        .first()
        .ok_or_else(|| Error::Usage("gap statistics need at least one replica".into()))?;
    let mut report = GapReport {
        min_gap: f64::INFINITY,
        replica: 0,
        time_index: 0,
        exact_ties: 0,
        near_degenerate: 0,
        replica_minima: Vec::with_capacity(ensemble.len()),
    };
    for (rho, path) in ensemble.iter().enumerate() {
        if path.n != first.n || path.grid != first.grid {
            return Err(Error::Usage(
                "gap statistics require a homogeneous ensemble".into(),
            ));
        }
        let stats = gap_stats(path)?;
        report.exact_ties += stats.exact_ties;
        report.near_degenerate += stats.near_degenerate;
        report.replica_minima.push(stats.min_gap);
        if stats.min_gap < report.min_gap {
            report.min_gap = stats.min_gap;
            report.replica = rho;
            report.time_index = stats.time_index;
        }
    }
    Ok(report)
}

/// Fourth-order structure function of the mean absolute spectral increment,
/// with the log-log slope and the implied path regularity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    /// Lag sizes in time units.
    pub lags: Vec<f64>,
    /// Structure-function values at each lag.
    pub values: Vec<f64>,
    /// Slope of log value against log lag; for an index-H path this is 4H.
    pub slope: f64,
    /// slope / 4.
    pub hurst_estimate: f64,
}

/// Minimum ensemble size for a stable structure-function estimate.
const STRUCTURE_MIN_REPLICAS: usize = 100;

/// Estimates S(tau) = E[ ((1/n) sum_i |lambda_i(t + tau) - lambda_i(t)|)^4 ]
/// across the given grid lags, averaging over replicas and over every start
/// time the lag allows, then fits the log-log slope.
pub fn structure_function(ensemble: &[SpectrumPath], lag_steps: &[usize]) -> Result<StructureReport> {
    let first = ensemble
        .first()
        .ok_or_else(|| Error::Usage("structure function needs a non-empty ensemble".into()))?;
    if ensemble.len() < STRUCTURE_MIN_REPLICAS {
        return Err(Error::Usage(format!(
            "structure function needs at least {STRUCTURE_MIN_REPLICAS} replicas, got {}",
            ensemble.len()
        )));
    }
    let steps = first.grid.steps();
    if lag_steps.len() < 2 {
        return Err(Error::Usage("need at least two lags to fit a slope".into()));
    }
    for pair in lag_steps.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::Usage("lags must be strictly increasing".into()));
        }
    }
    let (lo, hi) = (lag_steps[0], lag_steps[lag_steps.len() - 1]);
    if lo == 0 || hi > steps {
        return Err(Error::Usage(format!(
            "lags must lie in [1, {steps}], got [{lo}, {hi}]"
        )));
    }
    if hi < 10 * lo {
        return Err(Error::Usage(
            "largest lag must be at least ten times the smallest to resolve a slope".into(),
        ));
    }
    let n = first.n as f64;
    let delta = first.grid.delta();
    let mut lags = Vec::with_capacity(lag_steps.len());
    let mut values = Vec::with_capacity(lag_steps.len());
    for &ell in lag_steps {
        let mut fourths: Vec<f64> = Vec::with_capacity(ensemble.len() * (steps + 1 - ell));
        for path in ensemble {
            if path.n != first.n || path.grid != first.grid {
                return Err(Error::Usage(
                    "structure function requires a homogeneous ensemble".into(),
                ));
            }
            for k in 0..=(steps - ell) {
                let early = path.row(k);
                let late = path.row(k + ell);
                let avg: f64 = early
                    .iter()
                    .zip(late)
                    .map(|(a, b)| (b - a).abs())
                    .sum::<f64>()
                    / n;
                fourths.push(avg.powi(4));
            }
        }
        let s = mean(&fourths);
        if s <= 0.0 {
            return Err(Error::Degenerate(format!(
                "structure function vanished at lag {ell}: the spectra are constant"
            )));
        }
        lags.push(ell as f64 * delta);
        values.push(s);
    }
    let log_lags: Vec<f64> = lags.iter().map(|l| l.ln()).collect();
    let log_values: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let (slope, _) = linear_fit(&log_lags, &log_values);
    Ok(StructureReport {
        lags,
        values,
        slope,
        hurst_estimate: slope / 4.0,
    })
}

/// Gaps below this are excluded from inverse moments (and counted), since a
/// single denormal gap would otherwise dominate the average.
const GAP_FLOOR: f64 = 1e-12;

/// Inverse-moment scaling of gap samples across observation scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseMomentReport {
    /// Observation scales.
    pub scales: Vec<f64>,
    /// Estimated E[gap^{-r}] at each scale.
    pub means: Vec<f64>,
    /// Slope of log mean against log scale; self-similarity of index H
    /// predicts -2 r H.
    pub slope: f64,
    /// Number of samples excluded as numerically zero.
    pub truncated: usize,
}

/// Fits the scaling exponent of E[gap^{-r}] across scales. Each entry of
/// `data` pairs an observation scale with gap samples taken at that scale.
/// Orders r >= 2 are rejected: adjacent-gap densities vanish linearly at
/// zero, so those moments diverge.
pub fn inverse_moment_scaling(r: f64, data: &[(f64, Vec<f64>)]) -> Result<InverseMomentReport> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Domain(format!(
            "inverse-moment order must be positive and finite, got {r}"
        )));
    }
    if r >= 2.0 {
        return Err(Error::Precondition(format!(
            "inverse moment of order {r} diverges: adjacent-gap densities vanish \
             linearly at zero, so only orders below 2 are integrable"
        )));
    }
    if data.len() < 2 {
        return Err(Error::Usage(
            "need at least two scales to fit a scaling exponent".into(),
        ));
    }
    let mut scales = Vec::with_capacity(data.len());
    let mut means = Vec::with_capacity(data.len());
    let mut truncated = 0;
    for (s, gaps) in data {
        if !(s.is_finite() && *s > 0.0) {
            return Err(Error::Domain(format!(
                "observation scales must be positive, got {s}"
            )));
        }
        let kept: Vec<f64> = gaps
            .iter()
            .filter(|&&g| {
                if g < GAP_FLOOR {
                    truncated += 1;
                    false
                } else {
                    true
                }
            })
            .map(|&g| g.powf(-r))
            .collect();
        if kept.is_empty() {
            return Err(Error::Degenerate(format!(
                "no usable gap samples at scale {s}"
            )));
        }
        scales.push(*s);
        means.push(mean(&kept));
    }
    let log_scales: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let log_means: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    let (slope, _) = linear_fit(&log_scales, &log_means);
    Ok(InverseMomentReport {
        scales,
        means,
        slope,
        truncated,
    })
}

/// Log of the joint eigenvalue density at observation time `s` for the
/// unscaled process with `p` driving columns, up to an additive constant that
/// depends only on (n, p):
///
/// ```text
/// sum_j [ (p-n-1)/2 * ln l_j - l_j / (2 s^{2H}) ]  -  n p H ln s
///   + sum_{j<k} ln(l_j - l_k) .
/// ```
///
/// The time-dependent factor s^{-npH} is forced by self-similarity: the
/// time-s spectrum equals s^{2H} times the time-1 spectrum in law, so the
/// density must satisfy f_s(s^{2H} x) = s^{-2nH} f_1(x), which this
/// expression does exactly.
pub fn joint_logdensity(lambda: &[f64], s: f64, hurst: Hurst, p: usize) -> Result<f64> {
    let n = lambda.len();
    if n == 0 {
        return Err(Error::Usage("need at least one eigenvalue".into()));
    }
    if p < n {
        return Err(Error::Usage(format!(
            "the density requires at least as many columns as eigenvalues, got p = {p}, n = {n}"
        )));
    }
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Domain(format!(
            "observation time must be positive, got {s}"
        )));
    }
    for pair in lambda.windows(2) {
        if !(pair[0] > pair[1]) {
            return Err(Error::Domain(format!(
                "eigenvalues must be strictly decreasing, got {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    if lambda[n - 1] <= 0.0 || !lambda[0].is_finite() {
        return Err(Error::Domain(
            "eigenvalues must be positive and finite".to_string(),
        ));
    }
    let h = hurst.value();
    let tau = s.powf(2.0 * h);
    let exponent_weight = 0.5 * (p as f64 - n as f64 - 1.0);
    let mut terms = Vec::with_capacity(n + n * (n - 1) / 2 + 1);
    for &l in lambda {
        terms.push(exponent_weight * l.ln() - l / (2.0 * tau));
    }
    for j in 0..n {
        for k in (j + 1)..n {
            terms.push((lambda[j] - lambda[k]).ln());
        }
    }
    terms.push(-(n as f64) * (p as f64) * h * s.ln());
    Ok(pairwise_sum(&terms))
}

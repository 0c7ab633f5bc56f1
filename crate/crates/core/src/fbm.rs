//! Exact simulation of fractional Brownian motion on uniform time grids.
//!
//! A fractional Brownian motion with Hurst exponent H is the centered
//! Gaussian process with covariance
//!
//! ```text
//! cov(B(s), B(t)) = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2 ,
//! ```
//!
//! whose increments over a uniform grid form stationary fractional Gaussian
//! noise. Two exact samplers are provided:
//!
//! * a Cholesky factorization of the increment covariance (any grid size,
//!   quadratic memory), and
//! * circulant embedding of the increment covariance (power-of-two grids,
//!   FFT-based, near-linear cost).
//!
//! Both draw their Gaussians from the keyed counter stream in [`crate::rng`],
//! so a path is a pure function of `(grid, hurst, seed, path id, method)`.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::GaussianStream;

/// Hurst exponent, restricted to the open interval (0, 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Hurst(f64);

impl Hurst {
    pub fn new(h: f64) -> Result<Self> {
        if h.is_finite() && 0.0 < h && h < 1.0 {
            Ok(Self(h))
        } else {
            Err(Error::Domain(format!(
                "Hurst exponent must lie in (0, 1), got {h}"
            )))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// True on the long-memory range (1/2, 1) required by the scaling
    /// theorems; H = 1/2 is the classical Brownian sanity case.
    pub fn is_long_memory(self) -> bool {
        self.0 > 0.5
    }
}

impl TryFrom<f64> for Hurst {
    type Error = Error;
    fn try_from(h: f64) -> Result<Self> {
        Self::new(h)
    }
}

impl From<Hurst> for f64 {
    fn from(h: Hurst) -> f64 {
        h.0
    }
}

/// Uniform time grid 0 = t_0 < t_1 < ... < t_m = T with t_k = kT/m.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    horizon: f64,
    steps: usize,
}

impl TryFrom<GridRepr> for TimeGrid {
    type Error = Error;
    fn try_from(g: GridRepr) -> Result<Self> {
        TimeGrid::new(g.horizon, g.steps)
    }
}

impl From<TimeGrid> for GridRepr {
    fn from(g: TimeGrid) -> GridRepr {
        GridRepr {
            horizon: g.horizon,
            steps: g.steps,
        }
    }
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Domain(format!(
                "grid horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::Domain("grid needs at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of increments m; the grid has m + 1 points.
    #[inline]
    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn delta(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// k-th grid point, k in 0..=steps.
    #[inline]
    pub fn point(&self, k: usize) -> f64 {
        debug_assert!(k <= self.steps);
        self.horizon * k as f64 / self.steps as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.point(k))
    }

    /// Index of the grid point equal to `t`, if there is one.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        if !(0.0..=self.horizon * (1.0 + 1e-12)).contains(&t) {
            return None;
        }
        let k = (t / self.delta()).round() as usize;
        let k = k.min(self.steps);
        ((self.point(k) - t).abs() <= 1e-12 * self.horizon).then_some(k)
    }
}

/// Covariance of fractional Brownian motion at two non-negative times.
pub fn fbm_covariance(hurst: Hurst, s: f64, t: f64) -> Result<f64> {
    if !(s.is_finite() && t.is_finite() && s >= 0.0 && t >= 0.0) {
        return Err(Error::Domain(format!(
            "covariance requires non-negative finite times, got ({s}, {t})"
        )));
    }
    let two_h = 2.0 * hurst.value();
    Ok(0.5 * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h)))
}

/// Autocovariance of fractional Gaussian noise at integer lag `k` for
/// increments over step `delta`.
pub fn increment_autocov(hurst: Hurst, lag: usize, delta: f64) -> Result<f64> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::Domain(format!(
            "increment autocovariance requires a positive step, got {delta}"
        )));
    }
    let two_h = 2.0 * hurst.value();
    let k = lag as f64;
    let prev = lag.abs_diff(1) as f64;
    Ok(0.5 * delta.powf(two_h) * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + prev.powf(two_h)))
}

/// Sampling method for fractional Brownian motion paths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FbmMethod {
    /// Cholesky factor of the increment covariance; exact for any m <= 4096.
    Cholesky,
    /// Circulant embedding of the increment covariance; m must be a power of
    /// two and the embedding eigenvalues must be non-negative up to a
    /// round-off clip.
    Circulant,
}

impl std::str::FromStr for FbmMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cholesky" => Ok(Self::Cholesky),
            "circulant" => Ok(Self::Circulant),
            other => Err(Error::Usage(format!(
                "unknown fbm method {other:?}; expected cholesky or circulant"
            ))),
        }
    }
}

/// One sampled fractional Brownian path on a uniform grid; values[0] = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct FbmPath {
    pub grid: TimeGrid,
    pub hurst: Hurst,
    pub values: Vec<f64>,
}

impl FbmPath {
    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Largest grid for which the dense Cholesky factor is kept in memory.
pub const MAX_CHOLESKY_STEPS: usize = 4096;

/// Relative clip threshold for tiny negative circulant eigenvalues.
const CIRCULANT_CLIP: f64 = 1e-10;

enum SamplerKind {
    /// Lower-triangular factor of the m x m increment covariance, row-major.
    Cholesky { factor: Vec<f64> },
    /// Scaling factors sqrt(eig / (2m)) of the circulant embedding, plus the
    /// forward FFT plan of size 2m.
    Circulant { scale: Vec<f64>, fft: Arc<dyn Fft<f64>> },
}

/// Reusable exact sampler for one (grid, Hurst, method) combination.
///
/// Construction performs the expensive factorization once; `sample` is then
/// cheap and safe to call from many threads at once.
pub struct FbmSampler {
    grid: TimeGrid,
    hurst: Hurst,
    method: FbmMethod,
    kind: SamplerKind,
}

impl std::fmt::Debug for FbmSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FbmSampler")
            .field("grid", &self.grid)
            .field("hurst", &self.hurst)
            .field("method", &self.method)
            .finish_non_exhaustive()
    }
}

impl FbmSampler {
    pub fn new(grid: TimeGrid, hurst: Hurst, method: FbmMethod) -> Result<Self> {
        let kind = match method {
            FbmMethod::Cholesky => SamplerKind::Cholesky {
                factor: increment_cholesky(grid, hurst)?,
            },
            FbmMethod::Circulant => {
                let (scale, fft) = circulant_spectrum(grid, hurst)?;
                SamplerKind::Circulant { scale, fft }
            }
        };
        Ok(Self {
            grid,
            hurst,
            method,
            kind,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn hurst(&self) -> Hurst {
        self.hurst
    }

    pub fn method(&self) -> FbmMethod {
        self.method
    }

    /// Sample the path identified by `(seed, path_id)`.
    pub fn sample(&self, seed: u64, path_id: u64) -> FbmPath {
        let mut values = vec![0.0; self.grid.steps() + 1];
        self.sample_into(seed, path_id, &mut values);
        FbmPath {
            grid: self.grid,
            hurst: self.hurst,
            values,
        }
    }

    /// Sample into a preallocated buffer of length steps + 1.
    pub fn sample_into(&self, seed: u64, path_id: u64, values: &mut [f64]) {
        let m = self.grid.steps();
        assert_eq!(values.len(), m + 1, "output buffer has the wrong length");
        let stream = GaussianStream::new(seed);
        match &self.kind {
            SamplerKind::Cholesky { factor } => {
                let z: Vec<f64> = (0..m).map(|i| stream.normal(path_id, i as u64)).collect();
                values[0] = 0.0;
                for row in 0..m {
                    let l = &factor[row * m..row * m + row + 1];
                    let incr: f64 = l.iter().zip(&z).map(|(a, b)| a * b).sum();
                    values[row + 1] = values[row] + incr;
                }
            }
            SamplerKind::Circulant { scale, fft } => {
                let embed = scale.len();
                let m_half = embed / 2;
                let mut v = vec![num_complex::Complex64::new(0.0, 0.0); embed];
                v[0] = num_complex::Complex64::new(scale[0] * stream.normal(path_id, 0), 0.0);
                v[m_half] = num_complex::Complex64::new(
                    scale[m_half] * stream.normal(path_id, m_half as u64),
                    0.0,
                );
                for j in 1..m_half {
                    let re = stream.normal(path_id, j as u64);
                    let im = stream.normal(path_id, (m_half + j) as u64);
                    v[j] = num_complex::Complex64::new(re, im) * scale[j];
                    v[embed - j] = v[j].conj();
                }
                fft.process(&mut v);
                values[0] = 0.0;
                for k in 0..m {
                    values[k + 1] = values[k] + v[k].re;
                }
            }
        }
    }
}

/// Dense lower-triangular Cholesky factor of the increment covariance.
fn increment_cholesky(grid: TimeGrid, hurst: Hurst) -> Result<Vec<f64>> {
    let m = grid.steps();
    if m > MAX_CHOLESKY_STEPS {
        return Err(Error::Config(format!(
            "cholesky sampler holds an m x m factor; m = {m} exceeds the limit {MAX_CHOLESKY_STEPS}"
        )));
    }
    let autocov: Vec<f64> = (0..m)
        .map(|k| increment_autocov(hurst, k, grid.delta()))
        .collect::<Result<_>>()?;
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut sum = autocov[i - j];
            for k in 0..j {
                sum -= l[i * m + k] * l[j * m + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Numerical(format!(
                        "increment covariance lost positive definiteness at pivot {i} ({sum:.3e})"
                    )));
                }
                l[i * m + i] = sum.sqrt();
            } else {
                l[i * m + j] = sum / l[j * m + j];
            }
        }
    }
    Ok(l)
}

/// Eigenvalues of the circulant embedding, pre-scaled for sampling.
fn circulant_spectrum(grid: TimeGrid, hurst: Hurst) -> Result<(Vec<f64>, Arc<dyn Fft<f64>>)> {
    let m = grid.steps();
    if !m.is_power_of_two() {
        return Err(Error::Usage(format!(
            "circulant sampler requires a power-of-two step count, got m = {m}"
        )));
    }
    let embed = 2 * m;
    let mut first_row = vec![num_complex::Complex64::new(0.0, 0.0); embed];
    for k in 0..=m {
        first_row[k].re = increment_autocov(hurst, k, grid.delta())?;
    }
    for k in 1..m {
        first_row[embed - k].re = first_row[k].re;
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(embed);
    fft.process(&mut first_row);

    let max_eig = first_row.iter().map(|e| e.re).fold(f64::MIN, f64::max);
    let clip = CIRCULANT_CLIP * max_eig;
    let mut scale = Vec::with_capacity(embed);
    for (j, e) in first_row.iter().enumerate() {
        if e.re < -clip {
            return Err(Error::Numerical(format!(
                "circulant embedding eigenvalue {j} is negative beyond round-off: {:.6e}",
                e.re
            )));
        }
        let lambda = e.re.max(0.0);
        let factor = if j == 0 || j == m {
            (lambda / embed as f64).sqrt()
        } else {
            (lambda / (2.0 * embed as f64)).sqrt()
        };
        scale.push(factor);
    }
    Ok((scale, fft))
}

/// Sample a single fractional Brownian path; a convenience wrapper that
/// builds the sampler for path id 0.
pub fn sample_fbm(grid: TimeGrid, hurst: Hurst, seed: u64, method: FbmMethod) -> Result<FbmPath> {
    Ok(FbmSampler::new(grid, hurst, method)?.sample(seed, 0))
}

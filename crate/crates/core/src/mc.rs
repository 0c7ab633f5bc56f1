//! Monte Carlo harness: reproducible ensembles of spectral paths, summary
//! statistics against the dilated limit law, and summary persistence.
//!
//! Reproducibility contract: every replica is a pure function of the master
//! seed and its replica index, so results are byte-identical across runs and
//! across worker counts; workers only change wall-clock time.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{gap_report, EmpiricalMeasure, GapReport, InverseMomentReport, StructureReport};
use crate::error::{Error, Result};
use crate::fbm::{FbmMethod, FbmSampler, Hurst, TimeGrid};
use crate::limit_law::{DilatedMp, MpParams};
use crate::mat::Mat;
use crate::rng::child_seed;
use crate::spectra::MeanDriftReport;
use crate::stats::{mean, standard_error};
use crate::wishart::{sample_matrix_fbm_with, spectrum_path, Scale, SpectrumPath};

fn default_method() -> FbmMethod {
    FbmMethod::Circulant
}

fn default_scale() -> Scale {
    Scale::Scaled
}

/// Full description of a simulation ensemble. Two runs with equal configs
/// produce identical output on any machine and any worker count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Matrix dimension (number of eigenvalues).
    pub n: usize,
    /// Number of driving columns; must be at least `n`.
    pub p: usize,
    pub hurst: Hurst,
    /// Time horizon of the simulation grid.
    pub horizon: f64,
    /// Number of grid steps.
    pub steps: usize,
    /// Number of independent replicas.
    pub replicas: usize,
    /// Master seed; replica r uses the derived child seed.
    pub seed: u64,
    #[serde(default = "default_method")]
    pub fbm_method: FbmMethod,
    #[serde(default = "default_scale")]
    pub scale: Scale,
    /// Optional deterministic p x n offset added to the driving matrix path
    /// at every time (a non-centered start).
    #[serde(default)]
    pub offsets: Option<Vec<Vec<f64>>>,
}

impl SimConfig {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.steps)
    }

    pub fn ratio(&self) -> f64 {
        self.p as f64 / self.n as f64
    }

    fn offset_matrix(&self) -> Result<Option<Mat>> {
        match &self.offsets {
            None => Ok(None),
            Some(rows) => Ok(Some(Mat::from_rows(rows)?)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("matrix dimension n must be positive".into()));
        }
        if self.p < self.n {
            return Err(Error::Config(format!(
                "need at least as many driving columns as eigenvalues, got p = {} < n = {}",
                self.p, self.n
            )));
        }
        if self.replicas == 0 {
            return Err(Error::Config("replica count must be positive".into()));
        }
        self.grid()?;
        if let Some(m) = self.offset_matrix()? {
            if m.rows() != self.p || m.cols() != self.n {
                return Err(Error::Config(format!(
                    "offsets must be a {} x {} matrix, got {} x {}",
                    self.p,
                    self.n,
                    m.rows(),
                    m.cols()
                )));
            }
        }
        Ok(())
    }

    /// Seed of replica `replica`.
    pub fn replica_seed(&self, replica: usize) -> u64 {
        child_seed(self.seed, replica as u64)
    }
}

/// Simulates one replica: a driving matrix path and its spectral path.
pub fn simulate_replica(cfg: &SimConfig, replica: usize) -> Result<SpectrumPath> {
    cfg.validate()?;
    let sampler = FbmSampler::new(cfg.grid()?, cfg.hurst, cfg.fbm_method)?;
    simulate_replica_with(cfg, &sampler, replica)
}

fn simulate_replica_with(
    cfg: &SimConfig,
    sampler: &FbmSampler,
    replica: usize,
) -> Result<SpectrumPath> {
    let offsets = cfg.offset_matrix()?;
    let path = sample_matrix_fbm_with(
        sampler,
        cfg.p,
        cfg.n,
        cfg.replica_seed(replica),
        offsets.as_ref(),
    )?;
    spectrum_path(&path, cfg.scale, false)
}

/// Runs the whole ensemble on `workers` threads. Replicas are computed
/// independently and collected in replica order, so the result does not
/// depend on `workers`.
pub fn run_ensemble(cfg: &SimConfig, workers: usize) -> Result<Vec<SpectrumPath>> {
    cfg.validate()?;
    if workers == 0 {
        return Err(Error::Usage("worker count must be positive".into()));
    }
    let sampler = FbmSampler::new(cfg.grid()?, cfg.hurst, cfg.fbm_method)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("could not start worker pool: {e}")))?;
    pool.install(|| {
        (0..cfg.replicas)
            .into_par_iter()
            .map(|r| simulate_replica_with(cfg, &sampler, r))
            .collect()
    })
}

/// Distance statistics between the empirical spectral measure and the
/// dilated limit law at one grid time, averaged over replicas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub time: f64,
    pub ks_mean: f64,
    pub ks_se: f64,
    pub w1_mean: f64,
    pub w1_se: f64,
}

/// Everything a simulation run reports. Serializes to JSON losslessly; the
/// wall-clock field is informational only and excluded so equal runs produce
/// byte-identical files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub config: SimConfig,
    /// Replica seeds actually used, for external reproduction.
    pub seeds: Vec<u64>,
    /// Per-time distances of the scaled empirical spectra to the limit law.
    pub distances: Vec<DistanceRow>,
    /// Adjacent-gap diagnostics (absent when n = 1).
    pub gaps: Option<GapReport>,
    /// Structure-function fit, when requested.
    pub structure: Option<StructureReport>,
    /// Inverse-moment scaling fit, when requested.
    pub inverse_moments: Option<InverseMomentReport>,
    /// Mean-drift verification, when requested.
    pub mean_drift: Option<MeanDriftReport>,
    #[serde(skip)]
    pub wall_clock: f64,
}

/// Computes distance rows and gap diagnostics for an ensemble produced by
/// [`run_ensemble`] under `cfg`. Eigenvalues are compared on the scaled side
/// (divided by n when the ensemble was simulated unscaled).
pub fn summarize(cfg: &SimConfig, ensemble: &[SpectrumPath]) -> Result<EnsembleSummary> {
    cfg.validate()?;
    if ensemble.len() != cfg.replicas {
        return Err(Error::Usage(format!(
            "ensemble has {} replicas but the config promises {}",
            ensemble.len(),
            cfg.replicas
        )));
    }
    let grid = cfg.grid()?;
    let params = MpParams::new(cfg.ratio())?;
    let rescale = match cfg.scale {
        Scale::Scaled => 1.0,
        Scale::Unscaled => 1.0 / cfg.n as f64,
    };
    let mut distances = Vec::with_capacity(grid.steps() + 1);
    for k in 0..=grid.steps() {
        let t = grid.point(k);
        let law = DilatedMp::new(params, cfg.hurst, t)?;
        let mut ks = Vec::with_capacity(ensemble.len());
        let mut w1 = Vec::with_capacity(ensemble.len());
        for path in ensemble {
            let scaled: Vec<f64> = path.row(k).iter().map(|&l| l * rescale).collect();
            let emp = EmpiricalMeasure::new(&scaled)?;
            ks.push(emp.ks_distance(&law));
            w1.push(emp.wasserstein1(&law)?);
        }
        distances.push(DistanceRow {
            time: t,
            ks_mean: mean(&ks),
            ks_se: standard_error(&ks),
            w1_mean: mean(&w1),
            w1_se: standard_error(&w1),
        });
    }
    let gaps = if cfg.n >= 2 {
        Some(gap_report(ensemble)?)
    } else {
        None
    };
    Ok(EnsembleSummary {
        config: cfg.clone(),
        seeds: (0..cfg.replicas).map(|r| cfg.replica_seed(r)).collect(),
        distances,
        gaps,
        structure: None,
        inverse_moments: None,
        mean_drift: None,
        wall_clock: 0.0,
    })
}

/// On-disk formats for summaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    /// Full summary, losslessly reloadable.
    Json,
    /// Distance table only, for spreadsheets.
    Csv,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(Error::Usage(format!(
                "unknown output format {other:?}, expected json or csv"
            ))),
        }
    }
}

impl std::fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Json => "json",
            Self::Csv => "csv",
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes a summary to `path`. JSON carries the full structure; CSV carries
/// only the distance table.
pub fn persist(summary: &EnsembleSummary, path: &Path, format: OutputFormat) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    match format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, summary)
                .map_err(|e| Error::Numerical(format!("summary serialization failed: {e}")))?;
            out.push(b'\n');
        }
        OutputFormat::Csv => {
            writeln!(out, "time,ks_mean,ks_se,w1_mean,w1_se").expect("vec write");
            for row in &summary.distances {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    row.time, row.ks_mean, row.ks_se, row.w1_mean, row.w1_se
                )
                .expect("vec write");
            }
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Reloads a summary previously persisted as JSON.
pub fn load(path: &Path) -> Result<EnsembleSummary> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return Err(Error::Usage(format!(
            "{} looks like a CSV export, which keeps only the distance table; \
             reload the JSON summary instead",
            path.display()
        )));
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

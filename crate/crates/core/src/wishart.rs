//! Matrix-valued fractional Brownian paths, their Wishart squares, and the
//! ordered spectral decomposition along a path.
//!
//! A p x n matrix path N(t) has independent fractional Brownian entries; the
//! associated Wishart process is X(t) = N(t)^T N(t) (optionally divided by n
//! to match the scaling used in large-dimension limit statements). The
//! eigensolver is a cyclic Jacobi sweep: deterministic, dependency-free, and
//! accurate to round-off for the moderate dimensions used here, so sorted
//! eigenvalues and eigenvectors are reproducible bit for bit across worker
//! counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::{FbmMethod, FbmSampler, Hurst, TimeGrid};
use crate::mat::Mat;

/// Whether a Wishart matrix is divided by the column dimension n.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Unscaled,
    Scaled,
}

impl std::str::FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scaled" => Ok(Self::Scaled),
            "unscaled" => Ok(Self::Unscaled),
            other => Err(Error::Usage(format!(
                "unknown scale {other:?}, expected scaled or unscaled"
            ))),
        }
    }
}

/// A p x n matrix of fractional Brownian paths on a shared grid.
///
/// Entry (k, h) is stored contiguously over time as
/// `values[(k * n + h) * (steps + 1) ..][..steps + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixFbmPath {
    pub p: usize,
    pub n: usize,
    pub grid: TimeGrid,
    pub hurst: Hurst,
    values: Vec<f64>,
}

impl MatrixFbmPath {
    /// Time series of entry (k, h).
    pub fn entry_path(&self, k: usize, h: usize) -> &[f64] {
        let len = self.grid.steps() + 1;
        let base = (k * self.n + h) * len;
        &self.values[base..base + len]
    }

    /// The p x n matrix N(t_time).
    pub fn matrix_at(&self, time: usize) -> Mat {
        let mut m = Mat::zeros(self.p, self.n);
        for k in 0..self.p {
            for h in 0..self.n {
                m[(k, h)] = self.entry_path(k, h)[time];
            }
        }
        m
    }
}

/// Sample a p x n matrix of independent fractional Brownian paths.
///
/// Entry (k, h) uses stream id `k * n + h` of the keyed counter generator,
/// so the result is a pure function of the arguments. An optional offset
/// matrix shifts every entry path by a constant, giving a deterministic
/// non-zero initial matrix N(0).
pub fn sample_matrix_fbm(
    p: usize,
    n: usize,
    grid: TimeGrid,
    hurst: Hurst,
    method: FbmMethod,
    seed: u64,
    offsets: Option<&Mat>,
) -> Result<MatrixFbmPath> {
    let sampler = FbmSampler::new(grid, hurst, method)?;
    sample_matrix_fbm_with(&sampler, p, n, seed, offsets)
}

/// Same as [`sample_matrix_fbm`] but reusing an existing sampler, so the
/// factorization cost is paid once per ensemble rather than per replica.
pub fn sample_matrix_fbm_with(
    sampler: &FbmSampler,
    p: usize,
    n: usize,
    seed: u64,
    offsets: Option<&Mat>,
) -> Result<MatrixFbmPath> {
    if p == 0 || n == 0 {
        return Err(Error::Usage(format!(
            "matrix path needs positive dimensions, got p = {p}, n = {n}"
        )));
    }
    if p < n {
        return Err(Error::Usage(format!(
            "matrix path requires p >= n so the spectrum is almost surely simple, got p = {p} < n = {n}"
        )));
    }
    if let Some(m) = offsets {
        if m.rows() != p || m.cols() != n {
            return Err(Error::Usage(format!(
                "offset matrix is {} x {}, expected {p} x {n}",
                m.rows(),
                m.cols()
            )));
        }
        if !m.is_finite() {
            return Err(Error::Domain("offset matrix has non-finite entries".into()));
        }
    }
    let grid = sampler.grid();
    let len = grid.steps() + 1;
    let mut values = vec![0.0; p * n * len];
    for k in 0..p {
        for h in 0..n {
            let base = (k * n + h) * len;
            sampler.sample_into(seed, (k * n + h) as u64, &mut values[base..base + len]);
            if let Some(m) = offsets {
                let shift = m[(k, h)];
                if shift != 0.0 {
                    for v in &mut values[base..base + len] {
                        *v += shift;
                    }
                }
            }
        }
    }
    Ok(MatrixFbmPath {
        p,
        n,
        grid,
        hurst: sampler.hurst(),
        values,
    })
}

/// A Wishart matrix snapshot X = N^T N (n x n), possibly divided by n.
#[derive(Clone, Debug, PartialEq)]
pub struct WishartSnapshot {
    pub matrix: Mat,
    pub scale: Scale,
}

/// Form the Wishart matrix of a p x n data matrix.
pub fn build_wishart(nmat: &Mat, scale: Scale) -> Result<WishartSnapshot> {
    if !nmat.is_finite() {
        return Err(Error::Domain(
            "data matrix has non-finite entries".into(),
        ));
    }
    let mut matrix = nmat.gram();
    if scale == Scale::Scaled {
        matrix = matrix.scaled(1.0 / nmat.cols() as f64);
    }
    Ok(WishartSnapshot { matrix, scale })
}

/// Eigenvalues in strictly descending storage order with the matching
/// orthonormal eigenvector columns.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenDecomposition {
    /// Eigenvalues sorted descending.
    pub lambda: Vec<f64>,
    /// Column i is the eigenvector of lambda[i]; the entry of largest
    /// magnitude in each column is positive (ties resolved toward the
    /// smallest row index).
    pub u: Mat,
}

/// Relative symmetry tolerance accepted by [`eigh_sorted`].
const SYMMETRY_TOL: f64 = 1e-10;
/// Convergence target for the Jacobi sweep, relative to the Frobenius norm.
const JACOBI_TOL: f64 = 1e-14;
/// Hard cap on Jacobi sweeps before reporting non-convergence.
const MAX_SWEEPS: usize = 64;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// The input must be symmetric to within `1e-10` of its Frobenius norm; it is
/// explicitly symmetrized before the sweep. Iteration stops when the
/// off-diagonal Frobenius mass falls below `1e-14 * ||X||_F`.
pub fn eigh_sorted(x: &Mat) -> Result<EigenDecomposition> {
    let n = x.rows();
    if n == 0 || x.cols() != n {
        return Err(Error::Usage(format!(
            "eigendecomposition needs a square matrix, got {} x {}",
            x.rows(),
            x.cols()
        )));
    }
    if !x.is_finite() {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let norm = x.frobenius();
    if x.asymmetry() > SYMMETRY_TOL * norm.max(f64::MIN_POSITIVE) {
        return Err(Error::Domain(format!(
            "matrix is not symmetric: max |X - X^T| = {:.3e} exceeds {SYMMETRY_TOL} x ||X||_F",
            x.asymmetry()
        )));
    }

    let mut a = x.clone();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
    let mut u = Mat::identity(n);
    let target = JACOBI_TOL * norm;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = {
            let mut s = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
            (2.0 * s).sqrt()
        };
        if off <= target {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = 0.5 * (a[(q, q)] - a[(p, p)]) / apq;
                // tan of the rotation angle, the root of smaller magnitude.
                let t = if theta.abs() > 1e153 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                let app = a[(p, p)];
                let aqq = a[(q, q)];
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for r in 0..n {
                    if r != p && r != q {
                        let arp = a[(r, p)];
                        let arq = a[(r, q)];
                        a[(r, p)] = arp - s * (arq + tau * arp);
                        a[(r, q)] = arq + s * (arp - tau * arq);
                        a[(p, r)] = a[(r, p)];
                        a[(q, r)] = a[(r, q)];
                    }
                }
                for r in 0..n {
                    let urp = u[(r, p)];
                    let urq = u[(r, q)];
                    u[(r, p)] = urp - s * (urq + tau * urp);
                    u[(r, q)] = urq + s * (urp - tau * urq);
                }
            }
        }
    }
    if !converged {
        // One final check: the last sweep may have reached the target.
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += a[(i, j)] * a[(i, j)];
            }
        }
        if (2.0 * s).sqrt() > target {
            return Err(Error::Numerical(format!(
                "jacobi sweep did not converge in {MAX_SWEEPS} sweeps (n = {n})"
            )));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let lambda: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut sorted_u = Mat::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        // Fix the sign: largest-magnitude entry positive, earliest row wins ties.
        let mut lead = 0;
        for r in 1..n {
            if u[(r, src)].abs() > u[(lead, src)].abs() {
                lead = r;
            }
        }
        let flip = if u[(lead, src)] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            sorted_u[(r, col)] = flip * u[(r, src)];
        }
    }
    Ok(EigenDecomposition {
        lambda,
        u: sorted_u,
    })
}

/// Relative gap below which a spectral snapshot is flagged as near-degenerate.
pub const NEAR_DEGENERATE_GAP: f64 = 1e-12;

/// Ordered eigenvalues of a Wishart path at every grid time.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumPath {
    pub grid: TimeGrid,
    pub hurst: Hurst,
    pub scale: Scale,
    pub n: usize,
    /// Row k holds the descending eigenvalues at grid point k.
    lambdas: Vec<f64>,
    /// Grid indices where an adjacent gap fell below
    /// `NEAR_DEGENERATE_GAP x max eigenvalue` (t = 0 is exempt: the spectrum
    /// starts degenerate at the origin by construction).
    pub flagged_times: Vec<usize>,
    /// Full eigendecompositions, kept only on request.
    pub frames: Option<Vec<EigenDecomposition>>,
}

impl SpectrumPath {
    /// Descending eigenvalues at grid index k.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.lambdas[k * self.n..(k + 1) * self.n]
    }

    pub fn times(&self) -> usize {
        self.grid.steps() + 1
    }

    /// Assemble a spectrum path from precomputed eigenvalue rows (one row of
    /// descending eigenvalues per grid point).
    pub fn from_rows(
        grid: TimeGrid,
        hurst: Hurst,
        scale: Scale,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        if rows.len() != grid.steps() + 1 {
            return Err(Error::Usage(format!(
                "expected {} eigenvalue rows, got {}",
                grid.steps() + 1,
                rows.len()
            )));
        }
        let n = rows[0].len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Usage(
                "eigenvalue rows must be non-empty and of equal length".into(),
            ));
        }
        if rows
            .iter()
            .any(|r| r.windows(2).any(|w| w[0] < w[1]) || r.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::Usage(
                "eigenvalue rows must be finite and sorted descending".into(),
            ));
        }
        Ok(Self {
            grid,
            hurst,
            scale,
            n,
            lambdas: rows.concat(),
            flagged_times: Vec::new(),
            frames: None,
        })
    }
}

/// Diagonalize X(t_k) for every k along a matrix path.
pub fn spectrum_path(
    path: &MatrixFbmPath,
    scale: Scale,
    keep_frames: bool,
) -> Result<SpectrumPath> {
    let times = path.grid.steps() + 1;
    let n = path.n;
    let mut lambdas = Vec::with_capacity(times * n);
    let mut flagged = Vec::new();
    let mut frames = keep_frames.then(|| Vec::with_capacity(times));
    for k in 0..times {
        let snapshot = build_wishart(&path.matrix_at(k), scale)?;
        let dec = eigh_sorted(&snapshot.matrix)?;
        if k > 0 {
            let top = dec.lambda[0].abs().max(dec.lambda[n - 1].abs());
            let min_gap = dec
                .lambda
                .windows(2)
                .map(|w| w[0] - w[1])
                .fold(f64::INFINITY, f64::min);
            if n > 1 && min_gap < NEAR_DEGENERATE_GAP * top.max(f64::MIN_POSITIVE) {
                flagged.push(k);
            }
        }
        lambdas.extend_from_slice(&dec.lambda);
        if let Some(fr) = frames.as_mut() {
            fr.push(dec);
        }
    }
    Ok(SpectrumPath {
        grid: path.grid,
        hurst: path.hurst,
        scale,
        n,
        lambdas,
        flagged_times: flagged,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> Hurst {
        Hurst::new(v).unwrap()
    }

    #[test]
    fn known_spectrum_is_recovered() {
        // Eigenvalues of [[2, 1], [1, 2]] are 3 and 1 with eigenvectors
        // (1, 1)/sqrt(2) and (1, -1)/sqrt(2) up to sign.
        let x = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let dec = eigh_sorted(&x).unwrap();
        assert!((dec.lambda[0] - 3.0).abs() < 1e-14);
        assert!((dec.lambda[1] - 1.0).abs() < 1e-14);
        let inv = 1.0 / 2.0f64.sqrt();
        assert!((dec.u[(0, 0)] - inv).abs() < 1e-14);
        assert!((dec.u[(1, 0)] - inv).abs() < 1e-14);
        // Sign rule: first of the two tied magnitudes is made positive.
        assert!((dec.u[(0, 1)] - inv).abs() < 1e-14);
        assert!((dec.u[(1, 1)] + inv).abs() < 1e-14);
    }

    #[test]
    fn diagonal_matrix_is_sorted_not_permuted() {
        let x = Mat::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 5.0, 0.0],
            vec![0.0, 0.0, 3.0],
        ])
        .unwrap();
        let dec = eigh_sorted(&x).unwrap();
        assert_eq!(dec.lambda, vec![5.0, 3.0, 1.0]);
        assert_eq!(dec.u[(1, 0)], 1.0);
        assert_eq!(dec.u[(2, 1)], 1.0);
        assert_eq!(dec.u[(0, 2)], 1.0);
    }

    #[test]
    fn asymmetric_and_non_finite_inputs_are_rejected() {
        let x = Mat::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(eigh_sorted(&x), Err(Error::Domain(_))));
        let x = Mat::from_rows(&[vec![f64::NAN, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(eigh_sorted(&x), Err(Error::Domain(_))));
        let x = Mat::zeros(2, 3);
        assert!(matches!(eigh_sorted(&x), Err(Error::Usage(_))));
    }

    /// Deterministic pseudo-random symmetric test matrices.
    fn random_symmetric(n: usize, seed: u64) -> Mat {
        let stream = crate::rng::GaussianStream::new(seed);
        let mut x = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = stream.normal(i as u64, j as u64);
                x[(i, j)] = v;
                x[(j, i)] = v;
            }
        }
        x
    }

    #[test]
    fn reconstruction_orthogonality_and_trace_hold() {
        for (n, seed) in [(1, 1), (2, 2), (5, 3), (20, 4), (40, 5)] {
            let x = random_symmetric(n, seed);
            let dec = eigh_sorted(&x).unwrap();
            let norm = x.frobenius().max(1.0);

            // Descending order.
            for w in dec.lambda.windows(2) {
                assert!(w[0] >= w[1], "eigenvalues out of order at n = {n}");
            }
            // Trace preservation.
            let trace: f64 = (0..n).map(|i| x[(i, i)]).sum();
            let sum: f64 = dec.lambda.iter().sum();
            assert!((trace - sum).abs() <= 1e-12 * norm, "trace mismatch at n = {n}");

            // U diag(lambda) U^T reconstructs X.
            let mut recon = Mat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += dec.u[(i, k)] * dec.lambda[k] * dec.u[(j, k)];
                    }
                    recon[(i, j)] = s;
                }
            }
            let mut err: f64 = 0.0;
            let mut orth: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    err = err.max((recon[(i, j)] - x[(i, j)]).abs());
                    let mut dot = 0.0;
                    for k in 0..n {
                        dot += dec.u[(k, i)] * dec.u[(k, j)];
                    }
                    let want = if i == j { 1.0 } else { 0.0 };
                    orth = orth.max((dot - want).abs());
                }
            }
            assert!(err <= 1e-10 * norm, "reconstruction error {err} at n = {n}");
            assert!(orth <= 1e-12, "orthogonality error {orth} at n = {n}");
        }
    }

    #[test]
    fn gram_spectrum_matches_singular_values() {
        // N = diag(2, 1) embedded in a 3 x 2 matrix: X = N^T N = diag(4, 1).
        let nmat = Mat::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let snap = build_wishart(&nmat, Scale::Unscaled).unwrap();
        let dec = eigh_sorted(&snap.matrix).unwrap();
        assert!((dec.lambda[0] - 4.0).abs() < 1e-14);
        assert!((dec.lambda[1] - 1.0).abs() < 1e-14);
        let scaled = build_wishart(&nmat, Scale::Scaled).unwrap();
        assert!((scaled.matrix[(0, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn matrix_path_layout_offsets_and_validation() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let offsets = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let path = sample_matrix_fbm(3, 2, grid, h(0.7), FbmMethod::Cholesky, 5, Some(&offsets))
            .unwrap();
        // Paths start at the offset.
        let m0 = path.matrix_at(0);
        for k in 0..3 {
            for hh in 0..2 {
                assert_eq!(m0[(k, hh)], offsets[(k, hh)]);
            }
        }
        // Entry paths match the per-stream scalar sampler plus the offset.
        let sampler = FbmSampler::new(grid, h(0.7), FbmMethod::Cholesky).unwrap();
        let want = sampler.sample(5, 3); // stream id of entry (1, 1) is 1*2+1
        for (a, b) in path.entry_path(1, 1).iter().zip(&want.values) {
            assert!((a - (b + 4.0)).abs() < 1e-15);
        }
        // p < n is rejected; wrong offset shape is rejected.
        assert!(sample_matrix_fbm(1, 2, grid, h(0.7), FbmMethod::Cholesky, 5, None).is_err());
        assert!(
            sample_matrix_fbm(3, 2, grid, h(0.7), FbmMethod::Cholesky, 5, Some(&Mat::zeros(2, 2)))
                .is_err()
        );
    }

    #[test]
    fn spectrum_path_is_psd_interlaced_and_starts_at_zero() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let path = sample_matrix_fbm(5, 3, grid, h(0.75), FbmMethod::Circulant, 8, None).unwrap();
        let spectrum = spectrum_path(&path, Scale::Unscaled, false).unwrap();
        assert_eq!(spectrum.row(0), &[0.0, 0.0, 0.0]);
        for k in 1..spectrum.times() {
            let row = spectrum.row(k);
            let top = row[0];
            for w in row.windows(2) {
                assert!(w[0] >= w[1]);
            }
            assert!(
                row[2] >= -1e-10 * top.max(1.0),
                "negative eigenvalue {} at time {k}",
                row[2]
            );
        }
        // Scaled variant divides each eigenvalue by n.
        let scaled = spectrum_path(&path, Scale::Scaled, false).unwrap();
        for k in 0..spectrum.times() {
            for (a, b) in scaled.row(k).iter().zip(spectrum.row(k)) {
                assert!((a * 3.0 - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn frames_are_kept_on_request() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let path = sample_matrix_fbm(4, 2, grid, h(0.6), FbmMethod::Cholesky, 3, None).unwrap();
        let spectrum = spectrum_path(&path, Scale::Unscaled, true).unwrap();
        let frames = spectrum.frames.as_ref().expect("frames requested");
        assert_eq!(frames.len(), 3);
        for (k, frame) in frames.iter().enumerate() {
            assert_eq!(frame.lambda, spectrum.row(k));
        }
        assert!(spectrum_path(&path, Scale::Unscaled, false)
            .unwrap()
            .frames
            .is_none());
    }
}

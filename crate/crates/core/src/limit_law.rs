//! The limiting spectral law of scaled fractional Wishart matrices and its
//! analytic characterizations.
//!
//! For dimension ratio c = p/n the empirical spectral measure of X(t)/n
//! converges to a fractional dilation of the Marchenko-Pastur law: the
//! push-forward of the MP law under x -> t^{2H} x. This module evaluates the
//! dilated family (density, CDF, quantile, moments, sampling), its
//! Cauchy-Stieltjes transform in closed form,
//!
//! ```text
//! G(t, z) = [ -(z + (1-c) t^{2H}) + sqrt((z - (1+c) t^{2H})^2 - 4c t^{4H}) ]
//!           / (2 z t^{2H}) ,
//! ```
//!
//! with the square-root branch chosen pointwise so Im G > 0 on the upper
//! half-plane (the branch points then sit exactly at the support edges
//! (1 ± sqrt(c))^2 t^{2H}), and the two dynamic characterizations of the
//! family: a first-order PDE in (t, z) and a double-integral evolution
//! equation, both checked as numerical residuals.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::Hurst;
use crate::quad::{integrate, integrate_edge_mapped};
use crate::rng::GaussianStream;

/// Dimension-ratio parameter of a Marchenko-Pastur law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MpParams {
    c: f64,
}

impl TryFrom<f64> for MpParams {
    type Error = Error;
    fn try_from(c: f64) -> Result<Self> {
        Self::new(c)
    }
}

impl From<MpParams> for f64 {
    fn from(p: MpParams) -> f64 {
        p.c
    }
}

impl MpParams {
    pub fn new(c: f64) -> Result<Self> {
        if c.is_finite() && c > 0.0 {
            Ok(Self { c })
        } else {
            Err(Error::Domain(format!(
                "dimension ratio must be positive and finite, got {c}"
            )))
        }
    }

    #[inline]
    pub fn ratio(self) -> f64 {
        self.c
    }

    /// Support edges (1 -+ sqrt(c))^2 of the continuous part.
    pub fn edges(self) -> (f64, f64) {
        let r = self.c.sqrt();
        ((1.0 - r) * (1.0 - r), (1.0 + r) * (1.0 + r))
    }

    /// Mass of the atom at zero: max(0, 1 - c).
    pub fn atom(self) -> f64 {
        (1.0 - self.c).max(0.0)
    }

    /// Mass of the continuous part: min(1, c).
    pub fn continuous_mass(self) -> f64 {
        self.c.min(1.0)
    }

    /// CDF of the continuous part alone, in closed form (an antiderivative of
    /// the density), increasing from 0 at the lower edge to min(1, c) at the
    /// upper edge.
    fn continuous_cdf(self, x: f64) -> f64 {
        let (a, b) = self.edges();
        if x <= a {
            return 0.0;
        }
        if x >= b {
            return self.continuous_mass();
        }
        let r = ((x - a) * (b - x)).sqrt();
        let u = ((2.0 * x - a - b) / (b - a)).clamp(-1.0, 1.0);
        let mut acc = r + 0.5 * (a + b) * (u.asin() + std::f64::consts::FRAC_PI_2);
        let root_ab = (a * b).sqrt();
        if root_ab > 0.0 {
            let v = (((a + b) * x - 2.0 * a * b) / ((b - a) * x)).clamp(-1.0, 1.0);
            acc -= root_ab * (v.asin() + std::f64::consts::FRAC_PI_2);
        }
        (acc / (2.0 * std::f64::consts::PI)).clamp(0.0, self.continuous_mass())
    }
}

/// Density of the Marchenko-Pastur law at `x` (the continuous part; the
/// possible atom at zero carries the remaining mass 1 - min(1, c)).
pub fn mp_density(params: MpParams, x: f64) -> f64 {
    let (a, b) = params.edges();
    if x <= a || x >= b {
        return 0.0;
    }
    ((x - a) * (b - x)).sqrt() / (2.0 * std::f64::consts::PI * x)
}

/// Absolute tolerance of the quantile bisection.
const QUANTILE_TOL: f64 = 1e-10;
/// Absolute tolerance for moment quadratures.
const MOMENT_TOL: f64 = 1e-10;

/// The Marchenko-Pastur law dilated by the time factor t^{2H}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DilatedMp {
    pub params: MpParams,
    pub hurst: Hurst,
    pub t: f64,
}

impl DilatedMp {
    pub fn new(params: MpParams, hurst: Hurst, t: f64) -> Result<Self> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Domain(format!(
                "dilation time must be non-negative and finite, got {t}"
            )));
        }
        Ok(Self { params, hurst, t })
    }

    /// The dilation factor t^{2H}; zero collapses the law to a point mass.
    #[inline]
    pub fn dilation(&self) -> f64 {
        self.t.powf(2.0 * self.hurst.value())
    }

    /// Mass of the atom at zero.
    #[inline]
    pub fn atom(&self) -> f64 {
        self.params.atom()
    }

    /// Support edges of the continuous part.
    pub fn edges(&self) -> (f64, f64) {
        let (a, b) = self.params.edges();
        let tau = self.dilation();
        (a * tau, b * tau)
    }

    fn require_positive_time(&self, what: &str) -> Result<f64> {
        if self.t > 0.0 {
            Ok(self.dilation())
        } else {
            Err(Error::Domain(format!(
                "{what} requires t > 0; at t = 0 the law is the point mass at zero"
            )))
        }
    }

    /// Density of the continuous part at `x`.
    pub fn density(&self, x: f64) -> Result<f64> {
        let tau = self.require_positive_time("density")?;
        Ok(mp_density(self.params, x / tau) / tau)
    }

    /// Right-continuous CDF, including the atom at zero.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if self.t == 0.0 {
            return 1.0;
        }
        let tau = self.dilation();
        (self.params.atom() + self.params.continuous_cdf(x / tau)).min(1.0)
    }

    /// Left limit of the CDF at `x` (differs from `cdf` only at the atom).
    pub fn cdf_left(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.cdf(x)
        }
    }

    /// Generalized inverse of the CDF, by bisection on the closed-form CDF.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Domain(format!(
                "quantile level must lie in [0, 1], got {q}"
            )));
        }
        self.require_positive_time("quantile")?;
        if q <= self.params.atom() {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = self.edges();
        let tol = QUANTILE_TOL * hi.max(1.0);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) >= q {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// k-th moment, by adaptive quadrature over the continuous part plus the
    /// atom contribution (only the zeroth moment sees the atom).
    pub fn moment(&self, k: u32) -> Result<f64> {
        if self.t == 0.0 {
            return Ok(if k == 0 { 1.0 } else { 0.0 });
        }
        let (lo, hi) = self.edges();
        let est = integrate_edge_mapped(
            |x| x.powi(k as i32) * self.density(x).expect("t > 0 checked above"),
            lo,
            hi,
            MOMENT_TOL,
        )?;
        let atom_part = if k == 0 { self.params.atom() } else { 0.0 };
        Ok(atom_part + est.value)
    }

    /// Deterministic inverse-CDF sample of `count` draws keyed by `seed`.
    pub fn sample(&self, seed: u64, count: usize) -> Result<Vec<f64>> {
        if self.t == 0.0 {
            return Ok(vec![0.0; count]);
        }
        let stream = GaussianStream::new(seed);
        (0..count)
            .map(|i| self.quantile(stream.uniform(0, i as u64)))
            .collect()
    }

    /// Closed-form Cauchy-Stieltjes transform at `z` in the upper half-plane.
    pub fn cauchy_transform(&self, z: Complex64) -> Result<Complex64> {
        cauchy_transform(self.params, self.hurst, self.t, z)
    }
}

/// Transform of the t = 0 law (the point mass at zero): -1/z.
pub fn initial_transform(z: Complex64) -> Complex64 {
    -z.finv()
}

fn require_upper_half(z: Complex64) -> Result<()> {
    if z.im > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "transform requires Im z > 0, got z = {z}"
        )))
    }
}

/// Cauchy-Stieltjes transform of the dilated law, with the square-root branch
/// picked pointwise so that Im G > 0.
pub fn cauchy_transform(params: MpParams, hurst: Hurst, t: f64, z: Complex64) -> Result<Complex64> {
    require_upper_half(z)?;
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Domain(format!(
            "transform requires t > 0 (the t = 0 limit is -1/z), got t = {t}"
        )));
    }
    let c = params.ratio();
    let tau = t.powf(2.0 * hurst.value());
    let shifted = z - (1.0 + c) * tau;
    let root = (shifted * shifted - 4.0 * c * tau * tau).sqrt();
    let base = -(z + (1.0 - c) * tau);
    let denom = 2.0 * z * tau;
    let plus = (base + root) / denom;
    if plus.im > 0.0 {
        return Ok(plus);
    }
    let minus = (base - root) / denom;
    if minus.im > 0.0 {
        return Ok(minus);
    }
    Err(Error::Numerical(format!(
        "no Herglotz branch at z = {z}, t = {t}: candidates {plus} and {minus}"
    )))
}

/// Residual of the transform's evolution PDE at one point, using central
/// differences with steps `h_t` (time) and `h_z` (real direction in z):
///
/// ```text
/// d_t G - 2H [ G^2 + (1 - c + 2 z G) d_z G ] t^{2H-1} .
/// ```
pub fn pde_residual(
    params: MpParams,
    hurst: Hurst,
    t: f64,
    z: Complex64,
    h_t: f64,
    h_z: f64,
) -> Result<Complex64> {
    require_upper_half(z)?;
    if !(h_t > 0.0 && h_z > 0.0) {
        return Err(Error::Usage(format!(
            "difference steps must be positive, got h_t = {h_t}, h_z = {h_z}"
        )));
    }
    if t - h_t <= 0.0 {
        return Err(Error::Usage(format!(
            "time stencil leaves the domain: t - h_t = {} <= 0",
            t - h_t
        )));
    }
    if z.im <= 2.0 * h_z {
        return Err(Error::Usage(format!(
            "Im z = {} too close to the real axis for step h_z = {h_z}",
            z.im
        )));
    }
    let g = cauchy_transform(params, hurst, t, z)?;
    let dt = (cauchy_transform(params, hurst, t + h_t, z)?
        - cauchy_transform(params, hurst, t - h_t, z)?)
        / (2.0 * h_t);
    let dz = (cauchy_transform(params, hurst, t, z + h_z)?
        - cauchy_transform(params, hurst, t, z - h_z)?)
        / (2.0 * h_z);
    let h = hurst.value();
    let c = params.ratio();
    let bracket = g * g + (Complex64::new(1.0 - c, 0.0) + 2.0 * z * g) * dz;
    Ok(dt - 2.0 * h * bracket * t.powf(2.0 * h - 1.0))
}

/// The symmetric two-point kernel of the evolution equation,
/// (1/(y-z)^2 - 1/(x-z)^2) (x+y)/(x-y), extended continuously across the
/// diagonal where its value is 4x/(x-z)^3.
pub fn cst_kernel(x: f64, y: f64, z: Complex64) -> Complex64 {
    let scale = x.abs().max(y.abs()).max(1.0);
    if (x - y).abs() > 1e-7 * scale {
        let phi_x = ((x - z) * (x - z)).finv();
        let phi_y = ((y - z) * (y - z)).finv();
        (phi_y - phi_x) * ((x + y) / (x - y))
    } else {
        // Difference quotient of phi(w) = (w-z)^{-2} expanded at the
        // midpoint: phi'(m) + phi'''(m) (y-x)^2 / 24, with the (x+y) factor.
        let m = 0.5 * (x + y);
        let w = m - z;
        let w3 = w * w * w;
        let d1 = -2.0 * w3.finv();
        let d3 = -24.0 * (w3 * w * w).finv();
        -(x + y) * (d1 + d3 * (y - x) * (y - x) / 24.0)
    }
}

/// Tolerances of the three nested quadrature levels in [`cst_residual`].
const CST_TOL_OUTER: f64 = 1e-6;
const CST_TOL_MID: f64 = 1e-7;
const CST_TOL_INNER: f64 = 1e-8;

/// Residual of the integral evolution equation for the transform:
///
/// ```text
/// G_t(z) - [ -1/z
///   + H  int_0^t iint K(x, y; z) mu_s(dx) mu_s(dy) s^{2H-1} ds
///   - 2Hc int_0^t int (x-z)^{-2} mu_s(dx) s^{2H-1} ds ] ,
/// ```
///
/// where K is [`cst_kernel`] and mu_s is the dilated law at time s. The time
/// integrals are evaluated after the substitution u = s^{2H}, which makes the
/// integrands smooth down to u = 0.
pub fn cst_residual(params: MpParams, hurst: Hurst, t: f64, z: Complex64) -> Result<Complex64> {
    require_upper_half(z)?;
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Domain(format!(
            "integral-equation residual requires t > 0, got {t}"
        )));
    }
    let c = params.ratio();
    let atom = params.atom();
    let (a, b) = params.edges();
    let z_sq_inv = (z * z).finv();

    // Integrals against the fixed continuous part nu_c via x = u * x'.
    let nu_density = |x: f64| mp_density(params, x);
    let pair_integral = |u: f64| -> Result<Complex64> {
        let est = integrate_edge_mapped(
            |x: f64| {
                let inner = integrate_edge_mapped(
                    |y: f64| cst_kernel(u * x, u * y, z) * nu_density(y),
                    a,
                    b,
                    CST_TOL_INNER,
                )
                .expect("inner kernel integral is smooth on the mapped interval");
                inner.value.scale(nu_density(x))
            },
            a,
            b,
            CST_TOL_MID,
        )?;
        Ok(est.value)
    };
    let resolvent_sq_integral = |u: f64| -> Result<Complex64> {
        let est = integrate_edge_mapped(
            |x: f64| {
                let w = u * x - z;
                (w * w).finv().scale(nu_density(x))
            },
            a,
            b,
            CST_TOL_INNER,
        )?;
        Ok(est.value)
    };

    // Combined outer integrand in u = s^{2H}:
    //   H iint K s^{2H-1} ds  -> (1/2) int A(u) du
    //   2Hc int (x-z)^{-2} s^{2H-1} ds -> c int B(u) du.
    let tau = t.powf(2.0 * hurst.value());
    let outer = integrate(
        |u: f64| {
            let mut a_u = pair_integral(u).expect("pair integral converges");
            if atom > 0.0 {
                let cross = integrate_edge_mapped(
                    |x: f64| {
                        let w = u * x - z;
                        (z_sq_inv - (w * w).finv()).scale(nu_density(x))
                    },
                    a,
                    b,
                    CST_TOL_INNER,
                )
                .expect("atom cross term converges");
                a_u += 2.0 * atom * cross.value;
            }
            let mut b_u = resolvent_sq_integral(u).expect("resolvent integral converges");
            b_u += atom * z_sq_inv;
            0.5 * a_u - c * b_u
        },
        0.0,
        tau,
        CST_TOL_OUTER,
    )?;

    let rhs = initial_transform(z) + outer.value;
    Ok(cauchy_transform(params, hurst, t, z)? - rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> Hurst {
        Hurst::new(v).unwrap()
    }

    fn law(c: f64, hv: f64, t: f64) -> DilatedMp {
        DilatedMp::new(MpParams::new(c).unwrap(), h(hv), t).unwrap()
    }

    #[test]
    fn density_integrates_to_continuous_mass() {
        for c in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let params = MpParams::new(c).unwrap();
            let (a, b) = params.edges();
            let mass = integrate_edge_mapped(|x| mp_density(params, x), a, b, 1e-12)
                .unwrap()
                .value;
            assert!(
                (mass - c.min(1.0)).abs() <= 1e-8,
                "mass {mass} for c = {c}"
            );
            assert_eq!(mp_density(params, a - 0.1), 0.0);
            assert_eq!(mp_density(params, b + 0.1), 0.0);
        }
    }

    #[test]
    fn closed_form_cdf_matches_quadrature() {
        for c in [0.3, 1.0, 2.5] {
            let params = MpParams::new(c).unwrap();
            let (a, b) = params.edges();
            for frac in [0.1, 0.35, 0.5, 0.82, 0.99] {
                let x = a + frac * (b - a);
                let by_quad = integrate_edge_mapped(|y| mp_density(params, y), a, x, 1e-12)
                    .unwrap()
                    .value;
                let closed = params.continuous_cdf(x);
                assert!(
                    (by_quad - closed).abs() <= 1e-8,
                    "cdf mismatch at c = {c}, x = {x}: {closed} vs {by_quad}"
                );
            }
        }
    }

    #[test]
    fn dilated_geometry_and_atom() {
        let d = law(0.5, 0.75, 2.0);
        let tau = 2.0f64.powf(1.5);
        let (lo, hi) = d.edges();
        let r = 0.5f64.sqrt();
        assert!((lo - (1.0 - r) * (1.0 - r) * tau).abs() < 1e-14);
        assert!((hi - (1.0 + r) * (1.0 + r) * tau).abs() < 1e-14);
        assert!((d.atom() - 0.5).abs() < 1e-15);
        assert_eq!(law(2.0, 0.75, 1.0).atom(), 0.0);
        // CDF at 0 carries the atom; left limit does not.
        assert!((d.cdf(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(d.cdf_left(0.0), 0.0);
        assert_eq!(d.cdf(-1.0), 0.0);
        assert!((d.cdf(hi + 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_time_is_point_mass() {
        let d = law(2.0, 0.8, 0.0);
        assert_eq!(d.cdf(0.0), 1.0);
        assert_eq!(d.cdf_left(0.5), 1.0);
        assert_eq!(d.cdf(-1e-9), 0.0);
        assert!(d.density(0.5).is_err());
        assert!(d.quantile(0.5).is_err());
        assert_eq!(d.moment(0).unwrap(), 1.0);
        assert_eq!(d.moment(2).unwrap(), 0.0);
        assert_eq!(d.sample(1, 3).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn moments_match_free_poisson_values() {
        // First and second moments of the MP law are c and c + c^2; dilation
        // by tau multiplies the k-th moment by tau^k.
        for (c, hv, t) in [(0.25, 0.6, 1.0), (2.0, 0.75, 0.5), (1.0, 0.9, 2.0)] {
            let d = law(c, hv, t);
            let tau = d.dilation();
            assert!((d.moment(0).unwrap() - 1.0).abs() <= 1e-8);
            let m1 = d.moment(1).unwrap();
            assert!(
                (m1 - c * tau).abs() <= 1e-8 * (c * tau).max(1.0),
                "m1 = {m1} for c = {c}"
            );
            let m2 = d.moment(2).unwrap();
            let want = (c + c * c) * tau * tau;
            assert!(
                (m2 - want).abs() <= 1e-8 * want.max(1.0),
                "m2 = {m2}, want {want}"
            );
        }
    }

    #[test]
    fn quantile_inverts_cdf_and_short_circuits_the_atom() {
        let d = law(0.5, 0.75, 1.5);
        // Below the atom mass the quantile sits exactly at zero.
        assert_eq!(d.quantile(0.3).unwrap(), 0.0);
        assert_eq!(d.quantile(0.5).unwrap(), 0.0);
        for q in [0.55, 0.7, 0.9, 0.99] {
            let x = d.quantile(q).unwrap();
            assert!(
                (d.cdf(x) - q).abs() <= 1e-8,
                "cdf(quantile({q})) = {}",
                d.cdf(x)
            );
        }
        let heavy = law(3.0, 0.6, 1.0);
        let mut prev = 0.0;
        for i in 1..40 {
            let q = i as f64 / 40.0;
            let x = heavy.quantile(q).unwrap();
            assert!(x >= prev, "quantile not monotone at q = {q}");
            prev = x;
        }
        assert!(d.quantile(-0.1).is_err());
        assert!(d.quantile(1.5).is_err());
    }

    #[test]
    fn samples_follow_the_law() {
        let d = law(2.0, 0.75, 1.0);
        let xs = d.sample(7, 20_000).unwrap();
        let mean: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 2.0).abs() < 0.05, "sample mean {mean}");
        let (lo, hi) = d.edges();
        assert!(xs.iter().all(|&x| x >= lo - 1e-9 && x <= hi + 1e-9));
        // Determinism.
        assert_eq!(xs, d.sample(7, 20_000).unwrap());
    }

    fn transform_by_quadrature(d: &DilatedMp, z: Complex64) -> Complex64 {
        let (lo, hi) = d.edges();
        let est = integrate_edge_mapped(
            |x| Complex64::new(d.density(x).unwrap(), 0.0) / (x - z),
            lo,
            hi,
            1e-12,
        )
        .unwrap();
        est.value + d.atom() * initial_transform(z)
    }

    #[test]
    fn transform_agrees_with_density_quadrature() {
        for (c, hv, t) in [(0.5, 0.6, 0.5), (1.0, 0.75, 1.0), (2.0, 0.9, 2.0)] {
            let d = law(c, hv, t);
            for z in [
                Complex64::new(0.0, 1.0),
                Complex64::new(1.5, 0.5),
                Complex64::new(-2.0, 2.0),
            ] {
                let closed = d.cauchy_transform(z).unwrap();
                let quad = transform_by_quadrature(&d, z);
                assert!(
                    (closed - quad).norm() <= 1e-8,
                    "transform mismatch at c={c}, H={hv}, t={t}, z={z}: {closed} vs {quad}"
                );
            }
        }
    }

    #[test]
    fn transform_reference_point() {
        // Independently computed via density quadrature: c = 1, t = 1, z = i.
        let d = law(1.0, 0.75, 1.0);
        let g = d.cauchy_transform(Complex64::new(0.0, 1.0)).unwrap();
        let want = Complex64::new(0.30028, 0.62481);
        assert!((g - want).norm() <= 1e-4, "G(i) = {g}");
    }

    #[test]
    fn transform_is_herglotz_and_normalized() {
        let stream = GaussianStream::new(31);
        let mut idx = 0;
        for c in [0.25, 0.5, 1.0, 2.0, 4.0] {
            for hv in [0.55, 0.75, 0.9] {
                for t in [0.5, 1.0, 2.0] {
                    let d = law(c, hv, t);
                    for _ in 0..5 {
                        let re = 20.0 * stream.uniform(0, idx) - 5.0;
                        let im = 4.9 * stream.uniform(1, idx) + 0.1;
                        idx += 1;
                        let z = Complex64::new(re, im);
                        let g = d.cauchy_transform(z).unwrap();
                        assert!(
                            g.im > 0.0,
                            "Im G <= 0 at c={c}, H={hv}, t={t}, z={z}: {g}"
                        );
                    }
                    // -z G(z) -> 1 along the imaginary axis.
                    let z = Complex64::new(0.0, 1e6);
                    let g = d.cauchy_transform(z).unwrap();
                    let norm = (-z * g - 1.0).norm();
                    assert!(norm <= 1e-3, "normalization defect {norm} at c={c}");
                }
            }
        }
    }

    #[test]
    fn transform_factorizes_through_the_dilation() {
        // G_{c,H}(t, z) = tau^{-1} G_{c}(z / tau) with tau = t^{2H}; the
        // right side is the same closed form evaluated at t = 1, H = 1/2.
        for (c, hv, t) in [(0.5, 0.8, 0.7), (2.0, 0.65, 1.9), (1.0, 0.9, 0.3)] {
            let d = law(c, hv, t);
            let base = law(c, 0.5, 1.0);
            let tau = d.dilation();
            for z in [Complex64::new(0.5, 0.8), Complex64::new(-1.0, 2.0)] {
                let direct = d.cauchy_transform(z).unwrap();
                let factored = base.cauchy_transform(z / tau).unwrap() / tau;
                assert!(
                    (direct - factored).norm() <= 1e-12,
                    "factorization fails at c={c}, H={hv}, t={t}, z={z}"
                );
            }
        }
    }

    #[test]
    fn transform_inverts_to_the_density() {
        // Stieltjes inversion: (1/pi) Im G(x + i eps) approaches the density
        // as eps -> 0.
        let eps = 1e-6;
        for (c, hv, t) in [(0.5, 0.75, 1.0), (2.0, 0.6, 1.5)] {
            let d = law(c, hv, t);
            let (lo, hi) = d.edges();
            for frac in [0.15, 0.4, 0.6, 0.85] {
                let x = lo + frac * (hi - lo);
                let g = d.cauchy_transform(Complex64::new(x, eps)).unwrap();
                let recovered = g.im / std::f64::consts::PI;
                let want = d.density(x).unwrap();
                assert!(
                    (recovered - want).abs() <= 1e-4,
                    "inversion off at c={c}, t={t}, x={x}: {recovered} vs {want}"
                );
            }
        }
    }

    #[test]
    fn transform_rejects_bad_arguments() {
        let d = law(1.0, 0.75, 1.0);
        assert!(d.cauchy_transform(Complex64::new(1.0, 0.0)).is_err());
        assert!(d.cauchy_transform(Complex64::new(1.0, -1.0)).is_err());
        assert!(cauchy_transform(d.params, d.hurst, 0.0, Complex64::new(0.0, 1.0)).is_err());
        let z = Complex64::new(0.0, 2.0);
        assert_eq!(initial_transform(z), Complex64::new(0.0, 0.5));
    }

    #[test]
    fn pde_residual_is_small_at_spot_checks() {
        for (c, hv, t) in [(1.0, 0.75, 1.0), (2.0, 0.9, 0.5), (0.5, 0.5, 2.0)] {
            let params = MpParams::new(c).unwrap();
            for z in [Complex64::new(1.0, 1.0), Complex64::new(-0.5, 0.5)] {
                let r = pde_residual(params, h(hv), t, z, 1e-4, 1e-4).unwrap();
                assert!(
                    r.norm() <= 1e-5,
                    "pde residual {} at c={c}, H={hv}, t={t}, z={z}",
                    r.norm()
                );
            }
        }
    }

    #[test]
    fn pde_residual_checks_stencil_domain() {
        let params = MpParams::new(1.0).unwrap();
        let z = Complex64::new(0.0, 1.0);
        assert!(pde_residual(params, h(0.75), 1e-5, z, 1e-4, 1e-4).is_err());
        let low = Complex64::new(0.0, 1e-5);
        assert!(pde_residual(params, h(0.75), 1.0, low, 1e-4, 1e-4).is_err());
        assert!(pde_residual(params, h(0.75), 1.0, z, 0.0, 1e-4).is_err());
    }

    #[test]
    fn kernel_is_symmetric_and_has_the_diagonal_limit() {
        let z = Complex64::new(0.7, 0.9);
        for (x, y) in [(0.5, 2.0), (1.0, 1.5), (3.0, 0.1)] {
            let k = cst_kernel(x, y, z);
            let k_swapped = cst_kernel(y, x, z);
            assert!((k - k_swapped).norm() < 1e-13, "kernel asymmetry at ({x},{y})");
        }
        for x in [0.3, 1.0, 2.7] {
            let limit = 4.0 * x * (((x - z) * (x - z) * (x - z)).finv());
            let exact_diag = cst_kernel(x, x, z);
            assert!(
                (exact_diag - limit).norm() <= 1e-12 * limit.norm(),
                "diagonal value mismatch at x = {x}"
            );
            let near = cst_kernel(x, x + 1e-6, z);
            assert!(
                (near - limit).norm() <= 1e-4 * limit.norm(),
                "near-diagonal kernel {near} vs limit {limit} at x = {x}"
            );
        }
    }

    #[test]
    fn integral_equation_residual_vanishes() {
        // One spot check of the full nested quadrature; the acceptance suite
        // covers the full grid.
        let r = cst_residual(
            MpParams::new(2.0).unwrap(),
            h(0.8),
            0.5,
            Complex64::new(0.0, 1.0),
        )
        .unwrap();
        assert!(r.norm() <= 1e-4, "integral equation residual {}", r.norm());
        // As t -> 0 both sides approach -1/z.
        let small = cst_residual(
            MpParams::new(1.0).unwrap(),
            h(0.8),
            1e-3,
            Complex64::new(0.0, 1.0),
        )
        .unwrap();
        assert!(small.norm() <= 1e-6, "small-time residual {}", small.norm());
    }
}

//! Deterministic, order-independent random variate generation.
//!
//! Every variate is a pure function of a `(seed, stream, index)` triple: a
//! 64-bit avalanche mixer turns the triple into a uniform in (0, 1), and the
//! normal quantile function maps that uniform to a Gaussian. Because there is
//! no sequential generator state, parallel workers can draw the same numbers
//! in any order and still reproduce a serial run bit for bit.

const ROUND1: u64 = 0xa076_1d64_78bd_642f;
const ROUND2: u64 = 0xe703_7ed1_a0b4_28db;
const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// 64-bit finalizer with full avalanche; bijective on `u64`.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the child seed for one replica of an ensemble.
///
/// `replica -> child_seed` composes a multiplication by an odd constant, an
/// XOR with fixed words, and the bijective mixer, so it is injective over the
/// whole `u64` range of replica indices.
pub fn child_seed(master: u64, replica: u64) -> u64 {
    mix(master ^ GOLDEN ^ replica.wrapping_mul(ROUND1))
}

/// A keyed counter-based stream of uniform and Gaussian variates.
#[derive(Clone, Copy, Debug)]
pub struct GaussianStream {
    seed: u64,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Uniform variate in the open interval (0, 1) for `(stream, index)`.
    #[inline]
    pub fn uniform(&self, stream: u64, index: u64) -> f64 {
        let mut z = self.seed;
        z = mix(z ^ ROUND1 ^ stream.wrapping_mul(GOLDEN));
        z = mix(z ^ ROUND2 ^ index.wrapping_mul(GOLDEN));
        // Keep 53 bits and offset by half an ulp so 0 and 1 are unreachable.
        ((z >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal variate for `(stream, index)`.
    #[inline]
    pub fn normal(&self, stream: u64, index: u64) -> f64 {
        normal_quantile(self.uniform(stream, index))
    }
}

/// Quantile function of the standard normal distribution.
///
/// Rational minimax approximations on three regions (Wichura's PPND16
/// scheme), accurate to about 1e-15 for p in (0, 1). Outside (0, 1) the
/// result is NaN; exact 0 and 1 map to -inf/+inf.
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || p < 0.0 || p > 1.0 {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&CENTRAL_NUM, r) / poly(&CENTRAL_DEN, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        poly(&TAIL_NUM, r) / poly(&TAIL_DEN, r)
    } else {
        r -= 5.0;
        poly(&FAR_TAIL_NUM, r) / poly(&FAR_TAIL_DEN, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

#[inline]
fn poly(coeffs: &[f64; 8], x: f64) -> f64 {
    // Highest-degree coefficient first.
    let mut acc = coeffs[0];
    for &c in &coeffs[1..] {
        acc = acc * x + c;
    }
    acc
}

const CENTRAL_NUM: [f64; 8] = [
    2.509_080_928_730_122_6727e3,
    3.343_057_558_358_812_8105e4,
    6.726_577_092_700_870_0853e4,
    4.592_195_393_154_987_1457e4,
    1.373_169_376_550_946_1125e4,
    1.971_590_950_306_551_4427e3,
    1.331_416_678_917_843_7745e2,
    3.387_132_872_796_366_6080e0,
];
const CENTRAL_DEN: [f64; 8] = [
    5.226_495_278_852_854_5610e3,
    2.872_908_573_572_194_2674e4,
    3.930_789_580_009_271_0610e4,
    2.121_379_430_158_659_5867e4,
    5.394_196_021_424_751_1077e3,
    6.871_870_074_920_579_0830e2,
    4.231_333_070_160_091_1252e1,
    1.0,
];
const TAIL_NUM: [f64; 8] = [
    7.745_450_142_783_414_0764e-4,
    2.272_384_498_926_918_458_33e-2,
    2.417_807_251_774_506_117_7e-1,
    1.270_458_252_452_368_382_58e0,
    3.647_848_324_763_204_605_04e0,
    5.769_497_221_460_691_405_5e0,
    4.630_337_846_156_545_295_9e0,
    1.423_437_110_749_683_577_34e0,
];
const TAIL_DEN: [f64; 8] = [
    1.050_750_071_644_416_843_24e-9,
    5.475_938_084_995_344_946e-4,
    1.519_866_656_361_645_719_66e-2,
    1.481_039_764_274_800_745_9e-1,
    6.897_673_349_851_000_045_5e-1,
    1.676_384_830_183_803_849_4e0,
    2.053_191_626_637_758_821_87e0,
    1.0,
];
const FAR_TAIL_NUM: [f64; 8] = [
    2.010_334_399_292_288_132_65e-7,
    2.711_555_568_743_487_578_15e-5,
    1.242_660_947_388_078_438_6e-3,
    2.653_218_952_657_612_309_3e-2,
    2.965_605_718_285_048_912_3e-1,
    1.784_826_539_917_291_335_8e0,
    5.463_784_911_164_114_369_9e0,
    6.657_904_643_501_103_777_2e0,
];
const FAR_TAIL_DEN: [f64; 8] = [
    2.044_263_103_389_939_785_64e-15,
    1.421_511_758_316_445_888_7e-7,
    1.846_318_317_510_054_681_8e-5,
    7.868_691_311_456_132_591e-4,
    1.487_536_129_085_061_485_25e-2,
    1.369_298_809_227_358_053_1e-1,
    5.998_322_065_558_879_376_9e-1,
    1.0,
];

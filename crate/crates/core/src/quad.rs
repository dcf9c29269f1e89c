//! Adaptive one-dimensional quadrature built on a 10-point Gauss / 21-point
//! Kronrod pair with global interval refinement: the interval with the
//! largest error estimate is repeatedly bisected until the summed error
//! estimate meets tolerance or the subdivision budget is exhausted.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Tolerances and budgets for the adaptive integrator, plus the clip applied
/// by callers whose integrands end at a singular upper endpoint.
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    /// Absolute error target.
    pub abs_tol: f64,
    /// Relative error target (scaled by the current integral estimate).
    pub rel_tol: f64,
    /// Maximum number of interval bisections.
    pub max_subdivisions: usize,
    /// Distance kept from a singular endpoint, e.g. integrate to 1 - clip.
    pub singular_clip: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            abs_tol: 1e-9,
            rel_tol: 1e-7,
            max_subdivisions: 200,
            singular_clip: 1e-10,
        }
    }
}

/// Integral estimate with its error bound and the work it took.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub subdivisions: usize,
}

// 21-point Kronrod abscissae on [0, 1] (symmetric about 0); odd indices are
// the embedded 10-point Gauss nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(Ordering::Equal)
    }
}

/// Single Gauss-Kronrod pass over [a, b].
fn kronrod_pass<F>(f: &mut F, a: f64, b: f64) -> Result<Segment>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let mut eval = |x: f64| -> Result<f64> {
        let y = f(x)?;
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::domain(format!(
                "integrand returned non-finite value at x = {x}"
            )))
        }
    };

    let fc = eval(center)?;
    let mut resg = 0.0;
    let mut resk = WGK[10] * fc;
    let mut resabs = WGK[10] * fc.abs();
    let mut fv = [0.0f64; 21];
    fv[20] = fc;

    for j in 0..10 {
        let absc = half * XGK[j];
        let f1 = eval(center - absc)?;
        let f2 = eval(center + absc)?;
        fv[j] = f1;
        fv[10 + j] = f2;
        let fsum = f1 + f2;
        resk += WGK[j] * fsum;
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * fsum;
        }
    }

    let reskh = resk * 0.5;
    let mut resasc = WGK[10] * (fc - reskh).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv[j] - reskh).abs() + (fv[10 + j] - reskh).abs());
    }

    let value = resk * half;
    let resabs_scaled = resabs * half.abs();
    let resasc_scaled = resasc * half.abs();
    let mut error = ((resk - resg) * half).abs();
    if resasc_scaled != 0.0 && error != 0.0 {
        error = resasc_scaled * (200.0 * error / resasc_scaled).powf(1.5).min(1.0);
    }
    let tiny = f64::MIN_POSITIVE / (50.0 * f64::EPSILON);
    if resabs_scaled > tiny {
        error = error.max(50.0 * f64::EPSILON * resabs_scaled);
    }

    Ok(Segment { a, b, value, error })
}

/// Integrate a fallible integrand over [a, b].
pub fn integrate_res<F>(mut f: F, a: f64, b: f64, cfg: &QuadConfig) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain("quadrature endpoints must be finite"));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            abs_error: 0.0,
            subdivisions: 0,
        });
    }
    if a > b {
        return Err(Error::domain(format!(
            "quadrature requires a <= b, got [{a}, {b}]"
        )));
    }

    let mut heap = BinaryHeap::new();
    heap.push(kronrod_pass(&mut f, a, b)?);
    let mut frozen_value = 0.0;
    let mut frozen_error = 0.0;
    let mut subdivisions = 0usize;

    loop {
        let live_value: f64 = heap.iter().map(|s| s.value).sum();
        let live_error: f64 = heap.iter().map(|s| s.error).sum();
        let value = frozen_value + live_value;
        let error = frozen_error + live_error;
        let target = cfg.abs_tol.max(cfg.rel_tol * value.abs());

        if error <= target {
            return Ok(QuadResult {
                value,
                abs_error: error,
                subdivisions,
            });
        }
        if subdivisions >= cfg.max_subdivisions || heap.is_empty() {
            return Err(Error::NonIntegrable {
                error,
                subdivisions,
            });
        }

        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval at floating-point resolution; it cannot improve
            frozen_value += worst.value;
            frozen_error += worst.error;
            continue;
        }
        subdivisions += 1;
        heap.push(kronrod_pass(&mut f, worst.a, mid)?);
        heap.push(kronrod_pass(&mut f, mid, worst.b)?);
    }
}

/// Integrate an infallible integrand over [a, b].
pub fn integrate<F>(mut f: F, a: f64, b: f64, cfg: &QuadConfig) -> Result<QuadResult>
where
    F: FnMut(f64) -> f64,
{
    integrate_res(|x| Ok(f(x)), a, b, cfg)
}

//! One-dimensional quadrature: adaptive Gauss–Kronrod (7/15) and fixed
//! Gauss–Legendre rules for cell integrals on grids.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadTol {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for QuadTol {
    fn default() -> Self {
        Self {
            abs: 1e-14,
            rel: 1e-10,
            max_intervals: 2000,
        }
    }
}

impl QuadTol {
    pub fn rel(rel: f64) -> Self {
        Self {
            rel,
            ..Self::default()
        }
    }
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]`, bisecting the
/// interval with the largest error estimate until the total error meets
/// `max(abs, rel * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: QuadTol) -> Result<f64> {
    integrate_with_breaks(f, &[a, b], tol)
}

/// Like [`integrate`] with the initial partition given by `breaks`
/// (sorted, at least two points). Useful when peaks or kinks are known.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: QuadTol) -> Result<f64> {
    assert!(breaks.len() >= 2);
    let mut parts: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(64);
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let (v, e) = gk15(&f, w[0], w[1]);
            parts.push((w[0], w[1], v, e));
        }
    }
    if parts.is_empty() {
        return Ok(0.0);
    }
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(Error::NoConvergence {
                what: "adaptive quadrature (non-finite integrand)",
            });
        }
        if err <= tol.abs.max(tol.rel * total.abs()) {
            return Ok(total);
        }
        if parts.len() >= tol.max_intervals {
            // Accept if the remaining error is at least at round-off scale.
            if err <= 1e-8 * total.abs().max(1e-300) {
                return Ok(total);
            }
            return Err(Error::NoConvergence {
                what: "adaptive quadrature",
            });
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (a, b, _, _) = parts.swap_remove(idx);
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            // Interval collapsed to round-off; keep what we have.
            return Ok(total);
        }
        let (v1, e1) = gk15(&f, a, m);
        let (v2, e2) = gk15(&f, m, b);
        parts.push((a, m, v1, e1));
        parts.push((m, b, v2, e2));
    }
}

/// Integral over `[a, ∞)` through the map `x = a + t / (1 - t)`.
pub fn integrate_to_inf<F: Fn(f64) -> f64>(f: F, a: f64, tol: QuadTol) -> Result<f64> {
    integrate(
        |t: f64| {
            if t >= 1.0 {
                return 0.0;
            }
            let one_m = 1.0 - t;
            let x = a + t / one_m;
            let v = f(x) / (one_m * one_m);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        tol,
    )
}

/// 8-point Gauss–Legendre nodes and weights on [-1, 1].
const GL8_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Fixed 8-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre8<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for i in 0..4 {
        let dx = h * GL8_X[i];
        s += GL8_W[i] * (f(c - dx) + f(c + dx));
    }
    s * h
}

/// Cell integral on `[0, h]` for integrands with an integrable logarithmic
/// or `x^{-1/2}`-type singularity at 0, via `s = h u^2`.
pub fn gauss_legendre8_sqrt_origin<F: Fn(f64) -> f64>(f: F, h: f64) -> f64 {
    // Geometric panels in u resolve the u*ln(u) behaviour near the origin.
    const BREAKS: [f64; 5] = [0.0, 1.0 / 256.0, 1.0 / 32.0, 0.25, 1.0];
    BREAKS
        .windows(2)
        .map(|w| gauss_legendre8(|u| 2.0 * h * u * f(h * u * u), w[0], w[1]))
        .sum()
}

/// Composite Simpson rule over uniformly spaced samples (odd count). Falls
/// back to trapezoid on the last panel when the count is even.
pub fn simpson_samples(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return 0.5 * h * (values[0] + values[1]);
    }
    let (m, tail) = if n % 2 == 1 { (n, 0.0) } else { (n - 1, 0.5 * h * (values[n - 2] + values[n - 1])) };
    let mut s = values[0] + values[m - 1];
    for (i, v) in values.iter().enumerate().take(m - 1).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * h / 3.0 + tail
}

/// Trapezoid rule over uniformly spaced samples.
pub fn trapezoid_samples(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    h * (inner + 0.5 * (values[0] + values[n - 1]))
}

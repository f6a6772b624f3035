//! Numerical inversion of Laplace transforms.

use num_complex::Complex64;
use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InversionMethod {
    GaverStehfest,
    TalbotFixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InversionConfig {
    pub method: InversionMethod,
    pub terms: usize,
    /// Relative agreement required in cross-validation mode is `10^-precision_digits`.
    pub precision_digits: u32,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self::gaver_stehfest(14)
    }
}

impl InversionConfig {
    pub fn gaver_stehfest(terms: usize) -> Self {
        Self {
            method: InversionMethod::GaverStehfest,
            terms,
            precision_digits: 4,
        }
    }

    pub fn talbot(terms: usize) -> Self {
        Self {
            method: InversionMethod::TalbotFixed,
            terms,
            precision_digits: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            InversionMethod::GaverStehfest if self.terms % 2 != 0 || !(8..=20).contains(&self.terms) => Err(
                Error::InvalidConfig(format!("Gaver-Stehfest needs an even term count in [8, 20], got {}", self.terms)),
            ),
            InversionMethod::TalbotFixed if self.terms < 16 => Err(Error::InvalidConfig(format!(
                "fixed Talbot needs at least 16 terms, got {}",
                self.terms
            ))),
            _ => Ok(()),
        }
    }
}

/// A transform that can be evaluated on the real axis and, for the Talbot
/// contour, in the complex plane.
pub trait LaplaceTransform {
    fn eval_real(&self, s: f64) -> f64;
    fn eval_complex(&self, s: Complex64) -> Complex64;
}

/// Wraps a closure defined on complex arguments.
pub struct ComplexFn<F>(pub F);

impl<F: Fn(Complex64) -> Complex64> LaplaceTransform for ComplexFn<F> {
    fn eval_real(&self, s: f64) -> f64 {
        (self.0)(Complex64::new(s, 0.0)).re
    }
    fn eval_complex(&self, s: Complex64) -> Complex64 {
        (self.0)(s)
    }
}

/// Stehfest weights `V_k`, `k = 1..=n`.
pub fn stehfest_weights(n: usize) -> Vec<f64> {
    let half = n / 2;
    let fact = |k: usize| -> f64 { (1..=k).fold(1.0, |a, i| a * i as f64) };
    (1..=n)
        .map(|k| {
            let mut s = 0.0;
            for j in (k + 1) / 2..=k.min(half) {
                s += (j as f64).powi(half as i32) * fact(2 * j)
                    / (fact(half - j) * fact(j) * fact(j - 1) * fact(k - j) * fact(2 * j - k));
            }
            if (k + half) % 2 == 0 {
                s
            } else {
                -s
            }
        })
        .collect()
}

/// Gaver–Stehfest inversion using only real abscissae.
pub fn gaver_stehfest<F: Fn(f64) -> f64>(f: F, t: f64, terms: usize) -> f64 {
    let a = LN_2 / t;
    stehfest_weights(terms)
        .iter()
        .enumerate()
        .map(|(i, v)| v * f((i + 1) as f64 * a))
        .sum::<f64>()
        * a
}

/// Fixed Talbot inversion (Abate–Valkó contour) with `m` nodes.
pub fn talbot_fixed<F: Fn(Complex64) -> Complex64>(f: F, t: f64, m: usize) -> f64 {
    let r = 2.0 * m as f64 / (5.0 * t);
    let mut s = 0.5 * f(Complex64::new(r, 0.0)).re * (r * t).exp();
    for k in 1..m {
        let th = k as f64 * PI / m as f64;
        let cot = 1.0 / th.tan();
        let z = Complex64::new(r * th * cot, r * th);
        let sigma = th + (th * cot - 1.0) * cot;
        let term = (z * t).exp() * f(z) * Complex64::new(1.0, sigma);
        s += term.re;
    }
    s * r / m as f64
}

/// Inverts `tr` at `t > 0` with the configured method.
pub fn laplace_invert<T: LaplaceTransform + ?Sized>(tr: &T, t: f64, cfg: &InversionConfig) -> Result<f64> {
    cfg.validate()?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("inversion time must be positive, got {t}")));
    }
    let v = match cfg.method {
        InversionMethod::GaverStehfest => gaver_stehfest(|s| tr.eval_real(s), t, cfg.terms),
        InversionMethod::TalbotFixed => talbot_fixed(|s| tr.eval_complex(s), t, cfg.terms),
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NoConvergence { what: "Laplace inversion" })
    }
}

/// Runs both methods and fails when they disagree by more than
/// `10^-precision_digits` relative (absolute near zero). Returns the value
/// from the configured method.
pub fn laplace_invert_checked<T: LaplaceTransform + ?Sized>(tr: &T, t: f64, cfg: &InversionConfig) -> Result<f64> {
    let primary = laplace_invert(tr, t, cfg)?;
    let other = match cfg.method {
        InversionMethod::GaverStehfest => InversionConfig {
            method: InversionMethod::TalbotFixed,
            terms: 32,
            ..*cfg
        },
        InversionMethod::TalbotFixed => InversionConfig {
            method: InversionMethod::GaverStehfest,
            terms: 14,
            ..*cfg
        },
    };
    let secondary = laplace_invert(tr, t, &other)?;
    let tol = 10f64.powi(-(cfg.precision_digits as i32));
    if (primary - secondary).abs() > tol * primary.abs().max(secondary.abs()).max(1.0) {
        return Err(Error::NoConvergence {
            what: "Laplace inversion cross-validation",
        });
    }
    Ok(primary)
}

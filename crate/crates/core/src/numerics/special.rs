//! Special functions used by the closed-form passage laws.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::numerics::quad::{integrate_with_breaks, QuadTol};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

pub fn digamma(x: f64) -> f64 {
    statrs::function::gamma::digamma(x)
}

pub fn erfc(x: f64) -> f64 {
    statrs::function::erf::erfc(x)
}

/// Standard normal cdf.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Normal density with mean `m` and standard deviation `s`.
pub fn normal_pdf(x: f64, m: f64, s: f64) -> f64 {
    let z = (x - m) / s;
    (-0.5 * z * z).exp() / (s * (2.0 * PI).sqrt())
}

fn check_gamma_args(s: f64, x: f64) -> Result<()> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("incomplete gamma needs s > 0, got {s}")));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("incomplete gamma needs x >= 0, got {x}")));
    }
    Ok(())
}

/// Series for the regularized lower incomplete gamma P(s, x).
fn gamma_p_series(s: f64, x: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(0.0);
    }
    let mut ap = s;
    let mut del = 1.0 / s;
    let mut sum = del;
    for _ in 0..200_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-17 {
            return Ok(sum * (-x + s * x.ln() - ln_gamma(s)).exp());
        }
    }
    Err(Error::NoConvergence {
        what: "incomplete gamma series",
    })
}

/// Continued fraction (modified Lentz) for the regularized upper Q(s, x).
fn gamma_q_fraction(s: f64, x: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..200_000 {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            return Ok((-x + s * x.ln() - ln_gamma(s)).exp() * h);
        }
    }
    Err(Error::NoConvergence {
        what: "incomplete gamma continued fraction",
    })
}

/// Regularized lower incomplete gamma P(s, x) = γ(s, x) / Γ(s).
pub fn regularized_gamma_p(s: f64, x: f64) -> Result<f64> {
    check_gamma_args(s, x)?;
    if x <= s + 1.0 {
        gamma_p_series(s, x)
    } else {
        Ok(1.0 - gamma_q_fraction(s, x)?)
    }
}

/// Regularized upper incomplete gamma Q(s, x) = Γ(s, x) / Γ(s).
pub fn regularized_gamma_q(s: f64, x: f64) -> Result<f64> {
    check_gamma_args(s, x)?;
    if x <= s + 1.0 {
        Ok(1.0 - gamma_p_series(s, x)?)
    } else {
        gamma_q_fraction(s, x)
    }
}

/// Upper incomplete gamma Γ(s, x) = ∫_x^∞ t^{s-1} e^{-t} dt.
pub fn upper_incomplete_gamma(s: f64, x: f64) -> Result<f64> {
    Ok(regularized_gamma_q(s, x)? * gamma(s))
}

/// Lower incomplete gamma γ(s, x) = Γ(s) - Γ(s, x).
pub fn lower_incomplete_gamma(s: f64, x: f64) -> Result<f64> {
    Ok(regularized_gamma_p(s, x)? * gamma(s))
}

/// `e^x E_1(x)` for `x > 0`; finite and smooth for large `x`.
pub fn exp_integral_e1_scaled(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x <= 1.0 {
        return x.exp() * exp_integral_e1(x);
    }
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Exponential integral E_1(x) = ∫_x^∞ e^{-t}/t dt for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x > 1.0 {
        return (-x).exp() * exp_integral_e1_scaled(x);
    }
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..200 {
        term *= -x / k as f64;
        let add = -term / k as f64;
        sum += add;
        if add.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() + sum
}

/// Generalized hypergeometric ₂F₂(a, b; c, d; z) by direct summation with
/// Kahan compensation.
pub fn hyp2f2(a: f64, b: f64, c: f64, d: f64, z: f64) -> Result<f64> {
    let nonpos_int = |v: f64| v <= 0.0 && v.fract() == 0.0;
    if nonpos_int(c) || nonpos_int(d) {
        return Err(Error::Domain("2F2 lower parameters must not be nonpositive integers".into()));
    }
    let mut sum = 1.0;
    let mut comp = 0.0;
    let mut term = 1.0;
    let mut small = 0;
    for k in 0..10_000 {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) / ((c + kf) * (d + kf)) * z / (kf + 1.0);
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if term == 0.0 || term.abs() < 1e-15 * sum.abs() {
            small += 1;
            if small >= 3 {
                return Ok(sum);
            }
        } else {
            small = 0;
        }
    }
    Err(Error::NoConvergence { what: "2F2 series" })
}

/// `ln ∫_0^∞ x^{ν-1} exp(-z x - x²/2) dx` for `ν > 0`.
///
/// The integrand is rescaled by its maximum so that large `|z|` and large
/// `ν` do not overflow.
pub fn ln_parabolic_integral(nu: f64, z: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::Domain(format!("need nu > 0, got {nu}")));
    }
    let tol = QuadTol {
        abs: 0.0,
        rel: 1e-12,
        max_intervals: 4000,
    };
    if nu < 1.0 {
        // x = u^{1/ν} absorbs the x^{ν-1} singularity: x^{ν-1} dx = du / ν.
        let (x_peak, m) = if z < 0.0 { (-z, 0.5 * z * z) } else { (0.0, 0.0) };
        let x_hi = if z < 0.0 { -z + 12.0 } else { -z + (z * z + 150.0).sqrt() };
        let inv_nu = 1.0 / nu;
        let g = |u: f64| {
            let x = u.powf(inv_nu);
            (-z * x - 0.5 * x * x - m).exp()
        };
        let u_hi = x_hi.powf(nu);
        let mut breaks = vec![0.0];
        if x_peak > 0.0 {
            breaks.push(x_peak.powf(nu));
        }
        breaks.push(u_hi);
        let v = integrate_with_breaks(g, &breaks, tol)?;
        return Ok(v.ln() + m - nu.ln());
    }
    let e = |x: f64| (nu - 1.0) * x.ln() - z * x - 0.5 * x * x;
    let x_star = 0.5 * (-z + (z * z + 4.0 * (nu - 1.0)).sqrt());
    let m = if x_star > 0.0 { e(x_star) } else { 0.0 };
    let curv = if x_star > 0.0 { 1.0 + (nu - 1.0) / (x_star * x_star) } else { 1.0 };
    let sd = 1.0 / curv.sqrt();
    let lo = (x_star - 40.0 * sd).max(0.0);
    let hi = x_star + 40.0 * sd + 12.0;
    let f = |x: f64| {
        if x <= 0.0 {
            if nu == 1.0 {
                (-m).exp()
            } else {
                0.0
            }
        } else {
            (e(x) - m).exp()
        }
    };
    let mut breaks = vec![lo];
    if x_star > lo {
        breaks.push(x_star);
    }
    breaks.push(hi);
    let v = integrate_with_breaks(f, &breaks, tol)?;
    Ok(v.ln() + m)
}

/// Parabolic cylinder function D_p(z) for `p < 0` from its integral
/// representation `e^{-z²/4}/Γ(-p) ∫_0^∞ e^{-zx - x²/2} x^{-p-1} dx`.
pub fn parabolic_cylinder_d(p: f64, z: f64) -> Result<f64> {
    if !(p < 0.0) {
        return Err(Error::Domain(format!("parabolic cylinder D_p needs p < 0, got {p}")));
    }
    let nu = -p;
    let ln_i = ln_parabolic_integral(nu, z)?;
    Ok((-0.25 * z * z - ln_gamma(nu) + ln_i).exp())
}

//! Scalar root finding: Brent's method and polynomial roots.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Brent's method on `[lo, hi]`. Requires a sign change. Stops when
/// `|f(x)| <= tol` or the bracket is narrower than `1e-14 max(1, |x|)`.
pub fn find_root_bracketed<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa * fb < 0.0) {
        return Err(Error::NoBracket { lo, hi });
    }
    let mut c = b;
    let mut fc = fb;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..500 {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let width_tol = 0.5e-14 * b.abs().max(1.0);
        let xm = 0.5 * (c - b);
        if fb.abs() <= tol || xm.abs() <= width_tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= width_tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (width_tol * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > width_tol { d } else { width_tol.copysign(xm) };
        fb = f(b);
    }
    Err(Error::NoConvergence { what: "Brent root finder" })
}

/// Horner evaluation; `coeffs` in descending powers.
pub fn poly_eval(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

fn poly_eval_with_derivative(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// All complex roots of the polynomial with `coeffs` in descending powers,
/// from companion-matrix eigenvalues followed by a few Newton steps.
pub fn poly_roots_complex(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    if coeffs.len() < 2 {
        return Err(Error::Domain("polynomial degree must be at least 1".into()));
    }
    let lead = coeffs[0];
    let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
    if lead == 0.0 || lead.abs() < 1e-300 || lead.abs() < 1e-14 * norm {
        return Err(Error::DegenerateLeadingCoefficient);
    }
    let n = coeffs.len() - 1;
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        comp[(0, j)] = -coeffs[j + 1] / lead;
    }
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    let eig = comp.complex_eigenvalues();
    let mut roots: Vec<Complex64> = eig.iter().map(|z| Complex64::new(z.re, z.im)).collect();
    for r in roots.iter_mut() {
        for _ in 0..8 {
            let (p, dp) = poly_eval_with_derivative(coeffs, *r);
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            let cand = *r - step;
            if poly_eval(coeffs, cand).norm() < p.norm() {
                *r = cand;
            } else {
                break;
            }
            if step.norm() <= 1e-16 * r.norm().max(1.0) {
                break;
            }
        }
    }
    for r in &roots {
        let scale = r.norm().max(1.0).powi(n as i32);
        if poly_eval(coeffs, *r).norm() > 1e-8 * norm * scale {
            return Err(Error::NoConvergence { what: "polynomial roots" });
        }
    }
    Ok(roots)
}

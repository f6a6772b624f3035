//! Kernels `g`, `h`, `h'` of the renewal equation for the discounted
//! penalty function, and the Neumann series that solves it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lundberg::LundbergRoot;
use crate::model::{JumpPart, ModelSpec};
use crate::numerics::conv::trapezoid_convolve;
use crate::numerics::quad::{gauss_legendre8, gauss_legendre8_sqrt_origin, integrate_to_inf, QuadTol};
use crate::penalty::PenaltySpec;

const SERIES_TOL: f64 = 1e-10;
const SERIES_FAIL: f64 = 1e-6;

/// Tabulated renewal kernels on `x_k = k·step`, `k < n`.
#[derive(Debug, Clone)]
pub struct RenewalKernels {
    pub rho: f64,
    /// Decay rate `ρ − 2μ/σ²` of the creeping term.
    pub c: f64,
    pub step: f64,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub h_prime: Vec<f64>,
}

/// Source function `F` integrated against `e^{−c(x_{k+1}−s)}` on each cell.
enum Source<'a> {
    Zero,
    /// Closure with an integrable singularity allowed at the origin.
    Func(Box<dyn Fn(f64) -> f64 + 'a>),
    /// `F(s) = rate · α e^{sT} v`.
    PhaseVector { rate: f64, alpha: DVector<f64>, t: DMatrix<f64>, v: DVector<f64> },
    /// Values on the grid nodes.
    Table(Vec<f64>),
}

impl Source<'_> {
    fn nodes(&self, step: f64, n: usize, at_zero: f64) -> Vec<f64> {
        match self {
            Source::Zero => vec![0.0; n],
            Source::Func(f) => (0..n).map(|k| if k == 0 { at_zero } else { f(k as f64 * step) }).collect(),
            Source::PhaseVector { rate, alpha, t, v } => {
                let e = (t * step).exp().transpose();
                let mut r = alpha.clone();
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    out.push(rate * r.dot(v));
                    r = &e * r;
                }
                out
            }
            Source::Table(t) => t.clone(),
        }
    }

    /// `out[k] = ∫_{x_k}^{x_{k+1}} e^{−c(x_{k+1}−s)} F(s) ds`.
    fn cells(&self, c: f64, step: f64, n: usize, singular_origin: bool) -> Vec<f64> {
        let cells = n.saturating_sub(1);
        match self {
            Source::Zero => vec![0.0; cells],
            Source::Func(f) => (0..cells)
                .map(|k| {
                    let a = k as f64 * step;
                    let b = a + step;
                    if k == 0 && singular_origin {
                        gauss_legendre8_sqrt_origin(|s| (-c * (b - s)).exp() * f(s), step)
                    } else {
                        gauss_legendre8(|s| (-c * (b - s)).exp() * f(s), a, b)
                    }
                })
                .collect(),
            Source::PhaseVector { rate, alpha, t, v } => {
                let m = t.nrows();
                // M = ∫_0^step e^{−c(step−u)} e^{uT} du, entrywise Gauss–Legendre.
                let mut mv = DVector::zeros(m);
                for j in 0..m {
                    let col = |u: f64| (-c * (step - u)).exp() * ((t * u).exp() * v)[j];
                    mv[j] = gauss_legendre8(col, 0.0, step);
                }
                let e = (t * step).exp().transpose();
                let mut r = alpha.clone();
                let mut out = Vec::with_capacity(cells);
                for _ in 0..cells {
                    out.push(rate * r.dot(&mv));
                    r = &e * r;
                }
                out
            }
            Source::Table(tab) => {
                let w = (-c * step).exp();
                (0..cells).map(|k| 0.5 * step * (w * tab[k] + tab[k + 1])).collect()
            }
        }
    }
}

fn first_order_recursion(start: f64, decay: f64, gain: f64, cells: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(cells.len() + 1);
    let mut v = start;
    out.push(v);
    for c in cells {
        v = decay * v + gain * c;
        out.push(v);
    }
    out
}

/// `ω(x) = ∫_x^∞ w(x, y − x) q(y) dy` then `K` by backward recursion.
fn custom_k_table(model: &ModelSpec, rho: f64, penalty: &PenaltySpec, step: f64, n: usize) -> Result<Vec<f64>> {
    let lm = model.levy_measure()?;
    let extra = ((28.0 / rho) / step).ceil() as usize;
    let total = n + extra;
    let omega = |x: f64| -> Result<f64> {
        integrate_to_inf(|o| penalty.eval(x, o) * lm.density(x + o), 0.0, QuadTol::rel(1e-8))
    };
    let mut om = Vec::with_capacity(total);
    for k in 0..total {
        let x = if k == 0 { 0.25 * step } else { k as f64 * step };
        om.push(omega(x)?);
    }
    let w = (-rho * step).exp();
    let mut k_tab = vec![0.0; total];
    for k in (0..total - 1).rev() {
        k_tab[k] = w * k_tab[k + 1] + 0.5 * step * (om[k] + w * om[k + 1]);
    }
    k_tab.truncate(n);
    Ok(k_tab)
}

/// Builds `g`, `h` and `h'` for the penalty on `n` nodes with spacing `step`.
pub fn build_kernels(model: &ModelSpec, root: &LundbergRoot, penalty: &PenaltySpec, step: f64, n: usize) -> Result<RenewalKernels> {
    model.require_perturbation()?;
    if n < 2 || !(step > 0.0) {
        return Err(Error::GridMismatch(format!("renewal grid needs n >= 2 and step > 0, got n = {n}, step = {step}")));
    }
    let rho = root.rho;
    let s2 = model.sigma() * model.sigma();
    let c = rho - 2.0 * model.mu() / s2;
    let gain = 2.0 / s2;
    let decay = (-c * step).exp();

    let (j_src, j_sing) = match model.jumps() {
        JumpPart::None => (Source::Zero, false),
        JumpPart::Gamma { .. } => (Source::Func(Box::new(move |s| model.tilted_tail(rho, s))), true),
        JumpPart::PhaseType { rate, ph } => {
            let m = ph.order();
            let v = (DMatrix::identity(m, m) * rho - &ph.t).lu().solve(&ph.exit).expect("ρI − T invertible");
            (
                Source::PhaseVector { rate: *rate, alpha: ph.alpha.clone(), t: ph.t.clone(), v },
                false,
            )
        }
    };
    let g_cells = j_src.cells(c, step, n, j_sing);
    let g = first_order_recursion(0.0, decay, gain, &g_cells);

    let w00 = penalty.at_origin();
    let k0 = model.tilted_tail_integral(rho, 0.0);
    let (k_src, k_sing, k_at_zero) = match (model.jumps(), penalty) {
        (JumpPart::None, _) => (Source::Zero, false, 0.0),
        (_, PenaltySpec::Custom { .. }) => (Source::Table(custom_k_table(model, rho, penalty, step, n)?), false, 0.0),
        (JumpPart::Gamma { .. }, PenaltySpec::One) => {
            (Source::Func(Box::new(move |s| model.tilted_tail_integral(rho, s))), true, k0)
        }
        (JumpPart::Gamma { .. }, PenaltySpec::OvershootIndicator(eps)) => {
            let eps = *eps;
            let at0 = model.tilted_tail_integral(rho, eps);
            (Source::Func(Box::new(move |s| model.tilted_tail_integral(rho, s + eps))), false, at0)
        }
        (JumpPart::PhaseType { rate, ph }, _) => {
            let m = ph.order();
            let v = (DMatrix::identity(m, m) * rho - &ph.t).lu().solve(&ph.exit).expect("ρI − T invertible");
            let mut kv = (DVector::from_element(m, 1.0) - v) / rho;
            if let PenaltySpec::OvershootIndicator(eps) = penalty {
                kv = (&ph.t * *eps).exp() * kv;
            }
            (Source::PhaseVector { rate: *rate, alpha: ph.alpha.clone(), t: ph.t.clone(), v: kv }, false, 0.0)
        }
    };
    let k_cells = k_src.cells(c, step, n, k_sing);
    let h = first_order_recursion(w00, decay, gain, &k_cells);
    let k_nodes = k_src.nodes(step, n, k_at_zero);
    let h_prime = h.iter().zip(&k_nodes).map(|(hv, kv)| -c * hv + gain * kv).collect();
    Ok(RenewalKernels { rho, c, step, g, h, h_prime })
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `Σ_{k ≥ k0} g^{⋆k} ⋆ f` with `g^{⋆0} ⋆ f = f`; returns the sum and the
/// number of terms used.
pub fn neumann_series(g: &[f64], f: &[f64], step: f64, k0: usize, k_max: usize) -> Result<(Vec<f64>, usize)> {
    let mut term = f.to_vec();
    for _ in 0..k0 {
        term = trapezoid_convolve(g, &term, step);
    }
    let mut sum = term.clone();
    let mut last = sup(&term);
    for k in k0 + 1..=k_max {
        if last < SERIES_TOL {
            return Ok((sum, k));
        }
        term = trapezoid_convolve(g, &term, step);
        for (s, t) in sum.iter_mut().zip(&term) {
            *s += t;
        }
        last = sup(&term);
    }
    if last > SERIES_FAIL {
        return Err(Error::SeriesNotConverged { terms: k_max, last });
    }
    Ok((sum, k_max))
}

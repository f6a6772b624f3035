//! Last-passage time `L_b = sup{u ≥ 0 : D_u ≤ b}` of the free process and
//! `L*_b` of the reflected one.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Discrete, DiscreteCDF, Poisson};

use crate::error::{Error, Result};
use crate::first_passage::PassageTransform;
use crate::lundberg::{solve_lundberg, LundbergRoot};
use crate::model::{JumpPart, ModelKind, ModelSpec};
use crate::numerics::special::{ln_gamma, ln_parabolic_integral, normal_pdf};
use crate::numerics::{integrate_with_breaks, GridFunction, QuadTol};
use crate::scale::ScaleSet;

const POISSON_TAIL: f64 = 1e-14;

/// Probability that the process started at `z` never returns below zero,
/// `1 − e^{−ρ(0) z}` for `z > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Escape {
    pub rho0: f64,
}

impl Escape {
    /// A subordinator with nonnegative drift never comes back down, so its
    /// escape probability is one (`ρ(0) = ∞`).
    pub fn new(model: &ModelSpec) -> Result<Self> {
        if model.sigma() == 0.0 && model.mu() >= 0.0 {
            return Ok(Self { rho0: f64::INFINITY });
        }
        Ok(Self {
            rho0: solve_lundberg(model, 0.0)?.rho,
        })
    }

    pub fn from_root(root: &LundbergRoot) -> Self {
        Self { rho0: root.rho }
    }

    pub fn prob(&self, z: f64) -> f64 {
        if z <= 0.0 {
            0.0
        } else {
            -(-self.rho0 * z).exp_m1()
        }
    }

    /// Derivative of [`Self::prob`].
    pub fn density(&self, z: f64) -> f64 {
        if z < 0.0 || (self.rho0.is_infinite() && z > 0.0) {
            0.0
        } else {
            self.rho0 * (-self.rho0 * z).exp()
        }
    }
}

/// Pointwise density of `D_t`.
#[derive(Debug, Clone)]
pub struct DtDensity<'a> {
    model: &'a ModelSpec,
    pub t: f64,
    ph: Option<PhBlocks>,
}

/// Block-bidiagonal generator of `S_1, …, S_N` (sums of phase-type jumps)
/// with Poisson weights.
#[derive(Debug, Clone)]
struct PhBlocks {
    order: usize,
    start: DVector<f64>,
    gen: DMatrix<f64>,
    exit: DVector<f64>,
    weights: Vec<f64>,
    atom: f64,
    decay: f64,
}

impl PhBlocks {
    fn new(rate: f64, ph: &crate::model::PhaseType, t: f64) -> Result<Self> {
        let lam = rate * t;
        let pois = Poisson::new(lam).map_err(|e| Error::Domain(e.to_string()))?;
        let mut n_max = 1;
        while pois.sf(n_max) > POISSON_TAIL {
            n_max += 1;
        }
        let m = ph.order();
        let size = n_max as usize * m;
        let mut gen = DMatrix::zeros(size, size);
        let feed = &ph.exit * ph.alpha.transpose();
        for k in 0..n_max as usize {
            gen.view_mut((k * m, k * m), (m, m)).copy_from(&ph.t);
            if k + 1 < n_max as usize {
                gen.view_mut((k * m, (k + 1) * m), (m, m)).copy_from(&feed);
            }
        }
        let mut start = DVector::zeros(size);
        start.rows_mut(0, m).copy_from(&ph.alpha);
        let weights = (1..=n_max).map(|n| pois.pmf(n)).collect();
        let decay = ph.t.complex_eigenvalues().iter().map(|z| -z.re).fold(f64::INFINITY, f64::min);
        Ok(Self {
            order: m,
            start,
            gen,
            exit: ph.exit.clone(),
            weights,
            atom: (-lam).exp(),
            decay,
        })
    }

    /// Density of the jump sum `G_t` on `y > 0` (excluding the atom at 0).
    fn jump_density(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let r = (&self.gen * y).exp().transpose() * &self.start;
        let m = self.order;
        self.weights
            .iter()
            .enumerate()
            .map(|(k, w)| w * r.rows(k * m, m).dot(&self.exit))
            .sum()
    }
}

impl<'a> DtDensity<'a> {
    pub fn new(model: &'a ModelSpec, t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::OutOfDomain(format!("time must be > 0, got {t}")));
        }
        let ph = match model.jumps() {
            JumpPart::PhaseType { rate, ph } => Some(PhBlocks::new(*rate, ph, t)?),
            _ => None,
        };
        Ok(Self { model, t, ph })
    }

    /// Interval outside which the density is negligible (< 1e−12 mass).
    pub fn support(&self) -> (f64, f64) {
        let t = self.t;
        let m = self.model;
        let centre = m.mean() * t;
        let sd = (m.phi_second(0.0) * t).sqrt();
        let s = m.sigma() * t.sqrt();
        match m.jumps() {
            JumpPart::None => (centre - 9.0 * s, centre + 9.0 * s),
            JumpPart::Gamma { xi, .. } => {
                let lo = if s > 0.0 { m.mu() * t - 9.0 * s } else { m.mu() * t };
                (lo, centre + 12.0 * sd + 40.0 * xi + 9.0 * s)
            }
            JumpPart::PhaseType { .. } => {
                let decay = self.ph.as_ref().map_or(1.0, |p| p.decay);
                (m.mu() * t - 9.0 * s, centre + 12.0 * sd + 40.0 / decay + 9.0 * s)
            }
        }
    }

    pub fn pdf(&self, a: f64) -> Result<f64> {
        let m = self.model;
        let t = self.t;
        let s = m.sigma() * t.sqrt();
        let ap = a - m.mu() * t;
        match m.jumps() {
            JumpPart::None => Ok(normal_pdf(ap, 0.0, s)),
            JumpPart::Gamma { alpha, xi } => {
                let nu = alpha * t;
                if s == 0.0 {
                    if ap <= 0.0 {
                        return Ok(0.0);
                    }
                    return Ok(((nu - 1.0) * ap.ln() - ap / xi - ln_gamma(nu) - nu * xi.ln()).exp());
                }
                let z = s / xi - ap / s;
                let ln_f = (nu - 1.0) * s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - nu * xi.ln() - ln_gamma(nu)
                    - ap * ap / (2.0 * s * s)
                    + ln_parabolic_integral(nu, z)?;
                Ok(ln_f.exp())
            }
            JumpPart::PhaseType { .. } => {
                let p = self.ph.as_ref().expect("phase-type blocks");
                let mut v = p.atom * normal_pdf(ap, 0.0, s);
                let y_hi = (ap + 9.0 * s).min(self.support().1);
                if y_hi > 0.0 {
                    let mut breaks = vec![0.0];
                    if ap > 0.0 && ap < y_hi {
                        breaks.push(ap);
                    }
                    breaks.push(y_hi);
                    let lo = (ap - 9.0 * s).max(0.0);
                    if lo > 0.0 && lo < breaks[1] {
                        breaks.insert(1, lo);
                    }
                    v += integrate_with_breaks(|y| p.jump_density(y) * normal_pdf(ap - y, 0.0, s), &breaks, QuadTol::rel(1e-11))?;
                }
                Ok(v)
            }
        }
    }
}

/// Tabulated density of `D_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalDensityD {
    pub t: f64,
    pub f: GridFunction,
}

impl MarginalDensityD {
    pub fn mass(&self) -> f64 {
        self.f.integral()
    }
}

/// Tabulates the density of `D_t` on `n` points across its effective support.
pub fn density_of_dt(model: &ModelSpec, t: f64, n: usize) -> Result<MarginalDensityD> {
    let d = DtDensity::new(model, t)?;
    let (lo, hi) = d.support();
    let n = n.max(3);
    let h = (hi - lo) / (n - 1) as f64;
    let vals = (0..n).map(|k| d.pdf(lo + k as f64 * h)).collect::<Result<Vec<_>>>()?;
    Ok(MarginalDensityD {
        t,
        f: GridFunction::new(lo, h, vals)?,
    })
}

fn tol() -> QuadTol {
    QuadTol {
        abs: 1e-13,
        rel: 1e-10,
        max_intervals: 4000,
    }
}

/// Integrates `g(a)·f_{D_t}(a)` over `[from, support end]`.
fn integrate_against_density<G: Fn(f64) -> f64>(d: &DtDensity, from: f64, g: G) -> Result<f64> {
    let (lo, hi) = d.support();
    let from = from.max(lo);
    if from >= hi {
        return Ok(0.0);
    }
    let mean = d.t * d.model.mean();
    let mut breaks = vec![from];
    if mean > from && mean < hi {
        breaks.push(mean);
    }
    breaks.push(hi);
    let f = |a: f64| g(a) * d.pdf(a).unwrap_or(f64::NAN);
    integrate_with_breaks(f, &breaks, tol())
}

/// `P(L_b < t) = ∫_b^∞ P_{a−b}[never below 0] f_{D_t}(a) da`.
pub fn last_passage_cdf(model: &ModelSpec, escape: &Escape, b: f64, t: f64) -> Result<f64> {
    let d = DtDensity::new(model, t)?;
    integrate_against_density(&d, b, |a| escape.prob(a - b))
}

/// Density of `[L_b ≥ t, D_t ∈ da]`.
pub fn last_passage_joint_density(model: &ModelSpec, escape: &Escape, b: f64, t: f64, a: f64) -> Result<f64> {
    let d = DtDensity::new(model, t)?;
    Ok((1.0 - escape.prob(a - b)) * d.pdf(a)?)
}

/// `∫ last_passage_joint_density(a) da = P(L_b ≥ t)`.
pub fn last_passage_joint_mass(model: &ModelSpec, escape: &Escape, b: f64, t: f64) -> Result<f64> {
    let d = DtDensity::new(model, t)?;
    let (lo, _) = d.support();
    let below = if b > lo {
        let mean = t * model.mean();
        let mut breaks = vec![lo];
        if mean > lo && mean < b {
            breaks.push(mean);
        }
        breaks.push(b);
        integrate_with_breaks(|a| d.pdf(a).unwrap_or(f64::NAN), &breaks, tol())?
    } else {
        0.0
    };
    let above = integrate_against_density(&d, b, |a| 1.0 - escape.prob(a - b))?;
    Ok(below + above)
}

/// Bracket `e^{ρ(δ)x}/φ'(ρ(δ)) − W^(δ)(x)` of the under/overshoot law.
pub fn overshoot_bracket(model: &ModelSpec, scales: &ScaleSet, x: f64) -> Result<f64> {
    let rho = scales.rho();
    Ok((rho * x).exp() / model.phi_prime(rho) - scales.w_at(x)?)
}

/// `E[e^{−δL_b}; b − D_{L_b−} ∈ dy, D_{L_b} − b ∈ dw]/(dy dw)`.
/// Undershoots `y > b` come from paths that dip below zero before the
/// final jump; there `W^(δ)(b − y) = 0`.
pub fn last_passage_overshoot_transform(
    model: &ModelSpec,
    scales: &ScaleSet,
    escape: &Escape,
    b: f64,
    y: f64,
    w: f64,
) -> Result<f64> {
    let lm = model.levy_measure()?;
    if !(y >= 0.0 && w >= 0.0) {
        return Err(Error::OutOfDomain(format!("need y >= 0 and w >= 0, got y = {y}, w = {w}")));
    }
    Ok(overshoot_bracket(model, scales, b - y)? * escape.prob(w) * lm.density(w + y))
}

/// Double integral of [`last_passage_overshoot_transform`] over
/// `y > 0`, `w > 0`.
pub fn last_passage_overshoot_mass(model: &ModelSpec, scales: &ScaleSet, escape: &Escape, b: f64) -> Result<f64> {
    let lm = model.levy_measure()?;
    let t = QuadTol {
        abs: 1e-12,
        rel: 1e-8,
        max_intervals: 2000,
    };
    let inner = |y: f64| -> f64 {
        let f = |w: f64| escape.prob(w) * lm.density(w + y);
        let v = crate::numerics::integrate_to_inf(f, 0.0, t).unwrap_or(f64::NAN);
        overshoot_bracket(model, scales, b - y).unwrap_or(f64::NAN) * v
    };
    Ok(crate::numerics::integrate(&inner, 0.0, b, t)? + crate::numerics::integrate_to_inf(&inner, b, t)?)
}

/// Last-passage density for Brownian motion with drift,
/// `μ/(σ√(2πt)) exp(−(b−μt)²/(2σ²t))`.
pub fn bm_last_passage_density(model: &ModelSpec, b: f64, t: f64) -> Result<f64> {
    if model.kind() != ModelKind::BrownianDrift {
        return Err(Error::WrongKind(model.kind().name()));
    }
    if t <= 0.0 {
        return Ok(0.0);
    }
    let (mu, s) = (model.mu(), model.sigma());
    let d = b - mu * t;
    Ok(mu / (s * (2.0 * std::f64::consts::PI * t).sqrt()) * (-d * d / (2.0 * s * s * t)).exp())
}

/// `E[e^{−δL*_b}] = ∫_b^∞ ρ(0) e^{−ρ(0)(a−b)} φ(δ, a) da`.
pub fn reflected_last_passage_transform(escape: &Escape, phi: &PassageTransform, b: f64) -> Result<f64> {
    let a_max = phi.x_max();
    if a_max <= b {
        return Err(Error::OutOfGrid { x: b, lo: 0.0, hi: a_max });
    }
    let tail = (-escape.rho0 * (a_max - b)).exp() * phi.at(a_max)?;
    if tail > 1e-8 {
        return Err(Error::TailNotDominated { a_max });
    }
    let f = |a: f64| escape.density(a - b) * phi.at(a).unwrap_or(f64::NAN);
    let mut breaks = vec![b];
    let knee = b + 1.0 / escape.rho0;
    if knee < a_max {
        breaks.push(knee);
    }
    breaks.push(a_max);
    integrate_with_breaks(f, &breaks, QuadTol::rel(1e-10))
}

/// `P[L*_b ≥ T, D*_T ∈ da]/da` for `T ~ Exp(δ)`:
/// `(1 − esc(a−b))·(δ/ρ)(W'(a) − ρW(a))`.
pub fn reflected_last_passage_exp_joint(scales: &ScaleSet, escape: &Escape, b: f64, a: f64) -> Result<f64> {
    if a < b {
        return Err(Error::OutOfDomain(format!("need a >= b, got a = {a}, b = {b}")));
    }
    let dphi = -scales.delta / scales.rho() * scales.u_delta_density(a)?;
    Ok(-(1.0 - escape.prob(a - b)) * dphi)
}

/// `∫_b^{x_max} reflected_last_passage_exp_joint(a) da`.
pub fn reflected_last_passage_exp_mass(scales: &ScaleSet, escape: &Escape, b: f64) -> Result<f64> {
    let hi = scales.x_max();
    let f = |a: f64| reflected_last_passage_exp_joint(scales, escape, b, a).unwrap_or(f64::NAN);
    integrate_with_breaks(f, &[b, (b + 1.0).min(hi), hi], QuadTol::rel(1e-10))
}

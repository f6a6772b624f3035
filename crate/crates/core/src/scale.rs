//! Scale functions `W^(δ)`, `Z^(δ)`: closed forms, Laplace inversion and
//! the renewal-series route.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lundberg::{solve_lundberg, LundbergRoot};
use crate::model::{JumpPart, ModelKind, ModelSpec};
use crate::numerics::laplace::{laplace_invert, laplace_invert_checked, ComplexFn};
use crate::numerics::roots::poly_roots_complex;
use crate::numerics::{GridFunction, InversionConfig, Interp};
use crate::penalty::PenaltySpec;
use crate::renewal::{build_kernels, neumann_series};

/// Uniform grid `[0, (n−1)·step]` for tabulated scale functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleGrid {
    pub step: f64,
    pub n: usize,
}

impl ScaleGrid {
    pub fn new(step: f64, x_max: f64) -> Result<Self> {
        if !(step > 0.0) || !(x_max > 0.0) {
            return Err(Error::GridMismatch(format!("need step > 0 and x_max > 0, got {step}, {x_max}")));
        }
        let n = (x_max / step - 1e-9).ceil() as usize + 1;
        Ok(Self { step, n: n.max(2) })
    }

    /// `step = b/2048` on `[0, 4b]`.
    pub fn for_threshold(b: f64) -> Result<Self> {
        Self::new(b / 2048.0, 4.0 * b)
    }

    pub fn x_max(&self) -> f64 {
        (self.n - 1) as f64 * self.step
    }

    pub fn x(&self, k: usize) -> f64 {
        k as f64 * self.step
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleRoute {
    ClosedFormBM,
    ClosedFormPH,
    LaplaceInversion,
    OdeSeries,
}

impl ScaleRoute {
    pub fn name(self) -> &'static str {
        match self {
            ScaleRoute::ClosedFormBM => "closed-bm",
            ScaleRoute::ClosedFormPH => "closed-ph",
            ScaleRoute::LaplaceInversion => "inversion",
            ScaleRoute::OdeSeries => "ode-series",
        }
    }
}

/// Coefficients of the Brownian closed form `W = (e^{ρx} − e^{r₂x})/γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmClosedForm {
    pub gamma: f64,
    pub rho: f64,
    pub r2: f64,
    pub delta: f64,
}

impl BmClosedForm {
    pub fn new(model: &ModelSpec, delta: f64) -> Result<Self> {
        if model.kind() != ModelKind::BrownianDrift {
            return Err(Error::WrongKind(model.kind().name()));
        }
        let (mu, s2) = (model.mu(), model.sigma() * model.sigma());
        let gamma = (mu * mu + 2.0 * delta * s2).sqrt();
        Ok(Self {
            gamma,
            rho: (mu + gamma) / s2,
            r2: (mu - gamma) / s2,
            delta,
        })
    }

    pub fn w(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        ((self.rho * x).exp() - (self.r2 * x).exp()) / self.gamma
    }

    pub fn w_prime(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        (self.rho * (self.rho * x).exp() - self.r2 * (self.r2 * x).exp()) / self.gamma
    }

    /// `W' − ρW = (2/σ²) e^{r₂x}`.
    pub fn u_delta(&self, x: f64) -> f64 {
        (self.rho - self.r2) / self.gamma * (self.r2 * x.max(0.0)).exp()
    }

    pub fn z(&self, x: f64) -> f64 {
        if x <= 0.0 || self.delta == 0.0 {
            return 1.0;
        }
        let int_r2 = if self.r2 == 0.0 { x } else { (self.r2 * x).exp_m1() / self.r2 };
        1.0 + self.delta / self.gamma * ((self.rho * x).exp_m1() / self.rho - int_r2)
    }
}

/// Closed-form Brownian scale function `W^(δ)(x)`.
pub fn scale_closed_bm(model: &ModelSpec, delta: f64, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::OutOfDomain(format!("scale function argument must be >= 0, got {x}")));
    }
    Ok(BmClosedForm::new(model, delta)?.w(x))
}

/// Roots and partial-fraction coefficients for the phase-type model.
#[derive(Debug, Clone, PartialEq)]
pub struct PHRootData {
    /// `ξ` with `φ_D(−ξ) = δ`, `Re ξ > 0`.
    pub xi_roots: Vec<Complex64>,
    /// `η = −eig(T)`.
    pub eta_roots: Vec<Complex64>,
    pub a_coeffs: Vec<Complex64>,
    pub varrho: f64,
}

impl PHRootData {
    /// `Σ A_i ξ_i/(ξ_i + u)`.
    pub fn phi_minus_partial_fractions(&self, u: Complex64) -> Complex64 {
        self.xi_roots
            .iter()
            .zip(&self.a_coeffs)
            .map(|(xi, a)| a * xi / (xi + u))
            .sum()
    }

    /// `Π_j (u + η_j)/η_j · Π_i ξ_i/(u + ξ_i)`.
    pub fn phi_minus_product(&self, u: Complex64) -> Complex64 {
        let num: Complex64 = self.eta_roots.iter().map(|e| (u + e) / e).product();
        let den: Complex64 = self.xi_roots.iter().map(|x| x / (u + x)).product();
        num * den
    }
}

/// Phase-type closed form of `W^(δ)` and the passage transform.
#[derive(Debug, Clone, PartialEq)]
pub struct PhClosedForm {
    pub data: PHRootData,
    pub rho: f64,
    pub delta: f64,
    prefactor: f64,
}

impl PhClosedForm {
    fn terms(&self) -> impl Iterator<Item = (Complex64, Complex64)> + '_ {
        self.data
            .xi_roots
            .iter()
            .zip(&self.data.a_coeffs)
            .map(move |(xi, a)| (*xi, a * xi / (self.rho + xi)))
    }

    pub fn w_complex(&self, x: f64) -> Complex64 {
        let er = (self.rho * x).exp();
        self.terms().map(|(xi, c)| c * (er - (-xi * x).exp())).sum::<Complex64>() * self.prefactor
    }

    pub fn w(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.w_complex(x).re
    }

    pub fn w_prime(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        let er = (self.rho * x).exp();
        (self.terms().map(|(xi, c)| c * (self.rho * er + xi * (-xi * x).exp())).sum::<Complex64>() * self.prefactor).re
    }

    /// `W' − ρW`, free of the growing exponential.
    pub fn u_delta(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        (self.terms().map(|(xi, c)| c * (self.rho + xi) * (-xi * x).exp()).sum::<Complex64>() * self.prefactor).re
    }

    pub fn z(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let ir = (self.rho * x).exp_m1() / self.rho;
        let s: Complex64 = self.terms().map(|(xi, c)| c * (ir + ((-xi * x).exp() - 1.0) / xi)).sum();
        1.0 + self.delta * (s * self.prefactor).re
    }

    /// `E[e^{−δT_b}] = Σ A_i e^{−ξ_i b}`.
    pub fn passage_transform(&self, b: f64) -> f64 {
        self.data
            .xi_roots
            .iter()
            .zip(&self.data.a_coeffs)
            .map(|(xi, a)| a * (-xi * b.max(0.0)).exp())
            .sum::<Complex64>()
            .re
    }
}

/// Characteristic polynomial and adjugate coefficients by Faddeev–LeVerrier.
/// Returns `(c, M)` with `det(uI − T) = Σ c[k] u^{m−k}` (descending) and
/// `adj(uI − T) = Σ_{k=1}^m M[k−1] u^{m−k}`.
fn faddeev_leverrier(t: &DMatrix<f64>) -> (Vec<f64>, Vec<DMatrix<f64>>) {
    let m = t.nrows();
    let id = DMatrix::<f64>::identity(m, m);
    let mut coeffs = vec![1.0];
    let mut mats = Vec::with_capacity(m);
    let mut mk = id.clone();
    for k in 1..=m {
        if k > 1 {
            mk = t * &mk + &id * *coeffs.last().unwrap();
        }
        let ck = -(t * &mk).trace() / k as f64;
        mats.push(mk.clone());
        coeffs.push(ck);
    }
    (coeffs, mats)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Assembles roots, coefficients and the closed-form scale function for a
/// phase-type model at `δ > 0`.
pub fn scale_closed_ph(model: &ModelSpec, delta: f64) -> Result<PhClosedForm> {
    let (rate, ph) = match model.jumps() {
        JumpPart::PhaseType { rate, ph } if model.kind() == ModelKind::PerturbedCompoundPoissonPh => (*rate, ph),
        _ => return Err(Error::WrongKind(model.kind().name())),
    };
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("phase-type closed form needs delta > 0, got {delta}")));
    }
    let root = solve_lundberg(model, delta)?;
    let m = ph.order();
    let s2 = model.sigma() * model.sigma();
    let (charpoly, adj) = faddeev_leverrier(&ph.t);
    // (σ²u²/2 − μu − λ − δ) det(uI − T) + λ α adj(uI − T) t
    let mut poly = poly_mul(&[0.5 * s2, -model.mu(), -(rate + delta)], &charpoly);
    for (k, mk) in adj.iter().enumerate() {
        let coef = rate * ph.alpha.dot(&(mk * &ph.exit));
        // u^{m−1−k} sits at index (m+2) − (m−1−k) = k + 3.
        poly[k + 3] += coef;
    }
    let roots = poly_roots_complex(&poly)?;
    let scale = roots.iter().map(|r| r.norm()).fold(1.0, f64::max);
    let xi_roots: Vec<Complex64> = roots.iter().filter(|r| r.re < 0.0).map(|r| -r).collect();
    let eig = ph.t.complex_eigenvalues();
    let eta_roots: Vec<Complex64> = eig.iter().map(|z| Complex64::new(-z.re, -z.im)).collect();
    if xi_roots.len() != eta_roots.len() + 1 {
        return Err(Error::CardinalityMismatch {
            i_card: xi_roots.len(),
            j_card: eta_roots.len(),
        });
    }
    debug_assert_eq!(eta_roots.len(), m);
    for i in 0..xi_roots.len() {
        for j in 0..i {
            if (xi_roots[i] - xi_roots[j]).norm() < 1e-7 * scale {
                return Err(Error::RepeatedRoots);
            }
        }
    }
    let eta_prod: Complex64 = eta_roots.iter().product();
    let a_coeffs: Vec<Complex64> = (0..xi_roots.len())
        .map(|i| {
            let xi = xi_roots[i];
            let num: Complex64 = eta_roots.iter().map(|e| e - xi).product();
            let other: Complex64 = (0..xi_roots.len())
                .filter(|&k| k != i)
                .map(|k| xi_roots[k] / (xi_roots[k] - xi))
                .product();
            num / eta_prod * other
        })
        .collect();
    let varrho = xi_roots.iter().zip(&a_coeffs).map(|(x, a)| x * a).sum::<Complex64>().re;
    Ok(PhClosedForm {
        data: PHRootData {
            xi_roots,
            eta_roots,
            a_coeffs,
            varrho,
        },
        rho: root.rho,
        delta,
        prefactor: 2.0 / (s2 * varrho),
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Closed {
    Bm(BmClosedForm),
    Ph(PhClosedForm),
}

/// `W^(δ)`, `W^(δ)'`, `Z^(δ)` tabulated on a grid, with the Lundberg root.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSet {
    pub delta: f64,
    pub root: LundbergRoot,
    pub w: GridFunction,
    pub w_prime: GridFunction,
    pub z: GridFunction,
    /// `W' − ρW`, tabulated directly to avoid cancellation.
    pub u_delta: GridFunction,
    pub route: ScaleRoute,
    closed: Option<Closed>,
}

impl ScaleSet {
    pub fn rho(&self) -> f64 {
        self.root.rho
    }

    pub fn x_max(&self) -> f64 {
        self.w.x_max()
    }

    /// `W(x)`, zero for `x < 0`.
    pub fn w_at(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        match &self.closed {
            Some(Closed::Bm(c)) => Ok(c.w(x)),
            Some(Closed::Ph(c)) => Ok(c.w(x)),
            None => self.w.eval(x),
        }
    }

    pub fn w_prime_at(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Ok(0.0);
        }
        match &self.closed {
            Some(Closed::Bm(c)) => Ok(c.w_prime(x)),
            Some(Closed::Ph(c)) => Ok(c.w_prime(x)),
            None => self.w_prime.eval(x),
        }
    }

    /// `Z(x)`, one for `x < 0`.
    pub fn z_at(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(1.0);
        }
        match &self.closed {
            Some(Closed::Bm(c)) => Ok(c.z(x)),
            Some(Closed::Ph(c)) => Ok(c.z(x)),
            None => self.z.eval(x),
        }
    }

    /// `e^{−ρx} W(x)`.
    pub fn tilted_at(&self, x: f64) -> Result<f64> {
        Ok((-self.rho() * x).exp() * self.w_at(x)?)
    }

    /// `E[e^{−δT_b}] = Z(b) − (δ/ρ) W(b)`.
    pub fn passage_transform(&self, b: f64) -> Result<f64> {
        Ok(self.z_at(b)? - self.delta / self.rho() * self.w_at(b)?)
    }

    /// `∂/∂b E[e^{−δT_b}] = δW(b) − (δ/ρ) W'(b)`.
    pub fn passage_transform_derivative(&self, b: f64) -> Result<f64> {
        Ok(self.delta * self.w_at(b)? - self.delta / self.rho() * self.w_prime_at(b)?)
    }

    /// Density of `U_δ(dx)`: `W'(x) − ρW(x)`.
    pub fn u_delta_density(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x > self.x_max() * (1.0 + 1e-12) {
            return Err(Error::OutOfGrid {
                x,
                lo: 0.0,
                hi: self.x_max(),
            });
        }
        match &self.closed {
            Some(Closed::Bm(c)) => Ok(c.u_delta(x)),
            Some(Closed::Ph(c)) => Ok(c.u_delta(x)),
            None => self.u_delta.eval(x.min(self.x_max())),
        }
    }
}

/// Free-function form of [`ScaleSet::passage_transform`].
pub fn scale_formula_transform(scales: &ScaleSet, b: f64) -> Result<f64> {
    if b < 0.0 || b > scales.x_max() * (1.0 + 1e-12) {
        return Err(Error::OutOfGrid {
            x: b,
            lo: 0.0,
            hi: scales.x_max(),
        });
    }
    scales.passage_transform(b)
}

/// Free-function form of [`ScaleSet::u_delta_density`].
pub fn u_delta_density(scales: &ScaleSet, x: f64) -> Result<f64> {
    scales.u_delta_density(x)
}

fn z_from_w(w: &GridFunction, delta: f64) -> GridFunction {
    w.cumulative_integral().map(|_, v| 1.0 + delta * v)
}

fn finish(
    delta: f64,
    root: LundbergRoot,
    grid: ScaleGrid,
    w: Vec<f64>,
    u: Vec<f64>,
    route: ScaleRoute,
    closed: Option<Closed>,
) -> Result<ScaleSet> {
    let w = GridFunction::new(0.0, grid.step, w)?.with_interp(Interp::CubicMonotone);
    let z = match &closed {
        Some(Closed::Bm(c)) => GridFunction::from_fn(0.0, grid.step, grid.n, |x| c.z(x))?,
        Some(Closed::Ph(c)) => GridFunction::from_fn(0.0, grid.step, grid.n, |x| c.z(x))?,
        None => z_from_w(&w, delta),
    };
    let rho = root.rho;
    let wp = w.values.iter().zip(&u).map(|(wv, uv)| rho * wv + uv).collect();
    let w_prime = GridFunction::new(0.0, grid.step, wp)?;
    let u_delta = GridFunction::new(0.0, grid.step, u)?;
    Ok(ScaleSet {
        delta,
        root,
        w,
        w_prime,
        z,
        u_delta,
        route,
        closed,
    })
}

/// Closed-form scale set: Brownian (any `δ ≥ 0`) or phase-type (`δ > 0`).
pub fn scale_closed(model: &ModelSpec, delta: f64, grid: ScaleGrid) -> Result<ScaleSet> {
    let root = solve_lundberg(model, delta)?;
    match model.kind() {
        ModelKind::BrownianDrift => {
            let c = BmClosedForm::new(model, delta)?;
            let w = (0..grid.n).map(|k| c.w(grid.x(k))).collect();
            let u = (0..grid.n).map(|k| c.u_delta(grid.x(k))).collect();
            finish(delta, root, grid, w, u, ScaleRoute::ClosedFormBM, Some(Closed::Bm(c)))
        }
        ModelKind::PerturbedCompoundPoissonPh => {
            let c = scale_closed_ph(model, delta)?;
            let w = (0..grid.n).map(|k| c.w(grid.x(k))).collect();
            let u = (0..grid.n).map(|k| c.u_delta(grid.x(k))).collect();
            finish(delta, root, grid, w, u, ScaleRoute::ClosedFormPH, Some(Closed::Ph(c)))
        }
        k => Err(Error::WrongKind(k.name())),
    }
}

/// Closed form where one exists, else the series route for `δ > 0` and
/// inversion at `δ = 0`.
pub fn scale_auto(model: &ModelSpec, delta: f64, grid: ScaleGrid) -> Result<ScaleSet> {
    match model.kind() {
        ModelKind::BrownianDrift => scale_closed(model, delta, grid),
        ModelKind::PerturbedCompoundPoissonPh if delta > 0.0 => scale_closed(model, delta, grid),
        _ if delta > 0.0 => scale_via_ode_series(model, delta, grid, 200),
        _ => scale_via_inversion(model, delta, grid, &InversionConfig::default()),
    }
}

/// Scale set by inverting the tilted transform `1/(φ_D(λ+ρ) − δ)` of
/// `e^{−ρx}W(x)` at every grid node.
pub fn scale_via_inversion(model: &ModelSpec, delta: f64, grid: ScaleGrid, cfg: &InversionConfig) -> Result<ScaleSet> {
    model.require_perturbation()?;
    cfg.validate()?;
    let root = solve_lundberg(model, delta)?;
    let rho = root.rho;
    let tr = ComplexFn(|l: Complex64| 1.0 / (model.phi_complex(l + rho) - delta));
    let tilted: Vec<f64> = (0..grid.n)
        .into_par_iter()
        .map(|k| if k == 0 { Ok(0.0) } else { laplace_invert(&tr, grid.x(k), cfg) })
        .collect::<Result<_>>()?;
    // Spot cross-validation against the other inversion method.
    for frac in [0.1, 0.5, 1.0] {
        let x = grid.x(((grid.n - 1) as f64 * frac).round().max(1.0) as usize);
        laplace_invert_checked(&tr, x, cfg)?;
    }
    let f = GridFunction::new(0.0, grid.step, tilted)?;
    let fp = f.derivative();
    let w: Vec<f64> = f.values.iter().enumerate().map(|(k, v)| (rho * grid.x(k)).exp() * v).collect();
    let u: Vec<f64> = (0..grid.n).map(|k| (rho * grid.x(k)).exp() * fp.values[k]).collect();
    finish(delta, root, grid, w, u, ScaleRoute::LaplaceInversion, None)
}

/// Scale set from the first-order equation `W' − ρW = H` with
/// `H = −(ρ/δ) ∂_b E[e^{−δT_b}]` expanded as a renewal series. Needs `δ > 0`.
pub fn scale_via_ode_series(model: &ModelSpec, delta: f64, grid: ScaleGrid, k_max: usize) -> Result<ScaleSet> {
    model.require_perturbation()?;
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("renewal-series route needs delta > 0, got {delta}")));
    }
    let root = solve_lundberg(model, delta)?;
    let rho = root.rho;
    let k = build_kernels(model, &root, &PenaltySpec::One, grid.step, grid.n)?;
    let (s_main, _) = neumann_series(&k.g, &k.h_prime, grid.step, 0, k_max)?;
    let (s_bdry, _) = neumann_series(&k.g, &k.g, grid.step, 0, k_max)?;
    let h0 = k.h[0];
    let big_h: Vec<f64> = s_main.iter().zip(&s_bdry).map(|(a, b)| -(rho / delta) * (a + h0 * b)).collect();
    // e^{−ρx}W(x) = ∫_0^x e^{−ρy} H(y) dy
    let integrand: Vec<f64> = big_h.iter().enumerate().map(|(k, hh)| (-rho * grid.x(k)).exp() * hh).collect();
    let tilde = GridFunction::new(0.0, grid.step, integrand)?.cumulative_integral();
    let w: Vec<f64> = tilde.values.iter().enumerate().map(|(i, v)| (rho * grid.x(i)).exp() * v).collect();
    finish(delta, root, grid, w, big_h, ScaleRoute::OdeSeries, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{integrate, QuadTol};

    fn bm() -> ModelSpec {
        ModelSpec::brownian(1.0, 1.0).unwrap()
    }

    fn ph_exp() -> ModelSpec {
        ModelSpec::phase_type(0.0, 1.0, 1.0, &[1.0], &[vec![-1.0]]).unwrap()
    }

    fn ph2() -> ModelSpec {
        ModelSpec::phase_type(0.2, 0.8, 1.5, &[0.6, 0.3], &[vec![-3.0, 1.0], vec![0.5, -1.5]]).unwrap()
    }

    fn pgamma() -> ModelSpec {
        ModelSpec::perturbed_gamma(0.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn bm_closed_values() {
        assert_eq!(scale_closed_bm(&bm(), 0.5, 0.0).unwrap(), 0.0);
        // δ = 0: W(x) = (e^{2x} − 1)/μ.
        let w = scale_closed_bm(&bm(), 0.0, 1.0).unwrap();
        assert!((w - (2f64.exp() - 1.0)).abs() < 1e-13);
        assert!(scale_closed_bm(&pgamma(), 0.5, 1.0).is_err());
    }

    #[test]
    fn bm_closed_laplace_identity() {
        let m = bm();
        let delta = 0.5;
        let rho = solve_lundberg(&m, delta).unwrap().rho;
        let lam = rho + 1.0;
        let c = BmClosedForm::new(&m, delta).unwrap();
        let v = crate::numerics::integrate_to_inf(|x| (-lam * x).exp() * c.w(x), 0.0, QuadTol::rel(1e-12)).unwrap();
        assert!((v - 1.0 / (m.phi(lam) - delta)).abs() < 1e-6);
    }

    #[test]
    fn bm_z_is_integral_of_w() {
        let c = BmClosedForm::new(&bm(), 0.7).unwrap();
        let int = integrate(|x| c.w(x), 0.0, 1.3, QuadTol::rel(1e-13)).unwrap();
        assert!((c.z(1.3) - 1.0 - 0.7 * int).abs() < 1e-11);
    }

    #[test]
    fn bm_passage_transform_value() {
        let s = scale_closed(&bm(), 0.5, ScaleGrid::for_threshold(1.0).unwrap()).unwrap();
        let v = scale_formula_transform(&s, 1.0).unwrap();
        assert!((v - (-(2f64.sqrt() - 1.0)).exp()).abs() < 1e-12);
        assert_eq!(scale_formula_transform(&s, 0.0).unwrap(), 1.0);
    }

    /// Residue sum `Σ_r e^{rx}/φ'(r)` over all roots of `φ(r) = δ`.
    fn residue_oracle(model: &ModelSpec, delta: f64, x: f64) -> f64 {
        let c = scale_closed_ph(model, delta).unwrap();
        let mut roots: Vec<Complex64> = c.data.xi_roots.iter().map(|x| -x).collect();
        roots.push(Complex64::new(c.rho, 0.0));
        roots
            .iter()
            .map(|r| {
                let h = 1e-6;
                let d = (model.phi_complex(r + h) - model.phi_complex(r - h)) / (2.0 * h);
                (r * x).exp() / d
            })
            .sum::<Complex64>()
            .re
    }

    #[test]
    fn ph_closed_form_structure() {
        for m in [ph_exp(), ph2()] {
            let c = scale_closed_ph(&m, 0.5).unwrap();
            assert_eq!(c.data.xi_roots.len(), c.data.eta_roots.len() + 1);
            assert_eq!(c.w(0.0), 0.0);
            for u in [0.0, 0.3, 1.0, 2.5, 7.0] {
                let u = Complex64::new(u, 0.0);
                let a = c.data.phi_minus_partial_fractions(u);
                let b = c.data.phi_minus_product(u);
                assert!((a - b).norm() < 1e-8);
            }
            assert!((c.passage_transform(0.0) - 1.0).abs() < 1e-10);
            for x in [0.5, 1.0, 2.0] {
                assert!(c.w_complex(x).im.abs() < 1e-10);
                let o = residue_oracle(&m, 0.5, x);
                assert!((c.w(x) - o).abs() < 1e-6 * o.abs(), "x={x}: {} vs {o}", c.w(x));
            }
            let lead = c.prefactor * c.terms().map(|(_, k)| k).sum::<Complex64>().re;
            assert!((lead - 1.0 / m.phi_prime(c.rho)).abs() < 1e-8);
        }
    }

    #[test]
    fn ph_closed_matches_inversion() {
        let m = ph_exp();
        let c = scale_closed_ph(&m, 0.5).unwrap();
        let tr = ComplexFn(|l: Complex64| 1.0 / (m.phi_complex(l) - 0.5));
        for x in [0.5, 1.0, 2.0] {
            // Direct inversion of the untilted transform with Talbot.
            let v = laplace_invert(&tr, x, &InversionConfig::talbot(48)).unwrap();
            assert!((c.w(x) - v).abs() < 1e-5 * v.abs().max(1.0));
        }
    }

    #[test]
    fn ph_passage_transform_matches_scale_formula() {
        let m = ph2();
        let s = scale_closed(&m, 0.5, ScaleGrid::for_threshold(1.0).unwrap()).unwrap();
        let c = scale_closed_ph(&m, 0.5).unwrap();
        for b in [0.25, 1.0, 3.0] {
            assert!((c.passage_transform(b) - s.passage_transform(b).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn inversion_matches_bm_closed_form() {
        let m = bm();
        let grid = ScaleGrid::new(1.0 / 128.0, 4.0).unwrap();
        let inv = scale_via_inversion(&m, 0.5, grid, &InversionConfig::default()).unwrap();
        let c = BmClosedForm::new(&m, 0.5).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..grid.n {
            let x = grid.x(k);
            worst = worst.max(((-c.rho * x).exp() * (inv.w.values[k] - c.w(x))).abs());
        }
        assert!(worst < 1e-4, "tilted sup error {worst}");
        assert_eq!(inv.z.values[0], 1.0);
        assert_eq!(inv.w.values[0], 0.0);
    }

    #[test]
    fn inversion_tilted_limit_gamma() {
        let m = pgamma();
        let grid = ScaleGrid::new(1.0 / 64.0, 12.0).unwrap();
        let s = scale_via_inversion(&m, 1.0, grid, &InversionConfig::default()).unwrap();
        let lim = 1.0 / m.phi_prime(s.rho());
        let end = s.tilted_at(s.x_max()).unwrap();
        assert!((end - lim).abs() < 0.05 * lim);
    }

    #[test]
    fn ode_series_matches_bm_closed_form() {
        let m = bm();
        let grid = ScaleGrid::for_threshold(1.0).unwrap();
        let s = scale_via_ode_series(&m, 0.5, grid, 200).unwrap();
        let c = BmClosedForm::new(&m, 0.5).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..grid.n {
            let x = grid.x(k);
            worst = worst.max(((-c.rho * x).exp() * (s.w.values[k] - c.w(x))).abs());
        }
        assert!(worst < 1e-6, "sup error {worst}");
        assert_eq!(s.w.values[0], 0.0);
    }

    #[test]
    fn ode_series_matches_inversion_for_gamma() {
        let m = pgamma();
        let grid = ScaleGrid::for_threshold(1.0).unwrap();
        let a = scale_via_ode_series(&m, 1.0, grid, 200).unwrap();
        let coarse = ScaleGrid::new(1.0 / 64.0, 4.0).unwrap();
        let b = scale_via_inversion(&m, 1.0, coarse, &InversionConfig::default()).unwrap();
        for k in 0..coarse.n {
            let x = coarse.x(k);
            let d = (a.tilted_at(x).unwrap() - b.tilted_at(x).unwrap()).abs();
            assert!(d < 1e-4, "x={x}: {d}");
        }
        assert!((a.w_prime.values[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn ode_series_matches_closed_ph() {
        let m = ph2();
        let grid = ScaleGrid::for_threshold(1.0).unwrap();
        let a = scale_via_ode_series(&m, 0.5, grid, 200).unwrap();
        let c = scale_closed_ph(&m, 0.5).unwrap();
        for k in (0..grid.n).step_by(64) {
            let x = grid.x(k);
            let d = (-c.rho * x).exp() * (a.w.values[k] - c.w(x));
            assert!(d.abs() < 1e-5, "x={x}: {d}");
        }
    }

    #[test]
    fn ode_series_rejects_zero_delta() {
        let grid = ScaleGrid::for_threshold(1.0).unwrap();
        assert!(scale_via_ode_series(&bm(), 0.0, grid, 200).is_err());
    }

    #[test]
    fn u_delta_laplace_transform_bm() {
        let m = bm();
        let delta = 0.5;
        let grid = ScaleGrid::new(1.0 / 256.0, 30.0).unwrap();
        let s = scale_closed(&m, delta, grid).unwrap();
        let beta = s.rho() + 1.0;
        let v = crate::numerics::integrate(
            |x| (-beta * x).exp() * s.u_delta_density(x).unwrap(),
            0.0,
            30.0,
            QuadTol::rel(1e-12),
        )
        .unwrap();
        let oracle = (s.rho() - beta) / (delta - m.phi(beta));
        assert!((v - oracle).abs() < 1e-5);
        assert!((s.u_delta_density(0.0).unwrap() - s.w_prime_at(0.0).unwrap()).abs() < 1e-15);
        for k in 0..grid.n {
            assert!(s.u_delta_density(grid.x(k)).unwrap() >= 0.0);
        }
    }
}

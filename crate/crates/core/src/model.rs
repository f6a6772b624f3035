//! Degradation models `D_t = μt + G_t + σB_t` and their Lévy exponents.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::special::{exp_integral_e1, exp_integral_e1_scaled};
use crate::numerics::{find_root_bracketed, GridFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    BrownianDrift,
    PureGamma,
    PerturbedGamma,
    #[serde(alias = "ph")]
    PerturbedCompoundPoissonPh,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BrownianDrift => "brownian_drift",
            ModelKind::PureGamma => "pure_gamma",
            ModelKind::PerturbedGamma => "perturbed_gamma",
            ModelKind::PerturbedCompoundPoissonPh => "perturbed_compound_poisson_ph",
        }
    }
}

/// Phase-type jump law, stored with a normalised initial vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseType {
    /// Initial distribution (sums to one).
    pub alpha: DVector<f64>,
    /// Sub-generator.
    pub t: DMatrix<f64>,
    /// Exit vector `-T 1`.
    pub exit: DVector<f64>,
}

impl PhaseType {
    pub fn order(&self) -> usize {
        self.alpha.len()
    }

    pub fn mean(&self) -> f64 {
        // -α T⁻¹ 1
        let ones = DVector::from_element(self.order(), 1.0);
        let x = self.t.clone().lu().solve(&ones).expect("sub-generator is invertible");
        -self.alpha.dot(&x)
    }

    /// `α e^{xT}` as a row vector.
    pub fn alpha_exp(&self, x: f64) -> DVector<f64> {
        let e = (&self.t * x).exp();
        e.transpose() * &self.alpha
    }

    pub fn density(&self, x: f64) -> f64 {
        self.alpha_exp(x).dot(&self.exit)
    }

    pub fn survival(&self, x: f64) -> f64 {
        self.alpha_exp(x).sum()
    }

    /// `α (uI − T)^{-k} t` for complex `u`.
    pub fn resolvent_power(&self, u: Complex64, k: u32) -> Complex64 {
        let m = self.order();
        let a = DMatrix::<Complex64>::from_fn(m, m, |i, j| {
            let d = if i == j { u } else { Complex64::new(0.0, 0.0) };
            d - Complex64::new(self.t[(i, j)], 0.0)
        });
        let lu = a.lu();
        let mut v = DVector::<Complex64>::from_fn(m, |i, _| Complex64::new(self.exit[i], 0.0));
        for _ in 0..k {
            v = lu.solve(&v).unwrap_or_else(|| DVector::from_element(m, Complex64::new(f64::NAN, 0.0)));
        }
        (0..m).map(|i| self.alpha[i] * v[i]).sum()
    }

    /// Real version of [`Self::resolvent_power`] with `α` replaced by `β`.
    pub fn resolvent_real(&self, beta: &DVector<f64>, u: f64, k: u32) -> f64 {
        let m = self.order();
        let a = DMatrix::<f64>::identity(m, m) * u - &self.t;
        let lu = a.lu();
        let mut v = self.exit.clone();
        for _ in 0..k {
            v = lu.solve(&v).unwrap_or_else(|| DVector::from_element(m, f64::NAN));
        }
        beta.dot(&v)
    }
}

/// Jump component of the model.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpPart {
    None,
    /// Gamma subordinator with shape rate `alpha` and scale `xi`.
    Gamma { alpha: f64, xi: f64 },
    /// Compound Poisson with `rate` (already multiplied by the initial
    /// vector mass) and phase-type jump sizes.
    PhaseType { rate: f64, ph: PhaseType },
}

/// A validated degradation model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    kind: ModelKind,
    mu: f64,
    sigma: f64,
    jumps: JumpPart,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("field `{name}`: must be finite and > 0, got {v}")))
    }
}

fn nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("field `{name}`: must be finite and >= 0, got {v}")))
    }
}

impl ModelSpec {
    pub fn brownian(mu: f64, sigma: f64) -> Result<Self> {
        nonneg("mu", mu)?;
        positive("sigma", sigma)?;
        Self::checked(ModelKind::BrownianDrift, mu, sigma, JumpPart::None)
    }

    pub fn pure_gamma(alpha: f64, xi: f64) -> Result<Self> {
        Self::pure_gamma_with_drift(0.0, alpha, xi)
    }

    pub fn pure_gamma_with_drift(mu: f64, alpha: f64, xi: f64) -> Result<Self> {
        nonneg("mu", mu)?;
        positive("alpha", alpha)?;
        positive("xi", xi)?;
        Self::checked(ModelKind::PureGamma, mu, 0.0, JumpPart::Gamma { alpha, xi })
    }

    pub fn perturbed_gamma(mu: f64, sigma: f64, alpha: f64, xi: f64) -> Result<Self> {
        nonneg("mu", mu)?;
        positive("sigma", sigma)?;
        positive("alpha", alpha)?;
        positive("xi", xi)?;
        Self::checked(ModelKind::PerturbedGamma, mu, sigma, JumpPart::Gamma { alpha, xi })
    }

    /// Compound Poisson with intensity `lambda` and phase-type jumps
    /// `(alpha_vec, t_mat)`; `alpha_vec` may be defective (sum < 1).
    pub fn phase_type(mu: f64, sigma: f64, lambda: f64, alpha_vec: &[f64], t_mat: &[Vec<f64>]) -> Result<Self> {
        nonneg("mu", mu)?;
        positive("sigma", sigma)?;
        positive("lambda", lambda)?;
        let m = alpha_vec.len();
        if m == 0 {
            return Err(Error::InvalidModel("field `alpha_vec`: must be non-empty".into()));
        }
        if t_mat.len() != m {
            return Err(Error::InvalidModel(format!("field `T`: expected {m} rows, got {}", t_mat.len())));
        }
        for (i, row) in t_mat.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidModel(format!("field `T[{i}]`: expected {m} entries, got {}", row.len())));
            }
        }
        for (i, &a) in alpha_vec.iter().enumerate() {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::InvalidModel(format!("field `alpha_vec[{i}]`: must be >= 0, got {a}")));
            }
        }
        let mass: f64 = alpha_vec.iter().sum();
        if mass > 1.0 + 1e-12 {
            return Err(Error::InvalidModel(format!("field `alpha_vec`: entries sum to {mass} > 1")));
        }
        if mass <= 0.0 {
            return Err(Error::InvalidModel("field `alpha_vec`: zero total mass".into()));
        }
        for i in 0..m {
            if !(t_mat[i][i] < 0.0) {
                return Err(Error::InvalidModel(format!("field `T[{i}][{i}]`: diagonal must be negative")));
            }
            for j in 0..m {
                if i != j && !(t_mat[i][j] >= 0.0) {
                    return Err(Error::InvalidModel(format!("field `T[{i}][{j}]`: off-diagonal must be >= 0")));
                }
            }
            let row_sum: f64 = t_mat[i].iter().sum();
            if row_sum > 1e-12 {
                return Err(Error::InvalidModel(format!("field `T[{i}]`: row sum {row_sum} is positive")));
            }
        }
        let t = DMatrix::from_fn(m, m, |i, j| t_mat[i][j]);
        if t.clone().lu().determinant().abs() < 1e-300 {
            return Err(Error::InvalidModel("field `T`: singular sub-generator".into()));
        }
        let exit = -(&t * DVector::from_element(m, 1.0));
        let alpha = DVector::from_iterator(m, alpha_vec.iter().map(|a| a / mass));
        let ph = PhaseType { alpha, t, exit };
        Self::checked(
            ModelKind::PerturbedCompoundPoissonPh,
            mu,
            sigma,
            JumpPart::PhaseType { rate: lambda * mass, ph },
        )
    }

    fn checked(kind: ModelKind, mu: f64, sigma: f64, jumps: JumpPart) -> Result<Self> {
        let m = Self { kind, mu, sigma, jumps };
        let mean = m.mean();
        if !(mean > 0.0) {
            return Err(Error::InvalidModel(format!("E[D_1] = {mean} must be positive")));
        }
        Ok(m)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn jumps(&self) -> &JumpPart {
        &self.jumps
    }
    pub fn has_jumps(&self) -> bool {
        !matches!(self.jumps, JumpPart::None)
    }

    pub fn require_perturbation(&self) -> Result<()> {
        if self.sigma > 0.0 {
            Ok(())
        } else {
            Err(Error::NoPerturbation)
        }
    }

    /// `E[D_1] = μ + ∫ x Q(dx)`.
    pub fn mean(&self) -> f64 {
        self.mu
            + match &self.jumps {
                JumpPart::None => 0.0,
                JumpPart::Gamma { alpha, xi } => alpha * xi,
                JumpPart::PhaseType { rate, ph } => rate * ph.mean(),
            }
    }

    /// `∫ (1 − e^{−ux}) Q(dx)`, the Laplace exponent of the jump part.
    pub fn jump_exponent(&self, u: f64) -> f64 {
        match &self.jumps {
            JumpPart::None => 0.0,
            JumpPart::Gamma { alpha, xi } => alpha * (xi * u).ln_1p(),
            JumpPart::PhaseType { rate, ph } => rate * (1.0 - ph.resolvent_real(&ph.alpha, u, 1)),
        }
    }

    /// `φ_D(u) = −μu − ∫(1 − e^{−ux})Q(dx) + σ²u²/2`.
    pub fn phi(&self, u: f64) -> f64 {
        if u == 0.0 {
            return 0.0;
        }
        -self.mu * u - self.jump_exponent(u) + 0.5 * self.sigma * self.sigma * u * u
    }

    /// φ_D continued to complex arguments with positive real part.
    pub fn phi_complex(&self, u: Complex64) -> Complex64 {
        let jump = match &self.jumps {
            JumpPart::None => Complex64::new(0.0, 0.0),
            JumpPart::Gamma { alpha, xi } => *alpha * (Complex64::new(1.0, 0.0) + *xi * u).ln(),
            JumpPart::PhaseType { rate, ph } => *rate * (Complex64::new(1.0, 0.0) - ph.resolvent_power(u, 1)),
        };
        -self.mu * u - jump + 0.5 * self.sigma * self.sigma * u * u
    }

    pub fn phi_prime(&self, u: f64) -> f64 {
        let jump = match &self.jumps {
            JumpPart::None => 0.0,
            JumpPart::Gamma { alpha, xi } => alpha * xi / (1.0 + xi * u),
            JumpPart::PhaseType { rate, ph } => rate * ph.resolvent_real(&ph.alpha, u, 2),
        };
        -self.mu - jump + self.sigma * self.sigma * u
    }

    pub fn phi_second(&self, u: f64) -> f64 {
        let jump = match &self.jumps {
            JumpPart::None => 0.0,
            JumpPart::Gamma { alpha, xi } => alpha * xi * xi / ((1.0 + xi * u) * (1.0 + xi * u)),
            JumpPart::PhaseType { rate, ph } => 2.0 * rate * ph.resolvent_real(&ph.alpha, u, 3),
        };
        self.sigma * self.sigma + jump
    }

    /// `∫_ε^∞ (1 − e^{−zx}) Q(dx)`.
    pub fn jump_exponent_truncated(&self, z: f64, eps: f64) -> f64 {
        match &self.jumps {
            JumpPart::None => 0.0,
            JumpPart::Gamma { alpha, xi } => alpha * (exp_integral_e1(eps / xi) - exp_integral_e1(eps * (z + 1.0 / xi))),
            JumpPart::PhaseType { rate, ph } => {
                let b = ph.alpha_exp(eps);
                rate * (b.sum() - (-z * eps).exp() * ph.resolvent_real(&b, z, 1))
            }
        }
    }

    /// Exponent of the process with jumps smaller than `eps` removed.
    pub fn phi_truncated(&self, u: f64, eps: f64) -> f64 {
        -self.mu * u - self.jump_exponent_truncated(u, eps) + 0.5 * self.sigma * self.sigma * u * u
    }

    pub fn levy_measure(&self) -> Result<LevyMeasureView<'_>> {
        match self.jumps {
            JumpPart::None => Err(Error::NoJumpPart),
            _ => Ok(LevyMeasureView { model: self }),
        }
    }

    /// Smallest `x` with `Q̄(x) < 1e-12 · Q̄(1e-3)`.
    pub fn default_x_max(&self) -> Result<f64> {
        let lm = self.levy_measure()?;
        let target = 1e-12 * lm.tail(1e-3);
        let mut hi = 1.0;
        while lm.tail(hi) >= target {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::NoConvergence { what: "Lévy tail truncation" });
            }
        }
        find_root_bracketed(|x| lm.tail(x) - target, 1e-3, hi, 0.0)
    }

    /// `J(s) = ∫_s^∞ e^{−ρ(x−s)} q(x) dx` for `s > 0`.
    pub fn tilted_tail(&self, rho: f64, s: f64) -> f64 {
        match &self.jumps {
            JumpPart::None => 0.0,
            JumpPart::Gamma { alpha, xi } => {
                if s <= 0.0 {
                    return f64::INFINITY;
                }
                alpha * (-s / xi).exp() * exp_integral_e1_scaled((rho + 1.0 / xi) * s)
            }
            JumpPart::PhaseType { rate, ph } => rate * ph.resolvent_real(&ph.alpha_exp(s), rho, 1),
        }
    }

    /// `K(s) = ∫_s^∞ e^{−ρ(x−s)} Q̄(x) dx`; at `s = 0` uses the identity
    /// `K(0) = (σ²ρ²/2 − μρ − φ(ρ))/ρ`.
    pub fn tilted_tail_integral(&self, rho: f64, s: f64) -> f64 {
        if s <= 0.0 {
            return self.jump_exponent(rho) / rho;
        }
        match self.jumps {
            JumpPart::None => 0.0,
            _ => {
                let tail = LevyMeasureView { model: self }.tail(s);
                ((tail - self.tilted_tail(rho, s)) / rho).max(0.0)
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "kind": self.kind.name(),
            "mu": self.mu,
            "sigma": self.sigma,
        });
        match &self.jumps {
            JumpPart::None => {}
            JumpPart::Gamma { alpha, xi } => {
                v["alpha"] = (*alpha).into();
                v["xi"] = (*xi).into();
            }
            JumpPart::PhaseType { rate, ph } => {
                let m = ph.order();
                v["lambda"] = (*rate).into();
                v["alpha_vec"] = ph.alpha.iter().copied().collect::<Vec<_>>().into();
                v["T"] = (0..m)
                    .map(|i| (0..m).map(|j| ph.t[(i, j)]).collect::<Vec<_>>())
                    .collect::<Vec<_>>()
                    .into();
            }
        }
        v
    }

    /// Parses the JSON model document. Syntax errors carry line and column;
    /// validation errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawModel = serde_json::from_str(text)
            .map_err(|e| Error::InvalidModel(format!("line {} column {}: {}", e.line(), e.column(), e)))?;
        raw.build()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: ModelKind,
    #[serde(default)]
    mu: f64,
    sigma: Option<f64>,
    alpha: Option<f64>,
    xi: Option<f64>,
    lambda: Option<f64>,
    alpha_vec: Option<Vec<f64>>,
    #[serde(rename = "T")]
    t: Option<Vec<Vec<f64>>>,
}

impl RawModel {
    fn build(self) -> Result<ModelSpec> {
        let need = |name: &str, v: Option<f64>| v.ok_or_else(|| Error::InvalidModel(format!("missing field `{name}`")));
        let forbid = |name: &str, present: bool| {
            if present {
                Err(Error::InvalidModel(format!("field `{name}` not allowed for kind `{}`", self.kind.name())))
            } else {
                Ok(())
            }
        };
        match self.kind {
            ModelKind::BrownianDrift => {
                forbid("alpha", self.alpha.is_some())?;
                forbid("xi", self.xi.is_some())?;
                forbid("lambda", self.lambda.is_some())?;
                ModelSpec::brownian(self.mu, need("sigma", self.sigma)?)
            }
            ModelKind::PureGamma => {
                if let Some(s) = self.sigma {
                    if s != 0.0 {
                        return Err(Error::InvalidModel("field `sigma`: must be 0 for pure_gamma".into()));
                    }
                }
                ModelSpec::pure_gamma_with_drift(self.mu, need("alpha", self.alpha)?, need("xi", self.xi)?)
            }
            ModelKind::PerturbedGamma => ModelSpec::perturbed_gamma(
                self.mu,
                need("sigma", self.sigma)?,
                need("alpha", self.alpha)?,
                need("xi", self.xi)?,
            ),
            ModelKind::PerturbedCompoundPoissonPh => {
                let a = self
                    .alpha_vec
                    .as_ref()
                    .ok_or_else(|| Error::InvalidModel("missing field `alpha_vec`".into()))?;
                let t = self.t.as_ref().ok_or_else(|| Error::InvalidModel("missing field `T`".into()))?;
                ModelSpec::phase_type(self.mu, need("sigma", self.sigma)?, need("lambda", self.lambda)?, a, t)
            }
        }
    }
}

/// Density, tail and partial first moment of the Lévy measure `Q`.
#[derive(Debug, Clone, Copy)]
pub struct LevyMeasureView<'a> {
    model: &'a ModelSpec,
}

impl LevyMeasureView<'_> {
    /// `q(x)` for `x > 0`.
    pub fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match &self.model.jumps {
            JumpPart::None => 0.0,
            JumpPart::Gamma { alpha, xi } => alpha * (-x / xi).exp() / x,
            JumpPart::PhaseType { rate, ph } => rate * ph.density(x),
        }
    }

    /// `Q̄(x) = Q([x, ∞))`; infinite at 0 for gamma kinds.
    pub fn tail(&self, x: f64) -> f64 {
        match &self.model.jumps {
            JumpPart::None => 0.0,
            JumpPart::Gamma { alpha, xi } => {
                if x <= 0.0 {
                    f64::INFINITY
                } else {
                    alpha * exp_integral_e1(x / xi)
                }
            }
            JumpPart::PhaseType { rate, ph } => rate * ph.survival(x.max(0.0)),
        }
    }

    /// `∫_0^x y Q(dy)`.
    pub fn partial_moment(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match &self.model.jumps {
            JumpPart::None => 0.0,
            JumpPart::Gamma { alpha, xi } => alpha * xi * -(-x / xi).exp_m1(),
            JumpPart::PhaseType { rate, ph } => {
                // ∫_x^∞ y f(y) dy = α e^{xT} (x·1 − T⁻¹1)
                let m = ph.order();
                let ones = DVector::from_element(m, 1.0);
                let tinv1 = ph.t.clone().lu().solve(&ones).expect("invertible");
                let upper = ph.alpha_exp(x).dot(&(ones * x - tinv1));
                rate * (ph.mean() - upper)
            }
        }
    }
}

/// Compound-Poisson approximation keeping the jumps of size at least `1/n`.
#[derive(Debug, Clone)]
pub struct CPApprox {
    pub n: u32,
    pub lambda_n: f64,
    /// `P_n` on `[1/n, x_max]`.
    pub jump_cdf: GridFunction,
    model: ModelSpec,
}

impl CPApprox {
    pub fn eps(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// `P_n(x)`; zero below `1/n`, one above the grid.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < self.eps() {
            0.0
        } else if x >= self.jump_cdf.x_max() {
            1.0 - self.model.levy_measure().map(|l| l.tail(x)).unwrap_or(0.0) / self.lambda_n
        } else {
            self.jump_cdf.at(x)
        }
    }

    /// Exponent `−μu − λ_n ∫(1 − e^{−ux})dP_n(x) + σ²u²/2` of the approximating process.
    pub fn phi(&self, u: f64) -> f64 {
        self.model.phi_truncated(u, self.eps())
    }
}

/// Builds the level-`n` compound-Poisson approximation on `[1/n, x_max]`.
pub fn cp_approximation(model: &ModelSpec, n: u32, x_max: f64) -> Result<CPApprox> {
    if n == 0 {
        return Err(Error::Domain("approximation level n must be >= 1".into()));
    }
    let lm = model.levy_measure()?;
    let eps = 1.0 / n as f64;
    if !(x_max > eps) {
        return Err(Error::Domain(format!("x_max = {x_max} must exceed 1/n = {eps}")));
    }
    let lambda_n = lm.tail(eps);
    let points = 2049;
    let h = (x_max - eps) / (points - 1) as f64;
    let jump_cdf = GridFunction::from_fn(eps, h, points, |x| ((lambda_n - lm.tail(x)) / lambda_n).clamp(0.0, 1.0))?;
    Ok(CPApprox {
        n,
        lambda_n,
        jump_cdf,
        model: model.clone(),
    })
}

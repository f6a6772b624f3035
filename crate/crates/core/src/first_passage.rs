//! First-passage time `T_b = inf{t ≥ 0 : D_t ≥ b}`.

use crate::error::{Error, Result};
use crate::model::{JumpPart, ModelKind, ModelSpec};
use crate::lundberg::solve_lundberg;
use crate::numerics::special::{digamma, hyp2f2, ln_gamma, lower_incomplete_gamma, regularized_gamma_q};
use crate::numerics::{GridFunction, Interp};
use crate::penalty::PenaltySpec;
use crate::renewal::{build_kernels, neumann_series};
use crate::scale::{scale_closed_ph, ScaleGrid, ScaleSet};

pub const DEFAULT_K_MAX: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassageRoute {
    PKSeries,
    ScaleFormula,
    ClosedForm,
}

impl PassageRoute {
    pub fn name(self) -> &'static str {
        match self {
            PassageRoute::PKSeries => "pk",
            PassageRoute::ScaleFormula => "scale",
            PassageRoute::ClosedForm => "closed",
        }
    }
}

/// `b ↦ φ_w(δ, b)` on a grid starting at `b = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PassageTransform {
    pub delta: f64,
    pub b_grid: GridFunction,
    pub route: PassageRoute,
}

impl PassageTransform {
    pub fn at(&self, b: f64) -> Result<f64> {
        self.b_grid.eval(b)
    }

    pub fn x_max(&self) -> f64 {
        self.b_grid.x_max()
    }
}

/// Renewal-series (Pollaczek–Khinchine) solution for a general penalty.
pub fn pk_series_transform(
    model: &ModelSpec,
    delta: f64,
    penalty: &PenaltySpec,
    grid: ScaleGrid,
    k_max: usize,
) -> Result<PassageTransform> {
    model.require_perturbation()?;
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("series route needs delta > 0, got {delta}")));
    }
    let root = solve_lundberg(model, delta)?;
    let k = build_kernels(model, &root, penalty, grid.step, grid.n)?;
    let (phi, _) = neumann_series(&k.g, &k.h, grid.step, 0, k_max)?;
    Ok(PassageTransform {
        delta,
        b_grid: GridFunction::new(0.0, grid.step, phi)?.with_interp(Interp::CubicMonotone),
        route: PassageRoute::PKSeries,
    })
}

/// `Z(b) − (δ/ρ)W(b)` tabulated on the scale set's own grid.
pub fn scale_formula_passage(scales: &ScaleSet) -> Result<PassageTransform> {
    let g = &scales.w;
    let vals = (0..g.len()).map(|k| scales.passage_transform(g.x(k))).collect::<Result<Vec<_>>>()?;
    Ok(PassageTransform {
        delta: scales.delta,
        b_grid: GridFunction::new(0.0, g.h, vals)?.with_interp(Interp::CubicMonotone),
        route: PassageRoute::ScaleFormula,
    })
}

/// Closed-form `E[e^{−δT_b}]` for Brownian and phase-type models.
pub fn closed_form_transform(model: &ModelSpec, delta: f64, b: f64) -> Result<f64> {
    if b < 0.0 {
        return Err(Error::OutOfDomain(format!("threshold must be >= 0, got {b}")));
    }
    match model.kind() {
        ModelKind::BrownianDrift => {
            let (mu, s2) = (model.mu(), model.sigma() * model.sigma());
            let gamma = (mu * mu + 2.0 * delta * s2).sqrt();
            Ok((-(gamma - mu) * b / s2).exp())
        }
        ModelKind::PerturbedCompoundPoissonPh => ph_transform(model, delta, b),
        k => Err(Error::WrongKind(k.name())),
    }
}

/// Closed-form route tabulated on a grid.
pub fn closed_form_passage(model: &ModelSpec, delta: f64, grid: ScaleGrid) -> Result<PassageTransform> {
    let vals = match model.kind() {
        ModelKind::PerturbedCompoundPoissonPh => {
            let c = scale_closed_ph(model, delta)?;
            (0..grid.n).map(|k| c.passage_transform(grid.x(k))).collect()
        }
        _ => (0..grid.n).map(|k| closed_form_transform(model, delta, grid.x(k))).collect::<Result<Vec<_>>>()?,
    };
    Ok(PassageTransform {
        delta,
        b_grid: GridFunction::new(0.0, grid.step, vals)?.with_interp(Interp::CubicMonotone),
        route: PassageRoute::ClosedForm,
    })
}

/// `E[e^{−δT_b}] = Σ A_i e^{−ξ_i b}` for the phase-type model.
pub fn ph_transform(model: &ModelSpec, delta: f64, b: f64) -> Result<f64> {
    Ok(scale_closed_ph(model, delta)?.passage_transform(b))
}

fn pure_gamma_params(model: &ModelSpec) -> Result<(f64, f64)> {
    match (model.kind(), model.jumps()) {
        (ModelKind::PureGamma, JumpPart::Gamma { alpha, xi }) => {
            if model.mu() != 0.0 {
                return Err(Error::UnsupportedDrift);
            }
            Ok((*alpha, *xi))
        }
        (k, _) => Err(Error::WrongKind(k.name())),
    }
}

fn check_bt(b: f64, t: f64) -> Result<()> {
    if b > 0.0 && t > 0.0 {
        Ok(())
    } else {
        Err(Error::OutOfDomain(format!("need b > 0 and t > 0, got b = {b}, t = {t}")))
    }
}

/// `P(T_b ≤ t) = Γ(αt, b/ξ)/Γ(αt)` for the pure gamma process.
pub fn gamma_exact_cdf(model: &ModelSpec, b: f64, t: f64) -> Result<f64> {
    let (alpha, xi) = pure_gamma_params(model)?;
    check_bt(b, t)?;
    regularized_gamma_q(alpha * t, b / xi)
}

/// Density of `T_b` for the pure gamma process.
pub fn gamma_exact_pdf(model: &ModelSpec, b: f64, t: f64) -> Result<f64> {
    let (alpha, xi) = pure_gamma_params(model)?;
    check_bt(b, t)?;
    let s = alpha * t;
    let x = b / xi;
    let lg = ln_gamma(s);
    let first = alpha * (digamma(s) - x.ln()) * lower_incomplete_gamma(s, x)? / lg.exp();
    let f22 = hyp2f2(s, s, s + 1.0, s + 1.0, -x)?;
    let second = alpha * (s * x.ln() - 2.0 * s.ln() - lg).exp() * f22;
    Ok(first + second)
}

/// Inverse Gaussian density of `T_b` for Brownian motion with drift.
pub fn inverse_gaussian_pdf(model: &ModelSpec, b: f64, t: f64) -> Result<f64> {
    if model.kind() != ModelKind::BrownianDrift {
        return Err(Error::WrongKind(model.kind().name()));
    }
    if t <= 0.0 {
        return Ok(0.0);
    }
    let (mu, s2) = (model.mu(), model.sigma() * model.sigma());
    let d = b - mu * t;
    Ok(b / (2.0 * std::f64::consts::PI * s2 * t * t * t).sqrt() * (-d * d / (2.0 * t * s2)).exp())
}

/// Normal approximation of `T_b` for large `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CltApprox {
    pub mean: f64,
    pub std: f64,
}

impl CltApprox {
    pub fn variance(&self) -> f64 {
        self.std * self.std
    }
}

/// `mean = b/E[D_1]`, `var = b·φ''(0)/|φ'(0)|³`.
pub fn clt_passage_approx(model: &ModelSpec, b: f64) -> Result<CltApprox> {
    let d1 = -model.phi_prime(0.0);
    if !(d1 > 0.0) {
        return Err(Error::Domain("mean drift must be positive".into()));
    }
    let var = b * model.phi_second(0.0) / d1.powi(3);
    Ok(CltApprox { mean: b / d1, std: var.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{integrate, integrate_to_inf, QuadTol};
    use crate::scale::{scale_closed, scale_via_inversion};
    use crate::numerics::InversionConfig;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

    const BM_VALUE: f64 = 0.660_859_801_406_827_9;

    fn bm() -> ModelSpec {
        ModelSpec::brownian(1.0, 1.0).unwrap()
    }

    fn pg() -> ModelSpec {
        ModelSpec::perturbed_gamma(0.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn ph_exp() -> ModelSpec {
        ModelSpec::phase_type(0.0, 1.0, 1.0, &[1.0], &[vec![-1.0]]).unwrap()
    }

    #[test]
    fn bm_value_constant() {
        assert!((BM_VALUE - (1.0 - 2f64.sqrt()).exp()).abs() < 1e-15);
    }

    #[test]
    fn pk_series_bm_example() {
        let grid = ScaleGrid::for_threshold(1.0).unwrap();
        let p = pk_series_transform(&bm(), 0.5, &PenaltySpec::One, grid, DEFAULT_K_MAX).unwrap();
        assert!((p.at(1.0).unwrap() - BM_VALUE).abs() < 1e-6);
        assert_eq!(p.at(0.0).unwrap(), 1.0);
    }

    #[test]
    fn pk_series_matches_scale_formula_gamma() {
        let grid = ScaleGrid::for_threshold(1.0).unwrap();
        let p = pk_series_transform(&pg(), 1.0, &PenaltySpec::One, grid, DEFAULT_K_MAX).unwrap();
        let coarse = ScaleGrid::new(1.0 / 64.0, 2.0).unwrap();
        let s = scale_via_inversion(&pg(), 1.0, coarse, &InversionConfig::default()).unwrap();
        let v = crate::scale::scale_formula_transform(&s, 1.0).unwrap();
        assert!((p.at(1.0).unwrap() - v).abs() < 1e-3);
    }

    #[test]
    fn scale_formula_bm_and_monotone() {
        let s = scale_closed(&bm(), 0.5, ScaleGrid::for_threshold(1.0).unwrap()).unwrap();
        let p = scale_formula_passage(&s).unwrap();
        assert!((p.at(1.0).unwrap() - BM_VALUE).abs() < 1e-10);
        assert!(p.b_grid.values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn gamma_cdf_examples() {
        let m = ModelSpec::pure_gamma(1.0, 1.0).unwrap();
        assert!((gamma_exact_cdf(&m, 1.0, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-12);
        assert!(gamma_exact_cdf(&m, 1.0, 1e-6).unwrap() < 1e-5);
        let m2 = ModelSpec::pure_gamma(2.0, 0.5).unwrap();
        // D_2 ~ Gamma(shape 4, scale 0.5).
        let oracle = 1.0 - GammaDist::new(4.0, 2.0).unwrap().cdf(1.0);
        assert!((gamma_exact_cdf(&m2, 1.0, 2.0).unwrap() - oracle).abs() < 1e-10);
        assert!(gamma_exact_cdf(&bm(), 1.0, 1.0).is_err());
    }

    #[test]
    fn gamma_pdf_consistency() {
        let m = ModelSpec::pure_gamma(1.0, 1.0).unwrap();
        let int = integrate(|t| gamma_exact_pdf(&m, 1.0, t).unwrap(), 1e-12, 5.0, QuadTol::rel(1e-10)).unwrap();
        assert!((int - gamma_exact_cdf(&m, 1.0, 5.0).unwrap()).abs() < 1e-6);
        for k in 0..200 {
            let t = 0.05 + k as f64 * (10.0 - 0.05) / 199.0;
            assert!(gamma_exact_pdf(&m, 1.0, t).unwrap() >= 0.0);
        }
        let h = 1e-5;
        let fd = (gamma_exact_cdf(&m, 1.0, 1.0 + h).unwrap() - gamma_exact_cdf(&m, 1.0, 1.0 - h).unwrap()) / (2.0 * h);
        assert!((fd - gamma_exact_pdf(&m, 1.0, 1.0).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn inverse_gaussian_examples() {
        let m = bm();
        assert!((inverse_gaussian_pdf(&m, 1.0, 1.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-12);
        let tol = QuadTol::rel(1e-12);
        let mass = integrate_to_inf(|t| inverse_gaussian_pdf(&m, 1.0, t).unwrap(), 0.0, tol).unwrap();
        assert!((mass - 1.0).abs() < 1e-8);
        let lt = integrate_to_inf(|t| (-0.5 * t).exp() * inverse_gaussian_pdf(&m, 1.0, t).unwrap(), 0.0, tol).unwrap();
        assert!((lt - BM_VALUE).abs() < 1e-6);
    }

    #[test]
    fn ph_transform_examples() {
        let m = ph_exp();
        assert!((ph_transform(&m, 0.5, 0.0).unwrap() - 1.0).abs() < 1e-12);
        let grid = ScaleGrid::for_threshold(2.0).unwrap();
        let p = pk_series_transform(&m, 0.5, &PenaltySpec::One, grid, DEFAULT_K_MAX).unwrap();
        let s = scale_closed(&m, 0.5, grid).unwrap();
        for b in [0.5, 1.0, 2.0] {
            let v = ph_transform(&m, 0.5, b).unwrap();
            assert!((v - p.at(b).unwrap()).abs() < 1e-4);
            assert!((v - s.passage_transform(b).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn closed_form_route_rejects_gamma() {
        assert!(closed_form_transform(&pg(), 0.5, 1.0).is_err());
        assert!((closed_form_transform(&bm(), 0.5, 1.0).unwrap() - BM_VALUE).abs() < 1e-15);
    }

    #[test]
    fn clt_examples() {
        let c = clt_passage_approx(&pg(), 100.0).unwrap();
        assert!((c.mean - 100.0).abs() < 1e-9 && (c.variance() - 200.0).abs() < 1e-6);
        let c = clt_passage_approx(&bm(), 100.0).unwrap();
        assert!((c.mean - 100.0).abs() < 1e-9 && (c.variance() - 100.0).abs() < 1e-9);
        let cs: Vec<_> = [25.0, 100.0, 400.0].iter().map(|b| clt_passage_approx(&pg(), *b).unwrap()).collect();
        assert!((cs[1].mean / cs[0].mean - 4.0).abs() < 1e-12);
        assert!((cs[2].std / cs[1].std - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bm_overshoot_indicator_vanishes() {
        let grid = ScaleGrid::for_threshold(1.0).unwrap();
        let p = pk_series_transform(&bm(), 0.5, &PenaltySpec::OvershootIndicator(0.1), grid, DEFAULT_K_MAX).unwrap();
        assert!(p.b_grid.sup_norm() < 1e-10);
    }

    #[test]
    fn pk_bounds_and_monotonicity_gamma() {
        let grid = ScaleGrid::new(1.0 / 128.0, 2.0).unwrap();
        let a = pk_series_transform(&pg(), 0.5, &PenaltySpec::One, grid, DEFAULT_K_MAX).unwrap();
        let b = pk_series_transform(&pg(), 2.0, &PenaltySpec::One, grid, DEFAULT_K_MAX).unwrap();
        for (x, y) in a.b_grid.values.iter().zip(&b.b_grid.values) {
            assert!((0.0..=1.0 + 1e-9).contains(x));
            assert!(y <= &(x + 1e-9));
        }
        assert!(a.b_grid.values.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn bm_transform_bounded_monotone(mu in 0.1f64..3.0, sigma in 0.2f64..3.0, d1 in 0.01f64..5.0, d2 in 0.01f64..5.0, b1 in 0.0f64..5.0, b2 in 0.0f64..5.0) {
            let m = ModelSpec::brownian(mu, sigma).unwrap();
            let v = closed_form_transform(&m, d1.min(d2), b1.min(b2)).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(closed_form_transform(&m, d1.max(d2), b1.min(b2)).unwrap() <= v);
            prop_assert!(closed_form_transform(&m, d1.min(d2), b1.max(b2)).unwrap() <= v);
        }
    }
}

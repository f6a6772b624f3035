//! Cross-validation suites: analytic routes against each other and against
//! the Monte Carlo oracle.

use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

use crate::error::Result;
use crate::first_passage::{closed_form_transform, gamma_exact_cdf, pk_series_transform, scale_formula_passage, DEFAULT_K_MAX};
use crate::io::{Cell, Table};
use crate::last_passage::{last_passage_cdf, last_passage_joint_mass, Escape};
use crate::mc::{duality_check, estimate_first_passage, FirstFunctional, SimConfig};
use crate::model::{JumpPart, ModelKind, ModelSpec};
use crate::numerics::InversionConfig;
use crate::penalty::PenaltySpec;
use crate::scale::{scale_via_inversion, scale_via_ode_series, ScaleGrid};

/// One row of a validation table.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub model: String,
    pub suite: &'static str,
    pub value: f64,
    pub reference: f64,
    /// Allowed `|value − reference|`.
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRow {
    fn new(model: &str, suite: &'static str, value: f64, reference: f64, tolerance: f64) -> Self {
        Self {
            model: model.to_string(),
            suite,
            value,
            reference,
            tolerance,
            pass: (value - reference).abs() <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub quick: bool,
    pub seed: u64,
}

impl SuiteConfig {
    fn paths(&self) -> usize {
        if self.quick {
            4_000
        } else {
            100_000
        }
    }
}

const DELTA: f64 = 0.5;
const B: f64 = 1.0;

fn route_rows(name: &str, model: &ModelSpec, rows: &mut Vec<CheckRow>) -> Result<f64> {
    let grid = ScaleGrid::for_threshold(B)?;
    let pk = pk_series_transform(model, DELTA, &PenaltySpec::One, grid, DEFAULT_K_MAX)?.at(B)?;
    let ode = scale_via_ode_series(model, DELTA, grid, DEFAULT_K_MAX)?;
    let sc = scale_formula_passage(&ode)?.at(B)?;
    rows.push(CheckRow::new(name, "first-passage pk vs scale", pk, sc, 1e-3));
    if matches!(model.kind(), ModelKind::BrownianDrift | ModelKind::PerturbedCompoundPoissonPh) {
        rows.push(CheckRow::new(name, "first-passage pk vs closed", pk, closed_form_transform(model, DELTA, B)?, 1e-3));
    }

    // Laplace identity for W at β = ρ + 5 on [0, 6].
    let wide = scale_via_ode_series(model, DELTA, ScaleGrid::new(1.0 / 1024.0, 6.0)?, DEFAULT_K_MAX)?;
    let beta = wide.rho() + 5.0;
    let g = &wide.w;
    let vals: Vec<f64> = (0..g.len()).map(|k| (-beta * g.x(k)).exp() * g.values[k]).collect();
    let lt = crate::numerics::quad::simpson_samples(&vals, g.h);
    let want = 1.0 / (model.phi(beta) - DELTA);
    rows.push(CheckRow::new(name, "scale Laplace identity (rel)", lt / want, 1.0, 1e-4));

    let inv = scale_via_inversion(model, DELTA, ScaleGrid::new(1.0 / 64.0, 4.0 * B)?, &InversionConfig::default())?;
    let sup = (0..inv.w.len())
        .map(|k| {
            let x = inv.w.x(k);
            Ok((inv.tilted_at(x)? - ode.tilted_at(x)?).abs())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    rows.push(CheckRow::new(name, "scale inversion vs ode (sup)", sup, 0.0, 1e-3));
    Ok(pk)
}

fn last_rows(name: &str, model: &ModelSpec, rows: &mut Vec<CheckRow>) -> Result<()> {
    let e = Escape::new(model)?;
    let total = last_passage_cdf(model, &e, B, 1.0)? + last_passage_joint_mass(model, &e, B, 1.0)?;
    rows.push(CheckRow::new(name, "last-passage mass split", total, 1.0, 1e-5));
    Ok(())
}

fn mc_config(cfg: &SuiteConfig, t_max: f64, salt: u64) -> Result<SimConfig> {
    SimConfig::new(0.02, t_max, cfg.paths(), cfg.seed.wrapping_add(salt))
}

/// Runs every suite on the given models.
pub fn run_suites(models: &[(String, ModelSpec)], cfg: &SuiteConfig) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for (salt, (name, model)) in models.iter().enumerate() {
        let salt = salt as u64 * 1000;
        if model.sigma() > 0.0 {
            let analytic = route_rows(name, model, &mut rows)?;
            let t_max = 40.0 / model.mean().max(0.05);
            let r = estimate_first_passage(model, &mc_config(cfg, t_max, salt)?, B, FirstFunctional::LaplaceAt(DELTA))?;
            rows.push(CheckRow::new(name, "first-passage MC (3 SE)", r.estimate, analytic, 3.0 * r.std_error));
            last_rows(name, model, &mut rows)?;
        } else if model.kind() == ModelKind::PureGamma && model.mu() == 0.0 {
            let exact = gamma_exact_cdf(model, B, 1.0)?;
            let (alpha, xi) = match model.jumps() {
                JumpPart::Gamma { alpha, xi } => (*alpha, *xi),
                _ => unreachable!("pure gamma model"),
            };
            let oracle = GammaDist::new(alpha, 1.0 / xi).map_or(f64::NAN, |g| g.sf(B));
            rows.push(CheckRow::new(name, "park-padgett vs gamma cdf", exact, oracle, 1e-10));
            let r = estimate_first_passage(model, &mc_config(cfg, 1.0, salt)?, B, FirstFunctional::CdfAt(1.0))?;
            rows.push(CheckRow::new(name, "first-passage cdf MC (3 SE)", r.estimate, exact, 3.0 * r.std_error));
        }
        if model.kind() != ModelKind::PureGamma {
            let (refl, pass) = duality_check(model, &mc_config(cfg, 1.0, salt + 1)?, B, 1.0)?;
            let tol = 3.0 * refl.std_error.hypot(pass.std_error);
            rows.push(CheckRow::new(name, "duality MC (3 SE)", refl.estimate, pass.estimate, tol));
        }
    }
    Ok(rows)
}

pub fn rows_to_table(rows: &[CheckRow]) -> Table {
    let mut t = Table::new(&["model", "suite", "value", "reference", "tolerance", "status"]);
    for r in rows {
        t.push(vec![
            Cell::from(r.model.as_str()),
            Cell::from(r.suite),
            r.value.into(),
            r.reference.into(),
            r.tolerance.into(),
            Cell::from(if r.pass { "PASS" } else { "FAIL" }),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes_on_bm() {
        let models = vec![("bm".to_string(), ModelSpec::brownian(1.0, 1.0).unwrap())];
        let rows = run_suites(&models, &SuiteConfig { quick: true, seed: 1 }).unwrap();
        assert!(rows.len() >= 6);
        assert!(rows.iter().all(|r| r.pass), "{rows:#?}");
    }
}

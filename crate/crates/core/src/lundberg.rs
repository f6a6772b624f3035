//! Roots of the generalized Lundberg equation `φ_D(ρ) = δ`.

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::numerics::find_root_bracketed;

/// The positive root `ρ(δ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LundbergRoot {
    pub delta: f64,
    pub rho: f64,
}

impl LundbergRoot {
    /// Density of `Û_δ(dx)`: `e^{−ρx}`.
    pub fn u_hat_density(&self, x: f64) -> f64 {
        (-self.rho * x).exp()
    }

    /// Total mass `1/ρ` of `Û_δ`.
    pub fn u_hat_mass(&self) -> f64 {
        1.0 / self.rho
    }
}

/// Free-function form of [`LundbergRoot::u_hat_density`].
pub fn u_hat_delta_density(root: &LundbergRoot, x: f64) -> f64 {
    root.u_hat_density(x)
}

fn check_delta(delta: f64) -> Result<()> {
    if delta >= 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("discount rate must be >= 0, got {delta}")))
    }
}

/// Root of a convex `f` with `f(0) = −δ` beyond `lo`, doubling `hi`.
fn convex_root<F: Fn(f64) -> f64>(f: F, lo: f64, delta: f64) -> Result<f64> {
    let mut hi = (2.0 * lo).max(1.0);
    let mut steps = 0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
        steps += 1;
        if steps > 200 || !hi.is_finite() {
            return Err(Error::BracketFailure(format!("no upper bracket found for delta = {delta}")));
        }
    }
    find_root_bracketed(&f, lo, hi, 0.0).map_err(|e| match e {
        Error::NoBracket { lo, hi } => Error::BracketFailure(format!("no sign change on [{lo}, {hi}]")),
        other => other,
    })
}

/// Unique `ρ > 0` with `φ_D(ρ) = δ`.
pub fn solve_lundberg(model: &ModelSpec, delta: f64) -> Result<LundbergRoot> {
    model.require_perturbation()?;
    check_delta(delta)?;
    let f = |u: f64| model.phi(u) - delta;
    let lo = if delta > 0.0 {
        0.0
    } else {
        // Start past the minimiser of φ, where φ < 0.
        let mut hi = 1.0;
        while model.phi_prime(hi) <= 0.0 {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::BracketFailure("phi' never turns positive".into()));
            }
        }
        find_root_bracketed(|u| model.phi_prime(u), 0.0, hi, 0.0)?
    };
    let rho = convex_root(f, lo, delta)?;
    Ok(LundbergRoot { delta, rho })
}

/// Root `ρ_n` of the Lundberg equation for the compound-Poisson
/// approximation keeping jumps `≥ 1/n`.
pub fn lundberg_truncated(model: &ModelSpec, delta: f64, n: u32) -> Result<f64> {
    model.require_perturbation()?;
    model.levy_measure()?;
    check_delta(delta)?;
    if n == 0 {
        return Err(Error::Domain("truncation level n must be >= 1".into()));
    }
    let eps = 1.0 / n as f64;
    let f = |u: f64| model.phi_truncated(u, eps) - delta;
    let lo = if delta > 0.0 {
        0.0
    } else {
        let mut lo = 1e-6;
        while f(lo) >= 0.0 {
            lo *= 0.01;
            if lo < 1e-300 {
                return Err(Error::BracketFailure("truncated exponent has no negative region".into()));
            }
        }
        lo
    };
    convex_root(f, lo, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Plain bisection on `ρ²/2 − ln(1+ρ) = δ`.
    fn bisect_pgamma(delta: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, 10.0_f64);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if m * m / 2.0 - (1.0 + m).ln() < delta {
                lo = m;
            } else {
                hi = m;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn brownian_roots() {
        let bm = ModelSpec::brownian(1.0, 1.0).unwrap();
        assert!((solve_lundberg(&bm, 0.0).unwrap().rho - 2.0).abs() < 1e-12);
        assert!((solve_lundberg(&bm, 0.5).unwrap().rho - (1.0 + 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn perturbed_gamma_root() {
        let m = ModelSpec::perturbed_gamma(0.0, 1.0, 1.0, 1.0).unwrap();
        let r = solve_lundberg(&m, 1.0).unwrap();
        let oracle = bisect_pgamma(1.0);
        assert!((r.rho - oracle).abs() < 1e-12);
        assert!((r.rho - 2.058).abs() < 1e-3);
        assert!((m.phi(r.rho) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pure_gamma_rejected() {
        let m = ModelSpec::pure_gamma(1.0, 1.0).unwrap();
        assert_eq!(solve_lundberg(&m, 1.0).unwrap_err(), Error::NoPerturbation);
    }

    #[test]
    fn truncated_roots_increase_to_rho() {
        let m = ModelSpec::perturbed_gamma(0.0, 1.0, 1.0, 1.0).unwrap();
        let rho = solve_lundberg(&m, 1.0).unwrap().rho;
        let r10 = lundberg_truncated(&m, 1.0, 10).unwrap();
        let r100 = lundberg_truncated(&m, 1.0, 100).unwrap();
        assert!(r10 <= r100 && r100 <= rho);
    }

    #[test]
    fn truncated_phase_type_close_to_rho() {
        let m = ModelSpec::phase_type(0.0, 1.0, 1.0, &[1.0], &[vec![-1.0]]).unwrap();
        let rho = solve_lundberg(&m, 0.5).unwrap().rho;
        let r = lundberg_truncated(&m, 0.5, 1_000_000).unwrap();
        assert!(r <= rho && rho - r < 1e-6);
    }

    #[test]
    fn u_hat_examples() {
        let r = LundbergRoot { delta: 0.0, rho: 2.0 };
        assert_eq!(r.u_hat_density(0.0), 1.0);
        assert!((u_hat_delta_density(&r, 1.0) - (-2.0f64).exp()).abs() < 1e-16);
        assert_eq!(r.u_hat_mass(), 0.5);
    }

    proptest! {
        #[test]
        fn root_satisfies_equation(mu in 0.0f64..2.0, sigma in 0.3f64..2.0, alpha in 0.2f64..3.0, xi in 0.2f64..2.0, delta in 0.0f64..5.0) {
            let m = ModelSpec::perturbed_gamma(mu, sigma, alpha, xi).unwrap();
            let r = solve_lundberg(&m, delta).unwrap();
            prop_assert!(r.rho > 0.0);
            prop_assert!((m.phi(r.rho) - delta).abs() <= 1e-10 * delta.max(1.0));
        }

        #[test]
        fn truncated_root_monotone_in_delta(n in 1u32..2000) {
            let m = ModelSpec::perturbed_gamma(0.2, 1.0, 1.0, 1.0).unwrap();
            let a = lundberg_truncated(&m, 0.1, n).unwrap();
            let b = lundberg_truncated(&m, 1.0, n).unwrap();
            let c = lundberg_truncated(&m, 10.0, n).unwrap();
            prop_assert!(a < b && b < c);
        }
    }
}

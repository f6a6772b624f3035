//! Passage above `b` of the process reflected at its running infimum,
//! `D*_t = D_t − inf_{s ≤ t}(D_s ∧ 0)`.

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::numerics::GridFunction;
use crate::scale::ScaleSet;

pub const KERNEL_POINTS: usize = 512;

/// `r̂(y) = W(b)W'(y)/W'(b) − W(y)` on `[0, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectedPassageKernel {
    pub delta: f64,
    pub b: f64,
    pub r_hat: GridFunction,
}

impl ReflectedPassageKernel {
    pub fn new(scales: &ScaleSet, b: f64) -> Result<Self> {
        Self::with_points(scales, b, KERNEL_POINTS)
    }

    pub fn with_points(scales: &ScaleSet, b: f64, n: usize) -> Result<Self> {
        if !(b > 0.0) || b > scales.x_max() * (1.0 + 1e-12) {
            return Err(Error::OutOfGrid {
                x: b,
                lo: 0.0,
                hi: scales.x_max(),
            });
        }
        let wb = scales.w_at(b)?;
        let wpb = scales.w_prime_at(b)?;
        let h = b / (n - 1) as f64;
        let mut vals = (0..n)
            .map(|k| {
                let y = k as f64 * h;
                Ok(wb * scales.w_prime_at(y)? / wpb - scales.w_at(y)?)
            })
            .collect::<Result<Vec<_>>>()?;
        vals[n - 1] = 0.0;
        Ok(Self {
            delta: scales.delta,
            b,
            r_hat: GridFunction::new(0.0, h, vals)?,
        })
    }

    pub fn at(&self, y: f64) -> Result<f64> {
        self.r_hat.eval(y)
    }
}

/// Density in `(y, z)` of `E[e^{−δT*_b}; D*_{T*_b−} ∈ dy, D*_{T*_b} ∈ dz]`
/// for crossings by a jump: `q(z − y)·r̂(y)`.
pub fn reflected_passage_density(model: &ModelSpec, kernel: &ReflectedPassageKernel, y: f64, z: f64) -> Result<f64> {
    let lm = model.levy_measure()?;
    if !(0.0..=kernel.b).contains(&y) || z <= kernel.b {
        return Err(Error::OutOfDomain(format!(
            "need 0 <= y <= b < z, got y = {y}, z = {z}, b = {}",
            kernel.b
        )));
    }
    Ok(lm.density(z - y) * kernel.at(y)?)
}

/// `∫_0^b r̂(y) Q̄(b − y) dy`: total transform mass of jump crossings.
pub fn reflected_jump_mass(model: &ModelSpec, kernel: &ReflectedPassageKernel) -> Result<f64> {
    let lm = model.levy_measure()?;
    let g = &kernel.r_hat;
    let vals: Vec<f64> = (0..g.len())
        .map(|k| {
            let y = g.x(k);
            let tail = lm.tail(kernel.b - y);
            if tail.is_finite() {
                g.values[k] * tail
            } else {
                0.0
            }
        })
        .collect();
    // The log singularity of Q̄ at y = b meets r̂(b) = 0, so the trapezoid
    // rule converges.
    Ok(crate::numerics::quad::trapezoid_samples(&vals, g.h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::InversionConfig;
    use crate::scale::{scale_closed, scale_via_inversion, scale_via_ode_series, ScaleGrid};

    fn ph_exp() -> ModelSpec {
        ModelSpec::phase_type(0.0, 1.0, 1.0, &[1.0], &[vec![-1.0]]).unwrap()
    }

    #[test]
    fn kernel_vanishes_at_boundary() {
        let m = ph_exp();
        let s = scale_closed(&m, 0.5, ScaleGrid::for_threshold(1.0).unwrap()).unwrap();
        let k = ReflectedPassageKernel::new(&s, 1.0).unwrap();
        assert_eq!(k.at(1.0).unwrap(), 0.0);
        assert_eq!(reflected_passage_density(&m, &k, 1.0, 1.5).unwrap(), 0.0);
    }

    #[test]
    fn density_separable_in_z() {
        let m = ph_exp();
        let s = scale_closed(&m, 0.5, ScaleGrid::for_threshold(1.0).unwrap()).unwrap();
        let k = ReflectedPassageKernel::new(&s, 1.0).unwrap();
        let y = 0.4;
        let r = reflected_passage_density(&m, &k, y, 1.2).unwrap() / reflected_passage_density(&m, &k, y, 2.0).unwrap();
        assert!((r - (-(1.2f64 - y)).exp() / (-(2.0f64 - y)).exp()).abs() < 1e-12);
    }

    #[test]
    fn pure_diffusion_has_no_jump_density() {
        let m = ModelSpec::brownian(1.0, 1.0).unwrap();
        let s = scale_closed(&m, 0.5, ScaleGrid::for_threshold(1.0).unwrap()).unwrap();
        let k = ReflectedPassageKernel::new(&s, 1.0).unwrap();
        assert_eq!(reflected_passage_density(&m, &k, 0.5, 1.5).unwrap_err(), Error::NoJumpPart);
    }

    #[test]
    fn kernel_nonnegative_all_kinds() {
        let models = [
            ModelSpec::brownian(1.0, 1.0).unwrap(),
            ModelSpec::perturbed_gamma(0.0, 1.0, 1.0, 1.0).unwrap(),
            ph_exp(),
        ];
        for m in &models {
            for delta in [0.25, 1.0] {
                let s = scale_via_ode_series(m, delta, ScaleGrid::for_threshold(1.0).unwrap(), 200).unwrap();
                let k = ReflectedPassageKernel::new(&s, 1.0).unwrap();
                assert!(k.r_hat.values.iter().all(|v| *v >= -1e-12), "{:?} δ={delta}", m.kind());
            }
        }
    }

    #[test]
    fn kernel_stable_across_routes() {
        let m = ModelSpec::perturbed_gamma(0.0, 1.0, 1.0, 1.0).unwrap();
        let a = scale_via_ode_series(&m, 1.0, ScaleGrid::for_threshold(1.0).unwrap(), 200).unwrap();
        let b = scale_via_inversion(&m, 1.0, ScaleGrid::new(1.0 / 256.0, 1.0).unwrap(), &InversionConfig::default()).unwrap();
        let ka = ReflectedPassageKernel::new(&a, 1.0).unwrap();
        let kb = ReflectedPassageKernel::new(&b, 1.0).unwrap();
        let d = ka.r_hat.values.iter().zip(&kb.r_hat.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d <= 1e-3, "{d}");
    }
}

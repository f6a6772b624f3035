//! Tabulated functions on uniform grids.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interp {
    #[default]
    Linear,
    /// Fritsch–Carlson monotone cubic Hermite.
    CubicMonotone,
}

/// What to do when evaluating outside the tabulated range.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Extrapolation {
    #[default]
    Error,
    /// Clamp to the nearest endpoint value.
    Flat,
    /// Fixed value outside the range (e.g. zero for a density).
    Constant(f64),
}

/// A real function sampled at `x0 + k h`, `k = 0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub x0: f64,
    pub h: f64,
    pub values: Vec<f64>,
    pub interp: Interp,
    pub extrapolation: Extrapolation,
}

impl GridFunction {
    pub fn new(x0: f64, h: f64, values: Vec<f64>) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::GridMismatch(format!("grid step must be positive, got {h}")));
        }
        if values.is_empty() {
            return Err(Error::GridMismatch("empty grid".into()));
        }
        Ok(Self {
            x0,
            h,
            values,
            interp: Interp::Linear,
            extrapolation: Extrapolation::Error,
        })
    }

    /// Samples `f` at `n` points starting at `x0`.
    pub fn from_fn<F: FnMut(f64) -> f64>(x0: f64, h: f64, n: usize, mut f: F) -> Result<Self> {
        let values = (0..n).map(|k| f(x0 + k as f64 * h)).collect();
        Self::new(x0, h, values)
    }

    pub fn with_interp(mut self, interp: Interp) -> Self {
        self.interp = interp;
        self
    }

    pub fn with_extrapolation(mut self, e: Extrapolation) -> Self {
        self.extrapolation = e;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, k: usize) -> f64 {
        self.x0 + k as f64 * self.h
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.len() - 1)
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.x(k))
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.len() == other.len()
            && (self.x0 - other.x0).abs() <= 1e-12 * self.h
            && ((self.h - other.h) / self.h).abs() <= 1e-12
    }

    pub fn map<F: Fn(f64, f64) -> f64>(&self, f: F) -> Self {
        let mut out = self.clone();
        for (k, v) in out.values.iter_mut().enumerate() {
            *v = f(self.x0 + k as f64 * self.h, *v);
        }
        out
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Cumulative trapezoid integral `x ↦ ∫_{x0}^x f` on the same grid.
    pub fn cumulative_integral(&self) -> Self {
        let mut out = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in self.values.windows(2) {
            acc += 0.5 * self.h * (w[0] + w[1]);
            out.push(acc);
        }
        Self {
            values: out,
            ..self.clone()
        }
    }

    /// Trapezoid integral over the whole grid.
    pub fn integral(&self) -> f64 {
        crate::numerics::quad::trapezoid_samples(&self.values, self.h)
    }

    /// Evaluates with interpolation; out-of-range behaviour per the
    /// extrapolation mode.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let lo = self.x0;
        let hi = self.x_max();
        let slack = 1e-9 * self.h;
        if x.is_nan() {
            return Err(Error::OutOfGrid { x, lo, hi });
        }
        if x < lo - slack || x > hi + slack {
            return match self.extrapolation {
                Extrapolation::Error => Err(Error::OutOfGrid { x, lo, hi }),
                Extrapolation::Flat => Ok(if x < lo { self.values[0] } else { *self.values.last().unwrap() }),
                Extrapolation::Constant(c) => Ok(c),
            };
        }
        let n = self.len();
        if n == 1 {
            return Ok(self.values[0]);
        }
        let s = ((x - lo) / self.h).clamp(0.0, (n - 1) as f64);
        let k = (s.floor() as usize).min(n - 2);
        let t = s - k as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        match self.interp {
            Interp::Linear => Ok(y0 + t * (y1 - y0)),
            Interp::CubicMonotone => {
                let (m0, m1) = (self.pchip_slope(k), self.pchip_slope(k + 1));
                let t2 = t * t;
                let t3 = t2 * t;
                let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
                let h10 = t3 - 2.0 * t2 + t;
                let h01 = -2.0 * t3 + 3.0 * t2;
                let h11 = t3 - t2;
                Ok(h00 * y0 + h10 * self.h * m0 + h01 * y1 + h11 * self.h * m1)
            }
        }
    }

    /// Evaluation that panics outside the grid; for internal use on points
    /// known to be inside.
    pub fn at(&self, x: f64) -> f64 {
        self.eval(x).expect("grid evaluation inside range")
    }

    fn secant(&self, k: usize) -> f64 {
        (self.values[k + 1] - self.values[k]) / self.h
    }

    fn pchip_slope(&self, k: usize) -> f64 {
        let n = self.len();
        if n == 2 {
            return self.secant(0);
        }
        if k == 0 || k == n - 1 {
            // One-sided three-point estimate, limited to keep monotonicity.
            let (d0, d1) = if k == 0 {
                (self.secant(0), self.secant(1))
            } else {
                (self.secant(n - 2), self.secant(n - 3))
            };
            let m = 1.5 * d0 - 0.5 * d1;
            if m * d0 <= 0.0 {
                0.0
            } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
                3.0 * d0
            } else {
                m
            }
        } else {
            let (d0, d1) = (self.secant(k - 1), self.secant(k));
            if d0 * d1 <= 0.0 {
                0.0
            } else {
                2.0 / (1.0 / d0 + 1.0 / d1)
            }
        }
    }

    /// Centered finite-difference derivative on the grid, one-sided
    /// second-order at the ends.
    pub fn derivative(&self) -> Self {
        let n = self.len();
        let v = &self.values;
        let h = self.h;
        let mut d = vec![0.0; n];
        if n >= 3 {
            for k in 1..n - 1 {
                d[k] = (v[k + 1] - v[k - 1]) / (2.0 * h);
            }
            d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
            d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
        } else if n == 2 {
            d[0] = (v[1] - v[0]) / h;
            d[1] = d[0];
        }
        Self {
            values: d,
            ..self.clone()
        }
    }

    /// Trapezoid convolution `(f ⋆ g)(x_k) = ∫_0^{x_k} f(s) g(x_k - s) ds`
    /// on a common grid starting at 0.
    pub fn convolve(&self, other: &Self) -> Result<Self> {
        grid_convolve(self, other)
    }
}

/// See [`GridFunction::convolve`].
pub fn grid_convolve(f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    if !f.same_grid(g) {
        return Err(Error::GridMismatch(format!(
            "grids differ: ({}, {}, {}) vs ({}, {}, {})",
            f.x0,
            f.h,
            f.len(),
            g.x0,
            g.h,
            g.len()
        )));
    }
    if f.x0.abs() > 1e-12 * f.h {
        return Err(Error::GridMismatch("convolution grids must start at 0".into()));
    }
    let values = crate::numerics::conv::trapezoid_convolve(&f.values, &g.values, f.h);
    Ok(GridFunction {
        values,
        ..f.clone()
    })
}

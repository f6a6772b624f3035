//! Inspection/maintenance policies: one-cycle kernels, the kernel chain for
//! the failure cycle `I`, the idle time `Δ*` and the regeneration time `T*`,
//! and a policy simulator.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::last_passage::{DtDensity, Escape};
use crate::mc::{run_paths, LastTracker, PathGen, PathLaw, Segment, SimConfig, SimResult};
use crate::model::ModelSpec;
use crate::numerics::{integrate_with_breaks, QuadTol};

pub const STATE_POINTS: usize = 512;
pub const MAX_CYCLES: usize = 10_000;
const CHAIN_FLOOR: f64 = 1e-14;

/// Inspection interval `m(x)` as a function of the post-maintenance state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum IntervalFn {
    Constant { c: f64 },
    /// `max(m_min, c0 − c1·x)`.
    Affine { c0: f64, c1: f64, m_min: f64 },
    /// `m0·e^{−κx} + m_min`.
    Exponential { m0: f64, kappa: f64, m_min: f64 },
}

impl IntervalFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Constant { c } => c,
            Self::Affine { c0, c1, m_min } => m_min.max(c0 - c1 * x),
            Self::Exponential { m0, kappa, m_min } => m0 * (-kappa * x).exp() + m_min,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidPolicy(m.into()));
        match *self {
            Self::Constant { c } if !(c > 0.0 && c.is_finite()) => bad("interval c must be > 0"),
            Self::Affine { c1, m_min, .. } if !(m_min > 0.0) || !(c1 >= 0.0) => bad("affine interval needs m_min > 0 and c1 >= 0"),
            Self::Exponential { m0, kappa, m_min } if !(m_min > 0.0) || !(m0 >= 0.0) || !(kappa >= 0.0) => {
                bad("exponential interval needs m_min > 0, m0 >= 0, kappa >= 0")
            }
            _ => Ok(()),
        }
    }
}

/// Maintenance action `d(x)` applied to the inspected level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MaintenanceFn {
    /// `θx + d0` with `0 < θ ≤ 1`.
    Affine { theta: f64, d0: f64 },
    /// Perfect repair: every survivor restarts at 0.
    Reset,
}

impl MaintenanceFn {
    pub fn identity() -> Self {
        Self::Affine { theta: 1.0, d0: 0.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Affine { theta, d0 } => theta * x + d0,
            Self::Reset => 0.0,
        }
    }

    pub fn inverse(&self, y: f64) -> Result<f64> {
        match *self {
            Self::Affine { theta, d0 } => Ok((y - d0) / theta),
            Self::Reset => Err(Error::NonBijectiveMaintenance(y)),
        }
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        match *self {
            Self::Affine { theta, .. } if theta > 0.0 => Ok(theta),
            _ => Err(Error::NonBijectiveMaintenance(x)),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::Affine { theta, d0 } if !(theta > 0.0 && theta <= 1.0) || !d0.is_finite() => {
                Err(Error::InvalidPolicy("affine maintenance needs 0 < theta <= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Threshold, interval rule and maintenance rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub b: f64,
    pub m: IntervalFn,
    pub d: MaintenanceFn,
}

impl PolicySpec {
    pub fn new(b: f64, m: IntervalFn, d: MaintenanceFn) -> Result<Self> {
        let p = Self { b, m, d };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0) || !self.b.is_finite() {
            return Err(Error::InvalidPolicy(format!("threshold b must be finite and > 0, got {}", self.b)));
        }
        self.m.validate()?;
        self.d.validate()?;
        let xs: Vec<f64> = (0..=64).map(|k| -2.0 * self.b + k as f64 * self.b / 16.0).collect();
        if xs.windows(2).any(|w| self.m.eval(w[1]) > self.m.eval(w[0]) * (1.0 + 1e-12)) {
            return Err(Error::InvalidPolicy("m must be nonincreasing".into()));
        }
        if let MaintenanceFn::Affine { .. } = self.d {
            for &x in &xs {
                if (self.d.inverse(self.d.eval(x))? - x).abs() > 1e-10 * (1.0 + x.abs()) {
                    return Err(Error::NonBijectiveMaintenance(x));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidPolicy(format!("line {} column {}: {}", e.line(), e.column(), e)))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable policy")
    }
}

fn quad_tol() -> QuadTol {
    QuadTol {
        abs: 1e-13,
        rel: 1e-9,
        max_intervals: 2000,
    }
}

/// One-cycle kernels `A`, `C` and `C_r` for a model and policy.
#[derive(Debug, Clone)]
pub struct PolicyKernels<'a> {
    pub model: &'a ModelSpec,
    pub escape: Escape,
    pub policy: PolicySpec,
}

impl<'a> PolicyKernels<'a> {
    pub fn new(model: &'a ModelSpec, policy: PolicySpec) -> Result<Self> {
        policy.validate()?;
        if model.mean() <= 0.0 {
            return Err(Error::Domain("failure by last passage needs E[D_1] > 0".into()));
        }
        Ok(Self {
            model,
            escape: Escape::new(model)?,
            policy,
        })
    }

    /// `∫ esc(y + a − b) f_t(a) da = P_y(L_b < t)`.
    fn escaped_before(&self, y: f64, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(self.escape.prob(y - self.policy.b));
        }
        let d = DtDensity::new(self.model, t)?;
        let (lo, hi) = d.support();
        let from = (self.policy.b - y).max(lo);
        if from >= hi {
            return Ok(0.0);
        }
        let mut breaks = vec![from];
        let mean = t * self.model.mean();
        if mean > from && mean < hi {
            breaks.push(mean);
        }
        breaks.push(hi);
        let b = self.policy.b;
        integrate_with_breaks(|a| self.escape.prob(y + a - b) * d.pdf(a).unwrap_or(f64::NAN), &breaks, quad_tol())
    }

    /// Density of the next state `y` given survival of the cycle from `x`.
    pub fn a(&self, x: f64, y: f64) -> Result<f64> {
        let d = DtDensity::new(self.model, self.policy.m.eval(x))?;
        self.a_with(&d, x, y)
    }

    fn a_with(&self, d: &DtDensity, x: f64, y: f64) -> Result<f64> {
        let s = self.policy.d.inverse(y)?;
        let jac = self.policy.d.derivative(s)?;
        let (lo, hi) = d.support();
        if s - x < lo || s - x > hi {
            return Ok(0.0);
        }
        Ok((1.0 - self.escape.prob(s - self.policy.b)) * d.pdf(s - x)? / jac)
    }

    /// Failure probability before the next inspection from state `y`.
    pub fn c(&self, y: f64) -> Result<f64> {
        Ok(self.escaped_before(y, self.policy.m.eval(y))?.clamp(0.0, 1.0))
    }

    /// `P[Δ* ≥ z | failure in this cycle]` from state `y`.
    pub fn c_r(&self, y: f64, z: f64) -> Result<f64> {
        let c = self.c(y)?;
        if c < 1e-12 {
            return Err(Error::ConditioningOnNull(c));
        }
        Ok(self.c_cr(y, z)? / c)
    }

    /// `C(y)·C_r(y, z)`, defined without conditioning.
    pub fn c_cr(&self, y: f64, z: f64) -> Result<f64> {
        let m = self.policy.m.eval(y);
        if !(0.0..=m).contains(&z) {
            return Err(Error::OutOfDomain(format!("idle time z = {z} outside [0, {m}]")));
        }
        Ok(self.escaped_before(y, m - z)?.clamp(0.0, 1.0))
    }

    /// `∫ A(x, dy)` by adaptive quadrature in `y`.
    pub fn a_mass(&self, x: f64) -> Result<f64> {
        let t = self.policy.m.eval(x);
        let d = DtDensity::new(self.model, t)?;
        if let MaintenanceFn::Reset = self.policy.d {
            return Ok(1.0 - self.c(x)?);
        }
        let (lo, hi) = d.support();
        let dm = &self.policy.d;
        let mut breaks = vec![dm.eval(x + lo)];
        for s in [x + t * self.model.mean(), self.policy.b] {
            if s > x + lo && s < x + hi {
                breaks.push(dm.eval(s));
            }
        }
        breaks.push(dm.eval(x + hi));
        breaks.sort_by(f64::total_cmp);
        integrate_with_breaks(|y| self.a_with(&d, x, y).unwrap_or(f64::NAN), &breaks, quad_tol())
    }
}

/// Uniform state grid with `d(b)` on node `kink`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    pub y0: f64,
    pub h: f64,
    pub n: usize,
    pub kink: usize,
}

/// Gregory end-corrected trapezoid weights on `n` nodes.
fn gregory(n: usize) -> Vec<f64> {
    let mut w = vec![1.0; n];
    if n < 8 {
        w[0] = 0.5;
        w[n - 1] = 0.5;
        if n == 1 {
            w[0] = 0.0;
        }
        return w;
    }
    for (k, c) in [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0].into_iter().enumerate() {
        w[k] = c;
        w[n - 1 - k] = c;
    }
    w
}

impl StateGrid {
    pub fn y(&self, k: usize) -> f64 {
        self.y0 + k as f64 * self.h
    }

    /// Quadrature weights, split at the kink so each side is smooth.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = gregory(self.kink + 1);
        let right = gregory(self.n - self.kink);
        w[self.kink] += right[0];
        w.extend_from_slice(&right[1..]);
        w.iter_mut().for_each(|x| *x *= self.h);
        w
    }

    pub fn integrate(&self, v: &[f64]) -> f64 {
        self.weights().iter().zip(v).map(|(w, x)| w * x).sum()
    }

    /// Covers one cycle of displacement from 0 and the escape tail above `b`.
    pub fn for_kernels(k: &PolicyKernels, n: usize) -> Result<Self> {
        let p = &k.policy;
        let d = DtDensity::new(k.model, p.m.eval(0.0))?;
        let (lo, hi) = d.support();
        let s_hi = if k.escape.rho0.is_finite() {
            (p.b + 23.0 / k.escape.rho0).min(hi.max(p.b))
        } else {
            p.b
        };
        let y_lo = p.d.eval(lo.min(0.0)).min(0.0);
        let y_hi = p.d.eval(s_hi).max(0.0);
        let n = n.max(16);
        let anchor = p.d.eval(p.b);
        if !k.escape.rho0.is_finite() {
            // Nothing survives above b: end the grid on d(b).
            let h = (anchor - y_lo) / (n - 1) as f64;
            return Ok(Self { y0: y_lo, h, n, kink: n - 1 });
        }
        let h = (y_hi - y_lo) / (n - 2) as f64;
        let shift = ((anchor - y_lo) / h).fract() * h;
        let y0 = y_lo + shift - h;
        let kink = ((anchor - y0) / h).round() as usize;
        Ok(Self { y0, h, n, kink })
    }
}

#[derive(Debug, Clone)]
enum ChainState {
    /// Densities on the state grid.
    Grid { grid: StateGrid, c: Vec<f64>, kmat: Vec<Vec<f64>> },
    /// Every survivor restarts at 0.
    Reset { c0: f64 },
}

/// Forward kernel chain: densities `v_k` of the state after `k` surviving
/// cycles and accumulated-time densities `u_k`.
#[derive(Debug, Clone)]
pub struct KernelChain<'a> {
    pub kernels: PolicyKernels<'a>,
    state: ChainState,
    summand: fn(&PolicySpec, f64) -> f64,
}

/// Cycle length `m(y)`; the default summand of the accumulated time.
pub fn cycle_length(p: &PolicySpec, y: f64) -> f64 {
    p.m.eval(y)
}

/// Joint law of `I` with the states, idle time and regeneration time.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainLaw {
    pub i: usize,
    pub p_i: f64,
    /// State before the failing cycle (`y_{i−1}`) as a density on the grid,
    /// absent for `i = 1` and for perfect repair.
    pub state_density: Option<Vec<f64>>,
    pub expected_time: f64,
}

impl<'a> KernelChain<'a> {
    pub fn new(kernels: PolicyKernels<'a>) -> Result<Self> {
        Self::with_points(kernels, STATE_POINTS)
    }

    pub fn with_points(kernels: PolicyKernels<'a>, n: usize) -> Result<Self> {
        let state = match kernels.policy.d {
            MaintenanceFn::Reset => ChainState::Reset { c0: kernels.c(0.0)? },
            MaintenanceFn::Affine { .. } => {
                let grid = StateGrid::for_kernels(&kernels, n)?;
                let kref = &kernels;
                let rows = (0..=grid.n)
                    .into_par_iter()
                    .map(|i| {
                        // Row `grid.n` is the start state 0.
                        let x = if i == grid.n { 0.0 } else { grid.y(i) };
                        let d = DtDensity::new(kref.model, kref.policy.m.eval(x))?;
                        (0..grid.n).map(|j| kref.a_with(&d, x, grid.y(j))).collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                let c = (0..=grid.n)
                    .into_par_iter()
                    .map(|i| kref.c(if i == grid.n { 0.0 } else { grid.y(i) }))
                    .collect::<Result<Vec<_>>>()?;
                ChainState::Grid { grid, c, kmat: rows }
            }
        };
        Ok(Self {
            kernels,
            state,
            summand: cycle_length,
        })
    }

    /// Replaces `m(y_k)` in the time accumulator.
    pub fn with_summand(mut self, f: fn(&PolicySpec, f64) -> f64) -> Self {
        self.summand = f;
        self
    }

    pub fn grid(&self) -> Option<&StateGrid> {
        match &self.state {
            ChainState::Grid { grid, .. } => Some(grid),
            ChainState::Reset { .. } => None,
        }
    }

    /// Laws for `i = 1..=i_max`, with `G(y) = C(y)` or `C(y)C_r(y, z)`
    /// supplied by `last`.
    fn run<G: Fn(f64) -> Result<f64>>(&self, i_max: usize, last: G) -> Result<Vec<ChainLaw>> {
        let p = &self.kernels.policy;
        let f0 = (self.summand)(p, 0.0);
        let mut out = Vec::with_capacity(i_max);
        match &self.state {
            ChainState::Reset { c0 } => {
                let g0 = last(0.0)?;
                let mut survive = 1.0;
                for i in 1..=i_max {
                    out.push(ChainLaw {
                        i,
                        p_i: survive * g0,
                        state_density: None,
                        expected_time: survive * g0 * i as f64 * f0,
                    });
                    survive *= 1.0 - c0;
                }
            }
            ChainState::Grid { grid, kmat, .. } => {
                let n = grid.n;
                let ys: Vec<f64> = (0..n).map(|k| grid.y(k)).collect();
                let w = grid.weights();
                let g: Vec<f64> = ys.iter().map(|&y| last(y)).collect::<Result<_>>()?;
                let fy: Vec<f64> = ys.iter().map(|&y| (self.summand)(p, y)).collect();
                let g0 = last(0.0)?;
                out.push(ChainLaw {
                    i: 1,
                    p_i: g0,
                    state_density: None,
                    expected_time: f0 * g0,
                });
                let mut v = kmat[n].clone();
                let mut u: Vec<f64> = v.iter().map(|x| x * f0).collect();
                for i in 2..=i_max {
                    let mass = grid.integrate(&v);
                    if mass < CHAIN_FLOOR {
                        return Err(Error::GridUnderflow(CHAIN_FLOOR));
                    }
                    let pv: Vec<f64> = v.iter().zip(&g).map(|(a, b)| a * b).collect();
                    let tv: Vec<f64> = (0..n).map(|k| (u[k] + fy[k] * v[k]) * g[k]).collect();
                    out.push(ChainLaw {
                        i,
                        p_i: grid.integrate(&pv),
                        state_density: Some(v.clone()),
                        expected_time: grid.integrate(&tv),
                    });
                    if i == i_max {
                        break;
                    }
                    let (nv, nu): (Vec<f64>, Vec<f64>) = (0..n)
                        .into_par_iter()
                        .map(|j| {
                            let mut a = 0.0;
                            let mut b = 0.0;
                            for k in 0..n {
                                let kk = kmat[k][j] * w[k];
                                a += v[k] * kk;
                                b += (u[k] + fy[k] * v[k]) * kk;
                            }
                            (a, b)
                        })
                        .unzip();
                    v = nv;
                    u = nu;
                }
            }
        }
        Ok(out)
    }

    /// `P[I = i]`, state law and `E[T*·1{I=i}]` for `i = 1..=i_max`.
    pub fn joint_law_i_states(&self, i_max: usize) -> Result<Vec<ChainLaw>> {
        let k = &self.kernels;
        match &self.state {
            ChainState::Grid { grid, c, .. } => {
                let n = grid.n;
                let lookup = |y: f64| -> Result<f64> {
                    if y == 0.0 {
                        return Ok(c[n]);
                    }
                    let idx = ((y - grid.y0) / grid.h).round() as usize;
                    Ok(c[idx.min(n - 1)])
                };
                self.run(i_max, lookup)
            }
            ChainState::Reset { .. } => self.run(i_max, |y| k.c(y)),
        }
    }

    /// `P[Δ* > z, I = i]` for `i = 1..=i_max`.
    pub fn joint_law_idle(&self, i_max: usize, z: f64) -> Result<Vec<f64>> {
        if z < 0.0 {
            return Err(Error::OutOfDomain(format!("idle time must be >= 0, got {z}")));
        }
        let k = &self.kernels;
        let g = |y: f64| {
            let m = k.policy.m.eval(y);
            if z >= m {
                Ok(0.0)
            } else {
                k.c_cr(y, z)
            }
        };
        Ok(self.run(i_max, g)?.into_iter().map(|l| l.p_i).collect())
    }

    /// `E[T*·1{I=i}]` for `i = 1..=i_max`.
    pub fn expected_time_to_renewal(&self, i_max: usize) -> Result<Vec<f64>> {
        Ok(self.joint_law_i_states(i_max)?.into_iter().map(|l| l.expected_time).collect())
    }
}

/// One simulated policy trajectory up to the regeneration time.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyPath {
    /// Cycle in which the failure happened.
    pub i: usize,
    pub t_star: f64,
    pub idle: f64,
    /// Inspection states `y_1, …, y_{I−1}` after maintenance.
    pub states: Vec<f64>,
}

/// Policy Monte Carlo samples and summary estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySimulation {
    pub paths: Vec<PolicyPath>,
}

impl PolicySimulation {
    pub fn p_i(&self, i: usize) -> SimResult {
        let v: Vec<f64> = self.paths.iter().map(|p| f64::from(p.i == i)).collect();
        SimResult::from_values(&v, 0, format!("P[I={i}]"))
    }

    pub fn p_i_at_most(&self, i: usize) -> SimResult {
        let v: Vec<f64> = self.paths.iter().map(|p| f64::from(p.i <= i)).collect();
        SimResult::from_values(&v, 0, format!("P[I<={i}]"))
    }

    pub fn mean_t_star(&self) -> SimResult {
        let v: Vec<f64> = self.paths.iter().map(|p| p.t_star).collect();
        SimResult::from_values(&v, 0, "E[T*]")
    }

    pub fn t_star_given(&self, i: usize) -> SimResult {
        let v: Vec<f64> = self.paths.iter().map(|p| if p.i == i { p.t_star } else { 0.0 }).collect();
        SimResult::from_values(&v, 0, format!("E[T* 1{{I={i}}}]"))
    }

    pub fn idle_exceeds(&self, i: usize, z: f64) -> SimResult {
        let v: Vec<f64> = self.paths.iter().map(|p| f64::from(p.i == i && p.idle > z)).collect();
        SimResult::from_values(&v, 0, format!("P[idle>{z}, I={i}]"))
    }

    pub fn mean_idle(&self) -> SimResult {
        let v: Vec<f64> = self.paths.iter().map(|p| p.idle).collect();
        SimResult::from_values(&v, 0, "E[idle]")
    }
}

fn policy_path<R: Rng>(law: &PathLaw, escape: &Escape, policy: &PolicySpec, cfg: &SimConfig, rng: &mut R) -> Result<PolicyPath> {
    let b = policy.b;
    let sigma = law.sigma();
    let mut x = 0.0;
    let mut clock = 0.0;
    let mut states = Vec::new();
    for i in 1..=MAX_CYCLES {
        let m = policy.m.eval(x);
        let mut tr = LastTracker::new();
        let (v, fail) = {
            let mut g = PathGen::new(law, cfg.dt, 0.0, x, rng);
            while g.t < m {
                match g.next_until(m) {
                    Segment::Diffusion { t0, tau, x0, x1 } => tr.diffusion(t0, tau, x0, x1, b, sigma, cfg.bridge_correction, g.rng()),
                    Segment::Jump { t, x0, x1 } => tr.jump(t, x0, x1, b),
                }
            }
            let v = g.x;
            let fail = v > b && g.rng().random::<f64>() < escape.prob(v - b);
            (v, fail)
        };
        clock += m;
        if fail {
            return Ok(PolicyPath {
                i,
                t_star: clock,
                idle: m - tr.last,
                states,
            });
        }
        x = policy.d.eval(v);
        states.push(x);
    }
    Err(Error::HorizonExceeded(MAX_CYCLES))
}

/// Simulates `cfg.n_paths` policy trajectories; `cfg.t_max` is unused.
pub fn simulate_policy(model: &ModelSpec, policy: &PolicySpec, cfg: &SimConfig) -> Result<PolicySimulation> {
    cfg.validate()?;
    policy.validate()?;
    let escape = Escape::new(model)?;
    let law = PathLaw::new(model);
    let paths = run_paths(cfg.seed, cfg.n_paths, |rng| policy_path(&law, &escape, policy, cfg, rng));
    Ok(PolicySimulation {
        paths: paths.into_iter().collect::<Result<_>>()?,
    })
}

//! Monte Carlo oracle: exact-increment path simulation of the models and
//! of the reflected process, with estimators for passage functionals.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma as GammaDist, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::last_passage::Escape;
use crate::model::{JumpPart, ModelSpec};

/// Simulation controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub bridge_correction: bool,
}

impl SimConfig {
    pub fn new(dt: f64, t_max: f64, n_paths: usize, seed: u64) -> Result<Self> {
        let c = Self {
            dt,
            t_max,
            n_paths,
            seed,
            bridge_correction: true,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_bridge(mut self, on: bool) -> Self {
        self.bridge_correction = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_max >= self.dt) || !self.t_max.is_finite() {
            return Err(Error::InvalidConfig(format!("t_max must be >= dt, got {}", self.t_max)));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidConfig("n_paths must be >= 1".into()));
        }
        Ok(())
    }
}

/// Point estimate with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub estimate: f64,
    pub std_error: f64,
    pub n: usize,
    pub censored: usize,
    pub meta: String,
}

impl SimResult {
    pub fn from_values(values: &[f64], censored: usize, meta: impl Into<String>) -> Self {
        let n = values.len();
        let mean = pairwise_sum(values) / n as f64;
        let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = if n > 1 { pairwise_sum(&sq) / (n - 1) as f64 } else { 0.0 };
        Self {
            estimate: mean,
            std_error: (var / n as f64).sqrt(),
            n,
            censored,
            meta: meta.into(),
        }
    }

    /// `|self − x| ≤ k·SE`.
    pub fn within(&self, x: f64, k: f64) -> bool {
        (self.estimate - x).abs() <= k * self.std_error
    }

    /// Agreement of two independent estimates within `k` combined SE.
    pub fn agrees(&self, other: &SimResult, k: f64) -> bool {
        (self.estimate - other.estimate).abs() <= k * self.std_error.hypot(other.std_error)
    }
}

pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Independent stream for path `index`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

/// Runs `f` on every path index in parallel; results come back in index
/// order so reductions are deterministic.
pub fn run_paths<T: Send, F: Fn(&mut ChaCha8Rng) -> T + Sync>(seed: u64, n: usize, f: F) -> Vec<T> {
    (0..n as u64).into_par_iter().map(|i| f(&mut path_rng(seed, i))).collect()
}

#[derive(Debug, Clone)]
enum LawJumps {
    None,
    Gamma { alpha: f64, xi: f64 },
    Ph {
        rate: f64,
        alpha: Vec<f64>,
        t: DMatrix<f64>,
        exit: Vec<f64>,
        /// Jumps of size `y` are kept with probability `e^{−thin·y}`.
        thin: f64,
    },
}

/// Path law of `D`: drift, diffusion and a jump mechanism.
#[derive(Debug, Clone)]
pub struct PathLaw {
    mu: f64,
    sigma: f64,
    jumps: LawJumps,
}

impl PathLaw {
    pub fn new(model: &ModelSpec) -> Self {
        let jumps = match model.jumps() {
            JumpPart::None => LawJumps::None,
            JumpPart::Gamma { alpha, xi } => LawJumps::Gamma { alpha: *alpha, xi: *xi },
            JumpPart::PhaseType { rate, ph } => LawJumps::Ph {
                rate: *rate,
                alpha: ph.alpha.iter().copied().collect(),
                t: ph.t.clone(),
                exit: ph.exit.iter().copied().collect(),
                thin: 0.0,
            },
        };
        Self {
            mu: model.mu(),
            sigma: model.sigma(),
            jumps,
        }
    }

    /// Esscher transform with parameter `rho`: the law of `D` conditioned
    /// to return below its current level when `φ(rho) = 0`.
    pub fn tilted(model: &ModelSpec, rho: f64) -> Self {
        let mut law = Self::new(model);
        law.mu -= law.sigma * law.sigma * rho;
        law.jumps = match law.jumps {
            LawJumps::Gamma { alpha, xi } => LawJumps::Gamma {
                alpha,
                xi: xi / (1.0 + xi * rho),
            },
            LawJumps::Ph { rate, alpha, t, exit, .. } => LawJumps::Ph {
                rate,
                alpha,
                t,
                exit,
                thin: rho,
            },
            j => j,
        };
        law
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn jump_rate(&self) -> f64 {
        match &self.jumps {
            LawJumps::Ph { rate, .. } => *rate,
            _ => 0.0,
        }
    }

    fn ph_jump<R: Rng>(&self, rng: &mut R) -> f64 {
        let LawJumps::Ph { alpha, t, exit, .. } = &self.jumps else {
            return 0.0;
        };
        let m = alpha.len();
        let mut u: f64 = rng.random();
        let mut phase = m - 1;
        for (i, a) in alpha.iter().enumerate() {
            if u < *a {
                phase = i;
                break;
            }
            u -= a;
        }
        let mut y = 0.0;
        loop {
            let out = -t[(phase, phase)];
            y += Exp::new(out).expect("positive rate").sample(rng);
            let mut u: f64 = rng.random::<f64>() * out;
            if u < exit[phase] {
                return y;
            }
            u -= exit[phase];
            let mut next = phase;
            for j in 0..m {
                if j == phase {
                    continue;
                }
                if u < t[(phase, j)] {
                    next = j;
                    break;
                }
                u -= t[(phase, j)];
            }
            phase = next;
        }
    }
}

/// A piece of path: a continuous stretch or an instantaneous jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Diffusion { t0: f64, tau: f64, x0: f64, x1: f64 },
    Jump { t: f64, x0: f64, x1: f64 },
}

/// Generates consecutive segments of a path.
pub struct PathGen<'a, R: Rng> {
    law: &'a PathLaw,
    dt: f64,
    pub t: f64,
    pub x: f64,
    next_jump: f64,
    pending_jump: bool,
    rng: &'a mut R,
}

impl<'a, R: Rng> PathGen<'a, R> {
    pub fn new(law: &'a PathLaw, dt: f64, t: f64, x: f64, rng: &'a mut R) -> Self {
        let rate = law.jump_rate();
        let next_jump = if rate > 0.0 {
            t + Exp::new(rate).expect("positive rate").sample(rng)
        } else {
            f64::INFINITY
        };
        Self {
            law,
            dt,
            t,
            x,
            next_jump,
            pending_jump: false,
            rng,
        }
    }

    pub fn rng(&mut self) -> &mut R {
        self.rng
    }

    fn diffuse(&mut self, tau: f64) -> Segment {
        let z: f64 = StandardNormal.sample(self.rng);
        let mut x1 = self.x + self.law.mu * tau + self.law.sigma * tau.sqrt() * z;
        if let LawJumps::Gamma { alpha, xi } = self.law.jumps {
            x1 += GammaDist::new(alpha * tau, xi).expect("valid gamma").sample(self.rng);
        }
        let s = Segment::Diffusion {
            t0: self.t,
            tau,
            x0: self.x,
            x1,
        };
        self.t += tau;
        self.x = x1;
        s
    }

    /// Next segment, never longer than `dt` and never crossing `stop`.
    pub fn next_until(&mut self, stop: f64) -> Segment {
        loop {
            if self.pending_jump {
                self.pending_jump = false;
                let y = self.law.ph_jump(self.rng);
                self.next_jump = self.t + Exp::new(self.law.jump_rate()).expect("positive rate").sample(self.rng);
                let keep = match self.law.jumps {
                    LawJumps::Ph { thin, .. } if thin > 0.0 => self.rng.random::<f64>() < (-thin * y).exp(),
                    _ => true,
                };
                if keep {
                    let s = Segment::Jump {
                        t: self.t,
                        x0: self.x,
                        x1: self.x + y,
                    };
                    self.x += y;
                    return s;
                }
                continue;
            }
            let mut tau = self.dt.min(stop - self.t);
            if self.next_jump <= self.t + tau {
                tau = self.next_jump - self.t;
                self.pending_jump = true;
                if tau <= 0.0 {
                    continue;
                }
            }
            return self.diffuse(tau);
        }
    }

    pub fn next_segment(&mut self) -> Segment {
        self.next_until(f64::INFINITY)
    }
}

/// `P(bridge reaches a level)` given start and end distances `d0, d1 ≥ 0`
/// from it on the same side.
pub fn bridge_cross_prob(d0: f64, d1: f64, tau: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 || tau <= 0.0 {
        return 0.0;
    }
    (-2.0 * d0 * d1 / (sigma * sigma * tau)).exp()
}

/// Minimum of a Brownian bridge from `x0` to `x1` over `tau`.
pub fn bridge_min<R: Rng>(x0: f64, x1: f64, tau: f64, sigma: f64, rng: &mut R) -> f64 {
    if sigma <= 0.0 {
        return x0.min(x1);
    }
    let u: f64 = rng.random();
    let d = x1 - x0;
    0.5 * (x0 + x1 - (d * d - 2.0 * sigma * sigma * tau * (1.0 - u).ln()).sqrt())
}

/// First time a Brownian bridge over `[0, tau]` hits a level, given that it
/// does, with the start at distance `d_start > 0` from the level and the end
/// at distance `d_end ≥ 0` (either side). Sampled by numerical inversion of
/// `s^{−3/2} e^{−d_s²/(2σ²s)} (τ−s)^{−1/2} e^{−d_e²/(2σ²(τ−s))}`.
pub fn bridge_hit_time<R: Rng>(d_start: f64, d_end: f64, tau: f64, sigma: f64, rng: &mut R) -> f64 {
    if sigma <= 0.0 {
        let tot = d_start + d_end;
        return if tot > 0.0 { tau * d_start / tot } else { tau };
    }
    const N: usize = 400;
    let s2 = sigma * sigma;
    let ln_f = |s: f64| -1.5 * s.ln() - d_start * d_start / (2.0 * s2 * s) - 0.5 * (tau - s).ln() - d_end * d_end / (2.0 * s2 * (tau - s));
    // s = τ(1 − cos πv)/2 clusters nodes at both ends.
    let node = |v: f64| 0.5 * tau * (1.0 - (std::f64::consts::PI * v).cos());
    let jac = |v: f64| 0.5 * tau * std::f64::consts::PI * (std::f64::consts::PI * v).sin();
    let mut lv = Vec::with_capacity(N + 1);
    for k in 0..=N {
        let v = k as f64 / N as f64;
        let s = node(v);
        lv.push(if k == 0 || k == N { f64::NEG_INFINITY } else { ln_f(s) + jac(v).ln() });
    }
    let top = lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return 0.5 * tau;
    }
    let w: Vec<f64> = lv.iter().map(|l| (l - top).exp()).collect();
    let mut cdf = vec![0.0; N + 1];
    for k in 1..=N {
        cdf[k] = cdf[k - 1] + 0.5 * (w[k - 1] + w[k]);
    }
    let target = rng.random::<f64>() * cdf[N];
    let k = cdf.partition_point(|c| *c < target).clamp(1, N);
    let frac = if cdf[k] > cdf[k - 1] { (target - cdf[k - 1]) / (cdf[k] - cdf[k - 1]) } else { 0.5 };
    node((k as f64 - 1.0 + frac) / N as f64)
}

/// Skeleton `(times, values)` of one path on `[0, t_max]`.
pub fn sample_path<R: Rng>(model: &ModelSpec, cfg: &SimConfig, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let law = PathLaw::new(model);
    let mut g = PathGen::new(&law, cfg.dt, 0.0, 0.0, rng);
    let (mut ts, mut xs) = (vec![0.0], vec![0.0]);
    while g.t < cfg.t_max - 1e-12 {
        match g.next_until(cfg.t_max) {
            Segment::Diffusion { t0, tau, x1, .. } => {
                ts.push(t0 + tau);
                xs.push(x1);
            }
            Segment::Jump { t, x1, .. } => {
                ts.push(t);
                xs.push(x1);
            }
        }
    }
    (ts, xs)
}

/// Outcome of one first-passage path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassageSample {
    pub time: Option<f64>,
    pub undershoot: f64,
    pub overshoot: f64,
    pub by_jump: bool,
}

fn first_passage_path<R: Rng>(law: &PathLaw, cfg: &SimConfig, b: f64, rng: &mut R) -> PassageSample {
    let sigma = law.sigma;
    let mut g = PathGen::new(law, cfg.dt, 0.0, 0.0, rng);
    if b <= 0.0 {
        return PassageSample {
            time: Some(0.0),
            undershoot: 0.0,
            overshoot: -b,
            by_jump: false,
        };
    }
    while g.t < cfg.t_max {
        match g.next_until(cfg.t_max) {
            Segment::Diffusion { t0, tau, x0, x1 } => {
                let hit = if x1 >= b {
                    true
                } else {
                    cfg.bridge_correction && g.rng().random::<f64>() < bridge_cross_prob(b - x0, b - x1, tau, sigma)
                };
                if hit {
                    let s = if cfg.bridge_correction { bridge_hit_time(b - x0, (x1 - b).abs(), tau, sigma, g.rng()) } else { tau };
                    return PassageSample {
                        time: Some(t0 + s),
                        undershoot: 0.0,
                        overshoot: (x1 - b).max(0.0) * f64::from(sigma == 0.0),
                        by_jump: false,
                    };
                }
            }
            Segment::Jump { t, x0, x1 } => {
                if x1 >= b {
                    return PassageSample {
                        time: Some(t),
                        undershoot: b - x0,
                        overshoot: x1 - b,
                        by_jump: true,
                    };
                }
            }
        }
    }
    PassageSample {
        time: None,
        undershoot: 0.0,
        overshoot: 0.0,
        by_jump: false,
    }
}

/// First-passage samples for every path.
pub fn simulate_first_passage(model: &ModelSpec, cfg: &SimConfig, b: f64) -> Result<Vec<PassageSample>> {
    cfg.validate()?;
    let law = PathLaw::new(model);
    Ok(run_paths(cfg.seed, cfg.n_paths, |rng| first_passage_path(&law, cfg, b, rng)))
}

/// Functionals of `T_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FirstFunctional {
    CdfAt(f64),
    LaplaceAt(f64),
    /// `E[e^{−δT_b}; crossing by a jump]`.
    JumpLaplaceAt(f64),
    /// Mean overshoot over paths that cross by a jump.
    OvershootMean,
}

pub fn first_passage_result(samples: &[PassageSample], functional: FirstFunctional) -> SimResult {
    let censored = samples.iter().filter(|s| s.time.is_none()).count();
    let vals: Vec<f64> = match functional {
        FirstFunctional::CdfAt(t) => samples.iter().map(|s| f64::from(s.time.is_some_and(|x| x <= t))).collect(),
        FirstFunctional::LaplaceAt(d) => samples.iter().map(|s| s.time.map_or(0.0, |x| (-d * x).exp())).collect(),
        FirstFunctional::JumpLaplaceAt(d) => samples
            .iter()
            .map(|s| if s.by_jump { s.time.map_or(0.0, |x| (-d * x).exp()) } else { 0.0 })
            .collect(),
        FirstFunctional::OvershootMean => samples.iter().filter(|s| s.by_jump).map(|s| s.overshoot).collect(),
    };
    SimResult::from_values(&vals, censored, format!("first-passage {functional:?}"))
}

pub fn estimate_first_passage(model: &ModelSpec, cfg: &SimConfig, b: f64, functional: FirstFunctional) -> Result<SimResult> {
    if !(b > 0.0) {
        return Err(Error::Domain(format!("threshold must be > 0, got {b}")));
    }
    let cfg = match functional {
        FirstFunctional::CdfAt(t) => SimConfig { t_max: t.max(cfg.dt), ..*cfg },
        _ => *cfg,
    };
    Ok(first_passage_result(&simulate_first_passage(model, &cfg, b)?, functional))
}

/// How the final excursion above `b` is classified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LastPassageMode {
    /// Bernoulli escape test plus conditioned continuation.
    Escape(Escape),
    /// Plain simulation to `t_max`; biased by returns after the horizon.
    Censor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LastPassageSample {
    pub time: f64,
    pub first_time: Option<f64>,
    /// The final upcrossing of `b` was a jump.
    pub by_jump: bool,
    pub censored: bool,
}

/// Tracks the last time a (possibly reflected) path is at or below a level.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LastTracker {
    pub(crate) last: f64,
    by_jump: bool,
    first: Option<f64>,
}

impl LastTracker {
    pub(crate) fn new() -> Self {
        Self {
            last: 0.0,
            by_jump: false,
            first: None,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn diffusion<R: Rng>(&mut self, t0: f64, tau: f64, x0: f64, x1: f64, level: f64, sigma: f64, bridge: bool, rng: &mut R) {
        if self.first.is_none() && (x1 >= level || (bridge && rng.random::<f64>() < bridge_cross_prob(level - x0, level - x1, tau, sigma))) {
            let s = if bridge { bridge_hit_time(level - x0, (x1 - level).abs(), tau, sigma, rng) } else { tau };
            self.first = Some(t0 + s);
            self.by_jump = false;
            // After the first hit the rest is a bridge from the level to x1.
            self.last = if x1 > level && bridge {
                t0 + tau - bridge_hit_time(x1 - level, 0.0, tau - s, sigma, rng)
            } else {
                t0 + tau.max(s)
            };
            return;
        }
        if x1 <= level {
            self.last = t0 + tau;
            self.by_jump = false;
        } else if x0 <= level {
            let s = if bridge { bridge_hit_time(x1 - level, level - x0, tau, sigma, rng) } else { 0.0 };
            self.last = t0 + tau - s;
            self.by_jump = false;
        } else if bridge && rng.random::<f64>() < bridge_cross_prob(x0 - level, x1 - level, tau, sigma) {
            let s = bridge_hit_time(x1 - level, x0 - level, tau, sigma, rng);
            self.last = t0 + tau - s;
            self.by_jump = false;
        }
    }

    pub(crate) fn jump(&mut self, t: f64, x0: f64, x1: f64, level: f64) {
        if x1 <= level {
            self.last = t;
            self.by_jump = false;
        } else if x0 <= level {
            self.last = t;
            self.by_jump = true;
            if self.first.is_none() {
                self.first = Some(t);
            }
        }
    }
}

/// Runs the tilted law from `x > level` until it first reaches `level`;
/// returns the hitting time.
fn tilted_return<R: Rng>(tilted: &PathLaw, dt: f64, t: f64, x: f64, level: f64, bridge: bool, rng: &mut R) -> f64 {
    let sigma = tilted.sigma;
    let mut g = PathGen::new(tilted, dt, t, x, rng);
    loop {
        if let Segment::Diffusion { t0, tau, x0, x1 } = g.next_segment() {
            if x1 <= level || (bridge && g.rng().random::<f64>() < bridge_cross_prob(x0 - level, x1 - level, tau, sigma)) {
                let s = if bridge { bridge_hit_time(x0 - level, (x1 - level).abs(), tau, sigma, g.rng()) } else { tau };
                return t0 + s;
            }
        }
    }
}

struct LastPassageRunner<'a> {
    law: PathLaw,
    tilted: Option<PathLaw>,
    escape: Option<Escape>,
    cfg: &'a SimConfig,
    b: f64,
    reflect: bool,
}

impl<'a> LastPassageRunner<'a> {
    fn new(model: &ModelSpec, cfg: &'a SimConfig, b: f64, mode: LastPassageMode, reflect: bool) -> Self {
        let (tilted, escape) = match mode {
            LastPassageMode::Escape(e) => (Some(PathLaw::tilted(model, e.rho0)), Some(e)),
            LastPassageMode::Censor => (None, None),
        };
        Self {
            law: PathLaw::new(model),
            tilted,
            escape,
            cfg,
            b,
            reflect,
        }
    }

    fn run<R: Rng>(&self, rng: &mut R) -> LastPassageSample {
        let cfg = self.cfg;
        let sigma = self.law.sigma;
        let mut tr = LastTracker {
            last: 0.0,
            by_jump: false,
            first: None,
        };
        // Running minimum of the free path, for reflection.
        let mut low = 0.0_f64;
        let (mut t, mut x) = (0.0, 0.0);
        let mut horizon = cfg.t_max;
        loop {
            {
                let mut g = PathGen::new(&self.law, cfg.dt, t, x, rng);
                while g.t < horizon {
                    let seg = g.next_until(horizon);
                    match seg {
                        Segment::Diffusion { t0, tau, x0, x1 } => {
                            if self.reflect {
                                let m = bridge_min(x0, x1, tau, sigma, g.rng());
                                low = low.min(m);
                            }
                            let level = self.b + if self.reflect { low } else { 0.0 };
                            let bridge = cfg.bridge_correction;
                            let (lvl, rng) = (level, g.rng());
                            tr.diffusion(t0, tau, x0, x1, lvl, sigma, bridge, rng);
                        }
                        Segment::Jump { t, x0, x1 } => {
                            let level = self.b + if self.reflect { low } else { 0.0 };
                            tr.jump(t, x0, x1, level);
                        }
                    }
                }
                t = g.t;
                x = g.x;
            }
            let level = self.b + if self.reflect { low } else { 0.0 };
            let (Some(esc), Some(tilted)) = (self.escape, self.tilted.as_ref()) else {
                return LastPassageSample {
                    time: tr.last,
                    first_time: tr.first,
                    by_jump: tr.by_jump,
                    censored: x <= level,
                };
            };
            if x > level && rng.random::<f64>() < esc.prob(x - level) {
                return LastPassageSample {
                    time: tr.last,
                    first_time: tr.first,
                    by_jump: tr.by_jump,
                    censored: false,
                };
            }
            if x > level {
                t = tilted_return(tilted, cfg.dt, t, x, level, cfg.bridge_correction, rng);
                x = level;
                tr.last = t;
                tr.by_jump = false;
            }
            horizon = t + cfg.t_max;
        }
    }
}

/// Last-passage samples of the free (`reflect = false`) or reflected path.
pub fn simulate_last_passage(
    model: &ModelSpec,
    cfg: &SimConfig,
    b: f64,
    mode: LastPassageMode,
    reflect: bool,
) -> Result<Vec<LastPassageSample>> {
    cfg.validate()?;
    if !(b > 0.0) {
        return Err(Error::Domain(format!("threshold must be > 0, got {b}")));
    }
    if model.mean() <= 0.0 {
        return Err(Error::Domain("last passage needs E[D_1] > 0".into()));
    }
    let runner = LastPassageRunner::new(model, cfg, b, mode, reflect);
    Ok(run_paths(cfg.seed, cfg.n_paths, |rng| runner.run(rng)))
}

/// Functionals of `L_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LastFunctional {
    CdfAt(f64),
    LaplaceAt(f64),
    /// Probability that the final upcrossing is a jump.
    JumpCrossing,
}

pub fn last_passage_result(samples: &[LastPassageSample], functional: LastFunctional) -> SimResult {
    let censored = samples.iter().filter(|s| s.censored).count();
    let vals: Vec<f64> = match functional {
        LastFunctional::CdfAt(t) => samples.iter().map(|s| f64::from(s.time < t)).collect(),
        LastFunctional::LaplaceAt(d) => samples.iter().map(|s| (-d * s.time).exp()).collect(),
        LastFunctional::JumpCrossing => samples.iter().map(|s| f64::from(s.by_jump)).collect(),
    };
    SimResult::from_values(&vals, censored, format!("last-passage {functional:?}"))
}

pub fn estimate_last_passage(
    model: &ModelSpec,
    cfg: &SimConfig,
    b: f64,
    mode: LastPassageMode,
    functional: LastFunctional,
) -> Result<SimResult> {
    Ok(last_passage_result(&simulate_last_passage(model, cfg, b, mode, false)?, functional))
}

/// Reflected path `D* = D − min(inf D, 0)` on the skeleton of `[0, t_max]`.
pub fn reflected_path<R: Rng>(model: &ModelSpec, cfg: &SimConfig, rng: &mut R) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let law = PathLaw::new(model);
    let sigma = law.sigma;
    let bridge = cfg.bridge_correction;
    let mut g = PathGen::new(&law, cfg.dt, 0.0, 0.0, rng);
    let (mut ts, mut free, mut refl) = (vec![0.0], vec![0.0], vec![0.0]);
    let mut low = 0.0_f64;
    while g.t < cfg.t_max - 1e-12 {
        let (t, x) = match g.next_until(cfg.t_max) {
            Segment::Diffusion { t0, tau, x0, x1 } => {
                let m = if bridge { bridge_min(x0, x1, tau, sigma, g.rng()) } else { x1 };
                low = low.min(m);
                (t0 + tau, x1)
            }
            Segment::Jump { t, x1, .. } => (t, x1),
        };
        ts.push(t);
        free.push(x);
        refl.push(x - low);
    }
    (ts, free, refl)
}

/// `D*_t` at a list of sorted times, for one path.
fn reflected_values_at<R: Rng>(law: &PathLaw, cfg: &SimConfig, times: &[f64], rng: &mut R) -> Vec<f64> {
    let sigma = law.sigma;
    let mut g = PathGen::new(law, cfg.dt, 0.0, 0.0, rng);
    let mut low = 0.0_f64;
    let mut out = Vec::with_capacity(times.len());
    for &stop in times {
        while g.t < stop - 1e-12 {
            if let Segment::Diffusion { tau, x0, x1, .. } = g.next_until(stop) {
                let m = if cfg.bridge_correction { bridge_min(x0, x1, tau, sigma, g.rng()) } else { x1 };
                low = low.min(m);
            }
        }
        out.push(g.x - low);
    }
    out
}

/// Duality pairs `(P(D*_t > b), P(T_b ≤ t))` on a grid of thresholds and
/// times. Independent path sets are used for the two estimators.
pub fn duality_grid(model: &ModelSpec, cfg: &SimConfig, bs: &[f64], ts: &[f64]) -> Result<Vec<(f64, f64, SimResult, SimResult)>> {
    cfg.validate()?;
    let law = PathLaw::new(model);
    let mut times = ts.to_vec();
    times.sort_by(f64::total_cmp);
    let refl = run_paths(cfg.seed, cfg.n_paths, |rng| reflected_values_at(&law, cfg, &times, rng));
    let t_top = times.last().copied().unwrap_or(cfg.dt);
    let cfg_fp = SimConfig {
        t_max: t_top.max(cfg.dt),
        seed: cfg.seed ^ 0x9e37_79b9_7f4a_7c15,
        ..*cfg
    };
    let mut out = Vec::new();
    for &b in bs {
        let fp = if b > 0.0 {
            simulate_first_passage(model, &cfg_fp, b)?
        } else {
            vec![
                PassageSample {
                    time: Some(0.0),
                    undershoot: 0.0,
                    overshoot: 0.0,
                    by_jump: false
                };
                cfg.n_paths
            ]
        };
        for &t in ts {
            let k = times.iter().position(|x| *x == t).expect("time present");
            let vals: Vec<f64> = refl.iter().map(|v| f64::from(v[k] > b || (b <= 0.0 && v[k] >= b))).collect();
            let r = SimResult::from_values(&vals, 0, "reflected-exceeds");
            let p = first_passage_result(&fp, FirstFunctional::CdfAt(t));
            out.push((b, t, r, p));
        }
    }
    Ok(out)
}

/// `(P(D*_t > b), P(T_b ≤ t))` estimated from independent path sets.
pub fn duality_check(model: &ModelSpec, cfg: &SimConfig, b: f64, t: f64) -> Result<(SimResult, SimResult)> {
    let mut g = duality_grid(model, cfg, &[b], &[t])?;
    let (_, _, r, p) = g.remove(0);
    Ok((r, p))
}

/// Reflected first passage `T*_b`: samples with crossing type.
pub fn simulate_reflected_first_passage(model: &ModelSpec, cfg: &SimConfig, b: f64) -> Result<Vec<PassageSample>> {
    cfg.validate()?;
    let law = PathLaw::new(model);
    let sigma = law.sigma;
    Ok(run_paths(cfg.seed, cfg.n_paths, |rng| {
        let mut g = PathGen::new(&law, cfg.dt, 0.0, 0.0, rng);
        let mut low = 0.0_f64;
        while g.t < cfg.t_max {
            match g.next_until(cfg.t_max) {
                Segment::Diffusion { t0, tau, x0, x1 } => {
                    let m = bridge_min(x0, x1, tau, sigma, g.rng());
                    let moved = m < low;
                    low = low.min(m);
                    let level = b + low;
                    let hit = x1 >= level
                        || (!moved && cfg.bridge_correction && g.rng().random::<f64>() < bridge_cross_prob(level - x0, level - x1, tau, sigma));
                    if hit {
                        let s = if moved || !cfg.bridge_correction { tau } else { bridge_hit_time(level - x0, (x1 - level).abs(), tau, sigma, g.rng()) };
                        return PassageSample {
                            time: Some(t0 + s),
                            undershoot: 0.0,
                            overshoot: 0.0,
                            by_jump: false,
                        };
                    }
                }
                Segment::Jump { t, x0, x1 } => {
                    if x1 - low >= b {
                        return PassageSample {
                            time: Some(t),
                            undershoot: b - (x0 - low),
                            overshoot: x1 - low - b,
                            by_jump: true,
                        };
                    }
                }
            }
        }
        PassageSample {
            time: None,
            undershoot: 0.0,
            overshoot: 0.0,
            by_jump: false,
        }
    }))
}

/// `P[L*_b ≥ T, D*_T > b]` with `T ~ Exp(δ)` independent of the path.
/// With `Escape`, the return after `T` is averaged analytically; with
/// `Censor`, it is simulated up to `t_max` after `T`.
pub fn estimate_reflected_exp_horizon(model: &ModelSpec, cfg: &SimConfig, b: f64, delta: f64, mode: LastPassageMode) -> Result<SimResult> {
    cfg.validate()?;
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("delta must be > 0, got {delta}")));
    }
    let law = PathLaw::new(model);
    let exp = Exp::new(delta).expect("positive rate");
    let vals = run_paths(cfg.seed, cfg.n_paths, |rng| {
        let horizon: f64 = exp.sample(rng);
        let v = reflected_values_at(&law, cfg, &[horizon], rng)[0];
        if v <= b {
            return 0.0;
        }
        match mode {
            LastPassageMode::Escape(e) => 1.0 - e.prob(v - b),
            LastPassageMode::Censor => {
                // Reflection cannot bind before D* returns to b > 0.
                let mut g = PathGen::new(&law, cfg.dt, 0.0, v, rng);
                while g.t < cfg.t_max {
                    if let Segment::Diffusion { tau, x0, x1, .. } = g.next_until(cfg.t_max) {
                        if x1 <= b || (cfg.bridge_correction && g.rng().random::<f64>() < bridge_cross_prob(x0 - b, x1 - b, tau, law.sigma)) {
                            return 1.0;
                        }
                    }
                }
                0.0
            }
        }
    });
    Ok(SimResult::from_values(&vals, 0, "reflected exp-horizon"))
}

/// Sample moments of `T_b` (for the normal approximation).
pub fn passage_time_moments(samples: &[PassageSample]) -> (SimResult, f64) {
    let times: Vec<f64> = samples.iter().filter_map(|s| s.time).collect();
    let r = SimResult::from_values(&times, samples.len() - times.len(), "passage time");
    let var = r.std_error * r.std_error * r.n as f64;
    (r, var)
}

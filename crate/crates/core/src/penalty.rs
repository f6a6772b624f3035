//! Penalty functions `w(undershoot, overshoot)` for discounted passage
//! functionals.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type PenaltyFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Penalty applied to the distance below the threshold just before
/// passage and the overshoot above it at passage.
#[derive(Clone)]
pub enum PenaltySpec {
    /// `w ≡ 1`: plain Laplace transform of the passage time.
    One,
    /// `w = 1{overshoot > ε}`.
    OvershootIndicator(f64),
    Custom { w: Arc<PenaltyFn>, bound: f64 },
}

impl fmt::Debug for PenaltySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PenaltySpec::One => write!(f, "One"),
            PenaltySpec::OvershootIndicator(e) => write!(f, "OvershootIndicator({e})"),
            PenaltySpec::Custom { bound, .. } => write!(f, "Custom {{ bound: {bound} }}"),
        }
    }
}

impl PenaltySpec {
    pub fn custom<F: Fn(f64, f64) -> f64 + Send + Sync + 'static>(w: F, bound: f64) -> Result<Self> {
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(Error::Domain(format!("penalty bound must be finite and >= 0, got {bound}")));
        }
        for &u in &[0.0, 0.1, 1.0, 10.0] {
            for &o in &[0.0, 0.1, 1.0, 10.0] {
                let v = w(u, o);
                if !v.is_finite() || v.abs() > bound * (1.0 + 1e-12) {
                    return Err(Error::Domain(format!("penalty w({u}, {o}) = {v} exceeds bound {bound}")));
                }
            }
        }
        Ok(PenaltySpec::Custom { w: Arc::new(w), bound })
    }

    pub fn eval(&self, undershoot: f64, overshoot: f64) -> f64 {
        match self {
            PenaltySpec::One => 1.0,
            PenaltySpec::OvershootIndicator(eps) => {
                if overshoot > *eps {
                    1.0
                } else {
                    0.0
                }
            }
            PenaltySpec::Custom { w, .. } => w(undershoot, overshoot),
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            PenaltySpec::One | PenaltySpec::OvershootIndicator(_) => 1.0,
            PenaltySpec::Custom { bound, .. } => *bound,
        }
    }

    /// Value at a creeping passage (no undershoot, no overshoot).
    pub fn at_origin(&self) -> f64 {
        self.eval(0.0, 0.0)
    }

    /// Parses `one` or `overshoot-indicator:<eps>`.
    pub fn parse(s: &str) -> Result<Self> {
        if s == "one" {
            return Ok(PenaltySpec::One);
        }
        if let Some(rest) = s.strip_prefix("overshoot-indicator:") {
            let eps: f64 = rest
                .parse()
                .map_err(|_| Error::Domain(format!("bad overshoot threshold `{rest}`")))?;
            if !(eps > 0.0) {
                return Err(Error::Domain("overshoot threshold must be > 0".into()));
            }
            return Ok(PenaltySpec::OvershootIndicator(eps));
        }
        Err(Error::Domain(format!("unknown penalty `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_eval() {
        assert!(matches!(PenaltySpec::parse("one").unwrap(), PenaltySpec::One));
        let p = PenaltySpec::parse("overshoot-indicator:0.1").unwrap();
        assert_eq!(p.eval(0.0, 0.05), 0.0);
        assert_eq!(p.eval(0.0, 0.2), 1.0);
        assert_eq!(p.at_origin(), 0.0);
        assert!(PenaltySpec::parse("two").is_err());
        assert!(PenaltySpec::custom(|u, _| u, 1.0).is_err());
        assert!(PenaltySpec::custom(|u, o| (-u - o).exp(), 1.0).is_ok());
    }
}

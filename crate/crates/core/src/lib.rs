//! First- and last-passage laws for degradation processes modelled as
//! subordinators perturbed by Brownian motion.

pub mod error;
pub mod first_passage;
pub mod io;
pub mod last_passage;
pub mod lundberg;
pub mod maintenance;
pub mod mc;
pub mod model;
pub mod numerics;
pub mod penalty;
pub mod reflected;
pub mod renewal;
pub mod scale;
pub mod validate;

pub use error::{Error, Result};
pub use model::{cp_approximation, CPApprox, JumpPart, LevyMeasureView, ModelKind, ModelSpec};

//! Numerical machinery for optimal control of spectrally truncated SPDEs
//! driven by cylindrical symmetric alpha-stable noise.
//!
//! The linear part `A` is diagonal in the coordinate basis ([`spectrum`]).
//! Noise marginals are sampled exactly ([`stable`], [`ou`]), the controlled
//! state equation is solved pathwise by Picard iteration ([`state`]), and the
//! mild HJB equation is solved as a fixed point on a tensor grid ([`hjb`]).
//! [`control`] evaluates policies and checks the value function against
//! simulated costs.

pub mod control;
pub mod error;
pub mod functions;
pub mod hjb;
pub mod mc;
pub mod ou;
pub mod policy;
pub mod quad;
pub mod rng;
pub mod spectrum;
pub mod stable;
pub mod state;

pub use error::{Error, Result};
pub use rng::RngStream;

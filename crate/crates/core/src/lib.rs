//! Numerical core for adaptive two-stage distillation of transducer models.
//!
//! The crate is split into the dense containers shared by everything else
//! ([`tensor`], [`io`], [`dist`]), the entropy-targeted power smoother
//! ([`smoothing`]) and the training losses ([`losses`]).

pub mod dist;
pub mod error;
pub mod io;
pub mod losses;
pub mod smoothing;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{HiddenStack, ProbLattice, Tensor, TokenSequence, BLANK};

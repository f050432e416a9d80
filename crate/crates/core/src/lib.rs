//! Co-design of gain-scheduled controllers and dynamic event-triggering
//! mechanisms for discrete-time rational systems written in
//! difference-algebraic form.
//!
//! The pipeline is: [`dar`] model → polytopic embedding → [`lmi`] assembly →
//! [`sdp`] solve and independent verification → [`codesign`] recovery of
//! gains and trigger weights → [`etm`] runtime → [`sim`] closed-loop
//! experiments.

pub mod codesign;
pub mod dar;
pub mod error;
pub mod etm;
pub mod linalg;
pub mod lmi;
pub mod par;
pub mod sdp;
mod serde_mat;
pub mod sim;

pub use error::{Error, Result};

//! Domain types: state spaces, drifts, jump kernels, truncation, process
//! specifications, the entropy functions and the hypothesis probes.

mod drift;
mod functions;
mod kernel;
mod probe;
pub mod quadrature;
mod space;
mod spec;

pub use drift::{tilt_correction, DriftField, DriftTable};
pub use functions::{entropy_h, norm, truncate_jump, young_theta, TruncationDelta};
pub use kernel::{
    Atom, JumpDensity, JumpKernel, JumpMenu, LevyAtom, LevyDensity, LevyMeasure, RateMatrix, RateSource, Shell,
};
pub use probe::{probe_hypotheses, HypothesisReport, ProbeEntry, ProbeValue};
pub use space::{distance, Embedding, StateSpace};
pub use spec::{InitialLaw, ProcessSpec};

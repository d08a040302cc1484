//! Forward Monte Carlo simulation by thinning, and pathwise time reversal.

mod ensemble;
mod forward;
mod trajectory;

pub use ensemble::{spec_fingerprint, Direction, PathEnsemble};
pub use forward::{simulate_forward, EffectiveDrift, SimulationOptions};
pub use trajectory::{reverse_path, time_quantum, JumpEvent, PathFlow, Trajectory, VectorField};
pub(crate) use trajectory::FlowCursor;

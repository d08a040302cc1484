//! The marginal flow `t ↦ p_t`: exact master-equation solutions on finite
//! spaces and empirical histograms from ensembles.

mod empirical;
mod flow;
mod master;
pub mod ode;

pub use empirical::{default_binning, empirical_marginals};
pub use flow::{uniform_grid, MarginalFlow, Representation};
pub use master::{generator_matrix, master_equation_marginals, NEGATIVE_TOLERANCE};

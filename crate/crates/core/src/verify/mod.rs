//! Monte Carlo and analytic checks of the backward characteristics.

mod compare;
mod generator;
mod intensity;

pub use compare::{compare_reversal, CellComparison, CompareOptions, ReversalReport};
pub use generator::{
    apply_generator, carre_du_champ, ibp_residual, ibp_residual_monte_carlo, Generator, IbpResidual, TestFunction,
};
pub use intensity::{estimate_backward_intensity, estimate_intensity, IntensityEstimate};

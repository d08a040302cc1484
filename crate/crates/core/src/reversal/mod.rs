//! Backward characteristics from the flux equation, plus the closed-form
//! reversal of Lévy processes.

mod backward;
mod flux;
mod levy;

pub use backward::{
    backward_drift, continuity_reports, write_continuity_csv, BackwardCharacteristics, ReversalOptions, SliceValidity,
};
pub use flux::{
    binned_rate_matrix, check_absolute_continuity, forward_rates, reversibility_check, sigma, solve_flux_equation,
    solve_flux_slice, AbsoluteContinuityReport, BackwardSlice, FluxMeasure, ReversibilityReport, RATIO_FLOOR,
};
pub use levy::levy_reverse;

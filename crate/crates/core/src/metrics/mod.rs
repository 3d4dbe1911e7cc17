//! Wasserstein-2 estimators and theoretical error bounds.

mod bounds;
mod hungarian;
mod quad;
mod sinkhorn;
pub(crate) mod w2;

pub use bounds::{
    contraction_beta, cvp_bound, cvp_h_range, discretization_order, sampling_error_bound, sampling_error_bound_at,
    u_of_t, u_of_t_quadrature, BoundInputs, BoundReport, OrderFit,
};
pub use hungarian::solve as min_cost_assignment;
pub use quad::adaptive_simpson;
pub use sinkhorn::{w2_sinkhorn, SinkhornOptions, SinkhornResult};
pub use w2::{
    bootstrap_stderr, sample_moments, w2_assignment, w2_auto, w2_gaussian, w2_sorted_1d, W2Method, W2Report,
    ASSIGNMENT_CAP,
};

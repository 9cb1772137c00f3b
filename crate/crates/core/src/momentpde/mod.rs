//! Closed moment equations of the stochastic transport equation and the
//! constant-1 a priori bounds they satisfy.
//!
//! For `u` solving `du + μu dt + b·∇u dt + σ∇u∘dB = 0`:
//! * `v = E u²` solves `∂_t v = −2μv − b·∇v + (σ²/2)Δv`;
//! * `V_ij = E[∂_i u ∂_j u]` solves the coupled system with the extra
//!   reaction `−Σ_k(∂_i b^k V_kj + ∂_j b^k V_ik)`;
//! * the dual moment `w = E[v²]` of the continuity equation solves
//!   `∂_t w = −2μw + (σ²/2)Δw + 2∇·(bw) − b·∇w`.

mod checks;
mod solver;
mod thresholds;

pub use checks::{
    check_dual_weighted_bound, check_e1, check_gradient_bound, dual_gate, e1_gate, gradient_gate,
};
pub use solver::{
    gradient_outer_from_samples, solve_dual_continuity_moment, solve_gradient_moment_system_q1,
    solve_second_moment, Diagnostics, MomentKind, MomentSeries, SolverConfig, StepRecord,
};
pub use thresholds::{dual_weight_bracket, thresholds, ThresholdSet};

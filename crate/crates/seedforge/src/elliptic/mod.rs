//! Elliptic model problems: the Poisson equation, the critical-weight
//! operator −Δ + 2/ρ², and the vector momentum system, together with the
//! Green's-kernel convolution solver, the explicit asymptotic model fields,
//! and decay-rate extraction.

pub mod cg;
pub mod momentum;
pub mod poisson;
pub mod slope;

pub use cg::{cg, cg_guarded, cg_guarded_prec};
pub use momentum::{
    c_coefficient, greens_kernel, greens_momentum, lm_apply, model_e_fields, model_w_fields,
    solve_momentum_system, solve_momentum_system_from, w_infinity, MomentumSystem,
};
pub use poisson::{
    apply_operator, critical_potential, operator_diagonal, solve_critical_weight,
    solve_critical_weight_from, solve_poisson, solve_poisson_from, PoissonProblem, CG_TOL,
};
pub use slope::{decay_slope, DecaySlope};

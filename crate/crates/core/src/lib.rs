//! Synthesis of rational state-feedback controllers for nonlinear systems.
//!
//! Stability conditions with a Lyapunov function, Positivstellensatz
//! multipliers and an expanding operating ball are compiled into
//! sum-of-squares programs, lowered to semidefinite programs, and solved in
//! an alternating two-step iteration that keeps each step convex. The
//! resulting controllers `u_k = p_k(x) / q_k(x)` come with algebraic
//! certificates that can be re-checked numerically and validated in
//! closed-loop simulation.

pub mod bench;
pub mod polyalg;
pub mod polyparse;
pub mod sdpcore;
pub mod sosprog;
pub mod synth;
pub mod verify;

pub use polyalg::{Monomial, Polynomial, VarSubset, VariableSet};
pub use polyparse::{format_poly, load_system, parse_poly, parse_system};
pub use sdpcore::{export_sdpa, import_sdpa, solve, SdpProblem, SolveOptions, SolveStatus};
pub use sosprog::SosProgram;
pub use synth::{
    synthesize, traditional_iterate, RationalController, SynthesisConfig, SynthesisResult,
    SystemModel,
};
pub use verify::{
    certified_roa_level, check_certificate, roa_sample, settling_time, simulate, total_cost,
    SimOptions, Trajectory,
};

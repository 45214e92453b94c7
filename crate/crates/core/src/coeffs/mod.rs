//! Coefficient bundles for every block subproblem.
//!
//! Each builder turns the current design point into the quadratic (or
//! quartic) data its solver consumes, and each bundle can evaluate its own
//! form so the reduction can be checked against `metrics`.

mod beam;
mod filter;
mod phase;
mod power;

pub use beam::{build_w_problem, WProblemData};
pub use filter::{build_filter_problems, FilterProblemData};
pub use phase::{build_p2_coeffs, P2CoeffSet, P5CoeffSet, P7CoeffSet, PhaseTerms, PhiStep, Psi1Step, MAX_FULL_P2_RIS};
pub use power::{build_power_problem, PowerProblemData};

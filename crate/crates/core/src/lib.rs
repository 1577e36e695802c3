//! Structure-preserving model reduction of second-order systems with
//! proportional damping, from exact Gramians or frequency-domain samples.
//!
//! The crate provides three reduction routes that all return a reduced
//! second-order model with identity mass and proportionally damped structure:
//!
//! * [`gramian::bt_reduce`]: intrusive velocity balanced truncation from
//!   Gramian square-root factors (exact Lyapunov or quadrature).
//! * [`databt::databt_reduce`]: data-driven balanced truncation built from
//!   transfer-function samples alone.
//! * [`sylvester::krydatabt_reduce`]: the same reduced model assembled through
//!   extended Krylov solves of two Sylvester equations, avoiding the dense
//!   sample matrices.

pub mod databt;
pub mod error;
pub mod evaluation;
pub mod gramian;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod sampling;
pub mod sylvester;

pub use error::{Error, Result};
pub use gramian::{
    bt_reduce, lyapunov_velocity_gramians, quad_gramian_factors, sv_perturbation_bound,
    FactorKind, GramianFactors, SvBoundReport,
};
pub use model::{
    build_proportional, synth_msd_chain, synth_uniform_chain, FirstOrderRealization, Method,
    Provenance, ReducedModel, SecondOrderSystem,
};
pub use quadrature::{
    check_disjoint, logspace_nodes, make_offset_pair, make_symmetric_rule, trapezoid_weights,
    QuadratureRule, Side,
};
pub use sampling::{
    sample_model, validate_conjugate_closure, ClosureReport, FrequencySampleSet,
};

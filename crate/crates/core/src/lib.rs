//! Certification toolkit for bilevel programs reformulated through the Moreau
//! envelope of the lower-level problem.
//!
//! The crate is `no_std` (with `alloc`) and purely computational: it parses and
//! differentiates the problem data, solves the proximal inner problem,
//! evaluates the envelope and its directional derivatives, builds lower-level
//! multiplier polyhedra, checks constraint qualifications and searches for
//! stationarity certificates. File formats, reports and the command line live
//! in the `bec` companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod certify;
pub mod envelope;
pub mod expr;
pub mod inner;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod tol;

pub use certify::{
    check_foscms, check_mfcq, check_quasi_normality, compare_with_mpcc, in_critical_cone, lower_multiplier_set,
    search_stationarity, verify_certificate, verify_s_stationarity, verify_stationarity, vp_feasibility,
    CertifyError, CqCheck, CqReport, CqVerdict, CriticalConeReport, MpccComparison, MultiplierSet, QnVariant,
    SMultipliers, SStationarityReport, SamplingEvidence, SamplingPlan, StationarityCertificate, StationaritySystem,
};
pub use envelope::{
    dir_derivative, envelope_value, fd_dir_derivative, grad_y_envelope, subdiff_estimate, weak_convexity_check,
    DerivativeEstimate, Direction, EnvelopeError, EstimateKind, Hypotheses, Regime, SubdiffEstimate, SubdiffRule,
    WeakConvexityPlan, WeakConvexityReport, DEFAULT_FD_STEPS,
};
pub use expr::{parse_expr, EvalError, EvalPoint, Expr, ParseError, VarKind};
pub use inner::{
    inner_multiplier_polyhedron, solve_inner, solve_inner_from, solve_inner_with, InnerError, InnerOptions,
    InnerSolution,
};
pub use lp::{
    cone_only_zero, cone_only_zero_on, lp_feasible, lp_optimize, vertices, ConeVerdict, LpError, LpOutcome,
    LpStatus, Polyhedron, Sense,
};
pub use model::{
    active_set, validate, ActiveSet, BilevelProblem, ConstraintConvexity, GammaBound, ModelError,
    ObjectiveConvexity, ProblemSpec, SampleGrid, ValidationReport,
};

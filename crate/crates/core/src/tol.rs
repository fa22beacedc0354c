//! Numerical tolerances shared by every certification claim.

/// Feasibility of LP witnesses and cone-triviality decisions.
pub const FEAS: f64 = 1e-9;

/// Two vertices closer than this (max-norm) are the same vertex.
pub const DEDUP: f64 = 1e-7;

/// Residual bound for certificates and inner KKT invariants.
pub const CERT: f64 = 1e-8;

/// Default absolute tolerance for active sets and candidate feasibility.
pub const ACTIVE: f64 = 1e-8;

/// LP values within `MARGINAL_FACTOR * FEAS` of zero are flagged as marginal.
pub const MARGINAL_FACTOR: f64 = 10.0;

/// Inner solver termination (KKT residual and feasibility).
pub const INNER_KKT: f64 = 1e-10;

/// Inner solver termination used for finite-difference probes.
pub const PROBE_KKT: f64 = 1e-12;

/// Pivot threshold for dense eliminations and simplex ratio tests.
pub const PIVOT: f64 = 1e-12;

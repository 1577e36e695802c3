//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shifted pencil is numerically singular at s = {s} (condition estimate {cond:.3e}){}", node_index.map(|i| format!(", node index {i}")).unwrap_or_default())]
    SingularPencil {
        s: num_complex::Complex64,
        cond: f64,
        node_index: Option<usize>,
    },

    #[error("damping coefficients must be nonnegative (alpha = {alpha}, beta = {beta})")]
    NegativeCoefficient { alpha: f64, beta: f64 },

    #[error("node index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("bad interval: require 0 < lo < hi and nu >= 2 (lo = {lo}, hi = {hi}, nu = {nu})")]
    BadInterval { lo: f64, hi: f64, nu: usize },

    #[error("nodes not strictly increasing at position {position}")]
    NotIncreasing { position: usize },

    #[error("system carries no proportional damping pair (alpha, beta)")]
    MissingDamping,

    #[error("P/Q quadrature nodes are not disjoint: {0} colliding pair(s)")]
    DisjointnessViolation(usize),

    #[error("system is not asymptotically stable: eigenvalue {eigenvalue} has nonnegative real part")]
    UnstableSystem {
        eigenvalue: num_complex::Complex64,
    },

    #[error("Gramian is numerically indefinite: clipped negative mass {clipped:.3e} exceeds {limit:.3e}")]
    IndefiniteGramian { clipped: f64, limit: f64 },

    #[error("rank deficient: requested r = {r} but effective rank is {rank}")]
    RankDeficient { r: usize, rank: usize },

    #[error("degenerate denominator in closed-form entry (k = {k}, j = {j})")]
    DegenerateDenominator { k: usize, j: usize },

    #[error("singular 2x2 diagonal block at index {index}")]
    SingularBlock { index: usize },

    #[error("Sylvester coefficient spectra overlap: minimum separation {separation:.3e}")]
    SpectraOverlap { separation: f64 },

    #[error("Krylov breakdown: all new directions deflated at dimension {dimension}")]
    Breakdown { dimension: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Desk-scale simulator and verification library for compressed oracles.
//!
//! The crate models a quantum adversary querying an idealized oracle — a
//! random function, a random permutation, or a masked three-round Feistel
//! construction — together with the purified "database" view of that
//! oracle.  Every module turns an exact operator identity or a counting
//! statement into executable, numerically checked code:
//!
//! * [`qlinalg`] — sparse complex states over named registers, linear
//!   operators, density matrices, partial trace, trace distance.
//! * [`databases`] — partial functions, injective partial functions,
//!   permutations, and their enumerated Hilbert-space encodings.
//! * [`cfo`] — the compressed oracle for random *functions*.
//! * [`cpo`] — the compressed oracle for random *permutations*, with a
//!   direction bit for inverse queries.
//! * [`feistel_core`] — classical Feistel machinery: chains, canonical
//!   database triples, allowability, extension combinatorics, and the
//!   canonical compression operators.
//! * [`mforacle`] — the purified masked-Feistel oracle, sophisticated
//!   states, the intertwiner, ideal operators, twirl distributions, and
//!   cromulence estimation.
//! * [`games`] — predicate-search games against real and compressed
//!   permutation oracles, sparsity computation, and Feistel
//!   distinguishers.
//! * [`rng`] and [`fixtures`] — reproducibility plumbing: counter-based
//!   seeded randomness with stream splitting, and the frozen-constant
//!   regression store.

pub mod cfo;
pub mod cpo;
pub mod databases;
pub mod feistel_core;
pub mod fixtures;
pub mod games;
pub mod mforacle;
pub mod qlinalg;
pub mod rng;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown register `{0}`")]
    UnknownRegister(String),
    #[error("register cardinality mismatch for `{name}`: expected {expected}, got {got}")]
    CardinalityMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix is not Hermitian within tolerance (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("enumeration cap exceeded: {count} states > cap {cap}")]
    CapExceeded { count: usize, cap: usize },
    #[error("database cap too small to represent the image of a compression (size {size}, cap {cap})")]
    CompressionOverflow { size: usize, cap: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sampling budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

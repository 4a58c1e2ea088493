//! Exact finite-scale machinery for k-product-free subsets of free
//! semigroups and free groups.
//!
//! Everything here is tolerance-free where possible: measures and densities
//! are exact rationals, layer operations run on bitmaps, and every bounded
//! verification result is labelled with the bound it was checked to.

pub mod arith;
mod bitset;
pub mod density;
pub mod freegroup;
pub mod search;
pub mod steeple;
pub mod suite;
pub mod words;
pub mod wordsets;

use num_bigint::BigInt;
use num_rational::Ratio;

/// Exact rational used for all measures and densities.
pub type Q = Ratio<BigInt>;

/// Measure values are exact rationals; `mu` of a length-n word is `|A|^-n`.
pub type Measure = Q;

/// Builds the rational `num/den` from machine integers.
pub fn q(num: i64, den: i64) -> Q {
    Q::new(BigInt::from(num), BigInt::from(den))
}

pub use arith::{construct_asequence, rho, verify_asequence, ASequence};
pub use density::{analyze_chain, interval_density, layer_density, ChainAnalysis, Interval};
pub use freegroup::{reduce, GroupLabeling, ReducedWord, SignedLetter};
pub use search::{certify_containment, solve_exact, SearchInstance, SearchResult};
pub use steeple::{capture, coverage_bound, Steeplechase};
pub use words::{Alphabet, Word};
pub use wordsets::{Labeling, Witness, WordSet};

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("alphabet mismatch: |A| = {0} vs |A| = {1}")]
    AlphabetMismatch(u32, u32),
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("layer {0} is beyond the decidable bound {1}")]
    UndecidableLayer(u32, u32),
    #[error("enumeration bound overflow: {0}")]
    BoundOverflow(String),
    #[error("malformed A-sequence: {0}")]
    MalformedSequence(String),
    #[error("invalid word: {0}")]
    InvalidWord(String),
    #[error("search budget exceeded: {0}")]
    ExactInfeasible(String),
    #[error("invalid steeplechase: {0}")]
    InvalidSteeplechase(String),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Distributed rateless erasure codes for in-band path tracing.
//!
//! Each switch on a path of up to `K` hops sees a single codeword slot in
//! the packet header and either Adds its ID (XOR), Skips, or Replaces the
//! slot, with probabilities chosen so that the collector receives a
//! well-designed LT code over the path. The collector replays the same hash
//! decisions to learn which hops each codeword covers and peels.

pub mod binomial;
pub mod decoder;
pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod feasibility;
pub mod io;
pub mod protocol;
pub mod scalar;
pub mod search;
pub mod xdd;

pub use error::{Error, Result};
pub use feasibility::{
    check_feasible, check_invariant_feasible, derive_apa, exact_induced_sequence, Action,
    ActionProbs, Apa, ApaEntry, FeasibilityReport, Violation,
};
pub use scalar::{exact, Exact, Scalar};
pub use xdd::{Xdd, XddSequence};

pub type Xdd64 = Xdd<f64>;
pub type Xdd32 = Xdd<f32>;
pub type ExactXdd = Xdd<Exact>;
pub type XddSeq64 = XddSequence<f64>;
pub type XddSeq32 = XddSequence<f32>;
pub type ExactXddSeq = XddSequence<Exact>;
pub type Apa64 = Apa<f64>;
pub type Apa32 = Apa<f32>;
pub type ExactApa = Apa<Exact>;

// argument guards use `!(x > 0.0)` on purpose: the negated form also rejects
// NaN, which `x <= 0.0` would let through
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Numerical laboratory for the tail behaviour of strongly additive
//! arithmetic functions: exact empirical tails over n ≤ x, the matching
//! Bernoulli (Kubilius-type) random model, and saddle-point asymptotics,
//! built so each side can be cross-checked against the others.

pub mod additive;
pub mod error;
pub mod model;
pub mod psi;
pub mod saddle;
pub mod series;
pub mod sieve;
pub mod special;

pub use additive::AdditiveFunction;
pub use error::{Error, Result};
pub use psi::PsiDistribution;
pub use sieve::{Normalization, PrimeStats, TailTable};

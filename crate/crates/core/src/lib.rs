//! Exact-arithmetic toolkit for random walks on the group of invertible
//! upper-triangular matrices over the rationals.
//!
//! Everything that feeds a discrete decision (cell selection, valuations,
//! gauge membership) is computed in exact rational arithmetic; floating
//! point only appears in reported magnitudes and fitted rates.

pub mod boundary;
pub mod bruhat;
pub mod entropy;
pub mod gauge;
pub mod rational;
pub mod triangular;
pub mod walk;

#[cfg(test)]
pub(crate) mod testutil {
    use crate::rational::Rational;
    use crate::triangular::TriMatrix;
    use crate::walk::SplitMix64;

    pub fn rand_rational(rng: &mut SplitMix64, allow_zero: bool) -> Rational {
        loop {
            let num = (rng.next_u64() % 19) as i64 - 9;
            let den = (rng.next_u64() % 9) as i64 + 1;
            if allow_zero || num != 0 {
                return Rational::ratio(num, den);
            }
        }
    }

    pub fn rand_tri(rng: &mut SplitMix64, d: usize) -> TriMatrix {
        let rows: Vec<Vec<Rational>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        if j < i {
                            Rational::zero()
                        } else if j == i {
                            rand_rational(rng, false)
                        } else {
                            rand_rational(rng, true)
                        }
                    })
                    .collect()
            })
            .collect();
        TriMatrix::new(d, rows).unwrap()
    }
}

pub use boundary::{BoundaryPoint, ConvergenceReport, ErrorBound, PadicApproximant};
pub use bruhat::{CellDescriptor, WeylPerm};
pub use entropy::GroupDistribution;
pub use gauge::{AdelePoint, GaugeBound, GaugeReport, HPoint};
pub use rational::{LogNorm, Place, Rational};
pub use triangular::{SubspaceBasis, TriMatrix, UnipotentDiagonalSplit, WedgeRep};
pub use walk::{DriftProfile, DriftValue, StepMeasure, Trajectory};

/// Largest supported matrix dimension. Wedge spaces grow like a binomial
/// coefficient in `d`, so this is validated on construction rather than
/// assumed anywhere downstream.
pub const MAX_DIM: usize = 8;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("valuation of zero undefined")]
    ZeroValuation,
    #[error("zero denominator")]
    ZeroDenominator,
    #[error("invalid rational literal {0:?}")]
    BadRationalLiteral(String),
    #[error("{0} is not a prime number")]
    NotPrime(u64),
    #[error("factorization budget exceeded: {0} has no prime factor below the trial-division limit")]
    FactorBudget(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("dimension {0} outside supported range 1..={MAX_DIM}")]
    DimensionOutOfRange(usize),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("invalid measure (atom {atom}): {reason}")]
    InvalidMeasure { atom: usize, reason: String },
    #[error("index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("place {0} not covered by the drift profile")]
    PlaceNotCovered(Place),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("enumeration refused: predicted cost {predicted:.3e} exceeds budget {budget:.3e}")]
    BudgetExceeded { predicted: f64, budget: f64 },
    #[error("support guard exceeded: convolution needs {required} pairs, guard is {guard}")]
    SupportGuard { required: usize, guard: usize },
    #[error("trajectory source exhausted at step {0}")]
    SourceExhausted(usize),
    #[error("internal consistency failure: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Exact rational arithmetic for model coefficients and solver values.
//!
//! All coefficients, bounds and objective values in this crate are exact
//! rationals; no floating point enters model data or solver results. The
//! representation is [`num_rational::Ratio`] over `i128`, which keeps values
//! in lowest terms with a positive denominator. Instance data is small
//! integers, so `i128` leaves enormous headroom for the sums and quotients
//! produced by bound propagation.

use std::fmt;

pub use num_rational::Ratio;
pub use num_traits::{One, Signed, Zero};

/// Exact rational number: always in lowest terms, denominator positive.
pub type Rat = Ratio<i128>;

/// Shorthand for an integral rational.
pub fn rat(n: i64) -> Rat {
    Rat::from_integer(n as i128)
}

/// Rational from numerator and denominator. Panics if `d == 0`.
pub fn ratio(n: i64, d: i64) -> Rat {
    Rat::new(n as i128, d as i128)
}

/// A solver value on the extended line `Q ∪ {+∞}`.
///
/// `Infinite` is the payoff of a play violating the existential constraint
/// system; it is a distinguished marker ordered above every rational, not a
/// numeric sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GameValue {
    Finite(Rat),
    Infinite,
}

impl GameValue {
    pub fn is_finite(&self) -> bool {
        matches!(self, GameValue::Finite(_))
    }

    /// The finite payoff, if any.
    pub fn finite(&self) -> Option<Rat> {
        match self {
            GameValue::Finite(v) => Some(*v),
            GameValue::Infinite => None,
        }
    }

    /// Adds a finite amount; `+∞` absorbs.
    pub fn plus(&self, delta: Rat) -> GameValue {
        match self {
            GameValue::Finite(v) => GameValue::Finite(*v + delta),
            GameValue::Infinite => GameValue::Infinite,
        }
    }
}

impl From<Rat> for GameValue {
    fn from(v: Rat) -> Self {
        GameValue::Finite(v)
    }
}

impl fmt::Display for GameValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GameValue::Finite(v) => write!(f, "{v}"),
            GameValue::Infinite => write!(f, "inf"),
        }
    }
}

/// Search window bound on the doubly extended line `{-∞} ∪ Q ∪ {+∞}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Bound {
    NegInf,
    Finite(Rat),
    PosInf,
}

impl From<GameValue> for Bound {
    fn from(v: GameValue) -> Self {
        match v {
            GameValue::Finite(r) => Bound::Finite(r),
            GameValue::Infinite => Bound::PosInf,
        }
    }
}

//! Scalar types a trajectory can be simulated over: `f64`, or exact
//! arbitrary-precision rationals.

use std::fmt::{self, Debug, Display};
use std::ops::{Add, Div, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Float consensus threshold on `max - min`.
pub const FLOAT_CONSENSUS_TOL: f64 = 1e-12;

pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Send
    + Sync
{
    /// `num / den`, exact in rational mode.
    fn ratio(num: i64, den: i64) -> Self;

    /// Converts a float coefficient, or `None` when the scalar type cannot
    /// represent transitions with arbitrary real entries.
    fn from_coefficient(v: f64) -> Option<Self>;

    fn to_f64(&self) -> f64;

    /// All entries agree: exactly for rationals, within
    /// [`FLOAT_CONSENSUS_TOL`] for floats.
    fn is_consensus(values: &[Self]) -> bool;

    /// CSV cell rendering.
    fn render(&self) -> String;

    const MODE: Mode;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Float,
    Rational,
}

impl Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Float => "float",
            Mode::Rational => "rational",
        })
    }
}

impl Scalar for f64 {
    fn ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn from_coefficient(v: f64) -> Option<Self> {
        Some(v)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn is_consensus(values: &[Self]) -> bool {
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        values.is_empty() || hi - lo <= FLOAT_CONSENSUS_TOL
    }

    fn render(&self) -> String {
        format_g17(*self)
    }

    const MODE: Mode = Mode::Float;
}

impl Scalar for BigRational {
    fn ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_coefficient(_: f64) -> Option<Self> {
        None
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            if self.is_negative() {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        })
    }

    fn is_consensus(values: &[Self]) -> bool {
        values.windows(2).all(|w| w[0] == w[1])
    }

    fn render(&self) -> String {
        format!("{}/{}", self.numer(), self.denom())
    }

    const MODE: Mode = Mode::Rational;
}

/// Full-precision float text, C `%.17g` style.
pub fn format_g17(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_fraction(mantissa), exp.abs())
    } else {
        trim_fraction(&format!("{v:.*}", (16 - exp) as usize)).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Arithmetic mean of a slice.
pub fn mean<S: Scalar>(values: &[S]) -> S {
    let sum = values.iter().cloned().fold(S::zero(), |a, b| a + b);
    sum / S::ratio(values.len() as i64, 1)
}

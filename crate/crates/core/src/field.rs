//! Exact coefficient fields.
//!
//! Everything in the crate is generic over a [`Field`]. The default
//! instantiation is [`Rational`], a rational number that stays on machine
//! words while it fits and spills to arbitrary precision otherwise.
//! `num_rational::BigRational` implements the trait as well and is used by
//! the tests as an independent arithmetic backend.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Rem, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Num, One, Signed, ToPrimitive, Zero};

/// An exact field of characteristic zero.
pub trait Field:
    Clone
    + PartialEq
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
    + Num
    + Signed
    + Neg<Output = Self>
{
    fn from_ratio(num: i64, den: i64) -> Self;

    fn from_int(n: i64) -> Self {
        Self::from_ratio(n, 1)
    }

    fn mul_ref(&self, rhs: &Self) -> Self {
        self.clone() * rhs.clone()
    }

    fn add_ref(&self, rhs: &Self) -> Self {
        self.clone() + rhs.clone()
    }

    fn add_assign_ref(&mut self, rhs: &Self) {
        *self = self.add_ref(rhs);
    }

    fn is_integer(&self) -> bool;
}

impl Field for BigRational {
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn mul_ref(&self, rhs: &Self) -> Self {
        self * rhs
    }

    fn add_ref(&self, rhs: &Self) -> Self {
        self + rhs
    }

    fn add_assign_ref(&mut self, rhs: &Self) {
        *self += rhs;
    }

    fn is_integer(&self) -> bool {
        Ratio::is_integer(self)
    }
}

/// Exact rational number with a machine-word fast path.
///
/// The representation is canonical: a value is stored as `Small` whenever its
/// reduced numerator fits an `i64` and its denominator a `u64`.
#[derive(Clone)]
pub struct Rational(Repr);

#[derive(Clone)]
enum Repr {
    Small { num: i64, den: u64 },
    Big(Box<BigRational>),
}

fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    if a == 0 {
        return b;
    }
    if b == 0 {
        return a;
    }
    let shift = (a | b).trailing_zeros();
    a >>= a.trailing_zeros();
    loop {
        b >>= b.trailing_zeros();
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        b -= a;
        if b == 0 {
            return a << shift;
        }
    }
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        let (n, d) = if den < 0 {
            (-(num as i128), -(den as i128))
        } else {
            (num as i128, den as i128)
        };
        Self::from_i128(n, d as u128)
    }

    fn from_i128(num: i128, den: u128) -> Self {
        if num == 0 {
            return Rational(Repr::Small { num: 0, den: 1 });
        }
        let g = gcd_u128(num.unsigned_abs(), den);
        let n = num / g as i128;
        let d = den / g;
        match (i64::try_from(n), u64::try_from(d)) {
            (Ok(num), Ok(den)) => Rational(Repr::Small { num, den }),
            _ => {
                let big = BigRational::new_raw(BigInt::from(n), BigInt::from(d));
                Rational(Repr::Big(Box::new(big)))
            }
        }
    }

    fn from_big(big: BigRational) -> Self {
        if let (Some(n), Some(d)) = (big.numer().to_i64(), big.denom().to_u64()) {
            return Rational(Repr::Small { num: n, den: d });
        }
        Rational(Repr::Big(Box::new(big)))
    }

    pub fn to_big(&self) -> BigRational {
        match &self.0 {
            Repr::Small { num, den } => {
                BigRational::new_raw(BigInt::from(*num), BigInt::from(*den))
            }
            Repr::Big(b) => (**b).clone(),
        }
    }

    pub fn numer_denom(&self) -> (BigInt, BigInt) {
        let b = self.to_big();
        (b.numer().clone(), b.denom().clone())
    }

    fn add_impl(&self, rhs: &Self) -> Self {
        if let (Repr::Small { num: a, den: b }, Repr::Small { num: c, den: d }) = (&self.0, &rhs.0)
        {
            if *b == *d {
                let n = *a as i128 + *c as i128;
                return Self::from_i128(n, *b as u128);
            }
            let ad = (*a as i128).checked_mul(*d as i128);
            let cb = (*c as i128).checked_mul(*b as i128);
            if let (Some(ad), Some(cb)) = (ad, cb) {
                if let Some(n) = ad.checked_add(cb) {
                    return Self::from_i128(n, *b as u128 * *d as u128);
                }
            }
        }
        Self::from_big(self.to_big() + rhs.to_big())
    }

    fn mul_impl(&self, rhs: &Self) -> Self {
        if let (Repr::Small { num: a, den: b }, Repr::Small { num: c, den: d }) = (&self.0, &rhs.0)
        {
            if *a == 0 || *c == 0 {
                return Rational::zero();
            }
            // cross-cancel first so the products stay small
            let g1 = gcd_u128(a.unsigned_abs() as u128, *d as u128);
            let g2 = gcd_u128(c.unsigned_abs() as u128, *b as u128);
            let n = (*a as i128 / g1 as i128) * (*c as i128 / g2 as i128);
            let den = (*b as u128 / g2) * (*d as u128 / g1);
            return Self::from_i128(n, den);
        }
        Self::from_big(self.to_big() * rhs.to_big())
    }

    fn recip(&self) -> Self {
        match &self.0 {
            Repr::Small { num, den } => {
                assert!(*num != 0, "division by zero");
                let sign: i128 = if *num < 0 { -1 } else { 1 };
                Self::from_i128(sign * *den as i128, num.unsigned_abs() as u128)
            }
            Repr::Big(b) => Self::from_big(b.recip()),
        }
    }
}

impl Zero for Rational {
    fn zero() -> Self {
        Rational(Repr::Small { num: 0, den: 1 })
    }

    fn is_zero(&self) -> bool {
        matches!(self.0, Repr::Small { num: 0, .. })
    }
}

impl One for Rational {
    fn one() -> Self {
        Rational(Repr::Small { num: 1, den: 1 })
    }
}

impl Add for Rational {
    type Output = Rational;
    fn add(self, rhs: Self) -> Self {
        self.add_impl(&rhs)
    }
}

impl Sub for Rational {
    type Output = Rational;
    fn sub(self, rhs: Self) -> Self {
        self.add_impl(&-rhs)
    }
}

impl Mul for Rational {
    type Output = Rational;
    fn mul(self, rhs: Self) -> Self {
        self.mul_impl(&rhs)
    }
}

impl Div for Rational {
    type Output = Rational;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Self) -> Self {
        self.mul_impl(&rhs.recip())
    }
}

impl Rem for Rational {
    type Output = Rational;
    fn rem(self, rhs: Self) -> Self {
        Self::from_big(self.to_big() % rhs.to_big())
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Self {
        match self.0 {
            Repr::Small { num, den } => match num.checked_neg() {
                Some(n) => Rational(Repr::Small { num: n, den }),
                None => Self::from_big(-BigRational::new_raw(num.into(), den.into())),
            },
            Repr::Big(b) => Self::from_big(-*b),
        }
    }
}

impl PartialEq for Rational {
    fn eq(&self, other: &Self) -> bool {
        match (&self.0, &other.0) {
            (Repr::Small { num: a, den: b }, Repr::Small { num: c, den: d }) => a == c && b == d,
            (Repr::Big(a), Repr::Big(b)) => a == b,
            // canonical representation: a small and a big value never coincide
            _ => false,
        }
    }
}

impl Eq for Rational {}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        match (&self.0, &other.0) {
            (Repr::Small { num: a, den: b }, Repr::Small { num: c, den: d }) => {
                (*a as i128 * *d as i128).cmp(&(*c as i128 * *b as i128))
            }
            _ => self.to_big().cmp(&other.to_big()),
        }
    }
}

impl std::hash::Hash for Rational {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        match &self.0 {
            Repr::Small { num, den } => {
                num.hash(state);
                den.hash(state);
            }
            Repr::Big(b) => b.hash(state),
        }
    }
}

impl Num for Rational {
    type FromStrRadixErr = ParseRationalError;

    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        let err = || ParseRationalError(s.to_string());
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n, d),
            None => (s, "1"),
        };
        let n = BigInt::from_str_radix(n.trim(), radix).map_err(|_| err())?;
        let d = BigInt::from_str_radix(d.trim(), radix).map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        Ok(Self::from_big(BigRational::new(n, d)))
    }
}

impl Signed for Rational {
    fn abs(&self) -> Self {
        if self.is_negative() {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn abs_sub(&self, other: &Self) -> Self {
        if self <= other {
            Rational::zero()
        } else {
            self.clone() - other.clone()
        }
    }

    fn signum(&self) -> Self {
        if self.is_zero() {
            Rational::zero()
        } else if self.is_negative() {
            -Rational::one()
        } else {
            Rational::one()
        }
    }

    fn is_positive(&self) -> bool {
        match &self.0 {
            Repr::Small { num, .. } => *num > 0,
            Repr::Big(b) => b.is_positive(),
        }
    }

    fn is_negative(&self) -> bool {
        match &self.0 {
            Repr::Small { num, .. } => *num < 0,
            Repr::Big(b) => b.is_negative(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational literal `{0}`")]
pub struct ParseRationalError(pub String);

impl FromStr for Rational {
    type Err = ParseRationalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_str_radix(s.trim(), 10)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Small { num, den: 1 } => write!(f, "{num}"),
            Repr::Small { num, den } => write!(f, "{num}/{den}"),
            Repr::Big(b) => write!(f, "{b}"),
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl From<i64> for Rational {
    fn from(n: i64) -> Self {
        Rational(Repr::Small { num: n, den: 1 })
    }
}

impl Field for Rational {
    fn from_ratio(num: i64, den: i64) -> Self {
        Rational::new(num, den)
    }

    fn mul_ref(&self, rhs: &Self) -> Self {
        self.mul_impl(rhs)
    }

    fn add_ref(&self, rhs: &Self) -> Self {
        self.add_impl(rhs)
    }

    fn add_assign_ref(&mut self, rhs: &Self) {
        *self = self.add_impl(rhs);
    }

    fn is_integer(&self) -> bool {
        match &self.0 {
            Repr::Small { den, .. } => *den == 1,
            Repr::Big(b) => b.is_integer(),
        }
    }
}

/// `n!` as a field element.
pub fn factorial<R: Field>(n: u32) -> R {
    (1..=n as i64).fold(R::one(), |acc, k| acc * R::from_int(k))
}

/// Falling factorial `n (n-1) ... (n-k+1)`.
pub fn falling<R: Field>(n: u32, k: u32) -> R {
    (0..k as i64).fold(R::one(), |acc, j| acc * R::from_int(n as i64 - j))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(n: i64, d: i64) -> BigRational {
        BigRational::from_ratio(n, d)
    }

    #[test]
    fn small_arithmetic_is_reduced() {
        let a = Rational::new(6, -4);
        assert_eq!(a.to_string(), "-3/2");
        let b = Rational::new(1, 6);
        assert_eq!((a.clone() + b.clone()).to_string(), "-4/3");
        assert_eq!((a.clone() * b.clone()).to_string(), "-1/4");
        assert_eq!((a / b).to_string(), "-9");
    }

    #[test]
    fn overflow_spills_to_big_and_comes_back() {
        let huge = Rational::new(i64::MAX, 1);
        let sq = huge.clone() * huge.clone();
        assert!(matches!(sq.0, Repr::Big(_)));
        let back = sq / huge.clone();
        assert!(matches!(back.0, Repr::Small { .. }));
        assert_eq!(back, huge);
        let neg = -Rational::new(i64::MIN, 1);
        assert_eq!(neg.to_big(), -big(i64::MIN, 1));
    }

    #[test]
    fn agrees_with_bigrational() {
        let vals = [(1, 3), (-7, 12), (1 << 40, 3), (5, 1 << 50), (-(1 << 62), 7)];
        for &(a, b) in &vals {
            for &(c, d) in &vals {
                let x = Rational::new(a, b);
                let y = Rational::new(c, d);
                assert_eq!((x.clone() + y.clone()).to_big(), big(a, b) + big(c, d));
                assert_eq!((x.clone() * y.clone()).to_big(), big(a, b) * big(c, d));
                assert_eq!((x.clone() - y.clone()).to_big(), big(a, b) - big(c, d));
                assert_eq!(x.cmp(&y), big(a, b).cmp(&big(c, d)));
            }
        }
    }

    #[test]
    fn parses_fractions() {
        assert_eq!("3/9".parse::<Rational>().unwrap(), Rational::new(1, 3));
        assert_eq!("-5".parse::<Rational>().unwrap(), Rational::from(-5));
        assert!("x".parse::<Rational>().is_err());
    }
}

//! Truncated Laurent series in the formal parameter `nu`.

use std::fmt;

use crate::chart::{Chart, ChartFunction};
use crate::field::Field;
use crate::scalar::Scalar;

/// Coefficient types a [`NuSeries`] can carry.
pub trait SeriesCoeff: Clone + PartialEq + fmt::Display {
    fn zero_like(&self) -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
}

impl<R: Field> SeriesCoeff for Scalar<R> {
    fn zero_like(&self) -> Self {
        Scalar::zero()
    }
    fn is_zero(&self) -> bool {
        Scalar::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        Scalar::add(self, other)
    }
    fn sub(&self, other: &Self) -> Self {
        Scalar::sub(self, other)
    }
    fn mul(&self, other: &Self) -> Self {
        Scalar::mul(self, other)
    }
}

impl<R: Field> SeriesCoeff for ChartFunction<R> {
    fn zero_like(&self) -> Self {
        ChartFunction::zero(self.chart())
    }
    fn is_zero(&self) -> bool {
        ChartFunction::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        ChartFunction::add(self, other)
    }
    fn sub(&self, other: &Self) -> Self {
        ChartFunction::sub(self, other)
    }
    fn mul(&self, other: &Self) -> Self {
        ChartFunction::mul(self, other)
    }
}

/// `sum_{k=lo}^{hi} c_k nu^k`, exact through `nu^hi`.
#[derive(Clone, PartialEq)]
pub struct NuSeries<T: SeriesCoeff> {
    lo: i32,
    hi: i32,
    zero: T,
    coeffs: Vec<T>,
}

impl<T: SeriesCoeff> NuSeries<T> {
    /// Zero series exact through `nu^hi`, with lowest admissible power `lo`.
    pub fn zero(zero: T, lo: i32, hi: i32) -> Self {
        assert!(lo <= hi + 1);
        let n = (hi - lo + 1).max(0) as usize;
        NuSeries { lo, hi, coeffs: vec![zero.clone(); n], zero }
    }

    /// `c nu^0` exact through `nu^hi`.
    pub fn constant(c: T, hi: i32) -> Self {
        let mut s = Self::zero(c.zero_like(), 0, hi);
        s.set(0, c);
        s
    }

    pub fn from_coeffs(lo: i32, coeffs: Vec<T>, zero: T) -> Self {
        let hi = lo + coeffs.len() as i32 - 1;
        NuSeries { lo, hi, coeffs, zero }
    }

    pub fn lo(&self) -> i32 {
        self.lo
    }

    /// Highest power known exactly.
    pub fn order(&self) -> i32 {
        self.hi
    }

    pub fn coeff(&self, k: i32) -> &T {
        if k < self.lo || k > self.hi {
            &self.zero
        } else {
            &self.coeffs[(k - self.lo) as usize]
        }
    }

    pub fn set(&mut self, k: i32, c: T) {
        assert!(k >= self.lo && k <= self.hi, "nu power {k} outside [{}, {}]", self.lo, self.hi);
        self.coeffs[(k - self.lo) as usize] = c;
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    pub fn truncate(&self, hi: i32) -> Self {
        let hi = hi.min(self.hi);
        let n = (hi - self.lo + 1).max(0) as usize;
        NuSeries { lo: self.lo, hi, coeffs: self.coeffs[..n].to_vec(), zero: self.zero.clone() }
    }

    pub fn add(&self, other: &Self) -> Self {
        let lo = self.lo.min(other.lo);
        let hi = self.hi.min(other.hi);
        let mut out = Self::zero(self.zero.clone(), lo, hi);
        for k in lo..=hi {
            out.set(k, self.coeff(k).add(other.coeff(k)));
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let lo = self.lo.min(other.lo);
        let hi = self.hi.min(other.hi);
        let mut out = Self::zero(self.zero.clone(), lo, hi);
        for k in lo..=hi {
            out.set(k, self.coeff(k).sub(other.coeff(k)));
        }
        out
    }

    /// Cauchy product; exact through `min(hi_a + lo_b, hi_b + lo_a)`.
    pub fn mul(&self, other: &Self) -> Self {
        let lo = self.lo + other.lo;
        let hi = (self.hi + other.lo).min(other.hi + self.lo);
        let mut out = Self::zero(self.zero.clone(), lo, hi);
        for i in self.lo..=self.hi {
            if self.coeff(i).is_zero() {
                continue;
            }
            for j in other.lo..=other.hi {
                let k = i + j;
                if k > hi {
                    break;
                }
                let p = self.coeff(i).mul(other.coeff(j));
                let s = out.coeff(k).add(&p);
                out.set(k, s);
            }
        }
        out
    }

    /// Multiply by `nu^k`.
    pub fn shift(&self, k: i32) -> Self {
        NuSeries { lo: self.lo + k, hi: self.hi + k, coeffs: self.coeffs.clone(), zero: self.zero.clone() }
    }

    pub fn map<U: SeriesCoeff>(&self, zero: U, mut f: impl FnMut(&T) -> U) -> NuSeries<U> {
        NuSeries { lo: self.lo, hi: self.hi, coeffs: self.coeffs.iter().map(&mut f).collect(), zero }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, &T)> {
        (self.lo..=self.hi).map(move |k| (k, self.coeff(k)))
    }
}

impl<R: Field> NuSeries<ChartFunction<R>> {
    pub fn function(f: ChartFunction<R>, hi: i32) -> Self {
        Self::constant(f, hi)
    }

    pub fn zero_fn(chart: Chart, lo: i32, hi: i32) -> Self {
        Self::zero(ChartFunction::zero(chart), lo, hi)
    }

    pub fn scale(&self, c: &R) -> Self {
        self.map(self.zero.clone(), |f| f.scale(c))
    }
}

impl<R: Field> NuSeries<Scalar<R>> {
    pub fn zero_scalar(lo: i32, hi: i32) -> Self {
        Self::zero(Scalar::zero(), lo, hi)
    }
}

impl<T: SeriesCoeff> fmt::Display for NuSeries<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, c) in self.iter() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match k {
                0 => write!(f, "({c})")?,
                1 => write!(f, "({c})*nu")?,
                _ => write!(f, "({c})*nu^{k}")?,
            }
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, " + O(nu^{})", self.hi + 1)
    }
}

impl<T: SeriesCoeff> fmt::Debug for NuSeries<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NuSeries({self})")
    }
}

/// `value * (2 pi)^power`: the exact form of torus integrals.
#[derive(Clone, PartialEq, Debug)]
pub struct TwoPi<S> {
    pub power: i32,
    pub value: S,
}

impl<S> TwoPi<S> {
    pub fn new(power: i32, value: S) -> Self {
        TwoPi { power, value }
    }
}

impl<S: fmt::Display> fmt::Display for TwoPi<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.power {
            0 => write!(f, "{}", self.value),
            1 => write!(f, "(2pi) * ({})", self.value),
            p => write!(f, "(2pi)^{p} * ({})", self.value),
        }
    }
}

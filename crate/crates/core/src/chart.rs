//! Functions on a chart: trigonometric polynomials on the torus `T^{2m}` or
//! polynomials on `R^{2m}`, with coefficients in the jet ring of [`Scalar`].

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

use crate::field::Field;
use crate::scalar::{combine, merge_add, Caps, Gen, Mono, Scalar};

pub const MAX_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Torus,
    Affine,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Torus => "torus",
            Mode::Affine => "affine",
        })
    }
}

/// Chart descriptor: mode and half-dimension `m` (coordinates `x1..x{2m}`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Chart {
    pub mode: Mode,
    pub m: u8,
}

impl Chart {
    pub fn new(mode: Mode, m: u8) -> Result<Chart, ChartError> {
        if m == 0 || 2 * m as usize > MAX_DIM {
            return Err(ChartError::BadDimension(m));
        }
        Ok(Chart { mode, m })
    }

    pub fn torus(m: u8) -> Chart {
        Chart::new(Mode::Torus, m).expect("valid half-dimension")
    }

    pub fn affine(m: u8) -> Chart {
        Chart::new(Mode::Affine, m).expect("valid half-dimension")
    }

    pub fn dim(&self) -> usize {
        2 * self.m as usize
    }

    pub fn check_index(&self, i: usize) -> Result<(), ChartError> {
        if i < self.dim() {
            Ok(())
        } else {
            Err(ChartError::IndexOutOfRange { index: i, dim: self.dim() })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChartError {
    #[error("half-dimension {0} is not supported (need 1..=3)")]
    BadDimension(u8),
    #[error("chart mismatch: {0:?} vs {1:?}")]
    Mismatch(Chart, Chart),
    #[error("coordinate index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("operation `{op}` is not supported in {mode} mode")]
    Unsupported { op: &'static str, mode: Mode },
    #[error("form degree mismatch: expected {expected}, got {got}")]
    Degree { expected: usize, got: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Kind {
    Cos,
    Sin,
    Poly,
}

/// A basis function: `cos(k.x)`, `sin(k.x)` with `k` lexicographically
/// positive (or `cos(0) = 1`), or a monomial `x^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Basis {
    pub kind: Kind,
    pub v: [i16; MAX_DIM],
}

impl Basis {
    pub const ONE_TRIG: Basis = Basis { kind: Kind::Cos, v: [0; MAX_DIM] };
    pub const ONE_POLY: Basis = Basis { kind: Kind::Poly, v: [0; MAX_DIM] };

    pub fn one(mode: Mode) -> Basis {
        match mode {
            Mode::Torus => Self::ONE_TRIG,
            Mode::Affine => Self::ONE_POLY,
        }
    }

    pub fn is_one(&self) -> bool {
        self.v == [0; MAX_DIM] && self.kind != Kind::Sin
    }

    /// Canonical trig basis element with sign, `None` for `sin(0)`.
    #[inline]
    pub fn trig(kind: Kind, mut v: [i16; MAX_DIM]) -> Option<(Basis, bool)> {
        let lead = v.iter().copied().find(|&x| x != 0);
        match lead {
            None => (kind == Kind::Cos).then_some((Basis { kind, v }, false)),
            Some(x) if x > 0 => Some((Basis { kind, v }, false)),
            Some(_) => {
                for x in v.iter_mut() {
                    *x = -*x;
                }
                Some((Basis { kind, v }, kind == Kind::Sin))
            }
        }
    }

    fn add_v(a: &[i16; MAX_DIM], b: &[i16; MAX_DIM], sign: i16) -> [i16; MAX_DIM] {
        let mut out = [0i16; MAX_DIM];
        for i in 0..MAX_DIM {
            out[i] = a[i] + sign * b[i];
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FKey {
    pub basis: Basis,
    pub mono: Mono,
}

/// A function on a chart with jet-ring coefficients, in canonical form.
///
/// Equality compares chart and value, not truncation orders.
#[derive(Clone)]
pub struct ChartFunction<R: Field> {
    chart: Chart,
    caps: Caps,
    terms: Vec<(FKey, R)>,
}

impl<R: Field> ChartFunction<R> {
    pub fn zero(chart: Chart) -> Self {
        ChartFunction { chart, caps: Caps::none(), terms: Vec::new() }
    }

    pub fn constant(chart: Chart, c: R) -> Self {
        Self::from_scalar(chart, &Scalar::from_field(c))
    }

    pub fn from_int(chart: Chart, n: i64) -> Self {
        Self::constant(chart, R::from_int(n))
    }

    pub fn one(chart: Chart) -> Self {
        Self::from_int(chart, 1)
    }

    pub fn from_scalar(chart: Chart, s: &Scalar<R>) -> Self {
        let b = Basis::one(chart.mode);
        let terms = s.terms().iter().map(|(m, c)| (FKey { basis: b, mono: *m }, c.clone())).collect();
        ChartFunction { chart, caps: s.caps(), terms }
    }

    /// The generator `g` as a constant function.
    pub fn gen(chart: Chart, g: Gen, cap: u8) -> Self {
        Self::from_scalar(chart, &Scalar::gen(g, cap))
    }

    fn freq(chart: Chart, k: &[i64]) -> [i16; MAX_DIM] {
        assert_eq!(k.len(), chart.dim(), "frequency vector has wrong length");
        let mut v = [0i16; MAX_DIM];
        for (slot, &x) in v.iter_mut().zip(k) {
            *slot = i16::try_from(x).expect("frequency out of range");
        }
        v
    }

    fn trig_fn(chart: Chart, kind: Kind, k: &[i64]) -> Self {
        assert_eq!(chart.mode, Mode::Torus, "trig functions need torus mode");
        match Basis::trig(kind, Self::freq(chart, k)) {
            None => Self::zero(chart),
            Some((basis, neg)) => {
                let c = if neg { -R::one() } else { R::one() };
                ChartFunction { chart, caps: Caps::none(), terms: vec![(FKey { basis, mono: Mono::ONE }, c)] }
            }
        }
    }

    /// `cos(k.x)`; torus mode only.
    pub fn cos(chart: Chart, k: &[i64]) -> Self {
        Self::trig_fn(chart, Kind::Cos, k)
    }

    /// `sin(k.x)`; torus mode only.
    pub fn sin(chart: Chart, k: &[i64]) -> Self {
        Self::trig_fn(chart, Kind::Sin, k)
    }

    /// `cos(x_i)` with a zero-based coordinate index.
    pub fn cos_x(chart: Chart, i: usize) -> Self {
        let mut k = vec![0; chart.dim()];
        k[i] = 1;
        Self::cos(chart, &k)
    }

    pub fn sin_x(chart: Chart, i: usize) -> Self {
        let mut k = vec![0; chart.dim()];
        k[i] = 1;
        Self::sin(chart, &k)
    }

    /// `x^alpha`; affine mode only.
    pub fn monomial(chart: Chart, alpha: &[i64]) -> Self {
        assert_eq!(chart.mode, Mode::Affine, "polynomials need affine mode");
        let v = Self::freq(chart, alpha);
        assert!(v.iter().all(|&x| x >= 0), "negative exponent");
        ChartFunction {
            chart,
            caps: Caps::none(),
            terms: vec![(FKey { basis: Basis { kind: Kind::Poly, v }, mono: Mono::ONE }, R::one())],
        }
    }

    /// The coordinate `x_i` (zero-based); affine mode only.
    pub fn coord(chart: Chart, i: usize) -> Self {
        let mut a = vec![0; chart.dim()];
        a[i] = 1;
        Self::monomial(chart, &a)
    }

    /// Build from raw `(basis, mono, coeff)` triples; trig bases are
    /// canonicalised.
    pub fn from_raw(chart: Chart, caps: Caps, raw: Vec<(Basis, Mono, R)>) -> Self {
        let mut terms = Vec::with_capacity(raw.len());
        for (b, m, c) in raw {
            if !m.fits(caps) {
                continue;
            }
            match b.kind {
                Kind::Poly => terms.push((FKey { basis: b, mono: m }, c)),
                kind => {
                    if let Some((basis, neg)) = Basis::trig(kind, b.v) {
                        terms.push((FKey { basis, mono: m }, if neg { -c } else { c }));
                    }
                }
            }
        }
        ChartFunction { chart, caps, terms: combine(terms) }
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn terms(&self) -> &[(FKey, R)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// True when every term carries a positive power of some generator.
    pub fn is_nilpotent(&self) -> bool {
        self.terms.iter().all(|(k, _)| !k.mono.is_one())
    }

    pub fn is_jet_free(&self) -> bool {
        self.terms.iter().all(|(k, _)| k.mono.is_one())
    }

    fn check(&self, other: &Self) -> Result<(), ChartError> {
        if self.chart == other.chart {
            Ok(())
        } else {
            Err(ChartError::Mismatch(self.chart, other.chart))
        }
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, ChartError> {
        self.check(other)?;
        let caps = self.caps.meet(other.caps);
        let mut terms = merge_add(&self.terms, &other.terms, None);
        if caps != self.caps || caps != other.caps {
            terms.retain(|(k, _)| k.mono.fits(caps));
        }
        Ok(ChartFunction { chart: self.chart, caps, terms })
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, ChartError> {
        self.checked_add(&other.neg())
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self, ChartError> {
        self.check(other)?;
        Ok(self.mul_unchecked(other))
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, other: &Self, c: &R) -> Self {
        assert_eq!(self.chart, other.chart, "chart mismatch");
        if c.is_zero() {
            return self.clone();
        }
        let caps = self.caps.meet(other.caps);
        let mut terms = merge_add(&self.terms, &other.terms, Some(c));
        if caps != self.caps || caps != other.caps {
            terms.retain(|(k, _)| k.mono.fits(caps));
        }
        ChartFunction { chart: self.chart, caps, terms }
    }

    pub fn scale(&self, c: &R) -> Self {
        if c.is_zero() {
            return ChartFunction { chart: self.chart, caps: self.caps, terms: Vec::new() };
        }
        ChartFunction {
            chart: self.chart,
            caps: self.caps,
            terms: self.terms.iter().map(|(k, x)| (*k, x.mul_ref(c))).collect(),
        }
    }

    pub fn scale_int(&self, n: i64) -> Self {
        self.scale(&R::from_int(n))
    }

    pub fn scale_scalar(&self, s: &Scalar<R>) -> Self {
        self.mul_unchecked(&Self::from_scalar(self.chart, s))
    }

    fn mul_unchecked(&self, other: &Self) -> Self {
        let caps = self.caps.meet(other.caps);
        let chart = self.chart;
        if self.terms.is_empty() || other.terms.is_empty() {
            return ChartFunction { chart, caps, terms: Vec::new() };
        }
        let half = R::from_ratio(1, 2);
        let mut out: Vec<(FKey, R)> = Vec::with_capacity(2 * self.terms.len() * other.terms.len());
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                let Some(mono) = ka.mono.mul(kb.mono, caps) else { continue };
                let c = ca.mul_ref(cb);
                push_basis_product(&mut out, &ka.basis, &kb.basis, mono, c, &half);
            }
        }
        ChartFunction { chart, caps, terms: combine(out) }
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut acc = Self::one(self.chart);
        for _ in 0..n {
            acc = acc.mul_unchecked(self);
        }
        acc
    }

    /// Partial derivative in coordinate `i` (zero-based).
    pub fn derivative(&self, i: usize) -> Result<Self, ChartError> {
        self.chart.check_index(i)?;
        let mut out = Vec::with_capacity(self.terms.len());
        for (k, c) in &self.terms {
            let b = k.basis;
            let ki = b.v[i] as i64;
            if ki == 0 {
                continue;
            }
            match b.kind {
                Kind::Cos => out.push((FKey { basis: Basis { kind: Kind::Sin, ..b }, mono: k.mono }, c.mul_ref(&R::from_int(-ki)))),
                Kind::Sin => out.push((FKey { basis: Basis { kind: Kind::Cos, ..b }, mono: k.mono }, c.mul_ref(&R::from_int(ki)))),
                Kind::Poly => {
                    let mut v = b.v;
                    v[i] -= 1;
                    out.push((FKey { basis: Basis { kind: Kind::Poly, v }, mono: k.mono }, c.mul_ref(&R::from_int(ki))));
                }
            }
        }
        // cos <-> sin swaps reorder keys
        let terms = if self.chart.mode == Mode::Affine {
            combine(out)
        } else {
            out.sort_unstable_by(|a, b| a.0.cmp(&b.0));
            out
        };
        Ok(ChartFunction { chart: self.chart, caps: self.caps, terms })
    }

    /// Panicking form of [`derivative`](Self::derivative) for internal use.
    pub fn d(&self, i: usize) -> Self {
        self.derivative(i).expect("coordinate index in range")
    }

    /// Gradient `(d_0 f, ..., d_{2m-1} f)`.
    pub fn gradient(&self) -> Vec<Self> {
        (0..self.chart.dim()).map(|i| self.d(i)).collect()
    }

    /// Constant Fourier mode (torus) or value at the origin (affine).
    pub fn constant_term(&self) -> Scalar<R> {
        let one = Basis::one(self.chart.mode);
        let terms = self
            .terms
            .iter()
            .filter(|(k, _)| k.basis == one)
            .map(|(k, c)| (k.mono, c.clone()))
            .collect();
        Scalar::from_terms(self.caps, terms)
    }

    /// `Some(s)` when the function is constant on the chart.
    pub fn as_scalar(&self) -> Option<Scalar<R>> {
        let one = Basis::one(self.chart.mode);
        self.terms.iter().all(|(k, _)| k.basis == one).then(|| self.constant_term())
    }

    /// Mean over the torus, i.e. the constant Fourier coefficient.
    pub fn torus_mean(&self) -> Result<Scalar<R>, ChartError> {
        match self.chart.mode {
            Mode::Torus => Ok(self.constant_term()),
            Mode::Affine => Err(ChartError::Unsupported { op: "integrate", mode: Mode::Affine }),
        }
    }

    /// Poisson bracket `{F,G} = Lambda^{ij} d_i F d_j G` with `Lambda = omega^{-1}`
    /// for the Darboux form; `Lambda^{i,i+m} = -1`, `Lambda^{i+m,i} = 1`.
    pub fn checked_poisson(&self, other: &Self) -> Result<Self, ChartError> {
        self.check(other)?;
        let m = self.chart.m as usize;
        let mut acc = Self::zero(self.chart);
        for i in 0..m {
            let a = self.d(i + m).mul_unchecked(&other.d(i));
            let b = self.d(i).mul_unchecked(&other.d(i + m));
            acc = acc.add(&a).sub(&b);
        }
        Ok(acc)
    }

    pub fn poisson(&self, other: &Self) -> Self {
        self.checked_poisson(other).expect("chart mismatch")
    }

    /// `F(x + delta(x))` for a nilpotent displacement `delta`, by the
    /// terminating Taylor series.
    pub fn compose_shift(&self, delta: &[Self]) -> Self {
        let n = self.chart.dim();
        assert_eq!(delta.len(), n);
        for d in delta {
            assert!(d.is_nilpotent(), "displacement must be nilpotent");
        }
        let caps = delta.iter().fold(self.caps, |c, d| c.meet(d.caps));
        let bound = delta.iter().fold(Caps::none(), |c, d| c.meet(d.caps)).nilpotency_bound();
        self.compose_shift_multi(delta, bound).with_caps(caps)
    }

    fn compose_shift_multi(&self, delta: &[Self], bound: u32) -> Self {
        let n = self.chart.dim();
        let mut acc = self.clone();
        // Depth-first over multi-indices alpha with |alpha| <= bound, visiting
        // index slots in non-decreasing order; carries d^alpha F, delta^alpha
        // and alpha!.
        fn rec<R: Field>(
            f: &ChartFunction<R>,
            delta: &[ChartFunction<R>],
            start: usize,
            depth: u32,
            bound: u32,
            dfa: &ChartFunction<R>,
            pa: &ChartFunction<R>,
            mult: &mut [u32],
            fact: &R,
            acc: &mut ChartFunction<R>,
        ) {
            if depth == bound {
                return;
            }
            for i in start..delta.len() {
                if delta[i].is_zero() {
                    continue;
                }
                let df = dfa.d(i);
                let p = pa.mul_unchecked(&delta[i]);
                if p.is_zero() {
                    continue;
                }
                mult[i] += 1;
                let fact_new = fact.mul_ref(&R::from_int(mult[i] as i64));
                if !df.is_zero() {
                    let term = df.mul_unchecked(&p).scale(&(R::one() / fact_new.clone()));
                    *acc = acc.add(&term);
                }
                rec(f, delta, i, depth + 1, bound, &df, &p, mult, &fact_new, acc);
                mult[i] -= 1;
            }
        }
        let mut mult = vec![0u32; n];
        let one = Self::one(self.chart);
        rec(self, delta, 0, 0, bound, self, &one, &mut mult, &R::one(), &mut acc);
        acc
    }

    /// Coefficient of `g^n`, as a function free of `g`.
    pub fn jet_coeff(&self, g: Gen, n: u8) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(k, _)| k.mono.exp(g) == n)
            .map(|(k, c)| (FKey { basis: k.basis, mono: k.mono.with_exp(g, 0) }, c.clone()))
            .collect::<Vec<_>>();
        let mut terms = terms;
        terms.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        ChartFunction { chart: self.chart, caps: self.caps.without(g), terms }
    }

    /// `g^n * self`; `self` must not involve `g`.
    pub fn times_gen_power(&self, g: Gen, n: u8, cap: u8) -> Self {
        self.mul_unchecked(&Self::gen(self.chart, g, cap).pow(n as u32))
    }

    /// `d/dg`; the cap of `g` drops by one.
    pub fn jet_derivative(&self, g: Gen) -> Self {
        let caps = match self.caps.get(g) {
            None | Some(0) => return ChartFunction { chart: self.chart, caps: self.caps.without(g), terms: Vec::new() },
            Some(c) => self.caps.with(g, c - 1),
        };
        let terms = self
            .terms
            .iter()
            .filter(|(k, _)| k.mono.exp(g) > 0)
            .map(|(k, c)| {
                let e = k.mono.exp(g);
                (FKey { basis: k.basis, mono: k.mono.with_exp(g, e - 1) }, c.mul_ref(&R::from_int(e as i64)))
            })
            .collect();
        ChartFunction { chart: self.chart, caps, terms: combine(terms) }
    }

    /// Antiderivative in `g` vanishing at `g = 0`, known to order `cap`.
    pub fn jet_integrate(&self, g: Gen, cap: u8) -> Self {
        let caps = self.caps.with(g, cap);
        let terms = self
            .terms
            .iter()
            .filter_map(|(k, c)| {
                let e = k.mono.exp(g);
                (e < cap).then(|| (FKey { basis: k.basis, mono: k.mono.with_exp(g, e + 1) }, c.clone() / R::from_int(e as i64 + 1)))
            })
            .collect();
        ChartFunction { chart: self.chart, caps, terms: combine(terms) }
    }

    /// Tighten truncation orders.
    pub fn with_caps(&self, caps: Caps) -> Self {
        let caps = self.caps.meet(caps);
        if caps == self.caps {
            return self.clone();
        }
        let terms = self.terms.iter().filter(|(k, _)| k.mono.fits(caps)).cloned().collect();
        ChartFunction { chart: self.chart, caps, terms }
    }

    /// Replace the truncation orders outright (used when a value is known to
    /// be exact to a different order than its arithmetic history implies).
    pub fn set_caps(&self, caps: Caps) -> Self {
        let terms = self.terms.iter().filter(|(k, _)| k.mono.fits(caps)).cloned().collect();
        ChartFunction { chart: self.chart, caps, terms }
    }

    /// Largest absolute frequency or exponent appearing.
    pub fn max_frequency(&self) -> i64 {
        self.terms
            .iter()
            .flat_map(|(k, _)| k.basis.v.iter().map(|x| (*x as i64).abs()))
            .max()
            .unwrap_or(0)
    }

    pub fn map_coeffs(&self, mut f: impl FnMut(&R) -> R) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(k, c)| (*k, f(c)))
            .filter(|(_, c)| !c.is_zero())
            .collect();
        ChartFunction { chart: self.chart, caps: self.caps, terms }
    }

    /// Substitute `x -> x + c` for a constant shift `c` given as multiples of
    /// `pi/2`; exact because shifted trig values are in `{0, 1, -1}`.
    pub fn shift_quarter_periods(&self, quarters: &[i64]) -> Self {
        assert_eq!(self.chart.mode, Mode::Torus);
        let mut raw = Vec::with_capacity(self.terms.len());
        for (k, c) in &self.terms {
            let phase: i64 = k.basis.v.iter().zip(quarters).map(|(a, b)| *a as i64 * b).sum::<i64>().rem_euclid(4);
            // cos(a + phase*pi/2), sin(a + phase*pi/2)
            let (kind, neg) = match (k.basis.kind, phase) {
                (Kind::Cos, 0) => (Kind::Cos, false),
                (Kind::Cos, 1) => (Kind::Sin, true),
                (Kind::Cos, 2) => (Kind::Cos, true),
                (Kind::Cos, _) => (Kind::Sin, false),
                (Kind::Sin, 0) => (Kind::Sin, false),
                (Kind::Sin, 1) => (Kind::Cos, false),
                (Kind::Sin, 2) => (Kind::Sin, true),
                (Kind::Sin, _) => (Kind::Cos, true),
                (Kind::Poly, _) => unreachable!(),
            };
            raw.push((Basis { kind, v: k.basis.v }, k.mono, if neg { -c.clone() } else { c.clone() }));
        }
        Self::from_raw(self.chart, self.caps, raw)
    }
}

#[inline]
fn push_basis_product<R: Field>(out: &mut Vec<(FKey, R)>, a: &Basis, b: &Basis, mono: Mono, c: R, half: &R) {
    match (a.kind, b.kind) {
        (Kind::Poly, Kind::Poly) => {
            let v = Basis::add_v(&a.v, &b.v, 1);
            out.push((FKey { basis: Basis { kind: Kind::Poly, v }, mono }, c));
        }
        (Kind::Poly, _) | (_, Kind::Poly) => panic!("mixed polynomial and trigonometric basis"),
        (ka, kb) => {
            if a.v == [0; MAX_DIM] {
                out.push((FKey { basis: *b, mono }, c));
                return;
            }
            if b.v == [0; MAX_DIM] {
                out.push((FKey { basis: *a, mono }, c));
                return;
            }
            let ch = c.mul_ref(half);
            let sum = Basis::add_v(&a.v, &b.v, 1);
            let diff = Basis::add_v(&a.v, &b.v, -1);
            // (kind of sum term, sign), (kind of diff term, sign)
            let ((k1, s1), (k2, s2)) = match (ka, kb) {
                (Kind::Cos, Kind::Cos) => ((Kind::Cos, false), (Kind::Cos, false)),
                (Kind::Sin, Kind::Sin) => ((Kind::Cos, true), (Kind::Cos, false)),
                (Kind::Sin, Kind::Cos) => ((Kind::Sin, false), (Kind::Sin, false)),
                (Kind::Cos, Kind::Sin) => ((Kind::Sin, false), (Kind::Sin, true)),
                _ => unreachable!(),
            };
            for (kind, v, s) in [(k1, sum, s1), (k2, diff, s2)] {
                if let Some((basis, neg)) = Basis::trig(kind, v) {
                    let val = if neg != s { -ch.clone() } else { ch.clone() };
                    out.push((FKey { basis, mono }, val));
                }
            }
        }
    }
}

impl<R: Field> ChartFunction<R> {
    pub fn add(&self, other: &Self) -> Self {
        self.checked_add(other).expect("chart mismatch")
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(other, &-R::one())
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.checked_mul(other).expect("chart mismatch")
    }

    pub fn neg(&self) -> Self {
        ChartFunction {
            chart: self.chart,
            caps: self.caps,
            terms: self.terms.iter().map(|(k, c)| (*k, -c.clone())).collect(),
        }
    }
}

impl<'a, R: Field> Add<&'a ChartFunction<R>> for &'a ChartFunction<R> {
    type Output = ChartFunction<R>;
    fn add(self, rhs: Self) -> ChartFunction<R> {
        ChartFunction::add(self, rhs)
    }
}

impl<'a, R: Field> Sub<&'a ChartFunction<R>> for &'a ChartFunction<R> {
    type Output = ChartFunction<R>;
    fn sub(self, rhs: Self) -> ChartFunction<R> {
        ChartFunction::sub(self, rhs)
    }
}

impl<'a, R: Field> Mul<&'a ChartFunction<R>> for &'a ChartFunction<R> {
    type Output = ChartFunction<R>;
    fn mul(self, rhs: Self) -> ChartFunction<R> {
        ChartFunction::mul(self, rhs)
    }
}

impl<R: Field> Neg for &ChartFunction<R> {
    type Output = ChartFunction<R>;
    fn neg(self) -> ChartFunction<R> {
        ChartFunction::neg(self)
    }
}

fn fmt_linear(f: &mut fmt::Formatter<'_>, v: &[i16]) -> fmt::Result {
    let mut first = true;
    for (i, &k) in v.iter().enumerate() {
        if k == 0 {
            continue;
        }
        let abs = k.unsigned_abs();
        if first {
            if k < 0 {
                write!(f, "-")?;
            }
        } else {
            write!(f, " {} ", if k < 0 { "-" } else { "+" })?;
        }
        first = false;
        if abs == 1 {
            write!(f, "x{}", i + 1)?;
        } else {
            write!(f, "{abs}*x{}", i + 1)?;
        }
    }
    Ok(())
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            Kind::Cos | Kind::Sin => {
                write!(f, "{}(", if self.kind == Kind::Cos { "cos" } else { "sin" })?;
                fmt_linear(f, &self.v)?;
                write!(f, ")")
            }
            Kind::Poly => {
                let mut first = true;
                for (i, &e) in self.v.iter().enumerate() {
                    if e == 0 {
                        continue;
                    }
                    if !first {
                        write!(f, "*")?;
                    }
                    first = false;
                    if e == 1 {
                        write!(f, "x{}", i + 1)?;
                    } else {
                        write!(f, "x{}^{}", i + 1, e)?;
                    }
                }
                if first {
                    write!(f, "1")?;
                }
                Ok(())
            }
        }
    }
}

impl<R: Field> fmt::Display for ChartFunction<R> {
    /// Canonical text form, re-readable by the expression parser.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (k, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            if i == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            let mut factors: Vec<String> = Vec::new();
            if !abs.is_one() {
                factors.push(abs.to_string());
            }
            if !k.mono.is_one() {
                factors.push(k.mono.to_string());
            }
            if !k.basis.is_one() {
                factors.push(k.basis.to_string());
            }
            if factors.is_empty() {
                factors.push("1".into());
            }
            write!(f, "{}", factors.join("*"))?;
        }
        Ok(())
    }
}

impl<R: Field> PartialEq for ChartFunction<R> {
    fn eq(&self, other: &Self) -> bool {
        self.chart == other.chart && self.terms == other.terms
    }
}

impl<R: Field> fmt::Debug for ChartFunction<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChartFunction({self})")
    }
}

//! Rationals extended by nilpotent generators.
//!
//! A [`Scalar`] is an element of `R[eps, s, t, tau] / (g^(cap_g + 1))`: the
//! perturbation parameter `eps` of diffeomorphism families and up to three
//! independent path-jet parameters. Truncation orders travel with the value
//! ([`Caps`]); combining two values keeps the smaller order per generator,
//! which is the natural quotient map.

use std::fmt;

use crate::field::Field;

pub const NUM_GENS: usize = 4;

/// A nilpotent generator slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Gen {
    Eps = 0,
    S = 1,
    T = 2,
    Tau = 3,
}

impl Gen {
    pub const ALL: [Gen; NUM_GENS] = [Gen::Eps, Gen::S, Gen::T, Gen::Tau];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Gen::Eps => "eps",
            Gen::S => "s",
            Gen::T => "t",
            Gen::Tau => "tau",
        }
    }

    pub fn from_name(name: &str) -> Option<Gen> {
        Gen::ALL.into_iter().find(|g| g.name() == name)
    }
}

/// Per-generator truncation orders. `FREE` marks a generator the value does
/// not involve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Caps(pub [u8; NUM_GENS]);

impl Caps {
    pub const FREE: u8 = u8::MAX;

    pub const fn none() -> Caps {
        Caps([Self::FREE; NUM_GENS])
    }

    pub fn get(&self, g: Gen) -> Option<u8> {
        let c = self.0[g.index()];
        (c != Self::FREE).then_some(c)
    }

    pub fn with(mut self, g: Gen, cap: u8) -> Caps {
        assert!(cap < 64, "jet order {cap} is unreasonably large");
        self.0[g.index()] = cap;
        self
    }

    pub fn without(mut self, g: Gen) -> Caps {
        self.0[g.index()] = Self::FREE;
        self
    }

    pub fn meet(self, other: Caps) -> Caps {
        let mut out = self;
        for i in 0..NUM_GENS {
            out.0[i] = out.0[i].min(other.0[i]);
        }
        out
    }

    pub fn uses(&self, g: Gen) -> bool {
        self.get(g).is_some()
    }

    /// Number of factors with positive generator content a nonzero product can
    /// have: the sum of all finite caps.
    pub fn nilpotency_bound(&self) -> u32 {
        self.0.iter().filter(|&&c| c != Self::FREE).map(|&c| c as u32).sum()
    }
}

impl Default for Caps {
    fn default() -> Self {
        Caps::none()
    }
}

/// Monomial in the generators, one byte of exponent per slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Mono(pub u32);

impl Mono {
    pub const ONE: Mono = Mono(0);

    pub fn gen(g: Gen, e: u8) -> Mono {
        Mono((e as u32) << (8 * g.index()))
    }

    pub fn exp(self, g: Gen) -> u8 {
        ((self.0 >> (8 * g.index())) & 0xff) as u8
    }

    pub fn is_one(self) -> bool {
        self.0 == 0
    }

    pub fn degree(self) -> u32 {
        Gen::ALL.iter().map(|&g| self.exp(g) as u32).sum()
    }

    pub fn fits(self, caps: Caps) -> bool {
        Gen::ALL.iter().all(|&g| self.exp(g) <= caps.0[g.index()])
    }

    /// Product, or `None` when it falls in the truncation ideal.
    #[inline]
    pub fn mul(self, other: Mono, caps: Caps) -> Option<Mono> {
        if other.0 == 0 {
            return if self.fits(caps) { Some(self) } else { None };
        }
        if self.0 == 0 {
            return if other.fits(caps) { Some(other) } else { None };
        }
        let sum = Mono(self.0 + other.0);
        sum.fits(caps).then_some(sum)
    }

    pub fn with_exp(self, g: Gen, e: u8) -> Mono {
        let shift = 8 * g.index();
        Mono((self.0 & !(0xff << shift)) | ((e as u32) << shift))
    }
}

impl fmt::Display for Mono {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for g in Gen::ALL {
            let e = self.exp(g);
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "{}", g.name())?;
            } else {
                write!(f, "{}^{}", g.name(), e)?;
            }
        }
        if first {
            write!(f, "1")?;
        }
        Ok(())
    }
}

/// Sort by key, add up duplicates, drop zeros.
pub(crate) fn combine<K: Ord + Copy, R: Field>(mut v: Vec<(K, R)>) -> Vec<(K, R)> {
    v.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let mut out: Vec<(K, R)> = Vec::with_capacity(v.len());
    for (k, c) in v {
        match out.last_mut() {
            Some((lk, lc)) if *lk == k => lc.add_assign_ref(&c),
            _ => {
                if let Some((_, lc)) = out.last() {
                    if lc.is_zero() {
                        out.pop();
                    }
                }
                out.push((k, c));
            }
        }
    }
    if let Some((_, lc)) = out.last() {
        if lc.is_zero() {
            out.pop();
        }
    }
    out
}

/// Merge two sorted term lists computing `a + scale * b`.
pub(crate) fn merge_add<K: Ord + Copy, R: Field>(
    a: &[(K, R)],
    b: &[(K, R)],
    scale: Option<&R>,
) -> Vec<(K, R)> {
    debug_assert!(a.windows(2).all(|w| w[0].0 < w[1].0) && b.windows(2).all(|w| w[0].0 < w[1].0));
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    let sb = |c: &R| match scale {
        Some(s) => c.mul_ref(s),
        None => c.clone(),
    };
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => {
                out.push(a[i].clone());
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                let c = sb(&b[j].1);
                if !c.is_zero() {
                    out.push((b[j].0, c));
                }
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                let c = a[i].1.add_ref(&sb(&b[j].1));
                if !c.is_zero() {
                    out.push((a[i].0, c));
                }
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    for t in &b[j..] {
        let c = sb(&t.1);
        if !c.is_zero() {
            out.push((t.0, c));
        }
    }
    out
}

/// Element of the truncated nilpotent extension of `R`.
///
/// Equality compares values only, not truncation orders.
#[derive(Clone)]
pub struct Scalar<R: Field> {
    caps: Caps,
    terms: Vec<(Mono, R)>,
}

impl<R: Field> Scalar<R> {
    pub fn zero() -> Self {
        Scalar {
            caps: Caps::none(),
            terms: Vec::new(),
        }
    }

    pub fn from_field(c: R) -> Self {
        Self::from_terms(Caps::none(), vec![(Mono::ONE, c)])
    }

    pub fn from_int(n: i64) -> Self {
        Self::from_field(R::from_int(n))
    }

    pub fn ratio(n: i64, d: i64) -> Self {
        Self::from_field(R::from_ratio(n, d))
    }

    /// The generator `g` itself, truncated at `g^(cap+1) = 0`.
    pub fn gen(g: Gen, cap: u8) -> Self {
        Self::from_terms(Caps::none().with(g, cap), vec![(Mono::gen(g, 1), R::one())])
    }

    pub fn from_terms(caps: Caps, terms: Vec<(Mono, R)>) -> Self {
        let terms = combine(terms.into_iter().filter(|(m, _)| m.fits(caps)).collect());
        Scalar { caps, terms }
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn terms(&self) -> &[(Mono, R)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// The coefficient of the unit monomial.
    pub fn constant(&self) -> R {
        self.coeff(Mono::ONE)
    }

    pub fn coeff(&self, m: Mono) -> R {
        self.terms
            .iter()
            .find(|(k, _)| *k == m)
            .map(|(_, c)| c.clone())
            .unwrap_or_else(R::zero)
    }

    /// `Some(c)` when the value has no generator content.
    pub fn as_field(&self) -> Option<R> {
        match self.terms.as_slice() {
            [] => Some(R::zero()),
            [(m, c)] if m.is_one() => Some(c.clone()),
            _ => None,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let caps = self.caps.meet(other.caps);
        let mut s = Scalar {
            caps,
            terms: merge_add(&self.terms, &other.terms, None),
        };
        s.truncate();
        s
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        Scalar {
            caps: self.caps,
            terms: self.terms.iter().map(|(m, c)| (*m, -c.clone())).collect(),
        }
    }

    pub fn scale(&self, c: &R) -> Self {
        if c.is_zero() {
            return Scalar { caps: self.caps, terms: Vec::new() };
        }
        Scalar {
            caps: self.caps,
            terms: self.terms.iter().map(|(m, x)| (*m, x.mul_ref(c))).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let caps = self.caps.meet(other.caps);
        let mut out = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                if let Some(m) = ma.mul(*mb, caps) {
                    out.push((m, ca.mul_ref(cb)));
                }
            }
        }
        Scalar {
            caps,
            terms: combine(out),
        }
    }

    /// Multiplicative inverse; exists iff the constant term is nonzero.
    pub fn inverse(&self) -> Option<Self> {
        let c0 = self.constant();
        if c0.is_zero() {
            return None;
        }
        let inv0 = R::one() / c0;
        // 1/(c0 (1 + n)) = inv0 * sum (-n)^k, n nilpotent
        let n = self.scale(&inv0).sub(&Scalar::from_field(R::one()));
        let mut acc = Scalar::from_field(R::one());
        let mut pow = Scalar::from_field(R::one());
        for _ in 0..=self.caps.nilpotency_bound() {
            pow = pow.mul(&n).neg();
            if pow.is_zero() {
                break;
            }
            acc = acc.add(&pow);
        }
        Some(acc.scale(&inv0))
    }

    fn truncate(&mut self) {
        let caps = self.caps;
        self.terms.retain(|(m, c)| m.fits(caps) && !c.is_zero());
    }

    /// Coefficient of `g^n`, as a value free of `g`.
    pub fn jet_coeff(&self, g: Gen, n: u8) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(m, _)| m.exp(g) == n)
            .map(|(m, c)| (m.with_exp(g, 0), c.clone()))
            .collect();
        Scalar::from_terms(self.caps.without(g), terms)
    }

    /// `d/dg`; the result is only known to one order less.
    pub fn jet_derivative(&self, g: Gen) -> Self {
        let caps = match self.caps.get(g) {
            Some(0) | None => return Scalar { caps: self.caps.without(g), terms: vec![] },
            Some(c) => self.caps.with(g, c - 1),
        };
        let terms = self
            .terms
            .iter()
            .filter(|(m, _)| m.exp(g) > 0)
            .map(|(m, c)| {
                let e = m.exp(g);
                (m.with_exp(g, e - 1), c.mul_ref(&R::from_int(e as i64)))
            })
            .collect();
        Scalar::from_terms(caps, terms)
    }

    pub fn with_caps(&self, caps: Caps) -> Self {
        Scalar::from_terms(self.caps.meet(caps), self.terms.clone())
    }
}

impl<R: Field> PartialEq for Scalar<R> {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms
    }
}

impl<R: Field> fmt::Display for Scalar<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            if i == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            match (m.is_one(), abs.is_one()) {
                (true, _) => write!(f, "{abs}")?,
                (false, true) => write!(f, "{m}")?,
                (false, false) => write!(f, "{abs}*{m}")?,
            }
        }
        Ok(())
    }
}

impl<R: Field> fmt::Debug for Scalar<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({self})")
    }
}

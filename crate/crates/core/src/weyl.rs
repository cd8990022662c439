//! Truncated sections of the formal Weyl algebra bundle tensored with forms.
//!
//! A term is `nu^k y^alpha dx^I` with a [`ChartFunction`] coefficient. The
//! total degree is `2k + |alpha|`; everything above the context's cap `K` is
//! dropped, which is a two-sided ideal for the fibrewise product.

use std::fmt;

use crate::chart::{Chart, ChartFunction, FKey, MAX_DIM};
use crate::field::{falling, Field};
use crate::forms::{mask_indices, wedge_sign, DifferentialForm};
use crate::geometry::{omega_entry, Connection};
use crate::scalar::{combine, Caps, Gen};
use crate::series::NuSeries;

type Fun<R> = ChartFunction<R>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WKey {
    pub nu: i8,
    pub y: [u8; MAX_DIM],
    pub form: u8,
}

impl WKey {
    pub const ONE: WKey = WKey { nu: 0, y: [0; MAX_DIM], form: 0 };

    pub fn y_degree(&self) -> i32 {
        self.y.iter().map(|&e| e as i32).sum()
    }

    pub fn degree(&self) -> i32 {
        2 * self.nu as i32 + self.y_degree()
    }

    pub fn form_degree(&self) -> u32 {
        self.form.count_ones()
    }

    pub fn nu(k: i8) -> WKey {
        WKey { nu: k, ..Self::ONE }
    }
}

/// Shared parameters: the chart and the total-degree cap `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeylContext {
    pub chart: Chart,
    pub max_degree: i32,
}

impl WeylContext {
    pub fn new(chart: Chart, max_degree: i32) -> Self {
        assert!(max_degree >= 0);
        WeylContext { chart, max_degree }
    }

    /// Default cap `2N + 3` for star products through `nu^N`.
    pub fn for_nu_order(chart: Chart, n: i32) -> Self {
        Self::new(chart, 2 * n + 3)
    }

    pub fn m(&self) -> usize {
        self.chart.m as usize
    }
}

#[derive(Clone)]
pub struct WeylElement<R: Field> {
    ctx: WeylContext,
    extended: bool,
    terms: Vec<(WKey, Fun<R>)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WeylError {
    #[error("Weyl contexts differ")]
    ContextMismatch,
    #[error("term of negative total degree {0} in an extended element")]
    NegativeDegree(i32),
    #[error("negative nu power in a non-extended element")]
    NegativeNu,
}

/// One term of the pairing expansion: coefficient, added nu power and the
/// resulting y-exponent.
struct Pairing<R> {
    coeff: R,
    nu: i8,
    y: [u8; MAX_DIM],
}

/// All terms of `y^a o y^b`, optionally only those of odd pairing order.
fn pairings<R: Field>(m: usize, a: &[u8; MAX_DIM], b: &[u8; MAX_DIM], odd_only: bool, max_nu: i32) -> Vec<Pairing<R>> {
    // per Darboux pair i: p contractions d_{y^i}(a) d_{z^{i+m}}(b) with Lambda^{i,i+m} = -1,
    // q contractions d_{y^{i+m}}(a) d_{z^i}(b) with Lambda^{i+m,i} = +1
    let mut out = vec![Pairing { coeff: R::one(), nu: 0, y: [0; MAX_DIM] }];
    for (k, slot) in out[0].y.iter_mut().enumerate() {
        *slot = a[k] + b[k];
    }
    let half = R::from_ratio(1, 2);
    for i in 0..m {
        let j = i + m;
        let pmax = a[i].min(b[j]);
        let qmax = a[j].min(b[i]);
        if pmax == 0 && qmax == 0 {
            continue;
        }
        let mut next = Vec::with_capacity(out.len() * ((pmax as usize + 1) * (qmax as usize + 1)));
        for base in &out {
            for p in 0..=pmax {
                for q in 0..=qmax {
                    let n = (p + q) as i32;
                    if base.nu as i32 + n > max_nu {
                        continue;
                    }
                    let mut c = base.coeff.clone();
                    if n > 0 {
                        let mut f = R::one();
                        for _ in 0..n {
                            f = f * half.clone();
                        }
                        f = f * falling::<R>(a[i] as u32, p as u32) * falling::<R>(b[j] as u32, p as u32);
                        f = f * falling::<R>(a[j] as u32, q as u32) * falling::<R>(b[i] as u32, q as u32);
                        f = f / (crate::field::factorial::<R>(p as u32) * crate::field::factorial::<R>(q as u32));
                        if p % 2 == 1 {
                            f = -f;
                        }
                        c = c * f;
                    }
                    let mut y = base.y;
                    y[i] -= p + q;
                    y[j] -= p + q;
                    next.push(Pairing { coeff: c, nu: base.nu + n as i8, y });
                }
            }
        }
        out = next;
    }
    if odd_only {
        out.retain(|p| p.nu % 2 == 1);
    }
    out
}

impl<R: Field> WeylElement<R> {
    pub fn zero(ctx: WeylContext) -> Self {
        WeylElement { ctx, extended: false, terms: Vec::new() }
    }

    /// Empty element of the extended bundle (negative nu powers allowed).
    pub fn zero_extended(ctx: WeylContext) -> Self {
        WeylElement { ctx, extended: true, terms: Vec::new() }
    }

    pub fn one(ctx: WeylContext) -> Self {
        Self::monomial(ctx, WKey::ONE, Fun::one(ctx.chart))
    }

    pub fn monomial(ctx: WeylContext, key: WKey, f: Fun<R>) -> Self {
        Self::from_terms(ctx, vec![(key, f)])
    }

    /// `nu^k f` for a function `f`.
    pub fn function(ctx: WeylContext, f: Fun<R>) -> Self {
        Self::monomial(ctx, WKey::ONE, f)
    }

    /// The fibre coordinate `y^i` (zero-based).
    pub fn y(ctx: WeylContext, i: usize) -> Self {
        let mut key = WKey::ONE;
        key.y[i] = 1;
        Self::monomial(ctx, key, Fun::one(ctx.chart))
    }

    pub fn nu(ctx: WeylContext) -> Self {
        Self::monomial(ctx, WKey::nu(1), Fun::one(ctx.chart))
    }

    /// Lift of a formal function `sum nu^k F_k` with no `y` and no forms.
    pub fn from_series(ctx: WeylContext, f: &NuSeries<Fun<R>>) -> Self {
        let mut terms = Vec::new();
        for (k, c) in f.iter() {
            if !c.is_zero() {
                terms.push((WKey::nu(k as i8), c.clone()));
            }
        }
        let extended = f.lo() < 0;
        let mut out = Self::from_terms(ctx, terms);
        out.extended = extended;
        out
    }

    /// A `p`-form with no `y` dependence (`nu^0`).
    pub fn from_form(ctx: WeylContext, theta: &DifferentialForm<R>) -> Self {
        let terms = theta
            .terms()
            .iter()
            .map(|(mask, f)| (WKey { form: *mask, ..WKey::ONE }, f.clone()))
            .collect();
        Self::from_terms(ctx, terms)
    }

    pub fn from_terms(ctx: WeylContext, terms: Vec<(WKey, Fun<R>)>) -> Self {
        let mut terms: Vec<_> = terms
            .into_iter()
            .filter(|(k, f)| !f.is_zero() && k.degree() <= ctx.max_degree)
            .collect();
        terms.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out: Vec<(WKey, Fun<R>)> = Vec::with_capacity(terms.len());
        for (k, f) in terms {
            match out.last_mut() {
                Some((lk, lf)) if *lk == k => *lf = lf.add(&f),
                _ => out.push((k, f)),
            }
        }
        out.retain(|(_, f)| !f.is_zero());
        let extended = out.iter().any(|(k, _)| k.nu < 0);
        WeylElement { ctx, extended, terms: out }
    }

    pub fn ctx(&self) -> WeylContext {
        self.ctx
    }

    pub fn chart(&self) -> Chart {
        self.ctx.chart
    }

    pub fn is_extended(&self) -> bool {
        self.extended
    }

    pub fn terms(&self) -> &[(WKey, Fun<R>)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, key: &WKey) -> Fun<R> {
        match self.terms.binary_search_by(|(k, _)| k.cmp(key)) {
            Ok(i) => self.terms[i].1.clone(),
            Err(_) => Fun::zero(self.ctx.chart),
        }
    }

    /// Meet of the truncation orders of all coefficients.
    pub fn caps(&self) -> Caps {
        self.terms.iter().fold(Caps::none(), |c, (_, f)| c.meet(f.caps()))
    }

    /// Structural check of the extended-bundle degree rule.
    pub fn validate(&self) -> Result<(), WeylError> {
        for (k, _) in &self.terms {
            if k.nu < 0 && !self.extended {
                return Err(WeylError::NegativeNu);
            }
            if k.degree() < 0 {
                return Err(WeylError::NegativeDegree(k.degree()));
            }
        }
        Ok(())
    }

    pub fn min_degree(&self) -> Option<i32> {
        self.terms.iter().map(|(k, _)| k.degree()).min()
    }

    pub fn max_form_degree(&self) -> u32 {
        self.terms.iter().map(|(k, _)| k.form_degree()).max().unwrap_or(0)
    }

    /// Keep only the terms whose key satisfies `pred`.
    pub fn filter(&self, mut pred: impl FnMut(&WKey) -> bool) -> Self {
        WeylElement {
            ctx: self.ctx,
            extended: self.extended,
            terms: self.terms.iter().filter(|(k, _)| pred(k)).cloned().collect(),
        }
    }

    pub fn degree_part(&self, d: i32) -> Self {
        self.filter(|k| k.degree() == d)
    }

    pub fn up_to_degree(&self, d: i32) -> Self {
        self.filter(|k| k.degree() <= d)
    }

    pub fn form_part(&self, q: u32) -> Self {
        self.filter(|k| k.form_degree() == q)
    }

    /// Component with no `y` and no forms.
    pub fn a00(&self) -> Self {
        self.filter(|k| k.y_degree() == 0 && k.form == 0)
    }

    /// Same element in a context with a different degree cap.
    pub fn with_context(&self, ctx: WeylContext) -> Self {
        assert_eq!(ctx.chart, self.ctx.chart);
        let mut out = self.filter(|k| k.degree() <= ctx.max_degree);
        out.ctx = ctx;
        out
    }

    pub fn map(&self, mut op: impl FnMut(&Fun<R>) -> Fun<R>) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(k, f)| (*k, op(f)))
            .filter(|(_, f)| !f.is_zero())
            .collect();
        WeylElement { ctx: self.ctx, extended: self.extended, terms }
    }

    pub fn map_keys(&self, mut op: impl FnMut(&WKey, &Fun<R>) -> Option<(WKey, Fun<R>)>) -> Self {
        let terms = self.terms.iter().filter_map(|(k, f)| op(k, f)).collect();
        let mut out = Self::from_terms(self.ctx, terms);
        out.extended |= self.extended;
        out
    }

    pub fn with_caps(&self, caps: Caps) -> Self {
        self.map(|f| f.with_caps(caps))
    }

    pub fn jet_coeff(&self, g: Gen, n: u8) -> Self {
        self.map(|f| f.jet_coeff(g, n))
    }

    pub fn jet_derivative(&self, g: Gen) -> Self {
        self.map(|f| f.jet_derivative(g))
    }

    pub fn jet_integrate(&self, g: Gen, cap: u8) -> Self {
        self.map(|f| f.jet_integrate(g, cap))
    }

    fn merge(&self, other: &Self, sub: bool) -> Self {
        assert_eq!(self.ctx, other.ctx, "Weyl context mismatch");
        let mut out: Vec<(WKey, Fun<R>)> = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut i, mut j) = (0, 0);
        let a = &self.terms;
        let b = &other.terms;
        while i < a.len() || j < b.len() {
            let ord = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) => x.0.cmp(&y.0),
                (Some(_), None) => std::cmp::Ordering::Less,
                _ => std::cmp::Ordering::Greater,
            };
            match ord {
                std::cmp::Ordering::Less => {
                    out.push(a[i].clone());
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    let f = if sub { b[j].1.neg() } else { b[j].1.clone() };
                    out.push((b[j].0, f));
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    let f = if sub { a[i].1.sub(&b[j].1) } else { a[i].1.add(&b[j].1) };
                    if !f.is_zero() {
                        out.push((a[i].0, f));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        WeylElement { ctx: self.ctx, extended: self.extended || other.extended, terms: out }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.merge(other, false)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.merge(other, true)
    }

    pub fn neg(&self) -> Self {
        self.map(|f| f.neg())
    }

    pub fn scale(&self, c: &R) -> Self {
        self.map(|f| f.scale(c))
    }

    /// Multiply every coefficient by a function of `x` (a central 0-form).
    pub fn mul_fn(&self, g: &Fun<R>) -> Self {
        self.map(|f| f.mul(g))
    }

    /// Multiply by `nu^k`.
    pub fn shift_nu(&self, k: i8) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(key, f)| (WKey { nu: key.nu + k, ..*key }, f.clone()))
            .collect();
        Self::from_terms(self.ctx, terms)
    }

    fn product(&self, other: &Self, odd_only: bool) -> Self {
        assert_eq!(self.ctx, other.ctx, "Weyl context mismatch");
        let m = self.ctx.m();
        let kmax = self.ctx.max_degree;
        let extended = self.extended || other.extended;
        if self.terms.is_empty() || other.terms.is_empty() {
            return WeylElement { ctx: self.ctx, extended, terms: Vec::new() };
        }
        let min_b = other.min_degree().unwrap();
        let shift = if odd_only { 2 } else { 0 };
        let mut raw: Vec<((WKey, FKey), R)> = Vec::new();
        let caps = self.caps().meet(other.caps());
        for (ka, fa) in &self.terms {
            let da = ka.degree();
            if da + min_b - shift > kmax {
                continue;
            }
            for (kb, fb) in &other.terms {
                let deg = da + kb.degree() - shift;
                if deg > kmax {
                    continue;
                }
                let Some(neg) = wedge_sign(ka.form, kb.form) else { continue };
                let pr = pairings::<R>(m, &ka.y, &kb.y, odd_only, i32::MAX);
                if pr.is_empty() {
                    continue;
                }
                let f = fa.mul(fb);
                if f.is_zero() {
                    continue;
                }
                let form = ka.form | kb.form;
                for p in pr {
                    let nu = ka.nu + kb.nu + p.nu - if odd_only { 1 } else { 0 };
                    let key = WKey { nu, y: p.y, form };
                    let mut c = p.coeff;
                    if odd_only {
                        c = c * R::from_int(2);
                    }
                    if neg {
                        c = -c;
                    }
                    for (fk, x) in f.terms() {
                        raw.push(((key, *fk), x.mul_ref(&c)));
                    }
                }
            }
        }
        Self::from_raw(self.ctx, extended, caps, raw)
    }

    fn from_raw(ctx: WeylContext, extended: bool, caps: Caps, raw: Vec<((WKey, FKey), R)>) -> Self {
        let combined = combine(raw);
        let mut terms: Vec<(WKey, Fun<R>)> = Vec::new();
        let mut i = 0;
        while i < combined.len() {
            let key = combined[i].0 .0;
            let mut j = i;
            while j < combined.len() && combined[j].0 .0 == key {
                j += 1;
            }
            let raw_f = combined[i..j]
                .iter()
                .map(|((_, fk), c)| (fk.basis, fk.mono, c.clone()))
                .collect();
            let f = Fun::from_raw(ctx.chart, caps, raw_f);
            if !f.is_zero() {
                terms.push((key, f));
            }
            i = j;
        }
        WeylElement { ctx, extended, terms }
    }

    /// The fibrewise product `a o b` with forms multiplied by wedge.
    pub fn circ(&self, other: &Self) -> Self {
        self.product(other, false)
    }

    /// Graded commutator `[a, b] = a o b - (-1)^{|a||b|} b o a`.
    pub fn bracket(&self, other: &Self) -> Self {
        self.bracket_over_nu(other).shift_nu(1)
    }

    /// `(1/nu)[a, b]`: twice the odd pairing orders of `a o b`, one `nu` removed.
    pub fn bracket_over_nu(&self, other: &Self) -> Self {
        self.product(other, true)
    }

    /// `sigma(a o b)`: only pairings that consume every `y`, 0-form part.
    pub fn sigma_of_circ(&self, other: &Self) -> NuSeries<Fun<R>> {
        assert_eq!(self.ctx, other.ctx);
        let m = self.ctx.m();
        let chart = self.ctx.chart;
        let kmax = self.ctx.max_degree;
        let caps = self.caps().meet(other.caps());
        let mut raw: Vec<((i8, FKey), R)> = Vec::new();
        for (ka, fa) in self.terms.iter().filter(|(k, _)| k.form == 0) {
            let mut want = [0u8; MAX_DIM];
            for i in 0..m {
                want[i] = ka.y[i + m];
                want[i + m] = ka.y[i];
            }
            for (kb, fb) in other.terms.iter().filter(|(k, _)| k.form == 0 && k.y == want) {
                let deg = ka.degree() + kb.degree();
                if deg > kmax {
                    continue;
                }
                let pr = pairings::<R>(m, &ka.y, &kb.y, false, i32::MAX);
                for p in pr {
                    if p.y != [0; MAX_DIM] {
                        continue;
                    }
                    let f = fa.mul(fb);
                    let nu = ka.nu + kb.nu + p.nu;
                    for (fk, x) in f.terms() {
                        raw.push(((nu, *fk), x.mul_ref(&p.coeff)));
                    }
                }
            }
        }
        let combined = combine(raw);
        let hi = kmax.div_euclid(2);
        let lo = combined.iter().map(|((k, _), _)| *k as i32).min().unwrap_or(0).min(0);
        let mut out = NuSeries::zero(Fun::zero(chart), lo, hi);
        let mut i = 0;
        while i < combined.len() {
            let nu = combined[i].0 .0;
            let mut j = i;
            while j < combined.len() && combined[j].0 .0 == nu {
                j += 1;
            }
            let f = Fun::from_raw(
                chart,
                caps,
                combined[i..j].iter().map(|((_, fk), c)| (fk.basis, fk.mono, c.clone())).collect(),
            );
            if (nu as i32) <= hi {
                out.set(nu as i32, f);
            }
            i = j;
        }
        out
    }

    /// `sigma(a) = a|_{y=0}`, 0-form part, as a nu-series through `nu^{K/2}`.
    pub fn sigma(&self) -> NuSeries<Fun<R>> {
        let chart = self.ctx.chart;
        let hi = self.ctx.max_degree.div_euclid(2);
        let lo = self.terms.iter().map(|(k, _)| k.nu as i32).min().unwrap_or(0).min(0);
        let mut out = NuSeries::zero(Fun::zero(chart), lo, hi);
        for (k, f) in &self.terms {
            if k.form == 0 && k.y_degree() == 0 {
                out.set(k.nu as i32, f.clone());
            }
        }
        out
    }

    /// `delta(a) = dx^k ^ d_{y^k} a`.
    pub fn delta(&self) -> Self {
        let n = self.ctx.chart.dim();
        let mut terms = Vec::new();
        for (key, f) in &self.terms {
            for k in 0..n {
                let e = key.y[k];
                if e == 0 {
                    continue;
                }
                let Some(neg) = wedge_sign(1 << k, key.form) else { continue };
                let mut y = key.y;
                y[k] -= 1;
                let c = if neg { -R::from_int(e as i64) } else { R::from_int(e as i64) };
                terms.push((WKey { nu: key.nu, y, form: key.form | (1 << k) }, f.scale(&c)));
            }
        }
        let mut out = Self::from_terms(self.ctx, terms);
        out.extended |= self.extended;
        out
    }

    /// `delta^{-1}`: `(1/(p+q)) y^k i(d_{x^k})` on the `(p, q)` component, zero on `a00`.
    pub fn delta_inv(&self) -> Self {
        let mut terms = Vec::new();
        for (key, f) in &self.terms {
            let p = key.y_degree();
            let q = key.form_degree() as i32;
            if p + q == 0 {
                continue;
            }
            let inv = R::from_ratio(1, (p + q) as i64);
            for (pos, k) in mask_indices(key.form).enumerate() {
                let mut y = key.y;
                y[k] += 1;
                let c = if pos % 2 == 1 { -inv.clone() } else { inv.clone() };
                terms.push((WKey { nu: key.nu, y, form: key.form & !(1 << k) }, f.scale(&c)));
            }
        }
        let mut out = Self::from_terms(self.ctx, terms);
        out.extended |= self.extended;
        out
    }

    /// Exterior derivative in `x`: `dx^i ^ d_{x^i} a`.
    pub fn d(&self) -> Self {
        let n = self.ctx.chart.dim();
        let mut terms = Vec::new();
        for (key, f) in &self.terms {
            for i in 0..n {
                let Some(neg) = wedge_sign(1 << i, key.form) else { continue };
                let g = f.d(i);
                if g.is_zero() {
                    continue;
                }
                terms.push((WKey { form: key.form | (1 << i), ..*key }, if neg { g.neg() } else { g }));
            }
        }
        let mut out = Self::from_terms(self.ctx, terms);
        out.extended |= self.extended;
        out
    }

    /// Interior product of the form part with a vector field.
    pub fn interior(&self, v: &[Fun<R>]) -> Self {
        let mut terms = Vec::new();
        for (key, f) in &self.terms {
            for (pos, k) in mask_indices(key.form).enumerate() {
                if v[k].is_zero() {
                    continue;
                }
                let g = f.mul(&v[k]);
                terms.push((WKey { form: key.form & !(1 << k), ..*key }, if pos % 2 == 1 { g.neg() } else { g }));
            }
        }
        let mut out = Self::from_terms(self.ctx, terms);
        out.extended |= self.extended;
        out
    }

    /// `omega_{ij} y^i X^j` for a vector field `X`.
    pub fn omega_y(ctx: WeylContext, x: &[Fun<R>]) -> Self {
        let m = ctx.m();
        let n = ctx.chart.dim();
        let mut terms = Vec::new();
        for i in 0..n {
            for (j, xj) in x.iter().enumerate().take(n) {
                let w = omega_entry(m, i, j);
                if w != 0 && !xj.is_zero() {
                    let mut key = WKey::ONE;
                    key.y[i] = 1;
                    terms.push((key, xj.scale_int(w)));
                }
            }
        }
        Self::from_terms(ctx, terms)
    }

    /// `(1/2) M_{kq} y^k y^q` for a matrix of functions `M` (symmetrised).
    pub fn quadratic(ctx: WeylContext, mat: impl Fn(usize, usize) -> Fun<R>) -> Self {
        let n = ctx.chart.dim();
        let half = R::from_ratio(1, 2);
        let mut terms = Vec::new();
        for k in 0..n {
            for q in 0..n {
                let f = mat(k, q);
                if f.is_zero() {
                    continue;
                }
                let mut key = WKey::ONE;
                key.y[k] += 1;
                key.y[q] += 1;
                terms.push((key, f.scale(&half)));
            }
        }
        Self::from_terms(ctx, terms)
    }
}

impl<R: Field> PartialEq for WeylElement<R> {
    fn eq(&self, other: &Self) -> bool {
        self.ctx == other.ctx && self.terms == other.terms
    }
}

/// `Gamma-bar = (1/2) omega_{lk} Gamma^k_{ij} y^l y^j dx^i`.
pub fn gamma_bar<R: Field>(ctx: WeylContext, nabla: &Connection<R>) -> WeylElement<R> {
    let n = ctx.chart.dim();
    let low = nabla.lowered();
    let half = R::from_ratio(1, 2);
    let mut terms = Vec::new();
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                let g = low.get(l, i, j);
                if g.is_zero() {
                    continue;
                }
                let mut key = WKey { form: 1 << i, ..WKey::ONE };
                key.y[l] += 1;
                key.y[j] += 1;
                terms.push((key, g.scale(&half)));
            }
        }
    }
    WeylElement::from_terms(ctx, terms)
}

/// `R-bar = (1/4) omega_{ir} R^r_{jkl} y^i y^j dx^k ^ dx^l`.
pub fn r_bar<R: Field>(ctx: WeylContext, nabla: &Connection<R>) -> WeylElement<R> {
    let n = ctx.chart.dim();
    let m = ctx.m();
    let curv = nabla.curvature();
    let quarter = R::from_ratio(1, 4);
    let mut terms = Vec::new();
    for i in 0..n {
        for r in 0..n {
            let w = omega_entry(m, i, r);
            if w == 0 {
                continue;
            }
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let Some(neg) = wedge_sign(1 << k, 1 << l) else { continue };
                        let c = curv.get(r, j, k, l);
                        if c.is_zero() {
                            continue;
                        }
                        let mut key = WKey { form: (1 << k) | (1 << l), ..WKey::ONE };
                        key.y[i] += 1;
                        key.y[j] += 1;
                        let s = if neg { -w } else { w };
                        terms.push((key, c.scale(&(quarter.clone() * R::from_int(s)))));
                    }
                }
            }
        }
    }
    WeylElement::from_terms(ctx, terms)
}

/// The connection derivation `a -> da + (1/nu)[Gamma-bar, a]`.
pub fn partial<R: Field>(gamma_bar: &WeylElement<R>, a: &WeylElement<R>) -> WeylElement<R> {
    a.d().add(&gamma_bar.bracket_over_nu(a))
}

impl<R: Field> fmt::Display for WeylElement<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let n = self.ctx.chart.dim();
        for (i, (k, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({c})")?;
            match k.nu {
                0 => {}
                1 => write!(f, "*nu")?,
                x => write!(f, "*nu^{x}")?,
            }
            for (j, &e) in k.y.iter().enumerate().take(n) {
                match e {
                    0 => {}
                    1 => write!(f, "*y{}", j + 1)?,
                    _ => write!(f, "*y{}^{}", j + 1, e)?,
                }
            }
            let dx: Vec<String> = mask_indices(k.form).map(|j| format!("dx{}", j + 1)).collect();
            if !dx.is_empty() {
                write!(f, " {}", dx.join("^"))?;
            }
        }
        Ok(())
    }
}

impl<R: Field> fmt::Debug for WeylElement<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WeylElement({self})")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    type W = WeylElement<Rational>;
    type F = Fun<Rational>;

    fn ctx() -> WeylContext {
        WeylContext::new(Chart::torus(1), 7)
    }

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn y1_circ_y2() {
        let c = ctx();
        let y1 = W::y(c, 0);
        let y2 = W::y(c, 1);
        let mut key = WKey::ONE;
        key.y = [1, 1, 0, 0, 0, 0];
        // Lambda^{12} = -1
        let expect = W::monomial(c, key, F::one(c.chart)).add(&W::nu(c).scale(&q(-1, 2)));
        assert_eq!(y1.circ(&y2), expect);
        assert_eq!(y1.bracket(&y2), W::nu(c).scale(&q(-1, 1)));
        assert_eq!(y1.circ(&W::one(c)), y1);
    }

    #[test]
    fn small_associativity() {
        let c = ctx();
        let y1 = W::y(c, 0);
        let y2 = W::y(c, 1);
        assert_eq!(y1.circ(&y1).circ(&y2), y1.circ(&y1.circ(&y2)));
    }

    #[test]
    fn delta_examples() {
        let c = ctx();
        let ch = c.chart;
        let mut key = WKey::ONE;
        key.y = [1, 1, 0, 0, 0, 0];
        let y1y2 = W::monomial(c, key, F::one(ch));
        let got = y1y2.delta();
        let expect = W::from_terms(
            c,
            vec![
                (WKey { y: [0, 1, 0, 0, 0, 0], form: 1, nu: 0 }, F::one(ch)),
                (WKey { y: [1, 0, 0, 0, 0, 0], form: 2, nu: 0 }, F::one(ch)),
            ],
        );
        assert_eq!(got, expect);
        assert!(got.delta().is_zero());
        let dx1 = W::from_form(c, &DifferentialForm::dx(ch, 0));
        assert_eq!(dx1.delta_inv(), W::y(c, 0));
        let y1dx2 = W::monomial(c, WKey { y: [1, 0, 0, 0, 0, 0], form: 2, nu: 0 }, F::one(ch));
        assert_eq!(y1dx2.delta_inv(), y1y2.scale(&q(1, 2)));
    }

    #[test]
    fn sigma_of_y_product() {
        let c = ctx();
        let s = W::y(c, 0).circ(&W::y(c, 1)).sigma();
        assert_eq!(s.coeff(1), &F::constant(c.chart, q(-1, 2)));
        assert_eq!(W::y(c, 0).sigma_of_circ(&W::y(c, 1)), s);
    }

    fn sample(c: WeylContext) -> W {
        let ch = c.chart;
        W::from_terms(
            c,
            vec![
                (WKey { nu: 0, y: [2, 1, 0, 0, 0, 0], form: 0 }, F::cos_x(ch, 0)),
                (WKey { nu: 1, y: [0, 1, 0, 0, 0, 0], form: 1 }, F::sin(ch, &[1, -1])),
                (WKey { nu: 0, y: [1, 0, 0, 0, 0, 0], form: 3 }, F::from_int(ch, 3)),
                (WKey { nu: 0, y: [0, 0, 0, 0, 0, 0], form: 2 }, F::cos_x(ch, 1)),
                (WKey { nu: 1, y: [0, 0, 0, 0, 0, 0], form: 0 }, F::sin_x(ch, 0)),
            ],
        )
    }

    #[test]
    fn hodge_decomposition() {
        let c = ctx();
        let a = sample(c);
        let lhs = a.delta().delta_inv().add(&a.delta_inv().delta()).add(&a.a00());
        assert_eq!(lhs, a);
    }

    #[test]
    fn delta_is_inner() {
        let c = ctx();
        let ch = c.chart;
        let m = c.m();
        let n = ch.dim();
        let mut terms = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = omega_entry(m, i, j);
                if w != 0 {
                    let mut key = WKey { form: 1 << j, ..WKey::ONE };
                    key.y[i] = 1;
                    terms.push((key, F::from_int(ch, w)));
                }
            }
        }
        let theta = W::from_terms(c, terms);
        let a = sample(c);
        assert_eq!(theta.bracket_over_nu(&a), a.delta().neg());
    }

    #[test]
    fn graded_bracket_antisymmetry() {
        let c = ctx();
        let a = sample(c);
        let b = W::y(c, 1).circ(&W::y(c, 0)).mul_fn(&F::cos_x(c.chart, 1));
        let ab = a.bracket(&b);
        // b is even, so [b, a] = -[a, b]
        assert_eq!(ab, b.bracket(&a).neg());
        assert_eq!(a.circ(&b).sub(&b.circ(&a)), ab);
    }
}

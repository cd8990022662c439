//! Differential forms with [`ChartFunction`] coefficients.

use std::fmt;

use crate::chart::{Chart, ChartError, ChartFunction, Mode};
use crate::field::Field;
use crate::scalar::Scalar;
use crate::series::TwoPi;

/// Sign of `dx^a ^ dx^b` relative to the sorted product, or `None` if the
/// index sets overlap. Index sets are bitmasks.
#[inline]
pub fn wedge_sign(a: u8, b: u8) -> Option<bool> {
    if a & b != 0 {
        return None;
    }
    let mut swaps = 0u32;
    let mut bb = b;
    while bb != 0 {
        let j = bb.trailing_zeros();
        // indices of `a` above j must move past dx^j
        swaps += (a >> (j + 1)).count_ones();
        bb &= bb - 1;
    }
    Some(swaps % 2 == 1)
}

pub fn mask_indices(mask: u8) -> impl Iterator<Item = usize> {
    (0..8).filter(move |i| mask & (1 << i) != 0)
}

/// A homogeneous `p`-form `sum_I a_I dx^I`, `I` strictly increasing.
#[derive(Clone, PartialEq)]
pub struct DifferentialForm<R: Field> {
    chart: Chart,
    degree: usize,
    terms: Vec<(u8, ChartFunction<R>)>,
}

impl<R: Field> DifferentialForm<R> {
    pub fn zero(chart: Chart, degree: usize) -> Self {
        DifferentialForm { chart, degree, terms: Vec::new() }
    }

    pub fn function(f: ChartFunction<R>) -> Self {
        Self::monomial(0, f)
    }

    /// `f dx^I` for the index set `mask`.
    pub fn monomial(mask: u8, f: ChartFunction<R>) -> Self {
        let chart = f.chart();
        assert!((mask as usize) < (1 << chart.dim()), "form index out of range");
        let degree = mask.count_ones() as usize;
        let terms = if f.is_zero() { vec![] } else { vec![(mask, f)] };
        DifferentialForm { chart, degree, terms }
    }

    /// `dx^i` (zero-based).
    pub fn dx(chart: Chart, i: usize) -> Self {
        Self::monomial(1 << i, ChartFunction::one(chart))
    }

    /// The Darboux form `sum_i dx^i ^ dx^{i+m}`.
    pub fn omega(chart: Chart) -> Self {
        let m = chart.m as usize;
        let mut acc = Self::zero(chart, 2);
        for i in 0..m {
            acc = acc.add(&Self::monomial((1 << i) | (1 << (i + m)), ChartFunction::one(chart)));
        }
        acc
    }

    pub fn from_terms(chart: Chart, degree: usize, terms: Vec<(u8, ChartFunction<R>)>) -> Self {
        let mut acc = Self::zero(chart, degree);
        for (mask, f) in terms {
            assert_eq!(mask.count_ones() as usize, degree);
            acc = acc.add(&Self::monomial(mask, f));
        }
        acc
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn terms(&self) -> &[(u8, ChartFunction<R>)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, mask: u8) -> ChartFunction<R> {
        self.terms
            .iter()
            .find(|(m, _)| *m == mask)
            .map(|(_, f)| f.clone())
            .unwrap_or_else(|| ChartFunction::zero(self.chart))
    }

    /// Coefficient of `dx^0 ^ ... ^ dx^{2m-1}`.
    pub fn top_coeff(&self) -> ChartFunction<R> {
        self.coeff(((1u16 << self.chart.dim()) - 1) as u8)
    }

    /// Coefficient `theta_{ij}` of an antisymmetric 2-form, any order of i, j.
    pub fn component2(&self, i: usize, j: usize) -> ChartFunction<R> {
        assert_eq!(self.degree, 2);
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => ChartFunction::zero(self.chart),
            std::cmp::Ordering::Less => self.coeff((1 << i) | (1 << j)),
            std::cmp::Ordering::Greater => self.coeff((1 << i) | (1 << j)).neg(),
        }
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, ChartError> {
        if self.chart != other.chart {
            return Err(ChartError::Mismatch(self.chart, other.chart));
        }
        if self.degree != other.degree && !self.is_zero() && !other.is_zero() {
            return Err(ChartError::Degree { expected: self.degree, got: other.degree });
        }
        let degree = if self.is_zero() { other.degree } else { self.degree };
        let mut out: Vec<(u8, ChartFunction<R>)> = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut i, mut j) = (0, 0);
        while i < self.terms.len() || j < other.terms.len() {
            let take = match (self.terms.get(i), other.terms.get(j)) {
                (Some(a), Some(b)) => a.0.cmp(&b.0),
                (Some(_), None) => std::cmp::Ordering::Less,
                _ => std::cmp::Ordering::Greater,
            };
            match take {
                std::cmp::Ordering::Less => {
                    out.push(self.terms[i].clone());
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(other.terms[j].clone());
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    let f = self.terms[i].1.add(&other.terms[j].1);
                    if !f.is_zero() {
                        out.push((self.terms[i].0, f));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        Ok(DifferentialForm { chart: self.chart, degree, terms: out })
    }

    pub fn add(&self, other: &Self) -> Self {
        self.checked_add(other).expect("incompatible forms")
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.map(|f| f.neg())
    }

    pub fn scale(&self, c: &R) -> Self {
        self.map(|f| f.scale(c))
    }

    pub fn mul_fn(&self, g: &ChartFunction<R>) -> Self {
        self.map(|f| f.mul(g))
    }

    pub fn map(&self, mut op: impl FnMut(&ChartFunction<R>) -> ChartFunction<R>) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(m, f)| (*m, op(f)))
            .filter(|(_, f)| !f.is_zero())
            .collect();
        DifferentialForm { chart: self.chart, degree: self.degree, terms }
    }

    /// Exterior product; degrees beyond `2m` give the zero form.
    pub fn wedge(&self, other: &Self) -> Self {
        assert_eq!(self.chart, other.chart, "chart mismatch");
        let degree = self.degree + other.degree;
        let mut acc = Self::zero(self.chart, degree.min(self.chart.dim()));
        if degree > self.chart.dim() {
            return acc;
        }
        acc.degree = degree;
        for (ma, fa) in &self.terms {
            for (mb, fb) in &other.terms {
                if let Some(neg) = wedge_sign(*ma, *mb) {
                    let f = fa.mul(fb);
                    let f = if neg { f.neg() } else { f };
                    acc = acc.add(&Self::monomial(ma | mb, f));
                }
            }
        }
        acc
    }

    /// Exterior derivative.
    pub fn d(&self) -> Self {
        let degree = self.degree + 1;
        if degree > self.chart.dim() {
            return Self::zero(self.chart, self.chart.dim());
        }
        let mut acc = Self::zero(self.chart, degree);
        for (mask, f) in &self.terms {
            for i in 0..self.chart.dim() {
                if let Some(neg) = wedge_sign(1 << i, *mask) {
                    let g = f.d(i);
                    if g.is_zero() {
                        continue;
                    }
                    acc = acc.add(&Self::monomial(mask | (1 << i), if neg { g.neg() } else { g }));
                }
            }
        }
        acc
    }

    /// Interior product with the vector field with components `v`.
    pub fn interior(&self, v: &[ChartFunction<R>]) -> Self {
        assert_eq!(v.len(), self.chart.dim());
        if self.degree == 0 {
            return Self::zero(self.chart, 0);
        }
        let mut acc = Self::zero(self.chart, self.degree - 1);
        for (mask, f) in &self.terms {
            // i(e_k) dx^{i1}^...^dx^{ip} = (-1)^{pos} ... with dx^k removed
            for (pos, k) in mask_indices(*mask).enumerate() {
                if v[k].is_zero() {
                    continue;
                }
                let g = f.mul(&v[k]);
                let g = if pos % 2 == 1 { g.neg() } else { g };
                acc = acc.add(&Self::monomial(mask & !(1 << k), g));
            }
        }
        acc
    }

    /// `theta(Y, Z)` for a 2-form.
    pub fn eval2(&self, y: &[ChartFunction<R>], z: &[ChartFunction<R>]) -> ChartFunction<R> {
        self.interior(y).interior(z).coeff(0)
    }

    /// `int_{T^{2m}} theta` for a top-degree form.
    pub fn integrate_torus(&self) -> Result<TwoPi<Scalar<R>>, ChartError> {
        if self.chart.mode != Mode::Torus {
            return Err(ChartError::Unsupported { op: "integrate", mode: self.chart.mode });
        }
        if self.degree != self.chart.dim() && !self.is_zero() {
            return Err(ChartError::Degree { expected: self.chart.dim(), got: self.degree });
        }
        Ok(TwoPi::new(self.chart.dim() as i32, self.top_coeff().constant_term()))
    }

    pub fn with_caps(&self, caps: crate::Caps) -> Self {
        self.map(|f| f.with_caps(caps))
    }
}

/// `int_{T^{2m}} f * volume` for a top-degree `volume`.
pub fn integrate_torus<R: Field>(
    f: &ChartFunction<R>,
    volume: &DifferentialForm<R>,
) -> Result<TwoPi<Scalar<R>>, ChartError> {
    if volume.degree() != f.chart().dim() {
        return Err(ChartError::Degree { expected: f.chart().dim(), got: volume.degree() });
    }
    volume.mul_fn(f).integrate_torus()
}

impl<R: Field> fmt::Display for DifferentialForm<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, (mask, g)) in self.terms.iter().enumerate() {
            if n > 0 {
                write!(f, " + ")?;
            }
            let dx: Vec<String> = mask_indices(*mask).map(|i| format!("dx{}", i + 1)).collect();
            if dx.is_empty() {
                write!(f, "({g})")?;
            } else {
                write!(f, "({g}) {}", dx.join("^"))?;
            }
        }
        Ok(())
    }
}

impl<R: Field> fmt::Debug for DifferentialForm<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DifferentialForm[{}]({self})", self.degree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    type F = ChartFunction<Rational>;
    type Form = DifferentialForm<Rational>;

    #[test]
    fn signs() {
        assert_eq!(wedge_sign(0b01, 0b10), Some(false));
        assert_eq!(wedge_sign(0b10, 0b01), Some(true));
        assert_eq!(wedge_sign(0b01, 0b01), None);
        assert_eq!(wedge_sign(0b101, 0b010), Some(true));
    }

    #[test]
    fn d_of_cos() {
        let c = Chart::torus(1);
        let f = Form::function(F::cos_x(c, 0));
        assert_eq!(f.d(), Form::monomial(1, F::sin_x(c, 0).neg()));
        assert!(f.d().d().is_zero());
        assert!(Form::omega(c).d().is_zero());
    }

    #[test]
    fn dx_wedge_dx() {
        let c = Chart::torus(1);
        assert!(Form::dx(c, 0).wedge(&Form::dx(c, 0)).is_zero());
        let a = Form::dx(c, 0).wedge(&Form::dx(c, 1));
        let b = Form::dx(c, 1).wedge(&Form::dx(c, 0));
        assert_eq!(a, b.neg());
    }

    #[test]
    fn integrals() {
        let c = Chart::torus(1);
        let vol = Form::omega(c);
        let one = integrate_torus(&F::one(c), &vol).unwrap();
        assert_eq!(one.power, 2);
        assert_eq!(one.value.constant(), Rational::from(1));
        assert!(integrate_torus(&F::cos_x(c, 0), &vol).unwrap().value.is_zero());
        let cc = F::cos_x(c, 0).mul(&F::cos_x(c, 0));
        assert_eq!(integrate_torus(&cc, &vol).unwrap().value.constant(), Rational::new(1, 2));
        assert!(integrate_torus(&F::one(Chart::affine(1)), &Form::omega(Chart::affine(1))).is_err());
    }

    #[test]
    fn interior_of_omega() {
        let c = Chart::torus(1);
        let v = vec![F::one(c), F::zero(c)];
        // i(d1)(dx1^dx2) = dx2
        assert_eq!(Form::omega(c).interior(&v), Form::dx(c, 1));
    }
}

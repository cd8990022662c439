//! The Fedosov connection `D = d + (1/nu)[Gamma-bar + r, .] - delta`, the
//! quantization map `Q`, the star product and the inverse of `D` on exact
//! 1-forms.

use crate::chart::{ChartError, ChartFunction};
use crate::field::Field;
use crate::forms::DifferentialForm;
use crate::geometry::{Connection, ConnectionError};
use crate::scalar::{Caps, Gen};
use crate::series::NuSeries;
use crate::weyl::{gamma_bar, r_bar, WeylContext, WeylElement};

type Fun<R> = ChartFunction<R>;
type W<R> = WeylElement<R>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FedosovError {
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Connection(#[from] ConnectionError),
    #[error("the 2-form is not closed")]
    NotClosed,
    #[error("expected a 2-form, got degree {0}")]
    NotTwoForm(usize),
    #[error("degree audit failed at degree {degree}: {detail}")]
    DegreeAudit { degree: i32, detail: String },
    #[error("d_inverse precondition failed: D b = {residual}")]
    NotClosedSection { residual: String },
    #[error("d_inverse postcondition failed: D a - b = {residual}")]
    RoundTrip { residual: String },
}

/// Record of one step of the degree-by-degree solve for `r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeStep {
    pub degree: i32,
    pub terms: usize,
}

/// A solved Fedosov connection for `(nabla, Omega = nu chi)`.
#[derive(Clone, Debug)]
pub struct FedosovSetup<R: Field> {
    ctx: WeylContext,
    nabla: Connection<R>,
    chi: DifferentialForm<R>,
    gamma_bar: W<R>,
    r_bar: W<R>,
    omega: W<R>,
    r: W<R>,
    conn: W<R>,
    audit: Vec<DegreeStep>,
}

impl<R: Field> FedosovSetup<R> {
    /// Solve for `r` with `Omega = nu chi`. `chi` may be zero.
    pub fn new(ctx: WeylContext, nabla: Connection<R>, chi: DifferentialForm<R>) -> Result<Self, FedosovError> {
        if nabla.chart() != ctx.chart {
            return Err(ChartError::Mismatch(ctx.chart, nabla.chart()).into());
        }
        if chi.chart() != ctx.chart {
            return Err(ChartError::Mismatch(ctx.chart, chi.chart()).into());
        }
        nabla.check_symplectic()?;
        if chi.degree() != 2 {
            return Err(FedosovError::NotTwoForm(chi.degree()));
        }
        if !chi.d().is_zero() {
            return Err(FedosovError::NotClosed);
        }
        let gb = gamma_bar(ctx, &nabla);
        let rb = r_bar(ctx, &nabla);
        let omega = W::from_form(ctx, &chi).shift_nu(1);
        let mut setup = FedosovSetup {
            ctx,
            nabla,
            chi,
            gamma_bar: gb,
            r_bar: rb,
            omega,
            r: W::zero(ctx),
            conn: W::zero(ctx),
            audit: Vec::new(),
        };
        setup.solve_r()?;
        Ok(setup)
    }

    /// Degree by degree: `r_d = delta^{-1}(R-bar + d r + (1/nu)[Gamma-bar, r] + (1/nu) r o r - Omega)_{d-1}`.
    fn solve_r(&mut self) -> Result<(), FedosovError> {
        let ctx = self.ctx;
        // everything on the right except the r-dependent part
        let fixed = self.r_bar.sub(&self.omega);
        let mut acc = W::zero(ctx);
        let mut r = W::zero(ctx);
        for d in 3..=ctx.max_degree {
            let rhs = fixed.degree_part(d - 1).add(&acc.degree_part(d - 1));
            let rd = rhs.delta_inv();
            if let Some(bad) = rd.terms().iter().find(|(k, _)| k.degree() != d || k.form_degree() != 1) {
                return Err(FedosovError::DegreeAudit {
                    degree: d,
                    detail: format!("stray term of degree {} and form degree {}", bad.0.degree(), bad.0.form_degree()),
                });
            }
            self.audit.push(DegreeStep { degree: d, terms: rd.len() });
            if rd.is_zero() {
                continue;
            }
            // (1/nu)(r + r_d)o(r + r_d) - (1/nu) r o r = (1/nu)[r, r_d] + (1/2nu)[r_d, r_d] for 1-forms
            let half = R::from_ratio(1, 2);
            let inc = rd
                .d()
                .add(&self.gamma_bar.bracket_over_nu(&rd))
                .add(&r.bracket_over_nu(&rd))
                .add(&rd.bracket_over_nu(&rd).scale(&half));
            acc = acc.add(&inc);
            r = r.add(&rd);
        }
        if !r.delta_inv().is_zero() {
            return Err(FedosovError::DegreeAudit { degree: -1, detail: "delta^{-1} r != 0".into() });
        }
        self.conn = self.gamma_bar.add(&r);
        self.r = r;
        Ok(())
    }

    pub fn ctx(&self) -> WeylContext {
        self.ctx
    }

    pub fn connection(&self) -> &Connection<R> {
        &self.nabla
    }

    pub fn chi(&self) -> &DifferentialForm<R> {
        &self.chi
    }

    pub fn r(&self) -> &W<R> {
        &self.r
    }

    pub fn gamma_bar(&self) -> &W<R> {
        &self.gamma_bar
    }

    pub fn r_bar(&self) -> &W<R> {
        &self.r_bar
    }

    /// `Omega = nu chi` as a central Weyl 2-form.
    pub fn omega(&self) -> &W<R> {
        &self.omega
    }

    /// `Gamma-bar + r`, the full bracket part of `D`.
    pub fn connection_form(&self) -> &W<R> {
        &self.conn
    }

    pub fn audit(&self) -> &[DegreeStep] {
        &self.audit
    }

    /// Highest nu-order of star products this truncation supports.
    pub fn nu_order(&self) -> i32 {
        (self.ctx.max_degree - 3).div_euclid(2).max(0)
    }

    /// `D a = da + (1/nu)[Gamma-bar + r, a] - delta a`.
    pub fn d_flat(&self, a: &W<R>) -> W<R> {
        a.d().add(&self.conn.bracket_over_nu(a)).sub(&a.delta())
    }

    /// `R-bar + partial r - delta r + (1/nu) r o r - Omega`, exact through degree `K - 1`.
    pub fn equation_residual(&self) -> W<R> {
        let r = &self.r;
        let half = R::from_ratio(1, 2);
        self.r_bar
            .add(&r.d())
            .add(&self.gamma_bar.bracket_over_nu(r))
            .sub(&r.delta())
            .add(&r.bracket_over_nu(r).scale(&half))
            .sub(&self.omega)
            .up_to_degree(self.ctx.max_degree - 1)
    }

    /// `D D a` restricted to the degrees that are exact, `<= K - 2`.
    pub fn flatness_residual(&self, a: &W<R>) -> W<R> {
        self.d_flat(&self.d_flat(a)).up_to_degree(self.ctx.max_degree - 2)
    }

    /// Solve `a = init + delta^{-1}(da + (1/nu)[Gamma-bar + r, a])` degree by degree.
    fn solve_flat(&self, init: &W<R>) -> W<R> {
        let ctx = self.ctx;
        let mut a = W::zero(ctx);
        let mut acc = W::zero(ctx);
        for d in 0..=ctx.max_degree {
            let mut ad = init.degree_part(d);
            if d > 0 {
                ad = ad.add(&acc.degree_part(d - 1).delta_inv());
            }
            if ad.is_zero() {
                continue;
            }
            acc = acc.add(&ad.d()).add(&self.conn.bracket_over_nu(&ad));
            a = a.add(&ad);
        }
        a
    }

    /// The unique flat section with `sigma(Q F) = F`.
    pub fn quantize(&self, f: &NuSeries<Fun<R>>) -> W<R> {
        self.solve_flat(&W::from_series(self.ctx, f))
    }

    pub fn quantize_fn(&self, f: &Fun<R>) -> W<R> {
        self.solve_flat(&W::function(self.ctx, f.clone()))
    }

    /// `F * G = sigma(Q F o Q G)` through `nu^N`.
    pub fn star(&self, f: &NuSeries<Fun<R>>, g: &NuSeries<Fun<R>>) -> NuSeries<Fun<R>> {
        let qf = self.quantize(f);
        let qg = self.quantize(g);
        self.star_quantized(&qf, &qg)
    }

    pub fn star_fn(&self, f: &Fun<R>, g: &Fun<R>) -> NuSeries<Fun<R>> {
        let n = self.nu_order();
        self.star(&NuSeries::function(f.clone(), n), &NuSeries::function(g.clone(), n))
    }

    pub fn star_quantized(&self, qf: &W<R>, qg: &W<R>) -> NuSeries<Fun<R>> {
        qf.sigma_of_circ(qg).truncate(self.nu_order())
    }

    /// `[F, G]_* = F * G - G * F` through `nu^N`.
    pub fn star_commutator(&self, f: &NuSeries<Fun<R>>, g: &NuSeries<Fun<R>>) -> NuSeries<Fun<R>> {
        let qf = self.quantize(f);
        let qg = self.quantize(g);
        self.star_quantized(&qf, &qg).sub(&self.star_quantized(&qg, &qf))
    }

    /// The solution of `D a = b`, `sigma(a) = 0`, for a `D`-closed 1-form `b`:
    /// `a = -Q(delta^{-1} b)`, with `Q` continued to non-scalar initial data.
    pub fn d_inverse(&self, b: &W<R>) -> Result<W<R>, FedosovError> {
        let check = self.ctx.max_degree - 2;
        let db = self.d_flat(b).up_to_degree(check);
        if !db.is_zero() {
            return Err(FedosovError::NotClosedSection { residual: db.to_string() });
        }
        let a = self.solve_flat(&b.delta_inv().neg());
        let res = self.d_flat(&a).sub(b).up_to_degree(check);
        if !res.is_zero() {
            return Err(FedosovError::RoundTrip { residual: res.to_string() });
        }
        Ok(a)
    }

    /// Image of the setup under a jet truncation map (a ring homomorphism,
    /// so the mapped data solve the same equations).
    fn map_jets(&self, fw: impl Fn(&W<R>) -> W<R>, fc: impl Fn(&Connection<R>) -> Connection<R>, ff: impl Fn(&Fun<R>) -> Fun<R>) -> Self {
        FedosovSetup {
            ctx: self.ctx,
            nabla: fc(&self.nabla),
            chi: self.chi.map(&ff),
            gamma_bar: fw(&self.gamma_bar),
            r_bar: fw(&self.r_bar),
            omega: fw(&self.omega),
            r: fw(&self.r),
            conn: fw(&self.conn),
            audit: self.audit.clone(),
        }
    }

    /// Setting the jet generator `g` to zero.
    pub fn at_zero(&self, g: Gen) -> Self {
        self.map_jets(|w| w.jet_coeff(g, 0), |c| c.jet_coeff(g, 0), |f| f.jet_coeff(g, 0))
    }

    /// Tighten truncation orders of the jet generators.
    pub fn with_caps(&self, caps: Caps) -> Self {
        self.map_jets(|w| w.with_caps(caps), |c| c.with_caps(caps), |f| f.with_caps(caps))
    }

    /// Same setup with a different degree cap.
    pub fn refine(&self, max_degree: i32) -> Result<Self, FedosovError> {
        Self::new(WeylContext::new(self.ctx.chart, max_degree), self.nabla.clone(), self.chi.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Chart;
    use crate::geometry::SymTensor3;
    use crate::weyl::WKey;
    use crate::Rational;

    type F = Fun<Rational>;

    fn flat(ch: Chart) -> Connection<Rational> {
        Connection::flat(ch)
    }

    fn curved(ch: Chart) -> Connection<Rational> {
        let mut s = SymTensor3::zero(ch);
        s.set(0, 0, 0, F::cos_x(ch, 1).scale(&Rational::new(1, 4)));
        Connection::symplectic(&s)
    }

    fn chi(ch: Chart) -> DifferentialForm<Rational> {
        let c = F::one(ch).add(&F::cos_x(ch, 1).scale(&Rational::new(1, 2)));
        DifferentialForm::monomial(0b11, c)
    }

    #[test]
    fn flat_zero_omega_has_no_r() {
        let ch = Chart::torus(1);
        let s = FedosovSetup::new(WeylContext::new(ch, 7), flat(ch), DifferentialForm::zero(ch, 2)).unwrap();
        assert!(s.r().is_zero());
        let y1 = W::y(s.ctx(), 0);
        let expect = W::from_form(s.ctx(), &DifferentialForm::dx(ch, 0)).neg();
        assert_eq!(s.d_flat(&y1), expect);
    }

    #[test]
    fn leading_terms_of_r() {
        let ch = Chart::torus(1);
        let ctx = WeylContext::new(ch, 5);
        let s = FedosovSetup::new(ctx, flat(ch), chi(ch)).unwrap();
        let lead = s.r().degree_part(3);
        assert_eq!(lead, s.omega().delta_inv().neg());
        let c = FedosovSetup::new(ctx, curved(ch), DifferentialForm::zero(ch, 2)).unwrap();
        assert!(!c.r_bar().is_zero());
        assert_eq!(c.r().degree_part(3), c.r_bar().delta_inv());
    }

    #[test]
    fn equation_and_flatness() {
        let ch = Chart::torus(1);
        let s = FedosovSetup::new(WeylContext::new(ch, 6), curved(ch), chi(ch)).unwrap();
        assert!(s.equation_residual().is_zero());
        let a = W::from_terms(
            s.ctx(),
            vec![
                (WKey { nu: 0, y: [1, 1, 0, 0, 0, 0], form: 0 }, F::sin_x(ch, 0)),
                (WKey { nu: 0, y: [0, 1, 0, 0, 0, 0], form: 1 }, F::cos(ch, &[1, 1])),
            ],
        );
        assert!(s.flatness_residual(&a).is_zero());
    }

    #[test]
    fn quantize_is_flat_and_sections() {
        let ch = Chart::torus(1);
        let s = FedosovSetup::new(WeylContext::new(ch, 7), curved(ch), chi(ch)).unwrap();
        let f = NuSeries::function(F::cos(ch, &[1, 1]), 2);
        let q = s.quantize(&f);
        assert_eq!(q.sigma().truncate(2), f);
        let res = s.d_flat(&q);
        assert!(res.up_to_degree(5).is_zero());
        assert_eq!(s.quantize_fn(&F::one(ch)), W::one(s.ctx()));
    }

    #[test]
    fn d_inverse_round_trip() {
        let ch = Chart::torus(1);
        let s = FedosovSetup::new(WeylContext::new(ch, 7), flat(ch), DifferentialForm::zero(ch, 2)).unwrap();
        let c = W::y(s.ctx(), 0).circ(&W::y(s.ctx(), 1));
        let c = c.sub(&c.a00());
        let b = s.d_flat(&c);
        assert_eq!(s.d_inverse(&b).unwrap(), c);
        assert!(s.d_inverse(&W::zero(s.ctx())).unwrap().is_zero());
        let bad: W<Rational> = W::y(s.ctx(), 0);
        let bad = W::from_terms(s.ctx(), vec![(WKey { form: 2, ..bad.terms()[0].0 }, F::one(ch))]);
        assert!(matches!(s.d_inverse(&bad), Err(FedosovError::NotClosedSection { .. })));
    }

    #[test]
    fn commutator_leading_term() {
        let ch = Chart::torus(1);
        let s = FedosovSetup::new(WeylContext::new(ch, 7), curved(ch), chi(ch)).unwrap();
        let n = s.nu_order();
        let a = F::cos_x(ch, 0);
        let b = F::cos_x(ch, 1);
        let c = s.star_commutator(&NuSeries::function(a.clone(), n), &NuSeries::function(b.clone(), n));
        assert!(c.coeff(0).is_zero());
        assert_eq!(c.coeff(1), &a.poisson(&b));
    }
}

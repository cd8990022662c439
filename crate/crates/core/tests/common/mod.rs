#![allow(dead_code)]

use fedosov_core::geometry::lambda_entry;
use fedosov_core::transport::Background;
use fedosov_core::{
    Chart, ChartFunction as F, Connection, DiffeoFamily, DifferentialForm, FnSeries, Gen, Rational, SymTensor3,
    VectorField, WeylContext,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn q(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

pub fn t2() -> Chart {
    Chart::torus(1)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random trig polynomial with `terms` terms, frequencies in `[-max, max]`.
pub fn random_trig(rng: &mut ChaCha8Rng, ch: Chart, terms: usize, max: i64) -> F {
    let mut out = F::zero(ch);
    for _ in 0..terms {
        let k: Vec<i64> = (0..ch.dim()).map(|_| rng.gen_range(-max..=max)).collect();
        let c = q(rng.gen_range(-3..=3), rng.gen_range(1..=3));
        let basis = if rng.gen_bool(0.5) { F::cos(ch, &k) } else { F::sin(ch, &k) };
        out = out.add(&basis.scale(&c));
    }
    out
}

/// Moyal product computed directly from the bidifferential operator
/// `sum_k (nu/2)^k / k! Lambda^{i1 j1}...Lambda^{ik jk} d_I F d_J G`.
pub fn moyal(f: &F, g: &F, order: i32) -> FnSeries {
    let ch = f.chart();
    let n = ch.dim();
    let m = ch.m as usize;
    fn pk(f: &F, g: &F, k: i32, n: usize, m: usize) -> F {
        if k == 0 {
            return f.mul(g);
        }
        let mut acc = F::zero(f.chart());
        for i in 0..n {
            for j in 0..n {
                let l = lambda_entry(m, i, j);
                if l != 0 {
                    acc = acc.add(&pk(&f.d(i), &g.d(j), k - 1, n, m).scale_int(l));
                }
            }
        }
        acc
    }
    let mut out = FnSeries::zero_fn(ch, 0, order);
    let mut fact = 1i64;
    for k in 0..=order {
        if k > 0 {
            fact *= k as i64;
        }
        let c = q(1, fact * (1i64 << k));
        out.set(k, pk(f, g, k, n, m).scale(&c));
    }
    out
}

pub fn chi_omega(ch: Chart) -> DifferentialForm {
    DifferentialForm::omega(ch)
}

pub fn chi_wavy(ch: Chart) -> DifferentialForm {
    DifferentialForm::monomial(0b11, F::one(ch).add(&F::cos_x(ch, 1).scale(&q(1, 2))))
}

pub fn s111(ch: Chart, coeff: F) -> Connection {
    let mut s = SymTensor3::zero(ch);
    s.set(0, 0, 0, coeff);
    Connection::symplectic(&s)
}

pub fn shear(ch: Chart) -> DiffeoFamily {
    let eps = F::gen(ch, Gen::Eps, 1);
    DiffeoFamily::new(vec![F::zero(ch), eps.mul(&F::cos_x(ch, 0))]).unwrap()
}

pub fn fields(ch: Chart) -> Vec<(&'static str, VectorField)> {
    vec![
        ("d1", VectorField::coordinate(ch, 0)),
        ("d2", VectorField::coordinate(ch, 1)),
        ("sin(x1) d2", VectorField::new(vec![F::zero(ch), F::sin_x(ch, 0)])),
    ]
}

pub fn hamiltonians(ch: Chart) -> Vec<(&'static str, F)> {
    vec![("cos(x1)", F::cos_x(ch, 0)), ("cos(x2)", F::cos_x(ch, 1))]
}

pub struct Case {
    pub name: String,
    pub bg: Background<Rational>,
    pub f: DiffeoFamily,
}

/// The scenario matrix: chi x connection x diffeomorphism on T^2.
///
/// `S_111 = 1/4 cos x1` has vanishing curvature on T^2, so `S_111 = 1/4 cos x2`
/// is included as the curved representative.
pub fn matrix(max_degree: i32) -> Vec<Case> {
    let ch = t2();
    let ctx = WeylContext::new(ch, max_degree);
    let chis = [("chi=omega", chi_omega(ch)), ("chi=1+cos(x2)/2", chi_wavy(ch))];
    let nablas = [
        ("flat", Connection::flat(ch)),
        ("S111=cos(x1)/4", s111(ch, F::cos_x(ch, 0).scale(&q(1, 4)))),
        ("S111=cos(x2)/4", s111(ch, F::cos_x(ch, 1).scale(&q(1, 4)))),
    ];
    let fs = [("id", DiffeoFamily::identity(ch)), ("shear", shear(ch))];
    let mut out = Vec::new();
    for (cn, chi) in &chis {
        for (nn, nabla) in &nablas {
            for (fnm, f) in &fs {
                out.push(Case {
                    name: format!("{cn}, {nn}, f={fnm}"),
                    bg: Background::new(ctx, nabla.clone(), chi.clone()).unwrap(),
                    f: f.clone(),
                });
            }
        }
    }
    out
}

mod common;

use common::*;
use fedosov_core::weyl::{gamma_bar, partial, r_bar};
use fedosov_core::{Chart, ChartFunction as F, DifferentialForm, Gen, WKey, WeylContext, WeylElement as W};
use proptest::prelude::*;

fn trig_strategy(max_terms: usize) -> impl Strategy<Value = F> {
    prop::collection::vec((any::<bool>(), -2i64..=2, -2i64..=2, -3i64..=3, 1i64..=3), 0..=max_terms).prop_map(|ts| {
        let ch = t2();
        ts.into_iter().fold(F::zero(ch), |acc, (c, k1, k2, n, d)| {
            let b = if c { F::cos(ch, &[k1, k2]) } else { F::sin(ch, &[k1, k2]) };
            acc.add(&b.scale(&q(n, d)))
        })
    })
}

fn weyl_strategy(ctx: WeylContext, max_terms: usize) -> impl Strategy<Value = W> {
    prop::collection::vec((0i8..=1, 0u8..=2, 0u8..=2, 0u8..=3, trig_strategy(2)), 0..=max_terms).prop_map(move |ts| {
        let terms = ts
            .into_iter()
            .map(|(nu, a, b, form, f)| (WKey { nu, y: [a, b, 0, 0, 0, 0], form }, f))
            .filter(|(k, _)| k.degree() <= ctx.max_degree)
            .collect();
        W::from_terms(ctx, terms)
    })
}

fn even_weyl(ctx: WeylContext, max_terms: usize) -> impl Strategy<Value = W> {
    weyl_strategy(ctx, max_terms).prop_map(|a| a.filter(|k| k.form_degree() % 2 == 0))
}

fn ctx() -> WeylContext {
    WeylContext::new(t2(), 6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn function_product_is_associative_and_distributive(a in trig_strategy(3), b in trig_strategy(3), c in trig_strategy(3)) {
        prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
        prop_assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
        prop_assert_eq!(a.mul(&b), b.mul(&a));
    }

    #[test]
    fn derivative_is_a_derivation_and_commutes(a in trig_strategy(3), b in trig_strategy(3)) {
        for i in 0..2 {
            prop_assert_eq!(a.mul(&b).d(i), a.d(i).mul(&b).add(&a.mul(&b.d(i))));
            prop_assert!(a.d(i).torus_mean().unwrap().is_zero());
        }
        prop_assert_eq!(a.d(0).d(1), a.d(1).d(0));
    }

    #[test]
    fn poisson_bracket_satisfies_jacobi(a in trig_strategy(2), b in trig_strategy(2), c in trig_strategy(2)) {
        let j = a.poisson(&b.poisson(&c)).add(&b.poisson(&c.poisson(&a))).add(&c.poisson(&a.poisson(&b)));
        prop_assert!(j.is_zero());
        prop_assert_eq!(a.poisson(&b), b.poisson(&a).neg());
    }

    #[test]
    fn eps_truncation_is_an_ideal(a in trig_strategy(2), b in trig_strategy(2)) {
        let ch = t2();
        let e = F::gen(ch, Gen::Eps, 2);
        let e2 = e.mul(&a);
        prop_assert!(e2.mul(&e).mul(&e).mul(&b).is_zero());
        prop_assert!(!e.mul(&e).is_zero());
    }

    #[test]
    fn exterior_derivative_squares_to_zero(a in trig_strategy(2), b in trig_strategy(2)) {
        let ch = t2();
        let th = DifferentialForm::from_terms(ch, 1, vec![(0b01, a.clone()), (0b10, b.clone())]);
        prop_assert!(DifferentialForm::function(a.clone()).d().d().is_zero());
        prop_assert!(th.d().d().is_zero());
        let eta = DifferentialForm::from_terms(ch, 1, vec![(0b01, b), (0b10, a)]);
        prop_assert_eq!(th.wedge(&eta), eta.wedge(&th).neg());
    }

    #[test]
    fn circ_is_associative(a in weyl_strategy(ctx(), 3), b in weyl_strategy(ctx(), 3), c in weyl_strategy(ctx(), 3)) {
        prop_assert_eq!(a.circ(&b).circ(&c), a.circ(&b.circ(&c)));
    }

    #[test]
    fn hodge_decomposition(a in weyl_strategy(ctx(), 5)) {
        // delta^{-1} raises the total degree, so the top degree K is cut off
        let k = ctx().max_degree - 1;
        let rhs = a.a00().add(&a.delta().delta_inv()).add(&a.delta_inv().delta());
        prop_assert_eq!(a.up_to_degree(k), rhs.up_to_degree(k));
        prop_assert!(a.delta().delta().is_zero());
    }

    #[test]
    fn delta_is_the_inner_bracket(a in weyl_strategy(ctx(), 4)) {
        let c = ctx();
        // omega_ij y^i dx^j as a 1-form
        let inner = W::from_terms(c, vec![
            (WKey { nu: 0, y: [1, 0, 0, 0, 0, 0], form: 0b10 }, F::one(c.chart)),
            (WKey { nu: 0, y: [0, 1, 0, 0, 0, 0], form: 0b01 }, F::one(c.chart).neg()),
        ]);
        prop_assert_eq!(inner.bracket(&a).up_to_degree(c.max_degree), a.delta().shift_nu(1).neg().up_to_degree(c.max_degree));
    }

    #[test]
    fn graded_jacobi(a in weyl_strategy(ctx(), 2), b in weyl_strategy(ctx(), 2), c in even_weyl(ctx(), 2)) {
        // [a,[b,c]] = [[a,b],c] + (-1)^{|a||b|}[b,[a,c]] on pure form degrees
        for a in split(&a) {
            for b in split(&b) {
                let sign = if a.max_form_degree() * b.max_form_degree() % 2 == 1 { -1 } else { 1 };
                let lhs = a.bracket(&b.bracket(&c));
                let rhs = a.bracket(&b).bracket(&c).add(&b.bracket(&a.bracket(&c)).scale(&q(sign, 1)));
                prop_assert_eq!(lhs, rhs);
            }
        }
    }
}

fn split(a: &W) -> Vec<W> {
    (0..=2).map(|d| a.filter(|k| k.form_degree() == d)).filter(|x| !x.is_zero()).collect()
}

fn curved_nabla(ch: Chart) -> fedosov_core::Connection {
    s111(ch, F::cos_x(ch, 1).scale(&q(1, 4))).plus_symmetric(&{
        let mut s = fedosov_core::SymTensor3::zero(ch);
        s.set(0, 1, 1, F::sin(ch, &[1, 1]).scale(&q(1, 3)));
        s
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn connection_derivation_obeys_leibniz(a in weyl_strategy(ctx(), 3), b in weyl_strategy(ctx(), 3)) {
        let c = ctx();
        let gb = gamma_bar(c, &curved_nabla(c.chart));
        for a in split(&a) {
            let sign = if a.max_form_degree() % 2 == 1 { -1 } else { 1 };
            let lhs = partial(&gb, &a.circ(&b));
            let rhs = partial(&gb, &a).circ(&b).add(&a.circ(&partial(&gb, &b)).scale(&q(sign, 1)));
            let k = c.max_degree - 1;
            prop_assert_eq!(lhs.up_to_degree(k), rhs.up_to_degree(k));
        }
    }

    #[test]
    fn connection_derivation_squares_to_curvature(a in weyl_strategy(ctx(), 4)) {
        let c = ctx();
        let nabla = curved_nabla(c.chart);
        let gb = gamma_bar(c, &nabla);
        let rb = r_bar(c, &nabla);
        let k = c.max_degree - 2;
        prop_assert_eq!(partial(&gb, &partial(&gb, &a)).up_to_degree(k), rb.bracket_over_nu(&a).up_to_degree(k));
    }
}

mod common;

use common::*;
use fedosov_core::series::NuSeries;
use fedosov_core::transport::{
    build_transport, compatibility_residual, curvature_r, formal_connection_apply, ham_automorphism_residual,
    Background, GeometryPath,
};
use fedosov_core::{ChartFunction as F, Connection, DiffeoFamily, Gen, SymTensor3, VectorField, WeylContext, WeylElement};

#[test]
fn hamiltonian_automorphism_flat_torus() {
    let ch = t2();
    let bg = Background::new(WeylContext::new(ch, 7), Connection::flat(ch), fedosov_core::DifferentialForm::zero(ch, 2)).unwrap();
    let f = NuSeries::function(F::cos_x(ch, 1), 2);
    let res = ham_automorphism_residual(&bg, &F::cos_x(ch, 0), &f).unwrap();
    assert!(res.is_zero(), "{res}");
    let res = ham_automorphism_residual(&bg, &F::from_int(ch, 3), &f).unwrap();
    assert!(res.is_zero(), "{res}");
}

#[test]
fn hamiltonian_automorphism_curved_with_chi() {
    let ch = t2();
    let bg = Background::new(WeylContext::new(ch, 7), s111(ch, F::cos_x(ch, 1).scale(&q(1, 4))), chi_wavy(ch)).unwrap();
    for h in [F::cos_x(ch, 0), F::sin(ch, &[1, 1])] {
        let f = NuSeries::function(F::cos(ch, &[1, -1]), 2);
        let res = ham_automorphism_residual(&bg, &h, &f).unwrap();
        assert!(res.is_zero(), "{res}");
    }
}

#[test]
fn transported_sections_are_parallel() {
    let ch = t2();
    let bg = Background::new(WeylContext::new(ch, 7), s111(ch, F::cos_x(ch, 1).scale(&q(1, 4))), chi_wavy(ch)).unwrap();
    let f = shear(ch);
    let y = VectorField::new(vec![F::zero(ch), F::sin_x(ch, 0)]);
    let path = GeometryPath::left_flow(&bg, &f, &y, 1).unwrap();
    let tr = build_transport(bg.ctx(), &path).unwrap();
    let setup_f = bg.setup_at(&f).unwrap();
    let alpha = bg.alpha_left(&setup_f, &f, &y, Gen::S).unwrap();
    let n = setup_f.nu_order();
    let sec = tr.apply(&NuSeries::function(F::cos(ch, &[1, 1]), n));
    let dsec = formal_connection_apply(&setup_f, &alpha, &sec, Gen::T);
    assert!(dsec.truncate(n - 1).is_zero(), "{dsec}");
}

#[test]
fn connection_segment_is_an_algebra_isomorphism() {
    let ch = t2();
    let ctx = WeylContext::new(ch, 7);
    let mut s = SymTensor3::zero(ch);
    s.set(0, 1, 1, F::sin_x(ch, 0));
    s.set(1, 1, 1, F::cos_x(ch, 0).scale(&q(1, 3)));
    let path = GeometryPath::connection_segment(&Connection::flat(ch), &s, chi_wavy(ch), 1).unwrap();
    let tr = build_transport(ctx, &path).unwrap();
    assert_eq!(tr.v.jet_coeff(Gen::T, 0), WeylElement::one(ctx));
    let (a, b) = tr.inverse_residual();
    assert!(a.is_zero() && b.is_zero());
    assert!(tr.initial_residual().is_zero());
    let mut r = rng(7);
    for _ in 0..3 {
        let fa = NuSeries::function(random_trig(&mut r, ch, 2, 2), 2);
        let fb = NuSeries::function(random_trig(&mut r, ch, 2, 2), 2);
        let res = tr.intertwining_residual(&fa, &fb);
        assert!(res.is_zero(), "{res}");
    }
}

#[test]
fn formal_connection_is_a_derivation() {
    let ch = t2();
    let bg = Background::new(WeylContext::new(ch, 7), s111(ch, F::cos_x(ch, 1).scale(&q(1, 4))), chi_wavy(ch)).unwrap();
    let f = shear(ch);
    let y = VectorField::new(vec![F::zero(ch), F::sin_x(ch, 0)]);
    let a = NuSeries::function(F::cos(ch, &[1, 1]), 2);
    let b = NuSeries::function(F::sin_x(ch, 1), 2);
    let res = compatibility_residual(&bg, &f, &y, &a, &b).unwrap();
    assert!(res.is_zero(), "{res}");
    let setup_f = bg.setup_at(&f).unwrap();
    let alpha = bg.alpha_left(&setup_f, &f, &y, Gen::T).unwrap();
    let one = NuSeries::function(F::one(ch), 2);
    assert!(fedosov_core::transport::beta(&setup_f, &alpha, &one).is_zero());
}

#[test]
fn alpha_is_linear_with_degree_at_least_three() {
    let ch = t2();
    let bg = Background::new(WeylContext::new(ch, 7), s111(ch, F::cos_x(ch, 1).scale(&q(1, 4))), chi_wavy(ch)).unwrap();
    let f = shear(ch);
    let setup_f = bg.setup_at(&f).unwrap();
    let y = VectorField::coordinate(ch, 0);
    let z = VectorField::new(vec![F::zero(ch), F::sin_x(ch, 0)]);
    let ay = bg.alpha_left(&setup_f, &f, &y, Gen::T).unwrap();
    let az = bg.alpha_left(&setup_f, &f, &z, Gen::T).unwrap();
    let ayz = bg.alpha_left(&setup_f, &f, &y.add(&z.scale(&q(2, 1))), Gen::T).unwrap();
    assert_eq!(ayz, ay.add(&az.scale(&q(2, 1))));
    for a in [&ay, &az] {
        assert!(a.min_degree().is_none_or(|d| d >= 3));
    }
    assert!(bg.alpha_left(&setup_f, &f, &VectorField::zero(ch), Gen::T).unwrap().is_zero());
}

#[test]
fn curvature_is_antisymmetric() {
    let ch = t2();
    let bg = Background::new(WeylContext::new(ch, 7), s111(ch, F::cos_x(ch, 1).scale(&q(1, 4))), chi_wavy(ch)).unwrap();
    let f = shear(ch);
    let y = VectorField::coordinate(ch, 0);
    let z = VectorField::new(vec![F::zero(ch), F::sin_x(ch, 0)]);
    let ryz = curvature_r(&bg, &f, &y, &z).unwrap().r;
    let rzy = curvature_r(&bg, &f, &z, &y).unwrap().r;
    assert_eq!(ryz, rzy.neg());
    assert!(curvature_r(&bg, &f, &z, &z).unwrap().r.is_zero());
}

#[test]
fn exact_primitive_gives_round_trip_alpha() {
    // flat nabla, f = id, Y = d1, chi = omega: the connection does not move and alpha solves D alpha = -nu dx2
    let ch = t2();
    let bg = Background::new(WeylContext::new(ch, 7), Connection::flat(ch), chi_omega(ch)).unwrap();
    let f = DiffeoFamily::identity(ch);
    let setup = bg.setup_at(&f).unwrap();
    let y = VectorField::coordinate(ch, 0);
    let a = bg.alpha_left(&setup, &f, &y, Gen::T).unwrap();
    assert!(a.sigma().is_zero());
    let theta = fedosov_core::DifferentialForm::from_terms(ch, 1, vec![(0b10, F::one(ch))]);
    let b = WeylElement::from_form(bg.ctx(), &theta).shift_nu(1).neg();
    let da = setup.d_flat(&a).up_to_degree(bg.ctx().max_degree - 2);
    assert_eq!(da, b.up_to_degree(bg.ctx().max_degree - 2));
}

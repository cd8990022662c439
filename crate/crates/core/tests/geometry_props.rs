mod common;

use common::*;
use fedosov_core::geometry::{hamiltonian_vf, lowered_difference, pi_nabla, Connection as GConnection};
use fedosov_core::{ChartFunction as F, Connection, DiffeoFamily, DifferentialForm, Gen, SymTensor3, VectorField};

fn curved() -> Connection {
    s111(t2(), F::cos_x(t2(), 1).scale(&q(1, 4)))
}

fn flows() -> Vec<DiffeoFamily> {
    let ch = t2();
    vec![
        DiffeoFamily::hamiltonian_flow(&F::sin_x(ch, 0), Gen::Tau, 1),
        DiffeoFamily::hamiltonian_flow(&F::cos(ch, &[1, 1]), Gen::Tau, 1),
    ]
}

#[test]
fn pi_nabla_of_identity_is_nabla() {
    let n = curved();
    assert_eq!(pi_nabla(&DiffeoFamily::identity(t2()), &n), n);
}

#[test]
fn pi_nabla_difference_is_cyclic_symmetrisation() {
    let ch = t2();
    for nabla in [Connection::flat(ch), curved()] {
        let f = shear(ch);
        let a = lowered_difference(&nabla.pullback(&f), &nabla);
        let b = lowered_difference(&pi_nabla(&f, &nabla), &nabla);
        let third = q(1, 3);
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    let cyc = a.get(x, y, z).add(a.get(y, z, x)).add(a.get(z, x, y)).scale(&third);
                    assert_eq!(b.get(x, y, z), &cyc, "({x},{y},{z})");
                }
            }
        }
        assert!(pi_nabla(&f, &nabla).is_symplectic());
    }
}

#[test]
fn pi_nabla_is_equivariant_under_hamiltonian_flows() {
    let ch = t2();
    for nabla in [Connection::flat(ch), curved()] {
        let f = shear(ch);
        for phi in flows() {
            let lhs = pi_nabla(&f.compose(&phi), &nabla);
            let rhs = pi_nabla(&f, &nabla).pullback(&phi);
            assert_eq!(lhs, rhs);
        }
    }
}

#[test]
fn pullback_is_contravariant() {
    let ch = t2();
    let e = F::gen(ch, Gen::Eps, 2);
    let g = DiffeoFamily::new(vec![e.mul(&F::sin_x(ch, 1)).scale(&q(1, 2)), F::zero(ch)]).unwrap();
    let f = DiffeoFamily::new(vec![F::zero(ch), e.mul(&F::cos_x(ch, 0))]).unwrap();
    let nabla = curved();
    assert_eq!(nabla.pullback(&g.compose(&f)), nabla.pullback(&g).pullback(&f));
}

#[test]
fn flat_connection_pulled_back_by_shear() {
    // Gamma^k_ij = (D f^{-1})^k_l d_i d_j f^l; only f^2 = x2 + eps cos x1 is curved
    let ch = t2();
    let f = shear(ch);
    let p = Connection::flat(ch).pullback(&f);
    let eps = F::gen(ch, Gen::Eps, 1);
    let expect = GConnection::from_christoffel(ch, |k, i, j| {
        if (k, i, j) == (1, 0, 0) {
            eps.mul(&F::cos_x(ch, 0)).neg()
        } else {
            F::zero(ch)
        }
    })
    .unwrap();
    assert_eq!(p, expect);
}

#[test]
fn n_symmetrize_repairs_a_non_symplectic_perturbation() {
    let ch = t2();
    let bad = GConnection::from_christoffel(ch, |k, i, j| {
        if (k, i, j) == (0, 0, 0) {
            F::sin_x(ch, 1)
        } else if k == 1 && i == 0 && j == 1 || k == 1 && i == 1 && j == 0 {
            F::cos_x(ch, 0).scale(&q(1, 2))
        } else {
            F::zero(ch)
        }
    })
    .unwrap();
    assert!(!bad.is_symplectic());
    let fixed = bad.n_symmetrize();
    assert!(fixed.is_symplectic());
    assert_eq!(fixed.n_symmetrize(), fixed);
    assert!(fixed.n_tensor().is_zero());
}

#[test]
fn curvature_satisfies_first_bianchi() {
    let ch = t2();
    let mut r = rng(11);
    for _ in 0..5 {
        let mut s = SymTensor3::zero(ch);
        for (i, j, l) in [(0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 1, 1)] {
            s.set(i, j, l, random_trig(&mut r, ch, 2, 2));
        }
        let c = Connection::symplectic(&s).curvature();
        for rr in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let cyc = c.get(rr, j, k, l).add(c.get(rr, k, l, j)).add(c.get(rr, l, j, k));
                        assert!(cyc.is_zero());
                        assert_eq!(c.get(rr, j, k, l), &c.get(rr, j, l, k).neg());
                    }
                }
            }
        }
    }
}

#[test]
fn curvature_of_x1_only_christoffels() {
    // S_111 = cos(x1)/4 gives Christoffels in x1 only, all along the x1 direction: no curvature
    let ch = t2();
    let nabla = s111(ch, F::cos_x(ch, 0).scale(&q(1, 4)));
    let c = nabla.curvature();
    assert!(c.is_zero());
    let c2 = curved().curvature();
    assert!(!c2.is_zero());
}

#[test]
fn hamiltonian_fields_contract_omega_to_dh() {
    let ch = t2();
    let mut r = rng(3);
    for _ in 0..10 {
        let h = random_trig(&mut r, ch, 3, 2);
        let x = hamiltonian_vf(&h);
        assert_eq!(DifferentialForm::omega(ch).interior(x.comps()), DifferentialForm::function(h.clone()).d());
    }
    assert!(hamiltonian_vf(&F::from_int(ch, 5)).is_zero());
}

#[test]
fn transport_by_f_then_inverse_is_identity() {
    let ch = t2();
    let f = shear(ch);
    let finv = f.inverse();
    let y = VectorField::new(vec![F::sin_x(ch, 1), F::cos(ch, &[1, 1])]);
    assert_eq!(finv.push_vf(&f.push_vf(&y)), y);
    let theta = DifferentialForm::from_terms(ch, 1, vec![(0b01, F::cos_x(ch, 1)), (0b10, F::sin_x(ch, 0))]);
    assert_eq!(finv.pull_form(&f.pull_form(&theta)), theta);
    let g = F::cos(ch, &[2, -1]);
    assert_eq!(finv.pull_fn(&f.pull_fn(&g)), g);
}

//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 on any failure.

mod common;

use std::time::{Duration, Instant};

use common::*;
use fedosov_core::geometry::{lowered_difference, pi_nabla};
use fedosov_core::series::NuSeries;
use fedosov_core::trace::{
    donaldson, mu_equivariance_residual, mu_tilde, moment_residual, omega_diff, omega_tilde,
    omega_tilde_ham_invariance, trace_density, TraceSolver,
};
use fedosov_core::transport::{
    build_transport, curvature_r, ham_automorphism_residual, q_closed_form, Background, GeometryPath,
};
use fedosov_core::{
    Chart, ChartFunction as F, Connection, DiffeoFamily, DifferentialForm, FedosovSetup, Gen, SymTensor3, VectorField,
    WKey, WeylContext, WeylElement,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_weyl(rng: &mut ChaCha8Rng, ctx: WeylContext, terms: usize) -> WeylElement {
    let ch = ctx.chart;
    let mut out = Vec::new();
    for _ in 0..terms {
        let key = WKey { nu: rng.gen_range(0..=1), y: [rng.gen_range(0..=2), rng.gen_range(0..=2), 0, 0, 0, 0], form: rng.gen_range(0..=3) };
        if key.degree() <= ctx.max_degree {
            out.push((key, random_trig(rng, ch, 2, 2)));
        }
    }
    WeylElement::from_terms(ctx, out)
}

fn series(f: F, n: i32) -> fedosov_core::FnSeries {
    NuSeries::function(f, n)
}

fn moyal_recovery() -> Check {
    let ch = t2();
    let setup = FedosovSetup::new(WeylContext::new(ch, 9), Connection::flat(ch), DifferentialForm::zero(ch, 2)).map_err(err)?;
    ensure!(setup.r().is_zero(), "r should vanish for the flat, Omega = 0 setup");
    let mut r = rng(1);
    for i in 0..20 {
        let f = random_trig(&mut r, ch, 3, 2);
        let g = random_trig(&mut r, ch, 3, 2);
        let s = setup.star_fn(&f, &g).truncate(3);
        let m = moyal(&f, &g, 3);
        ensure!(s == m, "pair {i}: star {s} vs Moyal {m}");
    }
    Ok("20 random pairs agree through nu^3".into())
}

fn associativity() -> Check {
    let mut worst = Duration::ZERO;
    let cases = matrix(7);
    for case in &cases {
        let t0 = Instant::now();
        let setup = case.bg.setup_at(&case.f).map_err(err)?;
        let ch = setup.ctx().chart;
        let mut r = rng(2);
        for i in 0..20 {
            let f = series(random_trig(&mut r, ch, 2, 2), 2);
            let g = series(random_trig(&mut r, ch, 2, 2), 2);
            let h = series(random_trig(&mut r, ch, 2, 2), 2);
            let lhs = setup.star(&setup.star(&f, &g), &h).truncate(2);
            let rhs = setup.star(&f, &setup.star(&g, &h)).truncate(2);
            ensure!(lhs == rhs, "{}: triple {i} differs by {}", case.name, lhs.sub(&rhs));
        }
        let dt = t0.elapsed();
        worst = worst.max(dt);
        ensure!(dt < Duration::from_secs(60), "{}: {dt:?} exceeds 60 s", case.name);
    }
    Ok(format!("20 triples on {} setups, slowest {:.2} s", cases.len(), worst.as_secs_f64()))
}

fn fedosov_equation() -> Check {
    let cases = matrix(7);
    for case in &cases {
        let setup = case.bg.setup_at(&case.f).map_err(err)?;
        let r = setup.r();
        ensure!(r.delta_inv().is_zero(), "{}: delta^-1 r != 0", case.name);
        ensure!(r.min_degree().is_none_or(|d| d >= 3), "{}: r has degree < 3", case.name);
        ensure!(r.terms().iter().all(|(k, _)| k.form_degree() == 1), "{}: r is not a 1-form", case.name);
        let res = setup.equation_residual();
        ensure!(res.is_zero(), "{}: equation residual {res}", case.name);
        let mut g = rng(3);
        for i in 0..10 {
            let a = random_weyl(&mut g, setup.ctx(), 4);
            let d2 = setup.flatness_residual(&a);
            ensure!(d2.is_zero(), "{}: D^2 a != 0 for sample {i}: {d2}", case.name);
        }
    }
    Ok(format!("equation, normalisation and D^2 = 0 (10 samples) on {} setups", cases.len()))
}

fn quantization() -> Check {
    let ch = t2();
    let hams = [
        F::cos_x(ch, 0),
        F::cos_x(ch, 1),
        F::sin(ch, &[1, 1]),
        F::cos(ch, &[1, -1]),
        F::sin_x(ch, 0).add(&F::cos(ch, &[0, 2]).scale(&q(1, 2))),
    ];
    let cases = matrix(7);
    for case in &cases {
        let setup = case.bg.setup_at(&case.f).map_err(err)?;
        let ctx = setup.ctx();
        let n = setup.nu_order();
        let mut r = rng(4);
        for _ in 0..5 {
            let f = series(random_trig(&mut r, ch, 3, 2), n);
            let qf = setup.quantize(&f);
            ensure!(qf.sigma().truncate(n) == f, "{}: sigma(Q F) != F", case.name);
            let d = setup.d_flat(&qf).up_to_degree(ctx.max_degree - 2);
            ensure!(d.is_zero(), "{}: D(Q F) = {d}", case.name);
        }
        for h in &hams {
            let closed = q_closed_form(&case.bg, &setup, &case.f, h).map_err(err)?;
            let diff = setup.quantize_fn(h).sub(&closed).up_to_degree(ctx.max_degree - 2);
            ensure!(diff.is_zero(), "{}: closed form of Q({h}) off by {diff}", case.name);
        }
    }
    Ok(format!("sigma Q = id, D Q = 0 and closed form of Q(H) for 5 Hamiltonians on {} setups", cases.len()))
}

fn pi_nabla_checks() -> Check {
    let ch = t2();
    let e = F::gen(ch, Gen::Eps, 1);
    let fs = [("shear", shear(ch)), ("shear2", DiffeoFamily::new(vec![e.mul(&F::sin_x(ch, 1)).scale(&q(1, 2)), F::zero(ch)]).map_err(err)?)];
    let flows = [
        ("flow sin(x1)", DiffeoFamily::hamiltonian_flow(&F::sin_x(ch, 0), Gen::Tau, 1)),
        ("flow cos(x1+x2)", DiffeoFamily::hamiltonian_flow(&F::cos(ch, &[1, 1]), Gen::Tau, 1)),
    ];
    let nablas = [("flat", Connection::flat(ch)), ("curved", s111(ch, F::cos_x(ch, 1).scale(&q(1, 4))))];
    let mut count = 0;
    for (nn, nabla) in &nablas {
        for (fnm, f) in &fs {
            let a = lowered_difference(&nabla.pullback(f), nabla);
            let b = lowered_difference(&pi_nabla(f, nabla), nabla);
            for x in 0..2 {
                for y in 0..2 {
                    for z in 0..2 {
                        let cyc = a.get(x, y, z).add(a.get(y, z, x)).add(a.get(z, x, y)).scale(&q(1, 3));
                        ensure!(b.get(x, y, z) == &cyc, "{nn}, {fnm}: B({x},{y},{z}) is not the cyclic sum");
                    }
                }
            }
            ensure!(pi_nabla(f, nabla).is_symplectic(), "{nn}, {fnm}: result not symplectic");
            for (pn, phi) in &flows {
                let lhs = pi_nabla(&f.compose(phi), nabla);
                let rhs = pi_nabla(f, nabla).pullback(phi);
                ensure!(lhs == rhs, "{nn}, {fnm}, {pn}: equivariance fails");
                count += 1;
            }
        }
    }
    Ok(format!("cyclic formula and equivariance on {count} (nabla, f, phi) combinations"))
}

fn transport_checks() -> Check {
    let ch = t2();
    let ctx = WeylContext::new(ch, 7);
    let curved = s111(ch, F::cos_x(ch, 1).scale(&q(1, 4)));
    let mut s = SymTensor3::zero(ch);
    s.set(0, 1, 1, F::sin_x(ch, 0));
    let bg = Background::new(ctx, curved.clone(), chi_wavy(ch)).map_err(err)?;
    let paths = [
        ("connection segment", GeometryPath::connection_segment(&curved, &s, chi_wavy(ch), 1).map_err(err)?),
        (
            "exact deformation",
            GeometryPath::exact_deformation(Connection::flat(ch), &chi_omega(ch), DifferentialForm::from_terms(ch, 1, vec![(0b01, F::sin_x(ch, 1))]), 1)
                .map_err(err)?,
        ),
        ("flow of sin(x1) d2 from the shear", GeometryPath::left_flow(&bg, &shear(ch), &VectorField::new(vec![F::zero(ch), F::sin_x(ch, 0)]), 1).map_err(err)?),
    ];
    let mut r = rng(6);
    for (name, path) in &paths {
        let tr = build_transport(ctx, path).map_err(err)?;
        ensure!(tr.v.jet_coeff(Gen::T, 0) == WeylElement::one(ctx), "{name}: v_0 != 1");
        ensure!(tr.initial_residual().is_zero(), "{name}: v_0 != 1");
        let (a, b) = tr.inverse_residual();
        ensure!(a.is_zero() && b.is_zero(), "{name}: v v^-1 != 1");
        for i in 0..3 {
            let f = series(random_trig(&mut r, ch, 2, 2), 2);
            let g = series(random_trig(&mut r, ch, 2, 2), 2);
            let res = tr.intertwining_residual(&f, &g);
            ensure!(res.is_zero(), "{name}: intertwining pair {i} residual {res}");
        }
    }
    let flat_bg = Background::new(ctx, Connection::flat(ch), DifferentialForm::zero(ch, 2)).map_err(err)?;
    for (bgn, b) in [("flat, Omega = 0", &flat_bg), ("curved, chi = 1+cos(x2)/2", &bg)] {
        for h in [F::cos_x(ch, 0), F::sin(ch, &[1, 1])] {
            let res = ham_automorphism_residual(b, &h, &series(F::cos_x(ch, 1), 2)).map_err(err)?;
            ensure!(res.is_zero(), "{bgn}: Hamiltonian ODE residual for {h}: {res}");
        }
    }
    Ok("intertwining on 3 paths, v_0 = 1, Hamiltonian ODE residual 0 for 2 Hamiltonians on 2 backgrounds".into())
}

fn pairs(ch: Chart) -> Vec<(String, VectorField, VectorField)> {
    let fs = fields(ch);
    let mut out = Vec::new();
    for i in 0..fs.len() {
        for j in i + 1..fs.len() {
            out.push((format!("({}, {})", fs[i].0, fs[j].0), fs[i].1.clone(), fs[j].1.clone()));
        }
    }
    out
}

fn curvature_checks() -> Check {
    let cases = matrix(7);
    let mut count = 0;
    for case in &cases {
        let ch = case.bg.chart();
        for (pn, y, z) in pairs(ch) {
            let cd = curvature_r(&case.bg, &case.f, &y, &z).map_err(err)?;
            let n = cd.setup_f.nu_order();
            let fs = series(F::cos(ch, &[1, 1]), n);
            ensure!(cd.connection_commutator(&fs) == cd.curvature_action(&fs), "{} {pn}: commutator of connections != curvature action", case.name);
            let dr = cd.flatness_residual();
            ensure!(dr.is_zero(), "{} {pn}: DR = {dr}", case.name);
            let sig = cd.sigma();
            let chi_yz = case.f.pull_fn(&case.bg.chi().eval2(y.comps(), z.comps()));
            ensure!(sig.coeff(0).is_zero() && sig.coeff(1) == &chi_yz.neg(), "{} {pn}: sigma(R) leading terms {sig}", case.name);
            count += 1;
        }
    }
    Ok(format!("(i)-(iii) on {count} (setup, Y, Z) combinations"))
}

fn trace_checks() -> Check {
    let ch = t2();
    let flat = FedosovSetup::new(WeylContext::new(ch, 9), Connection::flat(ch), DifferentialForm::zero(ch, 2)).map_err(err)?;
    let mut solver = TraceSolver::new(flat, 2).map_err(err)?;
    let d = trace_density(&mut solver, 8).map_err(err)?;
    ensure!(d.rho == series(F::one(ch), 2), "flat Omega = 0 density is {}", d.rho);
    let cases = matrix(9);
    let mut held_out = 0;
    for case in &cases {
        let setup = case.bg.setup_at(&case.f).map_err(err)?;
        let mut solver = TraceSolver::new(setup, 2).map_err(err)?;
        trace_density(&mut solver, 8).map_err(|e| format!("{}: {e}", case.name))?;
        let mut r = rng(8);
        for i in 0..30 {
            let f = random_trig(&mut r, ch, 2, 2);
            let g = random_trig(&mut r, ch, 2, 2);
            let res = solver.commutator_residual(&f, &g).map_err(err)?;
            ensure!(res.iter().all(|x| x.is_zero()), "{}: commutator {i} has trace {res:?}", case.name);
            held_out += 1;
        }
    }
    Ok(format!("density through nu^2 on {} setups, {held_out} held-out commutators, flat density = 1", cases.len()))
}

fn omega_tilde_checks() -> Check {
    let cases = matrix(7);
    let mut count = 0;
    for case in &cases {
        let ch = case.bg.chart();
        let setup = case.bg.setup_at(&case.f).map_err(err)?;
        let mut solver = TraceSolver::new(setup, 1).map_err(err)?;
        for (pn, y, z) in pairs(ch) {
            let cd = curvature_r(&case.bg, &case.f, &y, &z).map_err(err)?;
            let om = omega_tilde(&mut solver, &cd).map_err(err)?;
            let classical = omega_diff(&case.bg, &case.f, &y, &z).map_err(err)?;
            ensure!(om.power == classical.power && om.value.coeff(0) == &classical.value, "{} {pn}: nu^0 of Omega~ is {} vs {}", case.name, om.value.coeff(0), classical.value);
            count += 1;
        }
        let fs = fields(ch);
        let inv = omega_tilde_ham_invariance(&case.bg, &case.f, &F::sin_x(ch, 0), &fs[0].1, &fs[2].1, 0).map_err(err)?;
        ensure!(inv.is_zero(), "{}: Ham-invariance residual {inv}", case.name);
    }
    let ch = t2();
    let bg = Background::new(WeylContext::new(ch, 9), s111(ch, F::cos_x(ch, 1).scale(&q(1, 4))), chi_wavy(ch)).map_err(err)?;
    let fs = fields(ch);
    let inv = omega_tilde_ham_invariance(&bg, &shear(ch), &F::sin_x(ch, 0), &fs[0].1, &fs[2].1, 1).map_err(err)?;
    ensure!(inv.is_zero(), "curved shear: Ham-invariance residual through nu^1 {inv}");
    Ok(format!("nu^0 = Omega^Diff on {count} combinations; Ham-invariance at nu^0 on {} setups and nu^1 on the curved shear", cases.len()))
}

fn moment_checks(suite_start: Instant) -> Check {
    let cases = matrix(9);
    let mut count = 0;
    for case in &cases {
        let ch = case.bg.chart();
        let setup = case.bg.setup_at(&case.f).map_err(err)?;
        let mut solver = TraceSolver::new(setup, 2).map_err(err)?;
        for (hn, h) in hamiltonians(ch) {
            let mu = mu_tilde(&mut solver, &h).map_err(err)?;
            let don = donaldson(&case.bg, &case.f, &h).map_err(err)?;
            ensure!(mu.value.coeff(0) == &don.value, "{} H={hn}: nu^0 of mu~ is {} vs Donaldson {}", case.name, mu.value.coeff(0), don.value);
            for (yn, y) in fields(ch) {
                let rep = moment_residual(&case.bg, &case.f, &h, &y, 1).map_err(err)?;
                ensure!(rep.residual.is_zero(), "{} H={hn} Y={yn}: moment residual {}", case.name, rep.residual);
                ensure!(rep.variation_residual.is_zero(), "{} H={hn} Y={yn}: variation cross-check {}", case.name, rep.variation_residual);
                count += 1;
            }
        }
        let eq = mu_equivariance_residual(&case.bg.with_context(WeylContext::new(ch, 7)), &case.f, &F::cos_x(ch, 1), &F::sin_x(ch, 0), 0).map_err(err)?;
        ensure!(eq.is_zero(), "{}: equivariance residual {eq}", case.name);
    }
    let ch = t2();
    let bg = Background::new(WeylContext::new(ch, 9), s111(ch, F::cos_x(ch, 1).scale(&q(1, 4))), chi_wavy(ch)).map_err(err)?;
    let eq = mu_equivariance_residual(&bg, &shear(ch), &F::cos(ch, &[1, 1]), &F::sin_x(ch, 0), 1).map_err(err)?;
    ensure!(eq.is_zero(), "curved shear: equivariance residual through nu^1 {eq}");
    let total = suite_start.elapsed();
    ensure!(total < Duration::from_secs(15 * 60), "suite took {total:?}");
    Ok(format!("Donaldson leading term, equivariance, moment equation at nu^0 and nu^1 on {count} combinations; suite so far {:.0} s", total.as_secs_f64()))
}

fn refinement_stability() -> Check {
    let lo = matrix(7);
    let hi = matrix(9);
    for (a, b) in lo.iter().zip(&hi) {
        let sa = a.bg.setup_at(&a.f).map_err(err)?;
        let sb = b.bg.setup_at(&b.f).map_err(err)?;
        let ch = sa.ctx().chart;
        let n = sa.nu_order();
        let mut r = rng(11);
        for _ in 0..3 {
            let f = random_trig(&mut r, ch, 2, 2);
            let g = random_trig(&mut r, ch, 2, 2);
            ensure!(sa.star_fn(&f, &g) == sb.star_fn(&f, &g).truncate(n), "{}: star changes under K -> K+2", a.name);
        }
        let fs = fields(ch);
        let ra = curvature_r(&a.bg, &a.f, &fs[0].1, &fs[2].1).map_err(err)?.sigma();
        let rb = curvature_r(&b.bg, &b.f, &fs[0].1, &fs[2].1).map_err(err)?.sigma();
        let k = ra.order().min(n);
        ensure!(ra.truncate(k) == rb.truncate(k), "{}: sigma(R) changes under K -> K+2", a.name);
        let mut ta = TraceSolver::new(sa, 1).map_err(err)?;
        let mut tb = TraceSolver::new(sb, 1).map_err(err)?;
        let da = trace_density(&mut ta, 8).map_err(err)?;
        let db = trace_density(&mut tb, 8).map_err(err)?;
        ensure!(da.rho == db.rho, "{}: trace density changes under K -> K+2", a.name);
    }
    Ok(format!("star, sigma(R) and trace density unchanged from K = 7 to 9 on {} setups", lo.len()))
}

fn main() {
    let start = Instant::now();
    let criteria: Vec<(&str, Option<Duration>, Box<dyn Fn() -> Check>)> = vec![
        ("Moyal recovery for flat nabla, Omega = 0", Some(Duration::from_secs(10)), Box::new(moyal_recovery)),
        ("associativity through nu^2", None, Box::new(associativity)),
        ("Fedosov equation and flatness", None, Box::new(fedosov_equation)),
        ("quantization map and closed form of Q(H)", None, Box::new(quantization)),
        ("pi_nabla cyclic formula and equivariance", None, Box::new(pi_nabla_checks)),
        ("transport and Hamiltonian automorphisms", None, Box::new(transport_checks)),
        ("curvature of the formal connection", None, Box::new(curvature_checks)),
        ("trace density", None, Box::new(trace_checks)),
        ("deformed 2-form leading term and invariance", None, Box::new(omega_tilde_checks)),
        ("formal moment map", None, Box::new(move || moment_checks(start))),
        ("stability under K -> K+2", None, Box::new(refinement_stability)),
    ];
    let mut failed = 0;
    for (i, (title, limit, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let dt = t0.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(l)) if dt > *l => Err(format!("took {dt:?}, limit {l:?}")),
            (o, _) => o,
        };
        let n = i + 1;
        match outcome {
            Ok(msg) => println!("PASS [{n:>2}] {title}: {msg} ({:.2} s)", dt.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL [{n:>2}] {title}: {msg} ({:.2} s)", dt.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed in {:.1} s", criteria.len() - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Verification suites and the runner that executes them against a scenario.

use std::cell::OnceCell;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;
use std::time::Instant;

use fedosov_core::geometry::{lambda_entry, lowered_difference, pi_nabla};
use fedosov_core::series::NuSeries;
use fedosov_core::trace::{
    donaldson, moment_residual, mu_equivariance_residual, mu_tilde, omega_diff, omega_tilde, omega_tilde_ham_invariance,
    positivity_certificate, trace_density, TraceError, TraceSolver,
};
use fedosov_core::transport::{build_transport, curvature_r, ham_automorphism_residual, Background, GeometryPath};
use fedosov_core::{
    Chart, ChartFunction as F, Connection, DiffeoFamily, DifferentialForm, FedosovSetup, FnSeries, Gen, Mode, Rational,
    VectorField, WKey, WeylContext, WeylElement,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::{parse_expression, Parsed};
use crate::report::{CheckRecord, Report, SeriesRecord};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Suite {
    Chart,
    Geometry,
    Weyl,
    MoyalFlat,
    Fedosov,
    Associativity,
    Transport,
    Curvature,
    TraceDensity,
    OmegaTilde,
    MomentMap,
    Refinement,
}

impl Suite {
    /// Every suite, in dependency order.
    pub const ALL: [Suite; 12] = [
        Suite::Chart,
        Suite::Geometry,
        Suite::Weyl,
        Suite::MoyalFlat,
        Suite::Fedosov,
        Suite::Associativity,
        Suite::Transport,
        Suite::Curvature,
        Suite::TraceDensity,
        Suite::OmegaTilde,
        Suite::MomentMap,
        Suite::Refinement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Chart => "chart",
            Suite::Geometry => "geometry",
            Suite::Weyl => "weyl",
            Suite::MoyalFlat => "moyal-flat",
            Suite::Fedosov => "fedosov",
            Suite::Associativity => "associativity",
            Suite::Transport => "transport",
            Suite::Curvature => "curvature",
            Suite::TraceDensity => "trace-density",
            Suite::OmegaTilde => "omega-tilde",
            Suite::MomentMap => "moment-map",
            Suite::Refinement => "refinement",
        }
    }

    /// Resolve a list of names, expanding `all`, into dependency order without repeats.
    pub fn resolve<S: AsRef<str>>(names: &[S]) -> Result<Vec<Suite>, String> {
        let mut out = Vec::new();
        for n in names {
            if n.as_ref() == "all" {
                out.extend(Suite::ALL);
            } else {
                out.push(n.as_ref().parse()?);
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            let names: Vec<_> = Suite::ALL.iter().map(|x| x.name()).collect();
            format!("unknown suite \"{s}\"; expected one of {} or all", names.join(", "))
        })
    }
}

fn rng_for(seed: u64, suite: Suite) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ suite as u64)
}

/// Random trig polynomial on a torus, random polynomial of degree <= 3 on an affine chart.
pub fn random_function(rng: &mut ChaCha8Rng, ch: Chart, terms: usize) -> F {
    let mut out = F::zero(ch);
    for _ in 0..terms {
        let c = Rational::new(rng.gen_range(-3..=3), rng.gen_range(1..=3));
        let basis = match ch.mode {
            Mode::Torus => {
                let k: Vec<i64> = (0..ch.dim()).map(|_| rng.gen_range(-2..=2)).collect();
                if rng.gen_bool(0.5) {
                    F::cos(ch, &k)
                } else {
                    F::sin(ch, &k)
                }
            }
            Mode::Affine => {
                let mut alpha = vec![0i64; ch.dim()];
                for _ in 0..rng.gen_range(0..=3) {
                    alpha[rng.gen_range(0..ch.dim())] += 1;
                }
                F::monomial(ch, &alpha)
            }
        };
        out = out.add(&basis.scale(&c));
    }
    out
}

fn random_weyl(rng: &mut ChaCha8Rng, ctx: WeylContext, terms: usize) -> WeylElement {
    let ch = ctx.chart;
    let mut out = Vec::new();
    for _ in 0..terms {
        let mut y = [0u8; 6];
        for e in y.iter_mut().take(ch.dim()) {
            *e = rng.gen_range(0..=2);
        }
        let form = rng.gen_range(0..(1u16 << ch.dim())) as u8;
        let key = WKey { nu: rng.gen_range(0..=1), y, form };
        if key.degree() <= ctx.max_degree {
            out.push((key, random_function(rng, ch, 2)));
        }
    }
    WeylElement::from_terms(ctx, out)
}

/// Moyal product through `nu^order`, summed directly from the bidifferential
/// operator `(nu/2)^k / k! Lambda^{i1 j1} ... Lambda^{ik jk} d_I f d_J g`.
pub fn moyal(f: &F, g: &F, order: i32) -> FnSeries {
    let ch = f.chart();
    fn pk(f: &F, g: &F, k: i32, ch: Chart) -> F {
        if k == 0 {
            return f.mul(g);
        }
        let mut acc = F::zero(ch);
        for i in 0..ch.dim() {
            for j in 0..ch.dim() {
                let l = lambda_entry(ch.m as usize, i, j);
                if l != 0 {
                    acc = acc.add(&pk(&f.d(i), &g.d(j), k - 1, ch).scale_int(l));
                }
            }
        }
        acc
    }
    let mut out = NuSeries::zero_fn(ch, 0, order);
    let mut denom = 1i64;
    for k in 0..=order {
        if k > 0 {
            denom *= 2 * k as i64;
        }
        out.set(k, pk(f, g, k, ch).scale(&Rational::new(1, denom)));
    }
    out
}

/// Lazily built objects shared across suites.
pub struct Runner<'a> {
    sc: &'a Scenario,
    timings: bool,
    background: OnceCell<Result<Background<Rational>, String>>,
    setup: OnceCell<Result<FedosovSetup, String>>,
}

type Records = Vec<CheckRecord>;

fn series(f: &F, n: i32) -> FnSeries {
    NuSeries::function(f.clone(), n)
}

fn fail_all(suite: Suite, what: &str, e: &str) -> Records {
    vec![CheckRecord::new(suite.name(), what).error(e.to_string())]
}

impl<'a> Runner<'a> {
    pub fn new(sc: &'a Scenario, timings: bool) -> Self {
        Runner { sc, timings, background: OnceCell::new(), setup: OnceCell::new() }
    }

    fn ctx(&self) -> WeylContext {
        WeylContext::new(self.sc.chart, self.sc.weyl_degree)
    }

    fn n(&self) -> i32 {
        self.sc.nu_order
    }

    fn background(&self) -> Result<&Background<Rational>, String> {
        self.background
            .get_or_init(|| {
                Background::new(self.ctx(), self.sc.connection.clone(), self.sc.chi.value.clone())
                    .map_err(|e| format!("building the Fedosov setup: {e}"))
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn setup(&self) -> Result<&FedosovSetup, String> {
        self.setup
            .get_or_init(|| {
                let bg = self.background()?;
                bg.setup_at(&self.sc.diffeo).map_err(|e| format!("building the setup at f: {e}"))
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Scenario functions followed by random ones, `count` in total.
    fn sample_functions(&self, rng: &mut ChaCha8Rng, count: usize) -> Vec<(String, F)> {
        let mut out: Vec<(String, F)> = self.sc.functions.iter().map(|n| (n.source.clone(), n.value.clone())).collect();
        while out.len() < count {
            let f = random_function(rng, self.sc.chart, 2);
            out.push((f.to_string(), f));
        }
        out
    }

    fn field_pairs(&self) -> Vec<(&str, &VectorField, &str, &VectorField)> {
        let fs = &self.sc.fields;
        let mut out = Vec::new();
        for i in 0..fs.len() {
            for j in i + 1..fs.len() {
                out.push((fs[i].source.as_str(), &fs[i].value, fs[j].source.as_str(), &fs[j].value));
            }
        }
        out
    }

    fn require_torus_m1(&self, suite: Suite) -> Option<Records> {
        if self.sc.chart.mode != Mode::Torus || self.sc.chart.m != 1 {
            return Some(vec![CheckRecord::new(suite.name(), "precondition")
                .input("chart", format!("{} m={}", self.sc.chart.mode, self.sc.chart.m))
                .error("trace densities are implemented on the 2-torus only (mode = \"torus\", m = 1)")]);
        }
        None
    }

    pub fn run_suite(&self, suite: Suite) -> Records {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| match suite {
            Suite::Chart => self.chart(),
            Suite::Geometry => self.geometry(),
            Suite::Weyl => self.weyl(),
            Suite::MoyalFlat => self.moyal_flat(),
            Suite::Fedosov => self.fedosov(),
            Suite::Associativity => self.associativity(),
            Suite::Transport => self.transport(),
            Suite::Curvature => self.curvature(),
            Suite::TraceDensity => self.trace_density(),
            Suite::OmegaTilde => self.omega_tilde(),
            Suite::MomentMap => self.moment_map(),
            Suite::Refinement => self.refinement(),
        }));
        let mut records = outcome.unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            fail_all(suite, "internal error", &format!("panicked: {msg}"))
        });
        if self.timings {
            let ms = t0.elapsed().as_millis() as u64;
            if let Some(first) = records.first_mut() {
                first.wall_ms = Some(ms);
            }
        }
        records
    }

    fn chart(&self) -> Records {
        let s = Suite::Chart.name();
        let ctx = self.sc.parse_context();
        let mut out = Vec::new();
        let mut objects: Vec<(String, String, Parsed)> = vec![(
            "chi".into(),
            self.sc.chi.source.clone(),
            Parsed::Form(self.sc.chi.value.clone()),
        )];
        for (i, h) in self.sc.hamiltonians.iter().enumerate() {
            objects.push((format!("hamiltonians[{i}]"), h.source.clone(), Parsed::Function(h.value.clone())));
        }
        for (i, y) in self.sc.fields.iter().enumerate() {
            objects.push((format!("fields[{i}]"), y.source.clone(), Parsed::VectorField(y.value.clone())));
        }
        for (i, f) in self.sc.functions.iter().enumerate() {
            objects.push((format!("functions[{i}]"), f.source.clone(), Parsed::Function(f.value.clone())));
        }
        for (key, src, obj) in objects {
            let printed = match &obj {
                Parsed::Function(f) => f.to_string(),
                Parsed::Form(w) => w.to_string(),
                Parsed::VectorField(v) => v.to_string(),
            };
            let back = parse_expression(&printed, ctx);
            let rec = CheckRecord::new(s, format!("print/parse round trip of {key}")).input("source", &src).input("canonical", &printed);
            out.push(match back {
                Ok(b) => rec.require(b == obj, "reparsed value differs"),
                Err(e) => rec.error(e.to_string()),
            });
        }
        let ch = self.sc.chart;
        let mut rng = rng_for(self.sc.seed, Suite::Chart);
        let mut bad = Vec::new();
        for i in 0..5 {
            let f = random_function(&mut rng, ch, 3);
            let g = random_function(&mut rng, ch, 3);
            let h = random_function(&mut rng, ch, 3);
            if f.mul(&g).mul(&h) != f.mul(&g.mul(&h)) || f.mul(&g) != g.mul(&f) {
                bad.push(format!("product sample {i}"));
            }
            for k in 0..ch.dim() {
                if f.mul(&g).d(k) != f.d(k).mul(&g).add(&f.mul(&g.d(k))) {
                    bad.push(format!("Leibniz sample {i}, d{}", k + 1));
                }
            }
            let jac = f.poisson(&g.poisson(&h)).add(&g.poisson(&h.poisson(&f))).add(&h.poisson(&f.poisson(&g)));
            if !jac.is_zero() {
                bad.push(format!("Jacobi sample {i}"));
            }
        }
        out.push(
            CheckRecord::new(s, "function algebra: associativity, Leibniz rule, Poisson Jacobi identity")
                .input("samples", 5)
                .require(bad.is_empty(), bad.join(", ")),
        );
        out
    }

    fn geometry(&self) -> Records {
        let s = Suite::Geometry.name();
        let nabla = &self.sc.connection;
        let f = &self.sc.diffeo;
        let mut out = vec![CheckRecord::new(s, "connection is symplectic").require(nabla.is_symplectic(), "nabla omega != 0")];
        let a = lowered_difference(&nabla.pullback(f), nabla);
        let pi = pi_nabla(f, nabla);
        let b = lowered_difference(&pi, nabla);
        let d = self.sc.chart.dim();
        let third = Rational::new(1, 3);
        let mut bad = Vec::new();
        for x in 0..d {
            for y in 0..d {
                for z in 0..d {
                    let cyc = a.get(x, y, z).add(a.get(y, z, x)).add(a.get(z, x, y)).scale(&third);
                    if b.get(x, y, z) != &cyc {
                        bad.push(format!("({},{},{})", x + 1, y + 1, z + 1));
                    }
                }
            }
        }
        out.push(
            CheckRecord::new(s, "pi_nabla(f) - nabla is the cyclic symmetrization of f^* nabla - nabla")
                .input("f", f.displacement().iter().map(|u| u.to_string()).collect::<Vec<_>>().join(", "))
                .require(bad.is_empty(), format!("mismatched components {}", bad.join(" "))),
        );
        out.push(CheckRecord::new(s, "pi_nabla(f) is symplectic").require(pi.is_symplectic(), "pi_nabla(f) omega != 0"));
        for h in &self.sc.hamiltonians {
            let phi = DiffeoFamily::hamiltonian_flow(&h.value, Gen::Tau, 1);
            let lhs = pi_nabla(&f.compose(&phi), nabla);
            let rhs = pi.pullback(&phi);
            out.push(
                CheckRecord::new(s, "equivariance pi_nabla(f o phi) = phi^* pi_nabla(f) along a Hamiltonian flow")
                    .input("H", &h.source)
                    .require(lhs == rhs, "the two connections differ"),
            );
            let pulled = nabla.pullback(f).pullback(&phi);
            out.push(
                CheckRecord::new(s, "pullback is contravariant: (f o phi)^* nabla = phi^* f^* nabla")
                    .input("H", &h.source)
                    .require(pulled == nabla.pullback(&f.compose(&phi)), "the two connections differ"),
            );
        }
        out
    }

    fn weyl(&self) -> Records {
        let s = Suite::Weyl.name();
        let ctx = self.ctx();
        let mut rng = rng_for(self.sc.seed, Suite::Weyl);
        let mut assoc = Vec::new();
        let mut hodge = Vec::new();
        for i in 0..3 {
            let a = random_weyl(&mut rng, ctx, 3);
            let b = random_weyl(&mut rng, ctx, 3);
            let c = random_weyl(&mut rng, ctx, 3);
            if a.circ(&b).circ(&c) != a.circ(&b.circ(&c)) {
                assoc.push(i.to_string());
            }
            // delta^{-1} raises the degree, so the top degree is excluded
            let k = ctx.max_degree - 1;
            let rhs = a.a00().add(&a.delta().delta_inv()).add(&a.delta_inv().delta());
            if a.up_to_degree(k) != rhs.up_to_degree(k) || !a.delta().delta().is_zero() || !a.delta_inv().delta_inv().is_zero() {
                hodge.push(i.to_string());
            }
        }
        vec![
            CheckRecord::new(s, "fiberwise product is associative").input("samples", 3).require(assoc.is_empty(), format!("samples {}", assoc.join(", "))),
            CheckRecord::new(s, "Hodge decomposition a = a00 + delta delta^-1 a + delta^-1 delta a, delta^2 = 0")
                .input("samples", 3)
                .require(hodge.is_empty(), format!("samples {}", hodge.join(", "))),
        ]
    }

    fn moyal_flat(&self) -> Records {
        let s = Suite::MoyalFlat.name();
        let ch = self.sc.chart;
        let setup = match FedosovSetup::new(self.ctx(), Connection::flat(ch), DifferentialForm::zero(ch, 2)) {
            Ok(x) => x,
            Err(e) => return fail_all(Suite::MoyalFlat, "flat setup", &e.to_string()),
        };
        let mut out = vec![CheckRecord::new(s, "r vanishes for the flat connection with Omega = 0").require(setup.r().is_zero(), setup.r().to_string())];
        let n = self.n();
        let mut rng = rng_for(self.sc.seed, Suite::MoyalFlat);
        let fs = self.sample_functions(&mut rng, 6);
        for pair in fs.chunks(2).filter(|c| c.len() == 2) {
            let (fnm, f) = &pair[0];
            let (gnm, g) = &pair[1];
            let star = setup.star_fn(f, g).truncate(n);
            let m = moyal(f, g, n);
            let diff = star.sub(&m);
            out.push(
                CheckRecord::new(s, "star product equals the Moyal product")
                    .input("F", fnm)
                    .input("G", gnm)
                    .series(SeriesRecord::new("F*G", &star))
                    .residual(diff.is_zero(), &diff),
            );
        }
        out
    }

    fn fedosov(&self) -> Records {
        let s = Suite::Fedosov.name();
        let setup = match self.setup() {
            Ok(x) => x,
            Err(e) => return fail_all(Suite::Fedosov, "setup", &e),
        };
        let ctx = setup.ctx();
        let r = setup.r();
        let low = r.up_to_degree(4);
        let mut out = vec![
            CheckRecord::new(s, "r is normalized: delta^-1 r = 0, degree >= 3, 1-form")
                .input("r up to degree 4", &low)
                .require(r.delta_inv().is_zero(), "delta^-1 r != 0")
                .require(r.min_degree().is_none_or(|d| d >= 3), "r has a term of degree < 3")
                .require(r.terms().iter().all(|(k, _)| k.form_degree() == 1), "r is not a 1-form"),
        ];
        let res = setup.equation_residual();
        out.push(CheckRecord::new(s, "Fedosov equation residual").residual(res.is_zero(), &res));
        let mut rng = rng_for(self.sc.seed, Suite::Fedosov);
        let mut bad = Vec::new();
        for i in 0..5 {
            let a = random_weyl(&mut rng, ctx, 4);
            if !setup.flatness_residual(&a).is_zero() {
                bad.push(i.to_string());
            }
        }
        out.push(CheckRecord::new(s, "D^2 a = 0 on random sections").input("samples", 5).require(bad.is_empty(), format!("samples {}", bad.join(", "))));
        let n = setup.nu_order();
        let mut inputs: Vec<(String, F)> = self.sc.hamiltonians.iter().map(|h| (h.source.clone(), h.value.clone())).collect();
        inputs.extend(self.sample_functions(&mut rng, 2));
        for (name, f) in inputs {
            let fs = series(&f, n);
            let qf = setup.quantize(&fs);
            let sig = qf.sigma().truncate(n).sub(&fs);
            let d = setup.d_flat(&qf).up_to_degree(ctx.max_degree - 2);
            out.push(
                CheckRecord::new(s, "sigma(Q F) = F and D(Q F) = 0")
                    .input("F", name)
                    .require(sig.is_zero(), format!("sigma(Q F) - F = {sig}"))
                    .require(d.is_zero(), format!("D(Q F) = {d}")),
            );
        }
        out
    }

    fn associativity(&self) -> Records {
        let s = Suite::Associativity.name();
        let setup = match self.setup() {
            Ok(x) => x,
            Err(e) => return fail_all(Suite::Associativity, "setup", &e),
        };
        let n = self.n();
        let mut rng = rng_for(self.sc.seed, Suite::Associativity);
        let fs = self.sample_functions(&mut rng, 9);
        let mut out = Vec::new();
        for t in fs.chunks(3).filter(|c| c.len() == 3) {
            let [a, b, c] = [&t[0], &t[1], &t[2]].map(|(_, f)| series(f, n));
            let lhs = setup.star(&setup.star(&a, &b), &c).truncate(n);
            let rhs = setup.star(&a, &setup.star(&b, &c)).truncate(n);
            let diff = lhs.sub(&rhs);
            out.push(
                CheckRecord::new(s, "(F*G)*H = F*(G*H)")
                    .input("F", &t[0].0)
                    .input("G", &t[1].0)
                    .input("H", &t[2].0)
                    .residual(diff.is_zero(), &diff),
            );
        }
        out
    }

    fn transport(&self) -> Records {
        let s = Suite::Transport.name();
        let bg = match self.background() {
            Ok(x) => x,
            Err(e) => return fail_all(Suite::Transport, "background", &e),
        };
        let ctx = self.ctx();
        let n = self.n();
        let mut rng = rng_for(self.sc.seed, Suite::Transport);
        let mut out = Vec::new();
        for y in &self.sc.fields {
            let rec = CheckRecord::new(s, "transport along the flow of Y from f: v_0 = 1, invertible, intertwines star products").input("Y", &y.source);
            let tr = GeometryPath::left_flow(bg, &self.sc.diffeo, &y.value, 1).and_then(|p| build_transport(ctx, &p));
            let tr = match tr {
                Ok(t) => t,
                Err(e) => {
                    out.push(rec.error(e.to_string()));
                    continue;
                }
            };
            let (a, b) = tr.inverse_residual();
            let mut rec = rec
                .require(tr.v.jet_coeff(Gen::T, 0) == WeylElement::one(ctx), "v_0 != 1")
                .require(tr.initial_residual().is_zero(), "initial value residual != 0")
                .require(a.is_zero() && b.is_zero(), "v v^-1 != 1");
            for i in 0..2 {
                let f = series(&random_function(&mut rng, self.sc.chart, 2), n);
                let g = series(&random_function(&mut rng, self.sc.chart, 2), n);
                let res = tr.intertwining_residual(&f, &g);
                rec = rec.require(res.is_zero(), format!("intertwining sample {i}: {res}"));
            }
            out.push(rec);
        }
        for h in &self.sc.hamiltonians {
            let f = series(&random_function(&mut rng, self.sc.chart, 2), n);
            let rec = CheckRecord::new(s, "Hamiltonian flows act by automorphisms: ODE residual").input("H", &h.source).input("F", f.coeff(0));
            out.push(match ham_automorphism_residual(bg, &h.value, &f) {
                Ok(res) => rec.residual(res.is_zero(), &res),
                Err(e) => rec.error(e.to_string()),
            });
        }
        out
    }

    fn curvature(&self) -> Records {
        let s = Suite::Curvature.name();
        let bg = match self.background() {
            Ok(x) => x,
            Err(e) => return fail_all(Suite::Curvature, "background", &e),
        };
        let ch = self.sc.chart;
        let mut rng = rng_for(self.sc.seed, Suite::Curvature);
        let mut out = Vec::new();
        for (yn, y, zn, z) in self.field_pairs() {
            let rec = CheckRecord::new(s, "curvature R(Y, Z): commutator of connections, DR = 0, leading term -nu f^* chi(Y, Z)")
                .input("Y", yn)
                .input("Z", zn);
            let cd = match curvature_r(bg, &self.sc.diffeo, y, z) {
                Ok(c) => c,
                Err(e) => {
                    out.push(rec.error(e.to_string()));
                    continue;
                }
            };
            let n = cd.setup_f.nu_order();
            let sample = series(&random_function(&mut rng, ch, 2), n);
            let sig = cd.sigma();
            let chi_yz = self.sc.diffeo.pull_fn(&bg.chi().eval2(y.comps(), z.comps()));
            let dr = cd.flatness_residual();
            out.push(
                rec.series(SeriesRecord::through("sigma(R)", &sig, self.n()))
                    .require(cd.connection_commutator(&sample) == cd.curvature_action(&sample), "commutator of connections != curvature action")
                    .require(dr.is_zero(), format!("DR = {dr}"))
                    .require(sig.coeff(0).is_zero() && sig.coeff(1) == &chi_yz.neg(), format!("sigma(R) leading terms {sig}")),
            );
        }
        out
    }

    fn trace_solver(&self, order: i32) -> Result<TraceSolver<Rational>, String> {
        let setup = self.setup()?;
        TraceSolver::new(setup.clone(), order).map_err(|e| e.to_string())
    }

    fn density_order(&self) -> i32 {
        (self.n() - 1).max(0)
    }

    fn trace_density(&self) -> Records {
        let s = Suite::TraceDensity.name();
        if let Some(r) = self.require_torus_m1(Suite::TraceDensity) {
            return r;
        }
        let mut out = vec![match positivity_certificate(&self.sc.chi.value) {
            Ok(()) => CheckRecord::new(s, "chi is certified nondegenerate").input("chi", &self.sc.chi.source),
            Err(e) => CheckRecord::new(s, "chi is certified nondegenerate").input("chi", &self.sc.chi.source).require(false, e.to_string()),
        }];
        let order = self.density_order();
        let mut solver = match self.trace_solver(order) {
            Ok(x) => x,
            Err(e) => return fail_all(Suite::TraceDensity, "trace solver", &e),
        };
        let rec = CheckRecord::new(s, "trace density solves every trace constraint in its Fourier box");
        match trace_density(&mut solver, 8) {
            Ok(d) => out.push(
                rec.input("fourier radius", d.radius)
                    .input("audited constraints", d.audited_constraints)
                    .series(SeriesRecord::new("rho", &d.rho)),
            ),
            Err(e) => {
                out.push(rec.error(e.to_string()));
                return out;
            }
        }
        let mut rng = rng_for(self.sc.seed, Suite::TraceDensity);
        let fs = self.sample_functions(&mut rng, 10);
        for p in fs.chunks(2).filter(|c| c.len() == 2) {
            let rec = CheckRecord::new(s, "trace of a star commutator vanishes").input("F", &p[0].0).input("G", &p[1].0);
            out.push(match solver.commutator_residual(&p[0].1, &p[1].1) {
                Ok(res) => {
                    let text: Vec<String> = res.iter().map(|x| x.to_string()).collect();
                    rec.residual(res.iter().all(|x| x.is_zero()), format!("[{}]", text.join(", ")))
                }
                Err(e) => rec.error(e.to_string()),
            });
        }
        out
    }

    fn omega_tilde(&self) -> Records {
        let s = Suite::OmegaTilde.name();
        if let Some(r) = self.require_torus_m1(Suite::OmegaTilde) {
            return r;
        }
        let bg = match self.background() {
            Ok(x) => x,
            Err(e) => return fail_all(Suite::OmegaTilde, "background", &e),
        };
        let mut solver = match self.trace_solver(self.density_order()) {
            Ok(x) => x,
            Err(e) => return fail_all(Suite::OmegaTilde, "trace solver", &e),
        };
        let f = &self.sc.diffeo;
        let mut out = Vec::new();
        for (yn, y, zn, z) in self.field_pairs() {
            let rec = CheckRecord::new(s, "leading term of Omega~(Y, Z) is Omega^Diff(Y, Z)").input("Y", yn).input("Z", zn);
            let r = curvature_r(bg, f, y, z)
                .map_err(|e| e.to_string())
                .and_then(|cd| omega_tilde(&mut solver, &cd).map_err(|e| e.to_string()))
                .and_then(|om| omega_diff(bg, f, y, z).map(|c| (om, c)).map_err(|e| e.to_string()));
            out.push(match r {
                Ok((om, classical)) => rec
                    .input("Omega^Diff", &classical)
                    .input("two-pi power", om.power)
                    .series(SeriesRecord::new("Omega~ / (2pi)^power", &om.value))
                    .require(om.power == classical.power && om.value.coeff(0) == &classical.value, format!("nu^0 coefficient {}", om.value.coeff(0))),
                Err(e) => rec.error(e),
            });
        }
        let pairs = self.field_pairs();
        if let Some((yn, y, zn, z)) = pairs.first() {
            for h in &self.sc.hamiltonians {
                let rec = CheckRecord::new(s, "Omega~ is invariant under Hamiltonian flows at nu^0").input("K", &h.source).input("Y", yn).input("Z", zn);
                out.push(match omega_tilde_ham_invariance(bg, f, &h.value, y, z, 0) {
                    Ok(res) => rec.residual(res.is_zero(), &res),
                    Err(e) => rec.error(e.to_string()),
                });
            }
        }
        out
    }

    fn moment_map(&self) -> Records {
        let s = Suite::MomentMap.name();
        if let Some(r) = self.require_torus_m1(Suite::MomentMap) {
            return r;
        }
        let bg = match self.background() {
            Ok(x) => x,
            Err(e) => return fail_all(Suite::MomentMap, "background", &e),
        };
        let mut solver = match self.trace_solver(self.density_order()) {
            Ok(x) => x,
            Err(e) => return fail_all(Suite::MomentMap, "trace solver", &e),
        };
        let f = &self.sc.diffeo;
        let hs = &self.sc.hamiltonians;
        let moment_order = self.n() - 2;
        let mut out = Vec::new();
        for (i, h) in hs.iter().enumerate() {
            let rec = CheckRecord::new(s, "leading term of mu~(H) is the Donaldson moment map").input("H", &h.source);
            let mu = match mu_tilde(&mut solver, &h.value) {
                Ok(mu) => mu,
                Err(TraceError::NonZeroMean(_)) => {
                    out.push(rec.error("precondition failed: H must have zero mean over the torus"));
                    continue;
                }
                Err(e) => {
                    out.push(rec.error(e.to_string()));
                    continue;
                }
            };
            out.push(match donaldson(bg, f, &h.value) {
                Ok(d) => rec
                    .input("Donaldson", &d)
                    .input("two-pi power", mu.power)
                    .series(SeriesRecord::new("mu~ / (2pi)^power", &mu.value))
                    .require(mu.power == d.power && mu.value.coeff(0) == &d.value, format!("nu^0 coefficient {}", mu.value.coeff(0))),
                Err(e) => rec.error(e.to_string()),
            });
            if moment_order >= 0 {
                for y in &self.sc.fields {
                    let rec = CheckRecord::new(s, "moment map equation Omega~(X_H, Y) = d mu~(H)(Y)")
                        .input("H", &h.source)
                        .input("Y", &y.source)
                        .input("through nu order", moment_order);
                    out.push(match moment_residual(bg, f, &h.value, &y.value, moment_order) {
                        Ok(rep) => rec
                            .series(SeriesRecord::new("Omega~(X_H, Y)", &rep.lhs))
                            .series(SeriesRecord::new("d mu~(H)(Y)", &rep.rhs))
                            .require(rep.variation_residual.is_zero(), format!("variation cross-check {}", rep.variation_residual))
                            .residual(rep.residual.is_zero(), &rep.residual),
                        Err(e) => rec.error(e.to_string()),
                    });
                }
            }
            let k = &hs[(i + 1) % hs.len()];
            let rec = CheckRecord::new(s, "mu~ is equivariant at nu^0").input("H", &h.source).input("K", &k.source);
            out.push(match mu_equivariance_residual(bg, f, &h.value, &k.value, 0) {
                Ok(res) => rec.residual(res.is_zero(), &res),
                Err(e) => rec.error(e.to_string()),
            });
        }
        if moment_order < 0 && !hs.is_empty() {
            out.push(
                CheckRecord::new(s, "moment map equation")
                    .input("nu_order", self.n())
                    .error("the moment map equation needs nu_order >= 2"),
            );
        }
        out
    }

    fn refinement(&self) -> Records {
        let s = Suite::Refinement.name();
        let (lo, hi) = match (self.background(), self.setup()) {
            (Ok(bg), Ok(setup)) => {
                let ctx_hi = WeylContext::new(self.sc.chart, self.sc.weyl_degree + 2);
                let bg_hi = bg.with_context(ctx_hi);
                match bg_hi.setup_at(&self.sc.diffeo) {
                    Ok(sh) => ((bg, setup), (bg_hi, sh)),
                    Err(e) => return fail_all(Suite::Refinement, "refined setup", &e.to_string()),
                }
            }
            (Err(e), _) | (_, Err(e)) => return fail_all(Suite::Refinement, "setup", &e),
        };
        let n = self.n();
        let k = self.sc.weyl_degree;
        let mut rng = rng_for(self.sc.seed, Suite::Refinement);
        let mut out = Vec::new();
        for p in self.sample_functions(&mut rng, 4).chunks(2).filter(|c| c.len() == 2) {
            let a = lo.1.star_fn(&p[0].1, &p[1].1).truncate(n);
            let b = hi.1.star_fn(&p[0].1, &p[1].1).truncate(n);
            out.push(
                CheckRecord::new(s, format!("F*G through nu^{n} is unchanged from K = {k} to {}", k + 2))
                    .input("F", &p[0].0)
                    .input("G", &p[1].0)
                    .residual(a == b, a.sub(&b)),
            );
        }
        if let Some((yn, y, zn, z)) = self.field_pairs().first() {
            let rec = CheckRecord::new(s, format!("sigma(R) through nu^{n} is unchanged from K = {k} to {}", k + 2)).input("Y", yn).input("Z", zn);
            let f = &self.sc.diffeo;
            out.push(match (curvature_r(lo.0, f, y, z), curvature_r(&hi.0, f, y, z)) {
                (Ok(a), Ok(b)) => {
                    let (a, b) = (a.sigma().truncate(n), b.sigma().truncate(n));
                    rec.residual(a == b, a.sub(&b))
                }
                (Err(e), _) | (_, Err(e)) => rec.error(e.to_string()),
            });
        }
        if self.sc.chart.mode == Mode::Torus && self.sc.chart.m == 1 {
            let order = self.density_order();
            let rec = CheckRecord::new(s, format!("trace density through nu^{order} is unchanged from K = {k} to {}", k + 2));
            let d = |setup: &FedosovSetup| -> Result<FnSeries, String> {
                let mut solver = TraceSolver::new(setup.clone(), order).map_err(|e| e.to_string())?;
                Ok(trace_density(&mut solver, 8).map_err(|e| e.to_string())?.rho)
            };
            out.push(match (d(lo.1), d(&hi.1)) {
                (Ok(a), Ok(b)) => rec.residual(a == b, a.sub(&b)),
                (Err(e), _) | (_, Err(e)) => rec.error(e),
            });
        }
        out
    }
}

/// Run `suites` (already in dependency order) against the scenario.
pub fn run_scenario(sc: &Scenario, suites: &[Suite], timings: bool) -> Report {
    let runner = Runner::new(sc, timings);
    let mut checks = Vec::new();
    for &s in suites {
        checks.extend(runner.run_suite(s));
    }
    Report::new(&sc.name, sc.seed, sc.nu_order, sc.weyl_degree, suites.iter().map(|s| s.name().to_string()).collect(), checks)
}

/// `F*G` through the scenario's `nu` order, at the scenario's `f`.
pub fn star_report(sc: &Scenario, f_src: &str, g_src: &str, f: &F, g: &F) -> Report {
    let runner = Runner::new(sc, false);
    let rec = CheckRecord::new("star", "star product F*G").input("F", f_src).input("G", g_src);
    let rec = match runner.setup() {
        Ok(setup) => rec.series(SeriesRecord::new("F*G", &setup.star_fn(f, g).truncate(sc.nu_order))),
        Err(e) => rec.error(e),
    };
    Report::new(&sc.name, sc.seed, sc.nu_order, sc.weyl_degree, vec!["star".into()], vec![rec])
}

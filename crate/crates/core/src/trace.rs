//! Trace densities on the torus, the classical forms on `Diff_0`, the
//! deformed 2-form and the formal moment map.
//!
//! For `m = 1`, `tr(F) = (2 pi nu)^{-1} int F rho omega`. All integrals are
//! returned as `(2 pi)^{2m}` times an exact mean.

use std::collections::{BTreeMap, HashMap};

use crate::chart::{Basis, ChartError, ChartFunction, Kind, Mode, MAX_DIM};
use crate::fedosov::FedosovSetup;
use crate::field::Field;
use crate::geometry::{hamiltonian_vf, DiffeoFamily, VectorField};
use crate::scalar::{Gen, Scalar};
use crate::series::{NuSeries, TwoPi};
use crate::transport::{beta, curvature_r, Background, CurvatureData, TransportError};
use crate::weyl::WeylElement;

type Fun<R> = ChartFunction<R>;
type FnSeries<R> = NuSeries<Fun<R>>;
type Freq = [i16; MAX_DIM];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TraceError {
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("trace densities need torus mode")]
    NotTorus,
    #[error("relative order {order} needs star products through nu^{need}, setup has nu^{have}")]
    OrderTooHigh { order: i32, need: i32, have: i32 },
    #[error("inconsistent trace constraints at order {order}, mode {mode}")]
    Inconsistent { order: i32, mode: String },
    #[error("density support not bounded within box {0}")]
    RetryExhausted(i32),
    #[error("Hamiltonian has nonzero mean {0}")]
    NonZeroMean(String),
    #[error("2-form fails the positivity certificate: {0}")]
    NotPositive(String),
}

fn lam(m: usize, a: &Freq, b: &Freq) -> i64 {
    // Lambda^{i,i+m} = -1, Lambda^{i+m,i} = +1
    (0..m).map(|i| -(a[i] as i64) * (b[i + m] as i64) + (a[i + m] as i64) * (b[i] as i64)).sum()
}

fn sub(a: &Freq, b: &Freq) -> Freq {
    let mut out = [0; MAX_DIM];
    for i in 0..MAX_DIM {
        out[i] = a[i] - b[i];
    }
    out
}

fn is_canonical(p: &Freq) -> bool {
    p.iter().copied().find(|&x| x != 0).is_some_and(|x| x > 0)
}

fn freq_string(p: &Freq, n: usize) -> String {
    format!("({})", p[..n].iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
}

/// How the constant modes of `rho` are fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization<R: Field> {
    /// Mean of `rho_k` for `k = 0, 1, ...`.
    pub means: Vec<Scalar<R>>,
}

/// Order-by-order solver for `rho` from `int [F, G]_* rho omega = 0`.
///
/// Modes are computed on demand: the constraint for `E_a = e^{i a.x}`,
/// `E_b` with `a + b = p` has `{E_a, E_b} = -Lambda(a, b) E_p` as its
/// leading term, so the `p`-mode of `rho_k` is explicit in lower orders.
pub struct TraceSolver<R: Field> {
    setup: FedosovSetup<R>,
    order: i32,
    norm: Normalization<R>,
    q_cache: HashMap<(Kind, Freq), WeylElement<R>>,
    comm_cache: HashMap<(Freq, Freq), (Vec<Fun<R>>, Vec<Fun<R>>)>,
    modes: BTreeMap<(i32, Freq), (Scalar<R>, Scalar<R>)>,
}

impl<R: Field> TraceSolver<R> {
    /// Solver for `rho_0, ..., rho_order`, normalised by
    /// `int rho omega = int (omega + nu chi)`.
    pub fn new(setup: FedosovSetup<R>, order: i32) -> Result<Self, TraceError> {
        let chart = setup.ctx().chart;
        if chart.mode != Mode::Torus {
            return Err(TraceError::NotTorus);
        }
        if chart.m != 1 {
            // the normalisation below is the m = 1 expansion of (omega + nu chi)^m / m!
            return Err(ChartError::Unsupported { op: "trace density for m > 1", mode: chart.mode }.into());
        }
        let need = order + 1;
        if setup.nu_order() < need {
            return Err(TraceError::OrderTooHigh { order, need, have: setup.nu_order() });
        }
        let chi_mean = setup.chi().top_coeff().constant_term();
        let mut means = vec![Scalar::from_int(1), chi_mean];
        while (means.len() as i32) <= order {
            means.push(Scalar::zero());
        }
        Ok(TraceSolver {
            setup,
            order,
            norm: Normalization { means },
            q_cache: HashMap::new(),
            comm_cache: HashMap::new(),
            modes: BTreeMap::new(),
        })
    }

    pub fn setup(&self) -> &FedosovSetup<R> {
        &self.setup
    }

    pub fn order(&self) -> i32 {
        self.order
    }

    pub fn normalization(&self) -> &Normalization<R> {
        &self.norm
    }

    fn m(&self) -> usize {
        self.setup.ctx().m()
    }

    /// `Q(cos(v.x))` or `Q(sin(v.x))` for canonical `v`.
    fn q_basis(&mut self, kind: Kind, v: Freq) -> WeylElement<R> {
        if let Some(q) = self.q_cache.get(&(kind, v)) {
            return q.clone();
        }
        let chart = self.setup.ctx().chart;
        let f = Fun::from_raw(chart, crate::Caps::none(), vec![(Basis { kind, v }, crate::Mono::ONE, R::one())]);
        let q = self.setup.quantize_fn(&f);
        self.q_cache.insert((kind, v), q.clone());
        q
    }

    /// `Q(cos(a.x))`, `Q(sin(a.x))` for any `a`.
    fn q_trig(&mut self, a: &Freq) -> (WeylElement<R>, WeylElement<R>) {
        let ctx = self.setup.ctx();
        if a.iter().all(|&x| x == 0) {
            return (WeylElement::one(ctx), WeylElement::zero(ctx));
        }
        if is_canonical(a) {
            (self.q_basis(Kind::Cos, *a), self.q_basis(Kind::Sin, *a))
        } else {
            let neg = sub(&[0; MAX_DIM], a);
            (self.q_basis(Kind::Cos, neg), self.q_basis(Kind::Sin, neg).neg())
        }
    }

    /// Real and imaginary parts of the coefficients of `[E_a, E_b]_*`.
    fn commutator(&mut self, a: &Freq, b: &Freq) -> (Vec<Fun<R>>, Vec<Fun<R>>) {
        if let Some(c) = self.comm_cache.get(&(*a, *b)) {
            return c.clone();
        }
        let n = self.order + 1;
        let (ca, sa) = self.q_trig(a);
        let (cb, sb) = self.q_trig(b);
        let s = &self.setup;
        let comm = |x: &WeylElement<R>, y: &WeylElement<R>| s.star_quantized(x, y).sub(&s.star_quantized(y, x));
        let re = comm(&ca, &cb).sub(&comm(&sa, &sb));
        let im = comm(&ca, &sb).add(&comm(&sa, &cb));
        let out: (Vec<_>, Vec<_>) = (0..=n).map(|j| (re.coeff(j).clone(), im.coeff(j).clone())).unzip();
        self.comm_cache.insert((*a, *b), out.clone());
        out
    }

    /// Cosine and sine coefficients of `rho_k` at canonical `p` (or the mean at `p = 0`).
    pub fn mode(&mut self, k: i32, p: &Freq) -> Result<(Scalar<R>, Scalar<R>), TraceError> {
        if p.iter().all(|&x| x == 0) {
            return Ok((self.norm.means[k as usize].clone(), Scalar::zero()));
        }
        debug_assert!(is_canonical(p));
        if k == 0 {
            return Ok((Scalar::zero(), Scalar::zero()));
        }
        if let Some(v) = self.modes.get(&(k, *p)) {
            return Ok(v.clone());
        }
        let e = self
            .candidates()
            .into_iter()
            .find(|e| lam(self.m(), e, p) != 0)
            .expect("Lambda is nondegenerate");
        let x = self.solve_with(k, p, &e)?;
        self.modes.insert((k, *p), x.clone());
        Ok(x)
    }

    fn candidates(&self) -> Vec<Freq> {
        let n = self.setup.ctx().chart.dim();
        let mut out = Vec::new();
        for i in 0..n {
            let mut e = [0; MAX_DIM];
            e[i] = 1;
            out.push(e);
        }
        for i in 0..n {
            for j in i + 1..n {
                let mut e = [0; MAX_DIM];
                e[i] = 1;
                e[j] = 1;
                out.push(e);
                e[j] = -1;
                out.push(e);
            }
        }
        out
    }

    /// The `p`-mode of `rho_k` from the constraint on `[E_e, E_{p-e}]_*`.
    fn solve_with(&mut self, k: i32, p: &Freq, e: &Freq) -> Result<(Scalar<R>, Scalar<R>), TraceError> {
        let b = sub(p, e);
        let l = lam(self.m(), e, &b);
        debug_assert!(l != 0);
        let (re, im) = self.commutator(e, &b);
        let n = k + 1;
        let mut acc_re = Scalar::zero();
        let mut acc_im = Scalar::zero();
        for j in 2..=n {
            let i = n - j;
            acc_re = acc_re.add(&self.mean_against(&re[j as usize], i)?);
            acc_im = acc_im.add(&self.mean_against(&im[j as usize], i)?);
        }
        // <E_p rho_k> = (c + i s) / 2 = sum / Lambda(a, b)
        let two_over_l = R::from_ratio(2, l);
        Ok((acc_re.scale(&two_over_l), acc_im.scale(&two_over_l)))
    }

    /// `<f rho_k>`, the torus mean of `f rho_k`.
    pub fn mean_against(&mut self, f: &Fun<R>, k: i32) -> Result<Scalar<R>, TraceError> {
        let half = R::from_ratio(1, 2);
        let mut acc = Scalar::zero();
        for (key, c) in f.terms() {
            let coeff = Scalar::from_terms(f.caps(), vec![(key.mono, c.clone())]);
            let v = key.basis.v;
            let (cp, sp) = self.mode(k, &v)?;
            let term = if v.iter().all(|&x| x == 0) {
                coeff.mul(&cp)
            } else if key.basis.kind == Kind::Cos {
                coeff.mul(&cp).scale(&half)
            } else {
                coeff.mul(&sp).scale(&half)
            };
            acc = acc.add(&term);
        }
        Ok(acc)
    }

    /// `<F rho>` as a nu-series through `nu^order`.
    pub fn pairing(&mut self, f: &FnSeries<R>) -> Result<NuSeries<Scalar<R>>, TraceError> {
        let hi = self.order.min(f.order());
        let mut out = NuSeries::zero_scalar(f.lo().min(0), hi);
        for n in out.lo()..=hi {
            let mut acc = Scalar::zero();
            for (a, fa) in f.iter() {
                let k = n - a;
                if k < 0 || k > self.order || fa.is_zero() {
                    continue;
                }
                acc = acc.add(&self.mean_against(fa, k)?);
            }
            out.set(n, acc);
        }
        Ok(out)
    }

    /// `tr(F) = 2 pi nu^{-1} <F rho>` for `m = 1`.
    pub fn trace(&mut self, f: &FnSeries<R>) -> Result<TwoPi<NuSeries<Scalar<R>>>, TraceError> {
        Ok(TwoPi::new(1, self.pairing(f)?.shift(-1)))
    }

    /// `sum_{j+i=n} <C_j rho_i>` for `[F, G]_* = sum nu^j C_j`, `n = 1..=order+1`.
    pub fn commutator_residual(&mut self, f: &Fun<R>, g: &Fun<R>) -> Result<Vec<Scalar<R>>, TraceError> {
        let qf = self.setup.quantize_fn(f);
        let qg = self.setup.quantize_fn(g);
        let c = self.setup.star_quantized(&qf, &qg).sub(&self.setup.star_quantized(&qg, &qf));
        let mut out = Vec::new();
        for n in 1..=self.order + 1 {
            let mut acc = Scalar::zero();
            for j in 1..=n {
                acc = acc.add(&self.mean_against(&c.coeff(j).clone(), n - j)?);
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// `rho_k` restricted to the modes in the box `|p_i| <= radius`.
    pub fn density_in_box(&mut self, k: i32, radius: i16) -> Result<Fun<R>, TraceError> {
        let chart = self.setup.ctx().chart;
        let mut raw = Vec::new();
        let caps = self.setup.r().caps().meet(self.setup.chi().top_coeff().caps());
        for p in box_modes(chart.dim(), radius) {
            let (c, s) = self.mode(k, &p)?;
            for (kind, x) in [(Kind::Cos, c), (Kind::Sin, s)] {
                for (mono, r) in x.terms() {
                    raw.push((Basis { kind, v: p }, *mono, r.clone()));
                }
            }
        }
        Ok(Fun::from_raw(chart, caps, raw))
    }

    /// Every alternative constraint for the `p`-mode must agree with the solved value.
    pub fn audit_mode(&mut self, k: i32, p: &Freq) -> Result<usize, TraceError> {
        let value = self.mode(k, p)?;
        let n = self.setup.ctx().chart.dim();
        let mut checked = 0;
        for e in self.candidates() {
            if lam(self.m(), &e, p) == 0 {
                continue;
            }
            if self.solve_with(k, p, &e)? != value {
                return Err(TraceError::Inconsistent { order: k, mode: freq_string(p, n) });
            }
            checked += 1;
        }
        Ok(checked)
    }
}

/// Canonical frequencies (and zero) with all entries in `[-radius, radius]`.
fn box_modes(n: usize, radius: i16) -> Vec<Freq> {
    let mut out = vec![[0; MAX_DIM]];
    let mut cur = [0i16; MAX_DIM];
    fn rec(i: usize, n: usize, r: i16, cur: &mut Freq, out: &mut Vec<Freq>) {
        if i == n {
            if is_canonical(cur) {
                out.push(*cur);
            }
            return;
        }
        for x in -r..=r {
            cur[i] = x;
            rec(i + 1, n, r, cur, out);
        }
        cur[i] = 0;
    }
    rec(0, n, radius, &mut cur, &mut out);
    out
}

/// A solved trace density `rho = sum nu^k rho_k`.
#[derive(Clone, Debug)]
pub struct TraceDensity<R: Field> {
    pub rho: FnSeries<R>,
    pub radius: i16,
    pub audited_constraints: usize,
    pub normalization: Normalization<R>,
}

/// Solve `rho` through relative order `order`, growing the Fourier box until
/// its outer ring vanishes at every order, and auditing every alternative
/// constraint inside the box.
pub fn trace_density<R: Field>(solver: &mut TraceSolver<R>, max_radius: i16) -> Result<TraceDensity<R>, TraceError> {
    let dim = solver.setup().ctx().chart.dim();
    let chart = solver.setup().ctx().chart;
    let mut radius = 1;
    loop {
        let mut ring_zero = true;
        for k in 1..=solver.order() {
            for p in box_modes(dim, radius) {
                if p.iter().any(|x| x.abs() == radius) {
                    let (c, s) = solver.mode(k, &p)?;
                    if !c.is_zero() || !s.is_zero() {
                        ring_zero = false;
                    }
                }
            }
        }
        if ring_zero {
            break;
        }
        radius += 1;
        if radius > max_radius {
            return Err(TraceError::RetryExhausted(max_radius as i32));
        }
    }
    let mut audited = 0;
    let mut rho = NuSeries::zero_fn(chart, 0, solver.order());
    for k in 0..=solver.order() {
        for p in box_modes(dim, radius) {
            if p.iter().any(|&x| x != 0) && k > 0 {
                audited += solver.audit_mode(k, &p)?;
            }
        }
        rho.set(k, solver.density_in_box(k, radius)?);
    }
    Ok(TraceDensity { rho, radius, audited_constraints: audited, normalization: solver.normalization().clone() })
}

/// Sufficient positivity certificate for the top coefficient of a 2-form on
/// `T^2`: constant mode exceeds the sum of absolute values of the others.
pub fn positivity_certificate<R: Field>(chi: &crate::forms::DifferentialForm<R>) -> Result<(), TraceError> {
    let c = chi.top_coeff();
    if !c.is_jet_free() {
        return Err(TraceError::NotPositive("coefficient carries jet parameters".into()));
    }
    let mut constant = R::zero();
    let mut rest = R::zero();
    for (k, x) in c.terms() {
        if k.basis.is_one() {
            constant = x.clone();
        } else {
            rest = rest + x.abs();
        }
    }
    if constant > rest {
        Ok(())
    } else {
        Err(TraceError::NotPositive(c.to_string()))
    }
}

// ---- classical layer -------------------------------------------------------

/// `Omega^Diff_f(Y o f, Z o f) = int chi(Y, Z) o f omega`.
pub fn omega_diff<R: Field>(bg: &Background<R>, f: &DiffeoFamily<R>, y: &VectorField<R>, z: &VectorField<R>) -> Result<TwoPi<Scalar<R>>, TraceError> {
    let g = f.pull_fn(&bg.chi().eval2(y.comps(), z.comps()));
    Ok(TwoPi::new(2, g.torus_mean()?))
}

/// Donaldson's value `-int H f^* chi` for `m = 1`.
pub fn donaldson<R: Field>(bg: &Background<R>, f: &DiffeoFamily<R>, h: &Fun<R>) -> Result<TwoPi<Scalar<R>>, TraceError> {
    let c = bg.chi_at(f).top_coeff();
    Ok(TwoPi::new(2, h.mul(&c).torus_mean()?.neg()))
}

/// `d/ds Omega^Diff` along `phi_s^X o f` of the right-invariant pair `(Y, Z)`.
fn omega_diff_derivative<R: Field>(bg: &Background<R>, f: &DiffeoFamily<R>, x: &VectorField<R>, y: &VectorField<R>, z: &VectorField<R>) -> Result<Scalar<R>, TraceError> {
    let g = DiffeoFamily::flow(x, Gen::S, 1).compose(f);
    Ok(omega_diff(bg, &g, y, z)?.value.jet_coeff(Gen::S, 1))
}

/// `d Omega^Diff (X, Y, Z)` on right-invariant fields, with `[X o f, Y o f] = [X, Y] o f`.
pub fn omega_diff_closedness<R: Field>(bg: &Background<R>, f: &DiffeoFamily<R>, x: &VectorField<R>, y: &VectorField<R>, z: &VectorField<R>) -> Result<Scalar<R>, TraceError> {
    let om = |a: &VectorField<R>, b: &VectorField<R>| omega_diff(bg, f, a, b).map(|v| v.value);
    let t1 = omega_diff_derivative(bg, f, x, y, z)?;
    let t2 = omega_diff_derivative(bg, f, y, x, z)?;
    let t3 = omega_diff_derivative(bg, f, z, x, y)?;
    let t4 = om(&x.bracket(y), z)?;
    let t5 = om(&x.bracket(z), y)?;
    let t6 = om(&y.bracket(z), x)?;
    Ok(t1.sub(&t2).add(&t3).sub(&t4).add(&t5).sub(&t6))
}

/// `Omega^Diff_{f o phi_tau}(Y, Z) - Omega^Diff_f(Y, Z)` at order `tau^1`, `phi` the flow of `K`.
pub fn omega_diff_ham_invariance<R: Field>(bg: &Background<R>, f: &DiffeoFamily<R>, k: &Fun<R>, y: &VectorField<R>, z: &VectorField<R>) -> Result<Scalar<R>, TraceError> {
    let phi = DiffeoFamily::hamiltonian_flow(k, Gen::Tau, 1);
    let g = f.compose(&phi);
    Ok(omega_diff(bg, &g, y, z)?.value.jet_coeff(Gen::Tau, 1))
}

/// `d mu(H)(Y o f) - Omega^Diff(f_* X_H o f, Y o f)` for the Donaldson map.
pub fn classical_moment_residual<R: Field>(bg: &Background<R>, f: &DiffeoFamily<R>, h: &Fun<R>, y: &VectorField<R>) -> Result<Scalar<R>, TraceError> {
    let g = DiffeoFamily::flow(y, Gen::S, 1).compose(f);
    let dmu = donaldson(bg, &g, h)?.value.jet_coeff(Gen::S, 1);
    let w = f.push_vf(&hamiltonian_vf(h));
    let om = omega_diff(bg, f, &w, y)?.value;
    Ok(dmu.sub(&om))
}

// ---- deformed layer --------------------------------------------------------

/// `Omega~(Y o f, Z o f) = -(2 pi)^m nu^{m-1} tr(R|_{y=0})`; for `m = 1` this is
/// `-(2 pi)^2 nu^{-1} <sigma(R) rho>`.
pub fn omega_tilde<R: Field>(solver: &mut TraceSolver<R>, curvature: &CurvatureData<R>) -> Result<TwoPi<NuSeries<Scalar<R>>>, TraceError> {
    let s = curvature.sigma();
    let p = solver.pairing(&s)?;
    // R has no nu^0 part, so the nu^{-1} shift stays nonnegative
    let hi = p.order() - 1;
    let mut out = NuSeries::zero_scalar(0, hi);
    for n in 0..=hi {
        out.set(n, p.coeff(n + 1).neg());
    }
    Ok(TwoPi::new(2, out))
}

/// `mu~(H)(f) = (2 pi)^m nu^{m-1} tr(H)`; for `m = 1`, `(2 pi)^2 nu^{-1} <H rho>`.
pub fn mu_tilde<R: Field>(solver: &mut TraceSolver<R>, h: &Fun<R>) -> Result<TwoPi<NuSeries<Scalar<R>>>, TraceError> {
    let mean = h.torus_mean()?;
    if !mean.is_zero() {
        return Err(TraceError::NonZeroMean(mean.to_string()));
    }
    let n = solver.order();
    let p = solver.pairing(&NuSeries::function(h.clone(), n))?;
    let mut out = NuSeries::zero_scalar(0, n - 1);
    for k in 0..n {
        out.set(k, p.coeff(k + 1).clone());
    }
    Ok(TwoPi::new(2, out))
}

fn series_jet_scalar<R: Field>(s: &NuSeries<Scalar<R>>, g: Gen, n: u8) -> NuSeries<Scalar<R>> {
    s.map(Scalar::zero(), |c| c.jet_coeff(g, n))
}

/// Both sides of the formal moment map equation at `f` for `H` and `Y`.
#[derive(Clone, Debug)]
pub struct MomentReport<R: Field> {
    /// `Omega~_f(f_* X_H o f, Y o f)`, over `(2 pi)^2`.
    pub lhs: NuSeries<Scalar<R>>,
    /// `d mu~(H)(Y o f)` from the density along `phi_s^Y o f`, over `(2 pi)^2`.
    pub rhs: NuSeries<Scalar<R>>,
    /// The same derivative from `tr(sigma((1/nu)[alpha(Y), Q H]))`.
    pub rhs_variation: NuSeries<Scalar<R>>,
    pub residual: NuSeries<Scalar<R>>,
    pub variation_residual: NuSeries<Scalar<R>>,
}

/// Formal moment map equation through `nu^order`; needs setups with
/// `nu_order >= order + 2`.
pub fn moment_residual<R: Field>(bg: &Background<R>, f: &DiffeoFamily<R>, h: &Fun<R>, y: &VectorField<R>, order: i32) -> Result<MomentReport<R>, TraceError> {
    let w = f.push_vf(&hamiltonian_vf(h));
    let curv = curvature_r(bg, f, &w, y)?;
    let setup_f = curv.setup_f.clone();
    let mut solver_f = TraceSolver::new(setup_f.clone(), order + 1)?;
    let lhs = omega_tilde(&mut solver_f, &curv)?.value.truncate(order);

    let g = DiffeoFamily::flow(y, Gen::S, 1).compose(f);
    let setup_g = bg.setup_at(&g).map_err(TransportError::from)?;
    let mut solver_g = TraceSolver::new(setup_g, order + 1)?;
    let mu_g = mu_tilde(&mut solver_g, h)?.value;
    let rhs = series_jet_scalar(&mu_g, Gen::S, 1).truncate(order);

    // variation along the flow: d/ds tr_{g_s}(H) = tr_f(beta(Y) H)
    let alpha = curv_alpha(bg, &setup_f, f, y)?;
    let n = setup_f.nu_order();
    let bh = beta(&setup_f, &alpha, &NuSeries::function(h.clone(), n));
    let p = solver_f.pairing(&bh)?;
    let mut var = NuSeries::zero_scalar(0, order);
    for k in 0..=order {
        var.set(k, p.coeff(k + 1).clone());
    }
    let residual = lhs.sub(&rhs);
    let variation_residual = var.sub(&rhs);
    Ok(MomentReport { lhs, rhs, rhs_variation: var, residual, variation_residual })
}

fn curv_alpha<R: Field>(bg: &Background<R>, setup_f: &FedosovSetup<R>, f: &DiffeoFamily<R>, y: &VectorField<R>) -> Result<WeylElement<R>, TraceError> {
    Ok(bg.alpha_left(setup_f, f, y, Gen::T)?)
}

/// `mu~((phi^{-1})^* H)(f) - mu~(H)(f o phi)` at `tau^1`, `phi` the flow of `K`.
pub fn mu_equivariance_residual<R: Field>(bg: &Background<R>, f: &DiffeoFamily<R>, h: &Fun<R>, k: &Fun<R>, order: i32) -> Result<NuSeries<Scalar<R>>, TraceError> {
    let phi = DiffeoFamily::hamiltonian_flow(k, Gen::Tau, 1);
    let h_moved = phi.inverse().pull_fn(h);
    let mut solver_f = TraceSolver::new(bg.setup_at(f).map_err(TransportError::from)?, order + 1)?;
    let lhs = mu_tilde(&mut solver_f, &h_moved)?.value;
    let fphi = f.compose(&phi);
    let mut solver_fphi = TraceSolver::new(bg.setup_at(&fphi).map_err(TransportError::from)?, order + 1)?;
    let rhs = mu_tilde(&mut solver_fphi, h)?.value;
    Ok(series_jet_scalar(&lhs.sub(&rhs), Gen::Tau, 1).truncate(order))
}

/// `Omega~_{f o phi_tau}(Y, Z) - Omega~_f(Y, Z)` at `tau^1`.
pub fn omega_tilde_ham_invariance<R: Field>(bg: &Background<R>, f: &DiffeoFamily<R>, k: &Fun<R>, y: &VectorField<R>, z: &VectorField<R>, order: i32) -> Result<NuSeries<Scalar<R>>, TraceError> {
    let phi = DiffeoFamily::hamiltonian_flow(k, Gen::Tau, 1);
    let g = f.compose(&phi);
    let curv = curvature_r(bg, &g, y, z)?;
    let mut solver = TraceSolver::new(curv.setup_f.clone(), order + 1)?;
    let om = omega_tilde(&mut solver, &curv)?.value;
    Ok(series_jet_scalar(&om, Gen::Tau, 1).truncate(order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Chart;
    use crate::forms::DifferentialForm;
    use crate::geometry::Connection;
    use crate::weyl::WeylContext;
    use crate::Rational;

    type F = Fun<Rational>;

    #[test]
    fn flat_density_is_one() {
        let ch = Chart::torus(1);
        let setup = FedosovSetup::new(WeylContext::new(ch, 9), Connection::flat(ch), DifferentialForm::zero(ch, 2)).unwrap();
        let mut solver = TraceSolver::new(setup, 2).unwrap();
        let d = trace_density(&mut solver, 6).unwrap();
        assert_eq!(d.rho.coeff(0), &F::one(ch));
        assert!(d.rho.coeff(1).is_zero());
        assert!(d.rho.coeff(2).is_zero());
    }

    #[test]
    fn first_order_density_with_chi() {
        let ch = Chart::torus(1);
        let chi_c = F::one(ch).add(&F::cos_x(ch, 1).scale(&Rational::new(1, 2)));
        let chi = DifferentialForm::monomial(0b11, chi_c.clone());
        let setup = FedosovSetup::new(WeylContext::new(ch, 7), Connection::flat(ch), chi).unwrap();
        let mut solver = TraceSolver::new(setup, 1).unwrap();
        let d = trace_density(&mut solver, 6).unwrap();
        // rho_1 = -chi + const, the constant fixed by <rho_1> = <chi>
        let expect = chi_c.neg().add(&F::from_int(ch, 2));
        assert_eq!(d.rho.coeff(1), &expect);
    }

    fn chi(ch: Chart) -> DifferentialForm<Rational> {
        DifferentialForm::monomial(0b11, F::one(ch).add(&F::cos_x(ch, 1).scale(&Rational::new(1, 2))))
    }

    fn curved(ch: Chart) -> Connection<Rational> {
        let mut s = crate::geometry::SymTensor3::zero(ch);
        s.set(0, 0, 0, F::cos_x(ch, 1).scale(&Rational::new(1, 4)));
        Connection::symplectic(&s)
    }

    fn shear(ch: Chart) -> DiffeoFamily<Rational> {
        let eps = F::gen(ch, Gen::Eps, 1);
        DiffeoFamily::new(vec![F::zero(ch), eps.mul(&F::cos_x(ch, 0))]).unwrap()
    }

    #[test]
    fn curved_density_passes_held_out_commutators() {
        let ch = Chart::torus(1);
        let setup = FedosovSetup::new(WeylContext::new(ch, 9), curved(ch), chi(ch)).unwrap();
        let mut solver = TraceSolver::new(setup, 2).unwrap();
        let d = trace_density(&mut solver, 8).unwrap();
        let half = Rational::new(1, 2);
        let rho1 = F::one(ch).sub(&F::cos_x(ch, 1).scale(&half));
        let rho2 = F::cos_x(ch, 1).neg().sub(&F::sin_x(ch, 1).scale(&Rational::new(1, 96)));
        assert_eq!(d.rho.coeff(1), &rho1);
        assert_eq!(d.rho.coeff(2), &rho2);
        for (a, b) in [(F::cos(ch, &[2, 1]), F::sin(ch, &[1, -1])), (F::sin_x(ch, 0), F::cos(ch, &[0, 3]))] {
            let res = solver.commutator_residual(&a, &b).unwrap();
            assert!(res.iter().all(|x| x.is_zero()), "{res:?}");
        }
    }

    #[test]
    fn classical_identities_on_shear() {
        let ch = Chart::torus(1);
        let bg = Background::new(WeylContext::new(ch, 5), curved(ch), chi(ch)).unwrap();
        let f = shear(ch);
        let x = VectorField::coordinate(ch, 0);
        let y = VectorField::new(vec![F::zero(ch), F::sin_x(ch, 0)]);
        let z = hamiltonian_vf(&F::cos(ch, &[1, 1]));
        assert!(omega_diff_closedness(&bg, &f, &x, &y, &z).unwrap().is_zero());
        assert!(omega_diff_ham_invariance(&bg, &f, &F::sin_x(ch, 1), &x, &y).unwrap().is_zero());
        let h = F::cos_x(ch, 1);
        let r = classical_moment_residual(&bg, &f, &h, &y).unwrap();
        assert!(r.is_zero(), "{r}");
    }

    #[test]
    fn formal_moment_map_on_shear() {
        let ch = Chart::torus(1);
        let bg = Background::new(WeylContext::new(ch, 9), curved(ch), chi(ch)).unwrap();
        let f = shear(ch);
        let y = VectorField::new(vec![F::zero(ch), F::sin_x(ch, 1)]);
        let rep = moment_residual(&bg, &f, &F::cos_x(ch, 1), &y, 1).unwrap();
        assert_eq!(rep.lhs.coeff(0), &Scalar::ratio(-1, 2));
        assert_eq!(rep.lhs.coeff(1), &Scalar::from_int(-1));
        assert!(rep.variation_residual.is_zero());
        assert!(rep.residual.is_zero());
    }

    #[test]
    fn mu_tilde_equivariance_and_omega_invariance() {
        let ch = Chart::torus(1);
        let bg = Background::new(WeylContext::new(ch, 9), curved(ch), chi(ch)).unwrap();
        let f = shear(ch);
        let eq = mu_equivariance_residual(&bg, &f, &F::cos(ch, &[1, 1]), &F::sin_x(ch, 0), 1).unwrap();
        assert!(eq.is_zero());
        let y = VectorField::coordinate(ch, 0);
        let z = VectorField::new(vec![F::zero(ch), F::sin_x(ch, 1)]);
        let inv = omega_tilde_ham_invariance(&bg, &f, &F::sin_x(ch, 0), &y, &z, 1).unwrap();
        assert!(inv.is_zero());
    }
}

//! Equivalences between Fedosov algebras along paths, the connection 1-form
//! `alpha` on `Diff_0`, the formal connection and its curvature.
//!
//! Paths are jets in a nilpotent generator (default [`Gen::T`]); second
//! directions use [`Gen::S`].

use crate::chart::{Chart, ChartFunction};
use crate::fedosov::{FedosovError, FedosovSetup};
use crate::field::Field;
use crate::forms::DifferentialForm;
use crate::geometry::{hamiltonian_vf, pi_nabla, Connection, DiffeoError, DiffeoFamily, SymTensor3, VectorField};
use crate::scalar::{Caps, Gen};
use crate::series::NuSeries;
use crate::weyl::{WKey, WeylContext, WeylElement};

type Fun<R> = ChartFunction<R>;
type W<R> = WeylElement<R>;
type FnSeries<R> = NuSeries<Fun<R>>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error(transparent)]
    Fedosov(#[from] FedosovError),
    #[error(transparent)]
    Diffeo(#[from] DiffeoError),
    #[error("invalid path: {0}")]
    Path(String),
}

/// The fixed data `(M, omega, nabla, chi)` from which every point `f` of
/// `Diff_0` gets the setup `(pi_nabla(f), nu f^* chi)`.
#[derive(Clone, Debug)]
pub struct Background<R: Field> {
    ctx: WeylContext,
    nabla: Connection<R>,
    chi: DifferentialForm<R>,
}

impl<R: Field> Background<R> {
    pub fn new(ctx: WeylContext, nabla: Connection<R>, chi: DifferentialForm<R>) -> Result<Self, FedosovError> {
        nabla.check_symplectic()?;
        if chi.degree() != 2 {
            return Err(FedosovError::NotTwoForm(chi.degree()));
        }
        if !chi.d().is_zero() {
            return Err(FedosovError::NotClosed);
        }
        Ok(Background { ctx, nabla, chi })
    }

    pub fn ctx(&self) -> WeylContext {
        self.ctx
    }

    pub fn chart(&self) -> Chart {
        self.ctx.chart
    }

    pub fn nabla(&self) -> &Connection<R> {
        &self.nabla
    }

    pub fn chi(&self) -> &DifferentialForm<R> {
        &self.chi
    }

    pub fn with_context(&self, ctx: WeylContext) -> Self {
        Background { ctx, ..self.clone() }
    }

    pub fn connection_at(&self, f: &DiffeoFamily<R>) -> Connection<R> {
        if f.is_identity() {
            return self.nabla.clone();
        }
        pi_nabla(f, &self.nabla)
    }

    pub fn chi_at(&self, f: &DiffeoFamily<R>) -> DifferentialForm<R> {
        f.pull_form(&self.chi)
    }

    pub fn setup_at(&self, f: &DiffeoFamily<R>) -> Result<FedosovSetup<R>, FedosovError> {
        FedosovSetup::new(self.ctx, self.connection_at(f), self.chi_at(f))
    }

    /// `alpha_f(Y o f)` along `phi_t^Y o f`, with `t` carried by `gen`.
    pub fn alpha_left(&self, setup_f: &FedosovSetup<R>, f: &DiffeoFamily<R>, y: &VectorField<R>, gen: Gen) -> Result<W<R>, TransportError> {
        if y.is_zero() {
            return Ok(W::zero(self.ctx));
        }
        let path = DiffeoFamily::flow(y, gen, 1).compose(f);
        let path_setup = self.setup_at(&path)?;
        let theta = f.pull_form(&self.chi.interior(y.comps()));
        Ok(alpha_along(setup_f, &path_setup, gen, &theta)?)
    }

    /// `alpha_f(f_* X o f)` along `f o phi_t^X`.
    pub fn alpha_right(&self, setup_f: &FedosovSetup<R>, f: &DiffeoFamily<R>, x: &VectorField<R>, gen: Gen) -> Result<W<R>, TransportError> {
        if x.is_zero() {
            return Ok(W::zero(self.ctx));
        }
        let path = f.compose(&DiffeoFamily::flow(x, gen, 1));
        let path_setup = self.setup_at(&path)?;
        let theta = setup_f.chi().interior(x.comps());
        Ok(alpha_along(setup_f, &path_setup, gen, &theta)?)
    }
}

/// `alpha = D_f^{-1}(d/dt (Gamma-bar + r) - nu theta)` for a path setup that
/// is a jet in `gen` whose value at zero is `setup_f`.
pub fn alpha_along<R: Field>(
    setup_f: &FedosovSetup<R>,
    path_setup: &FedosovSetup<R>,
    gen: Gen,
    theta: &DifferentialForm<R>,
) -> Result<W<R>, FedosovError> {
    let ctx = setup_f.ctx();
    let adot = path_setup.connection_form().jet_coeff(gen, 1);
    let b = adot.sub(&W::from_form(ctx, theta).shift_nu(1));
    setup_f.d_inverse(&b)
}

/// `sigma((1/nu)[a, b])` for 0-forms, through `nu^N` of the setup.
pub fn sigma_bracket<R: Field>(setup: &FedosovSetup<R>, a: &W<R>, b: &W<R>) -> FnSeries<R> {
    let n = setup.nu_order();
    a.sigma_of_circ(b).sub(&b.sigma_of_circ(a)).shift(-1).truncate(n)
}

/// `beta(Y)(F) = sigma((1/nu)[alpha(Y), Q F])`.
pub fn beta<R: Field>(setup: &FedosovSetup<R>, alpha: &W<R>, f: &FnSeries<R>) -> FnSeries<R> {
    sigma_bracket(setup, alpha, &setup.quantize(f))
}

/// Value at zero and first derivative of a series whose coefficients are jets in `g`.
pub fn series_jet<R: Field>(s: &FnSeries<R>, g: Gen, n: u8) -> FnSeries<R> {
    let zero = Fun::zero(s.coeff(s.lo()).chart());
    s.map(zero, |f| f.jet_coeff(g, n))
}

/// Drop nu-powers outside `[0, hi]`; negative powers must vanish.
fn nonnegative<R: Field>(s: &FnSeries<R>, hi: i32) -> FnSeries<R> {
    debug_assert!((s.lo()..0).all(|k| s.coeff(k).is_zero()), "negative nu powers in {s}");
    let chart = s.coeff(s.lo()).chart();
    let mut out = NuSeries::zero_fn(chart, 0, hi);
    for k in 0..=hi.min(s.order()) {
        out.set(k, s.coeff(k).clone());
    }
    out
}

/// `D_Y F` at `f` for the section given along `phi_t^Y o f` as a jet in `gen`.
pub fn formal_connection_apply<R: Field>(
    setup_f: &FedosovSetup<R>,
    alpha_y: &W<R>,
    section: &FnSeries<R>,
    gen: Gen,
) -> FnSeries<R> {
    let n = setup_f.nu_order();
    let at0 = series_jet(section, gen, 0).truncate(n);
    let d = series_jet(section, gen, 1).truncate(n);
    d.add(&beta(setup_f, alpha_y, &at0))
}

/// `D_Y(F * G) - D_Y F * G - F * D_Y G` for constant sections `F`, `G`.
pub fn compatibility_residual<R: Field>(
    bg: &Background<R>,
    f: &DiffeoFamily<R>,
    y: &VectorField<R>,
    a: &FnSeries<R>,
    b: &FnSeries<R>,
) -> Result<FnSeries<R>, TransportError> {
    let setup_f = bg.setup_at(f)?;
    let alpha = bg.alpha_left(&setup_f, f, y, Gen::T)?;
    let path = DiffeoFamily::flow(y, Gen::T, 1).compose(f);
    let path_setup = bg.setup_at(&path)?;
    let ab_path = path_setup.star(a, b);
    let lhs = formal_connection_apply(&setup_f, &alpha, &ab_path, Gen::T);
    let da = beta(&setup_f, &alpha, a);
    let db = beta(&setup_f, &alpha, b);
    let n = setup_f.nu_order();
    let rhs = setup_f.star(&da, b).add(&setup_f.star(a, &db)).truncate(n);
    Ok(lhs.sub(&rhs))
}

/// Everything computed for `R(Y o f, Z o f)`.
#[derive(Clone, Debug)]
pub struct CurvatureData<R: Field> {
    pub setup_f: FedosovSetup<R>,
    pub alpha_y: W<R>,
    pub alpha_z: W<R>,
    pub alpha_yz: W<R>,
    /// `(d^Diff alpha)(Y, Z)`.
    pub d_alpha: W<R>,
    pub r: W<R>,
    /// Setups along `phi_s^Y o f` and `phi_s^Z o f` (jets in `S`).
    setup_sy: FedosovSetup<R>,
    setup_sz: FedosovSetup<R>,
    /// `alpha_{phi_s^Y o f}(Z)` and `alpha_{phi_s^Z o f}(Y)`.
    alpha_sy_z: W<R>,
    alpha_sz_y: W<R>,
}

/// `alpha_{phi_s^Y o f}(Z o phi_s^Y o f)` as a jet in `S`, with the setup at `phi_s^Y o f`.
fn alpha_along_flow<R: Field>(
    bg: &Background<R>,
    f: &DiffeoFamily<R>,
    y: &VectorField<R>,
    z: &VectorField<R>,
) -> Result<(FedosovSetup<R>, W<R>), TransportError> {
    let gs = DiffeoFamily::flow(y, Gen::S, 1).compose(f);
    let setup_gs = bg.setup_at(&gs)?;
    let a = bg.alpha_left(&setup_gs, &gs, z, Gen::T)?;
    Ok((setup_gs, a))
}

/// `R = -nu f^*(chi(Y, Z)) + d^Diff alpha(Y, Z) + (1/nu)[alpha(Y), alpha(Z)]`,
/// with `d^Diff alpha(Y, Z) = Y alpha(Z) - Z alpha(Y) - alpha([Y, Z])` on
/// right-invariant fields.
pub fn curvature_r<R: Field>(
    bg: &Background<R>,
    f: &DiffeoFamily<R>,
    y: &VectorField<R>,
    z: &VectorField<R>,
) -> Result<CurvatureData<R>, TransportError> {
    let ctx = bg.ctx();
    let setup_f = bg.setup_at(f)?;
    let (setup_sy, alpha_sy_z) = alpha_along_flow(bg, f, y, z)?;
    let (setup_sz, alpha_sz_y) = alpha_along_flow(bg, f, z, y)?;
    let alpha_z = alpha_sy_z.jet_coeff(Gen::S, 0);
    let alpha_y = alpha_sz_y.jet_coeff(Gen::S, 0);
    let yz = y.bracket(z);
    let alpha_yz = bg.alpha_left(&setup_f, f, &yz, Gen::T)?;
    let d_alpha = alpha_sy_z
        .jet_coeff(Gen::S, 1)
        .sub(&alpha_sz_y.jet_coeff(Gen::S, 1))
        .sub(&alpha_yz);
    let chi_yz = f.pull_fn(&bg.chi().eval2(y.comps(), z.comps()));
    let r = W::function(ctx, chi_yz)
        .shift_nu(1)
        .neg()
        .add(&d_alpha)
        .add(&alpha_y.bracket_over_nu(&alpha_z));
    Ok(CurvatureData { setup_f, alpha_y, alpha_z, alpha_yz, d_alpha, r, setup_sy, setup_sz, alpha_sy_z, alpha_sz_y })
}

impl<R: Field> CurvatureData<R> {
    /// `D_Y D_Z F - D_Z D_Y F - D_{[Y,Z]} F` for a constant section `F`,
    /// computed from `beta` along the two flows.
    pub fn connection_commutator(&self, f: &FnSeries<R>) -> FnSeries<R> {
        let s = &self.setup_f;
        let bz = beta(s, &self.alpha_z, f);
        let by = beta(s, &self.alpha_y, f);
        // d/ds beta_{phi_s^Y o f}(Z) F
        let dy_bz = series_jet(&beta(&self.setup_sy, &self.alpha_sy_z, f), Gen::S, 1);
        let dz_by = series_jet(&beta(&self.setup_sz, &self.alpha_sz_y, f), Gen::S, 1);
        let yz = dy_bz.add(&beta(s, &self.alpha_y, &bz));
        let zy = dz_by.add(&beta(s, &self.alpha_z, &by));
        yz.sub(&zy).sub(&beta(s, &self.alpha_yz, f)).truncate(s.nu_order())
    }

    /// `sigma((1/nu)[R, Q F])`.
    pub fn curvature_action(&self, f: &FnSeries<R>) -> FnSeries<R> {
        sigma_bracket(&self.setup_f, &self.r, &self.setup_f.quantize(f))
    }

    /// `D R` in the degrees that are exact.
    pub fn flatness_residual(&self) -> W<R> {
        let k = self.setup_f.ctx().max_degree;
        self.setup_f.d_flat(&self.r).up_to_degree(k - 3)
    }

    /// `sigma(R)` through `nu^N`.
    pub fn sigma(&self) -> FnSeries<R> {
        nonnegative(&self.r.sigma(), self.setup_f.nu_order())
    }
}

/// A jet (order `J` in [`Gen::T`]) of symplectic connections, closed 2-forms
/// and primitives `theta_t` with `d theta_t = d chi_t / dt`.
#[derive(Clone, Debug)]
pub struct GeometryPath<R: Field> {
    pub nabla: Connection<R>,
    pub chi: DifferentialForm<R>,
    pub theta: DifferentialForm<R>,
    pub order: u8,
}

impl<R: Field> GeometryPath<R> {
    pub fn new(nabla: Connection<R>, chi: DifferentialForm<R>, theta: DifferentialForm<R>, order: u8) -> Result<Self, TransportError> {
        if order == 0 {
            return Err(TransportError::Path("jet order must be at least 1".into()));
        }
        let caps = Caps::none().with(Gen::T, order);
        let nabla = nabla.with_caps(caps);
        let chi = chi.with_caps(caps);
        let theta = theta.with_caps(caps);
        nabla.check_symplectic().map_err(FedosovError::from)?;
        let chi_dot = chi.map(|f| f.jet_derivative(Gen::T));
        let lower = Caps::none().with(Gen::T, order - 1);
        if !theta.d().with_caps(lower).sub(&chi_dot).is_zero() {
            return Err(TransportError::Path("d theta differs from d chi / dt".into()));
        }
        Ok(GeometryPath { nabla, chi, theta, order })
    }

    pub fn constant(nabla: Connection<R>, chi: DifferentialForm<R>, order: u8) -> Result<Self, TransportError> {
        let theta = DifferentialForm::zero(nabla.chart(), 1);
        Self::new(nabla, chi, theta, order)
    }

    /// `nabla + t S` with `chi` fixed.
    pub fn connection_segment(nabla: &Connection<R>, s: &SymTensor3<R>, chi: DifferentialForm<R>, order: u8) -> Result<Self, TransportError> {
        let t = Fun::gen(nabla.chart(), Gen::T, order);
        let mut ts = SymTensor3::zero(nabla.chart());
        for ((i, j, l), f) in s.entries() {
            ts.set(*i, *j, *l, f.mul(&t));
        }
        Self::constant(nabla.plus_symmetric(&ts), chi, order)
    }

    /// `chi_t = chi + t d theta`, `theta_t = theta`.
    pub fn exact_deformation(nabla: Connection<R>, chi: &DifferentialForm<R>, theta: DifferentialForm<R>, order: u8) -> Result<Self, TransportError> {
        let t = Fun::gen(nabla.chart(), Gen::T, order);
        let chi_t = chi.add(&theta.d().mul_fn(&t));
        Self::new(nabla, chi_t, theta, order)
    }

    /// Along `g_t = phi_t^Y o f`: `(pi_nabla(g_t), g_t^* chi, g_t^* i(Y) chi)`.
    pub fn left_flow(bg: &Background<R>, f: &DiffeoFamily<R>, y: &VectorField<R>, order: u8) -> Result<Self, TransportError> {
        let g = DiffeoFamily::flow(y, Gen::T, order).compose(f);
        let theta = g.pull_form(&bg.chi().interior(y.comps()));
        Self::new(bg.connection_at(&g), bg.chi_at(&g), theta, order)
    }
}

/// Solution of the transport problem along a [`GeometryPath`].
#[derive(Clone, Debug)]
pub struct TransportResult<R: Field> {
    pub setup0: FedosovSetup<R>,
    pub setup_t: FedosovSetup<R>,
    /// `h_t`, a jet of order `J - 1`.
    pub h: W<R>,
    pub v: W<R>,
    pub v_inv: W<R>,
    pub order: u8,
}

/// `h_t = -D_t^{-1}(d/dt(Gamma-bar_t + r_t) - nu theta_t)`, `dv/dt = (1/nu) h o v`, `v_0 = 1`.
pub fn build_transport<R: Field>(ctx: WeylContext, path: &GeometryPath<R>) -> Result<TransportResult<R>, TransportError> {
    let j = path.order;
    let setup_t = FedosovSetup::new(ctx, path.nabla.clone(), path.chi.clone())?;
    let setup0 = setup_t.at_zero(Gen::T);
    let lower = Caps::none().with(Gen::T, j - 1);
    let adot = setup_t.connection_form().jet_derivative(Gen::T);
    let b = adot.sub(&W::from_form(ctx, &path.theta.with_caps(lower)).shift_nu(1));
    let h = setup_t.with_caps(lower).d_inverse(&b)?.neg();
    let h_nu = h.shift_nu(-1);
    let one = W::one(ctx);
    let mut v = one.clone();
    let mut v_inv = one.clone();
    for _ in 0..j {
        v = one.add(&h_nu.circ(&v).jet_integrate(Gen::T, j));
        v_inv = one.sub(&v_inv.circ(&h_nu).jet_integrate(Gen::T, j));
    }
    for x in [&v, &v_inv] {
        x.validate().map_err(|e| TransportError::Path(e.to_string()))?;
    }
    Ok(TransportResult { setup0, setup_t, h, v, v_inv, order: j })
}

impl<R: Field> TransportResult<R> {
    /// `B_t(F) = sigma(v o Q_0 F o v^{-1})`.
    pub fn apply(&self, f: &FnSeries<R>) -> FnSeries<R> {
        let q = self.setup0.quantize(f);
        let conj = self.v.circ(&q);
        nonnegative(&conj.sigma_of_circ(&self.v_inv), self.setup0.nu_order())
    }

    /// `B(F *_0 G) - B(F) *_t B(G)`.
    pub fn intertwining_residual(&self, f: &FnSeries<R>, g: &FnSeries<R>) -> FnSeries<R> {
        let fg = self.setup0.star(f, g);
        let lhs = self.apply(&fg);
        let rhs = self.setup_t.star(&self.apply(f), &self.apply(g));
        lhs.sub(&rhs)
    }

    /// `v^{-1} o v - 1` and `v o v^{-1} - 1` in the exact degrees.
    pub fn inverse_residual(&self) -> (W<R>, W<R>) {
        let k = self.setup0.ctx().max_degree - 2;
        let one = W::one(self.setup0.ctx());
        (
            self.v_inv.circ(&self.v).sub(&one).up_to_degree(k),
            self.v.circ(&self.v_inv).sub(&one).up_to_degree(k),
        )
    }

    /// `v` at `t = 0` minus 1.
    pub fn initial_residual(&self) -> W<R> {
        self.v.jet_coeff(Gen::T, 0).sub(&W::one(self.setup0.ctx()))
    }
}

/// Residual of `dB_t(F)/dt = -(1/nu)[H, B_t F]_*` at `t = 0`, with
/// `B_t(F) = (phi_t^{-1})^* sigma(v_t o Q F o v_t^{-1})` along the flow of `H`.
pub fn ham_automorphism_residual<R: Field>(bg: &Background<R>, h: &Fun<R>, f: &FnSeries<R>) -> Result<FnSeries<R>, TransportError> {
    let chart = bg.chart();
    let xh = hamiltonian_vf(h);
    let id = DiffeoFamily::identity(chart);
    let path = GeometryPath::left_flow(bg, &id, &xh, 1)?;
    let tr = build_transport(bg.ctx(), &path)?;
    let bt = tr.apply(f);
    let phi_inv = DiffeoFamily::flow(&xh, Gen::T, 1).inverse();
    let pulled = bt.map(Fun::zero(chart), |c| phi_inv.pull_fn(c));
    let lhs = series_jet(&pulled, Gen::T, 1);
    let n = tr.setup0.nu_order();
    let hs = NuSeries::function(h.clone(), n);
    let rhs = tr.setup0.star_commutator(&hs, f).shift(-1).scale(&-R::one());
    let rhs = nonnegative(&rhs, n - 1);
    Ok(lhs.truncate(n - 1).sub(&rhs))
}

/// `(d_j X^i) y^j d_{y^i} a`: the fibre part of the Lie derivative.
fn fibre_lie<R: Field>(x: &VectorField<R>, a: &W<R>) -> W<R> {
    let ctx = a.ctx();
    let n = ctx.chart.dim();
    let mut terms = Vec::new();
    for (key, c) in a.terms() {
        for i in 0..n {
            let e = key.y[i];
            if e == 0 {
                continue;
            }
            for j in 0..n {
                let dx = x.comp(i).d(j);
                if dx.is_zero() {
                    continue;
                }
                let mut y = key.y;
                y[i] -= 1;
                y[j] += 1;
                terms.push((WKey { y, ..*key }, c.mul(&dx).scale_int(e as i64)));
            }
        }
    }
    W::from_terms(ctx, terms)
}

/// Lie derivative of a Weyl-valued form along `X`.
pub fn lie_derivative<R: Field>(x: &VectorField<R>, a: &W<R>) -> W<R> {
    let c = x.comps();
    a.d().interior(c).add(&a.interior(c).d()).add(&fibre_lie(x, a))
}

/// `L_{X_H} a - (i(X_H) D + D i(X_H) + (1/nu)[-omega_ij y^i X^j + 1/2 (nabla^2 H)_kq y^k y^q - i(X_H) r, .]) a`.
pub fn lie_derivative_residual<R: Field>(setup: &FedosovSetup<R>, h: &Fun<R>, a: &W<R>) -> W<R> {
    let ctx = setup.ctx();
    let x = hamiltonian_vf(h);
    let c = x.comps();
    let hess = setup.connection().hessian(h);
    let gen = W::omega_y(ctx, c)
        .neg()
        .add(&W::quadratic(ctx, |k, q| hess.get(k, q).clone()))
        .sub(&setup.r().interior(c));
    let rhs = setup
        .d_flat(a)
        .interior(c)
        .add(&setup.d_flat(&a.interior(c)))
        .add(&gen.bracket_over_nu(a));
    lie_derivative(&x, a).sub(&rhs).up_to_degree(ctx.max_degree - 2)
}

/// `H - omega_ij y^i X_H^j + 1/2 (nabla^f)^2_kq H y^k y^q - i(X_H) r + alpha_f(f_* X_H)`.
pub fn q_closed_form<R: Field>(
    bg: &Background<R>,
    setup_f: &FedosovSetup<R>,
    f: &DiffeoFamily<R>,
    h: &Fun<R>,
) -> Result<W<R>, TransportError> {
    let ctx = setup_f.ctx();
    let x = hamiltonian_vf(h);
    let c = x.comps();
    let hess = setup_f.connection().hessian(h);
    let alpha = bg.alpha_right(setup_f, f, &x, Gen::T)?;
    Ok(W::function(ctx, h.clone())
        .sub(&W::omega_y(ctx, c))
        .add(&W::quadratic(ctx, |k, q| hess.get(k, q).clone()))
        .sub(&setup_f.r().interior(c))
        .add(&alpha))
}

//! Vector fields, perturbative diffeomorphisms and symplectic connections.

use std::fmt;

use crate::chart::{Chart, ChartError, ChartFunction};
use crate::field::Field;
use crate::forms::DifferentialForm;
use crate::scalar::{Caps, Gen};

type Fun<R> = ChartFunction<R>;

/// `omega_{ij}` of the Darboux form: `+1` at `(i, i+m)`, `-1` at `(i+m, i)`.
pub fn omega_entry(m: usize, i: usize, j: usize) -> i64 {
    if j == i + m {
        1
    } else if i == j + m {
        -1
    } else {
        0
    }
}

/// `Lambda^{ij}`, the inverse matrix of `omega`: `Lambda^{ij} omega_{jk} = delta^i_k`.
pub fn lambda_entry(m: usize, i: usize, j: usize) -> i64 {
    -omega_entry(m, i, j)
}

#[derive(Clone, PartialEq)]
pub struct VectorField<R: Field> {
    comps: Vec<Fun<R>>,
}

impl<R: Field> VectorField<R> {
    pub fn new(comps: Vec<Fun<R>>) -> Self {
        assert!(!comps.is_empty());
        let chart = comps[0].chart();
        assert_eq!(comps.len(), chart.dim(), "wrong number of components");
        assert!(comps.iter().all(|c| c.chart() == chart), "chart mismatch");
        VectorField { comps }
    }

    pub fn zero(chart: Chart) -> Self {
        VectorField { comps: vec![Fun::zero(chart); chart.dim()] }
    }

    /// The coordinate field `d_i` (zero-based).
    pub fn coordinate(chart: Chart, i: usize) -> Self {
        let mut comps = vec![Fun::zero(chart); chart.dim()];
        comps[i] = Fun::one(chart);
        VectorField { comps }
    }

    pub fn chart(&self) -> Chart {
        self.comps[0].chart()
    }

    pub fn comps(&self) -> &[Fun<R>] {
        &self.comps
    }

    pub fn comp(&self, i: usize) -> &Fun<R> {
        &self.comps[i]
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|c| c.is_zero())
    }

    /// `Y(f) = Y^i d_i f`.
    pub fn apply(&self, f: &Fun<R>) -> Fun<R> {
        let mut acc = Fun::zero(f.chart());
        for (i, y) in self.comps.iter().enumerate() {
            if !y.is_zero() {
                acc = acc.add(&y.mul(&f.d(i)));
            }
        }
        acc
    }

    /// `[Y, Z]^k = Y(Z^k) - Z(Y^k)`.
    pub fn bracket(&self, other: &Self) -> Self {
        let comps = (0..self.comps.len())
            .map(|k| self.apply(&other.comps[k]).sub(&other.apply(&self.comps[k])))
            .collect();
        VectorField { comps }
    }

    pub fn add(&self, other: &Self) -> Self {
        VectorField { comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a.add(b)).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        VectorField { comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a.sub(b)).collect() }
    }

    pub fn scale(&self, c: &R) -> Self {
        self.map(|f| f.scale(c))
    }

    pub fn mul_fn(&self, g: &Fun<R>) -> Self {
        self.map(|f| f.mul(g))
    }

    pub fn map(&self, op: impl FnMut(&Fun<R>) -> Fun<R>) -> Self {
        VectorField { comps: self.comps.iter().map(op).collect() }
    }

    pub fn caps(&self) -> Caps {
        self.comps.iter().fold(Caps::none(), |c, f| c.meet(f.caps()))
    }
}

impl<R: Field> fmt::Display for VectorField<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, c) in self.comps.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c}) d{}", i + 1)?;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

impl<R: Field> fmt::Debug for VectorField<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorField({self})")
    }
}

/// `X_H` with `i(X_H) omega = dH`; in Darboux form `X_H^j = Lambda^{ij} d_i H`.
pub fn hamiltonian_vf<R: Field>(h: &Fun<R>) -> VectorField<R> {
    let chart = h.chart();
    let m = chart.m as usize;
    let comps = (0..chart.dim())
        .map(|j| if j < m { h.d(j + m) } else { h.d(j - m).neg() })
        .collect();
    VectorField { comps }
}

/// Dense `d x d` matrix of functions.
#[derive(Clone, PartialEq, Debug)]
pub struct Matrix<R: Field> {
    n: usize,
    data: Vec<Fun<R>>,
}

impl<R: Field> Matrix<R> {
    pub fn identity(chart: Chart) -> Self {
        let n = chart.dim();
        let mut data = vec![Fun::zero(chart); n * n];
        for i in 0..n {
            data[i * n + i] = Fun::one(chart);
        }
        Matrix { n, data }
    }

    pub fn from_fn(chart: Chart, mut f: impl FnMut(usize, usize) -> Fun<R>) -> Self {
        let n = chart.dim();
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Matrix { n, data }
    }

    pub fn get(&self, i: usize, j: usize) -> &Fun<R> {
        &self.data[i * self.n + j]
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.n;
        let chart = self.data[0].chart();
        Matrix::from_fn(chart, |i, j| {
            let mut acc = Fun::zero(chart);
            for k in 0..n {
                let a = self.get(i, k);
                let b = other.get(k, j);
                if !a.is_zero() && !b.is_zero() {
                    acc = acc.add(&a.mul(b));
                }
            }
            acc
        })
    }

    pub fn sub(&self, other: &Self) -> Self {
        let chart = self.data[0].chart();
        Matrix::from_fn(chart, |i, j| self.get(i, j).sub(other.get(i, j)))
    }

    pub fn apply(&self, v: &[Fun<R>]) -> Vec<Fun<R>> {
        let chart = self.data[0].chart();
        (0..self.n)
            .map(|i| {
                let mut acc = Fun::zero(chart);
                for (j, vj) in v.iter().enumerate() {
                    acc = acc.add(&self.get(i, j).mul(vj));
                }
                acc
            })
            .collect()
    }

    /// Inverse of `I + A` with `A` nilpotent, by the terminating Neumann series.
    pub fn inverse_unipotent(&self) -> Self {
        let chart = self.data[0].chart();
        let id = Matrix::identity(chart);
        let a = self.sub(&id);
        for x in &a.data {
            assert!(x.is_nilpotent(), "matrix is not a nilpotent perturbation of the identity");
        }
        let bound = a.data.iter().fold(Caps::none(), |c, f| c.meet(f.caps())).nilpotency_bound();
        let mut acc = id.clone();
        let mut pow = id;
        for _ in 0..bound {
            pow = pow.mul(&a);
            pow = Matrix::from_fn(chart, |i, j| pow.get(i, j).neg());
            if pow.data.iter().all(|f| f.is_zero()) {
                break;
            }
            acc = Matrix::from_fn(chart, |i, j| acc.get(i, j).add(pow.get(i, j)));
        }
        acc
    }
}

/// `f(x) = x + u(x)` with every term of `u` carrying a nilpotent generator.
#[derive(Clone, PartialEq)]
pub struct DiffeoFamily<R: Field> {
    chart: Chart,
    u: Vec<Fun<R>>,
    inv: Vec<Fun<R>>,
    jac: Matrix<R>,
    jac_inv: Matrix<R>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DiffeoError {
    #[error("displacement component {0} has a term free of perturbation parameters")]
    NotNearIdentity(usize),
    #[error(transparent)]
    Chart(#[from] ChartError),
}

impl<R: Field> DiffeoFamily<R> {
    pub fn identity(chart: Chart) -> Self {
        Self::new(vec![Fun::zero(chart); chart.dim()]).expect("identity")
    }

    /// From the displacement `u`; fails unless `u` vanishes at zero parameters.
    pub fn new(u: Vec<Fun<R>>) -> Result<Self, DiffeoError> {
        let chart = u[0].chart();
        if u.len() != chart.dim() {
            return Err(ChartError::Invalid(format!("expected {} components, got {}", chart.dim(), u.len())).into());
        }
        for (i, c) in u.iter().enumerate() {
            if c.chart() != chart {
                return Err(ChartError::Mismatch(chart, c.chart()).into());
            }
            if !c.is_nilpotent() {
                return Err(DiffeoError::NotNearIdentity(i));
            }
        }
        let caps = u.iter().fold(Caps::none(), |c, f| c.meet(f.caps()));
        let bound = caps.nilpotency_bound();
        // w = -u(x + w), iterated; each pass fixes one more order
        let mut w = vec![Fun::zero(chart); chart.dim()];
        for _ in 0..=bound {
            w = u.iter().map(|uk| uk.compose_shift(&w).neg()).collect();
        }
        let w: Vec<_> = w.into_iter().map(|f| f.with_caps(caps)).collect();
        let jac = Matrix::from_fn(chart, |i, j| {
            let d = u[i].d(j);
            if i == j {
                d.add(&Fun::one(chart))
            } else {
                d
            }
        });
        let jac_inv = jac.inverse_unipotent();
        Ok(DiffeoFamily { chart, u, inv: w, jac, jac_inv })
    }

    /// Time-`g` flow of `y` as a jet of order `order` in the generator `g`:
    /// `phi^k = x^k + sum_n g^n/n! Y^n(x^k)`.
    pub fn flow(y: &VectorField<R>, g: Gen, order: u8) -> Self {
        let chart = y.chart();
        let gen = Fun::gen(chart, g, order);
        let mut u = Vec::with_capacity(chart.dim());
        for k in 0..chart.dim() {
            // Y(x^k) = Y^k; higher powers by repeated application
            let mut term = y.comp(k).clone();
            let mut acc = Fun::zero(chart);
            let mut gp = Fun::one(chart);
            let mut fact = R::one();
            for n in 1..=order {
                gp = gp.mul(&gen);
                fact = fact * R::from_int(n as i64);
                acc = acc.add(&term.mul(&gp).scale(&(R::one() / fact.clone())));
                term = y.apply(&term);
            }
            u.push(acc);
        }
        Self::new(u).expect("flow jet is near the identity")
    }

    /// Flow of the Hamiltonian vector field of `h`.
    pub fn hamiltonian_flow(h: &Fun<R>, g: Gen, order: u8) -> Self {
        Self::flow(&hamiltonian_vf(h), g, order)
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn displacement(&self) -> &[Fun<R>] {
        &self.u
    }

    pub fn inverse_displacement(&self) -> &[Fun<R>] {
        &self.inv
    }

    pub fn caps(&self) -> Caps {
        self.u.iter().fold(Caps::none(), |c, f| c.meet(f.caps()))
    }

    pub fn is_identity(&self) -> bool {
        self.u.iter().all(|f| f.is_zero())
    }

    pub fn inverse(&self) -> Self {
        Self::new(self.inv.clone()).expect("inverse is near the identity")
    }

    /// `self o other`.
    pub fn compose(&self, other: &Self) -> Self {
        let u = self
            .u
            .iter()
            .zip(&other.u)
            .map(|(a, b)| b.add(&a.compose_shift(&other.u)))
            .collect();
        Self::new(u).expect("composition is near the identity")
    }

    /// `Df` with `(Df)_{ij} = d_j f^i`.
    pub fn jacobian(&self) -> &Matrix<R> {
        &self.jac
    }

    /// `(Df)^{-1}` at the same point.
    pub fn jacobian_inverse(&self) -> &Matrix<R> {
        &self.jac_inv
    }

    /// `F o f`.
    pub fn pull_fn(&self, f: &Fun<R>) -> Fun<R> {
        if self.is_identity() {
            return f.clone();
        }
        f.compose_shift(&self.u)
    }

    /// `f^* theta`.
    pub fn pull_form(&self, theta: &DifferentialForm<R>) -> DifferentialForm<R> {
        let chart = self.chart;
        let df: Vec<DifferentialForm<R>> = (0..chart.dim())
            .map(|i| {
                let mut acc = DifferentialForm::zero(chart, 1);
                for j in 0..chart.dim() {
                    acc = acc.add(&DifferentialForm::monomial(1 << j, self.jac.get(i, j).clone()));
                }
                acc
            })
            .collect();
        let mut acc = DifferentialForm::zero(chart, theta.degree());
        for (mask, a) in theta.terms() {
            let mut term = DifferentialForm::function(self.pull_fn(a));
            for i in crate::forms::mask_indices(*mask) {
                term = term.wedge(&df[i]);
            }
            acc = acc.add(&term);
        }
        acc
    }

    /// `f_* Y`: `(f_* Y)(f(x)) = Df(x) Y(x)`.
    pub fn push_vf(&self, y: &VectorField<R>) -> VectorField<R> {
        let at_source = self.jac.apply(y.comps());
        let inv = self.inverse();
        VectorField::new(at_source.iter().map(|c| inv.pull_fn(c)).collect())
    }

    /// `f^* Y = (f^{-1})_* Y`: `Df(x)^{-1} Y(f(x))`.
    pub fn pull_vf(&self, y: &VectorField<R>) -> VectorField<R> {
        let at_target: Vec<_> = y.comps().iter().map(|c| self.pull_fn(c)).collect();
        VectorField::new(self.jac_inv.apply(&at_target))
    }

    /// The section `x -> Df(x) Y(x)` of `f^*TM` (the vector field along `f`).
    pub fn differential(&self, y: &VectorField<R>) -> Vec<Fun<R>> {
        self.jac.apply(y.comps())
    }

    pub fn with_caps(&self, caps: Caps) -> Self {
        Self::new(self.u.iter().map(|f| f.with_caps(caps)).collect()).expect("near identity")
    }
}

impl<R: Field> fmt::Debug for DiffeoFamily<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DiffeoFamily(x + [")?;
        for (i, c) in self.u.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "])")
    }
}

/// A rank-3 tensor `T[a][b][c]` of functions, dense.
#[derive(Clone, PartialEq, Debug)]
pub struct Tensor3<R: Field> {
    n: usize,
    data: Vec<Fun<R>>,
}

impl<R: Field> Tensor3<R> {
    pub fn from_fn(chart: Chart, mut f: impl FnMut(usize, usize, usize) -> Fun<R>) -> Self {
        let n = chart.dim();
        let mut data = Vec::with_capacity(n * n * n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    data.push(f(a, b, c));
                }
            }
        }
        Tensor3 { n, data }
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> &Fun<R> {
        &self.data[(a * self.n + b) * self.n + c]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|f| f.is_zero())
    }

    pub fn is_totally_symmetric(&self) -> bool {
        let n = self.n;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let x = self.get(a, b, c);
                    if x != self.get(b, a, c) || x != self.get(a, c, b) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Totally symmetric covariant 3-tensor `S_{ijl}`.
#[derive(Clone, PartialEq, Debug)]
pub struct SymTensor3<R: Field> {
    chart: Chart,
    /// Entries keyed by sorted index triples.
    entries: Vec<((usize, usize, usize), Fun<R>)>,
}

impl<R: Field> SymTensor3<R> {
    pub fn zero(chart: Chart) -> Self {
        SymTensor3 { chart, entries: Vec::new() }
    }

    /// Set `S_{ijl}` (and all its permutations), zero-based indices.
    pub fn set(&mut self, i: usize, j: usize, l: usize, f: Fun<R>) {
        let mut k = [i, j, l];
        k.sort_unstable();
        let key = (k[0], k[1], k[2]);
        self.entries.retain(|(e, _)| *e != key);
        if !f.is_zero() {
            self.entries.push((key, f));
            self.entries.sort_by(|a, b| a.0.cmp(&b.0));
        }
    }

    pub fn get(&self, i: usize, j: usize, l: usize) -> Fun<R> {
        let mut k = [i, j, l];
        k.sort_unstable();
        self.entries
            .iter()
            .find(|(e, _)| *e == (k[0], k[1], k[2]))
            .map(|(_, f)| f.clone())
            .unwrap_or_else(|| Fun::zero(self.chart))
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn entries(&self) -> &[((usize, usize, usize), Fun<R>)] {
        &self.entries
    }

    pub fn to_tensor(&self) -> Tensor3<R> {
        Tensor3::from_fn(self.chart, |a, b, c| self.get(a, b, c))
    }
}

/// Torsion-free connection given by `Gamma^k_{ij}`, symmetric in `(i, j)`.
#[derive(Clone, PartialEq)]
pub struct Connection<R: Field> {
    chart: Chart,
    /// Indexed `[k][i][j]`.
    gamma: Tensor3<R>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConnectionError {
    #[error("Christoffel symbols are not symmetric in the lower indices")]
    Torsion,
    #[error("connection is not symplectic: omega_lk Gamma^k_ij is not totally symmetric")]
    NotSymplectic,
}

impl<R: Field> Connection<R> {
    pub fn flat(chart: Chart) -> Self {
        Connection { chart, gamma: Tensor3::from_fn(chart, |_, _, _| Fun::zero(chart)) }
    }

    /// From Christoffel data `gamma(k, i, j)`; rejects torsion.
    pub fn from_christoffel(
        chart: Chart,
        gamma: impl FnMut(usize, usize, usize) -> Fun<R>,
    ) -> Result<Self, ConnectionError> {
        let gamma = Tensor3::from_fn(chart, gamma);
        let n = chart.dim();
        for k in 0..n {
            for i in 0..n {
                for j in 0..i {
                    if gamma.get(k, i, j) != gamma.get(k, j, i) {
                        return Err(ConnectionError::Torsion);
                    }
                }
            }
        }
        Ok(Connection { chart, gamma })
    }

    /// The flat Darboux connection plus a symmetric 3-tensor:
    /// `omega_{lk} Gamma^k_{ij} = S_{lij}`, i.e. `Gamma^k_{ij} = Lambda^{kl} S_{lij}`.
    pub fn symplectic(s: &SymTensor3<R>) -> Self {
        Self::flat(s.chart()).plus_symmetric(s)
    }

    /// `self + Lambda S`; stays symplectic when `self` is.
    pub fn plus_symmetric(&self, s: &SymTensor3<R>) -> Self {
        let chart = self.chart;
        let m = chart.m as usize;
        let gamma = Tensor3::from_fn(chart, |k, i, j| {
            let mut acc = self.gamma.get(k, i, j).clone();
            for l in 0..chart.dim() {
                let lam = lambda_entry(m, k, l);
                if lam != 0 {
                    acc = acc.add(&s.get(l, i, j).scale_int(lam));
                }
            }
            acc
        });
        Connection { chart, gamma }
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    /// `Gamma^k_{ij}`.
    pub fn gamma(&self, k: usize, i: usize, j: usize) -> &Fun<R> {
        self.gamma.get(k, i, j)
    }

    pub fn christoffel(&self) -> &Tensor3<R> {
        &self.gamma
    }

    pub fn is_flat_data(&self) -> bool {
        self.gamma.is_zero()
    }

    /// `omega_{lk} T^k_{ij}` indexed `[l][i][j]`.
    pub fn lower(chart: Chart, t: &Tensor3<R>) -> Tensor3<R> {
        let m = chart.m as usize;
        Tensor3::from_fn(chart, |l, i, j| {
            let mut acc = Fun::zero(chart);
            for k in 0..chart.dim() {
                let w = omega_entry(m, l, k);
                if w != 0 {
                    acc = acc.add(&t.get(k, i, j).scale_int(w));
                }
            }
            acc
        })
    }

    /// `Gamma_{lij} = omega_{lk} Gamma^k_{ij}`.
    pub fn lowered(&self) -> Tensor3<R> {
        Self::lower(self.chart, &self.gamma)
    }

    pub fn is_symplectic(&self) -> bool {
        self.lowered().is_totally_symmetric()
    }

    pub fn check_symplectic(&self) -> Result<(), ConnectionError> {
        if self.is_symplectic() {
            Ok(())
        } else {
            Err(ConnectionError::NotSymplectic)
        }
    }

    /// `N^l_{ij}` with `omega_{lk} N^l_{ij} = (nabla_i omega)_{jk}`, indexed `[l][i][j]`.
    pub fn n_tensor(&self) -> Tensor3<R> {
        let chart = self.chart;
        let m = chart.m as usize;
        let n = chart.dim();
        let low = self.lowered();
        // (nabla_i omega)_{jk} = Gamma_{kij} - Gamma_{jik}
        let t = |i: usize, j: usize, k: usize| low.get(k, i, j).sub(low.get(j, i, k));
        // omega_{lk} N^l = T_k  =>  N^l = -Lambda^{lk} T_k
        Tensor3::from_fn(chart, |l, i, j| {
            let mut acc = Fun::zero(chart);
            for k in 0..n {
                let lam = lambda_entry(m, l, k);
                if lam != 0 {
                    acc = acc.add(&t(i, j, k).scale_int(-lam));
                }
            }
            acc
        })
    }

    /// `Gamma + (N_{ij} + N_{ji}) / 3`.
    pub fn n_symmetrize(&self) -> Self {
        let chart = self.chart;
        let nt = self.n_tensor();
        let third = R::from_ratio(1, 3);
        let gamma = Tensor3::from_fn(chart, |k, i, j| {
            self.gamma.get(k, i, j).add(&nt.get(k, i, j).add(nt.get(k, j, i)).scale(&third))
        });
        Connection { chart, gamma }
    }

    /// `(f^* nabla)^k_{ij} = (Df^{-1})^k_l [d_i d_j f^l + Gamma^l_{ab}(f) d_i f^a d_j f^b]`.
    pub fn pullback(&self, f: &DiffeoFamily<R>) -> Self {
        if f.is_identity() {
            return self.clone();
        }
        let chart = self.chart;
        let n = chart.dim();
        let jac = f.jacobian();
        let jinv = f.jacobian_inverse();
        let gf: Vec<Fun<R>> = self.gamma.data.iter().map(|g| f.pull_fn(g)).collect();
        let gf = Tensor3 { n, data: gf };
        // inner[l][i][j]
        let inner = Tensor3::from_fn(chart, |l, i, j| {
            let mut acc = f.displacement()[l].d(i).d(j);
            for a in 0..n {
                let dia = jac.get(a, i);
                if dia.is_zero() {
                    continue;
                }
                for b in 0..n {
                    let g = gf.get(l, a, b);
                    if g.is_zero() {
                        continue;
                    }
                    let djb = jac.get(b, j);
                    if djb.is_zero() {
                        continue;
                    }
                    acc = acc.add(&g.mul(dia).mul(djb));
                }
            }
            acc
        });
        let gamma = Tensor3::from_fn(chart, |k, i, j| {
            let mut acc = Fun::zero(chart);
            for l in 0..n {
                let a = jinv.get(k, l);
                let b = inner.get(l, i, j);
                if !a.is_zero() && !b.is_zero() {
                    acc = acc.add(&a.mul(b));
                }
            }
            acc
        });
        Connection { chart, gamma }
    }

    /// `T^k_{ij}` of `self - other`.
    pub fn difference(&self, other: &Self) -> Tensor3<R> {
        Tensor3::from_fn(self.chart, |k, i, j| self.gamma.get(k, i, j).sub(other.gamma.get(k, i, j)))
    }

    /// `R^r_{jkl} = d_k Gamma^r_{lj} - d_l Gamma^r_{kj} + Gamma^r_{ks} Gamma^s_{lj} - Gamma^r_{ls} Gamma^s_{kj}`.
    pub fn curvature(&self) -> Curvature<R> {
        let chart = self.chart;
        let n = chart.dim();
        let mut data = Vec::with_capacity(n * n * n * n);
        for r in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut acc = self.gamma.get(r, l, j).d(k).sub(&self.gamma.get(r, k, j).d(l));
                        for s in 0..n {
                            let a = self.gamma.get(r, k, s);
                            let b = self.gamma.get(s, l, j);
                            if !a.is_zero() && !b.is_zero() {
                                acc = acc.add(&a.mul(b));
                            }
                            let a = self.gamma.get(r, l, s);
                            let b = self.gamma.get(s, k, j);
                            if !a.is_zero() && !b.is_zero() {
                                acc = acc.sub(&a.mul(b));
                            }
                        }
                        data.push(acc);
                    }
                }
            }
        }
        Curvature { n, data }
    }

    /// `nabla^2_{kq} H = d_k d_q H - Gamma^p_{kq} d_p H`.
    pub fn hessian(&self, h: &Fun<R>) -> Matrix<R> {
        let n = self.chart.dim();
        let grad = h.gradient();
        Matrix::from_fn(self.chart, |k, q| {
            let mut acc = grad[q].d(k);
            for (p, gp) in grad.iter().enumerate().take(n) {
                let g = self.gamma.get(p, k, q);
                if !g.is_zero() {
                    acc = acc.sub(&g.mul(gp));
                }
            }
            acc
        })
    }

    pub fn with_caps(&self, caps: Caps) -> Self {
        let data = self.gamma.data.iter().map(|f| f.with_caps(caps)).collect();
        Connection { chart: self.chart, gamma: Tensor3 { n: self.gamma.n, data } }
    }

    /// Coefficient of `g^n` in every Christoffel symbol.
    pub fn jet_coeff(&self, g: Gen, n: u8) -> Self {
        let data = self.gamma.data.iter().map(|f| f.jet_coeff(g, n)).collect();
        Connection { chart: self.chart, gamma: Tensor3 { n: self.gamma.n, data } }
    }

    pub fn caps(&self) -> Caps {
        self.gamma.data.iter().fold(Caps::none(), |c, f| c.meet(f.caps()))
    }
}

impl<R: Field> fmt::Debug for Connection<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Connection{{")?;
        let n = self.chart.dim();
        let mut first = true;
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let g = self.gamma.get(k, i, j);
                    if g.is_zero() {
                        continue;
                    }
                    if !first {
                        write!(f, ", ")?;
                    }
                    first = false;
                    write!(f, "G^{}_{}{} = {}", k + 1, i + 1, j + 1, g)?;
                }
            }
        }
        write!(f, "}}")
    }
}

/// `R^r_{jkl}`, indexed `[r][j][k][l]`.
#[derive(Clone, PartialEq, Debug)]
pub struct Curvature<R: Field> {
    n: usize,
    data: Vec<Fun<R>>,
}

impl<R: Field> Curvature<R> {
    pub fn get(&self, r: usize, j: usize, k: usize, l: usize) -> &Fun<R> {
        let n = self.n;
        &self.data[((r * n + j) * n + k) * n + l]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|f| f.is_zero())
    }
}

/// Difference tensors for `pi_nabla`, e.g. `A = f^*nabla - nabla` and
/// `B = pi_nabla(f) - nabla`, both lowered with `omega` to `[x][y][z] = omega(e_x, T(e_y) e_z)`.
pub fn lowered_difference<R: Field>(a: &Connection<R>, b: &Connection<R>) -> Tensor3<R> {
    Connection::lower(a.chart(), &a.difference(b))
}

/// `pi_nabla(f)`: the `N`-symmetrisation of `f^* nabla`.
pub fn pi_nabla<R: Field>(f: &DiffeoFamily<R>, nabla: &Connection<R>) -> Connection<R> {
    nabla.pullback(f).n_symmetrize()
}

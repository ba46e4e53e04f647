//! Truncated Fock space (optionally tensored with a two-level atom),
//! coherent states and quasi-probability functions.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::SparseOp;
use crate::scalar::{cone, cr, czero, from_usize, ln_factorials, lit, Real, C};

/// Hilbert-space layout. In the atom-cavity basis the index of
/// `|n⟩⊗|s⟩` is `2n + s` with `s = 0` for the lower level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Fock { l_max: usize },
    AtomFock { l_max: usize },
}

/// Atomic level in the atom-cavity basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AtomLevel {
    Lower,
    Upper,
}

impl Basis {
    pub fn l_max(&self) -> usize {
        match *self {
            Basis::Fock { l_max } | Basis::AtomFock { l_max } => l_max,
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Basis::Fock { l_max } => l_max + 1,
            Basis::AtomFock { l_max } => 2 * (l_max + 1),
        }
    }

    pub fn has_atom(&self) -> bool {
        matches!(self, Basis::AtomFock { .. })
    }

    /// Photon number of basis index `p`.
    #[inline]
    pub fn photons(&self, p: usize) -> usize {
        match self {
            Basis::Fock { .. } => p,
            Basis::AtomFock { .. } => p / 2,
        }
    }

    /// Index of `|n⟩` (Fock) or `|n⟩⊗|level⟩` (atom-cavity).
    pub fn index(&self, n: usize, level: AtomLevel) -> usize {
        match self {
            Basis::Fock { .. } => n,
            Basis::AtomFock { .. } => 2 * n + usize::from(level == AtomLevel::Upper),
        }
    }

    pub fn cavity(&self) -> Basis {
        Basis::Fock { l_max: self.l_max() }
    }

    fn describe(&self) -> String {
        format!("{self:?}")
    }
}

fn mismatch(expected: Basis, found: Basis) -> Error {
    Error::BasisMismatch { expected: expected.describe(), found: found.describe() }
}

/// Cavity annihilation operator `a`.
pub fn destroy<T: Real>(basis: Basis) -> SparseOp<T> {
    let l = basis.l_max();
    let mut t = Vec::new();
    for n in 1..=l {
        let v = cr(from_usize::<T>(n).sqrt());
        match basis {
            Basis::Fock { .. } => t.push((n - 1, n, v)),
            Basis::AtomFock { .. } => {
                t.push((2 * (n - 1), 2 * n, v));
                t.push((2 * (n - 1) + 1, 2 * n + 1, v));
            }
        }
    }
    SparseOp::from_triplets(basis.dim(), t)
}

/// Cavity photon-number operator `a†a`.
pub fn number<T: Real>(basis: Basis) -> SparseOp<T> {
    let d: Vec<C<T>> = (0..basis.dim()).map(|p| cr(from_usize(basis.photons(p)))).collect();
    SparseOp::diagonal(&d)
}

/// Atomic lowering operator `σ₋ = |−⟩⟨+|`.
pub fn sigma_minus<T: Real>(basis: Basis) -> Result<SparseOp<T>> {
    if !basis.has_atom() {
        return Err(mismatch(Basis::AtomFock { l_max: basis.l_max() }, basis));
    }
    let t = (0..=basis.l_max()).map(|n| (2 * n, 2 * n + 1, cone())).collect();
    Ok(SparseOp::from_triplets(basis.dim(), t))
}

/// Observable for [`StateVector::expectation`] and [`DensityMatrix::expectation`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observable {
    PhotonNumber,
    FieldAmplitude,
    /// `⟨σ_z⟩ = P(+) − P(−)`.
    AtomicInversion,
    /// `⟨σ₋⟩`.
    AtomicPolarization,
}

fn observable_op<T: Real>(basis: Basis, obs: Observable) -> Result<SparseOp<T>> {
    Ok(match obs {
        Observable::PhotonNumber => number(basis),
        Observable::FieldAmplitude => destroy(basis),
        Observable::AtomicPolarization => sigma_minus(basis)?,
        Observable::AtomicInversion => {
            if !basis.has_atom() {
                return Err(mismatch(Basis::AtomFock { l_max: basis.l_max() }, basis));
            }
            let d: Vec<C<T>> =
                (0..basis.dim()).map(|p| if p % 2 == 1 { cone() } else { -cone::<T>() }).collect();
            SparseOp::diagonal(&d)
        }
    })
}

/// Pure state in a truncated basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<T> {
    basis: Basis,
    amps: Array1<C<T>>,
}

impl<T: Real> StateVector<T> {
    pub fn new(basis: Basis, amps: Vec<C<T>>) -> Result<Self> {
        if amps.len() != basis.dim() {
            return invalid(format!("{} amplitudes for basis of dimension {}", amps.len(), basis.dim()));
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return invalid("non-finite amplitude");
        }
        Ok(Self { basis, amps: Array1::from(amps) })
    }

    /// Fock state `|n⟩`, with the atom in `level` if the basis has one.
    pub fn basis_state(basis: Basis, n: usize, level: AtomLevel) -> Result<Self> {
        if n > basis.l_max() {
            return invalid(format!("Fock index {n} exceeds l_max {}", basis.l_max()));
        }
        let mut a = vec![czero(); basis.dim()];
        a[basis.index(n, level)] = cone();
        Self::new(basis, a)
    }

    /// `|0⟩` or `|0⟩⊗|−⟩`.
    pub fn vacuum(basis: Basis) -> Self {
        Self::basis_state(basis, 0, AtomLevel::Lower).expect("vacuum always representable")
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn amplitudes(&self) -> &[C<T>] {
        self.amps.as_slice().expect("contiguous")
    }

    pub fn norm_sqr(&self) -> T {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr();
        if n <= T::zero() || !n.is_finite() {
            return Err(Error::Numerical("cannot normalise a null state".into()));
        }
        let s = cr(T::one() / n.sqrt());
        Ok(Self { basis: self.basis, amps: self.amps.mapv(|a| a * s) })
    }

    /// Product state with the atom in `level`; `self` must be a cavity state.
    pub fn with_atom(&self, level: AtomLevel) -> Result<Self> {
        let Basis::Fock { l_max } = self.basis else {
            return Err(mismatch(self.basis.cavity(), self.basis));
        };
        let b = Basis::AtomFock { l_max };
        let mut a = vec![czero(); b.dim()];
        for (n, &c) in self.amps.iter().enumerate() {
            a[b.index(n, level)] = c;
        }
        Self::new(b, a)
    }

    pub fn inner(&self, other: &Self) -> Result<C<T>> {
        if self.basis != other.basis {
            return Err(mismatch(self.basis, other.basis));
        }
        Ok(self.amps.iter().zip(other.amps.iter()).map(|(a, b)| a.conj() * b).sum())
    }

    /// `⟨ψ|O|ψ⟩ / ⟨ψ|ψ⟩`.
    pub fn expectation(&self, obs: Observable) -> Result<C<T>> {
        let op = observable_op::<T>(self.basis, obs)?;
        Ok(op.sandwich(self.amplitudes()) / cr(self.norm_sqr()))
    }

    /// Population of the highest retained Fock level.
    pub fn top_population(&self) -> T {
        let l = self.basis.l_max();
        let n: T = self.norm_sqr();
        let top: T = (0..self.basis.dim())
            .filter(|&p| self.basis.photons(p) == l)
            .map(|p| self.amps[p].norm_sqr())
            .sum();
        top / n
    }

    pub fn to_density(&self) -> DensityMatrix<T> {
        let d = self.basis.dim();
        let n = self.norm_sqr();
        let mut m = Array2::from_elem((d, d), czero());
        for i in 0..d {
            for j in 0..d {
                m[[i, j]] = self.amps[i] * self.amps[j].conj() / cr(n);
            }
        }
        DensityMatrix { basis: self.basis, elems: m }
    }
}

/// Density matrix `ρ_mn = ⟨m|ρ|n⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T> {
    basis: Basis,
    elems: Array2<C<T>>,
}

impl<T: Real> DensityMatrix<T> {
    /// Builds a density matrix, checking shape, Hermiticity and unit trace
    /// (both to `1e-8`, loosened for single precision).
    pub fn new(basis: Basis, elems: Array2<C<T>>) -> Result<Self> {
        let d = basis.dim();
        if elems.dim() != (d, d) {
            return invalid(format!("matrix shape {:?} does not match dimension {d}", elems.dim()));
        }
        let m = Self { basis, elems };
        let tol = crate::scalar::tol_floor::<T>(1e-8).max(T::epsilon() * lit(1e3));
        if m.hermiticity_residual() > tol {
            return invalid("density matrix is not Hermitian");
        }
        if (m.trace().re - T::one()).abs() > tol {
            return invalid(format!("density matrix trace {} differs from 1", m.trace().re));
        }
        Ok(m)
    }

    /// Wraps a matrix without validation (internal accumulators).
    pub(crate) fn from_raw(basis: Basis, elems: Array2<C<T>>) -> Self {
        Self { basis, elems }
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn elems(&self) -> &Array2<C<T>> {
        &self.elems
    }

    pub fn get(&self, m: usize, n: usize) -> C<T> {
        self.elems[[m, n]]
    }

    pub fn trace(&self) -> C<T> {
        self.elems.diag().iter().copied().sum()
    }

    pub fn hermiticity_residual(&self) -> T {
        let d = self.basis.dim();
        let mut r = T::zero();
        for i in 0..d {
            for j in i..d {
                r = r.max((self.elems[[i, j]] - self.elems[[j, i]].conj()).norm());
            }
        }
        r
    }

    /// `(ρ + ρ†)/2` rescaled to unit trace.
    pub fn hermitized(&self) -> Self {
        let d = self.basis.dim();
        let mut m = self.elems.clone();
        for i in 0..d {
            for j in 0..d {
                m[[i, j]] = (self.elems[[i, j]] + self.elems[[j, i]].conj()) * lit::<T>(0.5);
            }
        }
        let tr = m.diag().iter().map(|v| v.re).sum::<T>();
        m.mapv_inplace(|v| v / cr(tr));
        Self { basis: self.basis, elems: m }
    }

    pub fn expectation(&self, obs: Observable) -> Result<C<T>> {
        let op = observable_op::<T>(self.basis, obs)?;
        let d = self.basis.dim();
        let mut acc = czero();
        for i in 0..d {
            for (j, v) in op.row(i) {
                acc += v * self.elems[[j, i]];
            }
        }
        Ok(acc)
    }

    /// Photon-number distribution `P(n)` of the cavity.
    pub fn photon_distribution(&self) -> Vec<T> {
        let mut p = vec![T::zero(); self.basis.l_max() + 1];
        for i in 0..self.basis.dim() {
            p[self.basis.photons(i)] += self.elems[[i, i]].re;
        }
        p
    }

    pub fn mean_photon_number(&self) -> T {
        self.photon_distribution().iter().enumerate().map(|(n, &p)| from_usize::<T>(n) * p).sum()
    }

    /// Normalised second-order correlation `⟨a†²a²⟩/⟨a†a⟩²`; NaN when the
    /// state is vacuum to within roundoff.
    pub fn g2(&self) -> T {
        let p = self.photon_distribution();
        let n: T = p.iter().enumerate().map(|(k, &q)| from_usize::<T>(k) * q).sum();
        let nn: T = p
            .iter()
            .enumerate()
            .map(|(k, &q)| from_usize::<T>(k) * (from_usize::<T>(k) - T::one()) * q)
            .sum();
        if n <= T::epsilon() * lit::<T>(1e3) {
            return T::nan();
        }
        nn / (n * n)
    }

    /// Smallest eigenvalue (Hermitian part), computed in double precision.
    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.basis.dim();
        let m = nalgebra::DMatrix::<C<f64>>::from_fn(d, d, |i, j| {
            let a = self.elems[[i, j]];
            let b = self.elems[[j, i]].conj();
            C::new(
                0.5 * (a.re + b.re).to_f64().unwrap_or(f64::NAN),
                0.5 * (a.im + b.im).to_f64().unwrap_or(f64::NAN),
            )
        });
        let ev = nalgebra::linalg::SymmetricEigen::new(m).eigenvalues;
        ev.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Frobenius distance.
    pub fn distance(&self, other: &Self) -> Result<T> {
        if self.basis != other.basis {
            return Err(mismatch(self.basis, other.basis));
        }
        Ok(self
            .elems
            .iter()
            .zip(other.elems.iter())
            .map(|(a, b)| (*a - *b).norm_sqr())
            .sum::<T>()
            .sqrt())
    }
}

/// Traces out the atom; a cavity-only matrix is returned unchanged.
pub fn partial_trace_atom<T: Real>(rho: &DensityMatrix<T>) -> DensityMatrix<T> {
    match rho.basis {
        Basis::Fock { .. } => rho.clone(),
        Basis::AtomFock { l_max } => {
            let d = l_max + 1;
            let mut m = Array2::from_elem((d, d), czero());
            for i in 0..d {
                for j in 0..d {
                    m[[i, j]] = rho.elems[[2 * i, 2 * j]] + rho.elems[[2 * i + 1, 2 * j + 1]];
                }
            }
            DensityMatrix { basis: Basis::Fock { l_max }, elems: m }
        }
    }
}

/// Coherent-state amplitudes `⟨n|α⟩` for `n = 0..=l_max`, computed in log space.
pub(crate) fn coherent_amplitudes<T: Real>(alpha: C<T>, l_max: usize, lnf: &[T]) -> Vec<C<T>> {
    let r = alpha.norm();
    let theta = alpha.arg();
    let half = lit::<T>(0.5);
    let mut out = Vec::with_capacity(l_max + 1);
    for n in 0..=l_max {
        let mag = if n == 0 {
            (-half * r * r).exp()
        } else if r == T::zero() {
            T::zero()
        } else {
            (-half * r * r + from_usize::<T>(n) * r.ln() - half * lnf[n]).exp()
        };
        out.push(C::from_polar(mag, from_usize::<T>(n) * theta));
    }
    out
}

/// Truncated coherent state `|α⟩` (not renormalised after truncation).
/// Logs a warning when `|α|² > l_max / 2`.
pub fn coherent_ket<T: Real>(alpha: C<T>, l_max: usize) -> Result<StateVector<T>> {
    if !alpha.re.is_finite() || !alpha.im.is_finite() {
        return invalid("non-finite coherent amplitude");
    }
    if alpha.norm_sqr() > from_usize::<T>(l_max) * lit(0.5) {
        log::warn!(
            "coherent amplitude |α|² = {} exceeds l_max/2 = {}; truncation leakage likely",
            alpha.norm_sqr(),
            l_max as f64 / 2.0
        );
    }
    let lnf = ln_factorials::<T>(l_max);
    StateVector::new(Basis::Fock { l_max }, coherent_amplitudes(alpha, l_max, &lnf))
}

/// Normalised `|α₁⟩ + |α₂⟩` in the truncated cavity basis.
pub fn superposition_ket<T: Real>(alpha1: C<T>, alpha2: C<T>, l_max: usize) -> Result<StateVector<T>> {
    let a = coherent_ket(alpha1, l_max)?;
    let b = coherent_ket(alpha2, l_max)?;
    let sum: Vec<C<T>> = a.amps.iter().zip(b.amps.iter()).map(|(x, y)| *x + *y).collect();
    StateVector::new(Basis::Fock { l_max }, sum)?.normalized()
}

/// Rectangular sampling grid over phase space, `α = x + iy`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec<T> {
    pub x_min: T,
    pub x_max: T,
    pub y_min: T,
    pub y_max: T,
    pub nx: usize,
    pub ny: usize,
}

impl<T: Real> GridSpec<T> {
    pub fn new(x_min: T, x_max: T, y_min: T, y_max: T, nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 || !(x_max > x_min) || !(y_max > y_min) {
            return invalid("grid needs at least 2x2 points and positive extent");
        }
        Ok(Self { x_min, x_max, y_min, y_max, nx, ny })
    }

    /// Square grid `[-h, h]²` with `n × n` points.
    pub fn square(half_width: T, n: usize) -> Result<Self> {
        Self::new(-half_width, half_width, -half_width, half_width, n, n)
    }

    /// Default grid: 121×121 over `[-1.5 A, 1.5 A]²` with `A` the largest
    /// amplitude of interest (at least 2).
    pub fn default_for(max_amplitude: T) -> Self {
        let a = max_amplitude.max(lit(2.0)) * lit(1.5);
        Self::square(a, 121).expect("valid default grid")
    }

    pub fn dx(&self) -> T {
        (self.x_max - self.x_min) / from_usize(self.nx - 1)
    }

    pub fn dy(&self) -> T {
        (self.y_max - self.y_min) / from_usize(self.ny - 1)
    }

    pub fn x(&self, i: usize) -> T {
        self.x_min + self.dx() * from_usize(i)
    }

    pub fn y(&self, j: usize) -> T {
        self.y_min + self.dy() * from_usize(j)
    }
}

/// Values sampled on a [`GridSpec`]; `values[[iy, ix]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid<T> {
    pub spec: GridSpec<T>,
    pub values: Array2<T>,
}

impl<T: Real> PhaseGrid<T> {
    pub fn from_fn(spec: GridSpec<T>, mut f: impl FnMut(T, T) -> T) -> Self {
        let mut values = Array2::from_elem((spec.ny, spec.nx), T::zero());
        for j in 0..spec.ny {
            let y = spec.y(j);
            for i in 0..spec.nx {
                values[[j, i]] = f(spec.x(i), y);
            }
        }
        Self { spec, values }
    }

    /// Riemann-sum integral over the grid.
    pub fn integral(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.spec.dx() * self.spec.dy()
    }

    /// Location and value of the largest sample.
    pub fn argmax(&self) -> (C<T>, T) {
        let mut best = (0, 0, T::neg_infinity());
        for ((j, i), &v) in self.values.indexed_iter() {
            if v > best.2 {
                best = (j, i, v);
            }
        }
        (C::new(self.spec.x(best.1), self.spec.y(best.0)), best.2)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(other.values.iter())
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    /// CSV with header `x,y,value`, rows ordered by `y` then `x`, 9 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,value\n");
        for j in 0..self.spec.ny {
            for i in 0..self.spec.nx {
                s.push_str(&format!(
                    "{:.8e},{:.8e},{:.8e}\n",
                    self.spec.x(i).to_f64().unwrap_or(f64::NAN),
                    self.spec.y(j).to_f64().unwrap_or(f64::NAN),
                    self.values[[j, i]].to_f64().unwrap_or(f64::NAN)
                ));
            }
        }
        s
    }
}

/// Husimi function `Q(α) = ⟨α|ρ|α⟩ / π` of the cavity field.
pub fn q_function<T: Real>(rho: &DensityMatrix<T>, spec: GridSpec<T>) -> PhaseGrid<T> {
    let rc = partial_trace_atom(rho);
    let l = rc.basis.l_max();
    let lnf = ln_factorials::<T>(l);
    let inv_pi = T::FRAC_1_PI();
    let mut v = Vec::with_capacity(l + 1);
    PhaseGrid::from_fn(spec, |x, y| {
        v.clear();
        v.extend(coherent_amplitudes(C::new(x, y), l, &lnf));
        let mut acc = czero::<T>();
        for m in 0..=l {
            let mut row = czero::<T>();
            for n in 0..=l {
                row += rc.elems[[m, n]] * v[n];
            }
            acc += v[m].conj() * row;
        }
        acc.re * inv_pi
    })
}

/// Husimi function of a pure state, `Σ_s |⟨α|ψ_s⟩|² / π`.
pub fn q_function_pure<T: Real>(psi: &StateVector<T>, spec: GridSpec<T>) -> PhaseGrid<T> {
    let b = psi.basis;
    let l = b.l_max();
    let lnf = ln_factorials::<T>(l);
    let norm = psi.norm_sqr();
    let inv_pi = T::FRAC_1_PI();
    let levels: &[AtomLevel] =
        if b.has_atom() { &[AtomLevel::Lower, AtomLevel::Upper] } else { &[AtomLevel::Lower] };
    PhaseGrid::from_fn(spec, |x, y| {
        let v = coherent_amplitudes(C::new(x, y), l, &lnf);
        let mut q = T::zero();
        for &s in levels {
            let mut acc = czero();
            for n in 0..=l {
                acc += v[n].conj() * psi.amps[b.index(n, s)];
            }
            q += acc.norm_sqr();
        }
        q * inv_pi / norm
    })
}

/// Wigner function of the cavity field, normalised so that `∫W d²α = 1`,
/// with `α = x + iy` and `x = (a + a†)/2`.
///
/// Uses the Laguerre representation of the displaced-parity matrix
/// elements; for each off-diagonal `k = n − m` the combination
/// `√(m!/n!) |2α|^k e^{-2|α|²} L_m^{(k)}(4|α|²)` obeys a bounded
/// three-term recurrence in `m`.
pub fn wigner_function<T: Real>(rho: &DensityMatrix<T>, spec: GridSpec<T>) -> PhaseGrid<T> {
    let rc = partial_trace_atom(rho);
    let l = rc.basis.l_max();
    let lnf = ln_factorials::<T>(l);
    let two_over_pi = lit::<T>(2.0) * T::FRAC_1_PI();
    let mut ell = vec![T::zero(); l + 1];
    PhaseGrid::from_fn(spec, |x, y| {
        let alpha = C::new(x, y);
        let b = lit::<T>(4.0) * alpha.norm_sqr();
        let r2 = lit::<T>(2.0) * alpha.norm();
        let theta = alpha.arg();
        let mut w = T::zero();
        for k in 0..=l {
            let mmax = l - k;
            laguerre_wigner_row(k, mmax, b, r2, &lnf, &mut ell);
            let phase = C::from_polar(T::one(), from_usize::<T>(k) * theta);
            let mut s = czero::<T>();
            for m in 0..=mmax {
                let sign = if m % 2 == 0 { T::one() } else { -T::one() };
                s += rc.elems[[m, m + k]] * cr(sign * ell[m]);
            }
            if k == 0 {
                w += s.re;
            } else {
                w += lit::<T>(2.0) * (s * phase).re;
            }
        }
        w * two_over_pi
    })
}

/// Fills `ell[m] = √(m!/(m+k)!) r2^k e^{-b/2} L_m^{(k)}(b)` for `m = 0..=mmax`.
fn laguerre_wigner_row<T: Real>(k: usize, mmax: usize, b: T, r2: T, lnf: &[T], ell: &mut [T]) {
    let half = lit::<T>(0.5);
    let kk = from_usize::<T>(k);
    ell[0] = if k == 0 {
        (-half * b).exp()
    } else if r2 == T::zero() {
        T::zero()
    } else {
        (kk * r2.ln() - half * lnf[k] - half * b).exp()
    };
    if mmax == 0 {
        return;
    }
    ell[1] = (T::one() + kk - b) * ell[0] / (T::one() + kk).sqrt();
    for m in 1..mmax {
        let mf = from_usize::<T>(m);
        ell[m + 1] = ((lit::<T>(2.0) * mf + T::one() + kk - b) * ell[m] - (mf * (mf + kk)).sqrt() * ell[m - 1])
            / ((mf + T::one()) * (mf + kk + T::one())).sqrt();
    }
}

//! Model parameters, Hamiltonians, jump operators and master-equation generators.
//!
//! Jaynes–Cummings (κ = 1):
//! `H = −Δω(a†a + σ₊σ₋) + ig(a†σ₋ − aσ₊) + iε(a† − a)`, jump operators
//! `√(2κ) a` and `√γ σ₋`.
//!
//! Kerr oscillator (χ = 1):
//! `H = −Δω a†a + χ a†²a² + iε(a† − a)`, jump operator `√(2κ) a`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{destroy, number, sigma_minus, Basis, DensityMatrix};
use crate::linalg::SparseOp;
use crate::scalar::{ci, cr, czero, from_usize, lit, Real, C};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Two-level atom coupled to a cavity mode.
    JaynesCummings,
    /// Kerr-nonlinear oscillator; `chi = 0` gives the driven damped cavity.
    Kerr,
}

/// Linear ramp of the drive amplitude from `start` to `stop` over `duration`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveRamp<T> {
    pub start: T,
    pub stop: T,
    pub duration: T,
}

impl<T: Real> DriveRamp<T> {
    pub fn at(&self, t: T) -> T {
        if t >= self.duration {
            return self.stop;
        }
        let f = (t / self.duration).max(T::zero());
        self.start + (self.stop - self.start) * f
    }
}

/// Physical parameters. Rates are in units of `κ` (Jaynes–Cummings) or
/// `χ` (Kerr, where `kappa` carries the ratio `κ/χ`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub kind: ModelKind,
    pub kappa: T,
    pub g: T,
    pub epsilon: T,
    pub delta_omega: T,
    pub gamma: T,
    pub n_bar: T,
    pub eta: T,
    pub chi: T,
    pub ramp: Option<DriveRamp<T>>,
}

impl<T: Real> ModelParams<T> {
    /// Jaynes–Cummings model with `κ = 1`, `γ = 0`, `n̄ = 0`, `η = 1`.
    pub fn jaynes_cummings(g: T, epsilon: T, delta_omega: T) -> Self {
        Self {
            kind: ModelKind::JaynesCummings,
            kappa: T::one(),
            g,
            epsilon,
            delta_omega,
            gamma: T::zero(),
            n_bar: T::zero(),
            eta: T::one(),
            chi: T::zero(),
            ramp: None,
        }
    }

    /// Kerr oscillator with `χ = 1` and damping `κ/χ = kappa_over_chi`.
    pub fn kerr(kappa_over_chi: T, epsilon: T, delta_omega: T) -> Self {
        Self {
            kind: ModelKind::Kerr,
            kappa: kappa_over_chi,
            chi: T::one(),
            g: T::zero(),
            epsilon,
            delta_omega,
            gamma: T::zero(),
            n_bar: T::zero(),
            eta: T::one(),
            ramp: None,
        }
    }

    /// Damped, optionally driven cavity without nonlinearity (`κ = 1`).
    pub fn empty_cavity(epsilon: T, delta_omega: T) -> Self {
        Self { kappa: T::one(), chi: T::zero(), ..Self::kerr(T::one(), epsilon, delta_omega) }
    }

    pub fn with_gamma(mut self, gamma: T) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_thermal(mut self, n_bar: T, eta: T) -> Self {
        self.n_bar = n_bar;
        self.eta = eta;
        self
    }

    pub fn with_ramp(mut self, ramp: DriveRamp<T>) -> Self {
        self.ramp = Some(ramp);
        self
    }

    pub fn basis(&self, l_max: usize) -> Basis {
        match self.kind {
            ModelKind::JaynesCummings => Basis::AtomFock { l_max },
            ModelKind::Kerr => Basis::Fock { l_max },
        }
    }

    /// Drive amplitude at time `t`.
    pub fn epsilon_at(&self, t: T) -> T {
        self.ramp.map_or(self.epsilon, |r| r.at(t))
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("kappa", self.kappa),
            ("g", self.g),
            ("epsilon", self.epsilon),
            ("delta_omega", self.delta_omega),
            ("gamma", self.gamma),
            ("n_bar", self.n_bar),
            ("eta", self.eta),
            ("chi", self.chi),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return invalid(format!("{name} is not finite"));
            }
            if name != "delta_omega" && v < T::zero() {
                return invalid(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.kappa <= T::zero() {
            return invalid("kappa must be positive");
        }
        if self.eta > T::one() {
            return invalid(format!("eta must lie in [0, 1], got {}", self.eta));
        }
        match self.kind {
            ModelKind::JaynesCummings if self.chi != T::zero() => {
                return invalid("chi is only meaningful for the Kerr model");
            }
            ModelKind::Kerr if self.g != T::zero() || self.gamma != T::zero() => {
                return invalid("g and gamma are only meaningful for the Jaynes-Cummings model");
            }
            _ => {}
        }
        if let Some(r) = self.ramp {
            if !(r.duration > T::zero()) || !r.start.is_finite() || !r.stop.is_finite() {
                return invalid("drive ramp needs finite endpoints and positive duration");
            }
            if r.start < T::zero() || r.stop < T::zero() {
                return invalid("drive ramp endpoints must be non-negative");
            }
        }
        Ok(())
    }
}

/// Which reservoir a jump belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    /// Photon emitted from the cavity, `√(2κ(n̄+1)) a`.
    Cavity,
    /// Thermal photon absorbed by the cavity, `√(2κn̄) a†`.
    CavityAbsorption,
    /// Spontaneous emission, `√γ σ₋`.
    Atom,
}

/// A jump operator together with `C†C`.
#[derive(Clone, Debug)]
pub struct JumpChannel<T> {
    pub kind: ChannelKind,
    pub op: SparseOp<T>,
    pub op_dag_op: SparseOp<T>,
}

/// Operators of a model at fixed truncation, ready for time stepping.
#[derive(Clone, Debug)]
pub struct Dynamics<T> {
    pub params: ModelParams<T>,
    pub basis: Basis,
    /// Hamiltonian without the drive term.
    pub h_static: SparseOp<T>,
    /// Drive operator `i(a† − a)`, multiplied by `ε(t)`.
    pub drive: SparseOp<T>,
    /// `−(i/2) Σ C†C`.
    pub anti_hermitian: SparseOp<T>,
    pub channels: Vec<JumpChannel<T>>,
    /// `H_eff` at constant drive; `None` when the drive is ramped.
    h_eff_fixed: Option<SparseOp<T>>,
    h_eff_base: SparseOp<T>,
    pub number: SparseOp<T>,
    pub a: SparseOp<T>,
}

impl<T: Real> Dynamics<T> {
    pub fn new(params: &ModelParams<T>, l_max: usize) -> Result<Self> {
        params.validate()?;
        if l_max < 1 {
            return invalid("l_max must be at least 1");
        }
        let basis = params.basis(l_max);
        let a = destroy::<T>(basis);
        let ad = a.adjoint();
        let n = number::<T>(basis);
        let mut h = n.scale(cr(-params.delta_omega));
        match params.kind {
            ModelKind::JaynesCummings => {
                let sm = sigma_minus::<T>(basis)?;
                let sp = sm.adjoint();
                let spsm = sp.mul(&sm);
                h = h.add(&spsm.scale(cr(-params.delta_omega)));
                let coupling = ad.mul(&sm).add(&a.mul(&sp).scale(cr(-T::one())));
                h = h.add(&coupling.scale(ci::<T>() * cr(params.g)));
            }
            ModelKind::Kerr => {
                let d: Vec<C<T>> = (0..basis.dim())
                    .map(|k| {
                        let kf = from_usize::<T>(k);
                        cr(params.chi * kf * (kf - T::one()))
                    })
                    .collect();
                h = h.add(&SparseOp::diagonal(&d));
            }
        }
        let drive = ad.add(&a.scale(cr(-T::one()))).scale(ci());

        let two = lit::<T>(2.0);
        let mut channels = Vec::new();
        let emit_rate = two * params.kappa * (T::one() + params.n_bar);
        channels.push(JumpChannel {
            kind: ChannelKind::Cavity,
            op: a.scale(cr(emit_rate.sqrt())),
            op_dag_op: n.scale(cr(emit_rate)),
        });
        if params.n_bar > T::zero() {
            let rate = two * params.kappa * params.n_bar;
            let aad = a.mul(&ad);
            channels.push(JumpChannel {
                kind: ChannelKind::CavityAbsorption,
                op: ad.scale(cr(rate.sqrt())),
                op_dag_op: aad.scale(cr(rate)),
            });
        }
        if params.kind == ModelKind::JaynesCummings && params.gamma > T::zero() {
            let sm = sigma_minus::<T>(basis)?;
            channels.push(JumpChannel {
                kind: ChannelKind::Atom,
                op: sm.scale(cr(params.gamma.sqrt())),
                op_dag_op: sm.adjoint().mul(&sm).scale(cr(params.gamma)),
            });
        }
        let mut anti = SparseOp::zeros(basis.dim());
        for c in &channels {
            anti = anti.add(&c.op_dag_op);
        }
        let anti_hermitian = anti.scale(C::new(T::zero(), -lit::<T>(0.5)));
        let h_eff_base = h.add(&anti_hermitian);
        let h_eff_fixed = match params.ramp {
            None => Some(h_eff_base.add(&drive.scale(cr(params.epsilon)))),
            Some(_) => None,
        };
        Ok(Self {
            params: params.clone(),
            basis,
            h_static: h,
            drive,
            anti_hermitian,
            channels,
            h_eff_fixed,
            h_eff_base,
            number: n,
            a,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Hermitian Hamiltonian at time `t`.
    pub fn hamiltonian(&self, t: T) -> SparseOp<T> {
        self.h_static.add(&self.drive.scale(cr(self.params.epsilon_at(t))))
    }

    /// Non-Hermitian `H_eff = H − (i/2) Σ C†C` at time `t`.
    pub fn h_eff(&self, t: T) -> SparseOp<T> {
        match &self.h_eff_fixed {
            Some(h) => h.clone(),
            None => self.h_eff_base.add(&self.drive.scale(cr(self.params.epsilon_at(t)))),
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        self.h_eff_fixed.is_none()
    }

    /// `out = −i H_eff(t) ψ`.
    #[inline]
    pub fn schrodinger_rhs(&self, t: T, psi: &[C<T>], out: &mut [C<T>]) {
        let mi = -ci::<T>();
        match &self.h_eff_fixed {
            Some(h) => {
                h.apply(psi, out);
                for v in out.iter_mut() {
                    *v = *v * mi;
                }
            }
            None => {
                self.h_eff_base.apply(psi, out);
                self.drive.apply_add(cr(self.params.epsilon_at(t)), psi, out);
                for v in out.iter_mut() {
                    *v = *v * mi;
                }
            }
        }
    }

    /// Lindblad generator on a row-major flattened density matrix:
    /// `−i(H_eff ρ − ρ H_eff†) + Σ C ρ C†`.
    pub fn lindblad_rhs_flat(&self, t: T, rho: &[C<T>], out: &mut [C<T>], scratch: &mut Vec<C<T>>) {
        let d = self.dim();
        let owned;
        let h = match &self.h_eff_fixed {
            Some(h) => h,
            None => {
                owned = self.h_eff(t);
                &owned
            }
        };
        let mi = -ci::<T>();
        for v in out.iter_mut() {
            *v = czero();
        }
        // −i H ρ
        for p in 0..d {
            let orow = &mut out[p * d..(p + 1) * d];
            for (k, hv) in h.row(p) {
                let c = mi * hv;
                let rrow = &rho[k * d..(k + 1) * d];
                for q in 0..d {
                    orow[q] += c * rrow[q];
                }
            }
        }
        // + i ρ H† : (ρH†)_pq = Σ_k ρ_pk conj(H_qk)
        let ip = ci::<T>();
        for p in 0..d {
            let rrow = &rho[p * d..(p + 1) * d];
            let orow = &mut out[p * d..(p + 1) * d];
            for q in 0..d {
                let mut acc = czero();
                for (k, hv) in h.row(q) {
                    acc += rrow[k] * hv.conj();
                }
                orow[q] += ip * acc;
            }
        }
        scratch.resize(d * d, czero());
        for ch in &self.channels {
            // T = C ρ
            for v in scratch.iter_mut() {
                *v = czero();
            }
            for p in 0..d {
                for (k, cv) in ch.op.row(p) {
                    let rrow = &rho[k * d..(k + 1) * d];
                    let srow = &mut scratch[p * d..(p + 1) * d];
                    for q in 0..d {
                        srow[q] += cv * rrow[q];
                    }
                }
            }
            // out += T C†
            for p in 0..d {
                let srow = &scratch[p * d..(p + 1) * d];
                let orow = &mut out[p * d..(p + 1) * d];
                for q in 0..d {
                    let mut acc = czero();
                    for (l, cv) in ch.op.row(q) {
                        acc += srow[l] * cv.conj();
                    }
                    orow[q] += acc;
                }
            }
        }
    }

    /// Lindblad generator applied to a density matrix.
    pub fn lindblad_rhs(&self, t: T, rho: &DensityMatrix<T>) -> Result<Array2<C<T>>> {
        if rho.basis() != self.basis {
            return Err(Error::BasisMismatch {
                expected: format!("{:?}", self.basis),
                found: format!("{:?}", rho.basis()),
            });
        }
        let d = self.dim();
        let flat: Vec<C<T>> = rho.elems().iter().copied().collect();
        let mut out = vec![czero(); d * d];
        let mut scratch = Vec::new();
        self.lindblad_rhs_flat(t, &flat, &mut out, &mut scratch);
        Ok(Array2::from_shape_vec((d, d), out).expect("square"))
    }
}

fn require_kind<T: Real>(p: &ModelParams<T>, kind: ModelKind) -> Result<()> {
    if p.kind != kind {
        return invalid(format!("expected {kind:?} parameters, got {:?}", p.kind));
    }
    Ok(())
}

/// Jaynes–Cummings Hamiltonian at `t = 0`.
pub fn jc_hamiltonian<T: Real>(p: &ModelParams<T>, l_max: usize) -> Result<SparseOp<T>> {
    require_kind(p, ModelKind::JaynesCummings)?;
    Ok(Dynamics::new(p, l_max)?.hamiltonian(T::zero()))
}

/// Non-Hermitian effective Hamiltonian `H − iκa†a − i(γ/2)σ₊σ₋` at `t = 0`.
pub fn jc_effective_hamiltonian<T: Real>(p: &ModelParams<T>, l_max: usize) -> Result<SparseOp<T>> {
    require_kind(p, ModelKind::JaynesCummings)?;
    Ok(Dynamics::new(p, l_max)?.h_eff(T::zero()))
}

/// `dρ/dt` of the Jaynes–Cummings master equation (with spontaneous emission when `γ > 0`).
pub fn jc_lindblad_rhs<T: Real>(rho: &DensityMatrix<T>, p: &ModelParams<T>) -> Result<Array2<C<T>>> {
    require_kind(p, ModelKind::JaynesCummings)?;
    Dynamics::new(p, rho.basis().l_max())?.lindblad_rhs(T::zero(), rho)
}

/// `dρ/dt` of the Kerr-oscillator master equation,
/// `−i[H, ρ] + κ(2aρa† − a†aρ − ρa†a)`.
pub fn kerr_lindblad_rhs<T: Real>(rho: &DensityMatrix<T>, p: &ModelParams<T>) -> Result<Array2<C<T>>> {
    require_kind(p, ModelKind::Kerr)?;
    Dynamics::new(p, rho.basis().l_max())?.lindblad_rhs(T::zero(), rho)
}

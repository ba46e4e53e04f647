//! Master-equation time evolution, steady states and the analytic Kerr
//! Wigner function.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fock::{self, DensityMatrix, GridSpec, PhaseGrid, StateVector};
use crate::linalg::BandedMatrix;
use crate::models::{Dynamics, ModelKind, ModelParams};
use crate::ode::{rk4_step, Workspace};
use crate::scalar::{ci, cr, czero, from_usize, lit, to_f64, Real, C};
use crate::special::hyp0f1_regularized;

/// How the steady state is obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SteadyMethod {
    /// Null vector of the banded Liouvillian by LU-based inverse iteration.
    Direct,
    /// RK4 integration from the ground state until `max|dρ/dt| < tol`.
    Integrate { dt: f64, max_time: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct SteadyOptions {
    pub method: SteadyMethod,
    /// Acceptance threshold on `max|L ρ|`.
    pub tol: f64,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self { method: SteadyMethod::Direct, tol: 1e-9 }
    }
}

/// Steady state and derived figures of merit.
#[derive(Clone, Debug)]
pub struct SteadyReport<T> {
    pub rho: DensityMatrix<T>,
    pub photon_number: T,
    pub g2: T,
    /// `max|L ρ|` of the returned matrix.
    pub residual: T,
    /// Smallest eigenvalue of the returned matrix.
    pub min_eigenvalue: f64,
}

#[derive(Serialize)]
struct ReportLine {
    photon_number: f64,
    g2: f64,
    residual: f64,
    min_eigenvalue: f64,
}

impl<T: Real> SteadyReport<T> {
    /// Single-line JSON summary.
    pub fn summary_json(&self) -> String {
        serde_json::to_string(&ReportLine {
            photon_number: to_f64(self.photon_number),
            g2: to_f64(self.g2),
            residual: to_f64(self.residual),
            min_eigenvalue: self.min_eigenvalue,
        })
        .expect("serialisable")
    }
}

fn max_abs<T: Real>(v: &[C<T>]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.norm()))
}

/// Residual `max|L ρ|` of a density matrix under the model's generator.
pub fn residual<T: Real>(dynamics: &Dynamics<T>, rho: &DensityMatrix<T>) -> Result<T> {
    let r = dynamics.lindblad_rhs(T::zero(), rho)?;
    Ok(r.iter().fold(T::zero(), |m, x| m.max(x.norm())))
}

/// Banded matrix of the Liouvillian acting on `vec(ρ)` with index `p·N + q`.
pub fn liouvillian_banded<T: Real>(dynamics: &Dynamics<T>) -> BandedMatrix<T> {
    let n = dynamics.dim();
    let h = dynamics.h_eff(T::zero());
    let mut bw = h.bandwidth();
    for c in &dynamics.channels {
        bw = bw.max(c.op.bandwidth());
    }
    let band = bw * n + bw;
    let mut m = BandedMatrix::new(n * n, band, band);
    let mi = -ci::<T>();
    for p in 0..n {
        for q in 0..n {
            let row = p * n + q;
            // −i H_eff ρ
            for (k, hv) in h.row(p) {
                m.add(row, k * n + q, mi * hv);
            }
            // +i ρ H_eff†
            for (k, hv) in h.row(q) {
                m.add(row, p * n + k, ci::<T>() * hv.conj());
            }
            for ch in &dynamics.channels {
                for (k, cv) in ch.op.row(p) {
                    for (l, dv) in ch.op.row(q) {
                        m.add(row, k * n + l, cv * dv.conj());
                    }
                }
            }
        }
    }
    m
}

/// Steady state of the model's master equation.
pub fn steady_state<T: Real>(
    params: &ModelParams<T>,
    l_max: usize,
    opts: SteadyOptions,
) -> Result<SteadyReport<T>> {
    if params.ramp.is_some() {
        return invalid("steady state requires a time-independent drive");
    }
    let dynamics = Dynamics::new(params, l_max)?;
    let rho = match opts.method {
        SteadyMethod::Direct => direct_null_vector(&dynamics)?,
        SteadyMethod::Integrate { dt, max_time } => integrate_to_steady(&dynamics, dt, max_time, opts.tol)?,
    };
    let res = residual(&dynamics, &rho)?;
    if !(to_f64(res) <= opts.tol) {
        return Err(Error::NonConvergence { residual: to_f64(res), t: f64::NAN });
    }
    let rc = fock::partial_trace_atom(&rho);
    let min_eigenvalue = rho.min_eigenvalue();
    Ok(SteadyReport { photon_number: rc.mean_photon_number(), g2: rc.g2(), residual: res, min_eigenvalue, rho })
}

fn direct_null_vector<T: Real>(dynamics: &Dynamics<T>) -> Result<DensityMatrix<T>> {
    let n = dynamics.dim();
    let lu = liouvillian_banded(dynamics).factor();
    // start from the maximally mixed state; two rounds of inverse iteration
    let mut x = vec![czero::<T>(); n * n];
    for p in 0..n {
        x[p * n + p] = cr(T::one() / from_usize(n));
    }
    for _ in 0..3 {
        lu.solve(&mut x)?;
        let tr: C<T> = (0..n).map(|p| x[p * n + p]).sum();
        if tr.norm() == T::zero() || !tr.re.is_finite() {
            return Err(Error::Numerical("steady-state inverse iteration lost the trace".into()));
        }
        for v in x.iter_mut() {
            *v = *v / tr;
        }
    }
    let m = Array2::from_shape_vec((n, n), x).expect("square");
    Ok(DensityMatrix::from_raw(dynamics.basis, m).hermitized())
}

fn integrate_to_steady<T: Real>(dynamics: &Dynamics<T>, dt: f64, max_time: f64, tol: f64) -> Result<DensityMatrix<T>> {
    if !(dt > 0.0) || !(max_time > 0.0) {
        return invalid("integration step and horizon must be positive");
    }
    let n = dynamics.dim();
    let mut y = vec![czero::<T>(); n * n];
    y[0] = cr(T::one());
    let mut ws = Workspace::new(n * n);
    let mut scratch = Vec::new();
    let mut dy = vec![czero::<T>(); n * n];
    let h = lit::<T>(dt);
    let check_every = ((0.5 / dt).ceil() as usize).max(1);
    let steps = (max_time / dt).ceil() as usize;
    let mut t = T::zero();
    let mut inner_scratch = Vec::new();
    let mut f = |t: T, y: &[C<T>], out: &mut [C<T>]| dynamics.lindblad_rhs_flat(t, y, out, &mut inner_scratch);
    let mut last = f64::INFINITY;
    for k in 1..=steps {
        rk4_step(&mut f, t, &mut y, h, &mut ws);
        t += h;
        if k % check_every == 0 {
            dynamics.lindblad_rhs_flat(t, &y, &mut dy, &mut scratch);
            last = to_f64(max_abs(&dy));
            if !last.is_finite() {
                return Err(Error::Numerical("master-equation integration diverged".into()));
            }
            if last < tol {
                let m = Array2::from_shape_vec((n, n), y).expect("square");
                return Ok(DensityMatrix::from_raw(dynamics.basis, m).hermitized());
            }
        }
    }
    Err(Error::NonConvergence { residual: last, t: max_time })
}

/// Integrates the master equation with fixed-step RK4 from `rho0` and
/// returns `ρ(t)` at each requested time (ascending, `≥ 0`).
pub fn integrate_master_equation<T: Real>(
    dynamics: &Dynamics<T>,
    rho0: &DensityMatrix<T>,
    dt: T,
    times: &[T],
) -> Result<Vec<DensityMatrix<T>>> {
    if rho0.basis() != dynamics.basis {
        return Err(Error::BasisMismatch {
            expected: format!("{:?}", dynamics.basis),
            found: format!("{:?}", rho0.basis()),
        });
    }
    if !(dt > T::zero()) {
        return invalid("dt must be positive");
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < T::zero()) {
        return invalid("sample times must be non-negative and ascending");
    }
    let n = dynamics.dim();
    let mut y: Vec<C<T>> = rho0.elems().iter().copied().collect();
    let mut ws = Workspace::new(n * n);
    let mut scratch = Vec::new();
    let mut f = |t: T, y: &[C<T>], out: &mut [C<T>]| dynamics.lindblad_rhs_flat(t, y, out, &mut scratch);
    let mut out = Vec::with_capacity(times.len());
    let mut k = 0usize;
    let mut t = T::zero();
    for &target in times {
        let n_target = (to_f64(target) / to_f64(dt)).round() as usize;
        while k < n_target {
            rk4_step(&mut f, t, &mut y, dt, &mut ws);
            k += 1;
            t = dt * from_usize(k);
        }
        if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numerical("master-equation integration diverged".into()));
        }
        let m = Array2::from_shape_vec((n, n), y.clone()).expect("square");
        out.push(DensityMatrix::from_raw(dynamics.basis, m));
    }
    Ok(out)
}

/// Steady-state reference for the multiphoton-resonance cases (`L_max = 20`).
pub fn multiphoton_reference<T: Real>(params: &ModelParams<T>) -> Result<SteadyReport<T>> {
    steady_state(params, 20, SteadyOptions::default())
}

/// Logarithm of the unnormalised analytic steady-state Wigner function of
/// the Kerr oscillator at `α = x + iy`.
///
/// With `λ = (κ − iΔω)/(iχ)` and `ε̃ = ε/(iχ)` the density is
/// `e^{−2|α|²} |J_{λ−1}(z)/(α*)^{(λ−1)/2}|²`, `z² = −8ε̃α*`. The ratio is
/// evaluated as the entire function `Σ (2ε̃α*)^k / (k! Γ(λ+k))`, which equals
/// it up to a constant factor and carries no branch cut.
pub fn kerr_log_wigner_analytic<T: Real>(x: T, y: T, params: &ModelParams<T>) -> Result<T> {
    if params.kind != ModelKind::Kerr {
        return invalid("analytic Wigner function needs Kerr parameters");
    }
    if params.chi == T::zero() {
        return invalid("analytic Wigner function needs chi > 0");
    }
    let i = ci::<T>();
    let chi = cr(params.chi);
    let lambda = (cr::<T>(params.kappa) - i * params.delta_omega) / (i * chi);
    let eps_t = cr::<T>(params.epsilon) / (i * chi);
    let alpha_c = C::new(x, -y);
    let w = eps_t * alpha_c * lit::<T>(2.0);
    let f = hyp0f1_regularized(lambda, w)?;
    Ok(lit::<T>(-2.0) * (x * x + y * y) + lit::<T>(2.0) * f.ln_abs())
}

/// Unnormalised analytic Kerr Wigner function (see [`kerr_log_wigner_analytic`]).
pub fn kerr_wigner_analytic<T: Real>(x: T, y: T, params: &ModelParams<T>) -> Result<T> {
    Ok(kerr_log_wigner_analytic(x, y, params)?.exp())
}

/// Analytic Kerr Wigner function sampled on `spec` and normalised to unit
/// integral over the grid.
pub fn kerr_wigner_grid<T: Real>(params: &ModelParams<T>, spec: GridSpec<T>) -> Result<PhaseGrid<T>> {
    let mut logs = Vec::with_capacity(spec.nx * spec.ny);
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            logs.push(kerr_log_wigner_analytic(spec.x(i), spec.y(j), params)?);
        }
    }
    let peak = logs.iter().copied().fold(T::neg_infinity(), T::max);
    let mut it = logs.into_iter();
    let g = PhaseGrid::from_fn(spec, |_, _| (it.next().expect("sized") - peak).exp());
    normalize_over(g)
}

/// Rescales a grid to unit Riemann-sum integral.
pub fn normalize_over<T: Real>(mut grid: PhaseGrid<T>) -> Result<PhaseGrid<T>> {
    let s = grid.integral();
    if !(s.abs() > T::zero()) || !s.is_finite() {
        return Err(Error::Numerical("grid integral is zero or non-finite".into()));
    }
    grid.values.mapv_inplace(|v| v / s);
    Ok(grid)
}

/// Ground state `|0⟩⊗|−⟩` (or `|0⟩`) as a density matrix.
pub fn ground_density<T: Real>(params: &ModelParams<T>, l_max: usize) -> DensityMatrix<T> {
    StateVector::vacuum(params.basis(l_max)).to_density()
}

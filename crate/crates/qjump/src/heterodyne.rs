//! Heterodyne unravelings.
//!
//! [`run_heterodyne_trajectory`] integrates the nonlinear stochastic
//! Schrödinger equation of the driven JC system conditioned on a heterodyne
//! current. Each macro-step `dt` first adds the shot-noise term
//! `dZ (J − ⟨J⟩)|ψ⟩` with one Euler step, then integrates the deterministic
//! drift across the step with adaptive Cash–Karp, and renormalises.
//!
//! The remaining functions treat a freely decaying cavity read out by
//! mode-matched heterodyne detection. In the variable `ν = 1 − e^{−2κt}` the
//! cumulative complex charge obeys
//! `dQ = −∂V/∂Q* dν + dζ` with `e^{−V} = Σ_n (1−ν)^n |(e^{Q a}ψ)_n|²`,
//! and its distribution at `ν → 1` is the Husimi function of the initial
//! state evaluated at `Q*`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fock::{coherent_amplitudes, Basis, StateVector};
use crate::mcwf::{
    normalize, photon_diag, reduce_ensemble, top_population, weighted, Diagnostics, EnsembleResult,
    TrajectoryConfig, SCHEMA_VERSION,
};
use crate::models::{Dynamics, ModelKind, ModelParams};
use crate::ode::{integrate_adaptive, Embedded, Workspace};
use crate::rng::{complex_increment, derive_seed, rng_from_seed, TrajRng};
use crate::scalar::{czero, from_usize, lit, ln_factorials, to_f64, Real, C};
use crate::stats::{chi_square, mean_se, GoodnessOfFit};

/// Local error tolerance of the Cash–Karp drift integration.
pub const DRIFT_TOL: f64 = 1e-9;

/// Largest deviation of `‖ψ‖²` after the drift from its first-order
/// prediction `N₁ (1 − Var(J) dt)`, with `N₁` and `Var(J)` taken on the
/// state after the noise kick.
pub const NORM_DRIFT_LIMIT: f64 = 1e-3;

/// Running moments of the quadrature increments `dW_x = √2 Re dZ`,
/// `dW_y = √2 Im dZ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct NoiseStats {
    pub steps: u64,
    pub dt: f64,
    pub sum_x: f64,
    pub sum_y: f64,
    pub sum_xx: f64,
    pub sum_yy: f64,
    pub sum_xy: f64,
}

impl NoiseStats {
    fn new(dt: f64) -> Self {
        Self { dt, ..Default::default() }
    }

    fn push(&mut self, x: f64, y: f64) {
        self.steps += 1;
        self.sum_x += x;
        self.sum_y += y;
        self.sum_xx += x * x;
        self.sum_yy += y * y;
        self.sum_xy += x * y;
    }

    fn n(&self) -> f64 {
        self.steps.max(1) as f64
    }

    pub fn mean_x(&self) -> f64 {
        self.sum_x / self.n()
    }

    pub fn mean_y(&self) -> f64 {
        self.sum_y / self.n()
    }

    pub fn var_x_over_dt(&self) -> f64 {
        (self.sum_xx / self.n() - self.mean_x().powi(2)) / self.dt
    }

    pub fn var_y_over_dt(&self) -> f64 {
        (self.sum_yy / self.n() - self.mean_y().powi(2)) / self.dt
    }

    pub fn cross_over_dt(&self) -> f64 {
        (self.sum_xy / self.n() - self.mean_x() * self.mean_y()) / self.dt
    }

    /// Means within five standard errors of zero, variances in `[0.9, 1.1] dt`
    /// and cross-covariance within `±0.05 dt`.
    pub fn is_consistent(&self) -> bool {
        let se = 5.0 * (self.dt / self.n()).sqrt();
        self.mean_x().abs() < se
            && self.mean_y().abs() < se
            && (0.9..=1.1).contains(&self.var_x_over_dt())
            && (0.9..=1.1).contains(&self.var_y_over_dt())
            && self.cross_over_dt().abs() <= 0.05
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HetSample<T> {
    pub t: T,
    pub n_cond: T,
    pub a_cond: C<T>,
}

/// Output of one heterodyne trajectory.
#[derive(Clone, Debug)]
pub struct HeterodyneRecord<T> {
    pub params: ModelParams<T>,
    pub seed: u64,
    pub dt: T,
    pub l_max: usize,
    pub t_final: T,
    pub samples: Vec<HetSample<T>>,
    pub noise: NoiseStats,
    /// Accepted and rejected Cash–Karp substeps.
    pub substeps: (usize, usize),
    pub warnings: Vec<String>,
}

impl<T: Real> HeterodyneRecord<T> {
    pub fn sample_pairs(&self) -> Vec<(T, T)> {
        self.samples.iter().map(|s| (s.t, s.n_cond)).collect()
    }

    /// Header line followed by one `{"t","n","re_a","im_a"}` line per sample.
    pub fn to_jsonl(&self) -> Result<String> {
        let header = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "kind": "heterodyne",
            "params": self.params,
            "seed": self.seed,
            "dt": to_f64(self.dt),
            "l_max": self.l_max,
            "noise": self.noise,
        });
        let mut out = serde_json::to_string(&header)?;
        out.push('\n');
        for s in &self.samples {
            let line = serde_json::json!({
                "t": to_f64(s.t),
                "n": to_f64(s.n_cond),
                "re_a": to_f64(s.a_cond.re),
                "im_a": to_f64(s.a_cond.im),
            });
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// State handed to an observer after every macro-step.
pub struct HetStepView<'a, T> {
    pub t: T,
    pub psi: &'a [C<T>],
    pub basis: Basis,
    pub n: T,
    pub dz: C<T>,
}

fn check_heterodyne_params<T: Real>(p: &ModelParams<T>) -> Result<()> {
    p.validate()?;
    if p.kind != ModelKind::JaynesCummings {
        return invalid("heterodyne unraveling is defined for the JC model");
    }
    if p.n_bar != T::zero() || p.eta != T::one() {
        return invalid("heterodyne unraveling needs n_bar = 0 and eta = 1");
    }
    if p.gamma != T::zero() {
        return invalid("heterodyne unraveling monitors the cavity output only; gamma must be 0");
    }
    Ok(())
}

/// Heterodyne trajectory from `|0⟩|−⟩`.
pub fn run_heterodyne_trajectory<T: Real>(p: &ModelParams<T>, cfg: &TrajectoryConfig<T>) -> Result<HeterodyneRecord<T>> {
    let init = StateVector::vacuum(p.basis(cfg.l_max));
    run_heterodyne_trajectory_from(p, cfg, &init, |_| {})
}

/// Heterodyne trajectory from a given initial state, calling `observer`
/// after every macro-step.
pub fn run_heterodyne_trajectory_from<T: Real, F: FnMut(&HetStepView<'_, T>)>(
    p: &ModelParams<T>,
    cfg: &TrajectoryConfig<T>,
    initial: &StateVector<T>,
    mut observer: F,
) -> Result<HeterodyneRecord<T>> {
    cfg.validate()?;
    check_heterodyne_params(p)?;
    let dynamics = Dynamics::new(p, cfg.l_max)?;
    let basis = dynamics.basis;
    if initial.basis() != basis {
        return Err(Error::BasisMismatch { expected: format!("{basis:?}"), found: format!("{:?}", initial.basis()) });
    }
    let d = basis.dim();
    let n_diag = photon_diag::<T>(basis);
    let j_op = &dynamics.channels[0].op;
    let mut psi = initial.amplitudes().to_vec();
    normalize(&mut psi)?;
    let mut psi0 = psi.clone();
    let mut j0 = vec![czero::<T>(); d];
    let mut jbuf = vec![czero::<T>(); d];
    let mut ws = Workspace::new(d);
    let mut rng = rng_from_seed(cfg.seed);
    let mut diag = Diagnostics::new();
    let mut noise = NoiseStats::new(to_f64(cfg.dt));
    let tol = lit::<T>(DRIFT_TOL);
    let mut h = cfg.dt;
    let mut substeps = (0usize, 0usize);

    let mut drift = |t: T, y: &[C<T>], dy: &mut [C<T>]| {
        dynamics.schrodinger_rhs(t, y, dy);
        j_op.apply(y, &mut jbuf);
        let nrm: T = y.iter().map(|v| v.norm_sqr()).sum();
        let ej = y.iter().zip(jbuf.iter()).map(|(a, b)| a.conj() * b).sum::<C<T>>() / nrm;
        let half = ej.norm_sqr() * lit(0.5);
        let ejc = ej.conj();
        for i in 0..d {
            dy[i] += jbuf[i] * ejc - y[i] * half;
        }
    };

    let sample = |t: T, psi: &[C<T>]| HetSample { t, n_cond: weighted(&n_diag, psi), a_cond: dynamics.a.sandwich(psi) };
    let steps = cfg.steps();
    let mut samples = Vec::with_capacity(steps / cfg.sample_every + 2);
    samples.push(sample(T::zero(), &psi));
    let sqrt2 = std::f64::consts::SQRT_2;
    for k in 0..steps {
        let t = cfg.dt * from_usize(k);
        let t_next = cfg.dt * from_usize(k + 1);
        psi0.copy_from_slice(&psi);
        j_op.apply(&psi0, &mut j0);
        let ej = psi0.iter().zip(&j0).map(|(a, b)| a.conj() * b).sum::<C<T>>();

        let dz = complex_increment::<T>(&mut rng, cfg.dt);
        noise.push(sqrt2 * to_f64(dz.re), sqrt2 * to_f64(dz.im));
        for i in 0..d {
            psi[i] += dz * (j0[i] - ej * psi0[i]);
        }
        // Norm loss the drift should produce from the kicked state.
        j_op.apply(&psi, &mut j0);
        let n1: T = psi.iter().map(|v| v.norm_sqr()).sum();
        let ek = psi.iter().zip(&j0).map(|(a, b)| a.conj() * b).sum::<C<T>>() / n1;
        let var_k = (j0.iter().map(|v| v.norm_sqr()).sum::<T>() / n1 - ek.norm_sqr()).max(T::zero());
        let expected = n1 * (T::one() - var_k * cfg.dt);
        let st = integrate_adaptive(&mut drift, Embedded::CashKarp, t, t_next, &mut psi, tol, h, &mut ws)?;
        substeps.0 += st.accepted;
        substeps.1 += st.rejected;
        h = lit::<T>(st.next_h).min(cfg.dt);
        let nrm: T = psi.iter().map(|v| v.norm_sqr()).sum();
        if !((nrm - expected).abs() <= lit(NORM_DRIFT_LIMIT)) {
            return Err(Error::Numerical(format!(
                "norm drift {} beyond prediction at t = {} (Var(J) dt = {}); reduce dt",
                to_f64(nrm - expected),
                to_f64(t_next),
                to_f64(var_k * cfg.dt)
            )));
        }
        normalize(&mut psi)?;
        diag.top(top_population(basis, &psi), t_next);
        let n = weighted(&n_diag, &psi);
        if (k + 1) % cfg.sample_every == 0 {
            samples.push(sample(t_next, &psi));
        }
        observer(&HetStepView { t: t_next, psi: &psi, basis, n, dz });
    }
    Ok(HeterodyneRecord {
        params: p.clone(),
        seed: cfg.seed,
        dt: cfg.dt,
        l_max: cfg.l_max,
        t_final: cfg.t_final,
        samples,
        noise,
        substeps,
        warnings: diag.warnings,
    })
}

/// Ensemble of heterodyne trajectories, averaged as in
/// [`crate::mcwf::ensemble_density`].
#[allow(clippy::too_many_arguments)]
pub fn heterodyne_ensemble<T: Real>(
    p: &ModelParams<T>,
    l_max: usize,
    dt: T,
    n_traj: usize,
    t_grid: &[T],
    master_seed: u64,
    initial: Option<&StateVector<T>>,
    workers: usize,
) -> Result<EnsembleResult<T>> {
    let init = initial.cloned().unwrap_or_else(|| StateVector::vacuum(p.basis(l_max)));
    let t_end = t_grid.iter().copied().fold(T::zero(), T::max);
    reduce_ensemble(init.basis(), n_traj, t_grid, dt, workers, |i, add| {
        let cfg = TrajectoryConfig::new(l_max, dt, t_end, derive_seed(master_seed, i as u64)).with_sampling(usize::MAX);
        let mut psi0 = init.amplitudes().to_vec();
        normalize(&mut psi0)?;
        add(0, &psi0);
        let mut step = 0usize;
        run_heterodyne_trajectory_from(p, &cfg, &init, |v| {
            step += 1;
            add(step, v.psi);
        })?;
        Ok(())
    })
}

/// Completed stays in the dim (`n < low`) and bright (`n > high`) bands of
/// a photon-number record, with hysteresis between the two thresholds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DwellTimes<T> {
    pub dim: Vec<T>,
    pub bright: Vec<T>,
}

pub fn dwell_times<T: Real>(samples: &[(T, T)], low: T, high: T) -> DwellTimes<T> {
    let mut out = DwellTimes { dim: Vec::new(), bright: Vec::new() };
    // (is_bright, entry time, entered by a switch)
    let mut state: Option<(bool, T, bool)> = None;
    for &(t, n) in samples {
        let band = if n < low {
            Some(false)
        } else if n > high {
            Some(true)
        } else {
            None
        };
        match (state, band) {
            (None, Some(b)) => state = Some((b, t, false)),
            (Some((cur, t0, switched)), Some(b)) if b != cur => {
                if switched {
                    if cur {
                        out.bright.push(t - t0);
                    } else {
                        out.dim.push(t - t0);
                    }
                }
                state = Some((b, t, true));
            }
            _ => {}
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Cumulative charge of a freely decaying cavity.

/// Discretisation of the charge equation.
#[derive(Clone, Debug, PartialEq)]
pub struct ChargeOptions<T> {
    /// Uniform Euler–Maruyama steps in `ν`.
    pub nu_steps: usize,
    /// Final value of `ν`.
    pub nu_end: T,
    /// Keep every `trace_every`-th point of the trace.
    pub trace_every: usize,
}

impl<T: Real> Default for ChargeOptions<T> {
    fn default() -> Self {
        Self { nu_steps: 10_000, nu_end: lit(1.0 - 1e-6), trace_every: 100 }
    }
}

impl<T: Real> ChargeOptions<T> {
    fn validate(&self) -> Result<()> {
        if self.nu_steps == 0 || self.trace_every == 0 {
            return invalid("nu_steps and trace_every must be positive");
        }
        if !(self.nu_end > T::zero() && self.nu_end < T::one()) {
            return invalid("nu_end must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Charge trajectory and its final value.
#[derive(Clone, Debug, PartialEq)]
pub struct ChargeRecord<T> {
    pub q_tilde: C<T>,
    /// `(ν, Q̃)` starting at `(0, 0)`.
    pub trace: Vec<(T, C<T>)>,
    /// Index of the meter amplitude closest to `Q̃*` (projective readout).
    pub branch: Option<usize>,
}

impl<T: Real> ChargeRecord<T> {
    /// `Q̃*`, the variable distributed as the initial Q function.
    pub fn q_conj(&self) -> C<T> {
        self.q_tilde.conj()
    }
}

/// What the detector sees: a cavity ket or an incoherent mixture of
/// coherent meter states correlated with orthogonal system states.
#[derive(Clone, Debug, PartialEq)]
pub enum ChargeSource<T> {
    Ket(StateVector<T>),
    CoherentMixture { weights: Vec<T>, amplitudes: Vec<C<T>> },
}

/// `φ ← e^{x a} φ` in a truncated Fock basis. The series terminates after
/// `l_max` terms; with `early_exit` it stops once the terms fall below
/// roundoff.
fn apply_exp_a<T: Real>(phi: &mut [C<T>], x: C<T>, sq: &[T], term: &mut [C<T>], early_exit: bool) {
    let len = phi.len();
    term.copy_from_slice(phi);
    // Squared norms keep the convergence test free of square roots.
    let pmax = phi.iter().map(|v| v.norm_sqr()).fold(T::zero(), T::max);
    let cutoff = pmax * T::epsilon() * T::epsilon() * lit(1e-4);
    // Entries above `top` of the term vector are zero after `k` lowerings.
    let mut top = len;
    for k in 1..len {
        let c = x / from_usize::<T>(k);
        top -= 1;
        let mut tmax = T::zero();
        for n in 0..top {
            let v = term[n + 1] * (c * sq[n + 1]);
            term[n] = v;
            phi[n] += v;
            tmax = tmax.max(v.norm_sqr());
        }
        term[top] = czero();
        if early_exit && tmax <= cutoff {
            break;
        }
    }
}

enum DriftState<T> {
    Ket { phi: Vec<C<T>>, sq: Vec<T>, term: Vec<C<T>>, bound: T },
    Mixture { log_w: Vec<T>, amps: Vec<C<T>> },
}

impl<T: Real> DriftState<T> {
    fn new(source: &ChargeSource<T>) -> Result<Self> {
        match source {
            ChargeSource::Ket(psi) => {
                if psi.basis().has_atom() {
                    return invalid("charge readout takes a cavity-only (Fock) state");
                }
                let mut phi = psi.amplitudes().to_vec();
                normalize(&mut phi)?;
                let l = psi.basis().l_max();
                let sq = (0..=l).map(|n| from_usize::<T>(n).sqrt()).collect();
                let bound = from_usize::<T>(l).sqrt() + lit(6.0);
                Ok(DriftState::Ket { term: vec![czero(); l + 1], phi, sq, bound })
            }
            ChargeSource::CoherentMixture { weights, amplitudes } => {
                if weights.is_empty() || weights.len() != amplitudes.len() {
                    return invalid("mixture needs equally many weights and amplitudes");
                }
                if weights.iter().any(|w| !(*w >= T::zero())) || !weights.iter().any(|w| *w > T::zero()) {
                    return invalid("mixture weights must be non-negative and not all zero");
                }
                Ok(DriftState::Mixture {
                    log_w: weights.iter().map(|w| w.ln()).collect(),
                    amps: amplitudes.clone(),
                })
            }
        }
    }

    /// `−∂V/∂Q*` at `(Q, ν)`.
    fn drift(&self, q: C<T>, nu: T) -> Result<C<T>> {
        let out = match self {
            DriftState::Ket { phi, sq, .. } => {
                let decay = T::one() - nu;
                let mut dn = T::one();
                let mut num = czero::<T>();
                let mut den = T::zero();
                for n in 0..phi.len() {
                    den += dn * phi[n].norm_sqr();
                    if n + 1 < phi.len() {
                        num += (phi[n + 1] * sq[n + 1]).conj() * phi[n] * dn;
                    }
                    dn = dn * decay;
                }
                num / den
            }
            DriftState::Mixture { log_w, amps } => {
                let e: Vec<T> = log_w
                    .iter()
                    .zip(amps)
                    .map(|(lw, a)| *lw + lit::<T>(2.0) * (q * a).re - nu * a.norm_sqr())
                    .collect();
                let m = e.iter().copied().fold(T::neg_infinity(), T::max);
                let mut num = czero::<T>();
                let mut den = T::zero();
                for (ej, a) in e.iter().zip(amps) {
                    let w = (*ej - m).exp();
                    num += a.conj() * w;
                    den += w;
                }
                num / den
            }
        };
        if !out.re.is_finite() || !out.im.is_finite() {
            return Err(Error::Numerical("charge drift is not finite".into()));
        }
        Ok(out)
    }

    fn advance(&mut self, q: C<T>, dq: C<T>) -> Result<()> {
        if let DriftState::Ket { phi, sq, term, bound } = self {
            apply_exp_a(phi, dq, sq, term, true);
            let m = phi.iter().map(|v| v.norm()).fold(T::zero(), T::max);
            if !(m > T::zero()) || !m.is_finite() {
                return Err(Error::Numerical("charge drift lost its reference state".into()));
            }
            let s = T::one() / m;
            phi.iter_mut().for_each(|v| *v = *v * s);
            if q.norm() > *bound {
                return Err(Error::Numerical(format!(
                    "charge |Q| = {} left the region supported by the Fock truncation",
                    to_f64(q.norm())
                )));
            }
        }
        Ok(())
    }
}

/// Euler–Maruyama integration of the charge equation. `on_step(ν₀, ν₁, dQ)`
/// sees every increment.
fn integrate_charge<T: Real>(
    source: &ChargeSource<T>,
    rng: &mut TrajRng,
    opts: &ChargeOptions<T>,
    mut on_step: impl FnMut(T, T, C<T>) -> Result<()>,
) -> Result<ChargeRecord<T>> {
    opts.validate()?;
    let mut state = DriftState::new(source)?;
    let dnu = opts.nu_end / from_usize(opts.nu_steps);
    let mut q = czero::<T>();
    let mut trace = vec![(T::zero(), q)];
    for k in 0..opts.nu_steps {
        let nu = dnu * from_usize(k);
        let nu1 = if k + 1 == opts.nu_steps { opts.nu_end } else { dnu * from_usize(k + 1) };
        let dq = state.drift(q, nu)? * dnu + complex_increment(rng, dnu);
        q += dq;
        state.advance(q, dq)?;
        on_step(nu, nu1, dq)?;
        if (k + 1) % opts.trace_every == 0 || k + 1 == opts.nu_steps {
            trace.push((nu1, q));
        }
    }
    Ok(ChargeRecord { q_tilde: q, trace, branch: None })
}

/// Cumulative charge for a cavity prepared in `initial` (Fock basis).
pub fn charge_record<T: Real>(initial: &StateVector<T>, seed: u64, opts: &ChargeOptions<T>) -> Result<ChargeRecord<T>> {
    let mut rng = rng_from_seed(seed);
    integrate_charge(&ChargeSource::Ket(initial.clone()), &mut rng, opts, |_, _, _| Ok(()))
}

/// Charge record for an arbitrary source.
pub fn charge_record_source<T: Real>(
    source: &ChargeSource<T>,
    seed: u64,
    opts: &ChargeOptions<T>,
) -> Result<ChargeRecord<T>> {
    let mut rng = rng_from_seed(seed);
    integrate_charge(source, &mut rng, opts, |_, _, _| Ok(()))
}

/// `n_samples` independent charge records; record `i` uses seed
/// `derive_seed(master_seed, i)`, so the output does not depend on `workers`.
pub fn sample_charges<T: Real>(
    source: &ChargeSource<T>,
    n_samples: usize,
    master_seed: u64,
    opts: &ChargeOptions<T>,
    workers: usize,
) -> Result<Vec<ChargeRecord<T>>> {
    let run = |i: usize| charge_record_source(source, derive_seed(master_seed, i as u64), opts);
    if workers == 1 {
        return (0..n_samples).map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    pool.install(|| (0..n_samples).into_par_iter().map(run).collect())
}

/// Unnormalised conditional ket `e^{−κ a†a t} e^{Q a}|ψ(0)⟩` of the linear
/// heterodyne equation.
pub fn linear_sse_closed_form<T: Real>(initial: &StateVector<T>, q: C<T>, t: T) -> Result<StateVector<T>> {
    if initial.basis().has_atom() {
        return invalid("linear heterodyne equation is defined on the cavity alone");
    }
    let l = initial.basis().l_max();
    let sq: Vec<T> = (0..=l).map(|n| from_usize::<T>(n).sqrt()).collect();
    let mut phi = initial.amplitudes().to_vec();
    let mut term = vec![czero(); l + 1];
    apply_exp_a(&mut phi, q, &sq, &mut term, false);
    for (n, v) in phi.iter_mut().enumerate() {
        *v = *v * (-from_usize::<T>(n) * t).exp();
    }
    StateVector::new(initial.basis(), phi)
}

/// Charge record together with the ket of the linear heterodyne equation
/// `d|ψ̃⟩ = (−a†a dt + √2 a dξ)|ψ̃⟩` (κ = 1), integrated numerically along
/// the same record. The ket is returned normalised; `ln‖ψ̃‖` is the second
/// element.
pub fn charge_record_with_linear_ket<T: Real>(
    initial: &StateVector<T>,
    seed: u64,
    opts: &ChargeOptions<T>,
) -> Result<(ChargeRecord<T>, StateVector<T>, T)> {
    let l = initial.basis().l_max();
    let d = l + 1;
    let sq: Vec<T> = (0..=l).map(|n| from_usize::<T>(n).sqrt()).collect();
    let mut ket = initial.amplitudes().to_vec();
    let mut log_norm = T::zero();
    let mut ws = Workspace::new(d);
    let mut h = lit::<T>(1e-3);
    let tol = lit::<T>(1e-13);
    let to_t = |nu: T| -(T::one() - nu).ln() * lit(0.5);
    let mut rng = rng_from_seed(seed);
    let rec = integrate_charge(&ChargeSource::Ket(initial.clone()), &mut rng, opts, |nu0, nu1, dq| {
        let (t0, t1) = (to_t(nu0), to_t(nu1));
        // Q(t) linear in t across the step; the closed form holds for any path.
        let qdot = dq / (t1 - t0);
        let mut f = |t: T, y: &[C<T>], dy: &mut [C<T>]| {
            let et = t.exp();
            for n in 0..d {
                let mut v = y[n] * (-from_usize::<T>(n));
                if n + 1 < d {
                    v += y[n + 1] * sq[n + 1] * qdot * et;
                }
                dy[n] = v;
            }
        };
        let st = integrate_adaptive(&mut f, Embedded::CashKarp, t0, t1, &mut ket, tol, h.min(t1 - t0), &mut ws)?;
        h = lit(st.next_h);
        let nrm: T = ket.iter().map(|v| v.norm_sqr()).sum::<T>().sqrt();
        log_norm += nrm.ln();
        let s = T::one() / nrm;
        ket.iter_mut().for_each(|v| *v = *v * s);
        Ok(())
    })?;
    Ok((rec, StateVector::new(initial.basis(), ket)?, log_norm))
}

/// Goodness of fit of final charges against the initial Q function.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChargeFitReport {
    pub fit: GoodnessOfFit,
    pub n_samples: usize,
    /// Sample mean of `Q̃*` with its standard error, per quadrature.
    pub mean_q_conj: (f64, f64),
    pub se_q_conj: (f64, f64),
}

/// Husimi function `|⟨β|ψ⟩|²/π` of a normalised Fock ket.
fn q_pure_at<T: Real>(psi: &[C<T>], beta: C<T>, lnf: &[T]) -> T {
    let v = coherent_amplitudes(beta, psi.len() - 1, lnf);
    let s: C<T> = v.iter().zip(psi).map(|(b, p)| b.conj() * p).sum();
    s.norm_sqr() * T::FRAC_1_PI()
}

/// Chi-square test of the sampled `Q̃*` (2D histogram, bin width ≤ 0.5)
/// against the Q function of `initial`; bins with expected count below 5
/// are pooled, together with the mass outside the histogram window.
pub fn charge_fit<T: Real>(initial: &StateVector<T>, q_conj: &[C<T>]) -> Result<ChargeFitReport> {
    if initial.basis().has_atom() {
        return invalid("charge readout takes a cavity-only (Fock) state");
    }
    if q_conj.is_empty() {
        return invalid("no charge samples");
    }
    let psi = initial.normalized()?;
    let amps = psi.amplitudes();
    let l = psi.basis().l_max();
    let lnf = ln_factorials::<T>(l);
    let n_mean = to_f64(amps.iter().enumerate().map(|(n, a)| a.norm_sqr() * from_usize(n)).sum::<T>());
    let half = n_mean.sqrt() + 3.5;
    let nb = ((2.0 * half) / 0.5).ceil() as usize;
    let w = 2.0 * half / nb as f64;
    let sub = 4usize;
    let ns = q_conj.len() as f64;

    let mut expected = vec![0.0; nb * nb + 1];
    let mut observed = vec![0.0; nb * nb + 1];
    let mut inside = 0.0;
    for iy in 0..nb {
        for ix in 0..nb {
            let mut acc = 0.0;
            for sy in 0..sub {
                for sx in 0..sub {
                    let x = -half + w * (ix as f64 + (sx as f64 + 0.5) / sub as f64);
                    let y = -half + w * (iy as f64 + (sy as f64 + 0.5) / sub as f64);
                    acc += to_f64(q_pure_at(amps, C::new(lit(x), lit(y)), &lnf));
                }
            }
            let e = acc * w * w / (sub * sub) as f64 * ns;
            expected[iy * nb + ix] = e;
            inside += e;
        }
    }
    expected[nb * nb] = (ns - inside).max(0.0);
    for q in q_conj {
        let (x, y) = (to_f64(q.re), to_f64(q.im));
        let ix = ((x + half) / w).floor();
        let iy = ((y + half) / w).floor();
        if ix >= 0.0 && iy >= 0.0 && (ix as usize) < nb && (iy as usize) < nb {
            observed[iy as usize * nb + ix as usize] += 1.0;
        } else {
            observed[nb * nb] += 1.0;
        }
    }
    let fit = chi_square(&observed, &expected, 5.0);
    let xs: Vec<f64> = q_conj.iter().map(|q| to_f64(q.re)).collect();
    let ys: Vec<f64> = q_conj.iter().map(|q| to_f64(q.im)).collect();
    let (mx, sx) = mean_se(&xs);
    let (my, sy) = mean_se(&ys);
    Ok(ChargeFitReport { fit, n_samples: q_conj.len(), mean_q_conj: (mx, my), se_q_conj: (sx, sy) })
}

/// Samples `n_samples` charge records from `initial` and tests the final
/// `Q̃*` against its Q function.
pub fn charge_distribution_test<T: Real>(
    initial: &StateVector<T>,
    n_samples: usize,
    master_seed: u64,
) -> Result<ChargeFitReport> {
    if n_samples < 1000 {
        return invalid("charge_distribution_test needs at least 1000 samples");
    }
    let recs = sample_charges(&ChargeSource::Ket(initial.clone()), n_samples, master_seed, &ChargeOptions::default(), 0)?;
    let q: Vec<C<T>> = recs.iter().map(|r| r.q_conj()).collect();
    charge_fit(initial, &q)
}

/// Index of the amplitude nearest to `q_conj`.
pub fn nearest_branch<T: Real>(q_conj: C<T>, amplitudes: &[C<T>]) -> usize {
    let mut best = 0;
    let mut bd = T::infinity();
    for (j, a) in amplitudes.iter().enumerate() {
        let dist = (*a - q_conj).norm_sqr();
        if dist < bd {
            bd = dist;
            best = j;
        }
    }
    best
}

/// Projective readout through meter states: the system `Σ c_j |b_j⟩|α_j⟩`
/// is read by the charge record, whose drift only sees the field marginal
/// `Σ |c_j|² |α_j⟩⟨α_j|`. Returns the record with `branch` set to the meter
/// amplitude nearest to the final `Q̃*`.
pub fn projective_readout<T: Real>(
    coefficients: &[C<T>],
    meter_amplitudes: &[C<T>],
    seed: u64,
    opts: &ChargeOptions<T>,
) -> Result<ChargeRecord<T>> {
    if coefficients.is_empty() || coefficients.len() != meter_amplitudes.len() {
        return invalid("need one meter amplitude per coefficient");
    }
    let weights: Vec<T> = coefficients.iter().map(|c| c.norm_sqr()).collect();
    let total: T = weights.iter().copied().sum();
    if (total - T::one()).abs() > lit(1e-9) {
        return invalid(format!("coefficients must be normalised, Σ|c|² = {}", to_f64(total)));
    }
    for i in 0..meter_amplitudes.len() {
        for j in i + 1..meter_amplitudes.len() {
            let sep = (meter_amplitudes[i] - meter_amplitudes[j]).norm_sqr();
            if sep < lit(9.0) {
                log::warn!("meter amplitudes {i} and {j} are separated by |Δα|² = {}; branching unreliable", to_f64(sep));
            }
        }
    }
    let source = ChargeSource::CoherentMixture { weights, amplitudes: meter_amplitudes.to_vec() };
    let mut rec = charge_record_source(&source, seed, opts)?;
    rec.branch = Some(nearest_branch(rec.q_conj(), meter_amplitudes));
    Ok(rec)
}

/// CSV with columns `run_id,re_q,im_q,branch` (`branch` empty when unset).
pub fn charge_samples_csv<T: Real>(records: &[ChargeRecord<T>]) -> String {
    let mut s = String::from("run_id,re_q,im_q,branch\n");
    for (i, r) in records.iter().enumerate() {
        let b = r.branch.map(|b| b.to_string()).unwrap_or_default();
        s.push_str(&format!("{i},{},{},{b}\n", to_f64(r.q_tilde.re), to_f64(r.q_tilde.im)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_ket, superposition_ket};
    use crate::stats::{ks_test, normal_cdf};

    fn c(re: f64, im: f64) -> C<f64> {
        C::new(re, im)
    }

    fn jc_coherent(alpha: C<f64>, l_max: usize) -> StateVector<f64> {
        coherent_ket(alpha, l_max).unwrap().with_atom(crate::fock::AtomLevel::Lower).unwrap()
    }

    #[test]
    fn free_decay_keeps_coherent_state() {
        let p = ModelParams::jaynes_cummings(0.0, 0.0, -3.0);
        let alpha = c(1.5, -1.0);
        let init = jc_coherent(alpha, 30);
        for seed in [1, 2, 3] {
            let cfg = TrajectoryConfig::new(30, 0.001, 2.0, seed).with_sampling(100);
            let rec = run_heterodyne_trajectory_from(&p, &cfg, &init, |_| {}).unwrap();
            for s in &rec.samples {
                let want = alpha.norm_sqr() * (-2.0 * s.t).exp();
                assert!((s.n_cond - want).abs() < 1e-6, "t={} n={} want={want}", s.t, s.n_cond);
            }
        }
    }

    #[test]
    fn rejects_unsupported_models() {
        let cfg = TrajectoryConfig::new(10, 0.001, 0.01, 1);
        let thermal = ModelParams::jaynes_cummings(5.0, 1.0, 0.0).with_thermal(0.5, 1.0);
        assert!(run_heterodyne_trajectory(&thermal, &cfg).is_err());
        let atom = ModelParams::jaynes_cummings(5.0, 1.0, 0.0).with_gamma(1.0);
        assert!(run_heterodyne_trajectory(&atom, &cfg).is_err());
        assert!(run_heterodyne_trajectory(&ModelParams::kerr(1.0, 1.0, 0.0), &cfg).is_err());
    }

    #[test]
    fn records_are_reproducible_and_noise_is_white() {
        let p = ModelParams::jaynes_cummings(25.0, 5.3, -8.0);
        let cfg = TrajectoryConfig::new(12, 0.001, 100.0, 9).with_sampling(50);
        let a = run_heterodyne_trajectory(&p, &cfg).unwrap();
        let b = run_heterodyne_trajectory(&p, &cfg).unwrap();
        assert_eq!(a.to_jsonl().unwrap(), b.to_jsonl().unwrap());
        assert_eq!(a.noise.steps, 100_000);
        assert!(a.noise.is_consistent(), "{:?}", a.noise);
    }

    #[test]
    fn dwell_times_with_hysteresis() {
        let s: Vec<(f64, f64)> =
            [(0.0, 0.1), (1.0, 0.2), (2.0, 5.0), (3.0, 12.0), (4.0, 9.0), (5.0, 0.1), (7.0, 13.0), (8.0, 0.0)].to_vec();
        let d = dwell_times(&s, 1.0, 10.0);
        assert_eq!(d.bright, vec![2.0, 1.0]);
        assert_eq!(d.dim, vec![2.0]);
    }

    #[test]
    fn exp_a_matches_coherent_displacement() {
        // e^{x a}|α⟩ = e^{xα}|α⟩
        let alpha = c(0.8, 0.6);
        let ket = coherent_ket(alpha, 40).unwrap();
        let sq: Vec<f64> = (0..=40).map(|n| (n as f64).sqrt()).collect();
        let mut phi = ket.amplitudes().to_vec();
        let mut term = vec![czero(); 41];
        let x = c(0.3, -1.1);
        apply_exp_a(&mut phi, x, &sq, &mut term, false);
        let f = (x * alpha).exp();
        for (p, k) in phi.iter().zip(ket.amplitudes()) {
            assert!((p - k * f).norm() < 1e-12);
        }
    }

    #[test]
    fn coherent_drift_is_conjugate_amplitude() {
        let alpha = c(2.0, -1.0);
        let st = DriftState::new(&ChargeSource::Ket(coherent_ket(alpha, 40).unwrap())).unwrap();
        for nu in [0.0, 0.3, 0.9] {
            assert!((st.drift(c(0.0, 0.0), nu).unwrap() - alpha.conj()).norm() < 1e-10);
        }
        let mix = DriftState::new(&ChargeSource::CoherentMixture { weights: vec![1.0], amplitudes: vec![alpha] }).unwrap();
        assert!((mix.drift(c(0.4, 0.1), 0.5).unwrap() - alpha.conj()).norm() < 1e-14);
    }

    #[test]
    fn ket_and_mixture_drifts_agree_for_separated_cat() {
        // For |α|² large the cat ket and the equal mixture differ only by
        // interference terms ~ e^{-2|α|²}.
        let a = 3.0;
        let cat = superposition_ket(c(a, 0.0), c(-a, 0.0), 50).unwrap();
        let ket = DriftState::new(&ChargeSource::Ket(cat)).unwrap();
        let mix = DriftState::new(&ChargeSource::CoherentMixture {
            weights: vec![0.5, 0.5],
            amplitudes: vec![c(a, 0.0), c(-a, 0.0)],
        })
        .unwrap();
        // φ at Q = 0 is the initial state; compare at Q = 0 only.
        for nu in [0.1, 0.5] {
            let k = ket.drift(c(0.0, 0.0), nu).unwrap();
            let m = mix.drift(c(0.0, 0.0), nu).unwrap();
            assert!((k - m).norm() < 1e-3, "{k} vs {m}");
        }
    }

    #[test]
    fn charge_record_is_reproducible() {
        let init = superposition_ket(c(2.0, 1.0), c(-1.0, 0.5), 40).unwrap();
        let opts = ChargeOptions::default();
        let a = charge_record(&init, 5, &opts).unwrap();
        let b = charge_record(&init, 5, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace[0], (0.0, c(0.0, 0.0)));
        assert!(a.trace.iter().all(|(nu, _)| (0.0..=1.0).contains(nu)));
        assert_eq!(a.trace.last().unwrap().0, opts.nu_end);
    }

    #[test]
    fn linear_ket_matches_closed_form() {
        let init = superposition_ket(c(2.0, 0.5), c(-0.5, 1.0), 40).unwrap();
        let opts = ChargeOptions::default();
        for seed in [3, 4] {
            let (rec, ket, log_norm) = charge_record_with_linear_ket(&init, seed, &opts).unwrap();
            let t = -(1.0 - opts.nu_end).ln() / 2.0;
            let closed = linear_sse_closed_form(&init, rec.q_tilde, t).unwrap();
            let cn = closed.norm_sqr().sqrt();
            let mut err = 0.0f64;
            for (a, b) in ket.amplitudes().iter().zip(closed.amplitudes()) {
                err += (a - b / cn).norm_sqr();
            }
            assert!(err.sqrt() < 1e-6, "ket error {}", err.sqrt());
            assert!((log_norm - cn.ln()).abs() < 1e-6);
        }
    }

    #[test]
    fn vacuum_charge_is_gaussian() {
        let init = StateVector::vacuum(Basis::Fock { l_max: 20 });
        let opts = ChargeOptions { nu_steps: 2000, ..Default::default() };
        let recs = sample_charges(&ChargeSource::Ket(init), 2000, 17, &opts, 0).unwrap();
        let sd = 0.5f64.sqrt();
        let xs: Vec<f64> = recs.iter().map(|r| r.q_tilde.re).collect();
        let ys: Vec<f64> = recs.iter().map(|r| r.q_tilde.im).collect();
        assert!(ks_test(&xs, |x| normal_cdf(x, 0.0, sd)).1 > 0.01);
        assert!(ks_test(&ys, |y| normal_cdf(y, 0.0, sd)).1 > 0.01);
    }

    #[test]
    fn sample_charges_independent_of_workers() {
        let init = coherent_ket(c(1.0, 1.0), 30).unwrap();
        let src = ChargeSource::Ket(init);
        let opts = ChargeOptions { nu_steps: 500, ..Default::default() };
        let a = sample_charges(&src, 40, 3, &opts, 1).unwrap();
        let b = sample_charges(&src, 40, 3, &opts, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_meter_always_branch_zero() {
        let opts = ChargeOptions { nu_steps: 500, ..Default::default() };
        for seed in 0..20 {
            let r = projective_readout(&[c(0.0, 1.0)], &[c(2.0, -1.0)], seed, &opts).unwrap();
            assert_eq!(r.branch, Some(0));
        }
        assert!(projective_readout(&[c(0.5, 0.0)], &[c(2.0, 0.0)], 1, &opts).is_err());
    }

    #[test]
    fn charge_csv_layout() {
        let opts = ChargeOptions { nu_steps: 100, ..Default::default() };
        let r = projective_readout(&[c(1.0, 0.0)], &[c(1.0, 0.0)], 1, &opts).unwrap();
        let csv = charge_samples_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("run_id,re_q,im_q,branch"));
        assert!(lines.next().unwrap().ends_with(",0"));
    }
}

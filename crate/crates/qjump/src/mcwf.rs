//! Monte Carlo wavefunction trajectories under direct photodetection.
//!
//! The pure-state path follows the fixed-step scheme: at every step of
//! length `dt` the collapse probability `p = Σ⟨C†C⟩ dt` is compared with a
//! uniform draw and, on a collapse, the jump operator is applied at the start
//! of the step. The ket is then advanced by one RK4 (3/8 rule) step under
//! `H_eff` and renormalised, so a collapse does not cost evolution time.
//! A collapse is classified upward when `⟨n⟩` at the end of its step exceeds
//! `⟨n⟩` at the start. The mixed-state
//! path handles thermal baths and finite detector efficiency for Fock-only
//! models.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{partial_trace_atom, q_function, Basis, DensityMatrix, GridSpec, PhaseGrid, StateVector};
use crate::models::{ChannelKind, Dynamics, ModelKind, ModelParams};
use crate::ode::{integrate_adaptive, rk4_38_step, Embedded, Workspace};
use crate::rng::{derive_seed, rng_from_seed, uniform};
use crate::scalar::{ci, cr, czero, from_usize, lit, Real, C};

/// Version tag written into every record header.
pub const SCHEMA_VERSION: u32 = 1;

/// Run controls shared by the trajectory engines.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryConfig<T> {
    pub l_max: usize,
    pub dt: T,
    pub t_final: T,
    pub seed: u64,
    /// Record `⟨n⟩` every this many steps.
    pub sample_every: usize,
    /// Times at which the conditional state is stored.
    pub snapshot_times: Vec<T>,
}

impl<T: Real> TrajectoryConfig<T> {
    pub fn new(l_max: usize, dt: T, t_final: T, seed: u64) -> Self {
        Self { l_max, dt, t_final, seed, sample_every: 1, snapshot_times: Vec::new() }
    }

    pub fn with_sampling(mut self, every: usize) -> Self {
        self.sample_every = every;
        self
    }

    pub fn with_snapshots(mut self, times: Vec<T>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return invalid("dt must be positive");
        }
        if !(self.t_final >= T::zero()) || !self.t_final.is_finite() {
            return invalid("t_final must be non-negative");
        }
        if self.sample_every == 0 {
            return invalid("sample_every must be at least 1");
        }
        if self.l_max < 1 {
            return invalid("l_max must be at least 1");
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round().to_usize().unwrap_or(0)
    }
}

/// Direction of a collapse with respect to the conditional photon number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JumpKind {
    #[serde(rename = "up")]
    Upward,
    #[serde(rename = "down")]
    Downward,
}

impl JumpKind {
    /// Upward iff `⟨n⟩` strictly increases across the collapse; equal
    /// values count as downward.
    pub fn classify<T: Real>(n_before: T, n_after: T) -> Self {
        if n_after > n_before {
            JumpKind::Upward
        } else {
            JumpKind::Downward
        }
    }
}

/// One detected collapse, stamped with the end of the step it occurred in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpEvent<T> {
    pub t: T,
    pub channel: ChannelKind,
    pub kind: JumpKind,
    pub n_before: T,
    pub n_after: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample<T> {
    pub t: T,
    pub n: T,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SnapshotState<T> {
    Pure(StateVector<T>),
    Mixed(DensityMatrix<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot<T> {
    pub t: T,
    pub state: SnapshotState<T>,
}

impl<T: Real> Snapshot<T> {
    /// Full density matrix of the stored state.
    pub fn density(&self) -> DensityMatrix<T> {
        match &self.state {
            SnapshotState::Pure(psi) => psi.to_density(),
            SnapshotState::Mixed(rho) => rho.clone(),
        }
    }

    /// Reduced cavity density matrix.
    pub fn cavity_density(&self) -> DensityMatrix<T> {
        let rho = self.density();
        if rho.basis().has_atom() {
            partial_trace_atom(&rho)
        } else {
            rho
        }
    }
}

/// Photodetection record of one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct PhotonRecord<T> {
    pub params: ModelParams<T>,
    pub seed: u64,
    pub dt: T,
    pub l_max: usize,
    pub t_final: T,
    pub events: Vec<JumpEvent<T>>,
    pub samples: Vec<Sample<T>>,
    pub snapshots: Vec<Snapshot<T>>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct Header<'a, T: Serialize> {
    schema_version: u32,
    params: &'a ModelParams<T>,
    seed: u64,
    dt: T,
    l_max: usize,
}

#[derive(Serialize, Deserialize)]
struct EventLine {
    t: f64,
    ch: ChannelKind,
    kind: JumpKind,
}

#[derive(Serialize, Deserialize)]
struct SampleLine {
    t: f64,
    n: f64,
}

impl<T: Real> PhotonRecord<T> {
    /// `(t, ⟨n⟩)` pairs.
    pub fn sample_pairs(&self) -> Vec<(T, T)> {
        self.samples.iter().map(|s| (s.t, s.n)).collect()
    }

    /// JSON-lines serialisation: a header line, then event and sample lines
    /// in time order (an event precedes the sample taken at the same time).
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&Header {
            schema_version: SCHEMA_VERSION,
            params: &self.params,
            seed: self.seed,
            dt: self.dt,
            l_max: self.l_max,
        })?;
        out.push('\n');
        let f = |x: T| x.to_f64().unwrap_or(f64::NAN);
        let (mut i, mut j) = (0, 0);
        while i < self.events.len() || j < self.samples.len() {
            let take_event = match (self.events.get(i), self.samples.get(j)) {
                (Some(e), Some(s)) => e.t <= s.t,
                (Some(_), None) => true,
                _ => false,
            };
            if take_event {
                let e = &self.events[i];
                out.push_str(&serde_json::to_string(&EventLine { t: f(e.t), ch: e.channel, kind: e.kind })?);
                i += 1;
            } else {
                let s = &self.samples[j];
                out.push_str(&serde_json::to_string(&SampleLine { t: f(s.t), n: f(s.n) })?);
                j += 1;
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Sample lines `(t, n)` of a JSON-lines record.
pub fn parse_record_samples(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        let v: serde_json::Value = serde_json::from_str(line)?;
        if v.get("n").is_some() {
            let s: SampleLine = serde_json::from_value(v)
                .map_err(|e| Error::Config { line: k + 1, msg: e.to_string() })?;
            out.push((s.t, s.n));
        }
    }
    Ok(out)
}

/// State handed to an observer after every step.
pub struct StepView<'a, T> {
    /// Time at the end of the step.
    pub t: T,
    /// Normalised amplitudes.
    pub psi: &'a [C<T>],
    pub basis: Basis,
    pub n: T,
    /// The collapse that replaced this step, if any.
    pub event: Option<&'a JumpEvent<T>>,
}

pub(crate) struct Diagnostics {
    warned_prob: bool,
    warned_top: bool,
    pub(crate) warnings: Vec<String>,
}

impl Diagnostics {
    pub(crate) fn new() -> Self {
        Self { warned_prob: false, warned_top: false, warnings: Vec::new() }
    }

    pub(crate) fn prob<T: Real>(&mut self, p: T, t: T) {
        if !self.warned_prob && p > lit(0.1) {
            self.warned_prob = true;
            let m = format!("collapse probability {p} per step exceeds 0.1 at t = {t}; dt too coarse");
            log::warn!("{m}");
            self.warnings.push(m);
        }
    }

    pub(crate) fn top<T: Real>(&mut self, pop: T, t: T) {
        if !self.warned_top && pop > lit(1e-6) {
            self.warned_top = true;
            let m = format!("top Fock population {pop} exceeds 1e-6 at t = {t}; increase l_max");
            log::warn!("{m}");
            self.warnings.push(m);
        }
    }
}

pub(crate) fn photon_diag<T: Real>(basis: Basis) -> Vec<T> {
    (0..basis.dim()).map(|p| from_usize(basis.photons(p))).collect()
}

pub(crate) fn weighted<T: Real>(w: &[T], psi: &[C<T>]) -> T {
    w.iter().zip(psi).map(|(a, b)| *a * b.norm_sqr()).sum()
}

pub(crate) fn top_population<T: Real>(basis: Basis, psi: &[C<T>]) -> T {
    let l = basis.l_max();
    (0..basis.dim()).filter(|&p| basis.photons(p) == l).map(|p| psi[p].norm_sqr()).sum()
}

pub(crate) fn normalize<T: Real>(psi: &mut [C<T>]) -> Result<()> {
    let n: T = psi.iter().map(|a| a.norm_sqr()).sum();
    if !(n > T::zero()) || !n.is_finite() {
        return Err(Error::Numerical("conditional state lost its norm".into()));
    }
    let s = T::one() / n.sqrt();
    psi.iter_mut().for_each(|a| *a = *a * s);
    Ok(())
}

fn default_initial<T: Real>(p: &ModelParams<T>, l_max: usize) -> StateVector<T> {
    StateVector::vacuum(p.basis(l_max))
}

/// Pure-state trajectory from `|0⟩|−⟩` (or `|0⟩` for Fock-only models).
pub fn run_trajectory_pure<T: Real>(p: &ModelParams<T>, cfg: &TrajectoryConfig<T>) -> Result<PhotonRecord<T>> {
    run_trajectory_pure_from(p, cfg, &default_initial(p, cfg.l_max), |_| {})
}

/// Pure-state trajectory from a given initial state, calling `observer`
/// after every step.
pub fn run_trajectory_pure_from<T: Real, F: FnMut(&StepView<'_, T>)>(
    p: &ModelParams<T>,
    cfg: &TrajectoryConfig<T>,
    initial: &StateVector<T>,
    mut observer: F,
) -> Result<PhotonRecord<T>> {
    cfg.validate()?;
    p.validate()?;
    if p.n_bar != T::zero() || p.eta != T::one() {
        return invalid("the pure-state path needs n_bar = 0 and eta = 1; use run_trajectory_mixed");
    }
    let dynamics = Dynamics::new(p, cfg.l_max)?;
    let basis = dynamics.basis;
    if initial.basis() != basis {
        return Err(Error::BasisMismatch { expected: format!("{basis:?}"), found: format!("{:?}", initial.basis()) });
    }
    let d = basis.dim();
    let n_diag = photon_diag::<T>(basis);
    let mut psi: Vec<C<T>> = initial.amplitudes().to_vec();
    normalize(&mut psi)?;
    let mut ws = Workspace::new(d);
    let mut tmp = vec![czero::<T>(); d];
    let mut rng = rng_from_seed(cfg.seed);
    let mut diag = Diagnostics::new();
    let two_rand = dynamics.channels.len() > 1;
    let mut rates = vec![T::zero(); dynamics.channels.len()];

    let steps = cfg.steps();
    let mut events = Vec::new();
    let mut samples = Vec::with_capacity(steps / cfg.sample_every + 2);
    let mut snapshots = Vec::new();
    let mut snap_times = cfg.snapshot_times.clone();
    snap_times.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut snap_i = 0;
    let half_dt = cfg.dt * lit(0.5);

    let mut n_cur = weighted(&n_diag, &psi);
    samples.push(Sample { t: T::zero(), n: n_cur });
    while snap_i < snap_times.len() && snap_times[snap_i] <= half_dt {
        snapshots.push(Snapshot { t: T::zero(), state: SnapshotState::Pure(StateVector::new(basis, psi.clone())?) });
        snap_i += 1;
    }
    let mut f = |t: T, y: &[C<T>], dy: &mut [C<T>]| dynamics.schrodinger_rhs(t, y, dy);

    for k in 0..steps {
        let t = cfg.dt * from_usize(k);
        let t_next = cfg.dt * from_usize(k + 1);
        let mut total = T::zero();
        for (r, ch) in rates.iter_mut().zip(&dynamics.channels) {
            *r = ch.op_dag_op.sandwich(&psi).re * cfg.dt;
            total += *r;
        }
        diag.prob(total, t);
        let r1: T = uniform(&mut rng);
        let r2: T = if two_rand { uniform(&mut rng) } else { T::zero() };
        let mut event = None;
        let mut chosen = 0;
        if r1 < total {
            let mut idx = rates.len() - 1;
            let mut acc = T::zero();
            for (i, r) in rates.iter().enumerate() {
                acc += *r;
                if r2 * total < acc {
                    idx = i;
                    break;
                }
            }
            chosen = idx;
            let ch = &dynamics.channels[idx];
            ch.op.apply(&psi, &mut tmp);
            std::mem::swap(&mut psi, &mut tmp);
            normalize(&mut psi)?;
        }
        rk4_38_step(&mut f, t, &mut psi, cfg.dt, &mut ws);
        normalize(&mut psi)?;
        let n_before = n_cur;
        n_cur = weighted(&n_diag, &psi);
        if r1 < total {
            events.push(JumpEvent {
                t: t_next,
                channel: dynamics.channels[chosen].kind,
                kind: JumpKind::classify(n_before, n_cur),
                n_before,
                n_after: n_cur,
            });
            event = events.last();
        }
        diag.top(top_population(basis, &psi), t_next);
        if (k + 1) % cfg.sample_every == 0 {
            samples.push(Sample { t: t_next, n: n_cur });
        }
        while snap_i < snap_times.len() && snap_times[snap_i] <= t_next + half_dt {
            snapshots.push(Snapshot { t: t_next, state: SnapshotState::Pure(StateVector::new(basis, psi.clone())?) });
            snap_i += 1;
        }
        observer(&StepView { t: t_next, psi: &psi, basis, n: n_cur, event });
    }
    Ok(PhotonRecord {
        params: p.clone(),
        seed: cfg.seed,
        dt: cfg.dt,
        l_max: cfg.l_max,
        t_final: cfg.t_final,
        events,
        samples,
        snapshots,
        warnings: diag.warnings,
    })
}

/// Options of the mixed-state path.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedOptions<T> {
    /// Tolerance of the adaptive Fehlberg integrator between clicks.
    pub tol: T,
    /// Click times to impose instead of drawing them (each matched to the
    /// step ending within `dt/2` of it).
    pub prescribed_clicks: Option<Vec<T>>,
}

impl<T: Real> Default for MixedOptions<T> {
    fn default() -> Self {
        Self { tol: lit(1e-10), prescribed_clicks: None }
    }
}

/// Between-click generator of the un-normalised conditional density
/// matrix for a thermal bath with occupation `n̄` and detector efficiency `η`:
/// `−i[H, ρ] − κ[(n̄+1)(m+n) + n̄(m+n+2)]ρ_mn
///  + 2κ(n̄+1−η)√((m+1)(n+1)) ρ_{m+1,n+1} + 2κn̄√(mn) ρ_{m−1,n−1}`.
fn mixed_rhs<T: Real>(
    h: &crate::linalg::SparseOp<T>,
    kappa: T,
    n_bar: T,
    eta: T,
    sq: &[T],
    rho: &[C<T>],
    out: &mut [C<T>],
) {
    let d = sq.len();
    let mi = -ci::<T>();
    let two = lit::<T>(2.0);
    let feed_down = two * kappa * (n_bar + T::one() - eta);
    let feed_up = two * kappa * n_bar;
    for m in 0..d {
        for n in 0..d {
            let mf = from_usize::<T>(m);
            let nf = from_usize::<T>(n);
            let decay = kappa * ((n_bar + T::one()) * (mf + nf) + n_bar * (mf + nf + two));
            let mut v = rho[m * d + n] * (-decay);
            if m + 1 < d && n + 1 < d {
                v += rho[(m + 1) * d + n + 1] * (feed_down * sq[m + 1] * sq[n + 1]);
            }
            if m > 0 && n > 0 {
                v += rho[(m - 1) * d + n - 1] * (feed_up * sq[m] * sq[n]);
            }
            out[m * d + n] = v;
        }
    }
    if h.nnz() == 0 {
        return;
    }
    for m in 0..d {
        for (k, hv) in h.row(m) {
            let c = mi * hv;
            for n in 0..d {
                out[m * d + n] += c * rho[k * d + n];
            }
        }
    }
    let ip = ci::<T>();
    for m in 0..d {
        for n in 0..d {
            let mut acc = czero();
            for (k, hv) in h.row(n) {
                acc += rho[m * d + k] * hv.conj();
            }
            out[m * d + n] += ip * acc;
        }
    }
}

fn trace_flat<T: Real>(rho: &[C<T>], d: usize) -> T {
    (0..d).map(|i| rho[i * d + i].re).sum()
}

fn mean_n_flat<T: Real>(rho: &[C<T>], d: usize) -> T {
    (0..d).map(|i| from_usize::<T>(i) * rho[i * d + i].re).sum::<T>() / trace_flat(rho, d)
}

fn rho_from_flat<T: Real>(rho: &[C<T>], l_max: usize) -> DensityMatrix<T> {
    let d = l_max + 1;
    let a = Array2::from_shape_vec((d, d), rho.to_vec()).expect("square");
    DensityMatrix::new(Basis::Fock { l_max }, a.clone())
        .map(|r| r.hermitized())
        .unwrap_or_else(|_| DensityMatrix::from_raw(Basis::Fock { l_max }, a).hermitized())
}

/// Conditional density-matrix trajectory for a Fock-only model with thermal
/// occupation `n̄ ≥ 0` and detector efficiency `η ≤ 1`. The click
/// probability per step is `η 2κ ⟨a†a⟩ dt`; a click maps `ρ → aρa†/tr` at
/// the start of its step, followed by that step's continuous evolution.
/// Snapshots hold the normalised conditional density matrix.
pub fn run_trajectory_mixed<T: Real>(
    p: &ModelParams<T>,
    cfg: &TrajectoryConfig<T>,
    rho0: &DensityMatrix<T>,
    opts: &MixedOptions<T>,
) -> Result<PhotonRecord<T>> {
    cfg.validate()?;
    p.validate()?;
    if p.kind != ModelKind::Kerr {
        return invalid("the mixed-state path needs a Fock-only (cavity or Kerr) model");
    }
    let l_max = cfg.l_max;
    let basis = Basis::Fock { l_max };
    if rho0.basis() != basis {
        return Err(Error::BasisMismatch { expected: format!("{basis:?}"), found: format!("{:?}", rho0.basis()) });
    }
    if p.ramp.is_some() {
        return invalid("the mixed-state path does not support drive ramps");
    }
    let dynamics = Dynamics::new(p, l_max)?;
    let h = dynamics.hamiltonian(T::zero());
    let d = l_max + 1;
    let sq: Vec<T> = (0..d).map(|i| from_usize::<T>(i).sqrt()).collect();
    let mut rho: Vec<C<T>> = rho0.elems().iter().copied().collect();
    let tr = trace_flat(&rho, d);
    rho.iter_mut().for_each(|v| *v = *v / tr);
    let mut tmp = vec![czero::<T>(); d * d];
    let mut ws = Workspace::new(d * d);
    let mut rng = rng_from_seed(cfg.seed);
    let mut diag = Diagnostics::new();
    let mut h_next = cfg.dt;
    let (kappa, n_bar, eta) = (p.kappa, p.n_bar, p.eta);
    let mut f = |_t: T, y: &[C<T>], dy: &mut [C<T>]| mixed_rhs(&h, kappa, n_bar, eta, &sq, y, dy);

    let steps = cfg.steps();
    let half_dt = cfg.dt * lit(0.5);
    let clicks = opts.prescribed_clicks.as_ref().map(|c| {
        let mut c = c.clone();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        c
    });
    let mut click_i = 0;
    let mut events = Vec::new();
    let mut samples = Vec::new();
    let mut snapshots = Vec::new();
    let mut snap_times = cfg.snapshot_times.clone();
    snap_times.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut snap_i = 0;
    let mut n_cur = mean_n_flat(&rho, d);
    samples.push(Sample { t: T::zero(), n: n_cur });
    while snap_i < snap_times.len() && snap_times[snap_i] <= half_dt {
        snapshots.push(Snapshot { t: T::zero(), state: SnapshotState::Mixed(rho_from_flat(&rho, l_max)) });
        snap_i += 1;
    }
    for k in 0..steps {
        let t = cfg.dt * from_usize(k);
        let t_next = cfg.dt * from_usize(k + 1);
        let click = match &clicks {
            Some(c) => {
                while click_i < c.len() && c[click_i] < t_next - half_dt {
                    click_i += 1;
                }
                let hit = click_i < c.len() && (c[click_i] - t_next).abs() <= half_dt;
                if hit {
                    click_i += 1;
                }
                hit
            }
            None => {
                let prob = eta * lit::<T>(2.0) * kappa * n_cur * cfg.dt;
                diag.prob(prob, t);
                let r: T = uniform(&mut rng);
                r < prob
            }
        };
        if click {
            for m in 0..d {
                for n in 0..d {
                    tmp[m * d + n] = if m + 1 < d && n + 1 < d {
                        rho[(m + 1) * d + n + 1] * (sq[m + 1] * sq[n + 1])
                    } else {
                        czero()
                    };
                }
            }
            std::mem::swap(&mut rho, &mut tmp);
            let tr = trace_flat(&rho, d);
            if !(tr > T::zero()) {
                return Err(Error::Numerical("click on a state without photons".into()));
            }
            rho.iter_mut().for_each(|v| *v = *v / tr);
        }
        let st = integrate_adaptive(&mut f, Embedded::Fehlberg, t, t_next, &mut rho, opts.tol, h_next, &mut ws)?;
        h_next = lit(st.next_h);
        let tr = trace_flat(&rho, d);
        if !(tr > T::zero()) || !tr.is_finite() {
            return Err(Error::Numerical("conditional density matrix lost its trace".into()));
        }
        let s = cr(T::one() / tr);
        rho.iter_mut().for_each(|v| *v = *v * s);
        let n_after = mean_n_flat(&rho, d);
        if click {
            events.push(JumpEvent {
                t: t_next,
                channel: ChannelKind::Cavity,
                kind: JumpKind::classify(n_cur, n_after),
                n_before: n_cur,
                n_after,
            });
        }
        n_cur = n_after;
        diag.top(rho[l_max * d + l_max].re, t_next);
        if (k + 1) % cfg.sample_every == 0 {
            samples.push(Sample { t: t_next, n: n_cur });
        }
        while snap_i < snap_times.len() && snap_times[snap_i] <= t_next + half_dt {
            snapshots.push(Snapshot { t: t_next, state: SnapshotState::Mixed(rho_from_flat(&rho, l_max)) });
            snap_i += 1;
        }
    }
    Ok(PhotonRecord {
        params: p.clone(),
        seed: cfg.seed,
        dt: cfg.dt,
        l_max,
        t_final: cfg.t_final,
        events,
        samples,
        snapshots,
        warnings: diag.warnings,
    })
}

/// Upward and downward collapse counts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct JumpCounts {
    pub upward: usize,
    pub downward: usize,
    pub by_channel: BTreeMap<String, (usize, usize)>,
}

impl JumpCounts {
    pub fn total(&self) -> usize {
        self.upward + self.downward
    }

    /// `upward / (upward + downward)`, zero when there are no events.
    pub fn upward_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.upward as f64 / self.total() as f64
        }
    }

    pub fn merge(&mut self, other: &JumpCounts) {
        self.upward += other.upward;
        self.downward += other.downward;
        for (k, (u, d)) in &other.by_channel {
            let e = self.by_channel.entry(k.clone()).or_default();
            e.0 += u;
            e.1 += d;
        }
    }
}

pub fn classify_jumps<T: Real>(record: &PhotonRecord<T>) -> JumpCounts {
    let mut c = JumpCounts::default();
    for e in &record.events {
        let key = serde_json::to_value(e.channel).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let entry = c.by_channel.entry(key).or_default();
        match e.kind {
            JumpKind::Upward => {
                c.upward += 1;
                entry.0 += 1;
            }
            JumpKind::Downward => {
                c.downward += 1;
                entry.1 += 1;
            }
        }
    }
    c
}

/// Ensemble averages over independent trajectories.
#[derive(Clone, Debug)]
pub struct EnsembleResult<T> {
    pub times: Vec<T>,
    /// `(1/N) Σ |ψ⟩⟨ψ|` at each time.
    pub rho: Vec<DensityMatrix<T>>,
    /// Mean of the conditional `⟨a†a⟩` at each time.
    pub n_mean: Vec<T>,
    /// Standard error of that mean.
    pub n_se: Vec<T>,
    pub n_traj: usize,
}

/// Trajectories per reduction chunk. Chunk sums are added in index order,
/// so the result does not depend on the number of workers.
pub const ENSEMBLE_CHUNK: usize = 16;

struct Partial<T> {
    rho: Vec<Vec<C<T>>>,
    n_sum: Vec<T>,
    n_sq: Vec<T>,
}

/// Averages `n_traj` pure-state trajectories at the times in `t_grid`
/// (each matched to the nearest step end). Trajectory `i` uses seed
/// `derive_seed(master_seed, i)`. `workers = 0` uses all available threads.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_density<T: Real>(
    p: &ModelParams<T>,
    l_max: usize,
    dt: T,
    n_traj: usize,
    t_grid: &[T],
    master_seed: u64,
    initial: Option<&StateVector<T>>,
    workers: usize,
) -> Result<EnsembleResult<T>> {
    let init = initial.cloned().unwrap_or_else(|| default_initial(p, l_max));
    let t_end = t_grid.iter().copied().fold(T::zero(), T::max);
    reduce_ensemble(init.basis(), n_traj, t_grid, dt, workers, |i, add| {
        let cfg = TrajectoryConfig::new(l_max, dt, t_end, derive_seed(master_seed, i as u64)).with_sampling(usize::MAX);
        let mut psi0 = init.amplitudes().to_vec();
        normalize(&mut psi0)?;
        add(0, &psi0);
        let mut step = 0usize;
        run_trajectory_pure_from(p, &cfg, &init, |v| {
            step += 1;
            add(step, v.psi);
        })?;
        Ok(())
    })
}

/// Chunked, worker-independent reduction of `|ψ⟩⟨ψ|` and `⟨n⟩` over
/// trajectories. `run(i, add)` simulates trajectory `i` and reports the
/// normalised state after every fixed step through `add(step, ψ)`, with
/// `step = 0` for the initial state.
pub(crate) fn reduce_ensemble<T, F>(
    basis: Basis,
    n_traj: usize,
    t_grid: &[T],
    dt: T,
    workers: usize,
    run: F,
) -> Result<EnsembleResult<T>>
where
    T: Real,
    F: Fn(usize, &mut dyn FnMut(usize, &[C<T>])) -> Result<()> + Sync,
{
    if n_traj == 0 {
        return invalid("n_traj must be at least 1");
    }
    if t_grid.iter().any(|t| !(*t >= T::zero())) {
        return invalid("ensemble times must be non-negative");
    }
    let d = basis.dim();
    let idx: Vec<usize> = t_grid.iter().map(|t| (*t / dt).round().to_usize().unwrap_or(0)).collect();
    let n_t = t_grid.len();
    let n_diag = photon_diag::<T>(basis);
    let empty = || Partial { rho: vec![vec![czero(); d * d]; n_t], n_sum: vec![T::zero(); n_t], n_sq: vec![T::zero(); n_t] };

    let run_chunk = |c: usize| -> Result<Partial<T>> {
        let mut part = empty();
        let lo = c * ENSEMBLE_CHUNK;
        let hi = (lo + ENSEMBLE_CHUNK).min(n_traj);
        for i in lo..hi {
            let mut add = |step: usize, psi: &[C<T>]| {
                for (j, &s) in idx.iter().enumerate() {
                    if s == step {
                        let n = weighted(&n_diag, psi);
                        part.n_sum[j] += n;
                        part.n_sq[j] += n * n;
                        let r = &mut part.rho[j];
                        for a in 0..d {
                            for b in 0..d {
                                r[a * d + b] += psi[a] * psi[b].conj();
                            }
                        }
                    }
                }
            };
            run(i, &mut add)?;
        }
        Ok(part)
    };

    let n_chunks = n_traj.div_ceil(ENSEMBLE_CHUNK);
    let parts: Vec<Result<Partial<T>>> = if workers == 1 {
        (0..n_chunks).map(run_chunk).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
        pool.install(|| (0..n_chunks).into_par_iter().map(run_chunk).collect())
    };
    let mut total = empty();
    for part in parts {
        let part = part?;
        for j in 0..n_t {
            total.n_sum[j] += part.n_sum[j];
            total.n_sq[j] += part.n_sq[j];
            for (a, b) in total.rho[j].iter_mut().zip(&part.rho[j]) {
                *a += *b;
            }
        }
    }
    let nt = from_usize::<T>(n_traj);
    let mut rho = Vec::with_capacity(n_t);
    let mut n_mean = Vec::with_capacity(n_t);
    let mut n_se = Vec::with_capacity(n_t);
    for j in 0..n_t {
        let a = Array2::from_shape_vec((d, d), total.rho[j].iter().map(|v| *v / nt).collect()).expect("square");
        rho.push(DensityMatrix::new(basis, a)?.hermitized());
        let m = total.n_sum[j] / nt;
        n_mean.push(m);
        let var = if n_traj > 1 {
            ((total.n_sq[j] - nt * m * m) / (nt - T::one())).max(T::zero())
        } else {
            T::zero()
        };
        n_se.push((var / nt).sqrt());
    }
    Ok(EnsembleResult { times: t_grid.to_vec(), rho, n_mean, n_se, n_traj })
}

/// A local maximum of a phase-space distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak<T> {
    pub location: C<T>,
    pub height: T,
}

/// Local maxima of `grid` above `rel_threshold` times the global maximum,
/// sorted by height (highest first) and refined by a quadratic fit along
/// each axis.
pub fn find_peaks<T: Real>(grid: &PhaseGrid<T>, rel_threshold: T) -> Vec<Peak<T>> {
    let v = &grid.values;
    let (ny, nx) = v.dim();
    let global = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut peaks = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let c = v[[iy, ix]];
            if c < rel_threshold * global || c <= T::zero() {
                continue;
            }
            let mut is_max = true;
            'nb: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (jy, jx) = (iy as i64 + dy, ix as i64 + dx);
                    if jy < 0 || jx < 0 || jy >= ny as i64 || jx >= nx as i64 {
                        continue;
                    }
                    let w = v[[jy as usize, jx as usize]];
                    // ties resolved towards the lower index so plateaus yield one peak
                    if w > c || (w == c && (jy, jx) < (iy as i64, ix as i64)) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if !is_max {
                continue;
            }
            let refine = |lo: Option<T>, mid: T, hi: Option<T>| match (lo, hi) {
                (Some(a), Some(b)) => {
                    let den = a - lit::<T>(2.0) * mid + b;
                    if den < T::zero() {
                        (lit::<T>(0.5) * (a - b) / den).max(lit(-0.5)).min(lit(0.5))
                    } else {
                        T::zero()
                    }
                }
                _ => T::zero(),
            };
            let ox = refine(
                (ix > 0).then(|| v[[iy, ix - 1]]),
                c,
                (ix + 1 < nx).then(|| v[[iy, ix + 1]]),
            );
            let oy = refine(
                (iy > 0).then(|| v[[iy - 1, ix]]),
                c,
                (iy + 1 < ny).then(|| v[[iy + 1, ix]]),
            );
            let x = grid.spec.x(ix) + ox * grid.spec.dx();
            let y = grid.spec.y(iy) + oy * grid.spec.dy();
            peaks.push(Peak { location: C::new(x, y), height: c });
        }
    }
    peaks.sort_by(|a, b| b.height.partial_cmp(&a.height).unwrap_or(std::cmp::Ordering::Equal));
    peaks
}

/// Peaks of the Q function of a cavity density matrix (default threshold
/// 5 % of the global maximum).
pub fn find_q_peaks<T: Real>(rho_cav: &DensityMatrix<T>, spec: GridSpec<T>, rel_threshold: Option<T>) -> Vec<Peak<T>> {
    let q = q_function(rho_cav, spec);
    find_peaks(&q, rel_threshold.unwrap_or(lit(0.05)))
}

/// Inter-event times of a record, in order.
pub fn inter_event_times<T: Real>(record: &PhotonRecord<T>) -> Vec<T> {
    record.events.windows(2).map(|w| w[1].t - w[0].t).collect()
}

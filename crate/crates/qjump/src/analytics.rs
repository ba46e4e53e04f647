//! Closed-form null-measurement evolution of damped coherent states and
//! their superpositions, and the jump-overlay construction.
//!
//! All times are in units of `κ⁻¹`.

use ndarray::Array2;

use crate::error::{invalid, Error, Result};
use crate::fock::{coherent_amplitudes, Basis, DensityMatrix};
use crate::scalar::{from_usize, ln_factorials, lit, Real, C};
use crate::semiclassical::{lambda, localization_intersection};

/// Amplitudes of the bright (`alpha1`) and unstable (`alpha2`) components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuperpositionSpec<T> {
    pub alpha1: C<T>,
    pub alpha2: C<T>,
}

impl<T: Real> SuperpositionSpec<T> {
    pub fn new(alpha1: C<T>, alpha2: C<T>) -> Result<Self> {
        for a in [alpha1, alpha2] {
            if !a.re.is_finite() || !a.im.is_finite() {
                return invalid("non-finite superposition amplitude");
            }
        }
        Ok(Self { alpha1, alpha2 })
    }

    /// Amplitudes after free decay for time `t`.
    pub fn decayed(&self, t: T) -> (C<T>, C<T>) {
        let e = (-t).exp();
        (self.alpha1 * e, self.alpha2 * e)
    }
}

/// Coherent-state overlap `⟨α₁|α₂⟩ = exp(−|α₁|²/2 − |α₂|²/2 + α₁*α₂)`.
pub fn overlap<T: Real>(alpha1: C<T>, alpha2: C<T>) -> C<T> {
    let half = lit::<T>(0.5);
    (alpha1.conj() * alpha2 - (alpha1.norm_sqr() + alpha2.norm_sqr()) * half).exp()
}

/// `⟨a†a⟩` in the normalised state `(|α₁⟩ + |α₂⟩)/√(2[1 + Re⟨α₁|α₂⟩])`.
pub fn initial_superposition_photon<T: Real>(s: &SuperpositionSpec<T>) -> T {
    null_record_photon_exact(s, T::zero())
}

/// Conditional photon number after a photon-free interval `[0, t)`,
/// including the interference between the two components.
pub fn null_record_photon_exact<T: Real>(s: &SuperpositionSpec<T>, t: T) -> T {
    let (a1, a2) = s.decayed(t);
    let (x1, x2) = (s.alpha1.norm_sqr(), s.alpha2.norm_sqr());
    let (l1, l2) = (lambda(x1, t), lambda(x2, t));
    let half = lit::<T>(0.5);
    let cross = lambda(x1 * half, t) * lambda(x2 * half, t);
    let ov = overlap(a1, a2);
    let two = lit::<T>(2.0);
    let num = a1.norm_sqr() * l1 + a2.norm_sqr() * l2 + two * cross * (a1.conj() * a2 * ov).re;
    let den = l1 + l2 + two * cross * ov.re;
    num / den
}

/// Two-term approximation of [`null_record_photon_exact`] without the
/// interference terms.
pub fn null_record_photon_approx<T: Real>(s: &SuperpositionSpec<T>, t: T) -> T {
    let (a1, a2) = s.decayed(t);
    let (l1, l2) = (lambda(s.alpha1.norm_sqr(), t), lambda(s.alpha2.norm_sqr(), t));
    (a1.norm_sqr() * l1 + a2.norm_sqr() * l2) / (l1 + l2)
}

/// Conditional cavity density matrix `⟨m|ρ(t)|n⟩` after a photon-free
/// interval `[0, t)`, normalised by the closed-form `C(t)`.
pub fn null_record_density_matrix<T: Real>(s: &SuperpositionSpec<T>, t: T, l_max: usize) -> Result<DensityMatrix<T>> {
    if !(t >= T::zero()) {
        return invalid("time must be non-negative");
    }
    let (a1, a2) = s.decayed(t);
    let half = lit::<T>(0.5);
    // null evolution gives the unnormalised ket √λ₁|α₁(t)⟩ + √λ₂|α₂(t)⟩
    let w1 = lambda(s.alpha1.norm_sqr() * half, t);
    let w2 = lambda(s.alpha2.norm_sqr() * half, t);
    let lnf = ln_factorials::<T>(l_max);
    let c1 = coherent_amplitudes(a1, l_max, &lnf);
    let c2 = coherent_amplitudes(a2, l_max, &lnf);
    let ket: Vec<C<T>> = c1.iter().zip(&c2).map(|(x, y)| *x * w1 + *y * w2).collect();
    let norm = w1 * w1 + w2 * w2 + lit::<T>(2.0) * w1 * w2 * overlap(a1, a2).re;
    if !(norm > T::zero()) {
        return Err(Error::Numerical("superposition has vanishing norm".into()));
    }
    let d = l_max + 1;
    let elems = Array2::from_shape_fn((d, d), |(m, n)| ket[m] * ket[n].conj() / norm);
    let rho = DensityMatrix::new(Basis::Fock { l_max }, elems.clone()).or_else(|e| {
        if e.is_validation() {
            log::warn!("null-record density matrix trace deviates from 1 by truncation leakage");
            Ok(DensityMatrix::from_raw(Basis::Fock { l_max }, elems))
        } else {
            Err(e)
        }
    })?;
    Ok(rho)
}

/// Probability of exactly `n` photocounts in `[0, t)` from a damped
/// coherent state `|α⟩`.
pub fn poisson_count_prob<T: Real>(alpha: C<T>, t: T, n: usize) -> Result<T> {
    if !(t >= T::zero()) {
        return invalid("time must be non-negative");
    }
    let mu = alpha.norm_sqr() * (T::one() - (lit::<T>(-2.0) * t).exp());
    if mu == T::zero() {
        return Ok(if n == 0 { T::one() } else { T::zero() });
    }
    let lnf = ln_factorials::<T>(n);
    Ok((from_usize::<T>(n) * mu.ln() - lnf[n] - mu).exp())
}

/// Analytic null-record curves overlaid on a simulated jump.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpOverlay<T> {
    pub t_mid: T,
    pub dt_end: T,
    pub n_mid: T,
    /// `(t, ⟨n⟩)` on `[t_mid, t_mid + dt_end]`.
    pub forward_curve: Vec<(T, T)>,
    /// `(t, ⟨n⟩)` on `[t_mid − dt_end, t_mid]`, the point reflection of the
    /// forward curve about `(t_mid, n_mid)`.
    pub inverted_curve: Vec<(T, T)>,
    /// Sup-norm distance between the record and the overlay at the record's
    /// sample times inside `[t_mid − dt_end, t_mid + dt_end]`.
    pub deviation: T,
    /// `(t, n_record, n_forward, n_inverted)` rows; a curve that does not
    /// cover `t` is `NaN`.
    pub rows: Vec<(T, T, T, T)>,
}

impl<T: Real> JumpOverlay<T> {
    pub fn to_csv(&self) -> String {
        let f = |x: T| x.to_f64().unwrap_or(f64::NAN);
        let mut s = String::from("t,n_record,n_forward,n_inverted\n");
        for (t, r, a, b) in &self.rows {
            s.push_str(&format!("{:.9e},{:.9e},{:.9e},{:.9e}\n", f(*t), f(*r), f(*a), f(*b)));
        }
        s
    }
}

/// First downward crossing of `level` by the sampled curve inside `window`,
/// linearly interpolated between samples.
pub fn first_downward_crossing<T: Real>(samples: &[(T, T)], level: T, window: (T, T)) -> Option<T> {
    samples.windows(2).find_map(|w| {
        let ((t0, n0), (t1, n1)) = (w[0], w[1]);
        if t0 < window.0 || t1 > window.1 || !(n0 >= level && n1 < level) {
            return None;
        }
        Some(t0 + (t1 - t0) * (n0 - level) / (n0 - n1))
    })
}

/// Builds the overlay for a jump in `samples` (`(t, ⟨n⟩)` pairs, ascending
/// in `t`): `t_mid` is the first downward crossing of `⟨n⟩ = n_mid` inside
/// `window`, `dt_end` the localization time, the forward curve the exact
/// null-record photon number started at `t_mid`, and the inverted curve its
/// point reflection. Curves are sampled at the record's spacing.
pub fn build_jump_overlay<T: Real>(
    samples: &[(T, T)],
    s: &SuperpositionSpec<T>,
    window: (T, T),
) -> Result<JumpOverlay<T>> {
    let n_mid = initial_superposition_photon(s);
    let t_mid = first_downward_crossing(samples, n_mid, window).ok_or(Error::NoCrossing {
        n_mid: n_mid.to_f64().unwrap_or(f64::NAN),
        t0: window.0.to_f64().unwrap_or(f64::NAN),
        t1: window.1.to_f64().unwrap_or(f64::NAN),
    })?;
    let dt_end = localization_intersection(s.alpha1, s.alpha2)?;
    let spacing = samples.windows(2).map(|w| w[1].0 - w[0].0).find(|d| *d > T::zero());
    let spacing = spacing.unwrap_or(dt_end);
    let steps = (dt_end / spacing).ceil().to_usize().unwrap_or(1).max(1);
    let two = lit::<T>(2.0);
    let forward = |tau: T| null_record_photon_exact(s, tau);
    let mut forward_curve = Vec::with_capacity(steps + 1);
    let mut inverted_curve = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let tau = (spacing * from_usize(k)).min(dt_end);
        let nf = forward(tau);
        forward_curve.push((t_mid + tau, nf));
        inverted_curve.push((t_mid - tau, two * n_mid - nf));
    }
    inverted_curve.reverse();
    let mut deviation = T::zero();
    let mut rows = Vec::new();
    let nan = T::nan();
    for &(t, n) in samples {
        let tau = t - t_mid;
        if tau.abs() > dt_end {
            continue;
        }
        let (nf, ni) = if tau >= T::zero() {
            (forward(tau), if tau == T::zero() { n_mid } else { nan })
        } else {
            (nan, two * n_mid - forward(-tau))
        };
        let model = if tau >= T::zero() { nf } else { ni };
        deviation = deviation.max((n - model).abs());
        rows.push((t, n, nf, ni));
    }
    Ok(JumpOverlay { t_mid, dt_end, n_mid, forward_curve, inverted_curve, deviation, rows })
}

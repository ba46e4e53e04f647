//! Maxwell–Bloch equations, neoclassical steady states and localization times.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::models::{ModelKind, ModelParams};
use crate::scalar::{ci, cone, cr, from_usize, lit, Real, C};

/// Mean-field state `(⟨a⟩, ⟨σ₋⟩, ⟨σ_z⟩)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SemiclassicalState<T> {
    pub alpha: C<T>,
    pub beta: C<T>,
    pub zeta: T,
}

impl<T: Real> SemiclassicalState<T> {
    /// Atom in its lower state, field amplitude `alpha`.
    pub fn ground(alpha: C<T>) -> Self {
        Self { alpha, beta: C::new(T::zero(), T::zero()), zeta: -T::one() }
    }

    /// `4|β|² + ζ²`.
    pub fn bloch_length(&self) -> T {
        lit::<T>(4.0) * self.beta.norm_sqr() + self.zeta * self.zeta
    }
}

/// One solution of the neoclassical state equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Root<T> {
    /// `|α̃|² = |α|² / n_scale`.
    pub amp_scaled_sq: T,
    /// `|α|`.
    pub amp_unscaled: T,
}

/// Neoclassical steady states, ascending in amplitude. With three roots
/// they are labelled dim, unstable and bright by order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BistabilityRoots<T> {
    pub roots: Vec<Root<T>>,
    /// `[g/(2κ)]²`.
    pub n_scale: T,
    /// `γ²/(8g²)`, present when `γ > 0`.
    pub n_scale_weak: Option<T>,
}

impl<T: Real> BistabilityRoots<T> {
    /// Label of root `i` by ordering.
    pub fn label(&self, i: usize) -> &'static str {
        match (self.roots.len(), i) {
            (3, 0) => "dim",
            (3, 1) => "unstable",
            (3, 2) => "bright",
            _ => "stable",
        }
    }

    /// CSV table `index,label,amp_scaled_sq,amp_unscaled`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,label,amp_scaled_sq,amp_unscaled\n");
        for (i, r) in self.roots.iter().enumerate() {
            s.push_str(&format!(
                "{i},{},{:.12e},{:.12e}\n",
                self.label(i),
                r.amp_scaled_sq.to_f64().unwrap_or(f64::NAN),
                r.amp_unscaled.to_f64().unwrap_or(f64::NAN)
            ));
        }
        s
    }
}

/// Residual `x − RHS(x)` of the neoclassical equation in `x = |α̃|²`.
pub fn neoclassical_residual<T: Real>(p: &ModelParams<T>, x: T) -> T {
    let k = p.kappa;
    let g = p.g;
    let dw = p.delta_omega;
    let a = (lit::<T>(2.0) * p.epsilon / g).powi(2);
    let inner = dw * dw * k * k / (g * g * g * g) + x;
    let d = dw.abs() / k - T::one() / inner.sqrt();
    x - a / (T::one() + d * d)
}

const SWEEP_POINTS: usize = 20_000;

/// All non-negative roots of the neoclassical equation, by sign-change
/// bracketing on a log-spaced sweep followed by bisection.
pub fn neoclassical_roots<T: Real>(p: &ModelParams<T>) -> Result<BistabilityRoots<T>> {
    if p.kind != ModelKind::JaynesCummings {
        return invalid("neoclassical roots need Jaynes-Cummings parameters");
    }
    p.validate()?;
    if !(p.g > T::zero()) {
        return invalid("neoclassical roots need g > 0");
    }
    let n_scale = (p.g / (lit::<T>(2.0) * p.kappa)).powi(2);
    let n_scale_weak = (p.gamma > T::zero()).then(|| p.gamma * p.gamma / (lit::<T>(8.0) * p.g * p.g));
    let x_max = (lit::<T>(2.0) * p.epsilon / p.g).powi(2);
    let mk = |x: T| Root { amp_scaled_sq: x, amp_unscaled: (x * n_scale).sqrt() };
    if x_max == T::zero() {
        return Ok(BistabilityRoots { roots: vec![mk(T::zero())], n_scale, n_scale_weak });
    }
    // every root lies in (0, x_max]; residual(0) < 0 and residual(x_max) ≥ 0
    let f = |x: T| neoclassical_residual(p, x);
    let lo = x_max * lit(1e-14);
    let ratio = (x_max / lo).ln() / from_usize::<T>(SWEEP_POINTS);
    let mut roots = Vec::new();
    let mut xa = T::zero();
    let mut fa = f(xa);
    for i in 0..=SWEEP_POINTS {
        let xb = if i == SWEEP_POINTS { x_max } else { lo * (ratio * from_usize::<T>(i)).exp() };
        let fb = f(xb);
        if fb == T::zero() {
            roots.push(mk(xb));
        } else if fa != T::zero() && (fa < T::zero()) != (fb < T::zero()) {
            roots.push(mk(bisect(&f, xa, xb, fa, lit(1e-12))));
        }
        xa = xb;
        fa = fb;
    }
    roots.dedup_by(|a, b| (a.amp_scaled_sq - b.amp_scaled_sq).abs() <= lit(1e-12));
    Ok(BistabilityRoots { roots, n_scale, n_scale_weak })
}

fn bisect<T: Real>(f: &impl Fn(T) -> T, mut a: T, mut b: T, mut fa: T, tol: T) -> T {
    let tol = tol.max(T::epsilon() * b.abs() * lit(4.0));
    for _ in 0..400 {
        let m = (a + b) * lit(0.5);
        if (b - a) <= tol {
            return m;
        }
        let fm = f(m);
        if fm == T::zero() {
            return m;
        }
        if (fm < T::zero()) == (fa < T::zero()) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    (a + b) * lit(0.5)
}

/// Right-hand side of the Maxwell–Bloch equations
/// `dα/dt = −(κ−iΔω)α − igβ − iε`, `dβ/dt = iΔωβ + igαζ`,
/// `dζ/dt = 2ig(α*β − αβ*)`.
pub fn mbe_rhs<T: Real>(s: &SemiclassicalState<T>, p: &ModelParams<T>) -> SemiclassicalState<T> {
    let i = ci::<T>();
    let g = cr(p.g);
    let dw = cr(p.delta_omega);
    let da = -(cr::<T>(p.kappa) - i * dw) * s.alpha - i * g * s.beta - i * p.epsilon;
    let db = i * dw * s.beta + i * g * s.alpha * s.zeta;
    let dz = (i * g * (s.alpha.conj() * s.beta - s.alpha * s.beta.conj()) * lit::<T>(2.0)).re;
    SemiclassicalState { alpha: da, beta: db, zeta: dz }
}

fn check_initial<T: Real>(s0: &SemiclassicalState<T>, p: &ModelParams<T>, dt: T, t_final: T) -> Result<()> {
    if p.kind != ModelKind::JaynesCummings {
        return invalid("Maxwell-Bloch equations need Jaynes-Cummings parameters");
    }
    p.validate()?;
    if (s0.bloch_length() - T::one()).abs() > crate::scalar::tol_floor::<T>(1e-9) {
        return invalid(format!("initial Bloch length {} differs from 1", s0.bloch_length()));
    }
    if !(dt > T::zero()) || !(t_final >= T::zero()) {
        return invalid("dt must be positive and t_final non-negative");
    }
    Ok(())
}

/// Exact flow of the field equation with `β` frozen.
fn field_flow<T: Real>(s: &mut SemiclassicalState<T>, p: &ModelParams<T>, h: T) {
    let i = ci::<T>();
    let c = cr::<T>(p.kappa) - i * p.delta_omega;
    let f = -i * p.g * s.beta - i * p.epsilon;
    let e = (-c * h).exp();
    s.alpha = s.alpha * e + f / c * (cone::<T>() - e);
}

/// Exact flow of the Bloch equations with `α` frozen: a rotation of
/// `(2 Re β, 2 Im β, ζ)` about `Ω = (−2g Re α, −2g Im α, Δω)`.
fn bloch_flow<T: Real>(s: &mut SemiclassicalState<T>, p: &ModelParams<T>, h: T) {
    let two = lit::<T>(2.0);
    let om = [-two * p.g * s.alpha.re, -two * p.g * s.alpha.im, p.delta_omega];
    let w = (om[0] * om[0] + om[1] * om[1] + om[2] * om[2]).sqrt();
    if w == T::zero() {
        return;
    }
    let k = [om[0] / w, om[1] / w, om[2] / w];
    let v = [two * s.beta.re, two * s.beta.im, s.zeta];
    let (sn, cs) = (w * h).sin_cos();
    let kxv = [k[1] * v[2] - k[2] * v[1], k[2] * v[0] - k[0] * v[2], k[0] * v[1] - k[1] * v[0]];
    let kdv = k[0] * v[0] + k[1] * v[1] + k[2] * v[2];
    let r: Vec<T> = (0..3).map(|j| v[j] * cs + kxv[j] * sn + k[j] * kdv * (T::one() - cs)).collect();
    s.beta = C::new(r[0] / two, r[1] / two);
    s.zeta = r[2];
}

fn strang<T: Real>(s: &mut SemiclassicalState<T>, p: &ModelParams<T>, h: T) {
    let half = h * lit(0.5);
    field_flow(s, p, half);
    bloch_flow(s, p, h);
    field_flow(s, p, half);
}

/// Integrates the Maxwell–Bloch equations with a fourth-order composition
/// (Yoshida triple jump) of exact field and Bloch-rotation sub-flows. Each
/// sub-flow is exact, so the Bloch length is conserved to rounding error
/// for any step size. Returns the state at every multiple of `dt`.
pub fn mbe_integrate<T: Real>(
    s0: SemiclassicalState<T>,
    p: &ModelParams<T>,
    t_final: T,
    dt: T,
) -> Result<Vec<(T, SemiclassicalState<T>)>> {
    check_initial(&s0, p, dt, t_final)?;
    let cbrt2 = lit::<T>(2.0).cbrt();
    let w1 = T::one() / (lit::<T>(2.0) - cbrt2);
    let w0 = -cbrt2 * w1;
    let steps = (t_final / dt).round().to_usize().unwrap_or(0);
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = s0;
    out.push((T::zero(), s));
    for k in 1..=steps {
        strang(&mut s, p, w1 * dt);
        strang(&mut s, p, w0 * dt);
        strang(&mut s, p, w1 * dt);
        if !s.alpha.re.is_finite() || !s.zeta.is_finite() {
            return Err(Error::Numerical("Maxwell-Bloch integration diverged".into()));
        }
        out.push((dt * from_usize(k), s));
    }
    Ok(out)
}

/// Classic RK4 integration of the Maxwell–Bloch equations. Kept for
/// cross-checks; unlike [`mbe_integrate`] it lets the Bloch length drift.
pub fn mbe_integrate_rk4<T: Real>(
    s0: SemiclassicalState<T>,
    p: &ModelParams<T>,
    t_final: T,
    dt: T,
) -> Result<Vec<(T, SemiclassicalState<T>)>> {
    check_initial(&s0, p, dt, t_final)?;
    let steps = (t_final / dt).round().to_usize().unwrap_or(0);
    let add = |a: &SemiclassicalState<T>, b: &SemiclassicalState<T>, h: T| SemiclassicalState {
        alpha: a.alpha + b.alpha * h,
        beta: a.beta + b.beta * h,
        zeta: a.zeta + b.zeta * h,
    };
    let half = lit::<T>(0.5);
    let sixth = T::one() / lit(6.0);
    let mut s = s0;
    let mut out = Vec::with_capacity(steps + 1);
    out.push((T::zero(), s));
    for k in 1..=steps {
        let k1 = mbe_rhs(&s, p);
        let k2 = mbe_rhs(&add(&s, &k1, half * dt), p);
        let k3 = mbe_rhs(&add(&s, &k2, half * dt), p);
        let k4 = mbe_rhs(&add(&s, &k3, dt), p);
        let two = lit::<T>(2.0);
        s = SemiclassicalState {
            alpha: s.alpha + (k1.alpha + k2.alpha * two + k3.alpha * two + k4.alpha) * (dt * sixth),
            beta: s.beta + (k1.beta + k2.beta * two + k3.beta * two + k4.beta) * (dt * sixth),
            zeta: s.zeta + (k1.zeta + k2.zeta * two + k3.zeta * two + k4.zeta) * (dt * sixth),
        };
        out.push((dt * from_usize(k), s));
    }
    Ok(out)
}

/// Trajectory CSV `t,re_alpha,im_alpha,re_beta,im_beta,zeta`.
pub fn trajectory_csv<T: Real>(traj: &[(T, SemiclassicalState<T>)]) -> String {
    let f = |x: T| x.to_f64().unwrap_or(f64::NAN);
    let mut s = String::from("t,re_alpha,im_alpha,re_beta,im_beta,zeta\n");
    for (t, st) in traj {
        s.push_str(&format!(
            "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}\n",
            f(*t),
            f(st.alpha.re),
            f(st.alpha.im),
            f(st.beta.re),
            f(st.beta.im),
            f(st.zeta)
        ));
    }
    s
}

/// Null-measurement probability `λ(x; t) = exp[−x(1 − e^{−2t})]` (κ = 1).
pub fn lambda<T: Real>(x: T, t: T) -> T {
    (-x * (T::one() - (lit::<T>(-2.0) * t).exp())).exp()
}

/// Lower bound on the duration of coherent localization between a bright
/// amplitude `alpha1` and an unstable amplitude `alpha2`:
/// `−ln(|α₂| / (|α₁|² − |α₂|(|α₂|−1))) / (2(|α₁|² − |α₂|²))`.
pub fn localization_bound<T: Real>(alpha1: C<T>, alpha2: C<T>) -> Result<T> {
    let (a1, a2) = (alpha1.norm(), alpha2.norm());
    if !(a2 > T::zero()) || !a1.is_finite() {
        return invalid("localization bound needs |alpha2| > 0");
    }
    if (a1 - a2).abs() <= lit::<T>(1e-9) * a1 {
        return Err(Error::Indeterminate(
            "|alpha1| = |alpha2|: the bound is indeterminate in the phase-bistability limit".into(),
        ));
    }
    if a1 < a2 {
        return invalid("localization bound needs |alpha1| > |alpha2|");
    }
    let denom = a1 * a1 - a2 * (a2 - T::one());
    if denom <= T::zero() || a2 / denom <= T::zero() {
        return Err(Error::Domain("logarithm argument is not positive".into()));
    }
    Ok(-(a2 / denom).ln() / (lit::<T>(2.0) * (a1 * a1 - a2 * a2)))
}

/// Localization time from the intersection of
/// `|α₁(t)|²λ(|α₁|²;t) + |α₂(t)|²λ(|α₂|²;t)` and `|α₂|²[λ(|α₁|²;t) + λ(|α₂|²;t)]`,
/// bracketed on `[0, 5]` and bisected to `1e-10`.
pub fn localization_intersection<T: Real>(alpha1: C<T>, alpha2: C<T>) -> Result<T> {
    let (x1, x2) = (alpha1.norm_sqr(), alpha2.norm_sqr());
    if !(x1 > x2) {
        return invalid("localization intersection needs |alpha1| > |alpha2|");
    }
    let f = |t: T| {
        let e = (lit::<T>(-2.0) * t).exp();
        let (l1, l2) = (lambda(x1, t), lambda(x2, t));
        x1 * e * l1 + x2 * e * l2 - x2 * (l1 + l2)
    };
    let (a, b) = (T::zero(), lit::<T>(5.0));
    let (fa, fb) = (f(a), f(b));
    if (fa < T::zero()) == (fb < T::zero()) || fa == T::zero() {
        return Err(Error::Numerical(format!(
            "no sign change of the intersection function on [0, 5] (f(0) = {fa}, f(5) = {fb})"
        )));
    }
    Ok(bisect(&f, a, b, fa, lit(1e-10)))
}

//! Explicit Runge–Kutta integrators over flat complex state vectors.

use crate::error::{Error, Result};
use crate::scalar::{cr, czero, lit, Real, C};

/// Right-hand side `f(t, y, dy)` writing `dy = f(t, y)`.
pub trait Rhs<T: Real> {
    fn eval(&mut self, t: T, y: &[C<T>], dy: &mut [C<T>]);
}

impl<T: Real, F: FnMut(T, &[C<T>], &mut [C<T>])> Rhs<T> for F {
    fn eval(&mut self, t: T, y: &[C<T>], dy: &mut [C<T>]) {
        self(t, y, dy)
    }
}

/// Scratch buffers reused across steps.
pub struct Workspace<T> {
    k: [Vec<C<T>>; 6],
    tmp: Vec<C<T>>,
    y5: Vec<C<T>>,
    y4: Vec<C<T>>,
}

impl<T: Real> Workspace<T> {
    pub fn new(n: usize) -> Self {
        let z = || vec![czero::<T>(); n];
        Self { k: [z(), z(), z(), z(), z(), z()], tmp: z(), y5: z(), y4: z() }
    }
}

#[inline]
fn combo<T: Real>(out: &mut [C<T>], y: &[C<T>], h: T, terms: &[(T, &[C<T>])]) {
    for i in 0..y.len() {
        let mut acc = czero();
        for (c, k) in terms {
            acc += k[i] * *c;
        }
        out[i] = y[i] + acc * h;
    }
}

/// Classic fourth-order Runge–Kutta step, in place.
pub fn rk4_step<T: Real, F: Rhs<T>>(f: &mut F, t: T, y: &mut [C<T>], h: T, ws: &mut Workspace<T>) {
    let half = lit::<T>(0.5);
    let [k1, k2, k3, k4, _, _] = &mut ws.k;
    let tmp = &mut ws.tmp;
    f.eval(t, y, k1);
    combo(tmp, y, h, &[(half, k1)]);
    f.eval(t + half * h, tmp, k2);
    combo(tmp, y, h, &[(half, k2)]);
    f.eval(t + half * h, tmp, k3);
    combo(tmp, y, h, &[(T::one(), k3)]);
    f.eval(t + h, tmp, k4);
    let sixth = T::one() / lit(6.0);
    let third = T::one() / lit(3.0);
    for i in 0..y.len() {
        y[i] += (k1[i] * sixth + k2[i] * third + k3[i] * third + k4[i] * sixth) * h;
    }
}

/// Runge–Kutta fourth-order step with the 3/8 rule, in place.
pub fn rk4_38_step<T: Real, F: Rhs<T>>(f: &mut F, t: T, y: &mut [C<T>], h: T, ws: &mut Workspace<T>) {
    let third = T::one() / lit(3.0);
    let [k1, k2, k3, k4, _, _] = &mut ws.k;
    let tmp = &mut ws.tmp;
    f.eval(t, y, k1);
    combo(tmp, y, h, &[(third, k1)]);
    f.eval(t + third * h, tmp, k2);
    combo(tmp, y, h, &[(-third, k1), (T::one(), k2)]);
    f.eval(t + (T::one() - third) * h, tmp, k3);
    combo(tmp, y, h, &[(T::one(), k1), (-T::one(), k2), (T::one(), k3)]);
    f.eval(t + h, tmp, k4);
    let eighth = lit::<T>(0.125);
    let three8 = lit::<T>(0.375);
    for i in 0..y.len() {
        y[i] += (k1[i] * eighth + k2[i] * three8 + k3[i] * three8 + k4[i] * eighth) * h;
    }
}

/// Embedded pair used by [`integrate_adaptive`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Embedded {
    /// Cash–Karp 4(5).
    CashKarp,
    /// Runge–Kutta–Fehlberg 4(5), propagating the fifth-order solution.
    Fehlberg,
}

struct Tableau {
    c: [f64; 6],
    a: [[f64; 5]; 6],
    b5: [f64; 6],
    b4: [f64; 6],
}

const CASH_KARP: Tableau = Tableau {
    c: [0.0, 0.2, 0.3, 0.6, 1.0, 0.875],
    a: [
        [0.0; 5],
        [0.2, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
        [0.3, -0.9, 1.2, 0.0, 0.0],
        [-11.0 / 54.0, 2.5, -70.0 / 27.0, 35.0 / 27.0, 0.0],
        [1631.0 / 55296.0, 175.0 / 512.0, 575.0 / 13824.0, 44275.0 / 110592.0, 253.0 / 4096.0],
    ],
    b5: [37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0],
    b4: [2825.0 / 27648.0, 0.0, 18575.0 / 48384.0, 13525.0 / 55296.0, 277.0 / 14336.0, 0.25],
};

const FEHLBERG: Tableau = Tableau {
    c: [0.0, 0.25, 0.375, 12.0 / 13.0, 1.0, 0.5],
    a: [
        [0.0; 5],
        [0.25, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
        [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
        [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
        [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
    ],
    b5: [16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0],
    b4: [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0],
};

/// Statistics from one adaptive integration.
#[derive(Clone, Copy, Debug, Default)]
pub struct AdaptiveStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Step size to try first on the next call.
    pub next_h: f64,
}

/// Integrates `y` from `t0` to `t1` with an embedded 4(5) pair and
/// step-size control on the max-norm error relative to `tol (1 + |y|)`.
pub fn integrate_adaptive<T: Real, F: Rhs<T>>(
    f: &mut F,
    pair: Embedded,
    t0: T,
    t1: T,
    y: &mut [C<T>],
    tol: T,
    h_init: T,
    ws: &mut Workspace<T>,
) -> Result<AdaptiveStats> {
    let tab = match pair {
        Embedded::CashKarp => &CASH_KARP,
        Embedded::Fehlberg => &FEHLBERG,
    };
    let n = y.len();
    let mut t = t0;
    let span = t1 - t0;
    let mut h = h_init.min(span).max(span * lit(1e-12));
    let h_min = span * lit(1e-10);
    let mut stats = AdaptiveStats::default();
    while t < t1 {
        let truncated = t + h >= t1;
        let hs = if truncated { t1 - t } else { h };
        {
            let Workspace { k, tmp, y5, y4 } = ws;
            for s in 0..6 {
                if s == 0 {
                    tmp.copy_from_slice(y);
                } else {
                    for i in 0..n {
                        let mut acc = czero();
                        for (j, kj) in k.iter().enumerate().take(s) {
                            let a = tab.a[s][j];
                            if a != 0.0 {
                                acc += kj[i] * lit::<T>(a);
                            }
                        }
                        tmp[i] = y[i] + acc * hs;
                    }
                }
                f.eval(t + hs * lit(tab.c[s]), tmp, &mut k[s]);
            }
            let mut err = T::zero();
            for i in 0..n {
                let mut a5 = czero();
                let mut a4 = czero();
                for s in 0..6 {
                    a5 += k[s][i] * lit::<T>(tab.b5[s]);
                    a4 += k[s][i] * lit::<T>(tab.b4[s]);
                }
                y5[i] = y[i] + a5 * hs;
                y4[i] = y[i] + a4 * hs;
                let scale = T::one() + y[i].norm();
                err = err.max((y5[i] - y4[i]).norm() / scale);
            }
            if !err.is_finite() {
                return Err(Error::Numerical("adaptive integrator produced non-finite state".into()));
            }
            let ratio = err / tol;
            if ratio <= T::one() {
                y.copy_from_slice(y5);
                t = if truncated { t1 } else { t + hs };
                stats.accepted += 1;
                let grow = if ratio == T::zero() {
                    lit(5.0)
                } else {
                    (lit::<T>(0.9) * ratio.powf(lit(-0.2))).min(lit(5.0))
                };
                h = if truncated { h.max(hs * grow) } else { hs * grow };
            } else {
                stats.rejected += 1;
                h = hs * (lit::<T>(0.9) * ratio.powf(lit(-0.25))).max(lit(0.1));
                if h < h_min {
                    return Err(Error::Numerical(format!(
                        "adaptive step size underflow at t = {}",
                        t.to_f64().unwrap_or(f64::NAN)
                    )));
                }
            }
        }
    }
    stats.next_h = h.to_f64().unwrap_or(0.0);
    Ok(stats)
}

/// Scales a vector in place.
pub fn scale<T: Real>(y: &mut [C<T>], s: T) {
    let s = cr(s);
    for v in y.iter_mut() {
        *v = *v * s;
    }
}

/// Euclidean norm squared.
pub fn norm_sqr<T: Real>(y: &[C<T>]) -> T {
    y.iter().map(|v| v.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(lam: C<f64>) -> impl FnMut(f64, &[C<f64>], &mut [C<f64>]) {
        move |_t, y, dy| {
            for i in 0..y.len() {
                dy[i] = lam * y[i];
            }
        }
    }

    #[test]
    fn rk4_variants_are_fourth_order() {
        let lam = C::new(-1.0, 3.0);
        for step in [rk4_step::<f64, _> as fn(&mut _, _, &mut [_], _, &mut _), rk4_38_step] {
            let mut errs = Vec::new();
            for &h in &[0.02, 0.01] {
                let mut f = decay(lam);
                let mut ws = Workspace::new(1);
                let mut y = vec![C::new(1.0, 0.0)];
                let n = (1.0 / h) as usize;
                for k in 0..n {
                    step(&mut f, k as f64 * h, &mut y, h, &mut ws);
                }
                errs.push((y[0] - lam.exp()).norm());
            }
            let order = (errs[0] / errs[1]).log2();
            assert!((order - 4.0).abs() < 0.2, "order {order}");
        }
    }

    #[test]
    fn adaptive_pairs_hit_tolerance() {
        for pair in [Embedded::CashKarp, Embedded::Fehlberg] {
            let lam = C::new(-2.0, 40.0);
            let mut f = decay(lam);
            let mut ws = Workspace::new(2);
            let mut y = vec![C::new(1.0, 0.0), C::new(0.0, 2.0)];
            let st = integrate_adaptive(&mut f, pair, 0.0, 1.0, &mut y, 1e-11, 0.1, &mut ws).unwrap();
            assert!(st.accepted > 10);
            let want = lam.exp();
            assert!((y[0] - want).norm() < 1e-8, "{pair:?}: {}", (y[0] - want).norm());
        }
    }
}

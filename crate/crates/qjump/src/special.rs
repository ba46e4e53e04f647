//! Special functions with complex arguments.

use crate::error::{Error, Result};
use crate::scalar::{cone, cr, czero, lit, Real, C};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Principal branch of `ln Γ(z)` (Lanczos, reflection for `Re z < 1/2`).
pub fn ln_gamma<T: Real>(z: C<T>) -> C<T> {
    let half = lit::<T>(0.5);
    if z.re < half {
        // Γ(z)Γ(1-z) = π / sin(πz)
        let pi = T::PI();
        let s = (cr::<T>(pi) * z).sin();
        return cr::<T>(pi.ln()) - s.ln() - ln_gamma(cone::<T>() - z);
    }
    let z = z - cone();
    let mut x = cr::<T>(lit(LANCZOS[0]));
    for (k, &c) in LANCZOS.iter().enumerate().skip(1) {
        x += cr::<T>(lit(c)) / (z + cr(lit(k as f64)));
    }
    let t = z + cr(lit(LANCZOS_G + 0.5));
    cr::<T>(lit(0.5 * (2.0 * std::f64::consts::PI).ln())) + (z + cr(half)) * t.ln() - t + x.ln()
}

/// Result of a series evaluated with a running logarithmic scale:
/// the value is `mantissa * exp(log_scale)`.
#[derive(Clone, Copy, Debug)]
pub struct Scaled<T> {
    pub mantissa: C<T>,
    pub log_scale: T,
}

impl<T: Real> Scaled<T> {
    pub fn value(&self) -> C<T> {
        self.mantissa * self.log_scale.exp()
    }

    /// `ln |value|`.
    pub fn ln_abs(&self) -> T {
        self.mantissa.norm().ln() + self.log_scale
    }
}

/// Maximum number of series terms before declaring non-convergence.
pub const SERIES_TERM_BUDGET: usize = 400;

/// Regularised confluent limit function `₀F₁(;b;w) / Γ(b)`, i.e.
/// `Σ_k w^k / (k! Γ(b+k))`, an entire function of both `b` and `w`.
///
/// `J_ν(z) = (z/2)^ν · f(ν+1, -z²/4)` where `f` is this function.
pub fn hyp0f1_regularized<T: Real>(b: C<T>, w: C<T>) -> Result<Scaled<T>> {
    let tiny = lit::<T>(1e-16).max(T::epsilon());
    // Skip leading terms where 1/Γ(b+k) vanishes (b a non-positive integer).
    let mut k0 = 0usize;
    if b.im == T::zero() && b.re <= T::zero() && b.re == b.re.round() {
        k0 = (-b.re).to_usize().unwrap_or(0) + 1;
    }
    let bk0 = b + cr(lit(k0 as f64));
    let ln_fact_k0: f64 = (1..=k0).map(|k| (k as f64).ln()).sum();
    // log of first term: k0 ln w - ln k0! - lnΓ(b+k0)
    let ln_w = if w == czero() { None } else { Some(w.ln()) };
    let first_ln = match (k0, ln_w) {
        (0, _) => -ln_gamma(bk0),
        (_, None) => {
            return Ok(Scaled { mantissa: czero(), log_scale: T::zero() });
        }
        (_, Some(lw)) => lw * cr(lit(k0 as f64)) - cr(lit(ln_fact_k0)) - ln_gamma(bk0),
    };
    let mut log_scale = first_ln.re;
    let mut term = C::from_polar(T::one(), first_ln.im);
    let mut sum = term;
    let mut k = k0;
    for _ in 0..SERIES_TERM_BUDGET {
        k += 1;
        let denom = cr::<T>(lit(k as f64)) * (b + cr(lit((k - 1) as f64)));
        term = term * w / denom;
        sum += term;
        // rescale to keep magnitudes bounded
        let m = sum.norm();
        if m > lit(1e30) || (m < lit(1e-30) && m > T::zero()) {
            let s = m.ln();
            sum = sum / m;
            term = term / m;
            log_scale += s;
        }
        // the tail is bounded by a geometric series once the ratio drops below 1/2
        if term.norm() <= tiny * sum.norm() && (w / denom).norm() < lit(0.5) {
            return Ok(Scaled { mantissa: sum, log_scale });
        }
        if !sum.re.is_finite() || !sum.im.is_finite() {
            return Err(Error::Numerical("0F1 series overflowed".into()));
        }
    }
    Err(Error::Numerical(format!(
        "0F1 series did not converge within {SERIES_TERM_BUDGET} terms (|w| = {})",
        w.norm()
    )))
}

/// Bessel function of the first kind for complex order and argument,
/// principal branch of `(z/2)^ν`.
pub fn bessel_j<T: Real>(nu: C<T>, z: C<T>) -> Result<C<T>> {
    let w = -(z * z) / cr(lit(4.0));
    let f = hyp0f1_regularized(nu + cone(), w)?;
    if z == czero() {
        return Ok(if nu == czero() { cone() } else { czero() });
    }
    let half = z / cr(lit(2.0));
    Ok(f.mantissa * (nu * half.ln() + cr(f.log_scale)).exp())
}

//! Closed-form step response of `1/(s^α + 1)`: `1 − E_α(−t^α)`.
//!
//! `E_α(−t^α)` is evaluated from its Laplace-inversion integral
//! `(1/π) ∫₀^∞ e^{−rt} r^{α−1} sin(απ) / (r^{2α} + 2 r^α cos(απ) + 1) dr`,
//! plus the oscillating residue `(2/α) e^{t cos(π/α)} cos(t sin(π/α))`
//! for `1 < α < 2`. The integral is taken in `u = ln r` by the trapezoidal
//! rule, which converges geometrically for this analytic integrand.

use std::f64::consts::PI;

/// Unit step response of `1/(s^α + 1)` at normalized time `tau`.
pub fn unit_step(alpha: f64, tau: f64) -> f64 {
    assert!(alpha > 0.0 && alpha < 2.0, "order {alpha} outside (0, 2)");
    if tau <= 0.0 {
        return 0.0;
    }
    if (alpha - 1.0).abs() < 1e-9 {
        return -(-tau).exp_m1();
    }
    1.0 - relaxation(alpha, tau)
}

/// `E_α(−τ^α)`.
fn relaxation(alpha: f64, tau: f64) -> f64 {
    let (s, c) = (alpha * PI).sin_cos();
    // Lorentzian-like peak near u = 0 of width ~|sin απ|/α narrows as α → 1.
    let width = 0.2 * s.abs() / alpha;
    let u_hi = (45.0 / tau).ln() + 1.0;
    let u_lo = (1e-12f64).ln() / alpha;
    let integrand = |u: f64| {
        let ra = (alpha * u).exp();
        (-tau * u.exp()).exp() * ra * s / (ra * ra + 2.0 * ra * c + 1.0)
    };
    let mut sum = 0.0;
    if u_hi > u_lo {
        if width >= 0.1 {
            sum = trapezoid(&integrand, u_lo, u_hi, 0.1);
        } else {
            // Uniform steps away from the peak, u = w·sinh(v) grading across it.
            let (a, b) = (u_lo.max(-1.0), u_hi.min(1.0));
            if a > u_lo {
                sum += trapezoid(&integrand, u_lo, a, 0.1);
            }
            if b > a {
                let graded = |v: f64| integrand(width * v.sinh()) * width * v.cosh();
                sum += trapezoid(&graded, (a / width).asinh(), (b / width).asinh(), 0.02);
            }
            if u_hi > b {
                sum += trapezoid(&integrand, b, u_hi, 0.1);
            }
        }
        // tail below u_lo where the integrand ≈ sin(απ) e^{αu}
        sum += s * (alpha * u_lo).exp() / alpha;
    }
    let mut e = sum / PI;
    if alpha > 1.0 {
        let (ps, pc) = (PI / alpha).sin_cos();
        e += (2.0 / alpha) * (tau * pc).exp() * (tau * ps).cos();
    }
    e
}

fn trapezoid(f: &impl Fn(f64) -> f64, a: f64, b: f64, max_step: f64) -> f64 {
    let n = ((b - a) / max_step).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|k| f(a + k as f64 * h)).sum();
    h * (inner + 0.5 * (f(a) + f(b)))
}

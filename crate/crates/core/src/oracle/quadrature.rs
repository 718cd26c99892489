use crate::error::{Error, Result};

/// Truncated Laplace integral `s ∫_0^T f(t) e^{-st} dt` with a bound on the
/// neglected tail.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    /// `max|f| e^{-sT}`.
    pub tail_bound: f64,
    /// Set when `tail_bound` exceeds the requested tolerance.
    pub warning: bool,
}

/// `∫_a^b x^k e^{-αx} dx` for `k = 0, 1, 2`, with `0 <= a < b <= 2`.
fn moments(alpha: f64, a: f64, b: f64) -> [f64; 3] {
    if alpha * b < 1.0 {
        // Power series; the closed form cancels badly for small α.
        let mut out = [0.0; 3];
        for (k, m) in out.iter_mut().enumerate() {
            let mut coef = 1.0;
            let mut n = 0;
            loop {
                let p = (n + k + 1) as i32;
                let term = coef * (b.powi(p) - a.powi(p)) / p as f64;
                *m += term;
                n += 1;
                coef *= -alpha / n as f64;
                if term.abs() < 1e-18 * m.abs().max(1e-300) && n > 2 {
                    break;
                }
            }
        }
        return out;
    }
    let anti = |x: f64| {
        let e = (-alpha * x).exp();
        let (a1, a2, a3) = (1.0 / alpha, 1.0 / (alpha * alpha), 1.0 / (alpha * alpha * alpha));
        [-e * a1, -e * (x * a1 + a2), -e * (x * x * a1 + 2.0 * x * a2 + 2.0 * a3)]
    };
    let (fb, fa) = (anti(b), anti(a));
    [fb[0] - fa[0], fb[1] - fa[1], fb[2] - fa[2]]
}

/// Filon-type weights for `∫_0^{n h} f(t) e^{-st} dt`: `f` is interpolated
/// quadratically on panels of two intervals and each panel is integrated
/// against the exponential exactly, so accuracy does not degrade for large
/// `s h`. An odd interval count closes with the last interval of a panel
/// ending at `n`.
fn filon_weights(n: usize, h: f64, s: f64) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    let alpha = s * h;
    if n == 1 {
        let m = moments(alpha, 0.0, 1.0);
        w[0] = h * (m[0] - m[1]);
        w[1] = h * m[1];
        return w;
    }
    let mut panel = |first: usize, a: f64, b: f64| {
        let m = moments(alpha, a, b);
        let scale = h * (-s * first as f64 * h).exp();
        w[first] += scale * 0.5 * (m[2] - 3.0 * m[1] + 2.0 * m[0]);
        w[first + 1] += scale * (2.0 * m[1] - m[2]);
        w[first + 2] += scale * 0.5 * (m[2] - m[1]);
    };
    let even_end = n - n % 2;
    for k in (0..even_end).step_by(2) {
        panel(k, 0.0, 2.0);
    }
    if even_end < n {
        panel(n - 2, 1.0, 2.0);
    }
    w
}

/// Laplace quadrature of a series sampled at `t = k dt`.
pub fn laplace_quadrature(
    values: &[f64],
    dt: f64,
    s: f64,
    tolerance: f64,
) -> Result<QuadratureResult> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidInput(format!("s must be positive, got {s}")));
    }
    if !(dt > 0.0) || values.len() < 2 {
        return Err(Error::InvalidInput(
            "need dt > 0 and at least two samples".into(),
        ));
    }
    let n = values.len() - 1;
    let weights = filon_weights(n, dt, s);
    let integral: f64 = values.iter().zip(&weights).map(|(f, w)| w * f).sum();
    let t_max = n as f64 * dt;
    let bound = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tail_bound = bound * (-s * t_max).exp();
    Ok(QuadratureResult {
        value: s * integral,
        tail_bound,
        warning: tail_bound > tolerance,
    })
}

/// Default integration horizon for the smallest Laplace variable.
pub fn default_t_max(s_min: f64) -> f64 {
    50.0 / s_min
}

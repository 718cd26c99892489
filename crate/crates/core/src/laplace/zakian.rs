use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// The five `(α_i, K_i)` pairs of Zakian's inversion formula.
pub const ZAKIAN_PAIRS: [(Complex64, Complex64); 5] = [
    (
        Complex64::new(12.83767675, 1.666063445),
        Complex64::new(-36902.08210, 196990.4257),
    ),
    (
        Complex64::new(12.22613209, 5.012718792),
        Complex64::new(61277.02524, -95408.62551),
    ),
    (
        Complex64::new(10.93430308, 8.409673116),
        Complex64::new(-28916.56288, 18169.18531),
    ),
    (
        Complex64::new(8.776434715, 11.92185389),
        Complex64::new(4655.361138, -1.901528642),
    ),
    (
        Complex64::new(5.225453361, 15.72952905),
        Complex64::new(-118.7414011, -141.3036911),
    ),
];

fn raw_invert<F>(f: &F, t: f64) -> Result<f64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let mut acc = 0.0;
    for (alpha, k) in ZAKIAN_PAIRS {
        acc += (k * f(alpha / t)?).re;
    }
    Ok(2.0 * acc / t)
}

/// Round trip of `1/s` against the constant 1.
fn check_constants() -> Result<()> {
    static CHECK: OnceLock<std::result::Result<(), String>> = OnceLock::new();
    CHECK
        .get_or_init(|| {
            for k in 1..=100 {
                let t = 0.1 * k as f64;
                let v = raw_invert(&|s: Complex64| Ok(s.inv()), t).map_err(|e| e.to_string())?;
                if (v - 1.0).abs() > 1e-6 {
                    return Err(format!("Zakian constants fail the 1/s check at t = {t}: {v}"));
                }
            }
            Ok(())
        })
        .clone()
        .map_err(Error::Accuracy)
}

/// `f(t) = (2/t) Σ Re[K_i F(α_i / t)]` for a transform `F(s) = ∫ f e^{-st} dt`.
pub fn zakian_invert<F>(f: F, t: f64) -> Result<f64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!("inversion needs t > 0, got {t}")));
    }
    check_constants()?;
    raw_invert(&f, t)
}

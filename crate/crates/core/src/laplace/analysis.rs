//! Frequency and amplitude estimates from Laplace-domain signals.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::laplace::rational::RationalModel;
use crate::laplace::spline::CubicSpline;

/// Resampling factor of the spline derivative.
pub const REFINEMENT: usize = 10;
const MIN_POINTS: usize = 8;

/// `dC / d ln s` sampled on a refined logarithmic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeCurve {
    pub s: Vec<f64>,
    pub value: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogDerivativePeak {
    /// Location `s*` of the strongest interior extremum, `None` if the
    /// derivative is largest at an end of the grid.
    pub frequency: Option<f64>,
    pub curve: DerivativeCurve,
}

/// Natural cubic spline of `C` against `ln s`; returns where its slope
/// `dC/d ln s` peaks in magnitude.
pub fn log_derivative_peak(s_values: &[f64], c_values: &[f64]) -> Result<LogDerivativePeak> {
    if s_values.len() < MIN_POINTS || c_values.len() != s_values.len() {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_POINTS} (s, C) pairs of equal length"
        )));
    }
    if s_values.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidInput("s values must be positive".into()));
    }
    let u: Vec<f64> = s_values.iter().map(|s| s.ln()).collect();
    let spline = CubicSpline::natural(&u, c_values)?;
    let (a, b) = spline.domain();
    let n = (s_values.len() - 1) * REFINEMENT + 1;
    let grid: Vec<f64> = (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect();
    let value: Vec<f64> = grid.iter().map(|&x| spline.derivative(x)).collect();
    let (best, peak) = value
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (k, v)| if v.abs() > acc.1 { (k, v.abs()) } else { acc });
    let frequency = (peak > 0.0 && best > 0 && best + 1 < n).then(|| grid[best].exp());
    Ok(LogDerivativePeak {
        frequency,
        curve: DerivativeCurve {
            s: grid.iter().map(|x| x.exp()).collect(),
            value,
        },
    })
}

/// `|C(s→0) − C(s→∞)|` from the fitted model's limits.
pub fn amplitude_estimate(model: &RationalModel) -> Result<f64> {
    if !model.residual.is_finite() {
        return Err(Error::FitFailure("model residual is not finite".into()));
    }
    Ok((model.limit_zero() - model.limit_infinity()?).abs())
}

/// Angular frequency of the strongest non-zero Fourier component of a
/// uniformly sampled signal. The mean is removed, a Hann window applied and
/// the spectrum zero-padded eightfold; the peak bin is refined by a parabola
/// through its log-magnitude neighbours.
pub fn dominant_frequency(values: &[f64], dt: f64) -> Result<f64> {
    if values.len() < 8 || !(dt > 0.0) {
        return Err(Error::InvalidInput("need at least 8 samples and dt > 0".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let padded = (8 * n).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); padded];
    for (k, v) in values.iter().enumerate() {
        let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
        buf[k] = Complex64::new((v - mean) * hann, 0.0);
    }
    FftPlanner::new().plan_fft_forward(padded).process(&mut buf);
    let mag: Vec<f64> = buf[..padded / 2].iter().map(|z| z.norm()).collect();
    // Skip the main lobe of the removed mean.
    let first = 2 * padded / n;
    let (k, peak) = mag
        .iter()
        .enumerate()
        .skip(first)
        .fold((0, 0.0f64), |acc, (k, &m)| if m > acc.1 { (k, m) } else { acc });
    if peak == 0.0 {
        return Err(Error::UndefinedLimit("signal has no oscillating component".into()));
    }
    let offset = if k + 1 < mag.len() && k > 0 {
        let (a, b, c) = (mag[k - 1].ln(), mag[k].ln(), mag[k + 1].ln());
        let denom = a - 2.0 * b + c;
        if denom < 0.0 { 0.5 * (a - c) / denom } else { 0.0 }
    } else {
        0.0
    };
    Ok(2.0 * std::f64::consts::PI * (k as f64 + offset) / (padded as f64 * dt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::rational::rational_fit;

    fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| (a.ln() + (b.ln() - a.ln()) * k as f64 / (n - 1) as f64).exp())
            .collect()
    }

    #[test]
    fn cosine_frequency() {
        let s = log_grid(0.05, 20.0, 40);
        let c: Vec<f64> = s.iter().map(|s| s * s / (s * s + 4.0)).collect();
        let peak = log_derivative_peak(&s, &c).unwrap();
        let f = peak.frequency.unwrap();
        assert!((f - 2.0).abs() < 0.15 * 2.0, "{f}");
        assert_eq!(peak.curve.s.len(), 39 * REFINEMENT + 1);
    }

    #[test]
    fn scaling_keeps_location() {
        let s = log_grid(0.05, 20.0, 30);
        let c: Vec<f64> = s.iter().map(|s| s * s / (s * s + 1.0)).collect();
        let scaled: Vec<f64> = c.iter().map(|v| 7.5 * v).collect();
        let a = log_derivative_peak(&s, &c).unwrap().frequency;
        let b = log_derivative_peak(&s, &scaled).unwrap().frequency;
        assert_eq!(a, b);
    }

    #[test]
    fn featureless_power_law_has_no_peak() {
        let s = log_grid(0.1, 10.0, 20);
        let c: Vec<f64> = s.iter().map(|s| s.powf(0.7)).collect();
        assert_eq!(log_derivative_peak(&s, &c).unwrap().frequency, None);
        let flat = vec![0.4; 20];
        assert_eq!(log_derivative_peak(&s, &flat).unwrap().frequency, None);
    }

    #[test]
    fn relaxation_rate_shows_as_peak() {
        let s = log_grid(0.01, 100.0, 40);
        let c: Vec<f64> = s.iter().map(|s| 1.0 / (1.0 + s)).collect();
        let f = log_derivative_peak(&s, &c).unwrap().frequency.unwrap();
        assert!((f - 1.0).abs() < 0.05);
    }

    #[test]
    fn amplitude_of_decay_and_constant() {
        let s = log_grid(0.05, 20.0, 30);
        let c: Vec<f64> = s.iter().map(|s| 1.0 / (1.0 + s)).collect();
        let m = rational_fit(&s, &c, 2, 3).unwrap();
        assert!((amplitude_estimate(&m).unwrap() - 1.0).abs() < 1e-6);
        let flat = vec![0.3; 30];
        let m = rational_fit(&s, &flat, 2, 3).unwrap();
        assert!(amplitude_estimate(&m).unwrap() < 1e-10);
    }

    #[test]
    fn damped_oscillation_amplitude() {
        // f(t) = 0.2 + 0.5 e^{-0.05 t} cos(1.5 t); peak-to-mean 0.5.
        let s = log_grid(0.02, 50.0, 60);
        let c: Vec<f64> = s
            .iter()
            .map(|&s| 0.2 + 0.5 * s * (s + 0.05) / ((s + 0.05).powi(2) + 2.25))
            .collect();
        let m = rational_fit(&s, &c, 2, 4).unwrap();
        let amp = amplitude_estimate(&m).unwrap();
        assert!((amp - 0.5).abs() < 0.05, "{amp}");
    }

    #[test]
    fn too_few_points() {
        let s = log_grid(0.1, 1.0, 7);
        assert!(log_derivative_peak(&s, &s).is_err());
    }

    #[test]
    fn fourier_peak_of_damped_mixture() {
        let dt = 0.05;
        let v: Vec<f64> = (0..4000)
            .map(|k| {
                let t = k as f64 * dt;
                0.3 + 0.8 * (1.7 * t).cos() * (-0.01 * t).exp() + 0.2 * (4.1 * t).sin()
            })
            .collect();
        let w = dominant_frequency(&v, dt).unwrap();
        assert!((w - 1.7).abs() < 0.01, "{w}");
        assert!(dominant_frequency(&vec![1.0; 64], dt).is_err());
    }
}

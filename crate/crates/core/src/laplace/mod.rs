//! Post-processing of Laplace-domain signals.

pub mod analysis;
pub mod rational;
pub mod spline;
pub mod zakian;

pub use analysis::{amplitude_estimate, dominant_frequency, log_derivative_peak, DerivativeCurve, LogDerivativePeak};
pub use rational::{rational_fit, RationalModel};
pub use spline::CubicSpline;
pub use zakian::{zakian_invert, ZAKIAN_PAIRS};

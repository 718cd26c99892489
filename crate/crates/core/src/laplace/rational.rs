//! Rational `P_n / Q_n` fits with order escalation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Ratio of parameter magnitude to data magnitude treated as divergence.
pub const DIVERGENCE_RATIO: f64 = 1e6;
const MAX_LM_ITERATIONS: usize = 500;
const DENOMINATOR_PROBES: usize = 400;

/// `P(x)/Q(x)` in the normalized variable `x = s / scale`, with `Q(0) = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalModel {
    /// Ascending coefficients of `P`.
    pub numerator: Vec<f64>,
    /// Ascending coefficients of `Q`; the first is 1.
    pub denominator: Vec<f64>,
    pub scale: f64,
    /// Root-mean-square deviation from the fitted data.
    pub residual: f64,
    pub order: (usize, usize),
    pub interval: (f64, f64),
}

fn horner<T>(coeffs: &[f64], x: T) -> T
where
    T: Copy + std::ops::Mul<Output = T> + std::ops::Add<f64, Output = T> + From<f64>,
{
    coeffs.iter().rev().fold(T::from(0.0), |acc, &c| acc * x + c)
}

impl RationalModel {
    pub fn eval(&self, s: f64) -> f64 {
        let x = s / self.scale;
        horner(&self.numerator, x) / horner(&self.denominator, x)
    }

    pub fn eval_complex(&self, s: Complex64) -> Complex64 {
        let x = s / self.scale;
        horner(&self.numerator, x) / horner(&self.denominator, x)
    }

    /// `lim_{s→0}`, the constant coefficient.
    pub fn limit_zero(&self) -> f64 {
        self.numerator[0]
    }

    /// `lim_{s→∞}`, from the leading coefficients. Coefficients below
    /// `1e-10` of the largest one in their polynomial do not count towards
    /// the degree, so a fit with a spurious common factor keeps its limit.
    pub fn limit_infinity(&self) -> Result<f64> {
        let p = effective_degree(&self.numerator);
        let q = effective_degree(&self.denominator);
        match (p, q) {
            (None, _) => Ok(0.0),
            (Some(p), Some(q)) if p < q => Ok(0.0),
            (Some(p), Some(q)) if p == q => Ok(self.numerator[p] / self.denominator[q]),
            (Some(p), q) => Err(Error::UndefinedLimit(format!(
                "numerator degree {p} exceeds denominator degree {}",
                q.unwrap_or(0)
            ))),
        }
    }

    fn denominator_keeps_sign(&self) -> bool {
        let (a, b) = (self.interval.0 / self.scale, self.interval.1 / self.scale);
        let q0 = horner(&self.denominator, a);
        if q0 == 0.0 || !q0.is_finite() {
            return false;
        }
        (0..=DENOMINATOR_PROBES).all(|k| {
            let x = a + (b - a) * k as f64 / DENOMINATOR_PROBES as f64;
            let q = horner(&self.denominator, x);
            q.is_finite() && q * q0.signum() > 0.0
        })
    }
}

fn effective_degree(coeffs: &[f64]) -> Option<usize> {
    let top = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    coeffs.iter().rposition(|c| c.abs() > 1e-10 * top)
}

/// Parameters `[p_0..p_n, q_1..q_n]` for order `(n, n)`.
struct Problem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    n: usize,
}

impl Problem<'_> {
    fn split<'t>(&self, theta: &'t [f64]) -> (&'t [f64], &'t [f64]) {
        theta.split_at(self.n + 1)
    }

    fn q_of(&self, q: &[f64], x: f64) -> f64 {
        let tail: f64 = q.iter().rev().fold(0.0, |acc, &c| (acc + c) * x);
        1.0 + tail
    }

    fn residuals(&self, theta: &[f64]) -> DVector<f64> {
        let (p, q) = self.split(theta);
        DVector::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .zip(self.y)
                .map(|(&x, &y)| horner(p, x) / self.q_of(q, x) - y),
        )
    }

    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        let (p, q) = self.split(theta);
        let cols = theta.len();
        let mut j = DMatrix::zeros(self.x.len(), cols);
        for (row, &x) in self.x.iter().enumerate() {
            let pv = horner(p, x);
            let qv = self.q_of(q, x);
            let mut xk = 1.0;
            for k in 0..=self.n {
                j[(row, k)] = xk / qv;
                if k >= 1 {
                    j[(row, self.n + k)] = -pv * xk / (qv * qv);
                }
                xk *= x;
            }
        }
        j
    }

    fn cost(&self, theta: &[f64]) -> f64 {
        self.residuals(theta).norm_squared()
    }

    /// Linearized fit `P(x) - y Q(x) = 0`.
    fn linearized(&self) -> Option<Vec<f64>> {
        let cols = 2 * self.n + 1;
        let mut a = DMatrix::zeros(self.x.len(), cols);
        let b = DVector::from_column_slice(self.y);
        for (row, (&x, &y)) in self.x.iter().zip(self.y).enumerate() {
            let mut xk = 1.0;
            for k in 0..=self.n {
                a[(row, k)] = xk;
                if k >= 1 {
                    a[(row, self.n + k)] = -y * xk;
                }
                xk *= x;
            }
        }
        let svd = a.svd(true, true);
        let sol = svd.solve(&b, 1e-14).ok()?;
        let v: Vec<f64> = sol.iter().copied().collect();
        v.iter().all(|c| c.is_finite()).then_some(v)
    }

    /// Levenberg-Marquardt polish.
    fn polish(&self, mut theta: Vec<f64>) -> Vec<f64> {
        let mut cost = self.cost(&theta);
        if !cost.is_finite() {
            return theta;
        }
        let mut lambda = 1e-3;
        for _ in 0..MAX_LM_ITERATIONS {
            let r = self.residuals(&theta);
            let j = self.jacobian(&theta);
            let jt = j.transpose();
            let a = &jt * &j;
            let g = &jt * &r;
            let mut improved = false;
            while lambda < 1e16 {
                let mut damped = a.clone();
                for k in 0..damped.nrows() {
                    damped[(k, k)] += lambda * (a[(k, k)] + 1e-30);
                }
                let step = match damped.cholesky() {
                    Some(c) => c.solve(&(-&g)),
                    None => {
                        lambda *= 4.0;
                        continue;
                    }
                };
                let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, d)| t + d).collect();
                let trial_cost = self.cost(&trial);
                if trial_cost.is_finite() && trial_cost < cost {
                    let gain = cost - trial_cost;
                    let small_step = step.norm() <= 1e-15 * (1.0 + theta.iter().map(|t| t * t).sum::<f64>().sqrt());
                    theta = trial;
                    cost = trial_cost;
                    lambda = (lambda / 3.0).max(1e-15);
                    improved = !(small_step || gain <= 1e-15 * cost);
                    break;
                }
                lambda *= 4.0;
            }
            if !improved {
                break;
            }
        }
        theta
    }

    fn model(&self, theta: &[f64], scale: f64, interval: (f64, f64)) -> RationalModel {
        let (p, q) = self.split(theta);
        let mut denominator = vec![1.0];
        denominator.extend_from_slice(q);
        RationalModel {
            numerator: p.to_vec(),
            denominator,
            scale,
            residual: (self.cost(theta) / self.x.len() as f64).sqrt(),
            order: (self.n, self.n),
            interval,
        }
    }
}

/// Fits `(start, start)` first and escalates one order at a time, warm-started,
/// until parameters diverge, the residual grows, the denominator changes sign
/// on the data interval, or `max_order` is reached.
pub fn rational_fit(
    s_values: &[f64],
    c_values: &[f64],
    start_order: usize,
    max_order: usize,
) -> Result<RationalModel> {
    let n_pts = s_values.len();
    if c_values.len() != n_pts {
        return Err(Error::InvalidInput("s and C lengths differ".into()));
    }
    if start_order == 0 || max_order < start_order {
        return Err(Error::InvalidInput("need 1 <= start_order <= max_order".into()));
    }
    if n_pts < 2 * (max_order + 1) {
        return Err(Error::InvalidInput(format!(
            "order {max_order} needs at least {} points, got {n_pts}",
            2 * (max_order + 1)
        )));
    }
    if s_values.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidInput("s values must be positive".into()));
    }
    let mut sorted = s_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("s values must be distinct".into()));
    }
    if c_values.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("C values must be finite".into()));
    }
    let scale = sorted[n_pts - 1];
    let interval = (sorted[0], scale);
    let data_scale = c_values.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let limit = DIVERGENCE_RATIO * data_scale;
    let x: Vec<f64> = s_values.iter().map(|s| s / scale).collect();

    let stable = |m: &RationalModel| {
        m.residual.is_finite()
            && m.numerator.iter().chain(&m.denominator[1..]).all(|c| c.abs() <= limit)
            && m.denominator_keeps_sign()
    };

    let first = Problem { x: &x, y: c_values, n: start_order };
    let seed = first
        .linearized()
        .unwrap_or_else(|| vec![0.0; 2 * start_order + 1]);
    let theta = first.polish(seed);
    let mut best = first.model(&theta, scale, interval);
    if !stable(&best) {
        return Err(Error::FitFailure(format!(
            "no stable ({start_order},{start_order}) fit; residual {:.3e}",
            best.residual
        )));
    }
    let mut theta = theta;
    // Exact to rounding: a higher order only adds a common factor.
    let exact = 1e-12 * data_scale.max(f64::MIN_POSITIVE);
    for n in start_order + 1..=max_order {
        let problem = Problem { x: &x, y: c_values, n };
        let (p, q) = theta.split_at(n);
        let mut warm = p.to_vec();
        warm.push(0.0);
        warm.extend_from_slice(q);
        warm.push(0.0);
        let next_theta = problem.polish(warm);
        let next = problem.model(&next_theta, scale, interval);
        if best.residual <= exact || !stable(&next) || next.residual > best.residual {
            break;
        }
        best = next;
        theta = next_theta;
    }
    Ok(best)
}

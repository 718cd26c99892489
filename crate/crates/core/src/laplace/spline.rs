use crate::error::{Error, Result};

/// Natural cubic interpolating spline.
#[derive(Clone, Debug)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n < 3 || y.len() != n {
            return Err(Error::InvalidInput(
                "spline needs at least three points and matching lengths".into(),
            ));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("spline knots must increase strictly".into()));
        }
        // Thomas algorithm on the interior equations.
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let k = n - 2;
        let mut diag = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
        }
        for i in 1..k {
            let f = h[i] / diag[i - 1];
            diag[i] -= f * h[i];
            rhs[i] -= f * rhs[i - 1];
        }
        let mut m = vec![0.0; n];
        for i in (0..k).rev() {
            let upper = if i + 1 < k { h[i + 1] * m[i + 2] } else { 0.0 };
            m[i + 1] = (rhs[i] - upper) / diag[i];
        }
        Ok(CubicSpline {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    fn interval(&self, t: f64) -> usize {
        match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p => (p - 1).min(self.x.len() - 2),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        (self.y[i + 1] - self.y[i]) / h
            + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) * h / 6.0
    }
}

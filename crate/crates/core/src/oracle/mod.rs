//! Exact references: dense resolvent, deterministic truncated series and
//! time-domain propagation with Laplace quadrature.

pub mod dense;
pub mod propagate;
pub mod quadrature;

pub use dense::{
    dense_resolvent, dense_truncated_magic, expectation, pure_state_density, vectorized_resolvent,
    DenseOperatorRep, MagicTerms, ResolventSolver,
};
pub use propagate::{time_domain_reference, TimeSeries};
pub use quadrature::{default_t_max, laplace_quadrature, QuadratureResult};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ObservableSpec, SpinBasisState};

/// Laplace-domain values `C_s` of each observable from the time-domain route.
#[derive(Clone, Debug)]
pub struct OracleCurve {
    pub s_values: Vec<f64>,
    pub observables: Vec<String>,
    /// `values[obs][s]`.
    pub values: Vec<Vec<f64>>,
    /// `tail_bounds[obs][s]`.
    pub tail_bounds: Vec<Vec<f64>>,
}

/// Propagates once up to `t_max` (default `50/s_min`) and integrates every
/// requested `s`.
pub fn oracle_laplace_curve(
    model: &ModelSpec,
    psi0: SpinBasisState,
    observables: &[ObservableSpec],
    s_values: &[f64],
    dt: f64,
    t_max: Option<f64>,
) -> Result<OracleCurve> {
    let s_min = s_values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(s_min > 0.0 && s_min.is_finite()) {
        return Err(Error::InvalidInput("s values must be positive".into()));
    }
    let t_max = t_max.unwrap_or_else(|| default_t_max(s_min));
    let series = time_domain_reference(model, psi0, observables, t_max, dt)?;
    let mut values = Vec::with_capacity(observables.len());
    let mut tail_bounds = Vec::with_capacity(observables.len());
    for v in &series.values {
        let mut row = Vec::with_capacity(s_values.len());
        let mut tails = Vec::with_capacity(s_values.len());
        for &s in s_values {
            let q = laplace_quadrature(v, dt, s, f64::INFINITY)?;
            row.push(q.value);
            tails.push(q.tail_bound);
        }
        values.push(row);
        tail_bounds.push(tails);
    }
    Ok(OracleCurve {
        s_values: s_values.to_vec(),
        observables: series.observables,
        values,
        tail_bounds,
    })
}

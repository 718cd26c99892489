//! Loop sums and replica statistics.

use num_complex::Complex64;

use crate::engine::RunResult;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, ObservableSpec, SpinBasisState};

/// `C_s^X` of one run, `values[obs][s]`, with its per-loop population.
#[derive(Clone, Debug, PartialEq)]
pub struct FinalizedRun {
    pub observables: Vec<String>,
    pub s_values: Vec<f64>,
    pub values: Vec<Vec<Complex64>>,
    pub population: Vec<f64>,
}

/// Sums the loop contributions of a run.
pub fn finalize_run(result: &RunResult) -> FinalizedRun {
    let values = (0..result.observables.len())
        .map(|o| {
            (0..result.s_values.len())
                .map(|s| result.loop_series(o, s)[..result.loops_done].iter().sum())
                .collect()
        })
        .collect();
    FinalizedRun {
        observables: result.observables.clone(),
        s_values: result.s_values.clone(),
        values,
        population: result.population.iter().map(|&p| p as f64).collect(),
    }
}

/// Mean and standard error of the mean, per component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: Complex64,
    pub stderr_re: f64,
    pub stderr_im: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateResult {
    pub observables: Vec<String>,
    pub s_values: Vec<f64>,
    /// `estimates[obs][s]`.
    pub estimates: Vec<Vec<Estimate>>,
    pub n_runs: usize,
    /// Mean spawning attempts per loop and its standard error.
    pub population_mean: Vec<f64>,
    pub population_stderr: Vec<f64>,
}

impl AggregateResult {
    pub fn observable_index(&self, name: &str) -> Option<usize> {
        self.observables.iter().position(|o| o == name)
    }

    pub fn estimate(&self, name: &str, s_index: usize) -> Option<Estimate> {
        self.observable_index(name).map(|o| self.estimates[o][s_index])
    }
}

fn mean_stderr(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Replica mean and standard error over at least two runs.
pub fn aggregate(runs: &[FinalizedRun]) -> Result<AggregateResult> {
    if runs.len() < 2 {
        return Err(Error::TooFewRuns(runs.len()));
    }
    summarize(runs)
}

/// Like [`aggregate`], but a single run is allowed and gets zero error bars.
pub fn summarize(runs: &[FinalizedRun]) -> Result<AggregateResult> {
    let first = runs.first().ok_or(Error::TooFewRuns(0))?;
    for r in runs {
        if r.observables != first.observables || r.s_values != first.s_values {
            return Err(Error::InvalidInput(
                "runs disagree on observables or s grid".into(),
            ));
        }
    }
    let estimates = (0..first.observables.len())
        .map(|o| {
            (0..first.s_values.len())
                .map(|s| {
                    let cell = runs.iter().map(move |r| r.values[o][s]);
                    let (re, stderr_re) = mean_stderr(cell.clone().map(|c| c.re));
                    let (im, stderr_im) = mean_stderr(cell.map(|c| c.im));
                    Estimate {
                        mean: Complex64::new(re, im),
                        stderr_re,
                        stderr_im,
                    }
                })
                .collect()
        })
        .collect();
    let loops = runs.iter().map(|r| r.population.len()).max().unwrap_or(0);
    let (population_mean, population_stderr) = (0..loops)
        .map(|m| mean_stderr(runs.iter().map(move |r| r.population.get(m).copied().unwrap_or(0.0))))
        .unzip();
    Ok(AggregateResult {
        observables: first.observables.clone(),
        s_values: first.s_values.clone(),
        estimates,
        n_runs: runs.len(),
        population_mean,
        population_stderr,
    })
}

/// Identity, every `σ^z_i`, the Loschmidt projector and, for Ising chains,
/// every bond energy.
pub fn standard_observable_suite(model: &ModelSpec, psi0: SpinBasisState) -> Result<Vec<ObservableSpec>> {
    let len = model.len();
    let mut out = vec![ObservableSpec::identity()];
    for i in 1..=len {
        out.push(ObservableSpec::sigma_z(model, i)?);
    }
    out.push(ObservableSpec::projector(model, psi0)?);
    if model.is_ising() {
        for b in 1..len {
            out.push(ObservableSpec::energy_bond(model, b)?);
        }
    }
    Ok(out)
}

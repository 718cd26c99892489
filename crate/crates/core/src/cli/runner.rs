//! Replica orchestration, result files and the post-processing commands.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cli::config::{parse_config, RunConfig};
use crate::engine::{run_simulation_partial, RunResult};
use crate::error::{Error, Result};
use crate::laplace::{amplitude_estimate, log_derivative_peak, rational_fit, zakian_invert, RationalModel};
use crate::observables::{finalize_run, summarize, AggregateResult, Estimate, FinalizedRun};
use crate::oracle::dense::{expectation, pure_state_density, ResolventSolver, MAX_RESOLVENT_SITES};
use crate::oracle::oracle_laplace_curve;

pub const RESULTS_FILE: &str = "results.csv";
pub const POPULATION_FILE: &str = "population.csv";
pub const LOOPS_FILE: &str = "loops.csv";
const CONFIG_MARKER: &str = "# --- effective configuration ---";
pub const RESULT_COLUMNS: [&str; 7] = [
    "s",
    "observable",
    "value_re",
    "value_im",
    "stderr_re",
    "stderr_im",
    "n_runs",
];

/// Seed of replica `run`: SplitMix64 applied to
/// `master + 0x9E3779B97F4A7C15 * (run + 1)` (wrapping arithmetic).
pub fn replica_seed(master: u64, run: u64) -> u64 {
    let mut z = master.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(run.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Number formatting used in every output file: 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunFailure {
    pub run: usize,
    pub loop_index: usize,
    pub population: usize,
}

/// Per-loop replica means, `[obs][s][m-1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopMeans {
    pub mean: Vec<Vec<Vec<Complex64>>>,
    pub stderr: Vec<Vec<Vec<(f64, f64)>>>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub aggregate: AggregateResult,
    pub failures: Vec<RunFailure>,
    pub loops: Option<LoopMeans>,
}

fn loop_means(results: &[RunResult]) -> LoopMeans {
    let first = &results[0];
    let n = results.len() as f64;
    let mut mean = Vec::new();
    let mut stderr = Vec::new();
    for o in 0..first.observables.len() {
        let mut mo = Vec::new();
        let mut so = Vec::new();
        for s in 0..first.s_values.len() {
            let mut ms = Vec::with_capacity(first.m_trunc);
            let mut ss = Vec::with_capacity(first.m_trunc);
            for m in 0..first.m_trunc {
                let vals: Vec<Complex64> = results.iter().map(|r| r.loop_series(o, s)[m]).collect();
                let mu: Complex64 = vals.iter().sum::<Complex64>() / n;
                let (mut vr, mut vi) = (0.0, 0.0);
                for v in &vals {
                    vr += (v.re - mu.re).powi(2);
                    vi += (v.im - mu.im).powi(2);
                }
                let err = if results.len() > 1 {
                    ((vr / (n - 1.0) / n).sqrt(), (vi / (n - 1.0) / n).sqrt())
                } else {
                    (0.0, 0.0)
                };
                ms.push(mu);
                ss.push(err);
            }
            mo.push(ms);
            so.push(ss);
        }
        mean.push(mo);
        stderr.push(so);
    }
    LoopMeans { mean, stderr }
}

/// Runs every replica on a pool of `workers` threads. Replica `k` always uses
/// `replica_seed(master_seed, k)`, so results do not depend on scheduling.
pub fn execute_runs(config: &RunConfig, workers: usize) -> Result<RunOutcome> {
    config.validate()?;
    let psi0 = config.initial_state()?;
    let grid = config.s_grid()?;
    let schedule = config.loop_schedule()?;
    let observables = config.observables()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::ResourceLimit(e.to_string()))?;
    let keep_loops = config.dump_loops;
    let runs: Vec<Result<ReplicaOutput>> = pool.install(|| {
        (0..config.runs.count)
            .into_par_iter()
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(replica_seed(config.runs.master_seed, k as u64));
                let (result, err) =
                    run_simulation_partial(&config.model, psi0, &grid, &schedule, &observables, &mut rng)?;
                let failure = match err {
                    None => None,
                    Some(Error::PopulationCap { loop_index, population, .. }) => Some(RunFailure {
                        run: k,
                        loop_index,
                        population,
                    }),
                    Some(other) => return Err(other),
                };
                let fin = finalize_run(&result);
                Ok((fin, keep_loops.then_some(result), failure))
            })
            .collect()
    });
    let mut finalized = Vec::with_capacity(runs.len());
    let mut full = Vec::new();
    let mut failures = Vec::new();
    for r in runs {
        let (fin, res, fail) = r?;
        finalized.push(fin);
        full.extend(res);
        failures.extend(fail);
    }
    Ok(RunOutcome {
        aggregate: summarize(&finalized)?,
        failures,
        loops: keep_loops.then(|| loop_means(&full)),
    })
}

fn header(config: &RunConfig, lines: &[String]) -> String {
    let mut out = String::from("# tqmc results\n");
    for l in lines {
        let _ = writeln!(out, "# {l}");
    }
    out.push_str(CONFIG_MARKER);
    out.push('\n');
    for l in config.to_toml().lines() {
        let _ = writeln!(out, "# {l}");
    }
    out
}

/// Recovers the configuration echoed into a result file header.
pub fn config_from_header(text: &str) -> Result<RunConfig> {
    let mut lines = text.lines().skip_while(|l| *l != CONFIG_MARKER);
    if lines.next().is_none() {
        return Err(Error::Parse("no configuration block in header".into()));
    }
    let body: String = lines
        .take_while(|l| l.starts_with('#'))
        .map(|l| {
            let l = l.strip_prefix('#').unwrap_or(l);
            format!("{}\n", l.strip_prefix(' ').unwrap_or(l))
        })
        .collect();
    parse_config(&body)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn write_results(path: &Path, head: &str, agg: &AggregateResult, n_runs: usize, failed: bool) -> Result<()> {
    let mut buf = head.as_bytes().to_vec();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut cols: Vec<&str> = RESULT_COLUMNS.to_vec();
        if failed {
            cols.push("failed");
        }
        w.write_record(&cols).map_err(csv_error)?;
        for (o, name) in agg.observables.iter().enumerate() {
            for (si, &s) in agg.s_values.iter().enumerate() {
                let e: Estimate = agg.estimates[o][si];
                let mut rec = vec![
                    fmt_num(s),
                    name.clone(),
                    fmt_num(e.mean.re),
                    fmt_num(e.mean.im),
                    fmt_num(e.stderr_re),
                    fmt_num(e.stderr_im),
                    n_runs.to_string(),
                ];
                if failed {
                    rec.push("1".into());
                }
                w.write_record(&rec).map_err(csv_error)?;
            }
        }
        w.flush()?;
    }
    fs::write(path, buf)?;
    Ok(())
}

fn write_population(path: &Path, agg: &AggregateResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["loop_m", "mean_attempts", "stderr_attempts"]).map_err(csv_error)?;
    for (m, (mean, err)) in agg.population_mean.iter().zip(&agg.population_stderr).enumerate() {
        w.write_record([(m + 1).to_string(), fmt_num(*mean), fmt_num(*err)])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn write_loops(path: &Path, agg: &AggregateResult, loops: &LoopMeans) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["loop_m", "s", "observable", "value_re", "value_im", "stderr_re", "stderr_im"])
        .map_err(csv_error)?;
    for (o, name) in agg.observables.iter().enumerate() {
        for (si, &s) in agg.s_values.iter().enumerate() {
            for (m, (mu, err)) in loops.mean[o][si].iter().zip(&loops.stderr[o][si]).enumerate() {
                w.write_record([
                    (m + 1).to_string(),
                    fmt_num(s),
                    name.clone(),
                    fmt_num(mu.re),
                    fmt_num(mu.im),
                    fmt_num(err.0),
                    fmt_num(err.1),
                ])
                .map_err(csv_error)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Finalized means, the raw result when loops are dumped, and any failure.
type ReplicaOutput = (FinalizedRun, Option<RunResult>, Option<RunFailure>);

/// Runs all replicas and writes `results.csv` and `population.csv` (and
/// `loops.csv` when requested) into `out_dir`. A population-cap failure still
/// writes the partial results, flagged, and is then returned as the error.
pub fn run_command(config: &RunConfig, workers: usize, out_dir: &Path) -> Result<RunOutcome> {
    let outcome = execute_runs(config, workers)?;
    fs::create_dir_all(out_dir)?;
    let n = config.runs.count;
    let mut info = vec![
        "source = monte_carlo".to_string(),
        format!("single_run = {}", n == 1),
    ];
    for f in &outcome.failures {
        info.push(format!(
            "failed run = {} at loop {} (population {})",
            f.run, f.loop_index, f.population
        ));
    }
    let failed = !outcome.failures.is_empty();
    write_results(&out_dir.join(RESULTS_FILE), &header(config, &info), &outcome.aggregate, n, failed)?;
    write_population(&out_dir.join(POPULATION_FILE), &outcome.aggregate)?;
    if let Some(loops) = &outcome.loops {
        write_loops(&out_dir.join(LOOPS_FILE), &outcome.aggregate, loops)?;
    }
    if let Some(f) = outcome.failures.first() {
        return Err(Error::RunFailed {
            run: f.run,
            loop_index: f.loop_index,
            population: f.population,
            cap: config.runs.population_cap,
            failed: outcome.failures.len(),
            total: config.runs.count,
        });
    }
    Ok(outcome)
}

/// Exact values on the configured grid: dense resolvent for short chains,
/// time-domain propagation with step `dt` otherwise.
pub fn oracle_values(config: &RunConfig, dt: f64) -> Result<AggregateResult> {
    config.validate()?;
    let psi0 = config.initial_state()?;
    let grid = config.s_grid()?;
    let observables = config.observables()?;
    let len = config.model.len();
    let s_values = grid.values().to_vec();
    let values: Vec<Vec<Complex64>> = if len <= MAX_RESOLVENT_SITES {
        let solver = ResolventSolver::new(&config.model)?;
        let rho0 = pure_state_density(psi0);
        let mut per_s = Vec::with_capacity(s_values.len());
        for &s in &s_values {
            let rho = solver.solve(&rho0, s)?;
            per_s.push(observables.iter().map(|o| expectation(o, &rho, len)).collect::<Vec<_>>());
        }
        (0..observables.len())
            .map(|o| per_s.iter().map(|row| row[o]).collect())
            .collect()
    } else {
        let curve = oracle_laplace_curve(&config.model, psi0, &observables, &s_values, dt, None)?;
        curve
            .values
            .iter()
            .map(|row| row.iter().map(|&v| Complex64::new(v, 0.0)).collect())
            .collect()
    };
    let estimates = values
        .iter()
        .map(|row| {
            row.iter()
                .map(|&mean| Estimate {
                    mean,
                    stderr_re: 0.0,
                    stderr_im: 0.0,
                })
                .collect()
        })
        .collect();
    Ok(AggregateResult {
        observables: observables.iter().map(|o| o.name.clone()).collect(),
        s_values,
        estimates,
        n_runs: 0,
        population_mean: Vec::new(),
        population_stderr: Vec::new(),
    })
}

/// Writes oracle values in the Monte Carlo schema with zero error bars.
pub fn oracle_command(config: &RunConfig, dt: f64, out_dir: &Path) -> Result<AggregateResult> {
    let agg = oracle_values(config, dt)?;
    fs::create_dir_all(out_dir)?;
    let info = vec!["source = oracle".to_string(), "single_run = false".to_string()];
    write_results(&out_dir.join(RESULTS_FILE), &header(config, &info), &agg, 0, false)?;
    Ok(agg)
}

/// One data row of `results.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub s: f64,
    pub observable: String,
    pub value: Complex64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    pub n_runs: usize,
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_error)?;
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.iter().take(RESULT_COLUMNS.len()).ne(RESULT_COLUMNS.iter().copied()) {
        return Err(Error::Parse(format!("unexpected columns {headers:?}")));
    }
    let num = |field: &str| -> Result<f64> {
        field
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("not a number: {field:?}")))
    };
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_error)?;
        rows.push(ResultRow {
            s: num(&rec[0])?,
            observable: rec[1].to_string(),
            value: Complex64::new(num(&rec[2])?, num(&rec[3])?),
            stderr_re: num(&rec[4])?,
            stderr_im: num(&rec[5])?,
            n_runs: rec[6]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad run count {:?}", &rec[6])))?,
        });
    }
    Ok(rows)
}

/// `(s, Re C)` of one observable, sorted by `s`.
pub fn observable_curve(rows: &[ResultRow], observable: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.observable == observable)
        .map(|r| (r.s, r.value.re))
        .collect();
    if pts.is_empty() {
        return Err(Error::InvalidInput(format!("observable {observable:?} not in results")));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pts.into_iter().unzip())
}

/// Highest escalation order the number of points supports, capped at 6.
fn max_order_for(points: usize) -> usize {
    (points / 2).saturating_sub(1).clamp(2, 6)
}

pub fn fit_curve(s: &[f64], c: &[f64]) -> Result<RationalModel> {
    rational_fit(s, c, 2, max_order_for(s.len()))
}

/// Parses `start:stop:count` or a comma-separated list of times.
pub fn parse_t_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Parse(format!("bad time grid {spec:?}; use start:stop:count or t1,t2,..."));
    let parts: Vec<&str> = spec.split(':').collect();
    let out: Vec<f64> = if parts.len() == 3 {
        let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        match n {
            0 => return Err(bad()),
            1 => vec![a],
            n => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
        }
    } else {
        spec.split(',')
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if out.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidInput("times must be finite and nonnegative".into()));
    }
    Ok(out)
}

/// Time-domain signal from a rational fit of `C_s` and Zakian inversion of
/// `C(s)/s`; `t = 0` takes the fitted `s → ∞` limit.
pub fn invert_curve(model: &RationalModel, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    times
        .iter()
        .map(|&t| {
            let v = if t == 0.0 {
                model.limit_infinity()?
            } else {
                zakian_invert(|s| Ok(model.eval_complex(s) / s), t)?
            };
            Ok((t, v))
        })
        .collect()
}

pub fn invert_command(results: &Path, observable: &str, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    let rows = read_results(results)?;
    let (s, c) = observable_curve(&rows, observable)?;
    let model = fit_curve(&s, &c)?;
    invert_curve(&model, times)
}

pub fn write_time_series(out: &mut dyn std::io::Write, series: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "value"]).map_err(csv_error)?;
    for (t, v) in series {
        w.write_record([fmt_num(*t), fmt_num(*v)]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct FitSummary {
    pub order: (usize, usize),
    pub residual: f64,
    pub limit_zero: f64,
    pub limit_infinity: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport {
    pub observable: String,
    pub points: usize,
    pub frequency: Option<f64>,
    pub amplitude: Option<f64>,
    pub fit: Option<FitSummary>,
    pub notes: Vec<String>,
}

pub fn analyze_curve(observable: &str, s: &[f64], c: &[f64]) -> Result<AnalysisReport> {
    let mut notes = Vec::new();
    let frequency = match log_derivative_peak(s, c) {
        Ok(p) => {
            if p.frequency.is_none() {
                notes.push("no interior peak in the logarithmic derivative".into());
            }
            p.frequency
        }
        Err(e) => {
            notes.push(format!("frequency: {e}"));
            None
        }
    };
    let (fit, amplitude) = match fit_curve(s, c) {
        Ok(m) => {
            let amplitude = match amplitude_estimate(&m) {
                Ok(a) => Some(a),
                Err(e) => {
                    notes.push(format!("amplitude: {e}"));
                    None
                }
            };
            let summary = FitSummary {
                order: m.order,
                residual: m.residual,
                limit_zero: m.limit_zero(),
                limit_infinity: m.limit_infinity().ok(),
            };
            (Some(summary), amplitude)
        }
        Err(e) => {
            notes.push(format!("fit: {e}"));
            (None, None)
        }
    };
    Ok(AnalysisReport {
        observable: observable.to_string(),
        points: s.len(),
        frequency,
        amplitude,
        fit,
        notes,
    })
}

pub fn analyze_command(results: &Path, observable: &str) -> Result<AnalysisReport> {
    let rows = read_results(results)?;
    let (s, c) = observable_curve(&rows, observable)?;
    analyze_curve(observable, &s, &c)
}

pub fn write_json(out: &mut dyn std::io::Write, report: &AnalysisReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, report).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

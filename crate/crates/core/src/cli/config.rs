//! TOML run configuration.

use serde::{Deserialize, Serialize};

use crate::engine::{LoopSchedule, DEFAULT_POPULATION_CAP};
use crate::ensemble::SGrid;
use crate::error::{Error, Result};
use crate::model::{InitialState, ModelSpec, ObservableSpec, SpinBasisState};
use crate::observables::standard_observable_suite;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_initial_state")]
    pub initial_state: String,
    #[serde(default = "default_output")]
    pub output: String,
    /// Also write per-loop means (`loops.csv`).
    #[serde(default)]
    pub dump_loops: bool,
    pub model: ModelSpec,
    pub s_grid: SGridConfig,
    pub schedule: ScheduleConfig,
    pub runs: RunsConfig,
    #[serde(default)]
    pub observables: ObservablesConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefPoint {
    Index(usize),
    Value(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SGridConfig {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
    #[serde(rename = "ref", default = "default_ref")]
    pub reference: RefPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DwEnable {
    /// Loop index `m`.
    Loop(usize),
    /// `m / r`, converted with the run's `r`.
    PaperUnits(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub r: f64,
    #[serde(rename = "M_trunc")]
    pub m_trunc: usize,
    #[serde(default)]
    pub kappa: f64,
    pub w_u: f64,
    #[serde(default)]
    pub u_dw: f64,
    #[serde(default = "default_dw_enable")]
    pub dw_enable: DwEnable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_population: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunsConfig {
    pub count: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_cap")]
    pub population_cap: usize,
}

/// Observable names (`standard` expands to the full suite) plus extra
/// `σ^z` sites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablesConfig {
    #[serde(default = "default_names")]
    pub names: Vec<String>,
    #[serde(default)]
    pub sz_sites: Vec<usize>,
}

impl Default for ObservablesConfig {
    fn default() -> Self {
        ObservablesConfig {
            names: default_names(),
            sz_sites: Vec::new(),
        }
    }
}

fn default_initial_state() -> String {
    "domain_wall".into()
}
fn default_output() -> String {
    "out".into()
}
fn default_spacing() -> Spacing {
    Spacing::Log
}
fn default_ref() -> RefPoint {
    RefPoint::Index(0)
}
fn default_dw_enable() -> DwEnable {
    DwEnable::Loop(0)
}
fn default_cap() -> usize {
    DEFAULT_POPULATION_CAP
}
fn default_names() -> Vec<String> {
    vec!["standard".into()]
}

const TOP_KEYS: &[&str] = &[
    "initial_state",
    "output",
    "dump_loops",
    "model",
    "s_grid",
    "schedule",
    "runs",
    "observables",
];
const S_GRID_KEYS: &[&str] = &["min", "max", "count", "spacing", "ref"];
const SCHEDULE_KEYS: &[&str] = &[
    "r",
    "M_trunc",
    "kappa",
    "w_u",
    "u_dw",
    "dw_enable",
    "target_population",
];
const RUNS_KEYS: &[&str] = &["count", "master_seed", "population_cap"];
const OBSERVABLE_KEYS: &[&str] = &["names", "sz_sites"];

fn model_keys(variant: Option<&str>) -> &'static [&'static str] {
    match variant {
        Some("ising") => &["variant", "L", "j", "J", "h_x", "h_z"],
        Some("xxz") => &["variant", "L", "j_xy", "J_xy", "j_z", "J_z"],
        _ => &["variant", "L"],
    }
}

fn collect_unknown(table: &toml::Table, prefix: &str, known: &[&str], out: &mut Vec<String>) {
    for key in table.keys() {
        if !known.contains(&key.as_str()) {
            out.push(format!("{prefix}{key}"));
        }
    }
}

/// Every key path not in the schema; serde alone would stop at the first.
fn unknown_keys(root: &toml::Table) -> Vec<String> {
    let mut out = Vec::new();
    collect_unknown(root, "", TOP_KEYS, &mut out);
    let sub = |name: &str| root.get(name).and_then(|v| v.as_table());
    if let Some(t) = sub("model") {
        let variant = t.get("variant").and_then(|v| v.as_str());
        collect_unknown(t, "model.", model_keys(variant), &mut out);
    }
    if let Some(t) = sub("s_grid") {
        collect_unknown(t, "s_grid.", S_GRID_KEYS, &mut out);
        if let Some(r) = t.get("ref").and_then(|v| v.as_table()) {
            collect_unknown(r, "s_grid.ref.", &["index", "value"], &mut out);
        }
    }
    if let Some(t) = sub("schedule") {
        collect_unknown(t, "schedule.", SCHEDULE_KEYS, &mut out);
        if let Some(d) = t.get("dw_enable").and_then(|v| v.as_table()) {
            collect_unknown(d, "schedule.dw_enable.", &["loop", "paper_units"], &mut out);
        }
    }
    if let Some(t) = sub("runs") {
        collect_unknown(t, "runs.", RUNS_KEYS, &mut out);
    }
    if let Some(t) = sub("observables") {
        collect_unknown(t, "observables.", OBSERVABLE_KEYS, &mut out);
    }
    out
}

/// Parses and validates a TOML configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let root: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    let unknown = unknown_keys(&root);
    if !unknown.is_empty() {
        return Err(Error::UnknownKeys(unknown));
    }
    let config: RunConfig =
        toml::from_str(text).map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model
            .validate()
            .map_err(|e| Error::config("model", e.to_string()))?;
        self.initial_state()?;
        self.s_grid()?;
        self.loop_schedule()?;
        if self.runs.count == 0 {
            return Err(Error::config("runs.count", "must be at least 1"));
        }
        if self.runs.master_seed > i64::MAX as u64 {
            return Err(Error::config("runs.master_seed", "must fit a signed 64-bit integer"));
        }
        self.observables()?;
        Ok(())
    }

    pub fn initial_state(&self) -> Result<SpinBasisState> {
        let kind = match self.initial_state.as_str() {
            "domain_wall" => InitialState::DomainWall,
            "all_up" => InitialState::AllUp,
            pattern => InitialState::Custom(
                pattern
                    .parse()
                    .map_err(|e: Error| Error::config("initial_state", e.to_string()))?,
            ),
        };
        self.model
            .initial_state(kind)
            .map_err(|e| Error::config("initial_state", e.to_string()))
    }

    pub fn s_grid(&self) -> Result<SGrid> {
        let g = &self.s_grid;
        if !(g.min > 0.0 && g.min.is_finite()) {
            return Err(Error::config("s_grid.min", "must be positive"));
        }
        if !(g.max >= g.min && g.max.is_finite()) {
            return Err(Error::config("s_grid.max", "must be at least s_grid.min"));
        }
        if g.count == 0 {
            return Err(Error::config("s_grid.count", "must be at least 1"));
        }
        if g.count > 1 && g.max == g.min {
            return Err(Error::config("s_grid.max", "must exceed s_grid.min for several points"));
        }
        let grid = match (g.count, g.spacing) {
            (1, _) => SGrid::single(g.min),
            (n, Spacing::Linear) => SGrid::linear(g.min, g.max, n),
            (n, Spacing::Log) => SGrid::log(g.min, g.max, n),
        }
        .map_err(|e| Error::config("s_grid", e.to_string()))?;
        let index = match g.reference {
            RefPoint::Index(i) => i,
            RefPoint::Value(v) => grid
                .values()
                .iter()
                .position(|&s| (s - v).abs() <= 1e-12 * v.abs().max(1.0))
                .ok_or_else(|| Error::config("s_grid.ref", format!("{v} is not a grid point")))?,
        };
        grid.with_ref_index(index)
            .map_err(|e| Error::config("s_grid.ref", e.to_string()))
    }

    pub fn dw_enable_loop(&self) -> usize {
        match self.schedule.dw_enable {
            DwEnable::Loop(m) => m,
            DwEnable::PaperUnits(u) => (u * self.schedule.r).round().max(0.0) as usize,
        }
    }

    pub fn loop_schedule(&self) -> Result<LoopSchedule> {
        let s = &self.schedule;
        if let DwEnable::PaperUnits(u) = s.dw_enable {
            if !(u >= 0.0 && u.is_finite()) {
                return Err(Error::config("schedule.dw_enable.paper_units", "must be nonnegative"));
            }
        }
        if s.target_population == Some(0) {
            return Err(Error::config("schedule.target_population", "must be positive"));
        }
        let schedule = LoopSchedule {
            r: s.r,
            m_trunc: s.m_trunc,
            kappa: s.kappa,
            w_u: s.w_u,
            u_dw: s.u_dw,
            dw_enable_loop: self.dw_enable_loop(),
            target_population: s.target_population,
            population_cap: self.runs.population_cap,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    /// Expanded observable list with duplicates removed, in first-seen order.
    pub fn observables(&self) -> Result<Vec<ObservableSpec>> {
        let psi0 = self.initial_state()?;
        let mut out: Vec<ObservableSpec> = Vec::new();
        let mut push = |o: ObservableSpec| {
            if !out.iter().any(|x| x.name == o.name) {
                out.push(o);
            }
        };
        for name in &self.observables.names {
            if name == "standard" {
                for o in standard_observable_suite(&self.model, psi0)? {
                    push(o);
                }
            } else {
                push(
                    ObservableSpec::from_name(&self.model, psi0, name)
                        .map_err(|e| Error::config("observables.names", e.to_string()))?,
                );
            }
        }
        for &site in &self.observables.sz_sites {
            push(
                ObservableSpec::sigma_z(&self.model, site)
                    .map_err(|e| Error::config("observables.sz_sites", e.to_string()))?,
            );
        }
        if out.is_empty() {
            return Err(Error::config("observables", "no observables requested"));
        }
        Ok(out)
    }

    /// The configuration with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

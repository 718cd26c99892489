//! The Monte Carlo main loop.
//!
//! Loop `m` (1-based) holds a stochastic representation of
//! `[T_r(s)]^(m-1) R^free_(s+r) ρ0`, where `T_r(s) = r R^free_(s+r) (1 + L^int/r)`.
//! Summing the measured `s Tr(X ·)` over all loops gives `C_s^X` truncated
//! after `M_trunc` terms.

use num_complex::Complex64;
use rand::Rng;

use crate::ensemble::{deactivate, split_count, Deactivation, Ensemble, SGrid, Triplet};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, ObservableSpec, SpinBasisState};

pub const DEFAULT_POPULATION_CAP: usize = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct LoopSchedule {
    /// Jump rate, the inverse integration step.
    pub r: f64,
    pub m_trunc: usize,
    /// Spring constant of the harmonic importance bias.
    pub kappa: f64,
    /// Unit weight for pre-spawn splitting.
    pub w_u: f64,
    /// Deadweight threshold; zero disables it.
    pub u_dw: f64,
    /// First loop index `m` at which the deadweight threshold applies.
    pub dw_enable_loop: usize,
    pub target_population: Option<usize>,
    /// Hard limit on spawning attempts and ensemble size per loop.
    pub population_cap: usize,
}

impl LoopSchedule {
    pub fn new(r: f64, m_trunc: usize, w_u: f64) -> Self {
        LoopSchedule {
            r,
            m_trunc,
            kappa: 0.0,
            w_u,
            u_dw: 0.0,
            dw_enable_loop: 0,
            target_population: None,
            population_cap: DEFAULT_POPULATION_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::config("schedule.r", "must be positive"));
        }
        if self.m_trunc < 1 {
            return Err(Error::config("schedule.M_trunc", "must be at least 1"));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::config("schedule.kappa", "must be nonnegative"));
        }
        if !(self.w_u > 0.0 && self.w_u.is_finite()) {
            return Err(Error::config("schedule.w_u", "must be positive"));
        }
        if !(self.u_dw >= 0.0 && self.u_dw.is_finite()) {
            return Err(Error::config("schedule.u_dw", "must be nonnegative"));
        }
        if self.population_cap == 0 {
            return Err(Error::config("runs.population_cap", "must be positive"));
        }
        Ok(())
    }

    #[inline]
    pub fn deadweight_active(&self, m: usize) -> bool {
        self.u_dw > 0.0 && m >= self.dw_enable_loop
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreeMode {
    /// The trailing `R^free_(s+r)`, without the factor `r`.
    Initial,
    /// `r R^free_(s+r)` applied after each interaction step.
    Loop,
}

/// Per-loop measurements of one run, indexed `[observable][s][m-1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub observables: Vec<String>,
    pub s_values: Vec<f64>,
    pub m_trunc: usize,
    /// Number of completed loops; smaller than `m_trunc` only for failed runs.
    pub loops_done: usize,
    contributions: Vec<Complex64>,
    /// Spawning attempts per loop (loop 1 never spawns).
    pub population: Vec<usize>,
    /// Ensemble size after each loop's compression.
    pub ensemble_size: Vec<usize>,
    pub cancellations: u64,
    pub kills: u64,
}

impl RunResult {
    fn new(observables: &[ObservableSpec], s_grid: &SGrid, m_trunc: usize) -> Self {
        RunResult {
            observables: observables.iter().map(|o| o.name.clone()).collect(),
            s_values: s_grid.values().to_vec(),
            m_trunc,
            loops_done: 0,
            contributions: vec![Complex64::new(0.0, 0.0); observables.len() * s_grid.len() * m_trunc],
            population: Vec::with_capacity(m_trunc),
            ensemble_size: Vec::with_capacity(m_trunc),
            cancellations: 0,
            kills: 0,
        }
    }

    #[inline]
    fn slot(&self, obs: usize, s: usize, m: usize) -> usize {
        debug_assert!(m >= 1 && m <= self.m_trunc);
        (obs * self.s_values.len() + s) * self.m_trunc + (m - 1)
    }

    /// `s Tr(X ρ^(m))` measured at loop `m` (1-based).
    pub fn contribution(&self, obs: usize, s: usize, m: usize) -> Complex64 {
        self.contributions[self.slot(obs, s, m)]
    }

    /// Loop contributions of one observable at one grid point.
    pub fn loop_series(&self, obs: usize, s: usize) -> &[Complex64] {
        let start = self.slot(obs, s, 1);
        &self.contributions[start..start + self.m_trunc]
    }

    pub fn completed(&self) -> bool {
        self.loops_done == self.m_trunc
    }
}

/// One triplet `(1, ψ0, ψ0)` with a flat reweight vector.
pub fn init_ensemble(model: &ModelSpec, psi0: SpinBasisState, s_grid: &SGrid) -> Result<Ensemble> {
    model.free_energy(&psi0)?;
    let t = Triplet {
        w_ctrl: Complex64::new(1.0, 0.0),
        ket: psi0,
        bra: psi0,
        reweight: vec![Complex64::new(1.0, 0.0); s_grid.len()],
        norm: 0,
    };
    Ok(Ensemble::new(vec![t], s_grid.clone()))
}

/// Applies the diagonal free resolvent to every triplet across the grid.
pub fn free_update(ensemble: &mut Ensemble, model: &ModelSpec, r: f64, mode: FreeMode) {
    let grid = &ensemble.s_grid;
    let ref_index = grid.ref_index();
    let s_ref = grid.s_ref();
    let numerator = match mode {
        FreeMode::Initial => 1.0,
        FreeMode::Loop => r,
    };
    for t in ensemble.triplets.iter_mut() {
        let de = model.free_energy_unchecked(&t.ket) - model.free_energy_unchecked(&t.bra);
        let d_ref = Complex64::new(s_ref + r, de);
        t.w_ctrl *= numerator / d_ref;
        if t.reweight.len() > 1 {
            for (rw, &s) in t.reweight.iter_mut().zip(grid.values()) {
                *rw *= d_ref / Complex64::new(s + r, de);
            }
            t.reweight[ref_index] = Complex64::new(1.0, 0.0);
        }
    }
}

/// The child of `w |i><j|` obtained by jump `jump_index` on one side, already
/// divided by the probability `1 / (2 n_t)` of choosing it.
#[allow(clippy::too_many_arguments)]
fn spawn_child(
    w: Complex64,
    parent: &Triplet,
    model: &ModelSpec,
    kappa: f64,
    r: f64,
    ket_side: bool,
    jump_index: usize,
    n_t: usize,
) -> Triplet {
    let source = if ket_side { parent.ket } else { parent.bra };
    let jump = model.nth_transition(&source, jump_index);
    let (ket, bra, phase) = if ket_side {
        (jump.target, parent.bra, Complex64::new(0.0, -1.0))
    } else {
        (parent.ket, jump.target, Complex64::new(0.0, 1.0))
    };
    let norm = model
        .dynamic_norm(&ket, &bra)
        .expect("jumps stay inside the connected component of the pair");
    let bias = if kappa == 0.0 {
        1.0
    } else {
        let (old, new) = (parent.norm as f64, norm as f64);
        (0.5 * kappa * (old * old - new * new)).exp()
    };
    let factor = phase * (jump.amplitude / r * 2.0 * n_t as f64 * bias);
    Triplet {
        w_ctrl: w * factor,
        ket,
        bra,
        reweight: parent.reweight.clone(),
        norm,
    }
}

/// One stochastic application of `L^int / r` to `w |i><j|`, with `w` the
/// weight of a single child of `parent`.
#[inline]
fn spawn_one<R: Rng + ?Sized>(
    w: Complex64,
    parent: &Triplet,
    model: &ModelSpec,
    kappa: f64,
    r: f64,
    rng: &mut R,
) -> Option<Triplet> {
    let ket_side = rng.gen::<bool>();
    let source = if ket_side { parent.ket } else { parent.bra };
    let n_t = model.transition_count(&source);
    if n_t == 0 {
        return None;
    }
    let jump_index = rng.gen_range(0..n_t);
    Some(spawn_child(w, parent, model, kappa, r, ket_side, jump_index, n_t))
}

/// Every possible spawn from `parent` with its probability. The
/// probabilities sum to one only when both sides have transitions; the
/// missing mass spawns nothing.
pub fn spawn_outcomes(
    parent: &Triplet,
    model: &ModelSpec,
    kappa: f64,
    r: f64,
) -> Vec<(f64, Triplet)> {
    let mut out = Vec::new();
    for ket_side in [true, false] {
        let source = if ket_side { parent.ket } else { parent.bra };
        let n_t = model.transition_count(&source);
        for k in 0..n_t {
            let child = spawn_child(parent.w_ctrl, parent, model, kappa, r, ket_side, k, n_t);
            out.push((0.5 / n_t as f64, child));
        }
    }
    out
}

/// Spawns once from every child in `ensemble`; children persist and spawned
/// triplets are appended. Returns the number of spawning attempts.
pub fn spawn_step<R: Rng + ?Sized>(
    ensemble: &mut Ensemble,
    model: &ModelSpec,
    schedule: &LoopSchedule,
    rng: &mut R,
) -> usize {
    let children = ensemble.triplets.len();
    for n in 0..children {
        let child = &ensemble.triplets[n];
        if let Some(t) = spawn_one(child.w_ctrl, child, model, schedule.kappa, schedule.r, rng) {
            ensemble.triplets.push(t);
        }
    }
    children
}

/// Indexes observables by whether they need off-diagonal triplets.
struct Meter<'a> {
    observables: &'a [ObservableSpec],
    off_diagonal: Vec<usize>,
    kappa: f64,
    phys: Vec<Complex64>,
}

impl<'a> Meter<'a> {
    fn new(observables: &'a [ObservableSpec], kappa: f64, grid_len: usize) -> Self {
        Meter {
            observables,
            off_diagonal: (0..observables.len())
                .filter(|&k| !observables[k].diagonal_only())
                .collect(),
            kappa,
            phys: vec![Complex64::new(0.0, 0.0); grid_len],
        }
    }

    /// Adds `s Σ_n c_n(s) <bra_n|X|ket_n>` for loop `m` into `result`.
    fn measure(&mut self, ensemble: &Ensemble, m: usize, result: &mut RunResult) {
        let s_values = ensemble.s_grid.values();
        for t in &ensemble.triplets {
            let diagonal = t.ket == t.bra;
            if !diagonal && self.off_diagonal.is_empty() {
                continue;
            }
            let mut filled = false;
            let count = if diagonal {
                self.observables.len()
            } else {
                self.off_diagonal.len()
            };
            for idx in 0..count {
                let k = if diagonal { idx } else { self.off_diagonal[idx] };
                let x = self.observables[k].element(&t.bra, &t.ket);
                if x.re == 0.0 && x.im == 0.0 {
                    continue;
                }
                if !filled {
                    for (si, p) in self.phys.iter_mut().enumerate() {
                        *p = t.physical_weight(self.kappa, si);
                    }
                    filled = true;
                }
                for (si, (&s, p)) in s_values.iter().zip(&self.phys).enumerate() {
                    let slot = result.slot(k, si, m);
                    result.contributions[slot] += x * p * s;
                }
            }
        }
    }
}

/// Runs the full loop and keeps whatever was measured if the population cap
/// is hit; the error, if any, is returned alongside.
pub fn run_simulation_partial<R: Rng + ?Sized>(
    model: &ModelSpec,
    psi0: SpinBasisState,
    s_grid: &SGrid,
    schedule: &LoopSchedule,
    observables: &[ObservableSpec],
    rng: &mut R,
) -> Result<(RunResult, Option<Error>)> {
    schedule.validate()?;
    let mut result = RunResult::new(observables, s_grid, schedule.m_trunc);
    let mut meter = Meter::new(observables, schedule.kappa, s_grid.len());

    let mut ensemble = init_ensemble(model, psi0, s_grid)?;
    ensemble.loop_index = 1;
    free_update(&mut ensemble, model, schedule.r, FreeMode::Initial);
    meter.measure(&ensemble, 1, &mut result);
    result.population.push(0);
    result.ensemble_size.push(ensemble.len());
    result.loops_done = 1;

    let mut scratch: Vec<Triplet> = Vec::new();
    for m in 2..=schedule.m_trunc {
        ensemble.loop_index = m;
        let deadweight = schedule.deadweight_active(m);

        // Deactivation and the split count for every surviving triplet.
        scratch.clear();
        let mut attempts = 0usize;
        let mut plan: Vec<usize> = Vec::with_capacity(ensemble.len());
        for t in ensemble.triplets.drain(..) {
            if deadweight && t.w_ctrl.norm() < schedule.u_dw {
                match deactivate(t, schedule.u_dw, rng)? {
                    Deactivation::Killed => result.kills += 1,
                    Deactivation::SurvivesInactive(t) => {
                        scratch.push(t);
                        plan.push(0);
                    }
                }
            } else {
                let n = split_count(t.w_ctrl, schedule.w_u);
                attempts = attempts.saturating_add(n);
                scratch.push(t);
                plan.push(n);
            }
        }
        if attempts > schedule.population_cap {
            return Ok((
                result,
                Some(Error::PopulationCap {
                    loop_index: m,
                    population: attempts,
                    cap: schedule.population_cap,
                }),
            ));
        }

        // Children are represented by their parent: N_c equal children of
        // weight w/N_c merge back into w at compression.
        let mut spawned: Vec<Triplet> = Vec::with_capacity(attempts);
        for (t, &n) in scratch.iter().zip(&plan) {
            if n == 0 {
                continue;
            }
            let w = t.w_ctrl / n as f64;
            for _ in 0..n {
                if let Some(new) = spawn_one(w, t, model, schedule.kappa, schedule.r, rng) {
                    spawned.push(new);
                }
            }
        }
        ensemble.triplets.append(&mut scratch);
        ensemble.triplets.append(&mut spawned);
        ensemble.compress();
        if ensemble.len() > schedule.population_cap {
            return Ok((
                result,
                Some(Error::PopulationCap {
                    loop_index: m,
                    population: ensemble.len(),
                    cap: schedule.population_cap,
                }),
            ));
        }
        free_update(&mut ensemble, model, schedule.r, FreeMode::Loop);
        meter.measure(&ensemble, m, &mut result);
        result.population.push(attempts);
        result.ensemble_size.push(ensemble.len());
        result.loops_done = m;
    }
    result.cancellations = ensemble.cancellations;
    Ok((result, None))
}

/// Runs `M_trunc` loops from `|ψ0><ψ0|` and records every loop's measurement.
pub fn run_simulation<R: Rng + ?Sized>(
    model: &ModelSpec,
    psi0: SpinBasisState,
    s_grid: &SGrid,
    schedule: &LoopSchedule,
    observables: &[ObservableSpec],
    rng: &mut R,
) -> Result<RunResult> {
    match run_simulation_partial(model, psi0, s_grid, schedule, observables, rng)? {
        (result, None) => Ok(result),
        (_, Some(err)) => Err(err),
    }
}

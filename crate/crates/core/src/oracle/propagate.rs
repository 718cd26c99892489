//! Pure-state time evolution with a Chebyshev expansion of `exp(-iHτ)`,
//! applying `H` matrix-free from the model's diagonal and jump lists.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ObservableSpec, SpinBasisState};

/// Largest chain the wavefunction propagator accepts.
pub const MAX_PROPAGATOR_SITES: usize = 20;

/// Target magnitude of the first neglected Chebyshev coefficient.
const COEFF_CUTOFF: f64 = 1e-16;
/// Largest rescaled step `a τ` per Chebyshev expansion.
const MAX_SCALED_STEP: f64 = 8.0;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Sparse column form of `H`.
struct SparseHamiltonian {
    len: usize,
    diag: Vec<f64>,
    /// Column offsets into `targets`/`amps`.
    offsets: Vec<usize>,
    targets: Vec<u32>,
    amps: Vec<f64>,
}

impl SparseHamiltonian {
    fn build(model: &ModelSpec) -> Result<Self> {
        let len = model.len();
        let dim = 1usize << len;
        let mut diag = Vec::with_capacity(dim);
        let mut offsets = Vec::with_capacity(dim + 1);
        let mut targets = Vec::new();
        let mut amps = Vec::new();
        offsets.push(0);
        for k in 0..dim {
            let state = SpinBasisState::from_raw(k as u64, len);
            diag.push(model.free_energy_unchecked(&state));
            for n in 0..model.transition_count(&state) {
                let t = model.nth_transition(&state, n);
                targets.push(t.target.index() as u32);
                amps.push(t.amplitude);
            }
            offsets.push(targets.len());
        }
        Ok(SparseHamiltonian {
            len,
            diag,
            offsets,
            targets,
            amps,
        })
    }

    /// Gershgorin enclosure of the spectrum.
    fn spectral_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (k, &d) in self.diag.iter().enumerate() {
            let radius: f64 = self.amps[self.offsets[k]..self.offsets[k + 1]]
                .iter()
                .map(|a| a.abs())
                .sum();
            lo = lo.min(d - radius);
            hi = hi.max(d + radius);
        }
        (lo, hi)
    }

    /// `out = (H - shift) x / scale`.
    fn apply_scaled(&self, x: &[Complex64], out: &mut [Complex64], shift: f64, scale: f64) {
        let inv = 1.0 / scale;
        for (k, o) in out.iter_mut().enumerate() {
            *o = x[k] * ((self.diag[k] - shift) * inv);
        }
        // H is symmetric, so the column lists double as row lists.
        for (k, o) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for e in self.offsets[k]..self.offsets[k + 1] {
                acc += x[self.targets[e] as usize] * self.amps[e];
            }
            *o += acc * inv;
        }
    }
}

/// `J_0(x) .. J_{n-1}(x)` by Miller's backward recurrence.
fn bessel_j_sequence(x: f64, n: usize) -> Vec<f64> {
    if x == 0.0 {
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        return v;
    }
    let start = n + 20 + (x.abs() as usize) * 2;
    let mut vals = vec![0.0; start + 2];
    let (mut next, mut cur) = (0.0f64, 1e-300f64);
    for k in (0..=start).rev() {
        vals[k] = cur;
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        if cur.abs() > 1e250 {
            for v in vals[k..].iter_mut() {
                *v *= 1e-250;
            }
            next *= 1e-250;
            cur *= 1e-250;
        }
    }
    // J_0 + 2 Σ J_2k = 1
    let norm = vals[0] + 2.0 * vals.iter().skip(2).step_by(2).sum::<f64>();
    vals.truncate(n);
    vals.iter().map(|v| v / norm).collect()
}

/// Number of Chebyshev terms for a rescaled step `a τ`.
fn chebyshev_terms(scaled: f64) -> usize {
    let mut n = (scaled.abs() + 10.0) as usize;
    loop {
        let j = bessel_j_sequence(scaled, n + 1);
        if j[n].abs() < COEFF_CUTOFF && j[n - 1].abs() < COEFF_CUTOFF {
            return n;
        }
        n += 4;
    }
}

/// Propagator for one fixed step `τ`.
struct ChebyshevStep {
    coeffs: Vec<Complex64>,
    phase: Complex64,
    shift: f64,
    scale: f64,
}

impl ChebyshevStep {
    fn new(shift: f64, scale: f64, tau: f64) -> Self {
        let scaled = scale * tau;
        let n = chebyshev_terms(scaled);
        let j = bessel_j_sequence(scaled, n);
        let mut minus_i_pow = Complex64::new(1.0, 0.0);
        let coeffs = j
            .iter()
            .enumerate()
            .map(|(k, &jk)| {
                let c = minus_i_pow * jk * if k == 0 { 1.0 } else { 2.0 };
                minus_i_pow *= Complex64::new(0.0, -1.0);
                c
            })
            .collect();
        ChebyshevStep {
            coeffs,
            phase: Complex64::from_polar(1.0, -shift * tau),
            shift,
            scale,
        }
    }

    fn apply(&self, h: &SparseHamiltonian, psi: &mut [Complex64], work: &mut [Vec<Complex64>; 3]) {
        let [prev, cur, next] = work;
        prev.copy_from_slice(psi);
        h.apply_scaled(prev, cur, self.shift, self.scale);
        let mut acc: Vec<Complex64> = prev
            .iter()
            .zip(cur.iter())
            .map(|(p, c)| p * self.coeffs[0] + c * self.coeffs.get(1).copied().unwrap_or(ZERO))
            .collect();
        for ck in self.coeffs.iter().skip(2) {
            h.apply_scaled(cur, next, self.shift, self.scale);
            for ((n, p), a) in next.iter_mut().zip(prev.iter()).zip(acc.iter_mut()) {
                *n = *n * 2.0 - p;
                *a += *n * ck;
            }
            std::mem::swap(prev, cur);
            std::mem::swap(cur, next);
        }
        for (p, a) in psi.iter_mut().zip(acc) {
            *p = a * self.phase;
        }
    }
}

/// Sampled expectation values `<ψ_t|X|ψ_t>` at `t = k dt`, `k = 0..=n`.
#[derive(Clone, Debug)]
pub struct TimeSeries {
    pub dt: f64,
    pub observables: Vec<String>,
    /// `values[obs][k]`.
    pub values: Vec<Vec<f64>>,
    /// Largest deviation of `‖ψ_t‖` from one over the run.
    pub norm_drift: f64,
}

impl TimeSeries {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.first().map_or(0, |v| v.len())).map(move |k| k as f64 * self.dt)
    }
}

fn expectation(obs: &ObservableSpec, psi: &[Complex64], len: usize) -> f64 {
    let mut acc = ZERO;
    for (k, amp) in psi.iter().enumerate() {
        if amp.re == 0.0 && amp.im == 0.0 {
            continue;
        }
        let ket = SpinBasisState::from_raw(k as u64, len);
        obs.for_each_in_column(&ket, |bra, x| {
            acc += psi[bra.index()].conj() * amp * x;
        });
    }
    acc.re
}

/// Propagates `|ψ0>` under the full Hamiltonian up to `t_max`, sampling every
/// `dt`. The sampling step must resolve the spectral width (Nyquist).
pub fn time_domain_reference(
    model: &ModelSpec,
    psi0: SpinBasisState,
    observables: &[ObservableSpec],
    t_max: f64,
    dt: f64,
) -> Result<TimeSeries> {
    let len = model.len();
    if len > MAX_PROPAGATOR_SITES {
        return Err(Error::ResourceLimit(format!(
            "wavefunction propagation limited to L <= {MAX_PROPAGATOR_SITES}"
        )));
    }
    model.free_energy(&psi0)?;
    if !(dt > 0.0 && t_max >= 0.0) {
        return Err(Error::InvalidInput("need dt > 0 and t_max >= 0".into()));
    }
    let h = SparseHamiltonian::build(model)?;
    let (lo, hi) = h.spectral_bounds();
    let width = hi - lo;
    if width * dt > std::f64::consts::PI {
        return Err(Error::Accuracy(format!(
            "dt = {dt} does not resolve the spectral width {width:.3}; need dt <= {:.3e}",
            std::f64::consts::PI / width
        )));
    }
    let shift = 0.5 * (hi + lo);
    let scale = (0.5 * width).max(1e-12);
    let substeps = ((scale * dt) / MAX_SCALED_STEP).ceil().max(1.0) as usize;
    let step = ChebyshevStep::new(shift, scale, dt / substeps as f64);

    let dim = 1usize << len;
    let mut psi = vec![ZERO; dim];
    psi[psi0.index()] = Complex64::new(1.0, 0.0);
    let mut work = [vec![ZERO; dim], vec![ZERO; dim], vec![ZERO; dim]];
    let samples = (t_max / dt).round() as usize;
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(samples + 1); observables.len()];
    let mut norm_drift: f64 = 0.0;
    for k in 0..=samples {
        if k > 0 {
            for _ in 0..substeps {
                step.apply(&h, &mut psi, &mut work);
            }
        }
        for (obs, series) in observables.iter().zip(values.iter_mut()) {
            series.push(expectation(obs, &psi, h.len));
        }
        let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        norm_drift = norm_drift.max((norm - 1.0).abs());
    }
    Ok(TimeSeries {
        dt,
        observables: observables.iter().map(|o| o.name.clone()).collect(),
        values,
        norm_drift,
    })
}

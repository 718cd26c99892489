//! Triplet walkers and the population primitives that act on them.
//!
//! A triplet `(w, |i>, |j>)` stands for `w |i><j|`. Its control weight `w` is
//! the ensemble weight at the reference Laplace point; the weights at every
//! other grid point are `w * reweight[s]`. Physical weights carry the
//! importance-sampling bias `exp(κ n_ij² / 2)`.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::SpinBasisState;

/// Strictly positive, strictly increasing Laplace grid with a reference point.
#[derive(Clone, Debug, PartialEq)]
pub struct SGrid {
    values: Vec<f64>,
    ref_index: usize,
}

impl SGrid {
    pub fn new(values: Vec<f64>, ref_index: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("s_grid", "needs at least one point"));
        }
        if values.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::config("s_grid", "values must be finite and > 0"));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("s_grid", "values must be strictly increasing"));
        }
        if ref_index >= values.len() {
            return Err(Error::config("s_grid.ref", "reference index out of range"));
        }
        Ok(SGrid { values, ref_index })
    }

    pub fn single(s: f64) -> Result<Self> {
        SGrid::new(vec![s], 0)
    }

    pub fn linear(min: f64, max: f64, count: usize) -> Result<Self> {
        if count == 1 {
            return SGrid::single(min);
        }
        let step = (max - min) / (count - 1) as f64;
        SGrid::new((0..count).map(|k| min + step * k as f64).collect(), 0)
    }

    pub fn log(min: f64, max: f64, count: usize) -> Result<Self> {
        if !(min > 0.0 && max > 0.0) {
            return Err(Error::config("s_grid", "log spacing needs positive bounds"));
        }
        if count == 1 {
            return SGrid::single(min);
        }
        let (a, b) = (min.ln(), max.ln());
        let step = (b - a) / (count - 1) as f64;
        SGrid::new(
            (0..count)
                .map(|k| match k {
                    0 => min,
                    k if k + 1 == count => max,
                    k => (a + step * k as f64).exp(),
                })
                .collect(),
            0,
        )
    }

    pub fn with_ref_index(mut self, ref_index: usize) -> Result<Self> {
        if ref_index >= self.values.len() {
            return Err(Error::config("s_grid.ref", "reference index out of range"));
        }
        self.ref_index = ref_index;
        Ok(self)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn ref_index(&self) -> usize {
        self.ref_index
    }

    pub fn s_ref(&self) -> f64 {
        self.values[self.ref_index]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Triplet {
    pub w_ctrl: Complex64,
    pub ket: SpinBasisState,
    pub bra: SpinBasisState,
    pub reweight: Vec<Complex64>,
    /// Cached dynamic norm between `ket` and `bra`.
    pub norm: u32,
}

impl Triplet {
    /// The importance-sampling bias `exp(κ n² / 2)` folded into `w`, evaluated
    /// in log space so that huge biases on tiny weights stay finite.
    #[inline]
    fn biased(w: Complex64, kappa: f64, norm: u32) -> Complex64 {
        if kappa == 0.0 || norm == 0 {
            return w;
        }
        let exponent = 0.5 * kappa * (norm as f64).powi(2);
        let modulus = w.norm();
        if modulus == 0.0 {
            return w;
        }
        w / modulus * (modulus.ln() + exponent).exp()
    }

    /// Physical weight `w_ctrl * reweight[s] * exp(κ n² / 2)` at one grid point.
    #[inline]
    pub fn physical_weight(&self, kappa: f64, s_index: usize) -> Complex64 {
        Self::biased(self.w_ctrl * self.reweight[s_index], kappa, self.norm)
    }

    pub fn same_pair(&self, other: &Triplet) -> bool {
        self.ket == other.ket && self.bra == other.bra
    }
}

/// Finite-sample representation of the current iterate.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub triplets: Vec<Triplet>,
    pub s_grid: SGrid,
    pub loop_index: usize,
    /// Classes dropped because their control weights cancelled exactly.
    pub cancellations: u64,
}

impl Ensemble {
    pub fn new(triplets: Vec<Triplet>, s_grid: SGrid) -> Self {
        Ensemble {
            triplets,
            s_grid,
            loop_index: 0,
            cancellations: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn compress(&mut self) {
        let triplets = std::mem::take(&mut self.triplets);
        let (merged, dropped) = compress(triplets, self.s_grid.ref_index());
        self.triplets = merged;
        self.cancellations += dropped as u64;
    }
}

/// Merges all triplets sharing a `(ket, bra)` pair.
///
/// The merged control weight is the class sum; the merged reweight vector is
/// the control-weighted average, so `Σ w·reweight[s]` is kept at every grid
/// point. Classes whose control weights sum to exactly zero are dropped and
/// counted in the second return value.
pub fn compress(mut triplets: Vec<Triplet>, ref_index: usize) -> (Vec<Triplet>, usize) {
    triplets.sort_unstable_by_key(|t| (t.ket.bits(), t.bra.bits()));
    let mut out: Vec<Triplet> = Vec::with_capacity(triplets.len());
    let mut dropped = 0;
    let mut iter = triplets.into_iter().peekable();
    while let Some(first) = iter.next() {
        if iter.peek().is_none_or(|next| !next.same_pair(&first)) {
            out.push(first);
            continue;
        }
        let mut total = first.w_ctrl;
        let mut phys: Vec<Complex64> = first.reweight.iter().map(|r| first.w_ctrl * r).collect();
        while let Some(next) = iter.next_if(|next| next.same_pair(&first)) {
            total += next.w_ctrl;
            for (p, r) in phys.iter_mut().zip(&next.reweight) {
                *p += next.w_ctrl * r;
            }
        }
        if total == Complex64::new(0.0, 0.0) {
            dropped += 1;
            continue;
        }
        for p in phys.iter_mut() {
            *p /= total;
        }
        phys[ref_index] = Complex64::new(1.0, 0.0);
        out.push(Triplet {
            w_ctrl: total,
            reweight: phys,
            ..first
        });
    }
    (out, dropped)
}

/// Number of children `max(1, ⌊|w|/w_u⌋)` produced by [`pre_spawn_split`].
#[inline]
pub fn split_count(w: Complex64, w_u: f64) -> usize {
    ((w.norm() / w_u).floor() as usize).max(1)
}

/// Splits an active triplet into `max(1, ⌊|w|/w_u⌋)` equal children.
pub fn pre_spawn_split(t: &Triplet, w_u: f64) -> Result<Vec<Triplet>> {
    check_unit(w_u)?;
    let n = split_count(t.w_ctrl, w_u);
    let w = t.w_ctrl / n as f64;
    Ok((0..n)
        .map(|_| Triplet {
            w_ctrl: w,
            ..t.clone()
        })
        .collect())
}

fn check_unit(w_u: f64) -> Result<()> {
    if !(w_u > 0.0 && w_u.is_finite()) {
        return Err(Error::config("w_u", "unit weight must be positive"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub enum Deactivation {
    Killed,
    /// Survivor with modulus promoted to `u_dw`; it skips spawning this loop.
    SurvivesInactive(Triplet),
}

/// Stochastic resolution of a triplet below the deadweight threshold.
///
/// Survives with probability `|w|/u_dw`, in which case `|w|` becomes `u_dw`
/// with the phase kept; the expected weight is unchanged.
pub fn deactivate<R: Rng + ?Sized>(t: Triplet, u_dw: f64, rng: &mut R) -> Result<Deactivation> {
    let modulus = t.w_ctrl.norm();
    if !(u_dw > 0.0) || modulus >= u_dw {
        return Err(Error::InvalidInput(format!(
            "deactivate called with |w| = {modulus} not below u_dw = {u_dw}"
        )));
    }
    if modulus == 0.0 || rng.gen::<f64>() * u_dw >= modulus {
        return Ok(Deactivation::Killed);
    }
    Ok(Deactivation::SurvivesInactive(Triplet {
        w_ctrl: t.w_ctrl * (u_dw / modulus),
        ..t
    }))
}

/// Splits a triplet into unit-modulus pieces plus a stochastically rounded rest.
pub fn stochastic_decompress<R: Rng + ?Sized>(
    t: &Triplet,
    w_u: f64,
    rng: &mut R,
) -> Result<Vec<Triplet>> {
    check_unit(w_u)?;
    let modulus = t.w_ctrl.norm();
    if modulus == 0.0 {
        return Ok(Vec::new());
    }
    let phase = t.w_ctrl / modulus;
    let ratio = modulus / w_u;
    let whole = ratio.floor();
    let rest = ratio - whole;
    let mut count = whole as usize;
    if rest > 0.0 && rng.gen::<f64>() < rest {
        count += 1;
    }
    Ok((0..count)
        .map(|_| Triplet {
            w_ctrl: phase * w_u,
            ..t.clone()
        })
        .collect())
}

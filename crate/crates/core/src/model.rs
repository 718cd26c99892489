//! Spin-chain Hamiltonians split into a diagonal part with known eigenstates
//! (the computational basis) and an off-diagonal part that generates jumps.
//!
//! Sites are numbered `1..=L` in the public API and stored as bits `0..L`,
//! bit set meaning `s^z = +1`. Chains have open boundaries.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest chain that fits in a machine word.
pub const MAX_SITES: usize = 63;

/// A computational basis state of `len` spins-1/2.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinBasisState {
    bits: u64,
    len: u8,
}

impl SpinBasisState {
    pub fn new(bits: u64, len: usize) -> Result<Self> {
        if len == 0 || len > MAX_SITES {
            return Err(Error::InvalidInput(format!(
                "chain length {len} outside 1..={MAX_SITES}"
            )));
        }
        if bits >> len != 0 {
            return Err(Error::InvalidInput(format!(
                "bit pattern {bits:#x} has bits beyond length {len}"
            )));
        }
        Ok(SpinBasisState {
            bits,
            len: len as u8,
        })
    }

    #[inline]
    pub(crate) fn from_raw(bits: u64, len: usize) -> Self {
        debug_assert!(len <= MAX_SITES && bits >> len == 0);
        SpinBasisState {
            bits,
            len: len as u8,
        }
    }

    pub fn all_up(len: usize) -> Result<Self> {
        Self::new(mask(len), len)
    }

    pub fn all_down(len: usize) -> Result<Self> {
        Self::new(0, len)
    }

    #[inline]
    pub fn bits(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `s^z` of a 1-based site, as `+1` or `-1`.
    #[inline]
    pub fn spin(&self, site: usize) -> i32 {
        debug_assert!(site >= 1 && site <= self.len());
        if (self.bits >> (site - 1)) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    /// Number of up spins.
    #[inline]
    pub fn up_count(&self) -> u32 {
        self.bits.count_ones()
    }

    /// State with the given 1-based site flipped.
    #[inline]
    pub fn flipped(&self, site: usize) -> Self {
        SpinBasisState {
            bits: self.bits ^ (1u64 << (site - 1)),
            len: self.len,
        }
    }

    /// Index into a dense `2^L` vector.
    #[inline]
    pub fn index(&self) -> usize {
        self.bits as usize
    }
}

#[inline]
fn mask(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

impl fmt::Debug for SpinBasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{self}>")
    }
}

impl fmt::Display for SpinBasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for site in 1..=self.len() {
            f.write_str(if self.spin(site) > 0 { "u" } else { "d" })?;
        }
        Ok(())
    }
}

/// Parses `u`/`d`, `1`/`0`, `+`/`-` or arrow characters, site 1 first.
impl FromStr for SpinBasisState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut bits = 0u64;
        let mut len = 0usize;
        for c in s.trim().chars() {
            let up = match c {
                'u' | 'U' | '1' | '+' | '↑' => true,
                'd' | 'D' | '0' | '-' | '↓' => false,
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "unexpected character {c:?} in basis state {s:?}"
                    )))
                }
            };
            if len >= MAX_SITES {
                return Err(Error::InvalidInput(format!("basis state {s:?} too long")));
            }
            if up {
                bits |= 1 << len;
            }
            len += 1;
        }
        SpinBasisState::new(bits, len)
    }
}

/// Matrix element `<target|H^int|source>` of a single jump.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub target: SpinBasisState,
    pub amplitude: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    /// `H = J_xy Σ (σ⁺σ⁻ + σ⁻σ⁺) + J_z Σ σᶻσᶻ` with `σ^±` flipping a spin and
    /// nothing else, so a nearest-neighbour exchange has amplitude `J_xy`.
    Xxz {
        #[serde(rename = "L")]
        len: usize,
        #[serde(alias = "J_xy")]
        j_xy: f64,
        #[serde(alias = "J_z")]
        j_z: f64,
    },
    /// `H = -J Σ σᶻσᶻ - h_z Σ σᶻ - h_x Σ σˣ`; the transverse field is the jump part.
    Ising {
        #[serde(rename = "L")]
        len: usize,
        #[serde(alias = "J")]
        j: f64,
        h_x: f64,
        h_z: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialState {
    DomainWall,
    AllUp,
    Custom(SpinBasisState),
}

impl ModelSpec {
    pub fn xxz(len: usize, j_xy: f64, j_z: f64) -> Result<Self> {
        let m = ModelSpec::Xxz { len, j_xy, j_z };
        m.validate()?;
        Ok(m)
    }

    pub fn ising(len: usize, j: f64, h_x: f64, h_z: f64) -> Result<Self> {
        let m = ModelSpec::Ising { len, j, h_x, h_z };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.len();
        if !(2..=MAX_SITES).contains(&len) {
            return Err(Error::config("model.L", format!("must lie in 2..={MAX_SITES}")));
        }
        let finite = match *self {
            ModelSpec::Xxz { j_xy, j_z, .. } => j_xy.is_finite() && j_z.is_finite(),
            ModelSpec::Ising { j, h_x, h_z, .. } => {
                j.is_finite() && h_x.is_finite() && h_z.is_finite()
            }
        };
        if !finite {
            return Err(Error::config("model", "couplings must be finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        match *self {
            ModelSpec::Xxz { len, .. } | ModelSpec::Ising { len, .. } => len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_ising(&self) -> bool {
        matches!(self, ModelSpec::Ising { .. })
    }

    fn check(&self, state: &SpinBasisState) -> Result<()> {
        if state.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "state of length {} used with a chain of length {}",
                state.len(),
                self.len()
            )));
        }
        Ok(())
    }

    /// `<state|H^free|state>`.
    pub fn free_energy(&self, state: &SpinBasisState) -> Result<f64> {
        self.check(state)?;
        Ok(self.free_energy_unchecked(state))
    }

    #[inline]
    pub(crate) fn free_energy_unchecked(&self, state: &SpinBasisState) -> f64 {
        let len = self.len();
        let bits = state.bits();
        // Anti-aligned bonds contribute -1, aligned +1.
        let bonds = (len - 1) as i64;
        let broken = ((bits ^ (bits >> 1)) & mask(len - 1)).count_ones() as i64;
        let zz = (bonds - 2 * broken) as f64;
        match *self {
            ModelSpec::Xxz { j_z, .. } => j_z * zz,
            ModelSpec::Ising { j, h_z, .. } => {
                let mz = 2 * state.up_count() as i64 - len as i64;
                -j * zz - h_z * mz as f64
            }
        }
    }

    /// Number of jumps out of `state` (`n_t`).
    #[inline]
    pub(crate) fn transition_count(&self, state: &SpinBasisState) -> usize {
        match *self {
            ModelSpec::Xxz { len, j_xy, .. } => {
                if j_xy == 0.0 {
                    0
                } else {
                    let b = state.bits();
                    ((b ^ (b >> 1)) & mask(len - 1)).count_ones() as usize
                }
            }
            ModelSpec::Ising { len, h_x, .. } => {
                if h_x == 0.0 {
                    0
                } else {
                    len
                }
            }
        }
    }

    /// The `n`-th jump out of `state`, in the order produced by [`transitions`](Self::transitions).
    #[inline]
    pub(crate) fn nth_transition(&self, state: &SpinBasisState, n: usize) -> Transition {
        match *self {
            ModelSpec::Xxz { len, j_xy, .. } => {
                let b = state.bits();
                let mut pairs = (b ^ (b >> 1)) & mask(len - 1);
                for _ in 0..n {
                    pairs &= pairs - 1;
                }
                let bond = pairs.trailing_zeros();
                Transition {
                    target: SpinBasisState::from_raw(b ^ (0b11u64 << bond), len),
                    amplitude: j_xy,
                }
            }
            ModelSpec::Ising { h_x, .. } => Transition {
                target: state.flipped(n + 1),
                amplitude: -h_x,
            },
        }
    }

    /// All jumps `H^int|state>`; the sequence length is `n_t`.
    pub fn transitions(&self, state: &SpinBasisState) -> Result<Vec<Transition>> {
        self.check(state)?;
        let n = self.transition_count(state);
        Ok((0..n).map(|k| self.nth_transition(state, k)).collect())
    }

    /// Minimum number of `H^int` applications connecting `a` and `b`, or
    /// `None` when no sequence of jumps does.
    pub fn dynamic_norm(&self, a: &SpinBasisState, b: &SpinBasisState) -> Option<u32> {
        if a.len() != self.len() || b.len() != self.len() {
            return None;
        }
        match *self {
            ModelSpec::Ising { .. } => Some((a.bits() ^ b.bits()).count_ones()),
            ModelSpec::Xxz { .. } => {
                if a.up_count() != b.up_count() {
                    return None;
                }
                // Sum of displacements between the k-th up spins of each state.
                let (mut pa, mut pb) = (a.bits(), b.bits());
                let mut total = 0u32;
                while pa != 0 {
                    let i = pa.trailing_zeros();
                    let j = pb.trailing_zeros();
                    total += i.abs_diff(j);
                    pa &= pa - 1;
                    pb &= pb - 1;
                }
                Some(total)
            }
        }
    }

    pub fn initial_state(&self, kind: InitialState) -> Result<SpinBasisState> {
        let len = self.len();
        match kind {
            InitialState::DomainWall => {
                if !len.is_multiple_of(2) {
                    return Err(Error::InvalidInput(format!(
                        "domain-wall state needs an even chain, got L = {len}"
                    )));
                }
                SpinBasisState::new(mask(len / 2), len)
            }
            InitialState::AllUp => SpinBasisState::all_up(len),
            InitialState::Custom(state) => {
                self.check(&state)?;
                Ok(state)
            }
        }
    }
}

/// Which operator an [`ObservableSpec`] evaluates.
#[derive(Clone, Debug, PartialEq)]
pub enum ObservableKind {
    Identity,
    /// `σᶻ` on a 1-based site.
    SigmaZ(usize),
    /// Rank-one projector `|ψ><ψ|`.
    Projector(SpinBasisState),
    /// Ising bond energy
    /// `-J σᶻ_i σᶻ_{i+1} - h_x/2 (σˣ_i + σˣ_{i+1}) - h_z/2 (σᶻ_i + σᶻ_{i+1})`.
    EnergyBond { bond: usize, j: f64, h_x: f64, h_z: f64 },
}

/// A Hermitian operator with real matrix elements in the computational basis.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSpec {
    pub name: String,
    pub kind: ObservableKind,
}

impl ObservableSpec {
    pub fn identity() -> Self {
        ObservableSpec {
            name: "identity".into(),
            kind: ObservableKind::Identity,
        }
    }

    pub fn sigma_z(model: &ModelSpec, site: usize) -> Result<Self> {
        if site == 0 || site > model.len() {
            return Err(Error::InvalidInput(format!(
                "site {site} outside 1..={}",
                model.len()
            )));
        }
        Ok(ObservableSpec {
            name: format!("sz_{site}"),
            kind: ObservableKind::SigmaZ(site),
        })
    }

    pub fn projector(model: &ModelSpec, state: SpinBasisState) -> Result<Self> {
        model.check(&state)?;
        Ok(ObservableSpec {
            name: "loschmidt".into(),
            kind: ObservableKind::Projector(state),
        })
    }

    pub fn energy_bond(model: &ModelSpec, bond: usize) -> Result<Self> {
        match *model {
            ModelSpec::Ising { len, j, h_x, h_z } => {
                if bond == 0 || bond >= len {
                    return Err(Error::InvalidInput(format!(
                        "bond {bond} outside 1..={}",
                        len - 1
                    )));
                }
                Ok(ObservableSpec {
                    name: format!("energy_{bond}"),
                    kind: ObservableKind::EnergyBond { bond, j, h_x, h_z },
                })
            }
            ModelSpec::Xxz { .. } => Err(Error::InvalidInput(
                "bond energy density is defined for the Ising chain only".into(),
            )),
        }
    }

    /// Looks up an observable by its CSV name (`identity`, `loschmidt`,
    /// `sz_<site>`, `energy_<bond>`).
    pub fn from_name(model: &ModelSpec, psi0: SpinBasisState, name: &str) -> Result<Self> {
        let index = |prefix: &str| -> Option<usize> { name.strip_prefix(prefix)?.parse().ok() };
        match name {
            "identity" => Ok(Self::identity()),
            "loschmidt" => Self::projector(model, psi0),
            _ => {
                if let Some(site) = index("sz_") {
                    Self::sigma_z(model, site)
                } else if let Some(bond) = index("energy_") {
                    Self::energy_bond(model, bond)
                } else {
                    Err(Error::InvalidInput(format!("unknown observable {name:?}")))
                }
            }
        }
    }

    /// True when every matrix element off the diagonal vanishes.
    pub fn diagonal_only(&self) -> bool {
        !matches!(self.kind, ObservableKind::EnergyBond { h_x, .. } if h_x != 0.0)
    }

    #[inline]
    fn diagonal(&self, state: &SpinBasisState) -> f64 {
        match self.kind {
            ObservableKind::Identity => 1.0,
            ObservableKind::SigmaZ(site) => state.spin(site) as f64,
            ObservableKind::Projector(psi) => {
                if *state == psi {
                    1.0
                } else {
                    0.0
                }
            }
            ObservableKind::EnergyBond { bond, j, h_z, .. } => {
                let (a, b) = (state.spin(bond) as f64, state.spin(bond + 1) as f64);
                -j * a * b - 0.5 * h_z * (a + b)
            }
        }
    }

    /// `<bra|X|ket>`.
    #[inline]
    pub fn element(&self, bra: &SpinBasisState, ket: &SpinBasisState) -> Complex64 {
        if bra == ket {
            return Complex64::new(self.diagonal(ket), 0.0);
        }
        match self.kind {
            ObservableKind::EnergyBond { bond, h_x, .. } => {
                let diff = bra.bits() ^ ket.bits();
                let touches = diff == 1u64 << (bond - 1) || diff == 1u64 << bond;
                if touches {
                    Complex64::new(-0.5 * h_x, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            _ => Complex64::new(0.0, 0.0),
        }
    }

    /// Calls `f(bra, <bra|X|ket>)` for every nonzero element in the column of `ket`.
    pub fn for_each_in_column(&self, ket: &SpinBasisState, mut f: impl FnMut(SpinBasisState, f64)) {
        let d = self.diagonal(ket);
        if d != 0.0 {
            f(*ket, d);
        }
        if let ObservableKind::EnergyBond { bond, h_x, .. } = self.kind {
            if h_x != 0.0 {
                f(ket.flipped(bond), -0.5 * h_x);
                f(ket.flipped(bond + 1), -0.5 * h_x);
            }
        }
    }
}

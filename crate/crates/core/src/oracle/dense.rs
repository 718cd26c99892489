//! Dense references on the full `2^L` Hilbert space.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ObservableSpec, SpinBasisState};

/// Chains up to this length get a dense Liouville-space resolvent.
pub const MAX_RESOLVENT_SITES: usize = 8;
/// Chains up to this length get the dense truncated series.
pub const MAX_SERIES_SITES: usize = 6;
/// Largest chain for the literal `D² × D²` linear solve.
pub const MAX_VECTORIZED_SITES: usize = 5;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `H^free`, `H^int` and `H` as dense real matrices.
#[derive(Clone, Debug)]
pub struct DenseOperatorRep {
    pub len: usize,
    pub dim: usize,
    pub h_free: DVector<f64>,
    pub h_int: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

impl DenseOperatorRep {
    pub fn build(model: &ModelSpec) -> Result<Self> {
        let len = model.len();
        if len > 12 {
            return Err(Error::ResourceLimit(format!(
                "dense operators need 4^L doubles; L = {len} is too large"
            )));
        }
        let dim = 1usize << len;
        let mut h_free = DVector::zeros(dim);
        let mut h_int = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            let state = SpinBasisState::new(k as u64, len)?;
            h_free[k] = model.free_energy(&state)?;
            for t in model.transitions(&state)? {
                h_int[(t.target.index(), k)] += t.amplitude;
            }
        }
        let h = DMatrix::from_diagonal(&h_free) + &h_int;
        Ok(DenseOperatorRep {
            len,
            dim,
            h_free,
            h_int,
            h,
        })
    }

    fn h_int_complex(&self) -> DMatrix<Complex64> {
        self.h_int.map(|x| Complex64::new(x, 0.0))
    }

    /// `L^int x = -i [H^int, x]`.
    pub fn apply_interaction(&self, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let h = self.h_int_complex();
        (&h * x - x * &h) * Complex64::new(0.0, -1.0)
    }

    /// Elementwise `1 / (s + r + i(E_a - E_b))` on `x`, times `numerator`.
    pub fn apply_free_resolvent(
        &self,
        x: &DMatrix<Complex64>,
        s: f64,
        r: f64,
        numerator: f64,
    ) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.dim, self.dim, |a, b| {
            x[(a, b)] * numerator / Complex64::new(s + r, self.h_free[a] - self.h_free[b])
        })
    }

    /// `T_r(s) x = r R^free_(s+r) (x + L^int x / r)`.
    pub fn apply_propagator(&self, x: &DMatrix<Complex64>, s: f64, r: f64) -> DMatrix<Complex64> {
        let y = x + self.apply_interaction(x) / Complex64::new(r, 0.0);
        self.apply_free_resolvent(&y, s, r, r)
    }
}

/// `|ψ><ψ|` on the full space.
pub fn pure_state_density(psi: SpinBasisState) -> DMatrix<Complex64> {
    let dim = 1usize << psi.len();
    let mut rho = DMatrix::from_element(dim, dim, ZERO);
    rho[(psi.index(), psi.index())] = Complex64::new(1.0, 0.0);
    rho
}

/// `Tr(X ρ) = Σ_{b,k} <b|X|k> ρ_kb`.
pub fn expectation(obs: &ObservableSpec, rho: &DMatrix<Complex64>, len: usize) -> Complex64 {
    let dim = rho.nrows();
    let mut acc = ZERO;
    for k in 0..dim {
        let ket = SpinBasisState::from_raw(k as u64, len);
        obs.for_each_in_column(&ket, |bra, x| {
            acc += rho[(k, bra.index())] * x;
        });
    }
    acc
}

fn check_rho(rho0: &DMatrix<Complex64>, dim: usize) -> Result<()> {
    if rho0.nrows() != dim || rho0.ncols() != dim {
        return Err(Error::InvalidInput(format!(
            "density matrix is {}x{}, expected {dim}x{dim}",
            rho0.nrows(),
            rho0.ncols()
        )));
    }
    Ok(())
}

fn check_s(s: f64) -> Result<()> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidInput(format!("Laplace variable s = {s} must be positive")));
    }
    Ok(())
}

/// Eigenbasis of `H` for repeated resolvent evaluations.
pub struct ResolventSolver {
    energies: DVector<f64>,
    vectors: DMatrix<Complex64>,
}

impl ResolventSolver {
    pub fn new(model: &ModelSpec) -> Result<Self> {
        if model.len() > MAX_RESOLVENT_SITES {
            return Err(Error::ResourceLimit(format!(
                "dense resolvent limited to L <= {MAX_RESOLVENT_SITES}, got L = {}; \
                 use the time-domain reference instead",
                model.len()
            )));
        }
        let rep = DenseOperatorRep::build(model)?;
        let eig = SymmetricEigen::new(rep.h);
        Ok(ResolventSolver {
            energies: eig.eigenvalues,
            vectors: eig.eigenvectors.map(|x| Complex64::new(x, 0.0)),
        })
    }

    /// `ρ̃_s = s (s - L)^{-1} ρ0`, diagonal in the eigenbasis of `H`.
    pub fn solve(&self, rho0: &DMatrix<Complex64>, s: f64) -> Result<DMatrix<Complex64>> {
        check_s(s)?;
        check_rho(rho0, self.energies.len())?;
        let v = &self.vectors;
        let mut x = v.adjoint() * rho0 * v;
        for a in 0..x.nrows() {
            for b in 0..x.ncols() {
                x[(a, b)] *= s / Complex64::new(s, self.energies[a] - self.energies[b]);
            }
        }
        Ok(v * x * v.adjoint())
    }
}

/// Laplace-domain density `ρ̃_s = s R_s ρ0` solving `(s - L) x = ρ0`.
pub fn dense_resolvent(model: &ModelSpec, rho0: &DMatrix<Complex64>, s: f64) -> Result<DMatrix<Complex64>> {
    ResolventSolver::new(model)?.solve(rho0, s)
}

/// Same quantity as [`dense_resolvent`] from an LU solve on the vectorized
/// `D² × D²` system; only for very small chains.
pub fn vectorized_resolvent(
    model: &ModelSpec,
    rho0: &DMatrix<Complex64>,
    s: f64,
) -> Result<DMatrix<Complex64>> {
    check_s(s)?;
    if model.len() > MAX_VECTORIZED_SITES {
        return Err(Error::ResourceLimit(format!(
            "vectorized solve limited to L <= {MAX_VECTORIZED_SITES}"
        )));
    }
    let rep = DenseOperatorRep::build(model)?;
    let d = rep.dim;
    check_rho(rho0, d)?;
    let idx = |a: usize, b: usize| a * d + b;
    let mut system = DMatrix::from_element(d * d, d * d, ZERO);
    let minus_i = Complex64::new(0.0, -1.0);
    for a in 0..d {
        for b in 0..d {
            let row = idx(a, b);
            system[(row, row)] += Complex64::new(s, 0.0);
            // -(L x)_ab = i Σ_c (H_ac x_cb - x_ac H_cb)
            for c in 0..d {
                let hac = rep.h[(a, c)];
                if hac != 0.0 {
                    system[(row, idx(c, b))] -= minus_i * hac;
                }
                let hcb = rep.h[(c, b)];
                if hcb != 0.0 {
                    system[(row, idx(a, c))] += minus_i * hcb;
                }
            }
        }
    }
    let rhs = DVector::from_fn(d * d, |k, _| rho0[(k / d, k % d)]);
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Accuracy("singular Liouville system".into()))?;
    Ok(DMatrix::from_fn(d, d, |a, b| sol[idx(a, b)] * s))
}

/// Successive terms `[T_r(s)]^m R^free_(s+r) ρ0`, `m = 0, 1, ...`.
pub struct MagicTerms {
    rep: DenseOperatorRep,
    s: f64,
    r: f64,
    current: Option<DMatrix<Complex64>>,
    rho0: DMatrix<Complex64>,
}

impl MagicTerms {
    pub fn new(model: &ModelSpec, rho0: &DMatrix<Complex64>, s: f64, r: f64) -> Result<Self> {
        check_s(s)?;
        if !(r > 0.0) {
            return Err(Error::InvalidInput("jump rate r must be positive".into()));
        }
        if model.len() > MAX_SERIES_SITES {
            return Err(Error::ResourceLimit(format!(
                "dense truncated series limited to L <= {MAX_SERIES_SITES}"
            )));
        }
        let rep = DenseOperatorRep::build(model)?;
        check_rho(rho0, rep.dim)?;
        Ok(MagicTerms {
            rep,
            s,
            r,
            current: None,
            rho0: rho0.clone(),
        })
    }
}

impl Iterator for MagicTerms {
    type Item = DMatrix<Complex64>;

    fn next(&mut self) -> Option<Self::Item> {
        let next = match &self.current {
            None => self.rep.apply_free_resolvent(&self.rho0, self.s, self.r, 1.0),
            Some(x) => self.rep.apply_propagator(x, self.s, self.r),
        };
        self.current = Some(next.clone());
        Some(next)
    }
}

/// `s Σ_{m=0}^{M_trunc} [T_r(s)]^m R^free_(s+r) ρ0`.
pub fn dense_truncated_magic(
    model: &ModelSpec,
    rho0: &DMatrix<Complex64>,
    s: f64,
    r: f64,
    m_trunc: usize,
) -> Result<DMatrix<Complex64>> {
    let terms = MagicTerms::new(model, rho0, s, r)?;
    let dim = rho0.nrows();
    let sum = terms
        .take(m_trunc + 1)
        .fold(DMatrix::from_element(dim, dim, ZERO), |acc, t| acc + t);
    Ok(sum * Complex64::new(s, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InitialState;

    fn trace(m: &DMatrix<Complex64>) -> Complex64 {
        (0..m.nrows()).map(|k| m[(k, k)]).sum()
    }

    #[test]
    fn hamiltonian_is_symmetric_sum() {
        for model in [ModelSpec::xxz(4, 1.0, 0.9).unwrap(), ModelSpec::ising(4, 1.0, 0.2, 0.6).unwrap()] {
            let rep = DenseOperatorRep::build(&model).unwrap();
            assert!((&rep.h - rep.h.transpose()).camax() < 1e-12);
            let rebuilt = DMatrix::from_diagonal(&rep.h_free) + &rep.h_int;
            assert_eq!(rebuilt, rep.h);
        }
    }

    #[test]
    fn resolvent_trace_and_hermiticity() {
        let model = ModelSpec::xxz(4, 1.0, 0.9).unwrap();
        let psi = model.initial_state(InitialState::DomainWall).unwrap();
        let rho0 = pure_state_density(psi);
        let solver = ResolventSolver::new(&model).unwrap();
        for s in [0.05, 0.5, 5.0] {
            let x = solver.solve(&rho0, s).unwrap();
            assert!((trace(&x) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            assert!((&x - x.adjoint()).camax() < 1e-10);
        }
    }

    #[test]
    fn stationary_state_is_fixed() {
        // A projector on an eigenvector of H commutes with H.
        let model = ModelSpec::ising(3, 1.0, 0.4, 0.3).unwrap();
        let rep = DenseOperatorRep::build(&model).unwrap();
        let eig = SymmetricEigen::new(rep.h.clone());
        let v = eig.eigenvectors.column(2).map(|x| Complex64::new(x, 0.0));
        let rho0 = &v * v.adjoint();
        for s in [0.1, 1.0, 7.0] {
            let x = dense_resolvent(&model, &rho0, s).unwrap();
            assert!((&x - &rho0).camax() < 1e-12);
        }
    }

    #[test]
    fn eigenbasis_and_vectorized_solves_agree() {
        for model in [ModelSpec::xxz(3, 0.7, 1.1).unwrap(), ModelSpec::ising(3, 1.0, 0.3, 0.5).unwrap()] {
            let psi = SpinBasisState::new(0b011, 3).unwrap();
            let rho0 = pure_state_density(psi);
            for s in [0.2, 2.0] {
                let a = dense_resolvent(&model, &rho0, s).unwrap();
                let b = vectorized_resolvent(&model, &rho0, s).unwrap();
                assert!((&a - &b).camax() < 1e-12);
            }
        }
    }

    #[test]
    fn free_limit_of_series() {
        let model = ModelSpec::xxz(4, 0.0, 0.9).unwrap();
        let psi = SpinBasisState::new(0b0101, 4).unwrap();
        let mut rho0 = pure_state_density(psi);
        let other = SpinBasisState::new(0b0011, 4).unwrap();
        rho0[(psi.index(), other.index())] = Complex64::new(0.5, 0.0);
        let (s, r) = (0.5, 30.0);
        let out = dense_truncated_magic(&model, &rho0, s, r, 0).unwrap();
        let de = model.free_energy(&psi).unwrap() - model.free_energy(&other).unwrap();
        let expect = Complex64::new(0.5 * s, 0.0) / Complex64::new(s + r, de);
        assert!((out[(psi.index(), other.index())] - expect).norm() < 1e-15);
    }

    #[test]
    fn series_trace_tends_to_one() {
        let model = ModelSpec::xxz(4, 1.0, 0.9).unwrap();
        let rho0 = pure_state_density(model.initial_state(InitialState::DomainWall).unwrap());
        let out = dense_truncated_magic(&model, &rho0, 1.0, 30.0, 600).unwrap();
        assert!((trace(&out) - Complex64::new(1.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn size_limits() {
        let big = ModelSpec::xxz(10, 1.0, 1.0).unwrap();
        let rho0 = DMatrix::from_element(1, 1, ZERO);
        assert!(matches!(dense_resolvent(&big, &rho0, 1.0), Err(Error::ResourceLimit(_))));
        assert!(matches!(
            dense_truncated_magic(&big, &rho0, 1.0, 30.0, 3),
            Err(Error::ResourceLimit(_))
        ));
    }
}

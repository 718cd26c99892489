//! Helpers shared by integration test targets.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use triplet_qmc::engine::{free_update, spawn_outcomes, FreeMode};
use triplet_qmc::ensemble::{Ensemble, SGrid, Triplet};
use triplet_qmc::model::{ModelSpec, SpinBasisState};
use triplet_qmc::oracle::DenseOperatorRep;

pub const R: f64 = 7.0;

/// Physical weights of order one; the control weights carry `exp(-κ n² / 2)`.
fn random_ensemble(model: &ModelSpec, grid: &SGrid, kappa: f64, rng: &mut ChaCha8Rng) -> Vec<Triplet> {
    let len = model.len();
    let mut out = Vec::new();
    for _ in 0..12 {
        let ket = SpinBasisState::new(rng.gen_range(0..1u64 << len), len).unwrap();
        let bra = SpinBasisState::new(rng.gen_range(0..1u64 << len), len).unwrap();
        let Some(norm) = model.dynamic_norm(&ket, &bra) else {
            continue;
        };
        let mut reweight: Vec<Complex64> = (0..grid.len())
            .map(|_| Complex64::new(rng.gen_range(0.5..1.5), rng.gen_range(-0.5..0.5)))
            .collect();
        reweight[grid.ref_index()] = Complex64::new(1.0, 0.0);
        out.push(Triplet {
            w_ctrl: Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                * (-0.5 * kappa * (norm as f64).powi(2)).exp(),
            ket,
            bra,
            reweight,
            norm,
        });
    }
    out
}

fn physical_matrix(triplets: &[Triplet], dim: usize, kappa: f64, s_index: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
    for t in triplets {
        m[(t.ket.index(), t.bra.index())] += t.physical_weight(kappa, s_index);
    }
    m
}

/// Largest entry-wise deviation between the exact expectation of one
/// spawn + free step and the dense `T_r(s)` action, over a random input.
pub fn one_loop_error(model: &ModelSpec, kappa: f64, seed: u64) -> f64 {
    let dense = DenseOperatorRep::build(model).unwrap();
    let grid = SGrid::new(vec![0.1, 0.7, 3.0], 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parents = random_ensemble(model, &grid, kappa, &mut rng);
    assert!(!parents.is_empty());

    let mut expected = parents.clone();
    for p in &parents {
        for (prob, mut child) in spawn_outcomes(p, model, kappa, R) {
            child.w_ctrl *= prob;
            expected.push(child);
        }
    }
    let mut ensemble = Ensemble::new(expected, grid.clone());
    free_update(&mut ensemble, model, R, FreeMode::Loop);

    let mut worst: f64 = 0.0;
    for (si, &s) in grid.values().iter().enumerate() {
        let input = physical_matrix(&parents, dense.dim, kappa, si);
        let want = dense.apply_propagator(&input, s, R);
        let got = physical_matrix(&ensemble.triplets, dense.dim, kappa, si);
        worst = worst.max((&got - &want).camax());
    }
    worst
}


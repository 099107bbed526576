#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvspec_core::system::{Horizon, Mask, MatrixSequence};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

/// Upper-triangular base with `e^{rates}` on the diagonal.
pub fn upper_base(r: &mut ChaCha8Rng, rates: &[f64], coupling: f64) -> DMatrix<f64> {
    let d = rates.len();
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            rates[i].exp()
        } else if j > i {
            r.gen_range(-coupling..=coupling)
        } else {
            0.0
        }
    })
}

/// Diagonal of dyadic sequences plus a seeded strictly upper fill.
pub fn dyadic_triangular(h: Horizon, rates: &[(f64, f64)], fill: f64, seed: u64) -> MatrixSequence {
    let d = rates.len();
    let diag = rates
        .iter()
        .map(|&(a, b)| MatrixSequence::dyadic(h, a, b).unwrap())
        .collect();
    let m = MatrixSequence::diagonal(diag).unwrap();
    if fill == 0.0 || d == 1 {
        return m;
    }
    let f = MatrixSequence::random_bounded(h, DMatrix::zeros(d, d), fill, Mask::StrictUpper, seed).unwrap();
    MatrixSequence::sum(&m, &f).unwrap()
}

/// `e^{rates}`-diagonal base plus a bounded seeded perturbation.
pub fn perturbed(h: Horizon, r: &mut ChaCha8Rng, rates: &[f64], bound: f64, mask: Mask) -> MatrixSequence {
    let base = upper_base(r, rates, 0.5);
    MatrixSequence::random_bounded(h, base, bound, mask, r.gen()).unwrap()
}

/// `lhs` on negative indices, `rhs` from 0 on.
pub fn switching(h: Horizon, lhs: DMatrix<f64>, rhs: DMatrix<f64>) -> MatrixSequence {
    let mats = h.indices().map(|n| if n < 0 { lhs.clone() } else { rhs.clone() }).collect();
    MatrixSequence::explicit(h, mats).unwrap()
}

/// `Q diag(e^{rates}) Q^{-1}` with a random well-conditioned `Q`.
pub fn generic(r: &mut ChaCha8Rng, rates: &[f64]) -> DMatrix<f64> {
    let d = rates.len();
    let q = DMatrix::identity(d, d) + DMatrix::from_fn(d, d, |_, _| r.gen_range(-0.3..0.3));
    let qi = q.clone().try_inverse().unwrap();
    q * diag(&rates.iter().map(|x| x.exp()).collect::<Vec<_>>()) * qi
}

pub fn random_rates(r: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..d).map(|_| r.gen_range(lo..hi)).collect()
}

/// One of several seeded system families of dimension `d`.
pub fn seeded_system(h: Horizon, d: usize, seed: u64) -> MatrixSequence {
    let mut r = rng(seed);
    match seed % 4 {
        0 => {
            let rates = random_rates(&mut r, d, -1.0, 1.0);
            perturbed(h, &mut r, &rates, 0.2, Mask::Full)
        }
        1 => {
            let rates: Vec<(f64, f64)> = (0..d)
                .map(|_| {
                    let a = r.gen_range(-1.5..1.0);
                    (a, a + r.gen_range(0.0..0.8))
                })
                .collect();
            dyadic_triangular(h, &rates, 1.0, r.gen())
        }
        2 => {
            let rates = random_rates(&mut r, d, -1.0, 1.0);
            let period: Vec<DMatrix<f64>> = (0..3).map(|_| upper_base(&mut r, &rates, 1.0)).collect();
            MatrixSequence::periodic(h, period).unwrap()
        }
        _ => {
            let left = random_rates(&mut r, d, -1.0, 1.0);
            let right = random_rates(&mut r, d, -1.0, 1.0);
            let l = generic(&mut r, &left);
            let rr = generic(&mut r, &right);
            switching(h, l, rr)
        }
    }
}

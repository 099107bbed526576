//! Uniform complete controllability via window Gramians.
//!
//! For `x_{j+1} = A_j x_j + B_j u_j` started from 0 at `k0`, the state at
//! `k0 + K` is `sum_j Phi_A(k0 + K, j + 1) B_j u_j`. The window Gramian
//! `W = sum_j G_j B_j B_j^T G_j^T` with `G_j = Phi_A(k0 + K, j + 1)` is
//! positive definite exactly when every target is reachable, and then
//! `u_j = B_j^T G_j^T W^{-1} xi` is the minimum-energy steering control.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::system::MatrixSequence;

pub const DEFAULT_GRAMIAN_FLOOR: f64 = 1e-8;
pub const DEFAULT_MAX_WINDOW: usize = 32;

/// Window length `K` and steering bound `alpha` certifying controllability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UccCertificate {
    #[serde(rename = "K")]
    pub window: usize,
    pub alpha: f64,
    pub min_gramian_eig: f64,
    pub max_gramian_eig: f64,
    pub ok: bool,
    pub floor: f64,
}

fn check_pair(a: &MatrixSequence, b: &MatrixSequence) -> Result<()> {
    if !a.is_square() || b.rows() != a.rows() {
        return Err(Error::Dimension(format!(
            "control pair needs A: dxd and B: dxs, got A {:?}, B {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.horizon() != b.horizon() {
        return Err(Error::Horizon(format!(
            "A and B horizons disagree: {} vs {}",
            a.horizon(),
            b.horizon()
        )));
    }
    Ok(())
}

fn check_window(a: &MatrixSequence, k0: i64, window: usize) -> Result<()> {
    let h = a.horizon();
    if window == 0 {
        return Err(Error::InvalidParameter("window length must be >= 1".into()));
    }
    if k0 < h.n_min || k0 + window as i64 > h.n_max {
        return Err(Error::Horizon(format!(
            "window [{k0}, {}] is not inside horizon {h}",
            k0 + window as i64
        )));
    }
    Ok(())
}

/// `G_j = Phi_A(k0 + K, j + 1)` for `j = k0 .. k0 + K - 1`.
pub(crate) fn reach_maps(a: &MatrixSequence, k0: i64, window: usize) -> Vec<DMatrix<f64>> {
    let d = a.rows();
    let mut maps = vec![DMatrix::identity(d, d); window];
    for idx in (0..window.saturating_sub(1)).rev() {
        let j = k0 + idx as i64;
        maps[idx] = &maps[idx + 1] * a.at(j + 1);
    }
    maps
}

/// Window Gramian over `[k0, k0 + K)`; symmetric positive semidefinite.
pub fn controllability_gramian(
    a: &MatrixSequence,
    b: &MatrixSequence,
    k0: i64,
    window: usize,
) -> Result<DMatrix<f64>> {
    check_pair(a, b)?;
    check_window(a, k0, window)?;
    Ok(gramian_from_maps(b, k0, &reach_maps(a, k0, window)))
}

fn gramian_from_maps(b: &MatrixSequence, k0: i64, maps: &[DMatrix<f64>]) -> DMatrix<f64> {
    let d = b.rows();
    let mut w = DMatrix::zeros(d, d);
    for (idx, g) in maps.iter().enumerate() {
        let gb = g * b.at(k0 + idx as i64);
        w += &gb * gb.transpose();
    }
    // symmetrize away rounding
    (&w + w.transpose()) * 0.5
}

fn eig_range(w: &DMatrix<f64>) -> (f64, f64) {
    let eig = w.clone().symmetric_eigenvalues();
    (eig.min(), eig.max())
}

struct WindowStats {
    min_eig: f64,
    max_eig: f64,
    alpha: f64,
}

fn window_stats(a: &MatrixSequence, b: &MatrixSequence, k0: i64, window: usize) -> WindowStats {
    let maps = reach_maps(a, k0, window);
    let w = gramian_from_maps(b, k0, &maps);
    let (min_eig, max_eig) = eig_range(&w);
    let steer = maps
        .iter()
        .enumerate()
        .map(|(idx, g)| spectral_norm(&(g * b.at(k0 + idx as i64))))
        .fold(0.0, f64::max);
    let alpha = if min_eig > 0.0 { steer / min_eig } else { f64::INFINITY };
    WindowStats {
        min_eig,
        max_eig,
        alpha,
    }
}

/// Smallest `K <= k_max` whose window Gramians are uniformly positive
/// definite (smallest eigenvalue `>= floor`) over every window in the horizon.
///
/// `alpha` is `max_w max_j ||B_j^T G_j^T|| / lambda_min(W_w)`, a valid (not
/// tight) bound on `||u_j|| / ||xi||` for minimum-energy steering.
pub fn check_ucc(
    a: &MatrixSequence,
    b: &MatrixSequence,
    k_max: usize,
    floor: f64,
) -> Result<UccCertificate> {
    check_pair(a, b)?;
    if k_max == 0 {
        return Err(Error::InvalidParameter("maximal window must be >= 1".into()));
    }
    let h = a.horizon();
    let mut last = UccCertificate {
        window: k_max,
        alpha: f64::INFINITY,
        min_gramian_eig: 0.0,
        max_gramian_eig: 0.0,
        ok: false,
        floor,
    };
    for window in 1..=k_max.min(h.steps()) {
        let starts: Vec<i64> = (h.n_min..=h.n_max - window as i64).collect();
        // cheap rejection on a sparse sample before the full sweep
        let probe = starts.iter().step_by(97).any(|&k0| window_stats(a, b, k0, window).min_eig < floor);
        if probe {
            continue;
        }
        let stats: Vec<WindowStats> = starts
            .par_iter()
            .map(|&k0| window_stats(a, b, k0, window))
            .collect();
        let min_eig = stats.iter().map(|s| s.min_eig).fold(f64::INFINITY, f64::min);
        let max_eig = stats.iter().map(|s| s.max_eig).fold(0.0, f64::max);
        let alpha = stats.iter().map(|s| s.alpha).fold(0.0, f64::max);
        last = UccCertificate {
            window,
            alpha,
            min_gramian_eig: min_eig,
            max_gramian_eig: max_eig,
            ok: min_eig >= floor && alpha.is_finite(),
            floor,
        };
        if last.ok {
            return Ok(last);
        }
    }
    Ok(last)
}

/// Minimum-energy open-loop control steering 0 at `k0` to `target` at
/// `k0 + K`.
pub fn min_energy_steering(
    a: &MatrixSequence,
    b: &MatrixSequence,
    k0: i64,
    window: usize,
    target: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    check_pair(a, b)?;
    check_window(a, k0, window)?;
    if target.len() != a.rows() {
        return Err(Error::Dimension(format!(
            "target has length {}, state dimension is {}",
            target.len(),
            a.rows()
        )));
    }
    let maps = reach_maps(a, k0, window);
    let w = gramian_from_maps(b, k0, &maps);
    let (min_eig, _) = eig_range(&w);
    if min_eig <= 0.0 {
        return Err(Error::SingularGramian { k0, min_eig });
    }
    let chol = w
        .cholesky()
        .ok_or(Error::SingularGramian { k0, min_eig })?;
    let eta = chol.solve(target);
    Ok(maps
        .iter()
        .enumerate()
        .map(|(idx, g)| b.at(k0 + idx as i64).transpose() * g.transpose() * &eta)
        .collect())
}

/// Forward simulation of `x_{j+1} = A_j x_j + B_j u_j` from `x0` at `k0`.
pub fn simulate(
    a: &MatrixSequence,
    b: &MatrixSequence,
    k0: i64,
    x0: &DVector<f64>,
    controls: &[DVector<f64>],
) -> DVector<f64> {
    let mut x = x0.clone();
    for (idx, u) in controls.iter().enumerate() {
        let j = k0 + idx as i64;
        x = a.at(j) * x + b.at(j) * u;
    }
    x
}

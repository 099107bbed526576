//! Evolution operators `Phi(m, n)` with checkpointed block products.
//!
//! With `x_{n+1} = M_n x_n`, `Phi(m, n) = M_{m-1} ... M_n` for `m > n`, the
//! identity for `m = n`, and `M_m^{-1} ... M_{n-1}^{-1}` for `m < n`.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{singular_values_desc, ScaledMatrix};
use crate::system::{MatrixSequence, DEFAULT_INVERTIBILITY_FLOOR};

pub const DEFAULT_CHECKPOINT_STRIDE: usize = 64;

/// Block products of a factor list `F_0, F_1, ...`, used to answer
/// `F_{hi-1} ... F_lo` in `O(hi - lo)` multiplications of precomputed blocks.
#[derive(Debug)]
pub struct ProductCheckpoints {
    stride: usize,
    factors: Vec<DMatrix<f64>>,
    blocks: Vec<ScaledMatrix>,
}

impl ProductCheckpoints {
    pub fn new(factors: Vec<DMatrix<f64>>, stride: usize) -> Self {
        let stride = stride.max(1);
        let n = factors.len();
        let nblocks = n.div_ceil(stride);
        let blocks = (0..nblocks)
            .into_par_iter()
            .map(|b| direct_product(&factors, b * stride, ((b + 1) * stride).min(n)))
            .collect();
        Self {
            stride,
            factors,
            blocks,
        }
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.factors.first().map_or(0, |f| f.nrows())
    }

    /// `F_{hi-1} ... F_lo`, for `0 <= lo <= hi <= len`.
    pub fn product(&self, lo: usize, hi: usize) -> ScaledMatrix {
        assert!(lo <= hi && hi <= self.len());
        let s = self.stride;
        let first_full = lo.div_ceil(s);
        let last_full = hi / s;
        if first_full >= last_full {
            return direct_product(&self.factors, lo, hi);
        }
        let mut acc = direct_product(&self.factors, lo, first_full * s);
        for b in first_full..last_full {
            acc = self.blocks[b].mul(&acc);
        }
        direct_product(&self.factors, last_full * s, hi).mul(&acc)
    }

    /// `F_{lo+len-1} ... F_lo` for every admissible `lo`, in order.
    pub fn window_products(&self, len: usize) -> Vec<ScaledMatrix> {
        let n = self.len();
        if len > n {
            return Vec::new();
        }
        let count = n - len + 1;
        let s = self.stride;
        if len <= 2 * s {
            return (0..count)
                .into_par_iter()
                .map(|lo| direct_product(&self.factors, lo, lo + len))
                .collect();
        }
        let nblocks = count.div_ceil(s);
        let per_block: Vec<Vec<ScaledMatrix>> = (0..nblocks)
            .into_par_iter()
            .map(|bl| {
                let start = bl * s;
                let end = ((bl + 1) * s).min(self.len());
                let first_lo = start;
                let last_lo = (start + s).min(count);
                // suffixes within the starting block: F_{end-1} ... F_lo
                let mut suffix = vec![ScaledMatrix::identity(self.dim()); end - start + 1];
                for lo in (start..end).rev() {
                    let k = lo - start;
                    suffix[k] = suffix[k + 1].mul(&ScaledMatrix::new(self.factors[lo].clone()));
                }
                let mut mids: HashMap<usize, ScaledMatrix> = HashMap::new();
                let mut prefixes: HashMap<usize, Vec<ScaledMatrix>> = HashMap::new();
                let mut out = Vec::with_capacity(last_lo - first_lo);
                for lo in first_lo..last_lo {
                    let hi = lo + len;
                    let bh = hi / s;
                    let jh = hi - bh * s;
                    let mid = mids.entry(bh).or_insert_with(|| {
                        let mut acc = ScaledMatrix::identity(self.dim());
                        for b in bl + 1..bh {
                            acc = self.blocks[b].mul(&acc);
                        }
                        acc
                    });
                    let head = mid.mul(&suffix[lo - start]);
                    let pre = prefixes.entry(bh).or_insert_with(|| {
                        let bstart = bh * s;
                        let bend = ((bh + 1) * s).min(self.len());
                        let mut p = Vec::with_capacity(bend - bstart + 1);
                        p.push(ScaledMatrix::identity(self.dim()));
                        for i in bstart..bend {
                            let next = ScaledMatrix::new(self.factors[i].clone()).mul(p.last().unwrap());
                            p.push(next);
                        }
                        p
                    });
                    out.push(pre[jh].mul(&head));
                }
                out
            })
            .collect();
        per_block.into_iter().flatten().collect()
    }
}

fn direct_product(factors: &[DMatrix<f64>], lo: usize, hi: usize) -> ScaledMatrix {
    let d = factors.first().map_or(0, |f| f.nrows());
    let mut acc = ScaledMatrix::identity(d);
    for f in &factors[lo..hi] {
        acc = ScaledMatrix::new(f.clone()).mul(&acc);
    }
    acc
}

struct InverseFactors {
    checkpoints: ProductCheckpoints,
    /// Indices (absolute) of factors that failed the invertibility floor.
    singular: Vec<(i64, f64)>,
}

/// Memoizing evaluator of `Phi_M(m, n)` on the horizon of `M`.
///
/// Safe for concurrent readers; duplicate concurrent computations of the same
/// entry produce identical values.
pub struct EvolutionCache {
    base: MatrixSequence,
    stride: usize,
    forward: OnceLock<ProductCheckpoints>,
    inverse: OnceLock<InverseFactors>,
    memo: Mutex<HashMap<(i64, i64), ScaledMatrix>>,
}

impl EvolutionCache {
    pub fn new(base: MatrixSequence) -> Result<Self> {
        Self::with_stride(base, DEFAULT_CHECKPOINT_STRIDE)
    }

    pub fn with_stride(base: MatrixSequence, stride: usize) -> Result<Self> {
        if !base.is_square() {
            return Err(Error::Dimension(format!(
                "evolution needs a square sequence, got {:?}",
                base.shape()
            )));
        }
        Ok(Self {
            base,
            stride: stride.max(1),
            forward: OnceLock::new(),
            inverse: OnceLock::new(),
            memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn base(&self) -> &MatrixSequence {
        &self.base
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Factors `M_{n_min} ... M_{n_max - 1}` with checkpoints.
    pub fn forward(&self) -> &ProductCheckpoints {
        self.forward.get_or_init(|| {
            let h = self.base.horizon();
            let factors = (h.n_min..h.n_max)
                .into_par_iter()
                .map(|n| self.base.at(n))
                .collect();
            ProductCheckpoints::new(factors, self.stride)
        })
    }

    fn inverse(&self) -> &InverseFactors {
        self.inverse.get_or_init(|| {
            let h = self.base.horizon();
            let d = self.base.rows();
            let per: Vec<(DMatrix<f64>, Option<f64>)> = (h.n_min..h.n_max)
                .into_par_iter()
                .map(|n| {
                    let m = self.base.at(n);
                    let s = singular_values_desc(&m);
                    let ratio = if s[0] > 0.0 { s[d - 1] / s[0] } else { 0.0 };
                    if ratio < DEFAULT_INVERTIBILITY_FLOOR {
                        (DMatrix::zeros(d, d), Some(ratio))
                    } else {
                        let inv = m.try_inverse().unwrap_or_else(|| DMatrix::zeros(d, d));
                        (inv.transpose(), None)
                    }
                })
                .collect();
            let mut singular = Vec::new();
            let mut factors = Vec::with_capacity(per.len());
            for (k, (f, bad)) in per.into_iter().enumerate() {
                if let Some(r) = bad {
                    singular.push((h.n_min + k as i64, r));
                }
                factors.push(f);
            }
            InverseFactors {
                checkpoints: ProductCheckpoints::new(factors, self.stride),
                singular,
            }
        })
    }

    /// `Phi(m, n)` in scaled form.
    pub fn evolution_scaled(&self, m: i64, n: i64) -> Result<ScaledMatrix> {
        let h = self.base.horizon();
        if !h.contains(m) || !h.contains(n) {
            return Err(Error::Horizon(format!(
                "evolution({m}, {n}) requested outside horizon {h}"
            )));
        }
        if let Some(hit) = self.memo.lock().unwrap().get(&(m, n)) {
            return Ok(hit.clone());
        }
        let value = if m >= n {
            let lo = (n - h.n_min) as usize;
            let hi = (m - h.n_min) as usize;
            self.forward().product(lo, hi)
        } else {
            let inv = self.inverse();
            if let Some(&(index, ratio)) = inv.singular.iter().find(|(k, _)| *k >= m && *k < n) {
                return Err(Error::Singular { index, ratio });
            }
            // (M_m^{-1} ... M_{n-1}^{-1})^T = N_{n-1} ... N_m with N = M^{-T}
            let lo = (m - h.n_min) as usize;
            let hi = (n - h.n_min) as usize;
            inv.checkpoints.product(lo, hi).transpose()
        };
        self.memo.lock().unwrap().insert((m, n), value.clone());
        Ok(value)
    }

    /// `Phi(m, n)` as a plain matrix.
    pub fn evolution(&self, m: i64, n: i64) -> Result<DMatrix<f64>> {
        self.evolution_scaled(m, n)?.to_matrix()
    }
}

/// Convenience wrapper around a fresh cache.
pub fn evolution(m: &MatrixSequence, to: i64, from: i64) -> Result<DMatrix<f64>> {
    EvolutionCache::new(m.clone())?.evolution(to, from)
}

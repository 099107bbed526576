//! Small dense helpers shared by the analysis modules.
//!
//! Long products of step matrices leave the range of `f64` quickly (a rate of
//! 2 per step overflows after ~350 steps), so products are carried as
//! [`ScaledMatrix`]: a normalized matrix and a separate power-of-two scale, so
//! that renormalization itself is exact.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `2^exp2 * mat`, with the max-abs entry of `mat` at most 1.
///
/// `exp2` is integer-valued, or `-inf` for the zero matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledMatrix {
    pub exp2: f64,
    pub mat: DMatrix<f64>,
}

impl ScaledMatrix {
    pub fn new(mat: DMatrix<f64>) -> Self {
        Self::with_scale(mat, 0.0)
    }

    pub fn identity(d: usize) -> Self {
        Self {
            exp2: 0.0,
            mat: DMatrix::identity(d, d),
        }
    }

    fn with_scale(mut mat: DMatrix<f64>, exp2: f64) -> Self {
        let peak = mat.amax();
        if peak == 0.0 || !peak.is_finite() {
            return Self {
                exp2: if peak == 0.0 { f64::NEG_INFINITY } else { exp2 },
                mat,
            };
        }
        let shift = peak.log2().floor() as i32 + 1;
        mat *= 2f64.powi(-shift);
        Self {
            exp2: exp2 + shift as f64,
            mat,
        }
    }

    /// Natural log of the scale factor.
    pub fn log_scale(&self) -> f64 {
        self.exp2 * std::f64::consts::LN_2
    }

    /// `self * rhs`
    pub fn mul(&self, rhs: &ScaledMatrix) -> ScaledMatrix {
        Self::with_scale(&self.mat * &rhs.mat, self.exp2 + rhs.exp2)
    }

    pub fn transpose(&self) -> ScaledMatrix {
        ScaledMatrix {
            exp2: self.exp2,
            mat: self.mat.transpose(),
        }
    }

    /// Natural log of the spectral norm.
    pub fn log_norm2(&self) -> f64 {
        if self.exp2 == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let top = spectral_norm(&self.mat);
        if top == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.log_scale() + top.ln()
        }
    }

    /// Materialize; fails when the scale does not fit in `f64`.
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.exp2 == f64::NEG_INFINITY {
            return Ok(DMatrix::zeros(self.mat.nrows(), self.mat.ncols()));
        }
        if self.exp2 > 1000.0 || self.exp2 < -1000.0 {
            return Err(Error::NumericalRange(format!(
                "product magnitude 2^{} is outside f64 range",
                self.exp2
            )));
        }
        Ok(&self.mat * 2f64.powi(self.exp2 as i32))
    }
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm();
    }
    m.singular_values().max()
}

/// Singular values in descending order.
pub fn singular_values_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Ratio `sigma_min / sigma_max`; zero for the zero matrix.
pub fn singular_ratio(m: &DMatrix<f64>) -> f64 {
    let s = singular_values_desc(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
        _ => 0.0,
    }
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let r = singular_ratio(m);
    if r == 0.0 {
        f64::INFINITY
    } else {
        1.0 / r
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

fn small_det(a: &mut [f64], k: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..k {
        let mut piv = col;
        for r in col + 1..k {
            if a[r * k + col].abs() > a[piv * k + col].abs() {
                piv = r;
            }
        }
        let p = a[piv * k + col];
        if p == 0.0 {
            return 0.0;
        }
        if piv != col {
            for c in 0..k {
                a.swap(piv * k + c, col * k + c);
            }
            det = -det;
        }
        det *= p;
        for r in col + 1..k {
            let f = a[r * k + col] / p;
            if f != 0.0 {
                for c in col..k {
                    a[r * k + c] -= f * a[col * k + c];
                }
            }
        }
    }
    det
}

/// The `k`-th compound (exterior power) matrix: entry `(I, J)` is the minor
/// on rows `I` and columns `J`, subsets in lexicographic order.
///
/// `compound(M N, k) == compound(M, k) * compound(N, k)`, and the top singular
/// value of the compound is the product of the `k` largest singular values.
pub fn compound(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    assert!(m.is_square(), "compound of a non-square matrix");
    let n = m.nrows();
    assert!(k >= 1 && k <= n);
    if k == 1 {
        return m.clone();
    }
    let sets = subsets(n, k);
    let mut buf = vec![0.0; k * k];
    DMatrix::from_fn(sets.len(), sets.len(), |i, j| {
        for (a, &r) in sets[i].iter().enumerate() {
            for (b, &c) in sets[j].iter().enumerate() {
                buf[a * k + b] = m[(r, c)];
            }
        }
        small_det(&mut buf, k)
    })
}

/// Parse a row-major flat slice into a matrix.
pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "expected {} entries for a {rows}x{cols} matrix, found {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

//! Matrix sequences over finite integer horizons and the pointwise
//! transformations between them (feedback, shifts, kinematic changes of
//! variables).

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::singular_values_desc;

/// Half-width of the default symmetric horizon `[-2^14, 2^14]`.
pub const DEFAULT_HALF_HORIZON: i64 = 1 << 14;

/// Relative singular-value floor below which a step matrix counts as singular.
pub const DEFAULT_INVERTIBILITY_FLOOR: f64 = 1e-9;

/// Finite stand-in for the integers: `n_min <= n <= n_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Horizon {
    pub n_min: i64,
    pub n_max: i64,
}

impl Horizon {
    pub fn new(n_min: i64, n_max: i64) -> Result<Self> {
        if n_min >= n_max {
            return Err(Error::Horizon(format!(
                "horizon requires n_min < n_max, got [{n_min}, {n_max}]"
            )));
        }
        Ok(Self { n_min, n_max })
    }

    pub fn symmetric(half: i64) -> Result<Self> {
        Self::new(-half, half)
    }

    /// Number of steps `n_max - n_min`.
    pub fn steps(&self) -> usize {
        (self.n_max - self.n_min) as usize
    }

    pub fn contains(&self, n: i64) -> bool {
        self.n_min <= n && n <= self.n_max
    }

    pub fn is_symmetric(&self) -> bool {
        self.n_min == -self.n_max
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<i64> {
        self.n_min..=self.n_max
    }
}

impl Default for Horizon {
    fn default() -> Self {
        Self {
            n_min: -DEFAULT_HALF_HORIZON,
            n_max: DEFAULT_HALF_HORIZON,
        }
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.n_min, self.n_max)
    }
}

/// Which entries a seeded random perturbation touches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mask {
    Full,
    Upper,
    StrictUpper,
}

impl Mask {
    fn admits(self, r: usize, c: usize) -> bool {
        match self {
            Mask::Full => true,
            Mask::Upper => c >= r,
            Mask::StrictUpper => c > r,
        }
    }
}

/// How the entries of a [`MatrixSequence`] are produced.
#[derive(Debug)]
pub enum Generator {
    /// `mats[k]` is the value at index `first + k`.
    Explicit { first: i64, mats: Vec<DMatrix<f64>> },
    Constant(DMatrix<f64>),
    /// `mats[n mod p]`, anchored at index 0.
    Periodic(Vec<DMatrix<f64>>),
    /// Scalar dyadic block sequence, see [`dyadic_value`].
    Dyadic { a: f64, b: f64 },
    /// `base + R_n`, `R_n` entries uniform in `[-bound, bound]` on `mask`,
    /// drawn from a stream keyed by `(seed, n)`.
    RandomBounded {
        base: DMatrix<f64>,
        bound: f64,
        mask: Mask,
        seed: u64,
    },
    /// Diagonal matrix from scalar sequences.
    Diagonal(Vec<MatrixSequence>),
    Sum(MatrixSequence, MatrixSequence),
    /// `[[upper_left, coupling], [0, lower_right]]`
    BlockTriangular {
        upper_left: MatrixSequence,
        coupling: MatrixSequence,
        lower_right: MatrixSequence,
    },
    /// `A_n + B_n U_n`
    Feedback {
        a: MatrixSequence,
        b: MatrixSequence,
        u: MatrixSequence,
    },
    /// `T_{n+1}^{-1} M_n T_n`
    Conjugate { m: MatrixSequence, t: MatrixSequence },
    /// `factor * M_n`
    Scaled { m: MatrixSequence, factor: f64 },
}

/// A deterministic provider of `rows x cols` matrices indexed by integers.
///
/// Cloning is cheap; composite generators share their operands.
#[derive(Clone)]
pub struct MatrixSequence {
    rows: usize,
    cols: usize,
    horizon: Horizon,
    generator: Arc<Generator>,
}

impl fmt::Debug for MatrixSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixSequence")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("horizon", &self.horizon)
            .field("generator", &self.kind())
            .finish()
    }
}

/// Value of the dyadic block sequence at `n`.
///
/// For `|n| >= 1` the value is `e^a` when `|n|` lies in a block
/// `[2^{2m}, 2^{2m+1})` and `e^b` on `[2^{2m+1}, 2^{2m+2})`; the sequence is even
/// in `n`. Index 0 takes `e^a`, keeping the sequence positive.
pub fn dyadic_value(n: i64, a: f64, b: f64) -> f64 {
    let k = n.unsigned_abs();
    if k == 0 {
        return a.exp();
    }
    let exponent = 63 - k.leading_zeros();
    if exponent % 2 == 0 {
        a.exp()
    } else {
        b.exp()
    }
}

fn stream_seed(seed: u64, n: i64) -> u64 {
    // splitmix64 finalizer over the (seed, index) pair
    let mut z = seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} has non-finite entries")))
    }
}

impl MatrixSequence {
    fn build(rows: usize, cols: usize, horizon: Horizon, generator: Generator) -> Self {
        Self {
            rows,
            cols,
            horizon,
            generator: Arc::new(generator),
        }
    }

    pub fn explicit(horizon: Horizon, mats: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::explicit_from(horizon, horizon.n_min, mats)
    }

    /// Explicit list starting at `first`; must cover the horizon.
    pub fn explicit_from(horizon: Horizon, first: i64, mats: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(head) = mats.first() else {
            return Err(Error::InvalidParameter("explicit sequence is empty".into()));
        };
        let (rows, cols) = head.shape();
        for (k, m) in mats.iter().enumerate() {
            if m.shape() != (rows, cols) {
                return Err(Error::Dimension(format!(
                    "explicit entry {k} is {}x{}, expected {rows}x{cols}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            check_finite(m, &format!("explicit entry {k}"))?;
        }
        let last = first + mats.len() as i64 - 1;
        if first > horizon.n_min || last < horizon.n_max {
            return Err(Error::Horizon(format!(
                "explicit entries cover [{first}, {last}] but the horizon is {horizon}"
            )));
        }
        Ok(Self::build(rows, cols, horizon, Generator::Explicit { first, mats }))
    }

    pub fn constant(horizon: Horizon, m: DMatrix<f64>) -> Result<Self> {
        check_finite(&m, "constant matrix")?;
        let (r, c) = m.shape();
        Ok(Self::build(r, c, horizon, Generator::Constant(m)))
    }

    pub fn scalar(horizon: Horizon, value: f64) -> Result<Self> {
        Self::constant(horizon, DMatrix::from_element(1, 1, value))
    }

    pub fn periodic(horizon: Horizon, mats: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(head) = mats.first() else {
            return Err(Error::InvalidParameter("periodic sequence is empty".into()));
        };
        let (rows, cols) = head.shape();
        for (k, m) in mats.iter().enumerate() {
            if m.shape() != (rows, cols) {
                return Err(Error::Dimension(format!(
                    "periodic entry {k} has shape {:?}, expected {rows}x{cols}",
                    m.shape()
                )));
            }
            check_finite(m, &format!("periodic entry {k}"))?;
        }
        Ok(Self::build(rows, cols, horizon, Generator::Periodic(mats)))
    }

    pub fn dyadic(horizon: Horizon, a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter("dyadic endpoints must be finite".into()));
        }
        Ok(Self::build(1, 1, horizon, Generator::Dyadic { a, b }))
    }

    pub fn random_bounded(
        horizon: Horizon,
        base: DMatrix<f64>,
        bound: f64,
        mask: Mask,
        seed: u64,
    ) -> Result<Self> {
        check_finite(&base, "random base")?;
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(Error::InvalidParameter(format!("random bound {bound} must be >= 0")));
        }
        let (r, c) = base.shape();
        Ok(Self::build(
            r,
            c,
            horizon,
            Generator::RandomBounded {
                base,
                bound,
                mask,
                seed,
            },
        ))
    }

    pub fn diagonal(entries: Vec<MatrixSequence>) -> Result<Self> {
        let Some(head) = entries.first() else {
            return Err(Error::InvalidParameter("diagonal needs at least one entry".into()));
        };
        let horizon = head.horizon;
        for (i, e) in entries.iter().enumerate() {
            if e.shape() != (1, 1) {
                return Err(Error::Dimension(format!("diagonal entry {i} is not scalar")));
            }
            if e.horizon != horizon {
                return Err(Error::Horizon(format!("diagonal entry {i} has a different horizon")));
            }
        }
        let d = entries.len();
        Ok(Self::build(d, d, horizon, Generator::Diagonal(entries)))
    }

    pub fn sum(lhs: &MatrixSequence, rhs: &MatrixSequence) -> Result<Self> {
        if lhs.shape() != rhs.shape() {
            return Err(Error::Dimension(format!(
                "cannot add {:?} and {:?} sequences",
                lhs.shape(),
                rhs.shape()
            )));
        }
        same_horizon(lhs, rhs)?;
        Ok(Self::build(
            lhs.rows,
            lhs.cols,
            lhs.horizon,
            Generator::Sum(lhs.clone(), rhs.clone()),
        ))
    }

    pub fn block_triangular(
        upper_left: &MatrixSequence,
        coupling: &MatrixSequence,
        lower_right: &MatrixSequence,
    ) -> Result<Self> {
        let k = upper_left.rows;
        let r = lower_right.rows;
        if !upper_left.is_square() || !lower_right.is_square() || coupling.shape() != (k, r) {
            return Err(Error::Dimension(format!(
                "block triangular needs square diagonal blocks and a {k}x{r} coupling, got {:?}, {:?}, {:?}",
                upper_left.shape(),
                coupling.shape(),
                lower_right.shape()
            )));
        }
        same_horizon(upper_left, coupling)?;
        same_horizon(upper_left, lower_right)?;
        Ok(Self::build(
            k + r,
            k + r,
            upper_left.horizon,
            Generator::BlockTriangular {
                upper_left: upper_left.clone(),
                coupling: coupling.clone(),
                lower_right: lower_right.clone(),
            },
        ))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    /// Same generator, different analysis horizon.
    pub fn with_horizon(&self, horizon: Horizon) -> Result<Self> {
        let (lo, hi) = self.domain();
        if horizon.n_min < lo || horizon.n_max > hi {
            return Err(Error::Horizon(format!(
                "sequence is defined on [{lo}, {hi}], cannot analyse on {horizon}"
            )));
        }
        Ok(Self {
            horizon,
            ..self.clone()
        })
    }

    pub fn kind(&self) -> &'static str {
        match &*self.generator {
            Generator::Explicit { .. } => "explicit",
            Generator::Constant(_) => "constant",
            Generator::Periodic(_) => "periodic",
            Generator::Dyadic { .. } => "dyadic",
            Generator::RandomBounded { .. } => "random_bounded",
            Generator::Diagonal(_) => "diagonal",
            Generator::Sum(..) => "sum",
            Generator::BlockTriangular { .. } => "block_triangular",
            Generator::Feedback { .. } => "closed_loop",
            Generator::Conjugate { .. } => "conjugate",
            Generator::Scaled { .. } => "scaled",
        }
    }

    /// Index range on which [`MatrixSequence::at`] is defined.
    pub fn domain(&self) -> (i64, i64) {
        fn meet(a: (i64, i64), b: (i64, i64)) -> (i64, i64) {
            (a.0.max(b.0), a.1.min(b.1))
        }
        match &*self.generator {
            Generator::Explicit { first, mats } => (*first, first + mats.len() as i64 - 1),
            Generator::Constant(_)
            | Generator::Periodic(_)
            | Generator::Dyadic { .. }
            | Generator::RandomBounded { .. } => (i64::MIN, i64::MAX),
            Generator::Diagonal(es) => es
                .iter()
                .map(|e| e.domain())
                .fold((i64::MIN, i64::MAX), meet),
            Generator::Sum(a, b) => meet(a.domain(), b.domain()),
            Generator::BlockTriangular {
                upper_left,
                coupling,
                lower_right,
            } => meet(meet(upper_left.domain(), coupling.domain()), lower_right.domain()),
            Generator::Feedback { a, b, u } => meet(meet(a.domain(), b.domain()), u.domain()),
            Generator::Conjugate { m, t } => {
                let (tl, th) = t.domain();
                meet(m.domain(), (tl, th.saturating_sub(1)))
            }
            Generator::Scaled { m, .. } => m.domain(),
        }
    }

    /// Value at index `n`. Panics outside [`MatrixSequence::domain`].
    pub fn at(&self, n: i64) -> DMatrix<f64> {
        match &*self.generator {
            Generator::Explicit { first, mats } => {
                let k = n - first;
                assert!(
                    k >= 0 && (k as usize) < mats.len(),
                    "index {n} outside explicit sequence [{first}, {}]",
                    first + mats.len() as i64 - 1
                );
                mats[k as usize].clone()
            }
            Generator::Constant(m) => m.clone(),
            Generator::Periodic(mats) => {
                let p = mats.len() as i64;
                mats[n.rem_euclid(p) as usize].clone()
            }
            Generator::Dyadic { a, b } => DMatrix::from_element(1, 1, dyadic_value(n, *a, *b)),
            Generator::RandomBounded {
                base,
                bound,
                mask,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(*seed, n));
                let mut out = base.clone();
                for r in 0..out.nrows() {
                    for c in 0..out.ncols() {
                        if mask.admits(r, c) && *bound > 0.0 {
                            out[(r, c)] += rng.gen_range(-*bound..=*bound);
                        }
                    }
                }
                out
            }
            Generator::Diagonal(es) => {
                let d = es.len();
                let mut out = DMatrix::zeros(d, d);
                for (i, e) in es.iter().enumerate() {
                    out[(i, i)] = e.at(n)[(0, 0)];
                }
                out
            }
            Generator::Sum(a, b) => a.at(n) + b.at(n),
            Generator::BlockTriangular {
                upper_left,
                coupling,
                lower_right,
            } => {
                let k = upper_left.rows;
                let d = self.rows;
                let mut out = DMatrix::zeros(d, d);
                out.view_mut((0, 0), (k, k)).copy_from(&upper_left.at(n));
                out.view_mut((0, k), (k, d - k)).copy_from(&coupling.at(n));
                out.view_mut((k, k), (d - k, d - k)).copy_from(&lower_right.at(n));
                out
            }
            Generator::Feedback { a, b, u } => a.at(n) + b.at(n) * u.at(n),
            Generator::Conjugate { m, t } => {
                let next = t.at(n + 1);
                let rhs = m.at(n) * t.at(n);
                next.lu()
                    .solve(&rhs)
                    .expect("conjugating transform was validated as invertible")
            }
            Generator::Scaled { m, factor } => m.at(n) * *factor,
        }
    }

    /// All values on the horizon, index `n_min` first.
    pub fn materialize(&self) -> Vec<DMatrix<f64>> {
        let h = self.horizon;
        (h.n_min..=h.n_max).into_par_iter().map(|n| self.at(n)).collect()
    }

    /// Copy into an explicit sequence over the same horizon.
    pub fn to_explicit(&self) -> Self {
        Self::build(
            self.rows,
            self.cols,
            self.horizon,
            Generator::Explicit {
                first: self.horizon.n_min,
                mats: self.materialize(),
            },
        )
    }

    /// `sup_n ||M_n||_2` over the horizon.
    pub fn sup_norm(&self) -> f64 {
        let h = self.horizon;
        (h.n_min..=h.n_max)
            .into_par_iter()
            .map(|n| crate::linalg::spectral_norm(&self.at(n)))
            .reduce(|| 0.0, f64::max)
    }
}

fn same_horizon(a: &MatrixSequence, b: &MatrixSequence) -> Result<()> {
    if a.horizon != b.horizon {
        return Err(Error::Horizon(format!(
            "horizons disagree: {} vs {}",
            a.horizon, b.horizon
        )));
    }
    Ok(())
}

/// Outcome of checking that a square sequence is uniformly invertible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovValidation {
    /// `sup ||M_n||`
    pub norm_bound: f64,
    /// `sup ||M_n^{-1}||`; infinite when some factor is singular.
    pub inverse_norm_bound: f64,
    pub min_singular_value: f64,
    pub ok: bool,
    pub first_failure: Option<i64>,
    pub failures: usize,
}

/// Checks every `M_n` on the horizon for invertibility relative to `floor`.
///
/// A factor fails when `sigma_min(M_n) < floor * ||M_n||`.
pub fn validate_lyapunov(m: &MatrixSequence, floor: f64) -> Result<LyapunovValidation> {
    let h = m.horizon();
    validate_range(m, h.n_min, h.n_max, floor)
}

pub(crate) fn validate_range(
    m: &MatrixSequence,
    lo: i64,
    hi: i64,
    floor: f64,
) -> Result<LyapunovValidation> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "Lyapunov validation needs a square sequence, got {:?}",
            m.shape()
        )));
    }
    let per_index: Vec<(i64, f64, f64, bool)> = (lo..=hi)
        .into_par_iter()
        .map(|n| {
            let s = singular_values_desc(&m.at(n));
            let top = s[0];
            let bottom = *s.last().unwrap();
            let good = top.is_finite() && bottom > 0.0 && bottom >= floor * top;
            (n, top, bottom, good)
        })
        .collect();

    let mut v = LyapunovValidation {
        norm_bound: 0.0,
        inverse_norm_bound: 0.0,
        min_singular_value: f64::INFINITY,
        ok: true,
        first_failure: None,
        failures: 0,
    };
    for (n, top, bottom, good) in per_index {
        v.norm_bound = v.norm_bound.max(top);
        v.min_singular_value = v.min_singular_value.min(bottom);
        if !good {
            v.ok = false;
            v.failures += 1;
            v.first_failure.get_or_insert(n);
        }
    }
    v.inverse_norm_bound = if v.min_singular_value > 0.0 {
        1.0 / v.min_singular_value
    } else {
        f64::INFINITY
    };
    if !v.norm_bound.is_finite() || !v.inverse_norm_bound.is_finite() {
        v.ok = false;
    }
    Ok(v)
}

/// Closed loop `n -> A_n + B_n U_n`.
pub fn apply_feedback(
    a: &MatrixSequence,
    b: &MatrixSequence,
    u: &MatrixSequence,
) -> Result<MatrixSequence> {
    let d = a.rows();
    let s = b.cols();
    if !a.is_square() || b.rows() != d || u.shape() != (s, d) {
        return Err(Error::Dimension(format!(
            "feedback needs A: dxd, B: dxs, U: sxd; got A {:?}, B {:?}, U {:?}",
            a.shape(),
            b.shape(),
            u.shape()
        )));
    }
    same_horizon(a, b)?;
    same_horizon(a, u)?;
    Ok(MatrixSequence::build(
        d,
        d,
        a.horizon(),
        Generator::Feedback {
            a: a.clone(),
            b: b.clone(),
            u: u.clone(),
        },
    ))
}

/// `n -> T_{n+1}^{-1} M_n T_n`, so that `M_n T_n = T_{n+1} N_n`.
///
/// `T` must be defined on `[n_min, n_max + 1]` and pass Lyapunov validation
/// there.
pub fn kinematic_conjugate(m: &MatrixSequence, t: &MatrixSequence) -> Result<MatrixSequence> {
    if !m.is_square() || t.shape() != m.shape() {
        return Err(Error::Dimension(format!(
            "conjugation needs equal square shapes, got M {:?}, T {:?}",
            m.shape(),
            t.shape()
        )));
    }
    let h = m.horizon();
    let (lo, hi) = t.domain();
    if lo > h.n_min || hi < h.n_max + 1 {
        return Err(Error::Horizon(format!(
            "transform is defined on [{lo}, {hi}] but must cover [{}, {}]",
            h.n_min,
            h.n_max + 1
        )));
    }
    let check = validate_range(t, h.n_min, h.n_max + 1, DEFAULT_INVERTIBILITY_FLOOR)?;
    if !check.ok {
        let index = check.first_failure.unwrap_or(h.n_min);
        let s = singular_values_desc(&t.at(index));
        return Err(Error::Singular {
            index,
            ratio: s.last().copied().unwrap_or(0.0) / s[0].max(f64::MIN_POSITIVE),
        });
    }
    Ok(MatrixSequence::build(
        m.rows(),
        m.cols(),
        h,
        Generator::Conjugate {
            m: m.clone(),
            t: t.clone(),
        },
    ))
}

/// `n -> e^{-gamma} M_n`.
pub fn shift(m: &MatrixSequence, gamma: f64) -> Result<MatrixSequence> {
    if !m.is_square() {
        return Err(Error::Dimension("shift needs a square sequence".into()));
    }
    if gamma == 0.0 {
        return Ok(m.clone());
    }
    Ok(MatrixSequence::build(
        m.rows(),
        m.cols(),
        m.horizon(),
        Generator::Scaled {
            m: m.clone(),
            factor: (-gamma).exp(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h() -> Horizon {
        Horizon::new(-20, 20).unwrap()
    }

    #[test]
    fn horizon_rejects_empty_range() {
        assert!(Horizon::new(3, 3).is_err());
        assert!(Horizon::new(4, 3).is_err());
    }

    #[test]
    fn dyadic_block_pattern() {
        let (a, b) = (0.0, 1.0);
        assert_eq!(dyadic_value(1, a, b), 1.0);
        assert_eq!(dyadic_value(2, a, b), 1f64.exp());
        assert_eq!(dyadic_value(3, a, b), 1f64.exp());
        for n in 4..8 {
            assert_eq!(dyadic_value(n, a, b), 1.0);
        }
        for n in 8..16 {
            assert_eq!(dyadic_value(n, a, b), 1f64.exp());
        }
        assert_eq!(dyadic_value(0, a, b), 1.0);
        for n in 0..5000 {
            assert_eq!(dyadic_value(-n, -0.7, 1.3), dyadic_value(n, -0.7, 1.3));
        }
    }

    #[test]
    fn degenerate_dyadic_is_constant_one() {
        for n in -100..100 {
            assert_eq!(dyadic_value(n, 0.0, 0.0), 1.0);
        }
    }

    #[test]
    fn validate_identity_and_singular() {
        let id = MatrixSequence::constant(h(), DMatrix::identity(2, 2)).unwrap();
        let v = validate_lyapunov(&id, 1e-9).unwrap();
        assert!(v.ok);
        assert_eq!(v.norm_bound, 1.0);
        assert_eq!(v.inverse_norm_bound, 1.0);

        let sing = MatrixSequence::constant(h(), DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0])))
            .unwrap();
        let v = validate_lyapunov(&sing, 1e-9).unwrap();
        assert!(!v.ok);
        assert_eq!(v.failures, h().steps() + 1);
        assert_eq!(v.first_failure, Some(-20));
    }

    #[test]
    fn rotations_are_unit_norm() {
        let mats = h()
            .indices()
            .map(|n| {
                let th = n as f64;
                DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()])
            })
            .collect();
        let rot = MatrixSequence::explicit(h(), mats).unwrap();
        let v = validate_lyapunov(&rot, 1e-9).unwrap();
        assert!(v.ok);
        assert!((v.norm_bound - 1.0).abs() < 1e-12);
        assert!((v.inverse_norm_bound - 1.0).abs() < 1e-12);
    }

    #[test]
    fn feedback_scalar_example() {
        let a = MatrixSequence::scalar(h(), 2.0).unwrap();
        let b = MatrixSequence::scalar(h(), 1.0).unwrap();
        let u = MatrixSequence::scalar(h(), -1.0).unwrap();
        let cl = apply_feedback(&a, &b, &u).unwrap();
        for n in h().indices() {
            assert_eq!(cl.at(n)[(0, 0)], 1.0);
        }
        let zero = MatrixSequence::scalar(h(), 0.0).unwrap();
        let same = apply_feedback(&a, &b, &zero).unwrap();
        assert_eq!(same.at(3), a.at(3));
    }

    #[test]
    fn feedback_dimension_mismatch() {
        let a = MatrixSequence::constant(h(), DMatrix::identity(2, 2)).unwrap();
        let b = MatrixSequence::constant(h(), DMatrix::zeros(2, 1)).unwrap();
        let u = MatrixSequence::constant(h(), DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(apply_feedback(&a, &b, &u), Err(Error::Dimension(_))));
    }

    #[test]
    fn conjugate_by_identity_and_constant() {
        let m = MatrixSequence::constant(h(), DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0]))).unwrap();
        let id = MatrixSequence::constant(h(), DMatrix::identity(2, 2)).unwrap();
        let same = kinematic_conjugate(&m, &id).unwrap();
        assert_eq!(same.at(5), m.at(5));

        let p = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.5, 3.0]);
        let t = MatrixSequence::constant(h(), p.clone()).unwrap();
        let conj = kinematic_conjugate(&m, &t).unwrap();
        let expect = p.clone().try_inverse().unwrap() * m.at(0) * &p;
        assert!((conj.at(-7) - expect).amax() < 1e-12);
    }

    #[test]
    fn conjugate_rejects_singular_transform() {
        let m = MatrixSequence::constant(h(), DMatrix::identity(2, 2)).unwrap();
        let t = MatrixSequence::constant(h(), DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0]))).unwrap();
        assert!(matches!(kinematic_conjugate(&m, &t), Err(Error::Singular { .. })));
    }

    #[test]
    fn explicit_transform_must_reach_past_horizon() {
        let m = MatrixSequence::constant(h(), DMatrix::identity(1, 1)).unwrap();
        let t = MatrixSequence::explicit(h(), vec![DMatrix::identity(1, 1); 41]).unwrap();
        assert!(matches!(kinematic_conjugate(&m, &t), Err(Error::Horizon(_))));
    }

    #[test]
    fn shift_examples() {
        let m = MatrixSequence::scalar(h(), 2.0).unwrap();
        let s = shift(&m, 2f64.ln()).unwrap();
        assert!((s.at(0)[(0, 0)] - 1.0).abs() < 1e-15);
        let z = shift(&m, 0.0).unwrap();
        assert_eq!(z.at(4), m.at(4));
    }

    #[test]
    fn random_bounded_is_deterministic_and_bounded() {
        let r = MatrixSequence::random_bounded(h(), DMatrix::identity(3, 3), 0.5, Mask::StrictUpper, 9)
            .unwrap();
        for n in h().indices() {
            let x = r.at(n);
            assert_eq!(x, r.at(n));
            for i in 0..3 {
                assert_eq!(x[(i, i)], 1.0);
                for j in 0..i {
                    assert_eq!(x[(i, j)], 0.0);
                }
                for j in i + 1..3 {
                    assert!(x[(i, j)].abs() <= 0.5);
                }
            }
        }
        let other = MatrixSequence::random_bounded(h(), DMatrix::identity(3, 3), 0.5, Mask::StrictUpper, 10)
            .unwrap();
        assert_ne!(r.at(0), other.at(0));
    }

    #[test]
    fn block_triangular_layout() {
        let a = MatrixSequence::scalar(h(), 2.0).unwrap();
        let c = MatrixSequence::constant(h(), DMatrix::from_row_slice(1, 2, &[5.0, 6.0])).unwrap();
        let b = MatrixSequence::constant(h(), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]))
            .unwrap();
        let d = MatrixSequence::block_triangular(&a, &c, &b).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[2.0, 5.0, 6.0, 0.0, 1.0, 2.0, 0.0, 3.0, 4.0]);
        assert_eq!(d.at(1), expect);
    }
}

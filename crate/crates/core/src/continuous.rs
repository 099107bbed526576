//! Continuous-time systems `x' = W(t) x` and their 1-time discretization.
//!
//! The associated discrete system has step matrices `A_n = Phi_W(n + 1, n)`,
//! so its evolution over integer times is the continuous evolution, and its
//! dichotomy spectra (two-sided and one-sided) are those of `W`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::spectrum::{dichotomy_spectrum, SpectrumEstimate, SpectrumParams};
use crate::system::{Horizon, MatrixSequence};

pub const DEFAULT_SUBSTEPS: usize = 64;
pub const DEFAULT_REFINEMENT_TOLERANCE: f64 = 1e-8;
pub const MAX_SUBSTEPS: usize = 1 << 16;
const KAPPA_SAMPLES: usize = 8;

/// Smooth coefficient functions available by name.
#[derive(Clone, Debug, PartialEq)]
pub enum Builtin {
    /// `W(t) = M`
    Constant { matrix: DMatrix<f64> },
    /// `W(t) = omega * [[0, 1], [-1, 0]]`
    Rotation { omega: f64 },
    /// `W(t) = base + sin(omega t + phase) * amplitude`
    Sinusoidal {
        base: DMatrix<f64>,
        amplitude: DMatrix<f64>,
        omega: f64,
        phase: f64,
    },
}

impl Builtin {
    fn dim(&self) -> usize {
        match self {
            Builtin::Constant { matrix } => matrix.nrows(),
            Builtin::Rotation { .. } => 2,
            Builtin::Sinusoidal { base, .. } => base.nrows(),
        }
    }

    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        match self {
            Builtin::Constant { matrix } => matrix.clone(),
            Builtin::Rotation { omega } => DMatrix::from_row_slice(2, 2, &[0.0, *omega, -omega, 0.0]),
            Builtin::Sinusoidal {
                base,
                amplitude,
                omega,
                phase,
            } => base + amplitude * (omega * t + phase).sin(),
        }
    }

    fn bound(&self) -> f64 {
        match self {
            Builtin::Constant { matrix } => spectral_norm(matrix),
            Builtin::Rotation { omega } => omega.abs(),
            Builtin::Sinusoidal { base, amplitude, .. } => spectral_norm(base) + spectral_norm(amplitude),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Coefficient {
    /// `W(t) = table[k]` on `[first + k, first + k + 1)`; with `cyclic` the
    /// table repeats with period `table.len()`.
    PiecewiseConstant {
        first: i64,
        table: Vec<DMatrix<f64>>,
        cyclic: bool,
    },
    Callable(Builtin),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousSystem {
    dim: usize,
    horizon: Horizon,
    coefficient: Coefficient,
    bound: f64,
}

impl ContinuousSystem {
    pub fn piecewise_constant(horizon: Horizon, first: i64, table: Vec<DMatrix<f64>>, cyclic: bool) -> Result<Self> {
        let Some(head) = table.first() else {
            return Err(Error::InvalidParameter("piecewise-constant table is empty".into()));
        };
        let dim = head.nrows();
        for (k, m) in table.iter().enumerate() {
            if m.shape() != (dim, dim) {
                return Err(Error::Dimension(format!(
                    "table entry {k} is {}x{}, expected {dim}x{dim}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        let last = first + table.len() as i64 - 1;
        if !cyclic && (first > horizon.n_min || last < horizon.n_max) {
            return Err(Error::Horizon(format!(
                "table covers unit intervals [{first}, {last}] but the horizon is {horizon}"
            )));
        }
        let bound = table.iter().map(spectral_norm).fold(0.0, f64::max);
        Self::checked(
            dim,
            horizon,
            Coefficient::PiecewiseConstant { first, table, cyclic },
            bound,
        )
    }

    /// Piecewise-constant `W` equal to `seq_n` on `[n, n + 1)`.
    pub fn from_sequence(seq: &MatrixSequence) -> Result<Self> {
        if !seq.is_square() {
            return Err(Error::Dimension("coefficient sequence must be square".into()));
        }
        let h = seq.horizon();
        Self::piecewise_constant(h, h.n_min, seq.materialize(), false)
    }

    pub fn callable(horizon: Horizon, f: Builtin) -> Result<Self> {
        let dim = f.dim();
        if let Builtin::Sinusoidal { base, amplitude, .. } = &f {
            if !base.is_square() || base.shape() != amplitude.shape() {
                return Err(Error::Dimension("sinusoidal base and amplitude must be equal square shapes".into()));
            }
        }
        if let Builtin::Constant { matrix } = &f {
            if !matrix.is_square() {
                return Err(Error::Dimension("constant coefficient must be square".into()));
            }
        }
        let bound = f.bound();
        Self::checked(dim, horizon, Coefficient::Callable(f), bound)
    }

    /// Block upper-triangular `W = [[X, Z], [0, Y]]` with piecewise-constant
    /// blocks taken from the given sequences.
    pub fn block_triangular(x: &MatrixSequence, z: &MatrixSequence, y: &MatrixSequence) -> Result<Self> {
        let joined = MatrixSequence::block_triangular(x, z, y)?;
        Self::from_sequence(&joined)
    }

    fn checked(dim: usize, horizon: Horizon, coefficient: Coefficient, bound: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("dimension must be >= 1".into()));
        }
        if !bound.is_finite() {
            return Err(Error::InvalidParameter("coefficient bound is not finite".into()));
        }
        Ok(Self {
            dim,
            horizon,
            coefficient,
            bound,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn coefficient(&self) -> &Coefficient {
        &self.coefficient
    }

    /// `sup_t ||W(t)||`
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn is_piecewise_constant(&self) -> bool {
        matches!(self.coefficient, Coefficient::PiecewiseConstant { .. })
    }

    fn unit_value(&self, n: i64) -> Option<&DMatrix<f64>> {
        match &self.coefficient {
            Coefficient::PiecewiseConstant { first, table, cyclic } => {
                let k = n - first;
                if *cyclic {
                    Some(&table[k.rem_euclid(table.len() as i64) as usize])
                } else {
                    Some(&table[k as usize])
                }
            }
            Coefficient::Callable(_) => None,
        }
    }

    /// `W(t)`; piecewise-constant tables are right-continuous.
    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        match &self.coefficient {
            Coefficient::PiecewiseConstant { .. } => self.unit_value(t.floor() as i64).unwrap().clone(),
            Coefficient::Callable(f) => f.eval(t),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Discretization {
    /// Matrix exponential per unit interval; piecewise-constant only.
    Exact,
    /// Classical RK4 on the fundamental matrix; the substep count is doubled
    /// until successive results agree.
    Rk4 { substeps: usize },
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization::Rk4 {
            substeps: DEFAULT_SUBSTEPS,
        }
    }
}

/// Discrete system of unit-time fundamental matrices.
#[derive(Clone, Debug)]
pub struct Discretized {
    pub sequence: MatrixSequence,
    pub method: Discretization,
    /// Largest substep count used (0 for exact exponentials).
    pub substeps_used: usize,
    /// `sup_{|t - s| <= 1} ||Phi_W(t, s)||`, sampled at eighths of each unit
    /// interval.
    pub kappa: f64,
}

/// Natural choice per coefficient kind: exact for tables, RK4 for callables.
pub fn default_method(w: &ContinuousSystem) -> Discretization {
    if w.is_piecewise_constant() {
        Discretization::Exact
    } else {
        Discretization::default()
    }
}

fn rk4_unit(w: &ContinuousSystem, n: i64, substeps: usize) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let d = w.dim;
    let h = 1.0 / substeps as f64;
    let mut phi = DMatrix::identity(d, d);
    let every = (substeps / KAPPA_SAMPLES).max(1);
    let mut path = Vec::with_capacity(KAPPA_SAMPLES);
    let frozen = w.unit_value(n).cloned();
    let at = |t: f64| match &frozen {
        Some(m) => m.clone(),
        None => w.eval(t),
    };
    for s in 0..substeps {
        let t = n as f64 + s as f64 * h;
        let w0 = at(t);
        let wm = at(t + 0.5 * h);
        let w1 = at(t + h);
        let k1 = &w0 * &phi;
        let k2 = &wm * (&phi + &k1 * (0.5 * h));
        let k3 = &wm * (&phi + &k2 * (0.5 * h));
        let k4 = &w1 * (&phi + &k3 * h);
        phi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if (s + 1) % every == 0 || s + 1 == substeps {
            path.push(phi.clone());
        }
    }
    (phi, path)
}

fn kappa_from_path(path: &[DMatrix<f64>]) -> f64 {
    // Phi(t, n), Phi(n, t) and Phi(n + 1, t) for sampled t in the unit interval
    let Some(end) = path.last() else {
        return 1.0;
    };
    let mut k: f64 = 1.0;
    for p in path {
        k = k.max(spectral_norm(p));
        if let Some(inv) = p.clone().try_inverse() {
            k = k.max(spectral_norm(&inv)).max(spectral_norm(&(end * inv)));
        }
    }
    k
}

struct UnitResult {
    step: DMatrix<f64>,
    substeps: usize,
    kappa: f64,
}

fn unit_exact(w: &ContinuousSystem, n: i64) -> UnitResult {
    let m = w.unit_value(n).expect("exact discretization needs a table");
    let eighth = (m / KAPPA_SAMPLES as f64).exp();
    let mut path = vec![eighth.clone()];
    for _ in 1..KAPPA_SAMPLES - 1 {
        path.push(&eighth * path.last().unwrap());
    }
    let step = m.exp();
    path.push(step.clone());
    UnitResult {
        step,
        substeps: 0,
        kappa: kappa_from_path(&path),
    }
}

fn unit_rk4(w: &ContinuousSystem, n: i64, substeps: usize, tol: f64) -> Result<UnitResult> {
    let mut s = substeps;
    let (mut coarse, _) = rk4_unit(w, n, s);
    loop {
        let (fine, path) = rk4_unit(w, n, 2 * s);
        let diff = (&fine - &coarse).amax() / fine.amax().max(1.0);
        if diff <= tol {
            return Ok(UnitResult {
                step: fine,
                substeps: 2 * s,
                kappa: kappa_from_path(&path),
            });
        }
        if 2 * s >= MAX_SUBSTEPS {
            return Err(Error::Convergence {
                t0: n as f64,
                t1: (n + 1) as f64,
                diff,
                substeps: 2 * s,
            });
        }
        s *= 2;
        coarse = fine;
    }
}

/// The associated 1-time discrete system `A_n = Phi_W(n + 1, n)` on the
/// horizon of `w`.
pub fn discretize_one_time(w: &ContinuousSystem, method: Discretization) -> Result<Discretized> {
    if let Discretization::Rk4 { substeps } = method {
        if substeps == 0 {
            return Err(Error::InvalidParameter("substep count must be >= 1".into()));
        }
    }
    if method == Discretization::Exact && !w.is_piecewise_constant() {
        return Err(Error::InvalidParameter(
            "exact exponentials need a piecewise-constant coefficient".into(),
        ));
    }
    let h = w.horizon;
    let units: Vec<i64> = h.indices().collect();
    let results: Vec<UnitResult> = units
        .par_iter()
        .map(|&n| match method {
            Discretization::Exact => Ok(unit_exact(w, n)),
            Discretization::Rk4 { substeps } => unit_rk4(w, n, substeps, DEFAULT_REFINEMENT_TOLERANCE),
        })
        .collect::<Result<_>>()?;
    let substeps_used = results.iter().map(|r| r.substeps).max().unwrap_or(0);
    let kappa = results.iter().map(|r| r.kappa).fold(1.0, f64::max);
    let mats = results.into_iter().map(|r| r.step).collect();
    Ok(Discretized {
        sequence: MatrixSequence::explicit(h, mats)?,
        method,
        substeps_used,
        kappa,
    })
}

/// Spectrum of `W`, read off its 1-time discretization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSpectrum {
    pub estimate: SpectrumEstimate,
    pub discretization: Discretization,
    pub substeps_used: usize,
    pub kappa: f64,
    pub identified_with: String,
}

pub fn continuous_spectrum(
    w: &ContinuousSystem,
    params: SpectrumParams,
    method: Discretization,
) -> Result<ContinuousSpectrum> {
    let disc = discretize_one_time(w, method)?;
    let estimate = dichotomy_spectrum(&disc.sequence, params)?;
    Ok(ContinuousSpectrum {
        estimate,
        discretization: disc.method,
        substeps_used: disc.substeps_used,
        kappa: disc.kappa,
        identified_with: "spectrum of the 1-time discrete system A_n = Phi_W(n+1, n)".into(),
    })
}

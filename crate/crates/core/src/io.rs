//! JSON definition files for discrete and continuous systems.
//!
//! Matrices are flat row-major arrays; their shape comes from `dim` and
//! `input_dim`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::continuous::{Builtin, ContinuousSystem};
use crate::error::{Error, Result};
use crate::linalg::{from_row_major, to_row_major};
use crate::system::{Horizon, Mask, MatrixSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonDef {
    pub min: i64,
    pub max: i64,
}

impl HorizonDef {
    pub fn resolve(&self) -> Result<Horizon> {
        Horizon::new(self.min, self.max)
    }
}

impl From<Horizon> for HorizonDef {
    fn from(h: Horizon) -> Self {
        Self {
            min: h.n_min,
            max: h.n_max,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Explicit,
    Constant,
    Periodic,
    Dyadic,
    RandomBounded,
}

/// On-disk system definition: `M` (and optionally the input matrix `B`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDef {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_dim: Option<usize>,
    pub horizon: HorizonDef,
    pub kind: SystemKind,
    pub params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Input matrices: one constant matrix, or a list aligned with the system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputDef {
    Constant(Vec<f64>),
    List(Vec<Vec<f64>>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplicitParams {
    #[serde(default)]
    first: Option<i64>,
    m: Vec<Vec<f64>>,
    #[serde(default)]
    b: Option<InputDef>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantParams {
    m: Vec<f64>,
    #[serde(default)]
    b: Option<InputDef>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PeriodicParams {
    m: Vec<Vec<f64>>,
    #[serde(default)]
    b: Option<InputDef>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DyadicParams {
    rates: Vec<[f64; 2]>,
    #[serde(default)]
    fill_bound: f64,
    #[serde(default)]
    b: Option<InputDef>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomParams {
    base: Vec<f64>,
    bound: f64,
    #[serde(default = "default_mask")]
    mask: Mask,
    #[serde(default)]
    b: Option<InputDef>,
}

fn default_mask() -> Mask {
    Mask::Full
}

/// A loaded control system `x_{n+1} = M_n x_n (+ B_n u_n)`.
#[derive(Clone, Debug)]
pub struct LoadedSystem {
    pub m: MatrixSequence,
    pub b: Option<MatrixSequence>,
}

fn params<T: DeserializeOwned>(v: &Value, kind: SystemKind) -> Result<T> {
    T::deserialize(v).map_err(|e| Error::Input(format!("params (kind {kind:?}): {e}")))
}

fn matrix(field: &str, rows: usize, cols: usize, data: &[f64]) -> Result<DMatrix<f64>> {
    from_row_major(rows, cols, data).map_err(|e| Error::Input(format!("{field}: {e}")))
}

fn matrix_list(field: &str, rows: usize, cols: usize, data: &[Vec<f64>]) -> Result<Vec<DMatrix<f64>>> {
    if data.is_empty() {
        return Err(Error::Input(format!("{field}: list is empty")));
    }
    data.iter()
        .enumerate()
        .map(|(k, d)| matrix(&format!("{field}[{k}]"), rows, cols, d))
        .collect()
}

impl SystemDef {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Input(format!("system definition: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
    }

    /// Explicit definition listing `M_n` (and `B_n`) for every index of the
    /// horizon.
    pub fn explicit(m: &MatrixSequence, b: Option<&MatrixSequence>) -> Self {
        let h = m.horizon();
        let list = |s: &MatrixSequence| -> Vec<Vec<f64>> { s.materialize().iter().map(to_row_major).collect() };
        let mut p = serde_json::Map::new();
        p.insert("first".into(), h.n_min.into());
        p.insert("m".into(), serde_json::to_value(list(m)).unwrap());
        if let Some(b) = b {
            p.insert("b".into(), serde_json::to_value(InputDef::List(list(b))).unwrap());
        }
        Self {
            dim: m.rows(),
            input_dim: b.map(|b| b.cols()),
            horizon: h.into(),
            kind: SystemKind::Explicit,
            params: Value::Object(p),
            seed: None,
        }
    }

    pub fn horizon(&self) -> Result<Horizon> {
        self.horizon.resolve()
    }

    fn input(&self, h: Horizon, first: i64, b: Option<InputDef>) -> Result<Option<MatrixSequence>> {
        let Some(b) = b else {
            if self.input_dim.is_some() {
                return Err(Error::Input("input_dim is given but params.b is missing".into()));
            }
            return Ok(None);
        };
        let d = self.dim;
        let infer = |len: usize| -> Result<usize> {
            match self.input_dim {
                Some(s) => Ok(s),
                None if len % d == 0 && len > 0 => Ok(len / d),
                None => Err(Error::Input(format!(
                    "params.b: {len} entries is not a multiple of dim {d}"
                ))),
            }
        };
        let seq = match b {
            InputDef::Constant(data) => {
                let s = infer(data.len())?;
                MatrixSequence::constant(h, matrix("params.b", d, s, &data)?)?
            }
            InputDef::List(list) => {
                let s = infer(list.first().map_or(0, |v| v.len()))?;
                let mats = matrix_list("params.b", d, s, &list)?;
                if self.kind == SystemKind::Periodic {
                    MatrixSequence::periodic(h, mats)?
                } else {
                    MatrixSequence::explicit_from(h, first, mats)?
                }
            }
        };
        Ok(Some(seq))
    }

    /// Build the sequences; `seed` overrides the stored seed.
    pub fn load(&self, seed: Option<u64>) -> Result<LoadedSystem> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::Input("dim: must be >= 1".into()));
        }
        if self.input_dim == Some(0) {
            return Err(Error::Input("input_dim: must be >= 1".into()));
        }
        let h = self.horizon().map_err(|e| Error::Input(format!("horizon: {e}")))?;
        let seed = seed.or(self.seed).unwrap_or(0);
        let (m, b) = match self.kind {
            SystemKind::Explicit => {
                let p: ExplicitParams = params(&self.params, self.kind)?;
                let first = p.first.unwrap_or(h.n_min);
                let mats = matrix_list("params.m", d, d, &p.m)?;
                let m = MatrixSequence::explicit_from(h, first, mats)?;
                (m, self.input(h, first, p.b)?)
            }
            SystemKind::Constant => {
                let p: ConstantParams = params(&self.params, self.kind)?;
                let m = MatrixSequence::constant(h, matrix("params.m", d, d, &p.m)?)?;
                (m, self.input(h, h.n_min, p.b)?)
            }
            SystemKind::Periodic => {
                let p: PeriodicParams = params(&self.params, self.kind)?;
                let m = MatrixSequence::periodic(h, matrix_list("params.m", d, d, &p.m)?)?;
                (m, self.input(h, h.n_min, p.b)?)
            }
            SystemKind::Dyadic => {
                let p: DyadicParams = params(&self.params, self.kind)?;
                if p.rates.len() != d {
                    return Err(Error::Input(format!(
                        "params.rates: {} pairs for dim {d}",
                        p.rates.len()
                    )));
                }
                let diag = p
                    .rates
                    .iter()
                    .map(|&[a, b]| MatrixSequence::dyadic(h, a, b))
                    .collect::<Result<Vec<_>>>()?;
                let mut m = MatrixSequence::diagonal(diag)?;
                if p.fill_bound > 0.0 {
                    let fill = MatrixSequence::random_bounded(h, DMatrix::zeros(d, d), p.fill_bound, Mask::StrictUpper, seed)?;
                    m = MatrixSequence::sum(&m, &fill)?;
                }
                (m, self.input(h, h.n_min, p.b)?)
            }
            SystemKind::RandomBounded => {
                let p: RandomParams = params(&self.params, self.kind)?;
                let base = matrix("params.base", d, d, &p.base)?;
                let m = MatrixSequence::random_bounded(h, base, p.bound, p.mask, seed)?;
                (m, self.input(h, h.n_min, p.b)?)
            }
        };
        Ok(LoadedSystem { m, b })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("definitions serialize")
    }
}

/// Row-major lists of a sequence over its horizon, starting at `n_min`.
pub fn matrix_rows(seq: &MatrixSequence) -> Vec<Vec<f64>> {
    seq.materialize().iter().map(to_row_major).collect()
}

/// Inverse of [`matrix_rows`].
pub fn sequence_from_rows(
    field: &str,
    horizon: Horizon,
    rows: usize,
    cols: usize,
    data: &[Vec<f64>],
) -> Result<MatrixSequence> {
    let mats = matrix_list(field, rows, cols, data)?;
    MatrixSequence::explicit(horizon, mats).map_err(|e| Error::Input(format!("{field}: {e}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousKind {
    PiecewiseConstant,
    BuiltinCallable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousDef {
    pub dim: usize,
    pub horizon: HorizonDef,
    pub kind: ContinuousKind,
    pub params: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableParams {
    #[serde(default)]
    first: Option<i64>,
    table: Vec<Vec<f64>>,
    #[serde(default)]
    cyclic: bool,
}

#[derive(Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
enum CallableParams {
    Constant {
        matrix: Vec<f64>,
    },
    Rotation {
        omega: f64,
    },
    Sinusoidal {
        base: Vec<f64>,
        amplitude: Vec<f64>,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl ContinuousDef {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Input(format!("continuous definition: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
    }

    pub fn load(&self) -> Result<ContinuousSystem> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::Input("dim: must be >= 1".into()));
        }
        let h = self.horizon.resolve().map_err(|e| Error::Input(format!("horizon: {e}")))?;
        match self.kind {
            ContinuousKind::PiecewiseConstant => {
                let p = TableParams::deserialize(&self.params)
                    .map_err(|e| Error::Input(format!("params (piecewise_constant): {e}")))?;
                let table = matrix_list("params.table", d, d, &p.table)?;
                ContinuousSystem::piecewise_constant(h, p.first.unwrap_or(h.n_min), table, p.cyclic)
            }
            ContinuousKind::BuiltinCallable => {
                let p = CallableParams::deserialize(&self.params)
                    .map_err(|e| Error::Input(format!("params (builtin_callable): {e}")))?;
                let f = match p {
                    CallableParams::Constant { matrix: m } => Builtin::Constant {
                        matrix: matrix("params.matrix", d, d, &m)?,
                    },
                    CallableParams::Rotation { omega } => {
                        if d != 2 {
                            return Err(Error::Input("rotation needs dim 2".into()));
                        }
                        Builtin::Rotation { omega }
                    }
                    CallableParams::Sinusoidal {
                        base,
                        amplitude,
                        omega,
                        phase,
                    } => Builtin::Sinusoidal {
                        base: matrix("params.base", d, d, &base)?,
                        amplitude: matrix("params.amplitude", d, d, &amplitude)?,
                        omega,
                        phase,
                    },
                };
                ContinuousSystem::callable(h, f)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_with_input() {
        let def = SystemDef::from_json(
            r#"{"dim": 2, "horizon": {"min": -8, "max": 8}, "kind": "constant",
                "params": {"m": [2, 0, 0, 2], "b": [0, 1]}}"#,
        )
        .unwrap();
        let sys = def.load(None).unwrap();
        assert_eq!(sys.m.at(3), DMatrix::from_diagonal_element(2, 2, 2.0));
        assert_eq!(sys.b.unwrap().shape(), (2, 1));
    }

    #[test]
    fn explicit_round_trip() {
        let h = Horizon::new(-2, 3).unwrap();
        let m = MatrixSequence::random_bounded(h, DMatrix::identity(2, 2), 0.5, Mask::Full, 3).unwrap();
        let def = SystemDef::explicit(&m, None);
        let back = SystemDef::from_json(&def.to_json()).unwrap().load(None).unwrap();
        for n in h.indices() {
            assert_eq!(back.m.at(n), m.at(n));
        }
    }

    #[test]
    fn diagnostics_name_the_field() {
        let err = SystemDef::from_json(
            r#"{"dim": 2, "horizon": {"min": 0, "max": 4}, "kind": "constant", "params": {"m": [1, 2, 3]}}"#,
        )
        .unwrap()
        .load(None)
        .unwrap_err();
        assert!(err.to_string().contains("params.m"), "{err}");

        let err = SystemDef::from_json("{\"dim\": 2,\n \"horizon\": }").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn seed_override_changes_random_fill() {
        let def = SystemDef::from_json(
            r#"{"dim": 2, "horizon": {"min": 0, "max": 4}, "kind": "random_bounded", "seed": 1,
                "params": {"base": [1, 0, 0, 1], "bound": 0.5}}"#,
        )
        .unwrap();
        let a = def.load(None).unwrap().m.at(2);
        let b = def.load(Some(2)).unwrap().m.at(2);
        assert_eq!(a, def.load(Some(1)).unwrap().m.at(2));
        assert_ne!(a, b);
    }

    #[test]
    fn continuous_definitions() {
        let w = ContinuousDef::from_json(
            r#"{"dim": 2, "horizon": {"min": -4, "max": 4}, "kind": "builtin_callable",
                "params": {"name": "rotation", "omega": 1.0}}"#,
        )
        .unwrap()
        .load()
        .unwrap();
        assert!(!w.is_piecewise_constant());
        let w = ContinuousDef::from_json(
            r#"{"dim": 1, "horizon": {"min": -4, "max": 4}, "kind": "piecewise_constant",
                "params": {"table": [[0.5], [-0.5]], "first": 0, "cyclic": true}}"#,
        )
        .unwrap()
        .load()
        .unwrap();
        assert_eq!(w.eval(1.5)[(0, 0)], -0.5);
    }
}

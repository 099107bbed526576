use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tvspec_core::io::HorizonDef;
use tvspec_core::spectrum::{Side, SpectrumParams};

use crate::failure::Failure;

pub const SEED_ENV: &str = "TVSPEC_SEED";

/// Fully resolved settings of one invocation, embedded in every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub inputs: BTreeMap<String, String>,
    pub horizon: Option<HorizonDef>,
    pub window: usize,
    pub grid_step: f64,
    pub gap_threshold: f64,
    pub tolerance: f64,
    pub side: Side,
    pub seed: Option<u64>,
    pub outputs: BTreeMap<String, String>,
    pub emit_csv: bool,
    pub threads: Option<usize>,
    #[serde(default)]
    pub options: BTreeMap<String, Value>,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        let p = SpectrumParams::default();
        Self {
            command: command.to_string(),
            inputs: BTreeMap::new(),
            horizon: None,
            window: p.window,
            grid_step: p.grid_step,
            gap_threshold: p.gap_threshold,
            tolerance: tvspec_core::assignment::DEFAULT_TOLERANCE,
            side: p.side,
            seed: None,
            outputs: BTreeMap::new(),
            emit_csv: false,
            threads: None,
            options: BTreeMap::new(),
        }
    }

    pub fn spectrum_params(&self) -> SpectrumParams {
        SpectrumParams {
            window: self.window,
            grid_step: self.grid_step,
            gap_threshold: self.gap_threshold,
            side: self.side,
        }
    }

    pub fn option(&mut self, key: &str, value: impl Into<Value>) {
        self.options.insert(key.to_string(), value.into());
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if self.window == 0 {
            return Err(Failure::Input("--window must be positive".into()));
        }
        for (name, v) in [
            ("--grid-step", self.grid_step),
            ("--gap-threshold", self.gap_threshold),
            ("--tol", self.tolerance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Failure::Input(format!("{name} must be positive, got {v}")));
            }
        }
        if self.threads == Some(0) {
            return Err(Failure::Input("--threads must be positive".into()));
        }
        Ok(())
    }
}

/// `TVSPEC_SEED` wins over the command line, which wins over the file.
pub fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Input(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(flag),
    }
}

pub fn parse_horizon(s: &str) -> Result<HorizonDef, String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected MIN:MAX, got {s:?}"))?;
    let min = lo.trim().parse().map_err(|e| format!("horizon min: {e}"))?;
    let max = hi.trim().parse().map_err(|e| format!("horizon max: {e}"))?;
    if min >= max {
        return Err(format!("horizon needs MIN < MAX, got {min}:{max}"));
    }
    Ok(HorizonDef { min, max })
}

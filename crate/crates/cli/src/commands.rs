use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Deserialize;
use serde_json::json;
use tvspec_core::assignment::{
    equivalence_residual, synthesize_assignment, verify_spectrum, AssignOptions, Completion, SynthesisOptions,
    TargetSpectrum,
};
use tvspec_core::continuous::{default_method, discretize_one_time, Discretization};
use tvspec_core::controllability::check_ucc;
use tvspec_core::io::{matrix_rows, sequence_from_rows, ContinuousDef, HorizonDef, LoadedSystem, SystemDef};
use tvspec_core::spectrum::{lyapunov_spectrum, spectrum_from_table, window_exponents, Interval, NormBounds};
use tvspec_core::system::{apply_feedback, validate_lyapunov, DEFAULT_INVERTIBILITY_FLOOR};

use crate::config::{resolve_seed, RunConfig};
use crate::failure::Failure;
use crate::report::{emit, interval_diff, with_config};
use crate::{MethodArg, SpectrumOpts};

/// Residual bound for `(A + BU) T - T_{+1} C`, relative to the norms.
pub const IDENTITY_TOLERANCE: f64 = 1e-8;

pub fn path_str(p: &Path) -> String {
    p.display().to_string()
}

pub fn apply_spectrum_opts(config: &mut RunConfig, opts: &SpectrumOpts) {
    config.window = opts.window;
    config.grid_step = opts.grid_step;
    config.gap_threshold = opts.gap_threshold;
    config.side = opts.side;
    config.horizon = opts.horizon;
}

fn load(path: &Path, horizon: Option<HorizonDef>, seed: Option<u64>, config: &mut RunConfig) -> Result<(SystemDef, LoadedSystem), Failure> {
    let mut def = SystemDef::read(path)?;
    if let Some(h) = horizon {
        def.horizon = h;
    }
    def.seed = resolve_seed(seed)?.or(def.seed);
    config.seed = def.seed;
    config.horizon = Some(def.horizon);
    config.inputs.insert("system".into(), path_str(path));
    let sys = def.load(None)?;
    Ok((def, sys))
}

fn system_summary(def: &SystemDef, sys: &LoadedSystem) -> serde_json::Value {
    json!({
        "dim": def.dim,
        "input_dim": sys.b.as_ref().map(|b| b.cols()),
        "kind": def.kind,
        "horizon": def.horizon,
    })
}

pub fn spectrum(
    system: &Path,
    opts: &SpectrumOpts,
    verdicts: bool,
    csv: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
    threads: Option<usize>,
) -> Result<(), Failure> {
    let mut config = RunConfig::new("spectrum");
    config.threads = threads;
    apply_spectrum_opts(&mut config, opts);
    config.emit_csv = csv.is_some();
    config.option("verdicts", verdicts);
    if let Some(p) = csv {
        config.outputs.insert("csv".into(), path_str(p));
    }
    if let Some(p) = out {
        config.outputs.insert("report".into(), path_str(p));
    }
    config.validate()?;
    let (def, sys) = load(system, opts.horizon, seed, &mut config)?;
    let params = config.spectrum_params();
    let table = window_exponents(&sys.m, params.window)?;
    let estimate = spectrum_from_table(&table, params, NormBounds::of(&sys.m).ok(), verdicts)?;
    let bounds = table.bounds(params.side)?;
    if let Some(p) = csv {
        let f = File::create(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
        table.write_csv(BufWriter::new(f), params.side)?;
    }
    let report = with_config(
        &config,
        json!({
            "system": system_summary(&def, &sys),
            "estimate": estimate,
            "exponent_bounds": bounds,
        }),
    );
    emit(&report, out)
}

pub fn lyapunov(
    system: &Path,
    samples: Option<usize>,
    horizon: Option<HorizonDef>,
    seed: Option<u64>,
    out: Option<&Path>,
    threads: Option<usize>,
) -> Result<(), Failure> {
    let mut config = RunConfig::new("lyapunov");
    config.threads = threads;
    if let Some(p) = out {
        config.outputs.insert("report".into(), path_str(p));
    }
    config.validate()?;
    let (def, sys) = load(system, horizon, seed, &mut config)?;
    let h = sys.m.horizon();
    let samples = samples.unwrap_or((h.n_max - h.n_min.max(0)) as usize);
    if samples == 0 {
        return Err(Failure::Input("--samples must be positive".into()));
    }
    config.option("samples", samples);
    let exponents = lyapunov_spectrum(&sys.m, samples)?;
    let report = with_config(
        &config,
        json!({
            "system": system_summary(&def, &sys),
            "exponents": exponents,
        }),
    );
    emit(&report, out)
}

fn input_matrix(sys: &LoadedSystem) -> Result<&tvspec_core::MatrixSequence, Failure> {
    sys.b
        .as_ref()
        .ok_or_else(|| Failure::Input("params.b: the system has no input matrix".into()))
}

pub fn ucc(
    system: &Path,
    max_window: usize,
    floor: f64,
    horizon: Option<HorizonDef>,
    seed: Option<u64>,
    out: Option<&Path>,
    threads: Option<usize>,
) -> Result<(), Failure> {
    let mut config = RunConfig::new("ucc");
    config.threads = threads;
    config.option("max_window", max_window);
    config.option("gramian_floor", floor);
    if let Some(p) = out {
        config.outputs.insert("report".into(), path_str(p));
    }
    config.validate()?;
    let (def, sys) = load(system, horizon, seed, &mut config)?;
    let cert = check_ucc(&sys.m, input_matrix(&sys)?, max_window, floor)?;
    let report = with_config(
        &config,
        json!({
            "system": system_summary(&def, &sys),
            "certificate": cert,
        }),
    );
    emit(&report, out)
}

pub struct AssignFlags {
    pub tol: f64,
    pub max_window: usize,
    pub floor: f64,
    pub fill_seed: Option<u64>,
    pub fill_bound: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn assign(
    system: &Path,
    targets: &str,
    opts: &SpectrumOpts,
    flags: AssignFlags,
    seed: Option<u64>,
    out: Option<&Path>,
    threads: Option<usize>,
) -> Result<(), Failure> {
    let mut config = RunConfig::new("assign");
    config.threads = threads;
    apply_spectrum_opts(&mut config, opts);
    config.tolerance = flags.tol;
    config.option("targets", targets);
    config.option("max_window", flags.max_window);
    config.option("gramian_floor", flags.floor);
    if let Some(p) = out {
        config.outputs.insert("assignment".into(), path_str(p));
    }
    config.validate()?;
    let targets: TargetSpectrum = targets.parse()?;
    let completion = match flags.fill_bound {
        b if b == 0.0 => Completion::Zero,
        b if b > 0.0 && b.is_finite() => Completion::Seeded {
            seed: flags.fill_seed.unwrap_or(0),
            bound: b,
        },
        b => return Err(Failure::Input(format!("--fill-bound must be >= 0, got {b}"))),
    };
    let (def, sys) = load(system, opts.horizon, seed, &mut config)?;
    let b = input_matrix(&sys)?;
    let options = AssignOptions {
        k_max: flags.max_window,
        gramian_floor: flags.floor,
        synthesis: SynthesisOptions {
            completion,
            ..SynthesisOptions::default()
        },
        spectrum: config.spectrum_params(),
        tolerance: flags.tol,
    };
    config.option("completion", serde_json::to_value(completion).expect("completion serializes"));
    let res = synthesize_assignment(&sys.m, b, &targets, &options)?;
    let report = with_config(
        &config,
        json!({
            "system": def,
            "targets": targets.intervals,
            "certificate": res.certificate,
            "u": matrix_rows(&res.u),
            "c": matrix_rows(&res.c),
            "t": matrix_rows(&res.t),
            "closed_loop_validation": res.closed_loop_validation,
            "transform_validation": res.transform_validation,
            "equivalence_residual": res.equivalence_residual,
            "retries": res.retries,
            "max_state_cond": res.max_state_cond,
            "verification": res.verification,
            "interval_diff": interval_diff(&res.verification.estimate.intervals, &targets.intervals),
        }),
    );
    emit(&report, out)?;
    if !res.verification.passed {
        let fmt = |v: &[tvspec_core::spectrum::Interval]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ");
        return Err(Failure::Verification(format!(
            "closed-loop estimate {} misses targets {} (tolerance {})",
            fmt(&res.verification.estimate.intervals),
            fmt(&targets.intervals),
            flags.tol
        )));
    }
    Ok(())
}

#[derive(Deserialize)]
struct AssignmentFile {
    config: RunConfig,
    system: SystemDef,
    targets: Vec<Interval>,
    u: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    t: Vec<Vec<f64>>,
}

pub fn verify(path: &Path, tol: Option<f64>, out: Option<&Path>, threads: Option<usize>) -> Result<(), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let file: AssignmentFile =
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let mut config = RunConfig {
        command: "verify".into(),
        threads,
        ..file.config.clone()
    };
    config.inputs.clear();
    config.outputs.clear();
    config.inputs.insert("assignment".into(), path_str(path));
    if let Some(p) = out {
        config.outputs.insert("report".into(), path_str(p));
    }
    if let Some(t) = tol {
        config.tolerance = t;
    }
    config.validate()?;
    let sys = file.system.load(None)?;
    let b = input_matrix(&sys)?;
    let h = sys.m.horizon();
    let d = file.system.dim;
    let s = b.cols();
    let u = sequence_from_rows("u", h, s, d, &file.u)?;
    let c = sequence_from_rows("c", h, d, d, &file.c)?;
    let t = sequence_from_rows("t", h, d, d, &file.t)?;
    let targets = TargetSpectrum::new(file.targets)?;
    let closed = apply_feedback(&sys.m, b, &u)?.to_explicit();
    let validation = validate_lyapunov(&closed, DEFAULT_INVERTIBILITY_FLOOR)?;
    let residual = equivalence_residual(&sys.m, b, &u, &c, &t)?;
    let estimate = tvspec_core::spectrum::dichotomy_spectrum(&closed, config.spectrum_params())?;
    let verification = verify_spectrum(estimate, &targets, config.tolerance);
    let mut reasons = Vec::new();
    if !verification.passed {
        reasons.push(match verification.max_endpoint_error {
            Some(e) => format!("spectrum endpoint error {e:e} exceeds {:e}", config.tolerance),
            None => format!(
                "estimate has {} intervals, targets {}",
                verification.estimate.intervals.len(),
                targets.len()
            ),
        });
    }
    if residual > IDENTITY_TOLERANCE {
        reasons.push(format!("equivalence residual {residual:e} exceeds {IDENTITY_TOLERANCE:e}"));
    }
    if !validation.ok {
        reasons.push("closed loop is not a Lyapunov sequence".into());
    }
    let report = with_config(
        &config,
        json!({
            "passed": reasons.is_empty(),
            "failures": reasons,
            "verification": verification,
            "interval_diff": interval_diff(&verification.estimate.intervals, &targets.intervals),
            "equivalence_residual": residual,
            "residual_tolerance": IDENTITY_TOLERANCE,
            "closed_loop_validation": validation,
        }),
    );
    emit(&report, out)?;
    if reasons.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(reasons.join("; ")))
    }
}

pub fn discretize(
    path: &Path,
    out: &Path,
    method: MethodArg,
    substeps: usize,
    threads: Option<usize>,
) -> Result<(), Failure> {
    let mut config = RunConfig::new("discretize");
    config.threads = threads;
    config.inputs.insert("continuous".into(), path_str(path));
    config.outputs.insert("system".into(), path_str(out));
    config.validate()?;
    let def = ContinuousDef::read(path)?;
    config.horizon = Some(def.horizon);
    let w = def.load()?;
    let method = match method {
        MethodArg::Auto => match default_method(&w) {
            Discretization::Rk4 { .. } => Discretization::Rk4 { substeps },
            exact => exact,
        },
        MethodArg::Exact => Discretization::Exact,
        MethodArg::Rk4 => Discretization::Rk4 { substeps },
    };
    config.option("method", serde_json::to_value(method).expect("method serializes"));
    let disc = discretize_one_time(&w, method)?;
    let sys = SystemDef::explicit(&disc.sequence, None);
    std::fs::write(out, sys.to_json() + "\n").map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
    let report = with_config(
        &config,
        json!({
            "method": disc.method,
            "substeps_used": disc.substeps_used,
            "kappa": disc.kappa,
            "coefficient_bound": w.bound(),
        }),
    );
    emit(&report, None)
}

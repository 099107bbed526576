//! Spectrum assignment by bounded linear feedback.
//!
//! The pipeline builds dyadic diagonal target sequences, chooses feedback so
//! that the closed loop is kinematically equivalent to an upper-triangular
//! system carrying those diagonals, and re-estimates the closed-loop
//! dichotomy spectrum.
//!
//! Equivalence is realized window by window: on each window `[k0, k0 + K)`
//! the closed-loop transition is forced to equal the product of the target
//! triangular factors, so the transform is the identity at window boundaries
//! and equals `L_j P_j^{-1}` inside (state map over target prefix product).

use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllability::{check_ucc, reach_maps, UccCertificate, DEFAULT_GRAMIAN_FLOOR, DEFAULT_MAX_WINDOW};
use crate::error::{Error, Result};
use crate::linalg::{condition_number, spectral_norm};
use crate::spectrum::{dichotomy_spectrum, endpoint_distance, Interval, SpectrumEstimate, SpectrumParams};
use crate::system::{
    apply_feedback, dyadic_value, validate_lyapunov, Horizon, LyapunovValidation, Mask, MatrixSequence,
    DEFAULT_INVERTIBILITY_FLOOR,
};

/// Largest acceptable condition number of an in-window state map.
pub const DEFAULT_STATE_MAP_COND: f64 = 1e8;
pub const DEFAULT_MAX_RETRIES: usize = 4;
pub const DEFAULT_TOLERANCE: f64 = 0.05;

/// Disjoint closed target intervals `[a_1, b_1] < ... < [a_l, b_l]`, `l <= d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpectrum {
    pub intervals: Vec<Interval>,
}

impl TargetSpectrum {
    pub fn new(mut intervals: Vec<Interval>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidParameter("at least one target interval is required".into()));
        }
        for i in &intervals {
            if !(i.lo.is_finite() && i.hi.is_finite()) || i.lo > i.hi {
                return Err(Error::InvalidParameter(format!("invalid target interval {i}")));
            }
        }
        intervals.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        for w in intervals.windows(2) {
            if w[1].lo <= w[0].hi {
                return Err(Error::InvalidParameter(format!(
                    "target intervals {} and {} are not disjoint",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { intervals })
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn check_dimension(&self, d: usize) -> Result<()> {
        if self.len() > d {
            return Err(Error::InvalidParameter(format!(
                "{} target intervals exceed the state dimension {d}",
                self.len()
            )));
        }
        Ok(())
    }
}

impl FromStr for TargetSpectrum {
    type Err = Error;

    /// Parses `"[-1,-0.5],[0,0]"`.
    fn from_str(s: &str) -> Result<Self> {
        let wrapped = format!("[{}]", s.trim());
        let pairs: Vec<[f64; 2]> = serde_json::from_str(&wrapped)
            .map_err(|e| Error::Input(format!("cannot parse targets '{s}': {e}")))?;
        Self::new(pairs.into_iter().map(Interval::from).collect())
    }
}

/// Dyadic diagonal sequences `p^1 .. p^d`; row `i` uses endpoints `rows[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalTargets {
    pub horizon: Horizon,
    /// `(a_i, b_i)` per diagonal entry; rows past the target count repeat row 0.
    pub rows: Vec<(f64, f64)>,
}

impl DiagonalTargets {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn value(&self, i: usize, n: i64) -> f64 {
        let (a, b) = self.rows[i];
        dyadic_value(n, a, b)
    }

    pub fn diagonal(&self, n: i64) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |r, c| if r == c { self.value(r, n) } else { 0.0 })
    }

    pub fn sequences(&self) -> Result<Vec<MatrixSequence>> {
        self.rows
            .iter()
            .map(|&(a, b)| MatrixSequence::dyadic(self.horizon, a, b))
            .collect()
    }
}

/// Dyadic block sequences for each target interval, symmetric in time;
/// rows `l+1 .. d` copy the first one.
pub fn build_diagonal_sequences(targets: &TargetSpectrum, horizon: Horizon, dim: usize) -> Result<DiagonalTargets> {
    if !horizon.is_symmetric() {
        return Err(Error::Horizon(format!(
            "dyadic targets need a horizon symmetric about 0, got {horizon}"
        )));
    }
    targets.check_dimension(dim)?;
    let first = (targets.intervals[0].lo, targets.intervals[0].hi);
    let rows = (0..dim)
        .map(|i| {
            targets
                .intervals
                .get(i)
                .map_or(first, |iv| (iv.lo, iv.hi))
        })
        .collect();
    Ok(DiagonalTargets { horizon, rows })
}

/// Strictly upper entries of the triangular target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Completion {
    #[default]
    Zero,
    /// Uniform in `[-bound, bound]`, keyed by `(seed, n)`.
    Seeded { seed: u64, bound: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    pub completion: Completion,
    pub max_state_cond: f64,
    pub max_retries: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            completion: Completion::Zero,
            max_state_cond: DEFAULT_STATE_MAP_COND,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

/// Open-loop gains and state maps realizing one window transition.
#[derive(Clone, Debug)]
pub struct WindowSynthesis {
    pub k0: i64,
    /// `u_j = F_j xi`
    pub gains: Vec<DMatrix<f64>>,
    /// `x_j = L_j xi`, `L_0 = I`, `L_K = D`; length `K + 1`.
    pub state_maps: Vec<DMatrix<f64>>,
    /// `U_j = F_j L_j^{-1}`
    pub feedback: Vec<DMatrix<f64>>,
    pub max_state_cond: f64,
}

/// Feedback on `[k0, k0 + K)` whose closed-loop transition equals `target`.
pub fn assign_window_transition(
    a: &MatrixSequence,
    b: &MatrixSequence,
    k0: i64,
    window: usize,
    target: &DMatrix<f64>,
) -> Result<WindowSynthesis> {
    assign_window_with(a, b, k0, window, target, DEFAULT_STATE_MAP_COND)
}

fn assign_window_with(
    a: &MatrixSequence,
    b: &MatrixSequence,
    k0: i64,
    window: usize,
    target: &DMatrix<f64>,
    max_cond: f64,
) -> Result<WindowSynthesis> {
    let d = a.rows();
    let h = a.horizon();
    if !a.is_square() || b.rows() != d || target.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "window assignment needs A: dxd, B: dxs, D: dxd; got {:?}, {:?}, {:?}",
            a.shape(),
            b.shape(),
            target.shape()
        )));
    }
    if window == 0 || k0 < h.n_min || k0 + window as i64 > h.n_max {
        return Err(Error::Horizon(format!(
            "window [{k0}, {}) is not inside {h}",
            k0 + window as i64
        )));
    }
    let end = k0 + window as i64;
    let maps = reach_maps(a, k0, window);
    let inputs: Vec<DMatrix<f64>> = (0..window).map(|i| b.at(k0 + i as i64)).collect();
    let mut gram = DMatrix::zeros(d, d);
    for (g, bj) in maps.iter().zip(&inputs) {
        let gb = g * bj;
        gram += &gb * gb.transpose();
    }
    let gram = (&gram + gram.transpose()) * 0.5;
    let min_eig = gram.clone().symmetric_eigenvalues().min();
    let chol = match gram.cholesky() {
        Some(c) if min_eig > 0.0 => c,
        _ => return Err(Error::SingularGramian { k0, min_eig }),
    };
    let drift = &maps[0] * a.at(k0);
    let steer = chol.solve(&(target - drift));

    let gains: Vec<DMatrix<f64>> = maps
        .iter()
        .zip(&inputs)
        .map(|(g, bj)| bj.transpose() * g.transpose() * &steer)
        .collect();
    let mut state_maps = Vec::with_capacity(window + 1);
    state_maps.push(DMatrix::identity(d, d));
    for (i, (f, bj)) in gains.iter().zip(&inputs).enumerate() {
        let next = a.at(k0 + i as i64) * &state_maps[i] + bj * f;
        state_maps.push(next);
    }

    let mut feedback = Vec::with_capacity(window);
    let mut worst = 1.0f64;
    for (i, f) in gains.iter().enumerate() {
        let l = &state_maps[i];
        let cond = condition_number(l);
        worst = worst.max(cond);
        if !(cond <= max_cond) {
            return Err(Error::Synthesis {
                k0,
                end,
                reason: format!("state map at step {} has condition number {cond:.3e}", k0 + i as i64),
            });
        }
        let inv = l.clone().try_inverse().ok_or_else(|| Error::Synthesis {
            k0,
            end,
            reason: format!("state map at step {} is singular", k0 + i as i64),
        })?;
        feedback.push(f * inv);
    }
    Ok(WindowSynthesis {
        k0,
        gains,
        state_maps,
        feedback,
        max_state_cond: worst,
    })
}

/// Feedback, triangular target and transform with
/// `(A_n + B_n U_n) T_n = T_{n+1} C_n`.
#[derive(Clone, Debug)]
pub struct Triangularization {
    pub u: MatrixSequence,
    pub c: MatrixSequence,
    pub t: MatrixSequence,
    pub windows: usize,
    pub retries: usize,
    pub max_state_cond: f64,
}

fn completion_at(completion: Completion, d: usize, n: i64, horizon: Horizon) -> DMatrix<f64> {
    match completion {
        Completion::Zero => DMatrix::zeros(d, d),
        Completion::Seeded { seed, bound } => {
            MatrixSequence::random_bounded(horizon, DMatrix::zeros(d, d), bound, Mask::StrictUpper, seed)
                .map(|s| s.at(n))
                .unwrap_or_else(|_| DMatrix::zeros(d, d))
        }
    }
}

fn retry_seed(k0: i64, attempt: usize) -> u64 {
    (k0 as u64).wrapping_mul(0x2545_F491_4F6C_DD1D) ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct WindowOutcome {
    u: Vec<DMatrix<f64>>,
    c: Vec<DMatrix<f64>>,
    t: Vec<DMatrix<f64>>,
    retries: usize,
    cond: f64,
}

/// Window-by-window synthesis over the horizon.
///
/// Windows have the certificate's length `K`; the remainder of the horizon is
/// folded into the last window. When an in-window state map is singular or
/// too ill-conditioned the window is retried with a different seeded
/// strictly-upper completion of its triangular factors (diagonals unchanged).
pub fn triangularize_with_feedback(
    a: &MatrixSequence,
    b: &MatrixSequence,
    diag: &DiagonalTargets,
    cert: &UccCertificate,
    opts: &SynthesisOptions,
) -> Result<Triangularization> {
    if !cert.ok {
        return Err(Error::NotControllable { k_max: cert.window });
    }
    let d = a.rows();
    let s = b.cols();
    let h = a.horizon();
    if diag.dim() != d || diag.horizon != h {
        return Err(Error::Dimension(format!(
            "diagonal targets ({} rows on {}) do not match system ({d} states on {h})",
            diag.dim(),
            diag.horizon
        )));
    }
    let k = cert.window;
    let count = h.steps() / k;
    if count == 0 {
        return Err(Error::Horizon(format!("horizon {h} is shorter than window {k}")));
    }
    let starts: Vec<(i64, usize)> = (0..count)
        .map(|w| {
            let k0 = h.n_min + (w * k) as i64;
            let len = if w + 1 == count { (h.n_max - k0) as usize } else { k };
            (k0, len)
        })
        .collect();

    let outcomes: Vec<WindowOutcome> = starts
        .par_iter()
        .map(|&(k0, len)| synthesize_window(a, b, diag, opts, k0, len, h))
        .collect::<Result<_>>()?;

    let mut u = Vec::with_capacity(h.steps() + 1);
    let mut c = Vec::with_capacity(h.steps() + 1);
    let mut t = Vec::with_capacity(h.steps() + 1);
    let mut retries = 0;
    let mut cond = 1.0f64;
    for o in outcomes {
        u.extend(o.u);
        c.extend(o.c);
        t.extend(o.t);
        retries += o.retries;
        cond = cond.max(o.cond);
    }
    // the last index closes the horizon; no step leaves it
    u.push(DMatrix::zeros(s, d));
    c.push(diag.diagonal(h.n_max) + completion_at(opts.completion, d, h.n_max, h));
    t.push(DMatrix::identity(d, d));

    Ok(Triangularization {
        u: MatrixSequence::explicit(h, u)?,
        c: MatrixSequence::explicit(h, c)?,
        t: MatrixSequence::explicit(h, t)?,
        windows: count,
        retries,
        max_state_cond: cond,
    })
}

fn synthesize_window(
    a: &MatrixSequence,
    b: &MatrixSequence,
    diag: &DiagonalTargets,
    opts: &SynthesisOptions,
    k0: i64,
    len: usize,
    h: Horizon,
) -> Result<WindowOutcome> {
    let d = a.rows();
    let base: Vec<DMatrix<f64>> = (0..len)
        .map(|i| {
            let n = k0 + i as i64;
            diag.diagonal(n) + completion_at(opts.completion, d, n, h)
        })
        .collect();
    let mut last_err = None;
    for attempt in 0..=opts.max_retries {
        let factors: Vec<DMatrix<f64>> = if attempt == 0 {
            base.clone()
        } else {
            let extra = Completion::Seeded {
                seed: retry_seed(k0, attempt),
                bound: 0.5 * attempt as f64,
            };
            base.iter()
                .enumerate()
                .map(|(i, f)| f + completion_at(extra, d, k0 + i as i64, h))
                .collect()
        };
        // prefix products P_i = C_{k0+i-1} ... C_{k0}
        let mut prefixes = Vec::with_capacity(len + 1);
        prefixes.push(DMatrix::identity(d, d));
        for f in &factors {
            let next = f * prefixes.last().unwrap();
            prefixes.push(next);
        }
        match assign_window_with(a, b, k0, len, &prefixes[len], opts.max_state_cond) {
            Ok(w) => {
                let t = w
                    .state_maps
                    .iter()
                    .take(len)
                    .zip(&prefixes)
                    .map(|(l, p)| {
                        let pinv = p
                            .clone()
                            .solve_upper_triangular(&DMatrix::identity(d, d))
                            .expect("triangular factors have positive diagonals");
                        l * pinv
                    })
                    .collect();
                return Ok(WindowOutcome {
                    u: w.feedback,
                    c: factors,
                    t,
                    retries: attempt,
                    cond: w.max_state_cond,
                });
            }
            Err(e @ Error::Synthesis { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(match last_err {
        Some(Error::Synthesis { k0, end, reason }) => Error::Synthesis {
            k0,
            end,
            reason: format!("{reason}; {} retries exhausted", opts.max_retries),
        },
        Some(e) => e,
        None => unreachable!("loop runs at least once"),
    })
}

/// `max_n ||(A_n + B_n U_n) T_n - T_{n+1} C_n||`, relative to the largest norm
/// of the two products, over `[n_min, n_max - 1]`.
pub fn equivalence_residual(
    a: &MatrixSequence,
    b: &MatrixSequence,
    u: &MatrixSequence,
    c: &MatrixSequence,
    t: &MatrixSequence,
) -> Result<f64> {
    let closed = apply_feedback(a, b, u)?;
    let h = a.horizon();
    Ok((h.n_min..h.n_max)
        .into_par_iter()
        .map(|n| {
            let lhs = closed.at(n) * t.at(n);
            let rhs = t.at(n + 1) * c.at(n);
            let scale = spectral_norm(&lhs).max(spectral_norm(&rhs)).max(1.0);
            spectral_norm(&(lhs - rhs)) / scale
        })
        .reduce(|| 0.0, f64::max))
}

/// Comparison of an estimated spectrum with the targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub estimate: SpectrumEstimate,
    pub targets: Vec<Interval>,
    pub max_endpoint_error: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn verify_spectrum(estimate: SpectrumEstimate, targets: &TargetSpectrum, tolerance: f64) -> VerificationReport {
    let dist = endpoint_distance(&estimate.intervals, &targets.intervals);
    VerificationReport {
        passed: dist <= tolerance,
        max_endpoint_error: dist.is_finite().then_some(dist),
        estimate,
        targets: targets.intervals.clone(),
        tolerance,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignOptions {
    pub k_max: usize,
    pub gramian_floor: f64,
    pub synthesis: SynthesisOptions,
    pub spectrum: SpectrumParams,
    pub tolerance: f64,
}

impl Default for AssignOptions {
    fn default() -> Self {
        Self {
            k_max: DEFAULT_MAX_WINDOW,
            gramian_floor: DEFAULT_GRAMIAN_FLOOR,
            synthesis: SynthesisOptions::default(),
            spectrum: SpectrumParams::default(),
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

/// Everything produced by a spectrum assignment run.
#[derive(Clone, Debug)]
pub struct AssignmentResult {
    pub certificate: UccCertificate,
    pub targets: TargetSpectrum,
    pub diagonal: DiagonalTargets,
    pub u: MatrixSequence,
    pub c: MatrixSequence,
    pub t: MatrixSequence,
    pub closed_loop_validation: LyapunovValidation,
    pub transform_validation: LyapunovValidation,
    pub equivalence_residual: f64,
    pub retries: usize,
    pub max_state_cond: f64,
    pub verification: VerificationReport,
}

impl AssignmentResult {
    pub fn closed_loop(&self, a: &MatrixSequence, b: &MatrixSequence) -> Result<MatrixSequence> {
        apply_feedback(a, b, &self.u)
    }
}

/// Runs the full pipeline and returns the result whether or not the
/// closed-loop estimate matches the targets; see [`assign_spectrum`].
pub fn synthesize_assignment(
    a: &MatrixSequence,
    b: &MatrixSequence,
    targets: &TargetSpectrum,
    opts: &AssignOptions,
) -> Result<AssignmentResult> {
    if !a.is_square() || b.rows() != a.rows() {
        return Err(Error::Dimension(format!(
            "control pair needs A: dxd and B: dxs, got A {:?}, B {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let d = a.rows();
    targets.check_dimension(d)?;
    let certificate = check_ucc(a, b, opts.k_max, opts.gramian_floor)?;
    if !certificate.ok {
        return Err(Error::NotControllable { k_max: opts.k_max });
    }
    let diagonal = build_diagonal_sequences(targets, a.horizon(), d)?;
    let tri = triangularize_with_feedback(a, b, &diagonal, &certificate, &opts.synthesis)?;
    let closed = apply_feedback(a, b, &tri.u)?;
    let closed_loop_validation = validate_lyapunov(&closed, DEFAULT_INVERTIBILITY_FLOOR)?;
    if !closed_loop_validation.ok {
        return Err(Error::ClosedLoopNotLyapunov {
            index: closed_loop_validation.first_failure,
        });
    }
    let transform_validation = validate_lyapunov(&tri.t, DEFAULT_INVERTIBILITY_FLOOR)?;
    let residual = equivalence_residual(a, b, &tri.u, &tri.c, &tri.t)?;
    let estimate = dichotomy_spectrum(&closed.to_explicit(), opts.spectrum)?;
    let verification = verify_spectrum(estimate, targets, opts.tolerance);
    Ok(AssignmentResult {
        certificate,
        targets: targets.clone(),
        diagonal,
        u: tri.u,
        c: tri.c,
        t: tri.t,
        closed_loop_validation,
        transform_validation,
        equivalence_residual: residual,
        retries: tri.retries,
        max_state_cond: tri.max_state_cond,
        verification,
    })
}

/// Feedback whose closed-loop dichotomy spectrum is the union of `targets`.
///
/// Fails when the pair is not uniformly completely controllable, synthesis
/// fails, or the closed-loop estimate misses the targets by more than the
/// tolerance.
pub fn assign_spectrum(
    a: &MatrixSequence,
    b: &MatrixSequence,
    targets: &TargetSpectrum,
    opts: &AssignOptions,
) -> Result<AssignmentResult> {
    let result = synthesize_assignment(a, b, targets, opts)?;
    if !result.verification.passed {
        return Err(Error::Verification {
            estimated: result.verification.estimate.intervals.iter().map(|&i| i.into()).collect(),
            targets: targets.intervals.iter().map(|&i| i.into()).collect(),
        });
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllability::check_ucc;

    fn h() -> Horizon {
        Horizon::symmetric(64).unwrap()
    }

    #[test]
    fn target_parsing_and_validation() {
        let t: TargetSpectrum = "[-1,-0.5],[0,0]".parse().unwrap();
        assert_eq!(t.intervals, vec![Interval::new(-1.0, -0.5), Interval::point(0.0)]);
        assert!("[0,1],[0.5,2]".parse::<TargetSpectrum>().is_err());
        assert!("[1,0]".parse::<TargetSpectrum>().is_err());
        assert!("garbage".parse::<TargetSpectrum>().is_err());
        assert!(t.check_dimension(1).is_err());
    }

    #[test]
    fn diagonal_rows_and_symmetry() {
        let t: TargetSpectrum = "[0,1]".parse().unwrap();
        let dg = build_diagonal_sequences(&t, h(), 3).unwrap();
        assert_eq!(dg.rows, vec![(0.0, 1.0); 3]);
        assert_eq!(dg.value(0, 1), 1.0);
        assert_eq!(dg.value(0, 2), 1f64.exp());
        assert_eq!(dg.value(0, 3), 1f64.exp());
        for n in 4..8 {
            assert_eq!(dg.value(0, n), 1.0);
        }
        assert_eq!(dg.value(2, -5), dg.value(2, 5));

        let zero: TargetSpectrum = "[0,0]".parse().unwrap();
        let dz = build_diagonal_sequences(&zero, h(), 1).unwrap();
        assert!(h().indices().all(|n| dz.value(0, n) == 1.0));

        let lopsided = Horizon::new(-3, 10).unwrap();
        assert!(matches!(build_diagonal_sequences(&t, lopsided, 1), Err(Error::Horizon(_))));
    }

    #[test]
    fn fully_actuated_single_step() {
        let a = MatrixSequence::constant(h(), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.5, 3.0])).unwrap();
        let b = MatrixSequence::constant(h(), DMatrix::identity(2, 2)).unwrap();
        let target = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.0, 0.7]);
        let w = assign_window_transition(&a, &b, 0, 1, &target).unwrap();
        assert!((&w.feedback[0] - (&target - a.at(0))).amax() < 1e-13);
        assert!((&w.state_maps[1] - &target).amax() < 1e-13);
    }

    #[test]
    fn drift_target_needs_no_feedback() {
        let a = MatrixSequence::constant(h(), DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).unwrap();
        let b = MatrixSequence::constant(h(), DMatrix::from_row_slice(2, 1, &[0.0, 1.0])).unwrap();
        let drift = a.at(0) * a.at(0);
        let w = assign_window_transition(&a, &b, 4, 2, &drift).unwrap();
        assert!(w.gains.iter().all(|f| f.amax() < 1e-14));
        assert!(w.feedback.iter().all(|u| u.amax() < 1e-14));
    }

    #[test]
    fn single_input_window_hits_target() {
        let a = MatrixSequence::constant(h(), DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).unwrap();
        let b = MatrixSequence::constant(h(), DMatrix::from_row_slice(2, 1, &[0.0, 1.0])).unwrap();
        let e = 1f64.exp();
        let target = DMatrix::from_diagonal_element(2, 2, e);
        let w = assign_window_transition(&a, &b, -3, 2, &target).unwrap();
        let cl = apply_feedback(&a, &b, &MatrixSequence::explicit_from(h(), -64, {
            let mut u = vec![DMatrix::zeros(1, 2); 129];
            u[61] = w.feedback[0].clone();
            u[62] = w.feedback[1].clone();
            u
        }).unwrap())
        .unwrap();
        let transition = cl.at(-2) * cl.at(-3);
        assert!((transition - target).amax() < 1e-12);
    }

    #[test]
    fn fully_actuated_triangularization() {
        let a = MatrixSequence::constant(h(), DMatrix::from_row_slice(2, 2, &[1.0, 0.4, -0.2, 1.5])).unwrap();
        let b = MatrixSequence::constant(h(), DMatrix::identity(2, 2)).unwrap();
        let cert = check_ucc(&a, &b, 4, DEFAULT_GRAMIAN_FLOOR).unwrap();
        assert_eq!(cert.window, 1);
        let t: TargetSpectrum = "[0,0],[1,1]".parse().unwrap();
        let dg = build_diagonal_sequences(&t, h(), 2).unwrap();
        let tri = triangularize_with_feedback(&a, &b, &dg, &cert, &SynthesisOptions::default()).unwrap();
        let closed = apply_feedback(&a, &b, &tri.u).unwrap();
        for n in -64..64 {
            assert!((closed.at(n) - tri.c.at(n)).amax() < 1e-12);
            assert!((&tri.u.at(n) - (tri.c.at(n) - a.at(n))).amax() < 1e-12);
        }
        assert_eq!(tri.c.at(7)[(0, 0)], 1.0);
        assert_eq!(tri.c.at(7)[(1, 1)], 1f64.exp());
    }

    #[test]
    fn identity_pair_with_scalar_target() {
        let id = MatrixSequence::constant(h(), DMatrix::identity(2, 2)).unwrap();
        let cert = check_ucc(&id, &id, 4, DEFAULT_GRAMIAN_FLOOR).unwrap();
        let t: TargetSpectrum = "[1,1]".parse().unwrap();
        let dg = build_diagonal_sequences(&t, h(), 2).unwrap();
        let tri = triangularize_with_feedback(&id, &id, &dg, &cert, &SynthesisOptions::default()).unwrap();
        let closed = apply_feedback(&id, &id, &tri.u).unwrap();
        let e = 1f64.exp();
        for n in -64..64 {
            assert!((closed.at(n) - DMatrix::from_diagonal_element(2, 2, e)).amax() < 1e-12);
        }
    }

    #[test]
    fn uncontrollable_pair_is_rejected() {
        let id = MatrixSequence::constant(h(), DMatrix::identity(2, 2)).unwrap();
        let zero = MatrixSequence::constant(h(), DMatrix::zeros(2, 1)).unwrap();
        let t: TargetSpectrum = "[0,0]".parse().unwrap();
        let opts = AssignOptions {
            k_max: 3,
            ..AssignOptions::default()
        };
        assert!(matches!(
            synthesize_assignment(&id, &zero, &t, &opts),
            Err(Error::NotControllable { .. })
        ));
    }
}

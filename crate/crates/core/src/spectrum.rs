//! Dichotomy (Sacker-Sell), Bohl and Lyapunov spectra over finite horizons.
//!
//! Everything works on the log-growth-rate axis: a rate `gamma` stands for the
//! shifted system `x_{n+1} = e^{-gamma} M_n x_n`. The decision whether the
//! shifted system has an exponential dichotomy is made from window exponents
//! `mu_i(n) = log(sigma_i(Phi(n + L, n))) / L`: a split into `r` growing and
//! `d - r` decaying directions exists at `gamma` when every window keeps the
//! `r` top exponents above `gamma + gap` and the rest below `gamma - gap`.
//!
//! Singular values of long products are read off compound matrices, whose top
//! singular value is the product of the leading singular values. Only top
//! singular values of products are ever taken, and those are computed stably
//! in scaled form.

use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{ProductCheckpoints, DEFAULT_CHECKPOINT_STRIDE};
use crate::linalg::compound;
use crate::system::{validate_lyapunov, Horizon, MatrixSequence, DEFAULT_INVERTIBILITY_FLOOR};

pub const DEFAULT_WINDOW: usize = 1 << 10;
pub const DEFAULT_GAP_THRESHOLD: f64 = 0.01;
pub const DEFAULT_GRID_STEP: f64 = 0.01;

/// Time set over which dichotomies are tested.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    #[default]
    TwoSided,
    /// Window starts `n >= 0`.
    Plus,
    /// Windows with `n + L <= 0`.
    Minus,
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-sided" | "two_sided" | "both" => Ok(Side::TwoSided),
            "plus" | "+" => Ok(Side::Plus),
            "minus" | "-" => Ok(Side::Minus),
            other => Err(Error::Input(format!("unknown side '{other}'"))),
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::TwoSided => "two-sided",
            Side::Plus => "plus",
            Side::Minus => "minus",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GammaGrid,
    WindowedSvd,
    BohlExactScalar,
}

/// Closed interval `[lo, hi]` on the rate axis; serialized as a pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl From<[f64; 2]> for Interval {
    fn from(p: [f64; 2]) -> Self {
        Interval { lo: p[0], hi: p[1] }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn dilate(&self, eps: f64) -> Interval {
        Interval::new(self.lo - eps, self.hi + eps)
    }

    pub fn translate(&self, by: f64) -> Interval {
        Interval::new(self.lo + by, self.hi + by)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.4}, {:.4}]", self.lo, self.hi)
    }
}

/// Sorts and merges overlapping or touching intervals.
pub fn merge_intervals(mut items: Vec<Interval>) -> Vec<Interval> {
    items.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(a.hi.total_cmp(&b.hi)));
    let mut out: Vec<Interval> = Vec::with_capacity(items.len());
    for it in items {
        match out.last_mut() {
            Some(last) if it.lo <= last.hi => last.hi = last.hi.max(it.hi),
            _ => out.push(it),
        }
    }
    out
}

/// Whether every point of `inner` lies in the union `outer` dilated by `eps`.
pub fn covered_by(inner: &[Interval], outer: &[Interval], eps: f64) -> bool {
    let grown = merge_intervals(outer.iter().map(|i| i.dilate(eps)).collect());
    inner
        .iter()
        .all(|i| grown.iter().any(|o| o.lo <= i.lo && i.hi <= o.hi))
}

/// Largest endpoint distance between two interval lists of equal length;
/// infinite when the counts differ.
pub fn endpoint_distance(a: &[Interval], b: &[Interval]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.lo - y.lo).abs().max((x.hi - y.hi).abs()))
        .fold(0.0, f64::max)
}

/// Tunables of the window-based estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumParams {
    pub window: usize,
    pub grid_step: f64,
    pub gap_threshold: f64,
    pub side: Side,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            grid_step: DEFAULT_GRID_STEP,
            gap_threshold: DEFAULT_GAP_THRESHOLD,
            side: Side::TwoSided,
        }
    }
}

impl SpectrumParams {
    pub fn with_side(self, side: Side) -> Self {
        Self { side, ..self }
    }

    pub fn with_window(self, window: usize) -> Self {
        Self { window, ..self }
    }

    fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidParameter("window length must be >= 1".into()));
        }
        if !(self.grid_step > 0.0 && self.grid_step.is_finite()) {
            return Err(Error::InvalidParameter("grid step must be positive".into()));
        }
        if !(self.gap_threshold >= 0.0 && self.gap_threshold.is_finite()) {
            return Err(Error::InvalidParameter("gap threshold must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-window log growth rates `mu_1(n) >= ... >= mu_d(n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowExponentTable {
    pub window: usize,
    pub horizon: Horizon,
    pub dim: usize,
    /// First window start; row `k` belongs to start `first_start + k`.
    pub first_start: i64,
    pub rows: Vec<Vec<f64>>,
}

/// Column-wise extremes of a window table restricted to one side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentBounds {
    pub side: Side,
    pub windows: usize,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl WindowExponentTable {
    pub fn starts(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.rows.len() as i64).map(move |k| self.first_start + k)
    }

    fn admits(&self, side: Side, n: i64) -> bool {
        match side {
            Side::TwoSided => true,
            Side::Plus => n >= 0,
            Side::Minus => n + self.window as i64 <= 0,
        }
    }

    /// Rows whose window start belongs to `side`.
    pub fn rows_for(&self, side: Side) -> impl Iterator<Item = (i64, &Vec<f64>)> + '_ {
        self.starts()
            .zip(self.rows.iter())
            .filter(move |(n, _)| self.admits(side, *n))
    }

    pub fn bounds(&self, side: Side) -> Result<ExponentBounds> {
        let mut min = vec![f64::INFINITY; self.dim];
        let mut max = vec![f64::NEG_INFINITY; self.dim];
        let mut windows = 0;
        for (_, row) in self.rows_for(side) {
            windows += 1;
            for (i, &mu) in row.iter().enumerate() {
                min[i] = min[i].min(mu);
                max[i] = max[i].max(mu);
            }
        }
        if windows == 0 {
            return Err(Error::Horizon(format!(
                "no {side} windows of length {} fit in horizon {}",
                self.window, self.horizon
            )));
        }
        Ok(ExponentBounds {
            side,
            windows,
            min,
            max,
        })
    }

    /// CSV rows `n,mu_1,...,mu_d`.
    pub fn write_csv<W: Write>(&self, mut out: W, side: Side) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|i| format!("mu_{i}")).collect();
        writeln!(out, "n,{}", header.join(","))?;
        for (n, row) in self.rows_for(side) {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:.12e}")).collect();
            writeln!(out, "{n},{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Window exponents of `M` for every window `[n, n + L]` inside the horizon.
pub fn window_exponents(m: &MatrixSequence, window: usize) -> Result<WindowExponentTable> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "window exponents need a square sequence, got {:?}",
            m.shape()
        )));
    }
    if window == 0 {
        return Err(Error::InvalidParameter("window length must be >= 1".into()));
    }
    let h = m.horizon();
    if h.steps() < 2 * window {
        return Err(Error::Horizon(format!(
            "horizon {h} has {} steps, need at least {} for window {window}",
            h.steps(),
            2 * window
        )));
    }
    let d = m.rows();
    let steps: Vec<DMatrix<f64>> = (h.n_min..h.n_max).into_par_iter().map(|n| m.at(n)).collect();

    // log of the product of the k leading singular values, k = 1..d
    let mut log_volumes: Vec<Vec<f64>> = Vec::with_capacity(d);
    for k in 1..=d {
        let factors: Vec<DMatrix<f64>> = steps.par_iter().map(|s| compound(s, k)).collect();
        let cp = ProductCheckpoints::new(factors, DEFAULT_CHECKPOINT_STRIDE);
        let logs: Vec<f64> = cp
            .window_products(window)
            .par_iter()
            .map(|p| p.log_norm2())
            .collect();
        log_volumes.push(logs);
    }

    let count = log_volumes[0].len();
    let l = window as f64;
    let mut rows = Vec::with_capacity(count);
    for w in 0..count {
        let mut prev = 0.0;
        let mut row = Vec::with_capacity(d);
        for lv in log_volumes.iter() {
            let v = lv[w];
            if !v.is_finite() {
                return Err(Error::NumericalRange(format!(
                    "window starting at {} has a degenerate product (log volume {v})",
                    h.n_min + w as i64
                )));
            }
            row.push((v - prev) / l);
            prev = v;
        }
        row.sort_by(|a, b| b.total_cmp(a));
        rows.push(row);
    }
    Ok(WindowExponentTable {
        window,
        horizon: h,
        dim: d,
        first_start: h.n_min,
        rows,
    })
}

/// Decision for a single rate `gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EDVerdict {
    pub gamma: f64,
    pub has_ed: bool,
    /// Number of decaying directions `d - r` of the best split.
    pub projector_rank: usize,
    /// One-step transient bound; infinite without a dichotomy.
    pub fitted_k: f64,
    pub fitted_alpha: f64,
    /// Distance to the nearest crossing family minus the gap threshold;
    /// negative when undecided.
    pub margin: f64,
}

/// `sup ||M_n||` and `sup ||M_n^{-1}||`, used for the transient constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormBounds {
    pub norm: f64,
    pub inverse_norm: f64,
}

impl NormBounds {
    pub fn of(m: &MatrixSequence) -> Result<Self> {
        let v = validate_lyapunov(m, DEFAULT_INVERTIBILITY_FLOOR)?;
        Ok(NormBounds {
            norm: v.norm_bound,
            inverse_norm: v.inverse_norm_bound,
        })
    }
}

/// Dichotomy decision at `gamma` from precomputed window extremes.
pub fn ed_verdict(bounds: &ExponentBounds, gamma: f64, gap: f64, norms: Option<NormBounds>) -> EDVerdict {
    let d = bounds.min.len();
    let mut best_r = 0;
    let mut best_dist = f64::NEG_INFINITY;
    for r in 0..=d {
        let upper = if r == 0 { f64::INFINITY } else { bounds.min[r - 1] };
        let lower = if r == d { f64::NEG_INFINITY } else { bounds.max[r] };
        let dist = (upper - gamma).min(gamma - lower);
        if dist > best_dist {
            best_dist = dist;
            best_r = r;
        }
    }
    let margin = best_dist - gap;
    let has_ed = margin > 0.0;
    let (fitted_alpha, fitted_k) = if has_ed {
        let alpha = best_dist;
        let mut k: f64 = 1.0;
        if let Some(nb) = norms {
            if best_r < d {
                k = k.max(nb.norm * (alpha - gamma).exp());
            }
            if best_r > 0 {
                k = k.max(nb.inverse_norm * (gamma + alpha).exp());
            }
        }
        (alpha, k)
    } else {
        (0.0, f64::INFINITY)
    };
    EDVerdict {
        gamma,
        has_ed,
        projector_rank: d - best_r,
        fitted_k,
        fitted_alpha,
        margin,
    }
}

/// Whether `x_{n+1} = e^{-gamma} M_n x_n` has an exponential dichotomy on the
/// two-sided horizon, judged with windows of length `window`.
pub fn ed_test(m: &MatrixSequence, gamma: f64, window: usize, gap_threshold: f64) -> Result<EDVerdict> {
    let table = window_exponents(m, window)?;
    let bounds = table.bounds(Side::TwoSided)?;
    Ok(ed_verdict(&bounds, gamma, gap_threshold, NormBounds::of(m).ok()))
}

/// Spectral estimate: disjoint sorted closed intervals plus provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub intervals: Vec<Interval>,
    pub side: Side,
    pub window_length: usize,
    pub horizon: Horizon,
    pub method: Method,
    pub grid_step: f64,
    pub gap_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdicts: Option<Vec<EDVerdict>>,
}

impl SpectrumEstimate {
    pub fn contains(&self, x: f64, eps: f64) -> bool {
        self.intervals.iter().any(|i| i.dilate(eps).contains(x))
    }

    pub fn translate(&self, by: f64) -> Vec<Interval> {
        self.intervals.iter().map(|i| i.translate(by)).collect()
    }
}

/// Dichotomy spectrum estimate by a `gamma`-grid scan with bisection
/// refinement of every endpoint to `grid_step / 8`.
pub fn dichotomy_spectrum(m: &MatrixSequence, params: SpectrumParams) -> Result<SpectrumEstimate> {
    params.validate()?;
    let table = window_exponents(m, params.window)?;
    spectrum_from_table(&table, params, NormBounds::of(m).ok(), false)
}

/// Same as [`dichotomy_spectrum`] on an existing table; optionally keeps the
/// per-grid-point verdicts.
pub fn spectrum_from_table(
    table: &WindowExponentTable,
    params: SpectrumParams,
    norms: Option<NormBounds>,
    keep_verdicts: bool,
) -> Result<SpectrumEstimate> {
    params.validate()?;
    let bounds = table.bounds(params.side)?;
    let d = table.dim;
    let h = params.grid_step;
    let gap = params.gap_threshold;
    let in_spectrum = |g: f64| !ed_verdict(&bounds, g, gap, None).has_ed;

    let lowest = bounds.min.iter().copied().fold(f64::INFINITY, f64::min);
    let highest = bounds.max.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = lowest - gap - h;
    let hi = highest + gap + h;
    let n_grid = ((hi - lo) / h).ceil() as usize;
    let mut grid: Vec<f64> = (0..=n_grid).map(|k| lo + k as f64 * h).collect();
    // extremes of each exponent family are always in the spectrum
    grid.extend(bounds.min.iter().chain(bounds.max.iter()).copied());
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let flags: Vec<bool> = grid.par_iter().map(|&g| in_spectrum(g)).collect();
    let refine = |mut inside: f64, mut outside: f64| {
        while (inside - outside).abs() > h / 8.0 {
            let mid = 0.5 * (inside + outside);
            if in_spectrum(mid) {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        inside
    };

    let mut intervals = Vec::new();
    let mut k = 0;
    while k < grid.len() {
        if !flags[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k + 1 < grid.len() && flags[k + 1] {
            k += 1;
        }
        let left = if start == 0 {
            grid[0]
        } else {
            refine(grid[start], grid[start - 1])
        };
        let right = if k + 1 == grid.len() {
            grid[k]
        } else {
            refine(grid[k], grid[k + 1])
        };
        intervals.push(Interval::new(left, right));
        k += 1;
    }

    // gaps narrower than one grid step are not resolved
    let mut merged: Vec<Interval> = Vec::with_capacity(intervals.len());
    for it in intervals {
        match merged.last_mut() {
            Some(last) if it.lo - last.hi < h => last.hi = last.hi.max(it.hi),
            _ => merged.push(it),
        }
    }
    cap_interval_count(&mut merged, d);

    let verdicts = keep_verdicts.then(|| {
        grid.iter()
            .map(|&g| ed_verdict(&bounds, g, gap, norms))
            .collect()
    });
    Ok(SpectrumEstimate {
        intervals: merged,
        side: params.side,
        window_length: table.window,
        horizon: table.horizon,
        method: Method::GammaGrid,
        grid_step: h,
        gap_threshold: gap,
        verdicts,
    })
}

/// Merges across the narrowest gaps until at most `max_count` remain.
fn cap_interval_count(items: &mut Vec<Interval>, max_count: usize) {
    while items.len() > max_count.max(1) {
        let k = (0..items.len() - 1)
            .min_by(|&a, &b| {
                let ga = items[a + 1].lo - items[a].hi;
                let gb = items[b + 1].lo - items[b].hi;
                ga.total_cmp(&gb)
            })
            .unwrap();
        let right = items.remove(k + 1);
        items[k].hi = items[k].hi.max(right.hi);
    }
}

/// Closed-form estimate from the same window extremes: the union of
/// `[min mu_i - gap, max mu_i + gap]`.
pub fn spectrum_from_extremes(table: &WindowExponentTable, params: SpectrumParams) -> Result<SpectrumEstimate> {
    params.validate()?;
    let bounds = table.bounds(params.side)?;
    let g = params.gap_threshold;
    let raw = bounds
        .min
        .iter()
        .zip(&bounds.max)
        .map(|(&lo, &hi)| Interval::new(lo - g, hi + g))
        .collect();
    let mut intervals = merge_intervals(raw);
    cap_interval_count(&mut intervals, table.dim);
    Ok(SpectrumEstimate {
        intervals,
        side: params.side,
        window_length: table.window,
        horizon: table.horizon,
        method: Method::WindowedSvd,
        grid_step: params.grid_step,
        gap_threshold: g,
        verdicts: None,
    })
}

/// `[min, max]` of window averages of `log|p_n|` for a scalar sequence.
pub fn bohl_interval(p: &MatrixSequence, window: usize, side: Side) -> Result<Interval> {
    if p.shape() != (1, 1) {
        return Err(Error::Dimension(format!(
            "Bohl interval needs a scalar sequence, got {:?}",
            p.shape()
        )));
    }
    if window == 0 {
        return Err(Error::InvalidParameter("window length must be >= 1".into()));
    }
    let h = p.horizon();
    let logs: Vec<f64> = (h.n_min..h.n_max)
        .map(|n| {
            let v = p.at(n)[(0, 0)];
            if v == 0.0 {
                Err(Error::Singular { index: n, ratio: 0.0 })
            } else {
                Ok(v.abs().ln())
            }
        })
        .collect::<Result<_>>()?;
    let l = window as i64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut sum: f64 = logs.iter().take(window.min(logs.len())).sum();
    let count = logs.len() as i64 - l + 1;
    for k in 0..count.max(0) {
        if k > 0 {
            // recompute every stride to keep the running sum honest
            if k % 256 == 0 {
                sum = logs[k as usize..(k + l) as usize].iter().sum();
            } else {
                sum += logs[(k + l - 1) as usize] - logs[(k - 1) as usize];
            }
        }
        let n = h.n_min + k;
        let admitted = match side {
            Side::TwoSided => true,
            Side::Plus => n >= 0,
            Side::Minus => n + l <= 0,
        };
        if admitted {
            let avg = sum / window as f64;
            lo = lo.min(avg);
            hi = hi.max(avg);
        }
    }
    if !lo.is_finite() {
        return Err(Error::Horizon(format!(
            "no {side} windows of length {window} fit in horizon {h}"
        )));
    }
    Ok(Interval::new(lo, hi))
}

/// Lyapunov exponents by the discrete QR method, propagating an orthonormal
/// frame from index 0 (or `n_min` when 0 is outside the horizon) over
/// `samples` steps, capped at `n_max`. Sorted descending.
pub fn lyapunov_spectrum(m: &MatrixSequence, samples: usize) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension("Lyapunov spectrum needs a square sequence".into()));
    }
    let h = m.horizon();
    let start = 0i64.clamp(h.n_min, h.n_max);
    let end = (start + samples as i64).min(h.n_max);
    if end <= start {
        return Err(Error::Horizon(format!(
            "no steps available from {start} in horizon {h}"
        )));
    }
    let d = m.rows();
    let mut q = DMatrix::<f64>::identity(d, d);
    let mut sums = vec![0.0; d];
    for n in start..end {
        let z = m.at(n) * &q;
        let qr = z.qr();
        let r = qr.r();
        let mut qn = qr.q();
        for i in 0..d {
            let rii = r[(i, i)];
            if rii == 0.0 {
                return Err(Error::Singular { index: n, ratio: 0.0 });
            }
            sums[i] += rii.abs().ln();
            if rii < 0.0 {
                qn.column_mut(i).neg_mut();
            }
        }
        q = qn;
    }
    let steps = (end - start) as f64;
    let mut out: Vec<f64> = sums.into_iter().map(|s| s / steps).collect();
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

/// Union of several estimates, re-merged into disjoint intervals.
pub fn merge_report(estimates: &[SpectrumEstimate]) -> Result<SpectrumEstimate> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to merge".into()))?;
    let all = estimates.iter().flat_map(|e| e.intervals.iter().copied()).collect();
    Ok(SpectrumEstimate {
        intervals: merge_intervals(all),
        verdicts: None,
        ..first.clone()
    })
}

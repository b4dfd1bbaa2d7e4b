//! Parameter search: a coarse-then-fine sweep of the structure gain `m`,
//! followed by a constrained grid over `(s1, s2, b1, b2)`.
//!
//! Trials are evaluated in a fixed order (lexicographic over the grid axes) and
//! the ranked table is assembled from that order, so results do not depend on
//! how many workers ran them.

mod demo;
mod objective;

pub use demo::{run_demo, BlockRatios, DemoReport};
pub use objective::{
    EmbeddingSource, ExternalCommand, FdEmbeddings, Objective, SyntheticBowl, ToyEmbedder,
    EMBED_GRID,
};

use std::cmp::Ordering;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::refine::RefineParams;

/// Inclusive arithmetic range `lo, lo + step, …, ≤ hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

/// Grid values are snapped to this many decimal places so `1.0 + 4·0.1` is `1.4`.
const GRID_DECIMALS: i32 = 9;

fn snap(v: f64) -> f64 {
    let scale = 10f64.powi(GRID_DECIMALS);
    (v * scale).round() / scale
}

impl ParamRange {
    pub const fn new(lo: f64, hi: f64, step: f64) -> Self {
        Self { lo, hi, step }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.step.is_finite())
            || self.lo > self.hi
            || self.step <= 0.0
        {
            return Err(Error::InvalidParam(format!(
                "range {}:{}:{} needs lo <= hi and step > 0",
                self.lo, self.hi, self.step
            )));
        }
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count)
            .map(|i| snap(self.lo + i as f64 * self.step))
            .collect())
    }
}

impl FromStr for ParamRange {
    type Err = Error;

    /// `lo:hi:step`, or a single value.
    fn from_str(s: &str) -> Result<Self> {
        let nums: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| Error::InvalidParam(format!("bad range {s:?}")))?;
        match nums[..] {
            [v] => Ok(Self::new(v, v, 1.0)),
            [lo, hi, step] => Ok(Self::new(lo, hi, step)),
            _ => Err(Error::InvalidParam(format!(
                "range {s:?} must be lo:hi:step"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub s1: ParamRange,
    pub s2: ParamRange,
    pub b1: ParamRange,
    pub b2: ParamRange,
    pub m_coarse: Vec<f64>,
    pub m_fine_step: f64,
    /// Skip points with `s1 < s2`.
    pub enforce_s_order: bool,
    /// Skip points with `b1 < b2`.
    pub enforce_b_order: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            s1: ParamRange::new(1.0, 1.6, 0.1),
            s2: ParamRange::new(1.0, 1.6, 0.1),
            b1: ParamRange::new(0.1, 1.0, 0.1),
            b2: ParamRange::new(0.1, 1.0, 0.1),
            m_coarse: vec![1.0, 1.5, 2.0, 2.5, 3.0],
            m_fine_step: 0.1,
            enforce_s_order: true,
            enforce_b_order: true,
        }
    }
}

impl GridSpec {
    /// Overrides axes from `s1=lo:hi:step;b2=…` (`;` or `,` separated).
    pub fn with_ranges(mut self, spec: &str) -> Result<Self> {
        for part in spec
            .split([';', ','])
            .map(str::trim)
            .filter(|p| !p.is_empty())
        {
            let (key, range) = part.split_once('=').ok_or_else(|| {
                Error::InvalidParam(format!("expected axis=lo:hi:step, got {part:?}"))
            })?;
            let range: ParamRange = range.parse()?;
            match key.trim() {
                "s1" => self.s1 = range,
                "s2" => self.s2 = range,
                "b1" => self.b1 = range,
                "b2" => self.b2 = range,
                other => return Err(Error::InvalidParam(format!("unknown grid axis {other:?}"))),
            }
        }
        Ok(self)
    }

    pub fn admits(&self, s1: f64, s2: f64, b1: f64, b2: f64) -> bool {
        (!self.enforce_s_order || s1 >= s2) && (!self.enforce_b_order || b1 >= b2)
    }

    /// Feasible grid points in lexicographic `(s1, s2, b1, b2)` order.
    pub fn points(&self, m: f64) -> Result<Vec<RefineParams>> {
        let (s1s, s2s, b1s, b2s) = (
            self.s1.values()?,
            self.s2.values()?,
            self.b1.values()?,
            self.b2.values()?,
        );
        let mut points = Vec::new();
        for &s1 in &s1s {
            for &s2 in &s2s {
                for &b1 in &b1s {
                    for &b2 in &b2s {
                        if self.admits(s1, s2, b1, b2) {
                            points.push(RefineParams::new(s1, s2, b1, b2, m)?);
                        }
                    }
                }
            }
        }
        if points.is_empty() {
            return Err(Error::Search(format!(
                "grid is empty after ordering constraints (s1>=s2: {}, b1>=b2: {})",
                self.enforce_s_order, self.enforce_b_order
            )));
        }
        Ok(points)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Scored(f64),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub params: RefineParams,
    pub outcome: TrialOutcome,
}

impl Trial {
    pub fn score(&self) -> Option<f64> {
        match self.outcome {
            TrialOutcome::Scored(s) => Some(s),
            TrialOutcome::Failed(_) => None,
        }
    }
}

fn run_trial(obj: &dyn Objective, params: RefineParams) -> Trial {
    let outcome = match obj.evaluate(&params) {
        Ok(s) if s.is_finite() => TrialOutcome::Scored(s),
        Ok(s) => TrialOutcome::Failed(format!("non-finite score {s}")),
        Err(e) => TrialOutcome::Failed(e.to_string()),
    };
    Trial { params, outcome }
}

/// Evaluates `points` in order, in parallel when the objective allows it.
pub fn evaluate_all(
    obj: &dyn Objective,
    points: Vec<RefineParams>,
    workers: usize,
) -> Result<Vec<Trial>> {
    if workers <= 1 || !obj.reentrant() {
        return Ok(points.into_iter().map(|p| run_trial(obj, p)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Search(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(|| points.into_par_iter().map(|p| run_trial(obj, p)).collect()))
}

fn lexicographic(a: &RefineParams, b: &RefineParams) -> Ordering {
    a.as_array()
        .iter()
        .zip(b.as_array().iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Scored trials by ascending score, ties by ascending `(s1, s2, b1, b2, m)`;
/// failed trials follow in evaluation order.
pub fn rank(trials: &[Trial]) -> Vec<Trial> {
    let mut ok: Vec<Trial> = trials
        .iter()
        .filter(|t| t.score().is_some())
        .cloned()
        .collect();
    ok.sort_by(|a, b| {
        a.score()
            .unwrap()
            .total_cmp(&b.score().unwrap())
            .then_with(|| lexicographic(&a.params, &b.params))
    });
    ok.extend(trials.iter().filter(|t| t.score().is_none()).cloned());
    ok
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub best_m: f64,
    pub best_score: f64,
    /// Trials in evaluation order.
    pub trials: Vec<Trial>,
}

fn best_m(trials: Vec<Trial>) -> Result<SweepResult> {
    let best = trials
        .iter()
        .filter_map(|t| t.score().map(|s| (s, t.params.m)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
        .ok_or_else(|| Error::Search("every m trial failed".into()))?;
    Ok(SweepResult {
        best_m: best.1,
        best_score: best.0,
        trials,
    })
}

/// Scores each candidate `m` with the other gains held at `anchor`.
/// Ties go to the smaller `m`.
pub fn coarse_sweep_m(
    obj: &dyn Objective,
    candidates: &[f64],
    anchor: &RefineParams,
    workers: usize,
) -> Result<SweepResult> {
    if candidates.is_empty() {
        return Err(Error::Search("no m candidates".into()));
    }
    let points = candidates
        .iter()
        .map(|&m| RefineParams::new(anchor.s1, anchor.s2, anchor.b1, anchor.b2, m))
        .collect::<Result<Vec<_>>>()?;
    best_m(evaluate_all(obj, points, workers)?)
}

/// Refines `coarse.best_m` on a `step` grid spanning its neighbouring candidates.
pub fn fine_sweep_m(
    obj: &dyn Objective,
    coarse: &SweepResult,
    candidates: &[f64],
    step: f64,
    anchor: &RefineParams,
    workers: usize,
) -> Result<SweepResult> {
    let mut sorted: Vec<f64> = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let idx = sorted
        .iter()
        .position(|&m| m == coarse.best_m)
        .ok_or_else(|| Error::Search(format!("best m {} is not a candidate", coarse.best_m)))?;
    let lo = sorted[idx.saturating_sub(1)];
    let hi = sorted[(idx + 1).min(sorted.len() - 1)];
    let values = ParamRange::new(lo, hi, step).values()?;
    coarse_sweep_m(obj, &values, anchor, workers)
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: RefineParams,
    pub best_score: f64,
    /// See [`rank`].
    pub ranked: Vec<Trial>,
}

/// Exhaustive search over the feasible `(s1, s2, b1, b2)` grid at fixed `m`.
pub fn grid_search(
    obj: &dyn Objective,
    grid: &GridSpec,
    m_fixed: f64,
    workers: usize,
) -> Result<GridResult> {
    let points = grid.points(m_fixed)?;
    let ranked = rank(&evaluate_all(obj, points, workers)?);
    let first = ranked.first().expect("grid is non-empty");
    let best_score = first
        .score()
        .ok_or_else(|| Error::Search("every grid trial failed".into()))?;
    Ok(GridResult {
        best: first.params,
        best_score,
        ranked,
    })
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub coarse: SweepResult,
    pub fine: SweepResult,
    pub grid: GridResult,
}

/// Coarse `m` sweep, fine `m` sweep, then the constrained grid at the chosen `m`.
pub fn full_search(
    obj: &dyn Objective,
    grid: &GridSpec,
    anchor: &RefineParams,
    workers: usize,
) -> Result<SearchOutcome> {
    let coarse = coarse_sweep_m(obj, &grid.m_coarse, anchor, workers)?;
    let fine = fine_sweep_m(
        obj,
        &coarse,
        &grid.m_coarse,
        grid.m_fine_step,
        anchor,
        workers,
    )?;
    let grid = grid_search(obj, grid, fine.best_m, workers)?;
    Ok(SearchOutcome { coarse, fine, grid })
}

fn clean(msg: &str) -> String {
    msg.replace(['\t', '\n', '\r'], " ")
}

/// Writes trials as TSV with columns `s1 s2 b1 b2 m score status`.
pub fn write_tsv<W: Write>(mut out: W, trials: &[Trial]) -> std::io::Result<()> {
    writeln!(out, "s1\ts2\tb1\tb2\tm\tscore\tstatus")?;
    for t in trials {
        let p = &t.params;
        let (score, status) = match &t.outcome {
            TrialOutcome::Scored(s) => (s.to_string(), "ok".to_owned()),
            TrialOutcome::Failed(msg) => ("nan".to_owned(), format!("failed: {}", clean(msg))),
        };
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{score}\t{status}",
            p.s1, p.s2, p.b1, p.b2, p.m
        )?;
    }
    Ok(())
}

//! Frame-rate tracker: windowed on-line time warping with optional jump
//! hypotheses at part boundaries.
//!
//! Cumulative costs are kept only for *maintained* cells: the main window of
//! `c + 1` score frames centered on the previous position and, while jump
//! hypotheses are active, one window of `c / hypotheses` frames after each
//! candidate part start. Every other cell is the [`INF`] sentinel.
//!
//! In linear mode each maintained cell follows the classic recursion
//!
//! ```text
//! D_j[i] = d(x_i, y_j) + min(D_{j-1}[i-1], D_{j-1}[i], D_j[i-1])
//! ```
//!
//! and in hypothesis mode the candidate starts additionally take
//! `D_{j-1}[t_k]`, the cost of having just finished the current part `k`.
//! Candidates are the current part (repeat), the next one (continue) and the
//! six after it (skips).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::features::cosine_distance_normed;
use crate::features::norm;
use crate::score_model::ScoreReference;

/// Cost of unreachable cells. Adding distances to it never overflows.
pub const INF: f64 = f64::MAX / 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HrConfig {
    /// Main window width in HR frames.
    pub c: usize,
    /// Enables jump hypotheses (JOLTW). `false` gives the baseline tracker.
    pub jumps: bool,
    /// Number of part transitions considered at a part end.
    pub hypotheses: usize,
    /// Frames after a part start during which no part is committed.
    pub start_region: usize,
}

impl Default for HrConfig {
    fn default() -> Self {
        Self {
            c: 4000,
            jumps: true,
            hypotheses: 8,
            start_region: 500,
        }
    }
}

impl HrConfig {
    pub fn baseline() -> Self {
        Self {
            jumps: false,
            ..Self::default()
        }
    }

    pub fn hypothesis_window(&self) -> usize {
        (self.c / self.hypotheses.max(1)).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HrMode {
    Linear,
    Hypothesis,
}

#[derive(Debug, Clone, PartialEq)]
struct Segment {
    lo: usize,
    costs: Vec<f64>,
}

impl Segment {
    fn hi(&self) -> usize {
        self.lo + self.costs.len() - 1
    }
}

/// Sparse cumulative-cost vector: sorted, disjoint segments.
#[derive(Debug, Clone, PartialEq, Default)]
struct Cells(Vec<Segment>);

impl Cells {
    fn get(&self, i: usize) -> f64 {
        let k = self.0.partition_point(|s| s.lo <= i);
        match k.checked_sub(1).map(|k| &self.0[k]) {
            Some(s) if i <= s.hi() => s.costs[i - s.lo],
            _ => INF,
        }
    }

    /// Copies cells `lo..=hi` into `out` (sentinel where not maintained).
    fn fill(&self, lo: usize, hi: usize, out: &mut Vec<f64>) {
        out.clear();
        out.resize(hi - lo + 1, INF);
        for s in &self.0 {
            let a = s.lo.max(lo);
            let b = s.hi().min(hi);
            if a <= b {
                out[a - lo..=b - lo].copy_from_slice(&s.costs[a - s.lo..=b - s.lo]);
            }
        }
    }

    fn min_finite(&self) -> Option<f64> {
        self.0
            .iter()
            .flat_map(|s| s.costs.iter().copied())
            .filter(|&v| v < INF)
            .min_by(f64::total_cmp)
    }
}

/// Merges closed intervals that overlap or touch.
fn merge(mut iv: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    iv.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(iv.len());
    for (lo, hi) in iv {
        match out.last_mut() {
            Some(last) if lo <= last.1 + 1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

/// A candidate part transition out of the current part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hypothesis {
    pub part_id: u32,
    pub start: usize,
}

/// HR tracker state for one performance.
#[derive(Debug, Clone)]
pub struct HrTracker {
    reference: Arc<ScoreReference>,
    cfg: HrConfig,
    cells: Cells,
    position: usize,
    mode: HrMode,
    current_part: Option<u32>,
    hypotheses: Vec<Hypothesis>,
    scratch: Vec<f64>,
}

impl HrTracker {
    /// Starts tracking at `start`: `D[start] = 0`, every other cell unreachable.
    pub fn new(reference: Arc<ScoreReference>, cfg: HrConfig, start: usize) -> Result<Self> {
        if cfg.c == 0 {
            return Err(Error::Invalid("window size c must be positive".into()));
        }
        let mut t = Self {
            reference,
            cfg,
            cells: Cells::default(),
            position: 0,
            mode: HrMode::Linear,
            current_part: None,
            hypotheses: Vec::new(),
            scratch: Vec::new(),
        };
        t.reset(start, 0.0)?;
        Ok(t)
    }

    pub fn config(&self) -> &HrConfig {
        &self.cfg
    }

    pub fn reference(&self) -> &Arc<ScoreReference> {
        &self.reference
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn mode(&self) -> HrMode {
        self.mode
    }

    pub fn current_part(&self) -> Option<u32> {
        self.current_part
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    /// Main window `[lo, hi]` around `center`, clamped to the score.
    pub fn window_around(&self, center: usize) -> (usize, usize) {
        let half = self.cfg.c / 2;
        let last = self.reference.hr_len() - 1;
        (center.saturating_sub(half), (center + half).min(last))
    }

    /// Current main window.
    pub fn window(&self) -> (usize, usize) {
        self.window_around(self.position)
    }

    /// Cumulative cost of score frame `i` after the last step.
    pub fn cost(&self, i: usize) -> f64 {
        self.cells.get(i)
    }

    /// All maintained `(index, cost)` pairs in ascending index order.
    pub fn maintained(&self) -> Vec<(usize, f64)> {
        self.cells
            .0
            .iter()
            .flat_map(|s| s.costs.iter().enumerate().map(move |(k, &v)| (s.lo + k, v)))
            .collect()
    }

    pub fn min_cost(&self) -> Option<f64> {
        self.cells.min_finite()
    }

    /// Redirects the tracker: `D[target] = seed`, every other cell unreachable,
    /// linear mode, current part taken from `target`.
    pub fn reset(&mut self, target: usize, seed: f64) -> Result<()> {
        let len = self.reference.hr_len();
        if target >= len {
            return Err(Error::OutOfRange { index: target, len });
        }
        let (lo, hi) = self.window_around(target);
        let mut costs = vec![INF; hi - lo + 1];
        costs[target - lo] = seed;
        self.cells = Cells(vec![Segment { lo, costs }]);
        self.position = target;
        self.mode = HrMode::Linear;
        self.hypotheses.clear();
        self.current_part = self.reference.parts.part_at(target);
        Ok(())
    }

    /// One frame of the full tracker: enters hypothesis mode when the position
    /// approaches the end of the current part, steps, then tries to commit a
    /// new part.
    pub fn step(&mut self, y: &[f32]) -> Result<usize> {
        if self.cfg.jumps && self.mode == HrMode::Linear && self.should_activate() {
            self.activate();
        }
        match self.mode {
            HrMode::Linear => self.step_baseline(y),
            HrMode::Hypothesis => {
                let pos = self.step_joltw(y)?;
                self.commit_part();
                Ok(pos)
            }
        }
    }

    /// Linear-mode update over the main window only.
    pub fn step_baseline(&mut self, y: &[f32]) -> Result<usize> {
        if self.mode != HrMode::Linear {
            return Err(Error::Invalid("step_baseline called in hypothesis mode".into()));
        }
        self.check_dims(y)?;
        let window = self.window();
        self.advance(y, vec![window], &[], INF);
        if self.current_part.is_none() {
            self.current_part = self.reference.parts.part_at(self.position);
        }
        Ok(self.position)
    }

    /// Hypothesis-mode update: main window plus one window per candidate start,
    /// candidate starts linked to the end of the current part.
    pub fn step_joltw(&mut self, y: &[f32]) -> Result<usize> {
        if self.mode != HrMode::Hypothesis {
            return Err(Error::Invalid("step_joltw called in linear mode".into()));
        }
        self.check_dims(y)?;
        let last = self.reference.hr_len() - 1;
        let hw = self.cfg.hypothesis_window();
        let mut intervals = vec![self.window()];
        intervals.extend(
            self.hypotheses
                .iter()
                .map(|h| (h.start, (h.start + hw - 1).min(last))),
        );
        let mut targets: Vec<usize> = self.hypotheses.iter().map(|h| h.start).collect();
        targets.sort_unstable();
        targets.dedup();
        let source = self
            .current_part
            .and_then(|k| self.reference.parts.part(k))
            .map_or(INF, |p| self.cells.get(p.end));
        self.advance(y, intervals, &targets, source);
        Ok(self.position)
    }

    /// Commits the part containing the position once it has left both the end
    /// region of the current part and every part's start region.
    pub fn commit_part(&mut self) -> Option<u32> {
        if self.mode != HrMode::Hypothesis {
            return None;
        }
        let parts = &self.reference.parts;
        let sp = self.position;
        if let Some(end) = self.current_part.and_then(|k| parts.part(k)).map(|p| p.end) {
            if sp <= end && sp >= end.saturating_sub(self.cfg.c / 2) {
                return None;
            }
        }
        let here = parts.part_at(sp)?;
        let in_start_region = parts.parts()[..here as usize]
            .iter()
            .rev()
            .take_while(|p| p.start + self.cfg.start_region >= sp)
            .any(|p| p.start <= sp);
        if in_start_region {
            return None;
        }
        self.current_part = Some(here);
        self.mode = HrMode::Linear;
        self.hypotheses.clear();
        let (lo, hi) = self.window();
        let mut costs = Vec::new();
        self.cells.fill(lo, hi, &mut costs);
        self.cells = Cells(vec![Segment { lo, costs }]);
        Some(here)
    }

    fn should_activate(&self) -> bool {
        let Some(part) = self.current_part.and_then(|k| self.reference.parts.part(k)) else {
            return false;
        };
        self.position > part.end.saturating_sub(self.cfg.c / 2)
    }

    fn activate(&mut self) {
        let Some(k) = self.current_part else { return };
        let parts = &self.reference.parts;
        self.hypotheses = (k..k + self.cfg.hypotheses as u32)
            .filter_map(|id| parts.part(id))
            .map(|p| Hypothesis {
                part_id: p.id,
                start: p.start,
            })
            .collect();
        self.mode = HrMode::Hypothesis;
    }

    fn check_dims(&self, y: &[f32]) -> Result<()> {
        let dims = self.reference.hr.dims();
        if y.len() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                got: y.len(),
            });
        }
        Ok(())
    }

    /// Computes the new cost vector over the union of `intervals`, with
    /// `targets` linked to `source`, and moves the position to its argmin.
    fn advance(&mut self, y: &[f32], intervals: Vec<(usize, usize)>, targets: &[usize], source: f64) {
        let reference = Arc::clone(&self.reference);
        let frames = &reference.hr;
        let norms = reference.hr_norms();
        let ny = norm(y);
        let mut next = Vec::new();
        let mut best = (INF, usize::MAX);
        let mut prev = std::mem::take(&mut self.scratch);
        let mut t = 0;
        for (lo, hi) in merge(intervals) {
            // prev[k] holds D_{j-1}[lo - 1 + k]
            if lo == 0 {
                self.cells.fill(0, hi, &mut prev);
                prev.insert(0, INF);
            } else {
                self.cells.fill(lo - 1, hi, &mut prev);
            }
            let mut costs = Vec::with_capacity(hi - lo + 1);
            let mut left = INF;
            for i in lo..=hi {
                let k = i - lo + 1;
                let mut m = prev[k - 1].min(prev[k]).min(left);
                while t < targets.len() && targets[t] < i {
                    t += 1;
                }
                if t < targets.len() && targets[t] == i {
                    m = m.min(source);
                }
                let v = if m >= INF {
                    INF
                } else {
                    m + cosine_distance_normed(frames.frame(i), norms[i], y, ny)
                };
                if v < best.0 {
                    best = (v, i);
                }
                costs.push(v);
                left = v;
            }
            next.push(Segment { lo, costs });
        }
        self.scratch = prev;
        self.cells = Cells(next);
        if best.1 != usize::MAX {
            self.position = best.1;
        }
    }
}

//! Low-resolution whole-score tracker.
//!
//! Each LR target frame adds a row of cosine distances against every LR score
//! frame. Over the last 30 rows a diagonal matching with part-boundary jumps is
//! computed (`D30`): paths advance exactly one score frame per target frame and
//! may jump from any part end to any part start. `D30` is then fed as the cost
//! row of a jump-enabled time warping over time (`seg`), whose argmin is the LR
//! position. The tracker is reliable when the last 30 position differences
//! over a lag of 30 frames all lie in `[15, 45]`.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::features::{cosine_distance_normed, norm, LR_DECIMATION};
use crate::hr_tracker::INF;
use crate::score_model::ScoreReference;

/// Target frames matched diagonally per `D30` evaluation.
pub const MATCH_LEN: usize = 30;
/// Lag of the position difference used for reliability.
pub const RF_LAG: usize = 30;
/// Number of position differences inspected for reliability.
pub const RF_SPAN: usize = 30;
pub const RF_MIN_DELTA: i64 = 15;
pub const RF_MAX_DELTA: i64 = 45;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrReport {
    /// Index of the LR target frame this report belongs to.
    pub lr_frame: usize,
    /// LR score position.
    pub x_lr: usize,
    /// HR score frames covered by the LR window around `x_lr`.
    pub interval: (usize, usize),
    pub rf: bool,
    /// Renormalized segment-level cost at `x_lr`.
    pub seg_cost: f64,
}

impl LrReport {
    /// HR frame at the middle of the interval.
    pub fn hr_center(&self) -> usize {
        self.x_lr * LR_DECIMATION
    }
}

/// `true` when the last [`RF_SPAN`] values of `x_j - x_{j-30}` lie in
/// `[15, 45]`. Needs at least 60 positions.
pub fn reliability(history: &[usize]) -> bool {
    let n = history.len();
    if n < RF_LAG + RF_SPAN {
        return false;
    }
    (n - RF_SPAN..n).all(|j| {
        let delta = history[j] as i64 - history[j - RF_LAG] as i64;
        (RF_MIN_DELTA..=RF_MAX_DELTA).contains(&delta)
    })
}

#[derive(Debug, Clone)]
pub struct LrTracker {
    reference: Arc<ScoreReference>,
    is_start: Vec<bool>,
    ends: Vec<usize>,
    rows: VecDeque<Vec<f64>>,
    seg: Vec<f64>,
    history: VecDeque<usize>,
    frames: usize,
    renormalize: bool,
    d_prev: Vec<f64>,
    d_cur: Vec<f64>,
    seg_next: Vec<f64>,
}

impl LrTracker {
    pub fn new(reference: Arc<ScoreReference>) -> Self {
        let n = reference.lr_len();
        let mut is_start = vec![false; n];
        let mut ends = Vec::new();
        for &(s, e) in reference.parts.lr_bounds() {
            if s < n {
                is_start[s] = true;
            }
            if e < n {
                ends.push(e);
            }
        }
        ends.sort_unstable();
        ends.dedup();
        Self {
            reference,
            is_start,
            ends,
            rows: VecDeque::with_capacity(MATCH_LEN),
            seg: vec![0.0; n],
            history: VecDeque::with_capacity(RF_LAG + RF_SPAN),
            frames: 0,
            renormalize: true,
            d_prev: vec![0.0; n],
            d_cur: vec![0.0; n],
            seg_next: vec![0.0; n],
        }
    }

    /// Disables per-frame renormalization of the segment costs.
    pub fn without_renormalization(mut self) -> Self {
        self.renormalize = false;
        self
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Recent positions, oldest first.
    pub fn history(&self) -> impl Iterator<Item = usize> + '_ {
        self.history.iter().copied()
    }

    /// Segment-level cost vector after the last push.
    pub fn seg_costs(&self) -> &[f64] {
        &self.seg
    }

    /// `D30` (or `D_l` with fewer rows) from the current row buffer.
    pub fn diagonal_costs(&self) -> &[f64] {
        &self.d_prev
    }

    pub fn push(&mut self, y: &[f32]) -> Result<LrReport> {
        let reference = Arc::clone(&self.reference);
        let lr = &reference.lr;
        if y.len() != lr.dims() {
            return Err(Error::DimensionMismatch {
                expected: lr.dims(),
                got: y.len(),
            });
        }
        let n = lr.len();
        let ny = norm(y);
        let norms = reference.lr_norms();
        let mut row = if self.rows.len() == MATCH_LEN {
            self.rows.pop_front().expect("full buffer")
        } else {
            Vec::with_capacity(n)
        };
        row.clear();
        row.extend((0..n).map(|i| cosine_distance_normed(lr.frame(i), norms[i], y, ny)));
        self.rows.push_back(row);

        self.diagonal_match();
        self.link_segments();

        let (x_lr, seg_cost) = self
            .seg
            .iter()
            .enumerate()
            .fold((0, INF), |best, (i, &v)| if v < best.1 { (i, v) } else { best });
        if self.history.len() == RF_LAG + RF_SPAN {
            self.history.pop_front();
        }
        self.history.push_back(x_lr);
        let rf = self.rows.len() == MATCH_LEN && reliability(self.history.make_contiguous());
        let last = reference.hr_len() - 1;
        let center = x_lr * LR_DECIMATION;
        let report = LrReport {
            lr_frame: self.frames,
            x_lr,
            interval: (
                center.saturating_sub(LR_DECIMATION).min(last),
                (center + LR_DECIMATION).min(last),
            ),
            rf,
            seg_cost,
        };
        self.frames += 1;
        Ok(report)
    }

    /// Diagonal matching with jumps over the buffered rows, result in `d_prev`.
    fn diagonal_match(&mut self) {
        let mut rows = self.rows.iter();
        let first = rows.next().expect("at least one row");
        self.d_prev.copy_from_slice(first);
        for row in rows {
            let jump = self
                .ends
                .iter()
                .map(|&t| self.d_prev[t])
                .fold(INF, f64::min);
            self.d_cur[0] = INF;
            for i in 1..row.len() {
                let mut m = self.d_prev[i - 1];
                if self.is_start[i] {
                    m = m.min(jump);
                }
                self.d_cur[i] = if m >= INF { INF } else { m + row[i] };
            }
            std::mem::swap(&mut self.d_prev, &mut self.d_cur);
        }
    }

    /// Jump-enabled time warping step with `D30` as the cost row.
    fn link_segments(&mut self) {
        let d30 = &self.d_prev;
        let prev = &self.seg;
        let jump = self.ends.iter().map(|&t| prev[t]).fold(INF, f64::min);
        let mut left = INF;
        let mut min = INF;
        for i in 0..d30.len() {
            let mut m = prev[i].min(left);
            if i > 0 {
                m = m.min(prev[i - 1]);
            }
            if self.is_start[i] {
                m = m.min(jump);
            }
            let v = if m >= INF || d30[i] >= INF {
                INF
            } else {
                m + d30[i]
            };
            self.seg_next[i] = v;
            left = v;
            min = min.min(v);
        }
        if self.renormalize && min < INF {
            for v in self.seg_next.iter_mut().filter(|v| **v < INF) {
                *v -= min;
            }
        }
        std::mem::swap(&mut self.seg, &mut self.seg_next);
    }
}

//! Alignment scoring against ground truth, and a full-matrix DTW used as an
//! oracle for the on-line trackers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{cosine_distance_normed, FeatureSequence};
use crate::hr_tracker::INF;
use crate::integrator::PositionReport;
use crate::mismatch_sim::GroundTruth;
use crate::score_model::{locate, BarAnnotations, PartTable, ScoreReference};

/// Bars of tolerance for the relaxed bar accuracy.
pub const BAR_TOLERANCE: usize = 5;

/// Accuracies in percent over the scored (non-inserted) frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub part_acc: f64,
    pub bar_acc: f64,
    pub at5_acc: f64,
    pub frames: usize,
}

/// Per-frame tallies; fold frames in any order and merge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub frames: usize,
    pub part_hits: usize,
    pub bar_hits: usize,
    pub at5_hits: usize,
}

impl Tally {
    pub fn merge(self, o: Tally) -> Tally {
        Tally {
            frames: self.frames + o.frames,
            part_hits: self.part_hits + o.part_hits,
            bar_hits: self.bar_hits + o.bar_hits,
            at5_hits: self.at5_hits + o.at5_hits,
        }
    }

    pub fn metrics(self) -> Metrics {
        let pct = |hits: usize| {
            if self.frames == 0 {
                0.0
            } else {
                100.0 * hits as f64 / self.frames as f64
            }
        };
        Metrics {
            part_acc: pct(self.part_hits),
            bar_acc: pct(self.bar_hits),
            at5_acc: pct(self.at5_hits),
            frames: self.frames,
        }
    }
}

/// Tallies estimated HR score positions against the truth. Frames without a
/// truth label, or excluded by `mask`, are skipped; a missing estimate counts
/// as a miss.
pub fn tally_positions(
    positions: &[Option<usize>],
    truth: &GroundTruth,
    reference: &ScoreReference,
    mask: Option<&[bool]>,
) -> Result<Tally> {
    tally_annotated(positions, truth, &reference.parts, &reference.bars, mask)
}

/// [`tally_positions`] against bare annotations.
pub fn tally_annotated(
    positions: &[Option<usize>],
    truth: &GroundTruth,
    parts: &PartTable,
    bars: &BarAnnotations,
    mask: Option<&[bool]>,
) -> Result<Tally> {
    if positions.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: positions.len(),
            right: truth.len(),
        });
    }
    if let Some(m) = mask {
        if m.len() != truth.len() {
            return Err(Error::LengthMismatch {
                left: m.len(),
                right: truth.len(),
            });
        }
    }
    let mut t = Tally::default();
    for (i, (pos, label)) in positions.iter().zip(&truth.labels).enumerate() {
        let Some(label) = label else { continue };
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        t.frames += 1;
        let Some(est) = pos.and_then(|p| locate(parts, bars, p)) else {
            continue;
        };
        let part_ok = est.part_id == label.part_id;
        t.part_hits += usize::from(part_ok);
        t.bar_hits += usize::from(part_ok && est.bar_id == label.bar_id);
        let near = match (est.bar_index, label.bar_id.and_then(|b| bars.index_of(b))) {
            (Some(a), Some(b)) => a.abs_diff(b) <= BAR_TOLERANCE,
            (None, None) => part_ok,
            _ => false,
        };
        t.at5_hits += usize::from(near);
    }
    Ok(t)
}

/// Part-, bar- and 5-bar accuracy of the final positions in `reports`.
pub fn evaluate(reports: &[PositionReport], truth: &GroundTruth, reference: &ScoreReference) -> Result<Metrics> {
    evaluate_annotated(reports, truth, &reference.parts, &reference.bars)
}

/// [`evaluate`] against bare annotations.
pub fn evaluate_annotated(
    reports: &[PositionReport],
    truth: &GroundTruth,
    parts: &PartTable,
    bars: &BarAnnotations,
) -> Result<Metrics> {
    let positions: Vec<_> = reports.iter().map(|r| Some(r.final_pos)).collect();
    tally_annotated(&positions, truth, parts, bars, None).map(Tally::metrics)
}

/// Offline alignment of a target against the score.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineAlignment {
    /// Optimal path as `(target_frame, score_frame)`, ascending.
    pub path: Vec<(usize, usize)>,
    /// Cost of the optimal path (open end).
    pub cost: f64,
    /// Per target frame, the score frame with the smallest cumulative cost.
    pub forward: Vec<usize>,
    /// Per target frame, that smallest cumulative cost.
    pub forward_cost: Vec<f64>,
}

/// Default cap on `|X| * |Y|`.
pub const DEFAULT_CELL_CAP: usize = 64_000_000;

#[derive(Clone, Copy)]
enum Step {
    Start,
    Diagonal,
    Vertical,
    Horizontal,
    Jump,
}

/// Exhaustive DTW of target `y` against score `x` with the on-line step set:
/// `D[j][i] = d(i, j) + min(D[j-1][i-1], D[j-1][i], D[j][i-1])`, plus
/// `D[j-1][t]` for every part end `t` at part starts when `jumps` is given.
/// Row `-1` is virtual with `D[-1][start] = 0`; the path ends at the argmin of
/// the last row.
pub fn offline_dtw(
    x: &FeatureSequence,
    y: &FeatureSequence,
    jumps: Option<&PartTable>,
    start: usize,
    cap: usize,
) -> Result<OfflineAlignment> {
    let (m, n) = (x.len(), y.len());
    let cells = m.saturating_mul(n);
    if cells > cap {
        return Err(Error::CapExceeded { cells, cap });
    }
    if x.dims() != y.dims() {
        return Err(Error::DimensionMismatch {
            expected: x.dims(),
            got: y.dims(),
        });
    }
    if start >= m.max(1) {
        return Err(Error::OutOfRange { index: start, len: m });
    }
    if n == 0 || m == 0 {
        return Ok(OfflineAlignment {
            path: Vec::new(),
            cost: 0.0,
            forward: Vec::new(),
            forward_cost: Vec::new(),
        });
    }
    let mut is_start = vec![false; m];
    let mut ends = Vec::new();
    if let Some(parts) = jumps {
        for p in parts.parts() {
            if p.start < m {
                is_start[p.start] = true;
            }
            if p.end < m {
                ends.push(p.end);
            }
        }
    }
    let xn = x.norms();
    let yn = y.norms();
    let mut cost = vec![INF; cells];
    let mut step = vec![Step::Start; cells];
    let mut jump_src = vec![usize::MAX; n];
    let mut virtual_row = vec![INF; m];
    virtual_row[start] = 0.0;
    let mut forward = Vec::with_capacity(n);
    let mut forward_cost = Vec::with_capacity(n);
    for j in 0..n {
        let (done, rest) = cost.split_at_mut(j * m);
        let prev: &[f64] = if j == 0 { &virtual_row } else { &done[(j - 1) * m..] };
        let row = &mut rest[..m];
        let (jump, src) = ends
            .iter()
            .map(|&t| (prev[t], t))
            .fold((INF, usize::MAX), |a, b| if b.0 < a.0 { b } else { a });
        jump_src[j] = src;
        let mut best = (INF, 0);
        for i in 0..m {
            let mut cand = (INF, Step::Start);
            let mut consider = |v: f64, s: Step| {
                if v < cand.0 {
                    cand = (v, s);
                }
            };
            if i > 0 {
                consider(prev[i - 1], Step::Diagonal);
            }
            consider(prev[i], Step::Vertical);
            if i > 0 {
                consider(row[i - 1], Step::Horizontal);
            }
            if is_start[i] {
                consider(jump, Step::Jump);
            }
            if cand.0 < INF {
                let d = cosine_distance_normed(x.frame(i), xn[i], y.frame(j), yn[j]);
                row[i] = cand.0 + d;
                step[j * m + i] = cand.1;
                if row[i] < best.0 {
                    best = (row[i], i);
                }
            }
        }
        forward.push(best.1);
        forward_cost.push(best.0);
    }
    let end = forward[n - 1];
    let total = cost[(n - 1) * m + end];
    let mut path = Vec::new();
    let (mut j, mut i) = (n as isize - 1, end);
    while j >= 0 {
        path.push((j as usize, i));
        match step[j as usize * m + i] {
            Step::Start => break,
            Step::Diagonal => {
                j -= 1;
                i -= 1;
            }
            Step::Vertical => j -= 1,
            Step::Horizontal => i -= 1,
            Step::Jump => {
                i = jump_src[j as usize];
                j -= 1;
            }
        }
    }
    path.reverse();
    Ok(OfflineAlignment {
        path,
        cost: total,
        forward,
        forward_cost,
    })
}

//! Test-only oracles and fixtures, written independently of the library.
#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use scorefollow::features::{FeatureSequence, Resolution};
use scorefollow::mismatch_sim::{apply_script, EditOp, EditScript};
use scorefollow::score_model::{Bar, BarAnnotations, Part, PartTable, ScoreReference};
use scorefollow::synth::{render_performance, synth_reference, Performance, PerfParams, ScoreParams};

pub const INF: f64 = f64::INFINITY;

pub fn naive_cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        return 1.0;
    }
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// Reflect-about-the-edge index without repeating edge samples.
fn reflect(k: i64, n: i64) -> usize {
    if n == 1 {
        return 0;
    }
    let mut k = k;
    loop {
        if k < 0 {
            k = -k;
        } else if k >= n {
            k = 2 * (n - 1) - k;
        } else {
            return k as usize;
        }
    }
}

/// MFCC of one frame by direct DFT; parameters mirror the library defaults
/// (22.05 kHz, 441-sample periodic Hann, 512-point DFT, 40 HTK mel bands,
/// 20 orthonormal DCT-II coefficients, c0 = ln frame energy).
pub fn naive_mfcc_frame(signal: &[f64], t: usize) -> Vec<f64> {
    let (sr, wlen, nfft, nmels, ncoef) = (22_050.0, 441usize, 512usize, 40usize, 20usize);
    let center = t * 22_050 / 100;
    let first = center as i64 - (wlen / 2) as i64;
    let frame: Vec<f64> = (0..wlen)
        .map(|n| signal[reflect(first + n as i64, signal.len() as i64)])
        .collect();
    let energy: f64 = frame.iter().map(|x| x * x).sum();
    let windowed: Vec<f64> = frame
        .iter()
        .enumerate()
        .map(|(n, x)| x * (0.5 - 0.5 * (2.0 * PI * n as f64 / wlen as f64).cos()))
        .collect();
    let power: Vec<f64> = (0..=nfft / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, x) in windowed.iter().enumerate() {
                let ang = -2.0 * PI * (k * n) as f64 / nfft as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            re * re + im * im
        })
        .collect();
    let mel = |f: f64| 1127.0 * (1.0 + f / 700.0).ln();
    let hz = |m: f64| 700.0 * ((m / 1127.0).exp() - 1.0);
    let top = mel(sr / 2.0);
    let edge = |i: usize| hz(top * i as f64 / (nmels + 1) as f64);
    let logmel: Vec<f64> = (1..=nmels)
        .map(|b| {
            let (lo, mid, hi) = (edge(b - 1), edge(b), edge(b + 1));
            let e: f64 = power
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let f = k as f64 * sr / nfft as f64;
                    let w = if f > lo && f <= mid {
                        (f - lo) / (mid - lo)
                    } else if f > mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    };
                    w * p
                })
                .sum();
            e.max(1e-10).ln()
        })
        .collect();
    let mut out: Vec<f64> = (0..ncoef)
        .map(|n| {
            let s: f64 = logmel
                .iter()
                .enumerate()
                .map(|(b, v)| v * (PI * n as f64 * (2 * b + 1) as f64 / (2 * nmels) as f64).cos())
                .sum();
            s * if n == 0 { (1.0 / nmels as f64).sqrt() } else { (2.0 / nmels as f64).sqrt() }
        })
        .collect();
    out[0] = energy.max(1e-10).ln();
    out
}

/// Cosine distance matrix `rows[l][i]` between target frames and score frames.
pub fn cost_rows(score: &FeatureSequence, target: &[Vec<f32>]) -> Vec<Vec<f64>> {
    target
        .iter()
        .map(|y| (0..score.len()).map(|i| naive_cosine(score.frame(i), y)).collect())
        .collect()
}

/// Successor indices of `i` in a diagonal path: `i + 1`, plus every part start
/// (other than 0) when `i` ends a part.
fn successors(i: usize, n: usize, starts: &[usize], ends: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    if i + 1 < n {
        out.push(i + 1);
    }
    if ends.contains(&i) {
        out.extend(starts.iter().copied().filter(|&s| s != 0 && s != i + 1));
    }
    out
}

/// Exhaustive minimum over all diagonal-with-jumps paths through `rows`
/// ending at each score index. Exponential; small inputs only.
pub fn diagonal_exhaustive(rows: &[Vec<f64>], starts: &[usize], ends: &[usize]) -> Vec<f64> {
    let n = rows[0].len();
    let mut best = vec![INF; n];
    fn walk(
        rows: &[Vec<f64>],
        l: usize,
        i: usize,
        acc: f64,
        starts: &[usize],
        ends: &[usize],
        best: &mut [f64],
    ) {
        let acc = acc + rows[l][i];
        if l + 1 == rows.len() {
            best[i] = best[i].min(acc);
            return;
        }
        for s in successors(i, rows[0].len(), starts, ends) {
            walk(rows, l + 1, s, acc, starts, ends, best);
        }
    }
    for i in 0..n {
        walk(rows, 0, i, 0.0, starts, ends, &mut best);
    }
    best
}

/// Top-down memoized form of the same minimum: best path ending at `(l, i)`.
pub fn diagonal_memo(rows: &[Vec<f64>], starts: &[usize], ends: &[usize]) -> Vec<f64> {
    let n = rows[0].len();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for s in successors(i, n, starts, ends) {
            preds[s].push(i);
        }
    }
    fn go(rows: &[Vec<f64>], preds: &[Vec<usize>], l: usize, i: usize, memo: &mut HashMap<(usize, usize), f64>) -> f64 {
        if l == 0 {
            return rows[0][i];
        }
        if let Some(v) = memo.get(&(l, i)) {
            return *v;
        }
        let m = preds[i]
            .iter()
            .map(|&p| go(rows, preds, l - 1, p, memo))
            .fold(INF, f64::min);
        let v = if m == INF { INF } else { m + rows[l][i] };
        memo.insert((l, i), v);
        v
    }
    let mut memo = HashMap::new();
    (0..n).map(|i| go(rows, &preds, rows.len() - 1, i, &mut memo)).collect()
}

/// Plain diagonal sums (single part): `sum_k rows[k][i - L + 1 + k]`.
pub fn diagonal_sums(rows: &[Vec<f64>]) -> Vec<f64> {
    let l = rows.len();
    (0..rows[0].len())
        .map(|i| {
            if i + 1 < l {
                INF
            } else {
                (0..l).map(|k| rows[k][i + 1 + k - l]).sum()
            }
        })
        .collect()
}

/// Smooth deterministic features of `len` frames and `dims` dimensions.
pub fn wave_features(len: usize, dims: usize, seed: f32) -> FeatureSequence {
    let data = (0..len * dims)
        .map(|k| {
            let (t, d) = ((k / dims) as f32, (k % dims) as f32);
            (t * (0.05 + 0.013 * d) + seed * (d + 1.0)).sin() + 0.3 * (t * 0.31 + d * 2.1 + seed).cos()
        })
        .collect();
    FeatureSequence::new(data, dims, 22_050, Resolution::Hr).unwrap()
}

/// Reference with parts at the given inclusive bounds and one bar every
/// `bar_len` frames inside every part.
pub fn annotated(hr: FeatureSequence, bounds: &[(usize, usize)], bar_len: usize) -> Arc<ScoreReference> {
    let parts = PartTable::new(
        bounds
            .iter()
            .enumerate()
            .map(|(k, &(s, e))| Part {
                id: k as u32 + 1,
                name: format!("part {}", k + 1),
                start: s,
                end: e,
            })
            .collect(),
    )
    .unwrap();
    let mut bars = Vec::new();
    for p in parts.parts() {
        let mut on = p.start;
        while on <= p.end {
            bars.push(Bar {
                id: bars.len() as u32 + 1,
                part_id: p.id,
                onset: on,
            });
            on += bar_len;
        }
    }
    let bars = BarAnnotations::new(bars, &parts).unwrap();
    Arc::new(ScoreReference::new(hr, None, parts, bars).unwrap())
}

/// Ten-part synthetic reference used by the jump scenarios.
pub fn ten_part_reference(seed: u64) -> ScoreReference {
    synth_reference(
        seed,
        &ScoreParams {
            parts: 10,
            part_len: (1_500, 2_500),
            ..ScoreParams::default()
        },
    )
    .unwrap()
}

/// Performance of `reference` edited by `ops` (no recitatives).
pub fn perform(reference: &ScoreReference, ops: Vec<EditOp>, seed: u64, perf: &PerfParams) -> Performance {
    let script = EditScript {
        seed,
        removal_ratio: 0.0,
        ops,
    };
    let version = apply_script(&reference.hr, &reference.parts, &reference.bars, &script).unwrap();
    render_performance(&version, seed, perf).unwrap()
}

/// First output frame whose truth label is `part` at or after `from`.
pub fn first_frame_of(perf: &Performance, part: u32, from: usize) -> Option<usize> {
    (from..perf.truth.len()).find(|&j| perf.truth.labels[j].is_some_and(|l| l.part_id == part))
}

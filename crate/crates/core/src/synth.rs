//! Synthetic references and performances.
//!
//! A reference is a sequence of parts whose feature frames are the sum of a
//! per-part mean and independent AR(1) layers with different time constants.
//! Performances play a (possibly edited) version with a drifting tempo and
//! additive noise; parts named `recitative ...` are re-sung, mixing the
//! reference with an independent process.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::{FeatureSequence, Resolution};
use crate::mismatch_sim::{GroundTruth, Version};
use crate::score_model::{Bar, BarAnnotations, Part, PartTable, ScoreReference};

const RECITATIVE_PREFIX: &str = "recitative";

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreParams {
    pub parts: usize,
    /// Inclusive range of part lengths in HR frames.
    pub part_len: (usize, usize),
    /// Inclusive range of bar lengths in HR frames.
    pub bar_len: (usize, usize),
    pub dims: usize,
    pub part_mean: f64,
    pub layers: Vec<Layer>,
    /// Every n-th part (ids n, 2n, ...) is a recitative; 0 disables.
    pub recitative_every: usize,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self {
            parts: 10,
            part_len: (1_500, 3_000),
            bar_len: (150, 250),
            dims: 20,
            part_mean: 0.6,
            layers: default_layers(),
            recitative_every: 0,
        }
    }
}

/// AR(1) layer: time constant in HR frames and stationary standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layer {
    pub tau: f64,
    pub amp: f64,
}

pub fn default_layers() -> Vec<Layer> {
    vec![
        Layer { tau: 150.0, amp: 0.7 },
        Layer { tau: 30.0, amp: 1.0 },
        Layer { tau: 5.0, amp: 1.0 },
    ]
}

struct Ar {
    a: f64,
    b: f64,
    state: Vec<f64>,
}

impl Ar {
    fn new(tau: f64, amp: f64, dims: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (-1.0 / tau.max(1e-9)).exp();
        let state = (0..dims).map(|_| amp * gauss(rng)).collect();
        Self {
            a,
            b: amp * (1.0 - a * a).sqrt(),
            state,
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> &[f64] {
        for s in &mut self.state {
            *s = self.a * *s + self.b * gauss(rng);
        }
        &self.state
    }
}

struct Layers(Vec<Ar>);

impl Layers {
    fn new(layers: &[Layer], dims: usize, rng: &mut ChaCha8Rng) -> Self {
        Self(layers.iter().map(|l| Ar::new(l.tau, l.amp, dims, rng)).collect())
    }

    /// Sum of all layers advanced by one frame, added to `out`.
    fn add_next(&mut self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        for ar in &mut self.0 {
            for (o, v) in out.iter_mut().zip(ar.next(rng)) {
                *o += v;
            }
        }
    }
}

fn total_amp(layers: &[Layer]) -> f64 {
    layers.iter().map(|l| l.amp * l.amp).sum::<f64>().sqrt()
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn check_range(what: &str, (lo, hi): (usize, usize)) -> Result<()> {
    if lo == 0 || lo > hi {
        return Err(Error::Invalid(format!("{what} range ({lo}, {hi}) is empty")));
    }
    Ok(())
}

/// Generates an annotated reference. Deterministic per seed.
pub fn synth_reference(seed: u64, p: &ScoreParams) -> Result<ScoreReference> {
    if p.parts == 0 || p.dims == 0 {
        return Err(Error::Invalid("need at least one part and one dimension".into()));
    }
    check_range("part length", p.part_len)?;
    check_range("bar length", p.bar_len)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = Vec::with_capacity(p.parts);
    let mut bars = Vec::new();
    let mut start = 0;
    for k in 1..=p.parts {
        let len = rng.random_range(p.part_len.0..=p.part_len.1);
        let recitative = p.recitative_every > 0 && k % p.recitative_every == 0;
        let name = if recitative {
            format!("{RECITATIVE_PREFIX} {k}")
        } else {
            format!("aria {k}")
        };
        parts.push(Part {
            id: k as u32,
            name,
            start,
            end: start + len - 1,
        });
        let mut onset = start;
        while onset < start + len {
            bars.push(Bar {
                id: bars.len() as u32 + 1,
                part_id: k as u32,
                onset,
            });
            onset += rng.random_range(p.bar_len.0..=p.bar_len.1);
        }
        start += len;
    }
    let total = start;
    let mut layers = Layers::new(&p.layers, p.dims, &mut rng);
    let mut data = Vec::with_capacity(total * p.dims);
    let mut frame = vec![0.0; p.dims];
    for part in &parts {
        let mean: Vec<f64> = (0..p.dims).map(|_| p.part_mean * gauss(&mut rng)).collect();
        for _ in 0..part.len() {
            frame.copy_from_slice(&mean);
            layers.add_next(&mut rng, &mut frame);
            data.extend(frame.iter().map(|v| *v as f32));
        }
    }
    let hr = FeatureSequence::new(data, p.dims, 22_050, Resolution::Hr)?;
    let parts = PartTable::new(parts)?;
    let bars = BarAnnotations::new(bars, &parts)?;
    ScoreReference::new(hr, None, parts, bars)
}

/// Reference of exactly `frames` frames split evenly into `parts` parts and
/// `bars` bars (bars spread as evenly as possible over the parts).
pub fn shaped_reference(seed: u64, frames: usize, parts: usize, bars: usize, dims: usize) -> Result<ScoreReference> {
    if parts == 0 || bars < parts || frames < bars || dims == 0 {
        return Err(Error::Invalid(format!(
            "cannot shape {frames} frames into {parts} parts and {bars} bars"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = |k: usize, n: usize, total: usize| k * total / n;
    let mut part_list = Vec::with_capacity(parts);
    let mut bar_list = Vec::with_capacity(bars);
    for k in 0..parts {
        let (start, end) = (bounds(k, parts, frames), bounds(k + 1, parts, frames));
        part_list.push(Part {
            id: k as u32 + 1,
            name: format!("part {}", k + 1),
            start,
            end: end - 1,
        });
        let (b0, b1) = (bounds(k, parts, bars), bounds(k + 1, parts, bars));
        for b in b0..b1 {
            bar_list.push(Bar {
                id: b as u32 + 1,
                part_id: k as u32 + 1,
                onset: start + (b - b0) * (end - start) / (b1 - b0),
            });
        }
    }
    let mut layers = Layers::new(&default_layers(), dims, &mut rng);
    let mut data = Vec::with_capacity(frames * dims);
    let mut frame = vec![0.0; dims];
    for part in &part_list {
        let mean: Vec<f64> = (0..dims).map(|_| 0.6 * gauss(&mut rng)).collect();
        for _ in 0..part.len() {
            frame.copy_from_slice(&mean);
            layers.add_next(&mut rng, &mut frame);
            data.extend(frame.iter().map(|v| *v as f32));
        }
    }
    let hr = FeatureSequence::new(data, dims, 22_050, Resolution::Hr)?;
    let parts = PartTable::new(part_list)?;
    let bars = BarAnnotations::new(bar_list, &parts)?;
    ScoreReference::new(hr, None, parts, bars)
}

/// Ids of parts whose name marks them as recitatives.
pub fn recitative_parts(parts: &PartTable) -> Vec<u32> {
    parts
        .parts()
        .iter()
        .filter(|p| p.name.starts_with(RECITATIVE_PREFIX))
        .map(|p| p.id)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerfParams {
    /// Range of tempo ratios (version frames per output frame).
    pub tempo: (f64, f64),
    /// Range of output frames between tempo anchors.
    pub tempo_hold: (usize, usize),
    /// Noise standard deviation relative to the feature RMS.
    pub noise: f64,
    pub recitative_parts: Vec<u32>,
    /// Weight of the reference in re-sung recitatives.
    pub recitative_similarity: f64,
    /// Layers of the independent process mixed into re-sung recitatives.
    pub layers: Vec<Layer>,
}

impl Default for PerfParams {
    fn default() -> Self {
        Self {
            tempo: (0.8, 1.25),
            tempo_hold: (200, 800),
            noise: 0.1,
            recitative_parts: Vec::new(),
            recitative_similarity: 0.35,
            layers: default_layers(),
        }
    }
}

/// A rendered performance with ground truth per output frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Performance {
    pub features: FeatureSequence,
    pub truth: GroundTruth,
    /// Version frame played at each output frame.
    pub version_frames: Vec<usize>,
    /// Reference frame played at each output frame (`None` when inserted).
    pub source_frames: Vec<Option<usize>>,
}

fn rms(values: &[f32]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Plays `version` with a smoothly drifting tempo. Tempo anchors are drawn
/// uniformly from `p.tempo` and interpolated linearly in between.
pub fn render_performance(version: &Version, seed: u64, p: &PerfParams) -> Result<Performance> {
    let (lo, hi) = p.tempo;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::Invalid(format!("tempo range ({lo}, {hi}) is invalid")));
    }
    check_range("tempo hold", p.tempo_hold)?;
    let src = &version.features;
    let dims = src.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rms_src = rms(src.as_slice());
    let sigma = p.noise * rms_src;
    let sim = p.recitative_similarity.clamp(0.0, 1.0);
    let other = (1.0 - sim * sim).sqrt();
    let mut layers = Layers::new(&p.layers, dims, &mut rng);
    let norm = total_amp(&p.layers).max(1e-12);
    let mut indep = vec![0.0; dims];

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut version_frames = Vec::new();
    let mut source_frames = Vec::new();
    let mut q = 0.0f64;
    let mut from = rng.random_range(lo..=hi);
    let mut to = rng.random_range(lo..=hi);
    let mut hold = rng.random_range(p.tempo_hold.0..=p.tempo_hold.1);
    let mut k = 0;
    let n = src.len();
    while n > 0 {
        let v = (q.round() as usize).min(n - 1);
        let label = version.truth.labels[v];
        let resung = label.is_some_and(|l| p.recitative_parts.contains(&l.part_id));
        indep.fill(0.0);
        layers.add_next(&mut rng, &mut indep);
        for (d, x) in src.frame(v).iter().enumerate() {
            let mut y = f64::from(*x);
            if resung {
                y = sim * y + other * indep[d] / norm * rms_src;
            }
            y += sigma * gauss(&mut rng);
            data.push(y as f32);
        }
        labels.push(label);
        version_frames.push(v);
        source_frames.push(version.source_frames[v]);

        let tempo = from + (to - from) * k as f64 / hold as f64;
        q += tempo;
        k += 1;
        if k == hold {
            from = to;
            to = rng.random_range(lo..=hi);
            hold = rng.random_range(p.tempo_hold.0..=p.tempo_hold.1);
            k = 0;
        }
        if q >= n as f64 - 0.5 {
            break;
        }
    }
    Ok(Performance {
        features: FeatureSequence::new(data, dims, src.sample_rate_hz, Resolution::Hr)?,
        truth: GroundTruth { labels },
        version_frames,
        source_frames,
    })
}

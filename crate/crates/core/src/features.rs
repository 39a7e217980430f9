//! Audio features and the frame distance shared by both trackers.
//!
//! HR frames are MFCC vectors on a 10 ms grid with a 20 ms analysis window.
//! Input audio is resampled (linear interpolation) to the configured internal
//! rate, then every frame `t` is centered on sample `floor(t * hop)` and covers
//! `window` samples, with mirror padding at both ends of the signal. A stream of
//! `n` samples therefore yields `ceil(n / hop)` frames.
//!
//! Per frame the pipeline is: periodic Hann window, zero-padded FFT, power
//! spectrum, triangular HTK-mel filterbank, `ln(max(energy, 1e-10))`,
//! orthonormal DCT-II. Coefficient 0 is replaced by the log energy of the
//! unwindowed frame.
//!
//! LR frames are a Hann-weighted average over 60 HR frames taken every 30 HR
//! frames, LR frame `l` centered on HR frame `30 l`. Weights falling outside the
//! HR sequence are dropped and the remainder renormalized to sum 1.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HR_HOP_S: f64 = 0.010;
pub const HR_WINDOW_S: f64 = 0.020;
pub const LR_HOP_S: f64 = 0.300;
pub const LR_WINDOW_S: f64 = 0.600;

/// HR frames per LR hop.
pub const LR_DECIMATION: usize = 30;
/// HR frames spanned by one LR window.
pub const LR_SPAN: usize = 60;

const POWER_FLOOR: f64 = 1e-10;
const NORM_FLOOR: f64 = 1e-12;
const MIN_SAMPLE_RATE: u32 = 8_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Hr,
    Lr,
}

impl Resolution {
    pub fn hop_s(self) -> f64 {
        match self {
            Resolution::Hr => HR_HOP_S,
            Resolution::Lr => LR_HOP_S,
        }
    }

    pub fn window_s(self) -> f64 {
        match self {
            Resolution::Hr => HR_WINDOW_S,
            Resolution::Lr => LR_WINDOW_S,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::Hr => "hr",
            Resolution::Lr => "lr",
        }
    }
}

/// Row-major matrix of feature frames plus the framing metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    data: Vec<f32>,
    dims: usize,
    pub sample_rate_hz: u32,
    pub resolution: Resolution,
}

impl FeatureSequence {
    /// Builds a sequence from row-major data. Fails when `dims` is zero, the
    /// data length is not a multiple of `dims`, or a value is not finite.
    pub fn new(
        data: Vec<f32>,
        dims: usize,
        sample_rate_hz: u32,
        resolution: Resolution,
    ) -> Result<Self> {
        if dims == 0 {
            return Err(Error::Invalid("feature dimension must be positive".into()));
        }
        if data.len() % dims != 0 {
            return Err(Error::Invalid(format!(
                "{} values do not form whole frames of {} dims",
                data.len(),
                dims
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite value in frame {}",
                pos / dims
            )));
        }
        Ok(Self {
            data,
            dims,
            sample_rate_hz,
            resolution,
        })
    }

    pub fn from_frames(
        frames: &[Vec<f32>],
        sample_rate_hz: u32,
        resolution: Resolution,
    ) -> Result<Self> {
        let dims = frames.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(frames.len() * dims);
        for f in frames {
            if f.len() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    got: f.len(),
                });
            }
            data.extend_from_slice(f);
        }
        Self::new(data, dims, sample_rate_hz, resolution)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn hop_s(&self) -> f64 {
        self.resolution.hop_s()
    }

    pub fn window_s(&self) -> f64 {
        self.resolution.window_s()
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dims)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Frames `range` as a new sequence with the same metadata.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            data: self.data[range.start * self.dims..range.end * self.dims].to_vec(),
            dims: self.dims,
            sample_rate_hz: self.sample_rate_hz,
            resolution: self.resolution,
        }
    }

    /// Euclidean norm of every frame, for use with [`cosine_distance_normed`].
    pub fn norms(&self) -> Vec<f64> {
        self.frames().map(norm).collect()
    }
}

pub(crate) fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// `1 - cos(a, b)`, or 1.0 when either vector is (numerically) zero.
pub fn cosine_distance(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(cosine_distance_normed(a, norm(a), b, norm(b)))
}

/// Cosine distance with precomputed norms. Slices must have equal length.
#[inline]
pub fn cosine_distance_normed(a: &[f32], norm_a: f64, b: &[f32], norm_b: f64) -> f64 {
    if norm_a < NORM_FLOOR || norm_b < NORM_FLOOR {
        return 1.0;
    }
    (1.0 - dot(a, b) / (norm_a * norm_b)).clamp(0.0, 2.0)
}

/// Dot product in f64 with four independent accumulators.
#[inline]
fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += f64::from(x[k]) * f64::from(y[k]);
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    /// Input is resampled to this rate before analysis.
    pub internal_rate_hz: u32,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub fft_size: usize,
    pub fmin_hz: f64,
    /// `None` means Nyquist of the internal rate.
    pub fmax_hz: Option<f64>,
    /// Replace coefficient 0 by the frame log energy.
    pub log_energy: bool,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            internal_rate_hz: 22_050,
            n_mels: 40,
            n_coeffs: 20,
            fft_size: 512,
            fmin_hz: 0.0,
            fmax_hz: None,
            log_energy: true,
        }
    }
}

impl MfccConfig {
    /// Analysis window length in samples at the internal rate.
    pub fn window_len(&self) -> usize {
        (f64::from(self.internal_rate_hz) * HR_WINDOW_S).round() as usize
    }

    /// Center sample of HR frame `t` (`floor(t * rate * hop)`).
    pub fn frame_center(&self, t: usize) -> usize {
        (t as u128 * u128::from(self.internal_rate_hz) / 100) as usize
    }

    /// Number of HR frames produced from `n` samples at the internal rate.
    pub fn frame_count(&self, n: usize) -> usize {
        let rate = self.internal_rate_hz as u128;
        ((n as u128 * 100).div_ceil(rate)) as usize
    }
}

/// Triangular HTK mel filterbank, one row of power-spectrum weights per band.
pub fn mel_filterbank(cfg: &MfccConfig) -> Vec<Vec<f64>> {
    let sr = f64::from(cfg.internal_rate_hz);
    let fmax = cfg.fmax_hz.unwrap_or(sr / 2.0);
    let n_bins = cfg.fft_size / 2 + 1;
    let to_mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let to_hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let (mlo, mhi) = (to_mel(cfg.fmin_hz), to_mel(fmax));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| to_hz(mlo + (mhi - mlo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    (1..=cfg.n_mels)
        .map(|b| {
            let (lo, mid, hi) = (edges[b - 1], edges[b], edges[b + 1]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * sr / cfg.fft_size as f64;
                    if f > lo && f <= mid {
                        (f - lo) / (mid - lo)
                    } else if f > mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Streaming linear-interpolation resampler. Output sample `n` sits at input
/// position `n * in_rate / out_rate`; results do not depend on chunking.
#[derive(Debug, Clone)]
struct Resampler {
    in_rate: u64,
    out_rate: u64,
    buf: Vec<f64>,
    buf_start: u64,
    received: u64,
    next_out: u64,
}

impl Resampler {
    fn new(in_rate: u32, out_rate: u32) -> Self {
        Self {
            in_rate: in_rate.into(),
            out_rate: out_rate.into(),
            buf: Vec::new(),
            buf_start: 0,
            received: 0,
            next_out: 0,
        }
    }

    fn interpolate(&self, n: u64, last: Option<u64>) -> Option<f64> {
        let num = n * self.in_rate;
        let idx = num / self.out_rate;
        let frac = num % self.out_rate;
        let at = |i: u64| self.buf[(i - self.buf_start) as usize];
        if frac == 0 {
            return (idx < self.received).then(|| at(idx));
        }
        if idx + 1 < self.received {
            let (a, b) = (at(idx), at(idx + 1));
            return Some(a + (b - a) * frac as f64 / self.out_rate as f64);
        }
        match last {
            Some(l) if idx <= l => Some(at(l.min(idx))),
            _ => None,
        }
    }

    fn push(&mut self, input: &[f64], out: &mut Vec<f64>) {
        self.buf.extend_from_slice(input);
        self.received += input.len() as u64;
        self.drain(None, out);
    }

    fn finish(&mut self, out: &mut Vec<f64>) {
        if self.received > 0 {
            self.drain(Some(self.received - 1), out);
        }
    }

    fn drain(&mut self, last: Option<u64>, out: &mut Vec<f64>) {
        while let Some(v) = self.interpolate(self.next_out, last) {
            out.push(v);
            self.next_out += 1;
        }
        let keep_from = (self.next_out * self.in_rate / self.out_rate).min(self.received);
        if keep_from > self.buf_start {
            self.buf.drain(..(keep_from - self.buf_start) as usize);
            self.buf_start = keep_from;
        }
    }
}

/// Maps a possibly out-of-range sample index into `[0, n)` by mirroring about
/// the end samples (no edge repeat).
fn mirror(k: i64, n: Option<u64>) -> u64 {
    match n {
        None => k.unsigned_abs(),
        Some(1) => 0,
        Some(n) => {
            let n = n as i64;
            let period = 2 * (n - 1);
            let m = k.rem_euclid(period);
            (if m >= n { period - m } else { m }) as u64
        }
    }
}

/// Incremental MFCC extractor: push PCM chunks, receive HR frames as soon as
/// their analysis window is complete.
pub struct MfccStream {
    cfg: MfccConfig,
    input_rate: u32,
    resampler: Option<Resampler>,
    samples: Vec<f64>,
    samples_start: u64,
    received: u64,
    next_frame: usize,
    half: usize,
    window: Vec<f64>,
    filters: Vec<Vec<f64>>,
    dct: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
    spectrum: Vec<Complex<f64>>,
    finished: bool,
}

/// One emitted HR frame, or the reason it was rejected.
pub type FrameResult = Result<Vec<f32>>;

impl MfccStream {
    pub fn new(input_rate_hz: u32, cfg: MfccConfig) -> Result<Self> {
        if input_rate_hz < MIN_SAMPLE_RATE {
            return Err(Error::UnsupportedSampleRate(input_rate_hz));
        }
        if cfg.internal_rate_hz < MIN_SAMPLE_RATE {
            return Err(Error::UnsupportedSampleRate(cfg.internal_rate_hz));
        }
        let wlen = cfg.window_len();
        if cfg.fft_size < wlen || cfg.n_coeffs == 0 || cfg.n_mels < cfg.n_coeffs {
            return Err(Error::Invalid(format!(
                "bad MFCC configuration: fft_size {} window {} mels {} coeffs {}",
                cfg.fft_size, wlen, cfg.n_mels, cfg.n_coeffs
            )));
        }
        let window = (0..wlen)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / wlen as f64).cos())
            .collect();
        let m = cfg.n_mels as f64;
        let dct = (0..cfg.n_coeffs)
            .map(|n| {
                let scale = if n == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
                (0..cfg.n_mels)
                    .map(|b| scale * (PI * n as f64 * (b as f64 + 0.5) / m).cos())
                    .collect()
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        let resampler =
            (input_rate_hz != cfg.internal_rate_hz).then(|| Resampler::new(input_rate_hz, cfg.internal_rate_hz));
        Ok(Self {
            filters: mel_filterbank(&cfg),
            spectrum: vec![Complex::default(); cfg.fft_size],
            half: wlen / 2,
            input_rate: input_rate_hz,
            resampler,
            samples: Vec::new(),
            samples_start: 0,
            received: 0,
            next_frame: 0,
            window,
            dct,
            fft,
            cfg,
            finished: false,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    pub fn input_rate(&self) -> u32 {
        self.input_rate
    }

    pub fn dims(&self) -> usize {
        self.cfg.n_coeffs
    }

    /// Frames emitted so far.
    pub fn frames_emitted(&self) -> usize {
        self.next_frame
    }

    pub fn push(&mut self, pcm: &[f32]) -> Vec<FrameResult> {
        let input: Vec<f64> = pcm.iter().map(|&s| f64::from(s)).collect();
        match &mut self.resampler {
            Some(r) => {
                let mut out = Vec::new();
                r.push(&input, &mut out);
                self.absorb(&out);
            }
            None => self.absorb(&input),
        }
        self.emit(None)
    }

    /// Flushes the trailing frames (mirror padding at the end of the signal).
    pub fn finish(&mut self) -> Vec<FrameResult> {
        if self.finished {
            return Vec::new();
        }
        self.finished = true;
        if let Some(r) = &mut self.resampler {
            let mut out = Vec::new();
            r.finish(&mut out);
            self.absorb(&out);
        }
        if self.received == 0 {
            return Vec::new();
        }
        self.emit(Some(self.received))
    }

    fn absorb(&mut self, resampled: &[f64]) {
        self.samples.extend_from_slice(resampled);
        self.received += resampled.len() as u64;
    }

    fn emit(&mut self, total: Option<u64>) -> Vec<FrameResult> {
        let mut out = Vec::new();
        loop {
            let center = self.cfg.frame_center(self.next_frame) as u64;
            let ready = match total {
                None => center + (self.half as u64) < self.received,
                Some(n) => center < n,
            };
            if !ready {
                break;
            }
            out.push(self.compute_frame(center, total));
            self.next_frame += 1;
        }
        let next_center = self.cfg.frame_center(self.next_frame) as u64;
        let keep_from = next_center.saturating_sub(self.half as u64).min(self.received);
        if keep_from > self.samples_start {
            self.samples.drain(..(keep_from - self.samples_start) as usize);
            self.samples_start = keep_from;
        }
        out
    }

    fn compute_frame(&mut self, center: u64, total: Option<u64>) -> FrameResult {
        let wlen = self.window.len();
        let first = center as i64 - self.half as i64;
        let mut energy = 0.0;
        for s in self.spectrum.iter_mut() {
            *s = Complex::default();
        }
        for n in 0..wlen {
            let idx = mirror(first + n as i64, total);
            let x = self.samples[(idx - self.samples_start) as usize];
            if !x.is_finite() {
                return Err(Error::NonFiniteSample {
                    frame: self.next_frame,
                    sample: idx as usize,
                });
            }
            energy += x * x;
            self.spectrum[n] = Complex::new(x * self.window[n], 0.0);
        }
        self.fft.process(&mut self.spectrum);
        let power: Vec<f64> = self.spectrum[..self.cfg.fft_size / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect();
        let log_mel: Vec<f64> = self
            .filters
            .iter()
            .map(|w| {
                let e: f64 = w.iter().zip(&power).map(|(a, b)| a * b).sum();
                e.max(POWER_FLOOR).ln()
            })
            .collect();
        let mut coeffs: Vec<f32> = self
            .dct
            .iter()
            .map(|row| row.iter().zip(&log_mel).map(|(a, b)| a * b).sum::<f64>() as f32)
            .collect();
        if self.cfg.log_energy {
            coeffs[0] = energy.max(POWER_FLOOR).ln() as f32;
        }
        Ok(coeffs)
    }
}

/// One-shot MFCC extraction. Frames containing non-finite samples are
/// reported as errors.
pub fn extract_mfcc(pcm: &[f32], sample_rate_hz: u32, cfg: &MfccConfig) -> Result<FeatureSequence> {
    let mut stream = MfccStream::new(sample_rate_hz, cfg.clone())?;
    let mut frames = stream.push(pcm);
    frames.extend(stream.finish());
    let frames = frames.into_iter().collect::<Result<Vec<_>>>()?;
    if frames.is_empty() {
        return Ok(FeatureSequence {
            data: Vec::new(),
            dims: cfg.n_coeffs,
            sample_rate_hz,
            resolution: Resolution::Hr,
        });
    }
    FeatureSequence::from_frames(&frames, sample_rate_hz, Resolution::Hr)
}

fn lr_weights() -> [f64; LR_SPAN] {
    std::array::from_fn(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / LR_SPAN as f64).cos())
}

/// Number of LR frames derived from `hr_len` HR frames.
pub fn lr_frame_count(hr_len: usize) -> usize {
    hr_len.div_ceil(LR_DECIMATION)
}

fn lr_frame<'a>(
    weights: &[f64; LR_SPAN],
    dims: usize,
    l: usize,
    hr_len: usize,
    hr: impl Fn(usize) -> &'a [f32],
) -> Vec<f32> {
    let first = (l * LR_DECIMATION) as i64 - (LR_SPAN / 2) as i64;
    let mut acc = vec![0.0f64; dims];
    let mut wsum = 0.0;
    for (n, &w) in weights.iter().enumerate() {
        let i = first + n as i64;
        if i < 0 || i as usize >= hr_len || w == 0.0 {
            continue;
        }
        for (a, &x) in acc.iter_mut().zip(hr(i as usize)) {
            *a += w * f64::from(x);
        }
        wsum += w;
    }
    acc.into_iter().map(|a| (a / wsum) as f32).collect()
}

/// Hann-weighted decimation of an HR sequence to the LR grid.
pub fn downsample_lr(hr: &FeatureSequence) -> Result<FeatureSequence> {
    if hr.resolution != Resolution::Hr {
        return Err(Error::Invalid("downsample_lr expects an HR sequence".into()));
    }
    let weights = lr_weights();
    let dims = hr.dims();
    let mut data = Vec::with_capacity(lr_frame_count(hr.len()) * dims);
    for l in 0..lr_frame_count(hr.len()) {
        data.extend(lr_frame(&weights, dims, l, hr.len(), |i| hr.frame(i)));
    }
    Ok(FeatureSequence {
        data,
        dims,
        sample_rate_hz: hr.sample_rate_hz,
        resolution: Resolution::Lr,
    })
}

/// Streaming counterpart of [`downsample_lr`]: LR frame `l` is emitted once HR
/// frame `30 l + 29` has been pushed; [`LrDownsampler::flush`] emits the
/// right-truncated tail. Output is bit-identical to the batch version.
#[derive(Debug, Clone)]
pub struct LrDownsampler {
    dims: usize,
    weights: [f64; LR_SPAN],
    ring: Vec<f32>,
    pushed: usize,
    next_lr: usize,
}

impl LrDownsampler {
    pub fn new(dims: usize) -> Self {
        Self {
            dims,
            weights: lr_weights(),
            ring: vec![0.0; LR_SPAN * dims],
            pushed: 0,
            next_lr: 0,
        }
    }

    /// HR frames pushed so far.
    pub fn pushed(&self) -> usize {
        self.pushed
    }

    pub fn push(&mut self, frame: &[f32]) -> Result<Option<Vec<f32>>> {
        if frame.len() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                got: frame.len(),
            });
        }
        let slot = self.pushed % LR_SPAN;
        self.ring[slot * self.dims..(slot + 1) * self.dims].copy_from_slice(frame);
        self.pushed += 1;
        let l = self.next_lr;
        if self.pushed == l * LR_DECIMATION + LR_SPAN / 2 {
            self.next_lr += 1;
            return Ok(Some(self.frame_at(l, usize::MAX)));
        }
        Ok(None)
    }

    pub fn flush(&mut self) -> Vec<Vec<f32>> {
        let mut out = Vec::new();
        while self.next_lr < lr_frame_count(self.pushed) {
            out.push(self.frame_at(self.next_lr, self.pushed));
            self.next_lr += 1;
        }
        out
    }

    fn frame_at(&self, l: usize, hr_len: usize) -> Vec<f32> {
        let ring = &self.ring;
        let dims = self.dims;
        lr_frame(&self.weights, dims, l, hr_len.min(self.pushed), |i| {
            let slot = i % LR_SPAN;
            &ring[slot * dims..(slot + 1) * dims]
        })
    }
}

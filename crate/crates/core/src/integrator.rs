//! Drives both trackers from one HR feature stream and arbitrates the final
//! position.
//!
//! LR frames are derived from the incoming HR frames on the fly; LR frame `l`
//! becomes available once HR frame `30 l + 29` has arrived and its report is
//! held until the next one. While a reliable LR report disagrees with the HR
//! position, the HR tracker is reset to the middle of the LR interval.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSequence, LrDownsampler, LR_DECIMATION};
use crate::hr_tracker::{HrConfig, HrTracker};
use crate::lr_tracker::{LrReport, LrTracker};
use crate::score_model::ScoreReference;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "joltw")]
    Joltw,
    #[serde(rename = "baseline+lr")]
    BaselineLr,
    #[serde(rename = "joltw+lr")]
    JoltwLr,
}

impl Model {
    pub const ALL: [Model; 4] = [Model::Baseline, Model::Joltw, Model::BaselineLr, Model::JoltwLr];

    pub fn jumps(self) -> bool {
        matches!(self, Model::Joltw | Model::JoltwLr)
    }

    pub fn uses_lr(self) -> bool {
        matches!(self, Model::BaselineLr | Model::JoltwLr)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Model::Baseline => "baseline",
            Model::Joltw => "joltw",
            Model::BaselineLr => "baseline+lr",
            Model::JoltwLr => "joltw+lr",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Model::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "unknown model {s:?} (expected baseline, joltw, baseline+lr or joltw+lr)"
                ))
            })
    }
}

/// How an LR report is mapped to an HR interval at a later target frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrAnchor {
    /// `30 x_lr` as reported, ignoring the frames elapsed since.
    Literal,
    /// `30 x_lr` shifted by the target frames elapsed since the LR frame.
    Extrapolate,
}

impl LrAnchor {
    pub const ALL: [LrAnchor; 2] = [LrAnchor::Literal, LrAnchor::Extrapolate];

    pub fn as_str(self) -> &'static str {
        match self {
            LrAnchor::Literal => "literal",
            LrAnchor::Extrapolate => "extrapolate",
        }
    }
}

impl FromStr for LrAnchor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LrAnchor::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown LR anchor {s:?} (expected literal or extrapolate)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub model: Model,
    pub c: usize,
    pub start: usize,
    /// HR frames after a reset during which no further reset fires.
    pub refractory: usize,
    /// When the LR tracker is unreliable, report its position instead of the
    /// HR one.
    pub lr_final_when_unreliable: bool,
    pub lr_anchor: LrAnchor,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            model: Model::JoltwLr,
            c: 4000,
            start: 0,
            refractory: LR_DECIMATION,
            lr_final_when_unreliable: false,
            lr_anchor: LrAnchor::Extrapolate,
        }
    }
}

impl TrackerConfig {
    pub fn for_model(model: Model) -> Self {
        Self {
            model,
            ..Self::default()
        }
    }

    pub fn hr_config(&self) -> HrConfig {
        HrConfig {
            c: self.c,
            jumps: self.model.jumps(),
            ..HrConfig::default()
        }
    }
}

/// Externally visible state after one target frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionReport {
    pub target_frame: usize,
    pub hr_pos: usize,
    pub lr_pos: Option<usize>,
    pub lr_interval: Option<(usize, usize)>,
    #[serde(with = "bit")]
    pub rf: bool,
    pub final_pos: usize,
    pub part_id: Option<u32>,
    pub bar_id: Option<u32>,
    pub reset_flag: bool,
}

mod bit {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            n => Err(serde::de::Error::custom(format!("rf must be 0 or 1, got {n}"))),
        }
    }
}

impl PositionReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Parses JSON-lines reports; blank lines are skipped.
pub fn parse_reports(text: &str) -> Result<Vec<PositionReport>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::parse("report stream", n as u64 + 1, e.to_string()))
        })
        .collect()
}

/// Wall time of the last step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepTiming {
    pub hr: Duration,
    pub lr: Option<Duration>,
}

pub struct Integrator {
    reference: Arc<ScoreReference>,
    cfg: TrackerConfig,
    hr: HrTracker,
    lr: Option<LrTracker>,
    downsampler: LrDownsampler,
    last_lr: Option<LrReport>,
    next_frame: usize,
    refractory_left: usize,
    timing: StepTiming,
}

impl Integrator {
    pub fn new(reference: Arc<ScoreReference>, cfg: TrackerConfig) -> Result<Self> {
        let hr = HrTracker::new(Arc::clone(&reference), cfg.hr_config(), cfg.start)?;
        let lr = cfg.model.uses_lr().then(|| LrTracker::new(Arc::clone(&reference)));
        Ok(Self {
            downsampler: LrDownsampler::new(reference.hr.dims()),
            reference,
            cfg,
            hr,
            lr,
            last_lr: None,
            next_frame: 0,
            refractory_left: 0,
            timing: StepTiming::default(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn hr(&self) -> &HrTracker {
        &self.hr
    }

    pub fn last_lr(&self) -> Option<&LrReport> {
        self.last_lr.as_ref()
    }

    pub fn timing(&self) -> StepTiming {
        self.timing
    }

    /// Index the next target frame will get.
    pub fn next_frame(&self) -> usize {
        self.next_frame
    }

    /// Consumes one target frame. Malformed frames (wrong dimension, non-finite
    /// values, extraction errors) are skipped with a warning and yield `None`;
    /// they still consume a target frame index.
    pub fn push(&mut self, frame: Result<&[f32]>) -> Option<PositionReport> {
        let j = self.next_frame;
        self.next_frame += 1;
        let y = match frame {
            Ok(y) if y.len() == self.reference.hr.dims() && y.iter().all(|v| v.is_finite()) => y,
            Ok(y) => {
                log::warn!("target frame {j}: malformed ({} values), skipped", y.len());
                return None;
            }
            Err(e) => {
                log::warn!("target frame {j}: {e}, skipped");
                return None;
            }
        };
        Some(self.step_at(j, y).expect("frame validated"))
    }

    /// Steps both trackers with a validated frame and arbitrates.
    pub fn step(&mut self, y: &[f32]) -> Result<PositionReport> {
        let j = self.next_frame;
        self.next_frame += 1;
        self.step_at(j, y)
    }

    fn step_at(&mut self, j: usize, y: &[f32]) -> Result<PositionReport> {
        let t0 = Instant::now();
        let hr_pos = self.hr.step(y)?;
        self.timing.hr = t0.elapsed();
        self.timing.lr = None;
        if let Some(lr) = &mut self.lr {
            if let Some(lr_frame) = self.downsampler.push(y)? {
                let t1 = Instant::now();
                self.last_lr = Some(lr.push(&lr_frame)?);
                self.timing.lr = Some(t1.elapsed());
            }
        }
        Ok(self.integrate_step(j, hr_pos))
    }

    /// LR interval mapped to target frame `j`, with its middle.
    pub fn lr_interval_at(&self, report: &LrReport, j: usize) -> ((usize, usize), usize) {
        let last = self.reference.hr_len() - 1;
        let center = match self.cfg.lr_anchor {
            LrAnchor::Literal => return (report.interval, report.hr_center().min(last)),
            LrAnchor::Extrapolate => report.hr_center() + j.saturating_sub(report.lr_frame * LR_DECIMATION),
        };
        let center = center.min(last);
        let lo = center.saturating_sub(LR_DECIMATION).min(last);
        let hi = (center + LR_DECIMATION).min(last);
        ((lo, hi), center)
    }

    /// Arbitration for target frame `j` given the HR position just computed and
    /// the most recent LR report.
    pub fn integrate_step(&mut self, j: usize, hr_pos: usize) -> PositionReport {
        let mut final_pos = hr_pos;
        let mut reset_flag = false;
        let mut lr_pos = None;
        let mut lr_interval = None;
        let mut rf = false;
        if let Some(report) = self.last_lr {
            let (interval, middle) = self.lr_interval_at(&report, j);
            lr_pos = Some(report.x_lr);
            lr_interval = Some(interval);
            rf = report.rf;
            let inside = (interval.0..=interval.1).contains(&hr_pos);
            if rf && !inside && self.refractory_left == 0 {
                final_pos = middle;
                self.hr
                    .reset(middle, report.seg_cost)
                    .expect("LR interval lies within the score");
                self.refractory_left = self.cfg.refractory;
                reset_flag = true;
            } else if !rf && self.cfg.lr_final_when_unreliable {
                final_pos = middle;
            }
        }
        self.refractory_left = self.refractory_left.saturating_sub(1);
        let loc = self.reference.locate(final_pos);
        PositionReport {
            target_frame: j,
            hr_pos,
            lr_pos,
            lr_interval,
            rf,
            final_pos,
            part_id: loc.map(|l| l.part_id),
            bar_id: loc.and_then(|l| l.bar_id),
            reset_flag,
        }
    }

    /// Installs an LR report as the most recent one (used to drive arbitration
    /// directly).
    pub fn set_lr_report(&mut self, report: Option<LrReport>) {
        self.last_lr = report;
    }
}

/// Tracks a whole target sequence, one report per frame.
pub fn run_tracking(
    reference: Arc<ScoreReference>,
    target: &FeatureSequence,
    cfg: &TrackerConfig,
) -> Result<Vec<PositionReport>> {
    if target.dims() != reference.hr.dims() && !target.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: reference.hr.dims(),
            got: target.dims(),
        });
    }
    let mut integrator = Integrator::new(reference, cfg.clone())?;
    target.frames().map(|y| integrator.step(y)).collect()
}

//! Structurally edited target versions with exact ground truth.
//!
//! An [`EditScript`] removes parts, repeats parts, replays ranges of parts
//! (backward jumps) and inserts unrelated segments. Applying it to an
//! annotated feature sequence concatenates whole part ranges (hard cuts) and
//! labels every output frame with the part and bar it came from.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::score_model::{locate, BarAnnotations, PartTable};

pub const MIN_REMOVAL_RATIO: f64 = 1.0 / 3.0;
pub const MAX_REMOVAL_RATIO: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InsertSource {
    /// Copy `length` frames of the source starting at `start`.
    Region { start: usize },
    /// Gaussian frames with the source's per-dimension RMS, seeded.
    Noise { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    RemovePart { part_id: u32 },
    RepeatPart { part_id: u32 },
    /// After `after_part`, play parts `from_part..=to_part` again.
    Replay {
        after_part: u32,
        from_part: u32,
        to_part: u32,
    },
    /// Insert an unscored segment after `after_part` (0 = before the first part).
    InsertSegment {
        after_part: u32,
        length: usize,
        source: InsertSource,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditScript {
    pub seed: u64,
    pub removal_ratio: f64,
    pub ops: Vec<EditOp>,
}

impl EditScript {
    pub fn identity() -> Self {
        Self {
            seed: 0,
            removal_ratio: 0.0,
            ops: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn removed(&self) -> impl Iterator<Item = u32> + '_ {
        self.ops.iter().filter_map(|op| match op {
            EditOp::RemovePart { part_id } => Some(*part_id),
            _ => None,
        })
    }

    /// Checks the script against a part table.
    pub fn validate(&self, parts: &PartTable, source_len: usize) -> Result<()> {
        let k = parts.len() as u32;
        let mut removed = vec![false; parts.len() + 1];
        let valid = |id: u32| (1..=k).contains(&id);
        for op in &self.ops {
            if let EditOp::RemovePart { part_id } = op {
                if !valid(*part_id) {
                    return Err(Error::Invalid(format!("remove: unknown part {part_id}")));
                }
                if std::mem::replace(&mut removed[*part_id as usize], true) {
                    return Err(Error::Invalid(format!("part {part_id} removed twice")));
                }
            }
        }
        let survives = |id: u32| valid(id) && !removed[id as usize];
        for op in &self.ops {
            match op {
                EditOp::RemovePart { .. } => {}
                EditOp::RepeatPart { part_id } => {
                    if !survives(*part_id) {
                        return Err(Error::Invalid(format!(
                            "repeat: part {part_id} is unknown or removed"
                        )));
                    }
                }
                EditOp::Replay {
                    after_part,
                    from_part,
                    to_part,
                } => {
                    if !survives(*after_part) || !valid(*from_part) || !valid(*to_part) || from_part > to_part {
                        return Err(Error::Invalid(format!(
                            "replay {from_part}..={to_part} after {after_part} is invalid"
                        )));
                    }
                }
                EditOp::InsertSegment {
                    after_part,
                    length,
                    source,
                } => {
                    if *after_part != 0 && !survives(*after_part) {
                        return Err(Error::Invalid(format!(
                            "insert: anchor part {after_part} is unknown or removed"
                        )));
                    }
                    if *length == 0 {
                        return Err(Error::Invalid("insert: empty segment".into()));
                    }
                    if let InsertSource::Region { start } = source {
                        if start.checked_add(*length).is_none_or(|end| end > source_len) {
                            return Err(Error::Invalid(format!(
                                "insert: region {start}+{length} beyond {source_len} frames"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    /// Parts followed by applause; the repetition is drawn from these.
    pub applause_parts: Vec<u32>,
    pub insertions: usize,
    /// Inclusive frame-length range of inserted segments.
    pub insert_len: (usize, usize),
}

impl SimParams {
    /// Marks every `n`-th part (ids `n, 2n, ...`) as applause-followed.
    pub fn applause_every(n: usize, parts: &PartTable) -> Self {
        let n = n.max(1);
        Self {
            applause_parts: (1..=parts.len() as u32).filter(|id| *id as usize % n == 0).collect(),
            insertions: 0,
            insert_len: (300, 1_000),
        }
    }
}

/// Samples a removal ratio in `[1/3, 2/3]`, removes `floor(ratio * K)` random
/// parts and repeats one surviving applause-followed part. Deterministic per
/// seed.
pub fn generate_script(parts: &PartTable, seed: u64, params: &SimParams) -> Result<EditScript> {
    let k = parts.len();
    if k < 3 {
        return Err(Error::Invalid(format!("need at least 3 parts, have {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ratio = rng.random_range(MIN_REMOVAL_RATIO..=MAX_REMOVAL_RATIO);
    let n_remove = ((ratio * k as f64).floor() as usize).min(k - 1);
    let mut removed: Vec<u32> = sample(&mut rng, k, n_remove)
        .into_iter()
        .map(|i| i as u32 + 1)
        .collect();
    removed.sort_unstable();
    let mut ops: Vec<EditOp> = removed
        .iter()
        .map(|&part_id| EditOp::RemovePart { part_id })
        .collect();
    let survivors: Vec<u32> = (1..=k as u32).filter(|id| removed.binary_search(id).is_err()).collect();
    let candidates: Vec<u32> = params
        .applause_parts
        .iter()
        .copied()
        .filter(|id| survivors.contains(id))
        .collect();
    if candidates.is_empty() {
        log::warn!("seed {seed}: no applause-followed part survives, no repetition");
    } else {
        let part_id = candidates[rng.random_range(0..candidates.len())];
        ops.push(EditOp::RepeatPart { part_id });
    }
    for _ in 0..params.insertions {
        let anchor = rng.random_range(0..=survivors.len());
        let after_part = if anchor == 0 { 0 } else { survivors[anchor - 1] };
        let length = rng.random_range(params.insert_len.0..=params.insert_len.1.max(params.insert_len.0));
        ops.push(EditOp::InsertSegment {
            after_part,
            length,
            source: InsertSource::Noise { seed: rng.random() },
        });
    }
    Ok(EditScript {
        seed,
        removal_ratio: ratio,
        ops,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruthLabel {
    pub part_id: u32,
    pub bar_id: Option<u32>,
}

/// Per output frame: the score label, or `None` for inserted/unannotated frames.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundTruth {
    pub labels: Vec<Option<TruthLabel>>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,part_id,bar_id\n");
        for (i, l) in self.labels.iter().enumerate() {
            let (p, b) = match l {
                Some(l) => (i64::from(l.part_id), l.bar_id.map_or(-1, i64::from)),
                None => (-1, -1),
            };
            let _ = writeln!(out, "{i},{p},{b}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        const WHAT: &str = "ground truth";
        let mut labels = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n as u64 + 1;
            let line = line.trim();
            if line.is_empty() || (n == 0 && line.starts_with("frame")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::parse(WHAT, line_no, format!("expected 3 fields, got {}", fields.len())));
            }
            let num = |s: &str| {
                s.parse::<i64>()
                    .map_err(|e| Error::parse(WHAT, line_no, format!("{s:?}: {e}")))
            };
            let (frame, part, bar) = (num(fields[0])?, num(fields[1])?, num(fields[2])?);
            if frame != labels.len() as i64 {
                return Err(Error::parse(
                    WHAT,
                    line_no,
                    format!("frame {frame} out of sequence (expected {})", labels.len()),
                ));
            }
            let id = |v: i64| {
                u32::try_from(v).map_err(|_| Error::parse(WHAT, line_no, format!("bad id {v}")))
            };
            labels.push(match (part, bar) {
                (-1, -1) => None,
                (p, -1) => Some(TruthLabel {
                    part_id: id(p)?,
                    bar_id: None,
                }),
                (p, b) => Some(TruthLabel {
                    part_id: id(p)?,
                    bar_id: Some(id(b)?),
                }),
            });
        }
        Ok(Self { labels })
    }
}

/// A modified version and its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Version {
    pub features: FeatureSequence,
    pub truth: GroundTruth,
    /// Source frame of every output frame (`None` for inserted frames).
    pub source_frames: Vec<Option<usize>>,
}

enum Piece {
    Frames(std::ops::Range<usize>),
    Inserted { length: usize, source: InsertSource },
}

/// Builds the edited sequence: unannotated prefix, surviving parts in order
/// with anchored repeats/replays/insertions after each, unannotated suffix.
pub fn apply_script(
    source: &FeatureSequence,
    parts: &PartTable,
    bars: &BarAnnotations,
    script: &EditScript,
) -> Result<Version> {
    script.validate(parts, source.len())?;
    if let Some(last) = parts.last_frame() {
        if last >= source.len() {
            return Err(Error::Invalid(format!(
                "part table ends at {last}, source has {} frames",
                source.len()
            )));
        }
    }
    let removed: Vec<u32> = script.removed().collect();
    let range_of = |id: u32| {
        let p = parts.part(id).expect("validated");
        p.start..p.end + 1
    };
    let mut pieces = Vec::new();
    let anchored = |after: u32, pieces: &mut Vec<Piece>| {
        for op in &script.ops {
            match op {
                EditOp::RepeatPart { part_id } if *part_id == after => {
                    pieces.push(Piece::Frames(range_of(*part_id)))
                }
                EditOp::Replay {
                    after_part,
                    from_part,
                    to_part,
                } if *after_part == after => {
                    for id in *from_part..=*to_part {
                        if !removed.contains(&id) {
                            pieces.push(Piece::Frames(range_of(id)));
                        }
                    }
                }
                EditOp::InsertSegment {
                    after_part,
                    length,
                    source,
                } if *after_part == after => pieces.push(Piece::Inserted {
                    length: *length,
                    source: source.clone(),
                }),
                _ => {}
            }
        }
    };
    let first = parts.parts().first().map_or(source.len(), |p| p.start);
    if first > 0 {
        pieces.push(Piece::Frames(0..first));
    }
    anchored(0, &mut pieces);
    for p in parts.parts() {
        if removed.contains(&p.id) {
            continue;
        }
        pieces.push(Piece::Frames(range_of(p.id)));
        anchored(p.id, &mut pieces);
    }
    if let Some(last) = parts.last_frame() {
        if last + 1 < source.len() {
            pieces.push(Piece::Frames(last + 1..source.len()));
        }
    }

    let dims = source.dims();
    let rms: Vec<f64> = (0..dims)
        .map(|d| {
            let n = source.len().max(1) as f64;
            (source.frames().map(|f| f64::from(f[d]).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut source_frames = Vec::new();
    for piece in pieces {
        match piece {
            Piece::Frames(r) => {
                for i in r {
                    data.extend_from_slice(source.frame(i));
                    labels.push(locate(parts, bars, i).map(|l| TruthLabel {
                        part_id: l.part_id,
                        bar_id: l.bar_id,
                    }));
                    source_frames.push(Some(i));
                }
            }
            Piece::Inserted { length, source: src } => {
                match src {
                    InsertSource::Region { start } => {
                        data.extend_from_slice(&source.as_slice()[start * dims..(start + length) * dims]);
                    }
                    InsertSource::Noise { seed } => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        for _ in 0..length {
                            for r in &rms {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                data.push((z * r) as f32);
                            }
                        }
                    }
                }
                labels.extend(std::iter::repeat_n(None, length));
                source_frames.extend(std::iter::repeat_n(None, length));
            }
        }
    }
    let features = FeatureSequence::new(data, dims, source.sample_rate_hz, source.resolution)?;
    Ok(Version {
        features,
        truth: GroundTruth { labels },
        source_frames,
    })
}

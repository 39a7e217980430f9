//! The annotated reference: features, part table and bar annotations.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::features::{downsample_lr, lr_frame_count, FeatureSequence, Resolution, LR_DECIMATION};
use crate::io::read_features;

const ANNOTATION_WHAT: &str = "annotation file";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Part {
    /// 1-based position of the part in score order.
    pub id: u32,
    pub name: String,
    /// First HR frame of the part.
    pub start: usize,
    /// Last HR frame of the part (inclusive).
    pub end: usize,
}

impl Part {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.start..=self.end).contains(&frame)
    }
}

/// Ordered, tiling list of parts with their HR and LR boundaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartTable {
    parts: Vec<Part>,
    lr: Vec<(usize, usize)>,
}

impl PartTable {
    /// Validates and normalizes a part list. Parts are sorted by start frame and
    /// must then carry ids `1..=K`; gaps are closed by extending the earlier
    /// part, overlaps are rejected.
    pub fn new(mut parts: Vec<Part>) -> Result<Self> {
        parts.sort_by_key(|p| p.start);
        for (i, p) in parts.iter().enumerate() {
            if p.id as usize != i + 1 {
                return Err(Error::Invalid(format!(
                    "part ids must be 1..=K in score order; found id {} at position {}",
                    p.id,
                    i + 1
                )));
            }
            if p.start > p.end {
                return Err(Error::Invalid(format!(
                    "part {}: start {} after end {}",
                    p.id, p.start, p.end
                )));
            }
        }
        for i in 1..parts.len() {
            let next_start = parts[i].start;
            let prev = &mut parts[i - 1];
            if next_start <= prev.end {
                return Err(Error::Invalid(format!(
                    "part {} (start {}) overlaps part {} (end {})",
                    i + 1,
                    next_start,
                    prev.id,
                    prev.end
                )));
            }
            if next_start > prev.end + 1 {
                log::debug!("closing gap after part {}: end {} -> {}", prev.id, prev.end, next_start - 1);
                prev.end = next_start - 1;
            }
        }
        let lr = parts
            .iter()
            .map(|p| (p.start / LR_DECIMATION, p.end / LR_DECIMATION))
            .collect();
        Ok(Self { parts, lr })
    }

    /// A single part spanning `[0, len)`.
    pub fn single(len: usize) -> Self {
        Self::new(vec![Part {
            id: 1,
            name: "all".into(),
            start: 0,
            end: len.saturating_sub(1),
        }])
        .expect("single part is valid")
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    /// Part by 1-based id.
    pub fn part(&self, id: u32) -> Option<&Part> {
        (id as usize).checked_sub(1).and_then(|i| self.parts.get(i))
    }

    pub fn starts(&self) -> impl Iterator<Item = usize> + '_ {
        self.parts.iter().map(|p| p.start)
    }

    pub fn ends(&self) -> impl Iterator<Item = usize> + '_ {
        self.parts.iter().map(|p| p.end)
    }

    /// `(start, end)` of every part on the LR grid.
    pub fn lr_bounds(&self) -> &[(usize, usize)] {
        &self.lr
    }

    /// Id of the part containing HR frame `frame`.
    pub fn part_at(&self, frame: usize) -> Option<u32> {
        let idx = self.parts.partition_point(|p| p.start <= frame);
        let p = self.parts.get(idx.checked_sub(1)?)?;
        p.contains(frame).then_some(p.id)
    }

    /// Last annotated HR frame.
    pub fn last_frame(&self) -> Option<usize> {
        self.parts.last().map(|p| p.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bar {
    pub id: u32,
    pub part_id: u32,
    pub onset: usize,
}

/// Bars in score order, grouped by part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BarAnnotations {
    bars: Vec<Bar>,
    /// Per part (0-based): range of bar indices.
    by_part: Vec<std::ops::Range<usize>>,
    index_of: HashMap<u32, usize>,
}

impl BarAnnotations {
    pub fn new(bars: Vec<Bar>, parts: &PartTable) -> Result<Self> {
        let mut index_of = HashMap::with_capacity(bars.len());
        for (i, b) in bars.iter().enumerate() {
            if i > 0 && b.onset <= bars[i - 1].onset {
                return Err(Error::Invalid(format!(
                    "bar {}: onset {} not after previous onset {}",
                    b.id,
                    b.onset,
                    bars[i - 1].onset
                )));
            }
            let part = parts.part(b.part_id).ok_or_else(|| {
                Error::Invalid(format!("bar {}: unknown part {}", b.id, b.part_id))
            })?;
            if !part.contains(b.onset) {
                return Err(Error::Invalid(format!(
                    "bar {}: onset {} outside part {} [{}, {}]",
                    b.id, b.onset, part.id, part.start, part.end
                )));
            }
            if index_of.insert(b.id, i).is_some() {
                return Err(Error::Invalid(format!("duplicate bar id {}", b.id)));
            }
        }
        let by_part = parts
            .parts()
            .iter()
            .map(|p| {
                let lo = bars.partition_point(|b| b.onset < p.start);
                let hi = bars.partition_point(|b| b.onset <= p.end);
                lo..hi
            })
            .collect();
        Ok(Self {
            bars,
            by_part,
            index_of,
        })
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    /// Position of a bar in the global score ordering.
    pub fn index_of(&self, bar_id: u32) -> Option<usize> {
        self.index_of.get(&bar_id).copied()
    }

    pub fn bars_of_part(&self, part_id: u32) -> &[Bar] {
        match (part_id as usize).checked_sub(1).and_then(|i| self.by_part.get(i)) {
            Some(r) => &self.bars[r.clone()],
            None => &[],
        }
    }
}

/// Result of a frame lookup. `bar_id` is `None` only for parts without bars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Location {
    pub part_id: u32,
    pub bar_index: Option<usize>,
    pub bar_id: Option<u32>,
}

/// Maps an HR frame to its part and bar; `None` when the frame is unannotated.
pub fn locate(parts: &PartTable, bars: &BarAnnotations, frame: usize) -> Option<Location> {
    let part_id = parts.part_at(frame)?;
    let range = bars.by_part[part_id as usize - 1].clone();
    let within = &bars.bars[range.clone()];
    if within.is_empty() {
        return Some(Location {
            part_id,
            bar_index: None,
            bar_id: None,
        });
    }
    let k = within.partition_point(|b| b.onset <= frame).max(1) - 1;
    Some(Location {
        part_id,
        bar_index: Some(range.start + k),
        bar_id: Some(within[k].id),
    })
}

/// Immutable reference shared by both trackers.
#[derive(Debug, Clone)]
pub struct ScoreReference {
    pub hr: FeatureSequence,
    pub lr: FeatureSequence,
    pub parts: PartTable,
    pub bars: BarAnnotations,
    hr_norms: Vec<f64>,
    lr_norms: Vec<f64>,
}

impl ScoreReference {
    /// Validates the pieces; LR features are derived from `hr` when `lr` is
    /// `None`.
    pub fn new(
        hr: FeatureSequence,
        lr: Option<FeatureSequence>,
        parts: PartTable,
        bars: BarAnnotations,
    ) -> Result<Self> {
        if hr.resolution != Resolution::Hr {
            return Err(Error::Invalid("reference HR features have LR resolution".into()));
        }
        if hr.is_empty() {
            return Err(Error::Invalid("reference has no frames".into()));
        }
        if let Some(last) = parts.last_frame() {
            if last >= hr.len() {
                return Err(Error::Invalid(format!(
                    "part end {} beyond {} reference frames",
                    last,
                    hr.len()
                )));
            }
        }
        let lr = match lr {
            Some(lr) => {
                if lr.resolution != Resolution::Lr
                    || lr.dims() != hr.dims()
                    || lr.len() != lr_frame_count(hr.len())
                {
                    return Err(Error::Invalid(format!(
                        "LR features ({} frames, {} dims) inconsistent with {} HR frames of {} dims",
                        lr.len(),
                        lr.dims(),
                        hr.len(),
                        hr.dims()
                    )));
                }
                lr
            }
            None => downsample_lr(&hr)?,
        };
        Ok(Self {
            hr_norms: hr.norms(),
            lr_norms: lr.norms(),
            hr,
            lr,
            parts,
            bars,
        })
    }

    /// Reference with a single part and no bars; handy for plain alignment.
    pub fn unannotated(hr: FeatureSequence) -> Result<Self> {
        let parts = PartTable::single(hr.len());
        let bars = BarAnnotations::new(Vec::new(), &parts)?;
        Self::new(hr, None, parts, bars)
    }

    pub fn hr_len(&self) -> usize {
        self.hr.len()
    }

    pub fn lr_len(&self) -> usize {
        self.lr.len()
    }

    pub fn hr_norms(&self) -> &[f64] {
        &self.hr_norms
    }

    pub fn lr_norms(&self) -> &[f64] {
        &self.lr_norms
    }

    pub fn locate(&self, frame: usize) -> Option<Location> {
        locate(&self.parts, &self.bars, frame)
    }
}

/// Parses the annotation CSV (`part,...` and `bar,...` records, `#` comments).
pub fn parse_annotations(text: &str) -> Result<(PartTable, BarAnnotations)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut parts = Vec::new();
    let mut bars = Vec::new();
    let mut record_lines = HashMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(ANNOTATION_WHAT, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> Result<usize> {
            rec.get(i)
                .ok_or_else(|| Error::parse(ANNOTATION_WHAT, line, format!("missing {name}")))?
                .parse::<usize>()
                .map_err(|e| Error::parse(ANNOTATION_WHAT, line, format!("{name}: {e}")))
        };
        let id = |i: usize, name: &str| -> Result<u32> {
            u32::try_from(field(i, name)?)
                .map_err(|_| Error::parse(ANNOTATION_WHAT, line, format!("{name} too large")))
        };
        match rec.get(0) {
            Some("part") if rec.len() == 5 => {
                let p = Part {
                    id: id(1, "part_id")?,
                    name: rec[2].to_string(),
                    start: field(3, "start_frame")?,
                    end: field(4, "end_frame")?,
                };
                record_lines.insert(("part", p.id), line);
                parts.push(p);
            }
            Some("bar") if rec.len() == 4 => {
                let b = Bar {
                    id: id(1, "bar_id")?,
                    part_id: id(2, "part_id")?,
                    onset: field(3, "onset_frame")?,
                };
                record_lines.insert(("bar", b.id), line);
                bars.push(b);
            }
            Some("") if rec.len() == 1 => {}
            Some(kind @ ("part" | "bar")) => {
                return Err(Error::parse(
                    ANNOTATION_WHAT,
                    line,
                    format!("{kind} record with {} fields", rec.len()),
                ))
            }
            other => {
                return Err(Error::parse(
                    ANNOTATION_WHAT,
                    line,
                    format!("unknown record kind {:?}", other.unwrap_or("")),
                ))
            }
        }
    }
    let parts = PartTable::new(parts)?;
    bars.sort_by_key(|b| b.onset);
    let bars = BarAnnotations::new(bars, &parts).map_err(|e| {
        // point at the offending record when we can
        let msg = e.to_string();
        let line = msg
            .strip_prefix("bar ")
            .and_then(|s| s.split(':').next())
            .and_then(|id| id.parse::<u32>().ok())
            .and_then(|id| record_lines.get(&("bar", id)).copied());
        match line {
            Some(line) => Error::parse(ANNOTATION_WHAT, line, msg),
            None => e,
        }
    })?;
    Ok((parts, bars))
}

pub fn format_annotations(parts: &PartTable, bars: &BarAnnotations) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_writer(Vec::new());
    for p in parts.parts() {
        w.write_record([
            "part",
            &p.id.to_string(),
            &p.name,
            &p.start.to_string(),
            &p.end.to_string(),
        ])
        .expect("write to Vec");
    }
    for b in bars.bars() {
        w.write_record([
            "bar",
            &b.id.to_string(),
            &b.part_id.to_string(),
            &b.onset.to_string(),
        ])
        .expect("write to Vec");
    }
    String::from_utf8(w.into_inner().expect("flush to Vec")).expect("csv output is utf-8")
}

pub fn read_annotations(path: &Path) -> Result<(PartTable, BarAnnotations)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text)
}

/// `dir/name.feat` -> `dir/name.lr.feat`.
pub fn lr_sibling(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.lr.{}", ext.to_string_lossy()),
        None => format!("{stem}.lr"),
    };
    path.with_file_name(name)
}

/// Loads HR features and annotations; LR features are read from the LR
/// sibling file when present and derived otherwise.
pub fn load_reference(feature_file: &Path, annotation_file: &Path) -> Result<ScoreReference> {
    let hr = read_features(feature_file)?;
    let lr_path = lr_sibling(feature_file);
    let lr = if lr_path.exists() {
        Some(read_features(&lr_path)?)
    } else {
        None
    };
    let (parts, bars) = read_annotations(annotation_file)?;
    if let Some(b) = bars.bars().last() {
        if b.onset >= hr.len() {
            return Err(Error::Invalid(format!(
                "{}: bar {} onset {} beyond {} feature frames",
                annotation_file.display(),
                b.id,
                b.onset,
                hr.len()
            )));
        }
    }
    ScoreReference::new(hr, lr, parts, bars).map_err(|e| match e {
        Error::Invalid(msg) => Error::Invalid(format!("{}: {msg}", annotation_file.display())),
        other => other,
    })
}

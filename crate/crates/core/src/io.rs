//! Feature cache files and PCM input.
//!
//! A feature file is a raw little-endian `f32` matrix, frames × dims, row-major.
//! Its metadata lives in a `key=value` text sidecar at `<path>.hdr`.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::features::{FeatureSequence, Resolution};

const HEADER_WHAT: &str = "feature header";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureHeader {
    pub dims: usize,
    pub hop_s: f64,
    pub window_s: f64,
    pub sample_rate_hz: u32,
    pub resolution: Resolution,
    pub frame_count: usize,
}

impl FeatureHeader {
    pub fn of(seq: &FeatureSequence) -> Self {
        Self {
            dims: seq.dims(),
            hop_s: seq.hop_s(),
            window_s: seq.window_s(),
            sample_rate_hz: seq.sample_rate_hz,
            resolution: seq.resolution,
            frame_count: seq.len(),
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "format=f32le\ndims={}\nhop_s={}\nwindow_s={}\nsample_rate_hz={}\nresolution={}\nframe_count={}\n",
            self.dims,
            self.hop_s,
            self.window_s,
            self.sample_rate_hz,
            self.resolution.as_str(),
            self.frame_count
        )
    }
}

/// Parses the sidecar text. Unknown keys are rejected; every field is required.
pub fn parse_header(text: &str) -> Result<FeatureHeader> {
    let mut dims = None;
    let mut hop_s = None;
    let mut window_s = None;
    let mut rate = None;
    let mut resolution = None;
    let mut frame_count = None;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n as u64 + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(HEADER_WHAT, line_no, "expected key=value"))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |e: &dyn std::fmt::Display| Error::parse(HEADER_WHAT, line_no, format!("{key}: {e}"));
        match key {
            "format" if value == "f32le" => {}
            "format" => return Err(bad(&format!("unsupported format {value:?}"))),
            "dims" => dims = Some(value.parse::<usize>().map_err(|e| bad(&e))?),
            "hop_s" => hop_s = Some(value.parse::<f64>().map_err(|e| bad(&e))?),
            "window_s" => window_s = Some(value.parse::<f64>().map_err(|e| bad(&e))?),
            "sample_rate_hz" => rate = Some(value.parse::<u32>().map_err(|e| bad(&e))?),
            "frame_count" => frame_count = Some(value.parse::<usize>().map_err(|e| bad(&e))?),
            "resolution" => {
                resolution = Some(match value {
                    "hr" => Resolution::Hr,
                    "lr" => Resolution::Lr,
                    other => return Err(bad(&format!("unknown resolution {other:?}"))),
                })
            }
            _ => return Err(bad(&"unknown key")),
        }
    }
    let missing = |k: &str| Error::Invalid(format!("{HEADER_WHAT}: missing {k}"));
    let header = FeatureHeader {
        dims: dims.ok_or_else(|| missing("dims"))?,
        hop_s: hop_s.ok_or_else(|| missing("hop_s"))?,
        window_s: window_s.ok_or_else(|| missing("window_s"))?,
        sample_rate_hz: rate.ok_or_else(|| missing("sample_rate_hz"))?,
        resolution: resolution.ok_or_else(|| missing("resolution"))?,
        frame_count: frame_count.ok_or_else(|| missing("frame_count"))?,
    };
    if header.dims == 0 {
        return Err(Error::Invalid(format!("{HEADER_WHAT}: dims must be positive")));
    }
    let r = header.resolution;
    if (header.hop_s - r.hop_s()).abs() > 1e-9 || (header.window_s - r.window_s()).abs() > 1e-9 {
        return Err(Error::Invalid(format!(
            "{HEADER_WHAT}: hop/window {}/{} do not match {} resolution",
            header.hop_s,
            header.window_s,
            r.as_str()
        )));
    }
    Ok(header)
}

/// Decodes the raw matrix described by `header`.
pub fn decode_features(bytes: &[u8], header: &FeatureHeader) -> Result<FeatureSequence> {
    let expected = header
        .frame_count
        .checked_mul(header.dims)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Invalid("feature header: size overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Invalid(format!(
            "feature data has {} bytes, header implies {}",
            bytes.len(),
            expected
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    FeatureSequence::new(data, header.dims, header.sample_rate_hz, header.resolution)
}

pub fn encode_features(seq: &FeatureSequence) -> Vec<u8> {
    seq.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

pub fn write_features(path: &Path, seq: &FeatureSequence) -> Result<()> {
    fs::write(path, encode_features(seq)).map_err(|e| Error::io(path, e))?;
    let hdr = header_path(path);
    fs::write(&hdr, FeatureHeader::of(seq).to_text()).map_err(|e| Error::io(hdr, e))
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    let hdr = header_path(path);
    let text = fs::read_to_string(&hdr).map_err(|e| Error::io(&hdr, e))?;
    let header = parse_header(&text)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, &header)
}

/// Decoded PCM, downmixed to mono.
#[derive(Debug, Clone, PartialEq)]
pub struct Pcm {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
}

/// Reads 16-bit integer or 32-bit float WAV data and averages the channels.
pub fn decode_wav<R: Read>(reader: R) -> Result<Pcm> {
    let mut wav = hound::WavReader::new(reader)?;
    let spec = wav.spec();
    let channels = usize::from(spec.channels.max(1));
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => wav.samples::<f32>().collect::<Result<_, _>>()?,
        (hound::SampleFormat::Int, 16) => wav
            .samples::<i16>()
            .map(|s| s.map(|v| f32::from(v) / 32_768.0))
            .collect::<Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::Invalid(format!(
                "unsupported WAV encoding: {fmt:?} {bits}-bit"
            )))
        }
    };
    let samples = interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<f32>() / c.len() as f32)
        .collect();
    Ok(Pcm {
        samples,
        sample_rate_hz: spec.sample_rate,
    })
}

pub fn read_wav(path: &Path) -> Result<Pcm> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    decode_wav(std::io::BufReader::new(file))
}

pub fn write_wav(path: &Path, pcm: &Pcm) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: pcm.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in &pcm.samples {
        // inverse of the reader's scaling, rounded
        w.write_sample((f64::from(s) * 32_768.0).round().clamp(-32_768.0, 32_767.0) as i16)?;
    }
    w.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq() -> FeatureSequence {
        FeatureSequence::new(vec![1.0, -2.5, 3.25, 0.0, 1e-3, 7.0], 3, 22_050, Resolution::Hr).unwrap()
    }

    #[test]
    fn header_text_parses_back() {
        let h = FeatureHeader::of(&seq());
        assert_eq!(parse_header(&h.to_text()).unwrap(), h);
    }

    #[test]
    fn matrix_roundtrip() {
        let s = seq();
        let h = FeatureHeader::of(&s);
        assert_eq!(decode_features(&encode_features(&s), &h).unwrap(), s);
    }

    #[test]
    fn truncated_matrix_rejected() {
        let s = seq();
        let bytes = encode_features(&s);
        assert!(decode_features(&bytes[..bytes.len() - 1], &FeatureHeader::of(&s)).is_err());
    }

    #[test]
    fn header_errors_name_the_line() {
        let err = parse_header("dims=3\nhop_s=abc\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse_header("dims=3").is_err());
        let lr_with_hr_hop =
            "dims=2\nhop_s=0.01\nwindow_s=0.02\nsample_rate_hz=1\nresolution=lr\nframe_count=0\n";
        assert!(parse_header(lr_with_hr_hop).is_err());
    }

    #[test]
    fn file_roundtrip_and_missing_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ref.feat");
        write_features(&p, &seq()).unwrap();
        assert_eq!(read_features(&p).unwrap(), seq());
        let missing = dir.path().join("nope.feat");
        let err = read_features(&missing).unwrap_err();
        assert!(err.to_string().contains("nope.feat"));
    }

    #[test]
    fn wav_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let pcm = Pcm {
            samples: (0..100).map(|i| (i as f32 / 50.0) - 1.0).collect(),
            sample_rate_hz: 16_000,
        };
        write_wav(&p, &pcm).unwrap();
        let back = read_wav(&p).unwrap();
        assert_eq!(back.sample_rate_hz, 16_000);
        for (a, b) in back.samples.iter().zip(&pcm.samples) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}

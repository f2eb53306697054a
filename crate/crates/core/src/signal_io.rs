//! Audio I/O, analysis framing and the `EVCF` feature archive.
//!
//! The archive is the single on-disk container used by every other stage:
//! extracted features, converted features and model checkpoints all travel
//! through it. Layout (all integers little-endian):
//!
//! ```text
//! "EVCF" | version: u8 = 1
//! n_meta: u32 | n_meta × (key_len: u32, key utf-8, val_len: u32, val utf-8)
//! n_arrays: u32 | n_arrays × (name_len: u32, name utf-8,
//!                             ndim: u32, ndim × dim: u64,
//!                             n_values: u64, n_values × f32)
//! ```
//!
//! Metadata and arrays are written in key order, so equal archives always
//! serialize to equal bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const ARCHIVE_MAGIC: &[u8; 4] = b"EVCF";
pub const ARCHIVE_VERSION: u8 = 1;

/// Lowest sample rate accepted by [`Waveform`].
pub const MIN_SAMPLE_RATE: u32 = 8000;

const AMPLITUDE_SLACK: f64 = 1e-6;

/// Mono time-domain audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz < MIN_SAMPLE_RATE {
            return Err(Error::InvalidWaveform(format!(
                "sample rate {sample_rate_hz} Hz is below {MIN_SAMPLE_RATE} Hz"
            )));
        }
        if let Some((i, s)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| !s.is_finite() || s.abs() > 1.0 + AMPLITUDE_SLACK)
        {
            return Err(Error::InvalidWaveform(format!(
                "sample {i} = {s} is not a finite value in [-1, 1]"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Reads a mono RIFF/WAVE file (PCM16 or float32).
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::ChannelCount(spec.channels));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!(
                "{bits}-bit {}",
                match fmt {
                    hound::SampleFormat::Int => "integer PCM",
                    hound::SampleFormat::Float => "float",
                }
            )))
        }
    };
    Waveform::new(samples, spec.sample_rate)
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::FormatError(msg) => Error::MalformedWav(msg.to_string()),
        hound::Error::Unsupported => Error::UnsupportedEncoding("unsupported WAV feature".into()),
        hound::Error::TooWide => Error::UnsupportedEncoding("sample too wide".into()),
        hound::Error::UnfinishedSample => Error::MalformedWav("unfinished sample".into()),
        hound::Error::InvalidSampleFormat => {
            Error::UnsupportedEncoding("invalid sample format".into())
        }
    }
}

/// Quantizes one sample to PCM16: clip to `[-1, 1]`, scale by 32768, round
/// to nearest, saturate at `i16::MAX`.
pub fn quantize_pcm16(sample: f64) -> i16 {
    let scaled = (sample.clamp(-1.0, 1.0) * 32768.0).round();
    scaled.clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Writes a mono PCM16 file.
pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in &wave.samples {
        writer
            .write_sample(quantize_pcm16(s))
            .map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hann,
    Rect,
}

/// Symmetric window of `len` samples; the Hann variant is exactly zero at
/// both ends.
pub fn window(kind: WindowKind, len: usize) -> Vec<f64> {
    match kind {
        WindowKind::Rect => vec![1.0; len],
        WindowKind::Hann if len <= 1 => vec![1.0; len],
        WindowKind::Hann => (0..len)
            .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos()))
            .collect(),
    }
}

/// Converts a duration in milliseconds to a whole number of samples.
pub fn ms_to_samples(ms: f64, sample_rate_hz: u32) -> usize {
    (ms * sample_rate_hz as f64 / 1000.0).round() as usize
}

/// Number of full frames that fit in `len` samples.
pub fn frame_count(len: usize, frame_len: usize, hop: usize) -> usize {
    if len < frame_len || hop == 0 {
        0
    } else {
        (len - frame_len) / hop + 1
    }
}

/// Windowed analysis frames, stored row-major as `num_frames × frame_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<f64>,
    num_frames: usize,
    frame_len: usize,
    hop: usize,
    sample_rate_hz: u32,
}

impl FrameSequence {
    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t * self.frame_len..(t + 1) * self.frame_len]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.frames.chunks_exact(self.frame_len.max(1))
    }
}

pub fn frame_signal(
    wave: &Waveform,
    frame_ms: f64,
    hop_ms: f64,
    kind: WindowKind,
) -> Result<FrameSequence> {
    if !(hop_ms > 0.0 && frame_ms >= hop_ms) {
        return Err(Error::Invalid(format!(
            "framing requires frame_ms >= hop_ms > 0 (got {frame_ms}, {hop_ms})"
        )));
    }
    let frame_len = ms_to_samples(frame_ms, wave.sample_rate_hz).max(1);
    let hop = ms_to_samples(hop_ms, wave.sample_rate_hz).max(1);
    frame_samples(wave, frame_len, hop, kind)
}

/// Sample-count variant of [`frame_signal`].
pub fn frame_samples(
    wave: &Waveform,
    frame_len: usize,
    hop: usize,
    kind: WindowKind,
) -> Result<FrameSequence> {
    let n = wave.len();
    if n < frame_len || frame_len == 0 {
        return Err(Error::SignalTooShort {
            len: n,
            frame: frame_len,
        });
    }
    let win = window(kind, frame_len);
    let num_frames = frame_count(n, frame_len, hop);
    let mut frames = Vec::with_capacity(num_frames * frame_len);
    for t in 0..num_frames {
        let start = t * hop;
        frames.extend(
            wave.samples[start..start + frame_len]
                .iter()
                .zip(&win)
                .map(|(s, w)| s * w),
        );
    }
    Ok(FrameSequence {
        frames,
        num_frames,
        frame_len,
        hop,
        sample_rate_hz: wave.sample_rate_hz,
    })
}

/// One named array of an archive.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveArray {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl ArchiveArray {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let declared: usize = shape.iter().product();
        if declared != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {declared} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

/// Named float arrays plus string metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureArchive {
    arrays: BTreeMap<String, ArchiveArray>,
    metadata: BTreeMap<String, String>,
}

impl FeatureArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces an array, narrowing values to `f32`.
    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: &[f64]) -> Result<()> {
        let array = ArchiveArray::new(shape, data.iter().map(|&v| v as f32).collect())?;
        self.arrays.insert(name.to_string(), array);
        Ok(())
    }

    pub fn insert_array(&mut self, name: &str, array: ArchiveArray) -> Result<()> {
        let declared: usize = array.shape.iter().product();
        if declared != array.data.len() {
            return Err(Error::PayloadMismatch {
                name: name.into(),
                declared,
                actual: array.data.len(),
            });
        }
        self.arrays.insert(name.to_string(), array);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ArchiveArray> {
        self.arrays.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&ArchiveArray> {
        self.arrays
            .get(name)
            .ok_or_else(|| Error::MissingArray(name.to_string()))
    }

    pub fn remove(&mut self, name: &str) -> Option<ArchiveArray> {
        self.arrays.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.arrays.contains_key(name)
    }

    pub fn array_names(&self) -> impl Iterator<Item = &str> {
        self.arrays.keys().map(String::as_str)
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        self.metadata.insert(key.to_string(), value.into());
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    pub fn require_meta(&self, key: &str) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| Error::MissingMetadata(key.to_string()))
    }

    /// Parses a metadata value, reporting the key on failure.
    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require_meta(key)?;
        raw.parse()
            .map_err(|_| Error::Corrupt(format!("metadata '{key}' = '{raw}' is not parseable")))
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    /// A full utterance carries at least `f0` and `sp`.
    pub fn is_utterance(&self) -> bool {
        self.contains("f0") && self.contains("sp")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self.arrays.values().map(|a| a.data.len() * 4).sum();
        let mut out = Vec::with_capacity(64 + payload);
        out.extend_from_slice(ARCHIVE_MAGIC);
        out.push(ARCHIVE_VERSION);
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, array) in &self.arrays {
            put_str(&mut out, name);
            out.extend_from_slice(&(array.shape.len() as u32).to_le_bytes());
            for &d in &array.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&(array.data.len() as u64).to_le_bytes());
            for v in &array.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4, "magic")? != ARCHIVE_MAGIC {
            return Err(Error::BadMagic);
        }
        let version = r.take(1, "version")?[0];
        if version != ARCHIVE_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let mut archive = FeatureArchive::new();
        let n_meta = r.u32("metadata count")?;
        for _ in 0..n_meta {
            let k = r.string("metadata key")?;
            let v = r.string("metadata value")?;
            if archive.metadata.insert(k.clone(), v).is_some() {
                return Err(Error::Corrupt(format!("duplicate metadata key '{k}'")));
            }
        }
        let n_arrays = r.u32("array count")?;
        for _ in 0..n_arrays {
            let name = r.string("array name")?;
            let ndim = r.u32("array rank")? as usize;
            let mut shape = Vec::with_capacity(ndim.min(16));
            for _ in 0..ndim {
                shape.push(r.u64("array dimension")? as usize);
            }
            let n_values = r.u64("payload length")? as usize;
            let declared = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Corrupt(format!("array '{name}' shape overflows")))?;
            if declared != n_values {
                return Err(Error::PayloadMismatch {
                    name,
                    declared,
                    actual: n_values,
                });
            }
            let raw = r.take(
                n_values
                    .checked_mul(4)
                    .ok_or_else(|| Error::Corrupt("payload length overflows".into()))?,
                "array payload",
            )?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if archive
                .arrays
                .insert(name.clone(), ArchiveArray { shape, data })
                .is_some()
            {
                return Err(Error::Corrupt(format!("duplicate array name '{name}'")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes after last array",
                bytes.len() - r.pos
            )));
        }
        Ok(archive)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Truncated(format!("{what} at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::Corrupt(format!("{what} is not valid UTF-8")))
    }
}

pub fn save_archive(path: impl AsRef<Path>, archive: &FeatureArchive) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&archive.to_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_archive(path: impl AsRef<Path>) -> Result<FeatureArchive> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureArchive::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sine(freq: f64, secs: f64, rate: u32, amp: f64) -> Waveform {
        let n = (secs * rate as f64).round() as usize;
        let s = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect();
        Waveform::new(s, rate).unwrap()
    }

    #[test]
    fn one_second_pcm16_reads_back_with_header_counts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_wav(&p, &sine(440.0, 1.0, 16000, 0.5)).unwrap();
        let w = read_wav(&p).unwrap();
        assert_eq!(w.len(), 16000);
        assert_eq!(w.sample_rate_hz(), 16000);
    }

    #[test]
    fn stereo_is_rejected_with_channel_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("st.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for _ in 0..100 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(Error::ChannelCount(2))));
    }

    #[test]
    fn unsupported_bit_depth_and_garbage_are_distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("24.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(5i32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(Error::UnsupportedEncoding(_))));

        let g = dir.path().join("garbage.wav");
        fs::write(&g, b"RIFF....not a wave file at all").unwrap();
        assert!(matches!(read_wav(&g), Err(Error::MalformedWav(_))));
    }

    #[test]
    fn float32_files_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for v in [0.25f32, -0.5, 1.0] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        assert_eq!(read_wav(&p).unwrap().samples(), &[0.25, -0.5, 1.0]);
    }

    #[test]
    fn writes_half_second_sine_and_clips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        write_wav(&p, &sine(440.0, 0.5, 16000, 0.9)).unwrap();
        assert_eq!(hound::WavReader::open(&p).unwrap().duration(), 8000);

        assert_eq!(quantize_pcm16(1.5), i16::MAX);
        assert_eq!(quantize_pcm16(-1.5), i16::MIN);
        assert_eq!(quantize_pcm16(0.0), 0);
    }

    #[test]
    fn empty_waveform_gives_valid_zero_frame_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.wav");
        write_wav(&p, &Waveform::new(vec![], 16000).unwrap()).unwrap();
        let w = read_wav(&p).unwrap();
        assert!(w.is_empty());
        assert_eq!(w.sample_rate_hz(), 16000);
    }

    #[test]
    fn waveform_invariants() {
        assert!(Waveform::new(vec![0.0], 4000).is_err());
        assert!(Waveform::new(vec![f64::NAN], 16000).is_err());
        assert!(Waveform::new(vec![1.1], 16000).is_err());
        assert!(Waveform::new(vec![1.0 + 1e-7], 16000).is_ok());
    }

    #[test]
    fn framing_counts_and_windows() {
        let w = Waveform::new(vec![1.0; 16000], 16000).unwrap();
        let f = frame_signal(&w, 25.0, 5.0, WindowKind::Rect).unwrap();
        assert_eq!((f.num_frames(), f.frame_len(), f.hop()), (196, 400, 80));
        assert!(f.iter().all(|fr| fr.iter().all(|&v| v == 1.0)));

        let h = frame_signal(&w, 25.0, 5.0, WindowKind::Hann).unwrap();
        let peak = h.frame(3).iter().cloned().fold(0.0, f64::max);
        assert!(h.frame(3)[0].abs() <= 1e-6 * peak);
        assert!(h.frame(3)[399].abs() <= 1e-6 * peak);

        let short = Waveform::new(vec![0.0; 100], 16000).unwrap();
        assert!(matches!(
            frame_signal(&short, 25.0, 5.0, WindowKind::Hann),
            Err(Error::SignalTooShort { .. })
        ));
    }

    #[test]
    fn archive_round_trip_is_bitwise() {
        let mut a = FeatureArchive::new();
        let f0: Vec<f64> = (0..200).map(|i| 100.0 + i as f64 * 0.37).collect();
        let sp: Vec<f64> = (0..200 * 513).map(|i| (i as f64 * 0.001).sin()).collect();
        a.insert("f0", vec![200], &f0).unwrap();
        a.insert("sp", vec![200, 513], &sp).unwrap();
        a.set_meta("speaker", "spk1");
        a.set_meta("sample_rate", "16000");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.evcf");
        save_archive(&p, &a).unwrap();
        let b = load_archive(&p).unwrap();
        assert_eq!(a, b);
        assert_eq!(fs::read(&p).unwrap(), b.to_bytes());
    }

    #[test]
    fn archive_corruption_errors() {
        let mut bytes = FeatureArchive::new().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            FeatureArchive::from_bytes(&bytes),
            Err(Error::BadMagic)
        ));

        // hand-built: one array declared 2x3 with 5 values
        let mut raw = Vec::new();
        raw.extend_from_slice(b"EVCF");
        raw.push(1);
        raw.extend_from_slice(&0u32.to_le_bytes());
        raw.extend_from_slice(&1u32.to_le_bytes());
        put_str(&mut raw, "sp");
        raw.extend_from_slice(&2u32.to_le_bytes());
        raw.extend_from_slice(&2u64.to_le_bytes());
        raw.extend_from_slice(&3u64.to_le_bytes());
        raw.extend_from_slice(&5u64.to_le_bytes());
        for _ in 0..5 {
            raw.extend_from_slice(&1f32.to_le_bytes());
        }
        assert!(matches!(
            FeatureArchive::from_bytes(&raw),
            Err(Error::PayloadMismatch {
                declared: 6,
                actual: 5,
                ..
            })
        ));

        let mut ok = FeatureArchive::new();
        ok.insert("f0", vec![4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let full = ok.to_bytes();
        assert!(matches!(
            FeatureArchive::from_bytes(&full[..full.len() - 3]),
            Err(Error::Truncated(_))
        ));
    }

    proptest! {
        #[test]
        fn frame_count_formula(n in 1usize..5000, w in 1usize..600, hop in 1usize..200) {
            prop_assume!(n >= w);
            let wave = Waveform::new(vec![0.1; n], 16000).unwrap();
            let f = frame_samples(&wave, w, hop, WindowKind::Hann).unwrap();
            prop_assert_eq!(f.num_frames(), (n - w) / hop + 1);
        }

        #[test]
        fn wav_round_trip_within_one_lsb(samples in proptest::collection::vec(-1.0f64..=1.0, 0..400)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("r.wav");
            let w = Waveform::new(samples.clone(), 16000).unwrap();
            write_wav(&p, &w).unwrap();
            let back = read_wav(&p).unwrap();
            prop_assert_eq!(back.len(), samples.len());
            for (a, b) in samples.iter().zip(back.samples()) {
                prop_assert!((a - b).abs() <= 1.0 / 32768.0 + 1e-12);
            }
        }

        #[test]
        fn archive_round_trip_any_payload(
            values in proptest::collection::vec(any::<f32>(), 0..64),
            key in "[a-z]{1,8}",
            val in "\\PC{0,16}",
        ) {
            let mut a = FeatureArchive::new();
            a.insert_array("x", ArchiveArray { shape: vec![values.len()], data: values }).unwrap();
            a.set_meta(&key, val);
            let bytes = a.to_bytes();
            let b = FeatureArchive::from_bytes(&bytes).unwrap();
            prop_assert_eq!(b.to_bytes(), bytes);
        }
    }
}

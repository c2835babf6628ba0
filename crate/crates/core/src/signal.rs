//! Recording container, WAV ingest/emit, FIR pre-filtering and short-time energy.
//!
//! Samples are stored as unit-scale `f64`. Integer PCM is divided by
//! `2^(bits-1)`, so a 16-bit file maps onto `[-1, 32767/32768]`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical corpus sample rate.
pub const CANONICAL_RATE: u32 = 11025;

/// A mono heart-sound recording.
#[derive(Debug, Clone, PartialEq)]
pub struct PcgSignal {
    samples: Vec<f64>,
    sample_rate: u32,
    source_id: String,
}

impl PcgSignal {
    /// Builds a signal after checking that it is non-empty, finite and has a
    /// positive rate.
    ///
    /// Unit-scale amplitude is guaranteed for loaded and synthesized
    /// recordings, not for derived ones (filter output may overshoot), so it
    /// is reported by [`PcgSignal::is_unit_scale`] rather than enforced here.
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidSignal("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidSignal("signal has no samples".into()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidSignal(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
            source_id: source_id.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn is_unit_scale(&self) -> bool {
        self.samples.iter().all(|x| x.abs() <= 1.0)
    }

    /// Copy of `[start, end)` (clamped to the signal), keeping rate and id.
    pub fn slice(&self, start: usize, end: usize) -> Result<PcgSignal> {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        PcgSignal::new(
            self.samples[start..end].to_vec(),
            self.sample_rate,
            self.source_id.clone(),
        )
    }

    /// Signal multiplied by a constant gain.
    pub fn scaled(&self, gain: f64) -> Result<PcgSignal> {
        PcgSignal::new(
            self.samples.iter().map(|x| x * gain).collect(),
            self.sample_rate,
            self.source_id.clone(),
        )
    }

    /// Number of samples closest to `ms` milliseconds at this rate.
    pub fn ms_to_samples(&self, ms: f64) -> usize {
        ms_to_samples(ms, self.sample_rate)
    }
}

pub fn ms_to_samples(ms: f64, sample_rate: u32) -> usize {
    (ms * sample_rate as f64 / 1000.0).round() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Rectangular,
    Hamming,
}

impl WindowKind {
    /// Symmetric window coefficients of the given length.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Rectangular => vec![1.0; len],
            WindowKind::Hamming if len <= 1 => vec![1.0; len],
            WindowKind::Hamming => {
                let denom = (len - 1) as f64;
                (0..len)
                    .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / denom).cos())
                    .collect()
            }
        }
    }
}

/// Framing of a signal into possibly overlapping analysis frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub frame_length: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl FrameSpec {
    pub fn new(frame_length: usize, hop: usize, window: WindowKind) -> Result<Self> {
        let spec = Self {
            frame_length,
            hop,
            window,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_ms(frame_ms: f64, hop_ms: f64, sample_rate: u32, window: WindowKind) -> Result<Self> {
        Self::new(
            ms_to_samples(frame_ms, sample_rate),
            ms_to_samples(hop_ms, sample_rate),
            window,
        )
    }

    /// 20 ms rectangular frames with a 10 ms hop, used for energy and segmentation.
    pub fn energy_default(sample_rate: u32) -> Self {
        Self::from_ms(20.0, 10.0, sample_rate, WindowKind::Rectangular)
            .expect("20/10 ms framing is valid at any positive rate")
    }

    /// 25 ms Hamming frames with a 10 ms hop, used for cepstral analysis.
    pub fn cepstral_default(sample_rate: u32) -> Self {
        Self::from_ms(25.0, 10.0, sample_rate, WindowKind::Hamming)
            .expect("25/10 ms framing is valid at any positive rate")
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.frame_length == 0 {
            return Err(Error::InvalidFrameSpec(format!(
                "frame length {} and hop {} must be positive",
                self.frame_length, self.hop
            )));
        }
        if self.hop > self.frame_length {
            return Err(Error::InvalidFrameSpec(format!(
                "hop {} exceeds frame length {}",
                self.hop, self.frame_length
            )));
        }
        Ok(())
    }

    /// Number of whole frames that fit in `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_length {
            0
        } else {
            (len - self.frame_length) / self.hop + 1
        }
    }

    pub fn frame_start(&self, index: usize) -> usize {
        index * self.hop
    }

    pub fn frame_center(&self, index: usize) -> usize {
        index * self.hop + self.frame_length / 2
    }
}

/// Per-frame short-time energy.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrack {
    pub energies: Vec<f64>,
    pub frame_spec: FrameSpec,
}

impl EnergyTrack {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }
}

/// Sum of squared windowed samples for every whole frame.
pub fn frame_energy(sig: &PcgSignal, spec: FrameSpec) -> Result<EnergyTrack> {
    spec.validate()?;
    let samples = sig.samples();
    let count = spec.frame_count(samples.len());
    if count == 0 {
        return Err(Error::SignalTooShort {
            len: samples.len(),
            needed: spec.frame_length,
        });
    }
    let window = spec.window.coefficients(spec.frame_length);
    let energies = (0..count)
        .map(|k| {
            let frame = &samples[spec.frame_start(k)..spec.frame_start(k) + spec.frame_length];
            frame
                .iter()
                .zip(&window)
                .map(|(x, w)| {
                    let v = x * w;
                    v * v
                })
                .sum()
        })
        .collect();
    Ok(EnergyTrack {
        energies,
        frame_spec: spec,
    })
}

/// Linear-phase windowed-sinc (Blackman) low-pass design.
///
/// The tap count is chosen so the transition band is one `cutoff` wide,
/// which puts the stop band at `1.5 * cutoff`.
pub fn lowpass_taps(cutoff: f64, sample_rate: u32) -> Result<Vec<f64>> {
    let fs = sample_rate as f64;
    if !(cutoff > 0.0 && cutoff < fs / 2.0) {
        return Err(Error::InvalidCutoff { cutoff, sample_rate });
    }
    let mut len = (5.5 * fs / cutoff).ceil() as usize;
    if len.is_multiple_of(2) {
        len += 1;
    }
    let mid = (len / 2) as f64;
    let fc = cutoff / fs;
    let mut taps: Vec<f64> = (0..len)
        .map(|n| {
            let t = n as f64 - mid;
            let sinc = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * t).sin() / (PI * t)
            };
            let phase = 2.0 * PI * n as f64 / (len - 1) as f64;
            let blackman = 0.42 - 0.5 * phase.cos() + 0.08 * (2.0 * phase).cos();
            sinc * blackman
        })
        .collect();
    let gain: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|h| *h /= gain);
    Ok(taps)
}

/// Zero-delay low-pass filtering; output has the input's length and rate.
pub fn lowpass_filter(sig: &PcgSignal, cutoff: f64) -> Result<PcgSignal> {
    let taps = lowpass_taps(cutoff, sig.sample_rate())?;
    let out = convolve_same(sig.samples(), &taps);
    PcgSignal::new(out, sig.sample_rate(), sig.source_id())
}

// Centered convolution with an odd-length kernel and zero padding.
fn convolve_same(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let half = taps.len() / 2;
    let n = x.len();
    (0..n)
        .map(|i| {
            // y[i] = sum_k taps[k] * x[i + half - k]
            let k_lo = (i + half + 1).saturating_sub(n);
            let k_hi = (i + half).min(taps.len() - 1);
            (k_lo..=k_hi).map(|k| taps[k] * x[i + half - k]).sum()
        })
        .collect()
}

fn map_hound_error(err: hound::Error) -> Error {
    match err {
        hound::Error::Unsupported | hound::Error::TooWide => Error::UnsupportedFormat(err.to_string()),
        hound::Error::InvalidSampleFormat => Error::UnsupportedFormat(err.to_string()),
        other => Error::MalformedWav(other.to_string()),
    }
}

/// Reads a mono integer-PCM WAV stream (8, 16 or 24 bit).
pub fn read_wav<R: Read>(reader: R, source_id: &str) -> Result<PcgSignal> {
    let mut wav = hound::WavReader::new(reader).map_err(map_hound_error)?;
    let spec = wav.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{} channels, only mono is accepted",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::UnsupportedFormat("floating-point samples".into()));
    }
    if !matches!(spec.bits_per_sample, 8 | 16 | 24) {
        return Err(Error::UnsupportedFormat(format!("{}-bit PCM", spec.bits_per_sample)));
    }
    let scale = (1u32 << (spec.bits_per_sample - 1)) as f64;
    let samples = wav
        .samples::<i32>()
        .map(|s| s.map(|v| v as f64 / scale))
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(map_hound_error)?;
    if samples.is_empty() {
        return Err(Error::MalformedWav("no sample data".into()));
    }
    PcgSignal::new(samples, spec.sample_rate, source_id)
}

/// Loads a mono integer-PCM WAV file.
pub fn load_wav(path: impl AsRef<Path>) -> Result<PcgSignal> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_wav(BufReader::new(file), &id)
}

/// Writes 16-bit little-endian mono PCM at the signal's rate.
pub fn write_wav_to<W: Write + Seek>(writer: W, sig: &PcgSignal) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sig.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut wav = hound::WavWriter::new(writer, spec).map_err(map_hound_error)?;
    for &x in sig.samples() {
        let v = (x * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        wav.write_sample(v).map_err(map_hound_error)?;
    }
    wav.finalize().map_err(map_hound_error)
}

pub fn write_wav(path: impl AsRef<Path>, sig: &PcgSignal) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_wav_to(BufWriter::new(file), sig)
}

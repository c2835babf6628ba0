//! Cepstral front ends, chirp-z zoom spectra and the first-to-second ratio.
//!
//! Filterbank energies are the natural log of triangular-filter-weighted
//! power spectra, floored at [`LOG_FLOOR`]. The cepstrum of `K` log energies
//! is `C_i = sum_k X_k cos(i (k - 1/2) pi / K)`, so `C_0` is their plain sum
//! and doubles as the log-energy term `E`.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::{Tone, ToneEndpoints};
use crate::signal::{FrameSpec, PcgSignal, WindowKind};
use crate::util::write_atomic;

/// Filter energies are clamped to this before taking the log.
pub const LOG_FLOOR: f64 = 1e-10;

pub fn mel_from_hz(f_lin: f64) -> f64 {
    2595.0 * (1.0 + f_lin / 700.0).log10()
}

pub fn hz_from_mel(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterScale {
    Mel,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterbankSpec {
    pub scale: FilterScale,
    pub num_filters: usize,
    pub min_freq: f64,
    pub max_freq: f64,
    pub fft_size: usize,
}

impl FilterbankSpec {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidFilterbank(m));
        if self.num_filters == 0 {
            return bad("need at least one filter".into());
        }
        if !(self.min_freq >= 0.0 && self.min_freq < self.max_freq && self.max_freq <= sample_rate as f64 / 2.0) {
            return bad(format!(
                "band [{}, {}] Hz must satisfy 0 <= min < max <= {}",
                self.min_freq,
                self.max_freq,
                sample_rate as f64 / 2.0
            ));
        }
        if self.fft_size < 2 {
            return bad(format!("fft size {} too small", self.fft_size));
        }
        Ok(())
    }

    /// Triangular filter weights over the `fft_size/2 + 1` power bins, one
    /// row per filter. Edges are equally spaced on the chosen scale.
    pub fn weights(&self, sample_rate: u32) -> Result<Vec<Vec<f64>>> {
        self.validate(sample_rate)?;
        type Warp = fn(f64) -> f64;
        let (to, from): (Warp, Warp) = match self.scale {
            FilterScale::Mel => (mel_from_hz, hz_from_mel),
            FilterScale::Linear => (|f| f, |f| f),
        };
        let (lo, hi) = (to(self.min_freq), to(self.max_freq));
        let k = self.num_filters;
        let edges: Vec<f64> = (0..k + 2)
            .map(|i| from(lo + (hi - lo) * i as f64 / (k + 1) as f64))
            .collect();
        let num_bins = self.fft_size / 2 + 1;
        let bin_hz = sample_rate as f64 / self.fft_size as f64;
        let mut rows = Vec::with_capacity(k);
        for m in 0..k {
            let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
            let row: Vec<f64> = (0..num_bins)
                .map(|b| {
                    let f = b as f64 * bin_hz;
                    if f <= left || f >= right {
                        0.0
                    } else if f <= centre {
                        (f - left) / (centre - left)
                    } else {
                        (right - f) / (right - centre)
                    }
                })
                .collect();
            if row.iter().all(|&w| w == 0.0) {
                return Err(Error::InvalidFilterbank(format!(
                    "filter {m} ({left:.1}-{right:.1} Hz) covers no FFT bin; raise fft_size"
                )));
            }
            rows.push(row);
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaOrder {
    None,
    First,
    FirstAndSecond,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CepstrumSpec {
    pub num_coeffs: usize,
    pub include_c0_energy: bool,
    pub deltas: DeltaOrder,
    /// Regression half-width for deltas, in frames.
    pub delta_window: usize,
}

impl CepstrumSpec {
    pub fn validate(&self, num_filters: usize) -> Result<()> {
        if self.num_coeffs == 0 || self.num_coeffs > num_filters {
            return Err(Error::InvalidCepstrumSpec(format!(
                "need 1 <= M <= K, got M = {} with K = {num_filters}",
                self.num_coeffs
            )));
        }
        if self.deltas != DeltaOrder::None && self.delta_window == 0 {
            return Err(Error::InvalidCepstrumSpec("delta window must be positive".into()));
        }
        Ok(())
    }

    /// Static dimensions per frame: `c1..cM` plus `E` when enabled.
    pub fn static_dim(&self) -> usize {
        self.num_coeffs + usize::from(self.include_c0_energy)
    }

    pub fn dim(&self) -> usize {
        let blocks = match self.deltas {
            DeltaOrder::None => 1,
            DeltaOrder::First => 2,
            DeltaOrder::FirstAndSecond => 3,
        };
        self.static_dim() * blocks
    }

    pub fn dim_labels(&self) -> Vec<String> {
        let mut base: Vec<String> = (1..=self.num_coeffs).map(|i| format!("c{i}")).collect();
        if self.include_c0_energy {
            base.push("E".into());
        }
        let mut labels = base.clone();
        if self.deltas != DeltaOrder::None {
            labels.extend(base.iter().map(|l| format!("d_{l}")));
        }
        if self.deltas == DeltaOrder::FirstAndSecond {
            labels.extend(base.iter().map(|l| format!("dd_{l}")));
        }
        labels
    }
}

/// Everything needed to turn a signal into cepstral frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontEnd {
    pub filterbank: FilterbankSpec,
    pub cepstrum: CepstrumSpec,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub window: WindowKind,
}

impl FrontEnd {
    /// Linear filterbank, 24 filters over 0-500 Hz, `c1..c16, E` with deltas
    /// (34 dimensions).
    pub fn statistical() -> Self {
        FrontEnd {
            filterbank: FilterbankSpec {
                scale: FilterScale::Linear,
                num_filters: 24,
                min_freq: 0.0,
                max_freq: 500.0,
                fft_size: 1024,
            },
            cepstrum: CepstrumSpec {
                num_coeffs: 16,
                include_c0_energy: true,
                deltas: DeltaOrder::First,
                delta_window: 2,
            },
            frame_ms: 25.0,
            hop_ms: 10.0,
            window: WindowKind::Hamming,
        }
    }

    /// Mel filterbank, 24 filters over 0-500 Hz, `c1..c12, E`, no deltas
    /// (13 dimensions).
    pub fn structural() -> Self {
        FrontEnd {
            filterbank: FilterbankSpec {
                scale: FilterScale::Mel,
                ..Self::statistical().filterbank
            },
            cepstrum: CepstrumSpec {
                num_coeffs: 12,
                include_c0_energy: true,
                deltas: DeltaOrder::None,
                delta_window: 2,
            },
            ..Self::statistical()
        }
    }

    pub fn frame_spec(&self, sample_rate: u32) -> Result<FrameSpec> {
        let spec = FrameSpec::from_ms(self.frame_ms, self.hop_ms, sample_rate, self.window)?;
        if spec.frame_length > self.filterbank.fft_size {
            return Err(Error::InvalidFilterbank(format!(
                "fft size {} shorter than the {}-sample frame",
                self.filterbank.fft_size, spec.frame_length
            )));
        }
        Ok(spec)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        self.filterbank.validate(sample_rate)?;
        self.cepstrum.validate(self.filterbank.num_filters)?;
        self.frame_spec(sample_rate).map(|_| ())
    }
}

/// `M + 1` cepstral coefficients of `K` filter log-energies.
pub fn cepstrum(log_energies: &[f64], num_coeffs: usize) -> Vec<f64> {
    let k = log_energies.len() as f64;
    (0..=num_coeffs)
        .map(|i| {
            log_energies
                .iter()
                .enumerate()
                .map(|(j, x)| x * (i as f64 * (j as f64 + 0.5) * PI / k).cos())
                .sum()
        })
        .collect()
}

/// Regression deltas over `±window` frames with replicated edges.
pub fn deltas(rows: &[Vec<f64>], window: usize) -> Vec<Vec<f64>> {
    let t = rows.len();
    let denom = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    (0..t)
        .map(|i| {
            let dim = rows[i].len();
            (0..dim)
                .map(|d| {
                    (1..=window)
                        .map(|n| {
                            let ahead = rows[(i + n).min(t - 1)][d];
                            let behind = rows[i.saturating_sub(n)][d];
                            n as f64 * (ahead - behind)
                        })
                        .sum::<f64>()
                        / denom
                })
                .collect()
        })
        .collect()
}

/// A `T x D` matrix of finite feature vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    dim_labels: Vec<String>,
}

const FEATURE_MAGIC: &[u8; 4] = b"HIDF";
const FEATURE_VERSION: u32 = 1;
const FEATURE_TEXT_HEADER: &str = "# heartid features v1";

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, dim_labels: Vec<String>) -> Result<Self> {
        let dim = dim_labels.len();
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteFeature {
                frame: i / dim,
                dim: i % dim,
            });
        }
        Ok(Self { data, dim_labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], dim_labels: Vec<String>) -> Result<Self> {
        let dim = dim_labels.len();
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        Self::new(rows.concat(), dim_labels)
    }

    pub fn num_frames(&self) -> usize {
        self.data.len() / self.dim()
    }

    pub fn dim(&self) -> usize {
        self.dim_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim_labels(&self) -> &[String] {
        &self.dim_labels
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let d = self.dim();
        &self.data[t * d..(t + 1) * d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Keeps the frames for which `keep(t)` holds.
    pub fn select(&self, mut keep: impl FnMut(usize) -> bool) -> FeatureMatrix {
        let data = self
            .rows()
            .enumerate()
            .filter(|(t, _)| keep(*t))
            .flat_map(|(_, r)| r.iter().copied())
            .collect();
        FeatureMatrix {
            data,
            dim_labels: self.dim_labels.clone(),
        }
    }

    /// Appends one column.
    pub fn with_column(&self, label: &str, column: &[f64]) -> Result<FeatureMatrix> {
        if column.len() != self.num_frames() {
            return Err(Error::DimensionMismatch {
                expected: self.num_frames(),
                got: column.len(),
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + column.len());
        for (row, &v) in self.rows().zip(column) {
            data.extend_from_slice(row);
            data.push(v);
        }
        let mut labels = self.dim_labels.clone();
        labels.push(label.to_string());
        FeatureMatrix::new(data, labels)
    }

    /// Frames of all matrices stacked; dimensions must agree.
    pub fn concat(parts: &[FeatureMatrix]) -> Result<FeatureMatrix> {
        let first = parts.first().ok_or(Error::EmptyFeatures)?;
        let mut data = Vec::new();
        for p in parts {
            if p.dim() != first.dim() {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    got: p.dim(),
                });
            }
            data.extend_from_slice(&p.data);
        }
        FeatureMatrix::new(data, first.dim_labels.clone())
    }

    /// Header, label line, then one whitespace-separated frame per line.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{FEATURE_TEXT_HEADER} {} {}\n# {}\n",
            self.num_frames(),
            self.dim(),
            self.dim_labels.join(" ")
        );
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<FeatureMatrix> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let rest = header
            .strip_prefix(FEATURE_TEXT_HEADER)
            .ok_or_else(|| Error::Parse("missing feature header".into()))?;
        let counts: Vec<usize> = rest
            .split_whitespace()
            .map(|s| s.parse().map_err(|e| Error::Parse(format!("header: {e}"))))
            .collect::<Result<_>>()?;
        let [t, d] = counts[..] else {
            return Err(Error::Parse("header needs frame and dimension counts".into()));
        };
        let labels: Vec<String> = lines
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .ok_or_else(|| Error::Parse("missing label line".into()))?
            .split_whitespace()
            .map(str::to_string)
            .collect();
        if labels.len() != d {
            return Err(Error::Parse(format!("{} labels for dimension {d}", labels.len())));
        }
        let mut data = Vec::with_capacity(t * d);
        for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let before = data.len();
            for v in line.split_whitespace() {
                data.push(v.parse::<f64>().map_err(|e| Error::Parse(format!("frame {i}: {e}")))?);
            }
            if data.len() - before != d {
                return Err(Error::Parse(format!(
                    "frame {i} has {} values, expected {d}",
                    data.len() - before
                )));
            }
        }
        if data.len() != t * d {
            return Err(Error::Parse(format!(
                "expected {t} frames, found {}",
                data.len() / d.max(1)
            )));
        }
        FeatureMatrix::new(data, labels)
    }

    /// `HIDF`, then little-endian u32 version, T and D, then `T*D` f64
    /// values row by row. A trailer holds the labels: u32 byte length and
    /// space-separated UTF-8.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.data.len() * 8);
        out.extend_from_slice(FEATURE_MAGIC);
        for v in [FEATURE_VERSION, self.num_frames() as u32, self.dim() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let labels = self.dim_labels.join(" ");
        out.extend_from_slice(&(labels.len() as u32).to_le_bytes());
        out.extend_from_slice(labels.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<FeatureMatrix> {
        let mut cur = ByteCursor { bytes, pos: 0 };
        if cur.take(4)? != FEATURE_MAGIC {
            return Err(Error::Parse("bad feature file magic".into()));
        }
        let version = cur.u32()?;
        if version != FEATURE_VERSION {
            return Err(Error::Parse(format!("unsupported feature file version {version}")));
        }
        let t = cur.u32()? as usize;
        let d = cur.u32()? as usize;
        let data = (0..t * d).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let labels = if cur.remaining() == 0 {
            (1..=d).map(|i| format!("x{i}")).collect()
        } else {
            let n = cur.u32()? as usize;
            let s = std::str::from_utf8(cur.take(n)?).map_err(|e| Error::Parse(e.to_string()))?;
            s.split(' ').map(str::to_string).collect::<Vec<_>>()
        };
        if labels.len() != d {
            return Err(Error::Parse(format!("{} labels for dimension {d}", labels.len())));
        }
        FeatureMatrix::new(data, labels)
    }

    /// Writes text or binary depending on the extension (`.txt` is text).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e == "txt") {
            write_atomic(path, self.to_text().as_bytes())
        } else {
            write_atomic(path, &self.to_bytes())
        }
    }

    /// Reads either encoding, sniffing the binary magic.
    pub fn load(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(FEATURE_MAGIC) {
            FeatureMatrix::from_bytes(&bytes)
        } else {
            let text = String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))?;
            FeatureMatrix::parse_text(&text)
        }
    }
}

pub(crate) struct ByteCursor<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> ByteCursor<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Parse("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Per-frame cepstral vectors of a whole signal.
pub fn extract_cepstra(sig: &PcgSignal, fe: &FrontEnd) -> Result<FeatureMatrix> {
    fe.validate(sig.sample_rate())?;
    let frames = fe.frame_spec(sig.sample_rate())?;
    let count = frames.frame_count(sig.len());
    if count == 0 {
        return Err(Error::SignalTooShort {
            len: sig.len(),
            needed: frames.frame_length,
        });
    }
    let weights = fe.filterbank.weights(sig.sample_rate())?;
    let window = frames.window.coefficients(frames.frame_length);
    let n_fft = fe.filterbank.fft_size;
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let cs = fe.cepstrum;
    let mut statics = Vec::with_capacity(count);
    let samples = sig.samples();
    for t in 0..count {
        let start = frames.frame_start(t);
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if i < frames.frame_length {
                Complex64::new(samples[start + i] * window[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        let log_e: Vec<f64> = weights
            .iter()
            .map(|row| {
                let e: f64 = row.iter().zip(&buf).map(|(w, x)| w * x.norm_sqr()).sum();
                e.max(LOG_FLOOR).ln()
            })
            .collect();
        let c = cepstrum(&log_e, cs.num_coeffs);
        let mut v = c[1..].to_vec();
        if cs.include_c0_energy {
            v.push(c[0]);
        }
        statics.push(v);
    }
    let mut rows = statics.clone();
    if cs.deltas != DeltaOrder::None {
        let d1 = deltas(&statics, cs.delta_window);
        if cs.deltas == DeltaOrder::FirstAndSecond {
            let d2 = deltas(&d1, cs.delta_window);
            for ((r, a), b) in rows.iter_mut().zip(&d1).zip(&d2) {
                r.extend_from_slice(a);
                r.extend_from_slice(b);
            }
        } else {
            for (r, a) in rows.iter_mut().zip(&d1) {
                r.extend_from_slice(a);
            }
        }
    }
    FeatureMatrix::from_rows(&rows, cs.dim_labels())
}

/// Z-transform of `segment` at `num_bins` points evenly spaced on the unit
/// circle arc from `f_start` to `f_end` inclusive, computed with Bluestein's
/// chirp convolution.
pub fn czt_zoom_spectrum(
    segment: &[f64],
    sample_rate: u32,
    f_start: f64,
    f_end: f64,
    num_bins: usize,
) -> Result<Vec<Complex64>> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(f_start >= 0.0 && f_start < f_end && f_end <= nyquist) || num_bins < 2 || sample_rate == 0 {
        return Err(Error::InvalidBand {
            f_start,
            f_end,
            num_bins,
            sample_rate,
        });
    }
    let n = segment.len();
    let m = num_bins;
    if n == 0 {
        return Ok(vec![Complex64::new(0.0, 0.0); m]);
    }
    let fs = sample_rate as f64;
    let step = (f_end - f_start) / (m - 1) as f64;
    // W^(x^2/2) with W = exp(-j 2 pi step / fs).
    let chirp = |x: f64| Complex64::from_polar(1.0, -PI * step / fs * x * x);
    let l = (n + m - 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(l);
    let inv = planner.plan_fft_inverse(l);

    let mut a = vec![Complex64::new(0.0, 0.0); l];
    for (i, &x) in segment.iter().enumerate() {
        let shift = Complex64::from_polar(1.0, -2.0 * PI * f_start / fs * i as f64);
        a[i] = x * shift * chirp(i as f64);
    }
    let mut b = vec![Complex64::new(0.0, 0.0); l];
    b[0] = chirp(0.0).inv();
    for i in 1..m.max(n) {
        let v = chirp(i as f64).inv();
        if i < m {
            b[i] = v;
        }
        if i < n {
            b[l - i] = v;
        }
    }
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let scale = 1.0 / l as f64;
    Ok((0..m).map(|k| a[k] * scale * chirp(k as f64)).collect())
}

/// Averaged S1 and S2 power and their ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsrValue {
    pub ratio: f64,
    pub ratio_db: f64,
}

impl FsrValue {
    pub fn from_ratio(ratio: f64) -> Self {
        Self {
            ratio,
            ratio_db: 10.0 * ratio.log10(),
        }
    }
}

fn tone_power(samples: &[f64], tone: &Tone) -> f64 {
    let end = tone.end.min(samples.len());
    let start = tone.start.min(end);
    let seg = &samples[start..end];
    if seg.is_empty() {
        0.0
    } else {
        seg.iter().map(|x| x * x).sum::<f64>() / seg.len() as f64
    }
}

fn fsr_of_cycles(samples: &[f64], cycles: &[(Tone, Tone)]) -> Result<FsrValue> {
    if cycles.is_empty() {
        return Err(Error::NoCompleteCycle);
    }
    let n = cycles.len() as f64;
    let p1 = cycles.iter().map(|(s1, _)| tone_power(samples, s1)).sum::<f64>() / n;
    let p2 = cycles.iter().map(|(_, s2)| tone_power(samples, s2)).sum::<f64>() / n;
    if !(p1 > 0.0 && p2 > 0.0) {
        return Err(Error::DegeneratePower(format!(
            "mean S1 power {p1:e}, mean S2 power {p2:e}"
        )));
    }
    Ok(FsrValue::from_ratio(p1 / p2))
}

/// Ratio of mean S1 power to mean S2 power over complete cycles, where a
/// tone's power is its mean squared amplitude.
pub fn fsr_sequence(sig: &PcgSignal, tones: &ToneEndpoints) -> Result<FsrValue> {
    fsr_of_cycles(sig.samples(), &tones.cycles())
}

/// FSR in dB per analysis frame, averaged over consecutive windows of
/// `window_s` seconds. A cycle belongs to the window holding its S1 onset
/// and a frame to the window holding its centre. Windows without a usable
/// cycle take the value of the nearest usable one.
pub fn fsr_windowed(sig: &PcgSignal, tones: &ToneEndpoints, window_s: f64, frames: FrameSpec) -> Result<Vec<f64>> {
    let win = ((window_s * sig.sample_rate() as f64).round() as usize).max(1);
    let num_windows = sig.len().div_ceil(win).max(1);
    let mut per_window: Vec<Vec<(Tone, Tone)>> = vec![Vec::new(); num_windows];
    for c in tones.cycles() {
        per_window[(c.0.start / win).min(num_windows - 1)].push(c);
    }
    let values: Vec<Option<f64>> = per_window
        .iter()
        .map(|cycles| fsr_of_cycles(sig.samples(), cycles).ok().map(|v| v.ratio_db))
        .collect();
    if values.iter().all(Option::is_none) {
        return match fsr_sequence(sig, tones) {
            Err(e) => Err(e),
            Ok(_) => Err(Error::NoCompleteCycle),
        };
    }
    let filled: Vec<f64> = (0..num_windows)
        .map(|w| {
            (0..num_windows)
                .filter_map(|v| values[v].map(|x| (w.abs_diff(v), v, x)))
                .min_by_key(|&(dist, v, _)| (dist, v))
                .map(|(_, _, x)| x)
                .expect("at least one valid window")
        })
        .collect();
    Ok((0..frames.frame_count(sig.len()))
        .map(|t| filled[(frames.frame_center(t) / win).min(num_windows - 1)])
        .collect())
}

/// Frames of `fm` (computed with `frames`) whose centre falls inside a tone.
pub fn frames_in_tones(fm: &FeatureMatrix, frames: FrameSpec, tones: &ToneEndpoints) -> FeatureMatrix {
    let mut sorted: Vec<&Tone> = tones.tones.iter().collect();
    sorted.sort_by_key(|t| t.start);
    fm.select(|t| {
        let c = frames.frame_center(t);
        let i = sorted.partition_point(|tone| tone.start <= c);
        i > 0 && c < sorted[i - 1].end
    })
}

/// Statistical-system features: cepstral frames inside detected tones,
/// optionally with the windowed FSR (dB) appended as the last column.
pub fn tone_features(
    sig: &PcgSignal,
    tones: &ToneEndpoints,
    fe: &FrontEnd,
    fsr_window_s: Option<f64>,
) -> Result<FeatureMatrix> {
    let frames = fe.frame_spec(sig.sample_rate())?;
    let mut all = extract_cepstra(sig, fe)?;
    if let Some(w) = fsr_window_s {
        let column = fsr_windowed(sig, tones, w, frames)?;
        all = all.with_column("FSR", &column)?;
    }
    let kept = frames_in_tones(&all, frames, tones);
    if kept.is_empty() {
        return Err(Error::EmptyFeatures);
    }
    Ok(kept)
}

/// Writes features in the encoding implied by the extension; see
/// [`FeatureMatrix::save`].
pub fn write_features(path: impl AsRef<Path>, fm: &FeatureMatrix) -> Result<()> {
    fm.save(path)
}

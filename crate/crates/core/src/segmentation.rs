//! S1/S2 endpoint detection.
//!
//! The detector works on the short-time energy of a (low-pass pre-filtered)
//! recording:
//!
//! 1. the global energy maximum `SX1` anchors a first train of tones;
//! 2. the heartbeat period `P` is the autocorrelation maximum of the energy
//!    track past its first local minimum;
//! 3. the train is extended left and right in steps of `P`, taking the local
//!    energy maximum within `±15%` of `P` around each expected position;
//! 4. the frames covered by that train are zeroed and the procedure repeats
//!    from the new maximum `SX2`;
//! 5. the train whose following gap is shorter (systole) is labelled S1.
//!
//! Long recordings are cut into consecutive analysis windows, each window is
//! processed independently, and the per-window endpoint sets are joined.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{frame_energy, lowpass_filter, ms_to_samples, EnergyTrack, FrameSpec, PcgSignal, WindowKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ToneLabel {
    S1,
    S2,
}

impl ToneLabel {
    pub fn other(self) -> Self {
        match self {
            ToneLabel::S1 => ToneLabel::S2,
            ToneLabel::S2 => ToneLabel::S1,
        }
    }
}

impl fmt::Display for ToneLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ToneLabel::S1 => "S1",
            ToneLabel::S2 => "S2",
        })
    }
}

impl FromStr for ToneLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S1" => Ok(ToneLabel::S1),
            "S2" => Ok(ToneLabel::S2),
            other => Err(Error::Parse(format!("unknown tone label {other:?}"))),
        }
    }
}

/// A labelled tone occupying samples `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tone {
    pub start: usize,
    pub end: usize,
    pub label: ToneLabel,
}

impl Tone {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn overlap(&self, other: &Tone) -> usize {
        self.end.min(other.end).saturating_sub(self.start.max(other.start))
    }
}

/// Ordered, non-overlapping, alternating S1/S2 segments of one recording.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToneEndpoints {
    pub tones: Vec<Tone>,
    /// Heartbeat period in samples.
    pub period_estimate: usize,
}

impl ToneEndpoints {
    pub fn count(&self, label: ToneLabel) -> usize {
        self.tones.iter().filter(|t| t.label == label).count()
    }

    /// Complete cardiac cycles: every S1 immediately followed by an S2.
    pub fn cycles(&self) -> Vec<(Tone, Tone)> {
        self.tones
            .windows(2)
            .filter(|w| w[0].label == ToneLabel::S1 && w[1].label == ToneLabel::S2)
            .map(|w| (w[0], w[1]))
            .collect()
    }

    /// Tones shifted by `offset` samples.
    pub fn shifted(&self, offset: usize) -> ToneEndpoints {
        ToneEndpoints {
            tones: self
                .tones
                .iter()
                .map(|t| Tone {
                    start: t.start + offset,
                    end: t.end + offset,
                    label: t.label,
                })
                .collect(),
            period_estimate: self.period_estimate,
        }
    }

    /// Checks ordering, non-overlap, label alternation and constant width.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::TooFewTones(msg));
        for w in self.tones.windows(2) {
            if w[1].start < w[0].end {
                return bad(format!("tones at {} and {} overlap", w[0].start, w[1].start));
            }
            if w[0].label == w[1].label {
                return bad(format!(
                    "consecutive {} tones at {} and {}",
                    w[0].label, w[0].start, w[1].start
                ));
            }
        }
        if let Some(first) = self.tones.first() {
            if self.tones.iter().any(|t| t.len() != first.len()) {
                return bad("tone widths differ".into());
            }
        }
        Ok(())
    }

    /// One line per tone: `label start_sample end_sample`.
    pub fn to_text(&self) -> String {
        self.tones
            .iter()
            .map(|t| format!("{} {} {}\n", t.label, t.start, t.end))
            .collect()
    }

    /// Parses [`ToneEndpoints::to_text`] output; blank and `#` lines are skipped.
    pub fn parse_text(text: &str, period_estimate: usize) -> Result<ToneEndpoints> {
        let mut tones = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected 3 fields", lineno + 1)));
            }
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            tones.push(Tone {
                label: fields[0].parse()?,
                start: num(fields[1])?,
                end: num(fields[2])?,
            });
        }
        Ok(ToneEndpoints { tones, period_estimate })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    /// Constant width of every excised tone.
    pub tone_window_ms: f64,
    /// Local-maximum search half-width as a fraction of the period.
    pub search_halfwidth_frac: f64,
    /// Length of each independently segmented window.
    pub analysis_window_s: f64,
    pub energy_frame_ms: f64,
    pub energy_hop_ms: f64,
    /// Low-pass applied before computing the energy track; `None` disables it.
    pub prefilter_hz: Option<f64>,
    /// Picks weaker than this fraction of their train's anchor are dropped.
    pub min_pick_ratio: f64,
    /// An anchor whose train's median pick is below this fraction of it is
    /// treated as an isolated transient and skipped.
    pub anchor_consistency: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            tone_window_ms: 120.0,
            search_halfwidth_frac: 0.15,
            analysis_window_s: 4.0,
            energy_frame_ms: 20.0,
            energy_hop_ms: 10.0,
            prefilter_hz: Some(500.0),
            min_pick_ratio: 0.05,
            anchor_consistency: 0.2,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSegmentationConfig(m.into()));
        if !(self.tone_window_ms > 0.0) {
            return bad("tone_window_ms must be positive");
        }
        if !(self.search_halfwidth_frac > 0.0 && self.search_halfwidth_frac < 0.5) {
            return bad("search_halfwidth_frac must lie in (0, 0.5)");
        }
        if !(self.analysis_window_s > 0.0) {
            return bad("analysis_window_s must be positive");
        }
        if !(self.energy_frame_ms > 0.0 && self.energy_hop_ms > 0.0) {
            return bad("energy framing must be positive");
        }
        if !(0.0..1.0).contains(&self.min_pick_ratio) || !(0.0..1.0).contains(&self.anchor_consistency) {
            return bad("pick ratios must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn energy_frame(&self, sample_rate: u32) -> Result<FrameSpec> {
        FrameSpec::from_ms(
            self.energy_frame_ms,
            self.energy_hop_ms,
            sample_rate,
            WindowKind::Rectangular,
        )
    }

    pub fn tone_window_samples(&self, sample_rate: u32) -> usize {
        ms_to_samples(self.tone_window_ms, sample_rate).max(1)
    }
}

/// Heartbeat period in frames: lag of the autocorrelation maximum searched
/// past the first local minimum.
///
/// The track is first summed over a moving window of `smoothing_frames`
/// (use 1 for none), so beat-to-beat jitter of a few frames does not break
/// the alignment of the narrow energy peaks.
pub fn estimate_period(track: &EnergyTrack, smoothing_frames: usize) -> Result<usize> {
    period_from_energies(&track.energies, smoothing_frames)
}

fn moving_sum(e: &[f64], width: usize) -> Vec<f64> {
    let width = width.max(1);
    let back = width / 2;
    (0..e.len())
        .map(|i| {
            let lo = i.saturating_sub(back);
            let hi = (i + width - back).min(e.len());
            e[lo..hi].iter().sum()
        })
        .collect()
}

fn period_from_energies(e: &[f64], smoothing_frames: usize) -> Result<usize> {
    let n = e.len();
    if n < 3 {
        return Err(Error::NoPeriodFound);
    }
    let e = moving_sum(e, smoothing_frames);
    let r: Vec<f64> = (0..n)
        .map(|k| e[..n - k].iter().zip(&e[k..]).map(|(a, b)| a * b).sum())
        .collect();

    // first strict fall-then-rise of the discrete derivative; on a flat
    // bottom the smallest lag wins
    let mut falling = false;
    let mut first_min = None;
    for j in 0..n - 1 {
        if r[j + 1] < r[j] {
            falling = true;
        } else if r[j + 1] > r[j] && falling {
            let mut m = j;
            while m > 0 && r[m - 1] == r[m] {
                m -= 1;
            }
            first_min = Some(m);
            break;
        }
    }
    let m = first_min.ok_or(Error::NoPeriodFound)?;
    let mut best = m;
    for k in m + 1..n {
        if r[k] > r[best] {
            best = k;
        }
    }
    if best == m || best == 0 {
        return Err(Error::NoPeriodFound);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    start: usize,
    label: ToneLabel,
    power: f64,
}

struct WindowResult {
    tones: Vec<Candidate>,
    period_samples: usize,
}

/// Segments a short recording (at most `analysis_window_s` plus 10%).
pub fn detect_tones_short(sig: &PcgSignal, cfg: &SegmentationConfig) -> Result<ToneEndpoints> {
    cfg.validate()?;
    let limit = cfg.analysis_window_s * 1.1;
    if sig.duration_s() > limit {
        return Err(Error::InvalidSegmentationConfig(format!(
            "signal lasts {:.2} s, short detection handles at most {:.2} s",
            sig.duration_s(),
            limit
        )));
    }
    let filtered = prefilter(sig, cfg)?;
    let width = cfg.tone_window_samples(sig.sample_rate());
    let result = detect_window(&filtered, sig.sample_rate(), cfg)?;
    finish(result.tones, result.period_samples, width)
}

/// Segments a recording of any length window by window and joins the results.
pub fn detect_tones(sig: &PcgSignal, cfg: &SegmentationConfig) -> Result<ToneEndpoints> {
    cfg.validate()?;
    let rate = sig.sample_rate();
    let filtered = prefilter(sig, cfg)?;
    let width = cfg.tone_window_samples(rate);
    let bounds = analysis_windows(filtered.len(), rate, cfg.analysis_window_s);

    let results: Vec<Option<(usize, WindowResult)>> = bounds
        .par_iter()
        .map(|&(start, end)| {
            // let tones that begin near the seam fit inside this window
            let ext = (end + 2 * width).min(filtered.len());
            match detect_window(&filtered[start..ext], rate, cfg) {
                Ok(r) => Some((start, r)),
                Err(e) => {
                    log::debug!("{}: window at sample {start} skipped: {e}", sig.source_id());
                    None
                }
            }
        })
        .collect();

    let mut periods = Vec::new();
    let mut joined = Vec::new();
    for (offset, r) in results.into_iter().flatten() {
        periods.push(r.period_samples);
        joined.extend(r.tones.into_iter().map(|c| Candidate {
            start: c.start + offset,
            ..c
        }));
    }
    if periods.is_empty() {
        return Err(Error::TooFewTones(format!(
            "no analysis window of {} could be segmented",
            sig.source_id()
        )));
    }
    periods.sort_unstable();
    let period = periods[periods.len() / 2];

    joined.sort_by_key(|c| c.start);
    // seam duplicates: same tone found by two adjacent windows
    let mut merged: Vec<Candidate> = Vec::with_capacity(joined.len());
    for c in joined {
        if let Some(last) = merged.last_mut() {
            let overlap = (last.start + width).saturating_sub(c.start);
            if 2 * overlap > width {
                if c.power > last.power {
                    *last = c;
                }
                continue;
            }
        }
        merged.push(c);
    }
    finish(merged, period, width)
}

/// Agreement of detected endpoints with a reference set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionScore {
    pub reference: usize,
    /// Reference tones with a detected start within the tolerance.
    pub matched: usize,
    /// Matched tones whose detected label agrees with the reference.
    pub labels_correct: usize,
}

impl DetectionScore {
    pub fn recall(&self) -> f64 {
        if self.reference == 0 {
            return 1.0;
        }
        self.matched as f64 / self.reference as f64
    }

    pub fn label_accuracy(&self) -> f64 {
        if self.matched == 0 {
            return 1.0;
        }
        self.labels_correct as f64 / self.matched as f64
    }

    pub fn merge(self, other: DetectionScore) -> DetectionScore {
        DetectionScore {
            reference: self.reference + other.reference,
            matched: self.matched + other.matched,
            labels_correct: self.labels_correct + other.labels_correct,
        }
    }
}

/// Matches every reference tone to the detected tone with the nearest start,
/// counting it when the starts differ by at most `tolerance` samples.
pub fn score_detection(reference: &ToneEndpoints, detected: &ToneEndpoints, tolerance: usize) -> DetectionScore {
    let starts: Vec<usize> = detected.tones.iter().map(|t| t.start).collect();
    let mut score = DetectionScore {
        reference: reference.tones.len(),
        matched: 0,
        labels_correct: 0,
    };
    for t in &reference.tones {
        let i = starts.partition_point(|&s| s < t.start);
        let nearest = [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter(|&j| j < starts.len())
            .min_by_key(|&j| starts[j].abs_diff(t.start));
        if let Some(j) = nearest.filter(|&j| starts[j].abs_diff(t.start) <= tolerance) {
            score.matched += 1;
            if detected.tones[j].label == t.label {
                score.labels_correct += 1;
            }
        }
    }
    score
}

/// Consecutive windows of `window_s`; a remainder shorter than half a window
/// is absorbed into the last one.
fn analysis_windows(len: usize, rate: u32, window_s: f64) -> Vec<(usize, usize)> {
    let wl = ((window_s * rate as f64).round() as usize).max(1);
    if len as f64 <= wl as f64 * 1.1 {
        return vec![(0, len)];
    }
    let mut bounds = Vec::new();
    let mut start = 0;
    while start < len {
        let mut end = (start + wl).min(len);
        if len - end < wl / 2 {
            end = len;
        }
        bounds.push((start, end));
        start = end;
    }
    bounds
}

fn prefilter(sig: &PcgSignal, cfg: &SegmentationConfig) -> Result<Vec<f64>> {
    match cfg.prefilter_hz {
        Some(cutoff) => Ok(lowpass_filter(sig, cutoff)?.into_samples()),
        None => Ok(sig.samples().to_vec()),
    }
}

fn argmax(values: &[f64], lo: usize, hi: usize) -> usize {
    let mut best = lo;
    for k in lo..=hi {
        if values[k] > values[best] {
            best = k;
        }
    }
    best
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

struct Train {
    picks: Vec<usize>,
}

fn detect_window(samples: &[f64], rate: u32, cfg: &SegmentationConfig) -> Result<WindowResult> {
    let spec = cfg.energy_frame(rate)?;
    let width = cfg.tone_window_samples(rate);
    let window_sig = PcgSignal::new(samples.to_vec(), rate, "")?;
    let track = frame_energy(&window_sig, spec)?;
    let smoothing = width.div_ceil(spec.hop);
    let period = period_from_energies(&track.energies, smoothing)?;
    let halfwidth = ((cfg.search_halfwidth_frac * period as f64).round() as usize).max(1);

    let mut work = track.energies.clone();
    let first = build_train(&mut work, &spec, width, period, halfwidth, cfg);
    let second = first
        .as_ref()
        .and_then(|_| build_train(&mut work, &spec, width, period, halfwidth, cfg));
    let (first, second) = match (first, second) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::TooFewTones("fewer than two consistent tone trains".into())),
    };

    let period_samples = period * spec.hop;
    let first_label = if first_train_is_s1(&first.picks, &second.picks, period) {
        ToneLabel::S1
    } else {
        ToneLabel::S2
    };
    if first.picks.len().abs_diff(second.picks.len()) > 1 {
        log::warn!(
            "unequal tone trains ({} vs {}); keeping the truncated alternation",
            first.picks.len(),
            second.picks.len()
        );
    }

    let power = |start: usize| samples[start..start + width].iter().map(|x| x * x).sum::<f64>();
    let mut tones = Vec::new();
    for (train, label) in [(&first, first_label), (&second, first_label.other())] {
        for &k in &train.picks {
            let start = spec.frame_start(k);
            if start + width <= samples.len() {
                tones.push(Candidate {
                    start,
                    label,
                    power: power(start),
                });
            }
        }
    }
    tones.sort_by_key(|c| c.start);
    Ok(WindowResult { tones, period_samples })
}

// Builds one periodic train from the strongest remaining frame and zeroes the
// frames its tones cover. Anchors without periodic support are zeroed and
// skipped.
fn build_train(
    work: &mut [f64],
    spec: &FrameSpec,
    width: usize,
    period: usize,
    halfwidth: usize,
    cfg: &SegmentationConfig,
) -> Option<Train> {
    const MAX_ANCHOR_ATTEMPTS: usize = 8;
    let n = work.len();
    for _ in 0..MAX_ANCHOR_ATTEMPTS {
        let anchor = argmax(work, 0, n - 1);
        let anchor_energy = work[anchor];
        if !(anchor_energy > 0.0) {
            return None;
        }
        let floor = cfg.min_pick_ratio * anchor_energy;
        let mut picks = vec![anchor];
        let mut expected_slots = 0usize;

        let mut pos = anchor;
        while pos + period < n {
            let c = pos + period;
            expected_slots += 1;
            let k = argmax(work, c.saturating_sub(halfwidth), (c + halfwidth).min(n - 1));
            if work[k] >= floor {
                picks.push(k);
                pos = k;
            } else {
                pos = c;
            }
        }
        let mut pos = anchor;
        while pos + halfwidth >= period {
            // the expected slot may sit slightly before the first frame
            let c = pos as i64 - period as i64;
            expected_slots += 1;
            let lo = (c - halfwidth as i64).max(0) as usize;
            let hi = ((c + halfwidth as i64) as usize).min(n - 1);
            let k = argmax(work, lo, hi);
            if work[k] >= floor && k < pos {
                picks.push(k);
                pos = k;
            } else if c >= 0 {
                pos = c as usize;
            } else {
                break;
            }
        }
        picks.sort_unstable();
        picks.dedup();

        let mut others: Vec<f64> = picks.iter().filter(|&&k| k != anchor).map(|&k| work[k]).collect();
        let isolated = if others.is_empty() {
            expected_slots > 0
        } else {
            median(&mut others) < cfg.anchor_consistency * anchor_energy
        };
        if isolated {
            zero_tone(work, spec, width, anchor);
            continue;
        }
        for &k in &picks {
            zero_tone(work, spec, width, k);
        }
        return Some(Train { picks });
    }
    None
}

fn zero_tone(work: &mut [f64], spec: &FrameSpec, width: usize, pick: usize) {
    let start = spec.frame_start(pick);
    let end = start + width;
    let first = (start + spec.hop).saturating_sub(spec.frame_length) / spec.hop;
    let last = ((end - 1) / spec.hop).min(work.len() - 1);
    for v in &mut work[first.min(last)..=last] {
        *v = 0.0;
    }
}

// The first train is S1 when the second train follows it by less than half a
// period (systole shorter than diastole).
fn first_train_is_s1(first: &[usize], second: &[usize], period: usize) -> bool {
    let p = period as i64;
    let mut phases: Vec<i64> = first
        .iter()
        .map(|&a| {
            let nearest = second
                .iter()
                .min_by_key(|&&b| (b as i64 - a as i64).abs())
                .copied()
                .unwrap_or(a);
            (nearest as i64 - a as i64).rem_euclid(p)
        })
        .collect();
    phases.sort_unstable();
    let phase = phases[phases.len() / 2];
    2 * phase < p
}

// Resolve overlaps and enforce label alternation, keeping the stronger tone.
fn finish(mut tones: Vec<Candidate>, period_samples: usize, width: usize) -> Result<ToneEndpoints> {
    tones.sort_by_key(|c| c.start);
    let mut out: Vec<Candidate> = Vec::with_capacity(tones.len());
    for c in tones {
        if let Some(last) = out.last_mut() {
            let overlaps = c.start < last.start + width;
            if overlaps || last.label == c.label {
                if c.power > last.power {
                    *last = c;
                }
                continue;
            }
        }
        out.push(c);
    }
    // replacing a tone can re-create a same-label neighbour
    let mut cleaned: Vec<Candidate> = Vec::with_capacity(out.len());
    for c in out {
        match cleaned.last_mut() {
            Some(last) if last.label == c.label || c.start < last.start + width => {
                if c.power > last.power {
                    *last = c;
                }
            }
            _ => cleaned.push(c),
        }
    }
    let endpoints = ToneEndpoints {
        tones: cleaned
            .into_iter()
            .map(|c| Tone {
                start: c.start,
                end: c.start + width,
                label: c.label,
            })
            .collect(),
        period_estimate: period_samples,
    };
    if endpoints.count(ToneLabel::S1) == 0 || endpoints.count(ToneLabel::S2) == 0 {
        return Err(Error::TooFewTones(format!(
            "{} S1 and {} S2 tones",
            endpoints.count(ToneLabel::S1),
            endpoints.count(ToneLabel::S2)
        )));
    }
    Ok(endpoints)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::CANONICAL_RATE;

    fn track(e: Vec<f64>) -> EnergyTrack {
        EnergyTrack {
            energies: e,
            frame_spec: FrameSpec::energy_default(CANONICAL_RATE),
        }
    }

    #[test]
    fn period_of_impulse_train() {
        let mut e = vec![0.0; 400];
        for k in (3..400).step_by(50) {
            e[k] = 1.0;
        }
        assert_eq!(estimate_period(&track(e.clone()), 1).unwrap(), 50);
        assert_eq!(estimate_period(&track(e), 12).unwrap(), 50);
    }

    #[test]
    fn period_needs_a_minimum() {
        let e: Vec<f64> = (0..100).map(|k| 100.0 - k as f64).collect();
        assert!(matches!(estimate_period(&track(e), 1), Err(Error::NoPeriodFound)));
        assert!(matches!(
            estimate_period(&track(vec![1.0, 2.0]), 1),
            Err(Error::NoPeriodFound)
        ));
        assert!(matches!(
            estimate_period(&track(vec![0.0; 50]), 1),
            Err(Error::NoPeriodFound)
        ));
    }

    #[test]
    fn silence_has_too_few_tones() {
        let sig = PcgSignal::new(vec![0.0; 4 * 11025], 11025, "s").unwrap();
        let err = detect_tones_short(&sig, &SegmentationConfig::default()).unwrap_err();
        assert!(matches!(err, Error::TooFewTones(_) | Error::NoPeriodFound), "{err}");
        assert!(detect_tones(&sig, &SegmentationConfig::default()).is_err());
    }

    #[test]
    fn short_detection_rejects_long_input() {
        let sig = PcgSignal::new(vec![0.0; 6 * 11025], 11025, "s").unwrap();
        assert!(matches!(
            detect_tones_short(&sig, &SegmentationConfig::default()),
            Err(Error::InvalidSegmentationConfig(_))
        ));
    }

    #[test]
    fn windows_absorb_short_remainder() {
        assert_eq!(analysis_windows(44100, 11025, 4.0), vec![(0, 44100)]);
        assert_eq!(
            analysis_windows(11025 * 9, 11025, 4.0),
            vec![(0, 44100), (44100, 99225)]
        );
        assert_eq!(
            analysis_windows(11025 * 11, 11025, 4.0),
            vec![(0, 44100), (44100, 88200), (88200, 121275)]
        );
    }

    #[test]
    fn label_phase_rule() {
        // second train 30 frames after the first with period 100: first is S1
        assert!(first_train_is_s1(&[10, 110, 210], &[40, 140, 240], 100));
        assert!(!first_train_is_s1(&[40, 140, 240], &[10, 110, 210], 100));
    }

    #[test]
    fn endpoints_text_round_trip() {
        let ep = ToneEndpoints {
            tones: vec![
                Tone {
                    start: 10,
                    end: 20,
                    label: ToneLabel::S1,
                },
                Tone {
                    start: 30,
                    end: 40,
                    label: ToneLabel::S2,
                },
            ],
            period_estimate: 0,
        };
        let text = ep.to_text();
        assert_eq!(text, "S1 10 20\nS2 30 40\n");
        assert_eq!(ToneEndpoints::parse_text(&text, 0).unwrap(), ep);
        assert!(ToneEndpoints::parse_text("S3 1 2", 0).is_err());
    }

    #[test]
    fn cycles_pair_s1_with_following_s2() {
        let t = |start, label| Tone {
            start,
            end: start + 5,
            label,
        };
        let ep = ToneEndpoints {
            tones: vec![
                t(0, ToneLabel::S2),
                t(10, ToneLabel::S1),
                t(20, ToneLabel::S2),
                t(30, ToneLabel::S1),
            ],
            period_estimate: 20,
        };
        assert_eq!(ep.cycles(), vec![(t(10, ToneLabel::S1), t(20, ToneLabel::S2))]);
    }
}

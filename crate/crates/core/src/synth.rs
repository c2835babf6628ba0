//! Synthetic phonocardiograms with known tone endpoints.
//!
//! Each tone is a sum of exponentially damped sinusoids with a short attack
//! and a tapered tail, confined to the configured tone window so the ground
//! truth endpoints are exact. S1 and S2 gains are set so the noise-free
//! first-to-second power ratio equals the identity's target.

use std::f64::consts::PI;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{Manifest, ManifestEntry, Role};
use crate::segmentation::{Tone, ToneEndpoints, ToneLabel};
use crate::signal::{ms_to_samples, write_wav_to, PcgSignal, CANONICAL_RATE};
use crate::util::{rng_for, write_atomic};

/// Upper edge of the band synthetic resonances may occupy.
pub const MAX_RESONANCE_HZ: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub freq_hz: f64,
    /// Envelope decay rate in 1/s.
    pub decay_per_s: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityParams {
    pub s1_resonances: Vec<Resonance>,
    pub s2_resonances: Vec<Resonance>,
    pub fsr_db_target: f64,
    pub base_rate_bpm: f64,
    /// S1-to-S2 interval as a fraction of the cycle.
    pub systole_fraction: f64,
}

impl IdentityParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        for (name, set) in [("S1", &self.s1_resonances), ("S2", &self.s2_resonances)] {
            if set.is_empty() {
                return bad(format!("{name} has no resonances"));
            }
            for r in set {
                if !(r.freq_hz > 0.0 && r.freq_hz < MAX_RESONANCE_HZ) {
                    return bad(format!("{name} resonance {} Hz outside (0, 500)", r.freq_hz));
                }
                if !(r.decay_per_s > 0.0 && r.amplitude > 0.0) {
                    return bad(format!("{name} resonance needs positive decay and amplitude"));
                }
            }
        }
        if !(self.systole_fraction > 0.0 && self.systole_fraction < 0.5) {
            return bad(format!("systole fraction {} outside (0, 0.5)", self.systole_fraction));
        }
        if !(self.base_rate_bpm >= 30.0 && self.base_rate_bpm <= 180.0) {
            return bad(format!("heart rate {} bpm outside [30, 180]", self.base_rate_bpm));
        }
        if !self.fsr_db_target.is_finite() {
            return bad("non-finite FSR target".into());
        }
        Ok(())
    }

    /// A mid-range identity used as the centre of corpus parameter space.
    pub fn reference() -> Self {
        Self::from_primaries(100.0, 210.0, 3.0, 70.0, 0.33)
    }

    fn from_primaries(s1_hz: f64, s2_hz: f64, fsr_db: f64, bpm: f64, systole: f64) -> Self {
        Self {
            s1_resonances: vec![
                Resonance {
                    freq_hz: s1_hz,
                    decay_per_s: 35.0,
                    amplitude: 1.0,
                },
                Resonance {
                    freq_hz: 1.8 * s1_hz,
                    decay_per_s: 50.0,
                    amplitude: 0.5,
                },
            ],
            s2_resonances: vec![
                Resonance {
                    freq_hz: s2_hz,
                    decay_per_s: 45.0,
                    amplitude: 1.0,
                },
                Resonance {
                    freq_hz: 1.45 * s2_hz,
                    decay_per_s: 60.0,
                    amplitude: 0.4,
                },
            ],
            fsr_db_target: fsr_db,
            base_rate_bpm: bpm,
            systole_fraction: systole,
        }
    }
}

/// Rendering settings for [`generate_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    pub sample_rate: u32,
    pub tone_window_ms: f64,
    /// Peak amplitude of the louder tone before noise.
    pub peak_level: f64,
    /// Relative standard deviation of each tone's amplitude from beat to beat.
    pub beat_amplitude_sd: f64,
    /// Relative standard deviation of each tone's resonance frequencies from
    /// beat to beat.
    pub beat_freq_sd: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            sample_rate: CANONICAL_RATE,
            tone_window_ms: 120.0,
            peak_level: 0.5,
            beat_amplitude_sd: 0.0,
            beat_freq_sd: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecording {
    pub signal: PcgSignal,
    pub truth_endpoints: ToneEndpoints,
    pub identity: IdentityParams,
    pub seed: u64,
}

const ATTACK_MS: f64 = 4.0;
const RELEASE_MS: f64 = 10.0;

fn render_tone(resonances: &[Resonance], width: usize, rate: u32) -> Vec<f64> {
    let fs = rate as f64;
    let attack = (ATTACK_MS * fs / 1000.0).max(1.0);
    let release = (RELEASE_MS * fs / 1000.0).max(1.0);
    (0..width)
        .map(|n| {
            let t = n as f64 / fs;
            let mut env = 1.0;
            if (n as f64) < attack {
                env *= 0.5 * (1.0 - (PI * n as f64 / attack).cos());
            }
            let to_end = (width - 1 - n) as f64;
            if to_end < release {
                env *= 0.5 * (1.0 - (PI * to_end / release).cos());
            }
            env * resonances
                .iter()
                .map(|r| r.amplitude * (-r.decay_per_s * t).exp() * (2.0 * PI * r.freq_hz * t).sin())
                .sum::<f64>()
        })
        .collect()
}

fn mean_square(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// S1 and S2 waveforms scaled to the identity's FSR target and peak level,
/// with the gains applied to each.
fn tone_shapes(identity: &IdentityParams, opts: &RenderOptions) -> (Vec<f64>, Vec<f64>, f64, f64) {
    let width = ms_to_samples(opts.tone_window_ms, opts.sample_rate);
    let mut s1 = render_tone(&identity.s1_resonances, width, opts.sample_rate);
    let mut s2 = render_tone(&identity.s2_resonances, width, opts.sample_rate);
    let ratio = 10f64.powf(identity.fsr_db_target / 10.0);
    let g1 = (ratio / mean_square(&s1)).sqrt();
    let g2 = (1.0 / mean_square(&s2)).sqrt();
    let peak = |x: &[f64], g: f64| x.iter().fold(0.0f64, |m, v| m.max((v * g).abs()));
    let k = opts.peak_level / peak(&s1, g1).max(peak(&s2, g2));
    s1.iter_mut().for_each(|v| *v *= g1 * k);
    s2.iter_mut().for_each(|v| *v *= g2 * k);
    (s1, s2, g1 * k, g2 * k)
}

/// One beat's rendition of a tone with its amplitude and resonance
/// frequencies perturbed.
fn varied_tone(
    resonances: &[Resonance],
    gain: f64,
    width: usize,
    opts: &RenderOptions,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let a: f64 = StandardNormal.sample(rng);
    let f: f64 = StandardNormal.sample(rng);
    let amp = (1.0 + opts.beat_amplitude_sd * a).clamp(0.5, 1.5);
    let shift = (1.0 + opts.beat_freq_sd * f).clamp(0.8, 1.2);
    let moved: Vec<Resonance> = resonances
        .iter()
        .map(|r| Resonance {
            freq_hz: (r.freq_hz * shift).min(MAX_RESONANCE_HZ - 1.0),
            ..*r
        })
        .collect();
    let mut tone = render_tone(&moved, width, opts.sample_rate);
    tone.iter_mut().for_each(|v| *v *= gain * amp);
    tone
}

/// Renders a recording with default [`RenderOptions`].
pub fn generate(
    identity: &IdentityParams,
    duration_s: f64,
    jitter_pct: f64,
    noise_snr_db: Option<f64>,
    seed: u64,
) -> Result<SynthRecording> {
    generate_with(
        identity,
        duration_s,
        jitter_pct,
        noise_snr_db,
        seed,
        &RenderOptions::default(),
    )
}

/// Renders `duration_s` seconds of heartbeats.
///
/// Cycle lengths are jittered uniformly by `±jitter_pct` percent; the first
/// S1 starts within the first quarter cycle. White noise is added at
/// `noise_snr_db` relative to the clean signal's mean power (`None` disables
/// it). Tones that would not fit entirely are omitted.
pub fn generate_with(
    identity: &IdentityParams,
    duration_s: f64,
    jitter_pct: f64,
    noise_snr_db: Option<f64>,
    seed: u64,
    opts: &RenderOptions,
) -> Result<SynthRecording> {
    identity.validate()?;
    if !(duration_s >= 4.0) {
        return Err(Error::InvalidParams(format!("duration {duration_s} s is below 4 s")));
    }
    if !(0.0..50.0).contains(&jitter_pct) {
        return Err(Error::InvalidParams(format!("jitter {jitter_pct}% outside [0, 50)")));
    }
    if noise_snr_db.is_some_and(|s| !s.is_finite()) {
        return Err(Error::InvalidParams("non-finite SNR".into()));
    }
    let fs = opts.sample_rate as f64;
    let len = (duration_s * fs).round() as usize;
    if !(opts.beat_amplitude_sd >= 0.0 && opts.beat_freq_sd >= 0.0) {
        return Err(Error::InvalidParams("beat variability must be non-negative".into()));
    }
    let (s1, s2, g1, g2) = tone_shapes(identity, opts);
    let width = s1.len();
    let varied = opts.beat_amplitude_sd > 0.0 || opts.beat_freq_sd > 0.0;
    let mut beat_rng = rng_for(seed, 4);

    let mut rng = rng_for(seed, 1);
    let base_period = 60.0 / identity.base_rate_bpm;
    let mut t = rng.random_range(0.0..0.25) * base_period;
    let mut samples = vec![0.0; len];
    let mut tones = Vec::new();
    loop {
        let j = jitter_pct / 100.0;
        let period = if j > 0.0 {
            base_period * (1.0 + rng.random_range(-j..j))
        } else {
            base_period
        };
        let s1_start = (t * fs).round() as usize;
        let s2_start = ((t + identity.systole_fraction * period) * fs).round() as usize;
        if s1_start + width > len {
            break;
        }
        let beat = varied.then(|| {
            (
                varied_tone(&identity.s1_resonances, g1, width, opts, &mut beat_rng),
                varied_tone(&identity.s2_resonances, g2, width, opts, &mut beat_rng),
            )
        });
        let (b1, b2) = match &beat {
            Some((a, b)) => (a, b),
            None => (&s1, &s2),
        };
        for (start, shape, label) in [(s1_start, b1, ToneLabel::S1), (s2_start, b2, ToneLabel::S2)] {
            if start + width <= len {
                samples[start..start + width]
                    .iter_mut()
                    .zip(shape.iter())
                    .for_each(|(o, v)| *o += v);
                tones.push(Tone {
                    start,
                    end: start + width,
                    label,
                });
            }
        }
        t += period;
    }

    if let Some(snr) = noise_snr_db {
        let mut noise_rng = rng_for(seed, 2);
        let sigma = (mean_square(&samples) / 10f64.powf(snr / 10.0)).sqrt();
        for v in samples.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            *v += sigma * z;
        }
    }
    samples.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));

    Ok(SynthRecording {
        signal: PcgSignal::new(samples, opts.sample_rate, format!("synth-{seed}"))?,
        truth_endpoints: ToneEndpoints {
            tones,
            period_estimate: (base_period * fs).round() as usize,
        },
        identity: identity.clone(),
        seed,
    })
}

/// Adds short broadband clicks in the gaps between tones, on average
/// `per_10s` per ten seconds. Returns the click onsets.
pub fn inject_clicks(rec: &mut SynthRecording, per_10s: f64, amplitude: f64, seed: u64) -> Vec<usize> {
    const CLICK_LEN: usize = 30;
    const CLICK_DECAY: f64 = 5.0;
    let rate = rec.signal.sample_rate();
    let margin = ms_to_samples(10.0, rate);
    let len = rec.signal.len();
    let count = (per_10s * rec.signal.duration_s() / 10.0).round() as usize;
    let mut rng = rng_for(seed, 3);

    // free gaps between truth tones
    let mut gaps = Vec::new();
    let mut cursor = 0;
    for t in &rec.truth_endpoints.tones {
        if t.start > cursor + 2 * margin + CLICK_LEN {
            gaps.push((cursor + margin, t.start - margin - CLICK_LEN));
        }
        cursor = t.end;
    }
    if len > cursor + 2 * margin + CLICK_LEN {
        gaps.push((cursor + margin, len - margin - CLICK_LEN));
    }
    if gaps.is_empty() {
        return Vec::new();
    }

    let mut samples = rec.signal.samples().to_vec();
    let mut onsets = Vec::with_capacity(count);
    for _ in 0..count {
        let (lo, hi) = gaps[rng.random_range(0..gaps.len())];
        let onset = rng.random_range(lo..=hi);
        for n in 0..CLICK_LEN {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let v = samples[onset + n] + sign * amplitude * (-(n as f64) / CLICK_DECAY).exp();
            samples[onset + n] = v.clamp(-1.0, 1.0);
        }
        onsets.push(onset);
    }
    onsets.sort_unstable();
    rec.signal = PcgSignal::new(samples, rate, rec.signal.source_id()).expect("clamped samples are finite");
    onsets
}

/// Corpus layout and variability settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub num_identities: usize,
    pub recordings_each: usize,
    /// Minimum separation (Hz) of identities' primary S1/S2 resonances.
    pub spread_hz: f64,
    pub seed: u64,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    /// Fixed duration of enrollment recordings; probes use the range above.
    pub enroll_duration_s: Option<f64>,
    pub jitter_pct: f64,
    pub snr_db: Option<f64>,
    /// Relative standard deviation of per-recording resonance drift.
    pub session_freq_sd: f64,
    /// Standard deviation (dB) of per-recording FSR drift.
    pub session_fsr_sd_db: f64,
    /// Relative per-beat amplitude variation.
    pub beat_amplitude_sd: f64,
    /// Relative per-beat resonance frequency variation.
    pub beat_freq_sd: f64,
    /// Per-recording peak level is drawn uniformly from this range.
    pub min_level: f64,
    pub max_level: f64,
    pub clicks_per_10s: f64,
    pub click_amplitude: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            num_identities: 20,
            recordings_each: 2,
            spread_hz: 10.0,
            seed: 1,
            min_duration_s: 20.0,
            max_duration_s: 70.0,
            enroll_duration_s: Some(60.0),
            jitter_pct: 3.0,
            snr_db: Some(30.0),
            session_freq_sd: 0.005,
            session_fsr_sd_db: 1.0,
            beat_amplitude_sd: 0.0,
            beat_freq_sd: 0.0,
            min_level: 0.3,
            max_level: 0.6,
            clicks_per_10s: 0.0,
            click_amplitude: 1.0,
        }
    }
}

impl CorpusSpec {
    /// Widely spaced identities without session drift.
    pub fn separable() -> Self {
        Self {
            recordings_each: 4,
            spread_hz: 20.0,
            session_freq_sd: 0.0,
            session_fsr_sd_db: 0.0,
            ..Self::default()
        }
    }

    /// Every identity shares one parameter set; many short probes so the
    /// chance-level error rate is measured tightly.
    pub fn identical() -> Self {
        Self {
            recordings_each: 21,
            spread_hz: 0.0,
            min_duration_s: 20.0,
            max_duration_s: 20.0,
            ..Self::default()
        }
    }

    /// `default`, `separable` or `identical`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default()),
            "separable" => Ok(Self::separable()),
            "identical" => Ok(Self::identical()),
            other => Err(Error::InvalidParams(format!("unknown corpus preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.num_identities < 2 {
            return bad(format!("need at least 2 identities, got {}", self.num_identities));
        }
        if self.recordings_each < 2 {
            return bad("each identity needs an enroll and a verify recording".into());
        }
        if !(self.spread_hz >= 0.0) {
            return bad("spread must be non-negative".into());
        }
        if !(self.min_duration_s >= 4.0 && self.max_duration_s >= self.min_duration_s) {
            return bad("durations must satisfy 4 <= min <= max".into());
        }
        if self.enroll_duration_s.is_some_and(|d| !(d >= 4.0)) {
            return bad("enrollment duration must be at least 4 s".into());
        }
        if !(self.min_level > 0.0 && self.max_level >= self.min_level && self.max_level <= 1.0) {
            return bad("levels must satisfy 0 < min <= max <= 1".into());
        }
        if !(self.session_freq_sd >= 0.0
            && self.session_fsr_sd_db >= 0.0
            && self.clicks_per_10s >= 0.0
            && self.beat_amplitude_sd >= 0.0
            && self.beat_freq_sd >= 0.0)
        {
            return bad("variability settings must be non-negative".into());
        }
        Ok(())
    }
}

const S1_BAND: (f64, f64) = (40.0, 160.0);
const S2_BAND: (f64, f64) = (90.0, 330.0);

/// Distinct identities whose primary (S1, S2) resonance pairs sit on a grid
/// with pitch `spread_hz`, so any two differ by at least the spread in one
/// coordinate. Spread 0 yields identical identities.
pub fn corpus_identities(spec: &CorpusSpec) -> Result<Vec<IdentityParams>> {
    spec.validate()?;
    if spec.spread_hz == 0.0 {
        return Ok(vec![IdentityParams::reference(); spec.num_identities]);
    }
    let mut rng = rng_for(spec.seed, 10);
    let steps = |(lo, hi): (f64, f64)| ((hi - lo) / spec.spread_hz).floor() as usize + 1;
    let (n1, n2) = (steps(S1_BAND), steps(S2_BAND));
    if n1 * n2 < spec.num_identities {
        return Err(Error::InvalidParams(format!(
            "spread {} Hz leaves room for only {} identities",
            spec.spread_hz,
            n1 * n2
        )));
    }
    let mut cells: Vec<(usize, usize)> = (0..n1).flat_map(|i| (0..n2).map(move |j| (i, j))).collect();
    cells.shuffle(&mut rng);
    // other traits widen with the spread, saturating at 20 Hz
    let s = (spec.spread_hz / 20.0).min(1.0);
    Ok(cells[..spec.num_identities]
        .iter()
        .map(|&(i, j)| {
            IdentityParams::from_primaries(
                S1_BAND.0 + i as f64 * spec.spread_hz,
                S2_BAND.0 + j as f64 * spec.spread_hz,
                3.0 + 6.0 * s * rng.random_range(-1.0..1.0),
                70.0 + 10.0 * s * rng.random_range(-1.0..1.0),
                0.33 + 0.03 * s * rng.random_range(-1.0..1.0),
            )
        })
        .collect())
}

/// Per-recording drift of an identity (sensor placement, physiology).
fn session_variant(identity: &IdentityParams, spec: &CorpusSpec, rng: &mut impl Rng) -> IdentityParams {
    let mut out = identity.clone();
    let freq_drift = Normal::new(0.0, spec.session_freq_sd).expect("finite sd");
    for r in out.s1_resonances.iter_mut().chain(out.s2_resonances.iter_mut()) {
        let f = r.freq_hz * (1.0 + freq_drift.sample(rng));
        r.freq_hz = f.clamp(20.0, MAX_RESONANCE_HZ - 1.0);
    }
    let fsr_drift: f64 = StandardNormal.sample(rng);
    out.fsr_db_target += spec.session_fsr_sd_db * fsr_drift;
    let rate_drift: f64 = StandardNormal.sample(rng);
    out.base_rate_bpm = (out.base_rate_bpm * (1.0 + 0.05 * rate_drift)).clamp(45.0, 110.0);
    out
}

#[derive(Debug, Clone)]
pub struct CorpusRecording {
    pub entry: ManifestEntry,
    pub identity: IdentityParams,
    pub seed: u64,
    pub truth_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    pub recordings: Vec<CorpusRecording>,
}

pub const MANIFEST_FILE: &str = "manifest.txt";

/// Renders one recording of a corpus without touching the filesystem.
pub fn render_corpus_recording(
    spec: &CorpusSpec,
    identity: &IdentityParams,
    person: usize,
    take: usize,
) -> Result<SynthRecording> {
    let stream = 1000 + (person as u64) * 64 + take as u64;
    let mut rng = rng_for(spec.seed, stream);
    let session = session_variant(identity, spec, &mut rng);
    let drawn = if spec.max_duration_s > spec.min_duration_s {
        rng.random_range(spec.min_duration_s..spec.max_duration_s)
    } else {
        spec.min_duration_s
    };
    let duration = match spec.enroll_duration_s {
        Some(d) if take == 0 => d,
        _ => drawn,
    };
    let level = if spec.max_level > spec.min_level {
        rng.random_range(spec.min_level..spec.max_level)
    } else {
        spec.min_level
    };
    let seed = rng.random::<u64>();
    let opts = RenderOptions {
        peak_level: level,
        beat_amplitude_sd: spec.beat_amplitude_sd,
        beat_freq_sd: spec.beat_freq_sd,
        ..RenderOptions::default()
    };
    let mut rec = generate_with(&session, duration, spec.jitter_pct, spec.snr_db, seed, &opts)?;
    if spec.clicks_per_10s > 0.0 {
        inject_clicks(&mut rec, spec.clicks_per_10s, spec.click_amplitude, seed);
    }
    Ok(rec)
}

/// Writes WAVs, truth endpoint files and `manifest.txt` into `out_dir`.
///
/// The first recording of each identity is its enrollment, the rest are
/// verification probes.
pub fn make_corpus(spec: &CorpusSpec, out_dir: impl AsRef<Path>) -> Result<Corpus> {
    let out_dir = out_dir.as_ref();
    let identities = corpus_identities(spec)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut entries = Vec::new();
    let mut recordings = Vec::new();
    for (person, identity) in identities.iter().enumerate() {
        let person_id = format!("p{person:03}");
        for take in 0..spec.recordings_each {
            let (role, stem) = match take {
                0 => (Role::Enroll, format!("{person_id}_enroll")),
                1 => (Role::Verify, format!("{person_id}_verify")),
                k => (Role::Verify, format!("{person_id}_verify{k}")),
            };
            let rec = render_corpus_recording(spec, identity, person, take)?;
            let wav_name = format!("{stem}.wav");
            let mut buf = Cursor::new(Vec::new());
            write_wav_to(&mut buf, &rec.signal)?;
            write_atomic(out_dir.join(&wav_name), buf.get_ref())?;

            let truth_name = format!("{stem}.tones");
            let truth = format!(
                "# identity {person_id} seed {}\n{}",
                rec.seed,
                rec.truth_endpoints.to_text()
            );
            write_atomic(out_dir.join(&truth_name), truth.as_bytes())?;

            let entry = ManifestEntry {
                person_id: person_id.clone(),
                role,
                path: PathBuf::from(wav_name),
            };
            entries.push(entry.clone());
            recordings.push(CorpusRecording {
                entry,
                identity: rec.identity,
                seed: rec.seed,
                truth_path: out_dir.join(truth_name),
            });
        }
    }
    let manifest = Manifest {
        entries,
        base_dir: out_dir.to_path_buf(),
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    write_atomic(&manifest_path, manifest.to_text().as_bytes())?;
    Ok(Corpus {
        manifest,
        manifest_path,
        recordings,
    })
}

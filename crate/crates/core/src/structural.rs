//! Template matcher built from per-tone cepstra and the first-to-second ratio.
//!
//! Enrollment keeps the best-quality subsequence of a recording, segments it,
//! and stores one 13-dimensional mean cepstrum per S1 and S2 tone of its
//! first four cycles together with the sequence FSR. Two templates are
//! compared by their mean cross distances, amplified when their FSRs differ
//! by more than a threshold.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_cepstra, fsr_sequence, FrontEnd};
use crate::segmentation::{detect_tones_short, SegmentationConfig, Tone, ToneEndpoints};
use crate::signal::{lowpass_filter, PcgSignal};
use crate::util::write_atomic;

/// Cycles entering the quality index and the template.
pub const QUALITY_CYCLES: usize = 4;
pub const TEMPLATE_DIM: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructuralParams {
    /// Normalized FSR distance below which the FSR has no effect.
    pub th_fsr: f64,
    /// FSR distance (dB) that normalizes to 1.
    pub fsr_db_max: f64,
    /// Accept when the distance is at most this.
    pub decision_threshold: f64,
}

impl Default for StructuralParams {
    fn default() -> Self {
        Self {
            th_fsr: 0.25,
            fsr_db_max: 20.0,
            decision_threshold: 40.0,
        }
    }
}

impl StructuralParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.th_fsr > 0.0 && self.th_fsr <= 1.0) {
            return Err(Error::InvalidStructuralParams(format!(
                "th_fsr {} outside (0, 1]",
                self.th_fsr
            )));
        }
        if !(self.fsr_db_max > 0.0) {
            return Err(Error::InvalidStructuralParams(format!(
                "fsr_db_max {} must be positive",
                self.fsr_db_max
            )));
        }
        if self.decision_threshold.is_nan() {
            return Err(Error::InvalidStructuralParams("decision threshold is NaN".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructuralConfig {
    pub params: StructuralParams,
    /// Length of the retained subsequence.
    pub window_s: f64,
    /// Offset step between candidate subsequences.
    pub stride_s: f64,
    pub lowpass_hz: f64,
    pub front_end: FrontEnd,
    pub segmentation: SegmentationConfig,
}

impl Default for StructuralConfig {
    fn default() -> Self {
        Self {
            params: StructuralParams::default(),
            window_s: 5.0,
            stride_s: 0.5,
            lowpass_hz: 500.0,
            front_end: FrontEnd::structural(),
            segmentation: SegmentationConfig::default(),
        }
    }
}

impl StructuralConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        self.params.validate()?;
        if !(4.0..=6.0).contains(&self.window_s) {
            return Err(Error::InvalidStructuralParams(format!(
                "subsequence window {} s outside [4, 6]",
                self.window_s
            )));
        }
        if !(self.stride_s > 0.0) {
            return Err(Error::InvalidStructuralParams("stride must be positive".into()));
        }
        if self.front_end.cepstrum.dim() != TEMPLATE_DIM {
            return Err(Error::InvalidStructuralParams(format!(
                "front end yields {} dimensions, templates need {TEMPLATE_DIM}",
                self.front_end.cepstrum.dim()
            )));
        }
        self.front_end.validate(sample_rate)?;
        self.segmentation.validate()
    }

    /// Segmentation settings for one candidate: the whole candidate is a
    /// single analysis window and the input is already low-passed.
    fn candidate_segmentation(&self) -> SegmentationConfig {
        SegmentationConfig {
            analysis_window_s: self.window_s,
            prefilter_hz: None,
            ..self.segmentation
        }
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn pairwise_sum(v: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    for (k, a) in v.iter().enumerate() {
        for (j, b) in v.iter().enumerate() {
            if j != k {
                sum += euclid(a, b);
            }
        }
    }
    sum
}

/// Reciprocal of the summed pairwise distances among four S1 vectors plus
/// those among four S2 vectors (ordered pairs). Identical cycles give
/// `f64::INFINITY`.
pub fn quality_index(s1: &[Vec<f64>], s2: &[Vec<f64>]) -> Result<f64> {
    if s1.len() != QUALITY_CYCLES || s2.len() != QUALITY_CYCLES {
        return Err(Error::WrongCycleCount {
            s1: s1.len(),
            s2: s2.len(),
        });
    }
    let denom = pairwise_sum(s1) + pairwise_sum(s2);
    Ok(if denom == 0.0 { f64::INFINITY } else { 1.0 / denom })
}

/// Mean cepstral vector over the frames of one tone.
pub fn tone_vector(sig: &PcgSignal, tone: &Tone, fe: &FrontEnd) -> Result<Vec<f64>> {
    let seg = sig.slice(tone.start, tone.end.min(sig.len()))?;
    let fm = extract_cepstra(&seg, fe)?;
    let mut mean = vec![0.0; fm.dim()];
    for row in fm.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let n = fm.num_frames() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

struct Candidate {
    tones: ToneEndpoints,
    s1: Vec<Vec<f64>>,
    s2: Vec<Vec<f64>>,
    quality: f64,
}

/// Segments one (already low-passed) candidate and scores its first cycles.
fn evaluate_candidate(seg: &PcgSignal, cfg: &StructuralConfig) -> Result<Candidate> {
    let tones = detect_tones_short(seg, &cfg.candidate_segmentation())?;
    let cycles = tones.cycles();
    if cycles.len() < QUALITY_CYCLES {
        return Err(Error::NoValidSubsequence);
    }
    let mut s1 = Vec::with_capacity(QUALITY_CYCLES);
    let mut s2 = Vec::with_capacity(QUALITY_CYCLES);
    for (a, b) in &cycles[..QUALITY_CYCLES] {
        s1.push(tone_vector(seg, a, &cfg.front_end)?);
        s2.push(tone_vector(seg, b, &cfg.front_end)?);
    }
    let quality = quality_index(&s1, &s2)?;
    Ok(Candidate { tones, s1, s2, quality })
}

fn candidate_offsets(len: usize, window: usize, stride: usize) -> Vec<usize> {
    (0..=(len - window) / stride).map(|i| i * stride).collect()
}

fn window_samples(cfg: &StructuralConfig, rate: u32) -> (usize, usize) {
    let window = (cfg.window_s * rate as f64).round() as usize;
    let stride = ((cfg.stride_s * rate as f64).round() as usize).max(1);
    (window, stride)
}

fn best_on_filtered(filtered: &PcgSignal, cfg: &StructuralConfig) -> Result<(usize, Candidate)> {
    let (window, stride) = window_samples(cfg, filtered.sample_rate());
    if filtered.len() < window {
        return Err(Error::SignalTooShort {
            len: filtered.len(),
            needed: window,
        });
    }
    let offsets = candidate_offsets(filtered.len(), window, stride);
    let scored: Vec<Option<(usize, Candidate)>> = offsets
        .par_iter()
        .map(|&off| {
            let seg = filtered.slice(off, off + window).ok()?;
            evaluate_candidate(&seg, cfg).ok().map(|c| (off, c))
        })
        .collect();
    // earliest offset wins ties
    scored
        .into_iter()
        .flatten()
        .fold(None, |best: Option<(usize, Candidate)>, (off, c)| match best {
            Some((bo, bc)) if bc.quality >= c.quality => Some((bo, bc)),
            _ => Some((off, c)),
        })
        .ok_or(Error::NoValidSubsequence)
}

/// Offset (samples) and quality of the `window_s` subsequence with the
/// highest quality index, searched every `stride_s`.
pub fn best_subsequence(sig: &PcgSignal, cfg: &StructuralConfig) -> Result<(usize, f64)> {
    cfg.validate(sig.sample_rate())?;
    let filtered = lowpass_filter(sig, cfg.lowpass_hz)?;
    best_on_filtered(&filtered, cfg).map(|(off, c)| (off, c.quality))
}

/// Quality of every candidate offset, `None` where no four cycles were found.
pub fn subsequence_qualities(sig: &PcgSignal, cfg: &StructuralConfig) -> Result<Vec<(usize, Option<f64>)>> {
    cfg.validate(sig.sample_rate())?;
    let filtered = lowpass_filter(sig, cfg.lowpass_hz)?;
    let (window, stride) = window_samples(cfg, sig.sample_rate());
    if filtered.len() < window {
        return Err(Error::SignalTooShort {
            len: filtered.len(),
            needed: window,
        });
    }
    Ok(candidate_offsets(filtered.len(), window, stride)
        .par_iter()
        .map(|&off| {
            let q = filtered
                .slice(off, off + window)
                .ok()
                .and_then(|seg| evaluate_candidate(&seg, cfg).ok())
                .map(|c| c.quality);
            (off, q)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralTemplate {
    pub person_id: String,
    pub s1_features: Vec<Vec<f64>>,
    pub s2_features: Vec<Vec<f64>>,
    pub fsr_db: f64,
}

const TEMPLATE_HEADER: &str = "# heartid structural template v1";

impl StructuralTemplate {
    pub fn num_cycles(&self) -> usize {
        self.s1_features.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.s1_features.len();
        if n < QUALITY_CYCLES || self.s2_features.len() != n {
            return Err(Error::InvalidTemplate(format!(
                "need at least {QUALITY_CYCLES} S1 and as many S2 vectors, got {} and {}",
                n,
                self.s2_features.len()
            )));
        }
        for v in self.s1_features.iter().chain(&self.s2_features) {
            if v.len() != TEMPLATE_DIM {
                return Err(Error::InvalidTemplate(format!(
                    "vector of dimension {}, expected {TEMPLATE_DIM}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidTemplate("non-finite feature".into()));
            }
        }
        if !self.fsr_db.is_finite() {
            return Err(Error::InvalidTemplate("non-finite FSR".into()));
        }
        if self.person_id.is_empty() || self.person_id.contains(char::is_whitespace) {
            return Err(Error::InvalidTemplate(format!("bad person id {:?}", self.person_id)));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{TEMPLATE_HEADER}\nperson_id {}\nn {}\nfsr_db {}\n",
            self.person_id,
            self.num_cycles(),
            self.fsr_db
        );
        for (tag, rows) in [("s1", &self.s1_features), ("s2", &self.s2_features)] {
            for r in rows {
                let vals: Vec<String> = r.iter().map(|v| v.to_string()).collect();
                out.push_str(&format!("{tag} {}\n", vals.join(" ")));
            }
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<StructuralTemplate> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some(TEMPLATE_HEADER) {
            return Err(Error::Parse("missing template header".into()));
        }
        let mut field = |name: &str| -> Result<String> {
            lines
                .next()
                .and_then(|l| l.strip_prefix(name))
                .and_then(|rest| rest.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| Error::Parse(format!("expected `{name}` line")))
        };
        let person_id = field("person_id")?;
        let n: usize = field("n")?.parse().map_err(|e| Error::Parse(format!("n: {e}")))?;
        let fsr_db: f64 = field("fsr_db")?
            .parse()
            .map_err(|e| Error::Parse(format!("fsr_db: {e}")))?;
        let mut rows = |tag: &str| -> Result<Vec<Vec<f64>>> {
            (0..n)
                .map(|_| {
                    field(tag)?
                        .split_whitespace()
                        .map(|v| v.parse::<f64>().map_err(|e| Error::Parse(format!("{tag}: {e}"))))
                        .collect()
                })
                .collect()
        };
        let s1_features = rows("s1")?;
        let s2_features = rows("s2")?;
        let t = StructuralTemplate {
            person_id,
            s1_features,
            s2_features,
            fsr_db,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<StructuralTemplate> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        StructuralTemplate::parse_text(&text)
    }
}

/// Enrollment product with the intermediate results kept for inspection.
#[derive(Debug, Clone)]
pub struct Enrollment {
    pub template: StructuralTemplate,
    pub offset: usize,
    pub quality: f64,
    /// Endpoints relative to the start of the subsequence.
    pub tones: ToneEndpoints,
}

pub fn enroll_structural_detailed(sig: &PcgSignal, cfg: &StructuralConfig, person_id: &str) -> Result<Enrollment> {
    cfg.validate(sig.sample_rate())?;
    let filtered = lowpass_filter(sig, cfg.lowpass_hz)?;
    let (offset, best) = best_on_filtered(&filtered, cfg)?;
    let (window, _) = window_samples(cfg, sig.sample_rate());
    let seg = filtered.slice(offset, offset + window)?;
    let fsr = fsr_sequence(&seg, &best.tones)?;
    let template = StructuralTemplate {
        person_id: person_id.to_string(),
        s1_features: best.s1,
        s2_features: best.s2,
        fsr_db: fsr.ratio_db,
    };
    template.validate()?;
    Ok(Enrollment {
        template,
        offset,
        quality: best.quality,
        tones: best.tones,
    })
}

pub fn enroll_structural(sig: &PcgSignal, cfg: &StructuralConfig, person_id: &str) -> Result<StructuralTemplate> {
    enroll_structural_detailed(sig, cfg, person_id).map(|e| e.template)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceParts {
    pub d_s1: f64,
    pub d_s2: f64,
    pub d_fsr: f64,
    pub d_fsr_norm: f64,
    pub k_fsr: f64,
    pub distance: f64,
}

fn mean_cross(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let sum: f64 = x.iter().flat_map(|a| y.iter().map(move |b| euclid(a, b))).sum();
    sum / (x.len() * y.len()) as f64
}

/// Amplification applied for a normalized FSR distance.
pub fn k_fsr(d_fsr_norm: f64, th_fsr: f64) -> f64 {
    (d_fsr_norm / th_fsr).max(1.0)
}

pub fn structural_distance_parts(
    x: &StructuralTemplate,
    y: &StructuralTemplate,
    p: &StructuralParams,
) -> DistanceParts {
    let d_s1 = mean_cross(&x.s1_features, &y.s1_features);
    let d_s2 = mean_cross(&x.s2_features, &y.s2_features);
    let d_fsr = (x.fsr_db - y.fsr_db).abs();
    let d_fsr_norm = (d_fsr / p.fsr_db_max).min(1.0);
    let k = k_fsr(d_fsr_norm, p.th_fsr);
    DistanceParts {
        d_s1,
        d_s2,
        d_fsr,
        d_fsr_norm,
        k_fsr: k,
        distance: k * d_s1.hypot(d_s2),
    }
}

pub fn structural_distance(x: &StructuralTemplate, y: &StructuralTemplate, p: &StructuralParams) -> f64 {
    structural_distance_parts(x, y, p).distance
}

/// Enrolls the probe and compares it with `template`; accepts when the
/// distance is at most the decision threshold.
pub fn verify_structural(
    probe: &PcgSignal,
    template: &StructuralTemplate,
    cfg: &StructuralConfig,
) -> Result<(f64, bool)> {
    template.validate()?;
    let probe_t = enroll_structural(probe, cfg, &template.person_id)?;
    let d = structural_distance(&probe_t, template, &cfg.params);
    Ok((d, d <= cfg.params.decision_threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, IdentityParams};
    use proptest::prelude::*;

    fn vecs(rows: &[&[f64]]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| r.to_vec()).collect()
    }

    /// Four vertices of a regular simplex with unit edges.
    fn simplex(scale: f64) -> Vec<Vec<f64>> {
        let s = scale / 2f64.sqrt();
        let mut v = vec![vec![0.0; TEMPLATE_DIM]; 4];
        for (i, row) in v.iter_mut().enumerate() {
            row[i] = s;
        }
        v
    }

    fn template(s1: Vec<Vec<f64>>, s2: Vec<Vec<f64>>, fsr_db: f64) -> StructuralTemplate {
        StructuralTemplate {
            person_id: "p".into(),
            s1_features: s1,
            s2_features: s2,
            fsr_db,
        }
    }

    #[test]
    fn quality_examples() {
        let same = vec![vec![1.0; TEMPLATE_DIM]; 4];
        assert_eq!(quality_index(&same, &same).unwrap(), f64::INFINITY);
        let q = quality_index(&simplex(1.0), &simplex(1.0)).unwrap();
        assert!((q - 1.0 / 24.0).abs() < 1e-12);
        let q2 = quality_index(&simplex(2.0), &simplex(2.0)).unwrap();
        assert!((q2 - q / 2.0).abs() < 1e-12);
        assert!(matches!(
            quality_index(&simplex(1.0)[..3], &simplex(1.0)),
            Err(Error::WrongCycleCount { s1: 3, s2: 4 })
        ));
    }

    #[test]
    fn distance_examples() {
        let p = StructuralParams::default();
        let same = vec![vec![0.5; TEMPLATE_DIM]; 4];
        let x = template(same.clone(), same, 3.0);
        let self_d = structural_distance_parts(&x, &x, &p);
        assert!(self_d.distance <= 1e-9);
        assert_eq!(self_d.k_fsr, 1.0);
        // Cross means include the off-diagonal pairs, so a template with
        // spread cycles sits at its mean intra-set distance from itself.
        let x = template(simplex(1.0), simplex(2.0), 3.0);
        let self_d = structural_distance_parts(&x, &x, &p);
        assert!((self_d.d_s1 - 12.0 / 16.0).abs() < 1e-12);
        assert!((self_d.d_s2 - 24.0 / 16.0).abs() < 1e-12);

        // two-cycle templates whose cross distances are all 1
        let x = template(
            vecs(&[&[0.0, 0.0], &[0.0, 0.0]]),
            vecs(&[&[0.0, 0.0], &[0.0, 0.0]]),
            0.0,
        );
        let y = template(
            vecs(&[&[1.0, 0.0], &[0.0, 1.0]]),
            vecs(&[&[0.0, 1.0], &[1.0, 0.0]]),
            2.0,
        );
        let parts = structural_distance_parts(&x, &y, &p);
        assert_eq!((parts.d_s1, parts.d_s2), (1.0, 1.0));
        // 2 dB / 20 dB = 0.1 <= 0.25: no amplification
        assert_eq!(parts.k_fsr, 1.0);
        assert_eq!(parts.distance, 2f64.sqrt());

        let y_far = StructuralTemplate {
            fsr_db: 12.0,
            ..y.clone()
        };
        let parts = structural_distance_parts(&x, &y_far, &p);
        assert!((parts.k_fsr - 0.6 / 0.25).abs() < 1e-12);
        assert!((parts.distance - parts.k_fsr * 2f64.sqrt()).abs() < 1e-12);
        let clamped = structural_distance_parts(&x, &StructuralTemplate { fsr_db: 80.0, ..y }, &p);
        assert_eq!(clamped.d_fsr_norm, 1.0);
        assert_eq!(clamped.k_fsr, 4.0);
    }

    #[test]
    fn template_text_round_trip() {
        let t = StructuralTemplate {
            person_id: "p007".into(),
            s1_features: simplex(1.3),
            s2_features: simplex(0.7),
            fsr_db: -2.25,
        };
        assert_eq!(StructuralTemplate::parse_text(&t.to_text()).unwrap(), t);
        let bad = t.to_text().replace("n 4", "n 3");
        assert!(StructuralTemplate::parse_text(&bad).is_err());
    }

    #[test]
    fn params_validation() {
        let mut p = StructuralParams::default();
        p.validate().unwrap();
        p.th_fsr = 0.0;
        assert!(p.validate().is_err());
        p.th_fsr = 1.0;
        p.fsr_db_max = -1.0;
        assert!(p.validate().is_err());
        let cfg = StructuralConfig {
            window_s: 7.0,
            ..Default::default()
        };
        assert!(cfg.validate(11025).is_err());
    }

    #[test]
    fn enrolls_synthetic_identity() {
        let id = IdentityParams::reference();
        let rec = generate(&id, 12.0, 2.0, Some(30.0), 5).unwrap();
        let cfg = StructuralConfig::default();
        let e = enroll_structural_detailed(&rec.signal, &cfg, "a").unwrap();
        assert_eq!(e.template.num_cycles(), 4);
        assert!(
            (e.template.fsr_db - id.fsr_db_target).abs() < 0.5,
            "{}",
            e.template.fsr_db
        );
        let again = enroll_structural(&rec.signal, &cfg, "a").unwrap();
        assert_eq!(again, e.template);
        let (d, ok) = verify_structural(&rec.signal, &e.template, &cfg).unwrap();
        let self_d = structural_distance(&e.template, &e.template, &cfg.params);
        assert_eq!(d, self_d);
        assert_eq!(ok, self_d <= cfg.params.decision_threshold);
    }

    #[test]
    fn silence_has_no_subsequence() {
        let sig = PcgSignal::new(vec![0.0; 6 * 11025], 11025, "z").unwrap();
        assert!(matches!(
            enroll_structural(&sig, &StructuralConfig::default(), "z"),
            Err(Error::NoValidSubsequence)
        ));
    }

    #[test]
    fn four_second_input_has_one_candidate() {
        let rec = generate(&IdentityParams::reference(), 4.0, 0.0, None, 3).unwrap();
        let cfg = StructuralConfig {
            window_s: 4.0,
            ..Default::default()
        };
        let q = subsequence_qualities(&rec.signal, &cfg).unwrap();
        assert_eq!(q.len(), 1);
        let (off, _) = best_subsequence(&rec.signal, &cfg).unwrap();
        assert_eq!(off, 0);
    }

    fn arb_template() -> impl Strategy<Value = StructuralTemplate> {
        (
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, TEMPLATE_DIM), 4..7),
            -15.0f64..15.0,
        )
            .prop_flat_map(|(s1, fsr)| {
                let n = s1.len();
                (
                    Just(s1),
                    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, TEMPLATE_DIM), n),
                    Just(fsr),
                )
            })
            .prop_map(|(s1, s2, fsr)| template(s1, s2, fsr))
    }

    proptest! {
        #[test]
        fn distance_symmetric_and_nonnegative(x in arb_template(), y in arb_template()) {
            let p = StructuralParams::default();
            let a = structural_distance(&x, &y, &p);
            let b = structural_distance(&y, &x, &p);
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            let self_d = structural_distance_parts(&x, &x, &p);
            let n = (x.num_cycles() * x.num_cycles()) as f64;
            let intra = |v: &[Vec<f64>]| pairwise_sum(v) / n;
            prop_assert!((self_d.d_s1 - intra(&x.s1_features)).abs() < 1e-9);
            prop_assert!((self_d.d_s2 - intra(&x.s2_features)).abs() < 1e-9);
        }

        #[test]
        fn k_fsr_bounds(norm in 0.0f64..=1.0, th in 0.01f64..=1.0) {
            let k = k_fsr(norm, th);
            prop_assert!(k >= 1.0);
            prop_assert_eq!(k == 1.0, norm <= th);
        }

        #[test]
        fn fsr_gap_is_monotone(x in arb_template(), gap in 0.0f64..30.0, extra in 0.0f64..10.0) {
            let p = StructuralParams::default();
            let y1 = StructuralTemplate { fsr_db: x.fsr_db + gap, ..x.clone() };
            let y2 = StructuralTemplate { fsr_db: x.fsr_db + gap + extra, ..x.clone() };
            let mut z = x.clone();
            z.s1_features[0][0] += 1.0;
            prop_assert!(structural_distance(&z, &y2, &p) >= structural_distance(&z, &y1, &p));
        }

        #[test]
        fn quality_permutation_invariant(s1 in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 5), 4),
                                         s2 in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 5), 4),
                                         rot in 0usize..4) {
            let q = quality_index(&s1, &s2).unwrap();
            let mut a = s1.clone();
            let mut b = s2.clone();
            a.rotate_left(rot);
            b.swap(0, 3);
            let q2 = quality_index(&a, &b).unwrap();
            prop_assert!((q - q2).abs() <= 1e-12 * q.abs());
        }
    }
}

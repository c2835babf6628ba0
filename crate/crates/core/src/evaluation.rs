//! Verification experiments over a corpus manifest and the error rates
//! derived from their scores.
//!
//! Rates are computed in a "match score" domain where higher always means a
//! better match: distances are negated before sweeping. A trial is accepted
//! when its match score is at least the threshold.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::manifest::{Manifest, Role};
use crate::signal::{load_wav, PcgSignal};
use crate::statistical::{adapt_map, recording_features, score_llr, train_ubm, GmmModel, StatisticalConfig};
use crate::structural::{enroll_structural, structural_distance, StructuralConfig, StructuralTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    HigherIsMatch,
    LowerIsMatch,
}

impl Polarity {
    fn to_match(self, score: f64) -> f64 {
        match self {
            Polarity::HigherIsMatch => score,
            Polarity::LowerIsMatch => -score,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::HigherIsMatch => Polarity::LowerIsMatch,
            Polarity::LowerIsMatch => Polarity::HigherIsMatch,
        }
    }

    /// Whether `score` is accepted at `threshold` (the boundary accepts).
    pub fn accepts(self, score: f64, threshold: f64) -> bool {
        self.to_match(score) >= self.to_match(threshold)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenuineTrial {
    pub claimed_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpostorTrial {
    pub claimed_id: String,
    pub probe_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    pub genuine: Vec<GenuineTrial>,
    pub impostor: Vec<ImpostorTrial>,
    pub polarity: Polarity,
}

impl TrialSet {
    /// Builds an anonymous trial set from raw scores.
    pub fn from_scores(genuine: &[f64], impostor: &[f64], polarity: Polarity) -> Self {
        Self {
            genuine: genuine
                .iter()
                .map(|&score| GenuineTrial {
                    claimed_id: String::new(),
                    score,
                })
                .collect(),
            impostor: impostor
                .iter()
                .map(|&score| ImpostorTrial {
                    claimed_id: String::new(),
                    probe_id: String::new(),
                    score,
                })
                .collect(),
            polarity,
        }
    }

    fn check(&self) -> Result<()> {
        if self.genuine.is_empty() || self.impostor.is_empty() {
            return Err(Error::EmptyTrials(format!(
                "{} genuine and {} impostor trials",
                self.genuine.len(),
                self.impostor.len()
            )));
        }
        let all = self
            .genuine
            .iter()
            .map(|t| t.score)
            .chain(self.impostor.iter().map(|t| t.score));
        if all.clone().any(|s| !s.is_finite()) {
            return Err(Error::EmptyTrials("non-finite score".into()));
        }
        Ok(())
    }

    /// Sorted match scores of both sides.
    fn sorted_match(&self) -> (Vec<f64>, Vec<f64>) {
        let mut g: Vec<f64> = self.genuine.iter().map(|t| self.polarity.to_match(t.score)).collect();
        let mut i: Vec<f64> = self.impostor.iter().map(|t| self.polarity.to_match(t.score)).collect();
        g.sort_by(f64::total_cmp);
        i.sort_by(f64::total_cmp);
        (g, i)
    }
}

/// Rates at a match-domain threshold over pre-sorted match scores.
fn rates_sorted(g: &[f64], i: &[f64], t: f64) -> (f64, f64) {
    let imp_accepted = i.len() - i.partition_point(|&s| s < t);
    let gen_rejected = g.partition_point(|&s| s < t);
    (
        imp_accepted as f64 / i.len() as f64,
        gen_rejected as f64 / g.len() as f64,
    )
}

/// `(fmr, fnmr)` at `threshold`.
pub fn rates_at(trials: &TrialSet, threshold: f64) -> Result<(f64, f64)> {
    trials.check()?;
    let (g, i) = trials.sorted_match();
    Ok(rates_sorted(&g, &i, trials.polarity.to_match(threshold)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerPoint {
    /// `(fmr + fnmr) / 2` at the chosen threshold.
    pub eer: f64,
    pub threshold: f64,
    pub fmr: f64,
    pub fnmr: f64,
}

/// Equal error rate over every distinct score used as a threshold.
///
/// The threshold minimizing `|fmr - fnmr|` is chosen; among equally close
/// ones the lowest average error wins, then the lowest match-domain
/// threshold.
pub fn eer(trials: &TrialSet) -> Result<EerPoint> {
    trials.check()?;
    let (g, i) = trials.sorted_match();
    let mut cands: Vec<f64> = g.iter().chain(&i).copied().collect();
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let mut best: Option<(f64, f64, f64, f64, f64)> = None;
    for &t in &cands {
        let (fmr, fnmr) = rates_sorted(&g, &i, t);
        let gap = (fmr - fnmr).abs();
        let avg = (fmr + fnmr) / 2.0;
        let better = match best {
            None => true,
            Some((bg, ba, ..)) => gap < bg || (gap == bg && avg < ba),
        };
        if better {
            best = Some((gap, avg, t, fmr, fnmr));
        }
    }
    let (_, eer, t, fmr, fnmr) = best.expect("non-empty trial set has candidates");
    Ok(EerPoint {
        eer,
        threshold: trials.polarity.to_match(t),
        fmr,
        fnmr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub fmr: f64,
    pub fnmr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    pub points: Vec<DetPoint>,
}

impl DetCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fmr,fnmr\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.threshold, p.fmr, p.fnmr);
        }
        out
    }
}

/// Rates at every distinct score plus one threshold past the best match
/// score, so the curve runs from `(1, 0)` to `(0, 1)`. At most `num_points`
/// points are kept (endpoints always), ordered by increasing threshold.
pub fn det_curve(trials: &TrialSet, num_points: usize) -> Result<DetCurve> {
    trials.check()?;
    let (g, i) = trials.sorted_match();
    let mut cands: Vec<f64> = g.iter().chain(&i).copied().collect();
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let top = *cands.last().expect("non-empty");
    cands.push(top + top.abs().max(1.0));
    let keep = num_points.max(2);
    let chosen: Vec<f64> = if cands.len() <= keep {
        cands
    } else {
        let last = cands.len() - 1;
        let mut idx: Vec<usize> = (0..keep)
            .map(|k| ((k as f64 * last as f64 / (keep - 1) as f64).round() as usize).min(last))
            .collect();
        idx.dedup();
        idx.into_iter().map(|k| cands[k]).collect()
    };
    let mut points: Vec<DetPoint> = chosen
        .into_iter()
        .map(|t| {
            let (fmr, fnmr) = rates_sorted(&g, &i, t);
            DetPoint {
                threshold: trials.polarity.to_match(t),
                fmr,
                fnmr,
            }
        })
        .collect();
    points.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));
    Ok(DetCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Structural,
    Statistical,
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            System::Structural => "structural",
            System::Statistical => "statistical",
        })
    }
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structural" => Ok(System::Structural),
            "statistical" => Ok(System::Statistical),
            other => Err(Error::Parse(format!("unknown system {other:?}"))),
        }
    }
}

/// Which enrollment recordings train the background model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UbmPolicy {
    /// One model from every enrolled identity.
    AllEnrollment,
    /// One model per claimed identity, trained without that identity.
    LeaveClaimedOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub ubm_policy: UbmPolicy,
    pub det_points: usize,
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.det_points < 2 {
            return Err(Error::InvalidParams(format!(
                "det_points {} must be at least 2",
                self.det_points
            )));
        }
        Ok(())
    }
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            ubm_policy: UbmPolicy::AllEnrollment,
            det_points: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipRecord {
    pub person_id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub system: System,
    pub trials: TrialSet,
    pub skipped: Vec<SkipRecord>,
    pub identities: usize,
}

impl ExperimentResult {
    /// Plain-text summary: EER in percent, threshold, trial counts, skip log.
    pub fn report(&self) -> Result<String> {
        let point = eer(&self.trials)?;
        let mut out = String::new();
        let _ = writeln!(out, "system {}", self.system);
        let _ = writeln!(out, "identities {}", self.identities);
        let _ = writeln!(out, "genuine_trials {}", self.trials.genuine.len());
        let _ = writeln!(out, "impostor_trials {}", self.trials.impostor.len());
        let _ = writeln!(out, "EER {:.2} %", 100.0 * point.eer);
        let _ = writeln!(out, "threshold {}", point.threshold);
        let _ = writeln!(out, "fmr_at_threshold {:.4}", point.fmr);
        let _ = writeln!(out, "fnmr_at_threshold {:.4}", point.fnmr);
        let _ = writeln!(out, "skipped {}", self.skipped.len());
        for s in &self.skipped {
            let _ = writeln!(out, "skip {} {}", s.person_id, s.reason);
        }
        Ok(out)
    }
}

/// One identity's loaded recordings.
struct Person {
    id: String,
    enroll: Vec<PcgSignal>,
    verify: Vec<PcgSignal>,
}

fn load_people(manifest: &Manifest) -> (Vec<Person>, Vec<SkipRecord>) {
    let ids = manifest.identities();
    let loaded: Vec<std::result::Result<Person, SkipRecord>> = ids
        .par_iter()
        .map(|id| {
            let load = |role: Role| -> std::result::Result<Vec<PcgSignal>, SkipRecord> {
                manifest
                    .recordings(id, role)
                    .iter()
                    .map(|e| load_wav(manifest.resolve(e)))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| SkipRecord {
                        person_id: id.clone(),
                        reason: format!("{role} recording unreadable: {e}"),
                    })
            };
            Ok(Person {
                id: id.clone(),
                enroll: load(Role::Enroll)?,
                verify: load(Role::Verify)?,
            })
        })
        .collect();
    split_skips(loaded)
}

fn split_skips<T>(items: Vec<std::result::Result<T, SkipRecord>>) -> (Vec<T>, Vec<SkipRecord>) {
    let mut ok = Vec::new();
    let mut skipped = Vec::new();
    for it in items {
        match it {
            Ok(v) => ok.push(v),
            Err(s) => {
                log::warn!("skipping identity {}: {}", s.person_id, s.reason);
                skipped.push(s);
            }
        }
    }
    (ok, skipped)
}

/// Structural templates of one identity: enrollment first, then probes.
struct StructuralPerson {
    id: String,
    template: StructuralTemplate,
    probes: Vec<StructuralTemplate>,
}

fn structural_trials(people: Vec<Person>, cfg: &StructuralConfig) -> (Vec<StructuralPerson>, Vec<SkipRecord>) {
    let results = people
        .into_par_iter()
        .map(|p| {
            let fail = |what: &str, e: Error| SkipRecord {
                person_id: p.id.clone(),
                reason: format!("{what} failed: {e}"),
            };
            let template = enroll_structural(&p.enroll[0], cfg, &p.id).map_err(|e| fail("enrollment", e))?;
            let probes = p
                .verify
                .iter()
                .map(|s| enroll_structural(s, cfg, &p.id))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| fail("probe processing", e))?;
            Ok(StructuralPerson {
                id: p.id.clone(),
                template,
                probes,
            })
        })
        .collect();
    split_skips(results)
}

struct StatisticalPerson {
    id: String,
    enroll: FeatureMatrix,
    probes: Vec<FeatureMatrix>,
}

fn statistical_features(people: Vec<Person>, cfg: &StatisticalConfig) -> (Vec<StatisticalPerson>, Vec<SkipRecord>) {
    let results = people
        .into_par_iter()
        .map(|p| {
            let fail = |what: &str, e: Error| SkipRecord {
                person_id: p.id.clone(),
                reason: format!("{what} failed: {e}"),
            };
            let parts = p
                .enroll
                .iter()
                .map(|s| recording_features(s, cfg))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| fail("enrollment features", e))?;
            let enroll = FeatureMatrix::concat(&parts).map_err(|e| fail("enrollment features", e))?;
            let probes = p
                .verify
                .iter()
                .map(|s| recording_features(s, cfg))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| fail("probe features", e))?;
            Ok(StatisticalPerson {
                id: p.id.clone(),
                enroll,
                probes,
            })
        })
        .collect();
    split_skips(results)
}

/// Scores every probe of every identity against every claimed identity.
fn all_pairs<F>(ids: &[String], probes_of: impl Fn(usize) -> usize, score: F, polarity: Polarity) -> Result<TrialSet>
where
    F: Fn(usize, usize, usize) -> Result<f64> + Sync,
{
    let pairs: Vec<(usize, usize, usize)> = (0..ids.len())
        .flat_map(|claimed| {
            let probes_of = &probes_of;
            (0..ids.len()).flat_map(move |probe| (0..probes_of(probe)).map(move |k| (claimed, probe, k)))
        })
        .collect();
    let scores = pairs
        .par_iter()
        .map(|&(c, p, k)| score(c, p, k))
        .collect::<Result<Vec<f64>>>()?;
    let mut trials = TrialSet {
        genuine: Vec::new(),
        impostor: Vec::new(),
        polarity,
    };
    for (&(c, p, _), s) in pairs.iter().zip(scores) {
        if c == p {
            trials.genuine.push(GenuineTrial {
                claimed_id: ids[c].clone(),
                score: s,
            });
        } else {
            trials.impostor.push(ImpostorTrial {
                claimed_id: ids[c].clone(),
                probe_id: ids[p].clone(),
                score: s,
            });
        }
    }
    Ok(trials)
}

fn require_two(n: usize, skipped: &[SkipRecord]) -> Result<()> {
    if n < 2 {
        return Err(Error::EmptyTrials(format!(
            "{n} usable identities after {} skipped",
            skipped.len()
        )));
    }
    Ok(())
}

/// Runs the chosen system with its part of `cfg`; `ubm` applies only to the
/// statistical system.
pub fn run_experiment(
    manifest: &Manifest,
    system: System,
    cfg: &PipelineConfig,
    ubm: Option<&GmmModel>,
) -> Result<ExperimentResult> {
    match system {
        System::Structural => run_structural(manifest, &cfg.structural),
        System::Statistical => run_statistical(manifest, &cfg.statistical, &cfg.evaluation, ubm),
    }
}

/// Structural experiment: distances, lower is a match.
pub fn run_structural(manifest: &Manifest, cfg: &StructuralConfig) -> Result<ExperimentResult> {
    manifest.validate_for_experiment()?;
    let (people, mut skipped) = load_people(manifest);
    let (people, more) = structural_trials(people, cfg);
    skipped.extend(more);
    require_two(people.len(), &skipped)?;
    let ids: Vec<String> = people.iter().map(|p| p.id.clone()).collect();
    let trials = all_pairs(
        &ids,
        |p| people[p].probes.len(),
        |c, p, k| {
            Ok(structural_distance(
                &people[p].probes[k],
                &people[c].template,
                &cfg.params,
            ))
        },
        Polarity::LowerIsMatch,
    )?;
    Ok(ExperimentResult {
        system: System::Structural,
        trials,
        skipped,
        identities: ids.len(),
    })
}

/// Statistical experiment: per-frame LLR, higher is a match.
///
/// With `ubm` given, that background model is used as is; otherwise it is
/// trained according to `eval.ubm_policy`.
pub fn run_statistical(
    manifest: &Manifest,
    cfg: &StatisticalConfig,
    eval: &EvaluationConfig,
    ubm: Option<&GmmModel>,
) -> Result<ExperimentResult> {
    manifest.validate_for_experiment()?;
    let (people, mut skipped) = load_people(manifest);
    let (people, more) = statistical_features(people, cfg);
    skipped.extend(more);
    require_two(people.len(), &skipped)?;
    let ids: Vec<String> = people.iter().map(|p| p.id.clone()).collect();
    let enrollments: Vec<FeatureMatrix> = people.iter().map(|p| p.enroll.clone()).collect();

    // (background, identity model) per claimed identity
    let models: Vec<(GmmModel, GmmModel)> = match (ubm, eval.ubm_policy) {
        (Some(u), _) => enrollments
            .iter()
            .map(|e| Ok((u.clone(), adapt_map(u, e, &cfg.train)?)))
            .collect::<Result<_>>()?,
        (None, UbmPolicy::AllEnrollment) => {
            let u = train_ubm(&enrollments, &cfg.train)?;
            enrollments
                .iter()
                .map(|e| Ok((u.clone(), adapt_map(&u, e, &cfg.train)?)))
                .collect::<Result<_>>()?
        }
        (None, UbmPolicy::LeaveClaimedOut) => (0..enrollments.len())
            .map(|c| {
                let others: Vec<FeatureMatrix> = enrollments
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != c)
                    .map(|(_, e)| e.clone())
                    .collect();
                let u = train_ubm(&others, &cfg.train)?;
                let m = adapt_map(&u, &enrollments[c], &cfg.train)?;
                Ok((u, m))
            })
            .collect::<Result<_>>()?,
    };
    let trials = all_pairs(
        &ids,
        |p| people[p].probes.len(),
        |c, p, k| Ok(score_llr(&models[c].1, &models[c].0, &people[p].probes[k])?.llr),
        Polarity::HigherIsMatch,
    )?;
    Ok(ExperimentResult {
        system: System::Statistical,
        trials,
        skipped,
        identities: ids.len(),
    })
}

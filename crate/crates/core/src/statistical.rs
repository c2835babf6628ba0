//! Diagonal-covariance Gaussian mixtures: UBM training by EM, mean-only MAP
//! adaptation and log-likelihood-ratio scoring.
//!
//! The E-step runs over fixed-size frame chunks in parallel; the partial
//! sufficient statistics are collected in chunk order and summed
//! sequentially, so trained models do not depend on the thread count.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{tone_features, ByteCursor, FeatureMatrix, FrontEnd};
use crate::segmentation::{detect_tones, SegmentationConfig};
use crate::signal::PcgSignal;
use crate::util::{rng_for, write_atomic};

/// Frames per E-step work unit.
const CHUNK: usize = 1024;
/// Lower bound for variance floors of constant dimensions.
const MIN_VARIANCE: f64 = 1e-10;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelRole {
    Ubm,
    Identity,
}

impl fmt::Display for ModelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelRole::Ubm => "ubm",
            ModelRole::Identity => "identity",
        })
    }
}

impl FromStr for ModelRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ubm" => Ok(ModelRole::Ubm),
            "identity" => Ok(ModelRole::Identity),
            other => Err(Error::Parse(format!("unknown model role {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelMeta {
    pub role: ModelRole,
    /// Seed of the training run the model came from.
    pub seed: u64,
}

/// A Gaussian mixture with diagonal covariances, parameters stored flat
/// (`means[i * dim + d]`).
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    dim: usize,
    pub meta: ModelMeta,
    // ln w_i - (D ln 2pi + sum_d ln var_id) / 2
    log_consts: Vec<f64>,
    inv_vars: Vec<f64>,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>, dim: usize, meta: ModelMeta) -> Result<Self> {
        let n = weights.len();
        let bad = |m: String| Err(Error::InvalidModel(m));
        if n == 0 || dim == 0 {
            return bad(format!("need N >= 1 and D >= 1, got N = {n}, D = {dim}"));
        }
        if means.len() != n * dim || variances.len() != n * dim {
            return bad(format!(
                "{} means and {} variances for N = {n}, D = {dim}",
                means.len(),
                variances.len()
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("weights must be finite and non-negative".into());
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("weights sum to {total}"));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return bad("non-finite mean".into());
        }
        if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("variances must be finite and positive".into());
        }
        let log_consts = (0..n)
            .map(|i| {
                let log_det: f64 = variances[i * dim..(i + 1) * dim].iter().map(|v| v.ln()).sum();
                weights[i].ln() - 0.5 * (dim as f64 * LN_2PI + log_det)
            })
            .collect();
        let inv_vars = variances.iter().map(|v| 1.0 / v).collect();
        Ok(Self {
            weights,
            means,
            variances,
            dim,
            meta,
            log_consts,
            inv_vars,
        })
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean(&self, i: usize) -> &[f64] {
        &self.means[i * self.dim..(i + 1) * self.dim]
    }

    pub fn variance(&self, i: usize) -> &[f64] {
        &self.variances[i * self.dim..(i + 1) * self.dim]
    }

    /// `ln(w_i p_i(x))` for every component.
    fn component_logs(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (i, o) in out.iter_mut().enumerate() {
            let mu = &self.means[i * d..(i + 1) * d];
            let iv = &self.inv_vars[i * d..(i + 1) * d];
            let mut q = 0.0;
            for k in 0..d {
                let z = x[k] - mu[k];
                q += z * z * iv[k];
            }
            *o = self.log_consts[i] - 0.5 * q;
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got,
            });
        }
        Ok(())
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln sum_i w_i N(x; mu_i, diag(var_i))`.
pub fn gmm_logpdf(model: &GmmModel, x: &[f64]) -> Result<f64> {
    model.check_dim(x.len())?;
    let mut buf = vec![0.0; model.num_components()];
    model.component_logs(x, &mut buf);
    Ok(log_sum_exp(&buf))
}

/// Log density of every frame, computed chunk-parallel in frame order.
pub fn frame_logpdfs(model: &GmmModel, fm: &FeatureMatrix) -> Result<Vec<f64>> {
    model.check_dim(fm.dim())?;
    let d = fm.dim();
    Ok(fm
        .as_flat()
        .par_chunks(CHUNK * d)
        .flat_map_iter(|chunk| {
            let mut buf = vec![0.0; model.num_components()];
            chunk
                .chunks_exact(d)
                .map(|x| {
                    model.component_logs(x, &mut buf);
                    log_sum_exp(&buf)
                })
                .collect::<Vec<_>>()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub num_components: usize,
    pub max_em_iters: usize,
    /// EM stops once the relative log-likelihood gain drops below this.
    pub ll_tol: f64,
    /// Variance floor as a fraction of the pooled per-dimension variance.
    pub variance_floor: f64,
    pub map_relevance: f64,
    pub seed: u64,
    /// Fraction of the input recordings drawn at random for UBM training.
    pub ubm_subset_fraction: f64,
    pub kmeans_iters: usize,
    /// k-means runs on at most this many randomly chosen frames.
    pub kmeans_max_points: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_components: 256,
            max_em_iters: 50,
            ll_tol: 1e-4,
            variance_floor: 1e-3,
            map_relevance: 14.0,
            seed: 0,
            ubm_subset_fraction: 1.0,
            kmeans_iters: 10,
            kmeans_max_points: 20_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidTrainConfig(m.into()));
        if self.num_components == 0 {
            return bad("num_components must be at least 1");
        }
        if !(self.ll_tol > 0.0) {
            return bad("ll_tol must be positive");
        }
        if !(self.map_relevance > 0.0) {
            return bad("map_relevance must be positive");
        }
        if !(self.variance_floor > 0.0 && self.variance_floor < 1.0) {
            return bad("variance_floor must lie in (0, 1)");
        }
        if !(self.ubm_subset_fraction > 0.0 && self.ubm_subset_fraction <= 1.0) {
            return bad("ubm_subset_fraction must lie in (0, 1]");
        }
        if self.kmeans_max_points == 0 {
            return bad("kmeans_max_points must be positive");
        }
        Ok(())
    }
}

/// Per-chunk sufficient statistics.
struct Stats {
    n: Vec<f64>,
    sx: Vec<f64>,
    sxx: Vec<f64>,
    ll: f64,
}

impl Stats {
    fn zeros(n: usize, d: usize) -> Self {
        Self {
            n: vec![0.0; n],
            sx: vec![0.0; n * d],
            sxx: vec![0.0; n * d],
            ll: 0.0,
        }
    }

    fn add(&mut self, other: &Stats) {
        for (a, b) in self.n.iter_mut().zip(&other.n) {
            *a += b;
        }
        for (a, b) in self.sx.iter_mut().zip(&other.sx) {
            *a += b;
        }
        for (a, b) in self.sxx.iter_mut().zip(&other.sxx) {
            *a += b;
        }
        self.ll += other.ll;
    }
}

fn accumulate(model: &GmmModel, data: &[f64], second_order: bool) -> Stats {
    let (n, d) = (model.num_components(), model.dim());
    let parts: Vec<Stats> = data
        .par_chunks(CHUNK * d)
        .map(|chunk| {
            let mut st = Stats::zeros(n, d);
            let mut logs = vec![0.0; n];
            for x in chunk.chunks_exact(d) {
                model.component_logs(x, &mut logs);
                let lse = log_sum_exp(&logs);
                st.ll += lse;
                for (i, &l) in logs.iter().enumerate() {
                    let g = (l - lse).exp();
                    if g == 0.0 {
                        continue;
                    }
                    st.n[i] += g;
                    let sx = &mut st.sx[i * d..(i + 1) * d];
                    for k in 0..d {
                        sx[k] += g * x[k];
                    }
                    if second_order {
                        let sxx = &mut st.sxx[i * d..(i + 1) * d];
                        for k in 0..d {
                            sxx[k] += g * x[k] * x[k];
                        }
                    }
                }
            }
            st
        })
        .collect();
    let mut total = Stats::zeros(n, d);
    for p in &parts {
        total.add(p);
    }
    total
}

/// Training outcome with the log-likelihood of each visited model.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: GmmModel,
    /// Total training log-likelihood per EM iteration; the last entry
    /// belongs to the returned model.
    pub ll_history: Vec<f64>,
    pub converged: bool,
    pub frames: usize,
}

fn pooled(features: &[&FeatureMatrix]) -> Result<(Vec<f64>, usize)> {
    let first = features.first().ok_or(Error::EmptyFeatures)?;
    let d = first.dim();
    let mut data = Vec::with_capacity(features.iter().map(|f| f.as_flat().len()).sum());
    for f in features {
        if f.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: f.dim(),
            });
        }
        data.extend_from_slice(f.as_flat());
    }
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteFeature {
            frame: i / d,
            dim: i % d,
        });
    }
    Ok((data, d))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding then Lloyd iterations; returns the initial mixture.
fn kmeans_init<R: Rng>(
    points: &[f64],
    d: usize,
    k: usize,
    iters: usize,
    floors: &[f64],
    global_var: &[f64],
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let m = points.len() / d;
    let pt = |i: usize| &points[i * d..(i + 1) * d];
    let mut centres = Vec::with_capacity(k * d);
    centres.extend_from_slice(pt(rng.random_range(0..m)));
    let mut best: Vec<f64> = (0..m).map(|i| sq_dist(pt(i), &centres[..d])).collect();
    for _ in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = m - 1;
            for (i, &b) in best.iter().enumerate() {
                if r < b {
                    chosen = i;
                    break;
                }
                r -= b;
            }
            chosen
        } else {
            rng.random_range(0..m)
        };
        let c = pt(pick).to_vec();
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(pt(i), &c));
        }
        centres.extend_from_slice(&c);
    }

    let mut assign = vec![0usize; m];
    for it in 0..=iters {
        let mut changed = false;
        for (i, a) in assign.iter_mut().enumerate() {
            let x = pt(i);
            let nearest = (0..k)
                .map(|j| (sq_dist(x, &centres[j * d..(j + 1) * d]), j))
                .min_by(|p, q| p.0.total_cmp(&q.0))
                .map(|(_, j)| j)
                .expect("k >= 1");
            changed |= nearest != *a;
            *a = nearest;
        }
        if it == iters || (it > 0 && !changed) {
            break;
        }
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, x) in sums[a * d..(a + 1) * d].iter_mut().zip(pt(i)) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for t in 0..d {
                    centres[j * d + t] = sums[j * d + t] / counts[j] as f64;
                }
            }
        }
    }

    let mut counts = vec![0usize; k];
    let mut scatter = vec![0.0; k * d];
    for (i, &a) in assign.iter().enumerate() {
        counts[a] += 1;
        for t in 0..d {
            let z = pt(i)[t] - centres[a * d + t];
            scatter[a * d + t] += z * z;
        }
    }
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64 + 1.0) / (m + k) as f64).collect();
    let mut variances = vec![0.0; k * d];
    for j in 0..k {
        for t in 0..d {
            let v = if counts[j] >= 2 {
                scatter[j * d + t] / counts[j] as f64
            } else {
                global_var[t]
            };
            variances[j * d + t] = v.max(floors[t]);
        }
    }
    (weights, centres, variances)
}

/// Fits a UBM to the pooled frames of (a random subset of) `features`.
pub fn train_ubm_report(features: &[FeatureMatrix], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(Error::EmptyFeatures);
    }
    let mut rng = rng_for(cfg.seed, 0x55b);
    let chosen: Vec<&FeatureMatrix> = if cfg.ubm_subset_fraction < 1.0 {
        let count = ((features.len() as f64 * cfg.ubm_subset_fraction).ceil() as usize).clamp(1, features.len());
        let mut idx = sample(&mut rng, features.len(), count).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| &features[i]).collect()
    } else {
        features.iter().collect()
    };
    let (data, d) = pooled(&chosen)?;
    let frames = data.len() / d;
    let k = cfg.num_components;
    let needed = 10 * k * d;
    if frames < needed {
        return Err(Error::InsufficientData { frames, needed });
    }

    let mut mean = vec![0.0; d];
    for x in data.chunks_exact(d) {
        for t in 0..d {
            mean[t] += x[t];
        }
    }
    mean.iter_mut().for_each(|m| *m /= frames as f64);
    let mut global_var = vec![0.0; d];
    for x in data.chunks_exact(d) {
        for t in 0..d {
            global_var[t] += (x[t] - mean[t]).powi(2);
        }
    }
    global_var.iter_mut().for_each(|v| *v /= frames as f64);
    let floors: Vec<f64> = global_var
        .iter()
        .map(|v| (v * cfg.variance_floor).max(MIN_VARIANCE))
        .collect();
    let global_var: Vec<f64> = global_var.iter().zip(&floors).map(|(v, f)| v.max(*f)).collect();

    let subset: Vec<f64> = if frames > cfg.kmeans_max_points {
        let mut idx = sample(&mut rng, frames, cfg.kmeans_max_points).into_vec();
        idx.sort_unstable();
        idx.iter()
            .flat_map(|&i| data[i * d..(i + 1) * d].iter().copied())
            .collect()
    } else {
        data.clone()
    };
    let (w, mu, var) = kmeans_init(&subset, d, k, cfg.kmeans_iters, &floors, &global_var, &mut rng);
    let meta = ModelMeta {
        role: ModelRole::Ubm,
        seed: cfg.seed,
    };
    let mut model = GmmModel::new(w, mu, var, d, meta)?;
    let mut ll_history = Vec::new();
    let mut converged = false;
    for it in 0..=cfg.max_em_iters {
        let st = accumulate(&model, &data, true);
        if let Some(&prev) = ll_history.last() {
            let gain = (st.ll - prev) / f64::abs(prev);
            ll_history.push(st.ll);
            if gain < cfg.ll_tol {
                converged = true;
                break;
            }
        } else {
            ll_history.push(st.ll);
        }
        if it == cfg.max_em_iters {
            break;
        }
        model = m_step(&model, &st, frames, &floors)?;
    }
    log::debug!(
        "UBM: {k} components, {frames} frames, {} EM passes, final ll/frame {:.4}",
        ll_history.len(),
        ll_history.last().copied().unwrap_or(f64::NAN) / frames as f64
    );
    Ok(TrainReport {
        model,
        ll_history,
        converged,
        frames,
    })
}

fn m_step(model: &GmmModel, st: &Stats, frames: usize, floors: &[f64]) -> Result<GmmModel> {
    let (k, d) = (model.num_components(), model.dim());
    let total: f64 = st.n.iter().sum();
    let mut weights: Vec<f64> = st.n.iter().map(|n| n / total).collect();
    let norm: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= norm);
    let mut means = model.means.clone();
    let mut vars = model.variances.clone();
    for i in 0..k {
        // a component that lost all its mass keeps its parameters
        if st.n[i] < 1e-10 * frames as f64 {
            continue;
        }
        for t in 0..d {
            let m = st.sx[i * d + t] / st.n[i];
            means[i * d + t] = m;
            vars[i * d + t] = (st.sxx[i * d + t] / st.n[i] - m * m).max(floors[t]);
        }
    }
    GmmModel::new(weights, means, vars, d, model.meta)
}

pub fn train_ubm(features: &[FeatureMatrix], cfg: &TrainConfig) -> Result<GmmModel> {
    train_ubm_report(features, cfg).map(|r| r.model)
}

/// Mean-only MAP adaptation of `ubm` towards `features`.
pub fn adapt_map(ubm: &GmmModel, features: &FeatureMatrix, cfg: &TrainConfig) -> Result<GmmModel> {
    if !(cfg.map_relevance > 0.0) {
        return Err(Error::InvalidTrainConfig("map_relevance must be positive".into()));
    }
    ubm.check_dim(features.dim())?;
    if features.is_empty() {
        return Err(Error::EmptyFeatures);
    }
    let st = accumulate(ubm, features.as_flat(), false);
    let d = ubm.dim();
    let mut means = ubm.means.clone();
    for i in 0..ubm.num_components() {
        let n = st.n[i];
        if n == 0.0 {
            continue;
        }
        let alpha = n / (n + cfg.map_relevance);
        for t in 0..d {
            let ex = st.sx[i * d + t] / n;
            means[i * d + t] = alpha * ex + (1.0 - alpha) * ubm.means[i * d + t];
        }
    }
    GmmModel::new(
        ubm.weights.clone(),
        means,
        ubm.variances.clone(),
        d,
        ModelMeta {
            role: ModelRole::Identity,
            seed: ubm.meta.seed,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerificationScore {
    /// Per-frame log-likelihood ratio, the canonical score.
    pub llr: f64,
    pub total_llr: f64,
    pub per_frame_ll_target: f64,
    pub per_frame_ll_ubm: f64,
    pub frames: usize,
}

pub fn score_llr(target: &GmmModel, ubm: &GmmModel, features: &FeatureMatrix) -> Result<VerificationScore> {
    if features.is_empty() {
        return Err(Error::EmptyFeatures);
    }
    target.check_dim(features.dim())?;
    ubm.check_dim(features.dim())?;
    let lt = frame_logpdfs(target, features)?;
    let lu = frame_logpdfs(ubm, features)?;
    let total_llr: f64 = lt.iter().zip(&lu).map(|(a, b)| a - b).sum();
    let t = lt.len() as f64;
    Ok(VerificationScore {
        llr: total_llr / t,
        total_llr,
        per_frame_ll_target: lt.iter().sum::<f64>() / t,
        per_frame_ll_ubm: lu.iter().sum::<f64>() / t,
        frames: lt.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionPolicy {
    pub theta: f64,
}

impl Default for DecisionPolicy {
    fn default() -> Self {
        Self { theta: 0.0 }
    }
}

/// Accepts when the per-frame LLR reaches the threshold.
pub fn verify_statistical(score: &VerificationScore, policy: &DecisionPolicy) -> bool {
    score.llr >= policy.theta
}

/// Front end, training and decision settings of the statistical system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatisticalConfig {
    pub front_end: FrontEnd,
    pub segmentation: SegmentationConfig,
    /// Window for the per-frame FSR column; `None` leaves it out.
    pub fsr_window_s: Option<f64>,
    pub train: TrainConfig,
    pub policy: DecisionPolicy,
}

impl Default for StatisticalConfig {
    fn default() -> Self {
        Self {
            front_end: FrontEnd::statistical(),
            segmentation: SegmentationConfig::default(),
            fsr_window_s: Some(5.0),
            train: TrainConfig::default(),
            policy: DecisionPolicy::default(),
        }
    }
}

impl StatisticalConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if let Some(w) = self.fsr_window_s {
            if !(w > 0.0) {
                return Err(Error::InvalidTrainConfig(format!("FSR window {w} s must be positive")));
            }
        }
        self.front_end.validate(sample_rate)?;
        self.segmentation.validate()?;
        self.train.validate()
    }

    pub fn feature_dim(&self) -> usize {
        self.front_end.cepstrum.dim() + usize::from(self.fsr_window_s.is_some())
    }
}

/// Segments a recording and returns the cepstral (+FSR) frames inside its tones.
pub fn recording_features(sig: &PcgSignal, cfg: &StatisticalConfig) -> Result<FeatureMatrix> {
    if let Some(w) = cfg.fsr_window_s {
        if !(w > 0.0) {
            return Err(Error::InvalidTrainConfig(format!("FSR window {w} s must be positive")));
        }
    }
    let tones = detect_tones(sig, &cfg.segmentation)?;
    tone_features(sig, &tones, &cfg.front_end, cfg.fsr_window_s)
}

const MODEL_MAGIC: &[u8; 4] = b"HIDG";
const MODEL_VERSION: u32 = 1;
const MODEL_TEXT_HEADER: &str = "# heartid gmm v1";

impl GmmModel {
    /// `HIDG`, then little-endian u32 version, u32 role (0 UBM, 1 identity),
    /// u32 N, u32 D, u64 seed, then N weights, N*D means and N*D variances as
    /// f64, component-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + 8 * (self.weights.len() + 2 * self.means.len()));
        out.extend_from_slice(MODEL_MAGIC);
        let role = match self.meta.role {
            ModelRole::Ubm => 0u32,
            ModelRole::Identity => 1,
        };
        for v in [MODEL_VERSION, role, self.num_components() as u32, self.dim as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.meta.seed.to_le_bytes());
        for v in self.weights.iter().chain(&self.means).chain(&self.variances) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<GmmModel> {
        let mut cur = ByteCursor { bytes, pos: 0 };
        if cur.take(4)? != MODEL_MAGIC {
            return Err(Error::Parse("bad model file magic".into()));
        }
        let version = cur.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::Parse(format!("unsupported model version {version}")));
        }
        let role = match cur.u32()? {
            0 => ModelRole::Ubm,
            1 => ModelRole::Identity,
            r => return Err(Error::Parse(format!("unknown model role code {r}"))),
        };
        let n = cur.u32()? as usize;
        let d = cur.u32()? as usize;
        let seed = cur.u64()?;
        let mut read = |count: usize| (0..count).map(|_| cur.f64()).collect::<Result<Vec<f64>>>();
        let weights = read(n)?;
        let means = read(n * d)?;
        let variances = read(n * d)?;
        if cur.remaining() != 0 {
            return Err(Error::Parse("trailing bytes after model".into()));
        }
        GmmModel::new(weights, means, variances, d, ModelMeta { role, seed })
    }

    /// Header lines, then `w`, `mean` and `var` lines, one per component.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut out = format!(
            "{MODEL_TEXT_HEADER}\nrole {}\nn {}\nd {}\nseed {}\n",
            self.meta.role,
            self.num_components(),
            self.dim,
            self.meta.seed
        );
        out.push_str(&format!("w {}\n", join(&self.weights)));
        for i in 0..self.num_components() {
            out.push_str(&format!("mean {}\n", join(self.mean(i))));
        }
        for i in 0..self.num_components() {
            out.push_str(&format!("var {}\n", join(self.variance(i))));
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<GmmModel> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some(MODEL_TEXT_HEADER) {
            return Err(Error::Parse("missing model header".into()));
        }
        let mut field = |name: &str| -> Result<String> {
            lines
                .next()
                .and_then(|l| l.strip_prefix(name))
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| Error::Parse(format!("expected `{name}` line")))
        };
        let num =
            |s: String, what: &str| -> Result<usize> { s.parse().map_err(|e| Error::Parse(format!("{what}: {e}"))) };
        let floats = |s: &str| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                .collect()
        };
        let role: ModelRole = field("role")?.parse()?;
        let n = num(field("n")?, "n")?;
        let d = num(field("d")?, "d")?;
        let seed: u64 = field("seed")?.parse().map_err(|e| Error::Parse(format!("seed: {e}")))?;
        let weights = floats(&field("w")?)?;
        let mut means = Vec::with_capacity(n * d);
        for _ in 0..n {
            means.extend(floats(&field("mean")?)?);
        }
        let mut variances = Vec::with_capacity(n * d);
        for _ in 0..n {
            variances.extend(floats(&field("var")?)?);
        }
        if weights.len() != n {
            return Err(Error::Parse(format!("{} weights for N = {n}", weights.len())));
        }
        GmmModel::new(weights, means, variances, d, ModelMeta { role, seed })
    }

    /// Text when the extension is `.txt`, binary otherwise.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e == "txt") {
            write_atomic(path, self.to_text().as_bytes())
        } else {
            write_atomic(path, &self.to_bytes())
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<GmmModel> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(MODEL_MAGIC) {
            GmmModel::from_bytes(&bytes)
        } else {
            let text = String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))?;
            GmmModel::parse_text(&text)
        }
    }
}

/// Density of a diagonal Gaussian mixture evaluated directly in the linear
/// domain.
#[doc(hidden)]
pub fn linear_density(model: &GmmModel, x: &[f64]) -> f64 {
    (0..model.num_components())
        .map(|i| {
            let mut p = model.weights[i];
            for ((&xt, &m), &v) in x.iter().zip(model.mean(i)).zip(model.variance(i)) {
                let z = xt - m;
                p *= (-0.5 * z * z / v).exp() / (2.0 * PI * v).sqrt();
            }
            p
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn meta() -> ModelMeta {
        ModelMeta {
            role: ModelRole::Ubm,
            seed: 0,
        }
    }

    fn labels(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("x{i}")).collect()
    }

    fn mixture_data(seed: u64, n: usize) -> FeatureMatrix {
        let mut rng = rng_for(seed, 1);
        let a = Normal::new(-5.0, 1.0).unwrap();
        let b = Normal::new(5.0, 1.0).unwrap();
        let data = (0..n)
            .map(|_| {
                if rng.random::<bool>() {
                    a.sample(&mut rng)
                } else {
                    b.sample(&mut rng)
                }
            })
            .collect();
        FeatureMatrix::new(data, labels(1)).unwrap()
    }

    #[test]
    fn standard_normal_mode() {
        let m = GmmModel::new(vec![1.0], vec![0.0], vec![1.0], 1, meta()).unwrap();
        let v = gmm_logpdf(&m, &[0.0]).unwrap();
        assert!((v + 0.918_938_533_204_672_8).abs() < 1e-14);
        assert!(matches!(
            gmm_logpdf(&m, &[0.0, 1.0]),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
        let twin = GmmModel::new(vec![0.5, 0.5], vec![0.3, 0.3], vec![2.0, 2.0], 1, meta()).unwrap();
        let single = GmmModel::new(vec![1.0], vec![0.3], vec![2.0], 1, meta()).unwrap();
        for x in [-3.0, 0.0, 1.7] {
            let a = gmm_logpdf(&twin, &[x]).unwrap();
            let b = gmm_logpdf(&single, &[x]).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn logpdf_matches_linear_sum() {
        let m = GmmModel::new(
            vec![0.3, 0.7],
            vec![0.0, 1.0, -2.0, 0.5],
            vec![1.0, 0.5, 2.0, 0.8],
            2,
            meta(),
        )
        .unwrap();
        let mut rng = rng_for(9, 0);
        for _ in 0..10 {
            let x = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
            let want = linear_density(&m, &x).ln();
            let got = gmm_logpdf(&m, &x).unwrap();
            assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_invalid_models() {
        assert!(GmmModel::new(vec![0.5, 0.4], vec![0.0, 0.0], vec![1.0, 1.0], 1, meta()).is_err());
        assert!(GmmModel::new(vec![1.0], vec![0.0], vec![0.0], 1, meta()).is_err());
        assert!(GmmModel::new(vec![1.0], vec![0.0, 1.0], vec![1.0], 1, meta()).is_err());
    }

    #[test]
    fn recovers_two_component_mixture() {
        let data = mixture_data(3, 4000);
        let cfg = TrainConfig {
            num_components: 2,
            seed: 11,
            ..Default::default()
        };
        let m = train_ubm(&[data], &cfg).unwrap();
        let mut comps: Vec<(f64, f64)> = (0..2).map(|i| (m.mean(i)[0], m.weights()[i])).collect();
        comps.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(
            (comps[0].0 + 5.0).abs() < 0.2 && (comps[1].0 - 5.0).abs() < 0.2,
            "{comps:?}"
        );
        assert!(
            (comps[0].1 - 0.5).abs() < 0.05 && (comps[1].1 - 0.5).abs() < 0.05,
            "{comps:?}"
        );
    }

    #[test]
    fn single_component_is_sample_moments() {
        let data: Vec<f64> = (0..40)
            .map(|i| ((i * 7919) % 23) as f64 * 0.5 - (i % 2) as f64)
            .collect();
        let fm = FeatureMatrix::new(data, labels(2)).unwrap();
        let cfg = TrainConfig {
            num_components: 1,
            ..Default::default()
        };
        let m = train_ubm(std::slice::from_ref(&fm), &cfg).unwrap();
        for t in 0..2 {
            let col: Vec<f64> = fm.rows().map(|r| r[t]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!((m.mean(0)[t] - mean).abs() < 1e-12);
            assert!((m.variance(0)[t] - var).abs() < 1e-12);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = mixture_data(5, 3000);
        let cfg = TrainConfig {
            num_components: 4,
            seed: 2,
            ..Default::default()
        };
        let a = train_ubm(std::slice::from_ref(&data), &cfg).unwrap();
        let b = train_ubm(&[data], &cfg).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn insufficient_data_is_reported() {
        let data = mixture_data(5, 50);
        let cfg = TrainConfig {
            num_components: 8,
            ..Default::default()
        };
        assert!(matches!(
            train_ubm(&[data], &cfg),
            Err(Error::InsufficientData { frames: 50, needed: 80 })
        ));
    }

    #[test]
    fn map_closed_form() {
        let ubm = GmmModel::new(vec![1.0], vec![0.0], vec![1.0], 1, meta()).unwrap();
        let data = FeatureMatrix::new(vec![2.0, 4.0, 3.0, 3.0], labels(1)).unwrap();
        let cfg = TrainConfig::default();
        let m = adapt_map(&ubm, &data, &cfg).unwrap();
        let want = 4.0 * 3.0 / (4.0 + 14.0);
        assert!((m.mean(0)[0] - want).abs() < 1e-12);
        assert_eq!(m.variances(), ubm.variances());
        assert_eq!(m.meta.role, ModelRole::Identity);
    }

    #[test]
    fn map_leaves_unvisited_components() {
        let ubm = GmmModel::new(vec![0.5, 0.5], vec![-100.0, 0.0], vec![1.0, 1.0], 1, meta()).unwrap();
        let data = FeatureMatrix::new(vec![0.0; 5000], labels(1)).unwrap();
        let m = adapt_map(&ubm, &data, &TrainConfig::default()).unwrap();
        assert_eq!(m.mean(0)[0], -100.0);
        assert_eq!(m.mean(1)[0], 0.0);
        assert_eq!(m.weights(), ubm.weights());
    }

    #[test]
    fn llr_examples() {
        let ubm = GmmModel::new(vec![0.5, 0.5], vec![-1.0, 1.0], vec![1.0, 1.0], 1, meta()).unwrap();
        let fm = mixture_data(8, 200);
        assert_eq!(score_llr(&ubm, &ubm, &fm).unwrap().llr, 0.0);
        let target = GmmModel::new(vec![1.0], vec![6.0], vec![1.0], 1, meta()).unwrap();
        let near = FeatureMatrix::new(vec![5.5, 6.0, 6.5, 7.0], labels(1)).unwrap();
        assert!(score_llr(&target, &ubm, &near).unwrap().llr > 0.0);
        let twice = FeatureMatrix::concat(&[fm.clone(), fm.clone()]).unwrap();
        let a = score_llr(&target, &ubm, &fm).unwrap();
        let b = score_llr(&target, &ubm, &twice).unwrap();
        assert!((b.total_llr - 2.0 * a.total_llr).abs() <= 1e-9 * a.total_llr.abs());
        assert!((b.llr - a.llr).abs() <= 1e-9 * a.llr.abs());
        let empty = FeatureMatrix::new(vec![], labels(1)).unwrap();
        assert!(matches!(score_llr(&target, &ubm, &empty), Err(Error::EmptyFeatures)));
    }

    #[test]
    fn decision_boundary() {
        let s = VerificationScore {
            llr: 0.25,
            total_llr: 2.5,
            per_frame_ll_target: -1.0,
            per_frame_ll_ubm: -1.25,
            frames: 10,
        };
        assert!(verify_statistical(&s, &DecisionPolicy { theta: 0.25 }));
        assert!(!verify_statistical(&s, &DecisionPolicy { theta: 0.25 + 1e-12 }));
        assert!(verify_statistical(
            &s,
            &DecisionPolicy {
                theta: f64::NEG_INFINITY
            }
        ));
    }

    #[test]
    fn model_files_round_trip() {
        let data = mixture_data(5, 3000);
        let cfg = TrainConfig {
            num_components: 3,
            seed: 77,
            ..Default::default()
        };
        let m = train_ubm(&[data], &cfg).unwrap();
        assert_eq!(GmmModel::from_bytes(&m.to_bytes()).unwrap(), m);
        assert_eq!(GmmModel::parse_text(&m.to_text()).unwrap(), m);
        let bytes = m.to_bytes();
        assert_eq!(u64::from_le_bytes(bytes[20..28].try_into().unwrap()), 77);
        assert!(GmmModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn em_is_monotone_and_keeps_invariants(seed in 0u64..1000, k in 1usize..6) {
            let mut rng = rng_for(seed, 3);
            let d = 3;
            let centres: Vec<f64> = (0..4 * d).map(|_| rng.random_range(-4.0..4.0)).collect();
            let data: Vec<f64> = (0..1500)
                .flat_map(|_| {
                    let c = rng.random_range(0..4);
                    (0..d).map(|t| centres[c * d + t] + rng.random_range(-1.0..1.0)).collect::<Vec<_>>()
                })
                .collect();
            let fm = FeatureMatrix::new(data, labels(d)).unwrap();
            let cfg = TrainConfig { num_components: k, seed, ll_tol: 1e-9, ..Default::default() };
            let r = train_ubm_report(std::slice::from_ref(&fm), &cfg).unwrap();
            for w in r.ll_history.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-8 * w[0].abs(), "{:?}", r.ll_history);
            }
            prop_assert!((r.model.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(r.model.variances().iter().all(|&v| v > 0.0));
            let adapted = adapt_map(&r.model, &fm, &cfg).unwrap();
            prop_assert!((adapted.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert_eq!(score_llr(&r.model, &r.model, &fm).unwrap().llr, 0.0);
        }

        #[test]
        fn map_mean_between_prior_and_data(shift in -5.0f64..5.0, n in 1usize..200) {
            let ubm = GmmModel::new(vec![1.0], vec![0.0, 1.0], vec![1.0, 1.0], 2, meta()).unwrap();
            let data: Vec<f64> = (0..n).flat_map(|i| [shift + (i % 3) as f64 * 0.1, -shift]).collect();
            let fm = FeatureMatrix::new(data.clone(), labels(2)).unwrap();
            let m = adapt_map(&ubm, &fm, &TrainConfig::default()).unwrap();
            for t in 0..2 {
                let ex = data.iter().skip(t).step_by(2).sum::<f64>() / n as f64;
                let prior = ubm.mean(0)[t];
                let (lo, hi) = if ex < prior { (ex, prior) } else { (prior, ex) };
                prop_assert!(m.mean(0)[t] >= lo - 1e-12 && m.mean(0)[t] <= hi + 1e-12);
            }
        }
    }
}

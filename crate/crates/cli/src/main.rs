//! `heartid`: heart-sound biometric verification from the command line.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use heartid::config::PipelineConfig;
use heartid::evaluation::{det_curve, eer, run_experiment, System};
use heartid::features::{tone_features, FeatureMatrix};
use heartid::manifest::{Manifest, Role};
use heartid::segmentation::{detect_tones, score_detection, ToneEndpoints};
use heartid::signal::{load_wav, lowpass_filter, PcgSignal};
use heartid::statistical::{adapt_map, recording_features, score_llr, train_ubm_report, verify_statistical, GmmModel};
use heartid::structural::{enroll_structural_detailed, verify_structural, StructuralTemplate};
use heartid::synth::{make_corpus, CorpusSpec};
use heartid::util::write_atomic;

use crate::config::{load_config, Overrides};

#[derive(Parser, Debug)]
#[command(name = "heartid", version, about = "Heart-sound biometric verification")]
struct Cli {
    /// TOML file overlaid on the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one parameter, e.g. `--set statistical.train.num_components=64`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus with ground-truth endpoints and a manifest.
    Synth(SynthArgs),
    /// Detect S1/S2 endpoints in a recording.
    Segment(SegmentArgs),
    /// Extract per-frame features from the tones of a recording.
    Features(FeaturesArgs),
    /// Train a background model on a manifest's enrollment recordings.
    TrainUbm(TrainUbmArgs),
    /// Build a template or identity model from an enrollment recording.
    Enroll(EnrollArgs),
    /// Score a probe recording against an enrolled template or model.
    Verify(VerifyArgs),
    /// Run a verification experiment over a manifest.
    Evaluate(EvaluateArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SystemArg {
    Structural,
    Statistical,
}

impl From<SystemArg> for System {
    fn from(s: SystemArg) -> Self {
        match s {
            SystemArg::Structural => System::Structural,
            SystemArg::Statistical => System::Statistical,
        }
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// `default`, `separable` or `identical`; applied before the config overlay.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    identities: Option<usize>,
    #[arg(long)]
    recordings: Option<usize>,
    /// Minimum spacing of identities' primary resonances (Hz).
    #[arg(long)]
    spread: Option<f64>,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    clicks_per_10s: Option<f64>,
    #[arg(long, value_parser = seed_parser())]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SegmentArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Reference endpoint file to score the detection against.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Matching tolerance for `--truth` in milliseconds.
    #[arg(long, default_value_t = 20.0)]
    tolerance_ms: f64,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = SystemArg::Statistical)]
    system: SystemArg,
    /// Write the text format instead of binary.
    #[arg(long)]
    text: bool,
}

#[derive(Args, Debug)]
struct TrainUbmArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    components: Option<usize>,
    #[arg(long, value_parser = seed_parser())]
    seed: Option<u64>,
    #[arg(long)]
    text: bool,
}

#[derive(Args, Debug)]
struct EnrollArgs {
    #[arg(long, value_enum)]
    system: SystemArg,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    person: String,
    #[arg(long)]
    out: PathBuf,
    /// Background model (statistical system).
    #[arg(long)]
    ubm: Option<PathBuf>,
    #[arg(long)]
    text: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    system: SystemArg,
    #[arg(long)]
    input: PathBuf,
    /// Structural template or identity model.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    ubm: Option<PathBuf>,
    /// Decision threshold (distance for structural, per-frame LLR for statistical).
    #[arg(long, allow_hyphen_values = true)]
    threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    system: SystemArg,
    #[arg(long)]
    out: PathBuf,
    /// Pre-trained background model; trained from the manifest otherwise.
    #[arg(long)]
    ubm: Option<PathBuf>,
    #[arg(long)]
    components: Option<usize>,
    #[arg(long, value_parser = seed_parser())]
    seed: Option<u64>,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }
}

fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow::anyhow!(msg.into()))
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }

    let result = std::panic::catch_unwind(|| run(&cli))
        .unwrap_or_else(|_| Err(Failure::Internal(anyhow::anyhow!("internal invariant violated"))));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(e) | Failure::Data(e) | Failure::Internal(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    let mut ov = Overrides::default();
    let base = match &cli.command {
        Command::Synth(a) => match &a.preset {
            Some(p) => PipelineConfig {
                synth: CorpusSpec::preset(p).map_err(|e| usage(e.to_string()))?,
                ..PipelineConfig::default()
            },
            None => PipelineConfig::default(),
        },
        _ => PipelineConfig::default(),
    };
    match &cli.command {
        Command::Synth(a) => {
            ov.set("synth.num_identities", a.identities.map(|v| v as i64));
            ov.set("synth.recordings_each", a.recordings.map(|v| v as i64));
            ov.set("synth.spread_hz", a.spread);
            ov.set("synth.snr_db", a.snr_db);
            ov.set("synth.clicks_per_10s", a.clicks_per_10s);
        }
        Command::TrainUbm(a) => ov.set("statistical.train.num_components", a.components.map(|v| v as i64)),
        Command::Evaluate(a) => ov.set("statistical.train.num_components", a.components.map(|v| v as i64)),
        _ => {}
    }
    let mut cfg = load_config(base, cli.config.as_deref(), &cli.sets, &ov).map_err(Failure::Usage)?;
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    match &cli.command {
        Command::Synth(a) => {
            cfg.synth.seed = seed_or_generate(a.seed);
            synth(&cfg, a)
        }
        Command::Segment(a) => segment(&cfg, a),
        Command::Features(a) => features(&cfg, a),
        Command::TrainUbm(a) => {
            cfg.statistical.train.seed = seed_or_generate(a.seed);
            train(&cfg, a)
        }
        Command::Enroll(a) => enroll(&cfg, a),
        Command::Verify(a) => verify(&cfg, a),
        Command::Evaluate(a) => {
            if matches!(a.system, SystemArg::Statistical) && a.ubm.is_none() {
                cfg.statistical.train.seed = seed_or_generate(a.seed);
            } else if let Some(s) = a.seed {
                cfg.statistical.train.seed = s;
            }
            evaluate(&cfg, a)
        }
    }
}

/// Seeds are kept within TOML's integer range so they round-trip through
/// the written configuration.
fn seed_parser() -> clap::builder::RangedU64ValueParser<u64> {
    clap::value_parser!(u64).range(0..=i64::MAX as u64)
}

fn seed_or_generate(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>() >> 1;
        println!("seed {s}");
        s
    })
}

fn create_out(dir: &Path) -> Outcome {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(data)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into())
}

fn load(path: &Path) -> std::result::Result<PcgSignal, Failure> {
    load_wav(path).map_err(data)
}

fn save_bytes(path: PathBuf, bytes: &[u8]) -> Outcome {
    write_atomic(&path, bytes).map_err(data)
}

fn synth(cfg: &PipelineConfig, a: &SynthArgs) -> Outcome {
    let corpus = make_corpus(&cfg.synth, &a.out).map_err(data)?;
    println!(
        "wrote {} recordings of {} identities to {}",
        corpus.recordings.len(),
        cfg.synth.num_identities,
        a.out.display()
    );
    Ok(())
}

fn segment(cfg: &PipelineConfig, a: &SegmentArgs) -> Outcome {
    let sig = load(&a.input)?;
    let tones = detect_tones(&sig, &cfg.statistical.segmentation).map_err(data)?;
    tones.validate().map_err(|e| Failure::Internal(e.into()))?;
    create_out(&a.out)?;
    let path = a.out.join(format!("{}.tones", stem(&a.input)));
    save_bytes(path.clone(), tones.to_text().as_bytes())?;
    println!(
        "tones {} period_samples {} written {}",
        tones.tones.len(),
        tones.period_estimate,
        path.display()
    );
    if let Some(truth_path) = &a.truth {
        let text = fs::read_to_string(truth_path)
            .with_context(|| format!("reading {}", truth_path.display()))
            .map_err(data)?;
        let truth = ToneEndpoints::parse_text(&text, tones.period_estimate).map_err(data)?;
        let tol = (a.tolerance_ms / 1000.0 * sig.sample_rate() as f64).round() as usize;
        let s = score_detection(&truth, &tones, tol);
        println!("recall {:.4} label_accuracy {:.4}", s.recall(), s.label_accuracy());
    }
    Ok(())
}

fn features(cfg: &PipelineConfig, a: &FeaturesArgs) -> Outcome {
    let sig = load(&a.input)?;
    let fm: FeatureMatrix = match a.system {
        SystemArg::Statistical => recording_features(&sig, &cfg.statistical).map_err(data)?,
        SystemArg::Structural => {
            let s = &cfg.structural;
            let filtered = lowpass_filter(&sig, s.lowpass_hz).map_err(data)?;
            let mut seg = s.segmentation;
            seg.prefilter_hz = None;
            let tones = detect_tones(&filtered, &seg).map_err(data)?;
            tone_features(&filtered, &tones, &s.front_end, None).map_err(data)?
        }
    };
    create_out(&a.out)?;
    let ext = if a.text { "txt" } else { "feat" };
    let path = a.out.join(format!("{}.{ext}", stem(&a.input)));
    let bytes = if a.text {
        fm.to_text().into_bytes()
    } else {
        fm.to_bytes()
    };
    save_bytes(path.clone(), &bytes)?;
    println!("frames {} dim {} written {}", fm.num_frames(), fm.dim(), path.display());
    Ok(())
}

fn enrollment_features(manifest: &Manifest, cfg: &PipelineConfig) -> std::result::Result<Vec<FeatureMatrix>, Failure> {
    manifest
        .entries
        .iter()
        .filter(|e| e.role == Role::Enroll)
        .map(|e| {
            let sig = load(&manifest.resolve(e))?;
            recording_features(&sig, &cfg.statistical)
                .with_context(|| format!("features of {}", e.path.display()))
                .map_err(data)
        })
        .collect()
}

fn model_path(dir: &Path, name: &str, text: bool) -> PathBuf {
    dir.join(format!("{name}.{}", if text { "txt" } else { "gmm" }))
}

fn model_bytes(model: &GmmModel, text: bool) -> Vec<u8> {
    if text {
        model.to_text().into_bytes()
    } else {
        model.to_bytes()
    }
}

fn train(cfg: &PipelineConfig, a: &TrainUbmArgs) -> Outcome {
    let manifest = Manifest::load(&a.manifest).map_err(data)?;
    let feats = enrollment_features(&manifest, cfg)?;
    let report = train_ubm_report(&feats, &cfg.statistical.train).map_err(data)?;
    create_out(&a.out)?;
    let path = model_path(&a.out, "ubm", a.text);
    save_bytes(path.clone(), &model_bytes(&report.model, a.text))?;
    println!(
        "frames {} iterations {} converged {} written {}",
        report.frames,
        report.ll_history.len(),
        report.converged,
        path.display()
    );
    Ok(())
}

fn need_ubm(ubm: &Option<PathBuf>) -> std::result::Result<GmmModel, Failure> {
    let path = ubm
        .as_ref()
        .ok_or_else(|| usage("the statistical system needs --ubm"))?;
    GmmModel::load(path).map_err(data)
}

fn enroll(cfg: &PipelineConfig, a: &EnrollArgs) -> Outcome {
    let sig = load(&a.input)?;
    match a.system {
        SystemArg::Structural => {
            let e = enroll_structural_detailed(&sig, &cfg.structural, &a.person).map_err(data)?;
            create_out(&a.out)?;
            let path = a.out.join(format!("{}.template", a.person));
            save_bytes(path.clone(), e.template.to_text().as_bytes())?;
            println!(
                "offset_samples {} quality {} fsr_db {:.3} written {}",
                e.offset,
                e.quality,
                e.template.fsr_db,
                path.display()
            );
        }
        SystemArg::Statistical => {
            let ubm = need_ubm(&a.ubm)?;
            let fm = recording_features(&sig, &cfg.statistical).map_err(data)?;
            let model = adapt_map(&ubm, &fm, &cfg.statistical.train).map_err(data)?;
            create_out(&a.out)?;
            let path = model_path(&a.out, &a.person, a.text);
            save_bytes(path.clone(), &model_bytes(&model, a.text))?;
            println!("frames {} written {}", fm.num_frames(), path.display());
        }
    }
    Ok(())
}

fn verify(cfg: &PipelineConfig, a: &VerifyArgs) -> Outcome {
    let sig = load(&a.input)?;
    match a.system {
        SystemArg::Structural => {
            let template = StructuralTemplate::load(&a.model).map_err(data)?;
            let mut s = cfg.structural;
            if let Some(t) = a.threshold {
                s.params.decision_threshold = t;
            }
            let (d, accept) = verify_structural(&sig, &template, &s).map_err(data)?;
            println!("distance {d} decision {}", if accept { "accept" } else { "reject" });
        }
        SystemArg::Statistical => {
            let ubm = need_ubm(&a.ubm)?;
            let target = GmmModel::load(&a.model).map_err(data)?;
            let fm = recording_features(&sig, &cfg.statistical).map_err(data)?;
            let score = score_llr(&target, &ubm, &fm).map_err(data)?;
            let mut policy = cfg.statistical.policy;
            if let Some(t) = a.threshold {
                policy.theta = t;
            }
            let accept = verify_statistical(&score, &policy);
            println!(
                "llr {} total_llr {} frames {} decision {}",
                score.llr,
                score.total_llr,
                score.frames,
                if accept { "accept" } else { "reject" }
            );
        }
    }
    Ok(())
}

fn evaluate(cfg: &PipelineConfig, a: &EvaluateArgs) -> Outcome {
    let manifest = Manifest::load(&a.manifest).map_err(data)?;
    let ubm = match (&a.ubm, a.system) {
        (Some(p), SystemArg::Statistical) => Some(GmmModel::load(p).map_err(data)?),
        (Some(_), SystemArg::Structural) => return Err(usage("--ubm applies only to the statistical system")),
        (None, _) => None,
    };
    let result = run_experiment(&manifest, a.system.into(), cfg, ubm.as_ref()).map_err(data)?;
    let report = result.report().map_err(data)?;
    let det = det_curve(&result.trials, cfg.evaluation.det_points).map_err(data)?;
    let point = eer(&result.trials).map_err(data)?;
    if !(0.0..=1.0).contains(&point.eer) {
        return Err(Failure::Internal(anyhow::anyhow!("EER {} outside [0, 1]", point.eer)));
    }
    create_out(&a.out)?;
    save_bytes(a.out.join("report.txt"), report.as_bytes())?;
    save_bytes(a.out.join("det.csv"), det.to_csv().as_bytes())?;
    let effective = config::to_toml(cfg).map_err(Failure::Internal)?;
    save_bytes(a.out.join("config.toml"), effective.as_bytes())?;
    print!("{report}");
    Ok(())
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn heartid(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heartid"))
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(cwd: &Path, args: &[&str]) -> String {
    let o = heartid(cwd, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    stdout(&o)
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn eer_percent(report: &str) -> f64 {
    let line = report.lines().find(|l| l.starts_with("EER ")).expect("EER line");
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

const SHORT: [&str; 6] = [
    "--set",
    "synth.min_duration_s=15",
    "--set",
    "synth.max_duration_s=20",
    "--set",
    "synth.enroll_duration_s=30",
];

fn small_corpus(cwd: &Path, name: &str) {
    let mut args = vec!["synth", "--identities", "4", "--seed", "3", "--out", name];
    args.extend(SHORT);
    ok(cwd, &args);
}

#[test]
fn synth_writes_recordings_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["synth", "--identities", "10", "--seed", "7", "--out", "corpus/"],
    );
    let names: Vec<String> = fs::read_dir(dir.path().join("corpus"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.iter().filter(|n| n.ends_with(".wav")).count(), 20);
    assert!(names.iter().any(|n| n == "manifest.txt"));
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path(), "a");
    small_corpus(dir.path(), "b");
    assert_eq!(tree(&dir.path().join("a")), tree(&dir.path().join("b")));
}

#[test]
fn synth_needs_two_identities() {
    let dir = tempfile::tempdir().unwrap();
    let o = heartid(dir.path(), &["synth", "--identities", "1", "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("2 identities"));
}

#[test]
fn missing_seed_is_generated_and_printed() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["synth", "--identities", "2", "--out", "c"];
    args.extend(SHORT);
    let out = ok(dir.path(), &args);
    let seed: u64 = out
        .lines()
        .find_map(|l| l.strip_prefix("seed "))
        .expect("seed line")
        .parse()
        .unwrap();
    assert!(seed <= i64::MAX as u64);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| heartid(dir.path(), args).status.code();
    assert_eq!(code(&["evaluate", "--system", "structural", "--out", "e"]), Some(1));
    assert_eq!(
        code(&[
            "evaluate",
            "--manifest",
            "missing.txt",
            "--system",
            "structural",
            "--out",
            "e"
        ]),
        Some(2)
    );
    assert_eq!(code(&["--set", "synth.bogus=1", "synth", "--out", "c"]), Some(1));
    assert_eq!(code(&["--set", "noequals", "synth", "--out", "c"]), Some(1));
    assert_eq!(code(&["frobnicate"]), Some(1));
    assert_eq!(code(&["--help"]), Some(0));
    fs::write(dir.path().join("bad.wav"), b"RIFF nonsense").unwrap();
    assert_eq!(code(&["segment", "--input", "bad.wav", "--out", "s"]), Some(2));
}

#[test]
fn config_file_and_flags_layer() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "[synth]\nnum_identities = 3\nmin_duration_s = 15.0\nmax_duration_s = 20.0\nenroll_duration_s = 30.0\n",
    )
    .unwrap();
    ok(
        dir.path(),
        &["--config", "c.toml", "synth", "--seed", "1", "--out", "a"],
    );
    let wavs = |d: &str| {
        fs::read_dir(dir.path().join(d))
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "wav"))
            .count()
    };
    assert_eq!(wavs("a"), 6);
    ok(
        dir.path(),
        &[
            "--config",
            "c.toml",
            "synth",
            "--identities",
            "2",
            "--seed",
            "1",
            "--out",
            "b",
        ],
    );
    assert_eq!(wavs("b"), 4);
    let o = heartid(dir.path(), &["--config", "missing.toml", "synth", "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn full_workflow_stays_inside_out_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_corpus(d, "c");
    let corpus = tree(&d.join("c"));

    let seg = ok(
        d,
        &[
            "segment",
            "--input",
            "c/p000_verify.wav",
            "--out",
            "seg",
            "--truth",
            "c/p000_verify.tones",
        ],
    );
    assert!(seg.contains("recall 1.0000"), "{seg}");
    ok(d, &["features", "--input", "c/p000_verify.wav", "--out", "f"]);
    ok(
        d,
        &[
            "features",
            "--input",
            "c/p000_verify.wav",
            "--out",
            "f",
            "--system",
            "structural",
            "--text",
        ],
    );
    ok(
        d,
        &[
            "train-ubm",
            "--manifest",
            "c/manifest.txt",
            "--out",
            "m",
            "--components",
            "8",
            "--seed",
            "2",
        ],
    );
    ok(
        d,
        &[
            "enroll",
            "--system",
            "statistical",
            "--input",
            "c/p000_enroll.wav",
            "--person",
            "p000",
            "--out",
            "m",
            "--ubm",
            "m/ubm.gmm",
        ],
    );
    let v = ok(
        d,
        &[
            "verify",
            "--system",
            "statistical",
            "--input",
            "c/p000_verify.wav",
            "--model",
            "m/p000.gmm",
            "--ubm",
            "m/ubm.gmm",
        ],
    );
    assert!(v.contains("decision accept"), "{v}");
    let v = ok(
        d,
        &[
            "verify",
            "--system",
            "statistical",
            "--input",
            "c/p001_verify.wav",
            "--model",
            "m/p000.gmm",
            "--ubm",
            "m/ubm.gmm",
        ],
    );
    assert!(v.contains("decision reject"), "{v}");
    ok(
        d,
        &[
            "enroll",
            "--system",
            "structural",
            "--input",
            "c/p000_enroll.wav",
            "--person",
            "p000",
            "--out",
            "s",
        ],
    );
    let v = ok(
        d,
        &[
            "verify",
            "--system",
            "structural",
            "--input",
            "c/p000_verify.wav",
            "--model",
            "s/p000.template",
        ],
    );
    assert!(v.starts_with("distance "), "{v}");
    let v = ok(
        d,
        &[
            "verify",
            "--system",
            "structural",
            "--input",
            "c/p000_verify.wav",
            "--model",
            "s/p000.template",
            "--threshold",
            "1e9",
        ],
    );
    assert!(v.contains("decision accept"), "{v}");
    let r = ok(
        d,
        &[
            "evaluate",
            "--manifest",
            "c/manifest.txt",
            "--system",
            "statistical",
            "--ubm",
            "m/ubm.gmm",
            "--out",
            "e",
        ],
    );
    assert!(r.contains("genuine_trials 4"), "{r}");
    ok(
        d,
        &[
            "evaluate",
            "--manifest",
            "c/manifest.txt",
            "--system",
            "structural",
            "--out",
            "e2",
        ],
    );

    let mut top: Vec<String> = fs::read_dir(d)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    top.sort();
    assert_eq!(top, ["c", "e", "e2", "f", "m", "s", "seg"]);
    assert_eq!(tree(&d.join("c")), corpus);
    let names = |sub: &str| -> Vec<String> {
        tree(&d.join(sub))
            .into_iter()
            .map(|(p, _)| p.to_string_lossy().into_owned())
            .collect()
    };
    assert_eq!(names("e"), ["config.toml", "det.csv", "report.txt"]);
    assert_eq!(names("f"), ["p000_verify.feat", "p000_verify.txt"]);
    assert_eq!(names("m"), ["p000.gmm", "ubm.gmm"]);
    let det = fs::read_to_string(d.join("e/det.csv")).unwrap();
    assert!(det.starts_with("threshold,fmr,fnmr\n"));
}

#[test]
fn evaluation_is_reproducible_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_corpus(d, "c");
    let args = |out: &'static str| {
        vec![
            "evaluate",
            "--manifest",
            "c/manifest.txt",
            "--system",
            "statistical",
            "--components",
            "8",
            "--seed",
            "5",
            "--out",
            out,
        ]
    };
    ok(d, &args("a"));
    let mut one = vec!["--jobs", "1"];
    one.extend(args("b"));
    ok(d, &one);
    assert_eq!(tree(&d.join("a")), tree(&d.join("b")));
}

#[test]
fn separable_and_default_presets() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--preset", "separable", "--seed", "1", "--out", "sep"]);
    let stat = |corpus: &str, out: &str| {
        let m = format!("{corpus}/manifest.txt");
        let r = ok(
            d,
            &[
                "evaluate",
                "--manifest",
                &m,
                "--system",
                "statistical",
                "--components",
                "64",
                "--seed",
                "0",
                "--out",
                out,
            ],
        );
        eer_percent(&r)
    };
    assert!(stat("sep", "e_sep") <= 5.0);

    ok(d, &["synth", "--seed", "1", "--out", "def"]);
    let s = stat("def", "e_stat");
    let r = ok(
        d,
        &[
            "evaluate",
            "--manifest",
            "def/manifest.txt",
            "--system",
            "structural",
            "--out",
            "e_struct",
        ],
    );
    assert!(
        eer_percent(&r) >= s,
        "structural {} vs statistical {s}",
        eer_percent(&r)
    );
}

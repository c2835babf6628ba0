use heartid::segmentation::*;
use heartid::signal::CANONICAL_RATE;
use heartid::synth::*;

const TOL: usize = (0.020 * CANONICAL_RATE as f64) as usize;

fn identities(spread: f64) -> Vec<IdentityParams> {
    corpus_identities(&CorpusSpec {
        num_identities: 8,
        spread_hz: spread,
        seed: 4,
        ..CorpusSpec::default()
    })
    .unwrap()
}

fn score_set(clicks: f64) -> DetectionScore {
    let cfg = SegmentationConfig::default();
    let mut total = DetectionScore {
        reference: 0,
        matched: 0,
        labels_correct: 0,
    };
    for (p, id) in identities(10.0).iter().enumerate() {
        let mut rec = generate(id, 30.0, 5.0, Some(30.0), 200 + p as u64).unwrap();
        if clicks > 0.0 {
            inject_clicks(&mut rec, clicks, 1.0, p as u64);
        }
        let det = detect_tones(&rec.signal, &cfg).unwrap();
        det.validate().unwrap();
        total = total.merge(score_detection(&rec.truth_endpoints, &det, TOL));
    }
    total
}

#[test]
fn clean_recordings_are_segmented() {
    let s = score_set(0.0);
    assert!(s.recall() >= 0.9, "recall {}", s.recall());
    assert_eq!(s.labels_correct, s.matched);
}

#[test]
fn clicks_cost_little() {
    let clean = score_set(0.0).recall();
    let clicked = score_set(1.0);
    assert!(clean - clicked.recall() <= 0.05, "{clean} -> {}", clicked.recall());
    assert_eq!(clicked.labels_correct, clicked.matched);
}

#[test]
fn scale_does_not_move_endpoints() {
    let rec = generate(&IdentityParams::reference(), 12.0, 4.0, Some(30.0), 9).unwrap();
    let cfg = SegmentationConfig::default();
    let base = detect_tones(&rec.signal, &cfg).unwrap();
    for gain in [0.01, 0.3, 1.7] {
        let scaled = rec.signal.scaled(gain).unwrap();
        assert_eq!(detect_tones(&scaled, &cfg).unwrap(), base);
    }
}

#[test]
fn repeated_runs_agree() {
    let rec = generate(&identities(10.0)[3], 25.0, 5.0, Some(30.0), 1).unwrap();
    let cfg = SegmentationConfig::default();
    assert_eq!(
        detect_tones(&rec.signal, &cfg).unwrap(),
        detect_tones(&rec.signal, &cfg).unwrap()
    );
}

#[test]
fn period_tracks_heart_rate() {
    for bpm in [55.0, 72.0, 95.0] {
        let id = IdentityParams {
            base_rate_bpm: bpm,
            ..IdentityParams::reference()
        };
        let rec = generate(&id, 16.0, 0.0, Some(30.0), 2).unwrap();
        let det = detect_tones(&rec.signal, &SegmentationConfig::default()).unwrap();
        let expected = 60.0 / bpm * CANONICAL_RATE as f64;
        let rel = (det.period_estimate as f64 - expected).abs() / expected;
        assert!(rel < 0.05, "bpm {bpm}: period {} vs {expected}", det.period_estimate);
    }
}

#[test]
fn endpoints_text_round_trip() {
    let rec = generate(&IdentityParams::reference(), 10.0, 3.0, None, 6).unwrap();
    let det = detect_tones(&rec.signal, &SegmentationConfig::default()).unwrap();
    let back = ToneEndpoints::parse_text(&det.to_text(), det.period_estimate).unwrap();
    assert_eq!(back, det);
}

#[test]
fn detection_score_counts() {
    let tone = |start, label| Tone {
        start,
        end: start + 100,
        label,
    };
    let truth = ToneEndpoints {
        tones: vec![
            tone(0, ToneLabel::S1),
            tone(300, ToneLabel::S2),
            tone(1000, ToneLabel::S1),
        ],
        period_estimate: 1000,
    };
    let det = ToneEndpoints {
        tones: vec![
            tone(10, ToneLabel::S1),
            tone(290, ToneLabel::S1),
            tone(1500, ToneLabel::S1),
        ],
        period_estimate: 1000,
    };
    let s = score_detection(&truth, &det, 20);
    assert_eq!((s.reference, s.matched, s.labels_correct), (3, 2, 1));
    assert!((s.recall() - 2.0 / 3.0).abs() < 1e-12);
}

mod common;

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use agreement::evaluator::{evaluate_dataset, EvalOptions, GateConfig, Verdict};
use agreement::scoring::protocol::ServeSummary;
use agreement::scoring::{
    ExternalBackend, ExternalConfig, RandomBackend, ScoreError, ScorerBackend,
};

fn stub_command(extra: &[&str]) -> Vec<String> {
    let mut cmd = vec![
        common::stub_scorer().to_string(),
        "--grammar-dir".into(),
        common::grammar_dir().display().to_string(),
    ];
    cmd.extend(extra.iter().map(|s| s.to_string()));
    cmd
}

fn spawn(extra: &[&str]) -> ExternalBackend {
    ExternalBackend::spawn(&stub_command(extra), Some(Duration::from_secs(30))).unwrap()
}

fn summaries(path: &Path) -> Vec<ServeSummary> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

const TEXTS: [&str; 6] = [
    "Der Autor lacht .",
    "Der Autor lachen .",
    "Die Kinder schlafen .",
    "Die Kinder schläft .",
    "Das Kind trinkt .",
    "Das Kind trinken .",
];

#[test]
fn scores_match_native_backend_over_stdio() {
    let remote = spawn(&["--backend", "random", "--seed", "9"]);
    assert_eq!(remote.info().name, "stub-random");
    assert_eq!(remote.info().concurrency_limit, 1);
    let native = RandomBackend::new(9);
    for t in TEXTS {
        assert_eq!(remote.score(t).unwrap(), native.score(t).unwrap());
    }
}

#[test]
fn concurrent_replies_are_matched_by_id() {
    let remote = spawn(&["--seed", "4", "--concurrency", "4", "--jitter-ms", "15"]);
    assert_eq!(remote.info().concurrency_limit, 4);
    let native = RandomBackend::new(4);
    std::thread::scope(|s| {
        for round in 0..8 {
            let (remote, native) = (&remote, &native);
            s.spawn(move || {
                for t in TEXTS.iter().cycle().skip(round).take(12) {
                    assert_eq!(remote.score(t).unwrap(), native.score(t).unwrap());
                }
            });
        }
    });
}

fn max_in_flight(extra: &[&str]) -> ServeSummary {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("summary.jsonl");
    let mut args = vec!["--jitter-ms", "5", "--summary", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    {
        let remote = spawn(&args);
        std::thread::scope(|s| {
            for _ in 0..6 {
                s.spawn(|| {
                    for t in TEXTS {
                        remote.score(t).unwrap();
                    }
                });
            }
        });
    }
    let all = summaries(&path);
    assert_eq!(all.len(), 1);
    all[0]
}

#[test]
fn default_limit_keeps_one_request_in_flight() {
    let s = max_in_flight(&[]);
    assert_eq!(s.requests, 36);
    assert_eq!(s.max_in_flight, 1);
}

#[test]
fn advertised_limit_is_respected() {
    let s = max_in_flight(&["--concurrency", "3"]);
    assert_eq!(s.requests, 36);
    assert!(s.max_in_flight <= 3 && s.max_in_flight >= 1, "{s:?}");
}

#[test]
fn masked_candidates_round_trip() {
    let remote = spawn(&["--backend", "oracle"]);
    let text = "Der Autor [MASK] .";
    let span = (10, 16);
    let cands = vec!["lacht".to_string(), "lachen".to_string(), "lacht laut".to_string()];
    let got = remote.masked_candidates(text, span, &cands).unwrap();
    assert_eq!(got.len(), 3);
    assert!(got[0].logprob.unwrap() > got[1].logprob.unwrap());
    let mass: f64 = got[..2].iter().map(|c| c.logprob.unwrap().exp()).sum();
    assert!((mass - 1.0).abs() < 1e-9);
    assert_eq!(got[2].logprob, None);
    assert_eq!(got[2].num_subwords, 2);
    assert!(matches!(
        remote.masked_candidates(text, (10, 99), &cands),
        Err(ScoreError::SpanOutOfRange { .. })
    ));
}

#[test]
fn over_length_input_is_a_remote_error() {
    let remote = spawn(&["--max-len", "3"]);
    assert_eq!(remote.max_len(), 3);
    assert!(matches!(remote.score("Der Autor lacht ."), Err(ScoreError::Remote(_))));
    // the connection survives a per-request error
    assert!(remote.score("Er lacht .").is_ok());
}

#[test]
fn dropped_connection_is_a_transport_error() {
    let remote = spawn(&["--fail-after", "3"]);
    for t in &TEXTS[..3] {
        remote.score(t).unwrap();
    }
    let err = remote.score(TEXTS[3]).unwrap_err();
    assert!(err.is_transport(), "{err}");
    assert!(remote.score(TEXTS[4]).unwrap_err().is_transport());
}

#[test]
fn missing_program_is_a_transport_error() {
    let err = ExternalBackend::spawn(&["/nonexistent/scorer".to_string()], None).err().unwrap();
    assert!(err.is_transport());
    let both = ExternalConfig {
        command: Some(vec!["x".into()]),
        address: Some("127.0.0.1:1".into()),
        timeout: None,
    };
    assert!(ExternalBackend::connect(&both).is_err());
}

struct Listener(Child);

impl Drop for Listener {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn listen(extra: &[&str]) -> (Listener, String) {
    let mut child = Command::new(common::stub_scorer())
        .args(["--listen", "127.0.0.1:0", "--once"])
        .arg("--grammar-dir")
        .arg(common::grammar_dir())
        .args(extra)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    (Listener(child), line.trim().to_string())
}

#[test]
fn tcp_transport_evaluates_pairs() {
    let (_server, addr) = listen(&["--backend", "oracle", "--concurrency", "4", "--jitter-ms", "2"]);
    let remote = ExternalBackend::connect(&ExternalConfig {
        command: None,
        address: Some(addr),
        timeout: Some(Duration::from_secs(30)),
    })
    .unwrap();
    let pairs: Vec<_> = common::corpus().pairs.iter().step_by(40).cloned().collect();
    let options = EvalOptions {
        jobs: 8,
        ..EvalOptions::default()
    };
    let e = evaluate_dataset(&pairs, &remote, GateConfig::Backend, &options);
    assert!(e.error.is_none(), "{:?}", e.error);
    assert!(e.decisions.iter().all(|d| d.verdict == Verdict::Correct));
    assert_eq!(e.report.backend, "stub-oracle");
}

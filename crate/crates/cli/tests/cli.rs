use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use clap::Parser;
use eyeball_cli::args::{Cli, Command};
use eyeball_cli::{cmd_generate, cmd_report, cmd_run, main_with_args, CliError};
use eyeball_core::backend::load_transcript;
use eyeball_core::instances::load_dataset;
use eyeball_core::metrics::{Group, RunRecord};
use eyeball_core::parse::Status;

fn parse(argv: &[&str]) -> Command {
    Cli::try_parse_from(std::iter::once("eyeball").chain(argv.iter().copied()))
        .unwrap()
        .command
}

fn generate(argv: &[&str]) -> (PathBuf, PathBuf) {
    match parse(argv) {
        Command::Generate(a) => cmd_generate(a).unwrap(),
        _ => unreachable!(),
    }
}

fn run(argv: &[&str]) -> Result<PathBuf, CliError> {
    match parse(argv) {
        Command::Run(a) => cmd_run(*a),
        _ => unreachable!(),
    }
}

fn report(dir: &Path) -> PathBuf {
    match parse(&["report", dir.to_str().unwrap()]) {
        Command::Report(a) => cmd_report(a).unwrap(),
        _ => unreachable!(),
    }
}

fn records(dir: &Path) -> Vec<RunRecord> {
    eyeball_cli::run::load_records(dir).unwrap()
}

fn small_dataset(dir: &Path) -> String {
    let out = dir.join("small.json");
    let out = out.to_str().unwrap();
    generate(&["generate", "--sizes", "5", "--count", "2", "--seed", "9", "--output", out]);
    out.to_string()
}

#[test]
fn generate_small_and_rerun_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let path = small_dataset(tmp.path());
    let first = fs::read(&path).unwrap();
    let optima = fs::read(tmp.path().join("small.optima.json")).unwrap();
    small_dataset(tmp.path());
    assert_eq!(first, fs::read(&path).unwrap());
    assert_eq!(optima, fs::read(tmp.path().join("small.optima.json")).unwrap());
    let ds = load_dataset(Path::new(&path)).unwrap();
    assert_eq!(ds.instances.len(), 2);
    assert_eq!(ds.sizes, [5]);
}

#[test]
fn exit_codes() {
    assert_eq!(main_with_args(["eyeball", "--help"]), 0);
    assert_eq!(main_with_args(["eyeball", "run", "--help"]), 0);
    assert_eq!(main_with_args(["eyeball", "run", "--no-such-flag"]), 1);
    assert_eq!(main_with_args(["eyeball", "generate", "--sizes", "2"]), 1);
    assert_eq!(main_with_args(["eyeball", "run", "--strategy", "ensemble", "--dataset", "/does/not/exist.json"]), 1);
    assert_eq!(main_with_args(["eyeball", "report", "/does/not/exist"]), 1);
    assert_eq!(main_with_args(["eyeball", "run", "--strategy", "zero-shot", "--backend", "mock-scripted"]), 1);

    // A transcript without the needed entries is a harness fault.
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path());
    let transcript = tmp.path().join("empty.jsonl");
    fs::write(&transcript, "").unwrap();
    let out = tmp.path().join("runs");
    let code = main_with_args([
        "eyeball", "run", "--strategy", "zero-shot", "--dataset", &ds, "--backend", "mock-scripted",
        "--transcript", transcript.to_str().unwrap(), "--out-dir", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn help_lists_every_run_flag() {
    let err = Cli::try_parse_from(["eyeball", "run", "--help"]).unwrap_err();
    let help = err.to_string();
    for flag in [
        "--dataset", "--strategy", "--sizes", "--limit", "--backend", "--endpoint", "--model",
        "--text-model", "--api-key-env", "--temperature", "--max-output-tokens", "--timeout",
        "--max-retries", "--max-concurrent", "--mock-p-optimal", "--mock-p-perturbed",
        "--mock-p-incorrect-id", "--mock-p-incomplete", "--mock-p-unparseable",
        "--mock-perturb-moves", "--mock-seed", "--transcript", "--k", "--ensemble-sizes", "--iters",
        "--demos", "--workers", "--dump-prompts", "--out-dir", "--config",
    ] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn perfect_oracle_gives_zero_gaps() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path());
    let out = tmp.path().join("runs");
    let dir = run(&[
        "run", "--strategy", "ensemble", "--dataset", &ds, "--mock-p-optimal", "1.0",
        "--out-dir", out.to_str().unwrap(),
    ])
    .unwrap();
    let rows = records(&dir);
    assert_eq!(rows.len(), 2 * 6);
    assert!(rows.iter().all(|r| r.gap_percent == Some(0.0)));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment_id"], serde_json::Value::String(rows[0].experiment_id.clone()));
    assert!(manifest["backend"].get("api_key").is_none());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path());
    let out = tmp.path().join("runs");
    let cfg = tmp.path().join("eyeball.toml");
    fs::write(
        &cfg,
        format!(
            "[run]\nstrategy = \"refine-2\"\niters = 2\ndataset = {ds:?}\nout_dir = {:?}\nmock_p_optimal = 1.0\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let dir = run(&["run", "--config", cfg.to_str().unwrap()]).unwrap();
    let rows = records(&dir);
    assert!(rows.iter().all(|r| r.strategy.as_str() == "refine-2"));
    assert_eq!(rows.len(), 2 * 3);

    let dir = run(&["run", "--config", cfg.to_str().unwrap(), "--iters", "4"]).unwrap();
    assert_eq!(records(&dir).len(), 2 * 5);

    fs::write(&cfg, "[run]\nunknown_key = 1\n").unwrap();
    assert!(matches!(run(&["run", "--config", cfg.to_str().unwrap()]), Err(CliError::Usage(_))));
}

#[test]
fn run_directories_are_never_reused() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path());
    let out = tmp.path().join("runs");
    let argv = ["run", "--strategy", "zero-shot", "--dataset", &ds, "--out-dir", out.to_str().unwrap()];
    let a = run(&argv).unwrap();
    let b = run(&argv).unwrap();
    assert_ne!(a, b);
    assert_eq!(fs::read(a.join("records.jsonl")).unwrap(), fs::read(b.join("records.jsonl")).unwrap());
}

#[test]
fn report_twice_is_identical_and_empty_runs_report_no_data() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path());
    let out = tmp.path().join("runs");
    let dir = run(&["run", "--strategy", "ensemble", "--dataset", &ds, "--out-dir", out.to_str().unwrap()]).unwrap();
    let rep = report(&dir);
    let first: Vec<(PathBuf, Vec<u8>)> = fs::read_dir(&rep)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.clone(), fs::read(&p).unwrap()))
        .collect();
    report(&dir);
    for (p, bytes) in &first {
        assert_eq!(&fs::read(p).unwrap(), bytes, "{}", p.display());
    }
    let svg = fs::read_to_string(rep.join("ensemble_median_gap.svg")).unwrap();
    assert!(svg.contains("S = 13") && !svg.contains("no data"));

    let empty = run(&["run", "--strategy", "ensemble", "--dataset", &ds, "--sizes", "7", "--out-dir", out.to_str().unwrap()]).unwrap();
    assert!(records(&empty).is_empty());
    let rep = report(&empty);
    assert!(fs::read_to_string(rep.join("median_gap.svg")).unwrap().contains("no data"));
}

#[test]
fn refine_run_writes_images_payloads_and_contact_sheets() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path());
    let out = tmp.path().join("runs");
    let dir = run(&[
        "run", "--strategy", "refine-1", "--iters", "3", "--dataset", &ds, "--limit", "1",
        "--dump-prompts", "--out-dir", out.to_str().unwrap(),
    ])
    .unwrap();
    let rows = records(&dir);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.last().unwrap().group, Group::Iteration(3));
    let id = &rows[0].instance_id;
    for tag in ["iter_00", "iter_01", "iter_02", "best"] {
        assert!(dir.join("images").join(id).join(format!("{tag}.png")).exists(), "{tag}");
    }
    assert!(dir.join("payloads").join(format!("{id}.json")).exists());
    assert!(dir.join("prompts").join(id).read_dir().unwrap().count() >= 4);
    let rep = report(&dir);
    assert!(rep.join("contact_sheets").join(format!("{id}.png")).exists());
}

/// Minimal chat-completions server answering every request with the
/// identity tour over five nodes.
fn fake_server(hits: Arc<AtomicUsize>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0usize;
            let mut auth = false;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization: bearer test-key") {
                    auth = true;
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let request: serde_json::Value = serde_json::from_slice(&body).unwrap();
            assert_eq!(request["model"], "vision-test");
            assert!(auth, "missing bearer token");
            hits.fetch_add(1, Ordering::SeqCst);
            let reply = r#"{"choices":[{"message":{"role":"assistant","content":"Here: <<start>> 1 -> 2 -> 3 -> 4 -> 5 -> 1 <<end>>"}}]}"#;
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    format!("http://{addr}/v1/chat/completions")
}

#[test]
fn http_backend_end_to_end() {
    let hits = Arc::new(AtomicUsize::new(0));
    let endpoint = fake_server(hits.clone());
    std::env::set_var("EYEBALL_CLI_TEST_KEY", "test-key");
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path());
    let out = tmp.path().join("runs");
    let dir = run(&[
        "run", "--strategy", "zero-shot", "--limit", "1", "--dataset", &ds, "--backend", "http",
        "--endpoint", &endpoint, "--model", "vision-test", "--api-key-env", "EYEBALL_CLI_TEST_KEY",
        "--out-dir", out.to_str().unwrap(),
    ])
    .unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    let entries = load_transcript(&dir.join("transcripts").join("zero-shot.jsonl")).unwrap();
    assert_eq!(entries.len(), 1);
    assert_eq!(entries[0].response.model_name, "vision-test");
    let rows = records(&dir);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].status, Status::Valid);
    let manifest = fs::read_to_string(dir.join("manifest.json")).unwrap();
    assert!(!manifest.contains("test-key"));
}

use std::path::Path;

use serde_json::Value;
use tdc::cli::{run, CliOutcome, EXIT_IO, EXIT_OK, EXIT_ORCHESTRATION, EXIT_USAGE};

fn tdc(args: &[&str]) -> CliOutcome {
    run(std::iter::once("tdc").chain(args.iter().copied()))
}

fn record(out: &CliOutcome) -> Value {
    assert_eq!(out.code, EXIT_OK, "stderr: {}", out.stderr);
    assert_eq!(out.stdout.lines().count(), 1, "exactly one record");
    serde_json::from_str(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_then_budget_single_scene() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("a.tdcf");
    let gen = record(&tdc(&["gen", "--output", p(&file), "--seed", "1", "--frames", "60"]));
    assert_eq!(gen["frames"], 60);
    let budget = record(&tdc(&["budget", "--input", p(&file)]));
    assert_eq!(budget["total"], 2392);
    assert_eq!(budget["naive"], 11640);
    assert!((budget["ratio"].as_f64().unwrap() - 4.87).abs() < 0.01);
}

#[test]
fn segment_recovers_planted_cuts_and_compress_matches_budget() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("b.tdcf");
    record(&tdc(&["gen", "--output", p(&file), "--seed", "1", "--frames", "60", "--boundaries", "20,40"]));
    let seg = record(&tdc(&["segment", "--input", p(&file)]));
    assert_eq!(seg["boundaries"], serde_json::json!([20, 40]));
    let budget = record(&tdc(&["budget", "--input", p(&file)]));
    let stream = dir.path().join("b.tdcs");
    let comp = record(&tdc(&["compress", "--input", p(&file), "--output", p(&stream), "--text", "what happens"]));
    assert_eq!(comp["tokens"], budget["total"]);
    assert_eq!(comp["sep"], 9);
    let back = tdc::compressor::read_stream(&stream).unwrap();
    assert_eq!(back.len() as u64, comp["tokens"].as_u64().unwrap());
}

#[test]
fn knobs_reach_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.tdcf");
    record(&tdc(&["gen", "--output", p(&file), "--frames", "30", "--dims", "8,6,4", "--visual-tokens", "10", "--audio-tokens", "3"]));
    let k32 = record(&tdc(&["budget", "--input", p(&file), "--k", "32", "--window", "4"]));
    assert_eq!(k32["visual_tokens_per_frame"], 10);
    assert_eq!(k32["queries_per_frame"], 32);
    let cap = record(&tdc(&["segment", "--input", p(&file), "--max-segments", "1", "--tau", "1.0"]));
    assert_eq!(cap["scenes"], 1);
    let out = dir.path().join("c.tdcs");
    let comp = record(&tdc(&[
        "compress", "--input", p(&file), "--output", p(&out), "--k", "4", "--query-type", "learned",
        "--window", "4", "--no-text-conditioning",
    ]));
    assert_eq!(comp["dynamic"].as_u64().unwrap() % 4, 0);
}

#[test]
fn lvcot_with_script_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("d.tdcf");
    record(&tdc(&["gen", "--output", p(&file), "--frames", "30", "--visual-tokens", "20", "--audio-tokens", "5"]));
    let script = dir.path().join("s.json");
    std::fs::write(&script, r#"["A", "B", "C", "D"]"#).unwrap();
    let rec = record(&tdc(&["lvcot", "--input", p(&file), "--text", "why?", "--script", p(&script), "--k", "4"]));
    assert_eq!(rec["final_answer"], "D");
    assert_eq!(rec["answerer_calls"], 4);
    assert!(rec["final_prompt"].as_str().unwrap().starts_with("[0s-10s]: A\n[10s-20s]: B\n[20s-30s]: C\n"));

    let echo = record(&tdc(&["lvcot", "--input", p(&file), "--text", "why?", "--answerer", "echo", "--segments", "2", "--k", "4"]));
    assert!(echo["final_answer"].as_str().unwrap().starts_with("echo:"));

    std::fs::write(&script, r#"["only one"]"#).unwrap();
    let short = tdc(&["lvcot", "--input", p(&file), "--text", "why?", "--script", p(&script), "--k", "4"]);
    assert_eq!(short.code, EXIT_ORCHESTRATION);
    assert!(short.stdout.is_empty());
    assert!(short.stderr.contains("segment 2"), "{}", short.stderr);
}

#[test]
fn gradcheck_passes() {
    let rec = record(&tdc(&["gradcheck", "--seed", "1"]));
    assert!(rec["max_rel_error"].as_f64().unwrap() <= 1e-5);
    assert_eq!(rec["passed"], true);
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tdc(&["budget", "--bogus"]).code, EXIT_USAGE);
    assert_eq!(tdc(&["frobnicate"]).code, EXIT_USAGE);
    assert_eq!(tdc(&["--help"]).code, EXIT_OK);

    let missing = dir.path().join("missing.tdcf");
    let out = tdc(&["budget", "--input", p(&missing)]);
    assert_eq!(out.code, EXIT_IO);
    assert!(out.stdout.is_empty());

    let file = dir.path().join("e.tdcf");
    record(&tdc(&["gen", "--output", p(&file), "--frames", "4"]));
    let bytes = std::fs::read(&file).unwrap();
    std::fs::write(&file, &bytes[..bytes.len() - 3]).unwrap();
    let out = tdc(&["segment", "--input", p(&file)]);
    assert_eq!(out.code, EXIT_IO);
    assert!(out.stderr.contains("truncated"), "{}", out.stderr);

    let bad = dir.path().join("f.tdcf");
    assert_eq!(tdc(&["gen", "--output", p(&bad), "--frames", "10", "--boundaries", "12"]).code, EXIT_USAGE);
    assert_eq!(tdc(&["gen", "--output", p(&bad), "--dims", "1,2"]).code, EXIT_USAGE);
    record(&tdc(&["gen", "--output", p(&bad), "--frames", "10"]));
    assert_eq!(tdc(&["segment", "--input", p(&bad), "--tau", "2"]).code, EXIT_USAGE);
    assert_eq!(tdc(&["lvcot", "--input", p(&bad), "--text", "q"]).code, EXIT_USAGE);
    assert_eq!(tdc(&["lvcot", "--input", p(&bad), "--text", "q", "--segments", "11", "--answerer", "echo"]).code, EXIT_USAGE);
}

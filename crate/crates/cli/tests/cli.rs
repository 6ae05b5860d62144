use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn go3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_go3d")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("go3d-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn scene_file(name: &str, seed: &str) -> String {
    let p = scratch(name);
    let o = go3d(&["synth", "--objects", "7", "--seed", seed, "--out", p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    p.to_str().unwrap().to_string()
}

#[test]
fn build_graph_lists_typed_edges() {
    let s = scene_file("graph.json", "4");
    let o = go3d(&["build-graph", &s]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["nodes"], 7);
    let edges = v["edges"].as_array().unwrap();
    let pairs = edges.iter().filter(|e| e[2] == "TargetPair").count();
    assert_eq!(pairs, 1);
}

#[test]
fn near_lt_changes_the_graph() {
    let s = scene_file("near.json", "9");
    let gt = stdout(&go3d(&["build-graph", &s]));
    let lt = stdout(&go3d(&["build-graph", &s, "--near-lt"]));
    let cfg = scratch("near.cfg");
    fs::write(&cfg, "near = lt\n").unwrap();
    let via_config = stdout(&go3d(&["--config", cfg.to_str().unwrap(), "build-graph", &s]));
    assert_ne!(gt, lt);
    assert_eq!(lt, via_config);
}

#[test]
fn map_direction_three_and_two_dimensions() {
    let o = go3d(&["map-direction", "--subject", "0.9,0.1,0.5", "--object", "0.1,0.5,0.5"]);
    assert_eq!(stdout(&o).trim(), "front down");
    let o = go3d(&["map-direction", "--subject", "0.5,0.5,0.5", "--object", "0.5,0.5,0.5"]);
    assert_eq!(stdout(&o).trim(), "next to");
    let o = go3d(&["map-direction", "--subject", "0.1,0.9", "--object", "0.5,0.5"]);
    assert_eq!(stdout(&o).trim(), "up left");
    let o = go3d(&["map-direction", "--subject", "0.1,0.9", "--object", "0.5,0.5,0.5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn tau_flag_overrides_config() {
    let cfg = scratch("tau.cfg");
    fs::write(&cfg, "tau = 0.4\n").unwrap();
    let c = cfg.to_str().unwrap();
    let args = ["--config", c, "map-direction", "--subject", "0.9,0.5,0.5", "--object", "0.6,0.5,0.5"];
    assert_eq!(stdout(&go3d(&args)).trim(), "next to");
    let mut with_flag = args.to_vec();
    with_flag.extend(["--tau", "0.2"]);
    assert_eq!(stdout(&go3d(&with_flag)).trim(), "front");
}

#[test]
fn sample_and_prompts_are_seeded() {
    let s = scene_file("sample.json", "2");
    let a = go3d(&["gen-prompts", &s, "--k", "3", "--seed", "5"]);
    let b = go3d(&["gen-prompts", &s, "--k", "3", "--seed", "5"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
    let lines: Vec<_> = stdout(&a).lines().map(String::from).collect();
    assert!(!lines.is_empty() && lines.len() <= 3);
    for l in &lines {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert!(v["prompt"].as_str().unwrap().starts_with("<TGT> "));
    }
    let t = go3d(&["sample", &s, "--train", "--temperature", "0.3"]);
    assert_eq!(t.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&t)).unwrap();
    assert_eq!(v["picks"].as_array().unwrap().len(), 2);
}

#[test]
fn params_round_trip_through_files() {
    let s = scene_file("params.json", "6");
    let p = scratch("params.bundle.json");
    let o = go3d(&["init-params", "--vis-dim", "8", "--seed", "3", "--out", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let from_file = stdout(&go3d(&["encode", &s, "--params", p.to_str().unwrap()]));
    let from_seed = stdout(&go3d(&["encode", &s, "--seed", "3"]));
    assert_eq!(from_file, from_seed);

    let wrong = scratch("params.wide.json");
    go3d(&["init-params", "--vis-dim", "5", "--out", wrong.to_str().unwrap()]);
    let o = go3d(&["encode", &s, "--params", wrong.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gen_pseudo_reads_triplets_and_synonyms() {
    let s = scene_file("pseudo.json", "8");
    let scene: serde_json::Value = serde_json::from_str(&fs::read_to_string(&s).unwrap()).unwrap();
    let tag = |i: usize| scene["objects"][i]["tag"].as_str().unwrap().to_string();
    let trips = scratch("trips.json");
    fs::write(&trips, serde_json::json!([[tag(0), "near", tag(1)], [tag(2), "near", tag(3)]]).to_string()).unwrap();
    let syn = scratch("syn.json");
    fs::write(&syn, r#"{"near": ["close to"]}"#).unwrap();
    let o = go3d(&["gen-pseudo", &s, "--triplets", trips.to_str().unwrap(), "--synonyms", syn.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!stdout(&o).trim().is_empty());
    for l in stdout(&o).lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert!(v["input"].is_string() && v["output"].is_string());
    }
}

#[test]
fn eval_diversity_table() {
    let c = scratch("cands.txt");
    fs::write(&c, "the lamp is near the bed\n\nthe lamp is near the bed\n").unwrap();
    let o = go3d(&["eval-diversity", c.to_str().unwrap(), "--references", c.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let rows: Vec<Vec<&str>> = out.lines().map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows[0], ["metric", "value", "samples"]);
    // identical candidates repeat each other perfectly
    assert_eq!(rows[1], ["mBLEU-4", "1.0000", "2"]);
    assert_eq!(rows[2], ["BLEU-4@2", "1.0000", "2"]);

    let empty = scratch("empty.txt");
    fs::write(&empty, "\n").unwrap();
    assert_eq!(go3d(&["eval-diversity", empty.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn grad_check_exit_codes() {
    let ok = go3d(&["grad-check", "--seed", "1"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&ok)).unwrap();
    assert!(v["max_rel_error"].as_f64().unwrap() < 1e-5);
    assert_eq!(go3d(&["grad-check", "--tol", "1e-15"]).status.code(), Some(2));
}

#[test]
fn train_toy_reduces_loss() {
    let o = go3d(&["train-toy", "--scenes", "40", "--steps", "60"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["final_loss"].as_f64().unwrap() < v["initial_loss"].as_f64().unwrap());
    assert_eq!(v["steps"], 60);
}

#[test]
fn validation_failures_exit_one() {
    let bad = scratch("bad.cfg");
    fs::write(&bad, "nonsense = 3\n").unwrap();
    assert_eq!(go3d(&["--config", bad.to_str().unwrap(), "synth"]).status.code(), Some(1));
    fs::write(&bad, "confidence = 1.5\n").unwrap();
    assert_eq!(go3d(&["--config", bad.to_str().unwrap(), "synth"]).status.code(), Some(1));
    fs::write(&bad, "no equals sign\n").unwrap();
    assert_eq!(go3d(&["--config", bad.to_str().unwrap(), "synth"]).status.code(), Some(1));
    assert_eq!(go3d(&["build-graph", "/nonexistent/scene.json"]).status.code(), Some(1));
    let junk = scratch("junk.json");
    fs::write(&junk, "{\"objects\": 3}").unwrap();
    assert_eq!(go3d(&["build-graph", junk.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(go3d(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(go3d(&["--help"]).status.code(), Some(0));
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn rvr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rvr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_json(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn small_config() -> Value {
    json!({
        "world": {"variant": "linear_interaction", "N": 5, "seed": 11},
        "sampling": {"k": 2, "n_per_domain": 60, "unseen_points": 80},
        "model": {"preset": "synthetic"},
        "train": {"epochs": 2, "batch_size": 16, "lr": 0.001, "lambda": 0.1,
                  "disc_steps": 1, "seed": 3, "validation_fraction": 0.2},
        "eval": {"seeds": [0]},
        "outputs": {"directory": "unused"}
    })
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn gen_world_is_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_json(tmp.path(), "run.json", &small_config());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_ok(&rvr(&["gen-world", "--config", p(&cfg), "--out", p(&a)]));
    assert_ok(&rvr(&["gen-world", "--config", p(&cfg), "--out", p(&b)]));
    let (ca, cb) = (dir_contents(&a), dir_contents(&b));
    let names: Vec<&str> = ca.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "domain_0.csv",
            "domain_1.csv",
            "manifest.json",
            "unseen.csv",
            "world.json"
        ]
    );
    assert_eq!(ca, cb);

    let manifest = read_json(&a.join("manifest.json"));
    assert_eq!(manifest["command"], "gen-world");
    assert_eq!(manifest["seeds"]["world"], 11);
    assert_eq!(manifest["config"], small_config());
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(
        manifest["artifacts"],
        json!(["world.json", "domain_0.csv", "domain_1.csv", "unseen.csv"])
    );
    let unseen = std::fs::read_to_string(a.join("unseen.csv")).unwrap();
    assert_eq!(unseen.lines().count(), 81);
    assert!(unseen.starts_with("domain_id,y,x0,"));
}

#[test]
fn train_then_eval_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_json(tmp.path(), "run.json", &small_config());
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    let report = tmp.path().join("report");
    assert_ok(&rvr(&["gen-world", "--config", p(&cfg), "--out", p(&data)]));
    assert_ok(&rvr(&[
        "train",
        "--config",
        p(&cfg),
        "--data",
        p(&data),
        "--out",
        p(&model),
    ]));

    let trace = std::fs::read_to_string(model.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 3);
    let manifest = read_json(&model.join("manifest.json"));
    assert_eq!(manifest["seeds"]["train"], 3);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["artifacts"], json!(["bundle.json", "trace.csv"]));

    let bundle = model.join("bundle.json");
    assert_ok(&rvr(&[
        "eval",
        "--bundle",
        p(&bundle),
        "--data",
        p(&data),
        "--out",
        p(&report),
    ]));
    let r = read_json(&report.join("eval_report.json"));
    let acc = r["unseen_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(r["unseen_points"], 80);
    assert_eq!(r["seen_accuracies"].as_array().unwrap().len(), 2);
    assert!(r["adv_term"].is_number());

    // A single-domain CSV works too and gives the same unseen accuracy.
    let single = tmp.path().join("single");
    let unseen = data.join("unseen.csv");
    assert_ok(&rvr(&[
        "eval",
        "--bundle",
        p(&bundle),
        "--data",
        p(&unseen),
        "--out",
        p(&single),
    ]));
    let s = read_json(&single.join("eval_report.json"));
    assert_eq!(s["unseen_accuracy"], r["unseen_accuracy"]);
    assert_eq!(s["adv_term"], Value::Null);

    // Retraining from the same inputs reproduces the bundle exactly.
    let again = tmp.path().join("again");
    assert_ok(&rvr(&[
        "train",
        "--config",
        p(&cfg),
        "--data",
        p(&data),
        "--out",
        p(&again),
    ]));
    assert_eq!(dir_contents(&model), dir_contents(&again));
}

#[test]
fn train_with_missing_data_exits_3() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_json(tmp.path(), "run.json", &small_config());
    let missing = tmp.path().join("nowhere.csv");
    let out = rvr(&[
        "train",
        "--config",
        p(&cfg),
        "--data",
        p(&missing),
        "--out",
        p(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.csv"));
}

#[test]
fn malformed_bundle_exits_3() {
    let tmp = TempDir::new().unwrap();
    let bundle = tmp.path().join("bundle.json");
    std::fs::write(&bundle, "{\"not\": \"a bundle\"}").unwrap();
    let data = tmp.path().join("d.csv");
    std::fs::write(&data, "domain_id,y,x0\n0,1,0.5\n").unwrap();
    let out = rvr(&[
        "eval",
        "--bundle",
        p(&bundle),
        "--data",
        p(&data),
        "--out",
        p(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_errors_exit_2_and_name_the_field() {
    let tmp = TempDir::new().unwrap();
    let mut doc = small_config();
    doc["train"]["learning_rate"] = json!(0.1);
    let cfg = write_json(tmp.path(), "bad.json", &doc);
    let out_dir = tmp.path().join("o");
    let out = rvr(&["gen-world", "--config", p(&cfg), "--out", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
    assert!(!out_dir.exists(), "nothing is written on a config error");

    let mut doc = small_config();
    doc["train"]["epochs"] = json!(0);
    let cfg = write_json(tmp.path(), "zero.json", &doc);
    let out = rvr(&[
        "train",
        "--config",
        p(&cfg),
        "--data",
        p(tmp.path()),
        "--out",
        p(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochs"));

    let out = rvr(&["gen-world", "--config", p(&tmp.path().join("absent.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(rvr(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn out_defaults_to_outputs_directory() {
    let tmp = TempDir::new().unwrap();
    let mut doc = small_config();
    let target = tmp.path().join("from-config");
    doc["outputs"]["directory"] = json!(p(&target));
    let cfg = write_json(tmp.path(), "run.json", &doc);
    assert_ok(&rvr(&["gen-world", "--config", p(&cfg)]));
    assert!(target.join("world.json").exists());
}

fn bound_inputs(k: usize, high_prob_count: usize) -> Value {
    json!({
        "k": k,
        "n_domains": 2,
        "sample_sizes": vec![100_000; k],
        "lambda": 0.1,
        "t1": 0.05,
        "t2": 0.01,
        "vc_predictor": 10.0,
        "vc_pairwise": 5.0,
        "density_bound": 1.0,
        "radius": 3.0,
        "high_prob_count": high_prob_count,
        "boundary_cells": 4.0,
        "p": 2
    })
}

#[test]
fn theory_bounds_reports_m_k() {
    let tmp = TempDir::new().unwrap();
    let inputs = write_json(tmp.path(), "bounds.json", &bound_inputs(256, 2));
    let out = tmp.path().join("o");
    assert_ok(&rvr(&[
        "theory-bounds",
        "--inputs",
        p(&inputs),
        "--out",
        p(&out),
    ]));
    let text = std::fs::read_to_string(out.join("bounds.json")).unwrap();
    assert!(text.contains("\"m_k\": 51"), "{text}");
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["details"]["kind"], "finite_k");

    let worst = write_json(
        tmp.path(),
        "worst.json",
        &json!({"p_l": 0.5, "delta": 0.1, "beta_hat": 0.05, "t": 0.05, "vc_term": 0.1}),
    );
    let out2 = tmp.path().join("w");
    assert_ok(&rvr(&[
        "theory-bounds",
        "--inputs",
        p(&worst),
        "--out",
        p(&out2),
    ]));
    let r = read_json(&out2.join("bounds.json"));
    assert_eq!(r["bound"], json!(0.9));
}

#[test]
fn infeasible_bound_exits_4() {
    let tmp = TempDir::new().unwrap();
    let mut doc = bound_inputs(4, 10);
    doc["n_domains"] = json!(10);
    let inputs = write_json(tmp.path(), "b.json", &doc);
    let out = rvr(&[
        "theory-bounds",
        "--inputs",
        p(&inputs),
        "--out",
        p(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn theory_invariance_and_limit_run() {
    let tmp = TempDir::new().unwrap();
    let inv = write_json(
        tmp.path(),
        "inv.json",
        &json!({
            "basis": [{"kind": "coordinate", "index": 0}, {"kind": "coordinate", "index": 1}],
            "coef": [[1.0, 0.0], [0.0, 1.0]],
            "domains": [
                {"kind": "gaussian", "mean": [0.0, 0.0], "std": 1.0},
                {"kind": "gaussian", "mean": [0.0, 0.0], "std": 1.0}
            ],
            "head_weight": [[1.0, 0.0], [0.0, 1.0]],
            "head_bias": [0.0, 0.0],
            "epsilon": 0.1,
            "samples": 400,
            "seed": 5
        }),
    );
    let out = tmp.path().join("inv");
    assert_ok(&rvr(&[
        "theory-invariance",
        "--inputs",
        p(&inv),
        "--out",
        p(&out),
    ]));
    let r = read_json(&out.join("invariance.json"));
    assert_eq!(r["sides_agree"], true);
    assert_eq!(r["samples_per_domain"], 400);

    let lim = write_json(
        tmp.path(),
        "lim.json",
        &json!({
            "world": {
                "bases": [
                    {"kind": "gaussian", "mean": [-1.0], "std": 1.0},
                    {"kind": "gaussian", "mean": [1.0], "std": 1.0}
                ],
                "mu": [0.5, 0.5]
            },
            "limit": {"k_schedule": [4, 16], "seeds": [0, 1], "oracle_cells": 128, "fit_samples": 0}
        }),
    );
    let out = tmp.path().join("lim");
    assert_ok(&rvr(&[
        "theory-limit",
        "--config",
        p(&lim),
        "--out",
        p(&out),
    ]));
    let csv = std::fs::read_to_string(out.join("limit.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "k,constructive_value,trained_value,oracle_value,seed"
    );
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(
        read_json(&out.join("limit_gaps.json"))
            .as_array()
            .unwrap()
            .len(),
        2
    );
}

#[test]
fn kgrowth_writes_csv_and_summary() {
    let tmp = TempDir::new().unwrap();
    let mut doc = small_config();
    doc["sampling"]["k"] = json!([1, 2]);
    doc["eval"]["baseline"] = json!({"epochs": 20});
    let cfg = write_json(tmp.path(), "kg.json", &doc);
    let out = tmp.path().join("kg");
    assert_ok(&rvr(&["kgrowth", "--config", p(&cfg), "--out", p(&out)]));
    let csv = std::fs::read_to_string(out.join("kgrowth.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "k,seed,rvr_accuracy,logistic_accuracy"
    );
    assert_eq!(csv.lines().count(), 3);
    let summary = read_json(&out.join("kgrowth_summary.json"));
    assert_eq!(summary["rows"].as_array().unwrap().len(), 2);

    doc["sampling"]["k"] = json!([2, 1]);
    let bad = write_json(tmp.path(), "kg_bad.json", &doc);
    let out = rvr(&[
        "kgrowth",
        "--config",
        p(&bad),
        "--out",
        p(&tmp.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

fn idx(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut bytes = magic.to_be_bytes().to_vec();
    for d in dims {
        bytes.extend(d.to_be_bytes());
    }
    bytes.extend_from_slice(payload);
    bytes
}

#[test]
fn mnist_colorize_from_idx_files() {
    let tmp = TempDir::new().unwrap();
    let n = 6u32;
    let pixels: Vec<u8> = (0..n as usize * 784).map(|i| (i % 256) as u8).collect();
    let images = tmp.path().join("images-idx3-ubyte");
    let labels = tmp.path().join("labels-idx1-ubyte");
    std::fs::write(&images, idx(0x0803, &[n, 28, 28], &pixels)).unwrap();
    std::fs::write(&labels, idx(0x0801, &[n], &[0, 1, 2, 5, 7, 9])).unwrap();

    let out = tmp.path().join("colored");
    assert_ok(&rvr(&[
        "mnist-colorize",
        "--images",
        p(&images),
        "--labels",
        p(&labels),
        "--setting",
        "two-domain-1",
        "--domain-id",
        "1",
        "--count",
        "4",
        "--out",
        p(&out),
    ]));
    let csv = std::fs::read_to_string(out.join("colored.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0].split(',').count(), 2 + 3 * 784);
    assert!(lines[1..].iter().all(|l| l.starts_with("1,")));
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["config"]["setting"]["shape_correlation"], 1.0);

    // Truncated image file → data error.
    std::fs::write(&images, idx(0x0803, &[n, 28, 28], &pixels[..100])).unwrap();
    let bad = rvr(&[
        "mnist-colorize",
        "--images",
        p(&images),
        "--labels",
        p(&labels),
        "--setting",
        "study-1",
        "--out",
        p(&tmp.path().join("x")),
    ]);
    assert_eq!(bad.status.code(), Some(3));
}

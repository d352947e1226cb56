use std::path::Path;
use std::process::{Command, Output};

fn dsvb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsvb"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env("DSVB_THREADS", "1")
        .output()
        .expect("run dsvb")
}

fn ok(args: &[&str]) -> Output {
    let out = dsvb(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_rows(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

const SMALL: &[&str] = &[
    "--seeds", "1", "--seq-len", "20", "--stride", "10", "--batch-size", "4", "--hidden-size", "8",
    "--layer-width", "8",
];

#[test]
fn pipeline_writes_expected_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (mode, seed) in [("tip", "0"), ("surface", "1")] {
        let out = d.join(mode);
        ok(&["synth", "--mode", mode, "--seed", seed, "--out", s(&out), "--train-len", "120", "--test-len", "60"]);
        for f in ["train.csv", "test.csv", "synth.json", "manifest.json"] {
            assert!(out.join(f).exists(), "{mode}/{f}");
        }
    }
    let (src_train, tgt_train) = (d.join("tip/train.csv"), d.join("surface/train.csv"));
    let (src_test, tgt_test) = (d.join("tip/test.csv"), d.join("surface/test.csv"));

    let run_dsvb = d.join("run_dsvb");
    let mut args = vec!["train", "--source", s(&src_train), "--target", s(&tgt_train), "--out", s(&run_dsvb)];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--epochs", "1"]);
    ok(&args);
    let run_base = d.join("run_gru");
    let mut args = vec!["train", "--method", "baseline", "--source", s(&src_train), "--out", s(&run_base)];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--epochs", "1"]);
    ok(&args);
    for run in [&run_dsvb, &run_base] {
        for f in ["config.json", "manifest.json", "seed-0/checkpoint.bin", "seed-0/history.jsonl"] {
            assert!(run.join(f).exists(), "{}/{f}", run.display());
        }
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(run_dsvb.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["datasets"].as_array().unwrap().len(), 2);

    let eval = d.join("eval");
    let out = ok(&[
        "eval", "--checkpoints", s(&run_dsvb), s(&run_base), "--test-source", s(&src_test), "--test-target",
        s(&tgt_test), "--out", s(&eval), "--seq-len", "20",
    ]);
    let printed = String::from_utf8(out.stdout).unwrap();
    assert!(printed.contains("DSVB-GRU") && printed.contains("GRU"));
    let (_, rows) = read_rows(&eval.join("rmse_table.csv"));
    assert_eq!(rows.len(), 2);

    let ck = run_dsvb.join("seed-0/checkpoint.bin");
    let est = d.join("est.csv");
    ok(&["infer", "--checkpoint", s(&ck), "--input", s(&tgt_test), "--out", s(&est), "--seq-len", "20"]);
    let (header, inferred) = read_rows(&est);
    assert_eq!(header.len(), 1 + 22 + 22);
    assert!(header.last().unwrap().ends_with("_std"));
    assert_eq!(inferred.len(), 60);

    let lat = d.join("latents.csv");
    ok(&[
        "export-latents", "--checkpoint", s(&ck), "--source", s(&src_test), "--target", s(&tgt_test), "--out",
        s(&lat), "--seq-len", "20",
    ]);
    let (header, latents) = read_rows(&lat);
    assert_eq!(header.len(), 23);
    let target: Vec<_> = latents.iter().filter(|r| r[22] == "target").collect();
    assert_eq!(target.len(), 60);
    for (a, b) in target.iter().zip(&inferred) {
        assert_eq!(a[..22], b[1..23]);
    }

    let base_ck = run_base.join("seed-0/checkpoint.bin");
    let est = d.join("est_base.csv");
    ok(&["infer", "--checkpoint", s(&base_ck), "--input", s(&tgt_test), "--out", s(&est), "--seq-len", "20"]);
    assert_eq!(read_rows(&est).0.len(), 23);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(dsvb(&["train"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = dsvb(&["train", "--source", s(&missing), "--target", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));

    let data = dir.path().join("tip");
    ok(&["synth", "--mode", "tip", "--out", s(&data), "--train-len", "60", "--test-len", "30"]);
    let train = data.join("train.csv");
    let out = dsvb(&["train", "--source", s(&train), "--out", s(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (mode, seed) in [("tip", "0"), ("surface", "1")] {
        ok(&["synth", "--mode", mode, "--seed", seed, "--out", s(&d.join(mode)), "--train-len", "120", "--test-len", "30"]);
    }
    let (run, src, tgt) = (d.join("run"), d.join("tip/train.csv"), d.join("surface/train.csv"));
    let mut args = vec!["train", "--source", s(&src), "--target", s(&tgt), "--out", s(&run)];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--epochs", "3", "--lr", "1e200"]);
    let out = dsvb(&args);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_latentforge"));
    c.env_remove("LATENTFORGE_ORACLE");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn end_to_end_toy_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(&["discover", "--per-class", "200", "--out", p(root)]);
    ok(&["generate", "--bank", p(&root.join("bank.json")), "--n-identities", "8", "--out", p(&root.join("d"))]);
    for f in ["manifest.json", "manifest.csv", "latents.lvec", "embeddings.lvec"] {
        assert!(root.join("d").join(f).is_file(), "{f}");
    }
    let out = ok(&["benchmark", "--manifest", p(&root.join("d/manifest.json")), "--out", p(root)]);
    for proto in ["U:", "E:", "P:"] {
        assert!(out.contains(proto), "{out}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(root.join("benchmark.json")).unwrap()).unwrap();
    assert_eq!(report["protocols"].as_array().unwrap().len(), 3);
    assert_eq!(report["protocols"][2]["genuine_count"], 8 * 7);
    assert_eq!(report["protocols"][2]["impostor_count"], 8 * 7 * 7);

    // compare against itself as the "real" data: MGS 0, SEP 1
    let syn = root.join("syn");
    ok(&["benchmark", "--manifest", p(&root.join("d")), "--real", p(&root.join("benchmark.json")), "--out", p(&syn)]);
    let text = std::fs::read_to_string(syn.join("benchmark.json")).unwrap();
    let r: serde_json::Value = serde_json::from_str(&text).unwrap();
    for s in r["similarity"].as_array().unwrap() {
        assert_eq!(s["mgs"], 0.0);
        assert_eq!(s["sep"], 1.0);
    }

    let table = ok(&["report", p(&root.join("benchmark.json")), "--out", p(root)]);
    assert!(table.contains("| toy | synthetic |"));
    assert!(root.join("table.json").is_file() && root.join("table.md").is_file());

    let scaling = ok(&["scaling", "--bank", p(&root.join("bank.json")), "--ict", "0,0.1", "--checkpoints", "2,4,6,8", "--out", p(root)]);
    assert!(scaling.contains("ict 0: 2:2 4:4 6:6 8:8"), "{scaling}");
}

#[test]
fn generate_against_external_oracle_keeps_ict() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let exec = format!("exec:{} serve", env!("CARGO_BIN_EXE_latentforge"));
    ok(&["discover", "--per-class", "100", "--oracle", &exec, "--out", p(root)]);
    let local = tempfile::tempdir().unwrap();
    ok(&["discover", "--per-class", "100", "--out", p(local.path())]);
    // the subprocess serves the same toy world, so the bank is identical
    assert_eq!(std::fs::read(root.join("bank.json")).unwrap(), std::fs::read(local.path().join("bank.json")).unwrap());

    let bank = root.join("bank.json");
    let data = root.join("ext");
    let out = bin()
        .args(["generate", "--bank", p(&bank), "--n-identities", "20", "--ict", "0.5", "--out", p(&data)])
        .env("LATENTFORGE_ORACLE", &exec)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    for id in m["header"]["identities"].as_array().unwrap().iter().skip(1) {
        assert!(id["closest_distance"].as_f64().unwrap() > 0.5);
    }
}

#[test]
fn single_identity_benchmark_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(&["discover", "--per-class", "100", "--out", p(root)]);
    ok(&["generate", "--bank", p(&root.join("bank.json")), "--n-identities", "1", "--out", p(root)]);
    let out = run(&["benchmark", "--manifest", p(root), "--out", p(root)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty impostor set"));

    let out = run(&["benchmark", "--manifest", p(root), "--out", p(root), "--json-errors"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["exit_code"], 2);
    assert!(err["error"].as_str().unwrap().contains("empty impostor set"));
}

#[test]
fn exhausted_attempts_leave_a_partial_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(&["discover", "--per-class", "100", "--out", p(root)]);
    let out = run(&["generate", "--bank", p(&root.join("bank.json")), "--ict", "1.99", "--max-attempts", "3", "--n-identities", "5", "--out", p(root)]);
    assert_eq!(out.status.code(), Some(2));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(root.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["header"]["complete"], false);
    assert!(m["header"]["failure"].as_str().unwrap().contains("attempts"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["benchmark"]).status.code(), Some(1));
    assert_eq!(run(&["--oracle", "gpu", "discover"]).status.code(), Some(1));
    let out = run(&["benchmark", "--json-errors"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "usage");
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn missing_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["generate", "--bank", p(&dir.path().join("nope.json")), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[toy]\nlatent_dims = 3\n").unwrap();
    assert_eq!(run(&["discover", "--config", p(&cfg), "--out", p(dir.path())]).status.code(), Some(2));
}

#[test]
fn config_file_sets_toy_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[toy]\nlatent_dim = 12\n[discovery]\nper_class = 50\n").unwrap();
    ok(&["discover", "--config", p(&cfg), "--out", p(dir.path())]);
    let bank: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("bank.json")).unwrap()).unwrap();
    assert_eq!(bank["latent_dim"], 12);
}

#[test]
fn serve_answers_the_line_protocol() {
    use std::io::Write;
    let mut child = bin().arg("serve").stdin(std::process::Stdio::piped()).stdout(std::process::Stdio::piped()).spawn().unwrap();
    child.stdin.take().unwrap().write_all(b"{\"id\":1,\"op\":\"info\"}\nnot json\n").unwrap();
    let out = child.wait_with_output().unwrap();
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["data"]["latent_dim"], 32);
    assert_eq!(lines[1]["ok"], false);
}

use std::path::Path;
use std::process::{Command, Output};

use sociolex::pipeline::{sha256_hex, Manifest};

const SYNTH: &str = r#"
seed = 5

[corpus]
english_top_n = 300
english_min_overlap = 10

[vocab]
size = 1000

[synth]
n_authors = 200
tokens_per_author = 200
background_vocab = 800
marker_strength = 3.0
rho = 0.5
"#;

fn sociolex(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sociolex"));
    cmd.args(args)
        .arg("--output-dir")
        .arg(out)
        .env("RUST_LOG", "warn")
        .env_remove("SOCIOLEX_OUTPUT_DIR");
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_subcommand_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = sociolex(&["frobnicate"], None, dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[classifier]\nfolds = 1\n").unwrap();
    let o = sociolex(&["classify"], Some(&cfg), dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("classifier.folds"), "{}", stderr(&o));

    std::fs::write(&cfg, "[markers]\nalpah = 0.1\n").unwrap();
    let o = sociolex(&["markers"], Some(&cfg), dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("markers"), "{}", stderr(&o));
}

#[test]
fn missing_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = sociolex(&["ingest"], None, dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("paths.messages"), "{}", stderr(&o));
}

#[test]
fn staged_commands_share_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("out");
    let synth_cfg = dir.path().join("synth.toml");
    std::fs::write(&synth_cfg, SYNTH).unwrap();
    let o = sociolex(&["synth"], Some(&synth_cfg), &data);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["messages.jsonl", "names.csv", "ground_truth.json"] {
        assert!(data.join(f).exists(), "{f}");
    }

    // Relative paths resolve against the config file.
    let run_cfg = dir.path().join("run.toml");
    std::fs::write(
        &run_cfg,
        format!("{SYNTH}\n[paths]\nmessages = \"data/messages.jsonl\"\nnames = \"data/names.csv\"\n"),
    )
    .unwrap();
    for cmd in ["ingest", "markers", "network"] {
        let o = sociolex(&[cmd], Some(&run_cfg), &out);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }

    let manifest = Manifest::read(&out).unwrap();
    assert_eq!(
        manifest.runs.keys().map(String::as_str).collect::<Vec<_>>(),
        ["ingest", "markers", "network"]
    );
    let messages_sha = sha256_hex(&std::fs::read(data.join("messages.jsonl")).unwrap());
    for rec in manifest.runs.values() {
        assert_eq!(rec.seed, 5);
        assert_eq!(rec.inputs.get("messages"), Some(&messages_sha));
    }
    for name in ["authors.csv", "graph_edges.csv", "markers.csv", "homophily_stats.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }

    // Every artifact on disk is recorded with its current digest.
    for entry in std::fs::read_dir(&out).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap().to_str().unwrap().to_string();
        if name == Manifest::FILE {
            continue;
        }
        let sha = sha256_hex(&std::fs::read(&p).unwrap());
        let recorded = manifest
            .runs
            .values()
            .filter_map(|r| r.artifacts.get(&name))
            .next_back();
        assert_eq!(recorded, Some(&sha), "{name}");
    }

    // A different seed changes the recorded config digest.
    let before = manifest.runs["ingest"].config_sha256.clone();
    let o = sociolex(&["ingest", "--seed", "6"], Some(&run_cfg), &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let after = Manifest::read(&out).unwrap();
    assert_eq!(after.runs["ingest"].seed, 6);
    assert_ne!(after.runs["ingest"].config_sha256, before);
    assert_eq!(after.runs["markers"], manifest.runs["markers"]);
}

use std::path::Path;
use std::process::{Command, Output};

use interlacement::graph::{build_window, Lattice, Vertex};
use interlacement::potential::equilibrium;
use interlacement_cli::RunConfig;
use tempfile::TempDir;

fn interlace(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_interlace"))
        .args(args)
        .current_dir(dir)
        .env_remove("INTERLACE_OUTPUT_DIR")
        .output()
        .expect("run interlace")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = interlace(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}

fn json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_slice(&read(dir, name)).unwrap()
}

#[test]
fn green_at_radius_zero() {
    let tmp = TempDir::new().unwrap();
    ok(&["exact", "--gen", "z3", "--radius", "0", "--green", "--out", "r"], tmp.path());
    let text = String::from_utf8(read(&tmp.path().join("r"), "green.csv")).unwrap();
    assert_eq!(text, "x,y,g\n\"(0,0,0)\",\"(0,0,0)\",0.16666666666666666\n");
}

#[test]
fn capacity_matches_library() {
    let tmp = TempDir::new().unwrap();
    ok(&["exact", "--radius", "4", "--cap", "--K", "origin", "--out", "c"], tmp.path());
    let j = json(&tmp.path().join("c"), "capacity.json");
    let w = build_window(&Lattice::new(3), &Vertex::new([0, 0, 0]), 4).unwrap();
    let cap = equilibrium(&[0], &w).unwrap().capacity;
    assert_eq!(j["capacity"].to_string(), serde_json::Value::from(cap).to_string());
}

#[test]
fn resolvent_check_passes() {
    let tmp = TempDir::new().unwrap();
    ok(
        &["exact", "--resolvent-check", "--lambda", "10", "--V", "origin:0.1", "--radius", "3", "--out", "r"],
        tmp.path(),
    );
    let report = json(&tmp.path().join("r"), "resolvent.json");
    assert_eq!(report["passed"], true);
    for check in report["checks"].as_array().unwrap() {
        let diff = check["value"].as_f64().unwrap() - check["expected"].as_f64().unwrap();
        assert!(diff.abs() < 1e-9);
    }
}

#[test]
fn samples_are_reproducible_across_workers() {
    let tmp = TempDir::new().unwrap();
    for sampler in ["collapse", "excursion", "hitting", "gff"] {
        let mut outputs = Vec::new();
        for (i, workers) in ["1", "3", "1"].iter().enumerate() {
            let out = format!("{sampler}-{i}");
            ok(
                &[
                    "sample", "--sampler", sampler, "--radius", "2", "--u", "0.7", "--n", "300",
                    "--seed", "17", "--K", "origin", "--K", "1,0,0", "--workers", workers, "--out", &out,
                ],
                tmp.path(),
            );
            let dir = tmp.path().join(&out);
            outputs.push((read(&dir, "samples.csv"), read(&dir, "samples.json")));
        }
        assert!(outputs.iter().all(|o| *o == outputs[0]), "{sampler}");
    }
}

#[test]
fn zero_level_gives_zero_occupation() {
    let tmp = TempDir::new().unwrap();
    for sampler in ["collapse", "excursion", "hitting"] {
        ok(&["sample", "--sampler", sampler, "--u", "0", "--n", "20", "--radius", "2", "--out", sampler], tmp.path());
        let mut reader = csv::Reader::from_path(tmp.path().join(sampler).join("samples.csv")).unwrap();
        let mut rows = 0;
        for rec in reader.records() {
            assert_eq!(&rec.unwrap()[2], "0");
            rows += 1;
        }
        assert_eq!(rows, 20 * 25);
    }
}

#[test]
fn excursion_sample_layout() {
    let tmp = TempDir::new().unwrap();
    ok(&["sample", "--sampler", "excursion", "--u", "1", "--n", "1000", "--radius", "3", "--out", "s"], tmp.path());
    let dir = tmp.path().join("s");
    let mut reader = csv::Reader::from_path(dir.join("samples.csv")).unwrap();
    let mut per_vertex = std::collections::BTreeMap::<String, usize>::new();
    for rec in reader.records() {
        *per_vertex.entry(rec.unwrap()[1].to_string()).or_default() += 1;
    }
    assert_eq!(per_vertex.len(), 63);
    assert!(per_vertex.values().all(|&n| n == 1000));
    let sidecar = json(&dir, "samples.json");
    assert_eq!(sidecar["sampler"], "excursion-soup");
    assert_eq!(sidecar["excursion_counts"].as_array().unwrap().len(), 1000);
    assert!(sidecar["intensity"].as_f64().unwrap() > 0.0);
}

#[test]
fn verify_batteries_pass_and_are_reproducible() {
    let tmp = TempDir::new().unwrap();
    ok(&["verify", "isomorphism", "--u", "0", "--n", "2000", "--radius", "3", "--out", "iso"], tmp.path());
    ok(&["verify", "laplace", "--u", "1", "--V", "origin:1", "--n", "5000", "--out", "lap"], tmp.path());
    ok(&["verify", "vacant", "--u", "0.5", "--K", "origin", "--n", "5000", "--out", "vac"], tmp.path());
    ok(
        &["verify", "vacant", "--u", "0.5", "--K", "origin", "--n", "5000", "--workers", "2", "--out", "vac2"],
        tmp.path(),
    );
    for name in ["vacant.json", "summary.csv", "config.toml"] {
        let a = read(&tmp.path().join("vac"), name);
        let b = read(&tmp.path().join("vac2"), name);
        if name == "config.toml" {
            // Only the recorded run directory differs.
            let mut ca = RunConfig::from_toml(std::str::from_utf8(&a).unwrap()).unwrap();
            let cb = RunConfig::from_toml(std::str::from_utf8(&b).unwrap()).unwrap();
            ca.output_dir = cb.output_dir.clone();
            assert_eq!(ca, cb);
        } else {
            assert_eq!(a, b, "{name}");
        }
    }
    let report = json(&tmp.path().join("lap"), "laplace.json");
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["checks"].as_array().unwrap().len(), 4);
}

#[test]
fn potential_outside_window_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let out = interlace(&["verify", "laplace", "--V", "9,9,9:1", "--n", "10"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("potential.v"));
}

#[test]
fn invalid_configs_name_the_field() {
    let tmp = TempDir::new().unwrap();
    let cases: [(&[&str], &str); 5] = [
        (&["sample", "--u", "-1"], "level.u"),
        (&["exact", "--V", "origin:-0.5", "--laplace"], "potential.v"),
        (&["exact", "--cap", "--K", "9,9,9"], "potential.k"),
        (&["exact", "--green-limit", "--radii", "4,2"], "window.schedule"),
        (&["asymptotics", "--levels", "10,1"], "level.schedule"),
    ];
    for (args, field) in cases {
        let out = interlace(args, tmp.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(field), "{args:?}: {err}");
    }
}

#[test]
fn config_file_and_flag_overrides() {
    let tmp = TempDir::new().unwrap();
    let mut config = RunConfig {
        seed: 42,
        ..RunConfig::default()
    };
    config.window.radius = 2;
    config.level.u = 0.25;
    std::fs::write(tmp.path().join("run.toml"), config.to_toml().unwrap()).unwrap();

    ok(&["window", "--config", "run.toml", "--out", "a"], tmp.path());
    let snapshot = RunConfig::from_toml(&String::from_utf8(read(&tmp.path().join("a"), "config.toml")).unwrap()).unwrap();
    let mut expected = config.clone();
    expected.output_dir = Some("a".into());
    assert_eq!(snapshot, expected);

    ok(&["window", "--config", "run.toml", "--radius", "1", "--out", "b"], tmp.path());
    let window = json(&tmp.path().join("b"), "window.json");
    assert_eq!(window["radius"], 1);
    assert_eq!(window["vertices"].as_array().unwrap().len(), 7);
}

#[test]
fn output_base_from_environment() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_interlace"))
        .args(["window", "--radius", "1", "--seed", "5"])
        .current_dir(tmp.path())
        .env("INTERLACE_OUTPUT_DIR", tmp.path().join("base"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("base/window-s5/window.json").exists());
}

#[test]
fn edge_list_graphs() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("g.txt"), "# path\n0 1 1.0\n1 2 2.0\n2 3 1.0\n").unwrap();
    ok(&["window", "--gen", "edges", "--edge-list", "g.txt", "--radius", "1", "--out", "w"], tmp.path());
    let window = json(&tmp.path().join("w"), "window.json");
    assert_eq!(window["vertices"].as_array().unwrap().len(), 2);
}

use std::f64::consts::PI;
use std::fs;

use ballconf::cli::{run, EXIT_CONVERGENCE, EXIT_OK, EXIT_USAGE};
use ballconf::FieldSpec;
use serde_json::Value;

fn args(list: &[&str]) -> Vec<String> {
    std::iter::once("ballconf").chain(list.iter().copied()).map(String::from).collect()
}

fn lines(path: &std::path::Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Drops wall-clock values and output paths so two runs can be compared byte for byte.
fn strip_clock(text: &str) -> String {
    text.lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            if let Some(m) = v.get_mut("manifest") {
                m["wall_clock"] = Value::Null;
                m["flags"]["out"] = Value::Null;
                m["flags"]["plot"] = Value::Null;
            }
            if v.get("runtime").is_some() {
                v["runtime"] = Value::Null;
            }
            v.to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn energy_of_the_constant() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("one.json");
    let out = dir.path().join("energy.json");
    fs::write(&spec, r#"{"n":4,"variant":"Constant","params":{"c":1.0}}"#).unwrap();
    let code = run(args(&["energy", "--field", spec.to_str().unwrap(), "--n", "4", "--out", out.to_str().unwrap()]));
    assert_eq!(code, EXIT_OK);
    let doc = &lines(&out)[0];
    for (name, v) in doc["report"]["values"].as_object().unwrap() {
        let v = v.as_f64().unwrap();
        assert!((v - PI * PI / 18.0).abs() < 1e-12, "{name}: {v}");
    }
    assert_eq!(doc["manifest"]["command"], "energy");
    assert_eq!(doc["manifest"]["quadrature_degree"], 24);
}

#[test]
fn mismatched_dimension_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("one.json");
    fs::write(&spec, r#"{"n":4,"variant":"Constant","params":{"c":1.0}}"#).unwrap();
    assert_eq!(run(args(&["energy", "--field", spec.to_str().unwrap(), "--n", "5"])), EXIT_USAGE);
    fs::write(&spec, r#"{"n":4,"variant":"Nope"}"#).unwrap();
    assert_eq!(run(args(&["energy", "--field", spec.to_str().unwrap()])), EXIT_USAGE);
}

#[test]
fn balance_a_bubble() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bubble.json");
    let out = dir.path().join("map.json");
    fs::write(&spec, r#"{"n":4,"variant":"EscobarBubble","params":{"a":1.0,"r":0.4,"xi":[1,0,0,0,0]}}"#).unwrap();
    let code = run(args(&["balance", "--field", spec.to_str().unwrap(), "--n", "4", "--tol", "1e-8", "--out", out.to_str().unwrap()]));
    assert_eq!(code, EXIT_OK);
    let doc = &lines(&out)[0];
    assert!(doc["moment_norm"].as_f64().unwrap() < 1e-8);
    assert!(doc["map"]["base_point"].is_array());
}

#[test]
fn verify_is_reproducible_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let svg = dir.path().join("residuals.svg");
    let common = ["verify", "--n", "4,5", "--filter", "commutator*", "--seed", "3"];
    let mut first = common.to_vec();
    first.extend(["--out", a.to_str().unwrap(), "--plot", svg.to_str().unwrap()]);
    assert_eq!(run(args(&first)), EXIT_OK);
    let mut second = common.to_vec();
    second.extend(["--threads", "2", "--out", b.to_str().unwrap()]);
    assert_eq!(run(args(&second)), EXIT_OK);
    let (ta, tb) = (fs::read_to_string(&a).unwrap(), fs::read_to_string(&b).unwrap());
    let results = lines(&a);
    assert_eq!(results.len(), 5, "four results and a summary line");
    assert_eq!(results[4]["summary"]["passed"], 4);
    // thread count must not change any residual
    assert_eq!(strip_clock(&ta), strip_clock(&tb));
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn optimize_writes_trace_field_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let code = run(args(&["optimize", "--n", "3", "--max-iter", "30", "--seed", "1", "--out", out.to_str().unwrap()]));
    assert_eq!(code, EXIT_OK);
    let trace = lines(&out.join("trace.jsonl"));
    assert_eq!(trace.len(), 32);
    let energies: Vec<f64> = trace[..31].iter().map(|r| r["energy"].as_f64().unwrap()).collect();
    assert!(energies.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    assert!(trace[31]["manifest"]["seed"] == 1);
    // the written field spec reads back despite the embedded manifest
    let spec = FieldSpec::from_json(&fs::read_to_string(out.join("field.json")).unwrap()).unwrap();
    assert_eq!(spec.n, 3);
    spec.build().unwrap();
    assert!(fs::read_to_string(out.join("trace.svg")).unwrap().contains("<svg"));
}

#[test]
fn optimize_rejects_starts_outside_the_cone() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("start.json");
    fs::write(
        &spec,
        r#"{"n":3,"variant":"Polynomial","params":{"terms":[{"exponents":[1,1,0,0],"coef":0.05}]}}"#,
    )
    .unwrap();
    let code = run(args(&["optimize", "--n", "3", "--init", spec.to_str().unwrap()]));
    assert_eq!(code, EXIT_USAGE);
    assert_ne!(code, EXIT_CONVERGENCE);
}

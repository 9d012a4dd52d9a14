mod common;

use common::{mmtrace, stdout, write_fixture};
use mmtrace::format::{decode_trace, encode_trace};
use serde_json::Value;
use tempfile::TempDir;

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_owned()
}

fn json(o: &std::process::Output) -> Value {
    serde_json::from_str(&stdout(o)).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

#[test]
fn validate_exit_codes() {
    let d = TempDir::new().unwrap();
    let good = p(&d, "good.mmtr");
    write_fixture("table2-row0", good.as_ref());
    let o = mmtrace(&["validate", &good]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());

    let mut bytes = std::fs::read(&good).unwrap();
    let hl = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let off = 16 + hl + 4 * 3;
    bytes[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    let bad = p(&d, "nan.mmtr");
    std::fs::write(&bad, &bytes).unwrap();
    let o = mmtrace(&["validate", &bad]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1, "{out}");
    assert!(out.contains("[0][0][0][3]"), "{out}");

    assert_eq!(mmtrace(&["validate", &p(&d, "missing.mmtr")]).status.code(), Some(2));

    std::fs::write(&bad, b"XXXX").unwrap();
    let o = mmtrace(&["validate", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("magic"));
}

#[test]
fn analyze_formats() {
    let d = TempDir::new().unwrap();
    let f = p(&d, "r0.mmtr");
    write_fixture("table2-row0", f.as_ref());
    let table = stdout(&mmtrace(&["analyze", &f]));
    for v in ["1.580000000", "10.230000000", "17.370000000"] {
        assert!(table.contains(v), "{table}");
    }
    assert!(table.contains("Early") && table.contains("Middle") && table.contains("Late"));

    let j = json(&mmtrace(&["analyze", &f, "--format", "json"]));
    assert_eq!(j["counts"]["text"], 60);
    assert_eq!(j["counts"]["nontext"], 576);
    assert_eq!(j["counts"]["special"], 2);
    for b in ["early", "middle", "late"] {
        for k in ["mdi", "aei_text", "aei_nontext", "a_text"] {
            assert!(j["buckets"][b][k].is_f64(), "{b}.{k}");
        }
    }
    assert_eq!(j["per_layer"].as_array().unwrap().len(), 6);
    for k in ["layer", "a_text", "mdi", "aei_text"] {
        assert!(!j["per_layer"][0][k].is_null());
    }
    let m = &j["manifest"];
    assert_eq!(m["command"], "analyze");
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(m["version"].is_string() && m["timestamp"].is_string());

    let csv = stdout(&mmtrace(&["analyze", &f, "--format", "csv"]));
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().nth(3).unwrap().starts_with("late,4 5,17.3700000,"));
}

#[test]
fn balanced_and_uniform_fixtures_are_neutral() {
    let d = TempDir::new().unwrap();
    for name in ["balanced", "uniform"] {
        let f = p(&d, name);
        write_fixture(name, f.as_ref());
        let t = stdout(&mmtrace(&["analyze", &f]));
        let values = t.lines().last().unwrap();
        assert_eq!(values.split_whitespace().filter(|v| *v == "1.000000000").count(), 6, "{name}: {t}");
    }
}

#[test]
fn analyze_rejects_ineligible_trace() {
    let d = TempDir::new().unwrap();
    let shape = mmtrace::core::trace::TraceShape { steps: 1, layers: 1, heads: 1, input_len: 2 };
    let roles = mmtrace::core::trace::RoleMap::new(vec![mmtrace::core::trace::TokenRole::Text; 2]);
    let t = mmtrace::core::trace::AttentionTrace::new(shape, roles, Default::default(), vec![0.5, 0.5]).unwrap();
    let f = p(&d, "text-only.mmtr");
    std::fs::write(&f, encode_trace(&t).unwrap()).unwrap();
    let o = mmtrace(&["analyze", &f]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("metrics-ineligible: |O| = 0"));
    assert_eq!(mmtrace(&["validate", &f]).status.code(), Some(1));
}

#[test]
fn compare_reports_rebalancing() {
    let d = TempDir::new().unwrap();
    let (a, b, c) = (p(&d, "a"), p(&d, "b"), p(&d, "c"));
    write_fixture("table2-row0", a.as_ref());
    write_fixture("table2-row90", b.as_ref());
    write_fixture("table2-row95", c.as_ref());

    let j = json(&mmtrace(&["compare", &a, &b, "--format", "json"]));
    let late = &j["buckets"][2];
    assert_eq!(late["bucket"], "late");
    assert!((late["balance_change"].as_f64().unwrap() + 15.53).abs() < 1e-6);
    assert_eq!(j["manifest"]["inputs"].as_array().unwrap().len(), 2);

    let j = json(&mmtrace(&["compare", &a, &c, "--format", "json"]));
    let mid = &j["buckets"][1];
    assert!((mid["mdi_a"].as_f64().unwrap() - 10.23).abs() < 1e-6);
    assert!((mid["mdi_b"].as_f64().unwrap() - 0.86).abs() < 1e-6);

    let j = json(&mmtrace(&["compare", &a, &a, "--format", "json"]));
    for b in j["buckets"].as_array().unwrap() {
        for k in ["mdi_delta", "aei_text_delta", "aei_nontext_delta", "balance_change"] {
            assert_eq!(b[k].as_f64().unwrap(), 0.0);
        }
    }
}

#[test]
fn compare_rejects_different_special_counts() {
    let d = TempDir::new().unwrap();
    let a = p(&d, "a");
    write_fixture("table2-row0", a.as_ref());
    let mut t = decode_trace(&std::fs::read(&a).unwrap()).unwrap();
    let mut roles = t.role_map().roles().to_vec();
    let i = roles.iter().position(|r| *r == mmtrace::core::trace::TokenRole::NonText).unwrap();
    roles[i] = mmtrace::core::trace::TokenRole::Special;
    t = t.with_role_map(roles.into_iter().collect());
    let b = p(&d, "b");
    std::fs::write(&b, encode_trace(&t).unwrap()).unwrap();
    let o = mmtrace(&["compare", &a, &b]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("incompatible role maps"));
}

#[test]
fn simulate_flags_reach_the_trace() {
    let d = TempDir::new().unwrap();
    let f = p(&d, "s.mmtr");
    let o = mmtrace(&["simulate", "--replication", "10", "--out", &f, "--format", "json"]);
    assert!(o.status.success(), "{o:?}");
    let t = decode_trace(&std::fs::read(&f).unwrap()).unwrap();
    assert_eq!(t.metadata()["replication"], 10);
    assert_eq!(t.role_map().n_nontext(), 960);
    assert_eq!(json(&o)["manifest"]["params"]["replication"], 10);

    let o = mmtrace(&["simulate", "--layers", "3", "--heads", "2", "--out", &f]);
    assert!(o.status.success());
    let bytes = std::fs::read(&f).unwrap();
    let hl = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header: Value = serde_json::from_slice(&bytes[16..16 + hl]).unwrap();
    assert_eq!(header["layers"], 3);
    assert_eq!(header["heads"], 2);
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        vec!["simulate", "--d-model", "65"],
        vec!["simulate", "--layers", "abc"],
        vec!["analyze"],
        vec!["frobnicate"],
        vec!["sweep", "prune", "--rates", "1.5"],
        vec!["sweep", "replication", "--svg"],
        vec!["analyze", "x.mmtr", "--svg"],
        vec!["--format", "xml", "validate", "x"],
    ] {
        assert_eq!(mmtrace(&args).status.code(), Some(2), "{args:?}");
    }
    assert_eq!(mmtrace(&["--help"]).status.code(), Some(0));
}

#[test]
fn prune_sweep_writes_rows_chart_and_traces() {
    let d = TempDir::new().unwrap();
    let out = p(&d, "sweep");
    let o = mmtrace(&["sweep", "prune", "--rates", "0,0.75,0.9", "--seeds", "20", "--out", &out, "--svg", "--format", "csv"]);
    assert!(o.status.success(), "{o:?}");
    let csv = std::fs::read_to_string(d.path().join("sweep/sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "sweep,param,seed,bucket,mdi,aei_text,aei_nontext,n_text,n_nontext");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3 * 20 * 3);
    // (param, seed) order, then buckets.
    assert!(rows[0].starts_with("prune,0.0,0,early,"));
    assert!(rows[3].starts_with("prune,0.0,1,early,"));
    assert!(rows[60].starts_with("prune,0.750000000,0,early,"));
    assert!(rows[179].starts_with("prune,0.900000000,19,late,"));
    assert!(rows[179].ends_with(",24,9"));
    assert_eq!(stdout(&o), csv);

    let j: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("sweep/sweep.json")).unwrap()).unwrap();
    assert_eq!(j["rows"].as_array().unwrap().len(), 180);
    assert_eq!(j["rows"][0]["bucket"], "early");
    assert_eq!(j["summary"]["seeds"], 20);
    assert_eq!(j["manifest"]["outputs"].as_array().unwrap().len(), 2);

    let svg = std::fs::read_to_string(d.path().join("sweep/sweep.svg")).unwrap();
    assert_eq!(svg.matches("<rect").count(), 3);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<svg").count(), 1);
}

#[test]
fn replication_sweep_reports_summary_and_traces() {
    let d = TempDir::new().unwrap();
    let out = p(&d, "rep");
    let args = [
        "sweep", "replication", "--factors", "1,3", "--seeds", "2", "--seed", "5", "--text-len", "8",
        "--nontext-len", "16", "--out", &out, "--emit-traces",
    ];
    let o = mmtrace(&args);
    assert!(o.status.success(), "{o:?}");
    let table = stdout(&o);
    assert!(table.contains("late MDI higher at the largest factor than at the smallest"), "{table}");
    let mut names: Vec<String> = std::fs::read_dir(d.path().join("rep/traces"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["replication-p1-s5.mmtr", "replication-p1-s6.mmtr", "replication-p3-s5.mmtr", "replication-p3-s6.mmtr"]);
    let t = decode_trace(&std::fs::read(d.path().join("rep/traces/replication-p3-s6.mmtr")).unwrap()).unwrap();
    assert_eq!(t.role_map().n_nontext(), 48);
    assert_eq!(t.metadata()["seed"], 6);
}

#[test]
fn failed_sweep_writes_nothing() {
    let d = TempDir::new().unwrap();
    let out = p(&d, "never");
    // Validation fails before any run starts.
    let o = mmtrace(&["sweep", "replication", "--heads", "3", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!d.path().join("never").exists());
}

use std::fs;
use std::process::Command;

use pathctl_lab::output::{format_float, Cell, Table};
use pathctl_lab::plotdata::{emit_plotdata, PlotSpec};
use pathctl_lab::{run, LabError, RunConfig};
use proptest::prelude::*;

fn errors(text: &str) -> Vec<String> {
    match RunConfig::from_toml_str(text) {
        Err(LabError::Config(e)) => e,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn shipped_defaults_match_built_in_defaults() {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../config/default.toml")).unwrap();
    assert_eq!(RunConfig::from_toml_str(&text).unwrap(), RunConfig::default());
    assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
}

#[test]
fn validation_names_the_offending_fields() {
    let e = errors("[solver]\ndt = -0.5\n[sandwich]\nproj_dim = 3\n[approx]\nn_partition = 2\n");
    assert!(e.iter().any(|m| m.starts_with("solver.dt:")), "{e:?}");
    assert!(e.iter().any(|m| m.starts_with("sandwich.proj_dim:")), "{e:?}");
    assert!(e.iter().any(|m| m.starts_with("approx.n_partition:")), "{e:?}");

    let e = errors("[dpp]\ninstances = [\"steer-1\", \"nope\"]\n");
    assert_eq!(e.len(), 1);
    assert!(e[0].starts_with("dpp.instances[1]:"), "{e:?}");

    let e = errors("[value]\ninstances = [\"random-f\"]\n");
    assert!(e[0].starts_with("value.instances[0]:"), "{e:?}");

    let e = errors("[controls]\nvalues = [-2.0, 0.0]\n");
    assert!(e[0].starts_with("controls.values:"), "{e:?}");

    let e = errors("[calculus]\nfunctionals = [\"linear:p=modes(9)\"]\n");
    assert!(e[0].starts_with("calculus.functionals[0]:"), "{e:?}");
}

#[test]
fn unknown_keys_are_rejected() {
    let e = errors("[solver]\nstep = 0.1\n");
    assert!(e[0].contains("step"), "{e:?}");
}

#[test]
fn floats_keep_seventeen_significant_digits() {
    let s = format_float(0.1);
    assert_eq!(s, "1.0000000000000001e-1");
    assert_eq!(s.parse::<f64>().unwrap(), 0.1);
}

proptest! {
    #[test]
    fn rendered_floats_round_trip(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        prop_assert_eq!(format_float(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}

fn approx_like_table() -> Table {
    let mut t = Table::new("sweep_M", &["N", "M", "d", "f_err", "beta_err", "G_err", "seed"]);
    for m in 1..=5u32 {
        let e = 0.1 / m as f64;
        t.push(vec![4usize.into(), m.into(), 4usize.into(), e.into(), (e / 3.0).into(), (e / 7.0).into(), 7u64.into()]);
    }
    t
}

#[test]
fn plotdata_is_long_and_parses_back_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let t = approx_like_table();
    let path = t.write(dir.path()).unwrap();
    let mut out = Vec::new();
    let spec = PlotSpec {
        x: Some("M".into()),
        y: vec!["f_err".into(), "beta_err".into(), "G_err".into()],
    };
    let n = emit_plotdata(fs::File::open(&path).unwrap(), &mut out, &spec).unwrap();
    assert_eq!(n, 15);
    let mut rd = csv::Reader::from_reader(out.as_slice());
    assert_eq!(rd.headers().unwrap(), vec!["x", "y", "series"]);
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    for series in ["f_err", "beta_err", "G_err"] {
        assert_eq!(rows.iter().filter(|r| &r[2] == series).count(), 5);
    }
    for (i, r) in rows.iter().enumerate() {
        let src = &t.rows[i / 3];
        let col = 3 + i % 3;
        let Cell::F(want) = src[col] else { panic!() };
        assert_eq!(r[1].parse::<f64>().unwrap().to_bits(), want.to_bits());
        assert_eq!(r[0], src[1].render());
    }
}

#[test]
fn text_columns_label_the_series() {
    let data = "instance,t,gap\nsteer-1,0.0,1.5\ndelay,0.5,2.5\n";
    let mut out = Vec::new();
    emit_plotdata(data.as_bytes(), &mut out, &PlotSpec { x: Some("t".into()), y: vec![] }).unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        "x,y,series\n0.0,1.5,steer-1/gap\n0.5,2.5,delay/gap\n"
    );
}

#[test]
fn empty_study_gives_header_only_output() {
    let mut out = Vec::new();
    let n = emit_plotdata("N,M,f_err\n".as_bytes(), &mut out, &PlotSpec::default()).unwrap();
    assert_eq!(n, 0);
    assert_eq!(String::from_utf8(out).unwrap(), "x,y,series\n");
    let mut out = Vec::new();
    emit_plotdata("".as_bytes(), &mut out, &PlotSpec::default()).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), "x,y,series\n");
}

#[test]
fn unknown_plot_column_is_an_error() {
    let r = emit_plotdata("a,b\n1,2\n".as_bytes(), Vec::new(), &PlotSpec { x: Some("c".into()), y: vec![] });
    assert!(matches!(r, Err(LabError::Usage(_))));
}

#[test]
fn manifest_lists_hashes_and_sorted_keys() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify-gelfand"], &RunConfig::default(), dir.path()).unwrap();
    assert!(out.passed());
    let text = fs::read_to_string(&out.manifest).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config"]["gelfand"]["dim"], 64);
    let files = v["files"].as_array().unwrap();
    assert_eq!(files.len(), 2);
    for f in files {
        let p = dir.path().join(f["path"].as_str().unwrap());
        assert_eq!(f["sha256"].as_str().unwrap(), pathctl_lab::output::sha256_file(&p).unwrap());
    }
    assert!(dir.path().join("verify-gelfand/manifest.json").exists());
}

#[test]
fn cheap_studies_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.estimates.draws = 10;
    cfg.picard.problems = 4;
    let names = ["solve", "estimates", "dpp"];
    run(&names, &cfg, &dir.path().join("a")).unwrap();
    cfg.workers = 1;
    run(&names, &cfg, &dir.path().join("b")).unwrap();
    for (s, f) in [("solve", "picard"), ("estimates", "estimates"), ("dpp", "dpp"), ("dpp", "brute_force")] {
        let a = fs::read(dir.path().join(format!("a/{s}/{f}.csv"))).unwrap();
        let b = fs::read(dir.path().join(format!("b/{s}/{f}.csv"))).unwrap();
        assert_eq!(a, b, "{s}/{f}");
    }
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_pathctl");
    let ok = Command::new(bin)
        .args(["--out", dir.path().to_str().unwrap(), "--workers", "2", "verify-gelfand"])
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("PASS verify-gelfand"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[gelfand]\nsamples = 0\n").unwrap();
    let err = Command::new(bin)
        .args(["--config", bad.to_str().unwrap(), "verify-gelfand"])
        .output()
        .unwrap();
    assert_eq!(err.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&err.stderr).contains("gelfand.samples"));

    // an unattainable tolerance makes the check, and so the command, fail
    let strict = dir.path().join("strict.toml");
    fs::write(&strict, format!("out = {:?}\n[gelfand]\ntol = 1e-300\n", dir.path().join("s"))).unwrap();
    let fail = Command::new(bin)
        .args(["--config", strict.to_str().unwrap(), "verify-gelfand"])
        .output()
        .unwrap();
    assert_eq!(fail.status.code(), Some(1), "{}", String::from_utf8_lossy(&fail.stdout));

    let csv = dir.path().join("verify-gelfand/spectrum.csv");
    let plot = Command::new(bin)
        .args(["emit-plotdata", csv.to_str().unwrap(), "--x", "k", "--y", "eigenvalue"])
        .output()
        .unwrap();
    assert!(plot.status.success());
    let text = String::from_utf8(plot.stdout).unwrap();
    assert_eq!(text.lines().count(), 65);
    assert!(text.starts_with("x,y,series\n1,9.8696044010893580e0,eigenvalue\n"), "{text}");
}

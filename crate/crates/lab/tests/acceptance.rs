//! Acceptance criteria, one PASS/FAIL line each. Runs the full study set
//! twice with 8 workers and the exact studies once more with 1 worker.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use pathctl_lab::{run, RunConfig, StudyOutput, STUDIES};

struct Criterion {
    id: u32,
    study: &'static str,
    what: &'static str,
    seconds: f64,
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, study: "verify-gelfand", what: "Gelfand identities on 1000 vectors at D = 64", seconds: 1.0 },
    Criterion { id: 2, study: "solve", what: "Picard contraction and fixed point on 20 problems", seconds: 10.0 },
    Criterion { id: 3, study: "estimates", what: "a priori estimates on 100 draws", seconds: 60.0 },
    Criterion { id: 4, study: "dpp", what: "dynamic programming on all tree time pairs", seconds: 30.0 },
    Criterion { id: 5, study: "value", what: "value bound, Lipschitz ratio, supermartingale", seconds: 60.0 },
    Criterion { id: 6, study: "calculus", what: "Ito-Kunita residual slope and martingale mean", seconds: 120.0 },
    Criterion { id: 7, study: "approx-study", what: "freezing gap, monotone errors, projection table", seconds: 120.0 },
    Criterion { id: 8, study: "sandwich", what: "regularized value bounds the value", seconds: 300.0 },
];

const EXACT: &[&str] = &["verify-gelfand", "solve", "estimates", "dpp", "value"];

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            let study = p.file_name().unwrap().to_string_lossy().to_string();
            for (k, v) in csv_files(&p) {
                out.insert(format!("{study}/{k}"), v);
            }
        } else if p.extension().is_some_and(|e| e == "csv") {
            out.insert(p.file_name().unwrap().to_string_lossy().to_string(), fs::read(&p).unwrap());
        }
    }
    out
}

fn column(s: &StudyOutput, table: &str, col: &str) -> Vec<String> {
    let t = s.tables.iter().find(|t| t.name == table).unwrap();
    let j = t.header.iter().position(|h| h == col).unwrap();
    t.rows.iter().map(|r| r[j].render()).collect()
}

/// Frozen reference values each study must reproduce, beyond its own checks.
fn oracle(s: &StudyOutput) -> Result<(), String> {
    let close = |label: &str, got: f64, want: f64, tol: f64| {
        if (got - want).abs() <= tol {
            Ok(())
        } else {
            Err(format!("{label}: {got} vs {want}"))
        }
    };
    match s.study.as_str() {
        "solve" => {
            for b in column(s, "picard", "bound") {
                close("contraction bound", b.parse().unwrap(), 0.7393481183564022, 1e-12)?;
            }
            for w in column(s, "picard", "window") {
                close("window", w.parse().unwrap(), 0.3, 1e-12)?;
            }
            Ok(())
        }
        "estimates" => {
            let names = column(s, "constants", "name");
            let vals = column(s, "constants", "value");
            let want = [
                806.8575869854702,
                29.440421708994933,
                155.91424496410247,
                8.0,
                2.0,
                311.82848992820493,
            ];
            for ((n, v), w) in names.iter().zip(&vals).zip(want) {
                close(n, v.parse().unwrap(), w, 1e-9 * w)?;
            }
            Ok(())
        }
        "approx-study" => {
            let d = column(s, "projection", "d");
            let w = column(s, "projection", "witness");
            let at = d.iter().position(|x| x == "4").ok_or("no d = 4 row")?;
            close("witness tail at d = 4", w[at].parse().unwrap(), 1.75e-2, 1e-6)
        }
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        workers: 8,
        ..RunConfig::default()
    };
    let first = run(STUDIES, &cfg, &tmp.path().join("a")).expect("first run");
    let mut all_pass = true;
    for c in CRITERIA {
        let s = first.studies.iter().find(|s| s.study == c.study).unwrap();
        let mut notes: Vec<String> = s
            .failures()
            .iter()
            .map(|f| format!("{} measured {:e} bound {:e}", f.name, f.measured, f.bound))
            .collect();
        if let Err(e) = oracle(s) {
            notes.push(e);
        }
        if s.seconds >= c.seconds {
            notes.push(format!("took {:.2} s, limit {} s", s.seconds, c.seconds));
        }
        let ok = notes.is_empty();
        all_pass &= ok;
        println!(
            "criterion {}: {} {} ({:.2} s){}",
            c.id,
            if ok { "PASS" } else { "FAIL" },
            c.what,
            s.seconds,
            if ok { String::new() } else { format!(": {}", notes.join("; ")) }
        );
    }

    let second = run(STUDIES, &cfg, &tmp.path().join("b")).expect("second run");
    let single = run(
        EXACT,
        &RunConfig {
            workers: 1,
            ..cfg.clone()
        },
        &tmp.path().join("c"),
    )
    .expect("single-worker run");
    let a = csv_files(&tmp.path().join("a"));
    let b = csv_files(&tmp.path().join("b"));
    let c = csv_files(&tmp.path().join("c"));
    let mut notes = Vec::new();
    if a.is_empty() || a.keys().ne(b.keys()) {
        notes.push("the two runs wrote different file sets".to_string());
    }
    for (k, v) in &a {
        if b.get(k) != Some(v) {
            notes.push(format!("{k} differs between runs"));
        }
    }
    for (k, v) in &c {
        if a.get(k) != Some(v) {
            notes.push(format!("{k} differs between 1 and 8 workers"));
        }
    }
    if !second.passed() || !single.passed() {
        notes.push("a repeated run failed its checks".to_string());
    }
    let ok = notes.is_empty();
    all_pass &= ok;
    println!(
        "criterion 9: {} byte-identical CSVs across runs ({} files) and worker counts ({} files){}",
        if ok { "PASS" } else { "FAIL" },
        a.len(),
        c.len(),
        if ok { String::new() } else { format!(": {}", notes.join("; ")) }
    );
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

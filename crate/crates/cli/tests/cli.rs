use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn evtpool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evtpool"))
        .args(args)
        .arg("--quiet")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = evtpool(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|row| row.unwrap().iter().map(str::to_string).collect())
        .collect()
}

/// Simulated results plus a fit of the given models in `dir`.
fn simulate_and_fit(dir: &Path, ladder: &str) -> String {
    let out = dir.to_str().unwrap().to_string();
    ok(&["simulate", "--n-events", "4", "--count", "80", "--seed", "3", "--out", &out]);
    let input = dir.join("results.csv");
    ok(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--n-exceed",
        "60",
        "--ladder",
        ladder,
        "--out",
        &out,
    ]);
    out
}

#[test]
fn runs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(a.path(), "1"), (b.path(), "2")] {
        let out = simulate_and_fit(dir, "M3,M7b");
        let input = dir.join("results.csv");
        ok(&[
            "bootstrap",
            "--input",
            input.to_str().unwrap(),
            "--B",
            "20",
            "--seed",
            "9",
            "--threads",
            threads,
            "--out",
            &out,
        ]);
    }
    for f in ["results.csv", "model.json", "ladder.csv", "ensemble.jsonl", "parameters.csv"] {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn spline_model_beats_independent_fits_on_the_criterion() {
    let dir = tempfile::tempdir().unwrap();
    simulate_and_fit(dir.path(), "M1a,M7b");
    let rows = read_csv(&dir.path().join("ladder.csv"));
    let crit = |m: &str| -> f64 { rows.iter().find(|r| r[0] == m).unwrap()[5].parse().unwrap() };
    assert!(crit("M7b") < crit("M1a"), "{} vs {}", crit("M7b"), crit("M1a"));
}

#[test]
fn missing_input_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.csv");
    let out = evtpool(&[
        "fit",
        "--input",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.csv"));
}

#[test]
fn bad_arguments_exit_with_code_two() {
    let out = evtpool(&["fit", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn model_from_another_version_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate_and_fit(dir.path(), "M7b");
    let path = dir.path().join("model.json");
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replace("evtpool-model/1", "evtpool-model/0")).unwrap();
    let input = dir.path().join("results.csv");
    let res = evtpool(&["rank", "--input", input.to_str().unwrap(), "--out", &out]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn ranks_follow_time_within_an_event() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate_and_fit(dir.path(), "M7b");
    let input = dir.path().join("results.csv");
    ok(&["rank", "--input", input.to_str().unwrap(), "--out", &out]);
    let rows = read_csv(&dir.path().join("ranks.csv"));
    assert_eq!(rows.len(), 4 * 60);
    // r-values use the yearly rate, so time order holds within an event and year
    let mut groups = std::collections::BTreeMap::<(String, String), Vec<f64>>::new();
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], (i + 1).to_string());
        groups
            .entry((r[2].clone(), r[4][..4].to_string()))
            .or_default()
            .push(r[3].parse().unwrap());
    }
    for (key, times) in groups {
        assert!(times.windows(2).all(|w| w[0] <= w[1]), "{key:?}");
    }
    ok(&["schema-check", "--out", &out]);
}

#[test]
fn identical_events_share_the_next_record_evenly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap().to_string();
    ok(&["simulate", "--n-events", "2", "--count", "80", "--seed", "4", "--out", &out]);
    let results = dir.path().join("results.csv");
    let mut rows = read_csv(&results);
    let ev = rows[0][1].clone();
    rows.retain(|r| r[1] == ev);
    let twin = if ev == "men_50_free" { "men_50_fly" } else { "men_50_free" };
    let copies: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut c = r.clone();
            c[0] = format!("{}_twin", c[0]);
            c[1] = twin.to_string();
            c
        })
        .collect();
    rows.extend(copies);
    let mut w = csv::Writer::from_path(&results).unwrap();
    w.write_record(["swimmer_id", "event_id", "time_s", "date", "nation"]).unwrap();
    for r in &rows {
        w.write_record(r).unwrap();
    }
    w.flush().unwrap();
    let input = results.to_str().unwrap();
    ok(&["fit", "--input", input, "--n-exceed", "60", "--model", "M4", "--ladder", "M4", "--out", &out]);
    ok(&["predict", "--input", input, "--horizon", "2", "--out", &out]);
    let probs = read_csv(&dir.path().join("next_event_prob.csv"));
    assert_eq!(probs.len(), 2);
    for p in &probs {
        let v: f64 = p[2].parse().unwrap();
        assert!((v - 0.5).abs() < 1e-3, "{p:?}");
    }
}

#[test]
fn removing_then_adding_the_suit_returns_the_swim() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate_and_fit(dir.path(), "M7b");
    let rows = read_csv(&dir.path().join("results.csv"));
    let event = rows[0][1].clone();
    let best: f64 = rows
        .iter()
        .filter(|r| r[1] == event)
        .map(|r| r[2].parse::<f64>().unwrap())
        .fold(f64::INFINITY, f64::min);
    let swim = format!("{:.2}", best + 0.05);
    let adjust = |time: &str, dir_name: &str| -> f64 {
        ok(&[
            "adjust", "--event", &event, "--time", time, "--date", "2008-07-01",
            "--direction", dir_name, "--out", &out,
        ]);
        read_csv(&Path::new(&out).join("adjusted_swim.csv"))[0][4].parse().unwrap()
    };
    let removed = adjust(&swim, "remove");
    let back = adjust(&format!("{removed}"), "add1");
    assert!((back - best - 0.05).abs() <= 0.01, "{swim} -> {removed} -> {back}");
}

#[test]
fn schema_check_rejects_a_bad_header() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ladder.csv"), "model,loglik\nM1a,1\n").unwrap();
    let out = evtpool(&["schema-check", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn todctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_todctl"))
        .args(args)
        .output()
        .expect("todctl runs")
}

fn ok(args: &[&str]) -> Output {
    let out = todctl(args);
    assert!(
        out.status.success(),
        "todctl {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    todctl(args).status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

/// Long-format CSV with flows given per (day, movement, interval).
fn write_flows(
    path: &Path,
    dates: &[&str],
    movements: &[&str],
    t_len: usize,
    f: impl Fn(usize, usize, usize) -> f64,
) {
    let mut text = String::from("date,movement,interval_index,flow_vph\n");
    for (d, date) in dates.iter().enumerate() {
        for (m, name) in movements.iter().enumerate() {
            for t in 1..=t_len {
                text.push_str(&format!("{date},{name},{t},{}\n", f(d, m, t)));
            }
        }
    }
    fs::write(path, text).unwrap();
}

fn dates(n: usize) -> Vec<String> {
    (0..n).map(|d| format!("2015-03-{:02}", d + 1)).collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_default_shape_and_sidecars() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    ok(&["--out-dir", p(out), "synth"]);
    let csv = fs::read_to_string(out.join("flows.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 132 * 12 * 96);
    let meta = json(&out.join("flows.meta.json"));
    assert_eq!(meta["days"].as_array().unwrap().len(), 132);
    assert_eq!(meta["movements"].as_array().unwrap().len(), 12);
    let manifest = json(&out.join("synth.manifest.json"));
    let hash = manifest["manifest_sha256"].as_str().unwrap();
    assert_eq!(meta["manifest"], hash);
    assert_eq!(json(&out.join("truth.json"))["manifest"], hash);
    assert_eq!(manifest["artifacts"].as_array().unwrap().len(), 3);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    let bad = write_config(out, r#"{"synth": {"n_movements": 0}}"#);
    assert_eq!(
        code(&["--out-dir", p(out), "--config", p(&bad), "synth"]),
        1
    );
    let typo = write_config(out, r#"{"n_period": 3}"#);
    assert_eq!(
        code(&["--out-dir", p(out), "--config", p(&typo), "synth"]),
        1
    );
    assert_eq!(
        code(&[
            "--out-dir",
            p(out),
            "--input",
            p(&out.join("missing.csv")),
            "loocv"
        ]),
        2
    );
    assert_eq!(
        code(&[
            "--out-dir",
            p(out),
            "--config",
            p(&out.join("nope.json")),
            "synth"
        ]),
        2
    );
    assert_eq!(code(&["--out-dir", p(out), "frobnicate"]), 1);
    assert_eq!(code(&["--out-dir", p(out), "pca"]), 1);
    assert_eq!(code(&["--help"]), 0);

    let small = write_config(out, r#"{"synth": {"n_days": 6, "anomaly_days": []}}"#);
    ok(&["--out-dir", p(out), "--config", p(&small), "synth"]);
    let flows = out.join("flows.csv");
    let flows = p(&flows);
    assert_eq!(
        code(&[
            "--out-dir",
            p(out),
            "--input",
            flows,
            "pca",
            "--components",
            "6"
        ]),
        1
    );
    assert_eq!(
        code(&[
            "--out-dir",
            p(out),
            "--input",
            flows,
            "predict",
            "--date",
            "1999-01-01"
        ]),
        1
    );
    assert_eq!(
        code(&[
            "--out-dir",
            p(out),
            "--input",
            flows,
            "segment",
            "--periods",
            "97"
        ]),
        1
    );
    assert_eq!(
        code(&[
            "--out-dir",
            p(out),
            "--input",
            flows,
            "segment",
            "--penalty",
            "0.5"
        ]),
        1
    );
    assert_eq!(
        code(&[
            "--out-dir",
            p(out),
            "--input",
            flows,
            "control",
            "--date",
            "1999-01-01"
        ]),
        1
    );
}

#[test]
fn pca_rank_one_variance() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    let flows = out.join("r1.csv");
    let alpha = [1.0, -2.0, 3.0, 0.5];
    let ds = dates(4);
    let names: Vec<&str> = ds.iter().map(String::as_str).collect();
    write_flows(&flows, &names, &["NBT", "SBT"], 4, |d, m, t| {
        100.0 + alpha[d] * (m * 4 + t) as f64
    });
    let cfg = write_config(out, r#"{"interval_minutes": 360}"#);
    ok(&[
        "--out-dir",
        p(out),
        "--config",
        p(&cfg),
        "--input",
        p(&flows),
        "pca",
        "--components",
        "1",
    ]);
    let variance = fs::read_to_string(out.join("explained_variance.csv")).unwrap();
    let row: Vec<&str> = variance.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "1");
    assert!(
        (row[2].parse::<f64>().unwrap() - 1.0).abs() < 1e-12,
        "{variance}"
    );
    let weights = fs::read_to_string(out.join("weights.csv")).unwrap();
    assert_eq!(weights.lines().next().unwrap(), "date,weekday,w1");
    assert_eq!(weights.lines().count(), 5);
}

#[test]
fn segment_fixtures() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    let flows = out.join("steps.csv");
    // four six-hour intervals
    write_flows(
        &flows,
        &["2015-03-02", "2015-03-03"],
        &["NBT"],
        4,
        |_, _, t| if t <= 2 { 10.0 } else { 90.0 },
    );
    let cfg = write_config(out, r#"{"interval_minutes": 360}"#);
    let base = [
        "--out-dir",
        p(out),
        "--config",
        p(&cfg),
        "--input",
        p(&flows),
        "segment",
    ];
    ok(&[&base[..], &["--periods", "2"]].concat());
    let plan = json(&out.join("plan.json"));
    assert_eq!(plan["switch_times"], serde_json::json!([2]));
    assert_eq!(plan["switch_clock"], serde_json::json!(["12:00"]));
    assert_eq!(plan["total_cost"], 0.0);
    ok(&[&base[..], &["--periods", "1"]].concat());
    let plan = json(&out.join("plan.json"));
    assert_eq!(plan["n_periods"], 1);
    assert_eq!(plan["switch_times"], serde_json::json!([]));
}

#[test]
fn morning_period_brackets_planted_peak() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    let cfg = write_config(
        out,
        r#"{"synth": {"n_days": 30, "noise_sigma": 0.0, "anomaly_days": []}}"#,
    );
    ok(&["--out-dir", p(out), "--config", p(&cfg), "synth"]);
    ok(&[
        "--out-dir",
        p(out),
        "--config",
        p(&cfg),
        "--input",
        p(&out.join("flows.csv")),
        "segment",
    ]);
    let plan = json(&out.join("plan.json"));
    let taus: Vec<u64> = plan["switch_times"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    // the commute peaks near 08:00, i.e. interval 32
    let peak = 32;
    let period = taus.iter().position(|&tau| tau >= peak).unwrap();
    assert!(period > 0, "{taus:?}");
    assert!(
        taus[period - 1] < peak - 1 && taus[period] > peak,
        "{taus:?}"
    );
}

#[test]
fn predict_tracks_anomaly_and_mean_sample() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    ok(&["--out-dir", p(out), "synth"]);
    let flows = out.join("flows.csv");
    let truth = json(&out.join("truth.json"));
    let meta = json(&out.join("flows.meta.json"));
    let day = 7usize;
    let date = meta["days"][day]["date"].as_str().unwrap().to_string();
    ok(&[
        "--out-dir",
        p(out),
        "--input",
        p(&flows),
        "predict",
        "--date",
        &date,
    ]);

    // planted deviation of the day, averaged to the hourly predicted grid
    let weights: Vec<f64> = truth["weights"][day]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let components: Vec<Vec<f64>> = truth["components"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            c.as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_f64().unwrap())
                .collect()
        })
        .collect();
    let deviation = |m: usize, t: usize| -> f64 {
        (t..t + 4)
            .map(|s| {
                components
                    .iter()
                    .zip(&weights)
                    .map(|(q, w)| w * q[m * 96 + s - 1])
                    .sum::<f64>()
            })
            .sum::<f64>()
            / 4.0
    };
    let table = fs::read_to_string(out.join("prediction.csv")).unwrap();
    let movements: Vec<String> = meta["movements"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let (mut agree, mut total) = (0, 0);
    for line in table.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let m = movements.iter().position(|x| x == f[0]).unwrap();
        let t: usize = f[1].parse().unwrap();
        let predicted: f64 = f[3].parse().unwrap();
        let mean: f64 = f[4].parse().unwrap();
        total += 1;
        if (predicted - mean).signum() == deviation(m, t).signum() {
            agree += 1;
        }
    }
    assert_eq!(total, 12 * 14);
    assert!(agree as f64 >= 0.9 * total as f64, "{agree}/{total}");

    // a sample day equal to the historical mean predicts the mean
    let mut sample = String::from("date,movement,interval_index,flow_vph\n");
    let n_days = 132.0;
    let csv = fs::read_to_string(&flows).unwrap();
    let mut sums = vec![0.0; 12 * 96];
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let m = movements.iter().position(|x| x == f[1]).unwrap();
        let t: usize = f[2].parse().unwrap();
        sums[m * 96 + t - 1] += f[3].parse::<f64>().unwrap();
    }
    for (m, name) in movements.iter().enumerate() {
        for t in 1..=96 {
            sample.push_str(&format!(
                "2016-01-04,{name},{t},{}\n",
                sums[m * 96 + t - 1] / n_days
            ));
        }
    }
    let sample_path = out.join("sample.csv");
    fs::write(&sample_path, sample).unwrap();
    ok(&[
        "--out-dir",
        p(out),
        "--input",
        p(&flows),
        "predict",
        "--sample",
        p(&sample_path),
    ]);
    let table = fs::read_to_string(out.join("prediction.csv")).unwrap();
    for line in table.lines().skip(1) {
        let f: Vec<f64> = line
            .split(',')
            .skip(3)
            .map(|v| v.parse().unwrap())
            .collect();
        assert!((f[0] - f[1]).abs() <= 1e-9 * f[1].abs(), "{line}");
    }
}

#[test]
fn loocv_constant_dataset() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    let flows = out.join("flat.csv");
    let ds = dates(5);
    let names: Vec<&str> = ds.iter().map(String::as_str).collect();
    write_flows(&flows, &names, &["NBT", "EBT"], 96, |_, _, _| 120.0);
    ok(&[
        "--out-dir",
        p(out),
        "--input",
        p(&flows),
        "loocv",
        "--components",
        "2",
    ]);
    let csv = fs::read_to_string(out.join("loocv.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "date,E_pred,E_base,decrease");
    for line in csv.lines().skip(1) {
        assert!(line.ends_with(",0,0,0"), "{line}");
    }
    let summary = json(&out.join("loocv_summary.json"));
    assert_eq!(summary["fraction_positive"], 0.0);
}

#[test]
fn control_reports() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    let cfg = write_config(
        out,
        r#"{"synth": {"n_days": 24, "anomaly_days": [{"day": 5, "multipliers": [3.0]}]}}"#,
    );
    ok(&["--out-dir", p(out), "--config", p(&cfg), "synth"]);
    let flows = out.join("flows.csv");
    let base = [
        "--out-dir",
        p(out),
        "--config",
        p(&cfg),
        "--input",
        p(&flows),
        "control",
    ];

    ok(&[&base[..], &["--halfwidth", "0"]].concat());
    let table = fs::read_to_string(out.join("delay_table.csv")).unwrap();
    assert!(
        table.contains("improvement_seg,0\n") && table.contains("improvement_seg_params,0\n"),
        "{table}"
    );

    ok(&base);
    let report = json(&out.join("delay_report.json"));
    assert_eq!(report["scope"], "in_sample");
    assert_eq!(report["days"].as_array().unwrap().len(), 24);
    for d in report["days"].as_array().unwrap() {
        let lb = d["lower_bound"].as_f64().unwrap();
        for k in ["nominal", "predictive_seg", "predictive_seg_params"] {
            assert!(lb <= d[k].as_f64().unwrap() + 1e-6);
        }
    }
    let rates = fs::read_to_string(out.join("delay_rates.csv")).unwrap();
    assert_eq!(rates.lines().count(), 1 + 24 * 96);
    assert_eq!(fs::read_dir(out.join("cache")).unwrap().count(), 2);

    let meta = json(&out.join("flows.meta.json"));
    let date = meta["days"][5]["date"].as_str().unwrap();
    ok(&[
        "--out-dir",
        p(out),
        "--config",
        p(&cfg),
        "--input",
        p(&flows),
        "segment",
    ]);
    let plan = out.join("nominal.json");
    fs::rename(out.join("plan.json"), &plan).unwrap();
    ok(&[&base[..], &["--date", date, "--plan", p(&plan)]].concat());
    let plans = json(&out.join("predictive_plans.json"));
    assert_eq!(plans["scope"], "held_out");
    assert_eq!(plans["days"][0]["date"], date);
    assert_eq!(
        plans["nominal"]["switch_times"],
        json(&plan)["switch_times"]
    );
}

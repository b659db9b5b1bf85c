use std::path::Path;
use std::process::{Command, Output};

fn weakmeter(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weakmeter"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("not a number: {s:?}"))
}

#[test]
fn validity_example() {
    let o = weakmeter(&["validity", "--w", "8", "--k", "0.01", "--delta", "1", "--noise", "p:1"]);
    assert_eq!(code(&o), 0);
    let err = text(&o.stderr);
    assert!(err.contains("validity_lhs = 0.0128"), "{err}");
    assert!(err.contains("AAV regime: OK"), "{err}");
    let csv = text(&o.stdout);
    assert!(csv.starts_with("k,delta,noise_kind"));

    let o = weakmeter(&["validity", "--w", "8", "--k", "0.01", "--noise", "p:1", "--threshold", "0.01"]);
    assert!(text(&o.stderr).contains("AAV regime: VIOLATED"));
}

#[test]
fn distribution_example_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.csv");
    let o = weakmeter(&["distribution", "--w", "8", "--k", "0.2", "--delta-t", "1.0", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("AAV regime: VIOLATED"));
    let (header, rows) = read_csv(&out);
    assert_eq!(header, ["p", "rho"]);
    assert_eq!(rows.len(), 2001);
    assert_eq!(num(&rows[0][0]), -6.0);
    assert_eq!(num(&rows[2000][0]), 6.0);
    // the unscaled textbook expression, fine at k·Δ_T = 0.2
    let (w, k, dt) = (8.0f64, 0.2f64, 1.0f64);
    let e = (k * dt).powi(2).exp();
    for row in rows.iter().step_by(50) {
        let p = num(&row[0]);
        let amp = (k * p).cos() + w * (k * p).sin();
        let want = 2.0 * (e.ln() - (p / dt).powi(2)).exp() * amp * amp
            / ((1.0 - w * w + (1.0 + w * w) * e) * std::f64::consts::PI.sqrt() * dt);
        let got = num(&row[1]);
        assert!((got - want).abs() <= 1e-12 * want.max(1e-300), "p={p}: {got} vs {want}");
    }
}

#[test]
fn config_errors_exit_2() {
    let o = weakmeter(&["snr-curve", "--w", "8", "--k", "0.01", "--sweep", ""]);
    assert_eq!(code(&o), 2, "{}", text(&o.stderr));
    assert_eq!(code(&weakmeter(&["snr-curve", "--w", "8", "--k", "0.01"])), 2);
    assert_eq!(code(&weakmeter(&["sideways", "--w", "8", "--k", "0.01"])), 2);
    assert_eq!(code(&weakmeter(&["validity", "--k", "0.01"])), 2);
    assert_eq!(code(&weakmeter(&["validity", "--w", "8", "--k", "0.01", "--noise", "x:1"])), 2);
    assert_eq!(code(&weakmeter(&["montecarlo", "--w", "8", "--k", "0.01", "--runs", "0"])), 2);
    assert_eq!(code(&weakmeter(&["snr-curve", "--w", "8", "--k", "0.01", "--sweep", "1,-1"])), 2);
    assert_eq!(code(&weakmeter(&["distribution", "--w", "8", "--k", "0.01", "--noise", "q:1"])), 2);
    let o = weakmeter(&["validity", "--w", "8", "--k", "0.01", "--out", "/nonexistent-dir/x.csv"]);
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("cannot write"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "mode = validity\nw = eight\n").unwrap();
    assert_eq!(code(&weakmeter(&["--config", cfg.to_str().unwrap(), "--k", "0.01"])), 2);
    assert_eq!(code(&weakmeter(&["--config", "/nonexistent.cfg"])), 2);
}

#[test]
fn numeric_failure_exits_3() {
    // a fixed 256-point grid cannot resolve a half-width of 2000
    let o = weakmeter(&[
        "snr-curve", "--w", "8", "--k", "0.01", "--sweep", "1", "--grid-points", "256", "--grid-half-width", "2000",
    ]);
    assert_eq!(code(&o), 3, "{}", text(&o.stderr));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# validity check\nmode = validity\nw = 8\nk = 0.02\nnoise = p:1\n").unwrap();
    let o = weakmeter(&["--config", cfg.to_str().unwrap()]);
    assert!(text(&o.stderr).contains("validity_lhs = 0.0512"), "{}", text(&o.stderr));
    let o = weakmeter(&["--config", cfg.to_str().unwrap(), "--k", "0.01"]);
    assert!(text(&o.stderr).contains("validity_lhs = 0.0128"));
}

#[test]
fn explicit_system_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sys.cfg");
    // C_w = i·w with w = 8, spelled out
    std::fs::write(
        &cfg,
        "mode = snr-curve\nk = 0.01\npre = 1+8i, 1-8i\npost = 1, 1\nobservable = 1, 0; 0, -1\nsweep = 0, 1\n",
    )
    .unwrap();
    let out = dir.path().join("explicit.csv");
    let o = weakmeter(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let out2 = dir.path().join("builtin.csv");
    let o = weakmeter(&["snr-curve", "--w", "8", "--k", "0.01", "--sweep", "0,1", "--out", out2.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let (h, a) = read_csv(&out);
    let (_, b) = read_csv(&out2);
    let c = column(&h, "snr_oracle");
    for (ra, rb) in a.iter().zip(&b) {
        assert!((num(&ra[c]) - num(&rb[c])).abs() < 1e-12);
    }
    // the closed-form density column is only available for the example
    assert_eq!(a[0][column(&h, "snr_rho")], "");
    assert_ne!(b[0][column(&h, "snr_rho")], "");
}

#[test]
fn snr_curve_values_and_summary_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve.csv");
    let o = weakmeter(&["snr-curve", "--w", "8", "--k", "0.01", "--sweep", "0,0.5,1,2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let (h, rows) = read_csv(&out);
    assert_eq!(rows.len(), 4);
    let summary = text(&o.stdout);
    for row in &rows {
        let oracle = row[column(&h, "snr_oracle")].clone();
        let rho = num(&row[column(&h, "snr_rho")]);
        // the oracle and the closed-form density agree far below the validity scale
        assert!((num(&oracle) - rho).abs() < 1e-8 * rho);
        // summary shows the same value, not a re-rounded one
        let shown = format!("oracle {}", num(&oracle));
        assert!(summary.contains(&shown), "{shown} not in {summary}");
    }
}

#[test]
fn csv_reals_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve.csv");
    weakmeter(&["snr-curve", "--w", "3", "--k", "0.05", "--sweep", "0.3", "--out", out.to_str().unwrap()]);
    let (_, rows) = read_csv(&out);
    for field in &rows[0] {
        if let Ok(x) = field.parse::<f64>() {
            if field.contains('e') {
                assert_eq!(format!("{x:.16e}"), *field);
            }
        }
    }
}

#[test]
fn montecarlo_comparison_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mc.csv");
    let o = weakmeter(&[
        "montecarlo", "--w", "8", "--k", "0.01", "--delta", "1", "--sweep", "0,0.5,1,2", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let (h, rows) = read_csv(&out);
    assert_eq!(rows.len(), 4);
    let agree = column(&h, "agree");
    assert!(rows.iter().all(|r| r[agree] == "true"), "{rows:?}");
    let n = column(&h, "n_total");
    assert!(rows.iter().all(|r| r[n] == "1000000"));
}

#[test]
fn noiseless_point_analytic_within_validity_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mc.csv");
    let o = weakmeter(&["montecarlo", "--w", "8", "--k", "0.01", "--runs", "200000", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let (h, rows) = read_csv(&out);
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    let (a, or, v) = (
        num(&r[column(&h, "snr_analytic")]),
        num(&r[column(&h, "snr_oracle")]),
        num(&r[column(&h, "validity_lhs")]),
    );
    assert!((a - or).abs() <= 2.0 * v * or.abs());
    assert_eq!(r[column(&h, "noise_kind")], "none");
}

#[test]
fn seeds_control_montecarlo_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = weakmeter(&[
            "montecarlo", "--w", "8", "--k", "0.05", "--noise", "p:1", "--runs", "50000", "--seed", seed, "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("5", "a.csv"), run("5", "b.csv"));
    assert_ne!(run("5", "a.csv"), run("6", "c.csv"));
}

#[test]
fn backaction_mode() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.csv");
    let o = weakmeter(&["backaction", "--w", "8", "--k", "0.01", "--sweep", "-1,1,2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let (h, rows) = read_csv(&out);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[column(&h, "agree")] == "true"));
    let snr = column(&h, "snr_analytic");
    assert_eq!(num(&rows[0][snr]), -num(&rows[1][snr]));
}

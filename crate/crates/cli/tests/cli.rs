use std::path::Path;
use std::process::{Command, Output};

fn sphex(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sphex"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn values(o: &Output) -> Vec<f64> {
    stdout(o).lines().map(|l| l.parse().unwrap()).collect()
}

#[test]
fn fit_and_eval_first_coordinate() {
    let dir = tempfile::tempdir().unwrap();
    let o = sphex(
        dir.path(),
        &[
            "fit", "--d", "3", "--q", "1", "--oracle", "coord1", "--s", "32", "--seed", "7",
            "--out", "m.shex",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("s = 32") && out.contains("beta = 4"), "{out}");
    assert!(
        out.contains("condition = ") && out.contains("residual_norm = "),
        "{out}"
    );

    std::fs::write(
        dir.path().join("p.txt"),
        "# query\n1 0 0\n0.6 0 0.8\n\n0 0.28 0.96  # trailing\n",
    )
    .unwrap();
    let o = sphex(
        dir.path(),
        &["eval", "--model", "m.shex", "--points", "p.txt"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = values(&o);
    assert_eq!(v.len(), 3);
    for (got, want) in v.iter().zip([1.0, 0.6, 0.0]) {
        assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
    }
    // 17 significant digits
    assert!(stdout(&o)
        .lines()
        .all(|l| l.split('e').next().unwrap().trim_start_matches('-').len() == 18));
}

#[test]
fn constant_model_from_samples_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("# x y value\n");
    for k in 0..12 {
        let t = k as f64 * std::f64::consts::PI / 6.0;
        text.push_str(&format!("{:.17e} {:.17e} 1\n", t.cos(), t.sin()));
    }
    std::fs::write(dir.path().join("s.txt"), text).unwrap();
    let o = sphex(
        dir.path(),
        &[
            "fit",
            "--d",
            "2",
            "--q",
            "3",
            "--samples-file",
            "s.txt",
            "--out",
            "c.shex",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("uniform"), "{}", stderr(&o));
    std::fs::write(dir.path().join("p.txt"), "0.6 0.8\n-1 0\n").unwrap();
    let o = sphex(
        dir.path(),
        &["eval", "--model", "c.shex", "--points", "p.txt"],
    );
    for v in values(&o) {
        assert!((v - 1.0).abs() <= 1e-10, "{v}");
    }
}

#[test]
fn input_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.csv"), "").unwrap();
    let o = sphex(
        dir.path(),
        &[
            "fit",
            "--d",
            "3",
            "--q",
            "2",
            "--samples-file",
            "empty.csv",
            "--out",
            "x.shex",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("x.shex").exists());

    std::fs::write(dir.path().join("off.txt"), "1 0 0 1\n0.5 0.5 0 1\n").unwrap();
    let o = sphex(
        dir.path(),
        &[
            "fit",
            "--d",
            "3",
            "--q",
            "1",
            "--samples-file",
            "off.txt",
            "--out",
            "x.shex",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let o = sphex(
        dir.path(),
        &[
            "fit", "--d", "3", "--q", "2", "--oracle", "const", "--s", "0", "--out", "x.shex",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    let o = sphex(
        dir.path(),
        &[
            "fit", "--d", "3", "--q", "2", "--oracle", "bogus", "--s", "5", "--out", "x.shex",
        ],
    );
    assert_eq!(o.status.code(), Some(1));

    sphex(
        dir.path(),
        &[
            "fit", "--d", "3", "--q", "0", "--oracle", "const", "--s", "4", "--out", "m.shex",
        ],
    );
    std::fs::write(dir.path().join("p.txt"), "1 0 0\n0 1\n").unwrap();
    let o = sphex(
        dir.path(),
        &["eval", "--model", "m.shex", "--points", "p.txt"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let o = sphex(
        dir.path(),
        &["eval", "--model", "missing.shex", "--points", "p.txt"],
    );
    assert_eq!(o.status.code(), Some(3));
    let o = sphex(
        dir.path(),
        &[
            "fit",
            "--d",
            "3",
            "--q",
            "1",
            "--oracle",
            "const",
            "--s",
            "8",
            "--out",
            "no/such/dir/m.shex",
        ],
    );
    assert_eq!(o.status.code(), Some(3));

    std::fs::write(dir.path().join("junk.shex"), b"SHEX\x01\0\0\0").unwrap();
    std::fs::write(dir.path().join("q.txt"), "1 0 0\n").unwrap();
    let o = sphex(
        dir.path(),
        &["eval", "--model", "junk.shex", "--points", "q.txt"],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn zonal_oracles() {
    let dir = tempfile::tempdir().unwrap();
    let o = sphex(
        dir.path(),
        &[
            "fit",
            "--d",
            "4",
            "--q",
            "3",
            "--oracle",
            "zonal:3:5",
            "--s",
            "200",
            "--out",
            "z.shex",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("rank = 30"), "{}", stdout(&o));
    let o = sphex(
        dir.path(),
        &[
            "fit",
            "--d",
            "4",
            "--q",
            "3",
            "--oracle",
            "zonal-plus-noise:3:5",
            "--s",
            "200",
            "--out",
            "n.shex",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn check_suites() {
    let dir = tempfile::tempdir().unwrap();
    let o = sphex(
        dir.path(),
        &["check", "--suite", "dims", "--d", "3", "--q", "10"],
    );
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(
        out.lines()
            .filter(|l| !l.starts_with("summary"))
            .all(|l| l.ends_with("PASS")),
        "{out}"
    );
    assert!(out.ends_with("0 failed\n"));

    let o = sphex(
        dir.path(),
        &["check", "--suite", "leverage", "--d", "4", "--q", "6"],
    );
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let vals: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("leverage,"))
        .map(|l| l.split(", ").nth(2).unwrap())
        .collect();
    assert_eq!(vals.len(), 2);
    assert_eq!(vals[0], vals[1]);
    let expect = 140.0 / (2.0 * std::f64::consts::PI.powi(2));
    assert!((vals[0].parse::<f64>().unwrap() - expect).abs() <= 1e-12 * expect);

    let o = sphex(
        dir.path(),
        &["check", "--suite", "orthogonality", "--d", "3", "--q", "4"],
    );
    assert_eq!(o.status.code(), Some(0));
    let o = sphex(
        dir.path(),
        &[
            "check",
            "--suite",
            "reproducing",
            "--d",
            "3",
            "--q",
            "3",
            "--mc-samples",
            "20000",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    let o = sphex(dir.path(), &["check", "--suite", "nonsense"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn phase_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "phase", "--d-list", "3", "--q-min", "2", "--q-max", "3", "--s-min", "10", "--s-max", "80",
        "--s-step", "10", "--trials", "20", "--seed", "4",
    ];
    let run = |csv: &str| {
        let mut a = args.to_vec();
        a.extend(["--out-csv", csv, "--out-plot", "plot.gp"]);
        let o = sphex(dir.path(), &a);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read(dir.path().join(csv)).unwrap()
    };
    let a = run("a.csv");
    let b = run("b.csv");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with(
        "d,q,s,beta,trials,successes,success_rate,median_error,max_error,wall_time_ms\n"
    ));
    assert_eq!(text.lines().count(), 1 + 2 * 8);
    assert!(std::fs::read_to_string(dir.path().join("plot.gp"))
        .unwrap()
        .contains("$rate_d3"));

    let o = sphex(dir.path(), &args);
    assert_eq!(stdout(&o).as_bytes(), text.as_bytes());

    let mut bad = args.to_vec();
    bad[14] = "0";
    assert_eq!(bad[13], "--trials");
    let o = sphex(dir.path(), &bad);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_documents_every_command() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["fit", "eval", "check", "phase"] {
        let o = sphex(dir.path(), &[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        assert!(stdout(&o).len() > 200, "{cmd}");
    }
}

use std::path::Path;
use std::process::{Command, Output};

fn rankest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankest"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = rankest(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_kind(out: &Output) -> String {
    assert!(!out.status.success());
    let v: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert!(v["error"].is_string());
    v["kind"].as_str().unwrap().to_string()
}

fn simulate(dir: &Path, name: &str, family: &str, extra: &[&str]) -> String {
    let path = dir.join(format!("{name}.rank"));
    let p = path.to_str().unwrap().to_string();
    let mut args = vec![
        "simulate",
        "--family",
        family,
        "--num-items",
        "300",
        "--num-users",
        "500",
        "--name",
        name,
        "--out",
        &p,
    ];
    args.extend(extra);
    ok(&args);
    p
}

#[test]
fn simulate_writes_rank_files() {
    let dir = tempfile::tempdir().unwrap();
    let global = simulate(dir.path(), "g", "zipf:1.1", &["--seed", "3"]);
    let text = std::fs::read_to_string(&global).unwrap();
    assert!(text
        .starts_with("#rankfile v1 kind=global N=300 n=300 scheme=wor algo=g dataset=synthetic\n"));
    assert_eq!(text.lines().count(), 501);

    let sampled = simulate(dir.path(), "s", "uniform", &["--n", "30", "--scheme", "wr"]);
    let text = std::fs::read_to_string(&sampled).unwrap();
    assert!(text.starts_with("#rankfile v1 kind=sampled N=300 n=30 scheme=wr algo=s"));
    assert!(text
        .lines()
        .skip(1)
        .all(|l| (1..=30).contains(&l.parse::<usize>().unwrap())));
}

#[test]
fn estimate_reports_every_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let global = simulate(dir.path(), "g", "zipf:1.0", &[]);
    let out_dir = dir.path().join("est");
    let stdout = ok(&[
        "estimate",
        "--input",
        &global,
        "--n",
        "30",
        "--k",
        "5,10",
        "--metrics",
        "recall",
        "--r-max",
        "40",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(stdout.contains("Recall@5") && stdout.contains("Recall@10"));
    let csv = std::fs::read_to_string(out_dir.join("estimates.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "Metric,Exact,BV 0.1,BV 0.01,MLE,WMLE,MES"
    );
    let pmf = std::fs::read_to_string(out_dir.join("pmf.csv")).unwrap();
    assert_eq!(pmf.lines().count(), 41);

    let sampled = simulate(dir.path(), "s", "zipf:1.0", &["--n", "30"]);
    let stdout = ok(&[
        "estimate",
        "--input",
        &sampled,
        "--estimators",
        "mle,sampled",
        "--k",
        "3",
    ]);
    let header: Vec<&str> = stdout.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["Metric", "MLE", "Sampled"]);
}

#[test]
fn plan_commands_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a", "zipf:1.3", &["--seed", "1"]);
    let b = simulate(dir.path(), "b", "zipf:0.9", &["--seed", "2"]);
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "seed = 5\nrepeats = 3\nn = 30\nks = [5, 10]\nr_max = 50\nsweep_sizes = [20, 60]\n\
         [[inputs]]\nname = \"a\"\npath = \"a.rank\"\n\
         [[inputs]]\nname = \"b\"\npath = \"b.rank\"\n",
    )
    .unwrap();
    let cfg = config.to_str().unwrap();
    let mut runs = Vec::new();
    for run in ["one", "two"] {
        let out = dir.path().join(run);
        let o = out.to_str().unwrap();
        for sub in ["table", "winners", "distaccuracy", "sweep"] {
            ok(&[sub, "--config", cfg, "--out-dir", o, "--svg"]);
        }
        runs.push(out);
    }
    let mut names: Vec<String> = std::fs::read_dir(&runs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    for name in [
        "estimates.csv",
        "table.csv",
        "winners.csv",
        "sweep.csv",
        "dist_a_n30.csv",
        "dist_b_n60.svg",
    ] {
        assert!(
            names.iter().any(|n| n == name),
            "{name} missing from {names:?}"
        );
    }
    for name in &names {
        let x = std::fs::read(runs[0].join(name)).unwrap();
        let y = std::fs::read(runs[1].join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }

    let out = dir.path().join("flags");
    ok(&[
        "winners",
        "--input",
        &a,
        "--input",
        &b,
        "--repeats",
        "2",
        "--n",
        "25",
        "--k",
        "1",
        "--estimators",
        "mle,bv:0.1",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    let winners = std::fs::read_to_string(out.join("winners.csv")).unwrap();
    assert_eq!(winners.lines().next().unwrap(), "K,Metric,MLE,BV 0.1");
    assert_eq!(winners.lines().count(), 4);
}

#[test]
fn failures_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.rank");
    assert_eq!(
        error_kind(&rankest(&[
            "estimate",
            "--input",
            missing.to_str().unwrap()
        ])),
        "io"
    );
    assert_eq!(error_kind(&rankest(&["table"])), "config");
    assert_eq!(error_kind(&rankest(&["bogus"])), "usage");

    let bad = dir.path().join("bad.rank");
    std::fs::write(
        &bad,
        "#rankfile v1 kind=global N=10 n=10 scheme=wor algo=x dataset=y\n3\n0\n",
    )
    .unwrap();
    let out = rankest(&["table", "--input", bad.to_str().unwrap()]);
    assert_eq!(error_kind(&out), "parse");
    assert!(String::from_utf8_lossy(&out.stderr).contains(":3:"));

    let global = simulate(dir.path(), "g", "uniform", &[]);
    let out = rankest(&[
        "table",
        "--input",
        &global,
        "--estimators",
        "nope",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(error_kind(&out), "config");
    let out = rankest(&[
        "table",
        "--input",
        &global,
        "--n",
        "1000",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(error_kind(&out), "config");
    assert_eq!(
        error_kind(&rankest(&["estimate", "--input", &global])),
        "config"
    );
    assert_eq!(rankest(&["--help"]).status.code(), Some(0));
}

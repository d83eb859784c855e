use std::path::Path;
use std::process::{Command, Output};

fn drf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drf"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("failed to run drf")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = drf(dir, args);
    assert!(
        out.status.success(),
        "drf {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    drf(dir, args).status.code().unwrap()
}

const SMALL: &[&str] = &["--num-trees", "200", "--num-groups", "20"];

fn fitted(dir: &Path) {
    ok(dir, &["--seed", "4", "simulate", "--dgp", "cate_hetero", "-n", "300", "-o", "d.csv"]);
    let mut args = vec!["fit", "--data", "d.csv", "--roles", "x,x,x,x,x,y,w", "-o", "m.drf"];
    args.extend_from_slice(SMALL);
    ok(dir, &args);
}

#[test]
fn simulate_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(dir.path(), &["--seed", "1", "simulate", "--dgp", "gauss_copula", "-n", "50"]);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,x2,x3,x4,x5,y1,y2"));
    assert_eq!(lines.count(), 50);
    assert_eq!(text, ok(dir.path(), &["simulate", "--seed", "1", "--dgp", "gauss_copula", "-n", "50"]));
}

#[test]
fn weights_form_a_distribution() {
    let dir = tempfile::tempdir().unwrap();
    fitted(dir.path());
    let text = ok(dir.path(), &["weights", "--model", "m.drf", "--x", "0.5,0.5,0.5,0.5,0.5", "--groups"]);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap().len(), 2 + 20);
    let mut total = 0.0;
    let mut rows = 0;
    for rec in rdr.records() {
        let w: f64 = rec.unwrap()[1].parse().unwrap();
        assert!(w >= 0.0);
        total += w;
        rows += 1;
    }
    assert_eq!(rows, 300);
    assert!((total - 1.0).abs() < 1e-9, "{total}");
}

#[test]
fn infer_emits_one_record_per_point() {
    let dir = tempfile::tempdir().unwrap();
    fitted(dir.path());
    let text = ok(
        dir.path(),
        &[
            "infer", "--model", "m.drf", "--target", "cate:y|w", "--x", "0.7,0.5,0.5,0.5,0.5", "--x",
            "0.3,0.5,0.5,0.5,0.5", "--null", "0", "--alpha", "0.1",
        ],
    );
    let recs: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.len(), 2);
    for r in &recs {
        let est = r["estimate"][0].as_f64().unwrap();
        let (lo, hi) = (r["lower"][0].as_f64().unwrap(), r["upper"][0].as_f64().unwrap());
        assert!(lo <= est && est <= hi);
        assert_eq!(r["alpha"], 0.1);
        assert_eq!(r["effective_b"].as_u64().unwrap() + r["dropped"].as_u64().unwrap(), 20);
        assert!(r["ellipsoid"]["statistic"].as_f64().unwrap() >= 0.0);
        assert_eq!(r["covariance"][0].as_array().unwrap().len(), 1);
    }
}

#[test]
fn codite_writes_result_and_band() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--seed", "2", "simulate", "--dgp", "cate_null", "-n", "300", "-o", "d.csv"]);
    let mut args = vec![
        "codite", "--data", "d.csv", "--covariates", "x1,x2,x3,x4,x5", "--responses", "y", "--treatment", "w",
        "--x", "0.5,0.5,0.5,0.5,0.5", "--band", "band.csv", "--grid-points", "51",
    ];
    args.extend_from_slice(SMALL);
    let text = ok(dir.path(), &args);
    let r: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    let p = r["p_value"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
    assert_eq!(r["n0"].as_u64().unwrap() + r["n1"].as_u64().unwrap(), 300);
    let band = std::fs::read_to_string(dir.path().join("band.csv")).unwrap();
    let mut lines = band.lines();
    assert_eq!(lines.next(), Some("y,witness,lower,upper"));
    assert_eq!(lines.count(), 51);
}

#[test]
fn codite_needs_probes_for_multivariate_responses() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--dgp", "gauss_copula", "-n", "40", "-o", "d.csv"]);
    std::fs::write(dir.path().join("d2.csv"), {
        let text = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
        text.lines()
            .enumerate()
            .map(|(i, l)| if i == 0 { format!("{l},w\n") } else { format!("{l},{}\n", i % 2) })
            .collect::<String>()
    })
    .unwrap();
    let args = [
        "codite", "--data", "d2.csv", "--roles", "x,x,x,x,x,y,y,w", "--x", "0,0,0,0,0", "--band", "b.csv",
        "--num-trees", "20", "--num-groups", "10", "--min-node-size", "2",
    ];
    assert_eq!(code(dir.path(), &args), 1);
    std::fs::write(dir.path().join("probes.txt"), "0,0\n1,-1\n").unwrap();
    let mut with_probes = args.to_vec();
    with_probes.extend_from_slice(&["--probes", "probes.txt"]);
    ok(dir.path(), &with_probes);
    let band = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert!(band.starts_with("y1,y2,witness,lower,upper\n"));
    assert_eq!(band.lines().count(), 3);
}

#[test]
fn thread_count_does_not_change_the_model() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--dgp", "quantile_shift", "-n", "200", "-o", "d.csv"]);
    for t in ["1", "3"] {
        let out = format!("m{t}.drf");
        let mut args = vec!["--threads", t, "fit", "--data", "d.csv", "--roles", "x,x,x,x,x,y", "-o", &out];
        args.extend_from_slice(SMALL);
        ok(dir.path(), &args);
    }
    let a = std::fs::read(dir.path().join("m1.drf")).unwrap();
    let b = std::fs::read(dir.path().join("m3.drf")).unwrap();
    assert!(a == b);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "# defaults\nseed = 11\nalpha = 0.2\n").unwrap();
    let from_file = ok(dir.path(), &["--config", "run.cfg", "simulate", "--dgp", "cate_null", "-n", "20"]);
    let direct = ok(dir.path(), &["--seed", "11", "simulate", "--dgp", "cate_null", "-n", "20"]);
    let overridden = ok(
        dir.path(),
        &["--config", "run.cfg", "--seed", "12", "simulate", "--dgp", "cate_null", "-n", "20"],
    );
    assert_eq!(from_file, direct);
    assert_ne!(from_file, overridden);
}

#[test]
fn unknown_config_key_lists_valid_keys() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "num_tres = 10\n").unwrap();
    let out = drf(dir.path(), &["--config", "bad.cfg", "simulate", "--dgp", "cate_null", "-n", "5"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("num_tres") && err.contains("num_trees") && err.contains("split_mode"), "{err}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(dir.path(), &["--help"]), 0);
    assert_eq!(code(dir.path(), &["fit", "--frobnicate"]), 1);
    assert_eq!(code(dir.path(), &["simulate", "--dgp", "nonsense", "-n", "5"]), 1);
    assert_eq!(code(dir.path(), &["fit", "--data", "missing.csv", "--roles", "x,y", "-o", "m"]), 2);

    std::fs::write(dir.path().join("bad.csv"), "a,b\n1,2\n3,oops\n").unwrap();
    assert_eq!(code(dir.path(), &["fit", "--data", "bad.csv", "--roles", "x,y", "-o", "m"]), 2);
    assert_eq!(code(dir.path(), &["fit", "--data", "bad.csv", "--roles", "x,y,y", "-o", "m"]), 2);

    fitted(dir.path());
    // 20 groups are too few for a quantile interval at this level.
    let q = [
        "infer", "--model", "m.drf", "--target", "mean:y", "--x", "0.5,0.5,0.5,0.5,0.5", "--interval", "quantile",
    ];
    assert_eq!(code(dir.path(), &q), 3);
    assert_eq!(code(dir.path(), &["infer", "--model", "m.drf", "--target", "mean:y", "--x", "0.5"]), 1);
    assert_eq!(code(dir.path(), &["infer", "--model", "m.drf", "--target", "mean:z", "--x", "0,0,0,0,0"]), 1);
    assert_eq!(code(dir.path(), &["weights", "--model", "d.csv", "--x", "0,0,0,0,0"]), 2);
}

#[test]
fn coverage_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("exp.cfg"),
        "dgp = cate_null\nn = 150\nprobes = 0.5,0.5,0.5,0.5,0.5\ntarget = mean:y\nreps = 10\nnum_groups = 10\nnum_trees = 40\n",
    )
    .unwrap();
    let text = ok(dir.path(), &["--seed", "3", "coverage", "exp.cfg"]);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    assert!(headers.iter().any(|h| h == "rate"));
    let recs: Vec<_> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(recs.len(), 1);
    let rate: f64 = recs[0][headers.iter().position(|h| h == "rate").unwrap()].parse().unwrap();
    assert!((0.0..=1.0).contains(&rate));
}

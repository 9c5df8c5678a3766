use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lmdu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmdu")).args(args).output().expect("binary runs")
}

fn write_inputs(dir: &Path) {
    let mut y = String::from("a,b,c,d\n");
    let mut x = String::from("x1,x2\n");
    // a deterministic spread of predictor values with noisy thresholds
    for i in 0..30 {
        let t1 = (i as f64 * 0.37).sin() * 2.0;
        let t2 = (i as f64 * 0.91).cos() * 2.0;
        let bits = [t1 > -0.5, t2 > 0.3, t1 + t2 > 0.0, (i * 7) % 5 != 0];
        let row: Vec<&str> = bits.iter().map(|&b| if b { "1" } else { "0" }).collect();
        y.push_str(&row.join(","));
        y.push('\n');
        x.push_str(&format!("{t1},{t2}\n"));
    }
    fs::write(dir.join("y.csv"), y).unwrap();
    fs::write(dir.join("x.csv"), x).unwrap();
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let y = path(dir.path(), "y.csv");
    let missing = path(dir.path(), "none.json");
    assert_eq!(lmdu(&["diagnose", "--model", &missing, "--responses", &y]).status.code(), Some(2));
    assert_eq!(lmdu(&["fit", "--responses", &y, "--dim", "0"]).status.code(), Some(2));
    let out = path(dir.path(), "sim");
    assert_eq!(lmdu(&["simulate", "--design", &y, "--kind", "bogus", "--out", &out]).status.code(), Some(2));
    assert_eq!(lmdu(&["fit"]).status.code(), Some(2));
}

#[test]
fn fit_is_deterministic_and_feeds_diagnose() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let y = path(dir.path(), "y.csv");
    let x = path(dir.path(), "x.csv");
    let run = |name: &str| {
        let model = path(dir.path(), name);
        let o = lmdu(&["fit", "--responses", &y, "--predictors", &x, "--starts", "3", "--seed", "5", "--out", &model]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (String::from_utf8(o.stdout).unwrap(), fs::read_to_string(&model).unwrap())
    };
    let (table1, model1) = run("m1.json");
    let (table2, model2) = run("m2.json");
    assert_eq!(table1, table2);
    assert_eq!(model1, model2);
    assert!(table1.contains("deviance"));

    let model = path(dir.path(), "m1.json");
    let metrics = path(dir.path(), "metrics.csv");
    let residuals = path(dir.path(), "residuals.csv");
    let o = lmdu(&[
        "diagnose",
        "--model",
        &model,
        "--responses",
        &y,
        "--predictors",
        &x,
        "--metrics",
        &metrics,
        "--residuals",
        &residuals,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&metrics).unwrap();
    // header plus one line per item
    assert_eq!(text.lines().count(), 5);
    assert!(fs::read_to_string(&residuals).unwrap().lines().count() > 1);
}

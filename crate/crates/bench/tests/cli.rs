use std::path::Path;
use std::process::{Command, Output};

fn rmee(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmee"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_fit_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    let test = dir.path().join("test.csv");
    let model = dir.path().join("model.txt");
    let preds = dir.path().join("preds.csv");

    let o = rmee(&[
        "gen-toy",
        "--n",
        "200",
        "--d",
        "3",
        "--seed",
        "4",
        "--out",
        p(&train),
        "--test-out",
        p(&test),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = rmee(&[
        "fit",
        "--data",
        p(&train),
        "--criterion",
        "rmee",
        "--sigma",
        "0.4",
        "--save-model",
        p(&model),
        "--max-outer-iters",
        "20",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l == "criterion rmee"), "{out}");
    assert!(out.lines().any(|l| l.starts_with("phi ")), "{out}");
    let train_acc: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("train_accuracy "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(train_acc > 0.9, "{out}");

    let o = rmee(&[
        "predict",
        "--model",
        p(&model),
        "--data",
        p(&test),
        "--positive",
        "1",
        "--out",
        p(&preds),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let acc: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("accuracy "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(acc > 0.9);
    let written = std::fs::read_to_string(&preds).unwrap();
    assert_eq!(written.lines().count(), 201);
    for line in written.lines().skip(1) {
        let (prob, label) = line.split_once(',').unwrap();
        let prob: f64 = prob.parse().unwrap();
        assert!((0.0..=1.0).contains(&prob));
        assert_eq!(label, if prob >= 0.5 { "1" } else { "0" });
    }
}

#[test]
fn bench_writes_results_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let out = dir.path().join("results.csv");
    let o = rmee(&["gen-toy", "--n", "60", "--d", "2", "--out", p(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = rmee(&[
        "bench",
        "--data",
        p(&data),
        "--criteria",
        "ce,rmee",
        "--reps",
        "2",
        "--contaminate",
        "none",
        "--contaminate",
        "attribute:100:0.2",
        "--max-outer-iters",
        "5",
        "--out",
        p(&out),
        "--plot-prefix",
        p(&dir.path().join("plot")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "criterion,mode,parameter,proportion,mean_acc,std_acc,reps"
    );
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.ends_with(",2")));
    let plots: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".dat"))
        .collect();
    assert!(!plots.is_empty());
}

#[test]
fn errors_are_one_line_with_nonzero_exit() {
    let o = rmee(&["fit", "--data", "/nonexistent/file.csv", "--sigma", "0.4"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[io]: "), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "1,2,1\n3,4,0\n").unwrap();
    let o = rmee(&["fit", "--data", p(&data), "--sigma", "-1"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[invalid-argument]: "), "{err}");

    let o = rmee(&["fit", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).lines().count(), 1);

    let o = rmee(&["--help"]);
    assert!(o.status.success());
}

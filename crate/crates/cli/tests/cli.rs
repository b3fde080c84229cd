use std::path::Path;
use std::process::{Command, Output};

fn hetvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetvar")).args(args).env_remove("HETVAR_THREADS").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn simulate(dir: &Path, seed: &str) {
    let out = dir.to_str().unwrap();
    let o = hetvar(&["simulate", "--n", "150", "--seed", seed, "--out", out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn help_exits_zero() {
    let o = hetvar(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for verb in ["fit", "select", "simulate", "study", "evaluate", "paths"] {
        assert!(text.contains(verb), "{verb} missing from help");
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = hetvar(&["select", "--data", "d.csv", "--response", "y", "--bogus"]);
    assert_eq!(code(&o), 64);
    assert!(stderr(&o).contains("--bogus"));
}

#[test]
fn bernoulli_prior_needs_both_probabilities() {
    let o = hetvar(&["select", "--prior", "bernoulli", "--pi-mu", "0.2"]);
    assert_eq!(code(&o), 64);
    assert!(stderr(&o).contains("--pi-sigma"));
}

#[test]
fn minimal_select_parses_and_reports_missing_file_as_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("d.csv");
    let o = hetvar(&["select", "--data", missing.to_str().unwrap(), "--response", "y", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn nan_cell_is_a_data_error_naming_the_cell() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "y,a,b\n1,2,3\n2,NaN,1\n3,4,2\n4,1,1\n").unwrap();
    let o = hetvar(&["fit", "--data", data.to_str().unwrap(), "--response", "y", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let e = stderr(&o);
    assert!(e.contains("'a'") && e.contains("row 2"), "{e}");
}

#[test]
fn select_evaluate_and_paths_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "5");
    let train = dir.path().join("train.csv");
    let sel = dir.path().join("sel");
    let o = hetvar(&[
        "select", "--data", train.to_str().unwrap(), "--response", "y", "--restrict", "--out", sel.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["path.csv", "coefficients.csv", "solution_paths.csv", "summary.csv", "result.json"] {
        assert!(sel.join(f).exists(), "{f}");
    }
    let path = read(&sel.join("path.csv"));
    assert!(path.starts_with("step,phase,iteration,action,predictor,name,one_step_score,exact_score,elbo,log_prior\n"));
    assert!(read(&sel.join("coefficients.csv")).starts_with("name,mu,sd,model\n"));

    let paths = dir.path().join("paths.csv");
    let o = hetvar(&["paths", "--result", sel.join("result.json").to_str().unwrap(), "--out", paths.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read(&paths), read(&sel.join("solution_paths.csv")));

    let metrics = dir.path().join("metrics.csv");
    let o = hetvar(&[
        "evaluate",
        "--result",
        sel.join("result.json").to_str().unwrap(),
        "--data",
        dir.path().join("valid.csv").to_str().unwrap(),
        "--out",
        metrics.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = read(&metrics);
    let mse: f64 = m.lines().find(|l| l.starts_with("mse,")).unwrap()[4..].parse().unwrap();
    assert!(mse > 0.0 && mse < 2.0, "{m}");
}

#[test]
fn non_convergence_exits_two_and_keeps_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "6");
    let out = dir.path().join("fit");
    let o = hetvar(&[
        "fit",
        "--data",
        dir.path().join("train.csv").to_str().unwrap(),
        "--response",
        "y",
        "--max-outer-iters",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let trace = read(&out.join("trace.csv"));
    assert!(trace.starts_with("iteration,elbo,alpha_accepted\n"));
    assert_eq!(trace.lines().count(), 3);
}

#[test]
fn config_file_supplies_flags_and_command_line_overrides() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "7");
    let train = dir.path().join("train.csv");
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        format!("# run settings\ndata = {}\nresponse = y\nmax_outer_iters = 1\n", train.display()),
    )
    .unwrap();
    let out = dir.path().join("a");
    let o = hetvar(&["fit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "config value should apply: {}", stderr(&o));
    let o = hetvar(&["fit", "--config", cfg.to_str().unwrap(), "--max-outer-iters", "200", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "command line should win: {}", stderr(&o));

    std::fs::write(&cfg, "data = x.csv\nno_such_flag = 3\n").unwrap();
    let o = hetvar(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 64);
    assert!(stderr(&o).contains("no-such-flag"));
}

#[test]
fn identical_runs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_hetvar"))
            .args(["study", "--replications", "6", "--n", "80", "--seed", "11", "--out", out.to_str().unwrap()])
            .env("HETVAR_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        (read(&out.join("records.csv")), read(&out.join("summary.csv")))
    };
    let a = run("a", "1");
    let b = run("b", "3");
    assert_eq!(a, b);
    assert_eq!(a.0.lines().count(), 7);
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_hetvar")).arg("--help").env("HETVAR_THREADS", "zero").output().unwrap();
    assert_eq!(code(&o), 64);
}

#[test]
fn homoscedastic_select_keeps_variance_intercept_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = hetvar(&["simulate", "--scenario", "sparse", "--p", "20", "--n", "100", "--sigma", "1", "--seed", "2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sel = dir.path().join("sel");
    let o = hetvar(&[
        "select",
        "--data",
        dir.path().join("train.csv").to_str().unwrap(),
        "--response",
        "y",
        "--homoscedastic",
        "--out",
        sel.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = read(&sel.join("summary.csv"));
    assert!(summary.contains("mean_selected,x1 x2 x3 x4 x5\n"), "{summary}");
    assert!(summary.contains("var_selected,\n"), "{summary}");
}

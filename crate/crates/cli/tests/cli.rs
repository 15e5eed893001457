use std::path::Path;
use std::process::{Command, Output};

fn recipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recipe"))
        .args(args)
        .env_remove("RECIPE_SEED")
        .output()
        .expect("spawn recipe")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn shifted_soliton_three() {
    let o = recipe(&["dist", "shifted-soliton", "--K", "3"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let mu3: Vec<f64> = v["mu"][2].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    for (got, want) in mu3.iter().zip([0.5, 1.0 / 6.0, 1.0 / 3.0]) {
        assert_eq!(*got, want);
    }
}

#[test]
fn infeasible_check_exits_two_with_violations() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("is.json");
    assert!(recipe(&["dist", "ideal-soliton", "--K", "3", "-o", p(&seq)]).status.success());
    let o = recipe(&["check", p(&seq)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("i=3 d=1"));

    let ss = dir.path().join("ss.json");
    assert!(recipe(&["dist", "shifted-soliton", "--K", "20", "-o", p(&ss)]).status.success());
    let o = recipe(&["check", p(&ss)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "feasible\n");

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"K": 2, "mu": [[1.0], [0.2, 0.2]]}"#).unwrap();
    assert_eq!(recipe(&["check", p(&bad)]).status.code(), Some(2));
    std::fs::write(&bad, "not json").unwrap();
    assert_eq!(recipe(&["check", p(&bad)]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(recipe(&["--no-such-flag"]).status.code(), Some(1));
    assert_eq!(recipe(&["dist", "pint", "--K", "4"]).status.code(), Some(1));
    assert_eq!(recipe(&["gen-avst"]).status.code(), Some(1));
    assert_eq!(recipe(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_is_a_runtime_error() {
    assert_eq!(recipe(&["check", "/nonexistent/seq.json"]).status.code(), Some(3));
}

#[test]
fn evaluate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let ss = dir.path().join("ss.json");
    assert!(recipe(&["dist", "shifted-soliton", "--K", "8", "-o", p(&ss)]).status.success());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = recipe(&["evaluate", "--seq", p(&ss), "--K", "8", "--trials", "1000", "--seed", "1", "-o", p(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("scheme,K,k,trials,mean,stderr,q99,incomplete_rate\n"));
    assert_eq!(text.lines().count(), 9);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let ss = dir.path().join("ss.json");
    assert!(recipe(&["dist", "shifted-soliton", "--K", "6", "-o", p(&ss)]).status.success());
    let args = ["evaluate", "--seq", p(&ss), "--trials", "200"];
    let with_flag = recipe(&[&args[..], &["--seed", "11"]].concat());
    let with_env = Command::new(env!("CARGO_BIN_EXE_recipe"))
        .args(args)
        .env("RECIPE_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(with_flag.stdout, with_env.stdout);
    assert_ne!(with_flag.stdout, recipe(&args).stdout);
}

#[test]
fn simulate_then_decode_in_every_mode() {
    let dir = tempfile::tempdir().unwrap();
    let ss = dir.path().join("ss.json");
    let apa = dir.path().join("apa.json");
    let avst = dir.path().join("t.avst");
    assert!(recipe(&["dist", "shifted-soliton", "--K", "10", "-o", p(&ss)]).status.success());
    assert!(recipe(&["derive-apa", p(&ss), "-o", p(&apa)]).status.success());
    assert!(recipe(&["gen-avst", "--apa", p(&apa), "--rows", "500", "--seed", "4", "-o", p(&avst)]).status.success());
    assert_eq!(std::fs::metadata(&avst).unwrap().len(), 56 + (500 * 10usize).div_ceil(4) as u64);

    let cw = dir.path().join("cw.jsonl");
    let modes: [Vec<&str>; 3] = [
        vec!["--scheme", "recipe-d", "--apa", p(&apa)],
        vec!["--scheme", "recipe-t", "--avst", p(&avst), "--seq", p(&ss)],
        vec!["--scheme", "pint", "--alpha", "0.3", "--p", "0.2"],
    ];
    for mode in &modes {
        let sim = recipe(&[&["simulate"], &mode[..], &["--k", "7", "--seed", "5", "-o", p(&cw)]].concat());
        assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
        let trace = stdout(&sim);
        assert!(trace.contains("# complete"));
        let ids_line = trace.lines().find(|l| l.starts_with("# ids=")).unwrap();
        let truth: Vec<u64> = ids_line[6..].split(';').map(|s| s.parse().unwrap()).collect();

        let dec = recipe(&[&["decode"], &mode[..], &["--codewords", p(&cw), "--k", "7", "--seed", "5"]].concat());
        assert!(dec.status.success(), "{}", String::from_utf8_lossy(&dec.stderr));
        let v: serde_json::Value = serde_json::from_slice(&dec.stdout).unwrap();
        assert_eq!(v["complete"], true);
        let ids: Vec<u64> = v["ids"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
        assert_eq!(ids, truth);
    }
}

#[test]
fn avst_from_another_apa_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ss = dir.path().join("ss.json");
    let other = dir.path().join("pint.json");
    let avst = dir.path().join("t.avst");
    assert!(recipe(&["dist", "shifted-soliton", "--K", "5", "-o", p(&ss)]).status.success());
    assert!(recipe(&["dist", "pint", "--K", "5", "--alpha", "0.5", "--p", "0.3", "-o", p(&other)]).status.success());
    assert!(recipe(&["gen-avst", "--seq", p(&ss), "--rows", "50", "-o", p(&avst)]).status.success());
    let o = recipe(&["simulate", "--scheme", "recipe-t", "--avst", p(&avst), "--seq", p(&other), "--k", "3"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn search_writes_sequence_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.json");
    let o = recipe(&["search", "qps", "--K", "10", "--restarts", "2", "--iterations", "200", "-o", p(&q)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(recipe(&["check", p(&q)]).status.code(), Some(0));
    let trace = std::fs::read_to_string(dir.path().join("q.json.trace.csv")).unwrap();
    assert!(trace.starts_with("restart,iteration,objective\n"));

    let h = dir.path().join("h.json");
    let o = recipe(&["search", "hrs", "--K", "6", "--candidates", "10", "--trials", "50", "-o", p(&h)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(recipe(&["check", p(&h)]).status.code(), Some(0));
    assert!(dir.path().join("h.json.trace.csv").exists());
}

#[test]
fn compare_joins_curves_and_runs_table_study() {
    let dir = tempfile::tempdir().unwrap();
    let ss = dir.path().join("ss.json");
    let a = dir.path().join("a.csv");
    assert!(recipe(&["dist", "shifted-soliton", "--K", "4", "-o", p(&ss)]).status.success());
    assert!(recipe(&["evaluate", "--scheme", "pint", "--alpha", "1", "--p", "0.5", "--K", "4", "--trials", "100", "-o", p(&a)])
        .status
        .success());
    let o = recipe(&["compare", p(&a), "--seq", p(&ss), "--rows", "10,100", "--trials", "100"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 4 * 4);
    assert!(text.contains("recipe-t(L=100),4,4,100"));
    assert_eq!(recipe(&["compare", p(&ss)]).status.code(), Some(2));
}

#[test]
fn pmf_output() {
    let o = recipe(&["dist", "shifted-soliton", "--K", "2", "--pmf"]);
    assert_eq!(stdout(&o), "d,mass\n1,5.0000000000000000e-1\n2,5.0000000000000000e-1\n");
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nafsim::experiments::{read_long_csv, Arm, AGGREGATED_FILE, LONG_FILE, SEED_ENV};

fn nafsim(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nafsim"));
    c.args(args).env_remove(SEED_ENV).env("RUST_LOG", "error");
    c
}

fn run(mut c: Command) -> Output {
    c.output().expect("spawn nafsim")
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

fn write_plan(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("plan.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_SWEEP: &str = r#"
name = "small"
architectures = [[5]]
amplitudes = [0.0, 0.05]
modes = ["random-noise", "smooth-shape"]
n_runs = 2
base_seed = 4
waterlines = [0.05]

[dataset]
bundled = "quadratic"

[train]
max_epochs = 40
"#;

#[test]
fn featurize_h2_xyz() {
    let tmp = tempfile::tempdir().unwrap();
    let xyz = tmp.path().join("h2.xyz");
    std::fs::write(&xyz, "2\nh2 -1.17\nH 0 0 0\nH 0.74 0 0\n").unwrap();
    let out = tmp.path().join("h2.csv");
    let o = run(nafsim(&["featurize", "--input", p(&xyz), "--pad-to", "3", "--out", p(&out)]));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("id,f_1,f_2,f_3,target"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "h2");
    let e: Vec<f64> = row[1..4].iter().map(|s| s.parse().unwrap()).collect();
    assert!((e[0] - 1.2151).abs() < 1e-4 && (e[1] + 0.2151).abs() < 1e-4);
    assert_eq!(e[2], 0.0);
    assert_eq!(row[4], "-1.17");
}

#[test]
fn empty_input_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let xyz = tmp.path().join("empty.xyz");
    std::fs::write(&xyz, "").unwrap();
    let o = run(nafsim(&["featurize", "--input", p(&xyz), "--out", p(&tmp.path().join("x.csv"))]));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("no molecules"));
}

#[test]
fn malformed_xyz_names_the_record() {
    let tmp = tempfile::tempdir().unwrap();
    let xyz = tmp.path().join("bad.xyz");
    std::fs::write(&xyz, "1\nok\nH 0 0 0\n2\nbroken\nH 0 0 0\nH 0 zero 0\n").unwrap();
    let o = run(nafsim(&["featurize", "--input", p(&xyz), "--out", p(&tmp.path().join("x.csv"))]));
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("record"), "{}", stderr(&o));
}

fn reported_test_rmse(summary: &str) -> f64 {
    let tail = summary.split("test RMSE ").nth(1).expect("summary has a test RMSE");
    tail.split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn train_on_bundled_sine() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("train");
    let o = run(nafsim(&["train", "--dataset", "sine", "--arch", "10", "--seed", "1", "--out", p(&out)]));
    assert!(o.status.success(), "{}", stderr(&o));
    let rmse = reported_test_rmse(&stdout(&o));
    assert!(rmse < 0.02, "test RMSE {rmse}");
    assert!(out.join("network.json").exists());
    let report = std::fs::read_to_string(out.join("train_report.csv")).unwrap();
    assert!(report.starts_with("epoch,train_mse,val_mse,mu,accepted"));

    // retraining the saved network under perturbed NAFs
    let net = out.join("network.json");
    let o = run(nafsim(&[
        "retrain", "--dataset", "sine", "--network", p(&net), "--amplitude", "0.1", "--seed", "1", "--out",
        p(&tmp.path().join("re")),
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    let before: f64 = s.split("perturbed test RMSE ").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    let after = reported_test_rmse(s.split("retrained").nth(1).unwrap());
    assert!(after < before, "{s}");
}

#[test]
fn seed_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    let train = |extra: &[&str], env: Option<&str>, cfg_seed: Option<u64>| {
        let body = match cfg_seed {
            Some(s) => format!("base_seed = {s}\n[train]\nmax_epochs = 5\n"),
            None => "[train]\nmax_epochs = 5\n".into(),
        };
        std::fs::write(&cfg, body).unwrap();
        let mut args = vec!["train", "--dataset", "quadratic", "--config", p(&cfg), "--out", p(tmp.path())];
        args.extend_from_slice(extra);
        let mut c = nafsim(&args);
        if let Some(e) = env {
            c.env(SEED_ENV, e);
        }
        let o = run(c);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    assert!(train(&["--seed", "7"], Some("5"), Some(3)).contains("(seed 7)"));
    assert!(train(&[], Some("5"), Some(3)).contains("(seed 3)"));
    assert!(train(&[], Some("5"), None).contains("(seed 5)"));
    assert!(train(&[], None, None).contains("(seed 1)"));
}

#[test]
fn bad_seed_env_is_a_config_error() {
    let mut c = nafsim(&["train", "--dataset", "quadratic", "--epochs", "1"]);
    c.env(SEED_ENV, "not-a-number");
    assert_eq!(run(c).status.code(), Some(2));
}

#[test]
fn unreadable_plan_is_a_config_error() {
    let o = run(nafsim(&["gridsearch", "--plan", "/nonexistent/plan.toml"]));
    assert_eq!(o.status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let plan = write_plan(tmp.path(), "name = \"x\"\nunknown_key = 1\n");
    assert_eq!(run(nafsim(&["sweep", "--plan", p(&plan)])).status.code(), Some(2));
}

#[test]
fn zero_amplitude_sweep_matches_clean() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = write_plan(
        tmp.path(),
        "architectures = [[4]]\namplitudes = [0.0]\nbase_seed = 2\n[dataset]\nbundled = \"sine\"\n[train]\nmax_epochs = 30\n",
    );
    let out = tmp.path().join("out");
    let o = run(nafsim(&["sweep", "--plan", p(&plan), "--out", p(&out)]));
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = read_long_csv(std::fs::File::open(out.join(LONG_FILE)).unwrap(), "long").unwrap();
    let clean = rows.iter().find(|r| r.arm == Arm::Clean).unwrap();
    // the retrained arm continues training, so only the perturbed arm is pinned
    let perturbed: Vec<_> = rows.iter().filter(|r| r.arm == Arm::Perturbed).collect();
    assert_eq!(perturbed.len(), 2);
    for r in perturbed {
        assert_eq!(r.test_rmse, clean.test_rmse, "{:?} {}", r.arm, r.mode);
        assert_eq!(r.train_rmse, clean.train_rmse);
    }
}

fn result_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timings.csv")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn sweep_is_reproducible_across_processes_and_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = write_plan(tmp.path(), SMALL_SWEEP);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run(nafsim(&["sweep", "--plan", p(&plan), "--out", p(&a)])).status.success());
    let o = run(nafsim(&["--jobs", "1", "sweep", "--plan", p(&plan), "--out", p(&b)]));
    assert!(o.status.success(), "{}", stderr(&o));
    let (ra, rb) = (result_bytes(&a), result_bytes(&b));
    assert!(ra.len() >= 4);
    assert_eq!(ra, rb);
    assert!(a.join("timings.csv").exists());

    // a different seed changes the numbers
    let c = tmp.path().join("c");
    assert!(run(nafsim(&["sweep", "--plan", p(&plan), "--seed", "5", "--out", p(&c)])).status.success());
    assert_ne!(std::fs::read(a.join(LONG_FILE)).unwrap(), std::fs::read(c.join(LONG_FILE)).unwrap());
}

#[test]
fn report_reaggregates_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = write_plan(tmp.path(), SMALL_SWEEP);
    let out = tmp.path().join("out");
    assert!(run(nafsim(&["sweep", "--plan", p(&plan), "--out", p(&out)])).status.success());
    let re = tmp.path().join("re");
    let o = run(nafsim(&[
        "report", "--long", p(&out.join(LONG_FILE)), "--waterline", "0.05", "--out", p(&re),
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [AGGREGATED_FILE, "thresholds.csv"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(re.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn verify_data_rejects_wrong_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let xyz = tmp.path().join("h2.xyz");
    std::fs::write(&xyz, "2\nh2 -1.17\nH 0 0 0\nH 0.74 0 0\n").unwrap();
    let csv = tmp.path().join("h2.csv");
    assert!(run(nafsim(&["featurize", "--input", p(&xyz), "--out", p(&csv)])).status.success());
    let o = run(nafsim(&["verify-data", "--kind", "qm9", "--data", p(&csv)]));
    assert_eq!(o.status.code(), Some(3), "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn gridsearch_single_point() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = write_plan(
        tmp.path(),
        "base_seed = 3\n[dataset]\nbundled = \"quadratic\"\n[grid]\narchitectures = [[3]]\nepochs = [20]\nmu0 = [0.001]\nn_runs = 2\n",
    );
    let out = tmp.path().join("g");
    let o = run(nafsim(&["gridsearch", "--plan", p(&plan), "--out", p(&out)]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("best [3] epochs 20"), "{}", stdout(&o));
    let text = std::fs::read_to_string(out.join("gridsearch.csv")).unwrap();
    assert!(text.starts_with("# plan_sha256: "));
    assert_eq!(text.lines().count(), 3);
}

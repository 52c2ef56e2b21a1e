use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sdr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdr")).args(args).output().expect("binary runs")
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

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let path = self.path(name);
        std::fs::write(&path, text).unwrap();
        path
    }

    /// Synthetic train/valid/test files plus a small training config.
    fn prepared(&self) -> (PathBuf, PathBuf, PathBuf, PathBuf) {
        let synth = self.write(
            "synth.toml",
            "num_queries = 30\ndocs_per_query = [8, 8]\nfeature_count = 3\nlabel_noise_rate = 0.1\n",
        );
        let (tr, va, te) = (self.path("train.txt"), self.path("valid.txt"), self.path("test.txt"));
        let o = sdr(&[
            "gen-data", "--config", p(&synth), "--seed", "4", "--out", p(&tr), "--split", "0.6,0.2,0.2",
            "--valid-out", p(&va), "--test-out", p(&te),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let cfg = self.write(
            "train.toml",
            "layer_dims = [3, 8, 1]\nlearning_rate = 0.01\nmax_epochs = 5\nbatch_queries = 4\n",
        );
        (tr, va, te, cfg)
    }
}

#[test]
fn theorem1_prints_reproduced_values() {
    let o = sdr(&["theorem1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    for needle in ["-0.166667", "0.055556", "0.111111", "0.012346"] {
        assert!(out.contains(needle), "missing {needle} in\n{out}");
    }
}

#[test]
fn gradcheck_softmax_is_tight() {
    let o = sdr(&["gradcheck", "--loss", "softmax", "--instances", "100"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let row = out.lines().find(|l| l.starts_with("softmax")).expect("softmax row");
    let cols: Vec<&str> = row.split('\t').collect();
    let loss_err: f64 = cols[2].parse().unwrap();
    let model_err: f64 = cols[3].parse().unwrap();
    assert!(loss_err < 1e-6, "{row}");
    assert!(model_err < 1e-4, "{row}");
}

#[test]
fn missing_data_file_is_named() {
    let ws = Workspace::new();
    let cfg = ws.write("train.toml", "layer_dims = [3, 1]\n");
    let missing = ws.path("nope.txt");
    let o = sdr(&[
        "train", "--data", p(&missing), "--valid", p(&missing), "--config", p(&cfg), "--out",
        p(&ws.path("m.txt")), "--history", p(&ws.path("h.csv")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.txt"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(sdr(&[]).status.code(), Some(2));
    assert_eq!(sdr(&["train", "--data"]).status.code(), Some(2));
    assert_eq!(sdr(&["gradcheck", "--loss", "hinge"]).status.code(), Some(2));
    assert_eq!(sdr(&["theorem1", "extra"]).status.code(), Some(2));
}

#[test]
fn bad_config_reports_module_error() {
    let ws = Workspace::new();
    let bad = ws.write("bad.toml", "num_queries = \"many\"\n");
    let o = sdr(&["gen-data", "--config", p(&bad), "--out", p(&ws.path("x.txt"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("invalid config"), "{}", stderr(&o));
}

#[test]
fn train_eval_export_distill_round() {
    let ws = Workspace::new();
    let (tr, va, te, cfg) = ws.prepared();
    let (model, hist) = (ws.path("teacher.model"), ws.path("teacher.csv"));
    let o = sdr(&[
        "train", "--data", p(&tr), "--valid", p(&va), "--test", p(&te), "--config", p(&cfg), "--seed", "1",
        "--out", p(&model), "--history", p(&hist),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let history = std::fs::read_to_string(&hist).unwrap();
    assert!(history.starts_with("epoch,train_loss,train_ndcg5,valid_ndcg5\n"));

    let report = ws.path("eval.tsv");
    let o = sdr(&["eval", "--data", p(&te), "--model", p(&model), "--out", p(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let tsv = std::fs::read_to_string(&report).unwrap();
    assert!(tsv.starts_with("qid\tndcg@1\tndcg@5\tndcg@10\n"));
    assert!(tsv.lines().last().unwrap().starts_with("MEAN\t"));

    let scores = ws.path("teacher.tsv");
    let o = sdr(&["export-scores", "--data", p(&tr), "--model", p(&model), "--out", p(&scores)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let student = ws.path("student.model");
    let o = sdr(&[
        "distill", "--data", p(&tr), "--valid", p(&va), "--config", p(&cfg), "--teacher-scores", p(&scores),
        "--alpha", "0.5", "--transform", "1,0.5", "--distill-loss", "softmax", "--out", p(&student), "--history",
        p(&ws.path("student.csv")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read_to_string(&student).unwrap().starts_with("dims: 3 8 1"));
}

#[test]
fn distill_rejects_misaligned_scores_before_training() {
    let ws = Workspace::new();
    let (tr, va, _, cfg) = ws.prepared();
    let model = ws.path("m.model");
    let o = sdr(&[
        "train", "--data", p(&tr), "--valid", p(&va), "--config", p(&cfg), "--out", p(&model), "--history",
        p(&ws.path("h.csv")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let scores = ws.path("valid-scores.tsv");
    let o = sdr(&["export-scores", "--data", p(&va), "--model", p(&model), "--out", p(&scores)]);
    assert!(o.status.success());
    let out = ws.path("student.model");
    let history = ws.path("student.csv");
    let o = sdr(&[
        "distill", "--data", p(&tr), "--valid", p(&va), "--config", p(&cfg), "--teacher-scores", p(&scores),
        "--out", p(&out), "--history", p(&history),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("AlignmentError"), "{}", stderr(&o));
    assert!(!history.exists());
}

#[test]
fn seeded_commands_are_reproducible() {
    let ws = Workspace::new();
    let (tr, va, _, cfg) = ws.prepared();
    let run = |tag: &str| {
        let model = ws.path(&format!("{tag}.model"));
        let o = sdr(&[
            "train", "--data", p(&tr), "--valid", p(&va), "--config", p(&cfg), "--seed", "5", "--out",
            p(&model), "--history", p(&ws.path(&format!("{tag}.csv"))),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read_to_string(model).unwrap()
    };
    assert_eq!(run("a"), run("b"));

    let synth = ws.write("s.toml", "num_queries = 5\nfeature_count = 2\n");
    let gen = |name: &str| {
        let out = ws.path(name);
        assert!(sdr(&["gen-data", "--config", p(&synth), "--seed", "3", "--out", p(&out)]).status.success());
        std::fs::read_to_string(out).unwrap()
    };
    assert_eq!(gen("g1.txt"), gen("g2.txt"));
}

#[test]
fn noisy_sweep_writes_csv() {
    let ws = Workspace::new();
    let cfg = ws.write(
        "sweep.toml",
        "n = 20\nm = 2\nalphas = [0.0, 0.5, 1.0]\ntrials = 2\nhidden = 4\nsteps = 10\ntest_points = 11\n",
    );
    let out = ws.path("sweep.csv");
    let o = sdr(&["noisy-sweep", "--config", p(&cfg), "--seed", "1", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("alpha,mean_test_error,std\n"));
    assert_eq!(csv.lines().count(), 4);
}

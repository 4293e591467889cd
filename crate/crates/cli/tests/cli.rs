use std::path::Path;
use std::process::{Command, Output};

fn glaqa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glaqa"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const OVERFIT_SPEC: &str = "v=60,train=20,test=0,topics=10,k=10,answer_len=12,question_len=4";

const OVERFIT_CONFIG: &str = "data = \"d.jsonl\"
embed_dim = 8
hidden_dim = 8
tf_dim = 4
proj_dim = 8
epochs = 60
keep_prob = 1.0
patience = 0
holdout = 0.0
valid_pool_size = 10
k = 10
";

fn trained(dir: &Path) {
    let gen = glaqa(
        dir,
        &[
            "gen-synthetic",
            "--spec",
            OVERFIT_SPEC,
            "--seed",
            "3",
            "--out",
            "d.jsonl",
        ],
    );
    assert!(gen.status.success(), "{}", stderr(&gen));
    std::fs::write(dir.join("run.toml"), OVERFIT_CONFIG).unwrap();
    let train = glaqa(dir, &["train", "--config", "run.toml", "--out", "m.ckpt"]);
    assert!(train.status.success(), "{}", stderr(&train));
}

#[test]
fn gen_synthetic_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.jsonl", "b.jsonl"] {
        let o = glaqa(dir.path(), &["gen-synthetic", "--seed", "7", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.jsonl")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 620);
}

#[test]
fn grad_check_passes_on_toy_dims() {
    let dir = tempfile::tempdir().unwrap();
    let o = glaqa(dir.path(), &["grad-check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 11);
    for row in rows {
        let err: f64 = row.rsplit('\t').next().unwrap().parse().unwrap();
        assert!(err < 1e-4, "{row}");
    }
}

#[test]
fn train_then_eval_overfits_the_training_pools() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    for f in ["m.ckpt", "m.ckpt.history.csv", "m.ckpt.vocab"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let history = std::fs::read_to_string(dir.path().join("m.ckpt.history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,valid_p_at_1,valid_mrr,seconds\n"));
    assert_eq!(history.lines().count(), 61);

    let args = [
        "eval", "--ckpt", "m.ckpt", "--data", "d.jsonl", "--split", "train", "--k", "10", "--seed",
        "4",
    ];
    let a = glaqa(dir.path(), &args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(stdout(&a).contains("p_at_1=1.000000"), "{}", stdout(&a));
    let b = glaqa(dir.path(), &args);
    assert_eq!(stdout(&a), stdout(&b));
    let seq = glaqa(dir.path(), &[&args[..], &["--sequential"]].concat());
    assert_eq!(stdout(&a), stdout(&seq));
}

#[test]
fn rank_and_explain_use_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    let o = glaqa(
        dir.path(),
        &[
            "rank",
            "--ckpt",
            "m.ckpt",
            "--answers",
            "d.jsonl",
            "--question",
            "k3 n1",
            "--top",
            "3",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 4);
    assert!(out.lines().nth(1).unwrap().starts_with("1\t"));

    let o = glaqa(
        dir.path(),
        &[
            "explain",
            "--ckpt",
            "m.ckpt",
            "--data",
            "d.jsonl",
            "--question-id",
            "0",
            "--answer-id",
            "1",
            "--html",
            "e.html",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let html = std::fs::read_to_string(dir.path().join("e.html")).unwrap();
    assert_eq!(html.matches("<span").count(), 12);
    let tsv = std::fs::read_to_string(dir.path().join("e.tsv")).unwrap();
    let total: f64 = tsv
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn exit_codes_separate_usage_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(glaqa(p, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(glaqa(p, &["--help"]).status.code(), Some(0));
    assert_eq!(
        glaqa(p, &["grad-check", "--dims", "v=20,z=3"])
            .status
            .code(),
        Some(1)
    );
    let o = glaqa(
        p,
        &[
            "gen-synthetic",
            "--spec",
            "v=20,topics=15",
            "--out",
            "x.jsonl",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("infeasible"));

    std::fs::write(p.join("bad.toml"), "epochs = 2\nhidden = 3\n").unwrap();
    let o = glaqa(p, &["train", "--config", "bad.toml", "--out", "m.ckpt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.toml:2:"), "{}", stderr(&o));
    assert!(stderr(&o).contains("hidden"), "{}", stderr(&o));

    std::fs::write(p.join("ok.toml"), "data = \"d.jsonl\"\n").unwrap();
    std::fs::write(
        p.join("d.jsonl"),
        "{\"kind\":\"answer\",\"id\":1,\"text\":\"x\"}\n{\"kind\":\"answer\"}\n",
    )
    .unwrap();
    let o = glaqa(p, &["train", "--config", "ok.toml", "--out", "m.ckpt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("d.jsonl:2:"), "{}", stderr(&o));

    let o = glaqa(p, &["eval", "--ckpt", "missing.ckpt", "--data", "d.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.ckpt"));
}

use std::path::Path;
use std::process::{Command, Output};

fn hincrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hincrec")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SYNTH: &str = "users = 30\nconcepts = 12\ncourses = 6\nvideos = 12\nclusters = 3\np_in = 0.9\np_out = 0.05\nclicks = 8\nseed = 5\n";
const RUN: &str = "d = 8\nL = 2\nfeature_dim = 4\npath_hidden = 4\nE = 20\npretrain_episodes = 20\n";

fn setup(dir: &Path) {
    std::fs::write(dir.join("synth.cfg"), SYNTH).unwrap();
    std::fs::write(dir.join("run.cfg"), RUN).unwrap();
    let out = hincrec(&["gen", "--config", s(&dir.join("synth.cfg")), "--out", s(&dir.join("data"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_writes_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    setup(a.path());
    setup(b.path());
    for f in ["nodes.tsv", "edges.tsv"] {
        let x = std::fs::read(a.path().join("data").join(f)).unwrap();
        let y = std::fs::read(b.path().join("data").join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn train_eval_recommend() {
    let t = tempfile::tempdir().unwrap();
    setup(t.path());
    let (data, cfg, ckpt) = (t.path().join("data"), t.path().join("run.cfg"), t.path().join("model.bin"));
    let out = hincrec(&["train", "--config", s(&cfg), "--data", s(&data), "--ckpt", s(&ckpt)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = String::from_utf8(out.stderr).unwrap();
    assert_eq!(log.lines().filter(|l| l.starts_with("episode\t")).count(), 20);
    assert!(ckpt.exists());

    let out = hincrec(&["eval", "--config", s(&cfg), "--ckpt", s(&ckpt), "--data", s(&data), "--quiet"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line = String::from_utf8(out.stdout).unwrap();
    let cols: Vec<f64> = line.trim_end().split('\t').map(|c| c.parse().unwrap()).collect();
    assert_eq!(cols.len(), 8);
    assert!(cols.iter().all(|v| (0.0..=100.0).contains(v)));
    assert!(cols[0] <= cols[1] && cols[1] <= cols[2]);

    let out = hincrec(&["recommend", "--config", s(&cfg), "--ckpt", s(&ckpt), "--data", s(&data), "--user", "u4", "--topk", "5", "--quiet"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.starts_with('k') && r.split('\t').count() == 2));

    let out = hincrec(&["recommend", "--ckpt", s(&ckpt), "--data", s(&data), "--user", "k0", "--quiet"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_flag_overrides_config() {
    let t = tempfile::tempdir().unwrap();
    setup(t.path());
    let (data, cfg) = (t.path().join("data"), t.path().join("run.cfg"));
    let train = |name: &str, extra: &[&str]| {
        let ckpt = t.path().join(name);
        let mut args = vec!["pretrain", "--config", s(&cfg), "--data", s(&data), "--ckpt", s(&ckpt), "--quiet"];
        args.extend_from_slice(extra);
        assert!(hincrec(&args).status.success());
        std::fs::read(ckpt).unwrap()
    };
    let a = train("a.bin", &[]);
    let b = train("b.bin", &[]);
    let c = train("c.bin", &["--seed", "9"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn reference_scorers_and_sampling() {
    let t = tempfile::tempdir().unwrap();
    setup(t.path());
    let data = t.path().join("data");
    for scorer in ["random", "popularity"] {
        let out = hincrec(&["eval", "--data", s(&data), "--scorer", scorer, "--quiet"]);
        assert!(out.status.success());
        assert_eq!(String::from_utf8(out.stdout).unwrap().trim_end().split('\t').count(), 8);
    }
    let corpus = t.path().join("walks.txt");
    let out = hincrec(&["sample", "--data", s(&data), "--out", s(&corpus), "--quiet"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(corpus).unwrap();
    assert!(hincrec::metapath::PathCorpus::from_text(&text).is_ok());
}

#[test]
fn exit_codes() {
    assert_eq!(hincrec(&[]).status.code(), Some(1));
    assert_eq!(hincrec(&["train", "--frobnicate"]).status.code(), Some(1));
    let out = hincrec(&["eval", "--data", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    assert_eq!(hincrec(&["--help"]).status.code(), Some(0));

    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("bad");
    std::fs::create_dir(&d).unwrap();
    std::fs::write(d.join("nodes.tsv"), "u0\tuser\nk0\tconcept\n").unwrap();
    std::fs::write(d.join("edges.tsv"), "u0\tlearn\tk0\n").unwrap();
    let out = hincrec(&["eval", "--data", s(&d), "--scorer", "random"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":1:"));

    let cfg = t.path().join("bad.cfg");
    std::fs::write(&cfg, "users = 3\nclusters = 5\n").unwrap();
    assert_eq!(hincrec(&["gen", "--config", s(&cfg), "--out", s(&d)]).status.code(), Some(2));
}

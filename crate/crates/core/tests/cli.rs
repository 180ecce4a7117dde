use std::path::Path;
use std::process::{Command, Output};

fn m3l(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_m3l")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = m3l(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    m3l(args).status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    ok(&[
        "gen-synth", "--out", p(&d("syn")), "--tuples", "60", "--heldout", "20", "--topics", "4",
        "--vocab-size", "40", "--dim", "8", "--images", "1", "--seed", "3",
    ]);
    for f in ["train/views.tsv", "test/views.tsv", "test/gold.tsv", "truth/theta.test.tsv", "truth/phi.lang0.tsv"] {
        assert!(d("syn").join(f).exists(), "{f}");
    }
    let train_dir = d("syn").join("train");
    let test_dir = d("syn").join("test");
    let stdout = ok(&[
        "train", "--data", p(&train_dir), "--set", "n_topics=4", "--set", "epochs=3", "--set", "hidden_dim=8",
        "--out", p(&d("m.mdl")),
    ]);
    assert!(stdout.starts_with("epochs=3 "));
    let history = std::fs::read_to_string(d("m.mdl.history.tsv")).unwrap();
    assert_eq!(history.lines().count(), 4);

    let emb = test_dir.join("lang0.emb1");
    ok(&["infer", "--model", p(&d("m.mdl")), "--embeddings", p(&emb), "--view", "lang0", "--out", p(&d("q.tsv"))]);
    let img = test_dir.join("image0.emb1");
    ok(&["infer", "--model", p(&d("m.mdl")), "--embeddings", p(&img), "--view", "image0", "--out", p(&d("c.tsv"))]);
    let gold = test_dir.join("gold.tsv");

    // queries against themselves: every gold item is the closest candidate
    let same = ok(&["eval-retrieval", "--queries", p(&d("q.tsv")), "--candidates", p(&d("q.tsv")), "--gold", p(&gold)]);
    assert!(same.lines().any(|l| l == "mrr=1"), "{same}");
    assert!(same.lines().any(|l| l == "mean_jsd=0"), "{same}");
    let cross = ok(&[
        "eval-retrieval", "--queries", p(&d("q.tsv")), "--candidates", p(&d("c.tsv")), "--gold", p(&gold), "--metric",
        "uap",
    ]);
    let uap: f64 = cross.lines().next().unwrap().strip_prefix("uap=").unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&uap));

    let coh = ok(&["eval-coherence", "--model", p(&d("m.mdl")), "--bows", p(&train_dir.join("lang1.bow.tsv")), "--view", "lang1"]);
    assert_eq!(coh.lines().filter(|l| l.starts_with("topic\t")).count(), 4);
    assert!(coh.lines().last().unwrap().starts_with("mean_npmi="));

    ok(&[
        "export", "--model", p(&d("m.mdl")), "--out-dir", p(&d("exp")), "--top-n", "5", "--embeddings", p(&emb),
        "--view", "lang0",
    ]);
    let topics = std::fs::read_to_string(d("exp").join("topics.lang1.tsv")).unwrap();
    assert_eq!(topics.lines().count(), 4);
    assert!(topics.lines().all(|l| l.split('\t').count() == 6));
    assert!(d("exp").join("theta.lang0.tsv").exists());
    assert!(!d("exp").join("topics.image0.tsv").exists());
}

#[test]
fn zeroshot_model_infers_unseen_views() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    ok(&["gen-synth", "--out", p(&d("syn")), "--tuples", "30", "--topics", "3", "--vocab-size", "30", "--dim", "6"]);
    ok(&[
        "train", "--data", p(&d("syn")), "--set", "architecture=zeroshot", "--set", "zeroshot_train_view=lang1",
        "--set", "n_topics=3", "--set", "epochs=2", "--out", p(&d("z.mdl")),
    ]);
    let emb = d("syn").join("lang0.emb1");
    ok(&["infer", "--model", p(&d("z.mdl")), "--embeddings", p(&emb), "--view", "lang0", "--out", p(&d("t.tsv"))]);
    let text = std::fs::read_to_string(d("t.tsv")).unwrap();
    assert_eq!(text.lines().count(), 30);
}

#[test]
fn pltm_train_and_fold_in() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    ok(&[
        "gen-synth", "--out", p(&d("syn")), "--tuples", "40", "--heldout", "10", "--topics", "3", "--vocab-size", "30",
    ]);
    let train_dir = d("syn").join("train");
    ok(&[
        "pltm", "train", "--data", p(&train_dir), "--set", "n_topics=3", "--set", "pltm_iterations=30", "--set",
        "pltm_burn_in=10", "--set", "pltm_sample_lag=5", "--set", "pltm_infer_sweeps=20", "--set",
        "pltm_infer_average=10", "--out-dir", p(&d("pl")),
    ]);
    for f in ["phi.lang0.tsv", "phi.lang1.tsv", "theta.tsv", "config.txt"] {
        assert!(d("pl").join(f).exists(), "{f}");
    }
    let test_dir = d("syn").join("test");
    for view in ["lang0", "lang1"] {
        let out = d(&format!("{view}.tsv"));
        ok(&["pltm", "infer", "--model-dir", p(&d("pl")), "--data", p(&test_dir), "--view", view, "--out", p(&out)]);
    }
    let gold = test_dir.join("gold.tsv");
    let r = ok(&[
        "eval-retrieval", "--queries", p(&d("lang0.tsv")), "--candidates", p(&d("lang1.tsv")), "--gold", p(&gold),
    ]);
    assert!(r.starts_with("mrr="));
}

#[test]
fn preprocess_builds_vocabularies() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    std::fs::write(d("en.txt"), "The cat sat on the mat\nA dog barked\n").unwrap();
    std::fs::write(d("de.txt"), "Die Katze sass\nEin Hund bellte laut\n").unwrap();
    std::fs::write(d("en.stop"), "the\na\non\n").unwrap();
    std::fs::write(d("de.stop"), "die\nein\n").unwrap();
    ok(&[
        "preprocess", "--docs", p(&d("en.txt")), "--docs", p(&d("de.txt")), "--stopwords", p(&d("en.stop")),
        "--stopwords", p(&d("de.stop")), "--out", p(&d("out")),
    ]);
    let vocab = std::fs::read_to_string(d("out").join("en.vocab")).unwrap();
    assert!(vocab.lines().any(|w| w == "cat"));
    assert!(!vocab.lines().any(|w| w == "the"));
    let bows = std::fs::read_to_string(d("out").join("de.bow.tsv")).unwrap();
    assert_eq!(bows.lines().count(), 2);

    std::fs::write(d("short.txt"), "only one line\n").unwrap();
    let c = code(&["preprocess", "--docs", p(&d("en.txt")), "--docs", p(&d("short.txt")), "--out", p(&d("o2"))]);
    assert_eq!(c, 26);
}

#[test]
fn failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    let missing = code(&["infer", "--model", p(&d("none.mdl")), "--embeddings", "x", "--view", "v", "--out", "y"]);
    std::fs::write(d("junk.mdl"), b"JUNKJUNKJUNK").unwrap();
    let magic = code(&["infer", "--model", p(&d("junk.mdl")), "--embeddings", "x", "--view", "v", "--out", "y"]);
    std::fs::write(d("cfg.txt"), "no_such_key=1\n").unwrap();
    let key = code(&["train", "--data", p(dir.path()), "--config", p(&d("cfg.txt")), "--out", p(&d("m"))]);
    let usage = code(&["frobnicate"]);
    assert_eq!((missing, magic, key, usage), (10, 11, 25, 2));
    assert_eq!(code(&["--help"]), 0);
}

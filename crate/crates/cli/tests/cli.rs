use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = r#"{"d_w":8,"d_c":4,"cnn_filters":4,"kernel":2,"lstm_hidden":6,"d_xpath_tag":4,"d_xpath":4,"d_leaf":4,"d_pos":2,"mlp_hidden":8,"epochs":2}"#;

struct Env {
    dir: tempfile::TempDir,
}

impl Env {
    fn new(pages: usize) -> Self {
        let env = Self { dir: tempfile::tempdir().unwrap() };
        let out = env.run(&["synth", "--out", "corpus", "--pages", &pages.to_string(), "--seed", "3"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::write(env.path("tiny.json"), TINY).unwrap();
        fs::write(env.path("cross.json"), TINY.replace('}', r#","head":"cross"}"#)).unwrap();
        env
    }

    fn path(&self, p: &str) -> PathBuf {
        self.dir.path().join(p)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_simpdom"))
            .args(args)
            .current_dir(self.dir.path())
            .env("SIMPDOM_CACHE_DIR", self.dir.path().join("cache"))
            .env_remove("RUST_LOG")
            .output()
            .unwrap()
    }

    fn json(&self, args: &[&str]) -> Value {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.ends_with(b"\n"));
        serde_json::from_slice(&out.stdout).unwrap()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/book_subtree.htm")
}

#[test]
fn preprocess_uses_the_cache() {
    let env = Env::new(3);
    let first = env.json(&["preprocess", "--corpus", "corpus"]);
    let sites = first["sites"].as_array().unwrap();
    assert_eq!(sites.len(), 4);
    assert!(sites.iter().all(|s| s["cache"] == "built"));
    assert!(first["config"]["k_ancestors"].is_number());
    let entry = env.path("cache/book/book-list-shop.json");
    let bytes = fs::read(&entry).unwrap();
    let second = env.json(&["preprocess", "--corpus", "corpus", "--vertical", "book"]);
    assert!(second["sites"].as_array().unwrap().iter().all(|s| s["cache"] == "hit"));
    assert_eq!(fs::read(&entry).unwrap(), bytes);

    let stale = String::from_utf8(bytes.clone()).unwrap().replacen("\"version\":1", "\"version\":0", 1);
    fs::write(&entry, stale).unwrap();
    let third = env.json(&["preprocess", "--corpus", "corpus", "--vertical", "book"]);
    assert_eq!(third["sites"][0]["cache"], "built");
    assert_eq!(third["sites"][1]["cache"], "hit");
    assert_eq!(fs::read(&entry).unwrap(), bytes);
}

#[test]
fn missing_corpus_is_a_usage_error() {
    let env = Env::new(1);
    let out = env.run(&["preprocess", "--corpus", "no/such/dir"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("no/such/dir"));
    let out = env.run(&["train", "--corpus", "elsewhere", "--vertical", "book"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("elsewhere"));
}

#[test]
fn train_eval_extract() {
    let env = Env::new(4);
    let summary = env.json(&[
        "train",
        "--corpus",
        "corpus",
        "--vertical",
        "book",
        "--k",
        "1",
        "--seed",
        "7",
        "--config",
        "tiny.json",
        "--out",
        "out/book.ckpt",
    ]);
    assert_eq!(summary["config"]["seed"], 7);
    assert_eq!(summary["epochs"].as_array().unwrap().len(), 2);
    assert!(env.path("out/book.ckpt").is_file());
    assert!(env.path("out/book.ckpt.vocab.json").is_file());
    let log: Value = serde_json::from_slice(&fs::read(env.path("out/book.ckpt.loss.json")).unwrap()).unwrap();
    assert_eq!(log["log"].as_array().unwrap().len(), 2);
    assert_eq!(log["config"]["d_w"], 8);

    let report = env.json(&["eval", "--checkpoint", "out/book.ckpt", "--corpus", "corpus", "--vertical", "book"]);
    assert_eq!(report["config"]["seed"], 7);
    let f1 = report["f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));
    let trained = summary["split"]["train"][0].as_str().unwrap();
    let scored = report["rotations"][0]["sites"][0]["site_id"].as_str().unwrap();
    assert_ne!(trained, scored);

    let table = env.run(&[
        "eval",
        "--checkpoint",
        "out/book.ckpt",
        "--corpus",
        "corpus",
        "--vertical",
        "book",
        "--format",
        "table",
    ]);
    assert!(String::from_utf8_lossy(&table.stdout).contains("attribute"));

    let page = format!("corpus/book/{scored}/pages/page-0000.htm");
    let extracted = env.json(&["extract", "--checkpoint", "out/book.ckpt", &page]);
    assert_eq!(extracted["pages"][0]["page"], "page-0000");
    assert!(extracted["pages"][0]["attributes"].is_object());
    assert_eq!(extracted["config"]["d_w"], 8);
}

#[test]
fn protocol_runs() {
    let env = Env::new(3);
    let intra =
        env.json(&["eval", "--corpus", "corpus", "--vertical", "book", "--config", "tiny.json", "--rotations", "1"]);
    assert_eq!(intra["rotations"].as_array().unwrap().len(), 1);
    assert!(intra["cross"].is_null());
    let cross = env.json(&[
        "eval",
        "--corpus",
        "corpus",
        "--vertical",
        "book",
        "--source",
        "movie",
        "--config",
        "cross.json",
        "--rotations",
        "1",
    ]);
    assert_eq!(cross["cross"]["source_vertical"], "movie");
    assert_eq!(cross["config"]["head"], "cross");
}

#[test]
fn finetune_needs_a_cross_checkpoint() {
    let env = Env::new(3);
    env.json(&["train", "--corpus", "corpus", "--vertical", "movie", "--config", "tiny.json", "--out", "intra.ckpt"]);
    let out = env.run(&["finetune", "--checkpoint", "intra.ckpt", "--corpus", "corpus", "--vertical", "book"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("intra"));
    env.json(&["train", "--corpus", "corpus", "--vertical", "movie", "--config", "cross.json", "--out", "cross.ckpt"]);
    let tuned = env.json(&[
        "finetune",
        "--checkpoint",
        "cross.ckpt",
        "--corpus",
        "corpus",
        "--vertical",
        "book",
        "--config",
        "cross.json",
        "--out",
        "ft.ckpt",
    ]);
    assert_eq!(tuned["vertical"], "book");
    let report = env.json(&["eval", "--checkpoint", "ft.ckpt", "--corpus", "corpus", "--vertical", "book"]);
    assert!(report["f1"].is_number());
}

#[test]
fn jobs_do_not_change_results() {
    let env = Env::new(3);
    for (jobs, out) in [("1", "a/m.ckpt"), ("4", "b/m.ckpt")] {
        env.json(&[
            "train",
            "--jobs",
            jobs,
            "--corpus",
            "corpus",
            "--vertical",
            "book",
            "--config",
            "tiny.json",
            "--out",
            out,
        ]);
    }
    assert_eq!(fs::read(env.path("a/m.ckpt")).unwrap(), fs::read(env.path("b/m.ckpt")).unwrap());
}

#[test]
fn inspect_circles_dump() {
    let env = Env::new(1);
    let page = fixture();
    let page = page.to_str().unwrap();
    let out = env.run(&["inspect-circles", page]);
    assert!(out.status.success());
    let lines: Vec<Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 5);
    let author = lines.iter().find(|l| l["text"] == "J. K. Rowling").unwrap();
    assert_eq!(author["partner"]["text"], "by");
    assert!(author["friends"].as_array().unwrap().iter().any(|f| f["text"] == "Harry Potter and the Sorcerer's Stone"));
    let mut keys: Vec<_> = author.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(keys, ["friends", "partner", "text", "xpath"]);

    let xpath = author["xpath"].as_str().unwrap();
    let one = env.run(&["inspect-circles", page, "--node-xpath", xpath]);
    assert_eq!(String::from_utf8(one.stdout).unwrap().lines().count(), 1);
    let none = env.run(&["inspect-circles", page, "--node-xpath", "/html[1]/nothing[9]"]);
    assert_eq!(code(&none), 0);
    assert!(none.stdout.is_empty());
}

#[test]
fn exit_codes() {
    let env = Env::new(2);
    fs::write(env.path("bad.json"), r#"{"epochs":1,"surprise":true}"#).unwrap();
    let out = env.run(&["train", "--corpus", "corpus", "--vertical", "book", "--config", "bad.json"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("surprise"));

    fs::write(env.path("diverge.json"), TINY.replace("\"epochs\":2", "\"epochs\":2,\"lr\":1e30")).unwrap();
    let out = env.run(&["train", "--corpus", "corpus", "--vertical", "book", "--config", "diverge.json"]);
    assert_eq!(code(&out), 5, "{}", stderr(&out));

    fs::write(env.path("junk.ckpt"), b"not a checkpoint").unwrap();
    let out = env.run(&["extract", "--checkpoint", "junk.ckpt", fixture().to_str().unwrap()]);
    assert_eq!(code(&out), 4);

    fs::write(env.path("corpus/book/book-list-shop/groundtruth.jsonl"), "{\"page\":\n").unwrap();
    let out = env.run(&["preprocess", "--corpus", "corpus", "--vertical", "book"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains(":1:"), "{}", stderr(&out));

    fs::remove_file(env.path("corpus/book/book-list-shop/groundtruth.jsonl")).unwrap();
    let out = env.run(&["preprocess", "--corpus", "corpus", "--vertical", "book"]);
    assert_eq!(code(&out), 3);

    assert_eq!(code(&env.run(&["frobnicate"])), 2);
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/mini")
        .join(name)
}

pub fn oracle() -> serde_json::Value {
    let text = std::fs::read_to_string(fixture("oracle.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn run<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_ooc-forge"))
        .args(args)
        .env_remove("OOC_FORGE_JOBS")
        .output()
        .expect("binary runs")
}

pub fn run_ok<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = run(args);
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Mines CE sets for every thing category of the fixture into `dir`.
pub fn mine_fixture_ce(dir: &Path) -> Output {
    run_ok([
        "mine-ce",
        "--annotations",
        p(&fixture("annotations.json")),
        "--split",
        p(&fixture("split.json")),
        "--all-tasks",
        "--out",
        p(dir),
    ])
}

pub fn mine_fixture_gist(ce_dir: &Path, dir: &Path) -> Output {
    run_ok([
        "mine-gist",
        "--annotations",
        p(&fixture("annotations.json")),
        "--split",
        p(&fixture("split.json")),
        "--embeddings",
        p(&fixture("embeddings.jsonl")),
        "--ce-dir",
        p(ce_dir),
        "--out",
        p(dir),
    ])
}

/// All regular files under `dir` except manifests, as (relative path, bytes).
pub fn primary_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            if rel.ends_with("manifest.json") {
                continue;
            }
            out.push((rel, std::fs::read(&path).unwrap()));
        }
    }
    out.sort();
    out
}

pub mod oracle;
pub mod checks;

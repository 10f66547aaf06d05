//! A small demo fitted once per test binary through the real executable.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

pub fn salmon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_salmon"))
        .args(args)
        .env_remove("SALMON_SEED")
        .env_remove("SALMON_POSTERIOR_DIR")
        .output()
        .expect("run salmon")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Root holding `data/`, `config.toml` and the fitted `fit/` directory.
pub fn small_fit() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_str().unwrap();
        let sim = salmon(&["simulate", "--demo", "small", "--seed", "1", "--out", root]);
        assert!(sim.status.success(), "{}", stderr(&sim));
        let config = dir.path().join("config.toml");
        let fit = salmon(&["fit", "--config", config.to_str().unwrap()]);
        assert!(fit.status.success(), "{}", stderr(&fit));
        dir
    })
    .path()
}

pub fn posterior_dir() -> PathBuf {
    small_fit().join("fit")
}

/// sha256 of every file under `root`, keyed by relative path.
pub fn tree_hashes(root: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, salmon_core::pipeline::file_hash(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

//! Helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_agripretext"));
    c.env("RUST_LOG", "warn");
    c
}

pub fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn code(dir: &Path, args: &[&str]) -> i32 {
    bin().current_dir(dir).args(args).output().unwrap().status.code().unwrap()
}

pub fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(p) = stack.pop() {
        if p.is_dir() {
            for e in fs::read_dir(&p).unwrap() {
                stack.push(e.unwrap().path());
            }
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

/// Digest of every artifact under `root` except run logs, which carry wall time.
pub fn tree_hash(root: &Path) -> String {
    let mut h = Sha256::new();
    for f in files(root) {
        let name = f.file_name().unwrap().to_string_lossy();
        if name == "run.json" || name.ends_with(".run.json") {
            continue;
        }
        h.update(f.strip_prefix(root).unwrap().to_string_lossy().as_bytes());
        h.update(fs::read(&f).unwrap());
    }
    format!("{:x}", h.finalize())
}

pub fn run_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

pub const SMALL: &str = "[model.vit]\nimage_size = 16\npatch_size = 4\ndim = 16\ndepth = 1\nheads = 2\nmlp_ratio = 2\n\
[model.heads]\ntd_mlp_layers = 2\nfp_decoder_layers = 1\nff_translator_layers = 1\nff_decoder_layers = 1\n";

/// Runs every command into `root` and returns the tree digest.
pub fn pipeline(root: &Path) -> String {
    fs::write(root.join("small.toml"), SMALL).unwrap();
    let mut aoi = b"P5\n32 32\n255\n".to_vec();
    aoi.extend(std::iter::repeat_n(255u8, 32 * 32));
    fs::write(root.join("aoi.pgm"), aoi).unwrap();

    run(root, &["--seed", "3", "synth", "--out", "s", "--height", "16", "--width", "16", "--periods", "6,12", "--phases", "0,1"]);
    run(root, &["freqmap", "--in", "s/cube", "--out", "f"]);
    run(root, &["export-png", "--in", "f", "--out", "f.png"]);
    run(root, &["pairs", "--in", "s/cube", "--out", "p"]);
    for task in ["td", "fp", "ff"] {
        let out = format!("ck_{task}");
        run(root, &["--config", "small.toml", "--seed", "1", "pretrain", "--task", task, "--in", "s/cube", "--out", &out, "--epochs", "2", "--holdout", "0.2"]);
    }
    run(root, &["--seed", "2", "gradcheck", "--task", "ff", "--coords", "40", "--out", "g"]);
    run(root, &["--config", "small.toml", "probe", "--ckpt", "ck_ff", "--out", "pr"]);
    run(root, &[
        "--seed", "5", "ingest", "--aoi", "aoi.pgm", "--source", "src", "--out", "ds", "--mock", "--chip-size", "16",
        "--start", "2019-01", "--end", "2019-06",
    ]);
    tree_hash(root)
}

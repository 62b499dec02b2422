#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const CONFIG: &str = r#"
[paths]
output = "out"
market_edges = "out/simulate/market_edges.csv"
innovation_edges = "out/simulate/innovation_edges.csv"
stocks = "out/simulate/stocks.csv"
aux = "out/simulate/aux.csv"

[simulate]
seed = 7

[[groups]]
name = "early"
rule = "period_window"
first = 1977
last = 1997
"#;

pub fn induplex(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_induplex"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

/// A directory holding `cfg.toml` and inputs simulated for `n` industries.
pub fn simulated(n: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.toml"), CONFIG).unwrap();
    let n = format!("simulate.n={n}");
    let out = induplex(dir.path(), &["-c", "cfg.toml", "-s", &n, "simulate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

pub fn manifest(dir: &Path) -> String {
    fs::read_to_string(dir.join("out/manifest.txt")).unwrap()
}

pub fn out_dir(dir: &Path) -> PathBuf {
    dir.join("out")
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const SMALL_CONFIG: &str = r#"seed = 11
render_spacing = 2.0

[simulate]
phantom_size = 32
phantom_spacing = 2.0
pixel_spacing = [2.0, 2.0]
thickness = 4.0

[recon]
batch_size = 1024
k_cap = 8
alpha = 40.0
alpha_meta = 16.0
lr_sr = 1e-4
lr_slice = 3e-3
outlier_handling = false

[recon.model]
sr_hidden = [48, 48, 48]
slice_hidden = [32, 32]

[meta]
inner_iterations = 20
max_outer_steps = 4
validate_every = 2
val_budget = 20
"#;

pub fn svrec(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_svrec"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("svrec runs");
    if !out.status.success() {
        eprintln!("svrec {args:?} -> {:?}\n{}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    }
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

/// `simulate` with the small geometry; returns the first case directory.
pub fn simulate(dir: &Path, cfg: &Path, seed: u64, mu: f64, cases: usize, name: &str) -> PathBuf {
    let out = dir.join(name);
    let seed = seed.to_string();
    let mu = mu.to_string();
    let cases = cases.to_string();
    let o = svrec(&["simulate", "--phantom-seed", &seed, "--mu", &mu, "--stacks", "3", "--cases", &cases, "--out", p(&out), "--config", p(cfg)]);
    assert!(o.status.success());
    out
}

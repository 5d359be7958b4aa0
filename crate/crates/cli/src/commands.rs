use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use svrec::error::{Error, Result};
use svrec::geometry::RigidTransform;
use svrec::io::{write_states, Checkpoint, RunConfig};
use svrec::meta::{meta_train, write_log_csv, Task};
use svrec::metrics::{evaluate_volume, motion_error};
use svrec::model::SrModule;
use svrec::recon::{reconstruct_with, render, write_trace_csv, Grid, RunOptions};
use svrec::simulate::{make_case, DatasetConfig};
use svrec::{Execution, Volume};

use crate::case;

const EXEC: Execution = Execution::Parallel;

pub const VOLUME: &str = "volume.vol";
pub const STATES: &str = "states.json";
pub const TRACE: &str = "trace.csv";
pub const MODEL: &str = "model.ckpt";
/// Run summary; its timing is the only non-deterministic output.
pub const RUN: &str = "run.json";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// `report.json` → `report.csv`; `meta.ckpt` → `meta.log.csv`.
fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

pub struct SimulateArgs {
    pub seed: u64,
    pub mu: f64,
    pub stacks: usize,
    pub cases: usize,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let s = match &a.config {
        Some(p) => RunConfig::load(p)?.simulate,
        None => Default::default(),
    };
    let cfg = DatasetConfig {
        n_cases: a.cases,
        mu: a.mu,
        stacks_per_case: a.stacks,
        seed: a.seed,
        phantom_size: s.phantom_size,
        phantom_spacing: s.phantom_spacing,
        pixel_spacing: s.pixel_spacing,
        thickness: s.thickness,
        gap: s.gap,
        min_coverage: s.min_coverage,
        corruption: s.corruption,
    };
    if a.cases == 0 || a.stacks == 0 {
        return Err(Error::Range("need at least one case and one stack".into()));
    }
    for c in 0..a.cases {
        let (task, truth) = make_case(&cfg, c, EXEC)?;
        let dir = case::case_dir(&a.out, c);
        case::save_case(&dir, &task.stacks, &truth)?;
        log::info!("{}: {} stacks, {} slices", dir.display(), task.stacks.len(), truth.slices.len());
    }
    Ok(())
}

fn same_key(a: [f64; 3], b: [f64; 3]) -> bool {
    a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-6 * x.abs().max(y.abs()).max(1.0))
}

pub fn reconstruct(case_dir: &Path, init: Option<&Path>, force: bool, config: &Path, out: &Path) -> Result<()> {
    let run = RunConfig::load(config)?;
    let stacks = case::load_stacks(case_dir)?;
    let mut cfg = run.recon_config();
    let key = Task::new(stacks.clone()).spacing_key();
    let init = match init {
        Some(p) => {
            let ckpt = Checkpoint::load(p)?;
            if let (Some(have), Some(want)) = (ckpt.spacing_key, key) {
                if !same_key(have, want) {
                    let msg = format!("checkpoint was meta-trained for spacing {have:?} mm, stacks have {want:?} mm");
                    if !force {
                        return Err(Error::Contract(format!("{msg}; pass --force to use it anyway")));
                    }
                    log::warn!("{msg} (forced)");
                }
            }
            if ckpt.model != cfg.model {
                log::info!("using the checkpoint's network architecture");
                cfg.model = ckpt.model.clone();
            }
            Some(ckpt.params)
        }
        None => None,
    };
    let r = reconstruct_with(&stacks, &cfg, init.as_ref(), RunOptions { exec: EXEC, eval_every: 0 })?;
    log::info!("{} iterations, final loss {:.5}, {:.1} s", r.iterations, r.final_loss, r.wall_seconds);
    std::fs::create_dir_all(out)?;
    let sr = SrModule::new(&cfg.model)?;
    let grid = Grid::covering(&r.frame, run.render_spacing)?;
    render(&sr, &r.params.sr, &r.frame, &grid, EXEC)?.save(&out.join(VOLUME))?;
    write_states(create(&out.join(STATES))?, &r.slice_ids, &r.states)?;
    let mut w = create(&out.join(TRACE))?;
    write_trace_csv(&mut w, &r.trace)?;
    w.flush()?;
    let summary = serde_json::json!({
        "iterations": r.iterations,
        "final_loss": r.final_loss,
        "meta_init": init.is_some(),
        "wall_seconds": r.wall_seconds,
    });
    std::fs::write(out.join(RUN), serde_json::to_string_pretty(&summary).map_err(|e| Error::Format(e.to_string()))?)?;
    Checkpoint { model: cfg.model, params: r.params, frame: Some(r.frame), spacing_key: key }.save(&out.join(MODEL))
}

/// `wall_seconds` of a `run.json` next to the reconstruction, if any.
fn run_seconds(recon: &Path) -> Option<f64> {
    let text = std::fs::read_to_string(recon.parent()?.join(RUN)).ok()?;
    serde_json::from_str::<serde_json::Value>(&text).ok()?.get("wall_seconds")?.as_f64()
}

pub fn meta_train_cmd(train_dir: &Path, val_dir: &Path, config: &Path, out: &Path) -> Result<()> {
    let run = RunConfig::load(config)?;
    let train = case::load_tasks(train_dir)?;
    let val = case::load_tasks(val_dir)?;
    let key = train[0].spacing_key();
    if train.iter().chain(&val).any(|t| t.spacing_key() != key) {
        log::warn!("tasks mix slice spacings; the checkpoint is keyed by the first training task");
    }
    let r = meta_train(&train, &val, &run.meta_config(), run.seed, EXEC)?;
    log::info!("{} outer steps, best validation loss {:.5}", r.outer_steps, r.best_val);
    Checkpoint { model: run.recon.model.clone(), params: r.params, frame: None, spacing_key: r.spacing_key }.save(out)?;
    let mut w = create(&sibling(out, "log.csv"))?;
    write_log_csv(&mut w, &r.log)?;
    w.flush()?;
    Ok(())
}

pub struct EvaluateArgs<'a> {
    pub recon: &'a Path,
    pub reference: &'a Path,
    pub truth: Option<&'a Path>,
    pub states: Option<&'a Path>,
    pub method: &'a str,
    pub out: &'a Path,
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let EvaluateArgs { recon, reference, truth: truth_path, states, method, out } = *a;
    let recon_v = Volume::load(recon)?;
    let reference_v = Volume::load(reference)?;
    let truth = truth_path.map(case::load_truth).transpose()?;
    let mask = match &truth {
        Some(t) if t.phantom.volume.same_grid(&reference_v) => Some(t.phantom.mask.as_slice()),
        Some(_) => return Err(Error::Shape("the reference is not on the ground-truth phantom grid".into())),
        None => None,
    };
    let (mut report, _) = evaluate_volume(&recon_v, &reference_v, mask)?;
    if let (Some(t), Some(s), Some(tp)) = (&truth, states, truth_path) {
        // motion is measured against the recorded poses stored next to the truth
        let stacks = case::load_stacks(tp.parent().unwrap_or(Path::new(".")))?;
        let (ids, st) = svrec::io::read_states(File::open(s).map_err(|e| Error::Format(format!("{}: {e}", s.display())))?)?;
        let expected: Vec<(usize, usize)> = t.slices.iter().map(|s| (s.stack_idx, s.slice_idx)).collect();
        if ids != expected {
            return Err(Error::Format("slice states do not match the ground-truth slices".into()));
        }
        let gauge = RigidTransform::from_row_major(&report.registration)?;
        report.motion = Some(motion_error(&st, &stacks, t, &gauge)?);
    }
    let mut w = create(out)?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Error::Format(e.to_string()))?;
    w.flush()?;
    let mut w = create(&sibling(out, "csv"))?;
    writeln!(w, "method,mu,n_stacks,psnr,ssim,ncc,seconds,rot_mean_deg,trans_mean_mm")?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    let (mu, n_stacks) = match &truth {
        Some(t) => (Some(t.mu.to_string()), t.slices.iter().map(|s| s.stack_idx + 1).max().map(|n| n.to_string())),
        None => (None, None),
    };
    let cells = [
        method.to_string(),
        opt(mu),
        opt(n_stacks),
        report.psnr.to_string(),
        report.ssim.to_string(),
        report.ncc.to_string(),
        opt(run_seconds(recon).map(|s| format!("{s:.1}"))),
        opt(report.motion.as_ref().map(|m| m.rotation_deg.mean.to_string())),
        opt(report.motion.as_ref().map(|m| m.translation_mm.mean.to_string())),
    ];
    writeln!(w, "{}", cells.join(","))?;
    w.flush()?;
    Ok(())
}

pub fn render_cmd(model: &Path, spacing: f64, out: &Path) -> Result<()> {
    let ckpt = Checkpoint::load(model)?;
    let frame = ckpt
        .frame
        .ok_or_else(|| Error::Contract("checkpoint has no volume frame (a meta-initialization cannot be rendered)".into()))?;
    let sr = SrModule::new(&ckpt.model)?;
    let v = render(&sr, &ckpt.params.sr, &frame, &Grid::covering(&frame, spacing)?, EXEC)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    v.save(out)
}

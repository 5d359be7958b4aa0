//! First-order (Reptile) meta-learning of initial weights for both networks.
//!
//! Each outer step copies the meta weights θ into an inner model, trains it
//! on one sampled task for a fixed number of iterations and moves θ towards
//! the result: `θ ← (1 - β) θ + β θ_ρ`. Second-order terms (differentiating
//! through the inner loop) are deliberately not computed.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::recon::{evaluate_loss, reconstruct_with, ModelParams, ReconConfig, RunOptions, SliceStack};
use crate::par::Execution;
use crate::rng;

/// One reconstruction case.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub stacks: Vec<SliceStack>,
    /// Replaces the run-wide configuration for this task when set.
    pub overrides: Option<ReconConfig>,
}

impl Task {
    pub fn new(stacks: Vec<SliceStack>) -> Self {
        Self { stacks, overrides: None }
    }

    pub fn config<'a>(&'a self, base: &'a ReconConfig) -> &'a ReconConfig {
        self.overrides.as_ref().unwrap_or(base)
    }

    /// `(r_x, r_y, r_z)` of the first stack.
    pub fn spacing_key(&self) -> Option<[f64; 3]> {
        self.stacks.first().map(|s| [s.pixel_spacing[0], s.pixel_spacing[1], s.thickness])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaConfig {
    /// Inner-loop configuration; its learning rates are the inner rates.
    #[serde(skip)]
    pub recon: ReconConfig,
    /// Outer step size at the first outer step.
    pub beta_start: f64,
    /// Outer step size at the last outer step (linear decay in between).
    pub beta_end: f64,
    pub inner_iterations: usize,
    pub max_outer_steps: usize,
    /// Validate every this many outer steps.
    pub validate_every: usize,
    /// Stop after this many validations without improvement.
    pub patience: usize,
    /// Iterations per validation run; `None` uses the meta-init budget of each task.
    pub val_budget: Option<usize>,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            recon: ReconConfig::default(),
            beta_start: 0.9,
            beta_end: 0.1,
            inner_iterations: 400,
            max_outer_steps: 100,
            validate_every: 10,
            patience: 5,
            val_budget: None,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        self.recon.validate()?;
        for b in [self.beta_start, self.beta_end] {
            ensure!(b >= 0.0 && b <= 1.0, Config, "beta {b} outside [0, 1]");
        }
        ensure!(self.inner_iterations >= 1, Config, "inner_iterations must be at least 1");
        ensure!(self.validate_every >= 1, Config, "validate_every must be at least 1");
        Ok(())
    }

    /// Outer step size at step `s`.
    pub fn beta(&self, s: usize) -> f64 {
        if self.max_outer_steps <= 1 {
            return self.beta_start;
        }
        let t = s as f64 / (self.max_outer_steps - 1) as f64;
        (1.0 - t) * self.beta_start + t * self.beta_end
    }
}

/// One outer step of the meta-training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaLogRow {
    pub outer_step: usize,
    pub task: usize,
    pub beta: f64,
    /// Task loss of θ before the inner run.
    pub inner_initial: f64,
    /// Task loss after the inner run; NaN when it diverged.
    pub inner_final: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MetaResult {
    /// Weights with the best validation loss seen.
    pub params: ModelParams,
    pub best_val: f64,
    pub log: Vec<MetaLogRow>,
    pub outer_steps: usize,
    pub spacing_key: Option<[f64; 3]>,
}

/// Seed of the inner run at outer step `s`.
pub fn inner_seed(seed: u64, s: usize) -> u64 {
    rng::derive(seed, &[0x1e2, s as u64])
}

/// Convex outer update `(1 - β) θ + β θ_ρ`, exact at β = 0 and β = 1.
pub fn outer_update(theta: &mut ModelParams, inner: &ModelParams, beta: f64) -> Result<()> {
    ensure!(
        theta.sr.len() == inner.sr.len() && theta.slice.len() == inner.slice.len(),
        Shape,
        "inner weights do not match the meta weights"
    );
    for (t, i) in [(&mut theta.sr, &inner.sr), (&mut theta.slice, &inner.slice)] {
        t.values_mut().iter_mut().zip(i.values()).for_each(|(a, &b)| *a = (1.0 - beta) * *a + beta * b);
    }
    Ok(())
}

/// Reptile over `tasks`, keeping the weights with the lowest validation loss.
pub fn meta_train(tasks: &[Task], val_tasks: &[Task], cfg: &MetaConfig, seed: u64, exec: Execution) -> Result<MetaResult> {
    cfg.validate()?;
    ensure!(!tasks.is_empty(), Contract, "meta-training needs at least one task");
    ensure!(
        val_tasks.iter().all(|v| !tasks.contains(v)),
        Contract,
        "validation tasks must be disjoint from training tasks"
    );
    let mut theta = ModelParams::init(&cfg.recon.model, rng::derive(seed, &[0x1417]))?;
    let validate = |theta: &ModelParams| -> Result<f64> {
        if val_tasks.is_empty() {
            Ok(f64::NAN)
        } else {
            meta_validate(theta, val_tasks, cfg.val_budget, &cfg.recon, exec)
        }
    };
    let mut best_val = validate(&theta)?;
    let mut best = theta.clone();
    let mut stale = 0;
    let mut log = Vec::new();
    let mut successes = 0;
    let mut steps = 0;
    for s in 0..cfg.max_outer_steps {
        steps = s + 1;
        let task_idx = rng::stream(seed, &[0x7a5c, s as u64]).random_range(0..tasks.len());
        let task = &tasks[task_idx];
        let mut inner_cfg = task.config(&cfg.recon).clone();
        inner_cfg.iterations = Some(cfg.inner_iterations);
        inner_cfg.seed = inner_seed(seed, s);
        let beta = cfg.beta(s);
        let inner_initial = evaluate_loss(&task.stacks, &inner_cfg, &theta, exec)?;
        let inner_final = match reconstruct_with(&task.stacks, &inner_cfg, Some(&theta), RunOptions { exec, eval_every: 0 }) {
            Ok(r) => {
                outer_update(&mut theta, &r.params, beta)?;
                successes += 1;
                r.final_loss
            }
            Err(Error::Numeric(msg)) => {
                log::warn!("outer step {s}: inner run on task {task_idx} diverged, skipped ({msg})");
                f64::NAN
            }
            Err(e) => return Err(e),
        };
        let mut row = MetaLogRow { outer_step: s, task: task_idx, beta, inner_initial, inner_final, val_loss: None };
        if !val_tasks.is_empty() && (s + 1) % cfg.validate_every == 0 {
            let v = validate(&theta)?;
            row.val_loss = Some(v);
            if v < best_val {
                best_val = v;
                best = theta.clone();
                stale = 0;
            } else {
                stale += 1;
            }
        }
        log.push(row);
        if !val_tasks.is_empty() && stale >= cfg.patience {
            break;
        }
    }
    ensure!(successes > 0, Numeric, "every inner run diverged");
    if val_tasks.is_empty() {
        best = theta;
    }
    Ok(MetaResult { params: best, best_val, log, outer_steps: steps, spacing_key: tasks[0].spacing_key() })
}

/// Per-task final losses after `budget` iterations from `theta`.
pub fn meta_validate_each(
    theta: &ModelParams,
    val_tasks: &[Task],
    budget: Option<usize>,
    cfg: &ReconConfig,
    exec: Execution,
) -> Result<Vec<f64>> {
    ensure!(!val_tasks.is_empty(), Contract, "no validation tasks");
    val_tasks
        .iter()
        .map(|t| {
            let mut c = t.config(cfg).clone();
            c.iterations = Some(match budget {
                Some(b) => b,
                None => c.budget(&t.stacks, true)?,
            });
            Ok(reconstruct_with(&t.stacks, &c, Some(theta), RunOptions { exec, eval_every: 0 })?.final_loss)
        })
        .collect()
}

/// Mean final loss over validation tasks, all starting from `theta`.
pub fn meta_validate(theta: &ModelParams, val_tasks: &[Task], budget: Option<usize>, cfg: &ReconConfig, exec: Execution) -> Result<f64> {
    let l = meta_validate_each(theta, val_tasks, budget, cfg, exec)?;
    Ok(l.iter().sum::<f64>() / l.len() as f64)
}

/// `outer_step,task,beta,inner_initial,inner_final,val_loss` rows.
pub fn write_log_csv<W: Write>(mut w: W, log: &[MetaLogRow]) -> Result<()> {
    writeln!(w, "outer_step,task,beta,inner_initial,inner_final,val_loss")?;
    for r in log {
        let v = r.val_loss.map(|v| format!("{v:e}")).unwrap_or_default();
        writeln!(w, "{},{},{},{:e},{:e},{}", r.outer_step, r.task, r.beta, r.inner_initial, r.inner_final, v)?;
    }
    Ok(())
}

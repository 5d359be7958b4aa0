use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Networks, NormFrame, Precision, Problem, ReconConfig, SliceStack};
use crate::diffcore::{cosine_anneal, init_default, AdamState, ParamSet, Real};
use crate::error::{ensure, Error, Result};
use crate::geometry::k_schedule;
use crate::model::{ModelConfig, SliceHeads, SliceModule, SliceState, SrModule};
use crate::par::Execution;
use crate::rng;

/// Weights of both networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub sr: ParamSet<f64>,
    pub slice: ParamSet<f64>,
}

impl ModelParams {
    /// SIREN (or He for ReLU) initialization. The slice module's output
    /// layer starts at zero so every slice begins at its recorded pose with
    /// unit σ and ω.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let sr = init_default(&cfg.sr_spec(), rng::derive(seed, &[0x5e]))?;
        let mut slice: ParamSet<f64> = init_default(&cfg.slice_spec(), rng::derive(seed, &[0x511ce]))?;
        let layout = slice.layout().clone();
        let last = layout.n_layers() - 1;
        let (fan_in, fan_out) = layout.dims(last);
        let v = slice.values_mut();
        for r in 0..fan_out {
            for c in 0..fan_in {
                v[layout.weight(last, r, c)] = 0.0;
            }
            v[layout.bias(last, r)] = 0.0;
        }
        Ok(Self { sr, slice })
    }

    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        ensure!(
            *self.sr.spec() == cfg.sr_spec() && *self.slice.spec() == cfg.slice_spec(),
            Contract,
            "initial weights do not match the configured architecture"
        );
        Ok(())
    }

    pub fn cast<T: Real>(&self) -> (ParamSet<T>, ParamSet<T>) {
        (self.sr.cast(), self.slice.cast())
    }
}

impl Networks {
    pub fn new(cfg: &ReconConfig) -> Result<Self> {
        let heads = SliceHeads { motion: !cfg.freeze_motion, outlier: cfg.outlier_handling };
        Ok(Self { sr: SrModule::new(&cfg.model)?, slice: SliceModule::new(&cfg.model, heads)? })
    }
}

/// One row of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub lr_sr: f64,
    pub lr_slice: f64,
    pub k: usize,
}

/// Output of a reconstruction run.
#[derive(Debug, Clone)]
pub struct ReconResult {
    pub params: ModelParams,
    /// One state per slice, stacks in order.
    pub states: Vec<SliceState>,
    pub slice_ids: Vec<(usize, usize)>,
    pub trace: Vec<TraceRow>,
    /// Deterministic full-pixel loss at `RunOptions::eval_every` checkpoints (and the end).
    pub evals: Vec<(usize, f64)>,
    pub final_loss: f64,
    pub iterations: usize,
    pub frame: NormFrame,
    pub wall_seconds: f64,
}

/// Execution and monitoring options that do not change results.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub exec: Execution,
    /// Record the evaluation loss every this many iterations; 0 disables.
    pub eval_every: usize,
}

/// `ceil(α Σ|X_i| / batch)` with `|X_i|` the unmasked pixel count of slice `i`.
pub fn iteration_budget(stacks: &[SliceStack], alpha: f64, batch_size: usize) -> Result<usize> {
    ensure!(!stacks.is_empty(), Contract, "no stacks");
    ensure!(alpha > 0.0 && batch_size > 0, Config, "alpha and batch size must be positive");
    let pixels: usize = stacks.iter().map(|s| s.mask.iter().filter(|&&m| m).count()).sum();
    ensure!(pixels > 0, Contract, "no unmasked pixels");
    Ok((alpha * pixels as f64 / batch_size as f64).ceil() as usize)
}

impl ReconConfig {
    /// Iterations this config runs on `stacks`.
    pub fn budget(&self, stacks: &[SliceStack], meta_init: bool) -> Result<usize> {
        match self.iterations {
            Some(n) => Ok(n),
            None => iteration_budget(stacks, if meta_init { self.alpha_meta } else { self.alpha }, self.batch_size),
        }
    }
}

pub fn reconstruct(stacks: &[SliceStack], cfg: &ReconConfig, init: Option<&ModelParams>) -> Result<ReconResult> {
    reconstruct_with(stacks, cfg, init, RunOptions::default())
}

pub fn reconstruct_with(
    stacks: &[SliceStack],
    cfg: &ReconConfig,
    init: Option<&ModelParams>,
    opts: RunOptions,
) -> Result<ReconResult> {
    cfg.validate()?;
    let problem = Problem::new(stacks, cfg.bbox_margin)?;
    let it_max = cfg.budget(stacks, init.is_some())?;
    let start = match init {
        Some(p) => {
            p.check(&cfg.model)?;
            p.clone()
        }
        None => ModelParams::init(&cfg.model, rng::derive(cfg.seed, &[0x1417]))?,
    };
    match cfg.precision {
        Precision::F32 => train::<f32>(&problem, cfg, start, it_max, opts),
        Precision::F64 => train::<f64>(&problem, cfg, start, it_max, opts),
    }
}

fn train<T: Real>(problem: &Problem, cfg: &ReconConfig, start: ModelParams, it_max: usize, opts: RunOptions) -> Result<ReconResult> {
    let clock = Instant::now();
    let nets = Networks::new(cfg)?;
    let (mut sr, mut slice) = start.cast::<T>();
    let mut adam_sr = AdamState::<T>::new(sr.len());
    let mut adam_slice = AdamState::<T>::new(slice.len());
    let train_slice = !cfg.freeze_motion || cfg.outlier_handling;
    let mut trace = Vec::with_capacity(it_max);
    let mut evals = Vec::new();
    for it in 0..it_max {
        if opts.eval_every > 0 && it % opts.eval_every == 0 {
            evals.push((it, eval_loss(problem, &nets, &sr, &slice, cfg, opts.exec)?));
        }
        let k = k_schedule(it, it_max, cfg.k_cap)?;
        let lr_sr = cosine_anneal(cfg.lr_sr, cfg.lr_min.min(cfg.lr_sr), it, it_max)?;
        let lr_slice = cosine_anneal(cfg.lr_slice, cfg.lr_min.min(cfg.lr_slice), it, it_max)?;
        let batch = problem.sample_batch(cfg.seed, it as u64, cfg.batch_size, k);
        let out = problem.step(&nets, &sr, &slice, &batch, true, cfg.chunk_points, opts.exec)?;
        trace.push(TraceRow { iteration: it, loss: out.loss, lr_sr, lr_slice, k });
        if !out.loss.is_finite() {
            let tail: Vec<String> = trace.iter().rev().take(5).map(|r| format!("{}:{:.3e}", r.iteration, r.loss)).collect();
            return Err(Error::Numeric(format!("loss diverged at iteration {it} (recent: {})", tail.join(", "))));
        }
        adam_sr.step(&mut sr, &out.sr_grads, lr_sr)?;
        if train_slice {
            adam_slice.step(&mut slice, &out.slice_grads, lr_slice)?;
        }
    }
    let final_loss = eval_loss(problem, &nets, &sr, &slice, cfg, opts.exec)?;
    evals.push((it_max, final_loss));
    let (states, _) = nets.slice.eval(&slice, problem.encodings())?;
    Ok(ReconResult {
        params: ModelParams { sr: sr.cast(), slice: slice.cast() },
        states,
        slice_ids: problem.slice_ids(),
        trace,
        evals,
        final_loss,
        iterations: it_max,
        frame: problem.frame,
        wall_seconds: clock.elapsed().as_secs_f64(),
    })
}

fn eval_loss<T: Real>(
    problem: &Problem,
    nets: &Networks,
    sr: &ParamSet<T>,
    slice: &ParamSet<T>,
    cfg: &ReconConfig,
    exec: Execution,
) -> Result<f64> {
    let batch = problem.full_batch(cfg.seed, cfg.eval_k);
    let loss = problem.step(nets, sr, slice, &batch, false, cfg.chunk_points, exec)?.loss;
    ensure!(loss.is_finite(), Numeric, "evaluation loss is not finite");
    Ok(loss)
}

/// Deterministic loss over every unmasked pixel with `cfg.eval_k` fixed PSF
/// samples per pixel; no ground truth involved.
pub fn evaluate_loss(stacks: &[SliceStack], cfg: &ReconConfig, params: &ModelParams, exec: Execution) -> Result<f64> {
    params.check(&cfg.model)?;
    let problem = Problem::new(stacks, cfg.bbox_margin)?;
    let nets = Networks::new(cfg)?;
    match cfg.precision {
        Precision::F32 => {
            let (sr, slice) = params.cast::<f32>();
            eval_loss(&problem, &nets, &sr, &slice, cfg, exec)
        }
        Precision::F64 => eval_loss(&problem, &nets, &params.sr, &params.slice, cfg, exec),
    }
}

/// `iteration,loss,lr_sr,lr_slice,k` rows.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &[TraceRow]) -> Result<()> {
    writeln!(w, "iteration,loss,lr_sr,lr_slice,k")?;
    for r in trace {
        writeln!(w, "{},{:e},{:e},{:e},{}", r.iteration, r.loss, r.lr_sr, r.lr_slice, r.k)?;
    }
    Ok(())
}

use crate::error::{ensure, Result};

/// Cosine-annealed learning rate from `lr0` at `it = 0` down to `lr_min` at `it = it_max`.
pub fn cosine_anneal(lr0: f64, lr_min: f64, it: usize, it_max: usize) -> Result<f64> {
    ensure!(it <= it_max, Range, "iteration {it} beyond {it_max}");
    ensure!(lr0 >= lr_min, Range, "lr0 {lr0} below lr_min {lr_min}");
    if it_max == 0 {
        return Ok(lr0);
    }
    let phase = std::f64::consts::PI * it as f64 / it_max as f64;
    Ok(lr_min + 0.5 * (lr0 - lr_min) * (1.0 + phase.cos()))
}

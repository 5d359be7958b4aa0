//! Central finite-difference checks of analytic gradients.

/// Outcome of comparing one gradient vector with finite differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// Component with the largest relative error.
    pub worst: usize,
    pub checked: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_err < tol
    }

    /// Worst of two checks.
    pub fn merge(self, other: GradCheck) -> GradCheck {
        let worst = if other.max_rel_err > self.max_rel_err { other } else { self };
        GradCheck { checked: self.checked + other.checked, ..worst }
    }
}

/// `|a - b| / max(|a|, |b|, floor)`; `floor` keeps near-zero components from
/// turning round-off into large relative errors.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Compare `grad` with `(f(x + h e_i) - f(x - h e_i)) / 2h` for every component.
pub fn check<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], grad: &[f64], h: f64, floor: f64) -> GradCheck {
    assert_eq!(x.len(), grad.len(), "gradient length must match the point");
    let mut out = GradCheck { max_rel_err: 0.0, worst: 0, checked: 0 };
    let mut p = x.to_vec();
    for i in 0..x.len() {
        p[i] = x[i] + h;
        let up = f(&p);
        p[i] = x[i] - h;
        let down = f(&p);
        p[i] = x[i];
        let e = rel_err(grad[i], (up - down) / (2.0 * h), floor);
        if e > out.max_rel_err || out.checked == 0 {
            out.max_rel_err = e;
            out.worst = i;
        }
        out.checked += 1;
    }
    out
}

/// [`check`] with the floor set to `1e-4·max|grad|`, so components that
/// vanish by construction are compared on the scale of the whole gradient.
pub fn check_scaled<F: FnMut(&[f64]) -> f64>(f: F, x: &[f64], grad: &[f64], h: f64) -> GradCheck {
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    check(f, x, grad, h, (1e-4 * scale).max(1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_gradient_passes_and_wrong_one_fails() {
        let f = |x: &[f64]| x[0] * x[0] * x[1] + x[1].sin();
        let x = [0.7, -0.3];
        let g = [2.0 * 0.7 * -0.3, 0.49 + (-0.3f64).cos()];
        assert!(check(f, &x, &g, 1e-6, 1e-8).passes(1e-7));
        let bad = [g[0], g[1] * 1.01];
        let c = check(f, &x, &bad, 1e-6, 1e-8);
        assert_eq!(c.worst, 1);
        assert!(!c.passes(1e-3));
    }
}

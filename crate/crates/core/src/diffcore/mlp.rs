use super::spec::HeadActivation;
use super::{Activation, Layout, MlpSpec, ParamSet, Real};
use crate::error::{ensure, Result};

/// A network architecture bound to its parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layout: Layout,
    out_acts: Vec<HeadActivation>,
}

/// Intermediate values of one forward batch.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    batch: usize,
    param_version: u64,
    param_len: usize,
    /// Input to each layer; `acts[0]` is the batch input.
    acts: Vec<Vec<T>>,
    /// Activation derivative at each layer's pre-activation; empty when identically one.
    derivs: Vec<Vec<T>>,
}

impl<T> Tape<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Gradients from one backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub params: Vec<T>,
    pub inputs: Vec<T>,
}

impl Mlp {
    pub fn new(spec: MlpSpec) -> Result<Self> {
        let layout = Layout::new(&spec)?;
        let out_acts = spec.output_activations();
        Ok(Self { spec, layout, out_acts })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn n_params(&self) -> usize {
        self.layout.len()
    }

    fn check_params<T: Real>(&self, params: &ParamSet<T>) -> Result<()> {
        ensure!(
            params.spec() == &self.spec,
            Shape,
            "parameter set was built for a different architecture"
        );
        Ok(())
    }

    /// Evaluate a row-major batch of `batch` input vectors.
    pub fn forward<T: Real>(&self, params: &ParamSet<T>, inputs: &[T], batch: usize) -> Result<(Vec<T>, Tape<T>)> {
        self.check_params(params)?;
        let n_in = self.spec.input_width();
        ensure!(
            inputs.len() == batch * n_in,
            Shape,
            "input holds {} values, expected {batch} x {n_in}",
            inputs.len()
        );
        ensure!(inputs.iter().all(|x| x.is_finite()), Numeric, "non-finite network input");

        let w = params.values();
        let n_layers = self.layout.n_layers();
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(n_layers + 1);
        let mut derivs: Vec<Vec<T>> = Vec::with_capacity(n_layers);
        acts.push(inputs.to_vec());

        for l in 0..n_layers {
            let (fan_in, fan_out) = self.layout.dims(l);
            let bias = &w[self.layout.bias_range(l)];
            let mut z: Vec<T> = Vec::with_capacity(batch * fan_out);
            for _ in 0..batch {
                z.extend_from_slice(bias);
            }
            T::gemm(batch, fan_in, fan_out, T::one(), &acts[l], false, &w[self.layout.weight_range(l)], true, T::one(), &mut z);
            let last = l + 1 == n_layers;
            let d = if last { self.apply_heads(&mut z) } else { apply_hidden(self.spec.activation, &mut z) };
            derivs.push(d);
            acts.push(z);
        }
        let out = acts.pop().expect("at least one layer");
        Ok((
            out,
            Tape { batch, param_version: params.version(), param_len: params.len(), acts, derivs },
        ))
    }

    fn apply_heads<T: Real>(&self, z: &mut [T]) -> Vec<T> {
        if self.out_acts.iter().all(|a| *a == HeadActivation::Linear) {
            return Vec::new();
        }
        let width = self.out_acts.len();
        let mut d = vec![T::one(); z.len()];
        for (row, drow) in z.chunks_mut(width).zip(d.chunks_mut(width)) {
            for ((v, dv), act) in row.iter_mut().zip(drow.iter_mut()).zip(&self.out_acts) {
                let y = act.apply(v.f64());
                *dv = T::of(match act {
                    HeadActivation::Linear => 1.0,
                    HeadActivation::Sigmoid => y * (1.0 - y),
                    HeadActivation::Tanh => 1.0 - y * y,
                });
                *v = T::of(y);
            }
        }
        d
    }

    /// Backpropagate `cotangents` (same shape as the forward output).
    pub fn backward<T: Real>(&self, params: &ParamSet<T>, tape: &Tape<T>, cotangents: &[T]) -> Result<Gradients<T>> {
        let mut grads = vec![T::zero(); self.n_params()];
        let inputs = self.backward_accumulate(params, tape, cotangents, &mut grads, true)?;
        Ok(Gradients { params: grads, inputs: inputs.unwrap_or_default() })
    }

    /// Backpropagate and add the parameter gradient into `param_grads`.
    /// Returns input gradients when `want_inputs` is set.
    pub fn backward_accumulate<T: Real>(
        &self,
        params: &ParamSet<T>,
        tape: &Tape<T>,
        cotangents: &[T],
        param_grads: &mut [T],
        want_inputs: bool,
    ) -> Result<Option<Vec<T>>> {
        self.check_params(params)?;
        ensure!(
            tape.param_version == params.version() && tape.param_len == params.len(),
            State,
            "tape was recorded against different parameter values"
        );
        ensure!(tape.acts.len() == self.layout.n_layers(), State, "tape belongs to another network");
        ensure!(
            cotangents.len() == tape.batch * self.spec.output_width(),
            Shape,
            "cotangent batch does not match the forward output"
        );
        ensure!(param_grads.len() == self.n_params(), Shape, "gradient buffer has the wrong length");

        let w = params.values();
        let batch = tape.batch;
        let mut delta = cotangents.to_vec();
        for l in (0..self.layout.n_layers()).rev() {
            let (fan_in, fan_out) = self.layout.dims(l);
            let d = &tape.derivs[l];
            if !d.is_empty() {
                delta.iter_mut().zip(d).for_each(|(g, &s)| *g *= s);
            }
            // dW += delta^T x
            let gw = &mut param_grads[self.layout.weight_range(l)];
            T::gemm(fan_out, batch, fan_in, T::one(), &delta, true, &tape.acts[l], false, T::one(), gw);
            let gb = &mut param_grads[self.layout.bias_range(l)];
            for row in delta.chunks(fan_out) {
                gb.iter_mut().zip(row).for_each(|(g, &x)| *g += x);
            }
            if l == 0 && !want_inputs {
                return Ok(None);
            }
            let mut prev = vec![T::zero(); batch * fan_in];
            T::gemm(batch, fan_out, fan_in, T::one(), &delta, false, &w[self.layout.weight_range(l)], false, T::zero(), &mut prev);
            delta = prev;
        }
        Ok(Some(delta))
    }
}

fn apply_hidden<T: Real>(act: Activation, z: &mut [T]) -> Vec<T> {
    match act {
        Activation::Sine { w0 } => {
            let mut d = vec![T::zero(); z.len()];
            T::sine_layer(z, &mut d, T::of(w0));
            d
        }
        Activation::Relu => z
            .iter_mut()
            .map(|v| {
                if *v > T::zero() {
                    T::one()
                } else {
                    *v = T::zero();
                    T::zero()
                }
            })
            .collect(),
        Activation::Linear => Vec::new(),
    }
}

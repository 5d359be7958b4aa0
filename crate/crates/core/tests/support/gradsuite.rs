//! Finite-difference gradient suite shared by the gradient and acceptance tests.
//! Double-precision gradients must agree to 1e-4, single precision to 1e-3.

use svrec::diffcore::gradcheck::{check_scaled as check, GradCheck};
use svrec::diffcore::{Activation, Head, HeadActivation, Mlp, MlpSpec, ParamSet, Real};
use svrec::geometry::{to_matrix, RigidParams, RigidTransform};
use svrec::model::{ModelConfig, SliceHeads, SliceModule, SrModule};
use svrec::recon::{Batch, ModelParams, Networks, Offsets, Problem, ReconConfig, SliceStack};
use svrec::rng;
use svrec::Execution;

pub const TOL_F64: f64 = 1e-4;
pub const TOL_F32: f64 = 1e-3;

pub struct Case {
    pub name: String,
    pub result: GradCheck,
    pub tol: f64,
}

impl Case {
    pub fn passes(&self) -> bool {
        self.result.passes(self.tol)
    }
}

fn uniform(seed: u64, n: usize, scale: f64) -> Vec<f64> {
    let mut g = rng::stream(seed, &[]);
    (0..n).map(|_| rng::uniform(&mut g, -scale, scale)).collect()
}

fn params_from(spec: &MlpSpec, values: &[f64]) -> ParamSet<f64> {
    ParamSet::from_values(spec, values.to_vec()).unwrap()
}

fn networks() -> Vec<(&'static str, MlpSpec)> {
    vec![
        ("sine", MlpSpec::new(vec![3, 6, 5, 2], Activation::Sine { w0: 3.0 })),
        ("relu", MlpSpec::new(vec![2, 7, 3], Activation::Relu)),
        ("linear", MlpSpec::new(vec![4, 3], Activation::Linear)),
        (
            "heads",
            MlpSpec::new(vec![2, 5, 5], Activation::Sine { w0: 2.0 }).with_heads(vec![
                Head { offset: 0, width: 2, activation: HeadActivation::Linear },
                Head { offset: 2, width: 2, activation: HeadActivation::Sigmoid },
                Head { offset: 4, width: 1, activation: HeadActivation::Tanh },
            ]),
        ),
        ("siren w0=30", MlpSpec::new(vec![3, 16, 16, 1], Activation::Sine { w0: 30.0 })),
    ]
}

/// Parameter and input gradients of `Σ c ⊙ mlp(x)`; analytic in `T`, differences in f64.
fn mlp_case<T: Real>(name: &str, spec: &MlpSpec, seed: u64, tol: f64) -> Vec<Case> {
    let mlp = Mlp::new(spec.clone()).unwrap();
    let batch = 3;
    let scale = if matches!(spec.activation, Activation::Sine { w0 } if w0 > 10.0) { 0.05 } else { 0.5 };
    let theta: Vec<f64> = uniform(seed, mlp.n_params(), scale).iter().map(|&v| T::of(v).f64()).collect();
    let x: Vec<f64> = uniform(seed + 1, batch * spec.input_width(), 1.0).iter().map(|&v| T::of(v).f64()).collect();
    let cot = uniform(seed + 2, batch * spec.output_width(), 1.0);
    let f = |theta: &[f64], x: &[f64]| -> f64 {
        let (y, _) = mlp.forward(&params_from(spec, theta), x, batch).unwrap();
        y.iter().zip(&cot).map(|(a, b)| a * b).sum()
    };
    let p: ParamSet<T> = params_from(spec, &theta).cast();
    let xt: Vec<T> = x.iter().map(|&v| T::of(v)).collect();
    let (_, tape) = mlp.forward(&p, &xt, batch).unwrap();
    let ct: Vec<T> = cot.iter().map(|&v| T::of(v)).collect();
    let g = mlp.backward(&p, &tape, &ct).unwrap();
    let gp: Vec<f64> = g.params.iter().map(|v| v.f64()).collect();
    let gx: Vec<f64> = g.inputs.iter().map(|v| v.f64()).collect();
    let h = 1e-6;
    vec![
        Case { name: format!("mlp {name} params ({})", std::any::type_name::<T>()), result: check(|t| f(t, &x), &theta, &gp, h), tol },
        Case { name: format!("mlp {name} inputs ({})", std::any::type_name::<T>()), result: check(|xx| f(&theta, xx), &x, &gx, h), tol },
    ]
}

pub fn mlp_cases() -> Vec<Case> {
    let mut out = Vec::new();
    for (k, (name, spec)) in networks().into_iter().enumerate() {
        out.extend(mlp_case::<f64>(name, &spec, 10 * k as u64, TOL_F64));
        out.extend(mlp_case::<f32>(name, &spec, 10 * k as u64, TOL_F32));
    }
    out
}

/// SR input gradient (the path that drives motion) at SIREN initialization.
pub fn sr_input_cases() -> Vec<Case> {
    let cfg = ModelConfig { sr_hidden: vec![32, 32, 32], ..ModelConfig::default() };
    let sr = SrModule::new(&cfg).unwrap();
    let init = ModelParams::init(&cfg, 3).unwrap().sr;
    let pts = uniform(4, 3 * 5, 0.9);
    let f = |x: &[f64]| sr.eval(&init, x).unwrap().0.iter().sum::<f64>();
    let mut out = Vec::new();
    let (_, tape) = sr.eval(&init, &pts).unwrap();
    let g = sr.mlp().backward(&init, &tape, &[1.0; 5]).unwrap();
    out.push(Case { name: "sr input gradient (f64)".into(), result: check(f, &pts, &g.inputs, 1e-7), tol: TOL_F64 });
    let p32: ParamSet<f32> = init.cast();
    let pts32: Vec<f32> = pts.iter().map(|&v| v as f32).collect();
    let pts_back: Vec<f64> = pts32.iter().map(|&v| v as f64).collect();
    let p_back: ParamSet<f64> = p32.cast();
    let (_, tape) = sr.eval(&p32, &pts32).unwrap();
    let g = sr.mlp().backward(&p32, &tape, &[1.0f32; 5]).unwrap();
    let gx: Vec<f64> = g.inputs.iter().map(|&v| v as f64).collect();
    let f32ref = |x: &[f64]| sr.eval(&p_back, x).unwrap().0.iter().sum::<f64>();
    out.push(Case { name: "sr input gradient (f32)".into(), result: check(f32ref, &pts_back, &gx, 1e-6), tol: TOL_F32 });
    out
}

/// Slice module: ψ (scaled, centred), σ and ω (population softmax) heads.
pub fn slice_module_cases() -> Vec<Case> {
    let mut out = Vec::new();
    for center in [true, false] {
        let cfg = ModelConfig { slice_hidden: vec![8, 8], logit_scale: 0.7, center_motion: center, ..ModelConfig::default() };
        let m = SliceModule::new(&cfg, SliceHeads::default()).unwrap();
        let spec = cfg.slice_spec();
        let n = 5;
        let enc: Vec<_> = (0..n).map(|i| svrec::model::encode_slice(i % 2, 2, i / 2, 3).unwrap()).collect();
        let theta = uniform(20, spec_len(&spec), 0.4);
        let c_psi = uniform(21, 6 * n, 1.0);
        let c_s = uniform(22, n, 1.0);
        let c_w = uniform(23, n, 1.0);
        let f = |t: &[f64]| -> f64 {
            let (st, _) = m.eval(&params_from(&spec, t), &enc).unwrap();
            st.iter()
                .enumerate()
                .map(|(i, s)| {
                    let p = s.psi.to_array();
                    (0..6).map(|j| c_psi[6 * i + j] * p[j]).sum::<f64>() + c_s[i] * s.sigma + c_w[i] * s.omega
                })
                .sum()
        };
        let p = params_from(&spec, &theta);
        let (_, tape) = m.eval(&p, &enc).unwrap();
        let d_psi: Vec<[f64; 6]> = (0..n).map(|i| std::array::from_fn(|j| c_psi[6 * i + j])).collect();
        let g = m.backward(&p, &tape, &d_psi, &c_s, &c_w).unwrap();
        out.push(Case { name: format!("slice module heads (centred={center})"), result: check(f, &theta, &g, 1e-6), tol: TOL_F64 });
    }
    out
}

fn spec_len(spec: &MlpSpec) -> usize {
    ParamSet::<f64>::zeros(spec).unwrap().len()
}

/// Two 4×4 slices of one stack, smooth intensities, one slice already rotated.
pub fn tiny_stacks() -> Vec<SliceStack> {
    let mut data = Vec::new();
    for s in 0..2 {
        for r in 0..4 {
            for c in 0..4 {
                data.push(0.3 + 0.1 * s as f32 + 0.05 * r as f32 - 0.03 * c as f32);
            }
        }
    }
    let poses = vec![
        RigidTransform::translation([0.0, 0.0, -1.0]),
        to_matrix(&RigidParams::from_degrees([10.0, 0.0, 5.0], [0.5, 0.0, 1.0])).unwrap(),
    ];
    vec![SliceStack {
        stack_idx: 0,
        rows: 4,
        cols: 4,
        pixel_spacing: [1.0, 1.0],
        thickness: 2.0,
        gap: 0.0,
        poses,
        data,
        mask: vec![true; 32],
        pivot: [0.2, -0.1, 0.0],
    }]
}

fn tiny_config(outlier: bool, motion: bool, center: bool) -> ReconConfig {
    ReconConfig {
        model: ModelConfig {
            sr_hidden: vec![16, 16],
            slice_hidden: vec![8],
            w0: 3.0,
            motion_scale_rot: 0.3,
            motion_scale_trans: 2.0,
            logit_scale: 0.7,
            center_motion: center,
            ..ModelConfig::default()
        },
        outlier_handling: outlier,
        freeze_motion: !motion,
        ..ReconConfig::default()
    }
}

/// Loss of one frozen batch through PSF sampling, motion, σ/ω and the SR network.
fn pipeline_case<T: Real>(outlier: bool, motion: bool, center: bool, tol: f64) -> Vec<Case> {
    let stacks = tiny_stacks();
    let cfg = tiny_config(outlier, motion, center);
    let problem = Problem::new(&stacks, 1.0).unwrap();
    let nets = Networks::new(&cfg).unwrap();
    let init = ModelParams::init(&cfg.model, 5).unwrap();
    let sr_spec = init.sr.spec().clone();
    let sl_spec = init.slice.spec().clone();
    let sr: Vec<f64> = init.sr.values().iter().map(|&v| T::of(v).f64()).collect();
    // non-zero slice outputs so every head carries gradient
    let slice: Vec<f64> = uniform(6, init.slice.len(), 0.3).iter().map(|&v| T::of(v).f64()).collect();
    let k = 2;
    let pixels: Vec<usize> = vec![0, 5, 17, 30, 9, 22];
    let mut g = rng::stream(8, &[]);
    let offsets = (0..pixels.len() * k)
        .map(|_| [rng::uniform(&mut g, -0.4, 0.4), rng::uniform(&mut g, -0.4, 0.4), rng::uniform(&mut g, -0.8, 0.8)])
        .collect();
    let batch = Batch { pixels, k, offsets: Offsets::Frozen(offsets) };
    let loss = |a: &[f64], b: &[f64]| {
        problem
            .step(&nets, &params_from(&sr_spec, a), &params_from(&sl_spec, b), &batch, false, 4, Execution::Sequential)
            .unwrap()
            .loss
    };
    let sr_t: ParamSet<T> = params_from(&sr_spec, &sr).cast();
    let sl_t: ParamSet<T> = params_from(&sl_spec, &slice).cast();
    let out = problem.step(&nets, &sr_t, &sl_t, &batch, true, 4, Execution::Sequential).unwrap();
    let gs: Vec<f64> = out.sr_grads.iter().map(|v| v.f64()).collect();
    let gl: Vec<f64> = out.slice_grads.iter().map(|v| v.f64()).collect();
    let h = 1e-6;
    let tag = format!("outlier={outlier} motion={motion} centred={center}, {}", std::any::type_name::<T>());
    let mut cases = vec![Case { name: format!("pipeline SR params ({tag})"), result: check(|a| loss(a, &slice), &sr, &gs, h), tol }];
    if motion || outlier {
        cases.push(Case { name: format!("pipeline slice params ({tag})"), result: check(|b| loss(&sr, b), &slice, &gl, h), tol });
    }
    cases
}

pub fn pipeline_cases() -> Vec<Case> {
    let mut out = Vec::new();
    for (o, m, c) in [(true, true, true), (true, true, false), (false, true, true), (true, false, true), (false, false, true)] {
        out.extend(pipeline_case::<f64>(o, m, c, TOL_F64));
    }
    out.extend(pipeline_case::<f32>(true, true, true, TOL_F32));
    out
}

#[allow(dead_code)] // used by the acceptance target
pub fn all_cases() -> Vec<Case> {
    let mut out = mlp_cases();
    out.extend(sr_input_cases());
    out.extend(slice_module_cases());
    out.extend(pipeline_cases());
    out
}

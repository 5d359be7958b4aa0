//! Minimal reverse-mode engine for fully connected networks.
//!
//! Networks are plain MLPs over a flat parameter vector. A forward pass over
//! a batch records a [`Tape`]; the backward pass yields gradients with respect
//! to both the parameters and the batch inputs, which is what motion
//! estimation needs (intensity gradients flow back into sample coordinates).

mod adam;
pub mod gradcheck;
mod mlp;
mod params;
mod real;
mod schedule;
mod spec;

pub use adam::AdamState;
pub use mlp::{Gradients, Mlp, Tape};
pub use params::{init_default, init_siren, Layout, ParamSet, ParamHeader, LAYOUT_VERSION};
pub use real::Real;
pub use schedule::cosine_anneal;
pub use spec::{Activation, Head, HeadActivation, MlpSpec};

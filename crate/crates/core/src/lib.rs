//! Slice-to-volume reconstruction with sine-activated coordinate networks.
//!
//! A volume is represented by a coordinate network (the SR module) and every
//! acquired slice gets its rigid motion, intensity scale and weight from a
//! second network (the slice module) driven by a per-slice encoding. Both are
//! fitted jointly through a Monte-Carlo PSF forward model, optionally starting
//! from weights meta-learned over many reconstruction tasks.
//!
//! # Modules
//! - [`diffcore`]: reverse-mode MLP engine, Adam, cosine schedule
//! - [`geometry`]: rigid transforms, PSF covariance and sampling
//! - [`model`]: SR and slice networks
//! - [`recon`]: forward model, loss, training loop, rendering
//! - [`meta`]: first-order meta-learning of initializations
//! - [`simulate`]: phantoms, stack extraction, corruption
//! - [`metrics`]: PSNR, SSIM, NCC, rigid registration, motion error
//! - [`io`]: file formats and configuration

pub mod diffcore;
pub mod error;
pub mod geometry;
pub mod io;
pub mod meta;
pub mod metrics;
pub mod model;
pub mod par;
pub mod recon;
pub mod rng;
pub mod simulate;
pub mod volume;

pub use error::{Error, Result};
pub use par::Execution;
pub use volume::Volume;

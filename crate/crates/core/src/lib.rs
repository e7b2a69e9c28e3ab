//! Hypergraph-convolution image inpainting on a small, deterministic
//! reverse-mode autodiff engine.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`], [`kernels`], [`tape`], [`params`], [`gradcheck`]: dense tensors,
//!   reverse-mode differentiation and finite-difference verification.
//! - [`hypergraph`]: the trainable spatial hypergraph layer and its oracles.
//! - [`net`]: gated convolutions, the coarse/refine generator and the
//!   patch discriminator.
//! - [`losses`], [`masks`], [`schedule`], [`optim`], [`train`]: objectives,
//!   hole generation, curriculum, Adam and the adversarial training loop.
//! - [`metrics`], [`io`]: image-quality measures and persistence.
//!
//! With the default `parallel` feature, convolution rows, matrix rows and
//! per-image tapes are evaluated with rayon. All parallel work writes disjoint
//! outputs with a fixed per-element accumulation order, so results are
//! bitwise identical to the sequential build.

pub mod checks;
pub mod error;
pub mod gradcheck;
pub mod hypergraph;
pub mod init;
pub mod io;
pub mod kernels;
pub mod losses;
pub mod masks;
pub mod metrics;
pub mod net;
pub mod optim;
pub mod par;
pub mod params;
pub mod schedule;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;

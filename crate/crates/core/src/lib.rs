//! CTF-aware anisotropic affinity and class averaging for cryo-EM projection images.
//!
//! The crate is organized along the processing pipeline:
//!
//! - [`image`] and [`mrc`]: image containers and MRC stack I/O with a JSON-lines sidecar.
//! - [`ctf`]: contrast transfer function evaluation, application and phase flipping.
//! - [`synth`]: synthetic projection datasets from Gaussian-blob phantoms.
//! - [`steerable`]: Fourier–Bessel expansion where in-plane rotation is a per-block phase.
//! - [`cwf`]: mean/covariance estimation and Wiener filtering, plus posterior moments.
//! - [`affinity`]: the anisotropic affinity between posterior image distributions.
//! - [`classify`]: rotational alignment, candidate generation, re-ranking and class averages.
//! - [`eval`]: ground-truth metrics (true-neighbor counts, angular distances).
//! - [`pipeline`], [`config`] and [`plot`]: the end-to-end driver used by the CLI.

pub mod affinity;
pub mod classify;
pub mod config;
pub mod ctf;
pub mod cwf;
mod error;
pub mod eval;
pub mod fft;
pub mod image;
pub mod linalg;
pub mod mrc;
pub mod pipeline;
pub mod plot;
pub mod steerable;
pub mod synth;

pub use error::{Error, Result};

pub use num_complex::Complex64;

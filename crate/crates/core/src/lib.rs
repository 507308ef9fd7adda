//! Saliency-guided mixup of image pairs.
//!
//! Two inputs are blended through a region mask chosen by multi-label
//! graph-cut optimization, after each input's regions have been rearranged by
//! a binary transport plan that keeps salient content visible. The crate also
//! ships the reference solvers and harnesses used to check the combinatorial
//! pieces: an exhaustive mask minimizer, exact and factorial assignment
//! solvers, a transport benchmark, and a validation suite.
//!
//! Module map:
//!
//! - [`tensor_io`]: images (PNG) and float tensors (PFT).
//! - [`saliency`]: region grids, gradient-norm and Sobel saliency, pooling.
//! - [`energy`]: the mask objective and its brute-force minimizer.
//! - [`graphcut`]: max-flow and α-β swap.
//! - [`transport`]: cost matrices, masked transport, exact assignment.
//! - [`mixer`]: the mixing pipeline, adversarial variant, metrics, baselines.
//! - [`bench`], [`validate`], [`cli`]: harnesses behind the `puzzlemix` binary.

pub mod bench;
pub mod cli;
pub mod energy;
pub mod error;
pub mod graphcut;
pub mod mixer;
pub mod saliency;
pub mod synthetic;
pub mod tensor_io;
pub mod transport;
pub mod validate;

pub use error::{Error, Result};

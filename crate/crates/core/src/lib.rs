//! Epistemic output uncertainty for small feed-forward classifiers.
//!
//! A network is trained to a well-located optimum of an honest binomial cost
//! `Q = −2 ln L`. Each weight is then remapped to a coordinate `z_w` in which
//! the cost rises as `z_w²`, the inverse covariance between remapped weights
//! is estimated from four-point cost probes, and Metropolis sampling over `z`
//! yields plausible weight sets whose outputs form a distribution per input.
//!
//! The [`likelihood`] and [`reference`] modules hold the scalar machinery and
//! the closed-form models it is validated against.

// `!(a < b)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datapipe;
pub mod error;
pub mod likelihood;
pub mod mlp;
pub mod numeric;
pub mod reference;
pub mod remap;
pub mod sampler;
pub mod selector;
pub mod trainer;

pub use error::{Error, Result};

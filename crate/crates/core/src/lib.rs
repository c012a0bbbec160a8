//! Sketch-and-paint generative pipeline, allocation-only core.
//!
//! Everything in this crate is pure computation over in-memory buffers:
//! a reverse-mode autodiff engine ([`tensor`]), the two generative stages
//! ([`sketch`] for latent → edge map and [`paint`] for edge map → painting),
//! dataset preparation on decoded pixels ([`image`], [`edge`], [`data`]),
//! and the evaluation battery ([`pipeline`], [`neighbors`], [`survey`],
//! [`stats`]). File formats, decoding, the CLI and the survey server live
//! in the `sapgan` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod edge;
pub mod error;
pub mod image;
pub mod neighbors;
pub mod nn;
pub mod paint;
pub mod pipeline;
pub mod rng;
pub mod sketch;
pub mod stats;
pub mod survey;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Stream;
pub use tensor::{Graph, Scalar, Tensor, Var};

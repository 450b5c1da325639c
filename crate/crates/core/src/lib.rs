//! Posterior computations for the Gaussian white noise sequence model.
//!
//! The model observes wavelet-type coefficients
//!
//! ```text
//! Y[j,k] = theta[j,k] + n^{-1/2} eps[j,k],   eps[j,k] ~ N(0, 1) i.i.d.,
//! ```
//!
//! for resolution levels `j <= J_n = floor(log2 n)` and positions `k < 2^j`.
//! This crate implements three priors on `theta` and their posteriors:
//!
//! * [`spikeslab`]: coordinate-wise spike-and-slab, exact product posterior;
//! * [`blockslab`]: level-wise (block) spike-and-slab, exact posterior;
//! * [`sieve`]: uniform prior on a finite lattice, exact enumerated posterior
//!   together with the admissible-partition machinery used to bound it.
//!
//! On top of these, [`inference`] builds Bayes estimators and credible balls and
//! [`modulus`] evaluates moduli of continuity and the matching lower-bound
//! envelope. Everything here is pure computation: no IO, no threads, no global
//! state. Randomness is always passed in, and the observation noise is a pure
//! function of `(seed, j, k)` (see [`rng`]).
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod blockslab;
mod error;
pub mod inference;
pub mod modulus;
pub mod posterior;
pub mod quad;
pub mod rng;
pub mod seqmodel;
pub mod sieve;
pub mod slab;
pub mod special;
pub mod spikeslab;

pub use error::{Error, Result};
pub use posterior::{Loss, LossEvaluator, Posterior, SparseDraw};
pub use seqmodel::{HoelderBall, Observations, SequenceParam, SignPattern};
pub use slab::SlabDensity;

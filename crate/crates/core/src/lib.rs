//! Discriminative domain-invariant adversarial training at desk scale.
//!
//! The crate trains a small multilayer perceptron so that its features are
//! simultaneously class-discriminative and indistinguishable across several
//! source domains, then evaluates how well the learned classifier transfers
//! to a held-out domain. Alignment is adversarial: gradient-reversed domain
//! discriminators act on the marginal feature distribution (one global
//! discriminator) and on each class-conditional distribution (one
//! discriminator per class), while a center-based discriminative loss keeps
//! classes compact and separated.
//!
//! Everything is built on a self-contained reverse-mode autodiff tape over
//! dense `f64` matrices ([`autodiff`]) and a seeded PRNG ([`rng`]), so runs
//! are bit-for-bit reproducible from a single seed. The crate is
//! `no_std`-compatible (requires `alloc`); file formats and the command-line
//! harness live in the companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod data;
pub mod error;
pub mod losses;
pub mod model;
pub mod nn;
pub mod rng;
pub mod trainer;

pub use error::Error;

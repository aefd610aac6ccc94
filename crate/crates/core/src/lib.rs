#![no_std]
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Collective matrix completion: a joint low-rank parameter matrix over
//! several sources sharing their rows, fitted by nuclear-norm penalized
//! exponential-family likelihood (or a Lipschitz empirical risk).

extern crate alloc;

pub mod data;
pub mod error;
pub mod expfam;
pub mod lowrank;
pub mod objective;
pub mod solver;

pub use error::{Error, Result};
pub use data::{BlockLayout, CollectiveMatrix, Observation, ObservationSet, SamplingScheme};
pub use expfam::{ExpFamilyModel, Family};

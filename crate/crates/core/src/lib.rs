//! Post-randomization (PRAM) for categorical data and estimation from the
//! perturbed release.
//!
//! A sensitive categorical variable with K levels is randomized record by
//! record through a known column-stochastic K×K transition matrix P, where
//! entry (i, j) is the probability of releasing level i-1 when the true level
//! is j-1. Downstream users only see the perturbed column, yet any parameter
//! defined through an estimating equation E{U(Y, X; β)} = 0 can still be
//! estimated consistently: the equation is re-weighted by columns of P⁻¹,
//! which undoes the perturbation in expectation without assuming any model
//! for the data. Standard errors come from multiplier resampling or from a
//! plug-in sandwich formula.
//!
//! The crate is `no_std`-compatible (it allocates but performs no IO); the
//! companion `pram` crate carries file formats, the command-line interface
//! and the simulation driver.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dataset;
pub mod error;
pub mod estfun;
pub mod estimators;
pub mod inference;
pub mod math;
pub mod matrix;
pub mod mechanism;
pub mod model_dependent;
pub mod rng;
pub mod solver;
pub mod transition;

pub use dataset::{Column, Dataset};
pub use error::{Error, Result};
pub use estfun::{EstimandSpec, EstimatingFunction, SensitiveRole};
pub use estimators::{EstimateResult, Method};
pub use inference::{MultiplierLaw, ResampleConfig, ResampleVariance};
pub use matrix::SquareMat;
pub use mechanism::FrequencyVector;
pub use model_dependent::{LatentFamily, LatentModelSpec, ModelDependentFit};
pub use solver::{Init, JacobianMode, SolverConfig, WeightScheme};
pub use transition::{ReversionKind, ReversionMatrix, TransitionMatrix};

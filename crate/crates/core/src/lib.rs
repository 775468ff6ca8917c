//! Cumulative incidence estimation for censored competing-risks data with
//! regression trees and random forests grown on imputed Brier-loss responses.
//!
//! The pipeline is:
//!
//! 1. fit a censoring survivor model ([`censoring`]),
//! 2. fit a nuisance cumulative-incidence model ([`nuisance`]),
//! 3. transform each observation into a vector of imputed responses over a
//!    [`TimeGrid`] ([`imputation`]): IPCW, Buckley-James, doubly robust, or the
//!    doubly robust transform with a Gaussian multiplier in place of the
//!    censoring martingale,
//! 4. grow multivariate squared-error trees and bootstrap forests on those
//!    responses ([`tree`], [`forest`]).
//!
//! [`simulation`] generates data with known cumulative incidence functions and
//! [`evaluation`] scores fitted forests against them.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. The `parallel` feature fans row-wise and tree-wise work out over
//! rayon; results do not depend on the number of workers.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod censoring;
pub mod data;
mod error;
pub mod evaluation;
pub mod forest;
pub mod imputation;
pub mod matrix;
pub mod nuisance;
mod num;
pub mod rng;
pub mod simulation;
pub mod tree;

pub use censoring::{CensoringModel, HazardCurve, HazardJump};
pub use data::{Dataset, ObservedRecord, TimeGrid};
pub use error::{Error, Result};
pub use forest::ForestModel;
pub use imputation::{ImputedMatrix, Method};
pub use matrix::Matrix;
pub use nuisance::CifModel;
pub use tree::TreeModel;

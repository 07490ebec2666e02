//! Hierarchical topic ranking: entropy-weighted branch similarity between a
//! document and every root-to-leaf path of an expert topic tree, trained
//! greedily against AUCH or by variational-Bayes EM.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod greedy;
pub mod service;
pub mod simcore;
pub mod snapshot;
pub mod sparse;
pub mod synth;
pub mod train;
pub mod vbayes;

pub use error::{Error, Result};

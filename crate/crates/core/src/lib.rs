//! Hidden Markov models with a determinantal diversity prior on the rows of
//! the transition matrix.
//!
//! The crate covers exact inference ([`hmm`]), the row-similarity kernel and
//! its log-determinant ([`kernel`]), MAP-EM and supervised training
//! ([`learning`]), alignment-based evaluation ([`eval`]), dataset readers and
//! model files ([`data`]), and the `dhmm` batch driver ([`cli`]).

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod hmm;
pub mod kernel;
pub mod learning;

pub use error::{DhmmError, Result};

//! Parameter estimation: MAP-EM for unlabeled data and counted estimates
//! refined by the diversity prior for labeled data.

pub mod config;
pub mod init;
pub mod mstep;
pub mod simplex;
pub mod stats;
pub mod train;
pub mod transitions;

pub use config::{ObjectiveTrace, TraceRecord, TrainConfig, TrainedModel};
pub use init::{init_params, EmissionSpec};
pub use mstep::{count_statistics, CountedParams};
pub use stats::{e_step, SufficientStats};
pub use train::{em_fit_unsupervised, fit_supervised};

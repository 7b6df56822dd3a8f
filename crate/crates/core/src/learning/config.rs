use serde::{Deserialize, Serialize};

use crate::error::{DhmmError, Result};
use crate::hmm::HmmParams;

/// Hyperparameters for both training modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight α of the log-det diversity prior.
    pub alpha: f64,
    /// Weight α_A of the squared distance to the counted transitions (supervised).
    pub alpha_a: f64,
    pub max_em_iters: usize,
    /// EM stops when the objective changes by less than this.
    pub em_tol: f64,
    pub inner_max_iters: usize,
    /// Inner loop stops when Λ_A changes by less than this (δ).
    pub inner_tol: f64,
    /// Starting step γ of every line search.
    pub init_step: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// Symmetric Dirichlet concentration η for π, rows of A, and categorical B.
    pub dirichlet_eta: f64,
    pub seed: u64,
    pub rho: f64,
    /// Gaussian init: variances ~ Gamma(shape, variance_scale · pooled variance).
    pub init_gamma_shape: f64,
    pub init_variance_scale: f64,
    pub variance_floor: f64,
    /// Additive smoothing for categorical and bernoulli emission estimates.
    pub pseudocount: f64,
    /// Check the analytic log-det gradient against finite differences before
    /// gradient-based training.
    pub gradient_check: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            alpha_a: 0.0,
            max_em_iters: 200,
            em_tol: 1e-6,
            inner_max_iters: 50,
            inner_tol: 1e-6,
            init_step: 1.0,
            backtrack_factor: 0.5,
            max_backtracks: 40,
            dirichlet_eta: 3.0,
            seed: 0,
            rho: crate::kernel::DEFAULT_RHO,
            init_gamma_shape: 2.0,
            init_variance_scale: 0.5,
            variance_floor: 1e-8,
            pseudocount: 0.0,
            gradient_check: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(DhmmError::invalid(format!("train config: {msg}")));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be finite and >= 0");
        }
        if !(self.alpha_a >= 0.0 && self.alpha_a.is_finite()) {
            return bad("alpha_a must be finite and >= 0");
        }
        if self.max_em_iters == 0 || self.inner_max_iters == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.em_tol > 0.0 && self.inner_tol > 0.0 && self.init_step > 0.0) {
            return bad("em_tol, inner_tol and init_step must be positive");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.dirichlet_eta > 0.0 && self.init_gamma_shape > 0.0 && self.init_variance_scale > 0.0)
        {
            return bad("dirichlet_eta and gaussian init parameters must be positive");
        }
        if !(self.rho > 0.0) {
            return bad("rho must be positive");
        }
        if !(self.variance_floor > 0.0) || !(self.pseudocount >= 0.0) {
            return bad("variance_floor must be positive and pseudocount non-negative");
        }
        Ok(())
    }
}

/// Objective decomposition recorded once per outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// Σ_n log P(Y_n | λ) (unsupervised) or log P(Y, X | λ) (supervised).
    pub loglik_bound: f64,
    /// α · log det K̃_A.
    pub logdet_term: f64,
    /// −α_A ‖A − A_0‖², zero for unsupervised runs.
    pub anchor_term: f64,
    pub objective: f64,
}

impl TraceRecord {
    pub fn new(iter: usize, loglik_bound: f64, logdet_term: f64, anchor_term: f64) -> Self {
        Self {
            iter,
            loglik_bound,
            logdet_term,
            anchor_term,
            objective: loglik_bound + logdet_term + anchor_term,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTrace {
    pub records: Vec<TraceRecord>,
    /// Λ_A values of accepted inner steps, one list per transition update.
    pub inner: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl ObjectiveTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// Largest decrease between consecutive objective values (0 if monotone).
    pub fn max_decrease(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| w[0].objective - w[1].objective)
            .fold(0.0, f64::max)
    }

    /// CSV with header `iter,loglik_bound,logdet_term,objective,anchor_term`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,loglik_bound,logdet_term,objective,anchor_term\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.iter, r.loglik_bound, r.logdet_term, r.objective, r.anchor_term
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: HmmParams,
    pub trace: ObjectiveTrace,
    pub config: TrainConfig,
    pub converged: bool,
}

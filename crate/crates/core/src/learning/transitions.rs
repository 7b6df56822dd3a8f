//! Transition-matrix subproblem of the M-step: projected gradient ascent on
//!
//! `Λ_A(A) = Σ_ij c_ij ln A_ij + α ln det K̃_A − α_A ‖A − A₀‖²`
//!
//! with rows kept on the simplex by Euclidean projection.

use nalgebra::DMatrix;

use crate::error::{DhmmError, Result};
use crate::hmm::TransitionMatrix;
use crate::kernel::{log_det_gradient, log_det_kernel_rows};
use crate::learning::config::TrainConfig;
use crate::learning::simplex::{interior_rows, project_rows};
use crate::learning::stats::SufficientStats;

/// Terms of Λ_A that depend on A.
#[derive(Debug, Clone)]
pub struct TransitionObjective<'a> {
    pub counts: &'a DMatrix<f64>,
    pub alpha: f64,
    pub rho: f64,
    /// (α_A, A₀) for the supervised anchor.
    pub anchor: Option<(f64, &'a DMatrix<f64>)>,
}

/// Λ_A split into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts {
    pub counts_term: f64,
    pub logdet_term: f64,
    pub anchor_term: f64,
}

impl ObjectiveParts {
    pub fn total(&self) -> f64 {
        self.counts_term + self.logdet_term + self.anchor_term
    }
}

impl TransitionObjective<'_> {
    pub fn parts(&self, a: &DMatrix<f64>) -> Result<ObjectiveParts> {
        let mut counts_term = 0.0;
        for (c, x) in self.counts.iter().zip(a.iter()) {
            if *c > 0.0 {
                counts_term += c * x.ln();
            }
        }
        let logdet_term = if self.alpha > 0.0 {
            self.alpha * log_det_kernel_rows(a, self.rho)?
        } else {
            0.0
        };
        let anchor_term = match self.anchor {
            Some((w, a0)) if w > 0.0 => -w * (a - a0).norm_squared(),
            _ => 0.0,
        };
        Ok(ObjectiveParts {
            counts_term,
            logdet_term,
            anchor_term,
        })
    }

    pub fn value(&self, a: &DMatrix<f64>) -> Result<f64> {
        Ok(Self::total_or_neg_inf(&self.parts(a)?))
    }

    fn total_or_neg_inf(p: &ObjectiveParts) -> f64 {
        let v = p.total();
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    /// ∂Λ_A/∂A at a strictly positive `a`.
    pub fn gradient(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut g = self.counts.component_div(a);
        if self.alpha > 0.0 {
            g += log_det_gradient(a, self.rho)? * self.alpha;
        }
        if let Some((w, a0)) = self.anchor {
            if w > 0.0 {
                g -= (a - a0) * (2.0 * w);
            }
        }
        Ok(g)
    }
}

/// Outcome of one run of the inner ascent.
#[derive(Debug, Clone)]
pub struct InnerResult {
    pub a: TransitionMatrix,
    /// Λ_A at the start and after every accepted step.
    pub values: Vec<f64>,
    /// The same points split into their terms.
    pub parts: Vec<ObjectiveParts>,
    /// Stopped because the change in Λ_A fell below δ.
    pub converged: bool,
    /// The last line search found no improving step.
    pub line_search_failed: bool,
}

/// Projected gradient ascent with backtracking from `start`.
///
/// Each iteration starts the line search at `init_step` and shrinks the step
/// by `backtrack_factor` until the projected candidate strictly improves
/// Λ_A, giving up after `max_backtracks` reductions. Candidates are clamped
/// into the interior of the simplex before evaluation.
pub fn ascend(
    objective: &TransitionObjective<'_>,
    start: &DMatrix<f64>,
    config: &TrainConfig,
) -> Result<InnerResult> {
    let mut a = interior_rows(start);
    let start_parts = objective.parts(&a)?;
    let mut value = TransitionObjective::total_or_neg_inf(&start_parts);
    if !value.is_finite() {
        return Err(DhmmError::Training(format!(
            "transition objective is not finite at the starting point ({value})"
        )));
    }
    let mut values = vec![value];
    let mut parts = vec![start_parts];
    let mut converged = false;
    let mut line_search_failed = false;

    for _ in 0..config.inner_max_iters {
        let grad = objective.gradient(&a)?;
        let mut step = config.init_step;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let cand = interior_rows(&project_rows(&(&a + &grad * step)));
            let p = objective.parts(&cand)?;
            let v = TransitionObjective::total_or_neg_inf(&p);
            if v > value {
                accepted = Some((cand, v, p));
                break;
            }
            step *= config.backtrack_factor;
        }
        match accepted {
            Some((cand, v, p)) => {
                let delta = v - value;
                a = cand;
                value = v;
                values.push(v);
                parts.push(p);
                if delta < config.inner_tol {
                    converged = true;
                    break;
                }
            }
            None => {
                line_search_failed = true;
                break;
            }
        }
    }

    Ok(InnerResult {
        a: TransitionMatrix::from_matrix_unchecked(a),
        values,
        parts,
        converged,
        line_search_failed,
    })
}

/// Diversified M-step for A starting from the previous transition matrix.
pub fn update_transitions_diversified(
    stats: &SufficientStats,
    a_old: &TransitionMatrix,
    config: &TrainConfig,
) -> Result<InnerResult> {
    let objective = TransitionObjective {
        counts: &stats.pair_counts,
        alpha: config.alpha,
        rho: config.rho,
        anchor: None,
    };
    ascend(&objective, a_old.matrix(), config)
}

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DhmmError, Result};
use crate::hmm::{joint_log_likelihood, HmmParams, ObservationSequence};
use crate::kernel::{log_det_gradient, log_det_kernel, log_det_kernel_rows};
use crate::learning::config::{ObjectiveTrace, TraceRecord, TrainConfig, TrainedModel};
use crate::learning::init::{init_params, sample_dirichlet, EmissionSpec};
use crate::learning::mstep::{
    count_statistics, m_step_emissions, m_step_pi, update_transitions_closed_form,
};
use crate::learning::stats::e_step;
use crate::learning::transitions::{ascend, update_transitions_diversified, TransitionObjective};

/// Step used by the finite-difference gradient check.
pub const FD_STEP: f64 = 1e-6;
/// Largest accepted normwise relative error of the analytic gradient.
pub const FD_TOLERANCE: f64 = 1e-5;
const FD_PROBES: usize = 3;

/// Central finite differences of log det K̃ with respect to every entry of `a`.
pub fn finite_difference_gradient(a: &DMatrix<f64>, rho: f64, h: f64) -> Result<DMatrix<f64>> {
    let (r, c) = a.shape();
    let mut g = DMatrix::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            let mut plus = a.clone();
            plus[(i, j)] += h;
            let mut minus = a.clone();
            minus[(i, j)] -= h;
            g[(i, j)] =
                (log_det_kernel_rows(&plus, rho)? - log_det_kernel_rows(&minus, rho)?) / (2.0 * h);
        }
    }
    Ok(g)
}

/// max |G − G_fd| / max |G_fd| at `a`.
pub fn gradient_relative_error(a: &DMatrix<f64>, rho: f64) -> Result<f64> {
    let analytic = log_det_gradient(a, rho)?;
    let fd = finite_difference_gradient(a, rho, FD_STEP)?;
    let scale = fd.abs().max().max(f64::MIN_POSITIVE);
    Ok((analytic - fd).abs().max() / scale)
}

/// A random k×k row-stochastic matrix with every entry at least 0.2/k:
/// rows from Dir(2) mixed 4:1 with the uniform row. Rows this spread keep K̃
/// well conditioned, which the finite-difference oracle needs.
pub fn random_interior_matrix<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(k, k);
    for i in 0..k {
        for (j, p) in sample_dirichlet(k, 2.0, rng).into_iter().enumerate() {
            a[(i, j)] = 0.8 * p + 0.2 / k as f64;
        }
    }
    a
}

/// Compares the analytic gradient with finite differences at a few random
/// interior points of size k×k and aborts training if they disagree.
pub fn verify_gradient(k: usize, rho: f64, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for probe in 0..FD_PROBES {
        let a = random_interior_matrix(k, &mut rng);
        let err = gradient_relative_error(&a, rho)?;
        if !(err <= FD_TOLERANCE) {
            return Err(DhmmError::Training(format!(
                "log-det gradient disagrees with finite differences on probe {probe} \
                 (relative error {err:.3e} > {FD_TOLERANCE:e})"
            )));
        }
    }
    Ok(())
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(DhmmError::invalid("need at least two states"));
    }
    Ok(())
}

/// MAP-EM for an unlabeled dataset.
///
/// Every iteration evaluates the objective Σ_n log P(Y_n | λ) + α log det K̃_A
/// at the current parameters, stops if it changed by less than `em_tol`,
/// and otherwise updates π, B and A in that order. With α = 0 the transition
/// update is the closed form, so the run is plain Baum-Welch.
pub fn em_fit_unsupervised<R: Rng + ?Sized>(
    seqs: &[ObservationSequence],
    k: usize,
    spec: &EmissionSpec,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<TrainedModel> {
    config.validate()?;
    check_k(k)?;
    if seqs.is_empty() {
        return Err(DhmmError::invalid("empty dataset"));
    }
    if config.alpha > 0.0 && config.gradient_check {
        verify_gradient(k, config.rho, config.seed)?;
    }
    let mut params = init_params(k, spec, config, rng)?;
    for (n, s) in seqs.iter().enumerate() {
        params.check_sequence(s).map_err(|e| match e {
            DhmmError::InvalidInput(m) => DhmmError::invalid(format!("sequence {n}: {m}")),
            other => other,
        })?;
    }

    let mut trace = ObjectiveTrace::default();
    let mut previous: Option<f64> = None;
    let mut converged = false;
    for iter in 0..=config.max_em_iters {
        let (stats, loglik) = e_step(&params, seqs)?;
        let logdet_term = if config.alpha > 0.0 {
            config.alpha * log_det_kernel(&params.a, config.rho)?
        } else {
            0.0
        };
        let record = TraceRecord::new(iter, loglik, logdet_term, 0.0);
        if !record.objective.is_finite() {
            return Err(DhmmError::Training(format!(
                "objective is not finite at iteration {iter} (log-likelihood {loglik}, log-det term {logdet_term})"
            )));
        }
        log::debug!("iter {iter}: objective {:.10}", record.objective);
        trace.records.push(record);
        if let Some(prev) = previous {
            if (record.objective - prev).abs() < config.em_tol {
                converged = true;
                break;
            }
        }
        previous = Some(record.objective);
        if iter == config.max_em_iters {
            break;
        }

        let pi = m_step_pi(&stats)?;
        let (b, warnings) = m_step_emissions(&stats, &params.b, config)?;
        note(&mut trace, iter, warnings);
        let a = if config.alpha > 0.0 {
            let inner = update_transitions_diversified(&stats, &params.a, config)?;
            if inner.line_search_failed && inner.values.len() == 1 {
                log::debug!("iter {iter}: no improving transition step");
            }
            trace.inner.push(inner.values);
            inner.a
        } else {
            let (a, warnings) = update_transitions_closed_form(&stats);
            note(&mut trace, iter, warnings);
            a
        };
        params = HmmParams::new(pi, a, b)?;
    }
    if !converged {
        log::info!(
            "EM stopped after {} iterations without reaching tolerance {}",
            config.max_em_iters,
            config.em_tol
        );
    }
    Ok(TrainedModel {
        params,
        trace,
        config: config.clone(),
        converged,
    })
}

fn note(trace: &mut ObjectiveTrace, iter: usize, warnings: Vec<String>) {
    for w in warnings {
        log::warn!("iter {iter}: {w}");
        trace.warnings.push(format!("iter {iter}: {w}"));
    }
}

/// Supervised training: π and B are the counted estimates, A starts at the
/// counted A₀ and ascends L(Y, X; λ) + α log det K̃_A − α_A ‖A − A₀‖².
///
/// With α = 0 the anchor and likelihood terms share the maximizer A₀, which
/// is returned unchanged. Otherwise the trace holds one record per accepted
/// inner step.
pub fn fit_supervised(
    seqs: &[ObservationSequence],
    k: usize,
    spec: &EmissionSpec,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    check_k(k)?;
    let counted = count_statistics(seqs, k, spec, config)?;
    let mut trace = ObjectiveTrace::default();
    note(&mut trace, 0, counted.warnings.clone());
    let a0 = counted.a.matrix().clone();
    let params0 = HmmParams::new(counted.pi.clone(), counted.a.clone(), counted.b.clone())?;
    let joint0: f64 = seqs
        .iter()
        .map(|s| joint_log_likelihood(&params0, s))
        .sum::<Result<f64>>()?;

    if config.alpha == 0.0 {
        let logdet_term = 0.0;
        trace.records.push(TraceRecord::new(0, joint0, logdet_term, 0.0));
        return Ok(TrainedModel {
            params: params0,
            trace,
            config: config.clone(),
            converged: true,
        });
    }

    if config.gradient_check {
        verify_gradient(k, config.rho, config.seed)?;
    }
    let objective = TransitionObjective {
        counts: &counted.stats.pair_counts,
        alpha: config.alpha,
        rho: config.rho,
        anchor: Some((config.alpha_a, &a0)),
    };
    // Joint log-likelihood = (terms that do not involve A) + counts term.
    let counts0 = objective.parts(&a0)?.counts_term;
    let fixed = joint0 - counts0;
    let inner = ascend(&objective, &a0, config)?;
    for (iter, p) in inner.parts.iter().enumerate() {
        trace
            .records
            .push(TraceRecord::new(iter, fixed + p.counts_term, p.logdet_term, p.anchor_term));
    }
    let converged = inner.converged;
    trace.inner.push(inner.values);
    let params = HmmParams::new(counted.pi, inner.a, counted.b)?;
    Ok(TrainedModel {
        params,
        trace,
        config: config.clone(),
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::{sample_sequence, EmissionModel, InitialDistribution, TransitionMatrix};
    use crate::kernel::mean_pairwise_diversity;

    fn toy_params() -> HmmParams {
        HmmParams::new(
            InitialDistribution::new(vec![0.5, 0.3, 0.2]).unwrap(),
            TransitionMatrix::from_rows(&[
                vec![0.8, 0.1, 0.1],
                vec![0.2, 0.7, 0.1],
                vec![0.1, 0.2, 0.7],
            ])
            .unwrap(),
            EmissionModel::gaussian(vec![0.0, 2.0, 4.0], vec![0.7, 0.7, 0.7]).unwrap(),
        )
        .unwrap()
    }

    fn sample(n: usize, t: usize, seed: u64, keep_labels: bool) -> Vec<ObservationSequence> {
        let p = toy_params();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut s = sample_sequence(&p, t, &mut rng).unwrap();
                if !keep_labels {
                    s.labels = None;
                }
                s
            })
            .collect()
    }

    #[test]
    fn gradient_check_passes() {
        verify_gradient(4, 0.5, 1).unwrap();
    }

    #[test]
    fn em_objective_is_monotone() {
        let seqs = sample(40, 8, 3, false);
        let spec = EmissionSpec::from_data(&seqs, None).unwrap();
        for alpha in [0.0, 1.0, 50.0] {
            let cfg = TrainConfig {
                alpha,
                max_em_iters: 40,
                ..TrainConfig::default()
            };
            let m = em_fit_unsupervised(&seqs, 3, &spec, &cfg, &mut ChaCha8Rng::seed_from_u64(5))
                .unwrap();
            assert!(m.trace.max_decrease() <= 1e-8, "alpha {alpha}: {:?}", m.trace.objectives());
        }
    }

    #[test]
    fn em_is_deterministic() {
        let seqs = sample(30, 6, 4, false);
        let spec = EmissionSpec::from_data(&seqs, None).unwrap();
        let cfg = TrainConfig {
            alpha: 2.0,
            max_em_iters: 10,
            ..TrainConfig::default()
        };
        let a = em_fit_unsupervised(&seqs, 3, &spec, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = em_fit_unsupervised(&seqs, 3, &spec, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn supervised_without_prior_returns_counts() {
        let seqs = sample(20, 10, 8, true);
        let spec = EmissionSpec::from_data(&seqs, None).unwrap();
        let counted = count_statistics(&seqs, 3, &spec, &TrainConfig::default()).unwrap();
        let m = fit_supervised(&seqs, 3, &spec, &TrainConfig::default()).unwrap();
        assert_eq!(m.params.a, counted.a);
        assert_eq!(m.trace.records.len(), 1);
    }

    #[test]
    fn supervised_prior_raises_diversity() {
        let seqs = sample(20, 10, 8, true);
        let spec = EmissionSpec::from_data(&seqs, None).unwrap();
        let cfg = TrainConfig {
            alpha: 10.0,
            alpha_a: 1e2,
            ..TrainConfig::default()
        };
        let counted = count_statistics(&seqs, 3, &spec, &cfg).unwrap();
        let m = fit_supervised(&seqs, 3, &spec, &cfg).unwrap();
        let d0 = mean_pairwise_diversity(&counted.a).unwrap().value;
        let d1 = mean_pairwise_diversity(&m.params.a).unwrap().value;
        assert!(d1 >= d0, "{d0} -> {d1}");
        assert!(m.trace.max_decrease() <= 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let seqs = sample(3, 4, 1, false);
        let spec = EmissionSpec::from_data(&seqs, None).unwrap();
        let cfg = TrainConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(em_fit_unsupervised(&seqs, 1, &spec, &cfg, &mut rng).is_err());
        assert!(em_fit_unsupervised(&[], 3, &spec, &cfg, &mut rng).is_err());
        assert!(fit_supervised(&seqs, 3, &spec, &cfg).is_err());
    }
}

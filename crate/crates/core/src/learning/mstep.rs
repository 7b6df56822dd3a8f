//! Closed-form maximization steps.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::hmm::{EmissionModel, InitialDistribution, ObservationSequence, TransitionMatrix};
use crate::learning::config::TrainConfig;
use crate::learning::init::EmissionSpec;
use crate::learning::stats::{EmissionStats, SufficientStats};

/// π_i = Σ_n q(X_{n1} = i) / N.
pub fn m_step_pi(stats: &SufficientStats) -> Result<InitialDistribution> {
    let total: f64 = stats.initial_counts.iter().sum();
    let mut pi: Vec<f64> = stats.initial_counts.iter().map(|c| c / total).collect();
    // absorb rounding so the sum is one to the last bit we can manage
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    InitialDistribution::new(pi)
}

/// Row-normalized expected transition counts; empty rows become uniform.
pub fn update_transitions_closed_form(stats: &SufficientStats) -> (TransitionMatrix, Vec<String>) {
    let k = stats.k();
    let mut warnings = Vec::new();
    let mut a = DMatrix::zeros(k, k);
    for i in 0..k {
        let s = stats.pair_counts.row(i).sum();
        if s > 0.0 {
            for j in 0..k {
                a[(i, j)] = stats.pair_counts[(i, j)] / s;
            }
        } else {
            warnings.push(format!("state {i} has no outgoing transition mass; using a uniform row"));
            for j in 0..k {
                a[(i, j)] = 1.0 / k as f64;
            }
        }
    }
    (TransitionMatrix::from_matrix_unchecked(a), warnings)
}

/// Weighted maximum-likelihood emissions. States without posterior mass keep
/// their parameters from `previous`.
pub fn m_step_emissions(
    stats: &SufficientStats,
    previous: &EmissionModel,
    config: &TrainConfig,
) -> Result<(EmissionModel, Vec<String>)> {
    let mut warnings = Vec::new();
    let mass = stats.emission.state_mass();
    let note_empty = |i: usize, warnings: &mut Vec<String>| {
        warnings.push(format!(
            "state {i} has zero posterior mass; emission parameters left unchanged"
        ));
    };
    let model = match (&stats.emission, previous) {
        (
            EmissionStats::Gaussian {
                weight,
                sum,
                sum_sq,
                center,
            },
            EmissionModel::Gaussian { means, stddevs },
        ) => {
            let mut new_means = means.clone();
            let mut new_sd = stddevs.clone();
            for i in 0..weight.len() {
                if !(weight[i] > 0.0) {
                    note_empty(i, &mut warnings);
                    continue;
                }
                let mu = sum[i] / weight[i];
                let shift = mu - center[i];
                let mut var = sum_sq[i] / weight[i] - shift * shift;
                if !(var >= config.variance_floor) {
                    warnings.push(format!(
                        "state {i} variance {var:e} raised to floor {:e}",
                        config.variance_floor
                    ));
                    var = config.variance_floor;
                }
                new_means[i] = mu;
                new_sd[i] = var.sqrt();
            }
            EmissionModel::gaussian(new_means, new_sd)?
        }
        (EmissionStats::Categorical { counts }, EmissionModel::Categorical { probs }) => {
            let mut out = probs.clone();
            let v = counts.ncols() as f64;
            for i in 0..counts.nrows() {
                if !(mass[i] > 0.0) {
                    note_empty(i, &mut warnings);
                    continue;
                }
                let denom = mass[i] + config.pseudocount * v;
                for j in 0..counts.ncols() {
                    out[(i, j)] = (counts[(i, j)] + config.pseudocount) / denom;
                }
                let s = out.row(i).sum();
                for j in 0..counts.ncols() {
                    out[(i, j)] /= s;
                }
            }
            EmissionModel::categorical(out)?
        }
        (EmissionStats::Bernoulli { weight, ones }, EmissionModel::Bernoulli { probs }) => {
            let mut out = probs.clone();
            for i in 0..ones.nrows() {
                if !(weight[i] > 0.0) {
                    note_empty(i, &mut warnings);
                    continue;
                }
                let denom = weight[i] + 2.0 * config.pseudocount;
                for d in 0..ones.ncols() {
                    out[(i, d)] = ((ones[(i, d)] + config.pseudocount) / denom).clamp(0.0, 1.0);
                }
            }
            EmissionModel::bernoulli(out)?
        }
        _ => unreachable!("statistics and model families always agree"),
    };
    Ok((model, warnings))
}

/// Counted parameters (π₀, A₀, B₀) of a fully labeled dataset.
#[derive(Debug, Clone)]
pub struct CountedParams {
    pub pi: InitialDistribution,
    pub a: TransitionMatrix,
    pub b: EmissionModel,
    pub stats: SufficientStats,
    pub warnings: Vec<String>,
}

pub fn count_statistics(
    seqs: &[ObservationSequence],
    k: usize,
    spec: &EmissionSpec,
    config: &TrainConfig,
) -> Result<CountedParams> {
    let template = spec.template(k);
    let stats = SufficientStats::from_labels(&template, seqs)?;
    if stats.n_sequences == 0 {
        return Err(crate::error::DhmmError::invalid("no labeled sequences to count"));
    }
    let pi = m_step_pi(&stats)?;
    let (a, mut warnings) = update_transitions_closed_form(&stats);
    let (b, w2) = m_step_emissions(&stats, &template, config)?;
    warnings.extend(w2);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(CountedParams {
        pi,
        a,
        b,
        stats,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::Observations;
    use approx::assert_abs_diff_eq;

    fn stats_with_counts(initial: Vec<f64>, pairs: DMatrix<f64>) -> SufficientStats {
        let k = initial.len();
        let mut s = SufficientStats::zeros_like(&EmissionSpec::Categorical { n_symbols: 1 }.template(k));
        s.initial_counts = initial;
        s.pair_counts = pairs;
        s.n_sequences = 3;
        s
    }

    #[test]
    fn pi_examples() {
        let s = stats_with_counts(vec![3.0, 0.0, 0.0], DMatrix::zeros(3, 3));
        assert_eq!(m_step_pi(&s).unwrap().probs(), &[1.0, 0.0, 0.0]);
        let s = stats_with_counts(vec![1.0, 1.0, 1.0], DMatrix::zeros(3, 3));
        for &p in m_step_pi(&s).unwrap().probs() {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-15);
        }
        let s = stats_with_counts(vec![1.5, 1.0, 0.5], DMatrix::zeros(3, 3));
        let pi = m_step_pi(&s).unwrap();
        assert_abs_diff_eq!(pi.probs()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pi.probs()[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pi.probs()[2], 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn closed_form_transitions() {
        let s = stats_with_counts(
            vec![1.0, 1.0, 1.0],
            DMatrix::from_row_slice(3, 3, &[2.0, 2.0, 0.0, 0.0, 5.0, 0.0, 1.0, 2.0, 3.0]),
        );
        let (a, w) = update_transitions_closed_form(&s);
        assert!(w.is_empty());
        assert_eq!(a.row(0), vec![0.5, 0.5, 0.0]);
        assert_eq!(a.row(1), vec![0.0, 1.0, 0.0]);
        assert_abs_diff_eq!(a.get(2, 0), 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a.get(2, 1), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a.get(2, 2), 0.5, epsilon = 1e-15);

        let diag = stats_with_counts(vec![1.0, 1.0], DMatrix::from_diagonal_element(2, 2, 4.0));
        assert_eq!(update_transitions_closed_form(&diag).0, TransitionMatrix::identity(2));

        let empty = stats_with_counts(vec![1.0, 1.0], DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]));
        let (a, w) = update_transitions_closed_form(&empty);
        assert_eq!(a.row(0), vec![0.5, 0.5]);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn gaussian_mle_with_all_mass_on_one_state() {
        let ys = vec![1.0, 2.0, 4.0, 7.0];
        let prev = EmissionModel::gaussian(vec![0.0, 9.0], vec![1.0, 3.0]).unwrap();
        let mut s = SufficientStats::zeros_like(&prev);
        let mut unary = DMatrix::zeros(4, 2);
        unary.column_mut(0).fill(1.0);
        s.accumulate(&Observations::Real(ys.clone()), &unary, &[]);
        let (m, w) = m_step_emissions(&s, &prev, &TrainConfig::default()).unwrap();
        let mean = ys.iter().sum::<f64>() / 4.0;
        let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / 4.0;
        match m {
            EmissionModel::Gaussian { means, stddevs } => {
                assert_abs_diff_eq!(means[0], mean, epsilon = 1e-12);
                assert_abs_diff_eq!(stddevs[0] * stddevs[0], var, epsilon = 1e-12);
                assert_eq!((means[1], stddevs[1]), (9.0, 3.0));
            }
            _ => unreachable!(),
        }
        assert_eq!(w.len(), 1, "zero-mass state is reported");
    }

    #[test]
    fn gaussian_variance_floor() {
        let prev = EmissionModel::gaussian(vec![0.0], vec![1.0]).unwrap();
        let mut s = SufficientStats::zeros_like(&prev);
        s.accumulate(
            &Observations::Real(vec![3.0, 3.0]),
            &DMatrix::from_element(2, 1, 1.0),
            &[],
        );
        let (m, w) = m_step_emissions(&s, &prev, &TrainConfig::default()).unwrap();
        match m {
            EmissionModel::Gaussian { stddevs, .. } => assert_abs_diff_eq!(stddevs[0], 1e-4, epsilon = 1e-12),
            _ => unreachable!(),
        }
        assert!(w[0].contains("floor"));
    }

    #[test]
    fn categorical_single_symbol() {
        let prev = EmissionSpec::Categorical { n_symbols: 3 }.template(2);
        let mut s = SufficientStats::zeros_like(&prev);
        let unary = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.6, 0.4]);
        s.accumulate(&Observations::Symbols(vec![1, 1]), &unary, &[]);
        let (m, _) = m_step_emissions(&s, &prev, &TrainConfig::default()).unwrap();
        match m {
            EmissionModel::Categorical { probs } => {
                assert_eq!(probs.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0]);
                assert_eq!(probs.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0]);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn bernoulli_weighted_mean() {
        let prev = EmissionSpec::Bernoulli { dim: 2 }.template(1);
        let mut s = SufficientStats::zeros_like(&prev);
        s.accumulate(
            &Observations::Bits(vec![vec![true, false], vec![true, true]]),
            &DMatrix::from_element(2, 1, 0.5),
            &[],
        );
        let (m, _) = m_step_emissions(&s, &prev, &TrainConfig::default()).unwrap();
        match m {
            EmissionModel::Bernoulli { probs } => {
                assert_abs_diff_eq!(probs[(0, 0)], 1.0, epsilon = 1e-15);
                assert_abs_diff_eq!(probs[(0, 1)], 0.5, epsilon = 1e-15);
            }
            _ => unreachable!(),
        }
    }

    fn labeled(labels: Vec<usize>) -> ObservationSequence {
        let obs = Observations::Symbols(vec![0; labels.len()]);
        ObservationSequence::new(obs, Some(labels)).unwrap()
    }

    #[test]
    fn counting_examples() {
        let spec = EmissionSpec::Categorical { n_symbols: 1 };
        let cfg = TrainConfig::default();
        let c = count_statistics(&[labeled(vec![0, 0, 1])], 2, &spec, &cfg).unwrap();
        assert_eq!(c.a.row(0), vec![0.5, 0.5]);

        let c = count_statistics(&[labeled(vec![2, 1]), labeled(vec![2, 2, 0])], 3, &spec, &cfg).unwrap();
        assert_eq!(c.pi.probs(), &[0.0, 0.0, 1.0]);

        // transitions: 0→1, 1→1, 1→2 | 2→0, 0→1 | 1→2, 2→2
        let seqs = [labeled(vec![0, 1, 1, 2]), labeled(vec![2, 0, 1]), labeled(vec![1, 2, 2])];
        let c = count_statistics(&seqs, 3, &spec, &cfg).unwrap();
        assert_eq!(c.a.row(0), vec![0.0, 1.0, 0.0]);
        assert_eq!(c.a.row(1), vec![0.0, 1.0 / 3.0, 2.0 / 3.0]);
        assert_eq!(c.a.row(2), vec![0.5, 0.0, 0.5]);
        assert!(c.warnings.is_empty());

        assert!(count_statistics(&[labeled(vec![0, 3])], 3, &spec, &cfg).is_err());
        let unlabeled = ObservationSequence::unlabeled(Observations::Symbols(vec![0])).unwrap();
        assert!(count_statistics(&[unlabeled], 3, &spec, &cfg).is_err());
    }
}

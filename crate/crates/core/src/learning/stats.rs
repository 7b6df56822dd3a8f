use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{DhmmError, Result};
use crate::hmm::{forward_backward, EmissionModel, HmmParams, ObservationSequence, Observations};

/// Sequences per work unit in the parallel E-step. Partial statistics are
/// summed inside a chunk in sequence order and chunks are then combined in
/// chunk order, so the floating-point result does not depend on the number
/// of worker threads.
const CHUNK: usize = 64;

/// Expected (or counted) emission statistics per family.
#[derive(Debug, Clone, PartialEq)]
pub enum EmissionStats {
    /// Weighted moments; `sum_sq` is taken about `center` to limit cancellation.
    Gaussian {
        weight: Vec<f64>,
        sum: Vec<f64>,
        sum_sq: Vec<f64>,
        center: Vec<f64>,
    },
    /// k×V weighted symbol counts.
    Categorical { counts: DMatrix<f64> },
    /// Per-state weight and k×D weighted counts of ones.
    Bernoulli { weight: Vec<f64>, ones: DMatrix<f64> },
}

impl EmissionStats {
    fn zeros_like(model: &EmissionModel) -> Self {
        let k = model.n_states();
        match model {
            EmissionModel::Gaussian { means, .. } => EmissionStats::Gaussian {
                weight: vec![0.0; k],
                sum: vec![0.0; k],
                sum_sq: vec![0.0; k],
                center: means.clone(),
            },
            EmissionModel::Categorical { probs } => EmissionStats::Categorical {
                counts: DMatrix::zeros(k, probs.ncols()),
            },
            EmissionModel::Bernoulli { probs } => EmissionStats::Bernoulli {
                weight: vec![0.0; k],
                ones: DMatrix::zeros(k, probs.ncols()),
            },
        }
    }

    /// Posterior mass per state.
    pub fn state_mass(&self) -> Vec<f64> {
        match self {
            EmissionStats::Gaussian { weight, .. } | EmissionStats::Bernoulli { weight, .. } => {
                weight.clone()
            }
            EmissionStats::Categorical { counts } => {
                (0..counts.nrows()).map(|i| counts.row(i).sum()).collect()
            }
        }
    }

    fn add_weighted(&mut self, obs: &Observations, weights: &DMatrix<f64>) {
        let k = weights.ncols();
        match (self, obs) {
            (
                EmissionStats::Gaussian {
                    weight,
                    sum,
                    sum_sq,
                    center,
                },
                Observations::Real(ys),
            ) => {
                for (t, &y) in ys.iter().enumerate() {
                    for i in 0..k {
                        let w = weights[(t, i)];
                        let d = y - center[i];
                        weight[i] += w;
                        sum[i] += w * y;
                        sum_sq[i] += w * d * d;
                    }
                }
            }
            (EmissionStats::Categorical { counts }, Observations::Symbols(ys)) => {
                for (t, &y) in ys.iter().enumerate() {
                    for i in 0..k {
                        counts[(i, y)] += weights[(t, i)];
                    }
                }
            }
            (EmissionStats::Bernoulli { weight, ones }, Observations::Bits(ys)) => {
                for (t, bits) in ys.iter().enumerate() {
                    for i in 0..k {
                        let w = weights[(t, i)];
                        if w == 0.0 {
                            continue;
                        }
                        weight[i] += w;
                        for (d, &b) in bits.iter().enumerate() {
                            if b {
                                ones[(i, d)] += w;
                            }
                        }
                    }
                }
            }
            _ => unreachable!("observation family checked before accumulation"),
        }
    }

    fn merge(&mut self, other: &EmissionStats) {
        match (self, other) {
            (
                EmissionStats::Gaussian {
                    weight,
                    sum,
                    sum_sq,
                    ..
                },
                EmissionStats::Gaussian {
                    weight: w2,
                    sum: s2,
                    sum_sq: q2,
                    ..
                },
            ) => {
                for i in 0..weight.len() {
                    weight[i] += w2[i];
                    sum[i] += s2[i];
                    sum_sq[i] += q2[i];
                }
            }
            (EmissionStats::Categorical { counts }, EmissionStats::Categorical { counts: c2 }) => {
                *counts += c2;
            }
            (
                EmissionStats::Bernoulli { weight, ones },
                EmissionStats::Bernoulli {
                    weight: w2,
                    ones: o2,
                },
            ) => {
                for i in 0..weight.len() {
                    weight[i] += w2[i];
                }
                *ones += o2;
            }
            _ => unreachable!("merging statistics of different families"),
        }
    }
}

/// Expected counts accumulated over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    /// Σ_n q(X_{n1} = i).
    pub initial_counts: Vec<f64>,
    /// Σ_n Σ_t q(X_{n,t-1} = i, X_{nt} = j).
    pub pair_counts: DMatrix<f64>,
    pub emission: EmissionStats,
    pub n_sequences: usize,
}

impl SufficientStats {
    /// Empty statistics shaped after `model` (gaussian moments are centered at its means).
    pub fn zeros_like(model: &EmissionModel) -> Self {
        let k = model.n_states();
        Self {
            initial_counts: vec![0.0; k],
            pair_counts: DMatrix::zeros(k, k),
            emission: EmissionStats::zeros_like(model),
            n_sequences: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.initial_counts.len()
    }

    /// Adds one sequence given its unary (T×k) and pairwise state weights.
    pub fn accumulate(
        &mut self,
        obs: &Observations,
        unary: &DMatrix<f64>,
        pairwise: &[DMatrix<f64>],
    ) {
        let k = self.k();
        for i in 0..k {
            self.initial_counts[i] += unary[(0, i)];
        }
        for xi in pairwise {
            self.pair_counts += xi;
        }
        self.emission.add_weighted(obs, unary);
        self.n_sequences += 1;
    }

    pub fn merge(&mut self, other: &SufficientStats) {
        for (a, b) in self.initial_counts.iter_mut().zip(&other.initial_counts) {
            *a += b;
        }
        self.pair_counts += &other.pair_counts;
        self.emission.merge(&other.emission);
        self.n_sequences += other.n_sequences;
    }

    /// Indicator statistics of fully labeled sequences.
    pub fn from_labels(template: &EmissionModel, seqs: &[ObservationSequence]) -> Result<Self> {
        let k = template.n_states();
        let mut stats = Self::zeros_like(template);
        for (n, seq) in seqs.iter().enumerate() {
            let labels = seq
                .labels
                .as_deref()
                .ok_or_else(|| DhmmError::invalid(format!("sequence {n} has no labels")))?;
            if seq.observations.family() != template.family() {
                return Err(DhmmError::invalid(format!(
                    "sequence {n} has {} observations, expected {}",
                    seq.observations.family(),
                    template.family()
                )));
            }
            if let Some(&x) = labels.iter().find(|&&x| x >= k) {
                return Err(DhmmError::invalid(format!(
                    "sequence {n} has label {x} outside [0, {k})"
                )));
            }
            let t_len = labels.len();
            let mut unary = DMatrix::zeros(t_len, k);
            for (t, &x) in labels.iter().enumerate() {
                unary[(t, x)] = 1.0;
            }
            let pairwise: Vec<DMatrix<f64>> = labels
                .windows(2)
                .map(|w| {
                    let mut m = DMatrix::zeros(k, k);
                    m[(w[0], w[1])] = 1.0;
                    m
                })
                .collect();
            stats.accumulate(&seq.observations, &unary, &pairwise);
        }
        Ok(stats)
    }
}

/// E-step: posterior statistics and total log-likelihood Σ_n log P(Y_n | λ).
pub fn e_step(params: &HmmParams, seqs: &[ObservationSequence]) -> Result<(SufficientStats, f64)> {
    if seqs.is_empty() {
        return Err(DhmmError::invalid("empty dataset"));
    }
    let partials: Vec<Result<(SufficientStats, f64)>> = seqs
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut stats = SufficientStats::zeros_like(&params.b);
            let mut ll = 0.0;
            for (off, seq) in chunk.iter().enumerate() {
                let n = c * CHUNK + off;
                let post = forward_backward(params, seq).map_err(|e| e.in_sequence(n))?;
                stats.accumulate(&seq.observations, &post.unary, &post.pairwise);
                ll += post.log_likelihood;
            }
            Ok((stats, ll))
        })
        .collect();

    let mut total = SufficientStats::zeros_like(&params.b);
    let mut ll = 0.0;
    for part in partials {
        let (s, l) = part?;
        total.merge(&s);
        ll += l;
    }
    Ok((total, ll))
}

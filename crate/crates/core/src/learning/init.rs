use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{DhmmError, Result};
use crate::hmm::{
    EmissionModel, Family, HmmParams, InitialDistribution, ObservationSequence, Observations,
    TransitionMatrix,
};
use crate::learning::config::TrainConfig;

/// Shape of the emission model to initialize, with the data summary the
/// gaussian initializer needs.
#[derive(Debug, Clone, PartialEq)]
pub enum EmissionSpec {
    Gaussian { mean: f64, variance: f64 },
    Categorical { n_symbols: usize },
    Bernoulli { dim: usize },
}

impl EmissionSpec {
    /// Derives the spec from a dataset; `n_symbols` overrides the categorical
    /// alphabet size (e.g. to include an unseen-word slot).
    pub fn from_data(seqs: &[ObservationSequence], n_symbols: Option<usize>) -> Result<Self> {
        let first = seqs.first().ok_or_else(|| DhmmError::invalid("empty dataset"))?;
        let family = first.observations.family();
        if let Some(n) = seqs.iter().position(|s| s.observations.family() != family) {
            return Err(DhmmError::invalid(format!("sequence {n} has a different observation type")));
        }
        Ok(match family {
            Family::Gaussian => {
                let ys: Vec<f64> = seqs
                    .iter()
                    .flat_map(|s| match &s.observations {
                        Observations::Real(v) => v.clone(),
                        _ => unreachable!(),
                    })
                    .collect();
                let n = ys.len() as f64;
                let mean = ys.iter().sum::<f64>() / n;
                let variance = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
                EmissionSpec::Gaussian {
                    mean,
                    variance: if variance > 0.0 { variance } else { 1.0 },
                }
            }
            Family::Categorical => {
                let max = seqs
                    .iter()
                    .flat_map(|s| match &s.observations {
                        Observations::Symbols(v) => v.iter().copied(),
                        _ => unreachable!(),
                    })
                    .max()
                    .unwrap_or(0);
                let n = n_symbols.unwrap_or(max + 1);
                if n <= max {
                    return Err(DhmmError::invalid(format!(
                        "symbol {max} outside declared vocabulary of {n}"
                    )));
                }
                EmissionSpec::Categorical { n_symbols: n }
            }
            Family::Bernoulli => {
                let dim = match &first.observations {
                    Observations::Bits(v) => v[0].len(),
                    _ => unreachable!(),
                };
                EmissionSpec::Bernoulli { dim }
            }
        })
    }

    pub fn family(&self) -> Family {
        match self {
            EmissionSpec::Gaussian { .. } => Family::Gaussian,
            EmissionSpec::Categorical { .. } => Family::Categorical,
            EmissionSpec::Bernoulli { .. } => Family::Bernoulli,
        }
    }

    /// A neutral model of the right shape: standard normals, uniform
    /// categorical rows, or p = 1/2.
    pub fn template(&self, k: usize) -> EmissionModel {
        match *self {
            EmissionSpec::Gaussian { .. } => EmissionModel::Gaussian {
                means: vec![0.0; k],
                stddevs: vec![1.0; k],
            },
            EmissionSpec::Categorical { n_symbols } => EmissionModel::Categorical {
                probs: DMatrix::from_element(k, n_symbols, 1.0 / n_symbols as f64),
            },
            EmissionSpec::Bernoulli { dim } => EmissionModel::Bernoulli {
                probs: DMatrix::from_element(k, dim, 0.5),
            },
        }
    }
}

/// One draw from a symmetric Dirichlet(η) of dimension `n`.
pub fn sample_dirichlet<R: Rng + ?Sized>(n: usize, eta: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(eta, 1.0).expect("positive concentration");
    loop {
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let s: f64 = draws.iter().sum();
        if s > 0.0 {
            let mut v: Vec<f64> = draws.iter().map(|x| x / s).collect();
            let s2: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s2);
            return v;
        }
    }
}

/// Random starting parameters: π and rows of A from Dir(η); gaussian means
/// from the pooled normal, variances from a Gamma; categorical rows from
/// Dir(η); bernoulli probabilities from Beta(η, η).
pub fn init_params<R: Rng + ?Sized>(
    k: usize,
    spec: &EmissionSpec,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<HmmParams> {
    if k < 2 {
        return Err(DhmmError::invalid("need at least two states"));
    }
    let eta = config.dirichlet_eta;
    let pi = InitialDistribution::new(sample_dirichlet(k, eta, rng))?;
    let rows: Vec<Vec<f64>> = (0..k).map(|_| sample_dirichlet(k, eta, rng)).collect();
    let a = TransitionMatrix::from_rows(&rows)?;
    let b = match *spec {
        EmissionSpec::Gaussian { mean, variance } => {
            let normal = Normal::new(mean, variance.sqrt())
                .map_err(|e| DhmmError::invalid(format!("gaussian init: {e}")))?;
            let gamma = Gamma::new(
                config.init_gamma_shape,
                config.init_variance_scale * variance,
            )
            .map_err(|e| DhmmError::invalid(format!("gamma init: {e}")))?;
            let means: Vec<f64> = (0..k).map(|_| normal.sample(rng)).collect();
            let stddevs: Vec<f64> = (0..k)
                .map(|_| gamma.sample(rng).max(config.variance_floor).sqrt())
                .collect();
            EmissionModel::gaussian(means, stddevs)?
        }
        EmissionSpec::Categorical { n_symbols } => {
            let mut probs = DMatrix::zeros(k, n_symbols);
            for i in 0..k {
                for (j, p) in sample_dirichlet(n_symbols, eta, rng).into_iter().enumerate() {
                    probs[(i, j)] = p;
                }
            }
            EmissionModel::categorical(probs)?
        }
        EmissionSpec::Bernoulli { dim } => {
            let mut probs = DMatrix::zeros(k, dim);
            for i in 0..k {
                for d in 0..dim {
                    probs[(i, d)] = sample_dirichlet(2, eta, rng)[0];
                }
            }
            EmissionModel::bernoulli(probs)?
        }
    };
    HmmParams::new(pi, a, b)
}

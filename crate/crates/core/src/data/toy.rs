//! Synthetic five-state gaussian benchmark with known ground truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::corpus::Corpus;
use crate::error::{DhmmError, Result};
use crate::hmm::{sample_sequence, EmissionModel, Family, HmmParams, InitialDistribution, TransitionMatrix};

/// Number of settings in the variance sweep.
pub const SWEEP_POINTS: usize = 50;
const SWEEP_BASE_SIGMA: f64 = 0.025;
const SWEEP_SIGMA_STEP: f64 = 0.1;

/// Ground-truth transitions: each row drawn once from Dir(0.5) with a
/// ChaCha8 generator seeded with 42, then frozen here.
pub const DEFAULT_A_TRUE: [[f64; 5]; 5] = [
    [0.4284244887347117, 0.07693513774383971, 0.06561304374030465, 0.019188937550857602, 0.40983839223028634],
    [0.03798283439341135, 0.0035693711546416597, 0.18738529631892137, 0.000686183783445272, 0.7703763143495804],
    [0.04513474365566871, 0.10050020487692986, 0.10994608782751447, 0.7415790305031751, 0.002839933136711902],
    [0.15109639364429228, 0.36256342713224937, 0.08573042297022826, 0.002836997764055546, 0.3977727584891746],
    [0.0009780560095351803, 0.01692625257432745, 0.020923994353500227, 0.04679138231811148, 0.9143803147445256],
];

pub const DEFAULT_PI_TRUE: [f64; 5] = [0.0101, 0.0912, 0.2421, 0.0652, 0.5914];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub k: usize,
    pub pi_true: Vec<f64>,
    pub a_true: Vec<Vec<f64>>,
    pub mu_true: Vec<f64>,
    /// Standard deviation of every state's emission.
    pub sigma_true: f64,
    pub n_sequences: usize,
    pub seq_len: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            k: 5,
            pi_true: DEFAULT_PI_TRUE.to_vec(),
            a_true: DEFAULT_A_TRUE.iter().map(|r| r.to_vec()).collect(),
            mu_true: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            sigma_true: 0.025,
            n_sequences: 300,
            seq_len: 6,
            seed: 0,
        }
    }
}

impl ToyConfig {
    /// The generating parameters. π is renormalized because the published
    /// four-decimal values sum to 1.0000 only up to rounding.
    pub fn params(&self) -> Result<HmmParams> {
        if self.k < 2 || self.pi_true.len() != self.k || self.mu_true.len() != self.k {
            return Err(DhmmError::invalid(format!(
                "toy config: k={} with {} initial probabilities and {} means",
                self.k,
                self.pi_true.len(),
                self.mu_true.len()
            )));
        }
        if self.n_sequences == 0 || self.seq_len == 0 {
            return Err(DhmmError::invalid("toy config: empty dataset requested"));
        }
        let s: f64 = self.pi_true.iter().sum();
        if !(s > 0.0) || self.pi_true.iter().any(|p| *p < 0.0) {
            return Err(DhmmError::invalid("toy config: pi_true must be a non-negative vector"));
        }
        let pi = InitialDistribution::new(self.pi_true.iter().map(|p| p / s).collect())?;
        let a = TransitionMatrix::from_rows(&self.a_true)?;
        let b = EmissionModel::gaussian(self.mu_true.clone(), vec![self.sigma_true; self.k])?;
        HmmParams::new(pi, a, b)
    }
}

/// Samples `n_sequences` labeled sequences; a pure function of `cfg`.
pub fn generate_toy_dataset(cfg: &ToyConfig) -> Result<(Corpus, HmmParams)> {
    let params = cfg.params()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sequences = (0..cfg.n_sequences)
        .map(|_| sample_sequence(&params, cfg.seq_len, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut corpus = Corpus::new(Family::Gaussian, sequences);
    corpus.label_names = (0..cfg.k).map(|i| i.to_string()).collect();
    Ok((corpus, params))
}

/// Emission standard deviation at 1-based sweep position `t`.
pub fn sweep_sigma(t: usize) -> f64 {
    SWEEP_BASE_SIGMA + SWEEP_SIGMA_STEP * (t as f64 - 1.0)
}

/// `base` with σ = 0.025 + 0.1·(t−1) for t = 1..50.
pub fn variance_sweep_configs(base: &ToyConfig) -> Vec<ToyConfig> {
    (1..=SWEEP_POINTS)
        .map(|t| ToyConfig {
            sigma_true: sweep_sigma(t),
            ..base.clone()
        })
        .collect()
}

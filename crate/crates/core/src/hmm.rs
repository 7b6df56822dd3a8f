//! First-order hidden Markov models with three emission families.
//!
//! Inference works on per-timestep rescaled quantities: emission
//! likelihoods are shifted by their per-step maximum in log space and the
//! forward messages are renormalized at every step, so sequences of a few
//! hundred steps never underflow. The log-likelihood is recovered from the
//! accumulated scale factors.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DhmmError, Result};

/// Tolerance on probability-vector sums.
pub const SIMPLEX_TOL: f64 = 1e-12;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn check_distribution(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(DhmmError::Schema(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(DhmmError::Schema(format!(
            "{what} sums to {s}, expected 1"
        )));
    }
    Ok(())
}

/// Initial state distribution π.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDistribution(Vec<f64>);

impl InitialDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(DhmmError::Schema("initial distribution is empty".into()));
        }
        check_distribution("initial distribution", &probs)?;
        Ok(Self(probs))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Row-stochastic k×k transition matrix; row i is P(X_{t+1} | X_t = i).
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix(DMatrix<f64>);

impl TransitionMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(DhmmError::Schema(format!(
                "transition matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        for i in 0..m.nrows() {
            let row: Vec<f64> = m.row(i).iter().copied().collect();
            check_distribution(&format!("transition row {i}"), &row)?;
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(DhmmError::Schema("transition matrix rows must have length k".into()));
        }
        Self::new(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
    }

    pub fn identity(k: usize) -> Self {
        Self(DMatrix::identity(k, k))
    }

    /// Wraps a matrix whose rows are already known to be on the simplex.
    pub(crate) fn from_matrix_unchecked(m: DMatrix<f64>) -> Self {
        debug_assert!((0..m.nrows()).all(|i| (m.row(i).sum() - 1.0).abs() < 1e-9));
        Self(m)
    }

    pub fn k(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.0.row(i).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.k()).map(|i| self.row(i)).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Categorical,
    Bernoulli,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Gaussian => "gaussian",
            Family::Categorical => "categorical",
            Family::Bernoulli => "bernoulli",
        })
    }
}

impl FromStr for Family {
    type Err = DhmmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Family::Gaussian),
            "categorical" => Ok(Family::Categorical),
            "bernoulli" => Ok(Family::Bernoulli),
            other => Err(DhmmError::invalid(format!("unknown emission family `{other}`"))),
        }
    }
}

/// Per-state observation model B.
#[derive(Debug, Clone, PartialEq)]
pub enum EmissionModel {
    /// Univariate normal per state.
    Gaussian { means: Vec<f64>, stddevs: Vec<f64> },
    /// k×V row-stochastic symbol probabilities.
    Categorical { probs: DMatrix<f64> },
    /// k×D independent pixel/feature probabilities of being 1.
    Bernoulli { probs: DMatrix<f64> },
}

impl EmissionModel {
    pub fn gaussian(means: Vec<f64>, stddevs: Vec<f64>) -> Result<Self> {
        let m = EmissionModel::Gaussian { means, stddevs };
        m.validate()?;
        Ok(m)
    }

    pub fn categorical(probs: DMatrix<f64>) -> Result<Self> {
        let m = EmissionModel::Categorical { probs };
        m.validate()?;
        Ok(m)
    }

    pub fn bernoulli(probs: DMatrix<f64>) -> Result<Self> {
        let m = EmissionModel::Bernoulli { probs };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EmissionModel::Gaussian { means, stddevs } => {
                if means.is_empty() || means.len() != stddevs.len() {
                    return Err(DhmmError::Schema(
                        "gaussian means and stddevs must be non-empty and of equal length".into(),
                    ));
                }
                if means.iter().any(|m| !m.is_finite()) {
                    return Err(DhmmError::Schema("gaussian mean is not finite".into()));
                }
                if let Some(i) = stddevs.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
                    return Err(DhmmError::Schema(format!(
                        "gaussian stddev of state {i} must be positive, got {}",
                        stddevs[i]
                    )));
                }
            }
            EmissionModel::Categorical { probs } => {
                if probs.nrows() == 0 || probs.ncols() == 0 {
                    return Err(DhmmError::Schema("categorical emission matrix is empty".into()));
                }
                for i in 0..probs.nrows() {
                    let row: Vec<f64> = probs.row(i).iter().copied().collect();
                    check_distribution(&format!("emission row {i}"), &row)?;
                }
            }
            EmissionModel::Bernoulli { probs } => {
                if probs.nrows() == 0 || probs.ncols() == 0 {
                    return Err(DhmmError::Schema("bernoulli emission matrix is empty".into()));
                }
                if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(DhmmError::Schema(
                        "bernoulli probabilities must lie in [0, 1]".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        match self {
            EmissionModel::Gaussian { .. } => Family::Gaussian,
            EmissionModel::Categorical { .. } => Family::Categorical,
            EmissionModel::Bernoulli { .. } => Family::Bernoulli,
        }
    }

    pub fn n_states(&self) -> usize {
        match self {
            EmissionModel::Gaussian { means, .. } => means.len(),
            EmissionModel::Categorical { probs } | EmissionModel::Bernoulli { probs } => {
                probs.nrows()
            }
        }
    }

    /// Vocabulary size (categorical) or feature dimension (bernoulli); 1 for gaussian.
    pub fn dim(&self) -> usize {
        match self {
            EmissionModel::Gaussian { .. } => 1,
            EmissionModel::Categorical { probs } | EmissionModel::Bernoulli { probs } => {
                probs.ncols()
            }
        }
    }

    /// Log density (gaussian) or log mass (categorical, bernoulli) of `y` under `state`.
    pub fn log_prob(&self, y: Observation<'_>, state: usize) -> Result<f64> {
        if state >= self.n_states() {
            return Err(DhmmError::invalid(format!(
                "state {state} out of range for {} states",
                self.n_states()
            )));
        }
        match (self, y) {
            (EmissionModel::Gaussian { means, stddevs }, Observation::Real(x)) => {
                let z = (x - means[state]) / stddevs[state];
                Ok(-0.5 * z * z - stddevs[state].ln() - LN_SQRT_2PI)
            }
            (EmissionModel::Categorical { probs }, Observation::Symbol(v)) => {
                if v >= probs.ncols() {
                    return Err(DhmmError::invalid(format!(
                        "symbol {v} outside vocabulary of size {}",
                        probs.ncols()
                    )));
                }
                Ok(probs[(state, v)].ln())
            }
            (EmissionModel::Bernoulli { probs }, Observation::Bits(bits)) => {
                if bits.len() != probs.ncols() {
                    return Err(DhmmError::invalid(format!(
                        "binary observation has {} features, model expects {}",
                        bits.len(),
                        probs.ncols()
                    )));
                }
                Ok(bits
                    .iter()
                    .enumerate()
                    .map(|(d, &b)| {
                        let p = probs[(state, d)];
                        if b {
                            p.ln()
                        } else {
                            (1.0 - p).ln()
                        }
                    })
                    .sum())
            }
            (model, y) => Err(DhmmError::invalid(format!(
                "{} observation does not match {} emission model",
                y.kind(),
                model.family()
            ))),
        }
    }

    /// T×k table of emission log-probabilities for a whole sequence.
    pub fn log_prob_table(&self, obs: &Observations) -> Result<DMatrix<f64>> {
        let k = self.n_states();
        let t_len = obs.len();
        match (self, obs) {
            (EmissionModel::Bernoulli { probs }, Observations::Bits(rows)) => {
                let d = probs.ncols();
                let log_on = probs.map(f64::ln);
                let log_off = probs.map(|p| (1.0 - p).ln());
                let mut table = DMatrix::zeros(t_len, k);
                for (t, bits) in rows.iter().enumerate() {
                    if bits.len() != d {
                        return Err(DhmmError::invalid(format!(
                            "binary observation at t={t} has {} features, model expects {d}",
                            bits.len()
                        )));
                    }
                    for i in 0..k {
                        let mut acc = 0.0;
                        for (j, &b) in bits.iter().enumerate() {
                            acc += if b { log_on[(i, j)] } else { log_off[(i, j)] };
                        }
                        table[(t, i)] = acc;
                    }
                }
                Ok(table)
            }
            _ => {
                let mut table = DMatrix::zeros(t_len, k);
                for t in 0..t_len {
                    let y = obs.get(t);
                    for i in 0..k {
                        table[(t, i)] = self.log_prob(y, i)?;
                    }
                }
                Ok(table)
            }
        }
    }
}

/// One observation, borrowed from an [`Observations`] buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation<'a> {
    Real(f64),
    Symbol(usize),
    Bits(&'a [bool]),
}

impl Observation<'_> {
    fn kind(&self) -> &'static str {
        match self {
            Observation::Real(_) => "real",
            Observation::Symbol(_) => "symbol",
            Observation::Bits(_) => "binary",
        }
    }
}

/// Observation buffer of a single sequence; the variant fixes the family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observations {
    Real(Vec<f64>),
    Symbols(Vec<usize>),
    Bits(Vec<Vec<bool>>),
}

impl Observations {
    pub fn len(&self) -> usize {
        match self {
            Observations::Real(v) => v.len(),
            Observations::Symbols(v) => v.len(),
            Observations::Bits(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, t: usize) -> Observation<'_> {
        match self {
            Observations::Real(v) => Observation::Real(v[t]),
            Observations::Symbols(v) => Observation::Symbol(v[t]),
            Observations::Bits(v) => Observation::Bits(&v[t]),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Observations::Real(_) => Family::Gaussian,
            Observations::Symbols(_) => Family::Categorical,
            Observations::Bits(_) => Family::Bernoulli,
        }
    }
}

/// Observations Y_1..Y_T with optional gold states X_1..X_T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSequence {
    pub observations: Observations,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
}

impl ObservationSequence {
    pub fn new(observations: Observations, labels: Option<Vec<usize>>) -> Result<Self> {
        if observations.is_empty() {
            return Err(DhmmError::invalid("observation sequence is empty"));
        }
        if let Some(l) = &labels {
            if l.len() != observations.len() {
                return Err(DhmmError::invalid(format!(
                    "{} labels for {} observations",
                    l.len(),
                    observations.len()
                )));
            }
        }
        Ok(Self {
            observations,
            labels,
        })
    }

    pub fn unlabeled(observations: Observations) -> Result<Self> {
        Self::new(observations, None)
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// λ = (π, A, B).
#[derive(Debug, Clone, PartialEq)]
pub struct HmmParams {
    pub pi: InitialDistribution,
    pub a: TransitionMatrix,
    pub b: EmissionModel,
}

impl HmmParams {
    pub fn new(pi: InitialDistribution, a: TransitionMatrix, b: EmissionModel) -> Result<Self> {
        let k = pi.len();
        if a.k() != k || b.n_states() != k {
            return Err(DhmmError::Schema(format!(
                "inconsistent state counts: |pi|={k}, A is {0}x{0}, B has {1} states",
                a.k(),
                b.n_states()
            )));
        }
        b.validate()?;
        Ok(Self { pi, a, b })
    }

    pub fn k(&self) -> usize {
        self.pi.len()
    }

    /// Checks that `seq` can be scored by this model.
    pub fn check_sequence(&self, seq: &ObservationSequence) -> Result<()> {
        if seq.is_empty() {
            return Err(DhmmError::invalid("observation sequence is empty"));
        }
        if seq.observations.family() != self.b.family() {
            return Err(DhmmError::invalid(format!(
                "{} observations given to a {} model",
                seq.observations.family(),
                self.b.family()
            )));
        }
        if let Some(labels) = &seq.labels {
            if let Some(&x) = labels.iter().find(|&&x| x >= self.k()) {
                return Err(DhmmError::invalid(format!(
                    "label {x} out of range for {} states",
                    self.k()
                )));
            }
        }
        Ok(())
    }
}

/// Posterior unary and pairwise state marginals of one sequence.
#[derive(Debug, Clone)]
pub struct PosteriorMarginals {
    /// T×k, `unary[(t, i)] = q(X_t = i)`.
    pub unary: DMatrix<f64>,
    /// T−1 slices of k×k, `pairwise[t][(i, j)] = q(X_t = i, X_{t+1} = j)`.
    pub pairwise: Vec<DMatrix<f64>>,
    pub log_likelihood: f64,
}

/// Emission likelihoods shifted by their per-step maximum, with the shifts.
fn scaled_emissions(params: &HmmParams, seq: &ObservationSequence) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mut table = params.b.log_prob_table(&seq.observations)?;
    let mut shifts = Vec::with_capacity(table.nrows());
    for t in 0..table.nrows() {
        let m = table.row(t).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY || m.is_nan() {
            return Err(DhmmError::Underflow {
                timestep: t,
                sequence: None,
            });
        }
        for i in 0..table.ncols() {
            table[(t, i)] = (table[(t, i)] - m).exp();
        }
        shifts.push(m);
    }
    Ok((table, shifts))
}

/// Scaled forward pass. Returns normalized α rows, per-step scale factors
/// and the log-likelihood.
fn forward(
    params: &HmmParams,
    emis: &DMatrix<f64>,
    shifts: &[f64],
) -> Result<(DMatrix<f64>, Vec<f64>, f64)> {
    let k = params.k();
    let t_len = emis.nrows();
    let a = params.a.matrix();
    let pi = params.pi.probs();
    let mut alpha = DMatrix::zeros(t_len, k);
    let mut scales = Vec::with_capacity(t_len);
    let mut log_lik = 0.0;
    for t in 0..t_len {
        let mut total = 0.0;
        for j in 0..k {
            let prior = if t == 0 {
                pi[j]
            } else {
                (0..k).map(|i| alpha[(t - 1, i)] * a[(i, j)]).sum()
            };
            let v = prior * emis[(t, j)];
            alpha[(t, j)] = v;
            total += v;
        }
        if !(total > 0.0) {
            return Err(DhmmError::Underflow {
                timestep: t,
                sequence: None,
            });
        }
        for j in 0..k {
            alpha[(t, j)] /= total;
        }
        scales.push(total);
        log_lik += total.ln() + shifts[t];
    }
    Ok((alpha, scales, log_lik))
}

/// Exact posterior marginals by the rescaled forward-backward recursions.
pub fn forward_backward(params: &HmmParams, seq: &ObservationSequence) -> Result<PosteriorMarginals> {
    params.check_sequence(seq)?;
    let k = params.k();
    let (emis, shifts) = scaled_emissions(params, seq)?;
    let (alpha, scales, log_likelihood) = forward(params, &emis, &shifts)?;
    let t_len = emis.nrows();
    let a = params.a.matrix();

    let mut beta = DMatrix::from_element(t_len, k, 1.0);
    for t in (0..t_len.saturating_sub(1)).rev() {
        for i in 0..k {
            let mut s = 0.0;
            for j in 0..k {
                s += a[(i, j)] * emis[(t + 1, j)] * beta[(t + 1, j)];
            }
            beta[(t, i)] = s / scales[t + 1];
        }
    }

    let mut unary = DMatrix::zeros(t_len, k);
    for t in 0..t_len {
        let mut z = 0.0;
        for i in 0..k {
            let v = alpha[(t, i)] * beta[(t, i)];
            unary[(t, i)] = v;
            z += v;
        }
        for i in 0..k {
            unary[(t, i)] /= z;
        }
    }

    let mut pairwise = Vec::with_capacity(t_len.saturating_sub(1));
    for t in 0..t_len.saturating_sub(1) {
        let mut xi = DMatrix::zeros(k, k);
        let mut z = 0.0;
        for i in 0..k {
            for j in 0..k {
                let v = alpha[(t, i)] * a[(i, j)] * emis[(t + 1, j)] * beta[(t + 1, j)];
                xi[(i, j)] = v;
                z += v;
            }
        }
        xi /= z;
        pairwise.push(xi);
    }

    Ok(PosteriorMarginals {
        unary,
        pairwise,
        log_likelihood,
    })
}

/// log P(Y | λ).
pub fn sequence_log_likelihood(params: &HmmParams, seq: &ObservationSequence) -> Result<f64> {
    params.check_sequence(seq)?;
    let (emis, shifts) = scaled_emissions(params, seq)?;
    Ok(forward(params, &emis, &shifts)?.2)
}

/// log P(X, Y | λ) for the sequence's own labels.
pub fn joint_log_likelihood(params: &HmmParams, seq: &ObservationSequence) -> Result<f64> {
    let labels = seq
        .labels
        .as_deref()
        .ok_or_else(|| DhmmError::invalid("joint likelihood needs a labeled sequence"))?;
    path_log_prob(params, seq, labels)
}

/// log P(X = `path`, Y | λ).
pub fn path_log_prob(params: &HmmParams, seq: &ObservationSequence, path: &[usize]) -> Result<f64> {
    params.check_sequence(seq)?;
    if path.len() != seq.len() {
        return Err(DhmmError::invalid(format!(
            "path of length {} for a sequence of length {}",
            path.len(),
            seq.len()
        )));
    }
    if let Some(&x) = path.iter().find(|&&x| x >= params.k()) {
        return Err(DhmmError::invalid(format!("state {x} out of range")));
    }
    let mut lp = params.pi.probs()[path[0]].ln();
    for t in 1..path.len() {
        lp += params.a.get(path[t - 1], path[t]).ln();
    }
    for (t, &x) in path.iter().enumerate() {
        lp += params.b.log_prob(seq.observations.get(t), x)?;
    }
    Ok(lp)
}

/// Most probable state path and its joint log probability.
///
/// The max-product recursion runs backwards over best-suffix scores and the
/// path is read off front to back, taking the smallest state index whenever
/// several states attain the maximum. Among equally probable paths the
/// lexicographically smallest one is returned.
pub fn viterbi(params: &HmmParams, seq: &ObservationSequence) -> Result<(Vec<usize>, f64)> {
    params.check_sequence(seq)?;
    let k = params.k();
    let emis = params.b.log_prob_table(&seq.observations)?;
    let t_len = emis.nrows();
    let log_a = params.a.matrix().map(f64::ln);

    // suffix[(t, i)] = max over x_{t+1..T} of the log score of steps after t given X_t = i
    let mut suffix = DMatrix::zeros(t_len, k);
    for t in (0..t_len - 1).rev() {
        for i in 0..k {
            suffix[(t, i)] = (0..k)
                .map(|j| log_a[(i, j)] + emis[(t + 1, j)] + suffix[(t + 1, j)])
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }

    let argmax_first = |scores: &mut dyn Iterator<Item = f64>| -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, s) in scores.enumerate() {
            if s > best.1 {
                best = (i, s);
            }
        }
        best
    };

    let pi = params.pi.probs();
    let (x0, score) = argmax_first(
        &mut (0..k).map(|i| pi[i].ln() + emis[(0, i)] + suffix[(0, i)]),
    );
    if score == f64::NEG_INFINITY || score.is_nan() {
        let t = first_dead_step(params, seq, &emis)?;
        return Err(DhmmError::Underflow {
            timestep: t,
            sequence: None,
        });
    }
    let mut path = Vec::with_capacity(t_len);
    path.push(x0);
    for t in 1..t_len {
        let prev = path[t - 1];
        let (x, _) = argmax_first(
            &mut (0..k).map(|j| log_a[(prev, j)] + emis[(t, j)] + suffix[(t, j)]),
        );
        path.push(x);
    }
    let score = path_log_prob(params, seq, &path)?;
    Ok((path, score))
}

/// First timestep at which no path survives, for error reporting.
fn first_dead_step(params: &HmmParams, seq: &ObservationSequence, emis: &DMatrix<f64>) -> Result<usize> {
    match scaled_emissions(params, seq).and_then(|(e, s)| forward(params, &e, &s)) {
        Err(DhmmError::Underflow { timestep, .. }) => Ok(timestep),
        _ => Ok(emis.nrows() - 1),
    }
}

fn sample_index<R: Rng + ?Sized>(probs: impl Iterator<Item = f64> + Clone, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        if p > 0.0 {
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Draws a labeled sequence of length `t_len` from the generative model.
pub fn sample_sequence<R: Rng + ?Sized>(
    params: &HmmParams,
    t_len: usize,
    rng: &mut R,
) -> Result<ObservationSequence> {
    if t_len == 0 {
        return Err(DhmmError::invalid("sequence length must be positive"));
    }
    let a = params.a.matrix();
    let mut labels = Vec::with_capacity(t_len);
    labels.push(sample_index(params.pi.probs().iter().copied(), rng));
    for t in 1..t_len {
        let prev = labels[t - 1];
        labels.push(sample_index(a.row(prev).iter().copied(), rng));
    }
    let observations = match &params.b {
        EmissionModel::Gaussian { means, stddevs } => Observations::Real(
            labels
                .iter()
                .map(|&x| {
                    Normal::new(means[x], stddevs[x])
                        .expect("validated stddev")
                        .sample(rng)
                })
                .collect(),
        ),
        EmissionModel::Categorical { probs } => Observations::Symbols(
            labels
                .iter()
                .map(|&x| sample_index(probs.row(x).iter().copied(), rng))
                .collect(),
        ),
        EmissionModel::Bernoulli { probs } => Observations::Bits(
            labels
                .iter()
                .map(|&x| {
                    (0..probs.ncols())
                        .map(|d| rng.random::<f64>() < probs[(x, d)])
                        .collect()
                })
                .collect(),
        ),
    };
    ObservationSequence::new(observations, Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state_gaussian() -> HmmParams {
        HmmParams::new(
            InitialDistribution::new(vec![0.6, 0.4]).unwrap(),
            TransitionMatrix::from_rows(&[vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap(),
            EmissionModel::gaussian(vec![0.0, 1.0], vec![1.0, 0.5]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn emission_log_prob_values() {
        let g = EmissionModel::gaussian(vec![0.0], vec![1.0]).unwrap();
        assert_abs_diff_eq!(
            g.log_prob(Observation::Real(0.0), 0).unwrap(),
            -0.918938533204673,
            epsilon = 1e-12
        );
        let c = EmissionModel::categorical(DMatrix::from_row_slice(1, 2, &[0.5, 0.5])).unwrap();
        assert_abs_diff_eq!(
            c.log_prob(Observation::Symbol(0), 0).unwrap(),
            0.5f64.ln(),
            epsilon = 1e-12
        );
        let b = EmissionModel::bernoulli(DMatrix::from_row_slice(1, 2, &[0.9, 0.1])).unwrap();
        assert_abs_diff_eq!(
            b.log_prob(Observation::Bits(&[true, false]), 0).unwrap(),
            (0.9f64 * 0.9).ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            b.log_prob(Observation::Bits(&[true, false]), 0).unwrap(),
            -0.210721,
            epsilon = 1e-6
        );
    }

    #[test]
    fn emission_log_prob_rejects_mismatch() {
        let b = EmissionModel::bernoulli(DMatrix::from_row_slice(1, 2, &[0.9, 0.1])).unwrap();
        assert!(matches!(
            b.log_prob(Observation::Bits(&[true]), 0),
            Err(DhmmError::InvalidInput(_))
        ));
        assert!(b.log_prob(Observation::Real(1.0), 0).is_err());
        let c = EmissionModel::categorical(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        assert!(c.log_prob(Observation::Symbol(2), 0).is_err());
        assert_eq!(c.log_prob(Observation::Symbol(1), 0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn single_step_posterior() {
        let p = two_state_gaussian();
        let seq = ObservationSequence::unlabeled(Observations::Real(vec![0.3])).unwrap();
        let post = forward_backward(&p, &seq).unwrap();
        assert!(post.pairwise.is_empty());
        let w: Vec<f64> = (0..2)
            .map(|i| p.pi.probs()[i] * p.b.log_prob(Observation::Real(0.3), i).unwrap().exp())
            .collect();
        let z = w[0] + w[1];
        assert_abs_diff_eq!(post.unary[(0, 0)], w[0] / z, epsilon = 1e-14);
        assert_abs_diff_eq!(post.log_likelihood, z.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            sequence_log_likelihood(&p, &seq).unwrap(),
            z.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn symmetric_model_gives_uniform_posteriors() {
        let p = HmmParams::new(
            InitialDistribution::uniform(2),
            TransitionMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap(),
            EmissionModel::gaussian(vec![1.0, 1.0], vec![2.0, 2.0]).unwrap(),
        )
        .unwrap();
        let seq =
            ObservationSequence::unlabeled(Observations::Real(vec![0.1, 3.0, -2.0, 1.0])).unwrap();
        let post = forward_backward(&p, &seq).unwrap();
        for t in 0..4 {
            assert_abs_diff_eq!(post.unary[(t, 0)], 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(post.unary[(t, 1)], 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn uninformative_emissions_give_prior_marginals() {
        // Identical rows (0.3, 0.7): after the first step the posterior is the row itself.
        let p = HmmParams::new(
            InitialDistribution::uniform(2),
            TransitionMatrix::from_rows(&[vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap(),
            EmissionModel::gaussian(vec![1.0, 1.0], vec![2.0, 2.0]).unwrap(),
        )
        .unwrap();
        let seq =
            ObservationSequence::unlabeled(Observations::Real(vec![0.1, 3.0, -2.0])).unwrap();
        let post = forward_backward(&p, &seq).unwrap();
        assert_abs_diff_eq!(post.unary[(0, 0)], 0.5, epsilon = 1e-12);
        for t in 1..3 {
            assert_abs_diff_eq!(post.unary[(t, 0)], 0.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn deterministic_chain_likelihood() {
        let b = DMatrix::from_row_slice(2, 3, &[0.2, 0.3, 0.5, 0.6, 0.2, 0.2]);
        let p = HmmParams::new(
            InitialDistribution::new(vec![1.0, 0.0]).unwrap(),
            TransitionMatrix::identity(2),
            EmissionModel::categorical(b).unwrap(),
        )
        .unwrap();
        let seq = ObservationSequence::unlabeled(Observations::Symbols(vec![2, 0, 1, 2])).unwrap();
        let expected = 0.5f64.ln() + 0.2f64.ln() + 0.3f64.ln() + 0.5f64.ln();
        assert_abs_diff_eq!(
            sequence_log_likelihood(&p, &seq).unwrap(),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn underflow_names_timestep() {
        let b = DMatrix::from_row_slice(2, 3, &[0.5, 0.5, 0.0, 0.5, 0.5, 0.0]);
        let p = HmmParams::new(
            InitialDistribution::uniform(2),
            TransitionMatrix::identity(2),
            EmissionModel::categorical(b).unwrap(),
        )
        .unwrap();
        let seq = ObservationSequence::unlabeled(Observations::Symbols(vec![0, 1, 2])).unwrap();
        match forward_backward(&p, &seq) {
            Err(DhmmError::Underflow { timestep, .. }) => assert_eq!(timestep, 2),
            other => panic!("expected underflow, got {other:?}"),
        }
        assert!(matches!(viterbi(&p, &seq), Err(DhmmError::Underflow { timestep: 2, .. })));
    }

    #[test]
    fn forbidden_transition_is_underflow_not_nan() {
        // state 0 emits only symbol 0, state 1 only symbol 1, and 0 never leaves 0
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let p = HmmParams::new(
            InitialDistribution::new(vec![1.0, 0.0]).unwrap(),
            TransitionMatrix::identity(2),
            EmissionModel::categorical(b).unwrap(),
        )
        .unwrap();
        let seq = ObservationSequence::unlabeled(Observations::Symbols(vec![0, 1])).unwrap();
        assert!(matches!(
            forward_backward(&p, &seq),
            Err(DhmmError::Underflow { timestep: 1, .. })
        ));
    }

    #[test]
    fn joint_likelihood_with_zero_transition() {
        let p = HmmParams::new(
            InitialDistribution::uniform(2),
            TransitionMatrix::identity(2),
            EmissionModel::gaussian(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap(),
        )
        .unwrap();
        let seq =
            ObservationSequence::new(Observations::Real(vec![0.0, 1.0]), Some(vec![0, 1])).unwrap();
        assert_eq!(joint_log_likelihood(&p, &seq).unwrap(), f64::NEG_INFINITY);
        let one = ObservationSequence::new(Observations::Real(vec![0.0]), Some(vec![1])).unwrap();
        let expected = 0.5f64.ln() + p.b.log_prob(Observation::Real(0.0), 1).unwrap();
        assert_abs_diff_eq!(joint_log_likelihood(&p, &one).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn viterbi_constant_path_under_identity() {
        let p = HmmParams::new(
            InitialDistribution::new(vec![0.0, 0.0, 1.0]).unwrap(),
            TransitionMatrix::identity(3),
            EmissionModel::gaussian(vec![0.0, 5.0, 10.0], vec![1.0, 1.0, 1.0]).unwrap(),
        )
        .unwrap();
        let seq =
            ObservationSequence::unlabeled(Observations::Real(vec![0.0, 5.0, 0.0, 4.0])).unwrap();
        let (path, _) = viterbi(&p, &seq).unwrap();
        assert_eq!(path, vec![2, 2, 2, 2]);
    }

    #[test]
    fn viterbi_tie_returns_lexicographically_smallest() {
        // Paths (0,1) and (1,0) both have probability 0.25; so do (0,0), (1,1).
        let p = HmmParams::new(
            InitialDistribution::uniform(2),
            TransitionMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap(),
            EmissionModel::categorical(DMatrix::from_row_slice(2, 1, &[1.0, 1.0])).unwrap(),
        )
        .unwrap();
        let seq = ObservationSequence::unlabeled(Observations::Symbols(vec![0, 0, 0])).unwrap();
        assert_eq!(viterbi(&p, &seq).unwrap().0, vec![0, 0, 0]);

        // Only (0,1) and (1,0) survive.
        let p = HmmParams::new(
            InitialDistribution::uniform(2),
            TransitionMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            EmissionModel::categorical(DMatrix::from_row_slice(2, 1, &[1.0, 1.0])).unwrap(),
        )
        .unwrap();
        let seq = ObservationSequence::unlabeled(Observations::Symbols(vec![0, 0])).unwrap();
        assert_eq!(viterbi(&p, &seq).unwrap().0, vec![0, 1]);
    }

    #[test]
    fn sampling_identity_chain_and_determinism() {
        let p = HmmParams::new(
            InitialDistribution::new(vec![1.0, 0.0]).unwrap(),
            TransitionMatrix::identity(2),
            EmissionModel::gaussian(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap(),
        )
        .unwrap();
        let s = sample_sequence(&p, 20, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(s.labels.as_deref().unwrap(), &[0; 20][..]);

        let q = two_state_gaussian();
        let a = sample_sequence(&q, 50, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = sample_sequence(&q, 50, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
        assert!(sample_sequence(&q, 0, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn sampled_start_frequencies_match_pi() {
        let pi = vec![0.1, 0.2, 0.3, 0.4];
        let p = HmmParams::new(
            InitialDistribution::new(pi.clone()).unwrap(),
            TransitionMatrix::from_rows(&vec![vec![0.25; 4]; 4]).unwrap(),
            EmissionModel::categorical(DMatrix::from_element(4, 2, 0.5)).unwrap(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let s = sample_sequence(&p, 1, &mut rng).unwrap();
            counts[s.labels.unwrap()[0]] += 1;
        }
        for i in 0..4 {
            let mean = n as f64 * pi[i];
            let sd = (n as f64 * pi[i] * (1.0 - pi[i])).sqrt();
            assert!(
                (counts[i] as f64 - mean).abs() <= 3.0 * sd,
                "state {i}: {} vs {mean}",
                counts[i]
            );
        }
    }

    #[test]
    fn params_reject_inconsistent_dimensions() {
        let r = HmmParams::new(
            InitialDistribution::uniform(3),
            TransitionMatrix::identity(2),
            EmissionModel::gaussian(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap(),
        );
        assert!(matches!(r, Err(DhmmError::Schema(_))));
        assert!(TransitionMatrix::from_rows(&[vec![0.5, 0.4], vec![0.5, 0.5]]).is_err());
        assert!(EmissionModel::gaussian(vec![0.0], vec![-1.0]).is_err());
        assert!(EmissionModel::bernoulli(DMatrix::from_element(1, 2, 1.5)).is_err());
    }
}

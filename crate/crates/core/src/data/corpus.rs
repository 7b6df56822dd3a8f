use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DhmmError, Result};
use crate::hmm::{Family, ObservationSequence, Observations};
use crate::learning::EmissionSpec;

/// A dataset of observation sequences with the metadata needed to train on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corpus {
    pub family: Family,
    pub sequences: Vec<ObservationSequence>,
    /// Word forms by symbol index (categorical corpora read from text).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vocabulary: Vec<String>,
    /// Size of the categorical alphabet, including any reserved unknown-word slot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_symbols: Option<usize>,
    /// Feature dimension of bernoulli observations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Names of the gold labels, indexed by label.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub label_names: Vec<String>,
    /// Cross-validation fold of each sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folds: Option<Vec<usize>>,
}

impl Corpus {
    pub fn new(family: Family, sequences: Vec<ObservationSequence>) -> Self {
        Self {
            family,
            sequences,
            vocabulary: Vec::new(),
            n_symbols: None,
            dim: None,
            label_names: Vec::new(),
            folds: None,
        }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Total number of observations.
    pub fn n_positions(&self) -> usize {
        self.sequences.iter().map(ObservationSequence::len).sum()
    }

    pub fn is_labeled(&self) -> bool {
        !self.sequences.is_empty() && self.sequences.iter().all(|s| s.labels.is_some())
    }

    /// Gold labels of every sequence, if all are labeled.
    pub fn labels(&self) -> Option<Vec<Vec<usize>>> {
        self.sequences.iter().map(|s| s.labels.clone()).collect()
    }

    pub fn n_folds(&self) -> Option<usize> {
        self.folds.as_ref().map(|f| f.iter().max().map_or(0, |m| m + 1))
    }

    /// The sequences at `indices`, in that order, with matching fold ids.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
            folds: self
                .folds
                .as_ref()
                .map(|f| indices.iter().map(|&i| f[i]).collect()),
            ..self.clone_metadata()
        }
    }

    fn clone_metadata(&self) -> Corpus {
        Corpus {
            family: self.family,
            sequences: Vec::new(),
            vocabulary: self.vocabulary.clone(),
            n_symbols: self.n_symbols,
            dim: self.dim,
            label_names: self.label_names.clone(),
            folds: None,
        }
    }

    pub fn emission_spec(&self) -> Result<EmissionSpec> {
        match self.family {
            Family::Bernoulli if self.dim.is_some() && self.is_empty() => Ok(EmissionSpec::Bernoulli {
                dim: self.dim.unwrap_or(0),
            }),
            _ => EmissionSpec::from_data(&self.sequences, self.n_symbols),
        }
    }

    /// Checks the corpus invariants: one observation family, symbols inside
    /// the declared alphabet, a fixed bernoulli dimension, labels inside the
    /// label alphabet, and one fold id per sequence.
    pub fn validate(&self) -> Result<()> {
        let schema = |msg: String| Err(DhmmError::Schema(msg));
        for (n, seq) in self.sequences.iter().enumerate() {
            if seq.observations.is_empty() {
                return schema(format!("sequence {n} is empty"));
            }
            if seq.observations.family() != self.family {
                return schema(format!(
                    "sequence {n} has {} observations in a {} corpus",
                    seq.observations.family(),
                    self.family
                ));
            }
            if let Some(l) = &seq.labels {
                if l.len() != seq.len() {
                    return schema(format!("sequence {n} has {} labels for {} observations", l.len(), seq.len()));
                }
                if !self.label_names.is_empty() {
                    if let Some(&x) = l.iter().find(|&&x| x >= self.label_names.len()) {
                        return schema(format!("sequence {n} has label {x} outside the label set"));
                    }
                }
            }
            match &seq.observations {
                Observations::Real(v) => {
                    if let Some(y) = v.iter().find(|y| !y.is_finite()) {
                        return schema(format!("sequence {n} has non-finite observation {y}"));
                    }
                }
                Observations::Symbols(v) => {
                    if let Some(v_max) = self.n_symbols {
                        if let Some(&s) = v.iter().find(|&&s| s >= v_max) {
                            return schema(format!("sequence {n} has symbol {s} outside [0, {v_max})"));
                        }
                    }
                }
                Observations::Bits(v) => {
                    let d = self.dim.unwrap_or(v[0].len());
                    if let Some(t) = v.iter().position(|b| b.len() != d) {
                        return schema(format!("sequence {n}, position {t}: expected {d} features"));
                    }
                }
            }
        }
        if let Some(f) = &self.folds {
            if f.len() != self.sequences.len() {
                return schema(format!("{} fold ids for {} sequences", f.len(), self.sequences.len()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let corpus: Corpus = serde_json::from_str(text)?;
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| DhmmError::io(path, e))?;
        Self::from_json(&text)
    }
}

//! Alignment-based accuracy and state-occupancy statistics.

use serde::{Deserialize, Serialize};

use crate::error::{DhmmError, Result};

/// Optimal matching of predicted states to gold states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// `mapping[p]` is the gold state assigned to predicted state `p`.
    pub mapping: Vec<usize>,
    /// Number of positions left mismatched under `mapping`.
    pub cost: f64,
}

impl Alignment {
    pub fn apply(&self, labels: &[usize]) -> Vec<usize> {
        labels.iter().map(|&p| self.mapping[p]).collect()
    }
}

/// k×k counts: `m[p][g]` positions with prediction `p` and gold label `g`.
pub fn confusion_matrix(pred: &[Vec<usize>], gold: &[Vec<usize>], k: usize) -> Result<Vec<Vec<u64>>> {
    if pred.len() != gold.len() {
        return Err(DhmmError::invalid(format!(
            "{} predicted sequences but {} gold sequences",
            pred.len(),
            gold.len()
        )));
    }
    let mut m = vec![vec![0u64; k]; k];
    for (n, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(DhmmError::invalid(format!(
                "sequence {n}: {} predicted labels but {} gold labels",
                p.len(),
                g.len()
            )));
        }
        for (&a, &b) in p.iter().zip(g) {
            if a >= k || b >= k {
                return Err(DhmmError::invalid(format!(
                    "sequence {n}: label {} outside [0, {k})",
                    a.max(b)
                )));
            }
            m[a][b] += 1;
        }
    }
    Ok(m)
}

/// Minimum-cost assignment of rows to distinct columns (rows ≤ columns).
/// Returns the total cost and the column of each row.
fn min_cost_assignment(cost: &[Vec<i64>]) -> (i64, Vec<usize>) {
    let n = cost.len();
    if n == 0 {
        return (0, Vec::new());
    }
    let m = cost[0].len();
    // Potentials and matching are 1-based; index 0 is a sentinel.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; n];
    for j in 1..=m {
        if row_of[j] != 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    let total = (0..n).map(|i| cost[i][col_of[i]]).sum();
    (total, col_of)
}

/// Best total match count of rows `rows` to columns `cols` of `counts`.
fn best_match(counts: &[Vec<u64>], rows: &[usize], cols: &[usize]) -> u64 {
    let top = counts.iter().flatten().copied().max().unwrap_or(0) as i64;
    let cost: Vec<Vec<i64>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| top - counts[r][c] as i64).collect())
        .collect();
    let (total, _) = min_cost_assignment(&cost);
    (top * rows.len() as i64 - total) as u64
}

/// Permutation maximizing the matched count of a k×k confusion matrix. Ties
/// go to the lexicographically smallest mapping.
pub fn align_confusion(counts: &[Vec<u64>]) -> Vec<usize> {
    let k = counts.len();
    let mut rows: Vec<usize> = (0..k).collect();
    let mut cols: Vec<usize> = (0..k).collect();
    let mut target = best_match(counts, &rows, &cols);
    let mut mapping = Vec::with_capacity(k);
    for p in 0..k {
        rows.retain(|&r| r != p);
        let mut chosen = None;
        for (idx, &g) in cols.iter().enumerate() {
            let mut rest = cols.clone();
            rest.remove(idx);
            let value = counts[p][g] + best_match(counts, &rows, &rest);
            if value == target {
                chosen = Some((idx, g));
                break;
            }
        }
        let (idx, g) = chosen.expect("some column attains the optimum");
        target -= counts[p][g];
        cols.remove(idx);
        mapping.push(g);
    }
    mapping
}

/// Hungarian alignment of predicted to gold labels.
pub fn hungarian_align(pred: &[Vec<usize>], gold: &[Vec<usize>], k: usize) -> Result<Alignment> {
    let counts = confusion_matrix(pred, gold, k)?;
    let mapping = align_confusion(&counts);
    let total: u64 = counts.iter().flatten().sum();
    let matched: u64 = mapping.iter().enumerate().map(|(p, &g)| counts[p][g]).sum();
    Ok(Alignment {
        mapping,
        cost: (total - matched) as f64,
    })
}

/// Fraction of positions labeled correctly after optimal alignment,
/// micro-averaged over all positions.
pub fn one_to_one_accuracy(pred: &[Vec<usize>], gold: &[Vec<usize>], k: usize) -> Result<f64> {
    let total: usize = gold.iter().map(Vec::len).sum();
    let alignment = hungarian_align(pred, gold, k)?;
    if total == 0 {
        return Err(DhmmError::invalid("no labeled positions to score"));
    }
    Ok((total as f64 - alignment.cost) / total as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateHistogram {
    pub counts: Vec<u64>,
    pub total: u64,
}

pub fn state_histogram<'a, I>(labels: I, k: usize) -> Result<StateHistogram>
where
    I: IntoIterator<Item = &'a [usize]>,
{
    let mut counts = vec![0u64; k];
    for seq in labels {
        for &x in seq {
            if x >= k {
                return Err(DhmmError::invalid(format!("label {x} outside [0, {k})")));
            }
            counts[x] += 1;
        }
    }
    let total = counts.iter().sum();
    Ok(StateHistogram { counts, total })
}

/// Number of states occupied strictly more than `sigma_f` times.
pub fn effective_state_count(hist: &StateHistogram, sigma_f: u64) -> usize {
    hist.counts.iter().filter(|&&c| c > sigma_f).count()
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::corpus::Corpus;
use crate::error::{DhmmError, Result};

/// Indices of one cross-validation round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partitions the corpus into `n_folds` test folds. Embedded fold ids are
/// used when present; otherwise sequences are shuffled with `seed` and dealt
/// round-robin. Indices within each side are ascending.
pub fn k_fold_split(corpus: &Corpus, n_folds: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if n_folds < 2 {
        return Err(DhmmError::invalid("need at least two folds"));
    }
    let n = corpus.len();
    if n_folds > n {
        return Err(DhmmError::invalid(format!("{n_folds} folds requested for {n} sequences")));
    }
    let assignment: Vec<usize> = match &corpus.folds {
        Some(ids) => {
            if let Some(&f) = ids.iter().find(|&&f| f >= n_folds) {
                return Err(DhmmError::invalid(format!(
                    "corpus assigns fold {f}, outside the {n_folds} requested folds"
                )));
            }
            ids.clone()
        }
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut a = vec![0; n];
            for (pos, &i) in order.iter().enumerate() {
                a[i] = pos % n_folds;
            }
            a
        }
    };
    Ok((0..n_folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == f);
            FoldSplit { train, test }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::{Family, ObservationSequence, Observations};
    use proptest::prelude::*;

    fn corpus(n: usize) -> Corpus {
        Corpus::new(
            Family::Gaussian,
            (0..n)
                .map(|i| ObservationSequence::unlabeled(Observations::Real(vec![i as f64])).unwrap())
                .collect(),
        )
    }

    #[test]
    fn leave_one_out_shape() {
        let splits = k_fold_split(&corpus(10), 10, 3).unwrap();
        assert!(splits.iter().all(|s| s.test.len() == 1 && s.train.len() == 9));
    }

    #[test]
    fn embedded_folds_win() {
        let mut c = corpus(4);
        c.folds = Some(vec![1, 0, 1, 0]);
        let s = k_fold_split(&c, 2, 99).unwrap();
        assert_eq!(s[0].test, vec![1, 3]);
        assert_eq!(s[1].test, vec![0, 2]);
        assert!(k_fold_split(&c, 3, 0).is_ok());
        c.folds = Some(vec![0, 1, 2, 5]);
        assert!(k_fold_split(&c, 3, 0).is_err());
    }

    #[test]
    fn bad_fold_counts() {
        assert!(k_fold_split(&corpus(3), 4, 0).is_err());
        assert!(k_fold_split(&corpus(3), 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_the_corpus(n in 2usize..60, f in 2usize..10, seed in any::<u64>()) {
            prop_assume!(f <= n);
            let c = corpus(n);
            let splits = k_fold_split(&c, f, seed).unwrap();
            let mut seen = vec![0; n];
            for s in &splits {
                for &i in &s.test { seen[i] += 1; }
                prop_assert_eq!(s.train.len() + s.test.len(), n);
                prop_assert!(s.train.iter().all(|i| !s.test.contains(i)));
            }
            prop_assert!(seen.iter().all(|&x| x == 1));
            prop_assert_eq!(splits, k_fold_split(&c, f, seed).unwrap());
        }
    }
}

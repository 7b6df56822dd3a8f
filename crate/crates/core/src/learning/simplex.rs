use nalgebra::DMatrix;

/// Euclidean projection of `v` onto the probability simplex.
///
/// Sort-based algorithm: with u sorted in decreasing order, find the
/// largest j such that `u_j + (1 - Σ_{r≤j} u_r) / j > 0`, then shift every
/// coordinate by the corresponding threshold and clip at zero.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    debug_assert!(v.iter().all(|x| x.is_finite()));
    if v.is_empty() {
        return Vec::new();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite input"));
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let candidate = (1.0 - cumsum) / (j + 1) as f64;
        if uj + candidate > 0.0 {
            shift = candidate;
        }
    }
    v.iter().map(|&x| (x + shift).max(0.0)).collect()
}

/// Projects every row of `m` independently onto the simplex.
pub fn project_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        for (j, x) in project_to_simplex(&row).into_iter().enumerate() {
            out[(i, j)] = x;
        }
    }
    out
}

/// Lower bound applied to transition entries before gradient evaluation.
pub const INTERIOR_FLOOR: f64 = 1e-12;

/// Clamps entries to at least [`INTERIOR_FLOOR`] and renormalizes each row.
pub fn interior_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.map(|x| x.max(INTERIOR_FLOOR));
    for i in 0..out.nrows() {
        let s = out.row(i).sum();
        for j in 0..out.ncols() {
            out[(i, j)] /= s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(project_to_simplex(&[0.5, 0.5]), vec![0.5, 0.5]);
        assert_eq!(project_to_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_to_simplex(&[0.6, 0.6]);
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-15);
        assert_eq!(project_to_simplex(&[-3.0, 5.0, -1.0]), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn interior_clamp_keeps_rows_stochastic() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.2, 0.3, 0.5]);
        let out = interior_rows(&m);
        assert!(out.iter().all(|&x| x > 0.0));
        for i in 0..2 {
            assert_abs_diff_eq!(out.row(i).sum(), 1.0, epsilon = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_idempotent(v in prop::collection::vec(-5.0f64..5.0, 1..10)) {
            let p = project_to_simplex(&v);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let q = project_to_simplex(&p);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn projection_is_shift_invariant(v in prop::collection::vec(-5.0f64..5.0, 2..8), c in -3.0f64..3.0) {
            let p = project_to_simplex(&v);
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let q = project_to_simplex(&shifted);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}

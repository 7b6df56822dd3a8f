//! Probability product kernels over transition rows and the log-determinant
//! diversity term built from them.

use nalgebra::{Cholesky, DMatrix};

use crate::error::{DhmmError, Result};
use crate::hmm::TransitionMatrix;

/// Kernel exponent used throughout; ρ = 1/2 is the Bhattacharyya kernel.
pub const DEFAULT_RHO: f64 = 0.5;

/// Determinants below this are treated as zero (log det = −∞).
pub const DET_FLOOR: f64 = 1e-300;

fn check_pair(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(DhmmError::invalid(format!(
            "distributions have different lengths ({} vs {})",
            p.len(),
            q.len()
        )));
    }
    if p.iter().chain(q).any(|&x| !(x >= 0.0)) {
        return Err(DhmmError::invalid("distributions must be non-negative"));
    }
    Ok(())
}

/// Σ_x p(x)^ρ q(x)^ρ.
pub fn product_kernel(p: &[f64], q: &[f64], rho: f64) -> Result<f64> {
    check_pair(p, q)?;
    if !(rho > 0.0) {
        return Err(DhmmError::invalid(format!("kernel exponent must be positive, got {rho}")));
    }
    Ok(p.iter().zip(q).map(|(&a, &b)| (a * b).powf(rho)).sum())
}

/// Product kernel divided by the geometric mean of the two self-kernels.
pub fn normalized_kernel(p: &[f64], q: &[f64], rho: f64) -> Result<f64> {
    let kpq = product_kernel(p, q, rho)?;
    let kpp = product_kernel(p, p, rho)?;
    let kqq = product_kernel(q, q, rho)?;
    if !(kpp > 0.0 && kqq > 0.0) {
        return Err(DhmmError::invalid("normalized kernel of an all-zero vector"));
    }
    Ok(kpq / (kpp.sqrt() * kqq.sqrt()))
}

/// Normalized kernel matrix K̃ over the rows of a transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub entries: DMatrix<f64>,
    pub rho: f64,
}

impl KernelMatrix {
    /// Builds K̃ from the rows of `a`. Rows need not lie exactly on the
    /// simplex, but must be non-negative and not all zero.
    pub fn from_rows(a: &DMatrix<f64>, rho: f64) -> Result<Self> {
        let k = a.nrows();
        let rows: Vec<Vec<f64>> = (0..k).map(|i| a.row(i).iter().copied().collect()).collect();
        let mut norms = Vec::with_capacity(k);
        for (i, r) in rows.iter().enumerate() {
            let s = product_kernel(r, r, rho)?;
            if !(s > 0.0) {
                return Err(DhmmError::invalid(format!("row {i} is all zero")));
            }
            norms.push(s.sqrt());
        }
        let mut entries = DMatrix::identity(k, k);
        for i in 0..k {
            for j in (i + 1)..k {
                let v = product_kernel(&rows[i], &rows[j], rho)? / (norms[i] * norms[j]);
                entries[(i, j)] = v;
                entries[(j, i)] = v;
            }
        }
        Ok(Self { entries, rho })
    }

    /// log det K̃, or −∞ when the matrix is numerically singular.
    pub fn log_det(&self) -> f64 {
        match Cholesky::new(self.entries.clone()) {
            Some(chol) => {
                let l = chol.l_dirty();
                let ld: f64 = (0..self.entries.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum();
                if ld.is_nan() || ld < DET_FLOOR.ln() {
                    f64::NEG_INFINITY
                } else {
                    ld
                }
            }
            None => f64::NEG_INFINITY,
        }
    }

    pub fn det(&self) -> f64 {
        self.log_det().exp()
    }
}

pub fn kernel_matrix(a: &TransitionMatrix, rho: f64) -> Result<KernelMatrix> {
    KernelMatrix::from_rows(a.matrix(), rho)
}

/// log det K̃_A for an arbitrary non-negative matrix (rows need not sum to one).
pub fn log_det_kernel_rows(a: &DMatrix<f64>, rho: f64) -> Result<f64> {
    Ok(KernelMatrix::from_rows(a, rho)?.log_det())
}

pub fn log_det_kernel(a: &TransitionMatrix, rho: f64) -> Result<f64> {
    log_det_kernel_rows(a.matrix(), rho)
}

/// Gradient of log det K̃_A with respect to every entry of A, at ρ = 1/2.
///
/// With s_i = Σ_x A_ix and W = K̃⁻¹,
/// `G[a][b] = Σ_{n≠a} W_an ( √(A_nb / A_ab) / √(s_a s_n) − K̃_an / s_a )`.
/// The second term is constant along each row and vanishes under the
/// simplex projection; it is kept so that G is the exact gradient of the
/// normalized objective also off the simplex.
pub fn log_det_gradient(a: &DMatrix<f64>, rho: f64) -> Result<DMatrix<f64>> {
    if (rho - DEFAULT_RHO).abs() > 0.0 {
        return Err(DhmmError::invalid(format!(
            "log-det gradient is only available for rho = 0.5, got {rho}"
        )));
    }
    let k = a.nrows();
    if a.ncols() != k {
        return Err(DhmmError::invalid("transition matrix must be square"));
    }
    if let Some(v) = a.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(DhmmError::invalid(format!(
            "log-det gradient needs strictly positive entries, found {v}"
        )));
    }
    let km = KernelMatrix::from_rows(a, rho)?;
    let chol = Cholesky::new(km.entries.clone())
        .ok_or_else(|| DhmmError::Singular("kernel matrix is not positive definite".into()))?;
    if km.log_det() == f64::NEG_INFINITY {
        return Err(DhmmError::Singular("kernel determinant below floor".into()));
    }
    let w = chol.inverse();
    let sqrt_a = a.map(f64::sqrt);
    let s: Vec<f64> = (0..k).map(|i| a.row(i).sum()).collect();

    let mut grad = DMatrix::zeros(k, k);
    for r in 0..k {
        let row_const: f64 = (0..k)
            .filter(|&n| n != r)
            .map(|n| w[(r, n)] * km.entries[(r, n)])
            .sum::<f64>()
            / s[r];
        for b in 0..k {
            let mut g = 0.0;
            for n in 0..k {
                if n != r {
                    g += w[(r, n)] * sqrt_a[(n, b)] / (s[r] * s[n]).sqrt();
                }
            }
            grad[(r, b)] = g / sqrt_a[(r, b)] - row_const;
        }
    }
    Ok(grad)
}

/// −ln Σ_x √(p_x q_x); +∞ for disjoint supports.
pub fn bhattacharyya_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    check_pair(p, q)?;
    if p == q {
        return Ok(0.0);
    }
    let bc: f64 = p.iter().zip(q).map(|(&a, &b)| (a * b).sqrt()).sum();
    if bc <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((-bc.ln()).max(0.0))
}

/// Averaged pairwise Bhattacharyya distance between transition rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diversity {
    /// Mean over all unordered row pairs; +∞ if any pair has disjoint support.
    pub value: f64,
    pub infinite: bool,
}

impl std::fmt::Display for Diversity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.infinite {
            f.write_str("∞")
        } else {
            write!(f, "{}", self.value)
        }
    }
}

pub fn mean_pairwise_diversity(a: &TransitionMatrix) -> Result<Diversity> {
    let k = a.k();
    if k < 2 {
        return Err(DhmmError::invalid("diversity needs at least two rows"));
    }
    let rows = a.rows();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..k {
        for j in (i + 1)..k {
            total += bhattacharyya_distance(&rows[i], &rows[j])?;
            pairs += 1;
        }
    }
    let value = total / pairs as f64;
    Ok(Diversity {
        value,
        infinite: value.is_infinite(),
    })
}

//! Constructive mixture-of-logits decomposition of an arbitrary matrix.
//!
//! Any `n x m` matrix `A` is written as `pi o B1 + (1 - pi) o B2` with
//! `rank(B1), rank(B2) <= d` and `pi` in `[0, 1]` elementwise:
//!
//! - if `rank(A) <= d`, `B1 = A` and `pi = 1`;
//! - otherwise take the rank-`d` truncation `T` of the SVD, set
//!   `lambda_ij = A_ij / T_ij`, `B1 = lambda_min * T`, `B2 = lambda_max * T`
//!   and `pi_ij = (lambda_max - lambda_ij) / (lambda_max - lambda_min)`.
//!
//! Entries where `T_ij` vanishes cannot be reproduced by any multiple of
//! `T_ij`; they are listed in `degenerate_entries` instead of being claimed.

use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{MolError, Result};
use crate::gating::{GateTable, GatingFunction};
use crate::index::ItemIndex;
use crate::query::QueryEmbeddings;

/// Singular values at or below this fraction of the largest one do not
/// count towards the numerical rank.
pub const RANK_RTOL: f64 = 1e-10;
/// `|T_ij|` below this fraction of `max |T|` marks a degenerate entry.
pub const DEGENERACY_RTOL: f64 = 1e-12;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(MolError::argument(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(MolError::argument("matrix rows have different lengths"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_nalgebra(&self.to_nalgebra().transpose())
    }
}

/// Singular values in descending order.
pub fn singular_values(m: &DenseMatrix) -> Vec<f64> {
    if m.rows == 0 || m.cols == 0 {
        return Vec::new();
    }
    SVD::new(m.to_nalgebra(), false, false).singular_values.iter().copied().collect()
}

/// Count of singular values above `rtol * sigma_max`.
pub fn numerical_rank(m: &DenseMatrix, rtol: f64) -> usize {
    let s = singular_values(m);
    let max = s.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return 0;
    }
    s.iter().filter(|v| **v > rtol * max).count()
}

/// Certificate expressing a matrix as a two-component mixture of logits.
///
/// Both low-rank parts share the factorization `left x right`:
/// `B1 = lambda_min * left x right`, `B2 = lambda_max * left x right`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MolDecomposition {
    pub d: usize,
    pub rows: usize,
    pub cols: usize,
    /// The factorization was computed on the transpose (input had more rows
    /// than columns); all stored fields are in the input orientation.
    pub transposed: bool,
    /// Input rank was already `<= d`; `pi` is identically one.
    pub low_rank: bool,
    pub numerical_rank: usize,
    /// `[rows][d]`
    pub left: Vec<f64>,
    /// `[d][cols]`
    pub right: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `[rows][cols]`, weight of `B1`.
    pub pi: Vec<f64>,
    pub degenerate_entries: Vec<(usize, usize)>,
}

/// Reconstruction accuracy against the input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReconstructionReport {
    pub max_abs_error: f64,
    /// Over non-degenerate, non-zero entries.
    pub max_rel_error: f64,
    pub checked_entries: usize,
    pub degenerate_entries: usize,
}

pub fn decompose(matrix: &DenseMatrix, d: usize, epsilon: f64) -> Result<MolDecomposition> {
    let (n, m) = (matrix.rows, matrix.cols);
    if n == 0 || m == 0 {
        return Err(MolError::argument("matrix must be non-empty"));
    }
    if d == 0 || d > n.min(m) {
        return Err(MolError::argument(format!("rank d={d} must be in 1..={}", n.min(m))));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(MolError::argument(format!("epsilon must be positive, got {epsilon}")));
    }
    if matrix.data.iter().any(|v| !v.is_finite()) {
        return Err(MolError::argument("matrix has non-finite entries"));
    }

    let transposed = n > m;
    let work = if transposed { matrix.transpose() } else { matrix.clone() };
    let (r, c) = (work.rows, work.cols);

    let svd = SVD::new(work.to_nalgebra(), true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let rank = if sigma_max > 0.0 {
        sigma.iter().filter(|s| **s > RANK_RTOL * sigma_max).count()
    } else {
        0
    };

    // U' = U * Sigma, truncated to d columns; V truncated to d rows
    let mut u_prime = vec![0.0; r * d];
    for i in 0..r {
        for k in 0..d {
            u_prime[i * d + k] = u[(i, k)] * sigma[k];
        }
    }
    let mut v = vec![0.0; d * c];
    for k in 0..d {
        for j in 0..c {
            v[k * c + j] = v_t[(k, j)];
        }
    }

    let mut truncated = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            truncated[i * c + j] = (0..d).map(|k| u_prime[i * d + k] * v[k * c + j]).sum();
        }
    }

    let low_rank = rank <= d;
    let mut lambda = vec![1.0; r * c];
    let mut degenerate = Vec::new();
    if !low_rank {
        let t_max = truncated.iter().map(|t| t.abs()).fold(0.0, f64::max);
        let threshold = DEGENERACY_RTOL * t_max;
        for i in 0..r {
            for j in 0..c {
                let t = truncated[i * c + j];
                let a = work.get(i, j);
                lambda[i * c + j] = if t.abs() >= threshold && t != 0.0 {
                    a / t
                } else {
                    degenerate.push((i, j));
                    1.0 + (a - t) / epsilon
                };
            }
        }
    }
    let lambda_min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let lambda_max = lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = lambda_max - lambda_min;
    let pi_work: Vec<f64> = lambda
        .iter()
        .map(|l| if spread > 0.0 { ((lambda_max - l) / spread).clamp(0.0, 1.0) } else { 1.0 })
        .collect();

    // back to the input orientation: A = left x right
    let (left, right, pi, degenerate_entries) = if transposed {
        let mut left = vec![0.0; n * d];
        for i in 0..n {
            for k in 0..d {
                left[i * d + k] = v[k * c + i];
            }
        }
        let mut right = vec![0.0; d * m];
        for k in 0..d {
            for j in 0..m {
                right[k * m + j] = u_prime[j * d + k];
            }
        }
        let mut pi = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                pi[i * m + j] = pi_work[j * c + i];
            }
        }
        let deg = degenerate.into_iter().map(|(i, j)| (j, i)).collect();
        (left, right, pi, deg)
    } else {
        (u_prime, v, pi_work, degenerate)
    };

    Ok(MolDecomposition {
        d,
        rows: n,
        cols: m,
        transposed,
        low_rank,
        numerical_rank: rank,
        left,
        right,
        lambda_min,
        lambda_max,
        pi,
        degenerate_entries,
    })
}

impl MolDecomposition {
    fn scaled_left(&self, lambda: f64) -> Vec<f64> {
        self.left.iter().map(|v| v * lambda).collect()
    }

    /// Left factor of `B1`, `[rows][d]`.
    pub fn left1(&self) -> Vec<f64> {
        self.scaled_left(self.lambda_min)
    }

    /// Left factor of `B2`, `[rows][d]`.
    pub fn left2(&self) -> Vec<f64> {
        self.scaled_left(self.lambda_max)
    }

    fn product(&self, left: &[f64]) -> DenseMatrix {
        let (n, m, d) = (self.rows, self.cols, self.d);
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                data[i * m + j] = (0..d).map(|k| left[i * d + k] * self.right[k * m + j]).sum();
            }
        }
        DenseMatrix { rows: n, cols: m, data }
    }

    pub fn b1(&self) -> DenseMatrix {
        self.product(&self.left1())
    }

    pub fn b2(&self) -> DenseMatrix {
        self.product(&self.left2())
    }

    /// `pi o B1 + (1 - pi) o B2`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let (b1, b2) = (self.b1(), self.b2());
        let data = b1
            .data
            .iter()
            .zip(&b2.data)
            .zip(&self.pi)
            .map(|((x, y), p)| p * x + (1.0 - p) * y)
            .collect();
        DenseMatrix { data, ..b1 }
    }

    pub fn is_degenerate(&self, i: usize, j: usize) -> bool {
        self.degenerate_entries.contains(&(i, j))
    }

    /// Compares `values` (`[rows][cols]`, e.g. a reconstruction or a score
    /// matrix) against the decomposed input.
    pub fn error_report(&self, input: &DenseMatrix, values: &[f64]) -> ReconstructionReport {
        let mut report = ReconstructionReport {
            max_abs_error: 0.0,
            max_rel_error: 0.0,
            checked_entries: 0,
            degenerate_entries: self.degenerate_entries.len(),
        };
        let mut degenerate = vec![false; self.rows * self.cols];
        for &(i, j) in &self.degenerate_entries {
            degenerate[i * self.cols + j] = true;
        }
        for (idx, (a, v)) in input.data.iter().zip(values).enumerate() {
            if degenerate[idx] {
                continue;
            }
            let err = (a - v).abs();
            report.max_abs_error = report.max_abs_error.max(err);
            if *a != 0.0 {
                report.max_rel_error = report.max_rel_error.max(err / a.abs());
            }
            report.checked_entries += 1;
        }
        report
    }
}

/// A runnable two-component MoL instance reproducing a decomposition.
pub struct MolInstance {
    pub index: ItemIndex,
    pub queries: Vec<QueryEmbeddings>,
    pub gate: GatingFunction,
}

/// Re-emits `dec` as `p_q = 1`, `p_x = 2`, `dim = d` embeddings: query `i`
/// is row `i` of the left factor, item `j` carries `lambda_min * right[:, j]`
/// and `lambda_max * right[:, j]`, and the table gate holds `(pi, 1 - pi)`.
pub fn to_mol_instance(dec: &MolDecomposition) -> Result<MolInstance> {
    let (n, m, d) = (dec.rows, dec.cols, dec.d);
    let mut rows = Vec::with_capacity(m * 2 * d);
    for j in 0..m {
        for lambda in [dec.lambda_min, dec.lambda_max] {
            rows.extend((0..d).map(|k| lambda * dec.right[k * m + j]));
        }
    }
    let index = ItemIndex::from_rows(2, d, false, (0..m as u64).collect(), &rows)?;
    let queries = (0..n)
        .map(|i| QueryEmbeddings::new(i, 1, d, dec.left[i * d..][..d].to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let mut weights = Vec::with_capacity(n * m * 2);
    for p in &dec.pi {
        weights.extend_from_slice(&[*p, 1.0 - p]);
    }
    let gate = GatingFunction::Table(GateTable::new(n, m, 2, weights)?);
    Ok(MolInstance { index, queries, gate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::mol_score_batch;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DenseMatrix {
        DenseMatrix::new(n, m, (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct assembly from the certificate fields, independent of
    /// `reconstruct`.
    fn assemble(dec: &MolDecomposition) -> Vec<f64> {
        let mut out = vec![0.0; dec.rows * dec.cols];
        for i in 0..dec.rows {
            for j in 0..dec.cols {
                let mut t = 0.0;
                for k in 0..dec.d {
                    t += dec.left[i * dec.d + k] * dec.right[k * dec.cols + j];
                }
                let p = dec.pi[i * dec.cols + j];
                out[i * dec.cols + j] = p * dec.lambda_min * t + (1.0 - p) * dec.lambda_max * t;
            }
        }
        out
    }

    #[test]
    fn rank_one_takes_low_rank_branch() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let dec = decompose(&a, 2, 1e-9).unwrap();
        assert!(dec.low_rank);
        assert_eq!(dec.numerical_rank, 1);
        assert!(dec.pi.iter().all(|p| *p == 1.0));
        let rep = dec.error_report(&a, &assemble(&dec));
        assert!(rep.max_rel_error < 1e-12, "{rep:?}");
    }

    #[test]
    fn scaled_low_rank_has_constant_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (n, m, d) = (5, 7, 2);
        let l: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r: Vec<f64> = (0..d * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                data[i * m + j] = 3.5 * (0..d).map(|k| l[i * d + k] * r[k * m + j]).sum::<f64>();
            }
        }
        let a = DenseMatrix::new(n, m, data).unwrap();
        let dec = decompose(&a, d, 1e-9).unwrap();
        assert_eq!(dec.lambda_min, dec.lambda_max);
        assert!(dec.pi.iter().all(|p| *p == 1.0));
        assert!(dec.error_report(&a, &assemble(&dec)).max_rel_error < 1e-9);
    }

    #[test]
    fn random_full_rank_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(&mut rng, 6, 9);
        let dec = decompose(&a, 2, 1e-9).unwrap();
        assert!(!dec.low_rank);
        assert!(dec.degenerate_entries.is_empty());
        assert!(dec.pi.iter().all(|p| (0.0..=1.0).contains(p)));
        let rep = dec.error_report(&a, &assemble(&dec));
        assert!(rep.max_rel_error <= 1e-6, "{rep:?}");
        assert_eq!(rep.checked_entries, 54);
        // reconstruct() agrees with the independent assembly
        let rec = dec.reconstruct();
        assert!(dec.error_report(&a, &rec.data).max_rel_error <= 1e-6);
        // both parts have rank <= d
        for b in [dec.b1(), dec.b2()] {
            let s = singular_values(&b);
            assert!(s[2..].iter().all(|v| *v <= 1e-8 * s[0]));
        }
    }

    #[test]
    fn tall_input_is_transposed_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 9, 4);
        let dec = decompose(&a, 1, 1e-9).unwrap();
        assert!(dec.transposed);
        assert_eq!((dec.rows, dec.cols), (9, 4));
        assert!(dec.error_report(&a, &assemble(&dec)).max_rel_error <= 1e-6);
    }

    #[test]
    fn instance_scores_reproduce_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (n, m, d) in [(6, 9, 2), (9, 6, 2), (4, 4, 4), (3, 8, 1)] {
            let a = random_matrix(&mut rng, n, m);
            let dec = decompose(&a, d, 1e-9).unwrap();
            let inst = to_mol_instance(&dec).unwrap();
            let rows: Vec<usize> = (0..m).collect();
            let mut scores = Vec::with_capacity(n * m);
            for q in &inst.queries {
                scores.extend(mol_score_batch(q, &inst.index, &rows, &inst.gate).unwrap());
            }
            let rep = dec.error_report(&a, &scores);
            assert!(rep.max_rel_error <= 1e-6, "{n}x{m} d={d}: {rep:?}");
        }
    }

    #[test]
    fn degenerate_entries_are_reported() {
        // rank-1 truncation of diag(2, 1) is diag(2, 0): the second
        // diagonal entry has T = 0
        let a = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let dec = decompose(&a, 1, 0.5).unwrap();
        assert!(dec.degenerate_entries.contains(&(1, 1)));
        assert!(dec.pi.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn argument_errors() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert!(decompose(&a, 3, 1e-9).is_err());
        assert!(decompose(&a, 0, 1e-9).is_err());
        assert!(decompose(&a, 1, 0.0).is_err());
        let bad = DenseMatrix::from_rows(&[vec![f64::INFINITY]]).unwrap();
        assert!(decompose(&bad, 1, 1e-9).is_err());
        assert!(DenseMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}

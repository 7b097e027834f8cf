//! Small linear-algebra toolkit on top of nalgebra.
//!
//! Problem sizes here are desk-scale (hundreds to a few thousand unknowns),
//! so the strategy is deliberately simple and deterministic:
//!
//! - sparse matrices are assembled as sorted CSR from triplets (duplicate
//!   entries summed in a fixed order, so assembly is bit-reproducible);
//! - linear solves convert to dense and use partially pivoted LU;
//! - generalized symmetric eigenproblems S v = μ A v (A symmetric positive
//!   definite) reduce via the Cholesky factor of A to an ordinary symmetric
//!   problem for L⁻¹ S L⁻ᵀ.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Result, SimError};

/// Compressed sparse row matrix (square).
#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Build from (row, col, value) triplets, summing duplicates. Triplets
    /// are sorted (row, col) before accumulation, so the result does not
    /// depend on insertion order.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Csr {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_counts = vec![0usize; n];
        let mut col_idx: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            assert!(r < n && c < n, "triplet ({r},{c}) outside {n}x{n}");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                vals.push(v);
                row_counts[r] += 1;
                last = Some((r, c));
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + row_counts[i];
        }
        Csr { n, row_ptr, col_idx, vals }
    }

    /// y = A x.
    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = DVector::zeros(self.n);
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
        y
    }

    /// xᵀ A y (energy product).
    pub fn bilinear(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let ay = self.matvec(y);
        x.dot(&ay)
    }

    /// Row sums, i.e. A·1. For a mass matrix this is the lumped mass vector.
    pub fn row_sums(&self) -> DVector<f64> {
        let mut s = DVector::zeros(self.n);
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s[r] += self.vals[k];
            }
        }
        s
    }

    /// Dense copy.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        self.add_to_dense(&mut m, 0, 0, 1.0);
        m
    }

    /// target[row_off.., col_off..] += scale · A. Used to place blocks of a
    /// coupled system into one dense matrix.
    pub fn add_to_dense(&self, target: &mut DMatrix<f64>, row_off: usize, col_off: usize, scale: f64) {
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                target[(row_off + r, col_off + self.col_idx[k])] += scale * self.vals[k];
            }
        }
    }

    /// Max |A − Aᵀ| entry, for symmetry checks in tests.
    pub fn asymmetry(&self) -> f64 {
        let d = self.to_dense();
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                worst = worst.max((d[(i, j)] - d[(j, i)]).abs());
            }
        }
        worst
    }
}

/// Solve A x = b by dense LU with partial pivoting.
pub fn solve_dense(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    let lu = a.lu();
    lu.solve(b).ok_or_else(|| {
        SimError::SingularSystem(format!("dense LU solve failed for {n}x{n} system"))
    })
}

/// All eigenvalues of S v = μ A v with S symmetric and A symmetric positive
/// definite, in ascending order. Reduction: A = L Lᵀ, C = L⁻¹ S L⁻ᵀ, then a
/// dense symmetric eigensolve on C.
pub fn generalized_symmetric_eigs(s: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = s.nrows();
    if s.ncols() != n || a.nrows() != n || a.ncols() != n {
        return Err(SimError::EigenSolveFailure("shape mismatch".into()));
    }
    let chol = Cholesky::new(a.clone()).ok_or_else(|| {
        SimError::EigenSolveFailure("matrix on the right is not positive definite".into())
    })?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(s)
        .ok_or_else(|| SimError::EigenSolveFailure("singular Cholesky factor".into()))?;
    let z = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| SimError::EigenSolveFailure("singular Cholesky factor".into()))?;
    let mut c = z.transpose();
    // Symmetrize against roundoff before the symmetric eigensolver.
    let ct = c.transpose();
    c = 0.5 * (&c + &ct);
    let eig = c.symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(SimError::EigenSolveFailure("non-finite eigenvalue".into()));
    }
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn csr_sums_duplicates_independent_of_order() {
        let t1 = vec![(0, 0, 1.0), (1, 1, 2.0), (0, 0, 0.5), (0, 1, -1.0)];
        let t2 = vec![(0, 1, -1.0), (0, 0, 0.5), (1, 1, 2.0), (0, 0, 1.0)];
        let a1 = Csr::from_triplets(2, &t1);
        let a2 = Csr::from_triplets(2, &t2);
        assert_eq!(a1.to_dense(), a2.to_dense());
        assert_abs_diff_eq!(a1.to_dense()[(0, 0)], 1.5);
        assert_abs_diff_eq!(a1.to_dense()[(0, 1)], -1.0);
        assert_abs_diff_eq!(a1.to_dense()[(1, 1)], 2.0);
        assert_abs_diff_eq!(a1.to_dense()[(1, 0)], 0.0);
    }

    #[test]
    fn csr_matvec_and_row_sums_match_dense() {
        let a = Csr::from_triplets(
            3,
            &[(0, 0, 2.0), (0, 2, 1.0), (1, 1, 3.0), (2, 0, -1.0), (2, 2, 4.0)],
        );
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let y = a.matvec(&x);
        let yd = a.to_dense() * &x;
        assert_abs_diff_eq!((y - yd).norm(), 0.0, epsilon = 1e-15);
        let rs = a.row_sums();
        assert_abs_diff_eq!(rs[0], 3.0);
        assert_abs_diff_eq!(rs[1], 3.0);
        assert_abs_diff_eq!(rs[2], 3.0);
        let ones = DVector::from_element(3, 1.0);
        assert_abs_diff_eq!(a.bilinear(&ones, &x), (a.to_dense() * &x).sum(), epsilon = 1e-14);
    }

    #[test]
    fn dense_solve_known_system() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![5.0, 10.0]);
        let x = solve_dense(a, &b).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x[1], 3.0, epsilon = 1e-14);
        // Singular system errors out.
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(solve_dense(s, &b).is_err());
    }

    #[test]
    fn generalized_eigs_diagonal_oracle() {
        // S = diag(1, 2), A = diag(1, 4): eigenvalues of S v = μ A v are
        // {1, 1/2}; ascending order {0.5, 1}.
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let eigs = generalized_symmetric_eigs(&s, &a).unwrap();
        assert_abs_diff_eq!(eigs[0], 0.5, epsilon = 1e-13);
        assert_abs_diff_eq!(eigs[1], 1.0, epsilon = 1e-13);
        // Non-SPD right-hand matrix is rejected.
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(generalized_symmetric_eigs(&s, &bad).is_err());
    }

    #[test]
    fn generalized_eigs_nondiagonal_oracle() {
        // S = [[2,1],[1,2]] has eigenvalues {1,3}; with A = I the
        // generalized problem reduces to the ordinary one.
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let a = DMatrix::identity(2, 2);
        let eigs = generalized_symmetric_eigs(&s, &a).unwrap();
        assert_abs_diff_eq!(eigs[0], 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(eigs[1], 3.0, epsilon = 1e-13);
    }
}

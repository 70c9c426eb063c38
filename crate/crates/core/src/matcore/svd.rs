
use super::{dot, vec_norm, DenseMatrix};
use crate::error::{Error, Result};

/// Max-norm tolerance on `Q^T Q - I` for a column-orthonormal factor.
pub const ORTHO_TOL: f64 = 1e-10;

/// Singular values at or below this fraction of the largest are zero.
pub const NUMERICAL_RANK_TOL: f64 = 1e-12;

/// Matrix with orthonormal columns (possibly none).
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoFactor(DenseMatrix);

impl OrthoFactor {
    /// Validates `Q^T Q = I` within [`ORTHO_TOL`].
    pub fn new(q: DenseMatrix) -> Result<Self> {
        if q.cols() > q.rows() {
            return Err(Error::shape(format!(
                "orthonormal factor cannot have {} columns in dimension {}",
                q.cols(),
                q.rows()
            )));
        }
        let dev = q.t_matmul(&q).max_abs_diff(&DenseMatrix::identity(q.cols()));
        if dev > ORTHO_TOL {
            return Err(Error::invalid(format!(
                "columns are not orthonormal (max |Q^T Q - I| = {dev:.3e})"
            )));
        }
        Ok(Self(q))
    }

    /// Factor with `rows` rows and no columns.
    pub fn empty(rows: usize) -> Self {
        Self(DenseMatrix::zeros(rows, 0))
    }

    /// Trusted constructor for factors produced by this crate's own
    /// orthogonalization routines.
    pub(crate) fn from_trusted(q: DenseMatrix) -> Self {
        debug_assert!(q.t_matmul(&q).max_abs_diff(&DenseMatrix::identity(q.cols())) <= 1e-8);
        Self(q)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    /// First `k` columns.
    pub fn leading(&self, k: usize) -> OrthoFactor {
        Self(self.0.columns(0, k))
    }

    /// Orthogonal projector `Q Q^T` applied on the left: `Q (Q^T m)`.
    pub fn project(&self, m: &DenseMatrix) -> DenseMatrix {
        self.0.matmul(&self.0.t_matmul(m))
    }
}

/// Thin singular value decomposition `m = u diag(s) v^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTriple {
    pub u: OrthoFactor,
    pub singular_values: Vec<f64>,
    pub v: OrthoFactor,
}

impl SvdTriple {
    pub fn rank(&self) -> usize {
        self.singular_values.iter().filter(|&&s| s > 0.0).count()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let u = self.u.matrix();
        let mut us = u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.singular_values.iter().enumerate() {
                us.set(i, j, u.get(i, j) * s);
            }
        }
        us.matmul_t(self.v.matrix())
    }

    /// Leading `k` triples.
    pub fn truncate(&self, k: usize) -> SvdTriple {
        SvdTriple {
            u: self.u.leading(k),
            singular_values: self.singular_values[..k].to_vec(),
            v: self.v.leading(k),
        }
    }
}

/// Flips `u` (and `v`) so that the largest-magnitude entry of `u` is positive.
/// Ties go to the lowest index.
fn fix_sign(u: &mut [f64], v: Option<&mut [f64]>) {
    let mut best = 0;
    for (i, x) in u.iter().enumerate() {
        if x.abs() > u[best].abs() {
            best = i;
        }
    }
    if u.get(best).is_some_and(|&x| x < 0.0) {
        u.iter_mut().for_each(|x| *x = -*x);
        if let Some(v) = v {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Removes from `x` its components along every vector in `basis`, twice
/// (classical Gram-Schmidt with one reorthogonalization pass).
fn orthogonalize_against(x: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(x, b);
            for (xi, bi) in x.iter_mut().zip(b) {
                *xi -= c * bi;
            }
        }
    }
}

/// Appends `needed` orthonormal columns orthogonal to `existing`, built by
/// Gram-Schmidt from the standard basis vectors in index order.
fn completion_vectors(n: usize, existing: &[Vec<f64>], needed: usize) -> Result<Vec<Vec<f64>>> {
    let mut basis: Vec<Vec<f64>> = existing.to_vec();
    let mut out = Vec::with_capacity(needed);
    for i in 0..n {
        if out.len() == needed {
            break;
        }
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        orthogonalize_against(&mut e, &basis);
        let nrm = vec_norm(&e);
        // A standard basis vector that is (numerically) inside the span
        // is skipped; some later one is guaranteed to stick out.
        if nrm > 1e-6 {
            e.iter_mut().for_each(|x| *x /= nrm);
            fix_sign(&mut e, None);
            basis.push(e.clone());
            out.push(e);
        }
    }
    if out.len() < needed {
        return Err(Error::shape(format!(
            "cannot complete {} orthonormal columns to {} in dimension {n}",
            existing.len(),
            existing.len() + needed
        )));
    }
    Ok(out)
}

/// Returns `needed` unit columns orthogonal to the columns of `existing`
/// (which must be orthonormal), deterministic in `existing`.
pub fn complete_orthonormal(existing: &DenseMatrix, needed: usize) -> Result<DenseMatrix> {
    let cols: Vec<Vec<f64>> = (0..existing.cols()).map(|j| existing.column(j)).collect();
    let extra = completion_vectors(existing.rows(), &cols, needed)?;
    Ok(DenseMatrix::from_columns(existing.rows(), &extra))
}

/// Orthonormalizes the columns of `m` by modified Gram-Schmidt with
/// reorthogonalization. Columns that are numerically dependent on earlier
/// ones are replaced by standard-basis completions; every output column
/// follows the largest-entry-positive sign convention.
pub fn orthonormalize_columns(m: &DenseMatrix) -> Result<OrthoFactor> {
    let n = m.rows();
    if m.cols() > n {
        return Err(Error::shape(format!(
            "cannot orthonormalize {} columns in dimension {n}",
            m.cols()
        )));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m.cols());
    let mut deficient = Vec::new();
    for j in 0..m.cols() {
        let mut x = m.column(j);
        let scale = vec_norm(&x);
        orthogonalize_against(&mut x, &basis);
        let nrm = vec_norm(&x);
        if scale > 0.0 && nrm > 1e-10 * scale {
            x.iter_mut().for_each(|v| *v /= nrm);
            fix_sign(&mut x, None);
            basis.push(x);
        } else {
            deficient.push(j);
            basis.push(Vec::new());
        }
    }
    if !deficient.is_empty() {
        let good: Vec<Vec<f64>> = basis.iter().filter(|b| !b.is_empty()).cloned().collect();
        let extra = completion_vectors(n, &good, deficient.len())?;
        for (j, e) in deficient.into_iter().zip(extra) {
            basis[j] = e;
        }
    }
    Ok(OrthoFactor::from_trusted(DenseMatrix::from_columns(n, &basis)))
}

/// Thin SVD with `min(rows, cols)` triples in non-increasing order.
///
/// Singular values at or below `NUMERICAL_RANK_TOL * s_max` are set to zero
/// and their vectors replaced by deterministic Gram-Schmidt completions.
/// Each remaining left vector has its largest-magnitude entry positive.
fn to_faer(m: &DenseMatrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j))
}

pub fn full_svd(m: &DenseMatrix) -> Result<SvdTriple> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok(SvdTriple {
            u: OrthoFactor::empty(rows),
            singular_values: Vec::new(),
            v: OrthoFactor::empty(cols),
        });
    }
    let svd = to_faer(m)
        .thin_svd()
        .map_err(|_| Error::NoConvergence("singular value decomposition"))?;
    let (u, v) = (svd.U(), svd.V());
    let s: Vec<f64> = (0..k).map(|i| svd.S()[i]).collect();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let s_max = s[order[0]];
    let cutoff = NUMERICAL_RANK_TOL * s_max;

    let mut left = Vec::with_capacity(k);
    let mut right = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for &idx in &order {
        if s[idx] <= cutoff || s[idx] <= 0.0 {
            break;
        }
        let mut uc: Vec<f64> = (0..rows).map(|i| u[(i, idx)]).collect();
        let mut vc: Vec<f64> = (0..cols).map(|i| v[(i, idx)]).collect();
        fix_sign(&mut uc, Some(&mut vc));
        left.push(uc);
        right.push(vc);
        values.push(s[idx]);
    }
    let rank = values.len();
    if rank < k {
        left.extend(completion_vectors(rows, &left, k - rank)?);
        right.extend(completion_vectors(cols, &right, k - rank)?);
        values.resize(k, 0.0);
    }
    Ok(SvdTriple {
        u: OrthoFactor::from_trusted(DenseMatrix::from_columns(rows, &left)),
        singular_values: values,
        v: OrthoFactor::from_trusted(DenseMatrix::from_columns(cols, &right)),
    })
}

/// Leading `k` triples of [`full_svd`].
pub fn truncated_svd(m: &DenseMatrix, k: usize) -> Result<SvdTriple> {
    let limit = m.rows().min(m.cols());
    if k > limit {
        return Err(Error::shape(format!(
            "truncation rank {k} exceeds min dimension {limit}"
        )));
    }
    if k == 0 {
        return Ok(SvdTriple {
            u: OrthoFactor::empty(m.rows()),
            singular_values: Vec::new(),
            v: OrthoFactor::empty(m.cols()),
        });
    }
    Ok(full_svd(m)?.truncate(k))
}

/// Eigendecomposition of a symmetric matrix, eigenvalues non-increasing.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, matching `values`.
    pub vectors: DenseMatrix,
}

pub fn sym_eigen(m: &DenseMatrix) -> Result<SymEigen> {
    let n = m.rows();
    if n != m.cols() {
        return Err(Error::shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            n,
            m.cols()
        )));
    }
    if n == 0 {
        return Ok(SymEigen {
            values: Vec::new(),
            vectors: DenseMatrix::zeros(0, 0),
        });
    }
    let eig = to_faer(m)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::NoConvergence("symmetric eigendecomposition"))?;
    let values: Vec<f64> = (0..n).map(|i| eig.S()[i]).collect();
    let vectors = eig.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let cols: Vec<Vec<f64>> = order
        .iter()
        .map(|&j| {
            let mut c: Vec<f64> = (0..n).map(|i| vectors[(i, j)]).collect();
            fix_sign(&mut c, None);
            c
        })
        .collect();
    Ok(SymEigen {
        values: order.iter().map(|&j| values[j]).collect(),
        vectors: DenseMatrix::from_columns(n, &cols),
    })
}

/// `||U U^T - W W^T||_F / sqrt(2)`: the Euclidean norm of the sines of the
/// principal angles between two equal-dimension subspaces.
pub fn sin_theta_distance(u_true: &OrthoFactor, u_est: &OrthoFactor) -> Result<f64> {
    if u_true.rows() != u_est.rows() || u_true.cols() != u_est.cols() {
        return Err(Error::shape(format!(
            "subspace distance needs equal shapes, got {}x{} and {}x{}",
            u_true.rows(),
            u_true.cols(),
            u_est.rows(),
            u_est.cols()
        )));
    }
    if u_true.cols() == 0 {
        return Err(Error::invalid("subspace distance needs at least one column"));
    }
    let a = u_true.matrix();
    let b = u_est.matrix();
    let diff = &a.matmul_t(a) - &b.matmul_t(b);
    Ok(super::frob_norm(&diff) / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::frob_norm;

    fn rel_reconstruction_error(m: &DenseMatrix, svd: &SvdTriple) -> f64 {
        frob_norm(&(m - &svd.reconstruct())) / frob_norm(m).max(1e-300)
    }

    #[test]
    fn diag_svd() {
        let svd = full_svd(&DenseMatrix::from_diag(&[3.0, 1.0])).unwrap();
        assert_eq!(svd.singular_values, vec![3.0, 1.0]);
        assert!(svd.u.matrix().max_abs_diff(&DenseMatrix::identity(2)) < 1e-15);
        assert!(svd.v.matrix().max_abs_diff(&DenseMatrix::identity(2)) < 1e-15);
    }

    #[test]
    fn rank_one_outer_product() {
        let a = [0.6, 0.8, 0.0];
        let b = [0.0, 1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()];
        let m = DenseMatrix::from_fn(3, 3, |i, j| a[i] * b[j]);
        let svd = full_svd(&m).unwrap();
        assert!((svd.singular_values[0] - 1.0).abs() < 1e-14);
        assert_eq!(&svd.singular_values[1..], &[0.0, 0.0]);
        assert!(OrthoFactor::new(svd.u.matrix().clone()).is_ok());
        assert!(OrthoFactor::new(svd.v.matrix().clone()).is_ok());
    }

    #[test]
    fn random_4x3_reconstruction() {
        let m = DenseMatrix::from_rows(&[
            [0.3, -1.2, 2.5],
            [1.7, 0.4, -0.9],
            [-2.2, 0.8, 0.1],
            [0.05, 1.9, -1.4],
        ])
        .unwrap();
        let svd = full_svd(&m).unwrap();
        assert!(rel_reconstruction_error(&m, &svd) < 1e-8);
        let wide = m.transpose();
        let svd_t = full_svd(&wide).unwrap();
        assert!(rel_reconstruction_error(&wide, &svd_t) < 1e-8);
        for (a, b) in svd.singular_values.iter().zip(&svd_t.singular_values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_convention_largest_entry_positive() {
        let m = DenseMatrix::from_rows(&[[-4.0, 0.0], [1.0, 0.0]]).unwrap();
        let svd = full_svd(&m).unwrap();
        let u0 = svd.u.matrix().column(0);
        assert!(u0[0] > 0.0);
        assert!(rel_reconstruction_error(&m, &svd) < 1e-12);
    }

    #[test]
    fn truncated_examples() {
        let m = DenseMatrix::from_diag(&[3.0, 1.0]);
        let t0 = truncated_svd(&m, 0).unwrap();
        assert_eq!(t0.u.cols(), 0);
        assert_eq!(t0.v.cols(), 0);
        let t1 = truncated_svd(&m, 1).unwrap();
        assert_eq!(t1.singular_values, vec![3.0]);
        assert_eq!(t1.u.matrix().column(0), vec![1.0, 0.0]);
        assert_eq!(t1.v.matrix().column(0), vec![1.0, 0.0]);
        assert!(truncated_svd(&m, 3).is_err());
    }

    #[test]
    fn truncated_rank_two_matches_full() {
        let a = DenseMatrix::from_fn(5, 2, |i, j| ((i + 1) as f64).powi(j as i32 + 1) / 7.0);
        let b = DenseMatrix::from_fn(2, 5, |i, j| ((i * 3 + j) as f64).sin());
        let m = a.matmul(&b);
        let t = truncated_svd(&m, 2).unwrap();
        assert!(rel_reconstruction_error(&m, &t) < 1e-8);
        let full = full_svd(&m).unwrap();
        assert_eq!(t, full.truncate(2));
    }

    #[test]
    fn zero_matrix_completes_with_standard_basis() {
        let t = truncated_svd(&DenseMatrix::zeros(3, 2), 2).unwrap();
        assert_eq!(t.singular_values, vec![0.0, 0.0]);
        assert_eq!(t.u.matrix().column(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(t.u.matrix().column(1), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn sin_theta_examples() {
        let e1 = OrthoFactor::new(DenseMatrix::from_rows(&[[1.0], [0.0]]).unwrap()).unwrap();
        let e2 = OrthoFactor::new(DenseMatrix::from_rows(&[[0.0], [1.0]]).unwrap()).unwrap();
        assert_eq!(sin_theta_distance(&e1, &e1).unwrap(), 0.0);
        assert!((sin_theta_distance(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);

        let u = orthonormalize_columns(
            &DenseMatrix::from_rows(&[[1.0, 0.2], [0.3, 1.0], [0.5, -0.4], [0.1, 0.9]]).unwrap(),
        )
        .unwrap();
        let c = 0.3f64.cos();
        let s = 0.3f64.sin();
        let rot = DenseMatrix::from_rows(&[[c, -s], [s, c]]).unwrap();
        let rotated = OrthoFactor::new(u.matrix().matmul(&rot)).unwrap();
        assert!(sin_theta_distance(&u, &rotated).unwrap() < 1e-14);
    }

    #[test]
    fn completion_is_orthogonal() {
        let u = orthonormalize_columns(
            &DenseMatrix::from_rows(&[[1.0], [1.0], [0.0], [0.0]]).unwrap(),
        )
        .unwrap();
        let extra = complete_orthonormal(u.matrix(), 3).unwrap();
        let all = u.matrix().hcat(&extra);
        assert!(OrthoFactor::new(all).is_ok());
        assert!(complete_orthonormal(u.matrix(), 4).is_err());
    }

    #[test]
    fn sym_eigen_descending() {
        let m = DenseMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = sym_eigen(&m).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }
}

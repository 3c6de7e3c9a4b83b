//! Dense symmetric helpers on top of nalgebra.
//!
//! Every inverse and log-determinant in the crate goes through a Cholesky
//! factorization; nothing here inverts elementwise.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry, the scale used for relative symmetry checks.
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn asymmetry(m: &Matrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(m: &Matrix, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            what: "square matrix",
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    Cholesky::new(symmetrize(m)).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// Inverse of an SPD matrix, symmetrized.
pub fn spd_inverse(m: &Matrix, what: &str) -> Result<Matrix> {
    let chol = cholesky(m, what)?;
    Ok(symmetrize(&chol.inverse()))
}

/// `ln det M` for SPD `M`.
pub fn spd_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    chol.l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
        * 2.0
}

/// Eigenvalues of a symmetric matrix in non-ascending order.
pub fn eigenvalues_desc(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// Extract the sub-matrix `m[rows, cols]`.
pub fn select(m: &Matrix, rows: &[usize], cols: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn select_vec(v: &Vector, idx: &[usize]) -> Vector {
    Vector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// `xᵀ M x`.
pub fn quad_form(m: &Matrix, x: &Vector) -> f64 {
    x.dot(&(m * x))
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
        return Err(Error::Schema(format!(
            "{what}: row {i} has {} entries, expected {m}",
            r.len()
        )));
    }
    Ok(Matrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// Relative Frobenius error `‖a − b‖_F / ‖b‖_F`.
pub fn rel_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Serde adapters so matrices and vectors appear as plain nested arrays.
pub mod serde_matrix {
    use super::{from_rows, to_rows, Matrix};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows, "matrix").map_err(serde::de::Error::custom)
    }
}

pub mod serde_vector {
    use super::Vector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

//! Moment- and canonical-form algebra for multivariate Gaussians.
//!
//! A [`GaussianJoint`] carries a latent/evidence split of its coordinates
//! through a [`Partition`]. The split may be non-contiguous; blocks are read
//! by index selection and the `[Y then Z]` ordering is kept in
//! [`Partition::order`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{
    self, asymmetry, cholesky, eigenvalues_desc, max_abs, quad_form, select, select_vec,
    spd_inverse, spd_log_det, symmetrize, Matrix, Vector,
};

/// Relative symmetry tolerance for covariance input.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Minimum eigenvalue relative to the spectral radius.
pub const PD_TOL: f64 = 1e-12;

/// Latent (`Y`) and evidentiary (`Z`) index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    y_idx: Vec<usize>,
    z_idx: Vec<usize>,
}

impl Partition {
    pub fn new(y_idx: Vec<usize>, z_idx: Vec<usize>) -> Result<Self> {
        if y_idx.is_empty() || z_idx.is_empty() {
            return Err(Error::InvalidPartition(
                "both index sets must be non-empty".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for &i in y_idx.iter().chain(&z_idx) {
            if !seen.insert(i) {
                return Err(Error::InvalidPartition(format!("index {i} appears twice")));
            }
        }
        Ok(Self { y_idx, z_idx })
    }

    /// `Y = 0..ny`, `Z = ny..ny+nz`.
    pub fn contiguous(ny: usize, nz: usize) -> Result<Self> {
        Self::new((0..ny).collect(), (ny..ny + nz).collect())
    }

    pub fn y(&self) -> &[usize] {
        &self.y_idx
    }

    pub fn z(&self) -> &[usize] {
        &self.z_idx
    }

    pub fn ny(&self) -> usize {
        self.y_idx.len()
    }

    pub fn nz(&self) -> usize {
        self.z_idx.len()
    }

    pub fn len(&self) -> usize {
        self.ny() + self.nz()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Canonical `[Y then Z]` ordering as a permutation of `0..n`.
    pub fn order(&self) -> Vec<usize> {
        self.y_idx.iter().chain(&self.z_idx).copied().collect()
    }

    fn covers(&self, n: usize) -> bool {
        self.len() == n && self.y_idx.iter().chain(&self.z_idx).all(|&i| i < n)
    }
}

/// Mean and covariance without a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    #[serde(with = "linalg::serde_vector")]
    pub mean: Vector,
    #[serde(with = "linalg::serde_matrix")]
    pub cov: Matrix,
}

impl Moments {
    pub fn new(mean: Vector, cov: Matrix) -> Self {
        Self { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `P(Y | Z = z)`; its covariance does not depend on `z`.
pub type ConditionalGaussian = Moments;

/// `(Λ, η, ξ)` with `Λ = Σ⁻¹`, `η = Σ⁻¹μ` and `ξ` the log normalizer term.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalForm {
    pub lambda: Matrix,
    pub eta: Vector,
    pub xi: f64,
}

/// Outcome of [`validate`]; never an error by itself.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    /// `max |Σᵢⱼ − Σⱼᵢ| / max |Σᵢⱼ|`.
    pub relative_asymmetry: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub partition_ok: bool,
    pub reasons: Vec<String>,
}

/// Check a candidate `(μ, Σ, partition)` against every joint invariant.
pub fn validate(mean: &Vector, cov: &Matrix, partition: &Partition) -> ValidationReport {
    let mut reasons = Vec::new();
    let n = mean.len();
    let shape_ok = cov.nrows() == n && cov.ncols() == n;
    if !shape_ok {
        reasons.push(format!(
            "shape: mean has {n} entries but cov is {}x{}",
            cov.nrows(),
            cov.ncols()
        ));
    }
    if mean.iter().chain(cov.iter()).any(|x| !x.is_finite()) {
        reasons.push("non-finite entries".into());
    }
    let scale = max_abs(cov);
    let relative_asymmetry = if scale > 0.0 {
        asymmetry(cov) / scale
    } else {
        0.0
    };
    if relative_asymmetry > SYMMETRY_TOL {
        reasons.push(format!("asymmetric (relative defect {relative_asymmetry:e})"));
    }
    let (min_eigenvalue, max_eigenvalue) = if shape_ok && reasons.is_empty() {
        let eig = eigenvalues_desc(cov);
        (
            eig.last().copied().unwrap_or(0.0),
            eig.first().copied().unwrap_or(0.0),
        )
    } else {
        (f64::NAN, f64::NAN)
    };
    let not_pd = min_eigenvalue <= PD_TOL * max_eigenvalue.abs();
    if not_pd || (min_eigenvalue.is_nan() && reasons.is_empty()) {
        reasons.push(format!("not PD (minimum eigenvalue {min_eigenvalue:e})"));
    }
    let partition_ok = partition.covers(n);
    if !partition_ok {
        reasons.push(format!(
            "partition does not cover 0..{n} (|Y| = {}, |Z| = {})",
            partition.ny(),
            partition.nz()
        ));
    }
    ValidationReport {
        ok: reasons.is_empty(),
        relative_asymmetry,
        min_eigenvalue,
        max_eigenvalue,
        partition_ok,
        reasons,
    }
}

/// The decisionmaker's joint model over `(Y, Z)` in moment form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct GaussianJoint {
    mean: Vector,
    cov: Matrix,
    partition: Partition,
}

impl GaussianJoint {
    /// Validating constructor; the stored covariance is symmetrized.
    pub fn new(mean: Vector, cov: Matrix, partition: Partition) -> Result<Self> {
        let report = validate(&mean, &cov, &partition);
        if !report.ok {
            return Err(Error::InvalidModel(report.reasons.join("; ")));
        }
        Ok(Self {
            mean,
            cov: symmetrize(&cov),
            partition,
        })
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn ny(&self) -> usize {
        self.partition.ny()
    }

    pub fn nz(&self) -> usize {
        self.partition.nz()
    }

    pub fn mean_y(&self) -> Vector {
        select_vec(&self.mean, self.partition.y())
    }

    pub fn mean_z(&self) -> Vector {
        select_vec(&self.mean, self.partition.z())
    }

    pub fn cov_block(&self, rows: Block, cols: Block) -> Matrix {
        select(&self.cov, self.block_idx(rows), self.block_idx(cols))
    }

    fn block_idx(&self, b: Block) -> &[usize] {
        match b {
            Block::Y => self.partition.y(),
            Block::Z => self.partition.z(),
        }
    }

    /// Reorder coordinates: new coordinate `i` is old coordinate `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.dim();
        check_dim("permutation length", n, perm.len())?;
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(Error::InvalidParameter("not a permutation".into()));
            }
            inverse[old] = new;
        }
        let mean = select_vec(&self.mean, perm);
        let cov = select(&self.cov, perm, perm);
        let remap = |idx: &[usize]| idx.iter().map(|&i| inverse[i]).collect::<Vec<_>>();
        let partition = Partition::new(remap(self.partition.y()), remap(self.partition.z()))?;
        Self::new(mean, cov, partition)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Y,
    Z,
}

/// On-disk model schema: `{"mean", "cov", "y_idx", "z_idx"}`, row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub y_idx: Vec<usize>,
    pub z_idx: Vec<usize>,
}

impl TryFrom<ModelFile> for GaussianJoint {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let n = f.mean.len();
        if f.cov.len() != n || f.cov.iter().any(|r| r.len() != n) {
            return Err(Error::Schema(format!("cov must be {n}x{n} to match mean")));
        }
        let cov = linalg::from_rows(&f.cov, "cov")?;
        GaussianJoint::new(
            Vector::from_vec(f.mean),
            cov,
            Partition::new(f.y_idx, f.z_idx)?,
        )
    }
}

impl From<GaussianJoint> for ModelFile {
    fn from(j: GaussianJoint) -> Self {
        ModelFile {
            mean: j.mean.as_slice().to_vec(),
            cov: linalg::to_rows(&j.cov),
            y_idx: j.partition.y_idx,
            z_idx: j.partition.z_idx,
        }
    }
}

/// Moment form to canonical form.
pub fn to_canonical(j: &GaussianJoint) -> Result<CanonicalForm> {
    let chol = cholesky(&j.cov, "covariance").map_err(|_| Error::Singular("covariance".into()))?;
    let lambda = symmetrize(&chol.inverse());
    let eta = &lambda * &j.mean;
    let n = j.dim() as f64;
    let xi = -0.5 * j.mean.dot(&eta)
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * spd_log_det(&chol);
    Ok(CanonicalForm { lambda, eta, xi })
}

/// Canonical form back to `(μ, Σ)`.
pub fn to_moment(c: &CanonicalForm) -> Result<Moments> {
    check_dim("eta length", c.lambda.nrows(), c.eta.len())?;
    let chol =
        cholesky(&c.lambda, "precision").map_err(|_| Error::Singular("precision".into()))?;
    let mean = chol.solve(&c.eta);
    let cov = symmetrize(&chol.inverse());
    Ok(Moments { mean, cov })
}

/// `P(Y | Z = z)` via the Schur complement of `Σ_ZZ`.
pub fn condition(j: &GaussianJoint, z: &Vector) -> Result<ConditionalGaussian> {
    check_dim("evidence length", j.nz(), z.len())?;
    let s_zz = j.cov_block(Block::Z, Block::Z);
    let s_yz = j.cov_block(Block::Y, Block::Z);
    let s_yy = j.cov_block(Block::Y, Block::Y);
    let chol = cholesky(&s_zz, "Sigma_ZZ")?;
    let resid = z - j.mean_z();
    let mean = j.mean_y() + &s_yz * chol.solve(&resid);
    let gain_t = chol.solve(&s_yz.transpose());
    let cov = symmetrize(&(s_yy - &s_yz * gain_t));
    Ok(Moments { mean, cov })
}

/// Marginal of the evidence block, `(μ_Z, Σ_ZZ)`.
pub fn marginal_z(j: &GaussianJoint) -> Moments {
    Moments {
        mean: j.mean_z(),
        cov: j.cov_block(Block::Z, Block::Z),
    }
}

/// `KL(p ‖ q)` between two Gaussians with the full trace/log-det/Mahalanobis
/// formula.
pub fn kl_gaussians(p: &Moments, q: &Moments) -> Result<f64> {
    let k = p.dim();
    check_dim("KL dimensions", k, q.dim())?;
    check_dim("p covariance", k, p.cov.nrows())?;
    check_dim("q covariance", k, q.cov.nrows())?;
    let chol_p = cholesky(&p.cov, "p covariance")?;
    let chol_q = cholesky(&q.cov, "q covariance")?;
    let trace = chol_q.solve(&p.cov).trace();
    let diff = &q.mean - &p.mean;
    let maha = diff.dot(&chol_q.solve(&diff));
    let log_det = spd_log_det(&chol_q) - spd_log_det(&chol_p);
    let kl = 0.5 * (trace + maha - k as f64 + log_det);
    // Rounding can push an exact zero slightly negative.
    Ok(kl.max(0.0))
}

/// `log f_Z(z) − log f_Z(μ_Z)` under the joint's evidence marginal.
pub fn log_ratio_to_mode(j: &GaussianJoint, z: &Vector) -> Result<f64> {
    check_dim("evidence length", j.nz(), z.len())?;
    let m = marginal_z(j);
    let chol = cholesky(&m.cov, "Sigma_ZZ")?;
    let d = z - &m.mean;
    Ok(-0.5 * d.dot(&chol.solve(&d)))
}

/// `Σ⁻¹` restricted to a block pair.
pub fn precision_block(c: &CanonicalForm, rows: &[usize], cols: &[usize]) -> Matrix {
    select(&c.lambda, rows, cols)
}

/// `Λ_YY⁻¹`, which equals the conditional covariance of `Y` given `Z`.
pub fn conditional_cov_from_precision(j: &GaussianJoint) -> Result<Matrix> {
    let c = to_canonical(j)?;
    spd_inverse(&precision_block(&c, j.partition.y(), j.partition.y()), "Lambda_YY")
}

/// Mahalanobis form `(a − b)ᵀ M (a − b)`.
pub fn mahalanobis(m: &Matrix, a: &Vector, b: &Vector) -> f64 {
    quad_form(m, &(a - b))
}

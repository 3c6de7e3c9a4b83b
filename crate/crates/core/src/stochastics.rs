//! Seeded samplers for the distributions the attacks need.
//!
//! Every draw comes from a [`SeededStream`]: a ChaCha8 generator keyed by a
//! 64-bit seed with a separate 64-bit stream id. Children of a stream are
//! derived from `(stream_id, index)` alone, so work split across threads
//! reproduces bit-for-bit whatever the schedule.

use nalgebra::Cholesky;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gauss::PD_TOL;
use crate::linalg::{self, cholesky, eigenvalues_desc, spd_inverse, symmetrize, Matrix, Vector};

/// Attempts allowed for rejection-style samplers.
pub const RETRY_CAP: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeededStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream_id: 0 }
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Independent substream `index` of this stream.
    pub fn child(&self, index: u64) -> Self {
        let mixed = splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)));
        Self {
            seed: self.seed,
            stream_id: mixed,
        }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `mean + L·ε` with `LLᵀ = cov`.
pub fn mvn_sample<R: Rng + ?Sized>(mean: &Vector, cov: &Matrix, rng: &mut R) -> Result<Vector> {
    check_dim("covariance rows", mean.len(), cov.nrows())?;
    let chol = cholesky(cov, "MVN covariance")?;
    Ok(mvn_from_cholesky(mean, &chol, rng))
}

pub(crate) fn mvn_from_cholesky<R: Rng + ?Sized>(
    mean: &Vector,
    chol: &Cholesky<f64, nalgebra::Dyn>,
    rng: &mut R,
) -> Vector {
    let eps = standard_normal_vector(mean.len(), rng);
    mean + chol.l_dirty().lower_triangle() * eps
}

/// Wishart sampler `W(V, ν)` via the Bartlett decomposition.
#[derive(Debug, Clone)]
pub struct Wishart {
    scale_factor: Matrix,
    dof: f64,
}

impl Wishart {
    pub fn new(scale: &Matrix, dof: f64) -> Result<Self> {
        let n = scale.nrows();
        if !(dof > n as f64 - 1.0) {
            return Err(Error::InvalidParameter(format!(
                "Wishart degrees of freedom {dof} must exceed n - 1 = {}",
                n as f64 - 1.0
            )));
        }
        let chol = cholesky(scale, "Wishart scale")?;
        Ok(Self {
            scale_factor: chol.l_dirty().lower_triangle(),
            dof,
        })
    }

    pub fn dim(&self) -> usize {
        self.scale_factor.nrows()
    }

    /// Lower-triangular `L·A` whose Gram matrix is the Wishart draw.
    fn sample_factor<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix {
        let n = self.dim();
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            let chi = ChiSquared::new(self.dof - i as f64).expect("dof checked at construction");
            a[(i, i)] = chi.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.sample(StandardNormal);
            }
        }
        &self.scale_factor * a
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix {
        let t = self.sample_factor(rng);
        symmetrize(&(&t * t.transpose()))
    }
}

pub fn wishart_sample<R: Rng + ?Sized>(scale: &Matrix, dof: f64, rng: &mut R) -> Result<Matrix> {
    Ok(Wishart::new(scale, dof)?.sample(rng))
}

/// Inverse-Wishart `IW(Ψ, ν)`: the inverse of a `W(Ψ⁻¹, ν)` draw.
///
/// Accepts `n − 1 < ν ≤ n + 1`, where the mean does not exist.
#[derive(Debug, Clone)]
pub struct InverseWishart {
    inner: Wishart,
}

impl InverseWishart {
    pub fn new(psi: &Matrix, nu: f64) -> Result<Self> {
        let omega = spd_inverse(psi, "inverse-Wishart scale")?;
        Ok(Self {
            inner: Wishart::new(&omega, nu)?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix {
        let n = self.inner.dim();
        let t = self.inner.sample_factor(rng);
        let t_inv = t
            .solve_lower_triangular(&Matrix::identity(n, n))
            .expect("Bartlett factor has a positive diagonal");
        symmetrize(&(t_inv.transpose() * t_inv))
    }
}

pub fn inv_wishart_sample<R: Rng + ?Sized>(psi: &Matrix, nu: f64, rng: &mut R) -> Result<Matrix> {
    Ok(InverseWishart::new(psi, nu)?.sample(rng))
}

/// Normal-inverse-Wishart hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiwParams {
    #[serde(with = "linalg::serde_vector")]
    pub mu0: Vector,
    pub kappa: f64,
    #[serde(with = "linalg::serde_matrix")]
    pub psi: Matrix,
    pub nu: f64,
}

impl NiwParams {
    pub fn new(mu0: Vector, kappa: f64, psi: Matrix, nu: f64) -> Result<Self> {
        let p = Self { mu0, kappa, psi, nu };
        p.check()?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.dim();
        check_dim("psi rows", n, self.psi.nrows())?;
        check_dim("psi cols", n, self.psi.ncols())?;
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa = {} must be > 0", self.kappa)));
        }
        if !(self.nu > n as f64 - 1.0) {
            return Err(Error::InvalidParameter(format!(
                "nu = {} must exceed n - 1 = {}",
                self.nu,
                n as f64 - 1.0
            )));
        }
        cholesky(&self.psi, "NIW psi")?;
        Ok(())
    }
}

/// `Σ ~ IW(Ψ, ν)`, then `μ ~ N(μ₀, Σ/κ)`.
#[derive(Debug, Clone)]
pub struct Niw {
    params: NiwParams,
    iw: InverseWishart,
}

impl Niw {
    pub fn new(params: NiwParams) -> Result<Self> {
        params.check()?;
        let iw = InverseWishart::new(&params.psi, params.nu)?;
        Ok(Self { params, iw })
    }

    pub fn params(&self) -> &NiwParams {
        &self.params
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vector, Matrix)> {
        let cov = self.iw.sample(rng);
        let chol = cholesky(&(&cov / self.params.kappa), "NIW mean covariance")?;
        let mean = mvn_from_cholesky(&self.params.mu0, &chol, rng);
        Ok((mean, cov))
    }
}

pub fn niw_sample<R: Rng + ?Sized>(p: &NiwParams, rng: &mut R) -> Result<(Vector, Matrix)> {
    Niw::new(p.clone())?.sample(rng)
}

/// `GGᵀ` with iid standard-normal `G`, redrawn until it passes the PD check.
pub fn ggt_covariance<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    for _ in 0..RETRY_CAP {
        let g = Matrix::from_fn(n, n, |_, _| rng.sample(StandardNormal));
        let s = symmetrize(&(&g * g.transpose()));
        let eig = eigenvalues_desc(&s);
        if eig[n - 1] > PD_TOL * eig[0] {
            return Ok(s);
        }
    }
    Err(Error::SamplerExhausted {
        attempts: RETRY_CAP,
        reason: "GG^T was not positive definite".into(),
    })
}

/// Inverse-gamma with shape `a` and scale `b` (mean `b/(a−1)` for `a > 1`).
pub fn inverse_gamma_sample<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "inverse-gamma needs shape > 0 and scale > 0, got ({shape}, {scale})"
        )));
    }
    let g = Gamma::new(shape, 1.0 / scale)
        .map_err(|e| Error::InvalidParameter(format!("gamma: {e}")))?;
    Ok(1.0 / g.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_is_deterministic() {
        let s = SeededStream::with_stream(42, 7);
        let a = standard_normal_vector(5, &mut s.rng());
        let b = standard_normal_vector(5, &mut s.rng());
        assert_eq!(a, b);
        let c = standard_normal_vector(5, &mut s.child(0).rng());
        assert_ne!(a, c);
        assert_eq!(s.child(3), s.child(3));
        assert_ne!(s.child(3), s.child(4));
    }

    #[test]
    fn mvn_is_affine_in_mean() {
        let cov = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let m = Vector::from_vec(vec![3.0, -1.0]);
        let s = SeededStream::new(1);
        let x = mvn_sample(&m, &cov, &mut s.rng()).unwrap();
        let y = mvn_sample(&Vector::zeros(2), &cov, &mut s.rng()).unwrap();
        assert!((x - (y + m)).norm() < 1e-14);
    }

    #[test]
    fn mvn_rejects_non_pd() {
        let cov = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(mvn_sample(&Vector::zeros(2), &cov, &mut SeededStream::new(0).rng()).is_err());
    }

    #[test]
    fn wishart_rejects_small_dof() {
        assert!(Wishart::new(&Matrix::identity(3, 3), 2.0).is_err());
        assert!(Wishart::new(&Matrix::identity(3, 3), 2.5).is_ok());
    }

    #[test]
    fn inverse_wishart_draw_inverts_to_wishart_draw() {
        let psi = Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let s = SeededStream::new(9);
        let iw = InverseWishart::new(&psi, 4.0).unwrap();
        let w = Wishart::new(&spd_inverse(&psi, "psi").unwrap(), 4.0).unwrap();
        let sig = iw.sample(&mut s.rng());
        let lam = w.sample(&mut s.rng());
        assert!((sig * lam - Matrix::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn niw_with_huge_kappa_pins_the_mean() {
        let p = NiwParams::new(
            Vector::from_vec(vec![1.0, 2.0]),
            1e12,
            Matrix::identity(2, 2),
            5.0,
        )
        .unwrap();
        let (mu, _) = niw_sample(&p, &mut SeededStream::new(3).rng()).unwrap();
        assert!((mu - &p.mu0).norm() < 1e-4);
    }

    #[test]
    fn niw_rejects_bad_params() {
        assert!(NiwParams::new(Vector::zeros(2), 0.0, Matrix::identity(2, 2), 5.0).is_err());
        assert!(NiwParams::new(Vector::zeros(2), 1.0, Matrix::identity(2, 2), 0.5).is_err());
        assert!(NiwParams::new(Vector::zeros(2), 1.0, -Matrix::identity(2, 2), 5.0).is_err());
    }

    #[test]
    fn ggt_is_symmetric() {
        let s = ggt_covariance(6, &mut SeededStream::new(11).rng()).unwrap();
        assert!(linalg::asymmetry(&s) <= 1e-12);
    }

    #[test]
    fn inverse_gamma_rejects_bad_params() {
        let mut rng = SeededStream::new(0).rng();
        assert!(inverse_gamma_sample(0.0, 1.0, &mut rng).is_err());
        assert!(inverse_gamma_sample(2.0, -1.0, &mut rng).is_err());
        assert!(inverse_gamma_sample(2.0, 1.0, &mut rng).unwrap() > 0.0);
    }
}

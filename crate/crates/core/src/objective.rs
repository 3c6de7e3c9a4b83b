//! Disruption and detection-risk objectives and the white-box quadratic.
//!
//! Disruption is the KL divergence between the true and corrupted
//! conditionals of `Y`, written as `½(zᵀQz + vᵀz + c)`. Detection risk is the
//! log-ratio of the evidence marginal at `z` to its mode, written through
//! `φ₂(z) = −zᵀAz + 2zᵀb` with `A = Σ_ZZ⁻¹`, `b = Aμ_Z`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gauss::{self, condition, to_canonical, Block, GaussianJoint};
use crate::linalg::{self, quad_form, select, select_vec, spd_inverse, symmetrize, Matrix, Vector};

/// Guard on `|φ*|` below which normalization is refused.
pub const WEIGHT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisruptionCoefficients {
    #[serde(with = "linalg::serde_matrix")]
    pub q: Matrix,
    #[serde(with = "linalg::serde_vector")]
    pub v: Vector,
    /// Does not move the argmax but is needed to report KL values.
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionCoefficients {
    #[serde(with = "linalg::serde_matrix")]
    pub a: Matrix,
    #[serde(with = "linalg::serde_vector")]
    pub b: Vector,
    /// `φ₂(μ_Z) = μ_Zᵀ A μ_Z`, so the log-ratio is `½(φ₂(z) − offset)`.
    pub offset: f64,
}

impl DisruptionCoefficients {
    pub fn dim(&self) -> usize {
        self.v.len()
    }

    /// `½(zᵀQz + vᵀz + c)`, clamped at zero against rounding.
    pub fn kl(&self, z: &Vector) -> f64 {
        (0.5 * (quad_form(&self.q, z) + self.v.dot(z) + self.c)).max(0.0)
    }
}

impl DetectionCoefficients {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn log_ratio(&self, z: &Vector) -> f64 {
        (0.5 * (-quad_form(&self.a, z) + 2.0 * z.dot(&self.b) - self.offset)).min(0.0)
    }
}

/// Axis-aligned feasible attack region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionBounds", into = "RegionBounds")]
pub struct BoxRegion {
    lower: Vector,
    upper: Vector,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl TryFrom<RegionBounds> for BoxRegion {
    type Error = Error;

    fn try_from(r: RegionBounds) -> Result<Self> {
        BoxRegion::new(Vector::from_vec(r.lower), Vector::from_vec(r.upper))
    }
}

impl From<BoxRegion> for RegionBounds {
    fn from(r: BoxRegion) -> Self {
        RegionBounds {
            lower: r.lower.as_slice().to_vec(),
            upper: r.upper.as_slice().to_vec(),
        }
    }
}

impl BoxRegion {
    /// A box with `lower ≤ upper` and a non-empty interior in at least one
    /// coordinate.
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        let r = Self::new_allow_degenerate(lower, upper)?;
        if r.is_degenerate() {
            return Err(Error::InvalidRegion(
                "lower == upper in every coordinate".into(),
            ));
        }
        Ok(r)
    }

    /// Like [`BoxRegion::new`] but accepts a single-point box.
    pub fn new_allow_degenerate(lower: Vector, upper: Vector) -> Result<Self> {
        check_dim("region bounds", lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidRegion("empty region".into()));
        }
        for i in 0..lower.len() {
            if !(lower[i].is_finite() && upper[i].is_finite()) {
                return Err(Error::InvalidRegion(format!("coordinate {i} is unbounded")));
            }
            if lower[i] > upper[i] {
                return Err(Error::InvalidRegion(format!(
                    "lower[{i}] = {} exceeds upper[{i}] = {}",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The single point `{z}`.
    pub fn point(z: &Vector) -> Result<Self> {
        Self::new_allow_degenerate(z.clone(), z.clone())
    }

    /// `center ± half_width` in every coordinate.
    pub fn around(center: &Vector, half_width: f64) -> Result<Self> {
        Self::new(
            center.map(|c| c - half_width),
            center.map(|c| c + half_width),
        )
    }

    /// `center ± q·|center|` per coordinate.
    pub fn relative(center: &Vector, q: f64) -> Result<Self> {
        Self::new(
            center.map(|c| c - q * c.abs()),
            center.map(|c| c + q * c.abs()),
        )
    }

    pub fn lower(&self) -> &Vector {
        &self.lower
    }

    pub fn upper(&self) -> &Vector {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vector {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn widths(&self) -> Vector {
        &self.upper - &self.lower
    }

    pub fn is_degenerate(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, z: &Vector, tol: f64) -> bool {
        z.len() == self.dim()
            && (0..self.dim()).all(|i| z[i] >= self.lower[i] - tol && z[i] <= self.upper[i] + tol)
    }

    /// Euclidean projection (componentwise clamp).
    pub fn project(&self, z: &Vector) -> Vector {
        Vector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| z[i].clamp(self.lower[i], self.upper[i])),
        )
    }
}

/// Normalized objective weights `w_k = u_k / |φ*_k|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub u1: f64,
    pub u2: f64,
    pub phi1_star: f64,
    pub phi2_star: f64,
    pub w1: f64,
    pub w2: f64,
    /// Whether `φ*₁` came from a certified global solve.
    pub phi1_certified: bool,
    pub phi2_certified: bool,
}

impl ObjectiveWeights {
    pub fn certified(&self) -> bool {
        self.phi1_certified && self.phi2_certified
    }
}

/// Normalize `u1` (and `u2 = 1 − u1`) by the single-objective optima.
///
/// `u1` may sit on either end of `[0, 1]` so that a single component can be
/// optimized alone; both `|φ*|` must still clear [`WEIGHT_EPS`].
pub fn normalize_weights(u1: f64, phi1_star: f64, phi2_star: f64) -> Result<ObjectiveWeights> {
    normalize_weights_with(u1, (phi1_star, true), (phi2_star, true))
}

pub fn normalize_weights_with(
    u1: f64,
    phi1: (f64, bool),
    phi2: (f64, bool),
) -> Result<ObjectiveWeights> {
    if !(0.0..=1.0).contains(&u1) {
        return Err(Error::InvalidParameter(format!("u1 = {u1} is outside [0, 1]")));
    }
    for (index, value) in [(1, phi1.0), (2, phi2.0)] {
        if !(value.abs() > WEIGHT_EPS) {
            return Err(Error::DegenerateNormalization {
                index,
                value,
                eps: WEIGHT_EPS,
            });
        }
    }
    let u2 = 1.0 - u1;
    Ok(ObjectiveWeights {
        u1,
        u2,
        phi1_star: phi1.0,
        phi2_star: phi2.0,
        w1: u1 / phi1.0.abs(),
        w2: u2 / phi2.0.abs(),
        phi1_certified: phi1.1,
        phi2_certified: phi2.1,
    })
}

/// The white-box quadratic `max_z zᵀHz + gᵀz` over a box, with the
/// components it was assembled from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackProblem {
    #[serde(with = "linalg::serde_matrix")]
    pub h: Matrix,
    #[serde(with = "linalg::serde_vector")]
    pub g: Vector,
    pub region: BoxRegion,
    #[serde(with = "linalg::serde_vector")]
    pub truth_evidence: Vector,
    pub weights: ObjectiveWeights,
    pub disruption: DisruptionCoefficients,
    pub detection: DetectionCoefficients,
}

impl AttackProblem {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, z: &Vector) -> f64 {
        quad_form(&self.h, z) + self.g.dot(z)
    }

    pub fn gradient(&self, z: &Vector) -> Vector {
        &self.h * z * 2.0 + &self.g
    }

    /// KL disruption under the model the problem was built from.
    pub fn kl(&self, z: &Vector) -> f64 {
        self.disruption.kl(z)
    }

    pub fn log_ratio(&self, z: &Vector) -> f64 {
        self.detection.log_ratio(z)
    }
}

/// `Q`, `v`, `c` from the canonical blocks of the joint and `μ_{Y|z'}`.
pub fn build_disruption(j: &GaussianJoint, z_true: &Vector) -> Result<DisruptionCoefficients> {
    check_dim("true evidence", j.nz(), z_true.len())?;
    let canon = to_canonical(j)?;
    let (yi, zi) = (j.partition().y(), j.partition().z());
    let l_yy = select(&canon.lambda, yi, yi);
    let l_yz = select(&canon.lambda, yi, zi);
    let eta_y = select_vec(&canon.eta, yi);
    let mu_cond = condition(j, z_true)?.mean;

    let l_yy_inv = spd_inverse(&l_yy, "Lambda_YY")?;
    let l_zy = l_yz.transpose();
    let q = symmetrize(&(&l_zy * &l_yy_inv * &l_yz));
    let inv_eta = &l_yy_inv * &eta_y;
    let v = (&l_zy * &mu_cond - &l_zy * &inv_eta) * 2.0;
    let c = quad_form(&l_yy, &mu_cond) - 2.0 * eta_y.dot(&mu_cond) + eta_y.dot(&inv_eta);
    Ok(DisruptionCoefficients { q, v, c })
}

/// `A = Σ_ZZ⁻¹`, `b = Aμ_Z`.
pub fn build_detection(j: &GaussianJoint) -> Result<DetectionCoefficients> {
    let a = spd_inverse(&j.cov_block(Block::Z, Block::Z), "Sigma_ZZ")?;
    let mu_z = j.mean_z();
    let b = &a * &mu_z;
    let offset = mu_z.dot(&b);
    Ok(DetectionCoefficients { a, b, offset })
}

/// `φ₁(z) = zᵀQz + vᵀz`.
pub fn phi1(d: &DisruptionCoefficients, z: &Vector) -> Result<f64> {
    check_dim("phi1 argument", d.dim(), z.len())?;
    Ok(quad_form(&d.q, z) + d.v.dot(z))
}

/// `φ₂(z) = −zᵀAz + 2zᵀb`.
pub fn phi2(d: &DetectionCoefficients, z: &Vector) -> Result<f64> {
    check_dim("phi2 argument", d.dim(), z.len())?;
    Ok(-quad_form(&d.a, z) + 2.0 * z.dot(&d.b))
}

/// `H = w₁Q − w₂A`, `g = w₁v + 2w₂b`.
pub fn assemble_wb(
    dis: &DisruptionCoefficients,
    det: &DetectionCoefficients,
    weights: &ObjectiveWeights,
    region: &BoxRegion,
    z_true: &Vector,
) -> Result<AttackProblem> {
    let n = dis.dim();
    check_dim("Q rows", n, dis.q.nrows())?;
    check_dim("detection dimension", n, det.dim())?;
    check_dim("A rows", n, det.a.nrows())?;
    check_dim("region dimension", n, region.dim())?;
    check_dim("true evidence", n, z_true.len())?;
    let h = symmetrize(&(&dis.q * weights.w1 - &det.a * weights.w2));
    let g = &dis.v * weights.w1 + &det.b * (2.0 * weights.w2);
    Ok(AttackProblem {
        h,
        g,
        region: region.clone(),
        truth_evidence: z_true.clone(),
        weights: weights.clone(),
        disruption: dis.clone(),
        detection: det.clone(),
    })
}

/// KL from the true conditional to the one induced by `z`, both under
/// `j_true`.
pub fn eval_kl_to_truth(j_true: &GaussianJoint, z_true: &Vector, z: &Vector) -> Result<f64> {
    let p = condition(j_true, z_true)?;
    let q = condition(j_true, z)?;
    gauss::kl_gaussians(&p, &q)
}

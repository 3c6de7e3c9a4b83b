//! Spectral classification of the attack objective and the u1 bounds that
//! predict where it changes shape.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{GaussianJoint, Partition};
use crate::linalg::{eigenvalues_desc, Matrix, Vector};
use crate::objective::{
    build_detection, build_disruption, AttackProblem, DetectionCoefficients,
    DisruptionCoefficients, WEIGHT_EPS,
};
use crate::stochastics::{ggt_covariance, InverseWishart, SeededStream, RETRY_CAP};

/// Relative eigenvalue tolerance; scaled by the spectral radius of `H`.
pub const SPEC_TOL: f64 = 1e-10;

/// Default grid step for the brute-force transition search.
pub const DEFAULT_STEP: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    Concave,
    Convex,
    Indefinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub rho: Vec<f64>,
    pub zeta: Vec<f64>,
    pub lambda_h: Vec<f64>,
    pub classification: Classification,
    pub u1_minus: f64,
    pub u1_plus: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u1_tilde_minus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u1_tilde_plus: Option<f64>,
}

/// Classifies a symmetric matrix by the sign of its extreme eigenvalues.
pub fn classify_matrix(h: &Matrix) -> Classification {
    classify_spectrum(&eigenvalues_desc(h))
}

/// Same as [`classify_matrix`] for an already sorted (non-ascending) spectrum.
pub fn classify_spectrum(eig: &[f64]) -> Classification {
    let (Some(&max), Some(&min)) = (eig.first(), eig.last()) else {
        return Classification::Concave;
    };
    let tol = SPEC_TOL * max.abs().max(min.abs());
    if max <= tol {
        Classification::Concave
    } else if min >= -tol {
        Classification::Convex
    } else {
        Classification::Indefinite
    }
}

pub fn classify(problem: &AttackProblem) -> Classification {
    classify_matrix(&problem.h)
}

fn transition(rho: f64, zeta: f64, phi1: f64, phi2: f64) -> f64 {
    let det = zeta / phi2;
    let denom = rho.max(0.0) / phi1 + det;
    if denom > 0.0 {
        (det / denom).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

fn check_stars(phi1_star: f64, phi2_star: f64) -> Result<(f64, f64)> {
    for (index, value) in [(1, phi1_star), (2, phi2_star)] {
        if !(value.abs() > WEIGHT_EPS) {
            return Err(Error::DegenerateNormalization {
                index,
                value,
                eps: WEIGHT_EPS,
            });
        }
    }
    Ok((phi1_star.abs(), phi2_star.abs()))
}

/// Weyl-inequality bounds from precomputed spectra (both non-ascending).
///
/// Below the first value the objective is concave; above the second it is
/// convex.
pub fn weyl_bounds_from_spectra(
    rho: &[f64],
    zeta: &[f64],
    phi1_star: f64,
    phi2_star: f64,
) -> Result<(f64, f64)> {
    let (p1, p2) = check_stars(phi1_star, phi2_star)?;
    let nz = rho.len();
    if zeta.len() != nz {
        return Err(Error::DimensionMismatch {
            what: "spectra",
            expected: nz,
            got: zeta.len(),
        });
    }
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for m in 1..=nz {
        for n in 1..=nz {
            let f = transition(rho[m - 1], zeta[n - 1], p1, p2);
            if m + n - 1 <= nz {
                lower = lower.min(f);
            }
            if m + n > nz {
                upper = upper.max(f);
            }
        }
    }
    Ok((lower.clamp(0.0, 1.0), upper.clamp(0.0, 1.0)))
}

pub fn weyl_bounds(
    dis: &DisruptionCoefficients,
    det: &DetectionCoefficients,
    phi1_star: f64,
    phi2_star: f64,
) -> Result<(f64, f64)> {
    weyl_bounds_from_spectra(
        &eigenvalues_desc(&dis.q),
        &eigenvalues_desc(&det.a),
        phi1_star,
        phi2_star,
    )
}

/// `H(u1)` for the given component coefficients and normalizers.
pub fn hessian_at(
    dis: &DisruptionCoefficients,
    det: &DetectionCoefficients,
    phi1_star: f64,
    phi2_star: f64,
    u1: f64,
) -> Matrix {
    &dis.q * (u1 / phi1_star.abs()) - &det.a * ((1.0 - u1) / phi2_star.abs())
}

/// Grid search for the convexity transitions.
///
/// Grid points are `k·step` for `k = 0, 1, …` plus `1.0` itself. Returns the
/// largest grid point classified Concave and the smallest classified Convex.
/// `u1 = 0` is always Concave and `u1 = 1` always Convex, so both exist.
pub fn brute_force_transition(
    dis: &DisruptionCoefficients,
    det: &DetectionCoefficients,
    phi1_star: f64,
    phi2_star: f64,
    step: f64,
) -> Result<(f64, f64)> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidParameter(format!("grid step {step} must be in (0, 1]")));
    }
    check_stars(phi1_star, phi2_star)?;
    let mut grid: Vec<f64> = (0..)
        .map(|k| k as f64 * step)
        .take_while(|u| *u < 1.0 - 1e-12)
        .collect();
    grid.push(1.0);
    let classes: Vec<Classification> = grid
        .iter()
        .map(|&u| classify_matrix(&hessian_at(dis, det, phi1_star, phi2_star, u)))
        .collect();
    let last_concave = grid
        .iter()
        .zip(&classes)
        .filter(|(_, c)| **c == Classification::Concave)
        .map(|(u, _)| *u)
        .fold(0.0, f64::max);
    let first_convex = grid
        .iter()
        .zip(&classes)
        .find(|(_, c)| **c == Classification::Convex)
        .map(|(u, _)| *u)
        .unwrap_or(1.0);
    Ok((last_concave, first_convex))
}

/// Full spectral report for an assembled problem.
pub fn analyze(problem: &AttackProblem, brute_force_step: Option<f64>) -> Result<ConvexityReport> {
    let w = &problem.weights;
    let rho = eigenvalues_desc(&problem.disruption.q);
    let zeta = eigenvalues_desc(&problem.detection.a);
    let lambda_h = eigenvalues_desc(&problem.h);
    let (u1_minus, u1_plus) = weyl_bounds_from_spectra(&rho, &zeta, w.phi1_star, w.phi2_star)?;
    let tilde = match brute_force_step {
        Some(step) => Some(brute_force_transition(
            &problem.disruption,
            &problem.detection,
            w.phi1_star,
            w.phi2_star,
            step,
        )?),
        None => None,
    };
    Ok(ConvexityReport {
        classification: classify_spectrum(&lambda_h),
        rho,
        zeta,
        lambda_h,
        u1_minus,
        u1_plus,
        u1_tilde_minus: tilde.map(|t| t.0),
        u1_tilde_plus: tilde.map(|t| t.1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CovarianceSampler {
    /// `GGᵀ` with standard-normal `G`.
    Ggt,
    /// `IW(I, n)` with `n` the joint dimension.
    InverseWishart,
}

impl CovarianceSampler {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ggt => "GGT",
            Self::InverseWishart => "IW",
        }
    }
}

impl std::str::FromStr for CovarianceSampler {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ggt" => Ok(Self::Ggt),
            "iw" | "inverse-wishart" | "inversewishart" => Ok(Self::InverseWishart),
            _ => Err(Error::InvalidParameter(format!("unknown covariance sampler '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvercoverageTrial {
    pub u1_minus: f64,
    pub u1_plus: f64,
    pub u1_tilde_minus: f64,
    pub u1_tilde_plus: f64,
    pub overcoverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvercoverageSummary {
    pub sampler: CovarianceSampler,
    pub n: usize,
    pub nz: usize,
    pub phi1_star: f64,
    pub phi2_star: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub trials: Vec<OvercoverageTrial>,
}

impl OvercoverageSummary {
    pub const CSV_HEADER: [&'static str; 8] =
        ["sampler", "n", "nz", "phi1_star", "phi2_star", "median", "q25", "q75"];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.sampler.name().to_string(),
            self.n.to_string(),
            self.nz.to_string(),
            self.phi1_star.to_string(),
            self.phi2_star.to_string(),
            self.median.to_string(),
            self.q25.to_string(),
            self.q75.to_string(),
        ]
    }
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn study_trial(
    sampler: CovarianceSampler,
    n: usize,
    nz: usize,
    phi1_star: f64,
    phi2_star: f64,
    step: f64,
    stream: SeededStream,
) -> Result<OvercoverageTrial> {
    let mut rng = stream.rng();
    let partition = Partition::contiguous(n - nz, nz)?;
    let mut last_err = None;
    for _ in 0..RETRY_CAP {
        let cov = match sampler {
            CovarianceSampler::Ggt => ggt_covariance(n, &mut rng)?,
            CovarianceSampler::InverseWishart => {
                InverseWishart::new(&Matrix::identity(n, n), n as f64)?.sample(&mut rng)
            }
        };
        let joint = match GaussianJoint::new(Vector::zeros(n), cov, partition.clone()) {
            Ok(j) => j,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let dis = build_disruption(&joint, &Vector::zeros(nz))?;
        let det = build_detection(&joint)?;
        let (u1_minus, u1_plus) = weyl_bounds(&dis, &det, phi1_star, phi2_star)?;
        let (tm, tp) = brute_force_transition(&dis, &det, phi1_star, phi2_star, step)?;
        return Ok(OvercoverageTrial {
            u1_minus,
            u1_plus,
            u1_tilde_minus: tm,
            u1_tilde_plus: tp,
            overcoverage: (u1_plus - u1_minus) - (tp - tm),
        });
    }
    Err(Error::SamplerExhausted {
        attempts: RETRY_CAP,
        reason: last_err.map_or_else(|| "no valid covariance".into(), |e| e.to_string()),
    })
}

/// Overcoverage of the Weyl interval against the grid-estimated indefinite
/// interval, over `trials` sampled covariances with zero mean and zero
/// evidence. Trial `k` draws from `stream.child(k)`.
pub fn overcoverage_study(
    sampler: CovarianceSampler,
    dims: (usize, usize),
    phi_stars: (f64, f64),
    trials: usize,
    step: f64,
    stream: SeededStream,
) -> Result<OvercoverageSummary> {
    let (n, nz) = dims;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    if nz == 0 || nz >= n {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= |Z| < n, got n = {n}, |Z| = {nz}"
        )));
    }
    check_stars(phi_stars.0, phi_stars.1)?;
    let results: Vec<OvercoverageTrial> = (0..trials as u64)
        .into_par_iter()
        .map(|k| study_trial(sampler, n, nz, phi_stars.0, phi_stars.1, step, stream.child(k)))
        .collect::<Result<_>>()?;
    let mut sorted: Vec<f64> = results.iter().map(|t| t.overcoverage).collect();
    sorted.sort_by(f64::total_cmp);
    Ok(OvercoverageSummary {
        sampler,
        n,
        nz,
        phi1_star: phi_stars.0,
        phi2_star: phi_stars.1,
        median: quantile(&sorted, 0.5),
        q25: quantile(&sorted, 0.25),
        q75: quantile(&sorted, 0.75),
        trials: results,
    })
}

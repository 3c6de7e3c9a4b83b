//! Attacks under parameter uncertainty: the attacker knows the joint only
//! through a prior, and optimizes either a sample-average objective (SAA) or
//! by stochastic gradient ascent (SGA).

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gauss::{GaussianJoint, Partition};
use crate::linalg::{self, select, spd_inverse, Matrix, Vector};
use crate::models::{LgssmPrior, RegressionPrior, RegressionSampler};
use crate::objective::{
    build_detection, build_disruption, AttackProblem, BoxRegion,
    DetectionCoefficients, DisruptionCoefficients, ObjectiveWeights,
};
use crate::solvers::{annotate, build_problem, solve_quadratic, Method, SolveConfig, SolveReport};
use crate::stochastics::{Niw, NiwParams, SeededStream, RETRY_CAP};

/// NIW beliefs over a joint with a fixed latent/evidence split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NiwPrior {
    #[serde(with = "linalg::serde_vector")]
    pub mu0: Vector,
    pub kappa: f64,
    #[serde(with = "linalg::serde_matrix")]
    pub psi: Matrix,
    pub nu: f64,
    pub y_idx: Vec<usize>,
    pub z_idx: Vec<usize>,
}

impl NiwPrior {
    pub fn new(params: NiwParams, partition: &Partition) -> Self {
        Self {
            mu0: params.mu0,
            kappa: params.kappa,
            psi: params.psi,
            nu: params.nu,
            y_idx: partition.y().to_vec(),
            z_idx: partition.z().to_vec(),
        }
    }

    pub fn params(&self) -> Result<NiwParams> {
        NiwParams::new(self.mu0.clone(), self.kappa, self.psi.clone(), self.nu)
    }

    pub fn partition(&self) -> Result<Partition> {
        let p = Partition::new(self.y_idx.clone(), self.z_idx.clone())?;
        check_dim("partition size", self.mu0.len(), p.len())?;
        Ok(p)
    }
}

/// The attacker's beliefs about the decisionmaker's joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Prior {
    PointMass { model: GaussianJoint },
    Niw(NiwPrior),
    Regression(RegressionPrior),
    Lgssm(LgssmPrior),
}

impl Prior {
    pub fn sampler(&self) -> Result<PriorSampler> {
        Ok(match self {
            Prior::PointMass { model } => PriorSampler::PointMass(model.clone()),
            Prior::Niw(p) => PriorSampler::Niw(Niw::new(p.params()?)?, p.partition()?),
            Prior::Regression(p) => PriorSampler::Regression(p.sampler()?),
            Prior::Lgssm(p) => {
                p.check()?;
                PriorSampler::Lgssm(p.clone())
            }
        })
    }

    pub fn is_point_mass(&self) -> bool {
        matches!(self, Prior::PointMass { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Prior::PointMass { .. } => "point_mass",
            Prior::Niw(_) => "niw",
            Prior::Regression(_) => "regression",
            Prior::Lgssm(_) => "lgssm",
        }
    }
}

/// A prior prepared for repeated draws.
#[derive(Debug, Clone)]
pub enum PriorSampler {
    PointMass(GaussianJoint),
    Niw(Niw, Partition),
    Regression(RegressionSampler),
    Lgssm(LgssmPrior),
}

impl PriorSampler {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GaussianJoint> {
        match self {
            PriorSampler::PointMass(j) => Ok(j.clone()),
            PriorSampler::Niw(niw, partition) => {
                let (mean, cov) = niw.sample(rng)?;
                GaussianJoint::new(mean, cov, partition.clone())
            }
            PriorSampler::Regression(s) => s.sample(rng),
            PriorSampler::Lgssm(p) => p.sample(rng),
        }
    }

    /// A validated joint; draws that fail validation are redrawn.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GaussianJoint> {
        let mut last = None;
        for _ in 0..RETRY_CAP {
            match self.draw(rng) {
                Ok(j) => return Ok(j),
                Err(e @ (Error::NotPositiveDefinite(_) | Error::InvalidModel(_) | Error::Singular(_))) => {
                    last = Some(e)
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::SamplerExhausted {
            attempts: RETRY_CAP,
            reason: last.map_or_else(String::new, |e| e.to_string()),
        })
    }
}

/// Closed-form expectations of `Q` and `Σ_ZZ⁻¹` under an NIW prior.
pub fn expected_niw_coefficients(p: &NiwParams, partition: &Partition) -> Result<(Matrix, Matrix)> {
    p.check()?;
    check_dim("partition size", p.dim(), partition.len())?;
    let ny = partition.ny() as f64;
    let nz = partition.nz() as f64;
    if !(p.nu > ny + nz - 1.0) {
        return Err(Error::InvalidParameter(format!(
            "nu = {} must exceed |Y| + |Z| - 1 = {}",
            p.nu,
            ny + nz - 1.0
        )));
    }
    let (yi, zi) = (partition.y(), partition.z());
    let omega = spd_inverse(&p.psi, "psi")?;
    let o_zy = select(&omega, zi, yi);
    let o_yy_inv = spd_inverse(&select(&omega, yi, yi), "Omega_YY")?;
    let eq = (&o_zy * o_yy_inv * o_zy.transpose()) * (p.nu - ny) + select(&omega, zi, zi) * ny;
    let eprec = spd_inverse(&select(&p.psi, zi, zi), "Psi_ZZ")? * (p.nu - ny);
    Ok((linalg::symmetrize(&eq), linalg::symmetrize(&eprec)))
}

type Components = (DisruptionCoefficients, DetectionCoefficients);

fn add_components(a: Components, b: &Components) -> Components {
    let (mut d, mut t) = a;
    d.q += &b.0.q;
    d.v += &b.0.v;
    d.c += b.0.c;
    t.a += &b.1.a;
    t.b += &b.1.b;
    t.offset += b.1.offset;
    (d, t)
}

/// Pairwise sum over a fixed binary split, so the result does not depend on
/// how the work was scheduled.
fn pairwise_sum(items: &[Components]) -> Components {
    match items.len() {
        0 => unreachable!("pairwise_sum needs at least one item"),
        1 => items[0].clone(),
        n => {
            let (l, r) = items.split_at(n / 2);
            let (a, b) = rayon::join(|| pairwise_sum(l), || pairwise_sum(r));
            add_components(a, &b)
        }
    }
}

/// Sample averages of the component coefficients over `j` prior draws,
/// draw `k` using `stream.child(k)`.
pub fn average_components(
    prior: &Prior,
    z_true: &Vector,
    j: usize,
    stream: SeededStream,
) -> Result<Components> {
    if j == 0 {
        return Err(Error::InvalidParameter("J must be >= 1".into()));
    }
    let sampler = prior.sampler()?;
    if let PriorSampler::PointMass(joint) = &sampler {
        return Ok((build_disruption(joint, z_true)?, build_detection(joint)?));
    }
    let draws: Vec<Components> = (0..j as u64)
        .into_par_iter()
        .map(|k| {
            let joint = sampler.sample(&mut stream.child(k).rng())?;
            Ok((build_disruption(&joint, z_true)?, build_detection(&joint)?))
        })
        .collect::<Result<_>>()?;
    let (mut d, mut t) = pairwise_sum(&draws);
    let scale = 1.0 / j as f64;
    d.q = linalg::symmetrize(&(d.q * scale));
    d.v *= scale;
    d.c *= scale;
    t.a = linalg::symmetrize(&(t.a * scale));
    t.b *= scale;
    t.offset *= scale;
    Ok((d, t))
}

#[derive(Debug, Clone)]
pub struct SaaAssembly {
    pub problem: AttackProblem,
    pub j: usize,
    pub sampling_time_seconds: f64,
    pub normalizer_time_seconds: f64,
}

/// Builds the sample-average problem. Normalizers come from the averaged
/// component objectives of the same draws.
pub fn saa_assemble(
    prior: &Prior,
    z_true: &Vector,
    u1: f64,
    region: &BoxRegion,
    j: usize,
    cfg: &SolveConfig,
    stream: SeededStream,
) -> Result<SaaAssembly> {
    let t0 = Instant::now();
    let (dis, det) = average_components(prior, z_true, j, stream)?;
    let sampling = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let problem = build_problem(&dis, &det, u1, region, z_true, cfg)?;
    Ok(SaaAssembly {
        problem,
        j,
        sampling_time_seconds: sampling,
        normalizer_time_seconds: t1.elapsed().as_secs_f64(),
    })
}

pub fn solve_saa(
    prior: &Prior,
    z_true: &Vector,
    u1: f64,
    region: &BoxRegion,
    j: usize,
    cfg: &SolveConfig,
    stream: SeededStream,
) -> Result<SolveReport> {
    cfg.check()?;
    let asm = saa_assemble(prior, z_true, u1, region, j, cfg, stream)?;
    let t0 = Instant::now();
    let p = &asm.problem;
    let (mut report, class) = solve_quadratic(&p.h, &p.g, &p.region, Some(&p.truth_evidence), cfg)?;
    report.wall_time_seconds = t0.elapsed().as_secs_f64() + asm.normalizer_time_seconds;
    annotate(&mut report, p, class, stream.seed);
    report.method = Method::Saa {
        j,
        inner: Box::new(report.method.clone()),
    };
    report.sampling_time_seconds = Some(asm.sampling_time_seconds);
    Ok(report)
}

/// Gradient at `z` of the objective built from one sampled joint.
pub fn sga_gradient_sample(
    joint: &GaussianJoint,
    z_true: &Vector,
    z: &Vector,
    weights: &ObjectiveWeights,
) -> Result<Vector> {
    check_dim("attack point", joint.nz(), z.len())?;
    let dis = build_disruption(joint, z_true)?;
    let det = build_detection(joint)?;
    Ok(component_gradient(&dis, &det, z, weights))
}

fn component_gradient(
    dis: &DisruptionCoefficients,
    det: &DetectionCoefficients,
    z: &Vector,
    w: &ObjectiveWeights,
) -> Vector {
    let h = &dis.q * w.w1 - &det.a * w.w2;
    h * z * 2.0 + &dis.v * w.w1 + &det.b * (2.0 * w.w2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SgaVariant {
    Basic,
    AdaGrad,
    RmsProp,
    Adam,
}

impl SgaVariant {
    pub const ALL: [SgaVariant; 4] = [Self::Basic, Self::AdaGrad, Self::RmsProp, Self::Adam];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Basic => "basic",
            Self::AdaGrad => "adagrad",
            Self::RmsProp => "rmsprop",
            Self::Adam => "adam",
        }
    }
}

impl fmt::Display for SgaVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SgaVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown SGA variant '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgaConfig {
    pub variant: SgaVariant,
    pub alpha: f64,
    pub eps: f64,
    pub tau1: f64,
    pub tau2: f64,
    /// Stop once an update moves `z` by at most this Euclidean distance.
    pub stop_delta: f64,
    pub max_iters: usize,
    /// Draws used for the normalizers and the reported objective.
    pub normalization_samples: usize,
}

impl Default for SgaConfig {
    fn default() -> Self {
        Self {
            variant: SgaVariant::Adam,
            alpha: 0.01,
            eps: 1e-8,
            tau1: 0.9,
            tau2: 0.9,
            stop_delta: 1e-4,
            max_iters: 10_000,
            normalization_samples: 1000,
        }
    }
}

impl SgaConfig {
    pub fn check(&self) -> Result<()> {
        let in_unit = |t: f64| t > 0.0 && t < 1.0;
        if !(self.alpha > 0.0 && self.eps > 0.0) {
            return Err(Error::Config("SGA alpha and eps must be > 0".into()));
        }
        if !(in_unit(self.tau1) && in_unit(self.tau2)) {
            return Err(Error::Config("SGA tau1 and tau2 must lie in (0, 1)".into()));
        }
        if !(self.stop_delta > 0.0) || self.max_iters == 0 || self.normalization_samples == 0 {
            return Err(Error::Config(
                "SGA stop_delta, max_iters and normalization_samples must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Hyperparameters in the order the variant uses them.
    pub fn hyperparams(&self) -> Vec<(&'static str, f64)> {
        let mut h = vec![("alpha", self.alpha)];
        match self.variant {
            SgaVariant::Basic => {}
            SgaVariant::AdaGrad => h.push(("eps", self.eps)),
            SgaVariant::RmsProp => h.extend([("eps", self.eps), ("tau1", self.tau1)]),
            SgaVariant::Adam => h.extend([("eps", self.eps), ("tau1", self.tau1), ("tau2", self.tau2)]),
        }
        h
    }
}

/// Per-coordinate optimizer state.
struct SgaState {
    cfg: SgaConfig,
    r_acc: Vector,
    momentum: Vector,
    step: i32,
}

impl SgaState {
    fn new(cfg: &SgaConfig, n: usize) -> Self {
        Self {
            cfg: cfg.clone(),
            r_acc: Vector::zeros(n),
            momentum: Vector::zeros(n),
            step: 0,
        }
    }

    fn direction(&mut self, r: &Vector) -> Vector {
        let c = &self.cfg;
        self.step += 1;
        match c.variant {
            SgaVariant::Basic => {
                let norm = r.norm();
                if norm > 0.0 {
                    r * (c.alpha / norm)
                } else {
                    Vector::zeros(r.len())
                }
            }
            SgaVariant::AdaGrad | SgaVariant::RmsProp => {
                let sq = r.component_mul(r);
                if c.variant == SgaVariant::AdaGrad {
                    self.r_acc += sq;
                } else {
                    self.r_acc = &self.r_acc * c.tau1 + sq * (1.0 - c.tau1);
                }
                r.zip_map(&self.r_acc, |ri, acc| c.alpha * ri / (acc + c.eps).sqrt())
            }
            SgaVariant::Adam => {
                self.momentum = &self.momentum * c.tau2 + r * (1.0 - c.tau2);
                self.r_acc = &self.r_acc * c.tau1 + r.component_mul(r) * (1.0 - c.tau1);
                let m_corr = 1.0 / (1.0 - c.tau2.powi(self.step));
                let r_corr = 1.0 / (1.0 - c.tau1.powi(self.step));
                self.momentum
                    .zip_map(&self.r_acc, |m, acc| c.alpha * m * m_corr / (acc * r_corr + c.eps).sqrt())
            }
        }
    }
}

pub struct SgaOutcome {
    pub z: Vector,
    pub iterations: usize,
}

/// Runs the SGA iteration from `start`; `observe(k, z)` sees every iterate
/// after projection. Iteration `k` (from 1) samples from `stream.child(k)`.
#[allow(clippy::too_many_arguments)]
pub fn sga_iterate(
    sampler: &PriorSampler,
    z_true: &Vector,
    start: &Vector,
    weights: &ObjectiveWeights,
    region: &BoxRegion,
    cfg: &SgaConfig,
    stream: SeededStream,
    mut observe: impl FnMut(usize, &Vector),
) -> Result<SgaOutcome> {
    cfg.check()?;
    check_dim("start point", region.dim(), start.len())?;
    let fixed = match sampler {
        PriorSampler::PointMass(j) => Some((build_disruption(j, z_true)?, build_detection(j)?)),
        _ => None,
    };
    let mut state = SgaState::new(cfg, start.len());
    let mut z = region.project(start);
    let mut iterations = 0;
    for k in 1..=cfg.max_iters {
        let r = match &fixed {
            Some((d, t)) => component_gradient(d, t, &z, weights),
            None => {
                let joint = sampler.sample(&mut stream.child(k as u64).rng())?;
                sga_gradient_sample(&joint, z_true, &z, weights)?
            }
        };
        let next = region.project(&(&z + state.direction(&r)));
        let moved = (&next - &z).norm();
        z = next;
        iterations = k;
        observe(k, &z);
        if moved <= cfg.stop_delta {
            break;
        }
    }
    Ok(SgaOutcome { z, iterations })
}

/// Stochastic gradient ascent from the true evidence. Normalizers and the
/// reported objective come from a sample-average problem over
/// `cfg.normalization_samples` draws on `stream.child(0)`; the iterations
/// draw from `stream.child(1)`.
#[allow(clippy::too_many_arguments)]
pub fn solve_sga(
    prior: &Prior,
    z_true: &Vector,
    u1: f64,
    region: &BoxRegion,
    cfg: &SgaConfig,
    solve_cfg: &SolveConfig,
    stream: SeededStream,
) -> Result<SolveReport> {
    cfg.check()?;
    let asm = saa_assemble(prior, z_true, u1, region, cfg.normalization_samples, solve_cfg, stream.child(0))?;
    let sampler = prior.sampler()?;
    let t0 = Instant::now();
    let out = sga_iterate(
        &sampler,
        z_true,
        z_true,
        &asm.problem.weights,
        region,
        cfg,
        stream.child(1),
        |_, _| {},
    )?;
    let p = &asm.problem;
    let mut report = SolveReport::bare(out.z, 0.0, Method::Sga { variant: cfg.variant }, false, out.iterations);
    report.wall_time_seconds = t0.elapsed().as_secs_f64() + asm.normalizer_time_seconds;
    report.sampling_time_seconds = Some(asm.sampling_time_seconds);
    let class = crate::convexity::classify(p);
    annotate(&mut report, p, class, stream.seed);
    Ok(report)
}

//! Box-constrained maximization of `zᵀHz + gᵀz`.
//!
//! Concave instances go through projected gradient ascent with a Newton
//! polish on the free face, convex ones through vertex enumeration, and
//! everything else through multi-start projected gradient.

use std::fmt;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convexity::{classify_matrix, Classification};
use crate::error::{check_dim, Error, Result};
use crate::greybox::SgaVariant;
use crate::linalg::{self, eigenvalues_desc, quad_form, select, Matrix, Vector};
use crate::gauss::GaussianJoint;
use crate::objective::{
    assemble_wb, build_detection, build_disruption, normalize_weights_with, AttackProblem, BoxRegion,
    DetectionCoefficients, DisruptionCoefficients,
};
use crate::stochastics::SeededStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRule {
    /// Constant step `1/L` with `L` the gradient's Lipschitz constant.
    Fixed,
    /// Armijo backtracking by halving, never below `1/L`.
    Backtracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub max_iters: usize,
    /// Tolerance on the projected-gradient residual `‖z − P(z + ∇)‖`.
    pub grad_tol: f64,
    pub step_rule: StepRule,
    /// Random starts for multi-start; `None` means `max(20, 4·|Z|)`.
    pub starts: Option<usize>,
    pub vertex_enum_limit: usize,
    pub seed: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            grad_tol: 1e-8,
            step_rule: StepRule::Backtracking,
            starts: None,
            vertex_enum_limit: 16,
            seed: 0,
        }
    }
}

impl SolveConfig {
    pub fn check(&self) -> Result<()> {
        if self.max_iters == 0 || self.vertex_enum_limit == 0 || self.starts == Some(0) {
            return Err(Error::Config("iteration, start and vertex limits must be positive".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config(format!("grad_tol = {} must be > 0", self.grad_tol)));
        }
        Ok(())
    }

    pub fn starts_for(&self, dim: usize) -> usize {
        self.starts.unwrap_or_else(|| 20.max(4 * dim))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    ConcaveProjectedGradient,
    VertexEnumeration,
    MultiStart { starts: usize },
    Saa { j: usize, inner: Box<Method> },
    Sga { variant: SgaVariant },
    RandomNoise,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ConcaveProjectedGradient => write!(f, "concave-pg"),
            Self::VertexEnumeration => write!(f, "vertex-enumeration"),
            Self::MultiStart { starts } => write!(f, "multi-start({starts})"),
            Self::Saa { j, inner } => write!(f, "SAA({j})/{inner}"),
            Self::Sga { variant } => write!(f, "SGA-{}", variant.name()),
            Self::RandomNoise => write!(f, "RN"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    #[serde(with = "linalg::serde_vector")]
    pub z_star: Vector,
    pub objective: f64,
    pub method: Method,
    pub classification: Option<Classification>,
    pub certified: bool,
    pub iterations: usize,
    pub wall_time_seconds: f64,
    /// Time spent drawing prior samples, kept apart from solve time.
    pub sampling_time_seconds: Option<f64>,
    /// KL disruption of `z_star` under the model the problem was built from.
    pub kl: Option<f64>,
    pub log_ratio: Option<f64>,
    pub u1: Option<f64>,
    pub phi1_star: Option<f64>,
    pub phi2_star: Option<f64>,
    pub normalizers_certified: Option<bool>,
    pub seed: u64,
}

impl SolveReport {
    pub(crate) fn bare(z: Vector, objective: f64, method: Method, certified: bool, iterations: usize) -> Self {
        Self {
            z_star: z,
            objective,
            method,
            classification: None,
            certified,
            iterations,
            wall_time_seconds: 0.0,
            sampling_time_seconds: None,
            kl: None,
            log_ratio: None,
            u1: None,
            phi1_star: None,
            phi2_star: None,
            normalizers_certified: None,
            seed: 0,
        }
    }

    /// Fails with [`Error::Uncertified`] unless the solution is certified.
    pub fn require_certified(self) -> Result<Self> {
        if self.certified {
            Ok(self)
        } else {
            let class = self.classification.map_or("unknown".to_string(), |c| format!("{c:?}").to_lowercase());
            Err(Error::Uncertified(format!("{} with {class} curvature", self.method)))
        }
    }
}

pub fn project_box(z: &Vector, region: &BoxRegion) -> Result<Vector> {
    check_dim("point", region.dim(), z.len())?;
    Ok(region.project(z))
}

fn quad_value(h: &Matrix, g: &Vector, z: &Vector) -> f64 {
    quad_form(h, z) + g.dot(z)
}

fn quad_grad(h: &Matrix, g: &Vector, z: &Vector) -> Vector {
    h * z * 2.0 + g
}

/// `‖z − P(z + ∇f(z))‖`, zero exactly at KKT points.
pub fn projected_gradient_residual(h: &Matrix, g: &Vector, region: &BoxRegion, z: &Vector) -> f64 {
    let step = z + quad_grad(h, g, z);
    (region.project(&step) - z).norm()
}

fn check_problem(h: &Matrix, g: &Vector, region: &BoxRegion) -> Result<()> {
    let n = g.len();
    check_dim("H rows", n, h.nrows())?;
    check_dim("H cols", n, h.ncols())?;
    check_dim("region dimension", n, region.dim())
}

struct Ascent {
    z: Vector,
    value: f64,
    iterations: usize,
    converged: bool,
}

/// Newton step restricted to the free coordinates, then projected.
fn face_newton(h: &Matrix, g: &Vector, region: &BoxRegion, z: &Vector) -> Option<Vector> {
    let grad = quad_grad(h, g, z);
    let (lo, hi) = (region.lower(), region.upper());
    let free: Vec<usize> = (0..z.len())
        .filter(|&i| {
            if lo[i] >= hi[i] {
                return false;
            }
            let at_lo = z[i] <= lo[i];
            let at_hi = z[i] >= hi[i];
            !(at_lo && grad[i] <= 0.0 || at_hi && grad[i] >= 0.0)
        })
        .collect();
    if free.is_empty() {
        return None;
    }
    let neg_h = -select(h, &free, &free) * 2.0;
    let chol = neg_h.cholesky()?;
    let grad_f = Vector::from_iterator(free.len(), free.iter().map(|&i| grad[i]));
    let step = chol.solve(&grad_f);
    let mut out = z.clone();
    for (k, &i) in free.iter().enumerate() {
        out[i] += step[k];
    }
    Some(region.project(&out))
}

fn ascend(
    h: &Matrix,
    g: &Vector,
    region: &BoxRegion,
    start: &Vector,
    cfg: &SolveConfig,
    lipschitz: f64,
) -> Ascent {
    let min_step = 1.0 / lipschitz;
    let mut z = region.project(start);
    let mut value = quad_value(h, g, &z);
    let mut step = min_step;
    for it in 0..cfg.max_iters {
        let grad = quad_grad(h, g, &z);
        if (region.project(&(&z + &grad)) - &z).norm() <= cfg.grad_tol {
            return Ascent {
                z,
                value,
                iterations: it,
                converged: true,
            };
        }
        let (next, next_value) = match cfg.step_rule {
            StepRule::Fixed => {
                let cand = region.project(&(&z + &grad * min_step));
                let v = quad_value(h, g, &cand);
                (cand, v)
            }
            StepRule::Backtracking => {
                let mut t = (step * 2.0).max(min_step);
                loop {
                    let cand = region.project(&(&z + &grad * t));
                    let v = quad_value(h, g, &cand);
                    if t <= min_step || v >= value + 1e-4 * grad.dot(&(&cand - &z)) {
                        step = t;
                        break (cand, v);
                    }
                    t = (t * 0.5).max(min_step);
                }
            }
        };
        z = next;
        value = next_value;
        if it % 10 == 9 {
            if let Some(cand) = face_newton(h, g, region, &z) {
                let v = quad_value(h, g, &cand);
                if v >= value {
                    z = cand;
                    value = v;
                }
            }
        }
    }
    let converged = projected_gradient_residual(h, g, region, &z) <= cfg.grad_tol;
    Ascent {
        z,
        value,
        iterations: cfg.max_iters,
        converged,
    }
}

fn lipschitz(h: &Matrix) -> f64 {
    let eig = eigenvalues_desc(h);
    let radius = eig.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    (2.0 * radius).max(1e-12)
}

/// Projected gradient ascent for concave instances, started from `start` (or
/// the box center).
pub fn maximize_concave_from(
    h: &Matrix,
    g: &Vector,
    region: &BoxRegion,
    start: Option<&Vector>,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    check_problem(h, g, region)?;
    cfg.check()?;
    let start = start.cloned().unwrap_or_else(|| region.center());
    check_dim("start point", g.len(), start.len())?;
    let t0 = Instant::now();
    let run = ascend(h, g, region, &start, cfg, lipschitz(h));
    let mut report = SolveReport::bare(
        run.z,
        run.value,
        Method::ConcaveProjectedGradient,
        run.converged,
        run.iterations,
    );
    report.wall_time_seconds = t0.elapsed().as_secs_f64();
    report.seed = cfg.seed;
    Ok(report)
}

pub fn maximize_concave(h: &Matrix, g: &Vector, region: &BoxRegion, cfg: &SolveConfig) -> Result<SolveReport> {
    maximize_concave_from(h, g, region, None, cfg)
}

/// Vertex `index` in lexicographic sign order: bit `n−1−i` selects the upper
/// bound for coordinate `i`, so coordinate 0 is most significant.
fn vertex(region: &BoxRegion, index: u64) -> Vector {
    let n = region.dim();
    Vector::from_fn(n, |i, _| {
        if (index >> (n - 1 - i)) & 1 == 1 {
            region.upper()[i]
        } else {
            region.lower()[i]
        }
    })
}

/// Exhaustive search over all `2^|Z|` box vertices; ties go to the
/// lexicographically smallest sign pattern (lower before upper).
pub fn maximize_by_vertices(
    h: &Matrix,
    g: &Vector,
    region: &BoxRegion,
    limit: usize,
) -> Result<SolveReport> {
    check_problem(h, g, region)?;
    let n = g.len();
    if n > limit || n >= 63 {
        return Err(Error::VertexLimit { dim: n, limit });
    }
    let t0 = Instant::now();
    let count = 1u64 << n;
    let (best_idx, best_val) = (0..count)
        .into_par_iter()
        .map(|k| (k, quad_value(h, g, &vertex(region, k))))
        .reduce(
            || (u64::MAX, f64::NEG_INFINITY),
            |a, b| {
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    let mut report = SolveReport::bare(
        vertex(region, best_idx),
        best_val,
        Method::VertexEnumeration,
        true,
        count as usize,
    );
    report.wall_time_seconds = t0.elapsed().as_secs_f64();
    Ok(report)
}

const PRIMES: [u32; 40] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
];

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

fn nth_prime(i: usize) -> u64 {
    if let Some(p) = PRIMES.get(i) {
        return *p as u64;
    }
    let mut count = PRIMES.len();
    let mut cand = *PRIMES.last().unwrap() as u64;
    loop {
        cand += 2;
        if (3..).step_by(2).take_while(|d| d * d <= cand).all(|d| !cand.is_multiple_of(d)) {
            if count == i {
                return cand;
            }
            count += 1;
        }
    }
}

/// Randomly shifted Halton points inside the box. Point `k` depends only on
/// `k` and the seed, so larger start sets contain smaller ones.
pub fn stratified_starts(region: &BoxRegion, count: usize, seed: u64) -> Vec<Vector> {
    let n = region.dim();
    let mut rng = SeededStream::with_stream(seed, 0x5354_4152_5453).rng();
    let shift: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let bases: Vec<u64> = (0..n).map(nth_prime).collect();
    (0..count as u64)
        .map(|k| {
            Vector::from_fn(n, |i, _| {
                let u = (radical_inverse(k + 1, bases[i]) + shift[i]).fract();
                region.lower()[i] + u * (region.upper()[i] - region.lower()[i])
            })
        })
        .collect()
}

/// Best of projected-gradient runs from `truth` (when given), the box center
/// and `cfg.starts_for(|Z|)` stratified points. Certified only when `H` is
/// concave and the winning run converged.
pub fn maximize_multi_start(
    h: &Matrix,
    g: &Vector,
    region: &BoxRegion,
    truth: Option<&Vector>,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    check_problem(h, g, region)?;
    cfg.check()?;
    let t0 = Instant::now();
    let n = g.len();
    let random = cfg.starts_for(n);
    let mut starts = Vec::with_capacity(random + 2);
    if let Some(t) = truth {
        check_dim("truth", n, t.len())?;
        starts.push(region.project(t));
    }
    starts.push(region.center());
    starts.extend(stratified_starts(region, random, cfg.seed));
    let lip = lipschitz(h);
    let runs: Vec<Ascent> = starts
        .par_iter()
        .map(|s| ascend(h, g, region, s, cfg, lip))
        .collect();
    let total_iters = runs.iter().map(|r| r.iterations).sum();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("at least one start");
    let concave = classify_matrix(h) == Classification::Concave;
    let mut report = SolveReport::bare(
        best.z,
        best.value,
        Method::MultiStart { starts: starts.len() },
        concave && best.converged,
        total_iters,
    );
    report.wall_time_seconds = t0.elapsed().as_secs_f64();
    report.seed = cfg.seed;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    Disruption,
    Detection,
}

/// Single-objective optimum over the box and whether it is certified.
pub fn single_objective_optimum(
    which: Component,
    dis: &DisruptionCoefficients,
    det: &DetectionCoefficients,
    region: &BoxRegion,
    cfg: &SolveConfig,
) -> Result<(f64, bool)> {
    match which {
        Component::Detection => {
            let r = maximize_concave(&-&det.a, &(&det.b * 2.0), region, cfg)?;
            Ok((r.objective, r.certified))
        }
        Component::Disruption => {
            if dis.dim() <= cfg.vertex_enum_limit {
                let r = maximize_by_vertices(&dis.q, &dis.v, region, cfg.vertex_enum_limit)?;
                Ok((r.objective, true))
            } else {
                let r = maximize_multi_start(&dis.q, &dis.v, region, None, cfg)?;
                Ok((r.objective, false))
            }
        }
    }
}

/// Both normalizers with their certification flags.
pub fn normalizers(
    dis: &DisruptionCoefficients,
    det: &DetectionCoefficients,
    region: &BoxRegion,
    cfg: &SolveConfig,
) -> Result<((f64, bool), (f64, bool))> {
    Ok((
        single_objective_optimum(Component::Disruption, dis, det, region, cfg)?,
        single_objective_optimum(Component::Detection, dis, det, region, cfg)?,
    ))
}

/// Normalizes and assembles the weighted problem for given components.
pub fn build_problem(
    dis: &DisruptionCoefficients,
    det: &DetectionCoefficients,
    u1: f64,
    region: &BoxRegion,
    z_true: &Vector,
    cfg: &SolveConfig,
) -> Result<AttackProblem> {
    let (phi1, phi2) = normalizers(dis, det, region, cfg)?;
    let weights = normalize_weights_with(u1, phi1, phi2)?;
    assemble_wb(dis, det, &weights, region, z_true)
}

/// The white-box problem for a known joint.
pub fn white_box_problem(
    joint: &GaussianJoint,
    z_true: &Vector,
    u1: f64,
    region: &BoxRegion,
    cfg: &SolveConfig,
) -> Result<AttackProblem> {
    let dis = build_disruption(joint, z_true)?;
    let det = build_detection(joint)?;
    build_problem(&dis, &det, u1, region, z_true, cfg)
}

/// Solves an assembled quadratic by the method its curvature calls for.
pub fn solve_quadratic(
    h: &Matrix,
    g: &Vector,
    region: &BoxRegion,
    truth: Option<&Vector>,
    cfg: &SolveConfig,
) -> Result<(SolveReport, Classification)> {
    let class = classify_matrix(h);
    let report = match class {
        Classification::Concave => maximize_concave_from(h, g, region, truth, cfg)?,
        Classification::Convex if g.len() <= cfg.vertex_enum_limit => {
            maximize_by_vertices(h, g, region, cfg.vertex_enum_limit)?
        }
        _ => maximize_multi_start(h, g, region, truth, cfg)?,
    };
    Ok((report, class))
}

pub fn solve_white_box(problem: &AttackProblem, cfg: &SolveConfig) -> Result<SolveReport> {
    cfg.check()?;
    let t0 = Instant::now();
    let (mut report, class) = solve_quadratic(
        &problem.h,
        &problem.g,
        &problem.region,
        Some(&problem.truth_evidence),
        cfg,
    )?;
    report.wall_time_seconds = t0.elapsed().as_secs_f64();
    annotate(&mut report, problem, class, cfg.seed);
    Ok(report)
}

pub(crate) fn annotate(report: &mut SolveReport, problem: &AttackProblem, class: Classification, seed: u64) {
    let w = &problem.weights;
    report.objective = problem.objective(&report.z_star);
    report.classification = Some(class);
    report.kl = Some(problem.kl(&report.z_star));
    report.log_ratio = Some(problem.log_ratio(&report.z_star));
    report.u1 = Some(w.u1);
    report.phi1_star = Some(w.phi1_star);
    report.phi2_star = Some(w.phi2_star);
    report.normalizers_certified = Some(w.certified());
    report.seed = seed;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(lo: &[f64], hi: &[f64]) -> BoxRegion {
        BoxRegion::new(Vector::from_row_slice(lo), Vector::from_row_slice(hi)).unwrap()
    }

    fn m(rows: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, rows, v)
    }

    #[test]
    fn projection_clamps() {
        let r = region(&[-1.0, -1.0], &[1.0, 1.0]);
        let z = Vector::from_row_slice(&[0.5, 2.0]);
        assert_eq!(project_box(&z, &r).unwrap(), Vector::from_row_slice(&[0.5, 1.0]));
        assert!(project_box(&Vector::zeros(3), &r).is_err());
    }

    #[test]
    fn concave_one_dimensional_examples() {
        let r = region(&[-1.0], &[1.0]);
        let cfg = SolveConfig::default();
        let a = maximize_concave(&m(1, &[-1.0]), &Vector::from_row_slice(&[2.0]), &r, &cfg).unwrap();
        assert!((a.z_star[0] - 1.0).abs() < 1e-12 && (a.objective - 1.0).abs() < 1e-12);
        assert!(a.certified);
        let b = maximize_concave(&m(1, &[-1.0]), &Vector::from_row_slice(&[0.5]), &r, &cfg).unwrap();
        assert!((b.z_star[0] - 0.25).abs() < 1e-9 && (b.objective - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn fixed_step_rule_also_converges() {
        let cfg = SolveConfig {
            step_rule: StepRule::Fixed,
            ..SolveConfig::default()
        };
        let r = region(&[-1.0, -1.0], &[1.0, 1.0]);
        let h = m(2, &[-2.0, 0.5, 0.5, -1.0]);
        let g = Vector::from_row_slice(&[1.0, -3.0]);
        let a = maximize_concave(&h, &g, &r, &cfg).unwrap();
        assert!(a.certified);
        assert!(projected_gradient_residual(&h, &g, &r, &a.z_star) <= cfg.grad_tol);
    }

    #[test]
    fn vertex_examples() {
        let r = region(&[-1.0], &[2.0]);
        let a = maximize_by_vertices(&m(1, &[1.0]), &Vector::zeros(1), &r, 16).unwrap();
        assert_eq!(a.z_star[0], 2.0);
        assert_eq!(a.objective, 4.0);
        let r2 = region(&[-1.0, -1.0], &[1.0, 1.0]);
        let b = maximize_by_vertices(&Matrix::identity(2, 2), &Vector::zeros(2), &r2, 16).unwrap();
        assert_eq!(b.objective, 2.0);
        assert_eq!(b.z_star, Vector::from_row_slice(&[-1.0, -1.0]));
        assert!(matches!(
            maximize_by_vertices(&Matrix::identity(2, 2), &Vector::zeros(2), &r2, 1),
            Err(Error::VertexLimit { .. })
        ));
    }

    #[test]
    fn indefinite_saddle_goes_to_the_convex_axis() {
        let r = region(&[-1.0, -1.0], &[1.0, 1.0]);
        let h = m(2, &[1.0, 0.0, 0.0, -1.0]);
        let rep = maximize_multi_start(&h, &Vector::zeros(2), &r, None, &SolveConfig::default()).unwrap();
        assert!((rep.objective - 1.0).abs() < 1e-9);
        assert!((rep.z_star[0].abs() - 1.0).abs() < 1e-12 && rep.z_star[1].abs() < 1e-6);
        assert!(!rep.certified);
    }

    #[test]
    fn halton_starts_are_nested_and_inside() {
        let r = region(&[0.0, 10.0, -5.0], &[1.0, 20.0, 5.0]);
        let a = stratified_starts(&r, 5, 3);
        let b = stratified_starts(&r, 9, 3);
        assert_eq!(a[..], b[..5]);
        assert!(b.iter().all(|p| r.contains(p, 0.0)));
        assert_eq!(nth_prime(0), 2);
        assert_eq!(nth_prime(40), 179);
    }

    #[test]
    fn linear_disruption_optimum_is_separable() {
        let dis = DisruptionCoefficients {
            q: Matrix::zeros(2, 2),
            v: Vector::from_row_slice(&[1.0, -2.0]),
            c: 0.0,
        };
        let det = DetectionCoefficients {
            a: Matrix::identity(2, 2),
            b: Vector::zeros(2),
            offset: 0.0,
        };
        let r = region(&[-1.0, -3.0], &[2.0, 1.0]);
        let (v, cert) = single_objective_optimum(Component::Disruption, &dis, &det, &r, &SolveConfig::default()).unwrap();
        assert_eq!(v, 2.0 + 6.0);
        assert!(cert);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = SolveConfig {
            grad_tol: 0.0,
            ..SolveConfig::default()
        };
        assert!(cfg.check().is_err());
    }
}

//! Attack evaluation against the true model, the random-noise baseline and
//! u1 sweeps.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convexity::Classification;
use crate::error::{check_dim, Error, Result};
use crate::gauss::{condition, log_ratio_to_mode, GaussianJoint};
use crate::greybox::{average_components, Prior};
use crate::linalg::{self, Vector};
use crate::objective::{
    assemble_wb, build_detection, build_disruption, eval_kl_to_truth, normalize_weights_with, AttackProblem,
    BoxRegion,
};
use crate::solvers::{normalizers, solve_white_box, SolveConfig, SolveReport};
use crate::stochastics::SeededStream;

/// Feasibility slack, relative to the box scale.
const FEAS_TOL: f64 = 1e-9;

/// The u1 grid used for front tracing: 0.01, 0.05, 0.10, …, 0.95, 0.99.
pub fn default_u1_grid() -> Vec<f64> {
    let mut g = vec![0.01];
    g.extend((1..=19).map(|k| k as f64 * 0.05));
    g.push(0.99);
    g
}

fn box_tol(region: &BoxRegion) -> f64 {
    let scale = region
        .lower()
        .iter()
        .chain(region.upper().iter())
        .fold(1.0_f64, |m, v| m.max(v.abs()));
    FEAS_TOL * scale
}

/// Uniform draw from the box, written as `z' + noise` with the noise range
/// chosen so the result stays feasible.
pub fn rn_baseline<R: Rng + ?Sized>(z_true: &Vector, region: &BoxRegion, rng: &mut R) -> Result<Vector> {
    check_dim("true evidence", region.dim(), z_true.len())?;
    if !region.contains(z_true, box_tol(region)) {
        return Err(Error::InvalidRegion("true evidence lies outside the region".into()));
    }
    Ok(Vector::from_fn(z_true.len(), |i, _| {
        let (lo, hi) = (region.lower()[i] - z_true[i], region.upper()[i] - z_true[i]);
        if hi > lo {
            z_true[i] + rng.random_range(lo..=hi)
        } else {
            z_true[i]
        }
    }))
}

/// One attack measured against the true model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub attack: String,
    /// `key=value` pairs separated by `;`.
    pub hyperparams: String,
    pub seed: u64,
    pub z: Vec<f64>,
    /// Objective of the problem the attack actually solved.
    pub objective: f64,
    /// Objective under the white-box problem, for comparing across attacks.
    pub wb_objective: f64,
    pub kl_to_truth: f64,
    pub log_ratio: f64,
    pub certified: bool,
    /// Shift of the latent conditional mean, `μ_{Y|z} − μ_{Y|z'}`.
    pub modal_shift: Vec<f64>,
    pub wall_time_seconds: f64,
    pub sampling_time_seconds: Option<f64>,
}

impl EvaluationRow {
    /// Column labels; timing columns come last.
    pub fn csv_header(nz: usize) -> Vec<String> {
        let mut h: Vec<String> = ["attack", "hyperparams", "seed"].map(String::from).to_vec();
        h.extend((1..=nz).map(|i| format!("z{i}")));
        h.extend(
            ["objective", "wb_objective", "kl_to_truth", "log_ratio", "certified", "wall_time_seconds", "sampling_time_seconds"]
                .map(String::from),
        );
        h
    }

    /// Number of trailing timing columns in [`Self::csv_record`].
    pub const TIMING_COLUMNS: usize = 2;

    pub fn csv_record(&self) -> Vec<String> {
        let mut r = vec![self.attack.clone(), self.hyperparams.clone(), self.seed.to_string()];
        r.extend(self.z.iter().map(f64::to_string));
        r.extend([
            self.objective.to_string(),
            self.wb_objective.to_string(),
            self.kl_to_truth.to_string(),
            self.log_ratio.to_string(),
            self.certified.to_string(),
            self.wall_time_seconds.to_string(),
            self.sampling_time_seconds.map_or_else(String::new, |t| t.to_string()),
        ]);
        r
    }
}

/// Truth-model measurements of an attack point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub wb_objective: f64,
    pub kl_to_truth: f64,
    pub log_ratio: f64,
    pub modal_shift: Vector,
}

/// Scores `z` under the true joint. `solved` is the problem the attack
/// optimized (defaults to the white-box problem).
pub fn evaluate_attack(
    truth: &GaussianJoint,
    wb: &AttackProblem,
    z: &Vector,
    solved: Option<&AttackProblem>,
) -> Result<Evaluation> {
    check_dim("attack point", truth.nz(), z.len())?;
    if !wb.region.contains(z, box_tol(&wb.region)) {
        return Err(Error::InvalidRegion("attack point lies outside the region".into()));
    }
    let z_true = &wb.truth_evidence;
    Ok(Evaluation {
        objective: solved.unwrap_or(wb).objective(z),
        wb_objective: wb.objective(z),
        kl_to_truth: eval_kl_to_truth(truth, z_true, z)?,
        log_ratio: log_ratio_to_mode(truth, z)?,
        modal_shift: condition(truth, z)?.mean - condition(truth, z_true)?.mean,
    })
}

/// Builds a full row from a solve report; `objective` is the one the report
/// carries, i.e. that of the problem the attack solved.
pub fn evaluation_row(
    attack: &str,
    hyperparams: &str,
    truth: &GaussianJoint,
    wb: &AttackProblem,
    report: &SolveReport,
) -> Result<EvaluationRow> {
    let e = evaluate_attack(truth, wb, &report.z_star, None)?;
    Ok(EvaluationRow {
        attack: attack.to_string(),
        hyperparams: hyperparams.to_string(),
        seed: report.seed,
        z: report.z_star.iter().copied().collect(),
        objective: report.objective,
        wb_objective: e.wb_objective,
        kl_to_truth: e.kl_to_truth,
        log_ratio: e.log_ratio,
        certified: report.certified,
        modal_shift: e.modal_shift.iter().copied().collect(),
        wall_time_seconds: report.wall_time_seconds,
        sampling_time_seconds: report.sampling_time_seconds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub u1: f64,
    #[serde(with = "linalg::serde_vector")]
    pub z: Vector,
    /// KL disruption under the true model.
    pub disruption: f64,
    /// Negative log-ratio under the true model.
    pub risk: f64,
    pub objective: f64,
    pub classification: Classification,
    pub certified: bool,
    pub nondominated: bool,
}

impl ParetoPoint {
    pub fn csv_header(nz: usize) -> Vec<String> {
        let mut h: Vec<String> = ["u1", "disruption", "risk", "objective", "classification", "certified", "nondominated"]
            .map(String::from)
            .to_vec();
        h.extend((1..=nz).map(|i| format!("z{i}")));
        h
    }

    pub fn csv_record(&self) -> Vec<String> {
        let mut r = vec![
            self.u1.to_string(),
            self.disruption.to_string(),
            self.risk.to_string(),
            self.objective.to_string(),
            format!("{:?}", self.classification),
            self.certified.to_string(),
            self.nondominated.to_string(),
        ];
        r.extend(self.z.iter().map(f64::to_string));
        r
    }
}

/// Which attacker problem the sweep solves at each u1.
#[derive(Debug, Clone)]
pub enum ProblemFamily {
    WhiteBox,
    Saa { prior: Prior, j: usize, stream: SeededStream },
}

/// Flags every point not dominated in (higher disruption, lower risk).
pub fn mark_nondominated(points: &mut [ParetoPoint]) {
    let keys: Vec<(f64, f64)> = points.iter().map(|p| (p.disruption, p.risk)).collect();
    for (i, p) in points.iter_mut().enumerate() {
        let (d, r) = keys[i];
        p.nondominated = !keys
            .iter()
            .any(|&(d2, r2)| d2 >= d && r2 <= r && (d2 > d || r2 < r));
    }
}

/// Solves the chosen family at each u1 and measures each solution under the
/// true joint. Normalizers do not depend on u1, so they are computed once.
pub fn pareto_sweep(
    truth: &GaussianJoint,
    z_true: &Vector,
    region: &BoxRegion,
    family: &ProblemFamily,
    grid: &[f64],
    cfg: &SolveConfig,
) -> Result<Vec<ParetoPoint>> {
    if let Some(u) = grid.iter().find(|u| !(**u > 0.0 && **u < 1.0)) {
        return Err(Error::InvalidParameter(format!("sweep value {u} is outside (0, 1)")));
    }
    let (dis, det) = match family {
        ProblemFamily::WhiteBox => (build_disruption(truth, z_true)?, build_detection(truth)?),
        ProblemFamily::Saa { prior, j, stream } => average_components(prior, z_true, *j, *stream)?,
    };
    let (phi1, phi2) = normalizers(&dis, &det, region, cfg)?;
    let mut points: Vec<ParetoPoint> = grid
        .par_iter()
        .map(|&u1| {
            let weights = normalize_weights_with(u1, phi1, phi2)?;
            let problem = assemble_wb(&dis, &det, &weights, region, z_true)?;
            let report = solve_white_box(&problem, cfg)?;
            let z = report.z_star;
            Ok(ParetoPoint {
                u1,
                disruption: eval_kl_to_truth(truth, z_true, &z)?,
                risk: -log_ratio_to_mode(truth, &z)?,
                objective: report.objective,
                classification: report.classification.unwrap_or(Classification::Indefinite),
                certified: report.certified,
                nondominated: false,
                z,
            })
        })
        .collect::<Result<_>>()?;
    mark_nondominated(&mut points);
    Ok(points)
}

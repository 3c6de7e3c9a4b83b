//! Config-driven application runs: build the decisionmaker's model, attack it
//! with every configured method, and write table, bundle, sweep and path
//! outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::convexity::{analyze, ConvexityReport, DEFAULT_STEP};
use crate::error::{check_dim, Error, Result};
use crate::eval::{
    default_u1_grid, evaluation_row, pareto_sweep, rn_baseline, EvaluationRow, ParetoPoint, ProblemFamily,
};
use crate::gauss::{GaussianJoint, Partition};
use crate::greybox::{average_components, solve_saa, solve_sga, NiwPrior, Prior, SgaConfig};
use crate::linalg::Vector;
use crate::models::{
    fit_mle, fit_regression, lgssm_observations, lgssm_unroll, load_csv, regression_to_joint, LgssmPrior,
    LgssmSpec, RegressionPrior, RegressionSpec,
};
use crate::objective::BoxRegion;
use crate::solvers::{annotate, build_problem, solve_quadratic, solve_white_box, Method, SolveConfig, SolveReport};
use crate::stochastics::{NiwParams, SeededStream};

/// Box around the true evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum RegionSpec {
    HalfWidth { half_width: f64 },
    Relative { relative: f64 },
    Bounds { lower: Vec<f64>, upper: Vec<f64> },
}

impl RegionSpec {
    pub fn build(&self, truth: &Vector) -> Result<BoxRegion> {
        match self {
            RegionSpec::HalfWidth { half_width } => BoxRegion::around(truth, *half_width),
            RegionSpec::Relative { relative } => BoxRegion::relative(truth, *relative),
            RegionSpec::Bounds { lower, upper } => {
                check_dim("region lower bound", truth.len(), lower.len())?;
                BoxRegion::new_allow_degenerate(Vector::from_vec(lower.clone()), Vector::from_vec(upper.clone()))
            }
        }
    }
}

/// Region file: the true evidence plus its box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFile {
    pub truth: Vec<f64>,
    #[serde(flatten)]
    pub bounds: RegionSpec,
}

impl RegionFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn build(&self) -> Result<(Vector, BoxRegion)> {
        let z = Vector::from_vec(self.truth.clone());
        let region = self.bounds.build(&z)?;
        Ok((z, region))
    }
}

/// How the decisionmaker's joint is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    /// MLE fit of the named columns; latent columns first in the joint.
    Mle {
        data: PathBuf,
        latent: Vec<String>,
        evidence: Vec<String>,
    },
    /// OLS fit of `response` on `predictors`.
    Regression {
        data: PathBuf,
        response: String,
        predictors: Vec<String>,
    },
    Lgssm {
        #[serde(default)]
        spec: LgssmSpec,
    },
    File { path: PathBuf },
}

/// The attacker's beliefs, usually centred on the decisionmaker's model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    PointMass,
    /// NIW with `μ₀ = μ`, `Ψ = Σ` of the decisionmaker's joint.
    Niw { kappa: f64, nu: f64 },
    /// Requires a regression model source.
    Regression {
        kappa: f64,
        nu: f64,
        sigma2_shape: f64,
        sigma2_scale: f64,
    },
    /// Requires an LG-SSM model source.
    Lgssm {
        #[serde(default = "one")]
        mean_var: f64,
        #[serde(default = "two")]
        variance_shape: Option<f64>,
    },
    File { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

fn two() -> Option<f64> {
    Some(2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathStudy {
    pub q: Vec<f64>,
    pub u1: Vec<f64>,
    pub saa_j: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplicationConfig {
    pub name: String,
    pub seed: u64,
    pub model: ModelSource,
    /// Defaults to the bundled sensor readings for LG-SSM models.
    #[serde(default)]
    pub truth_evidence: Option<Vec<f64>>,
    pub region: RegionSpec,
    pub u1: f64,
    pub prior: PriorSpec,
    #[serde(default)]
    pub saa_j: Vec<usize>,
    #[serde(default)]
    pub sga: Vec<SgaConfig>,
    #[serde(default = "one_usize")]
    pub rn_draws: usize,
    /// `Some([])` sweeps the default grid.
    #[serde(default)]
    pub pareto_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub paths: Option<PathStudy>,
    #[serde(default)]
    pub solver: SolveConfig,
}

fn one_usize() -> usize {
    1
}

impl ApplicationConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// A decisionmaker model plus whatever structure the priors need.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub joint: GaussianJoint,
    pub regression: Option<RegressionSpec>,
    pub lgssm: Option<LgssmSpec>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn column_indices(names: &[String], data: &crate::models::DataMatrix) -> Result<Vec<usize>> {
    names.iter().map(|n| data.column_index(n)).collect()
}

pub fn build_model(src: &ModelSource, base: &Path) -> Result<BuiltModel> {
    match src {
        ModelSource::Mle { data, latent, evidence } => {
            let d = load_csv(resolve(base, data))?;
            let mut cols = column_indices(latent, &d)?;
            cols.extend(column_indices(evidence, &d)?);
            let sub = d.columns(&cols)?;
            let joint = fit_mle(&sub, Partition::contiguous(latent.len(), evidence.len())?)?;
            Ok(BuiltModel {
                joint,
                regression: None,
                lgssm: None,
            })
        }
        ModelSource::Regression {
            data,
            response,
            predictors,
        } => {
            let d = load_csv(resolve(base, data))?;
            let spec = fit_regression(&d, &column_indices(predictors, &d)?, d.column_index(response)?)?;
            Ok(BuiltModel {
                joint: regression_to_joint(&spec)?,
                regression: Some(spec),
                lgssm: None,
            })
        }
        ModelSource::Lgssm { spec } => Ok(BuiltModel {
            joint: lgssm_unroll(spec)?,
            regression: None,
            lgssm: Some(spec.clone()),
        }),
        ModelSource::File { path } => {
            let text = std::fs::read_to_string(resolve(base, path))?;
            Ok(BuiltModel {
                joint: serde_json::from_str(&text)?,
                regression: None,
                lgssm: None,
            })
        }
    }
}

pub fn build_prior(spec: &PriorSpec, model: &BuiltModel, base: &Path) -> Result<Prior> {
    match spec {
        PriorSpec::PointMass => Ok(Prior::PointMass {
            model: model.joint.clone(),
        }),
        PriorSpec::Niw { kappa, nu } => {
            let j = &model.joint;
            let params = NiwParams::new(j.mean().clone(), *kappa, j.cov().clone(), *nu)?;
            Ok(Prior::Niw(NiwPrior::new(params, j.partition())))
        }
        PriorSpec::Regression {
            kappa,
            nu,
            sigma2_shape,
            sigma2_scale,
        } => {
            let spec = model
                .regression
                .as_ref()
                .ok_or_else(|| Error::Config("a regression prior needs a regression model".into()))?;
            Ok(Prior::Regression(RegressionPrior::centered_on(
                spec,
                *kappa,
                *nu,
                *sigma2_shape,
                *sigma2_scale,
            )?))
        }
        PriorSpec::Lgssm {
            mean_var,
            variance_shape,
        } => {
            let center = model
                .lgssm
                .clone()
                .ok_or_else(|| Error::Config("an LG-SSM prior needs an LG-SSM model".into()))?;
            let prior = LgssmPrior {
                center,
                mean_var: *mean_var,
                variance_shape: *variance_shape,
                ..LgssmPrior::default()
            };
            prior.check()?;
            Ok(Prior::Lgssm(prior))
        }
        PriorSpec::File { path } => {
            let text = std::fs::read_to_string(resolve(base, path))?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub q: f64,
    pub u1: f64,
    pub attack: String,
    pub t: usize,
    pub sensor: usize,
    pub z_true: f64,
    pub z: f64,
}

impl PathRow {
    pub const CSV_HEADER: [&'static str; 7] = ["q", "u1", "attack", "t", "sensor", "z_true", "z"];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.q.to_string(),
            self.u1.to_string(),
            self.attack.clone(),
            self.t.to_string(),
            self.sensor.to_string(),
            self.z_true.to_string(),
            self.z.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApplicationReport {
    pub name: String,
    pub seed: u64,
    pub u1: f64,
    pub truth_evidence: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub convexity: ConvexityReport,
    pub rows: Vec<EvaluationRow>,
    pub reports: Vec<SolveReport>,
    pub pareto: Option<Vec<ParetoPoint>>,
    pub paths: Option<Vec<PathRow>>,
}

/// Independent stream families per attack kind.
pub const SAA_STREAM: u64 = 1;
pub const SGA_STREAM: u64 = 2;
pub const RN_STREAM: u64 = 3;
pub const SWEEP_STREAM: u64 = 4;

fn hyper_string(pairs: &[(&str, f64)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

fn truth_evidence(cfg: &ApplicationConfig, model: &BuiltModel) -> Result<Vector> {
    let z = match (&cfg.truth_evidence, &model.lgssm) {
        (Some(z), _) => Vector::from_vec(z.clone()),
        (None, Some(spec)) => lgssm_observations(spec.horizon)?,
        (None, None) => return Err(Error::Config("truth_evidence is required for this model".into())),
    };
    check_dim("truth evidence", model.joint.nz(), z.len())?;
    Ok(z)
}

/// Runs every configured attack; `base` resolves relative paths.
pub fn execute(cfg: &ApplicationConfig, base: &Path) -> Result<ApplicationReport> {
    cfg.solver.check()?;
    let solver = SolveConfig {
        seed: cfg.seed,
        ..cfg.solver.clone()
    };
    let model = build_model(&cfg.model, base)?;
    let truth = &model.joint;
    let z_true = truth_evidence(cfg, &model)?;
    let region = cfg.region.build(&z_true)?;
    let prior = build_prior(&cfg.prior, &model, base)?;
    let wb = crate::solvers::white_box_problem(truth, &z_true, cfg.u1, &region, &solver)?;
    let convexity = analyze(&wb, Some(DEFAULT_STEP))?;

    let mut rows = Vec::new();
    let mut reports = Vec::new();

    let wb_report = solve_white_box(&wb, &solver)?;
    rows.push(evaluation_row("WB", "", truth, &wb, &wb_report)?);
    reports.push(wb_report);

    let saa_stream = SeededStream::with_stream(cfg.seed, SAA_STREAM);
    for &j in &cfg.saa_j {
        let report = solve_saa(&prior, &z_true, cfg.u1, &region, j, &solver, saa_stream)?;
        rows.push(evaluation_row("SAA", &format!("J={j}"), truth, &wb, &report)?);
        reports.push(report);
    }

    for (k, sga) in cfg.sga.iter().enumerate() {
        let stream = SeededStream::with_stream(cfg.seed, SGA_STREAM).child(k as u64);
        let report = solve_sga(&prior, &z_true, cfg.u1, &region, sga, &solver, stream)?;
        let name = format!("SGA-{}", sga.variant.name());
        rows.push(evaluation_row(&name, &hyper_string(&sga.hyperparams()), truth, &wb, &report)?);
        reports.push(report);
    }

    let rn_stream = SeededStream::with_stream(cfg.seed, RN_STREAM);
    for k in 0..cfg.rn_draws {
        let z = rn_baseline(&z_true, &region, &mut rn_stream.child(k as u64).rng())?;
        let report = fixed_point_report(&wb, z, cfg.seed);
        rows.push(evaluation_row("RN", &format!("draw={k}"), truth, &wb, &report)?);
        reports.push(report);
    }

    let pareto = match &cfg.pareto_grid {
        None => None,
        Some(grid) => {
            let grid = if grid.is_empty() { default_u1_grid() } else { grid.clone() };
            Some(pareto_sweep(truth, &z_true, &region, &ProblemFamily::WhiteBox, &grid, &solver)?)
        }
    };

    let paths = match &cfg.paths {
        None => None,
        Some(study) => Some(path_study(study, truth, &prior, &z_true, &solver, cfg.seed)?),
    };

    Ok(ApplicationReport {
        name: cfg.name.clone(),
        seed: cfg.seed,
        u1: cfg.u1,
        truth_evidence: z_true.iter().copied().collect(),
        lower: region.lower().iter().copied().collect(),
        upper: region.upper().iter().copied().collect(),
        convexity,
        rows,
        reports,
        pareto,
        paths,
    })
}

/// Report for a baseline point, scored under the white-box problem.
pub fn fixed_point_report(wb: &crate::objective::AttackProblem, z: Vector, seed: u64) -> SolveReport {
    let mut r = SolveReport::bare(z, 0.0, Method::RandomNoise, false, 0);
    annotate(&mut r, wb, crate::convexity::classify(wb), seed);
    r
}

/// Corrupted sensor paths for each `(q, u1)`: white-box and SAA.
fn path_study(
    study: &PathStudy,
    truth: &GaussianJoint,
    prior: &Prior,
    z_true: &Vector,
    solver: &SolveConfig,
    seed: u64,
) -> Result<Vec<PathRow>> {
    let wb_comp = (
        crate::objective::build_disruption(truth, z_true)?,
        crate::objective::build_detection(truth)?,
    );
    let saa_comp = average_components(prior, z_true, study.saa_j, SeededStream::with_stream(seed, SWEEP_STREAM))?;
    let mut rows = Vec::new();
    for &q in &study.q {
        let region = BoxRegion::relative(z_true, q)?;
        for &u1 in &study.u1 {
            for (name, (dis, det)) in [("WB".to_string(), &wb_comp), (format!("SAA(J={})", study.saa_j), &saa_comp)] {
                let problem = build_problem(dis, det, u1, &region, z_true, solver)?;
                let (report, _) = solve_quadratic(&problem.h, &problem.g, &region, Some(z_true), solver)?;
                for (i, (&zt, &z)) in z_true.iter().zip(report.z_star.iter()).enumerate() {
                    rows.push(PathRow {
                        q,
                        u1,
                        attack: name.clone(),
                        t: i / 2,
                        sensor: i % 2 + 1,
                        z_true: zt,
                        z,
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_csv(path: &Path, header: &[String], records: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in records {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Files written by [`write_outputs`].
#[derive(Debug, Clone, Default, Serialize)]
pub struct OutputFiles {
    pub table: PathBuf,
    pub bundle: PathBuf,
    pub pareto: Option<PathBuf>,
    pub paths: Option<PathBuf>,
}

pub fn write_outputs(report: &ApplicationReport, out_dir: &Path) -> Result<OutputFiles> {
    std::fs::create_dir_all(out_dir)?;
    let nz = report.truth_evidence.len();
    let mut files = OutputFiles {
        table: out_dir.join(format!("{}_table.csv", report.name)),
        bundle: out_dir.join(format!("{}_bundle.json", report.name)),
        ..OutputFiles::default()
    };
    write_csv(&files.table, &EvaluationRow::csv_header(nz), report.rows.iter().map(EvaluationRow::csv_record))?;
    std::fs::write(&files.bundle, serde_json::to_string_pretty(report)?)?;
    if let Some(points) = &report.pareto {
        let p = out_dir.join(format!("{}_pareto.csv", report.name));
        write_csv(&p, &ParetoPoint::csv_header(nz), points.iter().map(ParetoPoint::csv_record))?;
        files.pareto = Some(p);
    }
    if let Some(rows) = &report.paths {
        let p = out_dir.join(format!("{}_paths.csv", report.name));
        let header: Vec<String> = PathRow::CSV_HEADER.map(String::from).to_vec();
        write_csv(&p, &header, rows.iter().map(PathRow::csv_record))?;
        files.paths = Some(p);
    }
    Ok(files)
}

/// Loads a config, runs it and writes its outputs.
pub fn run_application(config_path: &Path, out_dir: &Path) -> Result<(ApplicationReport, OutputFiles)> {
    let cfg = ApplicationConfig::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let report = execute(&cfg, base)?;
    let files = write_outputs(&report, out_dir)?;
    Ok((report, files))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_specs_parse() {
        let r: RegionSpec = serde_json::from_str(r#"{"half_width": 0.15}"#).unwrap();
        assert_eq!(r, RegionSpec::HalfWidth { half_width: 0.15 });
        let r: RegionSpec = serde_json::from_str(r#"{"relative": 0.1}"#).unwrap();
        let b = r.build(&Vector::from_row_slice(&[10.0, -5.0])).unwrap();
        assert_eq!(b.lower()[0], 9.0);
        assert_eq!(b.upper()[1], -4.5);
        let r: RegionSpec = serde_json::from_str(r#"{"lower": [0.0], "upper": [1.0]}"#).unwrap();
        assert!(r.build(&Vector::zeros(2)).is_err());
    }

    #[test]
    fn region_file_parses() {
        let f: RegionFile = serde_json::from_str(r#"{"truth": [1.0, 2.0], "half_width": 0.5}"#).unwrap();
        let (z, r) = f.build().unwrap();
        assert_eq!(z.len(), 2);
        assert_eq!(r.upper()[1], 2.5);
        assert!(serde_json::from_str::<RegionFile>(r#"{"truth": [1.0]}"#).is_err());
    }

    #[test]
    fn small_lgssm_application_runs() {
        let cfg = ApplicationConfig {
            name: "tiny".into(),
            seed: 3,
            model: ModelSource::Lgssm {
                spec: LgssmSpec {
                    horizon: 2,
                    ..LgssmSpec::default()
                },
            },
            truth_evidence: None,
            region: RegionSpec::Relative { relative: 0.1 },
            u1: 0.5,
            prior: PriorSpec::Lgssm {
                mean_var: 1.0,
                variance_shape: Some(2.0),
            },
            saa_j: vec![20],
            sga: vec![SgaConfig {
                max_iters: 50,
                normalization_samples: 20,
                ..SgaConfig::default()
            }],
            rn_draws: 2,
            pareto_grid: Some(vec![0.25, 0.75]),
            paths: Some(PathStudy {
                q: vec![0.1],
                u1: vec![0.5],
                saa_j: 10,
            }),
            solver: SolveConfig::default(),
        };
        let report = execute(&cfg, Path::new(".")).unwrap();
        assert_eq!(report.rows.len(), 1 + 1 + 1 + 2);
        assert_eq!(report.rows[0].attack, "WB");
        assert!(report.rows[0].wb_objective >= report.rows[4].wb_objective - 1e-12);
        assert_eq!(report.paths.as_ref().unwrap().len(), 2 * 6);
        let dir = tempfile::tempdir().unwrap();
        let files = write_outputs(&report, dir.path()).unwrap();
        assert!(files.table.exists() && files.pareto.unwrap().exists() && files.paths.unwrap().exists());
    }
}

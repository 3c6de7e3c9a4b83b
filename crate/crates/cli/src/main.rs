use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mvg_attack::apps::{self, RegionFile, RN_STREAM, SAA_STREAM, SGA_STREAM, SWEEP_STREAM};
use mvg_attack::convexity::{analyze, overcoverage_study, CovarianceSampler, OvercoverageSummary, DEFAULT_STEP};
use mvg_attack::eval::{default_u1_grid, evaluation_row, pareto_sweep, rn_baseline, EvaluationRow, ParetoPoint, ProblemFamily};
use mvg_attack::greybox::{solve_saa, solve_sga};
use mvg_attack::models::{fit_mle, fit_regression, lgssm_unroll, load_csv, regression_to_joint, LgssmSpec};
use mvg_attack::solvers::{solve_white_box, white_box_problem, SolveReport, StepRule};
use mvg_attack::{BoxRegion, Error, GaussianJoint, Partition, Prior, Result, SeededStream, SgaConfig, SgaVariant, SolveConfig, Vector};

/// Adversarial attacks on multivariate Gaussian inference.
#[derive(Debug, Parser)]
#[command(name = "mvg-attack", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Root seed for every random stream (default 0; configs carry their own).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Decisionmaker's joint (model JSON).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Attacker's prior (prior JSON).
    #[arg(long, global = true)]
    prior: Option<PathBuf>,
    /// True evidence and box (region JSON).
    #[arg(long, global = true)]
    region: Option<PathBuf>,
    /// Disruption weight in [0, 1]; detection gets 1 − u1.
    #[arg(long, global = true, default_value_t = 0.5)]
    u1: f64,
    /// Output file (directory for `bench run`); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one attack and print its report as JSON.
    #[command(subcommand)]
    Attack(AttackCmd),
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    #[command(subcommand)]
    Sweep(SweepCmd),
    /// Build a model file from data or an LG-SSM spec.
    #[command(subcommand, name = "build-model")]
    BuildModel(BuildCmd),
    #[command(subcommand)]
    Bench(BenchCmd),
    #[command(subcommand)]
    Baseline(BaselineCmd),
}

#[derive(Debug, Args, Clone)]
struct SolverArgs {
    /// Fail unless the reported optimum is certified.
    #[arg(long)]
    certify: bool,
    /// Random starts for indefinite problems (default max(20, 4·|Z|)).
    #[arg(long)]
    starts: Option<usize>,
    /// Largest dimension solved by vertex enumeration on convex problems.
    #[arg(long, default_value_t = 16)]
    vertex_limit: usize,
    #[arg(long, default_value_t = 20_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    grad_tol: f64,
    #[arg(long, value_enum, default_value_t = StepArg::Backtracking)]
    step_rule: StepArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StepArg {
    Fixed,
    Backtracking,
}

impl SolverArgs {
    fn config(&self, seed: u64) -> SolveConfig {
        SolveConfig {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            step_rule: match self.step_rule {
                StepArg::Fixed => StepRule::Fixed,
                StepArg::Backtracking => StepRule::Backtracking,
            },
            starts: self.starts,
            vertex_enum_limit: self.vertex_limit,
            seed,
        }
    }
}

#[derive(Debug, Subcommand)]
enum AttackCmd {
    /// White-box attack.
    Wb {
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Grey-box attack by sample-average approximation.
    GbSaa {
        /// Number of prior draws.
        #[arg(long)]
        j: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Grey-box attack by stochastic gradient ascent.
    GbSga {
        #[arg(long, default_value = "adam")]
        variant: SgaVariant,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, default_value_t = 1e-8)]
        eps: f64,
        #[arg(long, default_value_t = 0.9)]
        tau1: f64,
        #[arg(long, default_value_t = 0.9)]
        tau2: f64,
        /// Stop once a step moves z by at most this distance.
        #[arg(long, default_value_t = 1e-4)]
        stop_delta: f64,
        #[arg(long, default_value_t = 10_000)]
        sga_max_iters: usize,
        /// Prior draws used for the normalizers and reported objective.
        #[arg(long, default_value_t = 1000)]
        normalization_samples: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Debug, Subcommand)]
enum AnalyzeCmd {
    /// Spectral classification and u1 transition bounds (JSON).
    Convexity {
        /// Grid step of the brute-force transition search; 0 skips it.
        #[arg(long, default_value_t = DEFAULT_STEP)]
        step: f64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Bound overcoverage on random covariances (CSV).
    Overcoverage {
        #[arg(long, default_value = "ggt")]
        sampler: CovarianceSampler,
        /// Total dimension |Y| + |Z|.
        #[arg(long)]
        n: usize,
        /// Evidence dimension |Z|.
        #[arg(long)]
        nz: usize,
        #[arg(long, default_value_t = 1.0)]
        phi1: f64,
        #[arg(long, default_value_t = 1.0)]
        phi2: f64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        step: f64,
    },
}

#[derive(Debug, Subcommand)]
enum SweepCmd {
    /// Disruption/risk trade-off across u1 (CSV).
    Pareto {
        /// Comma-separated u1 values; the 21-point default grid otherwise.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Sweep the sample-average problem over this many prior draws.
        #[arg(long)]
        j: Option<usize>,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Debug, Subcommand)]
enum BuildCmd {
    /// Maximum-likelihood joint of selected CSV columns.
    Mle {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        latent: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        evidence: Vec<String>,
    },
    /// Joint of a least-squares regression and its predictors.
    Regression {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        response: String,
        #[arg(long, value_delimiter = ',', required = true)]
        predictors: Vec<String>,
    },
    /// Unrolled two-object tracking model.
    Lgssm {
        /// Spec JSON; defaults to the built-in parameters.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
enum BenchCmd {
    /// Run application configs and write their tables and bundles.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum BaselineCmd {
    /// Uniform random noise inside the box (CSV).
    Rn {
        #[arg(long, default_value_t = 1)]
        draws: usize,
    },
}

impl Global {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("--{flag} is required for this command")))
}

fn load_model(g: &Global) -> Result<GaussianJoint> {
    let path = require(&g.model, "model")?;
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_prior(g: &Global) -> Result<Prior> {
    let path = require(&g.prior, "prior")?;
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_region(g: &Global) -> Result<(Vector, BoxRegion)> {
    RegionFile::load(require(&g.region, "region")?)?.build()
}

fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => writeln!(std::io::stdout(), "{text}")?,
    }
    Ok(())
}

fn emit_csv(header: &[String], rows: impl IntoIterator<Item = Vec<String>>, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => apps::write_csv(p, header, rows),
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(header)?;
            for r in rows {
                w.write_record(&r)?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn finish(report: SolveReport, certify: bool, out: Option<&Path>) -> Result<()> {
    let report = if certify { report.require_certified()? } else { report };
    emit_json(&report, out)
}

fn attack(g: &Global, cmd: &AttackCmd) -> Result<()> {
    let joint = load_model(g)?;
    let (z_true, region) = load_region(g)?;
    match cmd {
        AttackCmd::Wb { solver } => {
            let cfg = solver.config(g.seed());
            let problem = white_box_problem(&joint, &z_true, g.u1, &region, &cfg)?;
            finish(solve_white_box(&problem, &cfg)?, solver.certify, g.out.as_deref())
        }
        AttackCmd::GbSaa { j, solver } => {
            let prior = load_prior(g)?;
            let cfg = solver.config(g.seed());
            let stream = SeededStream::with_stream(g.seed(), SAA_STREAM);
            let report = solve_saa(&prior, &z_true, g.u1, &region, *j, &cfg, stream)?;
            finish(report, solver.certify, g.out.as_deref())
        }
        AttackCmd::GbSga {
            variant,
            alpha,
            eps,
            tau1,
            tau2,
            stop_delta,
            sga_max_iters,
            normalization_samples,
            solver,
        } => {
            let prior = load_prior(g)?;
            let sga = SgaConfig {
                variant: *variant,
                alpha: *alpha,
                eps: *eps,
                tau1: *tau1,
                tau2: *tau2,
                stop_delta: *stop_delta,
                max_iters: *sga_max_iters,
                normalization_samples: *normalization_samples,
            };
            let cfg = solver.config(g.seed());
            let stream = SeededStream::with_stream(g.seed(), SGA_STREAM).child(0);
            let report = solve_sga(&prior, &z_true, g.u1, &region, &sga, &cfg, stream)?;
            finish(report, solver.certify, g.out.as_deref())
        }
    }
}

fn analyze_cmd(g: &Global, cmd: &AnalyzeCmd) -> Result<()> {
    match cmd {
        AnalyzeCmd::Convexity { step, solver } => {
            let joint = load_model(g)?;
            let (z_true, region) = load_region(g)?;
            let problem = white_box_problem(&joint, &z_true, g.u1, &region, &solver.config(g.seed()))?;
            let step = (*step > 0.0).then_some(*step);
            emit_json(&analyze(&problem, step)?, g.out.as_deref())
        }
        AnalyzeCmd::Overcoverage {
            sampler,
            n,
            nz,
            phi1,
            phi2,
            trials,
            step,
        } => {
            let s = overcoverage_study(*sampler, (*n, *nz), (*phi1, *phi2), *trials, *step, SeededStream::new(g.seed()))?;
            let header: Vec<String> = OvercoverageSummary::CSV_HEADER.map(String::from).to_vec();
            emit_csv(&header, [s.csv_record()], g.out.as_deref())
        }
    }
}

fn sweep(g: &Global, cmd: &SweepCmd) -> Result<()> {
    let SweepCmd::Pareto { grid, j, solver } = cmd;
    let joint = load_model(g)?;
    let (z_true, region) = load_region(g)?;
    let family = match j {
        None => ProblemFamily::WhiteBox,
        Some(j) => ProblemFamily::Saa {
            prior: load_prior(g)?,
            j: *j,
            stream: SeededStream::with_stream(g.seed(), SWEEP_STREAM),
        },
    };
    let grid = grid.clone().unwrap_or_else(default_u1_grid);
    let points = pareto_sweep(&joint, &z_true, &region, &family, &grid, &solver.config(g.seed()))?;
    emit_csv(
        &ParetoPoint::csv_header(z_true.len()),
        points.iter().map(ParetoPoint::csv_record),
        g.out.as_deref(),
    )
}

fn build(g: &Global, cmd: &BuildCmd) -> Result<()> {
    let joint = match cmd {
        BuildCmd::Mle { data, latent, evidence } => {
            let d = load_csv(data)?;
            let cols: Vec<usize> = latent
                .iter()
                .chain(evidence)
                .map(|c| d.column_index(c))
                .collect::<Result<_>>()?;
            fit_mle(&d.columns(&cols)?, Partition::contiguous(latent.len(), evidence.len())?)?
        }
        BuildCmd::Regression {
            data,
            response,
            predictors,
        } => {
            let d = load_csv(data)?;
            let idx: Vec<usize> = predictors.iter().map(|c| d.column_index(c)).collect::<Result<_>>()?;
            regression_to_joint(&fit_regression(&d, &idx, d.column_index(response)?)?)?
        }
        BuildCmd::Lgssm { spec, horizon } => {
            let mut s: LgssmSpec = match spec {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
                None => LgssmSpec::default(),
            };
            if let Some(h) = horizon {
                s.horizon = *h;
            }
            lgssm_unroll(&s)?
        }
    };
    emit_json(&joint, g.out.as_deref())
}

fn bench(g: &Global, cmd: &BenchCmd) -> Result<()> {
    let BenchCmd::Run { configs } = cmd;
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut written = Vec::new();
    for c in configs {
        let mut cfg = apps::ApplicationConfig::load(c)?;
        if let Some(seed) = g.seed {
            cfg.seed = seed;
        }
        let base = c.parent().unwrap_or(Path::new("."));
        let report = apps::execute(&cfg, base)?;
        written.push(apps::write_outputs(&report, &out)?);
    }
    emit_json(&written, None)
}

fn baseline(g: &Global, cmd: &BaselineCmd) -> Result<()> {
    let BaselineCmd::Rn { draws } = cmd;
    let joint = load_model(g)?;
    let (z_true, region) = load_region(g)?;
    let cfg = SolveConfig {
        seed: g.seed(),
        ..SolveConfig::default()
    };
    let wb = white_box_problem(&joint, &z_true, g.u1, &region, &cfg)?;
    let stream = SeededStream::with_stream(g.seed(), RN_STREAM);
    let rows = (0..*draws)
        .map(|k| {
            let z = rn_baseline(&z_true, &region, &mut stream.child(k as u64).rng())?;
            let report = apps::fixed_point_report(&wb, z, g.seed());
            evaluation_row("RN", &format!("draw={k}"), &joint, &wb, &report)
        })
        .collect::<Result<Vec<EvaluationRow>>>()?;
    emit_csv(
        &EvaluationRow::csv_header(z_true.len()),
        rows.iter().map(EvaluationRow::csv_record),
        g.out.as_deref(),
    )
}

fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Attack(c) => attack(g, c),
        Command::Analyze(c) => analyze_cmd(g, c),
        Command::Sweep(c) => sweep(g, c),
        Command::BuildModel(c) => build(g, c),
        Command::Bench(c) => bench(g, c),
        Command::Baseline(c) => baseline(g, c),
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    let err = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{err}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim(), 2),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(Error::Csv(e)) if matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), &e.to_string(), 1),
    }
}

//! Decisionmaker joints and attacker priors for the bundled applications:
//! an MLE fit from tabular data, a linear regression with Gaussian error, and
//! a constant-velocity state-space model unrolled over time.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gauss::{GaussianJoint, Partition};
use crate::linalg::{self, cholesky, select, Matrix, Vector};
use crate::stochastics::{inverse_gamma_sample, mvn_sample, Niw, NiwParams};

/// Observations × variables, with column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub rows: Matrix,
    pub column_names: Vec<String>,
}

impl DataMatrix {
    pub fn new(rows: Matrix, column_names: Vec<String>) -> Result<Self> {
        check_dim("column names", rows.ncols(), column_names.len())?;
        Ok(Self { rows, column_names })
    }

    pub fn n_obs(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.rows.ncols()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Schema(format!("no column named '{name}'")))
    }

    pub fn columns(&self, idx: &[usize]) -> Result<DataMatrix> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.n_vars()) {
            return Err(Error::Schema(format!("column index {bad} out of range")));
        }
        let rows: Vec<usize> = (0..self.n_obs()).collect();
        Ok(DataMatrix {
            rows: select(&self.rows, &rows, idx),
            column_names: idx.iter().map(|&i| self.column_names[i].clone()).collect(),
        })
    }
}

/// Strict CSV reader: header row, every cell numeric.
///
/// Row numbers in errors count data rows from 1; columns count from 1.
pub fn read_csv<R: std::io::Read>(reader: R) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Schema("missing header row".into()));
    }
    let ncols = header.len();
    let mut values = Vec::new();
    let mut nrows = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != ncols {
            return Err(Error::Data {
                row,
                column: record.len().min(ncols) + 1,
                reason: format!("expected {ncols} fields, found {}", record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::Data {
                    row,
                    column: c + 1,
                    reason: format!("missing value in column '{}'", header[c]),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Data {
                row,
                column: c + 1,
                reason: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data {
                    row,
                    column: c + 1,
                    reason: format!("'{cell}' is not finite"),
                });
            }
            values.push(v);
        }
        nrows += 1;
    }
    if nrows == 0 {
        return Err(Error::Schema("no data rows".into()));
    }
    DataMatrix::new(Matrix::from_row_slice(nrows, ncols, &values), header)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<DataMatrix> {
    read_csv(std::fs::File::open(path)?)
}

/// Sample mean and `1/N` covariance.
pub fn mle_moments(data: &DataMatrix) -> Result<(Vector, Matrix)> {
    let n = data.n_obs();
    let p = data.n_vars();
    if n < p + 1 {
        return Err(Error::InvalidParameter(format!(
            "{n} observations cannot support a {p}-variable covariance (need at least {})",
            p + 1
        )));
    }
    let mean = Vector::from_fn(p, |j, _| data.rows.column(j).mean());
    let mut centered = data.rows.clone();
    for j in 0..p {
        let m = mean[j];
        centered.column_mut(j).add_scalar_mut(-m);
    }
    let cov = centered.transpose() * &centered / n as f64;
    Ok((mean, linalg::symmetrize(&cov)))
}

pub fn fit_mle(data: &DataMatrix, partition: Partition) -> Result<GaussianJoint> {
    let (mean, cov) = mle_moments(data)?;
    GaussianJoint::new(mean, cov, partition)
}

/// `Y | z ~ N(β₀ + βᵀz, σ²)` with predictors `Z ~ N(μ_Z, Σ_ZZ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionSpec {
    pub beta0: f64,
    #[serde(with = "linalg::serde_vector")]
    pub beta: Vector,
    pub sigma2: f64,
    #[serde(with = "linalg::serde_vector")]
    pub mu_z: Vector,
    #[serde(with = "linalg::serde_matrix")]
    pub sigma_zz: Matrix,
}

impl RegressionSpec {
    pub fn nz(&self) -> usize {
        self.beta.len()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.nz();
        check_dim("predictor mean", n, self.mu_z.len())?;
        check_dim("predictor covariance rows", n, self.sigma_zz.nrows())?;
        check_dim("predictor covariance cols", n, self.sigma_zz.ncols())?;
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma2 = {} must be > 0", self.sigma2)));
        }
        cholesky(&self.sigma_zz, "predictor covariance")?;
        Ok(())
    }
}

/// Joint over `(Z, Y)`: the predictors first, the response last.
pub fn regression_to_joint(spec: &RegressionSpec) -> Result<GaussianJoint> {
    spec.check()?;
    let n = spec.nz();
    let cross = &spec.sigma_zz * &spec.beta;
    let mut mean = Vector::zeros(n + 1);
    mean.rows_mut(0, n).copy_from(&spec.mu_z);
    mean[n] = spec.beta0 + spec.beta.dot(&spec.mu_z);
    let mut cov = Matrix::zeros(n + 1, n + 1);
    cov.view_mut((0, 0), (n, n)).copy_from(&spec.sigma_zz);
    for i in 0..n {
        cov[(n, i)] = cross[i];
        cov[(i, n)] = cross[i];
    }
    cov[(n, n)] = spec.sigma2 + spec.beta.dot(&cross);
    GaussianJoint::new(mean, cov, Partition::new(vec![n], (0..n).collect())?)
}

/// Ordinary least squares of `response` on the `predictors` columns, with
/// an MLE predictor model. The error variance is `RSS / (N − p − 1)`.
pub fn fit_regression(data: &DataMatrix, predictors: &[usize], response: usize) -> Result<RegressionSpec> {
    let n = data.n_obs();
    let p = predictors.len();
    if n <= p + 1 {
        return Err(Error::InvalidParameter(format!(
            "{n} observations are too few for {p} predictors"
        )));
    }
    let z = data.columns(predictors)?;
    let y = data.columns(&[response])?.rows.column(0).into_owned();
    let mut design = Matrix::from_element(n, p + 1, 1.0);
    design.view_mut((0, 1), (n, p)).copy_from(&z.rows);
    let gram = design.transpose() * &design;
    let coef = cholesky(&gram, "regression design Gram matrix")?.solve(&(design.transpose() * &y));
    let resid = &y - &design * &coef;
    let sigma2 = resid.norm_squared() / (n - p - 1) as f64;
    let (mu_z, sigma_zz) = mle_moments(&z)?;
    let spec = RegressionSpec {
        beta0: coef[0],
        beta: coef.rows(1, p).into_owned(),
        sigma2,
        mu_z,
        sigma_zz,
    };
    spec.check()?;
    Ok(spec)
}

/// Nodes per time slice: two positions, two velocities, two sensors.
pub const LGSSM_SLICE: usize = 6;

/// Constant-velocity tracking model in two dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LgssmSpec {
    /// Number of transitions; the model spans `horizon + 1` slices.
    pub horizon: usize,
    pub dt: f64,
    /// Initial means of `[position 1, position 2, velocity 1, velocity 2]`.
    pub init_means: [f64; 4],
    pub init_vars: [f64; 4],
    pub trans_vars: [f64; 4],
    pub obs_vars: [f64; 2],
}

impl Default for LgssmSpec {
    fn default() -> Self {
        Self {
            horizon: 10,
            dt: 1.0,
            init_means: [0.0, 0.0, 2.0, 1.0],
            init_vars: [0.01, 0.01, 0.25, 0.0625],
            trans_vars: [0.01, 0.01, 0.025, 0.025],
            obs_vars: [0.04, 0.04],
        }
    }
}

impl LgssmSpec {
    pub fn check(&self) -> Result<()> {
        let vars = self.init_vars.iter().chain(&self.trans_vars).chain(&self.obs_vars);
        if let Some(v) = vars.clone().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!("variance {v} must be > 0")));
        }
        if !self.dt.is_finite() || self.init_means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("dt and initial means must be finite".into()));
        }
        Ok(())
    }

    pub fn slices(&self) -> usize {
        self.horizon + 1
    }

    pub fn state_index(slice: usize, k: usize) -> usize {
        slice * LGSSM_SLICE + k
    }

    pub fn sensor_index(slice: usize, k: usize) -> usize {
        slice * LGSSM_SLICE + 4 + k
    }
}

/// One node of a linear-Gaussian network: `X = intercept + Σ w·parent + ε`.
#[derive(Debug, Clone)]
pub struct LinearNode {
    pub intercept: f64,
    pub variance: f64,
    /// `(index, weight)` pairs; every index must precede this node.
    pub parents: Vec<(usize, f64)>,
}

/// Joint moments of a linear-Gaussian network given in topological order.
pub fn linear_gaussian_moments(nodes: &[LinearNode]) -> Result<(Vector, Matrix)> {
    let n = nodes.len();
    let mut mean = Vector::zeros(n);
    let mut cov = Matrix::zeros(n, n);
    for (i, node) in nodes.iter().enumerate() {
        if let Some(&(p, _)) = node.parents.iter().find(|(p, _)| *p >= i) {
            return Err(Error::InvalidModel(format!("node {i} has non-preceding parent {p}")));
        }
        mean[i] = node.intercept + node.parents.iter().map(|&(p, w)| w * mean[p]).sum::<f64>();
        for k in 0..i {
            let c: f64 = node.parents.iter().map(|&(p, w)| w * cov[(p, k)]).sum();
            cov[(i, k)] = c;
            cov[(k, i)] = c;
        }
        let mut var = node.variance;
        for &(p, wp) in &node.parents {
            for &(q, wq) in &node.parents {
                var += wp * wq * cov[(p, q)];
            }
        }
        cov[(i, i)] = var;
    }
    Ok((mean, cov))
}

/// Time-major nodes `[Y₁, Y₂, Ẏ₁, Ẏ₂, Z₁, Z₂]` per slice.
pub fn lgssm_nodes(spec: &LgssmSpec) -> Vec<LinearNode> {
    let mut nodes = Vec::with_capacity(spec.slices() * LGSSM_SLICE);
    for t in 0..spec.slices() {
        for k in 0..4 {
            let node = if t == 0 {
                LinearNode {
                    intercept: spec.init_means[k],
                    variance: spec.init_vars[k],
                    parents: vec![],
                }
            } else {
                let prev = |j| LgssmSpec::state_index(t - 1, j);
                let parents = if k < 2 {
                    vec![(prev(k), 1.0), (prev(k + 2), spec.dt)]
                } else {
                    vec![(prev(k), 1.0)]
                };
                LinearNode {
                    intercept: 0.0,
                    variance: spec.trans_vars[k],
                    parents,
                }
            };
            nodes.push(node);
        }
        for k in 0..2 {
            nodes.push(LinearNode {
                intercept: 0.0,
                variance: spec.obs_vars[k],
                parents: vec![(LgssmSpec::state_index(t, k), 1.0)],
            });
        }
    }
    nodes
}

/// Partition with every sensor node as evidence and every state node latent.
pub fn lgssm_partition(spec: &LgssmSpec) -> Result<Partition> {
    let slices = spec.slices();
    let y = (0..slices).flat_map(|t| (0..4).map(move |k| LgssmSpec::state_index(t, k)));
    let z = (0..slices).flat_map(|t| (0..2).map(move |k| LgssmSpec::sensor_index(t, k)));
    Partition::new(y.collect(), z.collect())
}

pub fn lgssm_unroll(spec: &LgssmSpec) -> Result<GaussianJoint> {
    spec.check()?;
    let (mean, cov) = linear_gaussian_moments(&lgssm_nodes(spec))?;
    GaussianJoint::new(mean, cov, lgssm_partition(spec)?)
}

/// Forward simulation of one trajectory, in the joint's node order.
pub fn lgssm_simulate<R: Rng + ?Sized>(spec: &LgssmSpec, rng: &mut R) -> Result<Vector> {
    let nodes = lgssm_nodes(spec);
    let mut x = Vector::zeros(nodes.len());
    for (i, node) in nodes.iter().enumerate() {
        let noise = Normal::new(0.0, node.variance.sqrt())
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .sample(rng);
        x[i] = node.intercept + node.parents.iter().map(|&(p, w)| w * x[p]).sum::<f64>() + noise;
    }
    Ok(x)
}

/// Sensor readings `(z₁,t, z₂,t)` for `t = 0..=10`.
pub const LGSSM_OBSERVATIONS: [[f64; 2]; 11] = [
    [0.1, 0.2],
    [1.9, 1.1],
    [3.8, 2.3],
    [6.1, 3.1],
    [7.9, 4.2],
    [10.1, 5.1],
    [12.2, 5.9],
    [13.9, 7.1],
    [15.9, 8.2],
    [18.1, 9.4],
    [19.9, 10.2],
];

/// Observed evidence in partition order (time-major, sensor 1 then 2).
pub fn lgssm_observations(horizon: usize) -> Result<Vector> {
    if horizon >= LGSSM_OBSERVATIONS.len() {
        return Err(Error::InvalidParameter(format!(
            "bundled observations cover horizons up to {}",
            LGSSM_OBSERVATIONS.len() - 1
        )));
    }
    Ok(Vector::from_iterator(
        2 * (horizon + 1),
        LGSSM_OBSERVATIONS[..=horizon].iter().flatten().copied(),
    ))
}

/// Hierarchical regression beliefs: NIW predictors, inverse-gamma error
/// variance, and coefficients `(β₀, β) ~ N(center, σ²I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionPrior {
    pub predictors: NiwParams,
    pub sigma2_shape: f64,
    pub sigma2_scale: f64,
    /// `(β₀, β₁, …)`.
    #[serde(with = "linalg::serde_vector")]
    pub coef_center: Vector,
}

impl RegressionPrior {
    /// Beliefs centred on a fitted specification.
    pub fn centered_on(spec: &RegressionSpec, kappa: f64, nu: f64, sigma2_shape: f64, sigma2_scale: f64) -> Result<Self> {
        let mut center = Vector::zeros(spec.nz() + 1);
        center[0] = spec.beta0;
        center.rows_mut(1, spec.nz()).copy_from(&spec.beta);
        let prior = Self {
            predictors: NiwParams::new(spec.mu_z.clone(), kappa, spec.sigma_zz.clone(), nu)?,
            sigma2_shape,
            sigma2_scale,
            coef_center: center,
        };
        prior.check()?;
        Ok(prior)
    }

    pub fn nz(&self) -> usize {
        self.predictors.dim()
    }

    pub fn check(&self) -> Result<()> {
        self.predictors.check()?;
        check_dim("coefficient center", self.nz() + 1, self.coef_center.len())?;
        if !(self.sigma2_shape > 0.0 && self.sigma2_scale > 0.0) {
            return Err(Error::InvalidParameter("inverse-gamma shape and scale must be > 0".into()));
        }
        Ok(())
    }

    pub fn sampler(&self) -> Result<RegressionSampler> {
        self.check()?;
        Ok(RegressionSampler {
            prior: self.clone(),
            niw: Niw::new(self.predictors.clone())?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RegressionSampler {
    prior: RegressionPrior,
    niw: Niw,
}

impl RegressionSampler {
    pub fn sample_spec<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<RegressionSpec> {
        let (mu_z, sigma_zz) = self.niw.sample(rng)?;
        let sigma2 = inverse_gamma_sample(self.prior.sigma2_shape, self.prior.sigma2_scale, rng)?;
        let k = self.prior.coef_center.len();
        let coef = mvn_sample(&self.prior.coef_center, &(Matrix::identity(k, k) * sigma2), rng)?;
        Ok(RegressionSpec {
            beta0: coef[0],
            beta: coef.rows(1, k - 1).into_owned(),
            sigma2,
            mu_z,
            sigma_zz,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GaussianJoint> {
        regression_to_joint(&self.sample_spec(rng)?)
    }
}

/// State-space beliefs: normal initial means around the centre and
/// inverse-gamma variances whose mean is the centre's variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LgssmPrior {
    pub center: LgssmSpec,
    /// Variance of the normal belief on each initial mean; 0 fixes them.
    pub mean_var: f64,
    /// Inverse-gamma shape for every variance; `None` fixes them.
    pub variance_shape: Option<f64>,
    pub var_floor: f64,
}

impl Default for LgssmPrior {
    fn default() -> Self {
        Self {
            center: LgssmSpec::default(),
            mean_var: 1.0,
            variance_shape: Some(2.0),
            var_floor: 1e-8,
        }
    }
}

impl LgssmPrior {
    pub fn point_mass(center: LgssmSpec) -> Self {
        Self {
            center,
            mean_var: 0.0,
            variance_shape: None,
            var_floor: 1e-8,
        }
    }

    pub fn check(&self) -> Result<()> {
        self.center.check()?;
        if !(self.mean_var >= 0.0 && self.mean_var.is_finite()) {
            return Err(Error::InvalidParameter(format!("mean_var = {} must be >= 0", self.mean_var)));
        }
        if let Some(a) = self.variance_shape {
            if !(a > 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "variance_shape = {a} must exceed 1 for the belief mean to exist"
                )));
            }
        }
        if !(self.var_floor > 0.0) {
            return Err(Error::InvalidParameter("var_floor must be > 0".into()));
        }
        Ok(())
    }

    pub fn sample_spec<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LgssmSpec> {
        let mut spec = self.center.clone();
        if self.mean_var > 0.0 {
            let sd = self.mean_var.sqrt();
            for m in spec.init_means.iter_mut() {
                *m += sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        if let Some(shape) = self.variance_shape {
            let floor = self.var_floor;
            let mut draw = |v: &mut f64| -> Result<()> {
                *v = inverse_gamma_sample(shape, *v * (shape - 1.0), rng)?.max(floor);
                Ok(())
            };
            for v in spec
                .init_vars
                .iter_mut()
                .chain(spec.trans_vars.iter_mut())
                .chain(spec.obs_vars.iter_mut())
            {
                draw(v)?;
            }
        }
        Ok(spec)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GaussianJoint> {
        lgssm_unroll(&self.sample_spec(rng)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::{condition, Block};

    #[test]
    fn csv_parses_and_reports_locations() {
        let ok = read_csv("a,b\n1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(ok.rows, Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(ok.column_names, vec!["a", "b"]);
        match read_csv("a,b\n1,2\n3,\n".as_bytes()) {
            Err(Error::Data { row: 2, column: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match read_csv("a,b\n1,x\n".as_bytes()) {
            Err(Error::Data { row: 1, column: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_csv("a,b\n1,2,3\n".as_bytes()).is_err());
        assert!(read_csv("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn mle_rejects_degenerate_data() {
        let repeated = DataMatrix::new(Matrix::from_element(5, 2, 1.0), vec!["a".into(), "b".into()]).unwrap();
        assert!(fit_mle(&repeated, Partition::contiguous(1, 1).unwrap()).is_err());
        let collinear = DataMatrix::new(
            Matrix::from_fn(6, 2, |i, j| (i as f64) * (j as f64 + 1.0)),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert!(fit_mle(&collinear, Partition::contiguous(1, 1).unwrap()).is_err());
    }

    #[test]
    fn mle_uses_population_normalization() {
        let d = DataMatrix::new(Matrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]), vec!["x".into()]).unwrap();
        let (m, c) = mle_moments(&d).unwrap();
        assert_eq!(m[0], 1.0);
        assert!((c[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn regression_scalar_example() {
        let spec = RegressionSpec {
            beta0: 0.5,
            beta: Vector::from_element(1, 1.0),
            sigma2: 1.0,
            mu_z: Vector::zeros(1),
            sigma_zz: Matrix::identity(1, 1),
        };
        let j = regression_to_joint(&spec).unwrap();
        assert_eq!(j.cov_block(Block::Y, Block::Y)[(0, 0)], 2.0);
        assert_eq!(j.cov_block(Block::Y, Block::Z)[(0, 0)], 1.0);
        let c = condition(&j, &Vector::from_element(1, 2.0)).unwrap();
        assert!((c.mean[0] - 2.5).abs() < 1e-12 && (c.cov[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regression_without_slopes_is_independent() {
        let spec = RegressionSpec {
            beta0: 3.0,
            beta: Vector::zeros(2),
            sigma2: 0.7,
            mu_z: Vector::from_row_slice(&[1.0, 2.0]),
            sigma_zz: Matrix::identity(2, 2),
        };
        let j = regression_to_joint(&spec).unwrap();
        assert_eq!(j.mean_y()[0], 3.0);
        assert_eq!(j.cov_block(Block::Y, Block::Y)[(0, 0)], 0.7);
        assert_eq!(j.cov_block(Block::Y, Block::Z).norm(), 0.0);
    }

    #[test]
    fn ols_recovers_exact_linear_data() {
        let rows = Matrix::from_fn(20, 3, |i, j| {
            let x1 = (i as f64 * 0.37).sin();
            let x2 = (i as f64 * 1.3).cos();
            let noise = if i % 2 == 0 { 0.01 } else { -0.01 };
            [x1, x2, 1.0 + 2.0 * x1 - 0.5 * x2 + noise][j]
        });
        let d = DataMatrix::new(rows, vec!["a".into(), "b".into(), "y".into()]).unwrap();
        let spec = fit_regression(&d, &[0, 1], 2).unwrap();
        assert!((spec.beta0 - 1.0).abs() < 0.02);
        assert!((spec.beta[0] - 2.0).abs() < 0.02 && (spec.beta[1] + 0.5).abs() < 0.02);
        assert!(spec.sigma2 < 2e-4);
    }

    #[test]
    fn lgssm_small_horizon_values() {
        let spec = LgssmSpec {
            horizon: 1,
            ..LgssmSpec::default()
        };
        let j = lgssm_unroll(&spec).unwrap();
        let cov = j.cov();
        let z10 = LgssmSpec::sensor_index(0, 0);
        let y10 = LgssmSpec::state_index(0, 0);
        let y11 = LgssmSpec::state_index(1, 0);
        assert!((cov[(z10, z10)] - 0.05).abs() < 1e-15);
        assert!((cov[(y11, y10)] - 0.01).abs() < 1e-15);
        assert!((cov[(y11, y11)] - (0.01 + 0.25 + 0.01)).abs() < 1e-15);
        assert!((j.mean()[y11] - 2.0).abs() < 1e-15);
        assert_eq!(j.nz(), 4);
        assert_eq!(j.ny(), 8);
    }

    #[test]
    fn lgssm_full_horizon_is_valid() {
        let j = lgssm_unroll(&LgssmSpec::default()).unwrap();
        assert_eq!(j.dim(), 66);
        assert_eq!(lgssm_observations(10).unwrap().len(), j.nz());
        assert!(lgssm_observations(11).is_err());
    }

    #[test]
    fn network_rejects_forward_parents() {
        let nodes = vec![LinearNode {
            intercept: 0.0,
            variance: 1.0,
            parents: vec![(0, 1.0)],
        }];
        assert!(linear_gaussian_moments(&nodes).is_err());
    }

    #[test]
    fn fixed_lgssm_prior_reproduces_center() {
        let prior = LgssmPrior::point_mass(LgssmSpec::default());
        let mut rng = crate::stochastics::SeededStream::new(1).rng();
        assert_eq!(prior.sample_spec(&mut rng).unwrap(), LgssmSpec::default());
        assert!(LgssmPrior {
            variance_shape: Some(1.0),
            ..LgssmPrior::default()
        }
        .check()
        .is_err());
    }
}

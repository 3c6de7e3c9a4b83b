//! Fixed settings of the bundled applications and defaults.

use std::path::{Path, PathBuf};

use mvg_attack::apps::{ApplicationConfig, ModelSource, PriorSpec, RegionSpec};
use mvg_attack::eval::default_u1_grid;
use mvg_attack::gauss::Block;
use mvg_attack::greybox::{SgaConfig, SgaVariant};
use mvg_attack::models::{lgssm_observations, lgssm_unroll, LgssmSpec};
use mvg_attack::stochastics::{inverse_gamma_sample, SeededStream};

fn config(name: &str) -> ApplicationConfig {
    let root: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    ApplicationConfig::load(&root.join(format!("{name}.json"))).unwrap()
}

#[test]
fn u1_sweep_grid_has_21_points() {
    let g = default_u1_grid();
    assert_eq!(g.len(), 21);
    assert_eq!(g[0], 0.01);
    assert_eq!(g[20], 0.99);
    for (k, u) in g[1..20].iter().enumerate() {
        assert!((u - 0.05 * (k + 1) as f64).abs() < 1e-12);
    }
}

#[test]
fn tracking_readings_match_the_bundled_table() {
    let z = lgssm_observations(10).unwrap();
    assert_eq!(z.len(), 22);
    assert_eq!((z[0], z[1]), (0.1, 0.2));
    assert_eq!((z[20], z[21]), (19.9, 10.2));
}

#[test]
fn tracking_sensor_variance_at_time_zero() {
    let j = lgssm_unroll(&LgssmSpec {
        horizon: 0,
        ..LgssmSpec::default()
    })
    .unwrap();
    let zz = j.cov_block(Block::Z, Block::Z);
    assert!((zz[(0, 0)] - 0.05).abs() < 1e-12);
}

#[test]
fn inverse_gamma_shape_two_has_mean_equal_to_scale() {
    let mut rng = SeededStream::new(5).rng();
    let n = 400_000;
    let s = 0.25;
    // Shape 2 has infinite variance, so use a median-of-means estimate.
    let means: Vec<f64> = (0..40)
        .map(|_| (0..n / 40).map(|_| inverse_gamma_sample(2.0, s, &mut rng).unwrap()).sum::<f64>() / (n / 40) as f64)
        .collect();
    let mut sorted = means.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[20];
    assert!((median - s).abs() / s < 0.05, "median of means {median}");
}

#[test]
fn sga_defaults_stop_on_small_moves() {
    assert_eq!(SgaConfig::default().stop_delta, 1e-4);
}

#[test]
fn zhvi_config_settings() {
    let c = config("zhvi");
    assert_eq!(c.u1, 0.5);
    assert_eq!(c.region, RegionSpec::HalfWidth { half_width: 0.15 });
    assert_eq!(
        c.truth_evidence.unwrap(),
        vec![1.459, 1.214, 1.344, 1.377, 0.941, 1.531, 0.838, 0.766, 0.679, 0.856, 0.537]
    );
    assert_eq!(c.saa_j, vec![25, 100, 500, 2500, 10_000]);
    let ModelSource::Mle { latent, evidence, .. } = &c.model else { panic!("expected an MLE model") };
    assert_eq!(latent.len(), 4);
    assert_eq!(evidence.len(), 11);
    assert_eq!(c.prior, PriorSpec::Niw { kappa: 5.0, nu: 17.0 });
    let firsts: Vec<(SgaVariant, Vec<(&str, f64)>)> = c
        .sga
        .iter()
        .step_by(3)
        .map(|s| (s.variant, s.hyperparams()))
        .collect();
    assert_eq!(
        firsts,
        vec![
            (SgaVariant::AdaGrad, vec![("alpha", 0.01), ("eps", 1e-8)]),
            (SgaVariant::RmsProp, vec![("alpha", 0.001), ("eps", 1e-5), ("tau1", 0.9)]),
            (SgaVariant::Adam, vec![("alpha", 0.001), ("eps", 1e-8), ("tau1", 0.9), ("tau2", 0.9)]),
        ]
    );
}

#[test]
fn loan_config_settings() {
    let c = config("loan");
    assert_eq!(c.u1, 0.5);
    assert_eq!(c.region, RegionSpec::Relative { relative: 0.1 });
    assert_eq!(c.truth_evidence.unwrap(), vec![90.0, 18.01, 38.767, 11.1, 70.795, 28.0, 92.9]);
    assert_eq!(
        c.prior,
        PriorSpec::Regression {
            kappa: 5.0,
            nu: 9.0,
            sigma2_shape: 4.0,
            sigma2_scale: 2.0
        }
    );
}

#[test]
fn tracking_config_settings() {
    let c = config("lgssm");
    let paths = c.paths.unwrap();
    assert_eq!(paths.saa_j, 1000);
    assert_eq!(paths.q, vec![0.1, 0.25, 0.5]);
    assert_eq!(paths.u1, vec![0.1, 0.5, 0.9]);
    assert_eq!(
        c.prior,
        PriorSpec::Lgssm {
            mean_var: 1.0,
            variance_shape: Some(2.0)
        }
    );
}

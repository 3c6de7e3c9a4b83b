mod common;

use common::{normal_vector, random_box, random_joint, random_spd};
use mvg_attack::convexity::hessian_at;
use mvg_attack::eval::{evaluate_attack, mark_nondominated, rn_baseline, ParetoPoint};
use mvg_attack::gauss::{condition, log_ratio_to_mode};
use mvg_attack::models::{lgssm_unroll, regression_to_joint, LgssmPrior, LgssmSpec, RegressionSpec};
use mvg_attack::objective::{build_detection, build_disruption};
use mvg_attack::solvers::{maximize_concave, project_box, solve_white_box, white_box_problem};
use mvg_attack::{Classification, Prior, SeededStream, SolveConfig, Vector};
use proptest::prelude::*;
use rand::Rng;

fn rng(seed: u64) -> impl Rng {
    SeededStream::new(seed).rng()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn disruption_is_nonnegative_and_zero_at_truth(seed in any::<u64>(), n in 2usize..8) {
        let mut r = rng(seed);
        let ny = r.random_range(1..n);
        let j = random_joint(n, ny, &mut r);
        let z_true = normal_vector(n - ny, 1.0, &mut r);
        let d = build_disruption(&j, &z_true).unwrap();
        prop_assert!(d.kl(&z_true).abs() < 1e-9);
        let z = normal_vector(n - ny, 3.0, &mut r);
        prop_assert!(d.kl(&z) >= 0.0);
    }

    #[test]
    fn log_ratio_peaks_at_the_mode(seed in any::<u64>(), n in 2usize..8) {
        let mut r = rng(seed);
        let ny = r.random_range(1..n);
        let j = random_joint(n, ny, &mut r);
        let det = build_detection(&j).unwrap();
        let mode = j.mean_z();
        prop_assert!(det.log_ratio(&mode).abs() < 1e-9);
        let z = normal_vector(n - ny, 2.0, &mut r);
        prop_assert!(det.log_ratio(&z) <= 0.0);
        prop_assert!((det.log_ratio(&z) - log_ratio_to_mode(&j, &z).unwrap()).abs() < 1e-8 * (1.0 + det.log_ratio(&z).abs()));
    }

    #[test]
    fn hessian_spectrum_is_monotone_in_u1(seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let mut r = rng(seed);
        let j = random_joint(6, 2, &mut r);
        let z_true = normal_vector(4, 1.0, &mut r);
        let dis = build_disruption(&j, &z_true).unwrap();
        let det = build_detection(&j).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let e_lo = hessian_at(&dis, &det, 2.0, 3.0, lo).symmetric_eigenvalues();
        let e_hi = hessian_at(&dis, &det, 2.0, 3.0, hi).symmetric_eigenvalues();
        prop_assert!(e_lo.max() <= e_hi.max() + 1e-9);
        prop_assert!(e_lo.min() <= e_hi.min() + 1e-9);
    }

    #[test]
    fn projection_is_feasible_and_idempotent(seed in any::<u64>(), n in 1usize..8) {
        let mut r = rng(seed);
        let region = random_box(n, &mut r);
        let z = normal_vector(n, 4.0, &mut r);
        let p = project_box(&z, &region).unwrap();
        prop_assert!(region.contains(&p, 0.0));
        prop_assert_eq!(project_box(&p, &region).unwrap(), p);
    }

    #[test]
    fn concave_solver_beats_random_feasible_points(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let h = -random_spd(n, 0.1, &mut r);
        let g = normal_vector(n, 2.0, &mut r);
        let region = random_box(n, &mut r);
        let rep = maximize_concave(&h, &g, &region, &SolveConfig::default()).unwrap();
        prop_assert!(region.contains(&rep.z_star, 1e-12));
        for _ in 0..20 {
            let z = rn_baseline(&region.center(), &region, &mut r).unwrap();
            let v = mvg_attack::linalg::quad_form(&h, &z) + g.dot(&z);
            prop_assert!(rep.objective >= v - 1e-9);
        }
    }

    #[test]
    fn white_box_rows_revalidate(seed in any::<u64>(), u1 in 0.05f64..0.95) {
        let mut r = rng(seed);
        let j = random_joint(6, 2, &mut r);
        let z_true = normal_vector(4, 1.0, &mut r);
        let region = mvg_attack::BoxRegion::around(&z_true, 0.5).unwrap();
        let cfg = SolveConfig { seed, ..SolveConfig::default() };
        let wb = white_box_problem(&j, &z_true, u1, &region, &cfg).unwrap();
        let rep = solve_white_box(&wb, &cfg).unwrap();
        let e = evaluate_attack(&j, &wb, &rep.z_star, None).unwrap();
        prop_assert!((e.objective - rep.objective).abs() <= 1e-9 * (1.0 + rep.objective.abs()));
        prop_assert!(e.kl_to_truth >= 0.0 && e.log_ratio <= 0.0);
        prop_assert!((e.kl_to_truth - rep.kl.unwrap()).abs() <= 1e-9 * (1.0 + e.kl_to_truth));
        if rep.certified {
            let noise = rn_baseline(&z_true, &region, &mut r).unwrap();
            prop_assert!(rep.objective >= wb.objective(&noise) - 1e-9);
        }
    }

    #[test]
    fn nondominated_points_are_not_dominated(points in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..30)) {
        let mut pts: Vec<ParetoPoint> = points
            .iter()
            .map(|&(d, r)| ParetoPoint {
                u1: 0.5,
                z: Vector::zeros(1),
                disruption: d,
                risk: r,
                objective: 0.0,
                classification: Classification::Concave,
                certified: true,
                nondominated: false,
            })
            .collect();
        mark_nondominated(&mut pts);
        prop_assert!(pts.iter().any(|p| p.nondominated));
        for a in pts.iter().filter(|p| p.nondominated) {
            for b in &pts {
                let dominates = b.disruption >= a.disruption && b.risk <= a.risk
                    && (b.disruption > a.disruption || b.risk < a.risk);
                prop_assert!(!dominates);
            }
        }
    }

    #[test]
    fn regression_joint_recovers_the_regression(seed in any::<u64>(), nz in 1usize..6) {
        let mut r = rng(seed);
        let spec = RegressionSpec {
            beta0: r.random_range(-3.0..3.0),
            beta: normal_vector(nz, 1.0, &mut r),
            sigma2: r.random_range(0.05..4.0),
            mu_z: normal_vector(nz, 2.0, &mut r),
            sigma_zz: random_spd(nz, 0.2, &mut r),
        };
        let j = regression_to_joint(&spec).unwrap();
        let z = normal_vector(nz, 2.0, &mut r);
        let c = condition(&j, &z).unwrap();
        let m = spec.beta0 + spec.beta.dot(&z);
        prop_assert!((c.mean[0] - m).abs() <= 1e-10 * (1.0 + m.abs()));
        prop_assert!((c.cov[(0, 0)] - spec.sigma2).abs() <= 1e-10 * (1.0 + spec.sigma2));
    }

    #[test]
    fn tracking_prior_draws_are_valid_and_reproducible(seed in any::<u64>(), horizon in 0usize..=10) {
        let prior = Prior::Lgssm(LgssmPrior {
            center: LgssmSpec { horizon, ..LgssmSpec::default() },
            ..LgssmPrior::default()
        });
        let sampler = prior.sampler().unwrap();
        let stream = SeededStream::new(seed);
        let a = sampler.sample(&mut stream.rng()).unwrap();
        let b = sampler.sample(&mut stream.rng()).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.cov().symmetric_eigenvalues().min() > 0.0);
        prop_assert_eq!(a.nz(), lgssm_unroll(&LgssmSpec { horizon, ..LgssmSpec::default() }).unwrap().nz());
    }
}

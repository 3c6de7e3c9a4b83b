//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use mvg_attack::linalg::{Matrix, Vector};
use mvg_attack::{BoxRegion, GaussianJoint, Partition};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn normal_vector<R: Rng>(n: usize, scale: f64, rng: &mut R) -> Vector {
    Vector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// `BBᵀ/n + ridge·I` with Gaussian `B`.
pub fn random_spd<R: Rng>(n: usize, ridge: f64, rng: &mut R) -> Matrix {
    let b = Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&b * b.transpose()) / n as f64 + Matrix::identity(n, n) * ridge
}

/// Joint on `n` nodes with a shuffled partition of `ny` latent nodes.
pub fn random_joint<R: Rng>(n: usize, ny: usize, rng: &mut R) -> GaussianJoint {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (y, z) = idx.split_at(ny);
    let mut y = y.to_vec();
    let mut z = z.to_vec();
    y.sort_unstable();
    z.sort_unstable();
    let partition = Partition::new(y, z).unwrap();
    GaussianJoint::new(normal_vector(n, 2.0, rng), random_spd(n, 0.3, rng), partition).unwrap()
}

/// Box around a random center with widths in `[0.2, 2]`.
pub fn random_box<R: Rng>(n: usize, rng: &mut R) -> BoxRegion {
    let c = normal_vector(n, 1.0, rng);
    let w = Vector::from_fn(n, |_, _| rng.random_range(0.1..1.0));
    BoxRegion::new(&c - &w, &c + &w).unwrap()
}

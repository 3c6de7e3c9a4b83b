//! Regenerates the bundled synthetic datasets in `data/`.
//!
//! Usage: `cargo run -p mvg-attack --example make_datasets [-- <out_dir>]`

use std::path::PathBuf;

use mvg_attack::linalg::{Matrix, Vector};
use mvg_attack::stochastics::{mvn_sample, standard_normal_vector, SeededStream};
use rand::Rng;

const SEED: u64 = 2024;

/// Latent counties first, then the evidence counties. Values in $100k.
const COUNTIES: [(&str, f64); 15] = [
    ("yuma", 1.05),
    ("cochise", 0.95),
    ("apache", 0.62),
    ("la_paz", 0.74),
    ("maricopa", 1.459),
    ("pima", 1.214),
    ("pinal", 1.344),
    ("yavapai", 1.377),
    ("mohave", 0.941),
    ("coconino", 1.531),
    ("navajo", 0.838),
    ("gila", 0.766),
    ("santa_cruz", 0.679),
    ("graham", 0.856),
    ("greenlee", 0.537),
];

const LOAN_PREDICTORS: [(&str, f64, f64); 7] = [
    ("income", 90.0, 40.0),
    ("debt_to_income", 18.0, 7.0),
    ("total_credit_balance", 38.0, 18.0),
    ("total_debit_limit", 11.0, 5.0),
    ("total_credit_limit", 70.0, 30.0),
    ("pct_no_delinquency", 30.0, 12.0),
    ("loan_amount", 90.0, 35.0),
];

fn write(path: PathBuf, header: &[&str], rows: &[Vec<f64>]) -> Result<(), Box<dyn std::error::Error>> {
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| format!("{v:.4}")))?;
    }
    w.flush()?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

/// 96 monthly snapshots driven by one market factor, so the counties move
/// together as regional house prices do.
fn zhvi(stream: SeededStream) -> Vec<Vec<f64>> {
    let mut rng = stream.rng();
    (0..96)
        .map(|_| {
            let market: f64 = standard_normal_vector(1, &mut rng)[0];
            let local = standard_normal_vector(COUNTIES.len(), &mut rng);
            COUNTIES
                .iter()
                .zip(local.iter())
                .map(|(&(_, level), e)| level / 1.04 * (1.0 + 0.12 * market + 0.02 * e))
                .collect()
        })
        .collect()
}

/// Correlated borrower attributes plus an interest rate (percent) that is
/// linear in them with Gaussian error.
fn loan(stream: SeededStream) -> Vec<Vec<f64>> {
    let n = LOAN_PREDICTORS.len();
    let corr = [
        [1.0, -0.2, 0.5, 0.3, 0.6, 0.1, 0.5],
        [-0.2, 1.0, 0.4, 0.1, 0.0, -0.2, 0.1],
        [0.5, 0.4, 1.0, 0.3, 0.6, 0.0, 0.3],
        [0.3, 0.1, 0.3, 1.0, 0.4, 0.1, 0.2],
        [0.6, 0.0, 0.6, 0.4, 1.0, 0.2, 0.4],
        [0.1, -0.2, 0.0, 0.1, 0.2, 1.0, 0.0],
        [0.5, 0.1, 0.3, 0.2, 0.4, 0.0, 1.0],
    ];
    let mean = Vector::from_iterator(n, LOAN_PREDICTORS.iter().map(|p| p.1));
    let cov = Matrix::from_fn(n, n, |i, j| corr[i][j] * LOAN_PREDICTORS[i].2 * LOAN_PREDICTORS[j].2);
    let beta = [-0.03, 0.15, 0.02, -0.05, -0.02, -0.04, 0.03];
    let mut rng = stream.rng();
    (0..500)
        .map(|_| {
            let z = mvn_sample(&mean, &cov, &mut rng).expect("fixed covariance is PD");
            let noise: f64 = rng.random_range(-1.0..1.0) + rng.random_range(-1.0..1.0);
            let rate = 11.5 + beta.iter().zip(z.iter()).map(|(b, x)| b * x).sum::<f64>() + 1.5 * noise;
            let mut row: Vec<f64> = z.iter().copied().collect();
            row.push(rate);
            row
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"));
    std::fs::create_dir_all(&out)?;
    let root = SeededStream::new(SEED);
    let names: Vec<&str> = COUNTIES.iter().map(|c| c.0).collect();
    write(out.join("zhvi.csv"), &names, &zhvi(root.child(0)))?;
    let mut names: Vec<&str> = LOAN_PREDICTORS.iter().map(|p| p.0).collect();
    names.push("interest_rate");
    write(out.join("loan.csv"), &names, &loan(root.child(1)))?;
    Ok(())
}

//! Runs an application config: `cargo run --example run_config -- <config.json> [out_dir]`

use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let config = PathBuf::from(args.next().ok_or("missing config path")?);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"));
    let t0 = std::time::Instant::now();
    let (report, files) = mvg_attack::apps::run_application(&config, &out)?;
    for row in &report.rows {
        println!(
            "{:<14} {:<28} obj={:>10.5} wb={:>10.5} kl={:>10.4} logr={:>9.4} t={:.3}s",
            row.attack, row.hyperparams, row.objective, row.wb_objective, row.kl_to_truth, row.log_ratio, row.wall_time_seconds
        );
    }
    println!("convexity: {:?}", report.convexity.classification);
    println!("wrote {}", files.table.display());
    println!("elapsed {:.2}s", t0.elapsed().as_secs_f64());
    Ok(())
}

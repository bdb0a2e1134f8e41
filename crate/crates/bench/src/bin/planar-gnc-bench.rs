use clap::Parser;
use planar_gnc_bench::{run_experiment, Args};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let rows = run_experiment(&args)?;
    println!("{} rows written to {}", rows.len(), args.out.join("results.csv").display());
    Ok(())
}

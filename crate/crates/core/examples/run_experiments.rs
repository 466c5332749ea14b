//! Runs the probability-of-causation sweep, prints its assertions, saves the
//! result as JSON and CSV, and aggregates it into a report.
//!
//! Run with `cargo run --example run_experiments [OUT_DIR]`.

use causalrep::experiment::{poc_sweep, report};

fn main() -> causalrep::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let result = poc_sweep(0)?;
    let sweep = result.table("sweep").expect("sweep table");
    println!("{} rows, columns {:?}", sweep.rows.len(), sweep.columns);

    let json = dir.join("poc_sweep.json");
    std::fs::write(&json, result.to_json()?)?;
    sweep.write_csv(dir.join("poc_sweep.sweep.csv"))?;
    println!("wrote {}", json.display());

    let summary = report(vec![result])?;
    print!("{}", summary.render());
    Ok(())
}

//! Runs the four-arm example and prints the convergence report.
//!
//! `cargo run --release -p elc --example builtin_report [horizon] [record_every]`

use std::time::Instant;

use elc::analysis::{assess, eq25_decomposition, error_form_residual};
use elc::scenario::{builtin_example, DEFAULT_SEED};
use elc::simulate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let mut scenario = builtin_example(DEFAULT_SEED);
    if let Some(h) = args.next() {
        scenario.integrator.horizon = h.parse()?;
    }
    if let Some(r) = args.next() {
        scenario.integrator.record_every = r.parse()?;
    }
    let start = Instant::now();
    let log = simulate(&scenario)?;
    println!("simulated {} steps in {:.2?}", log.steps, start.elapsed());
    print!("{}", assess(&log, &scenario).to_table());
    let form = error_form_residual(&log, &scenario)?;
    let (t, worst) = form.worst();
    println!(
        "error-form residual: max {worst:.3e} at t = {t:.4} ({} samples), below 1e-4 from t = {:?}",
        form.samples_checked(),
        form.holds_after(1e-4)
    );
    println!(
        "eq25 residual: {:.3e}",
        eq25_decomposition(&log, &scenario)?.max_residual
    );
    Ok(())
}

//! Replicated benchmark on the 16-policy unstructured instance: PCS curves,
//! stopping times and the lower-bound ratio for every method.
//!
//! `cargo run --release --example unstructured_bench -- [reps] [out_dir]`

use prefbai::bench::{bench, export, BenchConfig};
use prefbai::instances::{gen_unstructured16, Instance};
use prefbai::RngState;

fn main() -> prefbai::Result<()> {
    let mut args = std::env::args().skip(1);
    let reps = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);
    let out = args.next();
    let instance = Instance::Unstructured(gen_unstructured16(&mut RngState::from_seed(0)));
    let config = BenchConfig {
        reps,
        base_seed: 1,
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let result = bench(&instance, &config)?;
    println!("best policy {} | T* = {:.1} | {:.1}s", result.truth, result.complexity, start.elapsed().as_secs_f64());
    println!("{:<12} {:>10} {:>20} {:>8} {:>8} {:>8}", "method", "mean tau", "95% CI", "stopped", "errors", "ratio");
    for (m, lb) in result.methods.iter().zip(&result.lower_bound) {
        let s = &m.stopping;
        println!(
            "{:<12} {:>10.0} {:>9.0}..{:<9.0} {:>8} {:>8.3} {:>8.2}",
            m.method.to_string(),
            s.mean_tau,
            s.ci_lo,
            s.ci_hi,
            s.stopped,
            s.error_rate,
            lb.ratio
        );
    }
    if let Some(dir) = out {
        for path in export(&result, dir)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

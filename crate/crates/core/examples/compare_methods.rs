//! Runs every method once on the same instance and judge seed.
//!
//! `cargo run --release --example compare_methods -- [seed]`

use prefbai::instances::gen_unstructured16;
use prefbai::sampler::run_simulated;
use prefbai::{ExperimentConfig, Instance, Method, RngState};

fn main() -> prefbai::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let instance = Instance::Unstructured(gen_unstructured16(&mut RngState::from_seed(0)));
    println!("{:<12} {:>8} {:>8} {:>12}", "method", "tau", "stopped", "recommended");
    for method in Method::ALL {
        let config = ExperimentConfig {
            method,
            seed,
            ..Default::default()
        };
        let out = run_simulated(&instance, &config, None)?;
        println!(
            "{:<12} {:>8} {:>8} {:>12}",
            method.to_string(),
            out.tau,
            out.stopped,
            out.recommended
        );
    }
    Ok(())
}

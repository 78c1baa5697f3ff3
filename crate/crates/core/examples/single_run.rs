//! One LLM-PO experiment with a JSONL trace, on either benchmark instance.
//!
//! `cargo run --release --example single_run -- [unstructured|structured] [seed] [trace.jsonl]`

use std::fs::File;
use std::io::{BufWriter, Write};

use prefbai::instances::{gen_structured32, gen_unstructured16};
use prefbai::sampler::run_simulated;
use prefbai::{ExperimentConfig, Instance, RngState};

fn main() -> prefbai::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind = args.next().unwrap_or_else(|| "unstructured".into());
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let trace_path = args.next();

    let mut rng = RngState::from_seed(0);
    let instance = match kind.as_str() {
        "structured" => Instance::Structured(gen_structured32(&mut rng)),
        _ => Instance::Unstructured(gen_unstructured16(&mut rng)),
    };
    let config = ExperimentConfig {
        seed,
        checkpoints: vec![1000, 5000, 10_000, 20_000],
        ..Default::default()
    };

    let mut file = trace_path
        .as_ref()
        .map(|p| File::create(p).map(BufWriter::new))
        .transpose()
        .expect("trace file can be created");
    let trace = file.as_mut().map(|w| w as &mut dyn Write);
    let out = run_simulated(&instance, &config, trace)?;
    if let Some(w) = file.as_mut() {
        w.flush().expect("trace flushes");
    }

    println!(
        "{kind}: {} after {} comparisons, recommended {} (truth {}), Z = {:.3} vs threshold {:.3}",
        if out.stopped { "stopped" } else { "hit the cap" },
        out.tau,
        out.recommended,
        instance.best_policy(),
        out.statistic,
        out.threshold
    );
    for (b, rec) in config.checkpoints.iter().zip(&out.checkpoints) {
        println!("  recommendation at {b:>6}: {rec}");
    }
    Ok(())
}

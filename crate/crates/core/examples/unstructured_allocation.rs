//! Closed-form optimal allocation, characteristic time and sample-size
//! lower bound of the 16-policy unstructured instance.
//!
//! `cargo run --example unstructured_allocation -- [seed]`

use prefbai::instances::gen_unstructured16;
use prefbai::unstructured::{characteristic_time, informative_opponent, lower_bound_samples, optimal_allocation};
use prefbai::RngState;

fn main() -> prefbai::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mu = gen_unstructured16(&mut RngState::from_seed(seed));
    let best = mu.best_policy();
    println!("best policy {best}, worst-case preference {:.3}", mu.worst_case(best));

    let alloc = optimal_allocation(&mu)?;
    println!("{:>6} {:>9} {:>10} {:>8}", "policy", "opponent", "d(mu,1/2)", "weight");
    for i in (0..mu.k()).filter(|&i| i != best) {
        let opp = informative_opponent(&mu, i);
        let w = alloc.weight(prefbai::PairIndex::new(i, opp.opponent));
        println!("{i:>6} {:>9} {:>10.5} {w:>8.4}", opp.opponent, opp.info);
    }
    println!("T* = {:.2}", characteristic_time(&mu)?);
    for delta in [0.1, 0.05, 0.01] {
        println!("delta = {delta:<5} lower bound {:.1} comparisons", lower_bound_samples(&mu, delta)?);
    }
    Ok(())
}

//! Structured design on the 32-policy Bradley-Terry instance: optimal
//! allocation, surrogate complexity and the effect of the regulariser.
//!
//! `cargo run --release --example structured_design -- [seed]`

use prefbai::design::{gap_ratio, solve_allocation, surrogate_time, DesignObjective};
use prefbai::instances::gen_structured32;
use prefbai::{Allocation, RngState};

fn main() -> prefbai::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let model = gen_structured32(&mut RngState::from_seed(seed));
    let (theta, x) = (model.theta(), model.features());
    println!("K = {}, d = {}, best policy {}", model.k(), model.d(), model.best_policy());
    println!("surrogate complexity U* = {:.1}", surrogate_time(theta, x)?);

    let obj = DesignObjective::new(theta, x)?;
    let uniform = Allocation::uniform(model.k());
    println!("uniform allocation: min psi = {:.5}", obj.min_psi(uniform.weights())?);

    for gamma in [0.0, 0.01, 0.1] {
        let alloc = solve_allocation(theta, x, gamma)?;
        println!(
            "gamma = {gamma:<5} min psi = {:.5}, support {} pairs",
            obj.min_psi(alloc.weights())?,
            alloc.nonzeros()
        );
    }

    let alloc = solve_allocation(theta, x, 0.0)?;
    let mut top: Vec<_> = alloc.support();
    top.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!("heaviest pairs:");
    for (p, w) in top.iter().take(8) {
        println!("  ({:>2}, {:>2}) {w:.4}", p.i, p.j);
    }
    let hardest = (0..model.k())
        .filter(|&i| i != model.best_policy())
        .map(|i| Ok((i, gap_ratio(theta, alloc.weights(), x, i)?)))
        .collect::<prefbai::Result<Vec<_>>>()?
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("K >= 2");
    println!("binding policy {} with psi = {:.5}", hardest.0, hardest.1);
    Ok(())
}

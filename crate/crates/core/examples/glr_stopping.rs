//! The GLR statistic against the stopping thresholds while a fixed
//! allocation is tracked on the 16-policy instance.
//!
//! `cargo run --release --example glr_stopping`

use prefbai::instances::gen_unstructured16;
use prefbai::judge::{Judge, SimulatedJudge};
use prefbai::sampler::next_pair;
use prefbai::unstructured::{glr_statistic, optimal_allocation, rho_threshold, ThresholdMode};
use prefbai::{PairIndex, RngState, TrialLedger};

fn main() -> prefbai::Result<()> {
    let mu = gen_unstructured16(&mut RngState::from_seed(0));
    let target = optimal_allocation(&mu)?;
    let support: Vec<usize> = target
        .support()
        .into_iter()
        .map(|(p, _): (PairIndex, f64)| p.id(mu.k()))
        .collect();
    let mut judge = SimulatedJudge::new(&mu, RngState::from_seed(3));
    let mut ledger = TrialLedger::new(mu.k());
    let delta = 0.05;
    println!("{:>7} {:>10} {:>10} {:>12}", "t", "Z(t)", "heuristic", "theoretical");
    for t in 1..=30_000u64 {
        let id = next_pair(t, ledger.counts(), &support, 0.1, target.weights());
        let pair = ledger.pairs()[id];
        let won = judge.compare(pair)?;
        ledger.record(pair, won);
        if t % 2500 == 0 {
            let z = glr_statistic(&ledger, &ledger.empirical_means());
            let h = rho_threshold(delta, t, ThresholdMode::Heuristic, 1.0, support.len())?;
            let th = rho_threshold(delta, t, ThresholdMode::Theoretical, 1.0, support.len())?;
            println!("{t:>7} {z:>10.3} {h:>10.3} {th:>12.3}");
        }
    }
    Ok(())
}

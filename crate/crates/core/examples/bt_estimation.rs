//! Regularised Bradley-Terry estimation from simulated comparisons, and
//! the projected estimator used when the MLE leaves the parameter ball.
//!
//! `cargo run --release --example bt_estimation -- [comparisons]`

use prefbai::estimation::{lambda_schedule, project_estimator, reg_mle};
use prefbai::instances::{all_pairs, gen_structured32};
use prefbai::judge::{Judge, SimulatedJudge};
use prefbai::linalg::norm;
use prefbai::{RngState, TrialLedger};

fn distance(a: &[f64], b: &[f64]) -> f64 {
    norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}

fn main() -> prefbai::Result<()> {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let model = gen_structured32(&mut RngState::from_seed(0));
    let pairs = all_pairs(model.k());
    let mut judge = SimulatedJudge::new(&model.to_preferences(), RngState::from_seed(1));
    let mut pick = RngState::from_seed(2);
    let mut ledger = TrialLedger::with_features(model.features());

    let mut next_report = 1000;
    for t in 1..=n {
        let p = pairs[pick.index(pairs.len())];
        let won = judge.compare(p)?;
        ledger.record(p, won);
        if t == next_report || t == n {
            let lambda = lambda_schedule(t);
            let zeta = reg_mle(&ledger, lambda, None)?;
            let theta = project_estimator(&zeta, &ledger, lambda, 1.0)?;
            println!(
                "t = {t:>7}  |mle - theta*| = {:.4}  |projected - theta*| = {:.4}",
                distance(&zeta, model.theta()),
                distance(&theta, model.theta())
            );
            next_report *= 2;
        }
    }
    Ok(())
}

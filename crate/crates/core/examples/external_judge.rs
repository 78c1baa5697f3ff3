//! Drives an experiment through an external judge process speaking the
//! newline-delimited JSON protocol. The bundled judge is a POSIX shell
//! script that follows a fixed ranking, 0 best, and answers 20% of the
//! queries from a linear congruential coin.
//!
//! `cargo run --example external_judge -- [K]`

use std::time::Duration;

use prefbai::judge::ExternalJudge;
use prefbai::sampler::{run_experiment, Setting};
use prefbai::ExperimentConfig;

const JUDGE: &str = r#"
r=7
while IFS= read -r l; do
    x=${l#*\"i\":}; i=${x%%,*}
    x=${l#*\"j\":}; j=${x%%,*}
    x=${l#*\"seq\":}; s=${x%\}}
    r=$(( (r * 1103515245 + 12345) % 2147483648 ))
    if [ $(( r / 65536 % 10 )) -lt 2 ]; then w=$(( r / 65536 % 2 )); elif [ "$i" -lt "$j" ]; then w=1; else w=0; fi
    printf '{"seq":%s,"winner":%d}\n' "$s" "$w"
done
"#;

fn main() -> prefbai::Result<()> {
    let k = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(6);
    let mut judge = ExternalJudge::spawn_shell(JUDGE, Duration::from_secs(10))?;
    let config = ExperimentConfig::default();
    let out = run_experiment(&Setting::Unstructured { k }, &mut judge, &config, Some(0), None)?;
    println!(
        "K = {k}: recommended {} after {} queries to the external judge (stopped: {}, correct: {:?})",
        out.recommended,
        judge.answered(),
        out.stopped,
        out.correct
    );
    Ok(())
}

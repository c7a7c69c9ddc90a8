//! Two chains driven by shared randomness stay within depth 2 of each other.

use treehom::experiments::{run_coupling_experiment, ExperimentConfig};
use treehom::periodic::parse_rationals;

fn main() -> treehom::Result<()> {
    for slope in ["0", "1/2,0", "1/2,1/2"] {
        let mut cfg = ExperimentConfig::new("coupling", 2, 4, 3, parse_rationals(slope, 2)?, 42);
        cfg.steps = 20_000;
        let r = run_coupling_experiment(&cfg)?;
        println!("slope {slope:<8} initial {} max {} final {}", r.initial_deviation, r.max_deviation, r.final_deviation);
    }
    Ok(())
}

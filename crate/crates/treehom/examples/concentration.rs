//! Tail of the maximal deviation from the axis as the period grows.

use treehom::experiments::{concentration_csv, run_concentration, ExperimentConfig};
use treehom::periodic::parse_rationals;

fn main() -> treehom::Result<()> {
    let mut cfg = ExperimentConfig::new("concentration", 2, 8, 3, parse_rationals("1/2,0", 2)?, 7);
    cfg.trials = 40;
    cfg.eps = vec![0.25, 0.5];
    let stats = [8, 16].iter().map(|&n| run_concentration(&cfg.with_n(n))).collect::<treehom::Result<Vec<_>>>()?;
    print!("{}", concentration_csv(&cfg, &stats));
    Ok(())
}

//! The adapted chain on a small torus: excursions, the closed formula for
//! true minima, and exact stationarity of the kernel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treehom::dynamics::{adapted, exact_kernel, is_irreducible, is_symmetric, min_probability, ChainState, RngChooser};
use treehom::experiments::{conditioned_class, geodesic_start, max_deviation, ExperimentConfig};
use treehom::periodic::Slope;

fn main() -> treehom::Result<()> {
    let start = geodesic_start(8, &Slope::new(8, vec![4, 0])?, 3)?;
    let mut state = ChainState::new(&start, &[])?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for round in 0..5 {
        for _ in 0..2000 {
            state.adapted_step(&mut RngChooser(&mut rng));
        }
        println!("after {} steps: slope {}, max deviation {}", (round + 1) * 2000, state.cfg().slope(), max_deviation(&state));
    }

    for x in 0..state.size() {
        if state.classify(x).is_local_min() {
            let ex = state.find_excursions(x);
            let p = min_probability(state.cfg(), x)?;
            println!("site {x}: {} excursions, {} open edges, P(true min) = {p}", ex.components.len(), ex.open_edges.len());
            break;
        }
    }

    let cfg = ExperimentConfig::new("kernel", 2, 2, 3, vec![0.into(), 0.into()], 0);
    let small = ChainState::new(&geodesic_start(2, &Slope::zero(2, 2), 3)?, &[])?;
    let class = conditioned_class(&cfg, &small)?;
    let p = exact_kernel(&class, adapted)?;
    println!("class of {} states: symmetric {}, irreducible {}", class.len(), is_symmetric(&p), is_irreducible(&p));
    Ok(())
}

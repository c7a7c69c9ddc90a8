//! Exact counts of periodic homomorphisms and the finite surface tension.

use treehom::enumeration::{convexity_check, enumerate_invariant, fixed_vs_free_gap, SurfaceTensionTable, DEFAULT_BUDGET};
use treehom::periodic::Slope;

fn main() -> treehom::Result<()> {
    for (n, num) in [(2, 0), (2, 1), (4, 0), (4, 2)] {
        let s = Slope::new(n, vec![num])?;
        let c = enumerate_invariant(1, n as usize, 3, &s, DEFAULT_BUDGET, false)?;
        println!("m=1 n={n} d=3 slope={s}: count {} ent {:.6}", c.count, c.ent);
    }

    let table = SurfaceTensionTable::compute(2, 2, 3, DEFAULT_BUDGET)?;
    print!("{}", table.to_csv());
    let line = SurfaceTensionTable::compute(1, 4, 3, DEFAULT_BUDGET)?;
    let conv = convexity_check(&line, 0.0);
    println!("m=1 n=4: {} midpoint checks, largest excess {:.6}", conv.checked, conv.max_excess);

    let gap = fixed_vs_free_gap(2, &Slope::zero(2, 2), 0.5, 3, DEFAULT_BUDGET)?;
    println!("fixed {} vs free {} at n=2: gap {:.6}", gap.fixed_count, gap.free_count, gap.gap);
    Ok(())
}

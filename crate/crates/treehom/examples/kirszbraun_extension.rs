//! Extending a partial height to a full homomorphism on a box.

use treehom::kirszbraun::{check_extension_condition, kirszbraun_extend, periodic_from_slope, PartialHeight};
use treehom::lattice::{validate_homomorphism, Region};
use treehom::periodic::Slope;
use treehom::tree::{depth, Geodesic};

fn main() -> treehom::Result<()> {
    let g = Geodesic::standard();
    let corners = vec![(vec![0, 0], "e".parse()?), (vec![4, 0], "1,2,1,2".parse()?), (vec![0, 4], "3,1".parse()?)];
    let p = PartialHeight::new(Region::cube(2, 5), corners)?;
    println!("extension condition holds: {}", check_extension_condition(&p));

    let h = kirszbraun_extend(&p, g.backward())?;
    assert!(validate_homomorphism(&h));
    for a in 0..5 {
        let row: Vec<String> = (0..5).map(|b| format!("{:>3}", depth(h.value_at(&[a, b]).unwrap(), &g))).collect();
        println!("{}", row.join(""));
    }

    let bad = PartialHeight::new(Region::cube(2, 3), vec![(vec![0, 0], "e".parse()?), (vec![1, 0], "1,2".parse()?)])?;
    println!("two sites at distance 1 with values at distance 2: {}", check_extension_condition(&bad));

    let cfg = periodic_from_slope(4, &Slope::new(4, vec![2, 0])?, &g, 3)?;
    print!("{}", cfg.to_text());
    Ok(())
}

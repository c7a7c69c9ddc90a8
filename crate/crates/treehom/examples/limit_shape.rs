//! A diamond whose corners sit on three different geodesics, sampled by
//! pivot moves and written as a PGM raster.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treehom::experiments::{render_depth_field, sample_limit_shape, three_geodesic_diamond};
use treehom::lattice::validate_homomorphism;
use treehom::tree::Geodesic;

fn main() -> treehom::Result<()> {
    let radius = 24;
    let path = std::env::args().nth(1).unwrap_or_else(|| "limit_shape.pgm".into());
    let g = Geodesic::standard();
    let p = three_geodesic_diamond(radius, 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = sample_limit_shape(&p, g.backward(), 3, 500_000, &mut rng)?;
    assert!(validate_homomorphism(&h));
    render_depth_field(&h, &g, path.as_ref())?;
    println!("{} cells sampled, raster in {path}", h.region.len());
    Ok(())
}

//! Words, distances and depths in the tree with three generators.

use treehom::tree::{busemann_depth, depth, meeting_height, tree_distance, Geodesic, TreeEnd, TreeVertex};

fn main() -> treehom::Result<()> {
    let v: TreeVertex = "1,2,3".parse()?;
    let w: TreeVertex = "1,3".parse()?;
    println!("v = {v}, w = {w}, d(v, w) = {}", tree_distance(&v, &w));
    println!("v·w = {}, v⁻¹ = {}", v.mul(&w), v.inverse());

    let g = Geodesic::standard();
    for k in -3..=3 {
        println!("g({k:>2}) = {:<6} depth {}", g.point(k).to_string(), depth(&g.point(k), &g));
    }
    println!("depth of v along g: {}", depth(&v, &g));
    println!("busemann depth of v toward the backward end: {}", busemann_depth(&v, g.backward()));

    let a = TreeEnd::new(&[3], &[1, 2])?;
    let b = TreeEnd::new(&[3, 1], &[3, 2])?;
    println!("ends {a} and {b} meet at height {}", meeting_height(&a, &b)?);
    Ok(())
}

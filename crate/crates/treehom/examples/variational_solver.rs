//! Minimizing the macroscopic entropy for planar boundary data. Pass a path
//! to also write the boundary file used by `treehom solve-variational`.

use treehom::profiles::{minimize_entropy, BoundaryProfile, Grid, MeetingHeights, SolverOptions, SurfaceTensionModel};

fn main() -> treehom::Result<()> {
    let cells = 16;
    let grid = Grid::cube(2, cells)?;
    let ent = SurfaceTensionModel::quadratic(-(3f64).ln(), 0.5, vec![0.0, 0.0]);

    let affine = BoundaryProfile::from_fn(grid.clone(), MeetingHeights::single(), |x| (0.5 + 0.3 * x[0] - 0.2 * x[1], 1));
    let sol = minimize_entropy(&affine, &ent, 1.0 / cells as f64, &SolverOptions::default())?;
    println!("affine: objective {:.6}, ent(s) {:.6}, {} iterations", sol.objective, ent.eval(&[0.3, -0.2]), sol.history.len() - 1);

    let saddle = BoundaryProfile::from_fn(grid, MeetingHeights::single(), |x| (0.5 + 0.25 * (x[0] - x[1]).abs(), 1));
    let sol = minimize_entropy(&saddle, &ent, 1.0 / cells as f64, &SolverOptions::default())?;
    let centre = sol.profile.grid.index(&[cells / 2, cells / 2]);
    println!("saddle: objective {:.6}, centre height {:.4}, admissible {}", sol.objective, sol.profile.h1[centre], sol.admissible);

    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, saddle.to_text())?;
        println!("boundary written to {path}");
    }
    Ok(())
}

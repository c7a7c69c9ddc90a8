//! Continuum profiles on ε-grids: meeting heights, asymptotic and boundary
//! height profiles, the boundary extension, macroscopic entropy and a
//! projected descent solver for the variational problem.

use std::fmt::Write as _;

use crate::enumeration::SurfaceTensionTable;
use crate::error::{parse_err, Error, Result};
use crate::lattice::HeightFunction;
use crate::tree::{meeting_height, tree_distance, TreeEnd, TreeVertex};

const TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct MeetingHeights {
    k: usize,
    a: Vec<f64>,
}

impl MeetingHeights {
    /// Row-major k×k entries; shape and sign are checked, the compatibility
    /// conditions are left to `is_valid`.
    pub fn new(k: usize, a: Vec<f64>) -> Result<Self> {
        if k == 0 || a.len() != k * k {
            return Err(Error::InvalidParameter(format!("need {} meeting heights for k={k}", k * k)));
        }
        if a.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidParameter("meeting heights must be finite and nonnegative".into()));
        }
        Ok(MeetingHeights { k, a })
    }

    pub fn single() -> Self {
        MeetingHeights { k: 1, a: vec![0.0] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Labels are 1-based.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[(i - 1) * self.k + (j - 1)]
    }

    pub fn entries(&self) -> &[f64] {
        &self.a
    }

    pub fn is_valid(&self) -> bool {
        validate_meeting_heights(self)
    }
}

/// Symmetry, zero diagonal, and a_ij < a_ik ⇒ a_jk = a_ik over all triples.
pub fn validate_meeting_heights(a: &MeetingHeights) -> bool {
    let k = a.k;
    for i in 1..=k {
        if a.get(i, i) != 0.0 {
            return false;
        }
        for j in 1..=k {
            if a.get(i, j) != a.get(j, i) {
                return false;
            }
            for l in 1..=k {
                if a.get(i, j) < a.get(i, l) && a.get(j, l) != a.get(i, l) {
                    return false;
                }
            }
        }
    }
    true
}

/// Points i·ε, i ∈ {0..N}^m, optionally restricted by a mask. Row-major with
/// the last coordinate fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    m: usize,
    cells: usize,
    inside: Vec<bool>,
}

impl Grid {
    /// The unit cube with `cells` grid steps per axis.
    pub fn cube(m: usize, cells: usize) -> Result<Self> {
        if m == 0 || cells == 0 {
            return Err(Error::InvalidParameter("grid needs m >= 1 and at least one step".into()));
        }
        Ok(Grid { m, cells, inside: vec![true; (cells + 1).pow(m as u32)] })
    }

    pub fn from_mask(m: usize, cells: usize, inside: Vec<bool>) -> Result<Self> {
        let g = Grid::cube(m, cells)?;
        if inside.len() != g.inside.len() {
            return Err(Error::InvalidParameter("mask size does not match the grid".into()));
        }
        Ok(Grid { inside, ..g })
    }

    pub fn from_eps(m: usize, eps: f64) -> Result<Self> {
        let cells = (1.0 / eps).round();
        if !(eps > 0.0) || (cells * eps - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("1/eps must be an integer, got eps={eps}")));
        }
        Grid::cube(m, cells as usize)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells
    }

    pub fn eps(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn len(&self) -> usize {
        self.inside.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.inside.iter().any(|&b| b)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.inside[i]
    }

    pub fn coords(&self, mut i: usize) -> Vec<usize> {
        let mut c = vec![0; self.m];
        for k in (0..self.m).rev() {
            c[k] = i % (self.cells + 1);
            i /= self.cells + 1;
        }
        c
    }

    pub fn index(&self, c: &[usize]) -> usize {
        c.iter().fold(0, |acc, &x| acc * (self.cells + 1) + x)
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.coords(i).iter().map(|&x| x as f64 * self.eps()).collect()
    }

    pub fn step(&self, i: usize, k: usize, positive: bool) -> Option<usize> {
        let stride = (self.cells + 1).pow((self.m - 1 - k) as u32);
        let c = i / stride % (self.cells + 1);
        let j = if positive {
            (c < self.cells).then(|| i + stride)?
        } else {
            (c > 0).then(|| i - stride)?
        };
        self.inside[j].then_some(j)
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(2 * self.m);
        for k in 0..self.m {
            for p in [true, false] {
                out.extend(self.step(i, k, p));
            }
        }
        out
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.inside[i] && self.neighbors(i).len() < 2 * self.m
    }

    pub fn boundary(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_boundary(i)).collect()
    }

    pub fn points(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.inside[i])
    }

    /// l1 distance between grid points in continuum units.
    pub fn l1(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.coords(i), self.coords(j));
        a.iter().zip(&b).map(|(x, y)| x.abs_diff(*y)).sum::<usize>() as f64 * self.eps()
    }

    /// Points whose forward neighbours all lie in the region; these carry the
    /// forward-difference gradient.
    pub fn gradient_cells(&self) -> Vec<usize> {
        self.points().filter(|&i| (0..self.m).all(|k| self.step(i, k, true).is_some())).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoticProfile {
    pub grid: Grid,
    /// Unused outside the region.
    pub h1: Vec<f64>,
    pub h2: Vec<usize>,
    pub heights: MeetingHeights,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryProfile {
    pub grid: Grid,
    pub points: Vec<usize>,
    pub h1: Vec<f64>,
    pub h2: Vec<usize>,
    pub heights: MeetingHeights,
}

impl BoundaryProfile {
    /// Samples h1, h2 at every boundary point of the grid.
    pub fn from_fn(grid: Grid, heights: MeetingHeights, f: impl Fn(&[f64]) -> (f64, usize)) -> Self {
        let points = grid.boundary();
        let (h1, h2) = points.iter().map(|&i| f(&grid.point(i))).unzip();
        BoundaryProfile { grid, points, h1, h2, heights }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidBoundary(msg));
        if !self.heights.is_valid() {
            return bad("meeting heights violate symmetry or compatibility".into());
        }
        if self.h1.len() != self.points.len() || self.h2.len() != self.points.len() {
            return bad("value count does not match boundary points".into());
        }
        for (t, &i) in self.points.iter().enumerate() {
            if !self.grid.is_boundary(i) {
                return bad(format!("grid point {:?} is not on the boundary", self.grid.coords(i)));
            }
            if self.h1[t] < 0.0 || !self.h1[t].is_finite() {
                return bad(format!("negative height at {:?}", self.grid.coords(i)));
            }
            if self.h2[t] == 0 || self.h2[t] > self.heights.k() {
                return bad(format!("label {} out of range", self.h2[t]));
            }
        }
        for s in 0..self.points.len() {
            for t in 0..s {
                let dist = self.grid.l1(self.points[s], self.points[t]);
                let (x, y) = (self.h1[s], self.h1[t]);
                if (x - y).abs() > dist + TOL {
                    return bad(format!("Lipschitz bound fails between {:?} and {:?}", self.grid.coords(self.points[s]), self.grid.coords(self.points[t])));
                }
                let (i, j) = (self.h2[s], self.h2[t]);
                if i != j {
                    let a = self.heights.get(i, j);
                    if (x - a).abs() + (a - y).abs() > dist + TOL {
                        return bad(format!(
                            "extendability fails between {:?} and {:?}",
                            self.grid.coords(self.points[s]),
                            self.grid.coords(self.points[t])
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Grid admissibility: for labels i ≠ j, no connected component of
/// {h1 > a_ij + tol} meets both labels. The default tolerance is ε/2, the
/// most a 1-Lipschitz interpolation can dip between two adjacent points.
pub fn path_property_check_tol(p: &AsymptoticProfile, tol: f64) -> bool {
    let g = &p.grid;
    let k = p.heights.k();
    let mut comp = vec![usize::MAX; g.len()];
    for i in 1..=k {
        for j in i + 1..=k {
            let level = p.heights.get(i, j) + tol;
            comp.iter_mut().for_each(|c| *c = usize::MAX);
            for start in g.points() {
                if comp[start] != usize::MAX || p.h1[start] <= level {
                    continue;
                }
                let (mut has_i, mut has_j) = (false, false);
                comp[start] = start;
                let mut stack = vec![start];
                while let Some(z) = stack.pop() {
                    has_i |= p.h2[z] == i;
                    has_j |= p.h2[z] == j;
                    for w in g.neighbors(z) {
                        if comp[w] == usize::MAX && p.h1[w] > level {
                            comp[w] = start;
                            stack.push(w);
                        }
                    }
                }
                if has_i && has_j {
                    return false;
                }
            }
        }
    }
    true
}

pub fn path_property_check(p: &AsymptoticProfile) -> bool {
    path_property_check_tol(p, p.grid.eps() / 2.0)
}

pub fn is_lipschitz(p: &AsymptoticProfile) -> bool {
    let g = &p.grid;
    let eps = g.eps();
    g.points().all(|i| (0..g.m()).all(|k| g.step(i, k, true).map_or(true, |j| (p.h1[i] - p.h1[j]).abs() <= eps + TOL)))
}

pub fn validate_profile(p: &AsymptoticProfile) -> Result<()> {
    let bad = |msg: &str| Err(Error::InvariantViolated(msg.into()));
    if !p.heights.is_valid() {
        return bad("meeting heights violate symmetry or compatibility");
    }
    let g = &p.grid;
    if p.h1.len() != g.len() || p.h2.len() != g.len() {
        return bad("profile size does not match the grid");
    }
    for i in g.points() {
        if !(p.h1[i] >= -TOL) || p.h2[i] == 0 || p.h2[i] > p.heights.k() {
            return bad("height negative or label out of range");
        }
    }
    if !is_lipschitz(p) {
        return bad("h1 is not 1-Lipschitz on grid edges");
    }
    if !path_property_check(p) {
        return bad("profile is not admissible");
    }
    Ok(())
}

/// g1(y) = max(0, max_x h1(x) − |x−y|₁) over boundary points x; g2(y) is the
/// label at the first maximiser, and boundary points keep their own data.
pub fn extend_boundary_profile(b: &BoundaryProfile) -> Result<AsymptoticProfile> {
    b.validate()?;
    let g = &b.grid;
    let mut h1 = vec![0.0; g.len()];
    let mut h2 = vec![1; g.len()];
    for y in g.points() {
        let mut best = f64::NEG_INFINITY;
        let mut label = 1;
        for (t, &x) in b.points.iter().enumerate() {
            let v = b.h1[t] - g.l1(x, y);
            if v > best + 1e-12 {
                best = v;
                label = b.h2[t];
            }
        }
        h1[y] = best.max(0.0);
        h2[y] = label;
    }
    for (t, &x) in b.points.iter().enumerate() {
        h1[x] = b.h1[t];
        h2[x] = b.h2[t];
    }
    let p = AsymptoticProfile { grid: g.clone(), h1, h2, heights: b.heights.clone() };
    validate_profile(&p)?;
    Ok(p)
}

/// ent on [−1,1]^m, even in each coordinate for tables.
#[derive(Clone, Debug, PartialEq)]
pub enum SurfaceTensionModel {
    /// Multilinear interpolation in |s_k| over the points 0, 2/n, ..., 1.
    Table { m: usize, n: usize, d: u8, values: Vec<f64> },
    /// offset + curvature·|s − center|².
    Quadratic { offset: f64, curvature: f64, center: Vec<f64> },
}

impl SurfaceTensionModel {
    pub fn from_table(t: &SurfaceTensionTable) -> Result<Self> {
        if t.n % 2 == 1 {
            return Err(Error::InvalidParameter("table interpolation needs an even period".into()));
        }
        let side = t.n / 2 + 1;
        let mut values = vec![0.0; side.pow(t.m as u32)];
        for (idx, v) in values.iter_mut().enumerate() {
            let mut rest = idx;
            let mut num = vec![0i64; t.m];
            for k in (0..t.m).rev() {
                num[k] = 2 * (rest % side) as i64;
                rest /= side;
            }
            *v = t
                .get(&num)
                .filter(|e| e.is_finite())
                .ok_or_else(|| Error::InvalidParameter(format!("table lacks slope {num:?}")))?;
        }
        Ok(SurfaceTensionModel::Table { m: t.m, n: t.n, d: t.d, values })
    }

    /// Reads the CSV written by `SurfaceTensionTable::to_csv`.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty table"))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 6 || cols[..3] != ["m", "n", "d"] {
            return Err(parse_err(1, "expected header m,n,d,s1,..,count,ent"));
        }
        let m = cols.len() - 5;
        let mut entries = Vec::new();
        let mut shape = None;
        for (no, line) in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols.len() {
                return Err(parse_err(no + 1, "wrong number of columns"));
            }
            let num = |s: &str| s.trim().parse::<i64>().map_err(|_| parse_err(no + 1, format!("bad integer {s:?}")));
            let (mm, n, d) = (num(f[0])? as usize, num(f[1])?, num(f[2])? as u8);
            if mm != m {
                return Err(parse_err(no + 1, "dimension disagrees with header"));
            }
            shape.get_or_insert((n, d));
            let mut ps = Vec::new();
            for part in &f[3..3 + m] {
                let (p, q) = part.split_once('/').ok_or_else(|| parse_err(no + 1, "slope must be p/n"))?;
                if num(q)? != n {
                    return Err(parse_err(no + 1, "slope denominator differs from n"));
                }
                ps.push(num(p)?);
            }
            let ent: f64 = f[4 + m].trim().parse().map_err(|_| parse_err(no + 1, "bad ent value"))?;
            entries.push((ps, ent));
        }
        let (n, d) = shape.ok_or_else(|| parse_err(2, "table has no rows"))?;
        if n % 2 == 1 || n <= 0 {
            return Err(Error::InvalidParameter("table interpolation needs an even period".into()));
        }
        let side = n as usize / 2 + 1;
        let mut values = vec![f64::NAN; side.pow(m as u32)];
        for (ps, ent) in entries {
            if ps.iter().all(|&p| p >= 0 && p % 2 == 0) {
                let idx = ps.iter().fold(0, |acc, &p| acc * side + (p / 2) as usize);
                values[idx] = ent;
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("table does not cover the even slope grid".into()));
        }
        Ok(SurfaceTensionModel::Table { m, n: n as usize, d, values })
    }

    pub fn quadratic(offset: f64, curvature: f64, center: Vec<f64>) -> Self {
        SurfaceTensionModel::Quadratic { offset, curvature, center }
    }

    pub fn dim(&self) -> usize {
        match self {
            SurfaceTensionModel::Table { m, .. } => *m,
            SurfaceTensionModel::Quadratic { center, .. } => center.len(),
        }
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        match self {
            SurfaceTensionModel::Quadratic { offset, curvature, center } => {
                offset + curvature * s.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>()
            }
            SurfaceTensionModel::Table { m, n, values, .. } => {
                let side = n / 2 + 1;
                let h = 2.0 / *n as f64;
                let mut lo = vec![0usize; *m];
                let mut frac = vec![0.0; *m];
                for k in 0..*m {
                    let x = s[k].abs().min(1.0) / h;
                    let i = (x.floor() as usize).min(side - 2);
                    lo[k] = i;
                    frac[k] = x - i as f64;
                }
                let mut total = 0.0;
                for corner in 0..1usize << m {
                    let mut w = 1.0;
                    let mut idx = 0;
                    for k in 0..*m {
                        let up = corner >> k & 1;
                        w *= if up == 1 { frac[k] } else { 1.0 - frac[k] };
                        idx = idx * side + lo[k] + up;
                    }
                    total += w * values[idx];
                }
                total
            }
        }
    }

    /// Gradient for the quadratic; one-sided differences of the
    /// interpolation for tables, taken toward zero slope at kinks.
    pub fn gradient(&self, s: &[f64]) -> Vec<f64> {
        match self {
            SurfaceTensionModel::Quadratic { curvature, center, .. } => {
                s.iter().zip(center).map(|(a, c)| 2.0 * curvature * (a - c)).collect()
            }
            SurfaceTensionModel::Table { m, .. } => {
                let dh = 1e-7;
                (0..*m)
                    .map(|k| {
                        let dir = if s[k] > 0.0 { -1.0 } else { 1.0 };
                        let mut t = s.to_vec();
                        t[k] += dir * dh;
                        (self.eval(&t) - self.eval(s)) / (dir * dh)
                    })
                    .collect()
            }
        }
    }

    /// Second differences along each axis of the slope grid (tables) or the
    /// sign of the curvature (quadratic).
    pub fn is_axis_convex(&self, tol: f64) -> bool {
        match self {
            SurfaceTensionModel::Quadratic { curvature, .. } => *curvature >= 0.0,
            SurfaceTensionModel::Table { m, n, .. } => {
                let side = n / 2 + 1;
                let h = 2.0 / *n as f64;
                // extend evenly to negative slopes so the kink at 0 is tested
                let total = (2 * side - 1).pow(*m as u32);
                for idx in 0..total {
                    let mut rest = idx;
                    let mut s = vec![0.0; *m];
                    for k in (0..*m).rev() {
                        s[k] = ((rest % (2 * side - 1)) as f64 - (side - 1) as f64) * h;
                        rest /= 2 * side - 1;
                    }
                    for k in 0..*m {
                        if s[k].abs() + h > 1.0 + 1e-12 {
                            continue;
                        }
                        let (mut lo, mut hi) = (s.clone(), s.clone());
                        lo[k] -= h;
                        hi[k] += h;
                        if self.eval(&lo) + self.eval(&hi) - 2.0 * self.eval(&s) < -tol {
                            return false;
                        }
                    }
                }
                true
            }
        }
    }
}

fn gradient_at(p: &AsymptoticProfile, h1: &[f64], i: usize) -> Vec<f64> {
    let g = &p.grid;
    let eps = g.eps();
    (0..g.m()).map(|k| (h1[g.step(i, k, true).expect("gradient cell")] - h1[i]) / eps).collect()
}

fn entropy_of(p: &AsymptoticProfile, h1: &[f64], cells: &[usize], ent: &SurfaceTensionModel) -> f64 {
    let vol = p.grid.eps().powi(p.grid.m() as i32);
    cells.iter().map(|&i| ent.eval(&gradient_at(p, h1, i)) * vol).sum()
}

/// Riemann sum of ent(∇h1) over forward-difference cells, times ε^m.
pub fn macroscopic_entropy(p: &AsymptoticProfile, ent: &SurfaceTensionModel) -> Result<f64> {
    if ent.dim() != p.grid.m() {
        return Err(Error::InvalidParameter("surface tension dimension differs from the grid".into()));
    }
    Ok(entropy_of(p, &p.h1, &p.grid.gradient_cells(), ent))
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop when an accepted step improves the objective by less than this.
    pub stall: f64,
    pub initial_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { max_iter: 20_000, stall: 1e-12, initial_step: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub profile: AsymptoticProfile,
    pub objective: f64,
    /// Objective after each accepted iteration, starting with the initial one.
    pub history: Vec<f64>,
    pub admissible: bool,
}

/// Largest (min_envelope) or smallest 1-Lipschitz function on the grid graph
/// below or above h, by Gauss–Seidel sweeps.
fn envelope(g: &Grid, h: &mut [f64], from_above: bool) {
    let eps = g.eps();
    let pts: Vec<usize> = g.points().collect();
    let nbrs: Vec<Vec<usize>> = pts.iter().map(|&i| g.neighbors(i)).collect();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let order: Box<dyn Iterator<Item = usize>> =
                if pass == 0 { Box::new(0..pts.len()) } else { Box::new((0..pts.len()).rev()) };
            for t in order {
                let i = pts[t];
                for &j in &nbrs[t] {
                    if from_above && h[i] > h[j] + eps + 1e-15 {
                        h[i] = h[j] + eps;
                        changed = true;
                    } else if !from_above && h[i] < h[j] - eps - 1e-15 {
                        h[i] = h[j] - eps;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return;
        }
    }
}

struct Feasible {
    lower: Vec<f64>,
    upper: Vec<f64>,
    free: Vec<bool>,
}

impl Feasible {
    fn new(b: &BoundaryProfile, start: &AsymptoticProfile) -> Self {
        let g = &b.grid;
        let mut upper = vec![f64::INFINITY; g.len()];
        for y in g.points() {
            for (t, &x) in b.points.iter().enumerate() {
                upper[y] = upper[y].min(b.h1[t] + g.l1(x, y));
            }
        }
        let mut free = vec![false; g.len()];
        for y in g.points() {
            free[y] = true;
        }
        for &x in &b.points {
            free[x] = false;
        }
        Feasible { lower: start.h1.clone(), upper, free }
    }

    /// Clamp into [lower, upper] on free points, then average the two
    /// Lipschitz envelopes. Boundary values are untouched.
    fn project(&self, g: &Grid, h: &mut Vec<f64>) {
        for i in g.points() {
            if self.free[i] {
                h[i] = h[i].clamp(self.lower[i], self.upper[i]);
            }
        }
        let mut a = h.clone();
        let mut b = h.clone();
        envelope(g, &mut a, true);
        envelope(g, &mut b, false);
        for i in g.points() {
            if self.free[i] {
                h[i] = 0.5 * (a[i] + b[i]);
            }
        }
    }
}

/// Projected descent on the free grid values of h1, starting from the
/// boundary extension. Labels come from the extension. Each iteration tries
/// step sizes c/√t, halving until the objective does not increase, so the
/// recorded objective is monotone.
pub fn minimize_entropy(b: &BoundaryProfile, ent: &SurfaceTensionModel, eps: f64, opts: &SolverOptions) -> Result<Solution> {
    if (b.grid.eps() - eps).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("boundary grid has eps={}, asked for {eps}", b.grid.eps())));
    }
    if ent.dim() != b.grid.m() {
        return Err(Error::InvalidParameter("surface tension dimension differs from the grid".into()));
    }
    let start = extend_boundary_profile(b).map_err(|e| match e {
        Error::InvariantViolated(_) => Error::Infeasible,
        other => other,
    })?;
    let g = b.grid.clone();
    let cells = g.gradient_cells();
    let feas = Feasible::new(b, &start);
    let m = g.m();
    let vol_over_eps = g.eps().powi(m as i32 - 1);
    let mut h = start.h1.clone();
    let mut f = entropy_of(&start, &h, &cells, ent);
    let mut history = vec![f];
    let mut grad = vec![0.0; g.len()];
    // natural scale: one unit of step moves h by about ε per unit slope error
    let scale = g.eps().powi(2 - m as i32);
    for t in 1..=opts.max_iter {
        grad.iter_mut().for_each(|x| *x = 0.0);
        for &i in &cells {
            let s = gradient_at(&start, &h, i);
            let dg = ent.gradient(&s);
            for k in 0..m {
                let j = g.step(i, k, true).expect("gradient cell");
                grad[j] += vol_over_eps * dg[k];
                grad[i] -= vol_over_eps * dg[k];
            }
        }
        let mut eta = opts.initial_step / (t as f64).sqrt();
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial = h.clone();
            for i in g.points() {
                if feas.free[i] {
                    trial[i] -= eta * scale * grad[i];
                }
            }
            feas.project(&g, &mut trial);
            let ft = entropy_of(&start, &trial, &cells, ent);
            if ft <= f {
                accepted = Some((trial, ft));
                break;
            }
            eta *= 0.5;
        }
        let Some((trial, ft)) = accepted else { break };
        let gain = f - ft;
        h = trial;
        f = ft;
        history.push(f);
        if gain < opts.stall {
            break;
        }
    }
    let profile = AsymptoticProfile { grid: g, h1: h, h2: start.h2.clone(), heights: b.heights.clone() };
    let admissible = validate_profile(&profile).is_ok();
    Ok(Solution { objective: f, profile, history, admissible })
}

/// |(1/n) d(h_n(x), r) − h1(x/n)| ≤ δ at every lattice point x = n·(grid point).
pub fn hp_ball_membership(h_n: &HeightFunction, n: usize, p: &AsymptoticProfile, delta: f64) -> Result<bool> {
    let scale = n as f64 * p.grid.eps();
    let step = scale.round() as i64;
    if (scale - step as f64).abs() > 1e-9 || step == 0 {
        return Err(Error::InvalidParameter("n·eps must be a positive integer".into()));
    }
    let root = TreeVertex::root();
    for i in p.grid.points() {
        let x: Vec<i64> = p.grid.coords(i).iter().map(|&c| c as i64 * step).collect();
        let v = h_n
            .value_at(&x)
            .ok_or_else(|| Error::InvalidParameter(format!("lattice point {x:?} missing from the region")))?;
        if (tree_distance(v, &root) as f64 / n as f64 - p.h1[i]).abs() > delta + TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One boundary height function at scale n, with the rays (from the root)
/// toward which each profile label travels.
#[derive(Clone, Debug)]
pub struct BoundarySample {
    pub n: usize,
    pub values: Vec<(Vec<i64>, TreeVertex)>,
    pub ends: Vec<TreeEnd>,
}

#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    pub n: usize,
    /// sup over matched pairs of (1/n) d(h(z), g_{h2(x)}(⌊n h1(x)⌋)).
    pub sup_distance: f64,
    /// ((i, j), meeting height / n, a_ij) for i < j.
    pub meetings: Vec<((usize, usize), f64, f64)>,
}

/// Pairs each lattice boundary point z with profile boundary points x,
/// |x − z/n|_∞ ≤ 1/(2n), and reports the normalized suprema.
pub fn boundary_convergence_check(seq: &[BoundarySample], b: &BoundaryProfile) -> Result<Vec<ConvergenceRow>> {
    let k = b.heights.k();
    let mut rows = Vec::new();
    for sample in seq {
        if sample.ends.len() != k {
            return Err(Error::InvalidParameter(format!("need {k} ends, got {}", sample.ends.len())));
        }
        let n = sample.n as f64;
        let mut sup: f64 = 0.0;
        for (z, v) in &sample.values {
            for (t, &x) in b.points.iter().enumerate() {
                let px = b.grid.point(x);
                if px.iter().zip(z).all(|(a, &c)| (a - c as f64 / n).abs() <= 0.5 / n + 1e-12) {
                    let target = sample.ends[b.h2[t] - 1].vertex((n * b.h1[t]).floor() as usize);
                    sup = sup.max(tree_distance(v, &target) as f64 / n);
                }
            }
        }
        let mut meetings = Vec::new();
        for i in 1..=k {
            for j in i + 1..=k {
                let mh = meeting_height(&sample.ends[i - 1], &sample.ends[j - 1])? as f64 / n;
                meetings.push(((i, j), mh, b.heights.get(i, j)));
            }
        }
        rows.push(ConvergenceRow { n: sample.n, sup_distance: sup, meetings });
    }
    Ok(rows)
}

/// The boundary values g_{h2(x)}(round(n h1(x))) at lattice points z on the
/// boundary of [0, n]^m, reading the profile at the nearest grid point.
pub fn discretize_boundary(b: &BoundaryProfile, n: usize, ends: &[TreeEnd]) -> Result<BoundarySample> {
    let m = b.grid.m();
    let cube = crate::lattice::Region::cube(m, n as i64 + 1);
    let mut values = Vec::new();
    for idx in crate::lattice::inner_boundary(&cube) {
        let z = cube.cell(idx).to_vec();
        let c: Vec<usize> =
            z.iter().map(|&zi| ((zi as f64 / n as f64) * b.grid.cells_per_axis() as f64).round() as usize).collect();
        let gi = b.grid.index(&c);
        let t = b
            .points
            .iter()
            .position(|&p| p == gi)
            .ok_or_else(|| Error::InvalidParameter("profile lacks the nearest boundary point".into()))?;
        let end = ends.get(b.h2[t] - 1).ok_or_else(|| Error::InvalidParameter("missing end for label".into()))?;
        values.push((z, end.vertex((n as f64 * b.h1[t]).round() as usize)));
    }
    Ok(BoundarySample { n, values, ends: ends.to_vec() })
}

impl AsymptoticProfile {
    pub fn to_text(&self) -> String {
        profile_text(&self.grid, &self.heights, self.grid.points().map(|i| (i, self.h1[i], self.h2[i])))
    }
}

impl BoundaryProfile {
    pub fn to_text(&self) -> String {
        profile_text(&self.grid, &self.heights, self.points.iter().enumerate().map(|(t, &i)| (i, self.h1[t], self.h2[t])))
    }
}

fn profile_text(g: &Grid, a: &MeetingHeights, rows: impl Iterator<Item = (usize, f64, usize)>) -> String {
    let mut out = String::from("PROFILE v1\n");
    writeln!(out, "k={}", a.k()).unwrap();
    let entries: Vec<String> = a.entries().iter().map(|x| format!("{x}")).collect();
    writeln!(out, "a={}", entries.join(" ")).unwrap();
    writeln!(out, "eps={}", g.eps()).unwrap();
    for (i, h1, h2) in rows {
        let coords: Vec<String> = g.point(i).iter().map(|x| format!("{x}")).collect();
        writeln!(out, "{} {} {}", coords.join(" "), h1, h2).unwrap();
    }
    out
}

/// Either kind of profile file. Regions are unit cubes; a file listing only
/// boundary points is a boundary profile.
#[derive(Clone, Debug)]
pub enum ProfileFile {
    Full(AsymptoticProfile),
    Boundary(BoundaryProfile),
}

pub fn parse_profile(text: &str) -> Result<ProfileFile> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let mut next = |what: &str| lines.next().ok_or_else(|| parse_err(0, format!("missing {what}")));
    let (no, head) = next("header")?;
    if head != "PROFILE v1" {
        return Err(parse_err(no, "expected PROFILE v1"));
    }
    let field = |(no, l): (usize, &str), key: &str| -> Result<String> {
        l.strip_prefix(key).and_then(|r| r.strip_prefix('=')).map(str::to_string).ok_or_else(|| parse_err(no, format!("expected {key}=")))
    };
    let kline = next("k")?;
    let k: usize = field(kline, "k")?.trim().parse().map_err(|_| parse_err(kline.0, "bad k"))?;
    let aline = next("a")?;
    let a: Vec<f64> = field(aline, "a")?
        .split_whitespace()
        .map(|x| x.parse::<f64>().map_err(|_| parse_err(aline.0, format!("bad meeting height {x:?}"))))
        .collect::<Result<_>>()?;
    let heights = MeetingHeights::new(k, a).map_err(|e| parse_err(aline.0, e.to_string()))?;
    let eline = next("eps")?;
    let eps: f64 = field(eline, "eps")?.trim().parse().map_err(|_| parse_err(eline.0, "bad eps"))?;
    let mut rows = Vec::new();
    let mut m = None;
    for (no, l) in lines {
        let f: Vec<f64> = l
            .split_whitespace()
            .map(|x| x.parse::<f64>().map_err(|_| parse_err(no, format!("bad number {x:?}"))))
            .collect::<Result<_>>()?;
        if f.len() < 3 {
            return Err(parse_err(no, "expected x1 .. xm h1 h2"));
        }
        let mm = f.len() - 2;
        if *m.get_or_insert(mm) != mm {
            return Err(parse_err(no, "inconsistent dimension"));
        }
        rows.push((no, f));
    }
    let m = m.ok_or_else(|| parse_err(0, "no grid lines"))?;
    let grid = Grid::from_eps(m, eps).map_err(|e| parse_err(eline.0, e.to_string()))?;
    let cells = grid.cells_per_axis() as f64;
    let mut seen = vec![None; grid.len()];
    for (no, f) in &rows {
        let mut c = Vec::with_capacity(m);
        for &x in &f[..m] {
            let idx = x * cells;
            if (idx - idx.round()).abs() > 1e-6 || idx.round() < 0.0 || idx.round() > cells {
                return Err(parse_err(*no, format!("coordinate {x} is not on the eps-grid")));
            }
            c.push(idx.round() as usize);
        }
        let h2 = f[m + 1];
        if h2.fract() != 0.0 || h2 < 1.0 {
            return Err(parse_err(*no, "label must be a positive integer"));
        }
        let i = grid.index(&c);
        if seen[i].is_some() {
            return Err(parse_err(*no, "duplicate grid point"));
        }
        seen[i] = Some((f[m], h2 as usize));
    }
    if seen.iter().all(Option::is_some) {
        let (h1, h2) = seen.into_iter().map(Option::unwrap).unzip();
        return Ok(ProfileFile::Full(AsymptoticProfile { grid, h1, h2, heights }));
    }
    let points = grid.boundary();
    if points.iter().any(|&i| seen[i].is_none()) || seen.iter().enumerate().any(|(i, s)| s.is_some() && !grid.is_boundary(i)) {
        return Err(parse_err(0, "grid lines must cover either the whole grid or exactly its boundary"));
    }
    let (h1, h2) = points.iter().map(|&i| seen[i].unwrap()).unzip();
    Ok(ProfileFile::Boundary(BoundaryProfile { grid, points, h1, h2, heights }))
}

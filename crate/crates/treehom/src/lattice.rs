//! Finite regions of Z^m, height functions on them and their dual edge labels.

use std::collections::{HashMap, VecDeque};

use crate::error::{parse_err, Error, Result};
use crate::tree::{tree_distance, TreeVertex};

pub type Cell = Vec<i64>;

/// A connected finite subset of Z^m with unit l1 adjacency.
#[derive(Clone, Debug)]
pub struct Region {
    dim: usize,
    cells: Vec<Cell>,
    index: HashMap<Cell, usize>,
    // nbr[i * 2m + 2k] is the +e_k neighbour, +1 the -e_k neighbour
    nbr: Vec<Option<usize>>,
}

impl PartialEq for Region {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.cells == other.cells
    }
}

impl Region {
    pub fn from_cells(dim: usize, mut cells: Vec<Cell>) -> Result<Self> {
        if dim == 0 || cells.is_empty() || cells.iter().any(|c| c.len() != dim) {
            return Err(Error::DisconnectedRegion);
        }
        cells.sort();
        cells.dedup();
        let index: HashMap<Cell, usize> =
            cells.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
        let mut nbr = vec![None; cells.len() * 2 * dim];
        for (i, c) in cells.iter().enumerate() {
            let mut probe = c.clone();
            for k in 0..dim {
                for (s, delta) in [1i64, -1].into_iter().enumerate() {
                    probe[k] += delta;
                    nbr[i * 2 * dim + 2 * k + s] = index.get(&probe).copied();
                    probe[k] -= delta;
                }
            }
        }
        let region = Region { dim, cells, index, nbr };
        if region.bfs(0).iter().any(|d| d.is_none()) {
            return Err(Error::DisconnectedRegion);
        }
        Ok(region)
    }

    /// The box with cells 0 <= x_k < sides[k].
    pub fn cuboid(sides: &[i64]) -> Self {
        let mut cells = vec![vec![]];
        for &s in sides {
            cells = cells
                .into_iter()
                .flat_map(|c| {
                    (0..s).map(move |x| {
                        let mut c = c.clone();
                        c.push(x);
                        c
                    })
                })
                .collect();
        }
        Region::from_cells(sides.len(), cells).expect("boxes are connected")
    }

    pub fn cube(m: usize, side: i64) -> Self {
        Region::cuboid(&vec![side; m])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, i: usize) -> &Cell {
        &self.cells[i]
    }

    pub fn index_of(&self, c: &[i64]) -> Option<usize> {
        self.index.get(c).copied()
    }

    pub fn contains(&self, c: &[i64]) -> bool {
        self.index.contains_key(c)
    }

    /// Neighbour of cell i in direction k (positive or negative) if present.
    pub fn step(&self, i: usize, k: usize, positive: bool) -> Option<usize> {
        self.nbr[i * 2 * self.dim + 2 * k + usize::from(!positive)]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.nbr[i * 2 * self.dim..(i + 1) * 2 * self.dim].iter().filter_map(|x| *x)
    }

    /// Graph distances from cell `src` inside the region.
    pub fn bfs(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        dist[src] = Some(0);
        let mut q = VecDeque::from([src]);
        while let Some(i) = q.pop_front() {
            let di = dist[i].unwrap();
            for j in self.neighbors(i) {
                if dist[j].is_none() {
                    dist[j] = Some(di + 1);
                    q.push_back(j);
                }
            }
        }
        dist
    }

    pub fn is_box(&self) -> bool {
        let lo: Vec<i64> = (0..self.dim).map(|k| self.cells.iter().map(|c| c[k]).min().unwrap()).collect();
        let hi: Vec<i64> = (0..self.dim).map(|k| self.cells.iter().map(|c| c[k]).max().unwrap()).collect();
        let vol: i64 = lo.iter().zip(&hi).map(|(a, b)| b - a + 1).product();
        vol == self.len() as i64
    }

    /// Parity of x_1 + ... + x_m.
    pub fn parity(&self, i: usize) -> i64 {
        self.cells[i].iter().sum::<i64>().rem_euclid(2)
    }
}

/// Cells of the region with a unit neighbour outside it.
pub fn inner_boundary(region: &Region) -> Vec<usize> {
    (0..region.len())
        .filter(|&i| region.neighbors(i).count() < 2 * region.dim())
        .collect()
}

pub fn lattice_distance(region: &Region, x: &[i64], y: &[i64]) -> Result<usize> {
    let i = region.index_of(x).ok_or(Error::Unreachable)?;
    let j = region.index_of(y).ok_or(Error::Unreachable)?;
    region.bfs(i)[j].ok_or(Error::Unreachable)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeightFunction {
    pub region: Region,
    pub values: Vec<TreeVertex>,
}

impl HeightFunction {
    pub fn new(region: Region, values: Vec<TreeVertex>) -> Result<Self> {
        if values.len() != region.len() {
            return Err(Error::InvalidParameter("value count does not match region".into()));
        }
        Ok(HeightFunction { region, values })
    }

    pub fn from_fn(region: Region, f: impl Fn(&[i64]) -> TreeVertex) -> Self {
        let values = region.cells().iter().map(|c| f(c)).collect();
        HeightFunction { region, values }
    }

    pub fn value_at(&self, c: &[i64]) -> Option<&TreeVertex> {
        self.region.index_of(c).map(|i| &self.values[i])
    }

    /// `HEIGHT v1`, `m=<dim>`, then one `x1 .. xm word` line per cell.
    pub fn to_text(&self) -> String {
        let mut out = format!("HEIGHT v1\nm={}\n", self.region.dim());
        for (c, v) in self.region.cells().iter().zip(&self.values) {
            let coords: Vec<String> = c.iter().map(|x| x.to_string()).collect();
            out.push_str(&format!("{} {v}\n", coords.join(" ")));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, "HEIGHT v1")) => {}
            Some((ln, _)) => return Err(parse_err(ln, "expected HEIGHT v1")),
            None => return Err(parse_err(0, "empty input")),
        }
        let (ln, dim) = lines.next().ok_or_else(|| parse_err(0, "missing m="))?;
        let m: usize = dim.strip_prefix("m=").and_then(|v| v.parse().ok()).ok_or_else(|| parse_err(ln, "expected m=<dim>"))?;
        let mut cells = Vec::new();
        let mut values = Vec::new();
        for (ln, line) in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != m + 1 {
                return Err(parse_err(ln, format!("expected {m} coordinates and a word")));
            }
            let c: std::result::Result<Vec<i64>, _> = toks[..m].iter().map(|t| t.parse()).collect();
            cells.push(c.map_err(|_| parse_err(ln, "bad coordinates"))?);
            values.push(toks[m].parse::<TreeVertex>().map_err(|e| parse_err(ln, e.to_string()))?);
        }
        let region = Region::from_cells(m, cells.clone())?;
        let mut ordered = vec![TreeVertex::root(); region.len()];
        for (c, v) in cells.iter().zip(values) {
            ordered[region.index_of(c).expect("cell was inserted")] = v;
        }
        if region.len() != cells.len() {
            return Err(parse_err(0, "duplicate cells"));
        }
        HeightFunction::new(region, ordered)
    }
}

pub fn validate_homomorphism(h: &HeightFunction) -> bool {
    let r = &h.region;
    (0..r.len()).all(|i| {
        (0..r.dim()).all(|k| match r.step(i, k, true) {
            Some(j) => tree_distance(&h.values[i], &h.values[j]) == 1,
            None => true,
        })
    })
}

/// Generator labels on the edges (x, x + e_k) inside a region.
#[derive(Clone, Debug, PartialEq)]
pub struct DualLabels {
    dim: usize,
    labels: Vec<Option<u8>>,
}

impl DualLabels {
    pub fn empty(region: &Region) -> Self {
        DualLabels { dim: region.dim(), labels: vec![None; region.len() * region.dim()] }
    }

    pub fn get(&self, cell: usize, k: usize) -> Option<u8> {
        self.labels[cell * self.dim + k]
    }

    pub fn set(&mut self, cell: usize, k: usize, label: u8) {
        self.labels[cell * self.dim + k] = Some(label);
    }
}

/// The generator carried by an edge between adjacent vertices.
pub fn edge_label(a: &TreeVertex, b: &TreeVertex) -> Option<u8> {
    if b.len() == a.len() + 1 && b.letters()[..a.len()] == *a.letters() {
        b.last()
    } else if a.len() == b.len() + 1 && a.letters()[..b.len()] == *b.letters() {
        a.last()
    } else {
        None
    }
}

pub fn dual_of(h: &HeightFunction) -> Result<DualLabels> {
    let r = &h.region;
    let mut out = DualLabels::empty(r);
    for i in 0..r.len() {
        for k in 0..r.dim() {
            if let Some(j) = r.step(i, k, true) {
                let l = edge_label(&h.values[i], &h.values[j])
                    .ok_or_else(|| Error::InvalidParameter("not a homomorphism".into()))?;
                out.set(i, k, l);
            }
        }
    }
    Ok(out)
}

/// Walks the labels outward from `base`; every edge must agree with the walk.
pub fn reconstruct(labels: &DualLabels, region: &Region, anchor: &TreeVertex, base: &[i64]) -> Result<HeightFunction> {
    let b = region.index_of(base).ok_or(Error::Unreachable)?;
    let mut values: Vec<Option<TreeVertex>> = vec![None; region.len()];
    values[b] = Some(anchor.clone());
    let mut q = VecDeque::from([b]);
    while let Some(i) = q.pop_front() {
        let vi = values[i].clone().unwrap();
        for k in 0..region.dim() {
            for positive in [true, false] {
                let Some(j) = region.step(i, k, positive) else { continue };
                let tail = if positive { i } else { j };
                let l = labels.get(tail, k).ok_or(Error::PlaquetteInconsistent)?;
                let vj = vi.apply_generator(l);
                match &values[j] {
                    Some(existing) if *existing != vj => return Err(Error::PlaquetteInconsistent),
                    Some(_) => {}
                    None => {
                        values[j] = Some(vj);
                        q.push_back(j);
                    }
                }
            }
        }
    }
    Ok(HeightFunction { region: region.clone(), values: values.into_iter().map(Option::unwrap).collect() })
}

/// True when the square word a b c d' (two routes around a unit square) is trivial.
/// `a` then `b` is one route, `p` then `q` the other.
pub fn square_closes(a: u8, b: u8, p: u8, q: u8) -> bool {
    (a == b && p == q) || (a == p && b == q)
}

/// A random homomorphism on a box grown in row-major order: each cell takes a
/// uniformly chosen common neighbour of its already assigned predecessors.
pub fn random_box_homomorphism<R: rand::Rng + ?Sized>(sides: &[i64], d: u8, start: TreeVertex, rng: &mut R) -> HeightFunction {
    let region = Region::cuboid(sides);
    let m = region.dim();
    let mut values: Vec<TreeVertex> = Vec::with_capacity(region.len());
    for i in 0..region.len() {
        if i == 0 {
            values.push(start.clone());
            continue;
        }
        let back: Vec<usize> = (0..m).filter_map(|k| region.step(i, k, false)).collect();
        let first = &values[back[0]];
        let cands: Vec<TreeVertex> = first
            .neighbors(d)
            .into_iter()
            .filter(|c| back[1..].iter().all(|&j| tree_distance(c, &values[j]) == 1))
            .collect();
        values.push(cands[rng.gen_range(0..cands.len())].clone());
    }
    HeightFunction { region, values }
}

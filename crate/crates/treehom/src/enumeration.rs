//! Exact counts of n-invariant configurations and of boxes with fixed
//! boundary data, and the entropy tables built from them.

use std::fmt::Write as _;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::lattice::{inner_boundary, HeightFunction, Region};
use crate::periodic::{PeriodicConfig, Slope, Torus};
use crate::tree::{tree_distance, Geodesic, TreeVertex};

pub const DEFAULT_BUDGET: u64 = 2_000_000_000;

#[derive(Clone, Debug)]
pub struct CountResult {
    pub count: BigUint,
    /// Number of sites used for normalization.
    pub volume: usize,
    pub ent: f64,
    pub witnesses: Option<Vec<PeriodicConfig>>,
}

impl CountResult {
    pub fn new(count: BigUint, volume: usize) -> Self {
        let ent = if count.is_zero() { f64::INFINITY } else { -ln_big(&count) / volume as f64 };
        CountResult { count, volume, ent, witnesses: None }
    }
}

pub fn ln_big(c: &BigUint) -> f64 {
    let bits = c.bits();
    if bits < 1000 {
        c.to_f64().unwrap().ln()
    } else {
        let shift = bits - 64;
        (c >> shift).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
    }
}

struct Budget {
    used: u64,
    cap: u64,
}

impl Budget {
    #[inline]
    fn tick(&mut self) -> Result<()> {
        self.used += 1;
        if self.used > self.cap {
            Err(Error::BudgetExceeded(self.cap))
        } else {
            Ok(())
        }
    }
}

/// Vertices projecting to g(0) within distance r of it.
fn anchors_near_root(d: u8, r: usize) -> Vec<TreeVertex> {
    let mut out = vec![TreeVertex::root()];
    let mut frontier: Vec<TreeVertex> = (3..=d).map(|a| TreeVertex::from_letters(&[a]).unwrap()).collect();
    for _ in 0..r {
        let mut next = Vec::new();
        for v in &frontier {
            for a in 1..=d {
                if v.last() != Some(a) {
                    next.push(v.apply_generator(a));
                }
            }
        }
        out.append(&mut frontier);
        frontier = next;
    }
    out
}

// Slot s = cell * m + k holds the label of edge (cell, cell + e_k).
struct SlotPlan {
    // plaquettes (a, b, p, q) checked when slot s is assigned
    squares: Vec<Vec<[usize; 4]>>,
    // lines in direction k completed at slot s: (k, slots along the line)
    lines: Vec<Vec<(usize, Vec<usize>)>>,
}

fn slot_plan(t: &Torus) -> SlotPlan {
    let m = t.m();
    let total = t.size() * m;
    let mut squares = vec![Vec::new(); total];
    let mut lines = vec![Vec::new(); total];
    for i in 0..t.size() {
        for k in 0..m {
            let ik = t.step(i, k, true).0;
            for l in k + 1..m {
                let il = t.step(i, l, true).0;
                let sq = [i * m + k, ik * m + l, i * m + l, il * m + k];
                let last = *sq.iter().max().unwrap();
                squares[last].push(sq);
            }
            if t.coords(i)[k] == 0 {
                let mut slots = Vec::with_capacity(t.n());
                let mut j = i;
                for _ in 0..t.n() {
                    slots.push(j * m + k);
                    j = t.step(j, k, true).0;
                }
                let last = *slots.iter().max().unwrap();
                lines[last].push((k, slots));
            }
        }
    }
    SlotPlan { squares, lines }
}

fn word_of(labels: &[u8], slots: &[usize]) -> TreeVertex {
    let mut w = TreeVertex::root();
    for &s in slots {
        w.step(labels[s]);
    }
    w
}

/// Counts the pinned n-invariant configurations with |slope| = |s| supported
/// on the standard geodesic, by depth-first search over torus edge labels.
pub fn enumerate_invariant(m: usize, n: usize, d: u8, s: &Slope, budget: u64, keep: bool) -> Result<CountResult> {
    check_shape(m, n, s)?;
    let volume = n.pow(m as u32);
    let mut result = CountResult::new(BigUint::zero(), volume);
    if !s.parity_ok() {
        if keep {
            result.witnesses = Some(Vec::new());
        }
        return Ok(result);
    }
    let target: Vec<usize> = s.numerators().iter().map(|p| p.unsigned_abs() as usize).collect();
    let torus = Torus::new(m, n);
    let plan = slot_plan(&torus);
    let total = torus.size() * m;
    let zero = target.iter().all(|&p| p == 0);
    let anchors = if zero { vec![TreeVertex::root()] } else { anchors_near_root(d, n / 2) };
    let mut labels = vec![0u8; total];
    let mut budget = Budget { used: 0, cap: budget };
    let mut count = 0u64;
    let mut big = BigUint::zero();
    let mut witnesses = Vec::new();

    // iterative DFS: labels[s] == 0 means untried
    let mut s = 0usize;
    loop {
        if s == total {
            let matches = leaf_anchors(m, n, d, &labels, &anchors, zero);
            for a in matches {
                count += 1;
                if keep {
                    witnesses.push(PeriodicConfig::from_parts(m, n, d, labels.clone(), a));
                }
            }
            if count >= 1 << 62 {
                big += count;
                count = 0;
            }
            s -= 1;
        }
        // advance slot s to its next admissible label
        let mut placed = false;
        while labels[s] < d {
            labels[s] += 1;
            budget.tick()?;
            if slot_ok(&plan, &labels, s, &target) {
                placed = true;
                break;
            }
        }
        if placed {
            s += 1;
            if s < total {
                labels[s] = 0;
            }
        } else {
            labels[s] = 0;
            if s == 0 {
                break;
            }
            s -= 1;
        }
    }
    big += count;
    result = CountResult::new(big, volume);
    if keep {
        result.witnesses = Some(witnesses);
    }
    Ok(result)
}

#[inline]
fn slot_ok(plan: &SlotPlan, labels: &[u8], s: usize, target: &[usize]) -> bool {
    for sq in &plan.squares[s] {
        let (a, b, p, q) = (labels[sq[0]], labels[sq[1]], labels[sq[2]], labels[sq[3]]);
        if !((a == b && p == q) || (a == p && b == q)) {
            return false;
        }
    }
    for (k, slots) in &plan.lines[s] {
        if word_of(labels, slots).cyclic_length() != target[*k] {
            return false;
        }
    }
    true
}

fn leaf_anchors(m: usize, n: usize, d: u8, labels: &[u8], anchors: &[TreeVertex], zero: bool) -> Vec<TreeVertex> {
    if zero {
        return vec![TreeVertex::root()];
    }
    anchors
        .iter()
        .filter(|a| {
            let cfg = PeriodicConfig::from_parts(m, n, d, labels.to_vec(), (*a).clone());
            cfg.is_supported_on_standard()
        })
        .cloned()
        .collect()
}

fn check_shape(m: usize, n: usize, s: &Slope) -> Result<()> {
    if s.dim() != m || s.n() != n as i64 {
        return Err(Error::InvalidParameter(format!("slope {s} does not match m={m}, n={n}")));
    }
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter("m and n must be positive".into()));
    }
    Ok(())
}

/// Cross-check enumerator: assigns tree values on [0, n]^m cell by cell,
/// enforces periodic labels along matching faces, and tests slope, pinning
/// and closeness to the geodesic on explicit lifts.
pub fn enumerate_invariant_by_values(m: usize, n: usize, d: u8, s: &Slope, budget: u64) -> Result<CountResult> {
    check_shape(m, n, s)?;
    let volume = n.pow(m as u32);
    let target: Vec<usize> = s.numerators().iter().map(|p| p.unsigned_abs() as usize).collect();
    let region = Region::cube(m, n as i64 + 1);
    let cells = region.cells().to_vec();
    let g = Geodesic::standard();
    let mut budget = Budget { used: 0, cap: budget };
    let mut total = 0u64;
    let zero = target.iter().all(|&p| p == 0);
    let anchors: Vec<TreeVertex> = if zero {
        vec![TreeVertex::root()]
    } else {
        // a generous superset; the closeness scan does the filtering
        all_words(d, n).into_iter().filter(|v| g.project(v).0 == 0).collect()
    };
    let corner = |k: usize| -> usize {
        let mut c = vec![0i64; m];
        c[k] = n as i64;
        region.index_of(&c).unwrap()
    };
    let fd: Vec<usize> = (0..cells.len()).filter(|&i| cells[i].iter().all(|&c| c < n as i64)).collect();
    for a in anchors {
        let mut vals: Vec<TreeVertex> = vec![TreeVertex::root(); cells.len()];
        vals[0] = a.clone();
        let mut on_leaf = |vals: &[TreeVertex]| -> bool {
            let h0 = &vals[0];
            let decks: Vec<TreeVertex> = (0..m).map(|k| vals[corner(k)].mul(&h0.inverse())).collect();
            for k in 0..m {
                let min = fd.iter().map(|&x| tree_distance(&vals[x], &decks[k].mul(&vals[x]))).min().unwrap();
                if min != target[k] {
                    return false;
                }
            }
            if decks.iter().all(|t| t.is_root()) {
                return h0.is_root();
            }
            if g.project(h0).0 != 0 {
                return false;
            }
            let w = 2 * n as i64 + 2;
            lifts_close(&decks, &fd.iter().map(|&x| vals[x].clone()).collect::<Vec<_>>(), w, n / 2, &g)
        };
        values_dfs(1, &region, d, &mut vals, n as i64, &mut budget, &mut on_leaf, &mut total)?;
    }
    Ok(CountResult::new(BigUint::from(total), volume))
}

fn all_words(d: u8, len: usize) -> Vec<TreeVertex> {
    let mut out = vec![TreeVertex::root()];
    let mut frontier = vec![TreeVertex::root()];
    for _ in 0..len {
        let mut next = Vec::new();
        for v in &frontier {
            for a in 1..=d {
                if v.last() != Some(a) {
                    next.push(v.apply_generator(a));
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn lifts_close(decks: &[TreeVertex], fd: &[TreeVertex], w: i64, half: usize, g: &Geodesic) -> bool {
    let m = decks.len();
    let mut a = vec![-w; m];
    loop {
        let mut t = TreeVertex::root();
        for k in 0..m {
            t = t.mul(&decks[k].power(a[k]));
        }
        if fd.iter().any(|v| g.distance(&t.mul(v)) > half) {
            return false;
        }
        let mut k = 0;
        while k < m && a[k] == w {
            a[k] = -w;
            k += 1;
        }
        if k == m {
            return true;
        }
        a[k] += 1;
    }
}

#[allow(clippy::too_many_arguments)]
fn values_dfs(
    i: usize,
    region: &Region,
    d: u8,
    vals: &mut Vec<TreeVertex>,
    n: i64,
    budget: &mut Budget,
    on_leaf: &mut dyn FnMut(&[TreeVertex]) -> bool,
    total: &mut u64,
) -> Result<()> {
    if i == region.len() {
        if on_leaf(vals) {
            *total += 1;
        }
        return Ok(());
    }
    let m = region.dim();
    let c = region.cell(i).clone();
    let preds: Vec<(usize, usize)> = (0..m).filter_map(|k| region.step(i, k, false).map(|j| (k, j))).collect();
    let base = vals[preds[0].1].clone();
    for cand in base.neighbors(d) {
        budget.tick()?;
        if preds.iter().any(|&(_, j)| tree_distance(&vals[j], &cand) != 1) {
            continue;
        }
        // the edge into c along e_k must carry the label of its translate by -n e_j
        let periodic = preds.iter().all(|&(k, j)| {
            let label = edge_generator(&vals[j], &cand);
            (0..m).filter(|&jj| jj != k && c[jj] == n).all(|jj| {
                let mut y = c.clone();
                y[jj] -= n;
                let yi = region.index_of(&y).unwrap();
                let mut yk = y.clone();
                yk[k] -= 1;
                let yki = region.index_of(&yk).unwrap();
                edge_generator(&vals[yki], &vals[yi]) == label
            })
        });
        if !periodic {
            continue;
        }
        vals[i] = cand;
        values_dfs(i + 1, region, d, vals, n, budget, on_leaf, total)?;
    }
    Ok(())
}

fn edge_generator(a: &TreeVertex, b: &TreeVertex) -> u8 {
    crate::lattice::edge_label(a, b).expect("adjacent vertices")
}

/// Counts homomorphisms on a region with some cells fixed, subject to a
/// per-cell filter. Cells are visited in BFS order from `start`.
pub fn count_homomorphisms(
    region: &Region,
    d: u8,
    fixed: &[Option<TreeVertex>],
    filter: &dyn Fn(usize, &TreeVertex) -> bool,
    start: usize,
    budget: u64,
) -> Result<BigUint> {
    let dist = region.bfs(start);
    let mut order: Vec<usize> = (0..region.len()).collect();
    order.sort_by_key(|&i| (dist[i], i));
    let pos: Vec<usize> = {
        let mut p = vec![0; region.len()];
        for (k, &i) in order.iter().enumerate() {
            p[i] = k;
        }
        p
    };
    // neighbours assigned earlier, and fixed cells that must stay reachable
    let earlier: Vec<Vec<usize>> = order.iter().map(|&i| region.neighbors(i).filter(|&j| pos[j] < pos[i]).collect()).collect();
    let fixed_cells: Vec<usize> = (0..region.len()).filter(|&i| fixed[i].is_some()).collect();
    let fixed_dist: Vec<Vec<usize>> = fixed_cells
        .iter()
        .map(|&f| region.bfs(f).into_iter().map(|x| x.unwrap()).collect())
        .collect();
    let mut vals: Vec<TreeVertex> = vec![TreeVertex::root(); region.len()];
    let mut budget = Budget { used: 0, cap: budget };
    let mut total = 0u64;
    let first = order[0];
    let first_cands: Vec<TreeVertex> = match &fixed[first] {
        Some(v) => vec![v.clone()],
        None => return Err(Error::InvalidParameter("the start cell must be fixed".into())),
    };
    struct Ctx<'a> {
        order: &'a [usize],
        earlier: &'a [Vec<usize>],
        fixed: &'a [Option<TreeVertex>],
        fixed_cells: &'a [usize],
        fixed_dist: &'a [Vec<usize>],
        filter: &'a dyn Fn(usize, &TreeVertex) -> bool,
        d: u8,
    }
    fn go(k: usize, ctx: &Ctx, vals: &mut Vec<TreeVertex>, budget: &mut Budget, total: &mut u64) -> Result<()> {
        if k == ctx.order.len() {
            *total += 1;
            return Ok(());
        }
        let i = ctx.order[k];
        let prev = &ctx.earlier[k];
        let cands = match &ctx.fixed[i] {
            Some(v) => vec![v.clone()],
            None => vals[prev[0]].neighbors(ctx.d),
        };
        for c in cands {
            budget.tick()?;
            if prev.iter().any(|&j| tree_distance(&vals[j], &c) != 1) {
                continue;
            }
            if !(ctx.filter)(i, &c) {
                continue;
            }
            if ctx.fixed[i].is_none()
                && ctx
                    .fixed_cells
                    .iter()
                    .zip(ctx.fixed_dist)
                    .any(|(&f, fd)| tree_distance(&c, ctx.fixed[f].as_ref().unwrap()) > fd[i])
            {
                continue;
            }
            vals[i] = c;
            go(k + 1, ctx, vals, budget, total)?;
        }
        Ok(())
    }
    let ctx = Ctx { order: &order, earlier: &earlier, fixed, fixed_cells: &fixed_cells, fixed_dist: &fixed_dist, filter, d };
    for c in first_cands {
        if !filter(first, &c) {
            continue;
        }
        vals[first] = c;
        go(1, &ctx, &mut vals, &mut budget, &mut total)?;
    }
    Ok(BigUint::from(total))
}

/// Extensions of boundary data (values on the inner boundary) to the region;
/// entropy normalized by the region size.
pub fn enumerate_fixed_boundary(region: &Region, boundary: &HeightFunctionOnBoundary, d: u8, budget: u64) -> Result<CountResult> {
    let mut fixed = vec![None; region.len()];
    for (c, v) in &boundary.values {
        let i = region
            .index_of(c)
            .ok_or_else(|| Error::InvalidBoundary(format!("cell {c:?} is outside the region")))?;
        fixed[i] = Some(v.clone());
    }
    for i in inner_boundary(region) {
        if fixed[i].is_none() {
            return Err(Error::InvalidBoundary(format!("boundary cell {:?} has no value", region.cell(i))));
        }
    }
    // the parity and Lipschitz conditions between boundary cells are checked
    // by the search itself; an inconsistent boundary gives 0
    let start = (0..region.len()).find(|&i| fixed[i].is_some()).unwrap();
    let count = count_homomorphisms(region, d, &fixed, &|_, _| true, start, budget)?;
    Ok(CountResult::new(count, region.len()))
}

/// Values prescribed on boundary cells.
#[derive(Clone, Debug, PartialEq)]
pub struct HeightFunctionOnBoundary {
    pub values: Vec<(Vec<i64>, TreeVertex)>,
}

impl HeightFunctionOnBoundary {
    pub fn from_fn(region: &Region, f: impl Fn(&[i64]) -> TreeVertex) -> Self {
        let values = inner_boundary(region).into_iter().map(|i| (region.cell(i).clone(), f(region.cell(i)))).collect();
        HeightFunctionOnBoundary { values }
    }

    pub fn of(h: &HeightFunction) -> Self {
        HeightFunctionOnBoundary::from_fn(&h.region, |c| h.value_at(c).unwrap().clone())
    }
}

/// The closest parity-consistent lattice point to s.x on the standard
/// geodesic: q = floor(s.x) or floor(s.x) + 1 with q = |x|_1 mod 2.
pub fn geodesic_trace_position(s: &[f64], x: &[i64]) -> i64 {
    let u: f64 = s.iter().zip(x).map(|(a, b)| a * *b as f64).sum();
    let f = (u + 1e-9).floor() as i64;
    let par = x.iter().sum::<i64>().rem_euclid(2);
    if (f - par).rem_euclid(2) == 0 {
        f
    } else {
        f + 1
    }
}

/// Boundary data on S_n = [0, n]^m following the standard geodesic at slope s.
/// The deviation from g(floor(s.x)) is at most one; when delta n < 1 only an
/// exact trace qualifies.
pub fn geodesic_boundary(n: usize, s: &Slope, delta: f64) -> Result<(Region, HeightFunctionOnBoundary)> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!("delta {delta} outside [0, 1]")));
    }
    let m = s.dim();
    let region = Region::cube(m, n as i64 + 1);
    let sf = s.as_f64();
    let g = Geodesic::standard();
    let mut worst = 0i64;
    let b = HeightFunctionOnBoundary::from_fn(&region, |x| {
        let q = geodesic_trace_position(&sf, x);
        g.point(q)
    });
    for (x, v) in &b.values {
        let fl: i64 = s.numerators().iter().zip(x).map(|(p, c)| p * c).sum::<i64>().div_euclid(s.n());
        worst = worst.max(tree_distance(v, &g.point(fl)) as i64);
    }
    if worst as f64 > delta * n as f64 + 1e-12 {
        return Err(Error::EmptyBoundaryClass);
    }
    Ok((region, b))
}

/// Ent(S_n, h) - ent_n(s) for the geodesic boundary data at slope s.
pub fn fixed_vs_free_gap(n: usize, s: &Slope, delta: f64, d: u8, budget: u64) -> Result<GapReport> {
    let (region, b) = geodesic_boundary(n, s, delta)?;
    let fixed = enumerate_fixed_boundary(&region, &b, d, budget)?;
    let free = enumerate_invariant(s.dim(), n, d, s, budget, false)?;
    Ok(GapReport { fixed_count: fixed.count.clone(), free_count: free.count.clone(), fixed_ent: fixed.ent, free_ent: free.ent, gap: fixed.ent - free.ent })
}

#[derive(Clone, Debug)]
pub struct GapReport {
    pub fixed_count: BigUint,
    pub free_count: BigUint,
    pub fixed_ent: f64,
    pub free_ent: f64,
    pub gap: f64,
}

/// Homomorphisms on [0, n-1]^m with h(0) = r whose boundary distances to r
/// stay within eps n of |s.x|. Returns the count and -(1/n^m) ln|H| - ent_n(s).
pub fn band_boundary_count(n: usize, s: &Slope, eps: f64, d: u8, budget: u64) -> Result<(CountResult, f64)> {
    let m = s.dim();
    let region = Region::cube(m, n as i64);
    let boundary: Vec<bool> = {
        let mut b = vec![false; region.len()];
        for i in inner_boundary(&region) {
            b[i] = true;
        }
        b
    };
    let sf = s.as_f64();
    let cells = region.cells().to_vec();
    let band = eps * n as f64;
    let filter = |i: usize, v: &TreeVertex| -> bool {
        if !boundary[i] {
            return true;
        }
        let sx: f64 = sf.iter().zip(&cells[i]).map(|(a, b)| a * *b as f64).sum();
        (v.len() as f64 - sx.abs()).abs() <= band + 1e-9
    };
    let mut fixed = vec![None; region.len()];
    fixed[0] = Some(TreeVertex::root());
    let count = count_homomorphisms(&region, d, &fixed, &filter, 0, budget)?;
    let res = CountResult::new(count, n.pow(m as u32));
    let free = enumerate_invariant(m, n, d, s, budget, false)?;
    let gap = res.ent - free.ent;
    Ok((res, gap))
}

/// Builds the geodesic boundary on S_n and the k-fold tiled boundary on S_nk
/// and checks Ent(S_n) >= Ent(S_nk) exactly in ratio form.
pub fn periodic_boundary_tiling_check(n: usize, k: usize, s: &Slope, d: u8, budget: u64) -> Result<TilingReport> {
    let (small_region, small) = geodesic_boundary(n, s, 1.0)?;
    if !is_periodic_boundary(n, &small) {
        return Err(Error::InvalidBoundary("geodesic boundary is not periodic".into()));
    }
    let big_slope = Slope::new((n * k) as i64, s.numerators().iter().map(|p| p * k as i64).collect())?;
    let (big_region, big) = geodesic_boundary(n * k, &big_slope, 1.0)?;
    // the tiled boundary is the same trace on the larger box
    let c_small = enumerate_fixed_boundary(&small_region, &small, d, budget)?;
    let c_big = enumerate_fixed_boundary(&big_region, &big, d, budget)?;
    // compare ln c_small / |S_n| and ln c_big / |S_nk| without rounding:
    // c_small^{|S_nk|} <= c_big^{|S_n|}
    let holds = if c_small.count.is_zero() {
        true
    } else {
        let lhs = c_small.count.pow(big_region.len() as u32);
        let rhs = c_big.count.pow(small_region.len() as u32);
        lhs <= rhs
    };
    Ok(TilingReport { small: c_small, big: c_big, holds })
}

#[derive(Clone, Debug)]
pub struct TilingReport {
    pub small: CountResult,
    pub big: CountResult,
    pub holds: bool,
}

/// Opposite faces of the box carry the same edge labels.
pub fn is_periodic_boundary(n: usize, b: &HeightFunctionOnBoundary) -> bool {
    let get = |c: &[i64]| b.values.iter().find(|(x, _)| x.as_slice() == c).map(|(_, v)| v);
    for (x, v) in &b.values {
        let m = x.len();
        for k in 0..m {
            let mut y = x.clone();
            y[k] += 1;
            let Some(w) = get(&y) else { continue };
            let label = crate::lattice::edge_label(v, w);
            for j in 0..m {
                let mut x2 = x.clone();
                let mut y2 = y.clone();
                x2[j] += n as i64;
                y2[j] += n as i64;
                if let (Some(a), Some(bb)) = (get(&x2), get(&y2)) {
                    if crate::lattice::edge_label(a, bb) != label {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// The bound C (1 - (n1/n2)^m + (n2 - n1)/n2 + 1/n2^m) with C = ln d.
pub fn comparison_bound(n1: usize, n2: usize, m: usize, d: u8) -> f64 {
    let (a, b) = (n1 as f64, n2 as f64);
    (d as f64).ln() * (1.0 - (a / b).powi(m as i32) + (b - a) / b + 1.0 / b.powi(m as i32))
}

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub ent1: f64,
    pub ent2: f64,
    pub gap: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Compares ent_{n1}(s) and ent_{n2}(s) for the same real slope s, rounded
/// to each period. Fails with `UnrealizableSlope` if either rounded class is
/// empty, since ent is then infinite.
pub fn comparison_lemma_check(n1: usize, n2: usize, s: &[num_rational::Rational64], d: u8, budget: u64) -> Result<ComparisonReport> {
    if n1 > n2 {
        return Err(Error::InvalidParameter("n1 must not exceed n2".into()));
    }
    let m = s.len();
    let s1 = Slope::round_realizable(n1 as i64, s)?;
    let s2 = Slope::round_realizable(n2 as i64, s)?;
    let e1 = enumerate_invariant(m, n1, d, &s1, budget, false)?;
    let e2 = enumerate_invariant(m, n2, d, &s2, budget, false)?;
    for (e, sl) in [(&e1, &s1), (&e2, &s2)] {
        if e.count.is_zero() {
            return Err(Error::UnrealizableSlope(format!("no configurations at slope {sl}")));
        }
    }
    let gap = (e1.ent - e2.ent).abs();
    let bound = comparison_bound(n1, n2, m, d);
    Ok(ComparisonReport { ent1: e1.ent, ent2: e2.ent, gap, bound, holds: gap <= bound })
}

/// E[depth h(x) | depth increments along the first k steps of the path]
/// under the uniform measure on the given configurations.
pub fn conditional_depth_expectation(configs: &[PeriodicConfig], path: &[Vec<i64>], increments: &[i64], x: &[i64]) -> Result<BigRational> {
    let g = Geodesic::standard();
    if increments.len() + 1 > path.len() {
        return Err(Error::InvalidParameter("more increments than path steps".into()));
    }
    let mut sum = BigInt::zero();
    let mut cnt = BigInt::zero();
    for cfg in configs {
        let depths: Vec<i64> = path.iter().take(increments.len() + 1).map(|p| g.depth(&cfg.lift_value(p))).collect();
        if depths.windows(2).zip(increments).all(|(w, &c)| w[1] - w[0] == c) {
            sum += BigInt::from(g.depth(&cfg.lift_value(x)));
            cnt += BigInt::one();
        }
    }
    if cnt.is_zero() {
        return Err(Error::EmptyConditionClass);
    }
    Ok(BigRational::new(sum, cnt))
}

/// Max over configurations and k of |X_k - X_{k-1}| for the Doob martingale
/// of depth h(x) along a path ending at x.
pub fn max_martingale_increment(configs: &[PeriodicConfig], path: &[Vec<i64>]) -> BigRational {
    let g = Geodesic::standard();
    let x = path.last().unwrap();
    let depth_paths: Vec<(Vec<i64>, i64)> = configs
        .iter()
        .map(|c| {
            let ds: Vec<i64> = path.iter().map(|p| g.depth(&c.lift_value(p))).collect();
            let inc: Vec<i64> = ds.windows(2).map(|w| w[1] - w[0]).collect();
            (inc, g.depth(&c.lift_value(x)))
        })
        .collect();
    let steps = path.len() - 1;
    let mut worst = BigRational::zero();
    // X_k for every prefix class
    let mean_of = |k: usize, prefix: &[i64]| -> BigRational {
        let mut sum = BigInt::zero();
        let mut cnt = BigInt::zero();
        for (inc, dx) in &depth_paths {
            if inc[..k] == prefix[..k] {
                sum += BigInt::from(*dx);
                cnt += BigInt::one();
            }
        }
        BigRational::new(sum, cnt)
    };
    for (inc, _) in &depth_paths {
        let mut prev = mean_of(0, inc);
        for k in 1..=steps {
            let cur = mean_of(k, inc);
            let diff = if cur > prev { &cur - &prev } else { &prev - &cur };
            if diff > worst {
                worst = diff;
            }
            prev = cur;
        }
    }
    worst
}

/// Entropies of every realizable slope with nonnegative numerators.
#[derive(Clone, Debug)]
pub struct SurfaceTensionTable {
    pub m: usize,
    pub n: usize,
    pub d: u8,
    pub entries: Vec<(Slope, CountResult)>,
}

impl SurfaceTensionTable {
    pub fn compute(m: usize, n: usize, d: u8, budget: u64) -> Result<Self> {
        let mut entries = Vec::new();
        let steps: Vec<i64> = (0..=n as i64).filter(|p| (p - n as i64).rem_euclid(2) == 0).collect();
        let mut idx = vec![0usize; m];
        loop {
            let num: Vec<i64> = idx.iter().map(|&i| steps[i]).collect();
            let s = Slope::new(n as i64, num)?;
            if s.is_realizable() {
                entries.push((s.clone(), enumerate_invariant(m, n, d, &s, budget, false)?));
            }
            let mut k = m;
            loop {
                if k == 0 {
                    return Ok(SurfaceTensionTable { m, n, d, entries });
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < steps.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    pub fn get(&self, num: &[i64]) -> Option<f64> {
        self.entries.iter().find(|(s, _)| s.numerators() == num).map(|(_, c)| c.ent)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let cols: Vec<String> = (1..=self.m).map(|k| format!("s{k}")).collect();
        writeln!(out, "m,n,d,{},count,ent", cols.join(",")).unwrap();
        for (s, c) in &self.entries {
            let parts: Vec<String> = s.numerators().iter().map(|p| format!("{p}/{}", self.n)).collect();
            writeln!(out, "{},{},{},{},{},{:.12}", self.m, self.n, self.d, parts.join(","), c.count, c.ent).unwrap();
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct ConvexityReport {
    pub checked: usize,
    pub tolerance: f64,
    /// (outer slope, midpoint numerators, other outer slope, excess)
    pub violations: Vec<(Vec<i64>, Vec<i64>, Vec<i64>, f64)>,
    pub max_excess: f64,
}

/// Midpoint convexity along each coordinate axis of the table.
pub fn convexity_check(table: &SurfaceTensionTable, tolerance: f64) -> ConvexityReport {
    let mut report = ConvexityReport { checked: 0, tolerance, violations: Vec::new(), max_excess: f64::NEG_INFINITY };
    for (s0, c0) in &table.entries {
        for k in 0..table.m {
            for half in (1..=table.n as i64).filter(|h| h % 2 == 0 || table.n % 2 == 1) {
                let mut mid = s0.numerators().to_vec();
                mid[k] += half;
                let mut far = s0.numerators().to_vec();
                far[k] += 2 * half;
                let (Some(em), Some(ef)) = (table.get(&mid), table.get(&far)) else { continue };
                let excess = em - (c0.ent + ef) / 2.0;
                report.checked += 1;
                report.max_excess = report.max_excess.max(excess);
                if excess > tolerance {
                    report.violations.push((s0.numerators().to_vec(), mid, far, excess));
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::periodic::parse_rationals;

    fn slope(n: i64, s: &str, m: usize) -> Slope {
        Slope::from_rationals(n, &parse_rationals(s, m).unwrap()).unwrap()
    }

    #[test]
    fn hand_counts() {
        let c = enumerate_invariant(1, 2, 3, &slope(2, "0", 1), DEFAULT_BUDGET, false).unwrap();
        assert_eq!(c.count, BigUint::from(3u32));
        let c = enumerate_invariant(1, 2, 3, &slope(2, "1/2", 1), DEFAULT_BUDGET, false).unwrap();
        assert!(c.count.is_zero());
        assert!(c.ent.is_infinite());
        // zero slope at m = 2, n = 2: both labels of a direction agree and the
        // two directions commute
        for d in [2u8, 3, 4] {
            let c = enumerate_invariant(2, 2, d, &Slope::zero(2, 2), DEFAULT_BUDGET, false).unwrap();
            let d = d as u32;
            assert_eq!(c.count, BigUint::from(2 * d * d - d));
        }
    }

    #[test]
    fn m1_scan_matches() {
        // all d^2 labelings of the 2-cycle, scanned directly
        for d in 2..=4u8 {
            let mut zero = 0u32;
            for a in 1..=d {
                for b in 1..=d {
                    let cfg = PeriodicConfig::new(1, 2, d, vec![a, b], TreeVertex::root()).unwrap();
                    if cfg.slope().is_zero() {
                        zero += 1;
                    }
                }
            }
            let c = enumerate_invariant(1, 2, d, &Slope::zero(1, 2), DEFAULT_BUDGET, false).unwrap();
            assert_eq!(c.count, BigUint::from(zero));
            assert_eq!(zero, d as u32);
        }
    }

    #[test]
    fn enumerators_agree_small() {
        for (m, n, d) in [(1usize, 2usize, 2u8), (1, 3, 3), (1, 4, 3), (2, 2, 3), (2, 3, 2)] {
            let steps: Vec<i64> = (-(n as i64)..=n as i64).collect();
            let mut nums = vec![vec![]];
            for _ in 0..m {
                nums = nums.into_iter().flat_map(|v: Vec<i64>| steps.iter().map(move |&p| {
                    let mut v = v.clone();
                    v.push(p);
                    v
                })).collect();
            }
            for num in nums {
                if num.iter().any(|&p| p < 0) {
                    continue;
                }
                let s = Slope::new(n as i64, num).unwrap();
                let a = enumerate_invariant(m, n, d, &s, DEFAULT_BUDGET, false).unwrap();
                let b = enumerate_invariant_by_values(m, n, d, &s, DEFAULT_BUDGET).unwrap();
                assert_eq!(a.count, b.count, "m={m} n={n} d={d} s={s}");
            }
        }
    }

    #[test]
    fn witnesses_are_pinned_and_supported() {
        let s = slope(4, "1/2,0", 2);
        let c = enumerate_invariant(2, 4, 3, &s, DEFAULT_BUDGET, true).unwrap();
        let w = c.witnesses.unwrap();
        assert_eq!(BigUint::from(w.len()), c.count);
        for cfg in &w {
            assert!(cfg.plaquettes_close());
            assert!(cfg.is_pinned());
            assert!(cfg.is_supported_on_standard());
            assert_eq!(cfg.slope().numerators(), &[2, 0]);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let r = enumerate_invariant(2, 3, 3, &slope(3, "1/3", 2), 100, false);
        assert!(matches!(r, Err(Error::BudgetExceeded(100))));
    }

    #[test]
    fn fixed_boundary_examples() {
        let g = Geodesic::standard();
        let b2 = Region::cube(2, 2);
        let trace = HeightFunctionOnBoundary::from_fn(&b2, |x| g.point(x[0] + x[1].rem_euclid(2)));
        assert!(enumerate_fixed_boundary(&b2, &trace, 3, DEFAULT_BUDGET).unwrap().count >= BigUint::one());
        let mut bad = trace.clone();
        bad.values[3].1 = TreeVertex::from_letters(&[3, 1, 3]).unwrap();
        assert!(enumerate_fixed_boundary(&b2, &bad, 3, DEFAULT_BUDGET).unwrap().count.is_zero());
    }

    #[test]
    fn flat_box_counts_agree() {
        // 3x3 box, boundary alternating r and [1]: the centre takes any of
        // the d neighbours of [1]
        let b = Region::cube(2, 3);
        let flat = HeightFunctionOnBoundary::from_fn(&b, |x| {
            if (x[0] + x[1]) % 2 == 0 { TreeVertex::root() } else { TreeVertex::from_letters(&[1]).unwrap() }
        });
        let c = enumerate_fixed_boundary(&b, &flat, 3, DEFAULT_BUDGET).unwrap();
        assert_eq!(c.count, BigUint::from(3u32));
        assert!((c.ent + 3f64.ln() / 9.0).abs() < 1e-12);
    }

    #[test]
    fn geodesic_boundary_delta() {
        let s = slope(2, "1,0", 2);
        assert!(matches!(geodesic_boundary(2, &s, 0.0), Err(Error::EmptyBoundaryClass)));
        let (region, b) = geodesic_boundary(2, &s, 0.5).unwrap();
        let c = enumerate_fixed_boundary(&region, &b, 3, DEFAULT_BUDGET).unwrap();
        assert_eq!(c.count, BigUint::one());
        assert!(is_periodic_boundary(2, &b));
        let s = slope(1, "1", 1);
        assert!(geodesic_boundary(1, &s, 0.0).is_ok());
    }

    #[test]
    fn band_vacuous_for_large_eps() {
        let s = Slope::zero(2, 2);
        let (c, _) = band_boundary_count(2, &s, 10.0, 3, DEFAULT_BUDGET).unwrap();
        // 2x2 box with h(0) = r: 3 * 3 choices for the two neighbours, then
        // the far corner is a common neighbour of both
        assert_eq!(c.count, BigUint::from(3 * 3 + 3 * 2 * 1u32));
    }

    #[test]
    fn tiling_trivial_k1() {
        let r = periodic_boundary_tiling_check(2, 1, &Slope::zero(2, 2), 3, DEFAULT_BUDGET).unwrap();
        assert!(r.holds);
        assert_eq!(r.small.count, r.big.count);
    }

    #[test]
    fn comparison_equal_periods() {
        let s = parse_rationals("0", 2).unwrap();
        let r = comparison_lemma_check(2, 2, &s, 3, DEFAULT_BUDGET).unwrap();
        assert_eq!(r.gap, 0.0);
        assert!(r.bound >= 0.0 && r.holds);
    }

    #[test]
    fn comparison_odd_period_rounds_to_realizable() {
        let s = parse_rationals("0", 2).unwrap();
        let r = comparison_lemma_check(2, 3, &s, 2, DEFAULT_BUDGET).unwrap();
        // 6 configurations at n = 2, 68 at slope (1/3, 1/3) for n = 3
        assert!((r.ent1 + 6f64.ln() / 4.0).abs() < 1e-12);
        assert!((r.ent2 + 68f64.ln() / 9.0).abs() < 1e-12);
        assert!(r.holds);
    }

    #[test]
    fn comparison_rejects_empty_classes() {
        // (1, 0) rounds to (1, 1/3) at n = 3, which has no configurations
        let s = parse_rationals("1,0", 2).unwrap();
        assert!(matches!(comparison_lemma_check(3, 4, &s, 3, DEFAULT_BUDGET), Err(Error::UnrealizableSlope(_))));
        assert!(comparison_lemma_check(2, 4, &s, 3, DEFAULT_BUDGET).unwrap().holds);
    }

    #[test]
    fn conditional_expectations() {
        let c = enumerate_invariant(2, 2, 3, &Slope::zero(2, 2), DEFAULT_BUDGET, true).unwrap();
        let w = c.witnesses.unwrap();
        let path = vec![vec![0, 0], vec![1, 0], vec![1, 1]];
        let g = Geodesic::standard();
        // unconditional mean
        let all = conditional_depth_expectation(&w, &path, &[], &[1, 1]).unwrap();
        let direct: i64 = w.iter().map(|c| g.depth(&c.lift_value(&[1, 1]))).sum();
        assert_eq!(all, BigRational::new(direct.into(), (w.len() as i64).into()));
        // fully conditioned: the depth itself
        for cfg in &w {
            let ds: Vec<i64> = path.iter().map(|p| g.depth(&cfg.lift_value(p))).collect();
            let inc: Vec<i64> = ds.windows(2).map(|x| x[1] - x[0]).collect();
            let e = conditional_depth_expectation(&w, &path, &inc, &[1, 1]).unwrap();
            assert_eq!(e, BigRational::from_integer(ds[2].into()));
        }
        assert!(matches!(conditional_depth_expectation(&w, &path, &[5], &[1, 1]), Err(Error::EmptyConditionClass)));
        assert!(max_martingale_increment(&w, &path) <= BigRational::from_integer(2.into()));
    }

    #[test]
    fn convexity_of_constant_table() {
        let mut t = SurfaceTensionTable::compute(1, 2, 3, DEFAULT_BUDGET).unwrap();
        for e in &mut t.entries {
            e.1.ent = -0.5;
        }
        let r = convexity_check(&t, 0.0);
        assert!(r.violations.is_empty());
        assert!(r.checked > 0 || t.entries.len() < 3);
    }

    #[test]
    fn anchor_candidates() {
        let a = anchors_near_root(3, 2);
        assert_eq!(a.len(), 1 + 1 + 2);
        let g = Geodesic::standard();
        assert!(a.iter().all(|v| g.project(v) == (0, v.len())));
    }
}

//! Lipschitz extension of partial tree-valued height functions.

use crate::error::{Error, Result};
use crate::lattice::{validate_homomorphism, HeightFunction, Region};
use crate::periodic::{PeriodicConfig, Slope};
use crate::tree::{busemann_depth, ray_vertex, tree_distance, Geodesic, TreeEnd, TreeVertex};

/// Values prescribed on a subset of a region.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialHeight {
    pub region: Region,
    pub support: Vec<usize>,
    pub values: Vec<TreeVertex>,
}

impl PartialHeight {
    pub fn new(region: Region, assigned: Vec<(Vec<i64>, TreeVertex)>) -> Result<Self> {
        let mut support = Vec::with_capacity(assigned.len());
        let mut values = Vec::with_capacity(assigned.len());
        for (c, v) in assigned {
            let i = region
                .index_of(&c)
                .ok_or_else(|| Error::InvalidParameter(format!("cell {c:?} is outside the region")))?;
            if support.contains(&i) {
                return Err(Error::InvalidParameter(format!("cell {c:?} assigned twice")));
            }
            support.push(i);
            values.push(v);
        }
        Ok(PartialHeight { region, support, values })
    }

    /// Restriction of a full height function to the given cells.
    pub fn restrict(h: &HeightFunction, support: &[usize]) -> Self {
        PartialHeight {
            region: h.region.clone(),
            support: support.to_vec(),
            values: support.iter().map(|&i| h.values[i].clone()).collect(),
        }
    }

    fn distances(&self) -> Vec<Vec<usize>> {
        self.support
            .iter()
            .map(|&s| self.region.bfs(s).into_iter().map(|d| d.expect("regions are connected")).collect())
            .collect()
    }

    /// Parses lines `x1 x2 ... xm word`; the region is the bounding box of
    /// an optional `box s1 ... sm` header line, else inferred.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut sides: Option<Vec<i64>> = None;
        let mut assigned = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks[0] == "box" {
                let s: std::result::Result<Vec<i64>, _> = toks[1..].iter().map(|t| t.parse()).collect();
                sides = Some(s.map_err(|_| crate::error::parse_err(ln + 1, "bad box sides"))?);
                continue;
            }
            let (coords, word) = toks.split_at(toks.len() - 1);
            let c: std::result::Result<Vec<i64>, _> = coords.iter().map(|t| t.parse()).collect();
            let c = c.map_err(|_| crate::error::parse_err(ln + 1, "bad coordinates"))?;
            let v: TreeVertex = word[0].parse().map_err(|e: Error| crate::error::parse_err(ln + 1, e.to_string()))?;
            assigned.push((c, v));
        }
        if assigned.is_empty() {
            return Err(crate::error::parse_err(0, "no assigned cells"));
        }
        let sides = match sides {
            Some(s) => s,
            None => {
                let m = assigned[0].0.len();
                (0..m).map(|k| assigned.iter().map(|(c, _)| c[k]).max().unwrap() + 1).collect()
            }
        };
        PartialHeight::new(Region::cuboid(&sides), assigned)
    }
}

/// h_x^w(y): the vertex at lattice distance d(x, y) from w on the ray toward omega.
pub fn maximal_homomorphism(x: &[i64], w: &TreeVertex, omega: &TreeEnd, region: &Region) -> Result<HeightFunction> {
    let i = region.index_of(x).ok_or(Error::Unreachable)?;
    let dist = region.bfs(i);
    let values = dist
        .into_iter()
        .map(|d| d.map(|d| ray_vertex(w, omega, d)).ok_or(Error::Unreachable))
        .collect::<Result<Vec<_>>>()?;
    HeightFunction::new(region.clone(), values)
}

fn parity(region: &Region, cell: usize, v: &TreeVertex) -> i64 {
    (region.parity(cell) + v.len() as i64) % 2
}

pub fn check_extension_condition(p: &PartialHeight) -> bool {
    if p.support.is_empty() {
        return true;
    }
    let par = parity(&p.region, p.support[0], &p.values[0]);
    if p.support.iter().zip(&p.values).any(|(&c, v)| parity(&p.region, c, v) != par) {
        return false;
    }
    let dist = p.distances();
    for a in 0..p.support.len() {
        for b in a + 1..p.support.len() {
            if tree_distance(&p.values[a], &p.values[b]) > dist[a][p.support[b]] {
                return false;
            }
        }
    }
    true
}

/// At each cell, the candidate h_x^{h(x)}(y) of largest Busemann depth; this
/// is the pointwise lowest extension toward omega.
pub fn kirszbraun_extend(p: &PartialHeight, omega: &TreeEnd) -> Result<HeightFunction> {
    if p.support.is_empty() || !check_extension_condition(p) {
        return Err(Error::ConditionViolated);
    }
    let dist = p.distances();
    let values: Vec<TreeVertex> = (0..p.region.len())
        .map(|y| {
            let mut best: Option<(i64, TreeVertex)> = None;
            for (a, w) in p.values.iter().enumerate() {
                let c = ray_vertex(w, omega, dist[a][y]);
                let depth = busemann_depth(&c, omega);
                if best.as_ref().map_or(true, |(bd, _)| depth > *bd) {
                    best = Some((depth, c));
                }
            }
            best.unwrap().1
        })
        .collect();
    let h = HeightFunction::new(p.region.clone(), values)?;
    if !validate_homomorphism(&h) || p.support.iter().zip(&p.values).any(|(&c, v)| h.values[c] != *v) {
        return Err(Error::InvariantViolated("extension is not a homomorphism".into()));
    }
    Ok(h)
}

/// An n-invariant configuration of the given slope on the standard geodesic,
/// obtained by extending g(sum_k c_k p_k / n) from the corners of [0, n]^m.
pub fn periodic_from_slope(n: usize, s: &Slope, g: &Geodesic, d: u8) -> Result<PeriodicConfig> {
    if !g.is_standard() {
        return Err(Error::UnsupportedGeodesic);
    }
    let m = s.dim();
    let p = s.numerators();
    if s.n() != n as i64 {
        return Err(Error::InvalidParameter(format!("slope has denominator {} but n = {n}", s.n())));
    }
    if !s.is_realizable() {
        return Err(Error::UnrealizableSlope(s.to_string()));
    }
    if n % 2 == 1 {
        // every monodromy is the reflection alpha_1 fixing the edge r -- [1]
        let torus_size = n.pow(m as u32);
        return PeriodicConfig::new(m, n, d, vec![1; torus_size * m], TreeVertex::root());
    }
    let region = Region::cube(m, n as i64 + 1);
    let corners: Vec<(Vec<i64>, TreeVertex)> = (0..1usize << m)
        .map(|bits| {
            let c: Vec<i64> = (0..m).map(|k| if bits >> k & 1 == 1 { n as i64 } else { 0 }).collect();
            let pos: i64 = (0..m).map(|k| c[k] / n as i64 * p[k]).sum();
            (c, g.point(pos))
        })
        .collect();
    let partial = PartialHeight::new(region, corners)?;
    let h = kirszbraun_extend(&partial, g.backward())?;
    PeriodicConfig::from_geodesic_heights(m, n, d, |c| {
        let v = h.value_at(c).expect("inside the box");
        let (pos, dist) = g.project(v);
        debug_assert_eq!(dist, 0);
        pos
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::random_box_homomorphism;
    use crate::periodic::parse_rationals;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(w: &[u8]) -> TreeVertex {
        TreeVertex::from_letters(w).unwrap()
    }

    fn back() -> TreeEnd {
        Geodesic::standard().backward().clone()
    }

    #[test]
    fn maximal_homomorphism_examples() {
        let b = Region::cube(2, 4);
        let h = maximal_homomorphism(&[0, 0], &TreeVertex::root(), &back(), &b).unwrap();
        assert_eq!(h.values[0], TreeVertex::root());
        assert_eq!(*h.value_at(&[1, 0]).unwrap(), v(&[2]));
        assert!(validate_homomorphism(&h));
    }

    #[test]
    fn extension_condition_examples() {
        let b = Region::cube(2, 3);
        let p = PartialHeight::new(b.clone(), vec![(vec![0, 0], TreeVertex::root()), (vec![2, 0], v(&[1, 2]))]).unwrap();
        assert!(check_extension_condition(&p));
        let p = PartialHeight::new(b.clone(), vec![(vec![0, 0], TreeVertex::root()), (vec![1, 0], TreeVertex::root())]).unwrap();
        assert!(!check_extension_condition(&p));
        let p = PartialHeight::new(b, vec![(vec![0, 0], TreeVertex::root()), (vec![1, 0], v(&[1, 2, 3]))]).unwrap();
        assert!(!check_extension_condition(&p));
        assert!(matches!(kirszbraun_extend(&p, &back()), Err(Error::ConditionViolated)));
    }

    #[test]
    fn extension_examples() {
        let seg = Region::cuboid(&[3]);
        let p = PartialHeight::new(seg, vec![(vec![0], TreeVertex::root()), (vec![2], TreeVertex::root())]).unwrap();
        let h = kirszbraun_extend(&p, &back()).unwrap();
        assert_eq!(h.values[1], v(&[2]));
        let seg = Region::cuboid(&[2]);
        let p = PartialHeight::new(seg, vec![(vec![0], TreeVertex::root())]).unwrap();
        assert_eq!(kirszbraun_extend(&p, &back()).unwrap().values[1], v(&[2]));
    }

    /// Every homomorphism on the region agreeing with the partial data.
    pub(crate) fn all_extensions(p: &PartialHeight, d: u8) -> Vec<HeightFunction> {
        let r = &p.region;
        let start = p.support.first().copied().unwrap_or(0);
        let dist = r.bfs(start);
        let mut order: Vec<usize> = (0..r.len()).collect();
        order.sort_by_key(|&i| dist[i]);
        let fixed: Vec<Option<&TreeVertex>> =
            (0..r.len()).map(|i| p.support.iter().position(|&s| s == i).map(|a| &p.values[a])).collect();
        let mut vals: Vec<Option<TreeVertex>> = vec![None; r.len()];
        let mut out = Vec::new();
        fn go(
            idx: usize,
            order: &[usize],
            r: &Region,
            d: u8,
            fixed: &[Option<&TreeVertex>],
            vals: &mut Vec<Option<TreeVertex>>,
            out: &mut Vec<HeightFunction>,
        ) {
            if idx == order.len() {
                out.push(HeightFunction::new(r.clone(), vals.iter().map(|v| v.clone().unwrap()).collect()).unwrap());
                return;
            }
            let i = order[idx];
            let assigned: Vec<TreeVertex> = r.neighbors(i).filter_map(|j| vals[j].clone()).collect();
            let cands: Vec<TreeVertex> = match (fixed[i], assigned.first()) {
                (Some(v), _) => vec![v.clone()],
                (None, Some(a)) => a.neighbors(d),
                (None, None) => unreachable!("start cell is in the support"),
            };
            for c in cands {
                if assigned.iter().all(|a| tree_distance(a, &c) == 1) {
                    vals[i] = Some(c);
                    go(idx + 1, order, r, d, fixed, vals, out);
                    vals[i] = None;
                }
            }
        }
        go(0, &order, r, d, &fixed, &mut vals, &mut out);
        out
    }

    #[test]
    fn corners_extension_is_pointwise_lowest() {
        let b = Region::cube(2, 3);
        let p = PartialHeight::new(b, vec![(vec![0, 0], TreeVertex::root()), (vec![2, 2], v(&[1, 2]))]).unwrap();
        let h = kirszbraun_extend(&p, &back()).unwrap();
        let all = all_extensions(&p, 3);
        assert!(!all.is_empty());
        for e in &all {
            for y in 0..e.values.len() {
                assert!(busemann_depth(&e.values[y], &back()) >= busemann_depth(&h.values[y], &back()));
            }
        }
        assert!(all.contains(&h));
    }

    #[test]
    fn periodic_examples() {
        let g = Geodesic::standard();
        let s = Slope::from_rationals(2, &parse_rationals("1,0", 2).unwrap()).unwrap();
        let cfg = periodic_from_slope(2, &s, &g, 3).unwrap();
        assert_eq!(cfg.slope().numerators(), &[2, 0]);
        // toward the backward end the travel dips on odd rows
        let expect = PeriodicConfig::from_geodesic_heights(2, 2, 3, |c| c[0] - c[1].rem_euclid(2)).unwrap();
        assert_eq!(cfg, expect);
        let s = Slope::from_rationals(2, &parse_rationals("1/2,0", 2).unwrap()).unwrap();
        assert!(matches!(periodic_from_slope(2, &s, &g, 3), Err(Error::UnrealizableSlope(_))));
        let s = Slope::from_rationals(4, &parse_rationals("1/2,1/2", 2).unwrap()).unwrap();
        let cfg = periodic_from_slope(4, &s, &g, 3).unwrap();
        assert_eq!(cfg.slope().numerators(), &[2, 2]);
        assert_eq!(cfg.supporting_geodesic().unwrap(), g);
        let s = Slope::from_rationals(3, &parse_rationals("1/3,-1/3", 2).unwrap()).unwrap();
        let cfg = periodic_from_slope(3, &s, &g, 3).unwrap();
        assert_eq!(cfg.slope().numerators(), &[1, 1]);
        let other = Geodesic::new(TreeEnd::new(&[], &[1, 3]).unwrap(), TreeEnd::new(&[], &[3, 1]).unwrap()).unwrap();
        assert!(matches!(periodic_from_slope(2, &Slope::zero(2, 2), &other, 3), Err(Error::UnsupportedGeodesic)));
    }

    #[test]
    fn periodic_slopes_at_n4() {
        let g = Geodesic::standard();
        for p1 in [-4i64, -2, 0, 2, 4] {
            for p2 in [-4i64, -2, 0, 2, 4] {
                let s = Slope::new(4, vec![p1, p2]).unwrap();
                let cfg = periodic_from_slope(4, &s, &g, 3).unwrap();
                assert_eq!(cfg.slope().numerators(), &[p1.abs(), p2.abs()]);
                assert!(cfg.is_supported_on_standard());
                assert!(cfg.is_pinned());
            }
        }
    }

    fn feasible(seed: u64, side: i64, k: usize) -> PartialHeight {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_box_homomorphism(&[side, side], 3, TreeVertex::root(), &mut rng);
        let mut cells: Vec<usize> = (0..h.region.len()).collect();
        rand::seq::SliceRandom::shuffle(&mut cells[..], &mut rng);
        PartialHeight::restrict(&h, &cells[..k.min(cells.len())])
    }

    proptest! {
        #[test]
        fn extends_feasible_data(seed in any::<u64>(), side in 2i64..=5, k in 1usize..6) {
            let p = feasible(seed, side, k);
            prop_assert!(check_extension_condition(&p));
            let h = kirszbraun_extend(&p, &back()).unwrap();
            prop_assert!(validate_homomorphism(&h));
            for (&c, v) in p.support.iter().zip(&p.values) {
                prop_assert_eq!(&h.values[c], v);
            }
            let again = kirszbraun_extend(&PartialHeight::restrict(&h, &p.support), &back()).unwrap();
            prop_assert_eq!(again, h);
        }

        #[test]
        fn infeasible_data_has_no_extension(
            words in prop::collection::vec(prop::collection::vec(1u8..=3, 0..4), 2..4),
            cells in prop::collection::vec(0usize..4, 2..4),
        ) {
            let b = Region::cube(2, 2);
            let mut support: Vec<usize> = Vec::new();
            let mut values = Vec::new();
            for (c, w) in cells.iter().zip(&words) {
                if !support.contains(c) {
                    support.push(*c);
                    values.push(TreeVertex::reduce(w));
                }
            }
            let p = PartialHeight { region: b, support, values };
            let ok = check_extension_condition(&p);
            let exts = all_extensions(&p, 3);
            prop_assert_eq!(ok, !exts.is_empty());
            if !ok {
                prop_assert!(kirszbraun_extend(&p, &back()).is_err());
            }
        }

        #[test]
        fn lowest_among_all_extensions(seed in any::<u64>(), k in 1usize..4) {
            let p = feasible(seed, 3, k);
            let h = kirszbraun_extend(&p, &back()).unwrap();
            for e in all_extensions(&p, 3) {
                for y in 0..e.values.len() {
                    prop_assert!(busemann_depth(&e.values[y], &back()) >= busemann_depth(&h.values[y], &back()));
                }
            }
        }
    }

    #[test]
    fn partial_text_form() {
        let p = PartialHeight::from_text("box 3 3\n0 0 e\n2 2 1,2\n").unwrap();
        assert_eq!(p.region.len(), 9);
        assert_eq!(p.values[1], v(&[1, 2]));
        assert!(PartialHeight::from_text("0 0 1,1\n").is_err());
    }
}

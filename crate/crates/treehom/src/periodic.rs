//! n-invariant configurations: periodic edge labels on the torus (Z/nZ)^m
//! together with the value at the origin.

use std::fmt;
use std::io::{BufRead, Write};

use num_rational::Rational64;
use num_traits::Signed;

use crate::error::{parse_err, Error, Result};
use crate::lattice::{square_closes, HeightFunction, Region};
use crate::tree::{standard_label, Geodesic, TreeEnd, TreeVertex};

/// Cell indexing on (Z/nZ)^m, row-major with the last coordinate fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Torus {
    m: usize,
    n: usize,
    size: usize,
    // nbr[2m*i + 2k] = +e_k neighbour, +1 = -e_k neighbour
    nbr: Vec<u32>,
    wraps: Vec<bool>,
}

impl Torus {
    pub fn new(m: usize, n: usize) -> Self {
        let size = n.pow(m as u32);
        let mut nbr = vec![0u32; size * 2 * m];
        let mut wraps = vec![false; size * 2 * m];
        let mut t = Torus { m, n, size, nbr: vec![], wraps: vec![] };
        for i in 0..size {
            let c = t.coords(i);
            for k in 0..m {
                let mut up = c.clone();
                up[k] = (c[k] + 1) % n;
                let mut down = c.clone();
                down[k] = (c[k] + n - 1) % n;
                nbr[i * 2 * m + 2 * k] = t.index(&up) as u32;
                nbr[i * 2 * m + 2 * k + 1] = t.index(&down) as u32;
                wraps[i * 2 * m + 2 * k] = c[k] + 1 == n;
                wraps[i * 2 * m + 2 * k + 1] = c[k] == 0;
            }
        }
        t.nbr = nbr;
        t.wraps = wraps;
        t
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn coords(&self, mut i: usize) -> Vec<usize> {
        let mut c = vec![0; self.m];
        for k in (0..self.m).rev() {
            c[k] = i % self.n;
            i /= self.n;
        }
        c
    }

    pub fn index(&self, c: &[usize]) -> usize {
        c.iter().fold(0, |acc, &x| acc * self.n + x)
    }

    /// Torus cell of an arbitrary lattice point.
    pub fn reduce(&self, x: &[i64]) -> usize {
        let n = self.n as i64;
        x.iter().fold(0, |acc, &v| acc * self.n + v.rem_euclid(n) as usize)
    }

    /// Neighbour in direction k; the flag says whether the step crosses the
    /// boundary of the fundamental domain [0, n)^m.
    #[inline]
    pub fn step(&self, i: usize, k: usize, positive: bool) -> (usize, bool) {
        let s = i * 2 * self.m + 2 * k + usize::from(!positive);
        (self.nbr[s] as usize, self.wraps[s])
    }
}

/// Slope with components p_k / n.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Slope {
    n: i64,
    num: Vec<i64>,
}

impl Slope {
    pub fn new(n: i64, num: Vec<i64>) -> Result<Self> {
        if n <= 0 || num.is_empty() || num.iter().any(|p| p.abs() > n) {
            return Err(Error::InvalidParameter(format!("slope numerators {num:?} out of range for n={n}")));
        }
        Ok(Slope { n, num })
    }

    pub fn zero(m: usize, n: i64) -> Self {
        Slope { n, num: vec![0; m] }
    }

    /// Rounds each s_k to floor(s_k n) / n.
    pub fn from_rationals(n: i64, s: &[Rational64]) -> Result<Self> {
        if s.iter().any(|x| x.abs() > Rational64::from_integer(1)) {
            return Err(Error::InvalidParameter("slope components must satisfy |s_k| <= 1".into()));
        }
        let num = s.iter().map(|x| (x * n).floor().to_integer()).collect();
        Slope::new(n, num)
    }

    /// ⌊s_k n⌋, moved by one when its parity differs from n so that the
    /// numerator can occur on the n-torus.
    pub fn round_realizable(n: i64, s: &[Rational64]) -> Result<Self> {
        let floor = Slope::from_rationals(n, s)?;
        let num = floor
            .num
            .iter()
            .map(|&p| if (p - n).rem_euclid(2) == 0 { p } else if p + 1 <= n { p + 1 } else { p - 1 })
            .collect();
        Slope::new(n, num)
    }

    pub fn n(&self) -> i64 {
        self.n
    }

    pub fn numerators(&self) -> &[i64] {
        &self.num
    }

    pub fn dim(&self) -> usize {
        self.num.len()
    }

    pub fn is_zero(&self) -> bool {
        self.num.iter().all(|&p| p == 0)
    }

    pub fn components(&self) -> Vec<Rational64> {
        self.num.iter().map(|&p| Rational64::new(p, self.n)).collect()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.num.iter().map(|&p| p as f64 / self.n as f64).collect()
    }

    /// The one-period distance always has the parity of n.
    pub fn parity_ok(&self) -> bool {
        self.num.iter().all(|p| (p - self.n).rem_euclid(2) == 0)
    }

    /// Realizable on the standard geodesic: parity, and for odd n every
    /// monodromy is a reflection so each component is exactly 1/n.
    pub fn is_realizable(&self) -> bool {
        if !self.parity_ok() {
            return false;
        }
        self.n % 2 == 0 || self.num.iter().all(|p| p.abs() == 1)
    }

    /// Sign-normalized copy.
    pub fn abs(&self) -> Slope {
        Slope { n: self.n, num: self.num.iter().map(|p| p.abs()).collect() }
    }
}

impl fmt::Display for Slope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.num.iter().map(|p| format!("{p}/{}", self.n)).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Parses `1/2,0,-1/4`; a single component is broadcast to `m` entries.
pub fn parse_rationals(s: &str, m: usize) -> Result<Vec<Rational64>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        let r = if let Some((a, b)) = part.split_once('/') {
            let a: i64 = a.trim().parse().map_err(|_| Error::InvalidParameter(format!("bad slope {s}")))?;
            let b: i64 = b.trim().parse().map_err(|_| Error::InvalidParameter(format!("bad slope {s}")))?;
            if b == 0 {
                return Err(Error::InvalidParameter(format!("bad slope {s}")));
            }
            Rational64::new(a, b)
        } else {
            let a: i64 = part.parse().map_err(|_| Error::InvalidParameter(format!("bad slope {s}")))?;
            Rational64::from_integer(a)
        };
        out.push(r);
    }
    if out.len() == 1 && m > 1 {
        out = vec![out[0]; m];
    }
    if out.len() != m {
        return Err(Error::InvalidParameter(format!("slope {s} does not have {m} components")));
    }
    Ok(out)
}

/// An n-invariant homomorphism Z^m -> T.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodicConfig {
    m: usize,
    n: usize,
    d: u8,
    torus: Torus,
    // labels[i * m + k] is the generator on the edge (x_i, x_i + e_k)
    labels: Vec<u8>,
    anchor: TreeVertex,
}

impl PeriodicConfig {
    pub fn new(m: usize, n: usize, d: u8, labels: Vec<u8>, anchor: TreeVertex) -> Result<Self> {
        if m == 0 || n == 0 || d < 2 {
            return Err(Error::InvalidParameter(format!("m={m} n={n} d={d}")));
        }
        let torus = Torus::new(m, n);
        if labels.len() != torus.size() * m {
            return Err(Error::InvalidParameter("wrong number of labels".into()));
        }
        if labels.iter().any(|&l| l == 0 || l > d) || anchor.max_letter() > d {
            return Err(Error::InvalidParameter(format!("labels must lie in 1..={d}")));
        }
        let cfg = PeriodicConfig { m, n, d, torus, labels, anchor };
        if !cfg.plaquettes_close() {
            return Err(Error::PlaquetteInconsistent);
        }
        Ok(cfg)
    }

    /// Built from a labeling function on torus cells; no validation.
    pub(crate) fn from_parts(m: usize, n: usize, d: u8, labels: Vec<u8>, anchor: TreeVertex) -> Self {
        PeriodicConfig { m, n, d, torus: Torus::new(m, n), labels, anchor }
    }

    /// h(x) = g(f(x)) on the standard geodesic. `f` is evaluated on
    /// [0, n]^m and must change by exactly 1 along every edge; its gradient
    /// must be n-periodic.
    pub fn from_geodesic_heights(m: usize, n: usize, d: u8, f: impl Fn(&[i64]) -> i64) -> Result<Self> {
        let torus = Torus::new(m, n);
        let mut labels = vec![0u8; torus.size() * m];
        for i in 0..torus.size() {
            let c: Vec<i64> = torus.coords(i).iter().map(|&v| v as i64).collect();
            let a = f(&c);
            for k in 0..m {
                let mut c2 = c.clone();
                c2[k] += 1;
                let b = f(&c2);
                if (a - b).abs() != 1 {
                    return Err(Error::InvalidParameter("height steps must be +-1".into()));
                }
                labels[i * m + k] = standard_label(a.min(b));
            }
        }
        let cfg = PeriodicConfig::new(m, n, d, labels, Geodesic::standard().point(f(&vec![0; m])))?;
        let h = cfg.to_height_function(&Region::cube(m, n as i64 + 1));
        let g = Geodesic::standard();
        if h.region.cells().iter().zip(&h.values).any(|(c, v)| *v != g.point(f(c))) {
            return Err(Error::InvalidParameter("height gradient is not periodic".into()));
        }
        Ok(cfg)
    }

    /// h(x) = g(x_1 + ((x_2 + ... + x_m) mod 2)) on the standard geodesic; n even.
    pub fn geodesic_travel(m: usize, n: usize, d: u8) -> Result<Self> {
        if n % 2 != 0 {
            return Err(Error::UnrealizableSlope(format!("geodesic travel needs even n, got {n}")));
        }
        PeriodicConfig::from_geodesic_heights(m, n, d, |c| {
            let rest: i64 = c[1..].iter().sum();
            c[0] + rest.rem_euclid(2)
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> u8 {
        self.d
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, cell: usize, k: usize) -> u8 {
        self.labels[cell * self.m + k]
    }

    pub(crate) fn set_label(&mut self, cell: usize, k: usize, l: u8) {
        self.labels[cell * self.m + k] = l;
    }

    pub fn anchor(&self) -> &TreeVertex {
        &self.anchor
    }

    pub(crate) fn set_anchor(&mut self, a: TreeVertex) {
        self.anchor = a;
    }

    /// Label of the edge from `cell` toward its neighbour in direction ±e_k.
    #[inline]
    pub fn label_toward(&self, cell: usize, k: usize, positive: bool) -> u8 {
        if positive {
            self.label(cell, k)
        } else {
            let (j, _) = self.torus.step(cell, k, false);
            self.label(j, k)
        }
    }

    pub fn plaquettes_close(&self) -> bool {
        let t = &self.torus;
        for i in 0..t.size() {
            for k in 0..self.m {
                let (ik, _) = t.step(i, k, true);
                for l in k + 1..self.m {
                    let (il, _) = t.step(i, l, true);
                    let ok = square_closes(self.label(i, k), self.label(ik, l), self.label(i, l), self.label(il, k));
                    if !ok {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Values on the fundamental domain [0, n)^m, indexed by torus cell.
    pub fn values_fd(&self) -> Vec<TreeVertex> {
        let t = &self.torus;
        let mut vals: Vec<Option<TreeVertex>> = vec![None; t.size()];
        vals[0] = Some(self.anchor.clone());
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let vi = vals[i].clone().unwrap();
            for k in 0..self.m {
                for positive in [true, false] {
                    let (j, wrap) = t.step(i, k, positive);
                    if wrap || vals[j].is_some() {
                        continue;
                    }
                    vals[j] = Some(vi.apply_generator(self.label_toward(i, k, positive)));
                    stack.push(j);
                }
            }
        }
        vals.into_iter().map(Option::unwrap).collect()
    }

    /// Reduced word read along base -> base + n e_k.
    pub fn monodromy(&self, k: usize, base: usize) -> TreeVertex {
        let mut w = TreeVertex::root();
        let mut i = base;
        for _ in 0..self.n {
            w.step(self.label(i, k));
            i = self.torus.step(i, k, true).0;
        }
        w
    }

    /// The deck isometry t_k with h(x + n e_k) = t_k h(x).
    pub fn deck(&self, k: usize) -> TreeVertex {
        self.monodromy(k, 0).conjugate_by(&self.anchor)
    }

    pub fn decks(&self) -> Vec<TreeVertex> {
        (0..self.m).map(|k| self.deck(k)).collect()
    }

    /// Value of the lift at an arbitrary lattice point.
    pub fn lift_value(&self, x: &[i64]) -> TreeVertex {
        let n = self.n as i64;
        let r: Vec<usize> = x.iter().map(|&v| v.rem_euclid(n) as usize).collect();
        let base = self.values_fd()[self.torus.index(&r)].clone();
        let mut t = TreeVertex::root();
        for (k, &v) in x.iter().enumerate() {
            t = t.mul(&self.deck(k).power(v.div_euclid(n)));
        }
        t.mul(&base)
    }

    /// Lift restricted to a finite region.
    pub fn to_height_function(&self, region: &Region) -> HeightFunction {
        let fd = self.values_fd();
        let decks = self.decks();
        let n = self.n as i64;
        HeightFunction::from_fn(region.clone(), |x| {
            let r: Vec<usize> = x.iter().map(|&v| v.rem_euclid(n) as usize).collect();
            let mut t = TreeVertex::root();
            for (k, &v) in x.iter().enumerate() {
                t = t.mul(&decks[k].power(v.div_euclid(n)));
            }
            t.mul(&fd[self.torus.index(&r)])
        })
    }

    /// Equal to n times the slope: min over sites of the one-period distance.
    pub fn slope_numerators(&self) -> Vec<i64> {
        (0..self.m)
            .map(|k| (0..self.torus.size()).map(|i| self.monodromy(k, i).len()).min().unwrap() as i64)
            .collect()
    }

    pub fn slope(&self) -> Slope {
        Slope { n: self.n as i64, num: self.slope_numerators() }
    }

    /// Signed translation of each deck isometry along the standard geodesic,
    /// None when some deck isometry is not a translation of it.
    pub fn translations(&self) -> Option<Vec<i64>> {
        let g = Geodesic::standard();
        self.decks()
            .iter()
            .map(|t| {
                if t.is_dihedral() && t.len() % 2 == 0 {
                    Some(g.project(t).0)
                } else {
                    None
                }
            })
            .collect()
    }

    /// End toward which depth decreases for the dynamics: the backward end
    /// when the first nonzero translation is positive.
    pub fn depth_end(&self) -> TreeEnd {
        let g = Geodesic::standard();
        let tau = self.translations().unwrap_or_default();
        match tau.iter().find(|&&t| t != 0) {
            Some(&t) if t < 0 => g.forward().clone(),
            _ => g.backward().clone(),
        }
    }

    /// Lifted values stay within n/2 of the standard geodesic
    /// (within m n / 2 of h(0) for zero slope, which always holds).
    pub fn is_supported_on_standard(&self) -> bool {
        let decks = self.decks();
        let nontrivial: Vec<&TreeVertex> = decks.iter().filter(|t| !t.is_root()).collect();
        if nontrivial.is_empty() {
            return true;
        }
        let g = Geodesic::standard();
        let half = self.n / 2;
        let fd = self.values_fd();
        let within = |v: &TreeVertex| g.distance(v) <= half;
        if nontrivial.iter().all(|t| t.is_dihedral()) {
            return fd.iter().all(within);
        }
        // a reflection off the geodesic: the lift takes values in fd and sigma * fd
        let sigma = nontrivial[0];
        if sigma.cyclic_length() != 1 || nontrivial.iter().any(|t| *t != sigma) {
            return false;
        }
        fd.iter().all(|v| within(v) && within(&sigma.mul(v)))
    }

    /// Pinning: h(0) = r for zero slope, otherwise h(0) projects to g(0).
    pub fn is_pinned(&self) -> bool {
        if self.decks().iter().all(|t| t.is_root()) {
            self.anchor.is_root()
        } else {
            Geodesic::standard().project(&self.anchor).0 == 0
        }
    }

    pub fn supporting_geodesic(&self) -> Result<Geodesic> {
        let num = self.slope_numerators();
        let Some(k) = num.iter().position(|&p| p != 0) else {
            return Err(Error::ZeroSlope);
        };
        let t = self.deck(k);
        if t.cyclic_length() == 1 {
            return Err(Error::EllipticMonodromy);
        }
        let g = if t.is_dihedral() {
            Geodesic::standard()
        } else {
            let (p, core) = t.cyclic_decomposition();
            if !p.is_root() {
                // the axis misses the root, so it has no representation with g(0) = r
                return Err(Error::NotSupported);
            }
            let forward = TreeEnd::new(&[], core.letters())?;
            let backward = TreeEnd::new(&[], core.inverse().letters())?;
            Geodesic::new(forward, backward)?
        };
        let half = self.n / 2;
        if self.values_fd().iter().any(|v| g.distance(v) > half) {
            return Err(Error::NotSupported);
        }
        Ok(g)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "TREEHOM v1")?;
        writeln!(w, "m={} n={} d={}", self.m, self.n, self.d)?;
        writeln!(w, "slope={}", self.slope())?;
        writeln!(w, "anchor={}", self.anchor)?;
        for k in 0..self.m {
            writeln!(w, "labels k={}:", k + 1)?;
            let row: Vec<String> = (0..self.torus.size()).map(|i| self.label(i, k).to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
        let mut it = lines.iter().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        let mut next = |what: &str| it.next().ok_or_else(|| parse_err(lines.len(), format!("missing {what}")));
        let (ln, head) = next("header")?;
        if head != "TREEHOM v1" {
            return Err(parse_err(ln, "expected TREEHOM v1"));
        }
        let (ln, dims) = next("dimensions")?;
        let mut vals = [0usize; 3];
        for (slot, key) in vals.iter_mut().zip(["m", "n", "d"]) {
            let tok = dims
                .split_whitespace()
                .find_map(|t| t.strip_prefix(&format!("{key}=")))
                .ok_or_else(|| parse_err(ln, format!("missing {key}")))?;
            *slot = tok.parse().map_err(|_| parse_err(ln, format!("bad {key}")))?;
        }
        let [m, n, d] = vals;
        let (ln, slope_line) = next("slope")?;
        let slope_text = slope_line.strip_prefix("slope=").ok_or_else(|| parse_err(ln, "expected slope="))?;
        let (ln, anchor_line) = next("anchor")?;
        let anchor: TreeVertex = anchor_line
            .strip_prefix("anchor=")
            .ok_or_else(|| parse_err(ln, "expected anchor="))?
            .parse()
            .map_err(|e: Error| parse_err(ln, e.to_string()))?;
        let size = n.pow(m as u32);
        let mut labels = vec![0u8; size * m];
        for k in 0..m {
            let (ln, h) = next("labels header")?;
            if h != format!("labels k={}:", k + 1) {
                return Err(parse_err(ln, format!("expected labels k={}:", k + 1)));
            }
            let mut got = Vec::with_capacity(size);
            while got.len() < size {
                let (ln, row) = next("labels")?;
                for tok in row.split_whitespace() {
                    got.push(tok.parse::<u8>().map_err(|_| parse_err(ln, "bad label"))?);
                }
                if got.len() > size {
                    return Err(parse_err(ln, "too many labels"));
                }
            }
            for (i, l) in got.into_iter().enumerate() {
                labels[i * m + k] = l;
            }
        }
        let d = u8::try_from(d).map_err(|_| parse_err(2, "d too large"))?;
        let cfg = PeriodicConfig::new(m, n, d, labels, anchor)?;
        let declared = parse_rationals(slope_text, m).map_err(|e| parse_err(3, e.to_string()))?;
        let actual = cfg.slope().components();
        if declared != actual {
            return Err(parse_err(3, format!("declared slope {slope_text} but labels give {}", cfg.slope())));
        }
        Ok(cfg)
    }

    pub fn from_text(s: &str) -> Result<Self> {
        PeriodicConfig::read_from(s.as_bytes())
    }
}

/// Rotation-invariant comparison of cyclically reduced cores.
pub fn same_conjugacy_class(a: &TreeVertex, b: &TreeVertex) -> bool {
    let ca = a.cyclic_decomposition().1;
    let cb = b.cyclic_decomposition().1;
    if ca.len() != cb.len() {
        return false;
    }
    if ca.is_root() {
        return true;
    }
    let x = ca.letters();
    let y = cb.letters();
    (0..x.len()).any(|r| (0..x.len()).all(|i| x[(i + r) % x.len()] == y[i]))
}

//! The d-regular tree as the Cayley graph of the free product of d copies of
//! Z/2. Vertices are reduced words; multiplying on the right by a generator
//! moves along the edge carrying that label.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GeneratorIndex(u8);

impl GeneratorIndex {
    pub fn new(value: u32, d: u32) -> Result<Self> {
        if value == 0 || value > d || value > u8::MAX as u32 {
            return Err(Error::InvalidGenerator { value, d });
        }
        Ok(GeneratorIndex(value as u8))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

/// A vertex of the tree, equivalently an element of the group.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeVertex {
    word: Vec<u8>,
}

impl TreeVertex {
    pub fn root() -> Self {
        TreeVertex { word: Vec::new() }
    }

    /// Accepts only reduced words over nonzero letters.
    pub fn from_letters(letters: &[u8]) -> Result<Self> {
        if letters.iter().any(|&a| a == 0) {
            return Err(Error::InvalidWord(format!("{letters:?}")));
        }
        if letters.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidWord(format!("{letters:?} is not reduced")));
        }
        Ok(TreeVertex { word: letters.to_vec() })
    }

    /// Free reduction of an arbitrary word.
    pub fn reduce(letters: &[u8]) -> Self {
        let mut v = TreeVertex::root();
        for &a in letters {
            v.step(a);
        }
        v
    }

    pub fn letters(&self) -> &[u8] {
        &self.word
    }

    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_root(&self) -> bool {
        self.word.is_empty()
    }

    pub fn last(&self) -> Option<u8> {
        self.word.last().copied()
    }

    pub fn max_letter(&self) -> u8 {
        self.word.iter().copied().max().unwrap_or(0)
    }

    pub fn apply_generator(&self, i: u8) -> Self {
        let mut v = self.clone();
        v.step(i);
        v
    }

    /// In-place right multiplication by a generator.
    pub fn step(&mut self, i: u8) {
        if self.word.last() == Some(&i) {
            self.word.pop();
        } else {
            self.word.push(i);
        }
    }

    pub fn truncated(&self, len: usize) -> Self {
        TreeVertex { word: self.word[..len].to_vec() }
    }

    /// Group product `self * other`.
    pub fn mul(&self, other: &TreeVertex) -> TreeVertex {
        let mut v = self.clone();
        for &a in &other.word {
            v.step(a);
        }
        v
    }

    /// Every generator is an involution, so the inverse is the reversed word.
    pub fn inverse(&self) -> TreeVertex {
        let mut w = self.word.clone();
        w.reverse();
        TreeVertex { word: w }
    }

    /// `c * self * c^{-1}`.
    pub fn conjugate_by(&self, c: &TreeVertex) -> TreeVertex {
        c.mul(self).mul(&c.inverse())
    }

    /// Splits `self = p * core * p^{-1}` with `core` cyclically reduced.
    pub fn cyclic_decomposition(&self) -> (TreeVertex, TreeVertex) {
        let w = &self.word;
        if w.is_empty() {
            return (TreeVertex::root(), TreeVertex::root());
        }
        let (mut i, mut j) = (0usize, w.len() - 1);
        while i < j && w[i] == w[j] {
            i += 1;
            j -= 1;
        }
        (
            TreeVertex { word: w[..i].to_vec() },
            TreeVertex { word: w[i..=j].to_vec() },
        )
    }

    /// Minimal displacement of the left action: the length of the cyclic core.
    pub fn cyclic_length(&self) -> usize {
        self.cyclic_decomposition().1.len()
    }

    /// Elements of the dihedral subgroup generated by letters 1 and 2 are
    /// exactly those preserving the standard geodesic.
    pub fn is_dihedral(&self) -> bool {
        self.word.iter().all(|&a| a == 1 || a == 2)
    }

    pub fn neighbors(&self, d: u8) -> Vec<TreeVertex> {
        (1..=d).map(|i| self.apply_generator(i)).collect()
    }

    pub fn power(&self, k: i64) -> TreeVertex {
        let base = if k < 0 { self.inverse() } else { self.clone() };
        let mut acc = TreeVertex::root();
        for _ in 0..k.unsigned_abs() {
            acc = acc.mul(&base);
        }
        acc
    }
}

impl fmt::Display for TreeVertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.word.is_empty() {
            return write!(f, "e");
        }
        let parts: Vec<String> = self.word.iter().map(|a| a.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl FromStr for TreeVertex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "e" || s.is_empty() {
            return Ok(TreeVertex::root());
        }
        let mut letters = Vec::new();
        for part in s.split(',') {
            let a: u8 = part
                .trim()
                .parse()
                .map_err(|_| Error::InvalidWord(s.to_string()))?;
            letters.push(a);
        }
        TreeVertex::from_letters(&letters)
    }
}

pub fn apply_generator(v: &TreeVertex, i: GeneratorIndex) -> TreeVertex {
    v.apply_generator(i.get())
}

pub fn common_prefix(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

pub fn tree_distance(v: &TreeVertex, w: &TreeVertex) -> usize {
    v.len() + w.len() - 2 * common_prefix(&v.word, &w.word)
}

/// An eventually periodic ray from the root.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TreeEnd {
    prefix: Vec<u8>,
    period: Vec<u8>,
}

impl TreeEnd {
    pub fn new(prefix: &[u8], period: &[u8]) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::InvalidWord("empty period".into()));
        }
        let mut probe: Vec<u8> = prefix.to_vec();
        probe.extend_from_slice(period);
        probe.extend_from_slice(period);
        if probe.iter().any(|&a| a == 0) || probe.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidWord(format!("ray {prefix:?}({period:?})* is not reduced")));
        }
        Ok(TreeEnd { prefix: prefix.to_vec(), period: period.to_vec() })
    }

    pub fn prefix(&self) -> &[u8] {
        &self.prefix
    }

    pub fn period(&self) -> &[u8] {
        &self.period
    }

    pub fn letter(&self, i: usize) -> u8 {
        if i < self.prefix.len() {
            self.prefix[i]
        } else {
            self.period[(i - self.prefix.len()) % self.period.len()]
        }
    }

    /// The k-th vertex of the ray.
    pub fn vertex(&self, k: usize) -> TreeVertex {
        TreeVertex { word: (0..k).map(|i| self.letter(i)).collect() }
    }

    /// Length of the common prefix of a finite word with the ray.
    pub fn common_prefix(&self, w: &[u8]) -> usize {
        w.iter().enumerate().take_while(|(i, &a)| self.letter(*i) == a).count()
    }

    pub fn max_letter(&self) -> u8 {
        self.prefix.iter().chain(&self.period).copied().max().unwrap_or(0)
    }
}

impl fmt::Display for TreeEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pre: Vec<String> = self.prefix.iter().map(|a| a.to_string()).collect();
        let per: Vec<String> = self.period.iter().map(|a| a.to_string()).collect();
        write!(f, "{}({})*", pre.join(","), per.join(","))
    }
}

/// lim_k d(v, omega_k) - k.
pub fn busemann_depth(v: &TreeVertex, omega: &TreeEnd) -> i64 {
    v.len() as i64 - 2 * omega.common_prefix(&v.word) as i64
}

/// The vertex at distance `t` from `w` on the ray from `w` toward `omega`.
pub fn ray_vertex(w: &TreeVertex, omega: &TreeEnd, t: usize) -> TreeVertex {
    let c = omega.common_prefix(&w.word);
    let up = w.len() - c;
    if t <= up {
        w.truncated(w.len() - t)
    } else {
        omega.vertex(c + (t - up))
    }
}

/// The unique neighbour of `v` one step closer to `omega`.
pub fn toward_end(v: &TreeVertex, omega: &TreeEnd) -> u8 {
    let c = omega.common_prefix(&v.word);
    if c == v.len() {
        omega.letter(c)
    } else {
        *v.word.last().expect("nonempty word")
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn meeting_height(e1: &TreeEnd, e2: &TreeEnd) -> Result<usize> {
    let (p, q) = (e1.period.len(), e2.period.len());
    let horizon = e1.prefix.len().max(e2.prefix.len()) + p / gcd(p, q) * q;
    (0..horizon).find(|&i| e1.letter(i) != e2.letter(i)).ok_or(Error::EqualEnds)
}

/// A bi-infinite geodesic through the root, g(0) = r.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Geodesic {
    forward: TreeEnd,
    backward: TreeEnd,
}

impl Geodesic {
    pub fn new(forward: TreeEnd, backward: TreeEnd) -> Result<Self> {
        if forward.letter(0) == backward.letter(0) {
            return Err(Error::InvalidGeodesic("both rays leave the root along the same edge".into()));
        }
        Ok(Geodesic { forward, backward })
    }

    /// Forward ray (1,2,1,2,...), backward ray (2,1,2,1,...).
    pub fn standard() -> Self {
        Geodesic {
            forward: TreeEnd { prefix: vec![], period: vec![1, 2] },
            backward: TreeEnd { prefix: vec![], period: vec![2, 1] },
        }
    }

    pub fn is_standard(&self) -> bool {
        *self == Geodesic::standard()
    }

    pub fn forward(&self) -> &TreeEnd {
        &self.forward
    }

    pub fn backward(&self) -> &TreeEnd {
        &self.backward
    }

    pub fn point(&self, k: i64) -> TreeVertex {
        if k >= 0 {
            self.forward.vertex(k as usize)
        } else {
            self.backward.vertex((-k) as usize)
        }
    }

    /// Position of the closest geodesic point and the distance to it.
    pub fn project(&self, v: &TreeVertex) -> (i64, usize) {
        let a = self.forward.common_prefix(&v.word);
        if a > 0 {
            return (a as i64, v.len() - a);
        }
        let b = self.backward.common_prefix(&v.word);
        (-(b as i64), v.len() - b)
    }

    /// Horodistance from the backward end: position plus distance.
    pub fn depth(&self, v: &TreeVertex) -> i64 {
        busemann_depth(v, &self.backward)
    }

    pub fn distance(&self, v: &TreeVertex) -> usize {
        self.project(v).1
    }
}

pub fn geodesic_point(g: &Geodesic, k: i64) -> TreeVertex {
    g.point(k)
}

pub fn project_to_geodesic(v: &TreeVertex, g: &Geodesic) -> (i64, usize) {
    g.project(v)
}

pub fn depth(v: &TreeVertex, g: &Geodesic) -> i64 {
    g.depth(v)
}

/// Label of the edge from g(p) to g(p+1) on the standard geodesic.
pub fn standard_label(p: i64) -> u8 {
    if p.rem_euclid(2) == 0 {
        1
    } else {
        2
    }
}

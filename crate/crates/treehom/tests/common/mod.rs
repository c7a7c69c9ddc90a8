//! Integer-valued height functions, the two-generator special case worked
//! out by hand. The tree with generators {1, 2} is the line Z with g(k) = k;
//! the edge {a, a + 1} carries label 1 when a is even and 2 when a is odd.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;

fn label(a: i64, b: i64) -> u8 {
    if a.min(b).rem_euclid(2) == 0 {
        1
    } else {
        2
    }
}

struct BoxShape {
    m: usize,
    side: usize,
}

impl BoxShape {
    fn len(&self) -> usize {
        self.side.pow(self.m as u32)
    }

    fn coords(&self, mut i: usize) -> Vec<usize> {
        let mut c = vec![0; self.m];
        for k in (0..self.m).rev() {
            c[k] = i % self.side;
            i /= self.side;
        }
        c
    }

    fn index(&self, c: &[usize]) -> usize {
        c.iter().fold(0, |acc, &v| acc * self.side + v)
    }
}

/// Checks that all labels on [0, n]^m repeat with period n along every axis.
fn labels_periodic(b: &BoxShape, n: usize, h: &[i64]) -> bool {
    for i in 0..b.len() {
        let c = b.coords(i);
        for k in 0..b.m {
            if c[k] == n {
                continue;
            }
            let mut up = c.clone();
            up[k] += 1;
            let l = label(h[i], h[b.index(&up)]);
            for j in (0..b.m).filter(|&j| j != k && c[j] == 0) {
                let mut a = c.clone();
                let mut bb = up.clone();
                a[j] += n;
                bb[j] += n;
                if a.iter().chain(&bb).any(|&v| v > n) {
                    continue;
                }
                if label(h[b.index(&a)], h[b.index(&bb)]) != l {
                    return false;
                }
            }
        }
    }
    true
}

/// |p_k| for the isometry of Z carrying h(0) to h(n e_k) that matches
/// labels: a translation by t when t is even, otherwise a reflection.
fn slope_numerators(b: &BoxShape, n: usize, h: &[i64]) -> Vec<i64> {
    (0..b.m)
        .map(|k| {
            let mut e = vec![0; b.m];
            e[k] = n;
            let t = h[b.index(&e)] - h[0];
            if t % 2 == 0 {
                t.abs()
            } else {
                1
            }
        })
        .collect()
}

/// Number of integer height functions on [0, n]^m with h(0) = 0 and
/// n-periodic labels, keyed by |slope numerators|.
pub fn oracle_counts(m: usize, n: usize) -> BTreeMap<Vec<i64>, u64> {
    let b = BoxShape { m, side: n + 1 };
    let mut h = vec![0i64; b.len()];
    let mut out = BTreeMap::new();
    fill(&b, n, 1, &mut h, &mut out);
    out
}

fn fill(b: &BoxShape, n: usize, i: usize, h: &mut Vec<i64>, out: &mut BTreeMap<Vec<i64>, u64>) {
    if i == b.len() {
        if labels_periodic(b, n, h) {
            *out.entry(slope_numerators(b, n, h)).or_insert(0) += 1;
        }
        return;
    }
    let c = b.coords(i);
    let preds: Vec<usize> = (0..b.m)
        .filter(|&k| c[k] > 0)
        .map(|k| {
            let mut p = c.clone();
            p[k] -= 1;
            b.index(&p)
        })
        .collect();
    let base = h[preds[0]];
    for v in [base - 1, base + 1] {
        if preds.iter().all(|&p| (h[p] - v).abs() == 1) {
            h[i] = v;
            fill(b, n, i + 1, h, out);
        }
    }
}

/// The surface-tension CSV the library is expected to print for two
/// generators.
pub fn oracle_table_csv(m: usize, n: usize) -> String {
    let counts = oracle_counts(m, n);
    let steps: Vec<i64> = (0..=n as i64).filter(|p| (p - n as i64).rem_euclid(2) == 0).collect();
    let cols: Vec<String> = (1..=m).map(|k| format!("s{k}")).collect();
    let mut out = format!("m,n,d,{},count,ent\n", cols.join(","));
    let mut idx = vec![0usize; m];
    'outer: loop {
        let num: Vec<i64> = idx.iter().map(|&i| steps[i]).collect();
        if n % 2 == 0 || num.iter().all(|&p| p == 1) {
            let c = counts.get(&num).copied().unwrap_or(0);
            let ent = if c == 0 { f64::INFINITY } else { -(c as f64).ln() / n.pow(m as u32) as f64 };
            let parts: Vec<String> = num.iter().map(|p| format!("{p}/{n}")).collect();
            out.push_str(&format!("{m},{n},2,{},{c},{ent:.12}\n", parts.join(",")));
        }
        let mut k = m;
        loop {
            if k == 0 {
                break 'outer;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < steps.len() {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

/// Integer heights on Z^m with h(x + n e_k) = h(x) + t_k, stored on the
/// torus. A site flips by ±2 with probability 1/2 when all its neighbours
/// agree. The origin never moves.
pub struct OracleChain {
    pub m: usize,
    pub n: usize,
    pub t: Vec<i64>,
    pub h: Vec<i64>,
}

impl OracleChain {
    /// Starts from Σ_k round-to-parity(t_k x_k / n).
    pub fn new(m: usize, n: usize, t: Vec<i64>) -> Self {
        let size = n.pow(m as u32);
        let ni = n as i64;
        let h = (0..size)
            .map(|i| {
                let c = coords(i, m, n);
                (0..m).map(|k| 2 * ((c[k] as i64 * (ni + t[k]) + ni).div_euclid(2 * ni)) - c[k] as i64).sum()
            })
            .collect();
        OracleChain { m, n, t, h }
    }

    fn value(&self, x: &[i64]) -> i64 {
        let n = self.n as i64;
        let mut shift = 0;
        let mut c = vec![0usize; self.m];
        for k in 0..self.m {
            shift += x[k].div_euclid(n) * self.t[k];
            c[k] = x[k].rem_euclid(n) as usize;
        }
        self.h[index(&c, self.n)] + shift
    }

    pub fn step<R: Rng>(&mut self, rng: &mut R) {
        let i = rng.gen_range(0..self.h.len());
        let flip = rng.gen_bool(0.5);
        if i == 0 {
            return;
        }
        let c: Vec<i64> = coords(i, self.m, self.n).iter().map(|&v| v as i64).collect();
        let mut nbrs = Vec::new();
        for k in 0..self.m {
            for s in [-1, 1] {
                let mut y = c.clone();
                y[k] += s;
                nbrs.push(self.value(&y));
            }
        }
        if flip && nbrs.iter().all(|&v| v == nbrs[0]) {
            self.h[i] = 2 * nbrs[0] - self.h[i];
        }
    }

    /// max_x |h(x) − ⌊t·x / n⌋| over the fundamental domain.
    pub fn max_deviation(&self) -> i64 {
        let n = self.n as i64;
        (0..self.h.len())
            .map(|i| {
                let c = coords(i, self.m, self.n);
                let dot: i64 = c.iter().zip(&self.t).map(|(&x, &t)| x as i64 * t).sum();
                (self.h[i] - dot.div_euclid(n)).abs()
            })
            .max()
            .unwrap()
    }
}

fn coords(mut i: usize, m: usize, n: usize) -> Vec<usize> {
    let mut c = vec![0; m];
    for k in (0..m).rev() {
        c[k] = i % n;
        i /= n;
    }
    c
}

fn index(c: &[usize], n: usize) -> usize {
    c.iter().fold(0, |acc, &v| acc * n + v)
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

//! Glauber dynamics on n-invariant configurations: pivots at extrema,
//! excursion resampling and the adapted chain, plus exact kernels and a
//! shared-randomness coupling.
//!
//! Every move acts on a whole torus orbit. Depth is the Busemann function
//! toward the backward end of the standard geodesic; states are kept in the
//! orientation where the first nonzero deck translation is positive.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::periodic::PeriodicConfig;
use crate::tree::{ray_vertex, toward_end, Geodesic, TreeEnd, TreeVertex};

/// Source of uniform choices in 0..k. Simulation draws from an RNG, exact
/// kernels walk every branch.
pub trait Chooser {
    fn choose(&mut self, k: usize) -> usize;
}

pub struct RngChooser<'a, R: Rng>(pub &'a mut R);

impl<R: Rng> Chooser for RngChooser<'_, R> {
    fn choose(&mut self, k: usize) -> usize {
        self.0.gen_range(0..k)
    }
}

/// Replays a fixed prefix of choices and takes branch 0 beyond it, recording
/// the branching factors.
#[derive(Default)]
struct Replay {
    prefix: Vec<usize>,
    pos: usize,
    taken: Vec<usize>,
    arity: Vec<usize>,
}

impl Chooser for Replay {
    fn choose(&mut self, k: usize) -> usize {
        let c = if self.pos < self.prefix.len() { self.prefix[self.pos] } else { 0 };
        self.pos += 1;
        self.taken.push(c);
        self.arity.push(k);
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtremumClass {
    NotExtremum,
    Maximum,
    TrueMin,
    FakeMin,
}

impl ExtremumClass {
    pub fn is_extremum(self) -> bool {
        matches!(self, ExtremumClass::Maximum | ExtremumClass::TrueMin)
    }

    pub fn is_local_min(self) -> bool {
        matches!(self, ExtremumClass::TrueMin | ExtremumClass::FakeMin)
    }
}

/// A bounded cluster of cells above `start`, with depth offsets relative to
/// it, and the torus edge slots joining it to cells at the start's depth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExcursionComponent {
    pub start: usize,
    pub branch: u8,
    pub cells: Vec<(usize, i64)>,
    pub boundary: Vec<usize>,
    /// Torus edge slots with both ends in the component.
    pub interior: Vec<usize>,
    /// Up-edges at `start` entering the component, as (direction, positive).
    pub edges: Vec<(usize, bool)>,
}

#[derive(Clone, Debug, Default)]
pub struct Excursions {
    pub components: Vec<ExcursionComponent>,
    /// Up-edges at the start leading to unbounded depth.
    pub open_edges: Vec<(usize, bool)>,
}

fn backward() -> TreeEnd {
    Geodesic::standard().backward().clone()
}

fn check_dynamics_shape(cfg: &PeriodicConfig) -> Result<()> {
    if cfg.n() % 2 == 1 {
        return Err(Error::EllipticMonodromy);
    }
    if cfg.n() < 2 {
        return Err(Error::InvalidParameter("dynamics need n >= 2".into()));
    }
    Ok(())
}

/// Re-anchors so that the first nonzero deck translation is positive.
pub fn orient(cfg: &PeriodicConfig) -> Result<PeriodicConfig> {
    if !cfg.is_supported_on_standard() {
        return Err(Error::NotSupported);
    }
    let tau = cfg.translations().ok_or(Error::NotSupported)?;
    let mut out = cfg.clone();
    if let Some(&t) = tau.iter().find(|&&t| t != 0) {
        if t < 0 {
            out.set_anchor(TreeVertex::from_letters(&[1]).unwrap().mul(cfg.anchor()));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ChainState {
    cfg: PeriodicConfig,
    fixed: Vec<bool>,
    values: Vec<TreeVertex>,
    depth: Vec<i64>,
    down: Vec<u8>,
    zero_slope: bool,
    omega: TreeEnd,
    // BFS scratch: offset per cell, valid when stamp matches
    seen: Vec<i64>,
    stamp: Vec<u32>,
    epoch: u32,
}

impl PartialEq for ChainState {
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg && self.fixed == other.fixed
    }
}

impl ChainState {
    /// The origin is always fixed.
    pub fn new(cfg: &PeriodicConfig, fixed_sites: &[usize]) -> Result<Self> {
        check_dynamics_shape(cfg)?;
        let cfg = orient(cfg)?;
        let size = cfg.torus().size();
        let mut fixed = vec![false; size];
        fixed[0] = true;
        for &x in fixed_sites {
            if x >= size {
                return Err(Error::InvalidParameter(format!("fixed site {x} outside the torus")));
            }
            fixed[x] = true;
        }
        let values = cfg.values_fd();
        let omega = backward();
        let depth = values.iter().map(|v| crate::tree::busemann_depth(v, &omega)).collect();
        let down = values.iter().map(|v| toward_end(v, &omega)).collect();
        let zero_slope = cfg.decks().iter().all(|t| t.is_root());
        Ok(ChainState {
            cfg,
            fixed,
            values,
            depth,
            down,
            zero_slope,
            omega,
            seen: vec![0; size],
            stamp: vec![0; size],
            epoch: 0,
        })
    }

    pub fn cfg(&self) -> &PeriodicConfig {
        &self.cfg
    }

    pub fn values(&self) -> &[TreeVertex] {
        &self.values
    }

    /// Depth on the fundamental domain.
    pub fn depth_field(&self) -> &[i64] {
        &self.depth
    }

    pub fn fixed_sites(&self) -> Vec<usize> {
        (0..self.fixed.len()).filter(|&i| self.fixed[i]).collect()
    }

    pub fn is_fixed(&self, x: usize) -> bool {
        self.fixed[x]
    }

    pub fn size(&self) -> usize {
        self.fixed.len()
    }

    /// Invariant parity of depth h(0); the chain never leaves its sector.
    pub fn sector(&self) -> i64 {
        self.depth[0].rem_euclid(2)
    }

    /// Signed deck translations along the standard geodesic. Invariant under
    /// the dynamics and finer than the unsigned slope.
    pub fn translations(&self) -> Vec<i64> {
        self.cfg.translations().expect("supported state")
    }

    /// Depth differences to the origin at the given sites, preceded by the
    /// translations and the sector.
    pub fn condition_key(&self, sites: &[usize]) -> Vec<i64> {
        let mut key = self.translations();
        key.push(self.sector());
        key.extend(sites.iter().map(|&x| self.depth[x] - self.depth[0]));
        key
    }

    /// Labels plus anchor; equal keys mean equal states.
    pub fn state_key(&self) -> (Vec<u8>, TreeVertex) {
        (self.cfg.labels().to_vec(), self.cfg.anchor().clone())
    }

    #[inline]
    fn label_at(&self, x: usize, k: usize, positive: bool) -> u8 {
        self.cfg.label_toward(x, k, positive)
    }

    fn slot(&self, x: usize, k: usize, positive: bool) -> usize {
        let m = self.cfg.m();
        if positive {
            x * m + k
        } else {
            self.cfg.torus().step(x, k, false).0 * m + k
        }
    }

    pub fn classify(&self, x: usize) -> ExtremumClass {
        let m = self.cfg.m();
        let first = self.label_at(x, 0, true);
        let mut all_equal = true;
        let mut any_down = false;
        for k in 0..m {
            for positive in [true, false] {
                let l = self.label_at(x, k, positive);
                all_equal &= l == first;
                any_down |= l == self.down[x];
            }
        }
        match (all_equal, any_down) {
            (true, true) => ExtremumClass::Maximum,
            (true, false) => ExtremumClass::TrueMin,
            (false, false) => ExtremumClass::FakeMin,
            (false, true) => ExtremumClass::NotExtremum,
        }
    }

    fn set_all_labels_at(&mut self, x: usize, l: u8) {
        let m = self.cfg.m();
        for k in 0..m {
            self.cfg.set_label(x, k, l);
            let y = self.cfg.torus().step(x, k, false).0;
            self.cfg.set_label(y, k, l);
        }
    }

    fn refresh(&mut self, x: usize) {
        self.depth[x] = crate::tree::busemann_depth(&self.values[x], &self.omega);
        self.down[x] = toward_end(&self.values[x], &self.omega);
        if x == 0 {
            self.cfg.set_anchor(self.values[0].clone());
        }
    }

    /// Moves an extremum to a uniformly chosen neighbour of its common
    /// neighbour value. Returns the chosen generator.
    pub fn pivot(&mut self, x: usize, ch: &mut dyn Chooser) -> Result<u8> {
        let gamma = 1 + ch.choose(self.cfg.d() as usize) as u8;
        self.pivot_to(x, gamma)?;
        Ok(gamma)
    }

    /// Pivot with the new label given explicitly.
    pub fn pivot_to(&mut self, x: usize, gamma: u8) -> Result<()> {
        if self.fixed[x] {
            return Err(Error::FixedSite);
        }
        if !self.classify(x).is_extremum() {
            return Err(Error::NotExtremum);
        }
        let beta = self.label_at(x, 0, true);
        let v = self.values[x].apply_generator(beta);
        self.values[x] = v.apply_generator(gamma);
        self.set_all_labels_at(x, gamma);
        self.refresh(x);
        Ok(())
    }

    fn next_epoch(&mut self) -> u32 {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        self.epoch
    }

    pub fn find_excursions(&mut self, x: usize) -> Excursions {
        let m = self.cfg.m();
        let mut out = Excursions::default();
        for k in 0..m {
            for positive in [true, false] {
                let l = self.label_at(x, k, positive);
                if l == self.down[x] {
                    continue;
                }
                let (y, _) = self.cfg.torus().step(x, k, positive);
                if let Some(c) = out.components.iter_mut().find(|c| c.cells.contains(&(y, 1))) {
                    c.edges.push((k, positive));
                    continue;
                }
                match self.explore(x, y) {
                    Some((cells, boundary, interior)) => out.components.push(ExcursionComponent {
                        start: x,
                        branch: l,
                        cells,
                        boundary,
                        interior,
                        edges: vec![(k, positive)],
                    }),
                    None => out.open_edges.push((k, positive)),
                }
            }
        }
        out
    }

    /// Search over (cell, depth offset) in the cover from y at offset 1; None
    /// when some cell recurs at a second offset, which makes depth unbounded.
    fn explore(&mut self, x: usize, y: usize) -> Option<(Vec<(usize, i64)>, Vec<usize>, Vec<usize>)> {
        let m = self.cfg.m();
        let ep = self.next_epoch();
        self.stamp[x] = ep;
        self.seen[x] = 0;
        if self.stamp[y] == ep {
            // y is another copy of x: depth grows along the orbit
            return None;
        }
        self.stamp[y] = ep;
        self.seen[y] = 1;
        let mut cells = vec![(y, 1i64)];
        let mut boundary = Vec::new();
        let mut interior = Vec::new();
        let mut stack = vec![(y, 1i64)];
        while let Some((z, oz)) = stack.pop() {
            for k in 0..m {
                for positive in [true, false] {
                    let l = self.label_at(z, k, positive);
                    let ow = if l == self.down[z] { oz - 1 } else { oz + 1 };
                    let (w, _) = self.cfg.torus().step(z, k, positive);
                    if ow <= 0 {
                        boundary.push(self.slot(z, k, positive));
                        continue;
                    }
                    interior.push(self.slot(z, k, positive));
                    if self.stamp[w] == ep {
                        if self.seen[w] != ow {
                            return None;
                        }
                    } else {
                        self.stamp[w] = ep;
                        self.seen[w] = ow;
                        cells.push((w, ow));
                        stack.push((w, ow));
                    }
                }
            }
        }
        boundary.sort_unstable();
        boundary.dedup();
        interior.sort_unstable();
        interior.dedup();
        Some((cells, boundary, interior))
    }

    /// Zero-slope excursions through the origin are never resampled, which
    /// keeps h(0) = r.
    pub fn is_frozen(&self, c: &ExcursionComponent) -> bool {
        self.zero_slope && c.cells.iter().any(|&(z, _)| z == 0)
    }

    fn branch_choices(&self, x: usize) -> Vec<u8> {
        (1..=self.cfg.d()).filter(|&i| i != self.down[x]).collect()
    }

    /// Swaps the component into the branch `i` above its start. The swap is
    /// the generator transposition (branch i) applied below each cell's base
    /// value, so interior labels are transposed as well.
    pub fn resample_to(&mut self, c: &ExcursionComponent, i: u8) -> Result<()> {
        if i == self.down[c.start] || i == 0 || i > self.cfg.d() {
            return Err(Error::InvalidParameter(format!("branch {i} is not an up-edge")));
        }
        if self.is_frozen(c) {
            return Err(Error::FixedSite);
        }
        let m = self.cfg.m();
        if c.boundary.iter().any(|&s| self.cfg.label(s / m, s % m) != c.branch) {
            return Err(Error::NotAnExcursion);
        }
        if i == c.branch {
            return Ok(());
        }
        let a = c.branch;
        let swap = |l: u8| if l == a { i } else if l == i { a } else { l };
        for &s in &c.boundary {
            self.cfg.set_label(s / m, s % m, i);
        }
        for &s in &c.interior {
            let l = self.cfg.label(s / m, s % m);
            self.cfg.set_label(s / m, s % m, swap(l));
        }
        for &(z, oz) in &c.cells {
            let base = ray_vertex(&self.values[z], &self.omega, oz as usize);
            let above: Vec<u8> = base.inverse().mul(&self.values[z]).letters().iter().map(|&l| swap(l)).collect();
            self.values[z] = base.mul(&TreeVertex::reduce(&above));
            self.refresh(z);
        }
        Ok(())
    }

    /// Redraws the branch of one excursion uniformly among the d - 1 up-edges.
    pub fn resample_excursion(&mut self, c: &ExcursionComponent, ch: &mut dyn Chooser) -> Result<u8> {
        let current = self.find_excursions(c.start);
        if !current.components.iter().any(|e| e == c) {
            return Err(Error::NotAnExcursion);
        }
        let choices = self.branch_choices(c.start);
        let i = choices[ch.choose(choices.len())];
        self.resample_to(c, i)?;
        Ok(i)
    }

    /// Independently redraws every movable excursion at x.
    pub fn resample_all(&mut self, x: usize, ch: &mut dyn Chooser) {
        let ex = self.find_excursions(x);
        let choices = self.branch_choices(x);
        for c in &ex.components {
            if self.is_frozen(c) {
                continue;
            }
            let i = choices[ch.choose(choices.len())];
            self.resample_to(c, i).expect("fresh excursion");
        }
    }

    pub fn glauber_step(&mut self, ch: &mut dyn Chooser) {
        let x = ch.choose(self.size());
        if !self.fixed[x] && self.classify(x).is_extremum() {
            self.pivot(x, ch).expect("extremum");
        }
    }

    /// Resample, pivot if x is now an extremum, resample. The second
    /// resampling runs whether or not a pivot happened; that keeps the
    /// kernel symmetric.
    pub fn adapted_step_at(&mut self, x: usize, ch: &mut dyn Chooser) {
        self.resample_all(x, ch);
        if self.fixed[x] {
            return;
        }
        if self.classify(x).is_extremum() {
            self.pivot(x, ch).expect("extremum");
        }
        self.resample_all(x, ch);
    }

    pub fn adapted_step(&mut self, ch: &mut dyn Chooser) {
        let x = ch.choose(self.size());
        self.adapted_step_at(x, ch);
    }

    /// Probability that resampling all movable excursions at the local
    /// minimum x leaves a true minimum.
    pub fn true_min_probability(&mut self, x: usize) -> Result<Rational64> {
        if !self.classify(x).is_local_min() {
            return Err(Error::NotMinimum);
        }
        let ex = self.find_excursions(x);
        let mut pinned: Vec<u8> = ex.open_edges.iter().map(|&(k, p)| self.label_at(x, k, p)).collect();
        let mut free = 0i64;
        for c in &ex.components {
            if self.is_frozen(c) {
                pinned.push(c.branch);
            } else {
                free += 1;
            }
        }
        let base = self.cfg.d() as i64 - 1;
        if let Some(&first) = pinned.first() {
            if pinned.iter().any(|&l| l != first) {
                return Ok(Rational64::zero());
            }
            Ok(Rational64::new(1, base.pow(free as u32)))
        } else {
            Ok(Rational64::new(1, base.pow((free - 1) as u32)))
        }
    }
}

pub fn classify(cfg: &PeriodicConfig, x: usize) -> Result<ExtremumClass> {
    Ok(ChainState::new(cfg, &[])?.classify(x))
}

pub fn find_excursions(cfg: &PeriodicConfig, x: usize) -> Result<Excursions> {
    Ok(ChainState::new(cfg, &[])?.find_excursions(x))
}

/// (d-1)^-(|E|-1) when every up-edge at x lies in an excursion, otherwise
/// (d-1)^-|E|, where |E| counts the excursions at x.
pub fn min_probability(cfg: &PeriodicConfig, x: usize) -> Result<Rational64> {
    let mut st = ChainState::new(cfg, &[])?;
    if !st.classify(x).is_local_min() {
        return Err(Error::NotMinimum);
    }
    let ex = st.find_excursions(x);
    let e = ex.components.len() as u32;
    let base = cfg.d() as i64 - 1;
    if ex.open_edges.is_empty() {
        Ok(Rational64::new(1, base.pow(e - 1)))
    } else {
        Ok(Rational64::new(1, base.pow(e)))
    }
}

pub type StepFn = fn(&mut ChainState, &mut dyn Chooser);

pub fn glauber(s: &mut ChainState, ch: &mut dyn Chooser) {
    s.glauber_step(ch)
}

pub fn adapted(s: &mut ChainState, ch: &mut dyn Chooser) {
    s.adapted_step(ch)
}

/// Every outcome of one step with its exact probability.
pub fn step_distribution<F: Fn(&mut ChainState, &mut dyn Chooser)>(state: &ChainState, step: F) -> Vec<(ChainState, BigRational)> {
    let mut out: Vec<(ChainState, BigRational)> = Vec::new();
    let mut index: HashMap<(Vec<u8>, TreeVertex), usize> = HashMap::new();
    let mut prefix: Vec<usize> = Vec::new();
    loop {
        let mut s = state.clone();
        let mut r = Replay { prefix: prefix.clone(), ..Default::default() };
        step(&mut s, &mut r);
        let denom: BigInt = r.arity.iter().fold(BigInt::one(), |a, &k| a * BigInt::from(k));
        let p = BigRational::new(BigInt::one(), denom);
        let key = s.state_key();
        match index.get(&key) {
            Some(&i) => out[i].1 += p,
            None => {
                index.insert(key, out.len());
                out.push((s, p));
            }
        }
        // odometer over the choice tree
        let mut taken = r.taken;
        let arity = r.arity;
        loop {
            match taken.pop() {
                None => return out,
                Some(c) => {
                    let k = arity[taken.len()];
                    if c + 1 < k {
                        taken.push(c + 1);
                        break;
                    }
                }
            }
        }
        prefix = taken;
    }
}

/// Dense exact transition matrix on a closed set of states.
pub fn exact_kernel<F: Fn(&mut ChainState, &mut dyn Chooser)>(states: &[ChainState], step: F) -> Result<Vec<Vec<BigRational>>> {
    let index: HashMap<(Vec<u8>, TreeVertex), usize> = states.iter().enumerate().map(|(i, s)| (s.state_key(), i)).collect();
    let mut p = vec![vec![BigRational::zero(); states.len()]; states.len()];
    for (i, s) in states.iter().enumerate() {
        for (t, q) in step_distribution(s, &step) {
            let j = *index
                .get(&t.state_key())
                .ok_or_else(|| Error::InvariantViolated("step left the state set".into()))?;
            p[i][j] += q;
        }
    }
    Ok(p)
}

/// States reachable from `start` under positive-probability steps.
pub fn reachable<F: Fn(&mut ChainState, &mut dyn Chooser)>(start: &ChainState, step: F) -> Vec<ChainState> {
    let mut seen: HashMap<(Vec<u8>, TreeVertex), usize> = HashMap::new();
    let mut out = vec![start.clone()];
    seen.insert(start.state_key(), 0);
    let mut head = 0;
    while head < out.len() {
        let s = out[head].clone();
        head += 1;
        for (t, _) in step_distribution(&s, &step) {
            if !seen.contains_key(&t.state_key()) {
                seen.insert(t.state_key(), out.len());
                out.push(t);
            }
        }
    }
    out
}

pub fn is_symmetric(p: &[Vec<BigRational>]) -> bool {
    (0..p.len()).all(|i| (0..i).all(|j| p[i][j] == p[j][i]))
}

/// Strong connectivity of the positive-entry graph.
pub fn is_irreducible(p: &[Vec<BigRational>]) -> bool {
    let n = p.len();
    if n == 0 {
        return true;
    }
    let reach = |forward: bool| -> bool {
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let e = if forward { &p[i][j] } else { &p[j][i] };
                if !seen[j] && !e.is_zero() {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    reach(true) && reach(false)
}

/// Two chains driven by shared randomness.
#[derive(Clone, Debug)]
pub struct CoupledState {
    pub upper: ChainState,
    pub lower: ChainState,
}

impl CoupledState {
    pub fn new(upper: ChainState, lower: ChainState) -> Result<Self> {
        if upper.size() != lower.size() || upper.cfg.d() != lower.cfg.d() {
            return Err(Error::InvalidParameter("chains live on different tori".into()));
        }
        Ok(CoupledState { upper, lower })
    }

    /// Max over the torus of |depth_upper - depth_lower|.
    pub fn deviation(&self) -> i64 {
        self.upper.depth.iter().zip(&self.lower.depth).map(|(a, b)| (a - b).abs()).max().unwrap_or(0)
    }

    /// One adapted step on both sides. Randomness is consumed in a fixed
    /// order: site, the true-minimum threshold, per-side branch draws, the
    /// pivot draw, per-side final resampling.
    pub fn step<R: Rng>(&mut self, rng: &mut R) {
        let x = rng.gen_range(0..self.upper.size());
        let u: f64 = rng.gen();
        let common: usize = rng.gen_range(0..self.upper.cfg.d() as usize - 1);
        let mut side_rngs: [rand_chacha::ChaCha8Rng; 2] = [
            rand::SeedableRng::seed_from_u64(rng.gen()),
            rand::SeedableRng::seed_from_u64(rng.gen()),
        ];
        let u2: f64 = rng.gen();
        for (side, r) in [&mut self.upper, &mut self.lower].into_iter().zip(side_rngs.iter_mut()) {
            coupled_resample(side, x, u, common, r);
        }
        for side in [&mut self.upper, &mut self.lower] {
            if side.fixed[x] || !side.classify(x).is_extremum() {
                continue;
            }
            let d = side.cfg.d() as usize;
            let beta = side.label_at(x, 0, true);
            let v = side.values[x].apply_generator(beta);
            let v_down = toward_end(&v, &side.omega);
            let gamma = if u2 < 1.0 / d as f64 {
                v_down
            } else {
                let ups: Vec<u8> = (1..=d as u8).filter(|&g| g != v_down).collect();
                let idx = ((u2 - 1.0 / d as f64) / (1.0 - 1.0 / d as f64) * (d - 1) as f64) as usize;
                ups[idx.min(d - 2)]
            };
            side.pivot_to(x, gamma).expect("extremum");
        }
        for (side, r) in [&mut self.upper, &mut self.lower].into_iter().zip(side_rngs.iter_mut()) {
            if !side.fixed[x] {
                side.resample_all(x, &mut RngChooser(r));
            }
        }
    }
}

/// Resamples the excursions at x so that "true minimum afterwards" happens
/// exactly when u falls below its probability; otherwise redraws from the
/// complementary event by rejection.
fn coupled_resample<R: Rng>(side: &mut ChainState, x: usize, u: f64, common: usize, r: &mut R) {
    let ex = side.find_excursions(x);
    let free: Vec<&ExcursionComponent> = ex.components.iter().filter(|c| !side.is_frozen(c)).collect();
    if free.is_empty() {
        return;
    }
    let choices = side.branch_choices(x);
    let is_min = side.classify(x).is_local_min();
    if !is_min {
        let picks: Vec<u8> = free.iter().map(|_| choices[r.gen_range(0..choices.len())]).collect();
        for (c, i) in free.iter().zip(picks) {
            side.resample_to(c, i).expect("fresh excursion");
        }
        return;
    }
    let mut pinned: Vec<u8> = ex.open_edges.iter().map(|&(k, p)| side.label_at(x, k, p)).collect();
    pinned.extend(ex.components.iter().filter(|c| side.is_frozen(c)).map(|c| c.branch));
    let target = pinned.first().copied();
    let p = side.true_min_probability(x).expect("local minimum");
    let p = *p.numer() as f64 / *p.denom() as f64;
    let consistent = target.map_or(true, |t| pinned.iter().all(|&l| l == t));
    let picks: Vec<u8> = if u < p && consistent {
        let t = target.unwrap_or(choices[common]);
        vec![t; free.len()]
    } else {
        loop {
            let picks: Vec<u8> = free.iter().map(|_| choices[r.gen_range(0..choices.len())]).collect();
            let t = target.unwrap_or(picks[0]);
            let all_same = consistent && picks.iter().all(|&i| i == t);
            if !all_same {
                break picks;
            }
        }
    };
    for (c, i) in free.iter().zip(picks) {
        side.resample_to(c, i).expect("fresh excursion");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumeration::{enumerate_invariant, DEFAULT_BUDGET};
    use crate::kirszbraun::periodic_from_slope;
    use crate::periodic::Slope;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn states(m: usize, n: usize, d: u8, s: &Slope) -> Vec<ChainState> {
        let c = enumerate_invariant(m, n, d, s, DEFAULT_BUDGET, true).unwrap();
        c.witnesses.unwrap().iter().map(|w| ChainState::new(w, &[]).unwrap()).collect()
    }

    fn consistent(s: &ChainState) -> bool {
        let fresh = ChainState::new(s.cfg(), &[]).unwrap();
        s.cfg.plaquettes_close() && fresh.values == s.values && fresh.depth == s.depth
    }

    #[test]
    fn geodesic_travel_has_no_excursions() {
        let cfg = PeriodicConfig::geodesic_travel(2, 4, 3).unwrap();
        let mut st = ChainState::new(&cfg, &[]).unwrap();
        for x in 0..st.size() {
            let ex = st.find_excursions(x);
            assert!(ex.components.is_empty());
            assert!(!ex.open_edges.is_empty());
        }
    }

    #[test]
    fn grafted_bump_is_one_cell_excursion() {
        // pivot the maximum of the folded configuration into the third branch
        let cfg = crate::periodic::tests::folded();
        let mut st = ChainState::new(&cfg, &[]).unwrap();
        let t = cfg.torus().clone();
        let x = t.index(&[3, 0]);
        assert_eq!(st.classify(x), ExtremumClass::Maximum);
        st.pivot_to(x, 3).unwrap();
        assert!(consistent(&st));
        let below = t.index(&[2, 0]);
        let ex = st.find_excursions(below);
        assert_eq!(ex.components.len(), 1);
        assert_eq!(ex.components[0].cells, vec![(x, 1)]);
        assert_eq!(st.classify(x), ExtremumClass::Maximum);
    }

    #[test]
    fn pivot_moves_by_two_or_zero() {
        let cfg = crate::periodic::tests::folded();
        let t = cfg.torus().clone();
        let x = t.index(&[3, 0]);
        let mut seen = std::collections::BTreeSet::new();
        for g in 1..=3u8 {
            let mut st = ChainState::new(&cfg, &[]).unwrap();
            let before = st.depth[x];
            st.pivot_to(x, g).unwrap();
            seen.insert(st.depth[x] - before);
            assert!(consistent(&st));
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![-2, 0]);
        let mut st = ChainState::new(&cfg, &[x]).unwrap();
        assert!(matches!(st.pivot_to(x, 1), Err(Error::FixedSite)));
        assert!(matches!(st.pivot_to(t.index(&[1, 0]), 1), Err(Error::NotExtremum)));
    }

    #[test]
    fn d2_has_no_fake_minima() {
        for st in states(2, 2, 2, &Slope::zero(2, 2)).iter().chain(&states(2, 4, 2, &Slope::new(4, vec![2, 0]).unwrap())) {
            for x in 0..st.size() {
                assert_ne!(st.classify(x), ExtremumClass::FakeMin);
            }
        }
    }

    fn check_kernel(m: usize, n: usize, d: u8, s: &Slope, step: StepFn) {
        let all = states(m, n, d, s);
        let p = exact_kernel(&all, step).unwrap();
        assert!(is_symmetric(&p));
        for row in &p {
            let total: BigRational = row.iter().cloned().sum();
            assert_eq!(total, BigRational::one());
        }
        // columns sum to one as well: uniform is stationary
        for j in 0..p.len() {
            let col: BigRational = p.iter().map(|r| r[j].clone()).sum();
            assert_eq!(col, BigRational::one());
        }
    }

    #[test]
    fn kernels_symmetric_at_n2() {
        check_kernel(2, 2, 2, &Slope::zero(2, 2), glauber);
        check_kernel(2, 2, 3, &Slope::zero(2, 2), glauber);
        check_kernel(2, 2, 3, &Slope::zero(2, 2), adapted);
        check_kernel(2, 2, 3, &Slope::new(2, vec![2, 0]).unwrap(), adapted);
    }

    #[test]
    fn d2_adapted_equals_plain() {
        for s in [Slope::zero(2, 2), Slope::new(2, vec![2, 0]).unwrap()] {
            let all = states(2, 2, 2, &s);
            assert_eq!(exact_kernel(&all, glauber).unwrap(), exact_kernel(&all, adapted).unwrap());
        }
    }

    #[test]
    fn zero_slope_class_is_irreducible() {
        let all = states(2, 2, 3, &Slope::zero(2, 2));
        let r = reachable(&all[0], adapted);
        assert_eq!(r.len(), all.len());
    }

    #[test]
    fn min_probability_examples() {
        // the bump below the grafted maximum, seen from its base
        let cfg = crate::periodic::tests::folded();
        let mut st = ChainState::new(&cfg, &[]).unwrap();
        let t = cfg.torus().clone();
        let x = t.index(&[3, 0]);
        st.pivot_to(x, 3).unwrap();
        assert!(matches!(min_probability(st.cfg(), t.index(&[2, 0])), Err(Error::NotMinimum)));
    }

    #[test]
    fn resampling_preserves_depth_and_slope() {
        let s = Slope::new(4, vec![2, 0]).unwrap();
        let cfg = periodic_from_slope(4, &s, &Geodesic::standard(), 3).unwrap();
        let mut st = ChainState::new(&cfg, &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let slope = st.cfg().slope();
        for _ in 0..2000 {
            let x = rng.gen_range(0..st.size());
            let before = st.depth.clone();
            st.resample_all(x, &mut RngChooser(&mut rng));
            assert_eq!(before, st.depth);
            st.adapted_step(&mut RngChooser(&mut rng));
            assert_eq!(st.cfg().slope(), slope);
        }
        assert!(consistent(&st));
        assert!(st.cfg().is_supported_on_standard());
    }

    #[test]
    fn odd_period_rejected() {
        let s = Slope::new(3, vec![1, 1]).unwrap();
        let cfg = periodic_from_slope(3, &s, &Geodesic::standard(), 3).unwrap();
        assert!(matches!(ChainState::new(&cfg, &[]), Err(Error::EllipticMonodromy)));
    }

    #[test]
    fn coupling_identical_states_stay_together() {
        let cfg = periodic_from_slope(4, &Slope::new(4, vec![2, 0]).unwrap(), &Geodesic::standard(), 3).unwrap();
        let st = ChainState::new(&cfg, &[]).unwrap();
        let mut pair = CoupledState::new(st.clone(), st).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..3000 {
            pair.step(&mut rng);
            assert_eq!(pair.deviation(), 0);
        }
    }

    fn all_slopes(n: usize) -> Vec<Slope> {
        let n = n as i64;
        let mut out = Vec::new();
        for a in (-n..=n).step_by(2) {
            for b in (-n..=n).step_by(2) {
                out.push(Slope::new(n, vec![a, b]).unwrap());
            }
        }
        out
    }

    fn exact_true_min(st: &ChainState, x: usize) -> BigRational {
        step_distribution(st, |s: &mut ChainState, ch: &mut dyn Chooser| s.resample_all(x, ch))
            .into_iter()
            .filter(|(t, _)| t.classify(x) == ExtremumClass::TrueMin)
            .map(|(_, p)| p)
            .sum()
    }

    fn check_formula(all: &[ChainState]) -> usize {
        let mut checked = 0;
        for st in all {
            let mut st = st.clone();
            for x in 0..st.size() {
                if !st.classify(x).is_local_min() {
                    continue;
                }
                let ex = st.find_excursions(x);
                let open: Vec<u8> = ex.open_edges.iter().map(|&(k, p)| st.label_at(x, k, p)).collect();
                assert!(open.windows(2).all(|w| w[0] == w[1]));
                let m = st.cfg().m();
                for c in &ex.components {
                    assert!(c.boundary.iter().all(|&e| st.cfg().label(e / m, e % m) == c.branch));
                }
                let p = st.true_min_probability(x).unwrap();
                let exact = exact_true_min(&st, x);
                let want = BigRational::new(BigInt::from(*p.numer()), BigInt::from(*p.denom()));
                assert_eq!(exact, want);
                if !ex.components.iter().any(|c| st.is_frozen(c)) {
                    assert_eq!(min_probability(st.cfg(), x).unwrap(), p);
                }
                checked += 1;
            }
        }
        checked
    }

    #[test]
    fn min_probability_is_exact_resampling_probability() {
        let mut checked = 0;
        for s in all_slopes(2) {
            checked += check_formula(&states(2, 2, 3, &s));
        }
        checked += check_formula(&states(2, 4, 3, &Slope::new(4, vec![2, 4]).unwrap()));
        checked += check_formula(&states(2, 4, 3, &Slope::new(4, vec![2, 2]).unwrap()));
        checked += check_formula(&states(2, 4, 4, &Slope::new(4, vec![4, 2]).unwrap()));
        assert!(checked > 50);
    }

    #[test]
    fn minimum_ordering_on_close_pairs() {
        let mut pairs = 0;
        for (n, s) in all_slopes(2).into_iter().map(|s| (2, s)).chain([(4, Slope::new(4, vec![2, 4]).unwrap())]) {
            let all = states(2, n, 3, &s);
            for u in &all {
                for d in &all {
                    let dev = u.depth.iter().zip(&d.depth).map(|(a, b)| (a - b).abs()).max().unwrap();
                    if dev > 2 {
                        continue;
                    }
                    for x in 0..u.size() {
                        if u.depth[x] == d.depth[x] + 2 && u.classify(x).is_local_min() && d.classify(x).is_local_min() {
                            let pu = min_probability(u.cfg(), x).unwrap();
                            let pd = min_probability(d.cfg(), x).unwrap();
                            assert!(pu <= pd, "{} {}", u.cfg().to_text(), d.cfg().to_text());
                            pairs += 1;
                        }
                    }
                }
            }
        }
        assert!(pairs > 0);
    }

    /// Symmetric always; irreducible on every conditioned class when no slope
    /// component is maximal (at |p_k| = n no site is ever an extremum).
    fn check_classes(n: usize, d: u8, s: &Slope, masks: &[usize]) {
        let interior = s.numerators().iter().all(|&p| p.abs() < n as i64);
        for &mask in masks {
                    let fixed: Vec<usize> = (1..n * n).filter(|i| mask >> (i - 1) & 1 == 1).collect();
                    let all: Vec<ChainState> = states(2, n, d, s)
                        .iter()
                        .map(|st| ChainState::new(st.cfg(), &fixed).unwrap())
                        .collect();
                    let p = exact_kernel(&all, adapted).unwrap();
                    assert!(is_symmetric(&p));
                    let mut classes: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
                    for (i, st) in all.iter().enumerate() {
                        classes.entry(st.condition_key(&fixed)).or_default().push(i);
                    }
                    for members in classes.values() {
                        let block: Vec<Vec<BigRational>> =
                            members.iter().map(|&i| members.iter().map(|&j| p[i][j].clone()).collect()).collect();
                        for row in &block {
                            assert_eq!(row.iter().cloned().sum::<BigRational>(), BigRational::one());
                        }
                        if interior {
                            assert!(is_irreducible(&block), "d={d} s={s} fixed={fixed:?}");
                        } else {
                            assert!(block.iter().enumerate().all(|(i, r)| r[i].is_one()));
                        }
                    }
        }
    }

    #[test]
    fn conditioned_classes_symmetric_and_irreducible() {
        let masks: Vec<usize> = (0..8).collect();
        for d in [2u8, 3] {
            for s in all_slopes(2) {
                check_classes(2, d, &s, &masks);
            }
        }
        check_classes(4, 2, &Slope::new(4, vec![2, 0]).unwrap(), &[0, 1 << 4]);
    }

    #[test]
    fn coupled_marginal_matches_kernel() {
        let s = Slope::zero(2, 2);
        let all = states(2, 2, 3, &s);
        let start = all[0].clone();
        let exact = step_distribution(&start, adapted);
        let mut counts: HashMap<(Vec<u8>, TreeVertex), usize> = HashMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 100_000;
        for _ in 0..trials {
            let mut pair = CoupledState::new(start.clone(), all[5].clone()).unwrap();
            pair.step(&mut rng);
            *counts.entry(pair.upper.state_key()).or_default() += 1;
        }
        let mut tv = 0.0;
        for (st, p) in &exact {
            let want = p.numer().to_string().parse::<f64>().unwrap() / p.denom().to_string().parse::<f64>().unwrap();
            let got = *counts.get(&st.state_key()).unwrap_or(&0) as f64 / trials as f64;
            tv += (want - got).abs();
        }
        let extra: usize = counts.iter().filter(|(k, _)| !exact.iter().any(|(s, _)| &s.state_key() == *k)).map(|(_, c)| c).sum();
        assert_eq!(extra, 0);
        assert!(tv / 2.0 < 0.02, "tv {tv}");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn adapted_steps_preserve_invariants(seed in 0u64..1000, n in proptest::sample::select(vec![2usize, 4]), a in 0i64..3, b in 0i64..3) {
            let s = Slope::new(n as i64, vec![(2 * a).min(n as i64), (2 * b).min(n as i64)]).unwrap();
            let cfg = periodic_from_slope(n, &s, &Geodesic::standard(), 3).unwrap();
            let mut st = ChainState::new(&cfg, &[1]).unwrap();
            let decks = st.cfg().decks();
            let key = st.condition_key(&[1]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..200 {
                st.adapted_step(&mut RngChooser(&mut rng));
            }
            proptest::prop_assert!(consistent(&st));
            proptest::prop_assert_eq!(st.cfg().slope(), s);
            for (t0, t1) in decks.iter().zip(st.cfg().decks()) {
                proptest::prop_assert!(crate::periodic::same_conjugacy_class(t0, &t1));
            }
            proptest::prop_assert_eq!(st.condition_key(&[1]), key);
            proptest::prop_assert!(st.cfg().is_supported_on_standard());
        }
    }
}


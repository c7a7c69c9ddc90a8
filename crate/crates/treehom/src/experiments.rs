//! Seeded experiment drivers: concentration, stationarity, coupling, slope
//! estimation, minimum-probability checks and limit-shape sampling, plus PGM
//! rendering of depth fields.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{adapted, exact_kernel, min_probability, reachable, ChainState, CoupledState, RngChooser};
use crate::enumeration::{enumerate_invariant, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::kirszbraun::{check_extension_condition, kirszbraun_extend, periodic_from_slope, PartialHeight};
use crate::lattice::{inner_boundary, HeightFunction, Region};
use crate::periodic::{PeriodicConfig, Slope};
use crate::tree::{depth, tree_distance, Geodesic, TreeEnd, TreeVertex};

pub const BURN_IN_FACTOR: u64 = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub m: usize,
    pub n: usize,
    pub d: u8,
    pub slope: Vec<Rational64>,
    pub steps: u64,
    pub trials: usize,
    /// Defaults to 50·n^m steps.
    pub burn_in: Option<u64>,
    pub seed: u64,
    pub delta: f64,
    pub eps: Vec<f64>,
    /// Lattice points held fixed, reduced onto the torus.
    pub fixed: Vec<Vec<i64>>,
    pub budget: u64,
}

impl ExperimentConfig {
    pub fn new(name: &str, m: usize, n: usize, d: u8, slope: Vec<Rational64>, seed: u64) -> Self {
        ExperimentConfig {
            name: name.to_string(),
            m,
            n,
            d,
            slope,
            steps: 0,
            trials: 1,
            burn_in: None,
            seed,
            delta: 0.0,
            eps: Vec::new(),
            fixed: Vec::new(),
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn with_n(&self, n: usize) -> Self {
        ExperimentConfig { n, ..self.clone() }
    }

    pub fn burn_in_steps(&self) -> u64 {
        self.burn_in.unwrap_or(BURN_IN_FACTOR * (self.n as u64).pow(self.m as u32))
    }

    /// Slope numerators at the configured period; the slope must be exact there.
    pub fn slope_at(&self) -> Result<Slope> {
        let s = Slope::from_rationals(self.n as i64, &self.slope)?;
        if s.components() != self.slope || !s.is_realizable() {
            let text: Vec<String> = self.slope.iter().map(|r| r.to_string()).collect();
            return Err(Error::UnrealizableSlope(format!("{} at n={}", text.join(","), self.n)));
        }
        Ok(s)
    }

    /// One comment line echoing every parameter.
    pub fn header(&self) -> String {
        let slope: Vec<String> = self.slope.iter().map(|r| r.to_string()).collect();
        let eps: Vec<String> = self.eps.iter().map(|e| e.to_string()).collect();
        let fixed: Vec<String> = self
            .fixed
            .iter()
            .map(|c| c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
            .collect();
        format!(
            "# experiment={} m={} n={} d={} slope={} steps={} trials={} burn_in={} seed={} delta={} eps={} fixed={}",
            self.name,
            self.m,
            self.n,
            self.d,
            slope.join(","),
            self.steps,
            self.trials,
            self.burn_in_steps(),
            self.seed,
            self.delta,
            eps.join(","),
            fixed.join(";")
        )
    }

    pub fn fixed_sites(&self, cfg: &PeriodicConfig) -> Result<Vec<usize>> {
        self.fixed
            .iter()
            .map(|c| {
                if c.len() != self.m {
                    Err(Error::InvalidParameter(format!("fixed site {c:?} has the wrong dimension")))
                } else {
                    Ok(cfg.torus().reduce(c))
                }
            })
            .collect()
    }
}

/// The per-trial stream: seed xor trial index.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ trial)
}

/// h(x) = g(Σ_k u_k(x_k)) where u_k is the ±1 path rounding s_k t to the
/// nearest value of the right parity, so h stays within m + 1 of the axis
/// (one more when the orientation flips). Needs even n.
pub fn geodesic_start(n: usize, s: &Slope, d: u8) -> Result<PeriodicConfig> {
    if n % 2 == 1 || !s.is_realizable() {
        return Err(Error::UnrealizableSlope(format!("{s} for a geodesic start")));
    }
    let ni = n as i64;
    let p = s.numerators().to_vec();
    let stair = move |k: usize, t: i64| 2 * (t * (ni + p[k]) + ni).div_euclid(2 * ni) - t;
    PeriodicConfig::from_geodesic_heights(s.dim(), n, d, |c| c.iter().enumerate().map(|(k, &t)| stair(k, t)).sum())
}

/// The staircase start of the configured slope as a chain state.
pub fn initial_state(cfg: &ExperimentConfig) -> Result<ChainState> {
    let s = cfg.slope_at()?;
    let start = geodesic_start(cfg.n, &s, cfg.d)?;
    ChainState::new(&start, &cfg.fixed_sites(&start)?)
}

/// The depth-minimal Kirszbraun extension from the corners of [0, n]^m.
pub fn kirszbraun_state(cfg: &ExperimentConfig) -> Result<ChainState> {
    let s = cfg.slope_at()?;
    let start = periodic_from_slope(cfg.n, &s, &Geodesic::standard(), cfg.d)?;
    ChainState::new(&start, &cfg.fixed_sites(&start)?)
}

fn run_steps(state: &mut ChainState, steps: u64, rng: &mut ChaCha8Rng) {
    let mut ch = RngChooser(rng);
    for _ in 0..steps {
        state.adapted_step(&mut ch);
    }
}

/// max over the fundamental domain of d(h(x), g(⌊τ·x/n⌋)), τ the signed
/// translations.
pub fn max_deviation(state: &ChainState) -> i64 {
    let g = Geodesic::standard();
    let tau = state.translations();
    let n = state.cfg().n() as i64;
    let torus = state.cfg().torus();
    state
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let c = torus.coords(i);
            let dot: i64 = c.iter().zip(&tau).map(|(&x, &t)| x as i64 * t).sum();
            tree_distance(v, &g.point(dot.div_euclid(n))) as i64
        })
        .max()
        .unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeviationStatistics {
    pub n: usize,
    /// Per trial.
    pub max_deviation: Vec<i64>,
    pub eps: Vec<f64>,
    /// P(max ≥ ε n) for each ε.
    pub tails: Vec<f64>,
}

impl DeviationStatistics {
    pub fn from_samples(n: usize, max_deviation: Vec<i64>, eps: &[f64]) -> Self {
        let mut s = DeviationStatistics { n, max_deviation, eps: eps.to_vec(), tails: Vec::new() };
        s.tails = eps.iter().map(|e| s.tail_at(e * n as f64)).collect();
        s
    }

    pub fn tail_at(&self, threshold: f64) -> f64 {
        if self.max_deviation.is_empty() {
            return 0.0;
        }
        self.max_deviation.iter().filter(|&&v| v as f64 >= threshold).count() as f64 / self.max_deviation.len() as f64
    }

    /// Tail at 0.5·n^0.8.
    pub fn reference_tail(&self) -> f64 {
        self.tail_at(0.5 * (self.n as f64).powf(0.8))
    }

    pub fn mean(&self) -> f64 {
        self.max_deviation.iter().sum::<i64>() as f64 / self.max_deviation.len().max(1) as f64
    }

    pub fn std_error(&self) -> f64 {
        let k = self.max_deviation.len();
        if k < 2 {
            return 0.0;
        }
        let mu = self.mean();
        let var = self.max_deviation.iter().map(|&v| (v as f64 - mu).powi(2)).sum::<f64>() / (k - 1) as f64;
        (var / k as f64).sqrt()
    }
}

/// Independent trials from the staircase start, each sampled once after
/// burn-in plus `steps`.
pub fn run_concentration(cfg: &ExperimentConfig) -> Result<DeviationStatistics> {
    let start = initial_state(cfg)?;
    let total = cfg.burn_in_steps() + cfg.steps;
    let samples = (0..cfg.trials as u64)
        .map(|t| {
            let mut rng = trial_rng(cfg.seed, t);
            let mut s = start.clone();
            run_steps(&mut s, total, &mut rng);
            max_deviation(&s)
        })
        .collect();
    Ok(DeviationStatistics::from_samples(cfg.n, samples, &cfg.eps))
}

/// One row per period: n, trials, mean and standard error of the maximum,
/// the tail at 0.5·n^0.8, then one tail column per ε.
pub fn concentration_csv(cfg: &ExperimentConfig, stats: &[DeviationStatistics]) -> String {
    let mut out = cfg.header();
    out.push('\n');
    out.push_str("n,trials,mean_max,se_max,tail_ref");
    for e in &cfg.eps {
        write!(out, ",tail_{e}").unwrap();
    }
    out.push('\n');
    for s in stats {
        write!(out, "{},{},{:.6},{:.6},{:.6}", s.n, s.max_deviation.len(), s.mean(), s.std_error(), s.reference_tail()).unwrap();
        for t in &s.tails {
            write!(out, ",{t:.6}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationarityReport {
    pub class_size: usize,
    pub reachable_size: usize,
    pub steps: u64,
    pub tv: f64,
    pub chi2: f64,
    /// uniform·P == uniform, exactly.
    pub exact_stationary: bool,
}

impl StationarityReport {
    pub fn to_text(&self, cfg: &ExperimentConfig) -> String {
        format!(
            "{}\nclass_size={}\nreachable_size={}\nsteps={}\ntv={:.6}\nchi2={:.6}\ndof={}\nexact_stationary={}\n",
            cfg.header(),
            self.class_size,
            self.reachable_size,
            self.steps,
            self.tv,
            self.chi2,
            self.class_size.saturating_sub(1),
            self.exact_stationary
        )
    }
}

/// The enumerated states sharing the start's conditioning key.
pub fn conditioned_class(cfg: &ExperimentConfig, start: &ChainState) -> Result<Vec<ChainState>> {
    let c = enumerate_invariant(cfg.m, cfg.n, cfg.d, &cfg.slope_at()?, cfg.budget, true)?;
    let fixed = start.fixed_sites();
    let key = start.condition_key(&fixed);
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for w in c.witnesses.expect("witnesses requested") {
        let s = ChainState::new(&w, &fixed)?;
        if s.condition_key(&fixed) == key && seen.insert(s.state_key(), ()).is_none() {
            out.push(s);
        }
    }
    Ok(out)
}

/// Empirical occupation over `steps` adapted steps against uniform on the
/// conditioned class, plus an exact stationarity check of the kernel.
pub fn run_stationarity_test(cfg: &ExperimentConfig) -> Result<StationarityReport> {
    let start = initial_state(cfg)?;
    let class = conditioned_class(cfg, &start)?;
    let index: HashMap<_, usize> = class.iter().enumerate().map(|(i, s)| (s.state_key(), i)).collect();
    let reach = reachable(&start, adapted);
    let kernel = exact_kernel(&class, adapted)?;
    let k = class.len();
    let uniform = BigRational::new(BigInt::from(1), BigInt::from(k));
    let exact_stationary = (0..k).all(|j| (0..k).fold(BigRational::zero(), |acc, i| acc + &kernel[i][j] * &uniform) == uniform);
    let mut counts = vec![0u64; k];
    let mut rng = trial_rng(cfg.seed, 0);
    let mut s = start.clone();
    let mut ch = RngChooser(&mut rng);
    for _ in 0..cfg.steps {
        s.adapted_step(&mut ch);
        let i = *index
            .get(&s.state_key())
            .ok_or_else(|| Error::InvariantViolated("chain left the enumerated class".into()))?;
        counts[i] += 1;
    }
    let total = cfg.steps.max(1) as f64;
    let expect = total / k as f64;
    let tv = 0.5 * counts.iter().map(|&c| (c as f64 / total - 1.0 / k as f64).abs()).sum::<f64>();
    let chi2 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    Ok(StationarityReport { class_size: k, reachable_size: reach.len(), steps: cfg.steps, tv, chi2, exact_stationary })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingReport {
    pub steps: u64,
    pub initial_deviation: i64,
    pub max_deviation: i64,
    pub final_deviation: i64,
    /// First step after which the deviation exceeded 2.
    pub first_violation: Option<u64>,
}

impl CouplingReport {
    pub fn to_text(&self, cfg: &ExperimentConfig) -> String {
        let v = self.first_violation.map_or("none".to_string(), |s| s.to_string());
        format!(
            "{}\nsteps={}\ninitial_deviation={}\nmax_deviation={}\nfinal_deviation={}\nfirst_violation={v}\n",
            cfg.header(),
            self.steps,
            self.initial_deviation,
            self.max_deviation,
            self.final_deviation
        )
    }
}

/// A Kirszbraun-built state and a copy pivoted at its first movable
/// extremum, so the pair starts at depth deviation 2. Both share the fixed set.
pub fn kirszbraun_pair(cfg: &ExperimentConfig) -> Result<CoupledState> {
    let base = kirszbraun_state(cfg)?;
    for x in 0..base.size() {
        if base.is_fixed(x) || !base.classify(x).is_extremum() {
            continue;
        }
        for gamma in 1..=cfg.d {
            let mut moved = base.clone();
            moved.pivot_to(x, gamma)?;
            if moved.depth_field()[x] > base.depth_field()[x] {
                return CoupledState::new(moved, base);
            }
            if moved.depth_field()[x] < base.depth_field()[x] {
                return CoupledState::new(base, moved);
            }
        }
    }
    Err(Error::InvalidParameter("the start state has no movable extremum".into()))
}

pub fn run_coupling(pair: &mut CoupledState, steps: u64, rng: &mut ChaCha8Rng) -> CouplingReport {
    let initial = pair.deviation();
    let mut max = initial;
    let mut first_violation = None;
    for t in 1..=steps {
        pair.step(rng);
        let dev = pair.deviation();
        max = max.max(dev);
        if dev > 2 && first_violation.is_none() {
            first_violation = Some(t);
        }
    }
    CouplingReport { steps, initial_deviation: initial, max_deviation: max, final_deviation: pair.deviation(), first_violation }
}

/// Runs the coupled chains from `kirszbraun_pair`; InvariantViolated once the
/// deviation exceeds 2.
pub fn run_coupling_experiment(cfg: &ExperimentConfig) -> Result<CouplingReport> {
    let mut pair = kirszbraun_pair(cfg)?;
    let mut rng = trial_rng(cfg.seed, 0);
    let report = run_coupling(&mut pair, cfg.steps, &mut rng);
    if let Some(t) = report.first_violation {
        return Err(Error::InvariantViolated(format!("deviation {} after step {t}", report.max_deviation)));
    }
    Ok(report)
}

/// Time average over `steps` steps after burn-in of (1/N) d(h(0), h(N e_k))
/// with N = n² (n periods). Over a single period the distance to the axis
/// at the origin adds a bias of order 1/n.
pub fn estimate_slope(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let mut s = initial_state(cfg)?;
    let mut rng = trial_rng(cfg.seed, 0);
    run_steps(&mut s, cfg.burn_in_steps(), &mut rng);
    let n = cfg.n as i64;
    let horizon = n * n;
    let sample = |s: &ChainState| -> Vec<f64> {
        let origin = &s.values()[0];
        s.cfg()
            .decks()
            .iter()
            .map(|t| tree_distance(origin, &t.power(n).mul(origin)) as f64 / horizon as f64)
            .collect()
    };
    let rounds = cfg.steps.max(1);
    let mut acc = vec![0.0; cfg.m];
    let mut ch = RngChooser(&mut rng);
    for _ in 0..rounds {
        if cfg.steps > 0 {
            s.adapted_step(&mut ch);
        }
        for (a, v) in acc.iter_mut().zip(sample(&s)) {
            *a += v;
        }
    }
    Ok(acc.into_iter().map(|a| a / rounds as f64).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinProbRow {
    pub state: usize,
    pub site: usize,
    pub excursions: usize,
    pub open_edges: usize,
    pub frozen: usize,
    /// The closed formula, ignoring frozen excursions.
    pub formula: Rational64,
    /// What resampling actually produces.
    pub exact: Rational64,
    pub empirical: f64,
}

/// For every enumerated state and every free local minimum, the frequency of
/// "true minimum after resampling" over `trials` independent resamplings.
pub fn run_minprob_test(cfg: &ExperimentConfig) -> Result<Vec<MinProbRow>> {
    let c = enumerate_invariant(cfg.m, cfg.n, cfg.d, &cfg.slope_at()?, cfg.budget, true)?;
    let mut rows = Vec::new();
    for (si, w) in c.witnesses.expect("witnesses requested").iter().enumerate() {
        let mut state = ChainState::new(w, &[])?;
        for x in 0..state.size() {
            if state.is_fixed(x) || !state.classify(x).is_local_min() {
                continue;
            }
            let ex = state.find_excursions(x);
            let frozen = ex.components.iter().filter(|c| state.is_frozen(c)).count();
            let formula = min_probability(state.cfg(), x)?;
            let exact = state.true_min_probability(x)?;
            let mut rng = trial_rng(cfg.seed, (si * state.size() + x) as u64);
            let mut hits = 0u64;
            for _ in 0..cfg.trials {
                let mut s = state.clone();
                s.resample_all(x, &mut RngChooser(&mut rng));
                hits += u64::from(s.classify(x) == crate::dynamics::ExtremumClass::TrueMin);
            }
            rows.push(MinProbRow {
                state: si,
                site: x,
                excursions: ex.components.len(),
                open_edges: ex.open_edges.len(),
                frozen,
                formula,
                exact,
                empirical: hits as f64 / cfg.trials.max(1) as f64,
            });
        }
    }
    Ok(rows)
}

pub fn minprob_csv(cfg: &ExperimentConfig, rows: &[MinProbRow]) -> String {
    let mut out = cfg.header();
    out.push_str("\nstate,site,excursions,open_edges,frozen,formula,exact,empirical\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{:.6}",
            r.state, r.site, r.excursions, r.open_edges, r.frozen, r.formula, r.exact, r.empirical
        )
        .unwrap();
    }
    out
}

fn ratio(r: Rational64) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Largest |empirical − exact| over the rows.
pub fn minprob_max_error(rows: &[MinProbRow]) -> f64 {
    rows.iter().map(|r| (r.empirical - ratio(r.exact)).abs()).fold(0.0, f64::max)
}

/// A diamond |x − (R, R)|₁ ≤ R with the four corners prescribed: the left,
/// right and top corners at depth R in three different branches, the bottom
/// corner at the root. R must be even.
pub fn three_geodesic_diamond(radius: usize, d: u8) -> Result<PartialHeight> {
    if d < 3 || radius == 0 || radius % 2 == 1 {
        return Err(Error::InvalidParameter("need d >= 3 and an even positive radius".into()));
    }
    let r = radius as i64;
    let cells: Vec<Vec<i64>> = (0..=2 * r)
        .flat_map(|a| (0..=2 * r).map(move |b| vec![a, b]))
        .filter(|c| (c[0] - r).abs() + (c[1] - r).abs() <= r)
        .collect();
    let region = Region::from_cells(2, cells)?;
    let branch = |first: u8, second: u8| {
        let w: Vec<u8> = (0..radius).map(|i| if i % 2 == 0 { first } else { second }).collect();
        TreeVertex::from_letters(&w)
    };
    PartialHeight::new(
        region,
        vec![
            (vec![r, 0], branch(1, 2)?),
            (vec![r, 2 * r], branch(2, 1)?),
            (vec![0, r], branch(3, 1)?),
            (vec![2 * r, r], TreeVertex::root()),
        ],
    )
}

/// Kirszbraun start, then pivot-only dynamics on the cells off the inner
/// boundary and off the support. Not uniform in general; for pictures.
pub fn sample_limit_shape(p: &PartialHeight, omega: &TreeEnd, d: u8, steps: u64, rng: &mut ChaCha8Rng) -> Result<HeightFunction> {
    if !check_extension_condition(p) {
        return Err(Error::ConditionViolated);
    }
    let mut h = kirszbraun_extend(p, omega)?;
    let region = h.region.clone();
    let mut fixed = vec![false; region.len()];
    for i in inner_boundary(&region).into_iter().chain(p.support.iter().copied()) {
        fixed[i] = true;
    }
    let free: Vec<usize> = (0..region.len()).filter(|&i| !fixed[i]).collect();
    if free.is_empty() {
        return Ok(h);
    }
    for _ in 0..steps {
        let x = free[rng.gen_range(0..free.len())];
        let gamma = rng.gen_range(1..=d);
        let mut nb = region.neighbors(x);
        let first = nb.next().expect("interior cell");
        let w = h.values[first].clone();
        if nb.all(|y| h.values[y] == w) {
            h.values[x] = w.apply_generator(gamma);
        }
    }
    Ok(h)
}

/// PGM P2 of depth over the bounding box of a planar region: row x1, column
/// x2, cells outside the region black. Depth is rescaled affinely onto
/// 0..255; a constant field is drawn as 128.
pub fn depth_pgm(h: &HeightFunction, g: &Geodesic) -> Result<String> {
    let r = &h.region;
    if r.dim() != 2 {
        return Err(Error::InvalidParameter("rendering needs a planar region".into()));
    }
    let lo: Vec<i64> = (0..2).map(|k| r.cells().iter().map(|c| c[k]).min().unwrap()).collect();
    let hi: Vec<i64> = (0..2).map(|k| r.cells().iter().map(|c| c[k]).max().unwrap()).collect();
    let depths: Vec<i64> = h.values.iter().map(|v| depth(v, g)).collect();
    let (dmin, dmax) = (*depths.iter().min().unwrap(), *depths.iter().max().unwrap());
    let (rows, cols) = ((hi[0] - lo[0] + 1) as usize, (hi[1] - lo[1] + 1) as usize);
    let mut out = String::from("P2\n");
    let scale = if dmax > dmin { 255.0 / (dmax - dmin) as f64 } else { 0.0 };
    writeln!(out, "# depth min={dmin} max={dmax} scale={scale:.6}").unwrap();
    writeln!(out, "{cols} {rows}\n255").unwrap();
    for a in 0..rows as i64 {
        let row: Vec<String> = (0..cols as i64)
            .map(|b| {
                let c = [lo[0] + a, lo[1] + b];
                match r.index_of(&c) {
                    None => 0,
                    Some(_) if dmax == dmin => 128,
                    Some(i) => ((depths[i] - dmin) as f64 * scale).round() as i64,
                }
                .to_string()
            })
            .collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    Ok(out)
}

pub fn render_depth_field(h: &HeightFunction, g: &Geodesic, path: &Path) -> Result<()> {
    std::fs::write(path, depth_pgm(h, g)?)?;
    Ok(())
}

/// The fundamental domain [0, n)^m of a periodic configuration.
pub fn fundamental_height(cfg: &PeriodicConfig) -> HeightFunction {
    cfg.to_height_function(&Region::cube(cfg.m(), cfg.n() as i64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::validate_homomorphism;
    use crate::periodic::parse_rationals;

    fn cfg(name: &str, m: usize, n: usize, d: u8, slope: &str, seed: u64) -> ExperimentConfig {
        ExperimentConfig::new(name, m, n, d, parse_rationals(slope, m).unwrap(), seed)
    }

    #[test]
    fn unrealizable_slope_rejected() {
        let c = cfg("concentration", 2, 4, 3, "1/4,0", 1);
        assert!(matches!(run_concentration(&c), Err(Error::UnrealizableSlope(_))));
        let c = cfg("concentration", 2, 4, 3, "1/3,0", 1);
        assert!(matches!(initial_state(&c), Err(Error::UnrealizableSlope(_))));
    }

    #[test]
    fn tails_are_monotone_and_vanish_past_the_maximum() {
        let mut c = cfg("concentration", 2, 8, 3, "1/2,0", 5);
        c.trials = 20;
        c.burn_in = Some(500);
        c.eps = vec![0.0, 0.1, 0.25, 0.5, 1.0, 4.0];
        let st = run_concentration(&c).unwrap();
        assert!(st.tails.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(st.tails[0], 1.0);
        assert_eq!(*st.tails.last().unwrap(), 0.0);
        // deterministic given the seed
        assert_eq!(run_concentration(&c).unwrap(), st);
    }

    #[test]
    fn deviation_of_start_states() {
        let travel = PeriodicConfig::geodesic_travel(2, 8, 3).unwrap();
        assert_eq!(max_deviation(&ChainState::new(&travel, &[]).unwrap()), 1);
        for (n, slope) in [(8, "1/2,0"), (16, "1/2,1/4"), (8, "-1/4,3/4"), (4, "0")] {
            let c = cfg("x", 2, n, 3, slope, 0);
            let st = initial_state(&c).unwrap();
            assert!(max_deviation(&st) <= 4, "{slope}");
            assert_eq!(st.cfg().slope().abs(), c.slope_at().unwrap().abs());
        }
    }

    #[test]
    fn stationarity_small_class() {
        let mut c = cfg("stationarity", 2, 2, 3, "0", 11);
        c.steps = 200_000;
        let r = run_stationarity_test(&c).unwrap();
        assert!(r.exact_stationary);
        assert_eq!(r.class_size, r.reachable_size);
        assert!(r.tv < 0.05, "{r:?}");
    }

    #[test]
    fn single_state_class_has_zero_tv() {
        // maximal slope: every state is absorbing
        let mut c = cfg("stationarity", 2, 2, 3, "1,1", 3);
        c.steps = 1000;
        let r = run_stationarity_test(&c).unwrap();
        assert_eq!(r.class_size, 1);
        assert_eq!(r.tv, 0.0);
    }

    #[test]
    fn coupling_from_kirszbraun_pair() {
        let mut c = cfg("coupling", 2, 4, 3, "1/2,0", 7);
        c.steps = 5000;
        let r = run_coupling_experiment(&c).unwrap();
        assert_eq!(r.initial_deviation, 2);
        assert!(r.max_deviation <= 2);
    }

    #[test]
    fn identical_states_never_separate() {
        let c = cfg("coupling", 2, 4, 3, "0", 9);
        let s = initial_state(&c).unwrap();
        let mut pair = CoupledState::new(s.clone(), s).unwrap();
        let r = run_coupling(&mut pair, 2000, &mut trial_rng(9, 0));
        assert_eq!(r.max_deviation, 0);
    }

    #[test]
    fn slope_estimates() {
        let mut c = cfg("slope", 2, 16, 3, "1/2,0", 2);
        c.steps = 0;
        c.burn_in = Some(0);
        assert_eq!(estimate_slope(&c).unwrap(), vec![0.5, 0.0]);
        c.steps = 100_000;
        c.burn_in = None;
        let est = estimate_slope(&c).unwrap();
        assert!((est[0] - 0.5).abs() < 0.1 && est[1].abs() < 0.1, "{est:?}");
        let mut z = cfg("slope", 2, 16, 3, "0", 2);
        z.steps = 100_000;
        assert!(estimate_slope(&z).unwrap().iter().all(|v| v.abs() < 0.1));
    }

    #[test]
    fn minprob_rows_match_exact_probabilities() {
        let mut c = cfg("minprob", 2, 2, 3, "0", 4);
        c.trials = 4000;
        let rows = run_minprob_test(&c).unwrap();
        assert!(!rows.is_empty());
        assert!(minprob_max_error(&rows) < 0.05);
        assert!(rows.iter().filter(|r| r.frozen == 0).all(|r| r.formula == r.exact));
    }

    #[test]
    fn pgm_conventions() {
        let g = Geodesic::standard();
        let flat = HeightFunction::from_fn(Region::cube(2, 3), |_| TreeVertex::root());
        let pgm = depth_pgm(&flat, &g).unwrap();
        assert!(pgm.lines().skip(4).all(|l| l.split(' ').all(|v| v == "128")));
        let ramp = HeightFunction::from_fn(Region::cuboid(&[5, 3]), |c| g.point(c[0]));
        let pgm = depth_pgm(&ramp, &g).unwrap();
        let rows: Vec<i64> = pgm.lines().skip(4).map(|l| l.split(' ').next().unwrap().parse().unwrap()).collect();
        assert_eq!(rows, vec![0, 64, 128, 191, 255]);
        assert!(pgm.starts_with("P2\n# depth min=0 max=4"));
    }

    #[test]
    fn limit_shape_diamond_is_valid() {
        let p = three_geodesic_diamond(6, 3).unwrap();
        let mut rng = trial_rng(1, 0);
        let h = sample_limit_shape(&p, Geodesic::standard().backward(), 3, 20_000, &mut rng).unwrap();
        assert!(validate_homomorphism(&h));
        for (&i, v) in p.support.iter().zip(&p.values) {
            assert_eq!(&h.values[i], v);
        }
    }

    #[test]
    fn limit_shape_single_free_cell_is_uniform() {
        // 3×3 box, flat boundary: the centre's neighbours all sit at [1]
        let region = Region::cube(2, 3);
        let one = TreeVertex::from_letters(&[1]).unwrap();
        let assigned: Vec<(Vec<i64>, TreeVertex)> = region
            .cells()
            .iter()
            .filter(|c| c != &&vec![1, 1])
            .map(|c| (c.clone(), if (c[0] + c[1]) % 2 == 0 { TreeVertex::root() } else { one.clone() }))
            .collect();
        let p = PartialHeight::new(region, assigned).unwrap();
        let mut counts: HashMap<TreeVertex, u32> = HashMap::new();
        let mut rng = trial_rng(2, 0);
        for _ in 0..6000 {
            let h = sample_limit_shape(&p, Geodesic::standard().backward(), 3, 5, &mut rng).unwrap();
            *counts.entry(h.value_at(&[1, 1]).unwrap().clone()).or_default() += 1;
        }
        // the centre is not a support cell but lies on no boundary either
        assert_eq!(counts.len(), 3);
        assert!(counts.values().all(|&c| (c as f64 / 6000.0 - 1.0 / 3.0).abs() < 0.03), "{counts:?}");
    }

    #[test]
    fn flat_boundary_stays_flat() {
        let region = Region::cube(2, 12);
        let one = TreeVertex::from_letters(&[1]).unwrap();
        let h0 = HeightFunction::from_fn(region.clone(), |c| if (c[0] + c[1]) % 2 == 0 { TreeVertex::root() } else { one.clone() });
        let p = PartialHeight::restrict(&h0, &inner_boundary(&region));
        let g = Geodesic::standard();
        let h = sample_limit_shape(&p, g.backward(), 3, 50_000, &mut trial_rng(3, 0)).unwrap();
        assert!(validate_homomorphism(&h));
        assert!(h.values.iter().all(|v| depth(v, &g).abs() <= 12));
    }

    #[test]
    fn height_text_round_trip() {
        let p = three_geodesic_diamond(4, 3).unwrap();
        let h = kirszbraun_extend(&p, Geodesic::standard().backward()).unwrap();
        let back = HeightFunction::from_text(&h.to_text()).unwrap();
        assert_eq!(back.region, h.region);
        assert_eq!(back.values, h.values);
        assert!(validate_homomorphism(&back));
    }
}

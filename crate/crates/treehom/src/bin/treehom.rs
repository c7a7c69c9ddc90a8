use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use treehom::dynamics::{ChainState, RngChooser};
use treehom::enumeration::{enumerate_invariant, SurfaceTensionTable, DEFAULT_BUDGET};
use treehom::experiments::{
    concentration_csv, depth_pgm, estimate_slope, fundamental_height, geodesic_start, minprob_csv, run_concentration,
    run_coupling_experiment, run_minprob_test, run_stationarity_test, sample_limit_shape, three_geodesic_diamond, trial_rng,
    ExperimentConfig,
};
use treehom::kirszbraun::{check_extension_condition, kirszbraun_extend, PartialHeight};
use treehom::lattice::HeightFunction;
use treehom::periodic::{parse_rationals, PeriodicConfig, Slope};
use treehom::profiles::{
    extend_boundary_profile, minimize_entropy, parse_profile, validate_profile, ProfileFile, SolverOptions, SurfaceTensionModel,
};
use treehom::tree::Geodesic;
use treehom::{Error, Result};

#[derive(Parser)]
#[command(name = "treehom", about = "Homomorphisms from Z^m to the d-regular tree", version)]
struct Cli {
    /// File of `key=value` lines; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Shape {
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    d: u8,
    /// Comma-separated rationals; one value is used on every axis.
    #[arg(long, default_value = "0")]
    slope: String,
}

#[derive(Subcommand)]
enum Cmd {
    /// Count n-invariant homomorphisms of one slope.
    Enumerate {
        #[command(flatten)]
        shape: Shape,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
    },
    /// ent_n for every realizable slope, as CSV.
    SurfaceTension {
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        d: u8,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
    },
    /// Run the adapted chain and print the final configuration.
    Sample {
        #[command(flatten)]
        shape: Shape,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        steps: u64,
        /// Start from this configuration instead of the staircase map.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Fixed lattice points, `x1,x2;y1,y2;...`.
        #[arg(long)]
        fixed: Option<String>,
        /// Write `step,depth...` rows over the fundamental domain here.
        #[arg(long)]
        emit_trace: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Depth-minimal extension of a partial height.
    Extend {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Tail statistics of the maximal deviation from the axis.
    Concentration {
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// Comma-separated periods.
        #[arg(long, default_value = "8,16,32")]
        ns: String,
        #[arg(long, default_value_t = 3)]
        d: u8,
        #[arg(long, default_value = "1/2,0")]
        slope: String,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        steps: u64,
        #[arg(long)]
        burn_in: Option<u64>,
        /// Comma-separated multiples of n for extra tail columns.
        #[arg(long)]
        eps: Option<String>,
    },
    /// Empirical occupation against uniform on the conditioned class.
    Stationarity {
        #[command(flatten)]
        shape: Shape,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1_000_000)]
        steps: u64,
        #[arg(long)]
        fixed: Option<String>,
    },
    /// Run two coupled chains and report the depth deviation.
    Coupling {
        #[command(flatten)]
        shape: Shape,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        steps: u64,
        #[arg(long)]
        fixed: Option<String>,
    },
    /// Resampling frequency of true minima against the closed formula.
    MinprobTest {
        #[command(flatten)]
        shape: Shape,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
    /// Sample a diamond with three-geodesic boundary data.
    LimitShape {
        #[arg(long, default_value_t = 32)]
        radius: usize,
        #[arg(long, default_value_t = 3)]
        d: u8,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1_000_000)]
        steps: u64,
        /// Where to write the depth raster.
        #[arg(long)]
        pgm: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Minimize the macroscopic entropy for boundary data.
    SolveVariational {
        #[arg(long)]
        boundary: PathBuf,
        /// Surface-tension CSV as written by `surface-tension`.
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        ent: Option<PathBuf>,
        /// `quadratic:offset,curvature,s1,...,sm`.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 20_000)]
        max_iter: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a full or boundary profile file.
    ValidateProfile {
        #[arg(long)]
        input: PathBuf,
    },
    /// Depth raster of a planar height function or configuration.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Time-averaged slope of the adapted chain.
    Slope {
        #[command(flatten)]
        shape: Shape,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        steps: u64,
        #[arg(long)]
        burn_in: Option<u64>,
    },
}

/// Appends `--key value` for each config-file key not already given as a flag.
fn merge_config(mut argv: Vec<String>) -> std::result::Result<Vec<String>, String> {
    let pos = argv.iter().position(|a| a == "--config" || a.starts_with("--config="));
    let Some(pos) = pos else { return Ok(argv) };
    let path = match argv[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => argv.get(pos + 1).cloned().ok_or("--config needs a file")?,
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))?;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(format!("{path}:{}: expected key=value", i + 1))?;
        let flag = format!("--{}", k.trim().replace('_', "-"));
        let given = argv.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if !given {
            argv.push(flag);
            argv.push(v.trim().to_string());
        }
    }
    Ok(argv)
}

fn read(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_cells(s: &Option<String>) -> Result<Vec<Vec<i64>>> {
    let Some(s) = s else { return Ok(Vec::new()) };
    s.split(';')
        .filter(|c| !c.trim().is_empty())
        .map(|c| {
            c.split(',')
                .map(|v| v.trim().parse().map_err(|_| Error::InvalidParameter(format!("bad cell {c:?}"))))
                .collect()
        })
        .collect()
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',').map(|v| v.trim().parse().map_err(|_| Error::InvalidParameter(format!("bad list entry {v:?}")))).collect()
}

fn experiment(name: &str, sh: &Shape, seed: u64) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig::new(name, sh.m, sh.n, sh.d, parse_rationals(&sh.slope, sh.m)?, seed))
}

fn model(spec: &str) -> Result<SurfaceTensionModel> {
    let bad = || Error::InvalidParameter(format!("bad model {spec:?}"));
    let rest = spec.strip_prefix("quadratic:").ok_or_else(bad)?;
    let v: Vec<f64> = parse_list(rest)?;
    if v.len() < 3 {
        return Err(bad());
    }
    Ok(SurfaceTensionModel::quadratic(v[0], v[1], v[2..].to_vec()))
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Enumerate { shape, budget } => {
            let s = Slope::from_rationals(shape.n as i64, &parse_rationals(&shape.slope, shape.m)?)?;
            let c = enumerate_invariant(shape.m, shape.n, shape.d, &s, budget, false)?;
            println!("m={} n={} d={} slope={s}", shape.m, shape.n, shape.d);
            println!("count={}", c.count);
            println!("ent={:.12}", c.ent);
        }
        Cmd::SurfaceTension { m, n, d, budget } => print!("{}", SurfaceTensionTable::compute(m, n, d, budget)?.to_csv()),
        Cmd::Sample { shape, seed, steps, input, fixed, emit_trace, output } => {
            let mut cfg = experiment("sample", &shape, seed)?;
            cfg.steps = steps;
            cfg.burn_in = Some(0);
            cfg.fixed = parse_cells(&fixed)?;
            let start = match input {
                Some(p) => PeriodicConfig::from_text(&read(&p)?)?,
                None => geodesic_start(cfg.n, &cfg.slope_at()?, cfg.d)?,
            };
            let mut state = ChainState::new(&start, &cfg.fixed_sites(&start)?)?;
            let mut rng = trial_rng(seed, 0);
            let mut trace = String::new();
            let mut row = |t: u64, s: &ChainState| {
                let d: Vec<String> = s.depth_field().iter().map(|v| v.to_string()).collect();
                trace.push_str(&format!("{t},{}\n", d.join(",")));
            };
            if emit_trace.is_some() {
                row(0, &state);
            }
            for t in 1..=steps {
                state.adapted_step(&mut RngChooser(&mut rng));
                if emit_trace.is_some() {
                    row(t, &state);
                }
            }
            if let Some(p) = emit_trace {
                let cols: Vec<String> = (0..state.size()).map(|i| format!("d{i}")).collect();
                fs::write(p, format!("{}\nstep,{}\n{trace}", cfg.header(), cols.join(",")))?;
            }
            emit(&output, &state.cfg().to_text())?;
        }
        Cmd::Extend { input, output } => {
            let p = PartialHeight::from_text(&read(&input)?)?;
            if !check_extension_condition(&p) {
                return Err(Error::ConditionViolated);
            }
            let h = kirszbraun_extend(&p, Geodesic::standard().backward())?;
            emit(&output, &h.to_text())?;
        }
        Cmd::Concentration { m, ns, d, slope, seed, trials, steps, burn_in, eps } => {
            let ns: Vec<usize> = parse_list(&ns)?;
            let first = *ns.first().ok_or_else(|| Error::InvalidParameter("no periods".into()))?;
            let mut cfg = ExperimentConfig::new("concentration", m, first, d, parse_rationals(&slope, m)?, seed);
            cfg.trials = trials;
            cfg.steps = steps;
            cfg.burn_in = burn_in;
            cfg.eps = match eps {
                Some(e) => parse_list(&e)?,
                None => Vec::new(),
            };
            let stats = ns.iter().map(|&n| run_concentration(&cfg.with_n(n))).collect::<Result<Vec<_>>>()?;
            print!("{}", concentration_csv(&cfg, &stats));
        }
        Cmd::Stationarity { shape, seed, steps, fixed } => {
            let mut cfg = experiment("stationarity", &shape, seed)?;
            cfg.steps = steps;
            cfg.fixed = parse_cells(&fixed)?;
            print!("{}", run_stationarity_test(&cfg)?.to_text(&cfg));
        }
        Cmd::Coupling { shape, seed, steps, fixed } => {
            let mut cfg = experiment("coupling", &shape, seed)?;
            cfg.steps = steps;
            cfg.fixed = parse_cells(&fixed)?;
            print!("{}", run_coupling_experiment(&cfg)?.to_text(&cfg));
        }
        Cmd::MinprobTest { shape, seed, trials } => {
            let mut cfg = experiment("minprob-test", &shape, seed)?;
            cfg.trials = trials;
            print!("{}", minprob_csv(&cfg, &run_minprob_test(&cfg)?));
        }
        Cmd::LimitShape { radius, d, seed, steps, pgm, output } => {
            let p = three_geodesic_diamond(radius, d)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = sample_limit_shape(&p, Geodesic::standard().backward(), d, steps, &mut rng)?;
            if let Some(path) = pgm {
                fs::write(path, depth_pgm(&h, &Geodesic::standard())?)?;
            }
            emit(&output, &h.to_text())?;
        }
        Cmd::SolveVariational { boundary, ent, model: spec, eps, max_iter, output } => {
            let b = match parse_profile(&read(&boundary)?)? {
                ProfileFile::Boundary(b) => b,
                ProfileFile::Full(_) => return Err(Error::InvalidBoundary("expected boundary points only".into())),
            };
            let ent = match (ent, spec) {
                (Some(p), _) => SurfaceTensionModel::from_csv(&read(&p)?)?,
                (None, Some(s)) => model(&s)?,
                (None, None) => return Err(Error::InvalidParameter("need --ent or --model".into())),
            };
            let opts = SolverOptions { max_iter, ..SolverOptions::default() };
            let sol = minimize_entropy(&b, &ent, eps, &opts)?;
            println!("objective={:.12}", sol.objective);
            println!("iterations={}", sol.history.len().saturating_sub(1));
            println!("admissible={}", sol.admissible);
            emit(&output, &sol.profile.to_text())?;
        }
        Cmd::ValidateProfile { input } => {
            match parse_profile(&read(&input)?)? {
                ProfileFile::Full(p) => validate_profile(&p)?,
                ProfileFile::Boundary(b) => {
                    b.validate()?;
                    validate_profile(&extend_boundary_profile(&b)?)?;
                }
            }
            println!("valid");
        }
        Cmd::Render { input, output } => {
            let text = read(&input)?;
            let h = if text.trim_start().starts_with("TREEHOM") {
                fundamental_height(&PeriodicConfig::from_text(&text)?)
            } else {
                HeightFunction::from_text(&text)?
            };
            emit(&output, &depth_pgm(&h, &Geodesic::standard())?)?;
        }
        Cmd::Slope { shape, seed, steps, burn_in } => {
            let mut cfg = experiment("slope", &shape, seed)?;
            cfg.steps = steps;
            cfg.burn_in = burn_in;
            let est: Vec<String> = estimate_slope(&cfg)?.iter().map(|v| format!("{v:.6}")).collect();
            println!("{}", cfg.header());
            println!("slope={}", est.join(","));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let argv = match merge_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

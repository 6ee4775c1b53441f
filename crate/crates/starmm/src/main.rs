// NaN must fail these guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use starmm::config::{self, verify_name, ExperimentSpec, KeyValues};
use starmm::error::{Error, Result, EXIT_INVARIANT, EXIT_OK};
use starmm::harness::{run_experiment, RISK_CSV_HEADER};
use starmm::io;
use starmm::sets::SetKind;
use starmm::suites::{run_suite, Scale, SUITE_NAMES};
use starmm_core::bounds::{minimax_rate, monotone_rate, RateReport};
use starmm_core::estimator::{estimate, EstimatorConfig, JStarRule};
use starmm_core::expfam::{cumulant_constants, ExponentialFamily, FamilyKind};
use starmm_core::geometry::{
    greedy_maximal_packing, local_entropy, ConstraintSet, EntropyOracle, LocalEntropyOracle,
};
use starmm_core::tree::{
    build_tree, check_invariants, tree_entropy_oracle, PathCheck, TreeOptions,
};

#[derive(Parser, Debug)]
#[command(
    name = "starmm",
    version,
    about = "Minimax estimation over star-shaped sets by pruned packing trees"
)]
struct Cli {
    /// Base seed for clouds, trees and replicates.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). Never changes results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Candidate cloud budget.
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Output path; a `.meta` sibling echoes the resolved configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct FamilyArgs {
    #[arg(long, default_value = "bernoulli")]
    family: String,
    /// Box bound M.
    #[arg(long = "M", default_value_t = 1.0)]
    m: f64,
}

#[derive(Args, Debug, Clone)]
struct SetArgs {
    /// monotone, segment or singleton.
    #[arg(long, default_value = "monotone")]
    set: String,
    /// Lattice dimension of the monotone set.
    #[arg(long, default_value_t = 1)]
    q: usize,
    /// Ambient dimension.
    #[arg(long)]
    n: usize,
    /// Cloud spacing of the segment set.
    #[arg(long, default_value_t = 1e-3)]
    resolution: f64,
    /// Replaces the candidate cloud with the rows of this CSV.
    #[arg(long)]
    cloud: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct EstimatorArgs {
    /// Separation multiplier C > 2.
    #[arg(long = "C", default_value_t = 7.0)]
    big_c: f64,
    /// Entropy constant c; defaults to 2(C+1).
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    jstar: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    extra_steps: usize,
    /// Entropy constant in the J* condition: 2c or c.
    #[arg(long, default_value = "2c")]
    rule: String,
    /// analytic or estimated.
    #[arg(long, default_value = "analytic")]
    entropy: String,
    /// off, exhaustive or sampled:N.
    #[arg(long, default_value = "off")]
    verify: String,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Curvature and domination constants of a family.
    Constants {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, default_value_t = 1024)]
        grid: usize,
        #[arg(long)]
        kappa: Option<f64>,
    },
    /// Local entropy log N^loc(eps, c) on a grid of eps, as CSV.
    Entropy {
        #[command(flatten)]
        set: SetArgs,
        #[arg(long = "M", default_value_t = 1.0)]
        m: f64,
        /// Comma-separated eps values.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 16.0)]
        c: f64,
        #[arg(long, default_value_t = 8)]
        probes: usize,
        /// Use the closed form instead of probing the cloud.
        #[arg(long)]
        analytic: bool,
    },
    /// Maximal packing of a ball of the set, as CSV.
    Pack {
        #[command(flatten)]
        set: SetArgs,
        #[arg(long = "M", default_value_t = 1.0)]
        m: f64,
        /// Ball center; defaults to the star center.
        #[arg(long, value_delimiter = ',')]
        center: Option<Vec<f64>>,
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        separation: f64,
    },
    /// Builds, verifies and serializes a pruned tree.
    Tree {
        #[command(flatten)]
        set: SetArgs,
        #[arg(long = "M", default_value_t = 1.0)]
        m: f64,
        #[arg(long, default_value_t = 16.0)]
        c: f64,
        #[arg(long, default_value_t = 6)]
        jmax: usize,
        /// off, exhaustive or sampled:N.
        #[arg(long, default_value = "exhaustive")]
        verify: String,
        /// analytic or estimated.
        #[arg(long, default_value = "estimated")]
        entropy: String,
        #[arg(long)]
        node_cap: Option<usize>,
        /// Also writes the candidate cloud as CSV.
        #[arg(long)]
        export_cloud: Option<PathBuf>,
    },
    /// Estimates theta from an observation vector.
    Estimate {
        #[command(flatten)]
        set: SetArgs,
        #[command(flatten)]
        family: FamilyArgs,
        #[command(flatten)]
        est: EstimatorArgs,
        /// Observation CSV (one row or one column).
        #[arg(long)]
        y: PathBuf,
        /// Trace file; defaults to `<out>.trace`, or stderr without --out.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Minimax rate report and predicted risk scale.
    Rate {
        #[command(flatten)]
        set: SetArgs,
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, default_value_t = 16.0)]
        c: f64,
        #[arg(long)]
        kappa: Option<f64>,
        /// analytic or estimated.
        #[arg(long, default_value = "analytic")]
        entropy: String,
        /// kv or csv.
        #[arg(long, default_value = "kv")]
        format: String,
    },
    /// Runs a Monte Carlo experiment file and prints the risk curve CSV.
    Simulate { config: PathBuf },
    /// Runs the invariant suites.
    Verify {
        /// Suite name or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Smaller sample sizes.
        #[arg(long)]
        quick: bool,
    },
}

fn family(args: &FamilyArgs) -> Result<ExponentialFamily> {
    let kind = FamilyKind::parse(&args.family).ok_or_else(|| {
        Error::config(format!(
            "unknown family {:?} (bernoulli or gaussian)",
            args.family
        ))
    })?;
    Ok(ExponentialFamily::new(kind, args.m)?)
}

fn build_set(args: &SetArgs, m: f64, budget: usize, seed: u64) -> Result<(SetKind, ConstraintSet)> {
    let kind = SetKind::parse(&args.set, args.q, args.resolution)?;
    let mut set = kind.build(args.n, m, budget, seed)?;
    if let Some(p) = &args.cloud {
        set = set.with_cloud(io::read_cloud(p)?)?;
    }
    Ok((kind, set))
}

fn parse_verify(s: &str) -> Result<Option<PathCheck>> {
    config::parse_verify(s).ok_or_else(|| {
        Error::config(format!(
            "verify must be off, exhaustive or sampled:N, got {s:?}"
        ))
    })
}

fn analytic_flag(s: &str) -> Result<bool> {
    match s {
        "analytic" => Ok(true),
        "estimated" => Ok(false),
        _ => Err(Error::config(format!(
            "entropy must be analytic or estimated, got {s:?}"
        ))),
    }
}

/// Trims trailing zeros of a six-decimal rendering.
fn short(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

struct Ctx {
    seed: u64,
    threads: usize,
    budget: Option<usize>,
    out: Option<PathBuf>,
    argv: Vec<String>,
}

impl Ctx {
    /// Writes `content` to `--out` with a `.meta` sibling, or to stdout.
    fn emit(&self, content: &str, resolved: &[(&str, String)]) -> Result<()> {
        match &self.out {
            None => {
                print!("{content}");
                Ok(())
            }
            Some(p) => {
                io::write_text(p, content)?;
                io::write_text(&meta_path(p), &self.meta(resolved))
            }
        }
    }

    fn meta(&self, resolved: &[(&str, String)]) -> String {
        let mut s = format!(
            "tool=starmm {}\ncommand={}\nseed={}\nthreads={}\n",
            env!("CARGO_PKG_VERSION"),
            self.argv.join(" "),
            self.seed,
            self.threads
        );
        if let Some(b) = self.budget {
            s += &format!("budget={b}\n");
        }
        for (k, v) in resolved {
            s += &format!("{k}={v}\n");
        }
        s
    }
}

fn meta_path(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn run(cli: Cli, argv: Vec<String>) -> Result<i32> {
    let ctx = Ctx {
        seed: cli.seed.unwrap_or(0),
        threads: cli.threads.unwrap_or(0),
        budget: cli.budget,
        out: cli.out.clone(),
        argv,
    };
    if !matches!(cli.command, Command::Simulate { .. }) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(ctx.threads)
            .build_global()
            .map_err(|e| Error::config(format!("cannot start worker threads: {e}")))?;
    }
    match cli.command {
        Command::Constants {
            family: fa,
            grid,
            kappa,
        } => {
            let f = family(&fa)?;
            let mut k = cumulant_constants(&f, grid)?;
            if let Some(kappa) = kappa {
                k = k.with_kappa(kappa);
            }
            let line = format!(
                "cM={} CM={} CprimeM={} kappaM={}\n",
                short(k.c_lower),
                short(k.c_upper),
                short(k.c_prime),
                short(k.kappa)
            );
            ctx.emit(
                &line,
                &[
                    ("family", f.kind().name().into()),
                    ("M", fa.m.to_string()),
                    ("grid", grid.to_string()),
                ],
            )?;
        }
        Command::Entropy {
            set,
            m,
            eps,
            c,
            probes,
            analytic,
        } => {
            let budget = ctx.budget.unwrap_or(2000);
            let (kind, k) = build_set(&set, m, budget, ctx.seed)?;
            let mut csv = String::from("eps,c,log_nloc,count,source\n");
            for e in eps {
                if analytic {
                    let l = kind.analytic_entropy(set.n, m).log_nloc(e, c);
                    csv += &format!("{e},{c},{l},{},analytic\n", l.exp());
                } else {
                    let l = local_entropy(&k, e, c, probes, budget, ctx.seed)?;
                    csv += &format!("{e},{c},{},{},estimated-lower-bound\n", l.log_n, l.count);
                }
            }
            ctx.emit(
                &csv,
                &[
                    ("set", kind.tag().into()),
                    ("n", set.n.to_string()),
                    ("M", m.to_string()),
                    ("probes", probes.to_string()),
                ],
            )?;
        }
        Command::Pack {
            set,
            m,
            center,
            radius,
            separation,
        } => {
            let budget = ctx.budget.unwrap_or(100_000);
            let (kind, k) = build_set(&set, m, budget, ctx.seed)?;
            let center = center.unwrap_or_else(|| k.star_center().to_vec());
            let p = greedy_maximal_packing(&k, &center, radius, separation, budget, ctx.seed)?;
            ctx.emit(
                &io::format_packing(&p),
                &[
                    ("set", kind.tag().into()),
                    ("n", set.n.to_string()),
                    ("maximal", p.is_maximal.to_string()),
                ],
            )?;
        }
        Command::Tree {
            set,
            m,
            c,
            jmax,
            verify,
            entropy,
            node_cap,
            export_cloud,
        } => {
            let budget = ctx.budget.unwrap_or(1000);
            let (kind, k) = build_set(&set, m, budget, ctx.seed)?;
            let verify = parse_verify(&verify)?;
            let analytic = analytic_flag(&entropy)?;
            let mut opts = TreeOptions {
                budget,
                seed: ctx.seed,
                verify: None,
                ..TreeOptions::default()
            };
            if let Some(cap) = node_cap {
                opts.node_cap = cap;
            }
            let tree = build_tree(&k, k.star_center(), c, jmax, &opts)?;
            if let Some(p) = &export_cloud {
                io::write_text(p, &io::format_cloud(&tree.cloud()))?;
            }
            let mut code = EXIT_OK;
            if let Some(mode) = verify {
                let oracle: Arc<dyn EntropyOracle> = if analytic {
                    kind.analytic_entropy(set.n, m)
                } else {
                    Arc::new(tree_entropy_oracle(&tree, &k, 8, budget, ctx.seed)?)
                };
                let report =
                    check_invariants(&tree, &tree.cloud(), Some(oracle.as_ref()), mode, ctx.seed);
                for (clause, n) in &report.checked {
                    let bad = report
                        .violations
                        .iter()
                        .filter(|v| v.clause == *clause)
                        .count();
                    eprintln!("{} checked={n} violations={bad}", clause.name());
                }
                if let Some(v) = report.violations.first() {
                    eprintln!(
                        "ERROR E_INVARIANT {} at level {}: {}",
                        v.clause.name(),
                        v.level,
                        v.detail
                    );
                    code = EXIT_INVARIANT;
                }
            }
            let levels: Vec<String> = (1..=tree.depth())
                .map(|j| tree.level(j).len().to_string())
                .collect();
            ctx.emit(
                &io::format_tree(&tree),
                &[
                    ("set", kind.tag().into()),
                    ("n", set.n.to_string()),
                    ("c", c.to_string()),
                    ("jmax", jmax.to_string()),
                    ("verify", verify_name(verify)),
                    ("entropy", entropy.clone()),
                    ("level_sizes", levels.join(",")),
                ],
            )?;
            return Ok(code);
        }
        Command::Estimate {
            set,
            family: fa,
            est,
            y,
            trace,
        } => {
            let f = family(&fa)?;
            let budget = ctx.budget.unwrap_or(1000);
            let (kind, k) = build_set(&set, fa.m, budget, ctx.seed)?;
            let cfg = EstimatorConfig {
                big_c: est.big_c,
                c: est.c,
                kappa: est.kappa,
                jstar_override: est.jstar,
                steps: est.steps,
                extra_steps: est.extra_steps,
                rule: JStarRule::parse(&est.rule)
                    .ok_or_else(|| Error::config(format!("unknown rule {:?}", est.rule)))?,
                budget,
                seed: ctx.seed,
                verify: parse_verify(&est.verify)?,
                ..EstimatorConfig::default()
            };
            let oracle = analytic_flag(&est.entropy)?.then(|| kind.analytic_entropy(set.n, fa.m));
            let yv = io::read_vector(&y)?;
            let r = estimate(&k, &f, &yv, &cfg, oracle)?;
            let trace_text = io::format_trace(&r.trace);
            match (&trace, &ctx.out) {
                (Some(p), _) => io::write_text(p, &trace_text)?,
                (None, Some(o)) => {
                    let mut s = o.as_os_str().to_owned();
                    s.push(".trace");
                    io::write_text(Path::new(&s), &trace_text)?;
                }
                (None, None) => eprint!("{trace_text}"),
            }
            ctx.emit(
                &format!("{}\n", io::csv_row(&r.theta_hat)),
                &[
                    ("set", kind.tag().into()),
                    ("n", set.n.to_string()),
                    ("family", f.kind().name().into()),
                    ("M", fa.m.to_string()),
                    ("C", cfg.big_c.to_string()),
                    ("c", cfg.c().to_string()),
                    ("j_star", r.j_star.to_string()),
                    ("steps", r.trace.path.len().to_string()),
                    ("entropy", est.entropy.clone()),
                    ("y", y.display().to_string()),
                ],
            )?;
        }
        Command::Rate {
            set,
            family: fa,
            c,
            kappa,
            entropy,
            format,
        } => {
            let f = family(&fa)?;
            let budget = ctx.budget.unwrap_or(1000);
            let (kind, k) = build_set(&set, fa.m, budget, ctx.seed)?;
            let mut consts = cumulant_constants(&f, 1024)?;
            if let Some(kappa) = kappa {
                consts = consts.with_kappa(kappa);
            }
            let oracle: Arc<dyn EntropyOracle> = if analytic_flag(&entropy)? {
                kind.analytic_entropy(set.n, fa.m)
            } else {
                Arc::new(LocalEntropyOracle::new(&k, 8, budget, ctx.seed)?.tabulate(&[c]))
            };
            let report = minimax_rate(k.diameter().value, &consts, oracle.as_ref(), c, 1e-9)?;
            let text = match format.as_str() {
                "kv" => {
                    let mut s = String::new();
                    if let SetKind::Monotone { q } = kind {
                        let p = monotone_rate(q, set.n as f64)?;
                        s += &format!(
                            "predicted_scale={}\npredicted_exponent={}\nupper_bound_only={}\n",
                            short(p.value),
                            p.exponent,
                            p.upper_bound_only
                        );
                    }
                    s + &report.to_key_value()
                }
                "csv" => format!("{}\n{}\n", RateReport::CSV_HEADER, report.to_csv_row()),
                other => {
                    return Err(Error::config(format!(
                        "format must be kv or csv, got {other:?}"
                    )))
                }
            };
            ctx.emit(
                &text,
                &[
                    ("set", kind.tag().into()),
                    ("n", set.n.to_string()),
                    ("c", c.to_string()),
                    ("kappa", consts.kappa.to_string()),
                ],
            )?;
        }
        Command::Simulate { config } => {
            let mut kv = KeyValues::load(&config)?;
            if let Some(s) = cli.seed {
                kv.set("seed", s);
            }
            if let Some(t) = cli.threads {
                kv.set("threads", t);
            }
            if let Some(b) = cli.budget {
                kv.set("budget", b);
            }
            if let Some(o) = &cli.out {
                kv.set("out", o.display());
            }
            let spec = ExperimentSpec::from_key_values(kv)?;
            let out = run_experiment(&spec)?;
            print!("{}", out.csv);
            match (&out.curve.fit, &out.curve.fit_note) {
                (Some(f), _) => eprintln!(
                    "fitted_slope={} ci95=[{}, {}] predicted={}",
                    f.slope,
                    f.lower,
                    f.upper,
                    out.curve
                        .predicted_slope
                        .map_or("none".into(), |p| p.to_string())
                ),
                (None, Some(n)) => eprintln!("fitted_slope=insufficient ({n})"),
                _ => {}
            }
            debug_assert!(out.csv.starts_with(RISK_CSV_HEADER));
        }
        Command::Verify { suite, quick } => {
            let names: Vec<&str> = if suite == "all" {
                SUITE_NAMES.to_vec()
            } else {
                vec![suite.as_str()]
            };
            let scale = if quick { Scale::Quick } else { Scale::Full };
            let mut all = true;
            let mut report = String::new();
            for name in names {
                let o = run_suite(name, scale, ctx.seed)?;
                all &= o.passed;
                report += &o.line();
                report.push('\n');
            }
            ctx.emit(
                &report,
                &[("suite", suite.clone()), ("quick", quick.to_string())],
            )?;
            if !all {
                return Ok(EXIT_INVARIANT);
            }
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::from(0);
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let _ = e.print();
                eprintln!("ERROR E_USAGE missing subcommand");
                return ExitCode::from(2);
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("ERROR E_USAGE {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli, argv) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("ERROR {} {}", e.code(), e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

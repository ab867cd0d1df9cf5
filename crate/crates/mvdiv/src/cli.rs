//! Command-line interface: `solve`, `verify`, `simulate`, `sweep`,
//! `gamma-bar`.
//!
//! Configuration comes from an optional flat `key = value` file plus flags;
//! flags win. Unknown config keys are rejected by name. Every output file is
//! self-describing: CSV carries `#`-prefixed metadata lines echoing the full
//! resolved configuration (the timestamp line can be suppressed with
//! `--no-timestamp` for byte-reproducible files), JSON embeds the same
//! configuration object and never includes a timestamp.
//!
//! Exit codes: 0 success / all conditions pass, 1 configuration error,
//! 2 solver or simulation failure, 3 verification failure.

use crate::barrier::{find_all_roots, solve_barrier, taksar_barrier, SolveOptions};
use crate::model::{classify_regime, ModelParams, Regime};
use crate::simulate::{
    default_t_max, estimate_moments, estimate_mv_frontier, SimConfig, SimError,
};
use crate::sweep::{
    default_grid, f_curve, gamma_bar, sweep_barrier, value_curve, SweepError, SweepSpec, Varied,
};
use crate::value::{
    build_solution, check_concavity, pay_all_solution, verify_hjb, EquilibriumSolution,
    VerifyOptions, DEFAULT_N_GRID,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "mvdiv",
    version,
    about = "Equilibrium dividend barriers under a mean-variance criterion"
)]
pub struct Cli {
    /// Flat key=value config file ('#' comments); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Drift of the surplus process.
    #[arg(long, global = true)]
    pub a: Option<f64>,

    /// Volatility of the surplus process.
    #[arg(long, global = true)]
    pub b: Option<f64>,

    /// Discount rate.
    #[arg(long, global = true)]
    pub rho: Option<f64>,

    /// Variance aversion.
    #[arg(long, global = true)]
    pub gamma: Option<f64>,

    /// Write a machine-readable result file here.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Format of the output file (default: json if the path ends in .json,
    /// csv otherwise).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Omit the timestamp metadata line from CSV output.
    #[arg(long, global = true)]
    pub no_timestamp: bool,

    /// Cap the number of worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the barrier equation and classify the equilibrium.
    Solve {
        /// Root residual tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Right end of the root scan window.
        #[arg(long)]
        x_max: Option<f64>,
        /// Number of scan nodes.
        #[arg(long)]
        n_scan: Option<usize>,
        /// List every root in the window instead of requiring uniqueness.
        #[arg(long)]
        all_roots: bool,
    },
    /// Verify the equilibrium system on a grid.
    Verify {
        #[arg(long)]
        n_grid: Option<usize>,
        /// Right end of the pay-region grid.
        #[arg(long)]
        x_max: Option<f64>,
        /// Tolerance for analytic-identity residuals.
        #[arg(long)]
        tol_res: Option<f64>,
        /// Tolerance for one-sided inequalities.
        #[arg(long)]
        tol_ineq: Option<f64>,
    },
    /// Monte Carlo estimate of the dividend moments, against closed forms.
    Simulate {
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        n_paths: Option<u64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        x0: Option<f64>,
        /// Comma-separated candidate barriers: estimate the mean-variance
        /// frontier across them instead of a single solution.
        #[arg(long)]
        barriers: Option<String>,
    },
    /// Parameter sweep tables: barrier vs parameter, value curves, f curves.
    Sweep {
        /// Which parameter to vary (gamma, rho, a, b).
        #[arg(long)]
        vary: Option<String>,
        /// Comma-separated grid (varied values, or x grid for value/f).
        #[arg(long)]
        grid: Option<String>,
        /// Which table to emit: barrier, value, or f.
        #[arg(long)]
        table: Option<String>,
    },
    /// Largest variance aversion with a concave (verified) barrier solution.
    GammaBar {
        /// Bisection width.
        #[arg(long)]
        tol: Option<f64>,
    },
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Solver(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Solver(_) => EXIT_SOLVER,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Solver(m) => m,
        }
    }
}

/// Formats with `sig` significant digits, plain decimal where reasonable.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if exp >= -4 && exp < sig as i32 {
        let dec = (sig as i32 - 1 - exp).max(0) as usize;
        trim_decimal(&format!("{:.*}", dec, x))
    } else {
        let s = format!("{:.*e}", sig - 1, x);
        match s.split_once('e') {
            Some((mant, e)) => format!("{}e{}", trim_decimal(mant), e),
            None => s,
        }
    }
}

fn trim_decimal(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Shortest representation that parses back to the same f64 (Rust's default).
fn full(x: f64) -> String {
    format!("{x}")
}

const KNOWN_KEYS: &[&str] = &[
    "a", "b", "rho", "gamma", "tol", "x_max", "n_scan", "n_grid", "tol_res", "tol_ineq", "dt",
    "n_paths", "t_max", "seed", "x0", "barriers", "vary", "grid", "table", "output", "format",
    "no_timestamp", "threads",
];

/// Parses the flat key=value config format; later duplicates win.
fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("config line {}: expected key=value, got '{line}'", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::Config(format!("unknown config key '{key}'")));
        }
        map.insert(key.to_string(), value.to_string());
    }
    Ok(map)
}

/// Config file contents merged under CLI flags.
struct Settings {
    file: BTreeMap<String, String>,
}

impl Settings {
    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                CliError::Config(format!("config key '{key}': cannot parse '{raw}': {e}"))
            }),
        }
    }

    fn f64_or(&self, key: &str, flag: Option<f64>, default: f64) -> Result<f64, CliError> {
        Ok(flag.or(self.parsed(key)?).unwrap_or(default))
    }

    fn f64_opt(&self, key: &str, flag: Option<f64>) -> Result<Option<f64>, CliError> {
        Ok(flag.or(self.parsed(key)?))
    }

    fn u64_or(&self, key: &str, flag: Option<u64>, default: u64) -> Result<u64, CliError> {
        Ok(flag.or(self.parsed(key)?).unwrap_or(default))
    }

    fn usize_or(&self, key: &str, flag: Option<usize>, default: usize) -> Result<usize, CliError> {
        Ok(flag.or(self.parsed(key)?).unwrap_or(default))
    }

    fn string_or(&self, key: &str, flag: Option<String>, default: &str) -> Result<String, CliError> {
        Ok(flag
            .or(self.file.get(key).cloned())
            .unwrap_or_else(|| default.to_string()))
    }

    fn string_opt(&self, key: &str, flag: Option<String>) -> Result<Option<String>, CliError> {
        Ok(flag.or(self.file.get(key).cloned()))
    }
}

fn parse_list(raw: &str, what: &str) -> Result<Vec<f64>, CliError> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("{what}: cannot parse '{}': {e}", s.trim())))
        })
        .collect()
}

/// Runs the CLI; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            parse_config_text(&text)?
        }
        None => BTreeMap::new(),
    };
    let settings = Settings { file };

    if let Some(n) = cli
        .threads
        .or(settings.parsed::<usize>("threads")?)
    {
        if n == 0 {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        // Ignore the error: the global pool can only be sized once per
        // process, which is fine for a CLI.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let params = resolve_params(&cli, &settings)?;
    let out = OutputSpec::resolve(&cli, &settings)?;

    match &cli.command {
        Command::Solve { tol, x_max, n_scan, all_roots } => {
            cmd_solve(&params, &settings, &out, *tol, *x_max, *n_scan, *all_roots)
        }
        Command::Verify { n_grid, x_max, tol_res, tol_ineq } => {
            cmd_verify(&params, &settings, &out, *n_grid, *x_max, *tol_res, *tol_ineq)
        }
        Command::Simulate { dt, n_paths, t_max, seed, x0, barriers } => cmd_simulate(
            &params,
            &settings,
            &out,
            *dt,
            *n_paths,
            *t_max,
            *seed,
            *x0,
            barriers.clone(),
        ),
        Command::Sweep { vary, grid, table } => {
            cmd_sweep(&params, &settings, &out, vary.clone(), grid.clone(), table.clone())
        }
        Command::GammaBar { tol } => cmd_gamma_bar(&params, &settings, &out, *tol),
    }
}

fn resolve_params(cli: &Cli, s: &Settings) -> Result<ModelParams, CliError> {
    let a = s.f64_or("a", cli.a, 1.0)?;
    let b = s.f64_or("b", cli.b, 0.25)?;
    let rho = s.f64_or("rho", cli.rho, 0.2)?;
    let gamma = s.f64_or("gamma", cli.gamma, 0.0)?;
    ModelParams::new(a, b, rho, gamma).map_err(|e| CliError::Config(e.to_string()))
}

struct OutputSpec {
    path: Option<PathBuf>,
    format: Format,
    timestamp: bool,
}

impl OutputSpec {
    fn resolve(cli: &Cli, s: &Settings) -> Result<Self, CliError> {
        let path = match &cli.output {
            Some(p) => Some(p.clone()),
            None => s.string_opt("output", None)?.map(PathBuf::from),
        };
        let format = match cli.format {
            Some(f) => f,
            None => match s.file.get("format").map(String::as_str) {
                Some("csv") => Format::Csv,
                Some("json") => Format::Json,
                Some(other) => {
                    return Err(CliError::Config(format!(
                        "config key 'format': expected csv or json, got '{other}'"
                    )))
                }
                None => match &path {
                    Some(p) if p.extension().is_some_and(|e| e == "json") => Format::Json,
                    _ => Format::Csv,
                },
            },
        };
        let timestamp = !(cli.no_timestamp
            || s.file.get("no_timestamp").map(String::as_str) == Some("true"));
        Ok(Self { path, format, timestamp })
    }

    fn write(
        &self,
        command: &str,
        config: &BTreeMap<String, String>,
        header: &str,
        rows: &[String],
        json_payload: serde_json::Value,
    ) -> Result<(), CliError> {
        let Some(path) = &self.path else { return Ok(()) };
        let body = match self.format {
            Format::Csv => {
                let mut text = String::new();
                let _ = writeln!(text, "# mvdiv {}", env!("CARGO_PKG_VERSION"));
                let _ = writeln!(text, "# command={command}");
                if self.timestamp {
                    let now = std::time::SystemTime::now()
                        .duration_since(std::time::UNIX_EPOCH)
                        .map(|d| d.as_secs())
                        .unwrap_or(0);
                    let _ = writeln!(text, "# generated_unix={now}");
                }
                for (k, v) in config {
                    let _ = writeln!(text, "# {k}={v}");
                }
                let _ = writeln!(text, "{header}");
                for row in rows {
                    let _ = writeln!(text, "{row}");
                }
                text
            }
            Format::Json => {
                let obj = json!({
                    "tool": "mvdiv",
                    "version": env!("CARGO_PKG_VERSION"),
                    "command": command,
                    "config": config,
                    "result": json_payload,
                });
                let mut text = serde_json::to_string_pretty(&obj).map_err(|e| {
                    CliError::Config(format!("cannot serialize output: {e}"))
                })?;
                text.push('\n');
                text
            }
        };
        std::fs::write(path, body)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
    }
}

fn model_config(params: &ModelParams) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("a".to_string(), full(params.a)),
        ("b".to_string(), full(params.b)),
        ("rho".to_string(), full(params.rho)),
        ("gamma".to_string(), full(params.gamma)),
    ])
}

/// Solves (or classifies) the equilibrium for `params`, for the commands
/// that need a ready solution.
fn resolve_solution(
    params: &ModelParams,
    opts: &SolveOptions,
) -> Result<EquilibriumSolution, CliError> {
    match classify_regime(params) {
        Regime::PayAll => Ok(pay_all_solution(params)
            .expect("regime just classified as pay-all")
            .into()),
        Regime::BarrierCandidate => {
            let root = solve_barrier(params, opts).map_err(|e| CliError::Solver(e.to_string()))?;
            let sol = build_solution(params, root.x_tilde)
                .map_err(|e| CliError::Solver(e.to_string()))?;
            Ok(sol.into())
        }
    }
}

fn solve_options(
    s: &Settings,
    tol: Option<f64>,
    x_max: Option<f64>,
    n_scan: Option<usize>,
) -> Result<SolveOptions, CliError> {
    let defaults = SolveOptions::default();
    Ok(SolveOptions {
        tol: s.f64_or("tol", tol, defaults.tol)?,
        x_max: s.f64_opt("x_max", x_max)?,
        n_scan: s.usize_or("n_scan", n_scan, defaults.n_scan)?,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    params: &ModelParams,
    s: &Settings,
    out: &OutputSpec,
    tol: Option<f64>,
    x_max: Option<f64>,
    n_scan: Option<usize>,
    all_roots: bool,
) -> Result<i32, CliError> {
    let opts = solve_options(s, tol, x_max, n_scan)?;
    opts.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let mut config = model_config(params);
    config.insert("tol".into(), full(opts.tol));
    config.insert(
        "x_max".into(),
        full(opts.x_max.unwrap_or(20.0 * taksar_barrier(params))),
    );
    config.insert("n_scan".into(), opts.n_scan.to_string());

    println!("model: a={} b={} rho={} gamma={}", params.a, params.b, params.rho, params.gamma);

    if all_roots {
        // Diagnostic view of the barrier equation itself; it can have roots
        // even in the pay-all regime, where they are not equilibrium
        // candidates.
        let roots = find_all_roots(params, &opts).map_err(|e| CliError::Solver(e.to_string()))?;
        println!("regime: {:?}", classify_regime(params));
        println!("roots found on scan: {}", roots.len());
        let mut rows = Vec::new();
        for r in &roots {
            println!(
                "  x = {} (residual {}, bracket [{}, {}])",
                fmt_sig(r.x_tilde, 10),
                fmt_sig(r.residual, 3),
                fmt_sig(r.bracket.0, 10),
                fmt_sig(r.bracket.1, 10)
            );
            rows.push(format!("{},{}", full(r.x_tilde), full(r.residual)));
        }
        let payload = serde_json::to_value(&roots)
            .map_err(|e| CliError::Config(format!("cannot serialize roots: {e}")))?;
        out.write("solve", &config, "x_tilde,residual", &rows, payload)?;
        return Ok(EXIT_OK);
    }

    if classify_regime(params) == Regime::PayAll {
        println!("regime: pay-all (gamma >= 2a/b^2 = {})", fmt_sig(params.pay_all_threshold(), 10));
        println!("solution: V(x) = x, G(x) = x, H(x) = x^2 (pay the whole surplus at once)");
        println!("classification: PayAll");
        let rows = vec![format!("{},pay_all,nan,nan,nan,PayAll", full(params.gamma))];
        out.write(
            "solve",
            &config,
            "gamma,regime,x_tilde,c1,c3,classification",
            &rows,
            json!({ "regime": "pay_all", "classification": "PayAll" }),
        )?;
        return Ok(EXIT_OK);
    }

    println!("regime: barrier candidate (gamma < 2a/b^2 = {})", fmt_sig(params.pay_all_threshold(), 10));

    let root = solve_barrier(params, &opts).map_err(|e| CliError::Solver(e.to_string()))?;
    let sol = build_solution(params, root.x_tilde).map_err(|e| CliError::Solver(e.to_string()))?;
    let conc = check_concavity(&sol, DEFAULT_N_GRID);
    let class = if conc.concave { "BarrierEquilibrium" } else { "Indeterminate" };

    println!("x_tilde = {}  (residual {})", fmt_sig(root.x_tilde, 10), fmt_sig(root.residual, 3));
    println!("c1 = {}", fmt_sig(sol.c1, 10));
    println!("c3 = {}", fmt_sig(sol.c3, 10));
    match conc.first_violation {
        None => println!("concavity: V strictly concave on (0, x_tilde)"),
        Some(x) => println!("concavity: violated, first V'' >= 0 at x = {}", fmt_sig(x, 10)),
    }
    println!("classification: {class}");
    if !conc.concave {
        println!(
            "note: the candidate satisfies the equilibrium system, but V is not \
             concave, so the verification theorem does not apply; whether an \
             equilibrium exists at this risk aversion is an open question"
        );
    }

    let rows = vec![format!(
        "{},barrier_candidate,{},{},{},{}",
        full(params.gamma),
        full(root.x_tilde),
        full(sol.c1),
        full(sol.c3),
        class
    )];
    out.write(
        "solve",
        &config,
        "gamma,regime,x_tilde,c1,c3,classification",
        &rows,
        json!({
            "regime": "barrier_candidate",
            "x_tilde": root.x_tilde,
            "residual": root.residual,
            "c1": sol.c1,
            "c3": sol.c3,
            "concave": conc.concave,
            "first_violation": conc.first_violation,
            "classification": class,
        }),
    )?;
    Ok(EXIT_OK)
}

fn cmd_verify(
    params: &ModelParams,
    s: &Settings,
    out: &OutputSpec,
    n_grid: Option<usize>,
    x_max: Option<f64>,
    tol_res: Option<f64>,
    tol_ineq: Option<f64>,
) -> Result<i32, CliError> {
    let defaults = VerifyOptions::default();
    let opts = VerifyOptions {
        n_grid: s.usize_or("n_grid", n_grid, defaults.n_grid)?,
        x_max: s.f64_opt("x_max", x_max)?,
        tol_res: s.f64_or("tol_res", tol_res, defaults.tol_res)?,
        tol_ineq: s.f64_or("tol_ineq", tol_ineq, defaults.tol_ineq)?,
    };
    if opts.n_grid < 2 {
        return Err(CliError::Config("n_grid must be at least 2".into()));
    }
    let sol = resolve_solution(params, &SolveOptions::default())?;
    let report = verify_hjb(&sol, &opts);

    let mut config = model_config(params);
    config.insert("n_grid".into(), opts.n_grid.to_string());
    config.insert("tol_res".into(), full(opts.tol_res));
    config.insert("tol_ineq".into(), full(opts.tol_ineq));
    config.insert("x_tilde".into(), full(sol.barrier_level()));

    let mut rows = Vec::new();
    for c in &report.conditions {
        println!(
            "[{}] {:<30} region={:<13} worst={:<13} at x={} (tol {})",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            format!("{:?}", c.region),
            fmt_sig(c.worst_residual, 4),
            fmt_sig(c.worst_location, 6),
            fmt_sig(c.tolerance, 3),
        );
        rows.push(format!(
            "{},{:?},{},{},{},{}",
            c.name,
            c.region,
            full(c.worst_residual),
            full(c.worst_location),
            full(c.tolerance),
            c.pass
        ));
    }
    println!(
        "verification: {}",
        if report.all_passed { "all conditions pass" } else { "FAILED" }
    );
    let payload = serde_json::to_value(&report)
        .map_err(|e| CliError::Config(format!("cannot serialize report: {e}")))?;
    out.write(
        "verify",
        &config,
        "condition,region,worst_residual,worst_location,tolerance,pass",
        &rows,
        payload,
    )?;
    Ok(if report.all_passed { EXIT_OK } else { EXIT_VERIFY })
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    params: &ModelParams,
    s: &Settings,
    out: &OutputSpec,
    dt: Option<f64>,
    n_paths: Option<u64>,
    t_max: Option<f64>,
    seed: Option<u64>,
    x0: Option<f64>,
    barriers: Option<String>,
) -> Result<i32, CliError> {
    let sol = resolve_solution(params, &SolveOptions::default())?;
    let xt = sol.barrier_level();
    let default_x0 = if xt > 0.0 { xt / 2.0 } else { 1.0 };
    let cfg = SimConfig {
        dt: s.f64_or("dt", dt, 1e-3)?,
        n_paths: s.u64_or("n_paths", n_paths, 10_000)?,
        t_max: s.f64_or("t_max", t_max, default_t_max(params))?,
        seed: s.u64_or("seed", seed, 1)?,
        x0: s.f64_or("x0", x0, default_x0)?,
    };
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let mut config = model_config(params);
    config.insert("dt".into(), full(cfg.dt));
    config.insert("n_paths".into(), cfg.n_paths.to_string());
    config.insert("t_max".into(), full(cfg.t_max));
    config.insert("seed".into(), cfg.seed.to_string());
    config.insert("x0".into(), full(cfg.x0));
    config.insert("x_tilde".into(), full(xt));

    println!(
        "simulate: dt={} n_paths={} t_max={} seed={} x0={}",
        full(cfg.dt),
        cfg.n_paths,
        full(cfg.t_max),
        cfg.seed,
        full(cfg.x0)
    );

    if let Some(raw) = s.string_opt("barriers", barriers)? {
        let bars = parse_list(&raw, "barriers")?;
        let points = estimate_mv_frontier(params, &bars, &cfg).map_err(sim_error)?;
        println!("{:<14} {:<14} {:<14} {:<14}", "barrier", "g_hat", "var_hat", "j_hat");
        let mut rows = Vec::new();
        for p in &points {
            println!(
                "{:<14} {:<14} {:<14} {:<14}",
                fmt_sig(p.barrier, 10),
                fmt_sig(p.g_hat, 10),
                fmt_sig(p.var_hat, 10),
                fmt_sig(p.j_hat, 10)
            );
            rows.push(format!(
                "{},{},{},{}",
                full(p.barrier),
                full(p.g_hat),
                full(p.var_hat),
                full(p.j_hat)
            ));
        }
        let payload = serde_json::to_value(&points)
            .map_err(|e| CliError::Config(format!("cannot serialize frontier: {e}")))?;
        out.write("simulate", &config, "barrier,g_hat,var_hat,j_hat", &rows, payload)?;
        return Ok(EXIT_OK);
    }

    let est = estimate_moments(&sol, &cfg).map_err(sim_error)?;
    let refs = [
        ("g_hat", est.g_hat, sol.g(cfg.x0), est.se_g),
        ("h_hat", est.h_hat, sol.h(cfg.x0), est.se_h),
        ("v_hat", est.v_hat, sol.v(cfg.x0), f64::NAN),
    ];
    println!(
        "{:<8} {:<16} {:<16} {:<12} {:<8}",
        "quantity", "estimate", "reference", "se", "z"
    );
    let mut rows = Vec::new();
    for (name, estimate, reference, se) in refs {
        let z = (estimate - reference) / se;
        println!(
            "{:<8} {:<16} {:<16} {:<12} {:<8}",
            name,
            fmt_sig(estimate, 10),
            fmt_sig(reference, 10),
            if se.is_nan() { "-".to_string() } else { fmt_sig(se, 4) },
            if z.is_nan() { "-".to_string() } else { fmt_sig(z, 3) },
        );
        rows.push(format!(
            "{name},{},{},{},{}",
            full(estimate),
            full(reference),
            full(se),
            full(z)
        ));
    }
    println!(
        "truncated_fraction = {}",
        fmt_sig(est.truncated_fraction, 4)
    );
    let payload = json!({
        "estimate": est,
        "reference": { "g": sol.g(cfg.x0), "h": sol.h(cfg.x0), "v": sol.v(cfg.x0) },
    });
    out.write("simulate", &config, "quantity,estimate,reference,se,z", &rows, payload)?;
    Ok(EXIT_OK)
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::InvalidConfig(_) => CliError::Config(e.to_string()),
        SimError::ExcessTruncation { .. } => CliError::Solver(e.to_string()),
    }
}

fn cmd_sweep(
    params: &ModelParams,
    s: &Settings,
    out: &OutputSpec,
    vary: Option<String>,
    grid: Option<String>,
    table: Option<String>,
) -> Result<i32, CliError> {
    let table = s.string_or("table", table, "barrier")?;
    match table.as_str() {
        "barrier" => {
            let varied = Varied::from_str(&s.string_or("vary", vary, "gamma")?)
                .map_err(CliError::Config)?;
            let grid_vals = match s.string_opt("grid", grid)? {
                Some(raw) => parse_list(&raw, "grid")?,
                None => default_grid(varied),
            };
            let spec = SweepSpec::new(varied, grid_vals, *params)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let rows_data = sweep_barrier(&spec);

            let mut config = model_config(params);
            config.insert("vary".into(), varied.to_string());
            config.insert("table".into(), "barrier".into());
            println!(
                "{:<14} {:<14} {:<9} {:<14} {:<14} {}",
                varied.to_string(),
                "x_tilde",
                "concave",
                "c1",
                "c3",
                "status"
            );
            let mut rows = Vec::new();
            for r in &rows_data {
                let opt = |v: Option<f64>| match v {
                    Some(x) => fmt_sig(x, 10),
                    None => "nan".to_string(),
                };
                println!(
                    "{:<14} {:<14} {:<9} {:<14} {:<14} {}",
                    fmt_sig(r.varied_value, 10),
                    opt(r.x_tilde),
                    r.concave.map_or("nan".to_string(), |c| c.to_string()),
                    opt(r.c1),
                    opt(r.c3),
                    r.status
                );
                let optf = |v: Option<f64>| match v {
                    Some(x) => full(x),
                    None => "nan".to_string(),
                };
                rows.push(format!(
                    "{},{},{},{},{},{}",
                    full(r.varied_value),
                    optf(r.x_tilde),
                    r.concave.map_or("nan".to_string(), |c| c.to_string()),
                    optf(r.c1),
                    optf(r.c3),
                    r.status
                ));
            }
            let payload = serde_json::to_value(&rows_data)
                .map_err(|e| CliError::Config(format!("cannot serialize sweep: {e}")))?;
            out.write(
                "sweep",
                &config,
                "varied_value,x_tilde,concave,c1,c3,status",
                &rows,
                payload,
            )?;
            Ok(EXIT_OK)
        }
        "value" => {
            let sol = match resolve_solution(params, &SolveOptions::default())? {
                EquilibriumSolution::Barrier(sol) => sol,
                EquilibriumSolution::PayAll(_) => {
                    return Err(CliError::Solver(
                        "value table requires the barrier regime; in the pay-all regime \
                         V(x) = x identically"
                            .into(),
                    ))
                }
            };
            let grid_vals = resolve_x_grid(s, grid, 2.0 * sol.x_tilde)?;
            let pts = value_curve(&sol, &grid_vals);
            let mut config = model_config(params);
            config.insert("table".into(), "value".into());
            config.insert("x_tilde".into(), full(sol.x_tilde));
            let mut rows = Vec::new();
            for p in &pts {
                rows.push(format!(
                    "{},{},{},{},{},{}",
                    full(p.x),
                    full(p.v),
                    full(p.v_prime),
                    full(p.v_second),
                    full(p.g),
                    full(p.h)
                ));
            }
            println!("value curve: {} nodes on [0, {}]", pts.len(), fmt_sig(grid_vals[grid_vals.len() - 1], 10));
            let payload = serde_json::to_value(&pts)
                .map_err(|e| CliError::Config(format!("cannot serialize curve: {e}")))?;
            out.write("sweep", &config, "x,v,v_prime,v_second,g,h", &rows, payload)?;
            Ok(EXIT_OK)
        }
        "f" => {
            let grid_vals = resolve_x_grid(s, grid, 1.0)?;
            let pts = f_curve(params, &grid_vals);
            let mut config = model_config(params);
            config.insert("table".into(), "f".into());
            let mut rows = Vec::new();
            for p in &pts {
                rows.push(format!("{},{}", full(p.x), full(p.f)));
            }
            println!("f curve: {} nodes on [0, {}]", pts.len(), fmt_sig(grid_vals[grid_vals.len() - 1], 10));
            let payload = serde_json::to_value(&pts)
                .map_err(|e| CliError::Config(format!("cannot serialize curve: {e}")))?;
            out.write("sweep", &config, "x,f", &rows, payload)?;
            Ok(EXIT_OK)
        }
        other => Err(CliError::Config(format!(
            "unknown table '{other}' (one of: barrier, value, f)"
        ))),
    }
}

fn resolve_x_grid(s: &Settings, grid: Option<String>, hi: f64) -> Result<Vec<f64>, CliError> {
    match s.string_opt("grid", grid)? {
        Some(raw) => {
            let vals = parse_list(&raw, "grid")?;
            if vals.iter().any(|&x| x < 0.0) {
                return Err(CliError::Config("x grid must be nonnegative".into()));
            }
            if vals.is_empty() {
                return Err(CliError::Config("x grid must be nonempty".into()));
            }
            Ok(vals)
        }
        None => Ok((0..=200).map(|i| hi * i as f64 / 200.0).collect()),
    }
}

fn cmd_gamma_bar(
    params: &ModelParams,
    s: &Settings,
    out: &OutputSpec,
    tol: Option<f64>,
) -> Result<i32, CliError> {
    let tol = s.f64_or("tol", tol, 1e-4)?;
    let gb = match gamma_bar(params, tol) {
        Ok(gb) => gb,
        Err(e @ SweepError::NotFound { .. }) => return Err(CliError::Solver(e.to_string())),
        Err(e) => return Err(CliError::Config(e.to_string())),
    };
    println!("gamma_bar = {}  (tol {})", fmt_sig(gb, 10), fmt_sig(tol, 3));
    println!("pay-all threshold 2a/b^2 = {}", fmt_sig(params.pay_all_threshold(), 10));
    let mut config = model_config(params);
    config.insert("tol".into(), full(tol));
    out.write(
        "gamma-bar",
        &config,
        "gamma_bar,tol",
        &[format!("{},{}", full(gb), full(tol))],
        json!({ "gamma_bar": gb, "tol": tol }),
    )?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_sig_has_ten_significant_digits() {
        assert_eq!(fmt_sig(0.32319704537054216, 10), "0.3231970454");
        assert_eq!(fmt_sig(4.696451754807931, 10), "4.696451755");
        assert_eq!(fmt_sig(0.0, 10), "0");
        assert_eq!(fmt_sig(-1.5, 10), "-1.5");
        assert_eq!(fmt_sig(123456.0, 10), "123456");
        assert_eq!(fmt_sig(1e-12, 10), "1e-12");
        assert_eq!(fmt_sig(3.0e15, 10), "3e15");
    }

    #[test]
    fn config_parser_accepts_known_keys_and_comments() {
        let text = "\n# comment\n a = 1.5 # trailing\nrho=0.3\nn_paths = 100\n";
        let map = parse_config_text(text).unwrap();
        assert_eq!(map.get("a").unwrap(), "1.5");
        assert_eq!(map.get("rho").unwrap(), "0.3");
        assert_eq!(map.get("n_paths").unwrap(), "100");
    }

    #[test]
    fn config_parser_names_the_unknown_key() {
        let err = parse_config_text("gamm = 0.1").unwrap_err();
        assert!(err.message().contains("gamm"), "got: {}", err.message());
        assert_eq!(err.exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn config_parser_rejects_bad_lines() {
        assert!(parse_config_text("just words").is_err());
        let map = parse_config_text("a=2\na=3").unwrap();
        assert_eq!(map.get("a").unwrap(), "3");
    }

    #[test]
    fn settings_typed_getters_name_the_key_on_parse_failure() {
        let s = Settings { file: parse_config_text("dt = fast").unwrap() };
        let err = s.f64_or("dt", None, 0.1).unwrap_err();
        assert!(err.message().contains("dt"));
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn parse_list_handles_spaces_and_errors() {
        assert_eq!(parse_list("1.0, 2.5,3", "x").unwrap(), vec![1.0, 2.5, 3.0]);
        assert!(parse_list("1.0,two", "x").is_err());
    }
}

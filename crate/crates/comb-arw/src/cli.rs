//! Command-line front end.
//!
//! Eleven subcommands expose the library: `stabilize`, `stationary`, and
//! `drive` run the toppling engine; `layer` and `rho` run layer growth;
//! `parse-shapes` and `verify-odometer` exercise the odometer/path bridge;
//! `bounds`, `fig2`, `fig3`, and `couple-test` run the experiment drivers.
//!
//! Every command accepts `--seed` and derives all randomness from it, so
//! identical invocations produce byte-identical output regardless of
//! `--threads`. A `--config` file supplies `key=value` defaults that
//! explicit flags override. Reports embed a provenance record (command,
//! seed, resolved parameters, content hash); CSV and text outputs carry it
//! in a `.meta.json` sidecar next to `--out`, or on stderr when writing to
//! stdout. Exit codes: `0` success, `1` validation errors (including
//! unknown flags), `2` tripped resource guards.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use crate::arw::{self, Configuration, Driving, Policy};
use crate::bounds::{self, SandwichParams};
use crate::bridge;
use crate::graph::{Graph, SiteId};
use crate::instr::{mix64, SeededStacks};
use crate::laws::ShapeLaw;
use crate::perc::{self, InfectionProcess};
use crate::report::{emit_json, fmt_sig10, fmt_trim, Csv, Provenance};
use crate::{
    Error, Result, DEFAULT_BUDGET, DEFAULT_CELL_CAP, DEFAULT_SCAN_GUARD, DEFAULT_SEED,
};

#[derive(Parser, Debug)]
#[command(
    name = "comb-arw",
    about = "Activated random walk and layer percolation laboratory",
    disable_version_flag = true
)]
struct Cli {
    /// Master random seed; every stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replica-parallel runs (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// key=value defaults file; explicit flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted). A `.meta.json` provenance sidecar
    /// is written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Instruction budget per stabilization.
    #[arg(long, global = true)]
    budget: Option<u64>,
    /// Cap on stored growth cells.
    #[arg(long, global = true)]
    cell_cap: Option<u64>,
    /// Stack scan guard: largest instruction |index| consulted.
    #[arg(long, global = true)]
    guard: Option<i64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Stabilize one configuration and report the outcome as JSON.
    Stabilize(StabilizeOpts),
    /// Stationary sleeper densities from all-active starts (JSON).
    Stationary(StationaryOpts),
    /// Driven chain: add a particle, stabilize, record sleeper counts (CSV).
    Drive(DriveOpts),
    /// Layer growth: per-replica displacement after each step (CSV).
    Layer(LayerOpts),
    /// Growth-rate estimate `X_k / k` for a shape law (prints the mean).
    Rho(RhoOpts),
    /// Parse instruction stacks above the minimal odometer into shapes.
    ParseShapes(ParseShapesOpts),
    /// Stabilize, verify the odometer, and round-trip its infection path.
    VerifyOdometer(VerifyOdometerOpts),
    /// Lower/direct/upper density sandwich report (JSON).
    Bounds(BoundsOpts),
    /// Stationary density grid over lambda: comb teeth/spine vs interval.
    Fig2(Fig2Opts),
    /// Driven density trace for the linear-then-flat picture (CSV).
    Fig3(Fig3Opts),
    /// Coupled comb/interval sampler statistics (JSON).
    CoupleTest(CoupleTestOpts),
}

#[derive(Args, Debug)]
struct StabilizeOpts {
    /// Graph family: comb or interval.
    #[arg(long)]
    graph: Option<String>,
    /// Spine length.
    #[arg(long)]
    n: Option<u32>,
    /// Sleep rate.
    #[arg(long)]
    lambda: Option<f64>,
    /// Initial configuration: ones or empty.
    #[arg(long)]
    init: Option<String>,
    /// Scheduling policy: fifo, lifo, or random.
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Args, Debug)]
struct StationaryOpts {
    /// Graph family: comb or interval.
    #[arg(long)]
    graph: Option<String>,
    /// Spine length.
    #[arg(long)]
    n: Option<u32>,
    /// Sleep rate.
    #[arg(long)]
    lambda: Option<f64>,
    /// Independent replicas.
    #[arg(long)]
    replicas: Option<u32>,
}

#[derive(Args, Debug)]
struct DriveOpts {
    /// Graph family: comb or interval.
    #[arg(long)]
    graph: Option<String>,
    /// Spine length.
    #[arg(long)]
    n: Option<u32>,
    /// Sleep rate.
    #[arg(long)]
    lambda: Option<f64>,
    /// Particles to add (one stabilization each).
    #[arg(long)]
    steps: Option<u32>,
    /// Drive a fixed spine site instead of uniformly random interior sites.
    #[arg(long)]
    site: Option<u32>,
    /// Scheduling policy: fifo, lifo, or random.
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Args, Debug)]
struct LayerOpts {
    /// Shape law: nu1, domino, interval, comb, or comb-d3.
    #[arg(long)]
    law: Option<String>,
    /// Sleep rate for the laws that take one.
    #[arg(long)]
    lambda: Option<f64>,
    /// Growth steps per replica.
    #[arg(long)]
    k: Option<u32>,
    /// Independent replicas.
    #[arg(long)]
    replicas: Option<u32>,
}

#[derive(Args, Debug)]
struct RhoOpts {
    /// Shape law: nu1, domino, interval, comb, or comb-d3.
    #[arg(long)]
    law: Option<String>,
    /// Sleep rate for the laws that take one.
    #[arg(long)]
    lambda: Option<f64>,
    /// Growth steps.
    #[arg(long)]
    k: Option<u32>,
    /// Independent replicas.
    #[arg(long)]
    replicas: Option<u32>,
}

#[derive(Args, Debug)]
struct ParseShapesOpts {
    /// Spine length.
    #[arg(long)]
    n: Option<u32>,
    /// Sleep rate.
    #[arg(long)]
    lambda: Option<f64>,
    /// Slots to parse per spine site.
    #[arg(long)]
    slots: Option<usize>,
    /// Boundary flux at the left sink (defaults to the realized value of a
    /// stabilization from the all-active start).
    #[arg(long)]
    f0: Option<i64>,
}

#[derive(Args, Debug)]
struct VerifyOdometerOpts {
    /// Spine length.
    #[arg(long)]
    n: Option<u32>,
    /// Sleep rate.
    #[arg(long)]
    lambda: Option<f64>,
    /// Scheduling policy: fifo, lifo, or random.
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Args, Debug)]
struct BoundsOpts {
    /// Sleep rate.
    #[arg(long)]
    lambda: Option<f64>,
    /// Truncation point of the lower-estimate series.
    #[arg(long)]
    k_max: Option<u32>,
    /// Replicas behind the lower estimate.
    #[arg(long)]
    lower_replicas: Option<u32>,
    /// Spine length of the direct comb estimate.
    #[arg(long)]
    direct_n: Option<u32>,
    /// Replicas behind the direct estimate.
    #[arg(long)]
    direct_replicas: Option<u32>,
    /// Interval length of the upper estimate.
    #[arg(long)]
    upper_n: Option<u32>,
    /// Replicas behind the upper estimate.
    #[arg(long)]
    upper_replicas: Option<u32>,
}

#[derive(Args, Debug)]
struct Fig2Opts {
    /// Comma-separated lambda grid.
    #[arg(long)]
    lambdas: Option<String>,
    /// Spine length.
    #[arg(long)]
    n: Option<u32>,
    /// Replicas per grid point and graph.
    #[arg(long)]
    replicas: Option<u32>,
}

#[derive(Args, Debug)]
struct Fig3Opts {
    /// Sleep rate.
    #[arg(long)]
    lambda: Option<f64>,
    /// Spine length.
    #[arg(long)]
    n: Option<u32>,
    /// Particles to add (one stabilization each).
    #[arg(long)]
    steps: Option<u32>,
}

#[derive(Args, Debug)]
struct CoupleTestOpts {
    /// Sleep rate.
    #[arg(long)]
    lambda: Option<f64>,
    /// Coupled shape pairs to draw.
    #[arg(long)]
    samples: Option<u32>,
}

/// Parsed key=value defaults.
#[derive(Debug, Default)]
struct Settings {
    map: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path)?;
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::InvalidParameter(format!(
                    "config line {}: expected key=value, got {line:?}",
                    i + 1
                )));
            };
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Settings { map })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }
}

/// Flag value if given, else the config entry, else the default.
fn resolve<T>(flag: Option<T>, cfg: &Settings, key: &str, default: T) -> Result<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    if let Some(v) = flag {
        return Ok(v);
    }
    match cfg.raw(key) {
        Some(s) => s
            .parse::<T>()
            .map_err(|e| Error::InvalidParameter(format!("config key {key}={s}: {e}"))),
        None => Ok(default),
    }
}

/// Like [`resolve`] for parameters without a default.
fn resolve_opt<T>(flag: Option<T>, cfg: &Settings, key: &str) -> Result<Option<T>>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    if flag.is_some() {
        return Ok(flag);
    }
    match cfg.raw(key) {
        Some(s) => s
            .parse::<T>()
            .map(Some)
            .map_err(|e| Error::InvalidParameter(format!("config key {key}={s}: {e}"))),
        None => Ok(None),
    }
}

/// Resolved global knobs shared by every subcommand.
struct Globals {
    seed: u64,
    budget: u64,
    cell_cap: u64,
    guard: i64,
}

fn parse_graph(name: &str, n: u32) -> Result<Graph> {
    if n == 0 {
        return Err(Error::InvalidParameter("the spine length n must be positive".into()));
    }
    match name {
        "comb" => Ok(Graph::Comb { n }),
        "interval" => Ok(Graph::Interval { n }),
        other => Err(Error::InvalidParameter(format!(
            "unknown graph {other:?} (expected comb or interval)"
        ))),
    }
}

fn parse_policy(name: &str, seed: u64) -> Result<Policy> {
    match name {
        "fifo" => Ok(Policy::Fifo),
        "lifo" => Ok(Policy::Lifo),
        "random" => Ok(Policy::Random { seed: mix64(seed ^ mix64(0x9011C9)) }),
        other => Err(Error::InvalidParameter(format!(
            "unknown policy {other:?} (expected fifo, lifo, or random)"
        ))),
    }
}

fn parse_lambda_grid(text: &str) -> Result<Vec<f64>> {
    let mut grid = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let v: f64 = part.parse().map_err(|e| {
            Error::InvalidParameter(format!("bad lambda {part:?} in the grid: {e}"))
        })?;
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda grid entries must be positive, got {part}"
            )));
        }
        grid.push(v);
    }
    if grid.is_empty() {
        return Err(Error::InvalidParameter("the lambda grid must be nonempty".into()));
    }
    Ok(grid)
}

/// Attach the provenance record to a JSON object and render it.
fn finish_json(
    command: &str,
    mut value: serde_json::Value,
    seed: u64,
    params: &[(&str, String)],
) -> (String, Provenance) {
    let prov = Provenance::new(command, seed, params);
    value
        .as_object_mut()
        .expect("reports are JSON objects")
        .insert("provenance".into(), serde_json::to_value(&prov).expect("provenance serializes"));
    (emit_json(&value), prov)
}

/// Entry point used by `main` and by in-process tests. Returns the process
/// exit code; the report body goes to `--out` or to `stdout`.
pub fn run<W: Write>(args: &[String], stdout: &mut W) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute<W: Write>(cli: Cli, stdout: &mut W) -> Result<()> {
    let settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let seed = resolve(cli.seed, &settings, "seed", DEFAULT_SEED)?;
    let budget = resolve(cli.budget, &settings, "budget", DEFAULT_BUDGET)?;
    let cell_cap = resolve(cli.cell_cap, &settings, "cell-cap", DEFAULT_CELL_CAP as u64)?;
    let guard = resolve(cli.guard, &settings, "guard", DEFAULT_SCAN_GUARD)?;
    let threads = resolve(cli.threads, &settings, "threads", 0usize)?;
    if threads > 0 {
        // Replica aggregation is order-deterministic, so the pool size only
        // affects wall time; a failure to install (pool already built) is
        // harmless.
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().ok();
    }
    let out = resolve_opt(cli.out, &settings, "out")?;
    let globals = Globals { seed, budget, cell_cap, guard };
    let (body, prov) = match cli.cmd {
        Cmd::Stabilize(o) => cmd_stabilize(o, &settings, &globals)?,
        Cmd::Stationary(o) => cmd_stationary(o, &settings, &globals)?,
        Cmd::Drive(o) => cmd_drive(o, &settings, &globals)?,
        Cmd::Layer(o) => cmd_layer(o, &settings, &globals)?,
        Cmd::Rho(o) => cmd_rho(o, &settings, &globals)?,
        Cmd::ParseShapes(o) => cmd_parse_shapes(o, &settings, &globals)?,
        Cmd::VerifyOdometer(o) => cmd_verify_odometer(o, &settings, &globals)?,
        Cmd::Bounds(o) => cmd_bounds(o, &settings, &globals)?,
        Cmd::Fig2(o) => cmd_fig2(o, &settings, &globals)?,
        Cmd::Fig3(o) => cmd_fig3(o, &settings, &globals)?,
        Cmd::CoupleTest(o) => cmd_couple_test(o, &settings, &globals)?,
    };
    match out {
        Some(path) => {
            std::fs::write(&path, &body)?;
            let meta = PathBuf::from(format!("{}.meta.json", path.display()));
            let prov_json =
                emit_json(&serde_json::to_value(&prov).expect("provenance serializes"));
            std::fs::write(meta, prov_json)?;
        }
        None => {
            stdout.write_all(body.as_bytes())?;
            eprintln!("{}", serde_json::to_string(&prov).expect("provenance serializes"));
        }
    }
    Ok(())
}

fn cmd_stabilize(
    o: StabilizeOpts,
    cfg: &Settings,
    g: &Globals,
) -> Result<(String, Provenance)> {
    let graph_name = resolve(o.graph, cfg, "graph", "comb".to_string())?;
    let n = resolve(o.n, cfg, "n", 10u32)?;
    let lambda = resolve(o.lambda, cfg, "lambda", 1.0f64)?;
    let init = resolve(o.init, cfg, "init", "ones".to_string())?;
    let policy_name = resolve(o.policy, cfg, "policy", "fifo".to_string())?;
    let graph = parse_graph(&graph_name, n)?;
    let policy = parse_policy(&policy_name, g.seed)?;
    let config = match init.as_str() {
        "ones" => Configuration::ones(graph),
        "empty" => Configuration::empty(graph),
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown init {other:?} (expected ones or empty)"
            )))
        }
    };
    let src = SeededStacks::new(graph, lambda, mix64(g.seed ^ mix64(0xC11_57AB)))?;
    let res = arw::stabilize(&config, &src, policy, g.budget)?;
    let value = json!({
        "graph": graph_name,
        "n": n,
        "lambda": lambda,
        "init": init,
        "policy": policy_name,
        "executed": res.executed,
        "absorbed_left": res.absorbed_left,
        "absorbed_right": res.absorbed_right,
        "particles_remaining": res.config.particle_count(),
        "sleepers": {
            "spine": res.config.spine_sleepers(),
            "teeth": res.config.tooth_sleepers(),
            "total": res.config.total_sleepers(),
        },
        "odometer_max": res.odometer.max_value(),
        "odometer_total": res.odometer.total(),
    });
    let params = [
        ("graph", graph_name.clone()),
        ("n", n.to_string()),
        ("lambda", lambda.to_string()),
        ("init", init.clone()),
        ("policy", policy_name.clone()),
        ("budget", g.budget.to_string()),
    ];
    Ok(finish_json("stabilize", value, g.seed, &params))
}

fn cmd_stationary(
    o: StationaryOpts,
    cfg: &Settings,
    g: &Globals,
) -> Result<(String, Provenance)> {
    let graph_name = resolve(o.graph, cfg, "graph", "comb".to_string())?;
    let n = resolve(o.n, cfg, "n", 250u32)?;
    let lambda = resolve(o.lambda, cfg, "lambda", 1.0f64)?;
    let replicas = resolve(o.replicas, cfg, "replicas", 100u32)?;
    let graph = parse_graph(&graph_name, n)?;
    let densities = bounds::stationary_densities(graph, lambda, replicas, g.seed, g.budget)?;
    let value = json!({
        "graph": graph_name,
        "n": n,
        "lambda": lambda,
        "replicas": replicas,
        "densities": serde_json::to_value(densities).expect("densities serialize"),
    });
    let params = [
        ("graph", graph_name.clone()),
        ("n", n.to_string()),
        ("lambda", lambda.to_string()),
        ("replicas", replicas.to_string()),
        ("budget", g.budget.to_string()),
    ];
    Ok(finish_json("stationary", value, g.seed, &params))
}

fn cmd_drive(o: DriveOpts, cfg: &Settings, g: &Globals) -> Result<(String, Provenance)> {
    let graph_name = resolve(o.graph, cfg, "graph", "comb".to_string())?;
    let n = resolve(o.n, cfg, "n", 500u32)?;
    let lambda = resolve(o.lambda, cfg, "lambda", 1.0f64)?;
    let steps = resolve(o.steps, cfg, "steps", 1000u32)?;
    let site = resolve_opt(o.site, cfg, "site")?;
    let policy_name = resolve(o.policy, cfg, "policy", "fifo".to_string())?;
    let graph = parse_graph(&graph_name, n)?;
    let policy = parse_policy(&policy_name, g.seed)?;
    let driving = match site {
        Some(v) => Driving::Fixed(SiteId::spine(v)),
        None => Driving::Uniform,
    };
    let src = SeededStacks::new(graph, lambda, mix64(g.seed ^ mix64(0xD91E)))?;
    let (trace, _) =
        arw::drive_dissipate(&src, steps, driving, policy, g.budget, mix64(g.seed ^ mix64(0xD91F)))?;
    let mut csv = Csv::new(&["step", "S", "T", "B"]);
    for (i, s) in trace.steps.iter().enumerate() {
        csv.row([
            (i + 1).to_string(),
            s.total.to_string(),
            s.teeth.to_string(),
            s.spine.to_string(),
        ]);
    }
    let mut params = vec![
        ("graph", graph_name.clone()),
        ("n", n.to_string()),
        ("lambda", lambda.to_string()),
        ("steps", steps.to_string()),
        ("policy", policy_name.clone()),
        ("budget", g.budget.to_string()),
    ];
    if let Some(v) = site {
        params.push(("site", v.to_string()));
    }
    Ok((csv.into_string(), Provenance::new("drive", g.seed, &params)))
}

fn cmd_layer(o: LayerOpts, cfg: &Settings, g: &Globals) -> Result<(String, Provenance)> {
    let law_name = resolve(o.law, cfg, "law", "nu1".to_string())?;
    let lambda = resolve_opt(o.lambda, cfg, "lambda")?;
    let k = resolve(o.k, cfg, "k", 10u32)?;
    let replicas = resolve(o.replicas, cfg, "replicas", 100u32)?;
    if k == 0 || replicas == 0 {
        return Err(Error::InvalidParameter("k and replicas must be positive".into()));
    }
    let law = ShapeLaw::from_cli(&law_name, lambda)?;
    let traces: Vec<Vec<u32>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let rs = mix64(g.seed ^ mix64(0x1A6E_0000 ^ r as u64));
            let mut proc = InfectionProcess::new(law, rs, false, g.cell_cap);
            let mut xs = Vec::with_capacity(k as usize);
            for _ in 1..=k {
                proc.step()?;
                xs.push(proc.max_height());
            }
            Ok(xs)
        })
        .collect::<Result<_>>()?;
    let mut csv = Csv::new(&["k", "replica", "x_k"]);
    for (r, xs) in traces.iter().enumerate() {
        for (i, x) in xs.iter().enumerate() {
            csv.row([(i + 1).to_string(), r.to_string(), x.to_string()]);
        }
    }
    let mut params = vec![
        ("law", law_name.clone()),
        ("k", k.to_string()),
        ("replicas", replicas.to_string()),
        ("cell-cap", g.cell_cap.to_string()),
    ];
    if let Some(l) = lambda {
        params.push(("lambda", l.to_string()));
    }
    Ok((csv.into_string(), Provenance::new("layer", g.seed, &params)))
}

fn cmd_rho(o: RhoOpts, cfg: &Settings, g: &Globals) -> Result<(String, Provenance)> {
    let law_name = resolve(o.law, cfg, "law", "nu1".to_string())?;
    let lambda = resolve_opt(o.lambda, cfg, "lambda")?;
    let k = resolve(o.k, cfg, "k", 10u32)?;
    let replicas = resolve(o.replicas, cfg, "replicas", 1000u32)?;
    let law = ShapeLaw::from_cli(&law_name, lambda)?;
    let est = perc::rho_k(law, k, replicas, g.seed, g.cell_cap)?;
    let body = format!("{}\n", fmt_trim(est.mean));
    let mut params = vec![
        ("law", law_name.clone()),
        ("k", k.to_string()),
        ("replicas", replicas.to_string()),
        ("mean", fmt_sig10(est.mean)),
        ("se", fmt_sig10(est.se)),
        ("exact", est.exact.to_string()),
    ];
    if let Some(l) = lambda {
        params.push(("lambda", l.to_string()));
    }
    Ok((body, Provenance::new("rho", g.seed, &params)))
}

fn cmd_parse_shapes(
    o: ParseShapesOpts,
    cfg: &Settings,
    g: &Globals,
) -> Result<(String, Provenance)> {
    let n = resolve(o.n, cfg, "n", 3u32)?;
    let lambda = resolve(o.lambda, cfg, "lambda", 1.0f64)?;
    let slots = resolve(o.slots, cfg, "slots", 4usize)?;
    let f0_flag = resolve_opt(o.f0, cfg, "f0")?;
    let graph = parse_graph("comb", n)?;
    let src = SeededStacks::new(graph, lambda, mix64(g.seed ^ mix64(0xBA5E)))?;
    let sigma = Configuration::ones(graph);
    let f0 = match f0_flag {
        Some(v) => v,
        None => {
            let res = arw::stabilize(&sigma, &src, Policy::Fifo, g.budget)?;
            -(res.absorbed_left as i64)
        }
    };
    let minimal = bridge::minimal_odometer(&src, &sigma, f0, g.guard)?;
    let parsed = bridge::parse_comb(&src, &minimal, slots, g.guard)?;
    let mut body = String::new();
    for site in &parsed {
        body.push_str(&site.render_listing());
        body.push('\n');
    }
    let params = [
        ("n", n.to_string()),
        ("lambda", lambda.to_string()),
        ("slots", slots.to_string()),
        ("f0", f0.to_string()),
        ("guard", g.guard.to_string()),
    ];
    Ok((body, Provenance::new("parse-shapes", g.seed, &params)))
}

fn cmd_verify_odometer(
    o: VerifyOdometerOpts,
    cfg: &Settings,
    g: &Globals,
) -> Result<(String, Provenance)> {
    let n = resolve(o.n, cfg, "n", 6u32)?;
    let lambda = resolve(o.lambda, cfg, "lambda", 1.0f64)?;
    let policy_name = resolve(o.policy, cfg, "policy", "fifo".to_string())?;
    let graph = parse_graph("comb", n)?;
    let policy = parse_policy(&policy_name, g.seed)?;
    let src = SeededStacks::new(graph, lambda, mix64(g.seed ^ mix64(0x7E81F)))?;
    let sigma = Configuration::ones(graph);
    let res = arw::stabilize(&sigma, &src, policy, g.budget)?;
    let f0 = -(res.absorbed_left as i64);
    let report = bridge::verify_stable(&src, &sigma, f0, &res.odometer);
    let stable = report.stable();
    let violations: Vec<serde_json::Value> = report
        .violations
        .iter()
        .map(|v| {
            json!({
                "site": v.site.map(|s| s.to_string()),
                "message": v.message,
            })
        })
        .collect();
    let (path_length, round_trip) = match bridge::phi(&src, &sigma, f0, &res.odometer, g.guard) {
        Ok(path) => {
            let minimal = bridge::minimal_odometer(&src, &sigma, f0, g.guard)?;
            let anchors_ok =
                (1..=n).all(|v| minimal.anchors.get(SiteId::spine(v)) >= 0);
            if anchors_ok {
                let verdict = match bridge::odometer_from_path(&src, &sigma, f0, &path, g.guard) {
                    Ok(u2) => {
                        let stable2 = bridge::verify_stable(&src, &sigma, f0, &u2).stable();
                        match bridge::phi(&src, &sigma, f0, &u2, g.guard) {
                            Ok(back) if stable2 && back == path => "ok".to_string(),
                            Ok(_) if stable2 => "failed: path mismatch".to_string(),
                            Ok(_) => "failed: unstable preimage".to_string(),
                            Err(e) => format!("failed: {e}"),
                        }
                    }
                    Err(e) => format!("failed: {e}"),
                };
                (path.cells.len(), verdict)
            } else {
                (path.cells.len(), "skipped: negative minimal-odometer anchors".to_string())
            }
        }
        Err(e) => (0, format!("failed: {e}")),
    };
    let value = json!({
        "n": n,
        "lambda": lambda,
        "policy": policy_name,
        "f0": f0,
        "stable": stable,
        "violations": violations,
        "path_length": path_length,
        "round_trip": round_trip,
    });
    let params = [
        ("n", n.to_string()),
        ("lambda", lambda.to_string()),
        ("policy", policy_name.clone()),
        ("guard", g.guard.to_string()),
    ];
    Ok(finish_json("verify-odometer", value, g.seed, &params))
}

fn cmd_bounds(o: BoundsOpts, cfg: &Settings, g: &Globals) -> Result<(String, Provenance)> {
    let lambda = resolve(o.lambda, cfg, "lambda", 1.0f64)?;
    let defaults = SandwichParams::default();
    let params = SandwichParams {
        k_max: resolve(o.k_max, cfg, "k-max", defaults.k_max)?,
        lower_replicas: resolve(o.lower_replicas, cfg, "lower-replicas", defaults.lower_replicas)?,
        direct_n: resolve(o.direct_n, cfg, "direct-n", defaults.direct_n)?,
        direct_replicas: resolve(
            o.direct_replicas,
            cfg,
            "direct-replicas",
            defaults.direct_replicas,
        )?,
        upper_n: resolve(o.upper_n, cfg, "upper-n", defaults.upper_n)?,
        upper_replicas: resolve(o.upper_replicas, cfg, "upper-replicas", defaults.upper_replicas)?,
    };
    let report = bounds::sandwich(lambda, params, g.seed, g.budget, g.cell_cap)?;
    let value = serde_json::to_value(&report).expect("bound reports serialize");
    let prov_params = [
        ("lambda", lambda.to_string()),
        ("k-max", params.k_max.to_string()),
        ("lower-replicas", params.lower_replicas.to_string()),
        ("direct-n", params.direct_n.to_string()),
        ("direct-replicas", params.direct_replicas.to_string()),
        ("upper-n", params.upper_n.to_string()),
        ("upper-replicas", params.upper_replicas.to_string()),
        ("budget", g.budget.to_string()),
        ("cell-cap", g.cell_cap.to_string()),
    ];
    Ok(finish_json("bounds", value, g.seed, &prov_params))
}

fn cmd_fig2(o: Fig2Opts, cfg: &Settings, g: &Globals) -> Result<(String, Provenance)> {
    let grid_text =
        resolve(o.lambdas, cfg, "lambdas", "0.25,0.5,0.75,1,1.5,2".to_string())?;
    let n = resolve(o.n, cfg, "n", 250u32)?;
    let replicas = resolve(o.replicas, cfg, "replicas", 40u32)?;
    let grid = parse_lambda_grid(&grid_text)?;
    let rows = bounds::fig2_experiment(&grid, n, replicas, g.seed, g.budget)?;
    let mut csv = Csv::new(&[
        "lambda",
        "teeth",
        "teeth_se",
        "spine",
        "spine_se",
        "interval",
        "interval_se",
    ]);
    for row in &rows {
        csv.row([
            fmt_trim(row.lambda),
            fmt_sig10(row.teeth),
            fmt_sig10(row.teeth_se),
            fmt_sig10(row.spine),
            fmt_sig10(row.spine_se),
            fmt_sig10(row.interval),
            fmt_sig10(row.interval_se),
        ]);
    }
    let params = [
        ("lambdas", grid_text.clone()),
        ("n", n.to_string()),
        ("replicas", replicas.to_string()),
        ("budget", g.budget.to_string()),
    ];
    Ok((csv.into_string(), Provenance::new("fig2", g.seed, &params)))
}

fn cmd_fig3(o: Fig3Opts, cfg: &Settings, g: &Globals) -> Result<(String, Provenance)> {
    let lambda = resolve(o.lambda, cfg, "lambda", 0.8f64)?;
    let n = resolve(o.n, cfg, "n", 500u32)?;
    let steps = resolve(o.steps, cfg, "steps", 2000u32)?;
    let trace = bounds::fig3_experiment(lambda, n, steps, g.seed, g.budget)?;
    let nf = n as f64;
    let mut csv = Csv::new(&["step", "spine_density", "tooth_density", "avg_density"]);
    for (i, s) in trace.steps.iter().enumerate() {
        csv.row([
            (i + 1).to_string(),
            fmt_sig10(s.spine as f64 / nf),
            fmt_sig10(s.teeth as f64 / nf),
            fmt_sig10(s.total as f64 / (2.0 * nf)),
        ]);
    }
    let params = [
        ("lambda", lambda.to_string()),
        ("n", n.to_string()),
        ("steps", steps.to_string()),
        ("budget", g.budget.to_string()),
    ];
    Ok((csv.into_string(), Provenance::new("fig3", g.seed, &params)))
}

fn cmd_couple_test(
    o: CoupleTestOpts,
    cfg: &Settings,
    g: &Globals,
) -> Result<(String, Provenance)> {
    let lambda = resolve(o.lambda, cfg, "lambda", 1.0f64)?;
    let samples = resolve(o.samples, cfg, "samples", 100_000u32)?;
    let report = bounds::coupling_stats(lambda, samples, g.seed)?;
    let value = serde_json::to_value(&report).expect("coupling reports serialize");
    let params = [("lambda", lambda.to_string()), ("samples", samples.to_string())];
    Ok(finish_json("couple-test", value, g.seed, &params))
}

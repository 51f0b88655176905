//! Command-line front end.
//!
//! Exit status: 0 on success, 1 on usage or configuration errors, 2 on
//! numerical or connectivity failures.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::config::{ConfigFile, PointSource, SCHEMA_HINT};
use crate::curve::{self, ParametricCurve};
use crate::error::{Error, ErrorCategory, Result};
use crate::inference::{self, TestOutcome};
use crate::io;
use crate::manifold::{self, GraphRule, SandwichReport};
use crate::montecarlo::{self, Arm, PowerExperiment, PowerReport};
use crate::rdpg;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "RDPG_ISOMAP_OUT";

const SIMULATE_KEYS: &str = "\
Config keys read:
  schema_version, seed
  [model]    curve, coefficients, community_size, auxiliary_count, tau_null, tau_alt,
             community, auxiliary
  [simulate] arm, index
Writes latent.csv, edges.csv, adjacency.bin, simulate.json";

const ASE_KEYS: &str = "\
Config keys read:
  schema_version, seed
  [ase]      adjacency, rank, align
  [model]    curve, coefficients, community_size, auxiliary_count, tau_null, tau_alt,
             community, auxiliary (only when simulating)
  [simulate] arm, index (only when simulating)
Writes embedding.csv, ase.json";

const ISOMAP_KEYS: &str = "\
Config keys read:
  schema_version, seed
  [isomap]   source, graph, largest_component
  [model]    curve, coefficients (only for source kind = \"curve\")
  [embed]    max_iters, tol
Writes distances.csv, line.csv, isomap.json";

const TEST_KEYS: &str = "\
Config keys read:
  schema_version, seed
  [model]    curve, coefficients, community_size, auxiliary_count, tau_null, tau_alt,
             community, auxiliary
  [test]     alpha, radius, metric, largest_component, arm, index
  [embed]    max_iters, tol
Writes test.json";

const POWER_KEYS: &str = "\
Config keys read:
  schema_version, seed
  [model]    curve, coefficients, community_size, auxiliary_count, tau_null, tau_alt,
             community, auxiliary
  [test]     alpha, radius, metric, largest_component
  [embed]    max_iters, tol
  [power]    replicates
Writes power.json, replicates.csv";

const CONVERGE_KEYS: &str = "\
Config keys read:
  schema_version, seed
  [model]    curve, coefficients, community_size, tau_null, tau_alt, community, auxiliary
  [test]     alpha, radius, metric, largest_component
  [embed]    max_iters, tol
  [power]    replicates
  [converge] m_values (replaces [model] auxiliary_count)
Writes converge.csv, converge.json";

#[derive(Debug, Parser)]
#[command(name = "rdpg-isomap", version, about = "Manifold-restricted inference on random dot product graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory [default: $RDPG_ISOMAP_OUT, else ./out].
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Overrides the `seed` key of the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
    /// Worker threads [default: available cores].
    #[arg(long)]
    threads: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample latent positions on the curve and a graph from them.
    #[command(after_help = SIMULATE_KEYS)]
    Simulate(Common),
    /// Adjacency spectral embedding of a given or simulated graph.
    #[command(after_help = ASE_KEYS)]
    Ase(Common),
    /// Localization graph, shortest paths and one-dimensional embedding of a point set.
    #[command(after_help = ISOMAP_KEYS)]
    Isomap(Common),
    /// The three test statistics on one simulated replicate.
    #[command(after_help = TEST_KEYS)]
    Test(Common),
    /// Monte Carlo power experiment.
    #[command(after_help = POWER_KEYS)]
    Power(Common),
    /// Power gap between the learnt- and true-manifold tests as the auxiliary count grows.
    #[command(after_help = CONVERGE_KEYS)]
    Converge(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c)
            | Command::Ase(c)
            | Command::Isomap(c)
            | Command::Test(c)
            | Command::Power(c)
            | Command::Converge(c) => c,
        }
    }

    fn outputs(&self) -> &'static [&'static str] {
        match self {
            Command::Simulate(_) => &["latent.csv", "edges.csv", "adjacency.bin", "simulate.json"],
            Command::Ase(_) => &["embedding.csv", "ase.json"],
            Command::Isomap(_) => &["distances.csv", "line.csv", "isomap.json"],
            Command::Test(_) => &["test.json"],
            Command::Power(_) => &["power.json", "replicates.csv"],
            Command::Converge(_) => &["converge.csv", "converge.json"],
        }
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let common = cli.command.common();
    let level = match common.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e.category() {
                ErrorCategory::Usage => 1,
                ErrorCategory::Numerical => 2,
            }
        }
    }
}

struct Context {
    cfg: ConfigFile,
    out: PathBuf,
}

impl Context {
    fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        fs::write(self.out.join(name), bytes)?;
        Ok(())
    }

    fn write_with(&self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, buf)
    }
}

fn execute(command: &Command) -> Result<()> {
    let common = command.common();
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Config(format!("missing --config <FILE>\n{SCHEMA_HINT}")))?;
    let mut cfg = ConfigFile::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    prepare_output(&out, command.outputs(), common.force)?;
    let ctx = Context { cfg, out };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Argument(format!("cannot start worker threads: {e}")))?;
    pool.install(|| match command {
        Command::Simulate(_) => simulate(&ctx),
        Command::Ase(_) => ase(&ctx),
        Command::Isomap(_) => isomap(&ctx),
        Command::Test(_) => test(&ctx),
        Command::Power(_) => power(&ctx),
        Command::Converge(_) => converge(&ctx),
    })
}

fn prepare_output(dir: &Path, files: &[&str], force: bool) -> Result<()> {
    if !force {
        if let Some(existing) = files.iter().map(|f| dir.join(f)).find(|p| p.exists()) {
            return Err(Error::Argument(format!(
                "{} already exists; pass --force to overwrite",
                existing.display()
            )));
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

#[derive(Serialize)]
struct SimulateSummary {
    seed: u64,
    arm: Arm,
    index: usize,
    vertices: usize,
    community_size: usize,
    edges: usize,
}

fn simulate(ctx: &Context) -> Result<()> {
    let exp = PowerExperiment::new(ctx.cfg.power_config()?)?;
    let sim = &ctx.cfg.simulate;
    let (x, mut rng) = exp.latent(sim.arm, sim.index)?;
    let a = rdpg::sample_adjacency(&x, &mut rng)?;
    ctx.write_with("latent.csv", |b| io::write_coordinates(x.positions(), b))?;
    ctx.write_with("edges.csv", |b| io::write_edge_list(&a, b))?;
    ctx.write("adjacency.bin", io::adjacency_to_bitset(&a))?;
    let summary = SimulateSummary {
        seed: ctx.cfg.seed,
        arm: sim.arm,
        index: sim.index,
        vertices: x.n(),
        community_size: x.community_size(),
        edges: a.edge_count(),
    };
    ctx.write("simulate.json", io::to_json(&summary)?)?;
    println!("simulated {} vertices, {} edges", x.n(), a.edge_count());
    Ok(())
}

#[derive(Serialize)]
struct AseSummary {
    vertices: usize,
    rank: usize,
    eigenvalues: Vec<f64>,
    aligned: bool,
}

fn ase(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let (a, truth) = match &cfg.ase.adjacency {
        Some(path) => (io::read_edge_list(fs::File::open(path)?, None)?, None),
        None => {
            let exp = PowerExperiment::new(cfg.power_config()?)?;
            let (x, mut rng) = exp.latent(cfg.simulate.arm, cfg.simulate.index)?;
            (rdpg::sample_adjacency(&x, &mut rng)?, Some(x))
        }
    };
    let rank = match cfg.ase.rank {
        Some(r) => r,
        None => cfg.power_config()?.curve.build()?.dim(),
    };
    let emb = rdpg::ase_adjacency(&a, rank)?;
    let (coords, aligned) = match (&truth, cfg.ase.align) {
        (Some(x), true) => {
            if x.dim() != rank {
                return Err(Error::Config("alignment needs rank equal to the curve dimension".into()));
            }
            let fit = rdpg::procrustes_align(&emb.embedding, x.positions())?;
            (fit.apply(&emb.embedding), true)
        }
        (None, true) => return Err(Error::Config("`align` needs a simulated graph".into())),
        _ => (emb.embedding.clone(), false),
    };
    ctx.write_with("embedding.csv", |b| io::write_coordinates(&coords, b))?;
    let summary = AseSummary {
        vertices: a.n(),
        rank,
        eigenvalues: emb.eigenvalues.clone(),
        aligned,
    };
    ctx.write("ase.json", io::to_json(&summary)?)?;
    println!("embedded {} vertices in dimension {rank}", a.n());
    Ok(())
}

#[derive(Serialize)]
struct IsomapSummary {
    vertices: usize,
    rule: GraphRule,
    edges: usize,
    /// Vertices kept in the embedding.
    kept: usize,
    stress: f64,
    iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    sandwich: Option<SandwichReport>,
}

/// Points with their arc-length positions when they lie on a known curve.
fn isomap_points(ctx: &Context) -> Result<(DMatrix<f64>, Option<(f64, Vec<f64>)>)> {
    match &ctx.cfg.isomap.source {
        PointSource::Csv { path } => Ok((io::read_coordinates(fs::File::open(path)?)?, None)),
        PointSource::Segment { start, end, samples } => {
            if *samples < 2 {
                return Err(Error::Config("segment needs at least 2 samples".into()));
            }
            let c = ParametricCurve::segment(start, end)?;
            let taus: Vec<f64> = (0..*samples).map(|i| i as f64 / (*samples - 1) as f64).collect();
            on_curve(&c, &taus)
        }
        PointSource::Curve { samples } => {
            let c = ctx.cfg.curve_spec()?.build()?;
            let mut rng = montecarlo::replicate_rng(ctx.cfg.seed, Arm::Null, 0);
            let taus: Vec<f64> = (0..*samples).map(|_| rng.gen::<f64>()).collect();
            on_curve(&c, &taus)
        }
    }
}

fn on_curve(c: &ParametricCurve, taus: &[f64]) -> Result<(DMatrix<f64>, Option<(f64, Vec<f64>)>)> {
    let mut points = DMatrix::zeros(taus.len(), c.dim());
    let mut t = Vec::with_capacity(taus.len());
    for (i, &tau) in taus.iter().enumerate() {
        points.row_mut(i).copy_from(&c.evaluate(tau)?.transpose());
        t.push(c.arc_length(0.0, tau)?);
    }
    Ok((points, Some((c.arc_length(0.0, 1.0)?, t))))
}

fn isomap(ctx: &Context) -> Result<()> {
    let section = &ctx.cfg.isomap;
    let (points, arc) = isomap_points(ctx)?;
    let graph = match section.graph {
        GraphRule::Epsilon { radius } => manifold::build_epsilon_graph(&points, radius)?,
        GraphRule::Knn { neighbors } => manifold::build_knn_graph(&points, neighbors)?,
    };
    let n = points.nrows();
    let (delta, kept) = if section.largest_component {
        manifold::shortest_path_matrix_largest_component(&graph)?
    } else {
        (manifold::shortest_path_matrix(&graph)?, (0..n).collect())
    };
    let line = manifold::embed_line(&delta, ctx.cfg.embed.max_iters, ctx.cfg.embed.tol)?;
    let mut z = vec![f64::NAN; n];
    for (pos, &v) in kept.iter().enumerate() {
        z[v] = line.coordinates[pos];
    }
    let sandwich = match (arc, section.graph) {
        (Some((length, t)), GraphRule::Epsilon { radius }) => {
            // the graph radius plays the role of epsilon + 2 delta
            let t: Vec<f64> = kept.iter().map(|&v| t[v]).collect();
            let cover = curve::covering_radius(length, &t)?;
            let epsilon = radius - 2.0 * cover;
            if 2.0 * cover <= epsilon {
                let dm = DMatrix::from_fn(t.len(), t.len(), |i, j| (t[i] - t[j]).abs());
                Some(manifold::sandwich_check(&delta, &dm, cover, epsilon)?)
            } else {
                log::info!("sample too sparse for the sandwich bounds (covering radius {cover})");
                None
            }
        }
        _ => None,
    };
    ctx.write_with("distances.csv", |b| io::write_distances(&delta, b))?;
    ctx.write_with("line.csv", |b| io::write_line_embedding(&z, b))?;
    let summary = IsomapSummary {
        vertices: n,
        rule: section.graph,
        edges: graph.edge_count(),
        kept: kept.len(),
        stress: line.stress,
        iterations: line.iterations,
        sandwich,
    };
    ctx.write("isomap.json", io::to_json(&summary)?)?;
    println!("embedded {} of {n} points, stress {:.3e}", kept.len(), line.stress);
    Ok(())
}

#[derive(Serialize)]
struct TestSummary {
    seed: u64,
    arm: Arm,
    index: usize,
    outcomes: Vec<TestOutcome>,
}

fn test(ctx: &Context) -> Result<()> {
    let cfg = ctx.cfg.power_config()?;
    let exp = PowerExperiment::new(cfg.clone())?;
    let (arm, index) = (ctx.cfg.test.arm, ctx.cfg.test.index);
    let aligned = exp.aligned_estimates(arm, index)?;
    let curve = exp.curve();
    let metric = cfg.metric.build(curve.dim())?;
    let p0 = curve.evaluate(cfg.tau_null)?;
    let s = cfg.community_size;
    let community = aligned.rows(0, s).into_owned();
    let learnt = inference::LearntParams {
        radius: cfg.radius,
        embed: cfg.embed,
        largest_component: cfg.largest_component,
    };
    let outcomes = vec![
        inference::t_unrestricted(&community, &p0, &metric)?,
        inference::t_true_manifold(curve, &community, cfg.tau_null, &metric)?,
        inference::t_learnt_manifold(&p0, &aligned, s, &learnt)?,
    ];
    for o in &outcomes {
        println!("{:?}: {}", o.kind, o.value);
    }
    ctx.write(
        "test.json",
        io::to_json(&TestSummary {
            seed: cfg.seed,
            arm,
            index,
            outcomes,
        })?,
    )
}

fn print_power(report: &PowerReport) {
    let p = &report.power;
    println!(
        "critical values: Tk {:.6}  T1 {:.6}  T1hat {:.6}",
        report.critical.t_k, report.critical.t_1, report.critical.t_1_hat
    );
    println!(
        "power:           Tk {:.3}  T1 {:.3}  T1hat {:.3}  ({} failed replicates, {:.1?})",
        p.t_k.power,
        p.t_1.power,
        p.t_1_hat.power,
        report.failures.len(),
        report.elapsed
    );
}

fn power(ctx: &Context) -> Result<()> {
    let report = montecarlo::run_power_experiment(&ctx.cfg.power_config()?)?;
    ctx.write_with("replicates.csv", |b| io::write_replicates(&report.replicates, b))?;
    ctx.write("power.json", io::to_json(&report)?)?;
    print_power(&report);
    Ok(())
}

#[derive(Serialize)]
struct ConvergeSummary<'a> {
    config: &'a montecarlo::PowerConfig,
    m_values: &'a [usize],
    rows: &'a [montecarlo::ConvergenceRow],
}

fn converge(ctx: &Context) -> Result<()> {
    let cfg = ctx.cfg.power_config()?;
    let m_values = &ctx.cfg.converge.m_values;
    let rows = montecarlo::convergence_study(&cfg, m_values)?;
    ctx.write_with("converge.csv", |b| io::write_convergence(&rows, b))?;
    ctx.write(
        "converge.json",
        io::to_json(&ConvergeSummary {
            config: &cfg,
            m_values,
            rows: &rows,
        })?,
    )?;
    for r in &rows {
        println!("m {:>6}  gap {:.4} (se {:.4})", r.m, r.gap, r.standard_error);
    }
    Ok(())
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use langford::config::ExperimentConfig;
use langford::experiments::{self as ex, PoincareCmd};
use langford::manifest::{verify_digests, RunRecorder};
use langford::parm::Stability;
use langford::poincare::{ManifoldKind, FIXED_POINT_SEED};
use langford::Error;

#[derive(Parser)]
#[command(name = "langford", version, about = "Invariant manifolds and bifurcations of the Langford system")]
struct Cli {
    /// Layered config file (`[section]` headers, `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config entry, e.g. `--set model.alpha=0.9`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory for the run's files and manifest.
    #[arg(long, global = true, default_value = "runs/latest")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Unstable,
    Stable,
}

#[derive(Subcommand)]
enum Command {
    /// Axis equilibria and spectra at one alpha or over a sweep `lo:hi:step`.
    Equilibria {
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Solve, auto-scale and check a 2D manifold chart.
    Chart {
        equilibrium: String,
        stability: Kind,
        #[arg(long = "N")]
        order: Option<usize>,
        #[arg(long)]
        eps0: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
    },
    /// Return-map experiments.
    Poincare {
        #[command(subcommand)]
        cmd: PoincareArgs,
    },
    /// Grow a manifold atlas from a chart file.
    Atlas {
        chart: PathBuf,
        #[arg(long, default_value_t = 10)]
        n_gen: usize,
        #[arg(long)]
        edge_max: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Heteroclinic connections from p0 to p1.
    Hetero {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[command(subcommand)]
        mode: HeteroMode,
    },
    /// Run the whole bifurcation pipeline and write a summary table.
    Repro,
    /// Recompute the digests listed in a run directory's manifest.
    Verify { dir: PathBuf },
}

#[derive(Subcommand)]
enum HeteroMode {
    Scan,
    Solve,
}

#[derive(Subcommand)]
enum PoincareArgs {
    FixedPoint {
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        seed: Option<String>,
    },
    Cycle {
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        seed: Option<String>,
    },
    NsLocate {
        #[arg(long, default_value_t = 0.69)]
        alpha0: f64,
        #[arg(long)]
        seed: Option<String>,
    },
    Circle {
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 2000)]
        transient: usize,
        #[arg(long, default_value_t = 1000)]
        keep: usize,
    },
    Manifold1d {
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        kind: Option<Kind>,
    },
    /// Crossing counts of the saddle cycle's manifolds over an alpha grid.
    Bracket {
        /// Accepted for compatibility; the saddle `k`-cycle's stable and
        /// unstable manifolds are always used.
        #[arg(long)]
        manifolds: Option<String>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
    },
}

fn stability(k: Kind) -> Stability {
    match k {
        Kind::Unstable => Stability::Unstable,
        Kind::Stable => Stability::Stable,
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    if let Command::Verify { dir } = &cli.command {
        let bad = verify_digests(dir)?;
        for b in &bad {
            eprintln!("digest mismatch: {b}");
        }
        return Ok(!bad.is_empty());
    }
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides)?;
    let workers = ex::worker_count(&cfg)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))?;
    let alpha = |a: Option<f64>| a.unwrap_or(cfg.model.alpha);
    let seed = |s: &Option<String>| s.as_deref().map(ex::parse_point).transpose();
    let sweep = match &cli.command {
        Command::Equilibria { sweep: Some(s), .. } => Some(ex::parse_range(s)?),
        _ => None,
    };
    let chart_text = match &cli.command {
        Command::Atlas { chart, .. } => Some(std::fs::read_to_string(chart)?),
        _ => None,
    };
    let pc = match &cli.command {
        Command::Poincare { cmd } => Some(match cmd {
            PoincareArgs::FixedPoint { alpha: a, seed: s } => PoincareCmd::FixedPoint {
                alpha: alpha(*a),
                seed: seed(s)?.unwrap_or(FIXED_POINT_SEED),
            },
            PoincareArgs::Cycle { alpha: a, k, seed: s } => PoincareCmd::Cycle {
                alpha: alpha(*a),
                k: *k,
                seed: seed(s)?,
            },
            PoincareArgs::NsLocate { alpha0, seed: s } => PoincareCmd::NsLocate {
                alpha0: *alpha0,
                seed: seed(s)?.unwrap_or(FIXED_POINT_SEED),
            },
            PoincareArgs::Circle { alpha: a, transient, keep } => PoincareCmd::Circle {
                alpha: alpha(*a),
                transient: *transient,
                keep: *keep,
            },
            PoincareArgs::Manifold1d { alpha: a, k, kind } => PoincareCmd::Manifold1d {
                alpha: alpha(*a),
                k: *k,
                kind: kind.map(|k| match k {
                    Kind::Unstable => ManifoldKind::Unstable,
                    Kind::Stable => ManifoldKind::Stable,
                }),
            },
            PoincareArgs::Bracket { k, alphas, .. } => PoincareCmd::Bracket {
                k: *k,
                alphas: alphas.clone(),
            },
        }),
        _ => None,
    };

    let mut rec = RunRecorder::new(&cli.out, std::env::args().collect(), cfg.to_text())?;
    let negative = match cli.command {
        Command::Equilibria { alpha: a, .. } => ex::cmd_equilibria(&cfg, &mut rec, a, sweep)?,
        Command::Chart {
            equilibrium,
            stability: st,
            order,
            eps0,
            alpha: a,
        } => ex::cmd_chart(
            &cfg,
            &mut rec,
            &equilibrium,
            stability(st),
            order.unwrap_or(cfg.chart_order),
            eps0.unwrap_or(cfg.eps0),
            alpha(a),
        )?,
        Command::Poincare { .. } => ex::cmd_poincare(&cfg, &mut rec, pc.as_ref().expect("parsed"))?,
        Command::Atlas {
            n_gen,
            edge_max,
            tau,
            ..
        } => ex::cmd_atlas(
            &cfg,
            &mut rec,
            chart_text.as_deref().expect("read"),
            n_gen,
            edge_max.unwrap_or(cfg.edge_max),
            tau.unwrap_or(cfg.mesh_tau),
        )?,
        Command::Hetero { alpha: a, mode } => {
            ex::cmd_hetero(&cfg, &mut rec, a, matches!(mode, HeteroMode::Solve))?
        }
        Command::Repro => ex::cmd_repro(&cfg, &mut rec)?,
        Command::Verify { .. } => unreachable!(),
    };
    let manifest = rec.finish(negative)?;
    println!("{}", serde_json::to_string_pretty(&manifest.scalars).unwrap_or_default());
    Ok(negative)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(false) => ExitCode::from(ex::EXIT_OK as u8),
        Ok(true) => ExitCode::from(ex::EXIT_NEGATIVE as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ex::exit_code(&e) as u8)
        }
    }
}

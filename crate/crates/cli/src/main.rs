//! `declab`: experiment runner for the decoupling laboratory.
//!
//! Subcommands: `decouple`, `energy`, `strichartz`, `numerology`, `geometry`,
//! `witness`.  Every flag has a config-file equivalent (`--config`), flags
//! override the file, and identical configs with identical seeds produce
//! byte-identical CSV output regardless of `--workers`.
//!
//! Exit codes: 0 pass, 1 fail verdict, 2 usage error, 3 numeric failure.

mod config;
mod report;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{dyadic_sweep, parse_dyadic, parse_signature, pow2_sweep, FileConfig, Format};

#[derive(Parser)]
#[command(name = "declab", version, about = "Decoupling laboratory experiment runner")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalArgs {
    /// JSON config file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV and JSON reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for randomized audits.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output format for printed tables.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Decoupling-ratio sweep over dyadic scales.
    Decouple(DecoupleArgs),
    /// Additive-energy counts and growth sweeps on the moment-curve lattice.
    Energy(EnergyArgs),
    /// Space-time norm sweeps for the torus evolution.
    Strichartz(StrichartzArgs),
    /// Exact constant tables and critical indices.
    Numerology(NumerologyArgs),
    /// Randomized geometry audit (curvature counts, rescaling exactness).
    Geometry(GeometryArgs),
    /// Interpolation-failure witness sweep.
    Witness(WitnessArgs),
}

#[derive(Args)]
struct DecoupleArgs {
    /// Ambient dimension.
    #[arg(long)]
    n: Option<u32>,
    /// Lebesgue exponent of the ratio.
    #[arg(long)]
    p: Option<f64>,
    /// Signature entries, e.g. "1,-1" (default: all ones).
    #[arg(long)]
    signature: Option<String>,
    /// Flavor: l2, lp, ml2, mlp.
    #[arg(long)]
    flavor: Option<String>,
    /// Finest dyadic scale, e.g. 2^-10 (also accepted: 2e-10).
    #[arg(long = "delta-min")]
    delta_min: Option<String>,
    /// Coarsest dyadic scale (default 2^-2).
    #[arg(long = "delta-max")]
    delta_max: Option<String>,
    /// Sharp example: surface or subspace.
    #[arg(long)]
    example: Option<String>,
    /// Atom spacing as a multiple of delta.
    #[arg(long = "spacing-factor")]
    spacing_factor: Option<f64>,
    /// Grid spacing (default 0.25).
    #[arg(long = "grid-h")]
    grid_h: Option<f64>,
    /// Transversality threshold for multilinear flavors.
    #[arg(long)]
    nu: Option<f64>,
    /// Slope tolerance for the verdict (default 0.12).
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct EnergyArgs {
    /// Moment-curve dimension.
    #[arg(long)]
    n: Option<u32>,
    /// Energy order k.
    #[arg(long)]
    k: Option<u32>,
    /// Lattice model (only "moment").
    #[arg(long)]
    curve: Option<String>,
    /// Single lattice size: print B_k and exit.
    #[arg(long = "N")]
    count: Option<u64>,
    /// Sweep start (power of two).
    #[arg(long = "N-min")]
    n_min: Option<u64>,
    /// Sweep end (power of two).
    #[arg(long = "N-max")]
    n_max: Option<u64>,
    /// Lower verdict bound on the fitted growth exponent.
    #[arg(long = "slope-min")]
    slope_min: Option<f64>,
    /// Upper verdict bound on the fitted growth exponent.
    #[arg(long = "slope-max")]
    slope_max: Option<f64>,
}

#[derive(Args)]
struct StrichartzArgs {
    /// Ambient dimension (spatial dimension + 1).
    #[arg(long)]
    n: Option<u32>,
    /// Signature entries, e.g. "1,-1".
    #[arg(long)]
    signature: Option<String>,
    /// Space-time Lebesgue exponent.
    #[arg(long)]
    p: Option<f64>,
    /// Sweep start (power of two).
    #[arg(long = "N-min")]
    n_min: Option<u64>,
    /// Sweep end (power of two).
    #[arg(long = "N-max")]
    n_max: Option<u64>,
    /// Initial data: subspace or line.
    #[arg(long)]
    data: Option<String>,
    /// Time interval length (>= 1).
    #[arg(long)]
    interval: Option<f64>,
    /// |slope - predicted| tolerance for the verdict (default 0.05).
    #[arg(long)]
    tolerance: Option<f64>,
    /// Verdict passes iff slope <= this bound (overrides --tolerance).
    #[arg(long = "slope-max")]
    slope_max: Option<f64>,
}

#[derive(Args)]
struct NumerologyArgs {
    /// Print the signed critical index for --n/--d and exit.
    #[arg(long)]
    critical: bool,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    d: Option<u32>,
    /// Emit the constant table over the configured grid.
    #[arg(long)]
    table: bool,
    /// Dimensions for the table, e.g. "2,3,4,5".
    #[arg(long)]
    dims: Option<String>,
    /// Exponents for the table, e.g. "4,6,13/2,10".
    #[arg(long = "p-values")]
    p_values: Option<String>,
}

#[derive(Args)]
struct GeometryArgs {
    /// Dimensions to sample, e.g. "3,4,5".
    #[arg(long)]
    dims: Option<String>,
    /// Number of random trials.
    #[arg(long)]
    trials: Option<u32>,
    /// Small-curvature threshold for the audit.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct WitnessArgs {
    /// Ambient dimension (>= 3).
    #[arg(long)]
    n: Option<u32>,
    /// Sweep start (power of two).
    #[arg(long = "N-min")]
    n_min: Option<u64>,
    /// Sweep end (power of two).
    #[arg(long = "N-max")]
    n_max: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            // Parameter and config problems are usage errors (2); anything
            // that got past validation is a numeric failure (3).
            let usage = err
                .chain()
                .any(|cause| cause.downcast_ref::<config::UsageError>().is_some());
            ExitCode::from(if usage { 2 } else { 3 })
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<i32> {
    let file = match &cli.global.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let workers = cli.global.workers.or(file.workers).unwrap_or(0);
    if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| anyhow::anyhow!("cannot configure {workers} workers: {e}"))?;
    }
    let effective_workers =
        if workers == 0 { rayon::current_num_threads() } else { workers };
    let out = cli.global.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    let seed = cli.global.seed.or(file.seed).unwrap_or(0);
    let format = cli.global.format.or(file.format).unwrap_or(Format::Csv);

    match cli.command {
        Command::Decouple(args) => {
            file.check_experiment("decoupling-sweep")?;
            let n = args.n.or(file.n).unwrap_or(2);
            let signature = match args.signature {
                Some(text) => parse_signature(&text)?,
                None => file.signature.clone().unwrap_or_else(|| vec![1.0; (n - 1) as usize]),
            };
            let delta_min = match args.delta_min.or(file.delta_min.clone()) {
                Some(t) => parse_dyadic(&t)?,
                None => 2f64.powi(-8),
            };
            let delta_max = match args.delta_max.or(file.delta_max.clone()) {
                Some(t) => parse_dyadic(&t)?,
                None => 2f64.powi(-2),
            };
            let params = runner::DecoupleParams {
                n,
                p: args.p.or(file.p).unwrap_or(6.0),
                signature,
                flavor: args.flavor.or(file.flavor.clone()).unwrap_or_else(|| "l2".into()),
                deltas: dyadic_sweep(delta_min, delta_max)?,
                example: args.example.or(file.data.clone()).unwrap_or_else(|| "surface".into()),
                spacing_factor: args.spacing_factor.or(file.spacing_factor).unwrap_or(1.0),
                grid_h: args.grid_h.or(file.grid_h).unwrap_or(0.25),
                nu: args.nu.or(file.nu).unwrap_or(0.125),
                tolerance: args.tolerance.or(file.tolerance).unwrap_or(0.12),
                out,
            };
            runner::run_decouple(params, effective_workers)
        }
        Command::Energy(args) => {
            file.check_experiment("energy-growth")?;
            let single = args.count.or(file.count);
            let sweep = match (args.n_min.or(file.n_min), args.n_max.or(file.n_max)) {
                (Some(a), Some(b)) => Some((a, b)),
                (None, None) => None,
                _ => anyhow::bail!("both --N-min and --N-max are required for a sweep"),
            };
            let params = runner::EnergyParams {
                n: args.n.or(file.n).unwrap_or(2),
                k: args.k.or(file.k).unwrap_or(3),
                curve: args.curve.unwrap_or_else(|| "moment".into()),
                single,
                sweep,
                slope_min: args.slope_min.or(file.slope_min),
                slope_max: args.slope_max.or(file.slope_max),
                out,
            };
            runner::run_energy(params, effective_workers)
        }
        Command::Strichartz(args) => {
            file.check_experiment("strichartz-sweep")?;
            let n = args.n.or(file.n).unwrap_or(3);
            let signature = match args.signature {
                Some(text) => parse_signature(&text)?,
                None => file.signature.clone().unwrap_or_else(|| {
                    let mut v = vec![1.0; (n - 1) as usize];
                    if let Some(last) = v.last_mut() {
                        *last = -1.0;
                    }
                    v
                }),
            };
            let n_min = args.n_min.or(file.n_min).unwrap_or(8);
            let n_max = args.n_max.or(file.n_max).unwrap_or(128);
            let params = runner::StrichartzParams {
                n,
                signature,
                p: args.p.or(file.p).unwrap_or(4.0),
                cutoffs: pow2_sweep(n_min, n_max)?,
                data: args.data.or(file.data.clone()).unwrap_or_else(|| "subspace".into()),
                interval: args.interval.or(file.interval).unwrap_or(1.0),
                tolerance: args.tolerance.or(file.tolerance).unwrap_or(0.05),
                slope_max: args.slope_max.or(file.slope_max),
                out,
            };
            runner::run_strichartz(params, effective_workers)
        }
        Command::Numerology(args) => {
            file.check_experiment("numerology-table")?;
            let critical = if args.critical || file.critical.unwrap_or(false) {
                let n = args.n.or(file.n).ok_or_else(|| anyhow::anyhow!("--n is required"))?;
                let d = args.d.or(file.d).unwrap_or(0);
                Some((n, d))
            } else {
                None
            };
            let _ = args.table;
            let dims = match args.dims {
                Some(t) => t.split(',').map(|s| s.trim().parse::<u32>()).collect::<Result<_, _>>()?,
                None => file.dims.clone().unwrap_or_else(|| vec![2, 3, 4, 5]),
            };
            let p_values = match args.p_values {
                Some(t) => t.split(',').map(|s| s.trim().to_string()).collect(),
                None => file
                    .p_values
                    .clone()
                    .unwrap_or_else(|| vec!["4".into(), "6".into(), "8".into(), "10".into(), "12".into()]),
            };
            let params = runner::NumerologyParams {
                critical,
                dims,
                p_values,
                format,
                out: cli.global.out.or(file.out),
            };
            runner::run_numerology(params)
        }
        Command::Geometry(args) => {
            file.check_experiment("geometry-audit")?;
            let dims = match args.dims {
                Some(t) => t.split(',').map(|s| s.trim().parse::<u32>()).collect::<Result<_, _>>()?,
                None => file.dims.clone().unwrap_or_else(|| vec![3, 4, 5]),
            };
            let params = runner::GeometryParams {
                dims,
                trials: args.trials.or(file.trials).unwrap_or(100),
                seed,
                threshold: args.threshold.or(file.tolerance).unwrap_or(0.05),
                out,
            };
            runner::run_geometry(params, effective_workers)
        }
        Command::Witness(args) => {
            file.check_experiment("interpolation-witness")?;
            let n_min = args.n_min.or(file.n_min).unwrap_or(4);
            let n_max = args.n_max.or(file.n_max).unwrap_or(64);
            let params = runner::WitnessParams {
                n: args.n.or(file.n).unwrap_or(3),
                scales: pow2_sweep(n_min, n_max)?,
                out,
            };
            runner::run_witness(params, effective_workers)
        }
    }
}

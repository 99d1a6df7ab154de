//! `lightray` — experiment driver for the light-ray transform toolkit.
//!
//! Every subcommand is a thin wrapper over one library pipeline. All
//! parameters live in an INI-style config file; command-line `--set`
//! overrides win over config keys. Exit codes: 0 success, 1 stage failure,
//! 2 usage or configuration errors.

mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "lightray",
    version,
    about = "Weighted light-ray transform toolkit: forward transform, normal-operator \
             analysis, Radon reduction over timelike planes and support-theorem geometry checks"
)]
struct Cli {
    /// Cap the worker threads used by the numerical kernels
    /// (falls back to the LIGHTRAY_THREADS environment variable).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration file (INI-style `key = value` sections).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override a config key: `--set section.key=value` (repeatable; wins
    /// over the file).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,

    /// Output directory for artifacts and the manifest.
    #[arg(long)]
    out_dir: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the stages listed under `[run] stages` in the config.
    Run {
        /// Experiment configuration file.
        config: PathBuf,
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long)]
        out_dir: Option<String>,
    },
    /// Sample the configured phantom onto the field grid (LRTF + PGM slice).
    Phantom(CommonWith),
    /// Forward transform over the (x, theta) product grid (CSV).
    Sinogram(CommonWith),
    /// Brute-force normal operator L'Lf on the field grid (LRTF + PGM).
    Normal(CommonWith),
    /// Spacelike reconstruction filter applied to L'Lf (LRTF + PGM).
    Reconstruct(CommonWith),
    /// Fourier slice identity residuals over random (theta, xi) draws (CSV).
    SliceCheck(CommonWith),
    /// Fubini Radon transform against direct plane integrals over a
    /// (p, q, xi) sweep (CSV).
    RadonCheck(CommonWith),
    /// Mixed-Hessian determinant of the phase function at (0, e^{n-1}).
    PhaseCheck {
        #[command(flatten)]
        common: Common,
        /// Metric registry id (shorthand for --set metric.id=...).
        #[arg(long)]
        metric: Option<String>,
    },
    /// Strict lightlike-convexity, timelikeness and tangent-escape verdicts
    /// for a registry surface, or the full foliation-condition scan.
    FoliationCheck {
        #[command(flatten)]
        common: Common,
        /// Surface registry id (cylinder, double-cone, hyperboloid,
        /// quadric, plane-spatial, plane-time, quadric-foliation).
        #[arg(long)]
        surface: Option<String>,
        /// First surface parameter (the cylinder radius).
        #[arg(long = "R")]
        radius: Option<f64>,
        /// Full surface parameter list, comma separated.
        #[arg(long)]
        params: Option<String>,
    },
    /// Tangent rays of the foliation and the transform values they carry.
    ShrinkCheck(CommonWith),
    /// Edge-visibility experiment: spacelike vs timelike slab through the
    /// full reconstruction pipeline.
    Visibility(CommonWith),
}

#[derive(Args)]
struct CommonWith {
    #[command(flatten)]
    common: Common,
}

fn thread_cap(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| {
        std::env::var("LIGHTRAY_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
}

fn run_stages(common: &Common, stages: &[&str]) -> anyhow::Result<()> {
    let mut ctx = stages::build_context(
        common.config.as_deref(),
        &common.sets,
        common.out_dir.as_deref(),
    )?;
    let result: anyhow::Result<()> = stages
        .iter()
        .try_for_each(|stage| ctx.run_stage(stage));
    // the manifest is written even when a stage failed, as a partial record
    let manifest = ctx.write_manifest();
    result?;
    println!("manifest: {}", manifest?.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = thread_cap(cli.threads) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let outcome = match &cli.command {
        Command::Run {
            config,
            sets,
            out_dir,
        } => {
            if !config.exists() {
                eprintln!("error: config file {} does not exist", config.display());
                return ExitCode::from(2);
            }
            let common = Common {
                config: Some(config.clone()),
                sets: sets.clone(),
                out_dir: out_dir.clone(),
            };
            match stages::build_context(Some(config), sets, out_dir.as_deref()) {
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(2);
                }
                Ok(ctx) => {
                    let list = ctx.cfg.str_list_or("run", "stages", &[]);
                    drop(ctx);
                    let refs: Vec<&str> = list.iter().map(|s| s.as_str()).collect();
                    run_stages(&common, &refs)
                }
            }
        }
        Command::Phantom(c) => run_stages(&c.common, &["phantom"]),
        Command::Sinogram(c) => run_stages(&c.common, &["sinogram"]),
        Command::Normal(c) => run_stages(&c.common, &["normal"]),
        Command::Reconstruct(c) => run_stages(&c.common, &["reconstruct"]),
        Command::SliceCheck(c) => run_stages(&c.common, &["slice-check"]),
        Command::RadonCheck(c) => run_stages(&c.common, &["radon-check"]),
        Command::PhaseCheck { common, metric } => {
            let mut common = common.clone();
            if let Some(id) = metric {
                common.sets.push(format!("metric.id={id}"));
            }
            run_stages(&common, &["phase-check"])
        }
        Command::FoliationCheck {
            common,
            surface,
            radius,
            params,
        } => {
            let mut common = common.clone();
            if let Some(id) = surface {
                common.sets.push(format!("surface.id={id}"));
            }
            if let Some(p) = params {
                common.sets.push(format!("surface.params={p}"));
            }
            if let Some(r) = radius {
                common.sets.push(format!("surface.params={r}"));
            }
            run_stages(&common, &["foliation-check"])
        }
        Command::ShrinkCheck(c) => run_stages(&c.common, &["shrink-check"]),
        Command::Visibility(c) => run_stages(&c.common, &["visibility"]),
    };

    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // missing or malformed configuration is a usage error
            let msg = format!("{e:#}");
            eprintln!("error: {msg}");
            if msg.contains("cannot read config file") || msg.contains("while parsing") {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

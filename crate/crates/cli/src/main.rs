//! `arbor`: enumerate trees, build and classify arboreal hypersurfaces, run
//! the model Weinstein fields and the cusp resolution.

mod commands;
mod config;
mod export;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "ARBOR_THREADS";

/// Invalid input; exits with code 2.
#[derive(Debug)]
pub struct UserError(String);

impl fmt::Display for UserError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

impl UserError {
    pub fn msg(s: impl Into<String>) -> anyhow::Error {
        anyhow::Error::new(UserError(s.into()))
    }

    pub fn wrap<E: Into<anyhow::Error>>(e: E) -> anyhow::Error {
        Self::msg(format!("{:#}", e.into()))
    }
}

#[derive(Parser)]
#[command(
    name = "arbor",
    version,
    about = "Arboreal singularities: trees, hypersurfaces, model Weinstein fields, cusp resolution"
)]
struct Cli {
    /// JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Serialize, Clone)]
#[group(required = true, multiple = false)]
pub struct BuildModel {
    #[arg(long)]
    pub smoothed: bool,
    #[arg(long)]
    pub pl: bool,
}

#[derive(Args, Serialize, Clone)]
#[group(required = true, multiple = false)]
pub struct ModelMode {
    #[arg(long)]
    pub skeleton: bool,
    #[arg(long)]
    pub zeros: bool,
    #[arg(long)]
    pub verify: bool,
}

#[derive(Args, Serialize, Clone)]
#[group(required = true, multiple = false)]
pub struct CuspMode {
    #[arg(long)]
    pub resolve: bool,
    #[arg(long)]
    pub audit: bool,
}

#[derive(Subcommand)]
enum Command {
    /// List signed rooted trees up to isomorphism
    Enumerate {
        /// Largest vertex count
        #[arg(long)]
        max: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the arboreal hypersurface of a tree file
    Build {
        tree: PathBuf,
        #[command(flatten)]
        model: BuildModel,
        /// Also write the Lagrangian model cloud
        #[arg(long)]
        lagrangian: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// SVG picture (ambient dimension 2)
        #[arg(long)]
        svg: Option<PathBuf>,
        /// OBJ point cloud (ambient dimension 3)
        #[arg(long)]
        obj: Option<PathBuf>,
    },
    /// Classify the germ of a sample file written by `build`
    Classify {
        #[arg(required_unless_present = "product_fixture")]
        samples: Option<PathBuf>,
        /// Classify the built-in product of two A_2 germs instead
        #[arg(long, conflicts_with = "samples")]
        product_fixture: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Model Weinstein field of a tree file
    Model {
        tree: PathBuf,
        #[command(flatten)]
        mode: ModelMode,
        #[arg(long)]
        out: Option<PathBuf>,
        /// SVG of the skeleton (two-dimensional models)
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Sigma^{1,0} resolution local model
    Cusp {
        #[arg(long)]
        epsilon: Option<f64>,
        #[command(flatten)]
        mode: CuspMode,
        /// Audit the unresolved cusp instead of the resolution
        #[arg(long, conflicts_with = "resolve")]
        unresolved: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// SVG of the (u, v) slice
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

fn setup_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize =
        v.parse().map_err(|_| UserError::msg(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    if n == 0 {
        return Err(UserError::msg(format!("{THREADS_ENV} must be positive")));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    setup_threads()?;
    let cfg = config::RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Enumerate { max, out } => commands::enumerate(&cfg, max, out.as_deref()),
        Command::Build { tree, model, lagrangian, out, svg, obj } => {
            commands::build(&cfg, &tree, &model, lagrangian, out.as_deref(), svg.as_deref(), obj.as_deref())
        }
        Command::Classify { samples, product_fixture: _, out } => {
            commands::classify(&cfg, samples.as_deref(), out.as_deref())
        }
        Command::Model { tree, mode, out, svg } => commands::model(&cfg, &tree, &mode, out.as_deref(), svg.as_deref()),
        Command::Cusp { epsilon, mode, unresolved, out, svg } => {
            commands::cusp(&cfg, epsilon, &mode, unresolved, out.as_deref(), svg.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UserError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

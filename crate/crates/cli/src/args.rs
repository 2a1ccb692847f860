use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{PotentialEntry, RunConfig, SamplerChoice, VertexSpec, OUTPUT_DIR_ENV};

const CSV_HELP: &str = "\
Outputs (in the run directory):
  config.toml   effective configuration after flag overrides
  *.json        reports and sidecars, schema-versioned
CSV columns:
  samples.csv   sample,vertex,value
  green.csv     x,y,g
  summary.csv   test,check,kind,passed,value,reference,threshold
                (exact: value, expected, tolerance; moment: estimate,
                expected, n_se * standard error; ks: statistic, p-value,
                corrected alpha; bound: value, lower, upper)";

#[derive(Debug, Parser)]
#[command(name = "interlace", version, about = "Random interlacement occupation fields on weighted graphs", after_help = CSV_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the window and write it as JSON.
    #[command(after_help = CSV_HELP)]
    Window(Common),
    /// Green matrix, capacities, Laplace transforms and resolvent checks.
    #[command(after_help = CSV_HELP)]
    Exact(ExactArgs),
    /// Draw occupation fields or free fields.
    #[command(after_help = CSV_HELP)]
    Sample(SampleArgs),
    /// Run a verification battery; exit status 0 iff every check passes.
    #[command(after_help = CSV_HELP)]
    Verify(VerifyArgs),
    /// Large-level battery over the level schedule.
    #[command(after_help = CSV_HELP)]
    Asymptotics(Common),
}

/// Flags shared by all subcommands. Each overrides the config file.
#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Graph generator: z<d>, tree<b> or edges.
    #[arg(long = "gen")]
    pub generator: Option<String>,
    /// Edge list (`x y weight` lines) for `--gen edges`.
    #[arg(long)]
    pub edge_list: Option<PathBuf>,
    #[arg(long)]
    pub radius: Option<usize>,
    /// Window center: `origin` or comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    pub center: Option<VertexSpec>,
    /// Radius schedule for window limits, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<usize>>,
    #[arg(long, allow_hyphen_values = true)]
    pub u: Option<f64>,
    /// Level schedule for asymptotics, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Shift of the shifted isomorphism.
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// Potential entry `vertex:value`; repeatable.
    #[arg(long = "V", allow_hyphen_values = true)]
    pub v: Vec<PotentialEntry>,
    /// Vertex of K; repeatable.
    #[arg(long = "K", allow_hyphen_values = true)]
    pub k: Vec<VertexSpec>,
    /// Sample count.
    #[arg(long = "n")]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory.
    #[arg(long = "out")]
    pub output_dir: Option<PathBuf>,
    /// Base directory for runs without --out.
    #[arg(long, env = OUTPUT_DIR_ENV, default_value = "runs")]
    pub output_base: PathBuf,
    /// Worker threads (0: available parallelism). Outputs do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Args, Clone)]
pub struct ExactArgs {
    #[command(flatten)]
    pub common: Common,
    /// Write the killed Green matrix.
    #[arg(long)]
    pub green: bool,
    /// Capacity and equilibrium measure of K.
    #[arg(long)]
    pub cap: bool,
    /// Exact Laplace transform of V at level u, on the window and as a window
    /// limit over the radius schedule (the largest default radius takes about
    /// a minute and 2 GB).
    #[arg(long)]
    pub laplace: bool,
    /// Window limit of g(center, center) over the radius schedule.
    #[arg(long)]
    pub green_limit: bool,
    /// Resolvent identity for V at rate --lambda.
    #[arg(long)]
    pub resolvent_check: bool,
    #[arg(long)]
    pub lambda: Option<f64>,
}

impl ExactArgs {
    /// With no selection, the Green matrix and capacity are written.
    pub fn selection(&self) -> [bool; 5] {
        let any = self.green || self.cap || self.laplace || self.green_limit || self.resolvent_check;
        if any {
            [self.green, self.cap, self.laplace, self.green_limit, self.resolvent_check]
        } else {
            [true, true, false, false, false]
        }
    }
}

#[derive(Debug, Args, Clone)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerChoice>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Battery {
    Isomorphism,
    Shifted,
    Laplace,
    Vacant,
    Moments,
    Agreement,
    Asymptotics,
    All,
}

#[derive(Debug, Args, Clone)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub battery: Battery,
    #[command(flatten)]
    pub common: Common,
}

impl Common {
    /// Config file (or defaults) with these flags applied on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| anyhow::anyhow!("reading config {}: {e}", path.display()))?;
                RunConfig::from_toml(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(g) = &self.generator {
            c.graph.generator = g.clone();
        }
        if let Some(p) = &self.edge_list {
            c.graph.edge_list = Some(p.clone());
        }
        if let Some(r) = self.radius {
            c.window.radius = r;
        }
        if let Some(center) = &self.center {
            c.window.center = Some(center.clone());
        }
        if let Some(radii) = &self.radii {
            c.window.schedule = radii.clone();
        }
        if let Some(u) = self.u {
            c.level.u = u;
        }
        if let Some(levels) = &self.levels {
            c.level.schedule = levels.clone();
        }
        if let Some(a) = self.a {
            c.level.shift = a;
        }
        if !self.v.is_empty() {
            c.potential.v = self.v.clone();
        }
        if !self.k.is_empty() {
            c.potential.k = self.k.clone();
        }
        if let Some(n) = self.samples {
            c.sampling.samples = n;
        }
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(dir) = &self.output_dir {
            c.output_dir = Some(dir.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

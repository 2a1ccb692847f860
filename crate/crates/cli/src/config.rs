//! Run configuration: a TOML file with typed sections, overridden by flags.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use interlacement::graph::{EdgeListGraph, GraphGenerator, Lattice, RegularTree, Vertex, WeightedWindow};
use interlacement::tolerances::Tolerances;
use serde::{Deserialize, Serialize};

/// Environment variable naming the base directory for run outputs.
pub const OUTPUT_DIR_ENV: &str = "INTERLACE_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Run directory; when unset, `$INTERLACE_OUTPUT_DIR/<command>-s<seed>`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub graph: GraphConfig,
    pub window: WindowConfig,
    pub level: LevelConfig,
    pub potential: PotentialConfig,
    pub sampling: SamplingConfig,
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// `z<d>`, `tree<b>` or `edges`.
    pub generator: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_list: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub radius: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<VertexSpec>,
    /// Radii for window-limit computations. The window deficit decays like
    /// 1/R, so a doubling schedule makes the stopping increment comparable
    /// to the remaining error.
    pub schedule: Vec<usize>,
    pub limit_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelConfig {
    pub u: f64,
    /// Levels for the asymptotics battery.
    pub schedule: Vec<f64>,
    /// Shift for the shifted isomorphism.
    pub shift: f64,
    /// Rate of the resolvent check.
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    /// Entries `vertex:value`.
    pub v: Vec<PotentialEntry>,
    pub k: Vec<VertexSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub samples: usize,
    pub sampler: SamplerChoice,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerChoice {
    Collapse,
    Excursion,
    Hitting,
    Gff,
}

/// `origin` or comma-separated coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum VertexSpec {
    Origin,
    At(Vertex),
}

impl VertexSpec {
    pub fn resolve(&self, gen: &dyn GraphGenerator) -> Vertex {
        match self {
            VertexSpec::Origin => gen.origin(),
            VertexSpec::At(v) => v.clone(),
        }
    }
}

impl FromStr for VertexSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "origin" {
            return Ok(VertexSpec::Origin);
        }
        s.parse::<Vertex>()
            .map(VertexSpec::At)
            .map_err(|e| anyhow!("bad vertex {s:?}: {e}"))
    }
}

impl fmt::Display for VertexSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VertexSpec::Origin => f.write_str("origin"),
            VertexSpec::At(v) => {
                let coords: Vec<String> = v.coords().iter().map(i64::to_string).collect();
                f.write_str(&coords.join(","))
            }
        }
    }
}

impl TryFrom<String> for VertexSpec {
    type Error = anyhow::Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<VertexSpec> for String {
    fn from(v: VertexSpec) -> String {
        v.to_string()
    }
}

/// `vertex:value`, e.g. `origin:0.1` or `1,0,0:0.5`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PotentialEntry {
    pub vertex: VertexSpec,
    pub value: f64,
}

impl FromStr for PotentialEntry {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (vertex, value) = s
            .rsplit_once(':')
            .ok_or_else(|| anyhow!("expected vertex:value, got {s:?}"))?;
        Ok(PotentialEntry {
            vertex: vertex.parse()?,
            value: value
                .trim()
                .parse()
                .map_err(|e| anyhow!("bad potential value in {s:?}: {e}"))?,
        })
    }
}

impl fmt::Display for PotentialEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.vertex, self.value)
    }
}

impl TryFrom<String> for PotentialEntry {
    type Error = anyhow::Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PotentialEntry> for String {
    fn from(v: PotentialEntry) -> String {
        v.to_string()
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            output_dir: None,
            graph: GraphConfig::default(),
            window: WindowConfig::default(),
            level: LevelConfig::default(),
            potential: PotentialConfig::default(),
            sampling: SamplingConfig::default(),
            tolerances: Tolerances::default(),
        }
    }
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            generator: "z3".into(),
            edge_list: None,
        }
    }
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            radius: 4,
            center: None,
            schedule: vec![4, 8, 16, 32, 64, 128],
            limit_tol: 1e-3,
        }
    }
}

impl Default for LevelConfig {
    fn default() -> Self {
        LevelConfig {
            u: 1.0,
            schedule: vec![1.0, 10.0, 50.0, 200.0],
            shift: 1.0,
            lambda: 10.0,
        }
    }
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig {
            v: vec![PotentialEntry {
                vertex: VertexSpec::Origin,
                value: 1.0,
            }],
            k: vec![VertexSpec::Origin],
        }
    }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            samples: 10_000,
            sampler: SamplerChoice::Collapse,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).context("parsing config")?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Range checks that do not need the graph.
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: String| Err(anyhow!("invalid config field `{name}`: {msg}"));
        if !(self.level.u >= 0.0) || !self.level.u.is_finite() {
            return field("level.u", format!("must be finite and nonnegative, got {}", self.level.u));
        }
        if !self.level.shift.is_finite() {
            return field("level.shift", format!("must be finite, got {}", self.level.shift));
        }
        if !(self.level.lambda > 0.0) || !self.level.lambda.is_finite() {
            return field("level.lambda", format!("must be positive, got {}", self.level.lambda));
        }
        if self.level.schedule.iter().any(|&u| !(u > 0.0) || !u.is_finite()) {
            return field("level.schedule", "levels must be positive".into());
        }
        if self.level.schedule.windows(2).any(|w| w[1] <= w[0]) {
            return field("level.schedule", "must be strictly increasing".into());
        }
        if self.window.schedule.is_empty() || self.window.schedule.windows(2).any(|w| w[1] <= w[0]) {
            return field("window.schedule", "radii must be nonempty and strictly increasing".into());
        }
        if !(self.window.limit_tol > 0.0) {
            return field("window.limit_tol", "must be positive".into());
        }
        if let Some(e) = self.potential.v.iter().find(|e| !(e.value >= 0.0) || !e.value.is_finite()) {
            return field("potential.v", format!("values must be nonnegative, got {e}"));
        }
        if self.sampling.samples == 0 {
            return field("sampling.samples", "must be positive".into());
        }
        let t = &self.tolerances;
        for (name, value) in [
            ("tolerances.hitting", t.hitting),
            ("tolerances.resolvent", t.resolvent),
            ("tolerances.green_asymmetry", t.green_asymmetry),
            ("tolerances.n_se", t.n_se),
            ("tolerances.ks_family_alpha", t.ks_family_alpha),
        ] {
            if !(value > 0.0) {
                return field(name, format!("must be positive, got {value}"));
            }
        }
        Ok(())
    }

    pub fn generator(&self) -> Result<Box<dyn GraphGenerator>> {
        let name = self.graph.generator.as_str();
        let parse_param = |prefix: &str| -> Result<usize> {
            name[prefix.len()..]
                .parse()
                .map_err(|_| anyhow!("invalid config field `graph.generator`: {name:?}"))
        };
        if name == "edges" {
            let path = self
                .graph
                .edge_list
                .as_ref()
                .ok_or_else(|| anyhow!("invalid config field `graph.edge_list`: required by `edges`"))?;
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading edge list {}", path.display()))?;
            Ok(Box::new(EdgeListGraph::parse(&text)?))
        } else if let Some(rest) = name.strip_prefix('z') {
            let d = parse_param("z")?;
            if d == 0 || rest.is_empty() {
                bail!("invalid config field `graph.generator`: dimension must be positive");
            }
            Ok(Box::new(Lattice::new(d)))
        } else if name.starts_with("tree") {
            let b = parse_param("tree")?;
            if b < 2 {
                bail!("invalid config field `graph.generator`: branching must be at least 2");
            }
            Ok(Box::new(RegularTree { branching: b }))
        } else {
            bail!("invalid config field `graph.generator`: unknown generator {name:?}")
        }
    }

    pub fn center(&self, gen: &dyn GraphGenerator) -> Vertex {
        self.window
            .center
            .as_ref()
            .map_or_else(|| gen.origin(), |c| c.resolve(gen))
    }

    /// Dense potential over the window.
    pub fn potential_on(&self, gen: &dyn GraphGenerator, window: &WeightedWindow) -> Result<Vec<f64>> {
        let mut v = vec![0.0; window.len()];
        for e in &self.potential.v {
            let x = e.vertex.resolve(gen);
            let i = window
                .index_of(&x)
                .ok_or_else(|| anyhow!("invalid config field `potential.v`: {x} is outside the window"))?;
            v[i] += e.value;
        }
        Ok(v)
    }

    pub fn k_on(&self, gen: &dyn GraphGenerator, window: &WeightedWindow) -> Result<Vec<usize>> {
        self.potential
            .k
            .iter()
            .map(|spec| {
                let x = spec.resolve(gen);
                window
                    .index_of(&x)
                    .ok_or_else(|| anyhow!("invalid config field `potential.k`: {x} is outside the window"))
            })
            .collect()
    }

    pub fn potential_pairs(&self, gen: &dyn GraphGenerator) -> Vec<(Vertex, f64)> {
        self.potential
            .v
            .iter()
            .map(|e| (e.vertex.resolve(gen), e.value))
            .collect()
    }
}

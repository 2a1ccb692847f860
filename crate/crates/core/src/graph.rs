//! Weighted graphs given by neighbor functions, finite windows cut out of
//! them, and the collapse of a window's complement onto a single star state.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Relative tolerance used when comparing a weight with its reverse.
const SYMMETRY_RTOL: f64 = 1e-12;

/// A vertex id: a small tuple of integers.
///
/// Lattice vertices are coordinates, tree vertices are the child-index path
/// from the root, and edge-list vertices are one-element tuples.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vertex(pub Vec<i64>);

impl Vertex {
    pub fn new(coords: impl Into<Vec<i64>>) -> Self {
        Vertex(coords.into())
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl FromStr for Vertex {
    type Err = Error;

    /// Parses `1,0,-2`, `(1,0,-2)` or `()` (the tree root).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches('(').trim_end_matches(')');
        if s.trim().is_empty() {
            return Ok(Vertex(Vec::new()));
        }
        s.split(',')
            .map(|c| {
                c.trim().parse::<i64>().map_err(|e| Error::Parse {
                    line: 0,
                    msg: format!("bad vertex coordinate {c:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Vertex)
    }
}

/// A locally finite weighted graph presented through its neighbor function.
pub trait GraphGenerator: Send + Sync {
    /// Neighbors of `v` with their edge weights. An empty list means `v` is
    /// not a vertex of the graph (or is isolated, which is equally invalid).
    fn neighbors(&self, v: &Vertex) -> Vec<(Vertex, f64)>;

    /// Default window center.
    fn origin(&self) -> Vertex;

    /// User assertion that the induced walk is transient. Not verified.
    fn transient(&self) -> bool;

    fn name(&self) -> String;
}

/// `Z^d` with unit nearest-neighbor weights. Transient only for `d >= 3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lattice {
    pub dim: usize,
}

impl Lattice {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "lattice dimension must be positive");
        Lattice { dim }
    }
}

impl GraphGenerator for Lattice {
    fn neighbors(&self, v: &Vertex) -> Vec<(Vertex, f64)> {
        if v.0.len() != self.dim {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(2 * self.dim);
        for axis in 0..self.dim {
            for step in [1, -1] {
                let mut w = v.0.clone();
                w[axis] += step;
                out.push((Vertex(w), 1.0));
            }
        }
        out
    }

    fn origin(&self) -> Vertex {
        Vertex(vec![0; self.dim])
    }

    fn transient(&self) -> bool {
        self.dim >= 3
    }

    fn name(&self) -> String {
        format!("z{}", self.dim)
    }
}

/// Rooted tree where every vertex has `branching` children, unit weights.
/// Transient for `branching >= 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegularTree {
    pub branching: usize,
}

impl GraphGenerator for RegularTree {
    fn neighbors(&self, v: &Vertex) -> Vec<(Vertex, f64)> {
        let b = self.branching as i64;
        if b == 0 || v.0.iter().any(|&c| c < 0 || c >= b) {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(self.branching + 1);
        if let Some((_, parent)) = v.0.split_last() {
            out.push((Vertex(parent.to_vec()), 1.0));
        }
        for child in 0..b {
            let mut w = v.0.clone();
            w.push(child);
            out.push((Vertex(w), 1.0));
        }
        out
    }

    fn origin(&self) -> Vertex {
        Vertex(Vec::new())
    }

    fn transient(&self) -> bool {
        self.branching >= 2
    }

    fn name(&self) -> String {
        format!("tree{}", self.branching)
    }
}

/// Finite graph read from `x y weight` lines, with symmetric closure.
///
/// Finite graphs are recurrent; these exist to exercise window and collapse
/// mechanics on hand-checkable examples.
#[derive(Clone, Debug, Default)]
pub struct EdgeListGraph {
    adjacency: BTreeMap<i64, Vec<(i64, f64)>>,
    origin: i64,
}

impl EdgeListGraph {
    pub fn from_edges(edges: impl IntoIterator<Item = (i64, i64, f64)>) -> Result<Self> {
        let mut weights: BTreeMap<(i64, i64), f64> = BTreeMap::new();
        for (x, y, w) in edges {
            if x == y {
                return Err(Error::Domain(format!("self-loop at vertex {x}")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::NonPositiveWeight {
                    from: x.to_string(),
                    to: y.to_string(),
                    weight: w,
                });
            }
            for key in [(x, y), (y, x)] {
                match weights.get(&key) {
                    Some(&old) if old != w => {
                        return Err(Error::AsymmetricWeight {
                            from: key.0.to_string(),
                            to: key.1.to_string(),
                            forward: old,
                            backward: w,
                        })
                    }
                    _ => {
                        weights.insert(key, w);
                    }
                }
            }
        }
        let mut adjacency: BTreeMap<i64, Vec<(i64, f64)>> = BTreeMap::new();
        for ((x, y), w) in weights {
            adjacency.entry(x).or_default().push((y, w));
        }
        let origin = adjacency.keys().next().copied().unwrap_or(0);
        Ok(EdgeListGraph { adjacency, origin })
    }

    /// Parses whitespace-separated `x y weight` lines. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                line: lineno + 1,
                msg,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(err(format!("expected `x y weight`, got {line:?}")));
            }
            let x = fields[0]
                .parse::<i64>()
                .map_err(|e| err(format!("bad vertex {:?}: {e}", fields[0])))?;
            let y = fields[1]
                .parse::<i64>()
                .map_err(|e| err(format!("bad vertex {:?}: {e}", fields[1])))?;
            let w = fields[2]
                .parse::<f64>()
                .map_err(|e| err(format!("bad weight {:?}: {e}", fields[2])))?;
            edges.push((x, y, w));
        }
        Self::from_edges(edges)
    }

    pub fn with_origin(mut self, origin: i64) -> Self {
        self.origin = origin;
        self
    }
}

impl GraphGenerator for EdgeListGraph {
    fn neighbors(&self, v: &Vertex) -> Vec<(Vertex, f64)> {
        match v.0.as_slice() {
            [id] => self
                .adjacency
                .get(id)
                .map(|ns| ns.iter().map(|&(y, w)| (Vertex(vec![y]), w)).collect())
                .unwrap_or_default(),
            _ => Vec::new(),
        }
    }

    fn origin(&self) -> Vertex {
        Vertex(vec![self.origin])
    }

    fn transient(&self) -> bool {
        false
    }

    fn name(&self) -> String {
        "edges".to_string()
    }
}

/// A finite connected vertex set of a weighted graph, with the weight of its
/// edges into the unseen complement.
///
/// Vertices are indexed densely in breadth-first order from the center, so
/// index 0 is always the center.
#[derive(Clone, Debug)]
pub struct WeightedWindow {
    graph: String,
    center: Vertex,
    radius: usize,
    vertices: Vec<Vertex>,
    index: HashMap<Vertex, usize>,
    depth: Vec<usize>,
    adjacency: Vec<Vec<(usize, f64)>>,
    boundary: Vec<f64>,
    lambda: Vec<f64>,
}

/// Serialized form of a window.
#[derive(Serialize, Deserialize)]
struct WindowRecord {
    graph: String,
    center: Vertex,
    radius: usize,
    vertices: Vec<Vertex>,
    edges: Vec<(usize, usize, f64)>,
    boundary_weight: Vec<f64>,
    lambda: Vec<f64>,
}

/// Graph-distance ball of `radius` around `center`.
pub fn build_window(
    gen: &dyn GraphGenerator,
    center: &Vertex,
    radius: usize,
) -> Result<WeightedWindow> {
    let mut vertices = vec![center.clone()];
    let mut index = HashMap::from([(center.clone(), 0usize)]);
    let mut depth = vec![0usize];
    let mut lists: Vec<Vec<(Vertex, f64)>> = Vec::new();

    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let v = vertices[i].clone();
        let ns = gen.neighbors(&v);
        if ns.is_empty() {
            return Err(Error::EmptyNeighborhood(v.to_string()));
        }
        for (w, c) in &ns {
            if !(*c > 0.0) || !c.is_finite() {
                return Err(Error::NonPositiveWeight {
                    from: v.to_string(),
                    to: w.to_string(),
                    weight: *c,
                });
            }
            if depth[i] < radius && !index.contains_key(w) {
                index.insert(w.clone(), vertices.len());
                vertices.push(w.clone());
                depth.push(depth[i] + 1);
                queue.push_back(vertices.len() - 1);
            }
        }
        debug_assert_eq!(lists.len(), i);
        lists.push(ns);
    }

    let n = vertices.len();
    let mut adjacency = vec![Vec::new(); n];
    let mut boundary = vec![0.0; n];
    let mut lambda = vec![0.0; n];
    for (i, ns) in lists.iter().enumerate() {
        for (w, c) in ns {
            lambda[i] += c;
            match index.get(w) {
                Some(&j) => adjacency[i].push((j, *c)),
                None => boundary[i] += c,
            }
        }
    }

    // Symmetry inside the window is checked against the window's own lists;
    // a crossing edge is checked by querying the outside endpoint.
    for (i, ns) in lists.iter().enumerate() {
        for (w, c) in ns {
            let back = match index.get(w) {
                Some(&j) => lists[j]
                    .iter()
                    .filter(|(z, _)| *z == vertices[i])
                    .map(|(_, c)| *c)
                    .sum::<f64>(),
                None => gen
                    .neighbors(w)
                    .iter()
                    .filter(|(z, _)| *z == vertices[i])
                    .map(|(_, c)| *c)
                    .sum::<f64>(),
            };
            if (back - c).abs() > SYMMETRY_RTOL * c.abs().max(back.abs()) {
                return Err(Error::AsymmetricWeight {
                    from: vertices[i].to_string(),
                    to: w.to_string(),
                    forward: *c,
                    backward: back,
                });
            }
        }
    }

    for list in &mut adjacency {
        list.sort_by_key(|&(j, _)| j);
    }

    Ok(WeightedWindow {
        graph: gen.name(),
        center: center.clone(),
        radius,
        vertices,
        index,
        depth,
        adjacency,
        boundary,
        lambda,
    })
}

impl WeightedWindow {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn graph_name(&self) -> &str {
        &self.graph
    }

    pub fn center(&self) -> &Vertex {
        &self.center
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &Vertex {
        &self.vertices[i]
    }

    pub fn index_of(&self, v: &Vertex) -> Option<usize> {
        self.index.get(v).copied()
    }

    /// Resolves vertex ids to window indices, failing on the first outsider.
    pub fn indices_of<'a>(&self, vs: impl IntoIterator<Item = &'a Vertex>) -> Result<Vec<usize>> {
        vs.into_iter()
            .map(|v| {
                self.index_of(v)
                    .ok_or_else(|| Error::OutsideWindow(v.to_string()))
            })
            .collect()
    }

    /// Graph distance from the center.
    pub fn depth(&self, i: usize) -> usize {
        self.depth[i]
    }

    /// First vertex (in index order) at the given distance from the center.
    pub fn first_at_depth(&self, d: usize) -> Option<usize> {
        self.depth.iter().position(|&x| x == d)
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn internal_weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .map(|p| self.adjacency[i][p].1)
            .unwrap_or(0.0)
    }

    pub fn boundary_weight(&self, i: usize) -> f64 {
        self.boundary[i]
    }

    pub fn boundary_weights(&self) -> &[f64] {
        &self.boundary
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.lambda[i]
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambda
    }

    pub fn total_boundary_weight(&self) -> f64 {
        self.boundary.iter().sum()
    }

    /// Probability of leaving the window in one step from `i`.
    pub fn exit_probability(&self, i: usize) -> f64 {
        self.boundary[i] / self.lambda[i]
    }

    pub fn to_json(&self) -> Result<String> {
        let mut edges = Vec::new();
        for (i, ns) in self.adjacency.iter().enumerate() {
            for &(j, c) in ns {
                if i < j {
                    edges.push((i, j, c));
                }
            }
        }
        let record = WindowRecord {
            graph: self.graph.clone(),
            center: self.center.clone(),
            radius: self.radius,
            vertices: self.vertices.clone(),
            edges,
            boundary_weight: self.boundary.clone(),
            lambda: self.lambda.clone(),
        };
        Ok(serde_json::to_string_pretty(&record)?)
    }

    /// Short content hash used to tie exported samples to their window.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.graph.as_bytes());
        for (i, v) in self.vertices.iter().enumerate() {
            for c in &v.0 {
                hasher.update(c.to_le_bytes());
            }
            hasher.update([0xff]);
            hasher.update(self.boundary[i].to_le_bytes());
            for &(j, c) in &self.adjacency[i] {
                hasher.update((j as u64).to_le_bytes());
                hasher.update(c.to_le_bytes());
            }
        }
        hex::encode(&hasher.finalize()[..8])
    }
}

/// The finite recurrent chain on window vertices plus a star state standing
/// in for the whole complement. The star has index `len() - 1`.
#[derive(Clone, Debug)]
pub struct CollapsedChain {
    adjacency: Vec<Vec<(usize, f64)>>,
    lambda: Vec<f64>,
}

pub fn collapse(window: &WeightedWindow) -> Result<CollapsedChain> {
    let n = window.len();
    let total = window.total_boundary_weight();
    if !(total > 0.0) {
        return Err(Error::NoEscapeEdges);
    }
    let mut adjacency: Vec<Vec<(usize, f64)>> = window.adjacency.clone();
    let mut star = Vec::new();
    for (y, list) in adjacency.iter_mut().enumerate() {
        let b = window.boundary[y];
        if b > 0.0 {
            list.push((n, b));
            star.push((y, b));
        }
    }
    adjacency.push(star);
    let mut lambda = window.lambda.clone();
    lambda.push(total);
    Ok(CollapsedChain { adjacency, lambda })
}

impl CollapsedChain {
    /// Number of states including the star.
    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn window_len(&self) -> usize {
        self.lambda.len() - 1
    }

    pub fn star(&self) -> usize {
        self.lambda.len() - 1
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i]
            .iter()
            .filter(|(k, _)| *k == j)
            .map(|(_, c)| *c)
            .sum()
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.lambda[i]
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambda
    }
}

/// Dense one-step transition matrix `p(x, y) = c(x, y) / lambda(x)`.
pub trait TransitionMatrix {
    fn transition_matrix(&self) -> DMatrix<f64>;
}

impl TransitionMatrix for CollapsedChain {
    fn transition_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut p = DMatrix::zeros(n, n);
        for (i, ns) in self.adjacency.iter().enumerate() {
            for &(j, c) in ns {
                p[(i, j)] += c / self.lambda[i];
            }
        }
        p
    }
}

/// Sub-stochastic: row `x` sums to `1 - boundary(x) / lambda(x)`, the
/// missing mass being the walk killed on exit.
impl TransitionMatrix for WeightedWindow {
    fn transition_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut p = DMatrix::zeros(n, n);
        for (i, ns) in self.adjacency.iter().enumerate() {
            for &(j, c) in ns {
                p[(i, j)] += c / self.lambda[i];
            }
        }
        p
    }
}

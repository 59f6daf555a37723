//! System specifications: graphs on shared vertices whose edges carry similitudes,
//! drawn according to a probability vector.

use crate::geometry::{AxisBox, GeometryError, Similitude, CONTAIN_TOL, GEOM_TOL};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use std::fmt;

/// Tolerance on `Σ prob = 1`.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VertexId {
    Int(i64),
    Name(String),
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VertexId::Int(i) => write!(f, "{i}"),
            VertexId::Name(s) => f.write_str(s),
        }
    }
}

impl From<&str> for VertexId {
    fn from(s: &str) -> Self {
        VertexId::Name(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEdge {
    pub from: VertexId,
    pub to: VertexId,
    pub ratio: f64,
    pub translation: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub angle: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reflect: bool,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGraph {
    pub prob: f64,
    pub edges: Vec<RawEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// The on-disk JSON form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpec {
    pub dimension: usize,
    pub vertices: Vec<VertexId>,
    pub seed_box: RawBox,
    pub graphs: Vec<RawGraph>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: usize,
    pub graph: usize,
    pub from: usize,
    pub to: usize,
    pub map: Similitude,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    pub prob: f64,
    /// Global edge ids, in file order.
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    raw: RawSpec,
    dim: usize,
    vertices: Vec<String>,
    graphs: Vec<GraphSpec>,
    edges: Vec<Edge>,
    seed_box: AxisBox,
    c_max: f64,
    c_min: f64,
    /// `out[graph][vertex]` lists edge ids leaving `vertex` in that graph.
    out: Vec<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("malformed spec: {0}")]
    MalformedSpec(String),
    #[error("edge {edge} has ratio {ratio}, which is not contracting")]
    NotContracting { edge: usize, ratio: f64 },
    #[error("image of the seed box under edge {edge} leaves the seed box")]
    SeedNotInvariant { edge: usize },
}

impl SystemSpec {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let raw: RawSpec =
            serde_json::from_str(text).map_err(|e| ModelError::MalformedSpec(e.to_string()))?;
        Self::from_raw(raw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.raw).expect("spec serializes")
    }

    pub fn from_raw(raw: RawSpec) -> Result<Self, ModelError> {
        let malformed = |m: String| ModelError::MalformedSpec(m);
        let dim = raw.dimension;
        if dim != 1 && dim != 2 {
            return Err(malformed(format!("dimension must be 1 or 2, got {dim}")));
        }
        if raw.vertices.is_empty() {
            return Err(malformed("no vertices".into()));
        }
        if raw.graphs.is_empty() {
            return Err(malformed("no graphs".into()));
        }
        let mut index = HashMap::new();
        for (i, v) in raw.vertices.iter().enumerate() {
            if index.insert(v.clone(), i).is_some() {
                return Err(malformed(format!("duplicate vertex id {v}")));
            }
        }
        if raw.seed_box.lo.len() != dim || raw.seed_box.hi.len() != dim {
            return Err(malformed(
                "seed_box must have one coordinate per dimension".into(),
            ));
        }
        let seed_box = AxisBox::new(&raw.seed_box.lo, &raw.seed_box.hi)
            .map_err(|e| malformed(format!("seed_box: {e}")))?;

        let mut total = 0.0;
        for (i, g) in raw.graphs.iter().enumerate() {
            if !(g.prob >= 0.0 && g.prob <= 1.0) {
                return Err(malformed(format!("graph {i} has probability {}", g.prob)));
            }
            total += g.prob;
        }
        if (total - 1.0).abs() > PROB_TOL {
            return Err(malformed(format!("probabilities sum to {total}, not 1")));
        }

        let n = raw.vertices.len();
        let mut edges = Vec::new();
        let mut graphs = Vec::new();
        let mut out = Vec::new();
        for (gi, g) in raw.graphs.iter().enumerate() {
            let mut ids = Vec::with_capacity(g.edges.len());
            let mut o = vec![Vec::new(); n];
            for e in &g.edges {
                let id = edges.len();
                let from = *index
                    .get(&e.from)
                    .ok_or_else(|| malformed(format!("edge {id}: unknown vertex {}", e.from)))?;
                let to = *index
                    .get(&e.to)
                    .ok_or_else(|| malformed(format!("edge {id}: unknown vertex {}", e.to)))?;
                if e.ratio >= 1.0 {
                    return Err(ModelError::NotContracting {
                        edge: id,
                        ratio: e.ratio,
                    });
                }
                let map = Similitude::new(dim, e.ratio, e.angle, e.reflect, &e.translation)
                    .map_err(|err| match err {
                        GeometryError::NotContracting(r) => {
                            ModelError::NotContracting { edge: id, ratio: r }
                        }
                        other => malformed(format!("edge {id}: {other}")),
                    })?;
                if !seed_box.contains_box(&map.apply_box(&seed_box), CONTAIN_TOL) {
                    return Err(ModelError::SeedNotInvariant { edge: id });
                }
                ids.push(id);
                o[from].push(id);
                edges.push(Edge {
                    id,
                    graph: gi,
                    from,
                    to,
                    map,
                });
            }
            graphs.push(GraphSpec {
                prob: g.prob,
                edges: ids,
            });
            out.push(o);
        }
        if edges.is_empty() {
            return Err(malformed("no edges in any graph".into()));
        }
        let c_max = edges.iter().map(|e| e.map.ratio()).fold(0.0, f64::max);
        let c_min = edges.iter().map(|e| e.map.ratio()).fold(1.0, f64::min);
        Ok(Self {
            vertices: raw.vertices.iter().map(|v| v.to_string()).collect(),
            raw,
            dim,
            graphs,
            edges,
            seed_box,
            c_max,
            c_min,
            out,
        })
    }

    pub fn raw(&self) -> &RawSpec {
        &self.raw
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of vertices.
    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn vertex_index(&self, name: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v == name)
    }

    /// Number of graphs (the alphabet size).
    pub fn num_letters(&self) -> usize {
        self.graphs.len()
    }

    pub fn graphs(&self) -> &[GraphSpec] {
        &self.graphs
    }

    pub fn probs(&self) -> Vec<f64> {
        self.graphs.iter().map(|g| g.prob).collect()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> &Edge {
        &self.edges[id]
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.map.ratio()).collect()
    }

    pub fn out_edges(&self, graph: usize, vertex: usize) -> &[usize] {
        &self.out[graph][vertex]
    }

    pub fn seed_box(&self) -> &AxisBox {
        &self.seed_box
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    /// Letters that can actually be drawn.
    pub fn active_letters(&self) -> Vec<usize> {
        (0..self.graphs.len())
            .filter(|&i| self.graphs[i].prob > 0.0)
            .collect()
    }

    /// Exactly one graph can be drawn.
    pub fn is_deterministic(&self) -> bool {
        self.active_letters().len() == 1
    }

    /// One-step adjacency over graphs of positive probability.
    pub fn union_adjacency(&self) -> Vec<Vec<bool>> {
        let n = self.n();
        let mut adj = vec![vec![false; n]; n];
        for e in &self.edges {
            if self.graphs[e.graph].prob > 0.0 {
                adj[e.from][e.to] = true;
            }
        }
        adj
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OneVar,
    InfVar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
    pub ussc_sufficient: bool,
    pub surviving: bool,
    pub strongly_connected: bool,
    pub distinct_maps: bool,
}

/// `reach[v][w]`: a path of length ≥ 1 leads from `v` to `w`.
pub fn reachability(adj: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = adj.len();
    let mut reach = vec![vec![false; n]; n];
    for v in 0..n {
        let mut queue: VecDeque<usize> = (0..n).filter(|&w| adj[v][w]).collect();
        for &w in &queue {
            reach[v][w] = true;
        }
        while let Some(u) = queue.pop_front() {
            for w in 0..n {
                if adj[u][w] && !reach[v][w] {
                    reach[v][w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    reach
}

pub fn validate_system(spec: &SystemSpec, mode: Mode) -> ValidationReport {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    let n = spec.n();
    let names = spec.vertices();

    for (i, g) in spec.graphs().iter().enumerate() {
        if g.prob <= 0.0 {
            warnings.push(format!("graph {i} has probability 0 and is never drawn"));
        }
    }

    for (i, g) in spec.graphs().iter().enumerate() {
        if g.prob <= 0.0 {
            continue;
        }
        for v in 0..n {
            if spec.out_edges(i, v).is_empty()
                && mode == Mode::OneVar {
                    violations.push(Violation {
                        condition: "non_trivial".into(),
                        message: format!("vertex {} has no outgoing edge in graph {i}", names[v]),
                    });
                }
        }
    }

    let mut surviving = true;
    for v in 0..n {
        let expected: f64 = spec
            .graphs()
            .iter()
            .enumerate()
            .map(|(i, g)| g.prob * spec.out_edges(i, v).len() as f64)
            .sum();
        if expected <= 1.0 {
            surviving = false;
            if mode == Mode::InfVar {
                violations.push(Violation {
                    condition: "surviving".into(),
                    message: format!(
                        "vertex {} expects {expected} outgoing edges, not more than 1",
                        names[v]
                    ),
                });
            }
        }
    }

    let reach = reachability(&spec.union_adjacency());
    let strongly_connected = (0..n).all(|v| (0..n).all(|w| reach[v][w]));
    if !strongly_connected {
        violations.push(Violation {
            condition: "strongly_connected".into(),
            message: "the union adjacency is not strongly connected".into(),
        });
    }

    for e in spec.edges() {
        if !(e.map.ratio() < 1.0) {
            violations.push(Violation {
                condition: "contracting".into(),
                message: format!("edge {} is not contracting", e.id),
            });
        }
        let img = e.map.apply_box(spec.seed_box());
        if !spec.seed_box().contains_box(&img, CONTAIN_TOL) {
            violations.push(Violation {
                condition: "seed_invariant".into(),
                message: format!("edge {} maps the seed box outside itself", e.id),
            });
        }
    }

    let edges = spec.edges();
    let distinct_maps = edges
        .iter()
        .any(|a| edges.iter().any(|b| !a.map.same_parameters(&b.map)));
    if !distinct_maps {
        warnings.push("all edge maps are identical".into());
    }
    for (i, a) in edges.iter().enumerate() {
        for b in &edges[i + 1..] {
            if !a.map.same_parameters(&b.map) && a.map.nearly_equal(&b.map, 1e-9) {
                warnings.push(format!(
                    "edges {} and {} have nearly equal maps",
                    a.id, b.id
                ));
            }
        }
    }

    let mut ussc_sufficient = true;
    'outer: for i in 0..spec.num_letters() {
        for v in 0..n {
            let imgs: Vec<_> = spec
                .out_edges(i, v)
                .iter()
                .map(|&id| spec.edge(id).map.apply_box(spec.seed_box()))
                .collect();
            for a in 0..imgs.len() {
                for b in a + 1..imgs.len() {
                    if imgs[a].intersects(&imgs[b], GEOM_TOL) {
                        ussc_sufficient = false;
                        break 'outer;
                    }
                }
            }
        }
    }

    ValidationReport {
        ok: violations.is_empty(),
        violations,
        warnings,
        ussc_sufficient,
        surviving,
        strongly_connected,
        distinct_maps,
    }
}

/// Convenience constructor for line systems with seed box `[0,1]`.
/// Each graph is `(prob, edges)` with edges `(from, to, ratio, translation)`.
pub fn line_system(
    vertices: usize,
    graphs: &[(f64, Vec<(usize, usize, f64, f64)>)],
) -> Result<SystemSpec, ModelError> {
    let raw = RawSpec {
        dimension: 1,
        vertices: (0..vertices)
            .map(|v| VertexId::Name(format!("v{}", v + 1)))
            .collect(),
        seed_box: RawBox {
            lo: vec![0.0],
            hi: vec![1.0],
        },
        graphs: graphs
            .iter()
            .map(|(p, es)| RawGraph {
                prob: *p,
                edges: es
                    .iter()
                    .map(|&(f, t, r, x)| RawEdge {
                        from: VertexId::Name(format!("v{}", f + 1)),
                        to: VertexId::Name(format!("v{}", t + 1)),
                        ratio: r,
                        translation: vec![x],
                        angle: 0.0,
                        reflect: false,
                    })
                    .collect(),
            })
            .collect(),
    };
    SystemSpec::from_raw(raw)
}

/// Reference systems used throughout the tests and documentation.
pub mod catalog {
    use super::*;

    /// Two-IFS system: thirds `{x/3, x/3+2/3}` and quarters `{x/4, x/4+3/8, x/4+3/4}`,
    /// each drawn with probability one half.
    pub fn cantor_pair() -> SystemSpec {
        line_system(
            1,
            &[
                (
                    0.5,
                    vec![(0, 0, 1.0 / 3.0, 0.0), (0, 0, 1.0 / 3.0, 2.0 / 3.0)],
                ),
                (
                    0.5,
                    vec![(0, 0, 0.25, 0.0), (0, 0, 0.25, 0.375), (0, 0, 0.25, 0.75)],
                ),
            ],
        )
        .expect("catalog spec")
    }

    pub fn middle_third() -> SystemSpec {
        line_system(
            1,
            &[(
                1.0,
                vec![(0, 0, 1.0 / 3.0, 0.0), (0, 0, 1.0 / 3.0, 2.0 / 3.0)],
            )],
        )
        .expect("catalog spec")
    }

    /// `{x/4, x/4+3/8, x/4+3/4}` alone.
    pub fn quarter_triple() -> SystemSpec {
        line_system(
            1,
            &[(
                1.0,
                vec![(0, 0, 0.25, 0.0), (0, 0, 0.25, 0.375), (0, 0, 0.25, 0.75)],
            )],
        )
        .expect("catalog spec")
    }

    /// Deterministic two-vertex system whose dimension solves `2^-s + 4^-s = 1`.
    pub fn g2() -> SystemSpec {
        line_system(
            2,
            &[(
                1.0,
                vec![
                    (0, 0, 0.5, 0.0),
                    (0, 1, 0.25, 0.75),
                    (1, 0, 0.25, 0.0),
                    (1, 1, 0.5, 0.5),
                ],
            )],
        )
        .expect("catalog spec")
    }
}

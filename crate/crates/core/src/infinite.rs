//! The ∞-variable (random recursive) model: every node of the construction tree draws
//! its own graph. Dimensions come from the expectation matrix; trees are grown with
//! per-node randomness keyed by a hash of the node word.

use crate::geometry::Similitude;
use crate::linalg::{spectral_radius, Mat};
use crate::pressure::{refine_root_decreasing, PressureError, RootEstimate};
use crate::realization::{cumulative, pick, unit_f64};
use crate::stopping::ratio_le;
use crate::system::SystemSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;

/// Node budget for a single tree.
pub const MAX_NODES: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InfiniteError {
    #[error("not surviving: spectral radius of the expected count matrix is {rho} ≤ 1")]
    NotSurviving { rho: f64 },
    #[error("tree exceeded {0} nodes")]
    DepthBudget(usize),
    #[error("vertex {0} does not exist")]
    UnknownVertex(usize),
    #[error(transparent)]
    Pressure(#[from] PressureError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationMatrix {
    pub s: f64,
    pub matrix: Mat,
}

/// Entry `(v,w)`: `Σ_i π_i Σ_{e: v -> w in graph i} c_e^s`.
pub fn expectation_matrix(spec: &SystemSpec, s: f64) -> ExpectationMatrix {
    let n = spec.n();
    let mut m = Mat::zeros(n, n);
    for e in spec.edges() {
        let p = spec.graphs()[e.graph].prob;
        m[(e.from, e.to)] += p * e.map.ratio().powf(s);
    }
    ExpectationMatrix { s, matrix: m }
}

/// Root of `ρ(E(s)) = 1`.
pub fn solve_s_h_inf(spec: &SystemSpec, tol: f64) -> Result<RootEstimate, InfiniteError> {
    let f = |s: f64| spectral_radius(&expectation_matrix(spec, s).matrix).ln();
    let rho0 = spectral_radius(&expectation_matrix(spec, 0.0).matrix);
    if rho0 <= 1.0 {
        return Err(InfiniteError::NotSurviving { rho: rho0 });
    }
    let mut hi = spec.dim() as f64 + 5.0;
    while f(hi) >= 0.0 {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(PressureError::BracketFailure("no sign change".into()).into());
        }
    }
    let tol = tol.min(1e-9);
    let (lo, hi, _, _) = refine_root_decreasing(|s| Ok(f(s)), 0.0, hi, rho0.ln(), f(hi), tol)?;
    Ok(RootEstimate {
        s: 0.5 * (lo + hi),
        stderr: 0.0,
        bracket: (lo, hi),
        probes: 0,
        method: "Perron root of the expected Hutchinson-Moran matrix".into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfDimension {
    pub s_h: f64,
    pub rho_at_zero: f64,
    pub hausdorff: f64,
    pub packing: f64,
    pub box_counting: f64,
    pub method: String,
}

/// The ∞-variable dimension, which is simultaneously the Hausdorff, packing and box
/// dimension of surviving realizations.
pub fn inf_dimension_report(spec: &SystemSpec, tol: f64) -> Result<InfDimension, InfiniteError> {
    let r = solve_s_h_inf(spec, tol)?;
    Ok(InfDimension {
        s_h: r.s,
        rho_at_zero: spectral_radius(&expectation_matrix(spec, 0.0).matrix),
        hausdorff: r.s,
        packing: r.s,
        box_counting: r.s,
        method: r.method,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeStop {
    /// Stop after this many graph edges.
    Depth(usize),
    /// Stop each branch once its ratio is at most ε.
    Epsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeLimits {
    pub max_nodes: usize,
    /// Stop early, reporting survival, once the frontier is this large.
    pub survival_cap: Option<usize>,
    /// Keep every node (for dumps); otherwise only the frontier is kept.
    pub record_nodes: bool,
}

impl Default for TreeLimits {
    fn default() -> Self {
        Self {
            max_nodes: MAX_NODES,
            survival_cap: None,
            record_nodes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub word: Vec<usize>,
    /// Graph drawn at this node; `None` for frontier nodes.
    pub label: Option<usize>,
    pub vertex: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub word: Vec<usize>,
    pub vertex: usize,
    pub map: Similitude,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursiveTree {
    pub seed: u64,
    pub root: usize,
    pub nodes: Vec<TreeNode>,
    pub frontier: Vec<Leaf>,
    pub node_count: usize,
    pub extinct: bool,
    /// Growth stopped at the survival cap before reaching the stopping rule.
    pub truncated: bool,
}

type Key = [u8; 32];

fn root_key(seed: u64, vertex: usize) -> Key {
    let mut h = Sha256::new();
    h.update(b"rgds-node");
    h.update(seed.to_le_bytes());
    h.update((vertex as u64).to_le_bytes());
    h.finalize().into()
}

fn child_key(parent: &Key, edge: usize) -> Key {
    let mut h = Sha256::new();
    h.update(parent);
    h.update((edge as u32).to_le_bytes());
    h.finalize().into()
}

fn label_of(key: &Key, cdf: &[f64]) -> usize {
    let x = u64::from_le_bytes(key[..8].try_into().expect("8 bytes"));
    pick(cdf, unit_f64(x))
}

struct Open {
    key: Key,
    word: Vec<usize>,
    vertex: usize,
    map: Similitude,
}

/// Grows the tree rooted at `root`. The graph at each node is drawn from a hash of the
/// seed, the root vertex and the node word, so the result does not depend on the order
/// in which nodes are visited.
pub fn grow_tree(
    spec: &SystemSpec,
    seed: u64,
    root: usize,
    stop: TreeStop,
    limits: TreeLimits,
) -> Result<RecursiveTree, InfiniteError> {
    if root >= spec.n() {
        return Err(InfiniteError::UnknownVertex(root));
    }
    let cdf = cumulative(&spec.probs());
    let done = |o: &Open| match stop {
        TreeStop::Depth(d) => o.word.len() >= d,
        TreeStop::Epsilon(eps) => !o.word.is_empty() && ratio_le(o.map.ratio(), eps),
    };
    let mut open = vec![Open {
        key: root_key(seed, root),
        word: Vec::new(),
        vertex: root,
        map: Similitude::identity(spec.dim()),
    }];
    let mut frontier = Vec::new();
    let mut nodes = Vec::new();
    let mut count = 1usize;
    let mut truncated = false;
    while !open.is_empty() {
        let (finished, active): (Vec<Open>, Vec<Open>) = open.into_iter().partition(|o| done(o));
        for o in finished {
            if limits.record_nodes {
                nodes.push(TreeNode {
                    word: o.word.clone(),
                    label: None,
                    vertex: o.vertex,
                    ratio: o.map.ratio(),
                });
            }
            frontier.push(Leaf {
                word: o.word,
                vertex: o.vertex,
                map: o.map,
            });
        }
        if let Some(cap) = limits.survival_cap {
            if frontier.len() + active.len() >= cap {
                truncated = true;
                break;
            }
        }
        let expanded: Vec<(TreeNode, Vec<Open>)> = active
            .into_par_iter()
            .map(|o| {
                let label = label_of(&o.key, &cdf);
                let children = spec
                    .out_edges(label, o.vertex)
                    .iter()
                    .map(|&id| {
                        let e = spec.edge(id);
                        let mut word = o.word.clone();
                        word.push(id);
                        Open {
                            key: child_key(&o.key, id),
                            word,
                            vertex: e.to,
                            map: o.map.compose(&e.map),
                        }
                    })
                    .collect();
                (
                    TreeNode {
                        word: o.word,
                        label: Some(label),
                        vertex: o.vertex,
                        ratio: o.map.ratio(),
                    },
                    children,
                )
            })
            .collect();
        open = Vec::new();
        for (node, children) in expanded {
            count += children.len();
            if limits.record_nodes {
                nodes.push(node);
            }
            open.extend(children);
        }
        if count > limits.max_nodes {
            return Err(InfiniteError::DepthBudget(limits.max_nodes));
        }
    }
    frontier.sort_by(|a, b| a.word.cmp(&b.word));
    nodes.sort_by(|a, b| a.word.cmp(&b.word));
    Ok(RecursiveTree {
        seed,
        root,
        extinct: frontier.is_empty() && !truncated,
        nodes,
        frontier,
        node_count: count,
        truncated,
    })
}

impl RecursiveTree {
    /// `word;label;vertex;ratio`, one line per recorded node.
    pub fn dump(&self, spec: &SystemSpec) -> String {
        let mut s = String::from("word;label;vertex;ratio\n");
        for n in &self.nodes {
            let w = if n.word.is_empty() {
                "ε0".to_string()
            } else {
                n.word
                    .iter()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join("·")
            };
            let label = n.label.map_or("-".to_string(), |l| l.to_string());
            let _ = writeln!(
                s,
                "{w};{label};{};{:.17e}",
                spec.vertices()[n.vertex],
                n.ratio
            );
        }
        s
    }
}

/// Smallest fixed point in [0,1] of `x = Σ_i π_i x^{#edges(i)}` for a single vertex.
pub fn extinction_fixed_point(spec: &SystemSpec, vertex: usize) -> f64 {
    let mut x: f64 = 0.0;
    for _ in 0..100_000 {
        let next: f64 = spec
            .graphs()
            .iter()
            .enumerate()
            .map(|(i, g)| g.prob * x.powi(spec.out_edges(i, vertex).len() as i32))
            .sum();
        if (next - x).abs() < 1e-15 {
            return next;
        }
        x = next;
    }
    x
}

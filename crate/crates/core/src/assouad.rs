//! Joint spectral radius bounds and Assouad dimension estimates.
//!
//! For the 1-variable model the worst-case growth per stopping step `𝔓(ε)` is the
//! reciprocal of the `z` at which the layered family `W_z(w)` (first block row scaled
//! by `z`, one member per letter window `w`) has joint spectral radius 1. Consecutive
//! windows overlap, so only products with `w_{t+1} = shift(w_t)·a` are admissible.
//!
//! For the ∞-variable model every node chooses its graph independently, so the worst
//! case is the largest Perron root over the per-vertex choices of a stopping tree,
//! found by nonlinear power iteration on the max-over-choices operator.

use crate::geometry::Similitude;
use crate::linalg::{mul_into, spectral_radius, Mat};
use crate::pressure::{check_schedule, moran_blocks, LayerMatrix, PressureError};
use crate::stopping::{build_from_letters, ratio_le, select_disjoint, spec_k_max, StoppingEdge};
use crate::system::{validate_system, Mode, SystemSpec};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;

pub const DEFAULT_DEPTH: usize = 8;
/// Products explored before the depth is reduced.
pub const PRODUCT_BUDGET: usize = 100_000;
pub const SUBSAMPLE: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JsrError {
    #[error("matrix family is empty")]
    Empty,
    #[error("family members must be square and of equal size")]
    ShapeMismatch,
    #[error("depth must be at least 1")]
    BadDepth,
    #[error(transparent)]
    Pressure(#[from] PressureError),
}

impl From<crate::stopping::StoppingError> for JsrError {
    fn from(e: crate::stopping::StoppingError) -> Self {
        JsrError::Pressure(e.into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFamily {
    pub members: Vec<Mat>,
    pub labels: Vec<Vec<usize>>,
    /// `successors[i]`: members allowed right after member `i`. `None` allows all.
    pub successors: Option<Vec<Vec<usize>>>,
}

impl MatrixFamily {
    pub fn new(members: Vec<Mat>, labels: Vec<Vec<usize>>) -> Result<Self, JsrError> {
        let first = members.first().ok_or(JsrError::Empty)?;
        let size = first.rows();
        if members.iter().any(|m| m.rows() != size || m.cols() != size)
            || labels.len() != members.len()
        {
            return Err(JsrError::ShapeMismatch);
        }
        Ok(Self {
            members,
            labels,
            successors: None,
        })
    }

    pub fn with_successors(mut self, successors: Vec<Vec<usize>>) -> Self {
        self.successors = Some(successors);
        self
    }

    fn next(&self, i: usize) -> Vec<usize> {
        match &self.successors {
            Some(s) => s[i].clone(),
            None => (0..self.members.len()).collect(),
        }
    }

    fn allows(&self, a: usize, b: usize) -> bool {
        match &self.successors {
            Some(s) => s[a].contains(&b),
            None => true,
        }
    }

    /// Number of admissible sequences of each length `1..=depth`.
    fn counts(&self, depth: usize) -> Vec<usize> {
        let k = self.members.len();
        let mut ways = vec![1usize; k];
        let mut out = vec![k];
        for _ in 1..depth {
            let mut next = vec![0usize; k];
            for a in 0..k {
                for b in self.next(a) {
                    next[b] = next[b].saturating_add(ways[a]);
                }
            }
            ways = next;
            out.push(ways.iter().fold(0usize, |s, &x| s.saturating_add(x)));
        }
        out
    }

    /// Restriction to the given member indices.
    fn restrict(&self, keep: &[usize]) -> MatrixFamily {
        let pos: HashMap<usize, usize> = keep.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        MatrixFamily {
            members: keep.iter().map(|&i| self.members[i].clone()).collect(),
            labels: keep.iter().map(|&i| self.labels[i].clone()).collect(),
            successors: self.successors.as_ref().map(|s| {
                keep.iter()
                    .map(|&i| s[i].iter().filter_map(|j| pos.get(j).copied()).collect())
                    .collect()
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsrBounds {
    pub lower: f64,
    pub upper: f64,
    /// Longest product length explored.
    pub depth: usize,
    /// Labels of the product achieving `lower`.
    pub witness: Vec<Vec<usize>>,
    /// Set when the depth was reduced or the family subsampled.
    pub loose: bool,
}

struct Search<'f> {
    fam: &'f MatrixFamily,
    depth: usize,
    max_norm: Vec<f64>,
    best_lower: f64,
    best_seq: Vec<usize>,
    seq: Vec<usize>,
    bufs: Vec<Mat>,
}

impl Search<'_> {
    fn visit(&mut self, level: usize) {
        let len = level + 1;
        let p = &self.bufs[level];
        let norm = p.max_row_sum();
        if norm > self.max_norm[level] {
            self.max_norm[level] = norm;
        }
        let first = self.seq[0];
        let last = self.seq[level];
        if self.fam.allows(last, first) {
            let r = spectral_radius(p).powf(1.0 / len as f64);
            if r > self.best_lower * (1.0 + 1e-14) {
                self.best_lower = r;
                self.best_seq = self.seq.clone();
            }
        }
        if len == self.depth {
            return;
        }
        let size = p.rows();
        for b in self.fam.next(last) {
            let (head, tail) = self.bufs.split_at_mut(level + 1);
            mul_into(
                head[level].data(),
                self.fam.members[b].data(),
                tail[0].data_mut(),
                size,
                size,
                size,
            );
            self.seq.push(b);
            self.visit(level + 1);
            self.seq.pop();
        }
    }
}

/// Bounds on the joint spectral radius over admissible products of length ≤ `depth`.
/// Upper: `min_k (max ‖P‖)^{1/k}` over length-`k` products. Lower: the largest
/// `ρ(P)^{1/k}` over products that may repeat periodically.
pub fn jsr_bounds(fam: &MatrixFamily, depth: usize) -> Result<JsrBounds, JsrError> {
    if depth == 0 {
        return Err(JsrError::BadDepth);
    }
    if fam.members.is_empty() {
        return Err(JsrError::Empty);
    }
    if fam.members.len() == 1 && fam.allows(0, 0) {
        let rho = spectral_radius(&fam.members[0]);
        return Ok(JsrBounds {
            lower: rho,
            upper: rho,
            depth,
            witness: vec![fam.labels[0].clone()],
            loose: false,
        });
    }
    let mut loose = false;
    let mut work = fam.clone();
    let total = |c: &[usize]| c.iter().fold(0usize, |s, &x| s.saturating_add(x));
    if work.members.len() > SUBSAMPLE && total(&work.counts(depth)) > PRODUCT_BUDGET {
        let mut idx: Vec<usize> = (0..work.members.len()).collect();
        idx.sort_by(|&a, &b| {
            work.members[b]
                .max_row_sum()
                .total_cmp(&work.members[a].max_row_sum())
                .then(a.cmp(&b))
        });
        idx.truncate(SUBSAMPLE);
        idx.sort();
        work = work.restrict(&idx);
        loose = true;
    }
    let counts = work.counts(depth);
    let mut d = depth;
    while d > 1 && total(&counts[..d]) > PRODUCT_BUDGET {
        d -= 1;
        loose = true;
    }
    let size = work.members[0].rows();
    let mut search = Search {
        fam: &work,
        depth: d,
        max_norm: vec![0.0; d],
        best_lower: 0.0,
        best_seq: Vec::new(),
        seq: Vec::with_capacity(d),
        bufs: vec![Mat::zeros(size, size); d],
    };
    for a in 0..work.members.len() {
        search.bufs[0] = work.members[a].clone();
        search.seq.push(a);
        search.visit(0);
        search.seq.pop();
    }
    let upper = search
        .max_norm
        .iter()
        .enumerate()
        .map(|(i, n)| n.powf(1.0 / (i + 1) as f64))
        .fold(f64::INFINITY, f64::min);
    let lower = search.best_lower.min(upper);
    Ok(JsrBounds {
        lower,
        upper,
        depth: d,
        witness: search
            .best_seq
            .iter()
            .map(|&i| work.labels[i].clone())
            .collect(),
        loose,
    })
}

/// All words of length `len` over `letters`, in lexicographic order.
fn windows(letters: &[usize], len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|w| {
                letters.iter().map(move |&a| {
                    let mut v = w.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssouadPoint {
    pub eps: f64,
    pub k_max: usize,
    pub family_size: usize,
    /// Bounds on `log 𝔓(ε)`.
    pub log_growth_lower: f64,
    pub log_growth_upper: f64,
    pub witness: Vec<Vec<usize>>,
    pub loose: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssouadEstimate {
    pub points: Vec<AssouadPoint>,
    /// Slopes of the lower `log 𝔓` against `−log ε` between consecutive scales.
    pub increments: Vec<f64>,
    /// Final increment of the lower growth bounds, capped at the ambient dimension.
    pub lower_bound: f64,
    /// The same from the upper growth bounds.
    pub upper_estimate: f64,
    /// `max log 𝔓_lower(ε) / −log ε` over the schedule, capped.
    pub literal_sup: f64,
    /// Set when the seed-box images are separated, making the estimate the dimension.
    pub value_if_ussc: Option<f64>,
    pub loose: bool,
}

fn summarize(spec: &SystemSpec, points: Vec<AssouadPoint>, mode: Mode) -> AssouadEstimate {
    let d = spec.dim() as f64;
    let slope = |get: fn(&AssouadPoint) -> f64| -> Vec<f64> {
        points
            .windows(2)
            .map(|w| (get(&w[1]) - get(&w[0])) / (w[0].eps / w[1].eps).ln())
            .collect()
    };
    let lower_inc = slope(|p| p.log_growth_lower);
    let upper_inc = slope(|p| p.log_growth_upper);
    let single = |p: &AssouadPoint, v: f64| v / -p.eps.ln();
    let lower_bound = lower_inc
        .last()
        .copied()
        .unwrap_or_else(|| single(&points[0], points[0].log_growth_lower))
        .clamp(0.0, d);
    let upper_estimate = upper_inc
        .last()
        .copied()
        .unwrap_or_else(|| single(&points[0], points[0].log_growth_upper))
        .clamp(0.0, d);
    let literal_sup = points
        .iter()
        .map(|p| single(p, p.log_growth_lower))
        .fold(0.0, f64::max)
        .min(d);
    let ussc = validate_system(spec, mode).ussc_sufficient;
    AssouadEstimate {
        loose: points.iter().any(|p| p.loose),
        points,
        increments: lower_inc,
        lower_bound,
        upper_estimate,
        literal_sup,
        value_if_ussc: ussc.then_some(lower_bound),
    }
}

/// Smallest `t ≥ 0` with `f(e^{-t}) ≤ 1` for `f` non-decreasing in `z`, i.e. the
/// largest `z ≤ 1` with `f(z) ≤ 1`, returned as `-ln z`.
fn log_root<F>(mut f: F, t_max: f64) -> Result<f64, JsrError>
where
    F: FnMut(f64) -> Result<f64, JsrError>,
{
    if f(1.0)? <= 1.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, t_max);
    while f((-hi).exp())? > 1.0 {
        hi *= 2.0;
    }
    while hi - lo > 1e-11 * (1.0 + hi) {
        let mid = 0.5 * (lo + hi);
        if f((-mid).exp())? > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bounds on `log 𝔓(ε)` for the 1-variable model, with the witness of the lower bound.
pub fn growth_bounds_1var(
    spec: &SystemSpec,
    eps: f64,
    depth: usize,
) -> Result<AssouadPoint, JsrError> {
    let l = spec_k_max(spec, eps)?;
    let n = spec.n();
    let labels = windows(&spec.active_letters(), l);
    let blocks: Vec<_> = labels
        .iter()
        .map(|w| build_from_letters(spec, w, eps).map(|g| moran_blocks(&g, n, 0.0)))
        .collect::<Result<_, _>>()?;
    let index: HashMap<&[usize], usize> = labels
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_slice(), i))
        .collect();
    let successors: Vec<Vec<usize>> = labels
        .iter()
        .map(|w| {
            labels
                .iter()
                .filter(|v| v[..l - 1] == w[1..])
                .map(|v| index[v.as_slice()])
                .collect()
        })
        .collect();
    let family_at = |z: f64| -> Result<MatrixFamily, JsrError> {
        let members = blocks
            .iter()
            .map(|b| LayerMatrix::from_blocks(b, n, z).matrix)
            .collect();
        Ok(MatrixFamily::new(members, labels.clone())?.with_successors(successors.clone()))
    };
    let t_max = blocks
        .iter()
        .map(|b| {
            let mut s = Mat::zeros(n, n);
            b.iter().for_each(|x| s.add_assign(&x.matrix));
            s.max_row_sum()
        })
        .fold(1.0, f64::max)
        .ln()
        + 1.0;
    let mut loose = false;
    let t_lower = log_root(
        |z| {
            let b = jsr_bounds(&family_at(z)?, depth)?;
            loose |= b.loose;
            Ok(b.lower)
        },
        t_max,
    )?;
    let t_upper = log_root(
        |z| {
            let b = jsr_bounds(&family_at(z)?, depth)?;
            loose |= b.loose;
            Ok(b.upper)
        },
        t_max,
    )?;
    let witness = jsr_bounds(&family_at((-t_lower).exp())?, depth)?.witness;
    Ok(AssouadPoint {
        eps,
        k_max: l,
        family_size: labels.len(),
        log_growth_lower: t_lower,
        log_growth_upper: t_upper.max(t_lower),
        witness,
        loose,
    })
}

pub fn assouad_1var(
    spec: &SystemSpec,
    eps_schedule: &[f64],
    depth: usize,
) -> Result<AssouadEstimate, JsrError> {
    check_schedule(eps_schedule)?;
    let points = eps_schedule
        .iter()
        .map(|&e| growth_bounds_1var(spec, e, depth))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(spec, points, Mode::OneVar))
}

/// Best stopping subtree below `(vertex, ratio)` for weights `x`: value and the count
/// vector of its leaves by terminal vertex.
struct TreeDp<'a> {
    spec: &'a SystemSpec,
    eps: f64,
    letters: Vec<usize>,
    x: Vec<f64>,
    memo: HashMap<(usize, i64), (f64, Vec<f64>)>,
}

impl TreeDp<'_> {
    fn best(&mut self, v: usize, ratio: f64) -> (f64, Vec<f64>) {
        let key = (v, (ratio.ln() * 1e9).round() as i64);
        if let Some(hit) = self.memo.get(&key) {
            return hit.clone();
        }
        let n = self.spec.n();
        let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
        for &i in &self.letters.clone() {
            let mut val = 0.0;
            let mut counts = vec![0.0; n];
            for &id in self.spec.out_edges(i, v) {
                let e = self.spec.edge(id);
                let c = ratio * e.map.ratio();
                if ratio_le(c, self.eps) {
                    val += self.x[e.to];
                    counts[e.to] += 1.0;
                } else {
                    let (sv, sc) = self.best(e.to, c);
                    val += sv;
                    counts.iter_mut().zip(sc).for_each(|(a, b)| *a += b);
                }
            }
            if val > best.0 {
                best = (val, counts);
            }
        }
        self.memo.insert(key, best.clone());
        best
    }
}

/// Largest Perron root over the independent per-node choices of a stopping tree,
/// as `(lower, upper)` on `ρ` and the count matrix of the maximizing choice.
pub fn max_tree_radius(spec: &SystemSpec, eps: f64) -> (f64, f64, Mat) {
    let n = spec.n();
    let mut x = vec![1.0; n];
    let mut lower = 0.0;
    let mut upper = f64::INFINITY;
    let mut policy = Mat::zeros(n, n);
    for _ in 0..2000 {
        let mut dp = TreeDp {
            spec,
            eps,
            letters: spec.active_letters(),
            x: x.clone(),
            memo: HashMap::new(),
        };
        let rows: Vec<(f64, Vec<f64>)> = (0..n).map(|v| dp.best(v, 1.0)).collect();
        let ratios: Vec<f64> = (0..n).map(|v| rows[v].0 / x[v]).collect();
        lower = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        upper = ratios.iter().cloned().fold(0.0, f64::max);
        policy = Mat::from_rows(&rows.iter().map(|r| r.1.clone()).collect::<Vec<_>>());
        if upper - lower <= 1e-12 * upper {
            break;
        }
        let tau = 0.5 * upper;
        let y: Vec<f64> = (0..n).map(|v| rows[v].0 + tau * x[v]).collect();
        let norm: f64 = y.iter().sum();
        x = y.iter().map(|v| v / norm).collect();
    }
    let rho = spectral_radius(&policy);
    (lower.max(rho).min(upper), upper, policy)
}

/// Leaves of the stopping tree below `v` that follows the given per-node choice.
fn choice_tree_leaves(
    spec: &SystemSpec,
    eps: f64,
    v: usize,
    choose: &mut dyn FnMut(usize, f64) -> usize,
) -> Vec<StoppingEdge> {
    fn rec(
        spec: &SystemSpec,
        eps: f64,
        from: usize,
        at: usize,
        map: &Similitude,
        word: &mut Vec<usize>,
        choose: &mut dyn FnMut(usize, f64) -> usize,
        out: &mut Vec<StoppingEdge>,
    ) {
        let g = choose(at, map.ratio());
        for &id in spec.out_edges(g, at) {
            let e = spec.edge(id);
            let next = map.compose(&e.map);
            word.push(id);
            if ratio_le(next.ratio(), eps) {
                out.push(StoppingEdge {
                    word: word.clone(),
                    from,
                    to: e.to,
                    gamma_len: word.len(),
                    ratio: next.ratio(),
                    map: next,
                    image: next.apply_box(spec.seed_box()),
                });
            } else {
                rec(spec, eps, from, e.to, &next, word, choose, out);
            }
            word.pop();
        }
    }
    let mut out = Vec::new();
    rec(
        spec,
        eps,
        v,
        v,
        &Similitude::identity(spec.dim()),
        &mut Vec::new(),
        choose,
        &mut out,
    );
    out
}

/// Bounds on `log` of the worst-case ∞-variable growth at scale `eps`. Without
/// separation the maximizing tree is pruned to disjoint images and its Perron root
/// taken, which is a valid lower bound.
pub fn growth_bounds_inf(spec: &SystemSpec, eps: f64) -> Result<AssouadPoint, JsrError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(crate::stopping::StoppingError::BadEpsilon(eps).into());
    }
    let l = spec_k_max(spec, eps)?;
    let (lower, upper, _) = max_tree_radius(spec, eps);
    let ussc = validate_system(spec, Mode::InfVar).ussc_sufficient;
    let lower = if ussc {
        lower
    } else {
        // follow the leaf-count maximizing choice at every node, then prune
        let n = spec.n();
        let mut dp = TreeDp {
            spec,
            eps,
            letters: spec.active_letters(),
            x: vec![1.0; n],
            memo: HashMap::new(),
        };
        let letters = spec.active_letters();
        let mut choose = |at: usize, ratio: f64| -> usize {
            let mut best = (f64::NEG_INFINITY, letters[0]);
            for &i in &letters {
                let mut val = 0.0;
                for &id in spec.out_edges(i, at) {
                    let e = spec.edge(id);
                    let c = ratio * e.map.ratio();
                    val += if ratio_le(c, eps) {
                        1.0
                    } else {
                        dp.best(e.to, c).0
                    };
                }
                if val > best.0 {
                    best = (val, i);
                }
            }
            best.1
        };
        let mut counts = Mat::zeros(n, n);
        for v in 0..n {
            let leaves = choice_tree_leaves(spec, eps, v, &mut choose);
            let (kept, _) = select_disjoint(leaves);
            for e in kept {
                counts[(v, e.to)] += 1.0;
            }
        }
        spectral_radius(&counts)
    };
    Ok(AssouadPoint {
        eps,
        k_max: l,
        family_size: spec.active_letters().len(),
        log_growth_lower: lower.ln(),
        log_growth_upper: upper.ln().max(lower.ln()),
        witness: Vec::new(),
        loose: !ussc,
    })
}

pub fn assouad_inf(spec: &SystemSpec, eps_schedule: &[f64]) -> Result<AssouadEstimate, JsrError> {
    check_schedule(eps_schedule)?;
    let points = eps_schedule
        .iter()
        .map(|&e| growth_bounds_inf(spec, e))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(spec, points, Mode::InfVar))
}

/// `eps;k_max;family_size;lower;upper;witness` with bounds on `𝔓(ε)` itself. Witness
/// windows are space-separated, graph indices within a window joined by `·`.
pub fn jsr_csv(points: &[AssouadPoint]) -> String {
    let mut out = String::from("eps;k_max;family_size;lower;upper;witness\n");
    for p in points {
        let w: Vec<String> = p
            .witness
            .iter()
            .map(|l| {
                l.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join("·")
            })
            .collect();
        let _ = writeln!(
            out,
            "{};{};{};{:.15e};{:.15e};{}",
            p.eps,
            p.k_max,
            p.family_size,
            p.log_growth_lower.exp(),
            p.log_growth_upper.exp(),
            w.join(" ")
        );
    }
    out
}

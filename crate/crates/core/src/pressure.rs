//! Growth rates of random banded products of Hutchinson–Moran blocks and the roots
//! that give dimensions.
//!
//! A band vector holds, for each offset `j` (total path length in the original graphs),
//! an `n×n` block. One step multiplies the block at offset `j` by the blocks `p_q`
//! built from the letters starting at position `j` and accumulates the result at
//! `j + q`. The whole vector is then divided by its seminorm (the largest row sum of the
//! sum of blocks) and the log of the divisor is accumulated.

use crate::linalg::{mul_add_into, spectral_radius, Mat};
use crate::realization::{derive_seed, RealizationStream};
use crate::stopping::{build_from_letters, spec_k_max, StoppingError, StoppingGraph};
use crate::system::SystemSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;

/// Relative size below which blocks at either end of the window are dropped.
pub const DEFAULT_PRUNE: f64 = 1e-20;
pub const DEFAULT_K: usize = 2000;
pub const DEFAULT_M: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-3;
pub const DETERMINISTIC_TOL: f64 = 1e-9;
const MAX_BRACKET: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PressureError {
    #[error(transparent)]
    Stopping(#[from] StoppingError),
    #[error("band vector vanished at step {0}")]
    DeadVector(usize),
    #[error("no root bracket: {0}")]
    BracketFailure(String),
    #[error("the seed-box images are not separated, so the result would only be a lower bound")]
    NotUssc,
    #[error("bad parameter: {0}")]
    BadParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranBlock {
    pub q: usize,
    pub matrix: Mat,
}

/// Blocks `p_q` for `q = 1..=k_max`: entry `(v,w)` sums `c^s` over kept edges
/// `v -> w` of length `q`.
pub fn moran_blocks(sg: &StoppingGraph, n: usize, s: f64) -> Vec<MoranBlock> {
    let mut out: Vec<MoranBlock> = (1..=sg.k_max)
        .map(|q| MoranBlock {
            q,
            matrix: Mat::zeros(n, n),
        })
        .collect();
    for e in &sg.edges {
        out[e.gamma_len - 1].matrix[(e.from, e.to)] += e.ratio.powf(s);
    }
    out
}

/// Stopping-edge data needed to form blocks at any `s`.
#[derive(Debug, Clone)]
struct Kernel {
    /// `(from, to, q, ln ratio)`
    edges: Vec<(usize, usize, usize, f64)>,
}

impl Kernel {
    fn from_graph(sg: &StoppingGraph) -> Self {
        Self {
            edges: sg
                .edges
                .iter()
                .map(|e| (e.from, e.to, e.gamma_len, e.ratio.ln()))
                .collect(),
        }
    }

    /// Non-zero blocks at `s` as `(q, row-major n×n)`, ascending in `q`.
    fn blocks(&self, n: usize, s: f64) -> Vec<(usize, Vec<f64>)> {
        let mut by_q: Vec<(usize, Vec<f64>)> = Vec::new();
        for &(f, t, q, lr) in &self.edges {
            let pos = match by_q.iter().position(|(qq, _)| *qq == q) {
                Some(p) => p,
                None => {
                    by_q.push((q, vec![0.0; n * n]));
                    by_q.len() - 1
                }
            };
            by_q[pos].1[f * n + t] += (s * lr).exp();
        }
        by_q.sort_by_key(|(q, _)| *q);
        by_q
    }
}

/// The row `𝟙 P(ω) P(σω) ⋯` in scaled form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandVector {
    n: usize,
    base: usize,
    blocks: Vec<f64>,
    pub log_scale: f64,
    pub steps: usize,
}

impl BandVector {
    /// 𝟙: the identity at offset 0.
    pub fn unit(n: usize) -> Self {
        Self {
            n,
            base: 0,
            blocks: Mat::identity(n).data().to_vec(),
            log_scale: 0.0,
            steps: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Smallest stored offset.
    pub fn base(&self) -> usize {
        self.base
    }

    pub fn width(&self) -> usize {
        self.blocks.len() / (self.n * self.n)
    }

    pub fn offsets(&self) -> std::ops::Range<usize> {
        self.base..self.base + self.width()
    }

    /// Stored (scaled) block at offset `j`.
    pub fn block(&self, j: usize) -> Option<&[f64]> {
        let nn = self.n * self.n;
        if j < self.base || j >= self.base + self.width() {
            return None;
        }
        let i = j - self.base;
        Some(&self.blocks[i * nn..(i + 1) * nn])
    }

    /// Unscaled block at offset `j`; zero outside the stored window.
    pub fn unscaled_block(&self, j: usize) -> Mat {
        let k = self.log_scale.exp();
        match self.block(j) {
            Some(b) => Mat::from_vec(self.n, self.n, b.iter().map(|x| x * k).collect()),
            None => Mat::zeros(self.n, self.n),
        }
    }

    /// Row sums of the sum of stored blocks.
    pub fn row_sums(&self) -> Vec<f64> {
        let n = self.n;
        let mut r = vec![0.0; n];
        for b in self.blocks.chunks(n * n) {
            for i in 0..n {
                r[i] += b[i * n..(i + 1) * n].iter().sum::<f64>();
            }
        }
        r
    }

    /// Largest row sum of the sum of stored blocks.
    pub fn seminorm(&self) -> f64 {
        self.row_sums().into_iter().fold(0.0, f64::max)
    }

    pub fn all_finite_nonnegative(&self) -> bool {
        self.blocks.iter().all(|x| x.is_finite() && *x >= 0.0)
    }
}

/// One stopping-edge factor. `blocks_at(j)` supplies the non-zero blocks built from the
/// letters starting at offset `j`.
fn apply_step<'b, F>(
    bv: &BandVector,
    k_max: usize,
    prune_rel: f64,
    mut blocks_at: F,
) -> Result<BandVector, PressureError>
where
    F: FnMut(usize) -> &'b [(usize, Vec<f64>)],
{
    let n = bv.n;
    let nn = n * n;
    let width = bv.width();
    let new_base = bv.base + 1;
    let new_width = width + k_max - 1;
    let mut out = vec![0.0; new_width * nn];
    for i in 0..width {
        let b = &bv.blocks[i * nn..(i + 1) * nn];
        if b.iter().all(|&x| x == 0.0) {
            continue;
        }
        let j = bv.base + i;
        for (q, p) in blocks_at(j) {
            let t = j + q - new_base;
            mul_add_into(b, p, &mut out[t * nn..(t + 1) * nn], n, n, n);
        }
    }
    // trim negligible blocks at both ends
    let peak = out.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 || !peak.is_finite() {
        return Err(PressureError::DeadVector(bv.steps + 1));
    }
    let cut = peak * prune_rel;
    let small = |c: &[f64]| c.iter().all(|&x| x <= cut);
    let chunks: Vec<&[f64]> = out.chunks(nn).collect();
    let first = chunks.iter().position(|c| !small(c)).unwrap_or(0);
    let last = chunks.iter().rposition(|c| !small(c)).unwrap_or(0);
    let mut blocks = out[first * nn..(last + 1) * nn].to_vec();
    let mut next = BandVector {
        n,
        base: new_base + first,
        blocks: Vec::new(),
        log_scale: bv.log_scale,
        steps: bv.steps + 1,
    };
    std::mem::swap(&mut next.blocks, &mut blocks);
    let norm = next.seminorm();
    if norm <= 0.0 || !norm.is_finite() {
        return Err(PressureError::DeadVector(next.steps));
    }
    let inv = 1.0 / norm;
    next.blocks.iter_mut().for_each(|x| *x *= inv);
    next.log_scale += norm.ln();
    Ok(next)
}

/// One step built directly from the stream (no caching). Convenient for small
/// experiments; bulk estimation goes through [`PressureProblem`].
pub fn band_step(
    bv: &BandVector,
    spec: &SystemSpec,
    stream: &RealizationStream,
    s: f64,
    eps: f64,
) -> Result<BandVector, PressureError> {
    let km = spec_k_max(spec, eps)?;
    let mut per_offset = HashMap::new();
    for j in bv.offsets() {
        let letters = stream.shifted(j as u64).sample_letters(km);
        let sg = build_from_letters(spec, &letters, eps)?;
        per_offset.insert(j, Kernel::from_graph(&sg).blocks(spec.n(), s));
    }
    apply_step(bv, km, 0.0, |j| per_offset[&j].as_slice())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureEstimate {
    pub s: f64,
    pub eps: f64,
    pub k: usize,
    pub m: usize,
    pub log_psi_mean: f64,
    pub log_psi_stderr: f64,
    pub per_vertex_log: Vec<f64>,
    /// Per-realization `log_scale / k`, in sample order.
    pub samples: Vec<f64>,
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Stopping graphs and letter positions for `m` fixed realizations, reused across
/// every `s` probe (common random numbers).
pub struct PressureProblem<'a> {
    spec: &'a SystemSpec,
    eps: f64,
    k: usize,
    m: usize,
    seed: u64,
    k_max: usize,
    prune_rel: f64,
    kernels: Vec<Kernel>,
    /// `positions[i][j]`: kernel index for offset `j` of realization `i`.
    positions: Vec<Vec<u32>>,
}

impl<'a> PressureProblem<'a> {
    /// Deterministic systems are reduced to a single realization.
    pub fn new(
        spec: &'a SystemSpec,
        eps: f64,
        k: usize,
        m: usize,
        seed: u64,
    ) -> Result<Self, PressureError> {
        if k == 0 || m == 0 {
            return Err(PressureError::BadParameter(
                "k and m must be positive".into(),
            ));
        }
        if !(eps > 0.0) {
            return Err(StoppingError::BadEpsilon(eps).into());
        }
        let m = if spec.is_deterministic() { 1 } else { m };
        let km = spec_k_max(spec, eps)?;
        let probs = spec.probs();
        let alphabet = spec.num_letters();
        let span = k * km;
        let mut ids: HashMap<Vec<u8>, u32> = HashMap::new();
        let mut prefixes: Vec<Vec<usize>> = Vec::new();
        let mut positions = Vec::with_capacity(m);
        for i in 0..m {
            let letters = sample_stream(seed, i, &probs).sample_letters(span);
            let mut row = Vec::with_capacity(span - km + 1);
            for j in 0..=(span - km) {
                let w = &letters[j..j + km];
                let key: Vec<u8> = if alphabet <= 256 {
                    w.iter().map(|&x| x as u8).collect()
                } else {
                    w.iter().flat_map(|&x| (x as u32).to_le_bytes()).collect()
                };
                let next = ids.len() as u32;
                let id = *ids.entry(key).or_insert_with(|| {
                    prefixes.push(w.to_vec());
                    next
                });
                row.push(id);
            }
            positions.push(row);
        }
        let kernels = prefixes
            .par_iter()
            .map(|w| build_from_letters(spec, w, eps).map(|g| Kernel::from_graph(&g)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            spec,
            eps,
            k,
            m,
            seed,
            k_max: km,
            prune_rel: DEFAULT_PRUNE,
            kernels,
            positions,
        })
    }

    /// Relative cut for trimming window ends; 0 keeps every non-zero block.
    pub fn with_prune(mut self, rel: f64) -> Self {
        self.prune_rel = rel;
        self
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Number of distinct stopping graphs in use.
    pub fn distinct_graphs(&self) -> usize {
        self.kernels.len()
    }

    fn blocks_at_s(&self, s: f64) -> Vec<Vec<(usize, Vec<f64>)>> {
        let n = self.spec.n();
        self.kernels.iter().map(|k| k.blocks(n, s)).collect()
    }

    fn run_one(
        &self,
        i: usize,
        steps: usize,
        blocks: &[Vec<(usize, Vec<f64>)>],
    ) -> Result<BandVector, PressureError> {
        let pos = &self.positions[i];
        let mut bv = BandVector::unit(self.spec.n());
        for _ in 0..steps {
            bv = apply_step(&bv, self.k_max, self.prune_rel, |j| {
                blocks[pos[j] as usize].as_slice()
            })?;
        }
        Ok(bv)
    }

    /// Band vector of realization `i` after `steps ≤ k` steps.
    pub fn band(&self, i: usize, s: f64, steps: usize) -> Result<BandVector, PressureError> {
        assert!(steps <= self.k && i < self.m);
        self.run_one(i, steps, &self.blocks_at_s(s))
    }

    pub fn estimate(&self, s: f64) -> Result<PressureEstimate, PressureError> {
        let blocks = self.blocks_at_s(s);
        let n = self.spec.n();
        let kf = self.k as f64;
        let runs: Vec<(f64, Vec<f64>)> = (0..self.m)
            .into_par_iter()
            .map(|i| {
                let bv = self.run_one(i, self.k, &blocks)?;
                let rows = bv
                    .row_sums()
                    .iter()
                    .map(|r| (bv.log_scale + r.ln()) / kf)
                    .collect();
                Ok((bv.log_scale / kf, rows))
            })
            .collect::<Result<_, PressureError>>()?;
        let samples: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let (mean, se) = mean_stderr(&samples);
        let mut per_vertex = vec![0.0; n];
        for (_, rows) in &runs {
            for v in 0..n {
                per_vertex[v] += rows[v] / self.m as f64;
            }
        }
        Ok(PressureEstimate {
            s,
            eps: self.eps,
            k: self.k,
            m: self.m,
            log_psi_mean: mean,
            log_psi_stderr: se,
            per_vertex_log: per_vertex,
            samples,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// The stream of realization `i` for a run seeded with `seed`.
pub fn sample_stream(seed: u64, i: usize, probs: &[f64]) -> RealizationStream {
    RealizationStream::new(derive_seed(seed, i as u64), probs)
}

pub fn psi_estimate(
    spec: &SystemSpec,
    s: f64,
    eps: f64,
    k: usize,
    m: usize,
    seed: u64,
) -> Result<PressureEstimate, PressureError> {
    PressureProblem::new(spec, eps, k, m, seed)?.estimate(s)
}

/// Illinois-modified regula falsi for a non-increasing `f` with `f(lo) ≥ 0 > f(hi)`.
/// Probes closer than `tol/2` to an end are moved to `tol/2` inside it, so the bracket
/// closes to width `tol`. Returns the bracket and the true values at its ends.
pub fn refine_root_decreasing<F>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    mut f_lo: f64,
    mut f_hi: f64,
    tol: f64,
) -> Result<(f64, f64, f64, f64), PressureError>
where
    F: FnMut(f64) -> Result<f64, PressureError>,
{
    let (mut w_lo, mut w_hi) = (f_lo, f_hi);
    let mut side = 0i8;
    let mut iters = 0;
    while hi - lo > tol {
        iters += 1;
        let mid = 0.5 * (lo + hi);
        let mut x = if iters > 100 || w_lo - w_hi <= 0.0 {
            mid
        } else {
            (lo * w_hi - hi * w_lo) / (w_hi - w_lo)
        };
        if !x.is_finite() || x <= lo || x >= hi {
            x = mid;
        }
        let half = 0.5 * tol;
        x = x.clamp(
            lo + half.min(0.5 * (hi - lo)),
            hi - half.min(0.5 * (hi - lo)),
        );
        if x <= lo || x >= hi {
            break;
        }
        let v = f(x)?;
        if v >= 0.0 {
            lo = x;
            f_lo = v;
            w_lo = v;
            if side == 1 {
                w_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = x;
            f_hi = v;
            w_hi = v;
            if side == -1 {
                w_lo *= 0.5;
            }
            side = -1;
        }
    }
    Ok((lo, hi, f_lo, f_hi))
}

/// Finds `s_up ≥ 1` with `f(s_up) < 0` by doubling, given `f(0) ≥ 0`.
fn upper_bracket<F>(f: &mut F) -> Result<(f64, f64), PressureError>
where
    F: FnMut(f64) -> Result<f64, PressureError>,
{
    let mut hi = 1.0;
    loop {
        let v = f(hi)?;
        if v < 0.0 {
            return Ok((hi, v));
        }
        hi *= 2.0;
        if hi > MAX_BRACKET {
            return Err(PressureError::BracketFailure(format!(
                "growth rate still non-negative at s = {hi}"
            )));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootEstimate {
    pub s: f64,
    pub stderr: f64,
    pub bracket: (f64, f64),
    pub probes: usize,
    pub method: String,
}

/// Root of a decreasing rate function over `[0, ∞)`, with delta-method error from the
/// standard error at the root.
fn solve_root<F>(mut f: F, tol: f64, method: &str) -> Result<RootEstimate, PressureError>
where
    F: FnMut(f64) -> Result<(f64, f64), PressureError>,
{
    let mut probes = 0usize;
    let mut g = |s: f64| -> Result<f64, PressureError> {
        probes += 1;
        f(s).map(|(v, _)| v)
    };
    let f0 = g(0.0)?;
    if f0 < 0.0 {
        return Err(PressureError::BracketFailure(format!(
            "log growth rate at s = 0 is {f0} < 0"
        )));
    }
    if f0 == 0.0 {
        return Ok(RootEstimate {
            s: 0.0,
            stderr: 0.0,
            bracket: (0.0, 0.0),
            probes,
            method: method.into(),
        });
    }
    let (hi, f_hi) = upper_bracket(&mut g)?;
    let (lo, hi, f_lo, f_hi) = refine_root_decreasing(&mut g, 0.0, hi, f0, f_hi, tol)?;
    let root = 0.5 * (lo + hi);
    let (_, se) = f(root)?;
    probes += 1;
    let slope = if hi > lo {
        (f_hi - f_lo) / (hi - lo)
    } else {
        0.0
    };
    let stderr = if se == 0.0 || slope == 0.0 {
        0.0
    } else {
        se / slope.abs()
    };
    Ok(RootEstimate {
        s: root,
        stderr,
        bracket: (lo, hi),
        probes,
        method: method.into(),
    })
}

/// `s_{H,ε}`: the zero of `log Ψ(·, ε)` under common random numbers.
pub fn solve_s_h(
    spec: &SystemSpec,
    eps: f64,
    k: usize,
    m: usize,
    seed: u64,
    tol: f64,
) -> Result<RootEstimate, PressureError> {
    let tol = if spec.is_deterministic() {
        tol.min(DETERMINISTIC_TOL)
    } else {
        tol
    };
    let problem = PressureProblem::new(spec, eps, k, m, seed)?;
    solve_root(
        |s| {
            problem
                .estimate(s)
                .map(|e| (e.log_psi_mean, e.log_psi_stderr))
        },
        tol,
        "banded-product pressure root",
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalePoint {
    pub eps: f64,
    pub log_psi: f64,
    pub stderr: f64,
    /// `log Ψ(0,ε) / −log ε`
    pub t_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Increment {
    pub eps_from: f64,
    pub eps_to: f64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDimensionEstimate {
    pub points: Vec<ScalePoint>,
    /// Slopes of `log Ψ(0,ε)` against `−log ε` between consecutive scales.
    pub increments: Vec<Increment>,
    /// The increment at the finest pair of scales (or `t_ε` for a single scale).
    pub estimate: f64,
    pub stderr: f64,
    pub largest_t: f64,
}

pub fn check_schedule(eps_schedule: &[f64]) -> Result<(), PressureError> {
    if eps_schedule.is_empty() {
        return Err(PressureError::BadParameter("empty epsilon schedule".into()));
    }
    if eps_schedule.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(PressureError::BadParameter(
            "schedule entries must lie in (0,1)".into(),
        ));
    }
    if eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(PressureError::BadParameter(
            "schedule must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Box dimension from the growth of `log Ψ(0,ε)` across a decreasing schedule.
pub fn box_dimension_1var(
    spec: &SystemSpec,
    eps_schedule: &[f64],
    k: usize,
    m: usize,
    seed: u64,
) -> Result<BoxDimensionEstimate, PressureError> {
    check_schedule(eps_schedule)?;
    let mut ests = Vec::new();
    for &eps in eps_schedule {
        ests.push(PressureProblem::new(spec, eps, k, m, seed)?.estimate(0.0)?);
    }
    let points: Vec<ScalePoint> = ests
        .iter()
        .map(|e| ScalePoint {
            eps: e.eps,
            log_psi: e.log_psi_mean,
            stderr: e.log_psi_stderr,
            t_eps: e.log_psi_mean / -e.eps.ln(),
        })
        .collect();
    let increments: Vec<Increment> = ests
        .windows(2)
        .map(|w| {
            let d = (w[0].eps / w[1].eps).ln();
            let per: Vec<f64> = w[0]
                .samples
                .iter()
                .zip(&w[1].samples)
                .map(|(a, b)| (b - a) / d)
                .collect();
            let (value, stderr) = mean_stderr(&per);
            Increment {
                eps_from: w[0].eps,
                eps_to: w[1].eps,
                value,
                stderr,
            }
        })
        .collect();
    let (estimate, stderr) = match increments.last() {
        Some(inc) => (inc.value, inc.stderr),
        None => (points[0].t_eps, points[0].stderr / -points[0].eps.ln()),
    };
    let largest_t = points.iter().map(|p| p.t_eps).fold(f64::MIN, f64::max);
    Ok(BoxDimensionEstimate {
        points,
        increments,
        estimate,
        stderr,
        largest_t,
    })
}

/// Hutchinson–Moran matrix of graph `i` at `s`.
pub fn hutchinson_matrix(spec: &SystemSpec, graph: usize, s: f64) -> Mat {
    let n = spec.n();
    let mut m = Mat::zeros(n, n);
    for &id in &spec.graphs()[graph].edges {
        let e = spec.edge(id);
        m[(e.from, e.to)] += e.map.ratio().powf(s);
    }
    m
}

/// `Σ_i π_i log Σ_{e ∈ E(i)} c_e^s` for single-vertex systems.
pub fn single_vertex_rate(spec: &SystemSpec, s: f64) -> f64 {
    spec.graphs()
        .iter()
        .enumerate()
        .filter(|(_, g)| g.prob > 0.0)
        .map(|(i, g)| g.prob * hutchinson_matrix(spec, i, s)[(0, 0)].ln())
        .sum()
}

/// Lyapunov exponent of `p^s(ω_1) p^s(ω_2) ⋯` (single edges only), per sample.
pub fn lyapunov_samples(spec: &SystemSpec, s: f64, k: usize, m: usize, seed: u64) -> Vec<f64> {
    let n = spec.n();
    let mats: Vec<Mat> = (0..spec.num_letters())
        .map(|i| hutchinson_matrix(spec, i, s))
        .collect();
    let probs = spec.probs();
    let m = if spec.is_deterministic() { 1 } else { m };
    (0..m)
        .into_par_iter()
        .map(|i| {
            let stream = sample_stream(seed, i, &probs);
            let mut x = Mat::identity(n);
            let mut log = 0.0;
            let mut tmp = Mat::zeros(n, n);
            for t in 0..k as u64 {
                let p = &mats[stream.letter(t)];
                crate::linalg::mul_into(x.data(), p.data(), tmp.data_mut(), n, n, n);
                std::mem::swap(&mut x, &mut tmp);
                let norm = x.sum();
                if norm <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                x.scale(1.0 / norm);
                log += norm.ln();
            }
            log / k as f64
        })
        .collect()
}

/// Root of the Lyapunov exponent of single-edge products, with common random numbers.
pub fn ussc_dimension_lyapunov(
    spec: &SystemSpec,
    k: usize,
    m: usize,
    seed: u64,
    tol: f64,
) -> Result<RootEstimate, PressureError> {
    solve_root(
        |s| {
            let xs = lyapunov_samples(spec, s, k, m, seed);
            Ok(mean_stderr(&xs))
        },
        tol,
        "Lyapunov exponent of single-edge products",
    )
}

/// Dimension under separation: closed form for one vertex, Perron root for a single
/// graph, otherwise the Lyapunov root.
pub fn ussc_dimension_1var(
    spec: &SystemSpec,
    k: usize,
    m: usize,
    seed: u64,
    tol: f64,
) -> Result<RootEstimate, PressureError> {
    let report = crate::system::validate_system(spec, crate::system::Mode::OneVar);
    if !report.ussc_sufficient {
        return Err(PressureError::NotUssc);
    }
    let exact_tol = tol.min(1e-12);
    if spec.n() == 1 {
        return solve_root(
            |s| Ok((single_vertex_rate(spec, s), 0.0)),
            exact_tol,
            "closed form for a single vertex",
        );
    }
    if spec.is_deterministic() {
        let g = spec.active_letters()[0];
        return solve_root(
            |s| Ok((spectral_radius(&hutchinson_matrix(spec, g, s)).ln(), 0.0)),
            exact_tol,
            "Perron root of the Hutchinson-Moran matrix",
        );
    }
    ussc_dimension_lyapunov(spec, k, m, seed, tol)
}

/// The layered per-letter matrix: first block row holds `p_q`, the sub-diagonal holds
/// identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMatrix {
    pub l: usize,
    pub n: usize,
    pub matrix: Mat,
}

impl LayerMatrix {
    /// `first_row_scale` multiplies every `p_q` block.
    pub fn from_blocks(blocks: &[MoranBlock], n: usize, first_row_scale: f64) -> Self {
        let l = blocks.len();
        let mut m = Mat::zeros(l * n, l * n);
        for b in blocks {
            let c = b.q - 1;
            for i in 0..n {
                for j in 0..n {
                    m[(i, c * n + j)] = first_row_scale * b.matrix[(i, j)];
                }
            }
        }
        for q in 1..l {
            for i in 0..n {
                m[(q * n + i, (q - 1) * n + i)] = 1.0;
            }
        }
        Self { l, n, matrix: m }
    }
}

/// `Φ^k(s)^{1/k}`: growth per letter of the first block row of the layered product.
pub fn phi_finite(
    spec: &SystemSpec,
    eps: f64,
    s: f64,
    k: usize,
    seed: u64,
) -> Result<f64, PressureError> {
    if k == 0 {
        return Err(PressureError::BadParameter("k must be positive".into()));
    }
    let l = spec_k_max(spec, eps)?;
    let n = spec.n();
    let stream = sample_stream(seed, 0, &spec.probs());
    let letters = stream.sample_letters(k + l);
    let mut cache: HashMap<Vec<usize>, Mat> = HashMap::new();
    let mut x = Mat::zeros(n, l * n);
    for i in 0..n {
        x[(i, i)] = 1.0;
    }
    let mut log = 0.0;
    for t in 0..k {
        let w = letters[t..t + l].to_vec();
        if !cache.contains_key(&w) {
            let sg = build_from_letters(spec, &w, eps)?;
            let lm = LayerMatrix::from_blocks(&moran_blocks(&sg, n, s), n, 1.0);
            cache.insert(w.clone(), lm.matrix);
        }
        x = x.mul(&cache[&w]);
        let norm = x.sum();
        if norm <= 0.0 {
            return Err(PressureError::DeadVector(t + 1));
        }
        x.scale(1.0 / norm);
        log += norm.ln();
    }
    Ok((log / k as f64).exp())
}

/// `s;eps;k;m;log_psi;stderr`
pub fn pressure_csv(rows: &[PressureEstimate]) -> String {
    let mut out = String::from("s;eps;k;m;log_psi;stderr\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{};{};{};{};{:.15e};{:.15e}",
            r.s, r.eps, r.k, r.m, r.log_psi_mean, r.log_psi_stderr
        );
    }
    out
}

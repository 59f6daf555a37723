//! Prefractal covers, grid box counting and SVG rendering.

use crate::geometry::{AxisBox, OrientedBox, Similitude};
use crate::infinite::RecursiveTree;
use crate::realization::RealizationStream;
use crate::stopping::{build_from_letters, spec_k_max, StoppingEdge, StoppingError};
use crate::system::SystemSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

pub const MAX_BOXES: usize = 10_000_000;

/// Coordinates within this many cell widths of a grid line are snapped onto it.
pub const GRID_JITTER: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplerError {
    #[error("cover exceeded {0} boxes")]
    BudgetExceeded(usize),
    #[error("cover is empty")]
    EmptyCover,
    #[error("vertex {0} does not exist")]
    UnknownVertex(usize),
    #[error("need at least two scales inside the window, got {0}")]
    TooFewScales(usize),
    #[error(transparent)]
    Stopping(#[from] StoppingError),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverBox {
    pub word: Vec<usize>,
    /// Vertex the path ends at.
    pub vertex: usize,
    pub map: Similitude,
    pub image: OrientedBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCover {
    pub eps: f64,
    pub rounds: usize,
    pub vertex: usize,
    pub seed: u64,
    pub seed_box: AxisBox,
    pub boxes: Vec<CoverBox>,
}

impl BoxCover {
    pub fn dim(&self) -> usize {
        self.seed_box.dim()
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

struct Node {
    word: Vec<usize>,
    vertex: usize,
    offset: usize,
    map: Similitude,
}

/// `rounds` successive stopping-edge layers from `vertex`. A path that has consumed
/// `j` letters continues with the stopping graph of the shifted sequence `σ^j ω`.
pub fn prefractal_cover(
    spec: &SystemSpec,
    stream: &RealizationStream,
    vertex: usize,
    eps: f64,
    rounds: usize,
) -> Result<BoxCover, SamplerError> {
    cover_with(spec, vertex, eps, rounds, stream.seed(), |offset, len| {
        (0..len)
            .map(|t| stream.letter((offset + t) as u64))
            .collect()
    })
}

/// As [`prefractal_cover`] with an explicit letter sequence, which must be long enough
/// for every path.
pub fn prefractal_cover_from_letters(
    spec: &SystemSpec,
    letters: &[usize],
    vertex: usize,
    eps: f64,
    rounds: usize,
) -> Result<BoxCover, SamplerError> {
    let km = spec_k_max(spec, eps)?;
    let needed = letters.len();
    let short = std::cell::Cell::new(None);
    let cover = cover_with(spec, vertex, eps, rounds, 0, |offset, len| {
        if offset + len > needed {
            short.set(Some(offset + len));
            return vec![0; len];
        }
        letters[offset..offset + len].to_vec()
    })?;
    match short.get() {
        Some(n) => Err(StoppingError::PrefixTooShort {
            needed: n.max(km),
            got: needed,
        }
        .into()),
        None => Ok(cover),
    }
}

fn cover_with<F>(
    spec: &SystemSpec,
    vertex: usize,
    eps: f64,
    rounds: usize,
    seed: u64,
    mut letters: F,
) -> Result<BoxCover, SamplerError>
where
    F: FnMut(usize, usize) -> Vec<usize>,
{
    if vertex >= spec.n() {
        return Err(SamplerError::UnknownVertex(vertex));
    }
    let km = spec_k_max(spec, eps)?;
    let mut graphs: HashMap<usize, Vec<Vec<StoppingEdge>>> = HashMap::new();
    let mut layer = vec![Node {
        word: Vec::new(),
        vertex,
        offset: 0,
        map: Similitude::identity(spec.dim()),
    }];
    for _ in 0..rounds {
        for node in &layer {
            if let std::collections::hash_map::Entry::Vacant(slot) = graphs.entry(node.offset) {
                let sg = build_from_letters(spec, &letters(node.offset, km), eps)?;
                let mut by_source = vec![Vec::new(); spec.n()];
                for e in sg.edges {
                    by_source[e.from].push(e);
                }
                slot.insert(by_source);
            }
        }
        let total: usize = layer
            .iter()
            .map(|nd| graphs[&nd.offset][nd.vertex].len())
            .sum();
        if total > MAX_BOXES {
            return Err(SamplerError::BudgetExceeded(MAX_BOXES));
        }
        let graphs = &graphs;
        layer = layer
            .into_par_iter()
            .flat_map_iter(|nd| {
                graphs[&nd.offset][nd.vertex]
                    .iter()
                    .map(|e| {
                        let mut word = nd.word.clone();
                        word.extend_from_slice(&e.word);
                        Node {
                            word,
                            vertex: e.to,
                            offset: nd.offset + e.gamma_len,
                            map: nd.map.compose(&e.map),
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    let boxes = layer
        .into_iter()
        .map(|nd| CoverBox {
            image: nd.map.apply_box(spec.seed_box()),
            word: nd.word,
            vertex: nd.vertex,
            map: nd.map,
        })
        .collect();
    Ok(BoxCover {
        eps,
        rounds,
        vertex,
        seed,
        seed_box: *spec.seed_box(),
        boxes,
    })
}

/// The frontier of an ∞-variable tree as a cover. `eps` records the stopping scale.
pub fn cover_from_tree(spec: &SystemSpec, tree: &RecursiveTree, eps: f64) -> BoxCover {
    BoxCover {
        eps,
        rounds: 1,
        vertex: tree.root,
        seed: tree.seed,
        seed_box: *spec.seed_box(),
        boxes: tree
            .frontier
            .iter()
            .map(|l| CoverBox {
                word: l.word.clone(),
                vertex: l.vertex,
                map: l.map,
                image: l.map.apply_box(spec.seed_box()),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCountFit {
    /// Grid widths, strictly decreasing.
    pub scales: Vec<f64>,
    pub counts: Vec<usize>,
    pub slope: f64,
    pub r2: f64,
    /// Widths allowed in the fit, `(smallest, largest)`.
    pub window: (f64, f64),
    /// Indices into `scales` used in the regression.
    pub fitted: Vec<usize>,
}

fn cell_range(lo: f64, hi: f64, origin: f64, delta: f64) -> (i64, i64) {
    let a = (lo - origin) / delta;
    let b = (hi - origin) / delta;
    let first = (a + GRID_JITTER).floor() as i64;
    let last = ((b - GRID_JITTER).ceil() as i64 - 1).max(first);
    (first, last)
}

/// Number of half-open grid cells of width `delta`, anchored at the seed box's lower
/// corner, that meet the cover. A box ending on a grid line does not enter the next cell.
pub fn grid_count(cover: &BoxCover, delta: f64) -> usize {
    let origin = cover.seed_box.lo().to_vec();
    let dim = cover.dim();
    cover
        .boxes
        .par_iter()
        .fold(HashSet::new, |mut set: HashSet<(i64, i64)>, b| {
            let (lo, hi) = b.image.bounds();
            let (x0, x1) = cell_range(lo[0], hi[0], origin[0], delta);
            if dim == 1 {
                for i in x0..=x1 {
                    set.insert((i, 0));
                }
                return set;
            }
            let (y0, y1) = cell_range(lo[1], hi[1], origin[1], delta);
            let axis_aligned = (b.image.angle / std::f64::consts::FRAC_PI_2).fract().abs() < 1e-12
                || (b.image.angle / std::f64::consts::FRAC_PI_2).fract().abs() > 1.0 - 1e-12;
            for i in x0..=x1 {
                for j in y0..=y1 {
                    if !axis_aligned {
                        let h = 0.5 * delta * (1.0 - 2.0 * GRID_JITTER);
                        let cell = OrientedBox {
                            dim: 2,
                            center: [
                                origin[0] + (i as f64 + 0.5) * delta,
                                origin[1] + (j as f64 + 0.5) * delta,
                            ],
                            half: [h, h],
                            angle: 0.0,
                            reflect: false,
                        };
                        if !cell.intersects(&b.image, 0.0) {
                            continue;
                        }
                    }
                    set.insert((i, j));
                }
            }
            set
        })
        .reduce(HashSet::new, |mut a, b| {
            a.extend(b);
            a
        })
        .len()
}

/// Widths `|Δ|·ε^{j/p}`, with `p` the smallest number of subdivisions that puts at
/// least three widths inside the scaling window, plus one width beyond each end.
pub fn default_scales(cover: &BoxCover) -> Vec<f64> {
    let (small, large) = scaling_window(cover);
    let diam = cover.seed_box.diameter();
    let base = if cover.eps > 0.0 && cover.eps < 1.0 {
        cover.eps
    } else {
        0.5
    };
    let inside = |d: f64| d <= large * (1.0 + 1e-12) && d >= small * (1.0 - 1e-12);
    for p in 1..=16 {
        let all: Vec<f64> = (0..)
            .map(|j| diam * base.powf(j as f64 / p as f64))
            .take_while(|&d| d >= small * base.powf(1.0 / p as f64) * (1.0 - 1e-12))
            .collect();
        if all.iter().filter(|&&d| inside(d)).count() >= 3 || p == 16 {
            let first = all.iter().position(|&d| inside(d)).unwrap_or(0);
            return all[first.saturating_sub(1)..].to_vec();
        }
    }
    unreachable!()
}

/// `(ε^rounds·|Δ|, |Δ|/10)`.
pub fn scaling_window(cover: &BoxCover) -> (f64, f64) {
    let diam = cover.seed_box.diameter();
    let large = diam / 10.0;
    let small = cover.eps.powi(cover.rounds as i32) * diam;
    (small.min(large), large)
}

/// Counts at each width and the least-squares slope of `log N` against `-log δ` over
/// the scaling window, excluding the window's two end scales.
pub fn box_count(cover: &BoxCover, scales: &[f64]) -> Result<BoxCountFit, SamplerError> {
    if cover.is_empty() {
        return Err(SamplerError::EmptyCover);
    }
    let mut scales = scales.to_vec();
    scales.sort_by(|a, b| b.partial_cmp(a).expect("finite scale"));
    scales.dedup();
    let counts: Vec<usize> = scales.iter().map(|&d| grid_count(cover, d)).collect();
    let (small, large) = scaling_window(cover);
    let inside: Vec<usize> = (0..scales.len())
        .filter(|&i| scales[i] <= large * (1.0 + 1e-12) && scales[i] >= small * (1.0 - 1e-12))
        .collect();
    let fitted: Vec<usize> = if inside.len() > 4 {
        inside[1..inside.len() - 1].to_vec()
    } else {
        inside
    };
    if fitted.len() < 2 {
        return Err(SamplerError::TooFewScales(fitted.len()));
    }
    let xs: Vec<f64> = fitted.iter().map(|&i| -scales[i].ln()).collect();
    let ys: Vec<f64> = fitted.iter().map(|&i| (counts[i] as f64).ln()).collect();
    let (slope, r2) = least_squares(&xs, &ys);
    Ok(BoxCountFit {
        scales,
        counts,
        slope,
        r2,
        window: (small, large),
        fitted,
    })
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, r2)
}

pub fn box_count_csv(fit: &BoxCountFit) -> String {
    let mut s = String::from("delta;count\n");
    for (d, n) in fit.scales.iter().zip(&fit.counts) {
        let _ = writeln!(s, "{d:.17e};{n}");
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvgStyle {
    pub width: f64,
    pub height: f64,
    pub fill: String,
    pub margin: f64,
}

impl Default for SvgStyle {
    fn default() -> Self {
        Self {
            width: 800.0,
            height: 800.0,
            fill: "#1f3a5f".into(),
            margin: 10.0,
        }
    }
}

/// One `rect` per box, in cover order. Intervals are drawn as bars along a baseline.
pub fn render_svg(cover: &BoxCover, style: &SvgStyle) -> String {
    let lo = cover.seed_box.lo();
    let hi = cover.seed_box.hi();
    let inner_w = style.width - 2.0 * style.margin;
    let mut s = String::new();
    let one_d = cover.dim() == 1;
    let height = if one_d {
        60.0 + 2.0 * style.margin
    } else {
        style.height
    };
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{:.3}" height="{:.3}" viewBox="0 0 {:.3} {:.3}">"#,
        style.width, height, style.width, height
    );
    let sx = inner_w / (hi[0] - lo[0]);
    if one_d {
        let y = style.margin + 50.0;
        let _ = writeln!(
            s,
            r#"<line x1="{:.6}" y1="{y:.6}" x2="{:.6}" y2="{y:.6}" stroke="black" stroke-width="1"/>"#,
            style.margin,
            style.width - style.margin
        );
        for b in &cover.boxes {
            let (a, c) = b.image.interval();
            let _ = writeln!(
                s,
                r#"<rect x="{:.6}" y="{:.6}" width="{:.6}" height="40" fill="{}"/>"#,
                style.margin + (a - lo[0]) * sx,
                style.margin + 10.0,
                ((c - a) * sx).max(0.0),
                style.fill
            );
        }
    } else {
        let inner_h = style.height - 2.0 * style.margin;
        let sy = inner_h / (hi[1] - lo[1]);
        for b in &cover.boxes {
            let cx = style.margin + (b.image.center[0] - lo[0]) * sx;
            // SVG y grows downwards
            let cy = style.margin + (hi[1] - b.image.center[1]) * sy;
            let w = 2.0 * b.image.half[0] * sx;
            let h = 2.0 * b.image.half[1] * sy;
            let deg = -b.image.angle.to_degrees();
            let _ = writeln!(
                s,
                r#"<rect x="{:.6}" y="{:.6}" width="{w:.6}" height="{h:.6}" transform="rotate({deg:.6} {cx:.6} {cy:.6})" fill="{}"/>"#,
                cx - 0.5 * w,
                cy - 0.5 * h,
                style.fill
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(
    cover: &BoxCover,
    path: &std::path::Path,
    style: &SvgStyle,
) -> Result<(), SamplerError> {
    std::fs::write(path, render_svg(cover, style)).map_err(|e| SamplerError::Io(e.to_string()))
}

//! Similitudes and boxes in the line and the plane.
//!
//! A similitude is stored as `(ratio, rotation, reflect, translation)` and acts as
//! `x -> ratio * R(rotation) * F^reflect * x + translation`, where `F` flips the
//! last coordinate. In one dimension the orthogonal part is just `±1`.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Absolute tolerance for intersection predicates. Distances within it count as touching.
pub const GEOM_TOL: f64 = 1e-12;

/// Absolute tolerance for the seed-box invariance check.
pub const CONTAIN_TOL: f64 = 1e-9;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similitude {
    dim: usize,
    ratio: f64,
    rotation: f64,
    reflect: bool,
    translation: Point,
}

impl Similitude {
    /// Builds a contracting similitude. `rotation` must be zero when `dim == 1`.
    pub fn new(
        dim: usize,
        ratio: f64,
        rotation: f64,
        reflect: bool,
        translation: &[f64],
    ) -> Result<Self, GeometryError> {
        if dim != 1 && dim != 2 {
            return Err(GeometryError::BadDimension(dim));
        }
        if translation.len() != dim {
            return Err(GeometryError::BadTranslation {
                expected: dim,
                got: translation.len(),
            });
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(GeometryError::NotContracting(ratio));
        }
        if dim == 1 && rotation != 0.0 {
            return Err(GeometryError::RotationInLine);
        }
        if !rotation.is_finite() || translation.iter().any(|t| !t.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let mut t = [0.0; 2];
        t[..dim].copy_from_slice(translation);
        Ok(Self {
            dim,
            ratio,
            rotation: normalize_angle(rotation),
            reflect,
            translation: t,
        })
    }

    /// The identity map. It is the only non-contracting value of this type and only
    /// appears as the unit of [`Similitude::compose`].
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            ratio: 1.0,
            rotation: 0.0,
            reflect: false,
            translation: [0.0; 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn rotation(&self) -> f64 {
        self.rotation
    }

    pub fn reflect(&self) -> bool {
        self.reflect
    }

    pub fn translation(&self) -> &[f64] {
        &self.translation[..self.dim]
    }

    /// Applies the orthogonal part only.
    fn orth(&self, x: Point) -> Point {
        if self.dim == 1 {
            return [if self.reflect { -x[0] } else { x[0] }, 0.0];
        }
        let y = if self.reflect { [x[0], -x[1]] } else { x };
        let (s, c) = self.rotation.sin_cos();
        [c * y[0] - s * y[1], s * y[0] + c * y[1]]
    }

    pub fn apply(&self, x: Point) -> Point {
        let o = self.orth(x);
        [
            self.ratio * o[0] + self.translation[0],
            self.ratio * o[1] + self.translation[1],
        ]
    }

    /// `self ∘ inner`: first `inner`, then `self`.
    pub fn compose(&self, inner: &Similitude) -> Similitude {
        debug_assert_eq!(self.dim, inner.dim);
        let t = self.apply(inner.translation);
        let (rotation, reflect) = if self.dim == 1 {
            (0.0, self.reflect ^ inner.reflect)
        } else {
            // F R(b) = R(-b) F
            let b = if self.reflect {
                -inner.rotation
            } else {
                inner.rotation
            };
            (
                normalize_angle(self.rotation + b),
                self.reflect ^ inner.reflect,
            )
        };
        Similitude {
            dim: self.dim,
            ratio: self.ratio * inner.ratio,
            rotation,
            reflect,
            translation: t,
        }
    }

    /// Exact image of an axis-aligned box.
    pub fn apply_box(&self, b: &AxisBox) -> OrientedBox {
        let center = self.apply(b.center());
        let h = b.half_extents();
        OrientedBox {
            dim: self.dim,
            center,
            half: [self.ratio * h[0], self.ratio * h[1]],
            angle: if self.dim == 1 { 0.0 } else { self.rotation },
            reflect: self.reflect,
        }
    }

    /// Bitwise parameter equality.
    pub fn same_parameters(&self, other: &Similitude) -> bool {
        self.dim == other.dim
            && self.ratio.to_bits() == other.ratio.to_bits()
            && self.rotation.to_bits() == other.rotation.to_bits()
            && self.reflect == other.reflect
            && self.translation[0].to_bits() == other.translation[0].to_bits()
            && self.translation[1].to_bits() == other.translation[1].to_bits()
    }

    /// Parameters agree to `tol` (angles compared on the circle).
    pub fn nearly_equal(&self, other: &Similitude, tol: f64) -> bool {
        let dr = (self.rotation - other.rotation).abs();
        self.dim == other.dim
            && (self.ratio - other.ratio).abs() <= tol
            && dr.min(TAU - dr) <= tol
            && self.reflect == other.reflect
            && (self.translation[0] - other.translation[0]).abs() <= tol
            && (self.translation[1] - other.translation[1]).abs() <= tol
    }
}

fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    dim: usize,
    lo: Point,
    hi: Point,
}

impl AxisBox {
    pub fn new(lo: &[f64], hi: &[f64]) -> Result<Self, GeometryError> {
        let dim = lo.len();
        if dim != 1 && dim != 2 {
            return Err(GeometryError::BadDimension(dim));
        }
        if hi.len() != dim {
            return Err(GeometryError::BadTranslation {
                expected: dim,
                got: hi.len(),
            });
        }
        let mut l = [0.0; 2];
        let mut h = [0.0; 2];
        for i in 0..dim {
            if !(lo[i].is_finite() && hi[i].is_finite() && lo[i] < hi[i]) {
                return Err(GeometryError::DegenerateBox);
            }
            l[i] = lo[i];
            h[i] = hi[i];
        }
        Ok(Self { dim, lo: l, hi: h })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo[..self.dim]
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi[..self.dim]
    }

    pub fn center(&self) -> Point {
        let mut c = [0.0; 2];
        for i in 0..self.dim {
            c[i] = 0.5 * (self.lo[i] + self.hi[i]);
        }
        c
    }

    pub fn half_extents(&self) -> Point {
        let mut h = [0.0; 2];
        for i in 0..self.dim {
            h[i] = 0.5 * (self.hi[i] - self.lo[i]);
        }
        h
    }

    pub fn diameter(&self) -> f64 {
        let h = self.half_extents();
        2.0 * (h[0] * h[0] + h[1] * h[1]).sqrt()
    }

    pub fn as_oriented(&self) -> OrientedBox {
        Similitude::identity(self.dim).apply_box(self)
    }

    pub fn contains_box(&self, b: &OrientedBox, tol: f64) -> bool {
        b.corners()
            .iter()
            .all(|p| (0..self.dim).all(|i| p[i] >= self.lo[i] - tol && p[i] <= self.hi[i] + tol))
    }
}

/// A rectangle (or interval) with a centre, half-extents along its own axes and the
/// rotation of those axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub dim: usize,
    pub center: Point,
    pub half: Point,
    pub angle: f64,
    pub reflect: bool,
}

impl OrientedBox {
    fn axes(&self) -> [Point; 2] {
        let (s, c) = self.angle.sin_cos();
        [[c, s], [-s, c]]
    }

    /// Interval endpoints; only meaningful for `dim == 1`.
    pub fn interval(&self) -> (f64, f64) {
        (self.center[0] - self.half[0], self.center[0] + self.half[0])
    }

    pub fn corners(&self) -> Vec<Point> {
        if self.dim == 1 {
            let (a, b) = self.interval();
            return vec![[a, 0.0], [b, 0.0]];
        }
        let [u, v] = self.axes();
        let mut out = Vec::with_capacity(4);
        for (su, sv) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
            out.push([
                self.center[0] + su * self.half[0] * u[0] + sv * self.half[1] * v[0],
                self.center[1] + su * self.half[0] * u[1] + sv * self.half[1] * v[1],
            ]);
        }
        out
    }

    /// Axis-aligned bounding box as `(lo, hi)`.
    pub fn bounds(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in self.corners() {
            for i in 0..self.dim {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        if self.dim == 1 {
            lo[1] = 0.0;
            hi[1] = 0.0;
        }
        (lo, hi)
    }

    pub fn diameter(&self) -> f64 {
        2.0 * (self.half[0] * self.half[0] + self.half[1] * self.half[1]).sqrt()
    }

    fn radius_on(&self, axis: Point) -> f64 {
        if self.dim == 1 {
            return self.half[0] * axis[0].abs();
        }
        let [u, v] = self.axes();
        self.half[0] * (u[0] * axis[0] + u[1] * axis[1]).abs()
            + self.half[1] * (v[0] * axis[0] + v[1] * axis[1]).abs()
    }

    /// Closed-set intersection test: a shared boundary point counts as intersecting,
    /// and so does any gap no wider than `tol`.
    pub fn intersects(&self, other: &OrientedBox, tol: f64) -> bool {
        if self.dim == 1 {
            let (a0, a1) = self.interval();
            let (b0, b1) = other.interval();
            return a0 <= b1 + tol && b0 <= a1 + tol;
        }
        let d = [
            other.center[0] - self.center[0],
            other.center[1] - self.center[1],
        ];
        let [u1, v1] = self.axes();
        let [u2, v2] = other.axes();
        for axis in [u1, v1, u2, v2] {
            let dist = (d[0] * axis[0] + d[1] * axis[1]).abs();
            if dist > self.radius_on(axis) + other.radius_on(axis) + tol {
                return false;
            }
        }
        true
    }

    /// Whether `other` lies inside `self` up to `tol`.
    pub fn contains(&self, other: &OrientedBox, tol: f64) -> bool {
        let [u, v] = self.axes();
        other.corners().iter().all(|p| {
            let d = [p[0] - self.center[0], p[1] - self.center[1]];
            if self.dim == 1 {
                return d[0].abs() <= self.half[0] + tol;
            }
            (d[0] * u[0] + d[1] * u[1]).abs() <= self.half[0] + tol
                && (d[0] * v[0] + d[1] * v[1]).abs() <= self.half[1] + tol
        })
    }

    /// Compact text form used in CSV dumps.
    pub fn describe(&self) -> String {
        if self.dim == 1 {
            let (a, b) = self.interval();
            format!("[{a:.12},{b:.12}]")
        } else {
            format!(
                "c=({:.12},{:.12}) h=({:.12},{:.12}) a={:.12}{}",
                self.center[0],
                self.center[1],
                self.half[0],
                self.half[1],
                self.angle,
                if self.reflect { " r" } else { "" }
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("ambient dimension must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error("expected {expected} coordinates, got {got}")]
    BadTranslation { expected: usize, got: usize },
    #[error("similitude ratio {0} is not in (0,1)")]
    NotContracting(f64),
    #[error("rotation is not allowed in dimension 1")]
    RotationInLine,
    #[error("non-finite parameter")]
    NonFinite,
    #[error("box must have lo < hi in every coordinate")]
    DegenerateBox,
}

//! Small dense matrices and the Perron root of non-negative matrices.

use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};

pub const POWER_MAX_ITERS: usize = 10_000;
pub const POWER_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        mul_into(
            &self.data,
            &other.data,
            &mut out.data,
            self.rows,
            self.cols,
            other.cols,
        );
        out
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for a in &mut self.data {
            *a *= k;
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.data
            .chunks(self.cols.max(1))
            .map(|r| r.iter().sum())
            .collect()
    }

    /// Maximum absolute row sum.
    pub fn max_row_sum(&self) -> f64 {
        self.data
            .chunks(self.cols.max(1))
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Sum of all entries.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().cloned().fold(0.0, f64::max)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&x| x >= 0.0)
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `out += a (r×k) * b (k×c)` on row-major slices.
pub fn mul_add_into(a: &[f64], b: &[f64], out: &mut [f64], r: usize, k: usize, c: usize) {
    for i in 0..r {
        let orow = &mut out[i * c..(i + 1) * c];
        for l in 0..k {
            let x = a[i * k + l];
            if x == 0.0 {
                continue;
            }
            let brow = &b[l * c..(l + 1) * c];
            for (o, &y) in orow.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
}

pub fn mul_into(a: &[f64], b: &[f64], out: &mut [f64], r: usize, k: usize, c: usize) {
    out.iter_mut().for_each(|x| *x = 0.0);
    mul_add_into(a, b, out, r, k, c);
}

/// Strongly connected classes of the non-zero pattern, as index lists.
pub fn strong_components(m: &Mat) -> Vec<Vec<usize>> {
    let n = m.rows();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)] != 0.0).collect())
        .collect();
    let reach = crate::system::reachability(&adj);
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for v in 0..n {
        if seen[v] {
            continue;
        }
        let mut class = vec![v];
        seen[v] = true;
        for w in v + 1..n {
            if !seen[w] && reach[v][w] && reach[w][v] {
                seen[w] = true;
                class.push(w);
            }
        }
        out.push(class);
    }
    out
}

/// Perron root of a non-negative square matrix: the maximum over irreducible
/// diagonal blocks, each found by shifted power iteration with Collatz–Wielandt bounds.
pub fn spectral_radius(m: &Mat) -> f64 {
    assert_eq!(m.rows(), m.cols(), "square matrix required");
    let n = m.rows();
    match n {
        0 => return 0.0,
        1 => return m[(0, 0)].abs(),
        _ => {}
    }
    let mut best: f64 = 0.0;
    for class in strong_components(m) {
        if class.len() == 1 {
            best = best.max(m[(class[0], class[0])]);
            continue;
        }
        let k = class.len();
        let mut b = Mat::zeros(k, k);
        for (a, &i) in class.iter().enumerate() {
            for (c, &j) in class.iter().enumerate() {
                b[(a, c)] = m[(i, j)];
            }
        }
        best = best.max(irreducible_radius(&b));
    }
    best
}

fn irreducible_radius(b: &Mat) -> f64 {
    let n = b.rows();
    let tau = 0.5 * b.max_row_sum();
    if tau == 0.0 {
        return 0.0;
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    for _ in 0..POWER_MAX_ITERS {
        for i in 0..n {
            let row = &b.data[i * n..(i + 1) * n];
            y[i] = row.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>() + tau * x[i];
        }
        lo = f64::INFINITY;
        hi = 0.0;
        for i in 0..n {
            let r = y[i] / x[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let norm: f64 = y.iter().sum();
        for i in 0..n {
            x[i] = y[i] / norm;
        }
        if hi - lo <= POWER_REL_TOL * hi {
            break;
        }
    }
    0.5 * (lo + hi) - tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn known_radii() {
        assert_abs_diff_eq!(spectral_radius(&Mat::from_rows(&[vec![2.0]])), 2.0);
        let ones = Mat::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_abs_diff_eq!(spectral_radius(&ones), 2.0, epsilon = 1e-12);
        // periodic permutation
        let perm = Mat::from_rows(&[vec![0.0, 3.0], vec![3.0, 0.0]]);
        assert_abs_diff_eq!(spectral_radius(&perm), 3.0, epsilon = 1e-10);
        // reducible, nilpotent part
        let red = Mat::from_rows(&[vec![0.0, 5.0], vec![0.0, 0.0]]);
        assert_abs_diff_eq!(spectral_radius(&red), 0.0);
        let tri = Mat::from_rows(&[vec![1.0, 7.0], vec![0.0, 4.0]]);
        assert_abs_diff_eq!(spectral_radius(&tri), 4.0);
        // golden ratio
        let fib = Mat::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0]]);
        assert_abs_diff_eq!(
            spectral_radius(&fib),
            (1.0 + 5f64.sqrt()) / 2.0,
            epsilon = 1e-10
        );
    }

    proptest! {
        #[test]
        fn two_by_two_matches_closed_form(a in 0.0f64..3.0, b in 0.0f64..3.0,
                                          c in 0.0f64..3.0, d in 0.0f64..3.0) {
            let m = Mat::from_rows(&[vec![a, b], vec![c, d]]);
            let tr = a + d;
            let disc = ((a - d).powi(2) + 4.0 * b * c).sqrt();
            let exact = 0.5 * (tr + disc);
            prop_assert!((spectral_radius(&m) - exact).abs() <= 1e-8 * (1.0 + exact));
        }
    }
}

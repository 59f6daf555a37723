//! The semiring of arrangements of words: finite multisets of edge-id sequences under
//! multiset union and pairwise concatenation, plus matrices over it.
//!
//! This is the exact small-instance oracle. Every numeric band product can be checked
//! against [`moran_eval`] of a product computed here.

use crate::linalg::Mat;
use std::fmt;
use std::str::FromStr;

/// Size cap on any arrangement produced by an operation.
pub const MAX_WORDS: usize = 1_000_000;

pub type Word = Vec<usize>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WordError {
    #[error("arrangement would hold {0} words, above the oracle cap")]
    OracleTooLarge(usize),
    #[error("shape mismatch: {left_cols} columns against {right_rows} rows")]
    ShapeMismatch { left_cols: usize, right_rows: usize },
    #[error("no ratio for edge {0}")]
    UnknownEdge(usize),
    #[error("cannot parse arrangement: {0}")]
    Parse(String),
}

/// A multiset of words, stored sorted so equality ignores order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Arrangement {
    words: Vec<Word>,
}

impl Arrangement {
    /// ∅, the additive identity.
    pub fn empty() -> Self {
        Self { words: Vec::new() }
    }

    /// ε₀, the multiplicative identity.
    pub fn unit() -> Self {
        Self {
            words: vec![Vec::new()],
        }
    }

    pub fn word(w: Word) -> Self {
        Self { words: vec![w] }
    }

    pub fn from_words(mut words: Vec<Word>) -> Self {
        words.sort();
        Self { words }
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Whether no word occurs twice.
    pub fn is_distinct(&self) -> bool {
        self.words.windows(2).all(|w| w[0] != w[1])
    }
}

pub fn arr_add(a: &Arrangement, b: &Arrangement) -> Result<Arrangement, WordError> {
    let total = a.len() + b.len();
    if total > MAX_WORDS {
        return Err(WordError::OracleTooLarge(total));
    }
    let mut words = Vec::with_capacity(total);
    words.extend_from_slice(&a.words);
    words.extend_from_slice(&b.words);
    Ok(Arrangement::from_words(words))
}

pub fn arr_mul(a: &Arrangement, b: &Arrangement) -> Result<Arrangement, WordError> {
    let total = a.len().saturating_mul(b.len());
    if total > MAX_WORDS {
        return Err(WordError::OracleTooLarge(total));
    }
    let mut words = Vec::with_capacity(total);
    for x in &a.words {
        for y in &b.words {
            let mut w = Vec::with_capacity(x.len() + y.len());
            w.extend_from_slice(x);
            w.extend_from_slice(y);
            words.push(w);
        }
    }
    Ok(Arrangement::from_words(words))
}

/// Σ over words of (∏ edge ratios)^s.
pub fn moran_eval(a: &Arrangement, s: f64, ratios: &[f64]) -> Result<f64, WordError> {
    let mut total = 0.0;
    for w in &a.words {
        let mut c = 1.0;
        for &e in w {
            c *= *ratios.get(e).ok_or(WordError::UnknownEdge(e))?;
        }
        total += c.powf(s);
    }
    Ok(total)
}

impl fmt::Display for Arrangement {
    /// Words joined by `⊕`, edges by `·`; `∅` and `ε0` for the identities.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.words.is_empty() {
            return f.write_str("∅");
        }
        for (i, w) in self.words.iter().enumerate() {
            if i > 0 {
                f.write_str("⊕")?;
            }
            if w.is_empty() {
                f.write_str("ε0")?;
            } else {
                let parts: Vec<String> = w.iter().map(|e| e.to_string()).collect();
                f.write_str(&parts.join("·"))?;
            }
        }
        Ok(())
    }
}

impl FromStr for Arrangement {
    type Err = WordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "∅" {
            return Ok(Self::empty());
        }
        let mut words = Vec::new();
        for part in s.split('⊕') {
            let part = part.trim();
            if part == "ε0" {
                words.push(Vec::new());
                continue;
            }
            let w = part
                .split('·')
                .map(|e| {
                    e.trim()
                        .parse::<usize>()
                        .map_err(|_| WordError::Parse(format!("bad edge id {e:?}")))
                })
                .collect::<Result<Word, _>>()?;
            words.push(w);
        }
        Ok(Self::from_words(words))
    }
}

/// A rectangular matrix of arrangements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Arrangement>,
}

impl ArrMatrix {
    /// 𝟎_∅.
    pub fn zero(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![Arrangement::empty(); rows * cols],
        }
    }

    /// 𝟏_{ε₀}.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n, n);
        for i in 0..n {
            m.set(i, i, Arrangement::unit());
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Arrangement {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, a: Arrangement) {
        self.entries[i * self.cols + j] = a;
    }

    /// Adds `w` to entry `(i,j)`.
    pub fn push_word(&mut self, i: usize, j: usize, w: Word) {
        let e = &mut self.entries[i * self.cols + j];
        e.words.push(w);
        e.words.sort();
    }

    pub fn add(&self, other: &ArrMatrix) -> Result<ArrMatrix, WordError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(WordError::ShapeMismatch {
                left_cols: self.cols,
                right_rows: other.rows,
            });
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| arr_add(a, b))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            entries,
        })
    }

    /// Entrywise [`moran_eval`].
    pub fn moran_eval(&self, s: f64, ratios: &[f64]) -> Result<Mat, WordError> {
        let mut m = Mat::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = moran_eval(self.get(i, j), s, ratios)?;
            }
        }
        Ok(m)
    }
}

pub fn arr_mat_mul(m: &ArrMatrix, n: &ArrMatrix) -> Result<ArrMatrix, WordError> {
    if m.cols != n.rows {
        return Err(WordError::ShapeMismatch {
            left_cols: m.cols,
            right_rows: n.rows,
        });
    }
    let mut out = ArrMatrix::zero(m.rows, n.cols);
    for i in 0..m.rows {
        for j in 0..n.cols {
            let mut acc = Arrangement::empty();
            for k in 0..m.cols {
                acc = arr_add(&acc, &arr_mul(m.get(i, k), n.get(k, j))?)?;
            }
            out.set(i, j, acc);
        }
    }
    Ok(out)
}

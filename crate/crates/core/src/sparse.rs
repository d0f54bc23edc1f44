//! Real symmetric sparse matrices stored as their upper triangle (CSR).

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Sparsity pattern of an upper triangle, including the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
}

impl Pattern {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    fn position(&self, row: usize, col: usize) -> Option<usize> {
        let (r, c) = if row <= col { (row, col) } else { (col, row) };
        let slice = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        slice.binary_search(&c).ok().map(|p| self.row_ptr[r] + p)
    }
}

/// Symmetric matrix `A = Aᵀ`; only entries with `row <= col` are stored, so
/// the symmetry is exact by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl SymmetricMatrix {
    /// Builds from `(row, col, value)` triplets. Each unordered pair may
    /// appear at most once; lower-triangle entries are mirrored.
    pub fn from_triplets(
        dim: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets
            .into_iter()
            .map(|(r, c, v)| if r <= c { (r, c, v) } else { (c, r, v) })
            .collect();
        if let Some(&(r, c, _)) = entries.iter().find(|&&(r, c, _)| r >= dim || c >= dim) {
            return Err(Error::Usage(format!(
                "entry ({r}, {c}) outside a {dim}x{dim} matrix"
            )));
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        if let Some(w) = entries
            .windows(2)
            .find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1))
        {
            return Err(Error::Usage(format!(
                "duplicate entry ({}, {})",
                w[0].0, w[0].1
            )));
        }
        let mut row_ptr = vec![0usize; dim + 1];
        for &(r, _, _) in &entries {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        let cols = entries.iter().map(|e| e.1).collect();
        let values = entries.iter().map(|e| e.2).collect();
        Ok(SymmetricMatrix {
            pattern: Arc::new(Pattern { dim, row_ptr, cols }),
            values,
        })
    }

    /// Matrix with the given pattern and values in pattern order.
    pub fn with_pattern(pattern: Arc<Pattern>, values: Vec<f64>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::Usage(format!(
                "{} values for a pattern with {} entries",
                values.len(),
                pattern.nnz()
            )));
        }
        Ok(SymmetricMatrix { pattern, values })
    }

    pub fn zeros_like(other: &SymmetricMatrix) -> Self {
        SymmetricMatrix {
            pattern: other.pattern.clone(),
            values: vec![0.0; other.values.len()],
        }
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_pattern(&self, other: &SymmetricMatrix) -> bool {
        Arc::ptr_eq(&self.pattern, &other.pattern) || *self.pattern == *other.pattern
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pattern
            .position(row, col)
            .map_or(0.0, |p| self.values[p])
    }

    /// Iterates the stored upper triangle as `(row, col, value)`.
    pub fn upper_triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let p = &self.pattern;
        (0..p.dim).flat_map(move |r| {
            (p.row_ptr[r]..p.row_ptr[r + 1]).map(move |k| (r, p.cols[k], self.values[k]))
        })
    }

    /// Overwrites `self` with `Σ coef_i · term_i`; every term must share the pattern.
    pub fn assign_linear_combination(&mut self, terms: &[(f64, &SymmetricMatrix)]) -> Result<()> {
        for (_, t) in terms {
            if !self.same_pattern(t) {
                return Err(Error::Usage(
                    "linear combination of matrices with different patterns".into(),
                ));
            }
        }
        self.values.iter_mut().for_each(|v| *v = 0.0);
        for &(c, t) in terms {
            if c == 0.0 {
                continue;
            }
            for (v, tv) in self.values.iter_mut().zip(&t.values) {
                *v += c * tv;
            }
        }
        Ok(())
    }

    pub fn linear_combination(terms: &[(f64, &SymmetricMatrix)]) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::Usage("empty linear combination".into()))?;
        let mut out = SymmetricMatrix::zeros_like(first.1);
        out.assign_linear_combination(terms)?;
        Ok(out)
    }

    /// `y = A x` for complex vectors.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(y.len(), self.dim());
        y.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        let p = &*self.pattern;
        for r in 0..p.dim {
            let xr = x[r];
            let mut acc = y[r];
            for k in p.row_ptr[r]..p.row_ptr[r + 1] {
                let c = p.cols[k];
                let a = self.values[k];
                acc += x[c] * a;
                if c != r {
                    y[c] += xr * a;
                }
            }
            y[r] = acc;
        }
    }

    /// `y = A x` for real vectors.
    pub fn apply_real(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let p = &*self.pattern;
        for r in 0..p.dim {
            let xr = x[r];
            let mut acc = y[r];
            for k in p.row_ptr[r]..p.row_ptr[r + 1] {
                let c = p.cols[k];
                let a = self.values[k];
                acc += a * x[c];
                if c != r {
                    y[c] += a * xr;
                }
            }
            y[r] = acc;
        }
    }

    /// `⟨u|A|v⟩` for real vectors.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let p = &*self.pattern;
        let mut s = 0.0;
        for r in 0..p.dim {
            for k in p.row_ptr[r]..p.row_ptr[r + 1] {
                let c = p.cols[k];
                let a = self.values[k];
                s += a * u[r] * v[c];
                if c != r {
                    s += a * u[c] * v[r];
                }
            }
        }
        s
    }

    /// `⟨ψ|A|ψ⟩`, real because `A` is real symmetric.
    pub fn expectation(&self, psi: &[Complex64]) -> f64 {
        let p = &*self.pattern;
        let mut s = 0.0;
        for r in 0..p.dim {
            for k in p.row_ptr[r]..p.row_ptr[r + 1] {
                let c = p.cols[k];
                let a = self.values[k];
                let re = (psi[r].conj() * psi[c]).re;
                s += if c == r { a * re } else { 2.0 * a * re };
            }
        }
        s
    }

    /// Maximum absolute row sum, an upper bound on the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        let mut rows = vec![0.0; self.dim()];
        for (r, c, v) in self.upper_triplets() {
            rows[r] += v.abs();
            if r != c {
                rows[c] += v.abs();
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (r, c, v) in self.upper_triplets() {
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
        m
    }

    /// Text dump of the upper triangle, one `row col value` triplet per line.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# dim={} nnz={}", self.dim(), self.nnz())?;
        for (r, c, v) in self.upper_triplets() {
            writeln!(w, "{r} {c} {v:.17e}")?;
        }
        Ok(())
    }
}

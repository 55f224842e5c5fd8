//! Sparse storage for the rectangular system and its normal matrix.
//!
//! The normal matrix inherits a block structure from the unknown layout: all
//! `Q` coefficients of one point form a dense block, and two blocks couple iff
//! some row touches both points. Only the upper block triangle is stored.

use std::io::Write;

use crate::error::{Error, Result};

/// Row-compressed sparse matrix with sorted column indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsrMatrix {
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(ncols: usize) -> Self {
        Self {
            ncols,
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Appends a row. Entries are sorted by column and duplicates are summed.
    pub fn push_row(&mut self, entries: &mut [(usize, f64)]) {
        entries.sort_by_key(|e| e.0);
        let start = self.cols.len();
        for &(c, v) in entries.iter() {
            assert!(c < self.ncols, "column {c} out of range");
            if self.cols.len() > start && *self.cols.last().unwrap() == c {
                *self.vals.last_mut().unwrap() += v;
            } else {
                self.cols.push(c);
                self.vals.push(v);
            }
        }
        self.row_ptr.push(self.cols.len());
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, k: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[k]..self.row_ptr[k + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        let r = self.row_ptr[k]..self.row_ptr[k + 1];
        &mut self.vals[r]
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (k, yk) in y.iter_mut().enumerate() {
            let (c, v) = self.row(k);
            *yk = c.iter().zip(v).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    /// `y = Aᵀ x`
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (k, &xk) in x.iter().enumerate() {
            let (c, v) = self.row(k);
            for (&c, &v) in c.iter().zip(v) {
                y[c] += v * xk;
            }
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows()];
        for (k, row) in d.iter_mut().enumerate() {
            let (c, v) = self.row(k);
            for (&c, &v) in c.iter().zip(v) {
                row[c] = v;
            }
        }
        d
    }
}

/// Symmetric matrix of `nb × nb` dense blocks of size `bs`; the upper block
/// triangle is stored row-compressed, with the diagonal block first in each
/// block row and blocks in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSymMatrix {
    bs: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl BlockSymMatrix {
    /// Zero matrix on the given pattern; `pattern[i]` lists block columns
    /// `j >= i` and must contain `i`.
    pub fn from_pattern(bs: usize, pattern: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(pattern.len() + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        for (i, mut row) in pattern.into_iter().enumerate() {
            row.sort_unstable();
            row.dedup();
            assert!(row.first() == Some(&i), "block row {i} must start with its diagonal");
            cols.extend(row);
            row_ptr.push(cols.len());
        }
        let vals = vec![0.0; cols.len() * bs * bs];
        Self {
            bs,
            row_ptr,
            cols,
            vals,
        }
    }

    /// Block-diagonal identity.
    pub fn identity(nb: usize, bs: usize) -> Self {
        let mut m = Self::from_pattern(bs, (0..nb).map(|i| vec![i]).collect());
        m.add_to_diagonal(1.0);
        m
    }

    /// Block matrix from a full dense matrix, which must be exactly symmetric.
    pub fn from_dense(bs: usize, dense: &[Vec<f64>]) -> Result<Self> {
        let n = dense.len();
        if !n.is_multiple_of(bs) || dense.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument(format!(
                "{n}x{n} matrix does not split into {bs}x{bs} blocks"
            )));
        }
        for r in 0..n {
            for c in r + 1..n {
                if dense[r][c] != dense[c][r] {
                    return Err(Error::NotSymmetric { row: r, col: c });
                }
            }
        }
        let nb = n / bs;
        let pattern = (0..nb)
            .map(|i| {
                (i..nb)
                    .filter(|&j| j == i || (0..bs).any(|a| (0..bs).any(|b| dense[i * bs + a][j * bs + b] != 0.0)))
                    .collect()
            })
            .collect();
        let mut m = Self::from_pattern(bs, pattern);
        for i in 0..nb {
            for s in m.row_ptr[i]..m.row_ptr[i + 1] {
                let j = m.cols[s];
                let blk = m.block_mut(s);
                for a in 0..bs {
                    for b in 0..bs {
                        blk[a * bs + b] = dense[i * bs + a][j * bs + b];
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn block_size(&self) -> usize {
        self.bs
    }

    pub fn num_block_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n(&self) -> usize {
        self.num_block_rows() * self.bs
    }

    pub fn num_stored_blocks(&self) -> usize {
        self.cols.len()
    }

    /// Storage slots of block row `i`.
    pub fn row_slots(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub fn slot_col(&self, s: usize) -> usize {
        self.cols[s]
    }

    pub fn block_cols(&self, i: usize) -> &[usize] {
        &self.cols[self.row_slots(i)]
    }

    pub fn block(&self, s: usize) -> &[f64] {
        let q = self.bs * self.bs;
        &self.vals[s * q..(s + 1) * q]
    }

    pub fn block_mut(&mut self, s: usize) -> &mut [f64] {
        let q = self.bs * self.bs;
        &mut self.vals[s * q..(s + 1) * q]
    }

    /// Slot of block `(i, j)` with `i <= j`, if stored.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_slots(i);
        self.cols[r.clone()].binary_search(&j).ok().map(|k| r.start + k)
    }

    /// Entry `(r, c)` of the full symmetric matrix.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (r, c) = if r / self.bs <= c / self.bs { (r, c) } else { (c, r) };
        let bs = self.bs;
        match self.find(r / bs, c / bs) {
            Some(s) => self.block(s)[(r % bs) * bs + c % bs],
            None => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let bs = self.bs;
        let mut d = Vec::with_capacity(self.n());
        for i in 0..self.num_block_rows() {
            let blk = self.block(self.row_ptr[i]);
            d.extend((0..bs).map(|a| blk[a * bs + a]));
        }
        d
    }

    pub fn add_to_diagonal(&mut self, eps: f64) {
        let bs = self.bs;
        for i in 0..self.num_block_rows() {
            let s = self.row_ptr[i];
            let blk = self.block_mut(s);
            for a in 0..bs {
                blk[a * bs + a] += eps;
            }
        }
    }

    /// `y = G x`. Each stored off-diagonal block is applied twice, as itself
    /// and as its transpose.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let bs = self.bs;
        y.fill(0.0);
        for i in 0..self.num_block_rows() {
            let xi = &x[i * bs..(i + 1) * bs];
            for s in self.row_slots(i) {
                let j = self.cols[s];
                let blk = self.block(s);
                if j == i {
                    let yi = &mut y[i * bs..(i + 1) * bs];
                    gemv(blk, bs, xi, yi);
                } else {
                    let (lo, hi) = y.split_at_mut(j * bs);
                    let yi = &mut lo[i * bs..(i + 1) * bs];
                    let yj = &mut hi[..bs];
                    let xj = &x[j * bs..(j + 1) * bs];
                    for a in 0..bs {
                        let row = &blk[a * bs..(a + 1) * bs];
                        yi[a] += dot(row, xj);
                        let xa = xi[a];
                        for (yb, &v) in yj.iter_mut().zip(row) {
                            *yb += v * xa;
                        }
                    }
                }
            }
        }
    }

    /// Per-row `(diagonal, sum of |off-diagonal|)` of the full matrix.
    pub fn row_abs_sums(&self) -> (Vec<f64>, Vec<f64>) {
        let bs = self.bs;
        let n = self.n();
        let diag = self.diagonal();
        let mut off = vec![0.0; n];
        for i in 0..self.num_block_rows() {
            for s in self.row_slots(i) {
                let j = self.cols[s];
                let blk = self.block(s);
                for a in 0..bs {
                    for b in 0..bs {
                        let v = blk[a * bs + b].abs();
                        if j == i {
                            if a != b {
                                off[i * bs + a] += v;
                            }
                        } else {
                            off[i * bs + a] += v;
                            off[j * bs + b] += v;
                        }
                    }
                }
            }
        }
        (diag, off)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let bs = self.bs;
        let n = self.n();
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..self.num_block_rows() {
            for s in self.row_slots(i) {
                let j = self.cols[s];
                let blk = self.block(s);
                for a in 0..bs {
                    for b in 0..bs {
                        d[i * bs + a][j * bs + b] = blk[a * bs + b];
                        d[j * bs + b][i * bs + a] = blk[a * bs + b];
                    }
                }
            }
        }
        d
    }

    /// Matrix-market coordinate dump of the upper triangle.
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> Result<()> {
        let bs = self.bs;
        let mut entries = Vec::new();
        for i in 0..self.num_block_rows() {
            for s in self.row_slots(i) {
                let j = self.cols[s];
                let blk = self.block(s);
                for a in 0..bs {
                    for b in 0..bs {
                        let (r, c) = (i * bs + a, j * bs + b);
                        if c >= r && blk[a * bs + b] != 0.0 {
                            entries.push((r, c, blk[a * bs + b]));
                        }
                    }
                }
            }
        }
        writeln!(out, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(out, "{} {} {}", self.n(), self.n(), entries.len())?;
        // symmetric format stores the lower triangle
        for (r, c, v) in entries {
            writeln!(out, "{} {} {:e}", c + 1, r + 1, v)?;
        }
        Ok(())
    }
}

/// Multiply-only copy of a [`BlockSymMatrix`] that drops the structural
/// zeros of off-diagonal blocks.
///
/// Off-diagonal blocks of the normal matrix are nonzero only in their leading
/// rows and columns: a coupling row touches the neighbour's expansion at its
/// own center, where every non-linear monomial vanishes. Each block keeps its
/// first `k` rows in full plus the first `k` columns of the remaining rows,
/// with `k` the smallest value covering all nonzeros (`k = bs` is dense).
#[derive(Clone, Debug)]
pub struct LeadingBlockMatrix {
    bs: usize,
    diag: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    lead: Vec<usize>,
    start: Vec<usize>,
    vals: Vec<f64>,
}

impl LeadingBlockMatrix {
    pub fn new(g: &BlockSymMatrix) -> Self {
        let bs = g.bs;
        let nb = g.num_block_rows();
        let mut out = Self {
            bs,
            diag: Vec::with_capacity(nb * bs * bs),
            row_ptr: vec![0],
            cols: Vec::new(),
            lead: Vec::new(),
            start: Vec::new(),
            vals: Vec::new(),
        };
        for i in 0..nb {
            for s in g.row_slots(i) {
                let blk = g.block(s);
                let j = g.cols[s];
                if j == i {
                    out.diag.extend_from_slice(blk);
                    continue;
                }
                let mut k = 0;
                for a in 0..bs {
                    for b in 0..bs {
                        if blk[a * bs + b] != 0.0 {
                            k = k.max(a.min(b) + 1);
                        }
                    }
                }
                out.cols.push(j);
                out.lead.push(k);
                out.start.push(out.vals.len());
                out.vals.extend_from_slice(&blk[..k * bs]);
                for a in k..bs {
                    out.vals.extend_from_slice(&blk[a * bs..a * bs + k]);
                }
            }
            out.row_ptr.push(out.cols.len());
        }
        out
    }

    pub fn n(&self) -> usize {
        (self.row_ptr.len() - 1) * self.bs
    }

    /// Stored values, diagonal blocks included.
    pub fn stored(&self) -> usize {
        self.diag.len() + self.vals.len()
    }

    /// `y = G x`, same result as [`BlockSymMatrix::matvec`].
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let bs = self.bs;
        let q = bs * bs;
        y.fill(0.0);
        for i in 0..self.row_ptr.len() - 1 {
            let xi = &x[i * bs..(i + 1) * bs];
            gemv(&self.diag[i * q..(i + 1) * q], bs, xi, &mut y[i * bs..(i + 1) * bs]);
            for s in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[s];
                let k = self.lead[s];
                let (top, left) = self.vals[self.start[s]..].split_at(k * bs);
                let (lo, hi) = y.split_at_mut(j * bs);
                let yi = &mut lo[i * bs..(i + 1) * bs];
                let yj = &mut hi[..bs];
                let xj = &x[j * bs..(j + 1) * bs];
                for a in 0..k {
                    let row = &top[a * bs..(a + 1) * bs];
                    yi[a] += dot(row, xj);
                    let xa = xi[a];
                    for (yb, &v) in yj.iter_mut().zip(row) {
                        *yb += v * xa;
                    }
                }
                for a in k..bs {
                    let row = &left[(a - k) * k..(a - k + 1) * k];
                    yi[a] += dot(row, &xj[..k]);
                    let xa = xi[a];
                    for (yb, &v) in yj[..k].iter_mut().zip(row) {
                        *yb += v * xa;
                    }
                }
            }
        }
    }
}

/// Matrix-market dump of a rectangular system with its right-hand side as an
/// extra last column.
pub fn write_rectangular_market<W: Write>(a: &CsrMatrix, b: &[f64], mut out: W) -> Result<()> {
    let nnz = a.nnz() + b.iter().filter(|&&v| v != 0.0).count();
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "% last column is the right-hand side")?;
    writeln!(out, "{} {} {}", a.nrows(), a.ncols() + 1, nnz)?;
    for k in 0..a.nrows() {
        let (c, v) = a.row(k);
        for (&c, &v) in c.iter().zip(v) {
            writeln!(out, "{} {} {:e}", k + 1, c + 1, v)?;
        }
        if b[k] != 0.0 {
            writeln!(out, "{} {} {:e}", k + 1, a.ncols() + 1, b[k])?;
        }
    }
    Ok(())
}

/// Dot product with four interleaved partial sums (fixed order, so results
/// are reproducible).
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let (ca, ra) = a.split_at(n - n % 4);
    let (cb, rb) = b.split_at(n - n % 4);
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// [`dot`] with single-precision left operand, accumulated in f64.
#[inline]
pub(crate) fn dot_f32(a: &[f32], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let (ca, ra) = a.split_at(n - n % 4);
    let (cb, rb) = b.split_at(n - n % 4);
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += f64::from(x[l]) * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += f64::from(*x) * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += B x` for a row-major `bs × bs` block.
#[inline]
pub(crate) fn gemv(blk: &[f64], bs: usize, x: &[f64], y: &mut [f64]) {
    for a in 0..bs {
        y[a] += dot(&blk[a * bs..(a + 1) * bs], x);
    }
}

/// In-place Cholesky `A = UᵀU` of a row-major block; the strict lower part is
/// zeroed. Returns false on a non-positive pivot.
pub(crate) fn cholesky_upper(a: &mut [f64], bs: usize) -> bool {
    for k in 0..bs {
        let mut d = a[k * bs + k];
        for i in 0..k {
            d -= a[i * bs + k] * a[i * bs + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[k * bs + k] = d;
        for j in k + 1..bs {
            let mut s = a[k * bs + j];
            for i in 0..k {
                s -= a[i * bs + k] * a[i * bs + j];
            }
            a[k * bs + j] = s / d;
        }
        for j in 0..k {
            a[k * bs + j] = 0.0;
        }
    }
    true
}

/// Solves `Uᵀ y = x` in place for upper-triangular `U`.
pub(crate) fn solve_upper_transpose(u: &[f64], bs: usize, x: &mut [f64]) {
    for k in 0..bs {
        let mut s = x[k];
        for i in 0..k {
            s -= u[i * bs + k] * x[i];
        }
        x[k] = s / u[k * bs + k];
    }
}

/// Solves `U y = x` in place for upper-triangular `U`.
#[cfg(test)]
pub(crate) fn solve_upper(u: &[f64], bs: usize, x: &mut [f64]) {
    for k in (0..bs).rev() {
        let row = &u[k * bs..(k + 1) * bs];
        let s = x[k] - dot(&row[k + 1..], &x[k + 1..]);
        x[k] = s / row[k];
    }
}

//! Sparse operators and a banded LU solver.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::{czero, Real, C};

/// Square complex matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOp<T> {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C<T>>,
}

impl<T: Real> SparseOp<T> {
    /// Builds from `(row, col, value)` triplets; duplicates are summed, exact zeros dropped.
    pub fn from_triplets(dim: usize, mut trip: Vec<(usize, usize, C<T>)>) -> Self {
        trip.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<C<T>> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows = Vec::with_capacity(trip.len());
        for (i, j, v) in trip {
            assert!(i < dim && j < dim, "triplet ({i},{j}) outside dimension {dim}");
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                rows.push(i);
                last = Some((i, j));
            }
        }
        let mut kc = Vec::with_capacity(cols.len());
        let mut kv = Vec::with_capacity(vals.len());
        for ((i, j), v) in rows.into_iter().zip(cols).zip(vals) {
            if v != czero() {
                row_ptr[i + 1] += 1;
                kc.push(j);
                kv.push(v);
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { dim, row_ptr, cols: kc, vals: kv }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_triplets(dim, Vec::new())
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![C::new(T::one(), T::zero()); dim])
    }

    pub fn diagonal(d: &[C<T>]) -> Self {
        Self::from_triplets(d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Iterates the stored entries of row `i` as `(col, value)`.
    #[inline]
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C<T>)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, C<T>)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.dim {
            out.extend(self.row(i).map(|(j, v)| (i, j, v)));
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> C<T> {
        self.row(i).find(|&(c, _)| c == j).map(|(_, v)| v).unwrap_or_else(czero)
    }

    /// `y = A x`.
    #[inline]
    pub fn apply(&self, x: &[C<T>], y: &mut [C<T>]) {
        for i in 0..self.dim {
            let mut acc = czero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] = acc;
        }
    }

    /// `y += s A x`.
    #[inline]
    pub fn apply_add(&self, s: C<T>, x: &[C<T>], y: &mut [C<T>]) {
        for i in 0..self.dim {
            let mut acc = czero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] += s * acc;
        }
    }

    /// `<x|A|x>` without normalisation.
    pub fn sandwich(&self, x: &[C<T>]) -> C<T> {
        let mut acc = czero();
        for i in 0..self.dim {
            let mut row = czero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.vals[k] * x[self.cols[k]];
            }
            acc += x[i].conj() * row;
        }
        acc
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(
            self.dim,
            self.triplets().into_iter().map(|(i, j, v)| (j, i, v.conj())).collect(),
        )
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self::from_triplets(
            self.dim,
            self.triplets().into_iter().map(|(i, j, v)| (i, j, v * s)).collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut t = self.triplets();
        t.extend(other.triplets());
        Self::from_triplets(self.dim, t)
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut t = Vec::new();
        for i in 0..self.dim {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    t.push((i, j, a * b));
                }
            }
        }
        Self::from_triplets(self.dim, t)
    }

    pub fn to_dense(&self) -> Array2<C<T>> {
        let mut m = Array2::from_elem((self.dim, self.dim), czero());
        for (i, j, v) in self.triplets() {
            m[[i, j]] = v;
        }
        m
    }

    /// Largest `|A_ij - conj(A_ji)|`.
    pub fn hermiticity_residual(&self) -> T {
        let adj = self.adjoint();
        let diff = self.add(&adj.scale(C::new(-T::one(), T::zero())));
        diff.vals.iter().fold(T::zero(), |m, v| m.max(v.norm()))
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for i in 0..self.dim {
            for (j, _) in self.row(i) {
                bw = bw.max(i.abs_diff(j));
            }
        }
        bw
    }
}

/// LU factorisation with partial pivoting of a banded complex matrix.
///
/// Storage follows the LAPACK `gbtrf` layout: column `j` holds rows
/// `j - ku - kl ..= j + kl`, with `kl` extra rows for pivoting fill-in.
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    ab: Vec<C<T>>,
    piv: Vec<usize>,
    /// Smallest pivot modulus encountered.
    pub min_pivot: T,
    /// Largest pivot modulus encountered.
    pub max_pivot: T,
}

/// Banded matrix being assembled before factorisation.
pub struct BandedMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    ab: Vec<C<T>>,
}

impl<T: Real> BandedMatrix<T> {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let ld = 2 * kl + ku + 1;
        Self { n, kl, ku, ld, ab: vec![czero(); ld * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `v` to entry `(i, j)`; panics outside the declared band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: C<T>) {
        assert!(
            i <= j + self.kl && j <= i + self.ku,
            "entry ({i},{j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let r = self.kl + self.ku + i - j;
        self.ab[j * self.ld + r] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> C<T> {
        if i > j + self.kl || j > i + self.ku {
            return czero();
        }
        self.ab[j * self.ld + self.kl + self.ku + i - j]
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[C<T>], y: &mut [C<T>]) {
        for v in y.iter_mut() {
            *v = czero();
        }
        let kv = self.kl + self.ku;
        for j in 0..self.n {
            let i0 = j.saturating_sub(self.ku);
            let i1 = (j + self.kl).min(self.n - 1);
            let col = &self.ab[j * self.ld..(j + 1) * self.ld];
            for i in i0..=i1 {
                y[i] += col[kv + i - j] * x[j];
            }
        }
    }

    /// Factorises in place (unblocked `gbtf2`). Exactly zero pivots are
    /// replaced by a tiny multiple of the largest pivot so that singular
    /// systems can still be used for inverse iteration.
    pub fn factor(self) -> BandedLu<T> {
        let Self { n, kl, ku, ld, mut ab } = self;
        let kv = ku + kl;
        let mut piv = vec![0usize; n];
        let mut ju = 0usize;
        let mut min_pivot = T::infinity();
        let mut max_pivot = T::zero();
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let base = j * ld + kv;
            let mut jp = 0;
            let mut best = T::zero();
            for i in 0..=km {
                let m = ab[base + i].norm();
                if m > best {
                    best = m;
                    jp = i;
                }
            }
            piv[j] = j + jp;
            if best == T::zero() {
                let fill = max_pivot.max(T::one()) * T::epsilon() * T::epsilon();
                ab[base] = C::new(fill, T::zero());
                best = fill;
            }
            min_pivot = min_pivot.min(best);
            max_pivot = max_pivot.max(best);
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let off = c - j;
                    let a = c * ld + kv + jp - off;
                    let b = c * ld + kv - off;
                    ab.swap(a, b);
                }
            }
            let recip = C::new(T::one(), T::zero()) / ab[base];
            for i in 1..=km {
                ab[base + i] = ab[base + i] * recip;
            }
            if km > 0 {
                let (left, right) = ab.split_at_mut((j + 1) * ld);
                let lcol = &left[base + 1..=base + km];
                for c in (j + 1)..=ju {
                    let off = c - j;
                    let col = &mut right[(c - j - 1) * ld..(c - j) * ld];
                    let u = col[kv - off];
                    if u == czero() {
                        continue;
                    }
                    let tgt = &mut col[kv - off + 1..=kv - off + km];
                    for (t, l) in tgt.iter_mut().zip(lcol) {
                        *t -= *l * u;
                    }
                }
            }
        }
        BandedLu { n, kl, ku, ld, ab, piv, min_pivot, max_pivot }
    }
}

impl<T: Real> BandedLu<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [C<T>]) -> Result<()> {
        if b.len() != self.n {
            return Err(Error::Validation(format!(
                "rhs length {} does not match dimension {}",
                b.len(),
                self.n
            )));
        }
        let (n, kl, ku, ld) = (self.n, self.kl, self.ku, self.ld);
        let kv = kl + ku;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let l = self.piv[j];
            if l != j {
                b.swap(l, j);
            }
            let bj = b[j];
            let base = j * ld + kv;
            for i in 1..=km {
                b[j + i] -= self.ab[base + i] * bj;
            }
        }
        let span = kl + ku;
        for j in (0..n).rev() {
            let base = j * ld + kv;
            b[j] = b[j] / self.ab[base];
            let bj = b[j];
            let i0 = j.saturating_sub(span);
            for i in i0..j {
                b[i] -= self.ab[base - (j - i)] * bj;
            }
        }
        if b.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numerical("banded solve produced non-finite values".into()));
        }
        Ok(())
    }
}

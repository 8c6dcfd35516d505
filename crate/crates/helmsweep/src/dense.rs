//! Dense complex kernels for the frontal solver.
//!
//! Everything here works on column-major [`DenseMat`] storage and uses
//! transpose symmetry (no conjugation): the factorizations target
//! complex-symmetric matrices, for which `A = A^T` but `A != A^H`.
//!
//! The kernels are deliberately self-contained. Inner loops run over
//! contiguous columns so the compiler can vectorize them.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative threshold below which an LDL^T pivot is reported as near zero.
pub const PIVOT_WARN_THRESHOLD: f64 = 1e-14;

/// Column-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl DenseMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMat {
            rows,
            cols,
            data: vec![Complex64::ZERO; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = DenseMat::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.data[i + j * rows] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline(always)]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i + j * self.rows]
    }

    #[inline(always)]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i + j * self.rows]
    }

    #[inline(always)]
    pub fn col(&self, j: usize) -> &[Complex64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline(always)]
    pub fn col_mut(&mut self, j: usize) -> &mut [Complex64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Two distinct columns borrowed mutably/immutably at once (`src != dst`).
    #[inline(always)]
    fn col_pair_mut(&mut self, src: usize, dst: usize) -> (&[Complex64], &mut [Complex64]) {
        debug_assert_ne!(src, dst);
        let r = self.rows;
        if src < dst {
            let (a, b) = self.data.split_at_mut(dst * r);
            (&a[src * r..src * r + r], &mut b[..r])
        } else {
            let (a, b) = self.data.split_at_mut(src * r);
            (&b[..r], &mut a[dst * r..dst * r + r])
        }
    }

    /// `y -= self * x` (no conjugation).
    pub fn gemv_sub(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for j in 0..self.cols {
            let xj = x[j];
            if xj == Complex64::ZERO {
                continue;
            }
            let col = self.col(j);
            for i in 0..self.rows {
                y[i] -= col[i] * xj;
            }
        }
    }

    /// `y -= self^T * x` (no conjugation).
    pub fn gemv_transpose_sub(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for j in 0..self.cols {
            let col = self.col(j);
            let mut acc = Complex64::ZERO;
            for i in 0..self.rows {
                acc += col[i] * x[i];
            }
            y[j] -= acc;
        }
    }

    /// Frobenius norm.
    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `self - other` entrywise.
    pub fn sub(&self, other: &DenseMat) -> DenseMat {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        DenseMat {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// `self * other^T`, used by small verification paths.
    pub fn mul_nt(&self, other: &DenseMat) -> DenseMat {
        assert_eq!(self.cols, other.cols);
        let mut out = DenseMat::zeros(self.rows, other.rows);
        for k in 0..self.cols {
            for j in 0..other.rows {
                let coef = other.at(j, k);
                if coef == Complex64::ZERO {
                    continue;
                }
                let col = self.col(k);
                let dst = out.col_mut(j);
                for i in 0..dst.len() {
                    dst[i] += col[i] * coef;
                }
            }
        }
        out
    }
}

/// Diagnostics from an LDL^T factorization.
#[derive(Clone, Copy, Debug, Default)]
pub struct PivotReport {
    /// Smallest pivot magnitude encountered.
    pub min_abs_pivot: f64,
    /// Number of pivots below `PIVOT_WARN_THRESHOLD * max |initial diagonal|`.
    pub near_zero: usize,
}

/// In-place LDL^T of a complex-symmetric matrix.
///
/// Only the lower triangle of `a` is read. On return the strictly lower
/// triangle holds the unit-lower factor `L` and `d` holds the diagonal `D`,
/// so `A = L D L^T`. No pivoting is performed; an exactly zero pivot is an
/// error, and near-zero pivots are counted in the report.
pub fn ldlt_in_place(a: &mut DenseMat, d: &mut [Complex64]) -> Result<PivotReport> {
    let t = a.rows();
    assert_eq!(a.cols(), t);
    assert_eq!(d.len(), t);
    let max_diag = (0..t).fold(0.0f64, |m, k| m.max(a.at(k, k).norm()));
    let warn_at = PIVOT_WARN_THRESHOLD * max_diag;
    let mut report = PivotReport {
        min_abs_pivot: f64::INFINITY,
        near_zero: 0,
    };
    for k in 0..t {
        let dk = a.at(k, k);
        let mag = dk.norm();
        if mag == 0.0 {
            return Err(Error::SingularFront {
                supernode: usize::MAX,
                index: k,
            });
        }
        report.min_abs_pivot = report.min_abs_pivot.min(mag);
        if mag < warn_at {
            report.near_zero += 1;
        }
        d[k] = dk;
        let inv = dk.inv();
        {
            let col = a.col_mut(k);
            for i in k + 1..t {
                col[i] *= inv;
            }
        }
        // Trailing update, lower triangle only: A[i][j] -= L[i][k] d_k L[j][k].
        for j in k + 1..t {
            let coef = dk * a.at(j, k);
            if coef == Complex64::ZERO {
                continue;
            }
            let (src, dst) = a.col_pair_mut(k, j);
            for i in j..t {
                dst[i] -= coef * src[i];
            }
        }
    }
    if t == 0 {
        report.min_abs_pivot = 0.0;
    }
    Ok(report)
}

/// Multiply-add count of [`ldlt_in_place`] on a `t x t` matrix.
pub fn ldlt_flops(t: u64) -> u64 {
    // Column scaling: sum (t-1-k); trailing update: sum over k of
    // sum_{j>k} (t-j) terms.
    let scale = t * (t.saturating_sub(1)) / 2;
    let update = if t >= 2 { (t * t * t - t) / 6 } else { 0 };
    scale + update
}

/// Solve `x := L^{-1} x` with `L` unit lower (strictly lower part of `l`).
pub fn solve_unit_lower(l: &DenseMat, x: &mut [Complex64]) {
    let t = l.rows();
    debug_assert_eq!(x.len(), t);
    for j in 0..t {
        let xj = x[j];
        if xj == Complex64::ZERO {
            continue;
        }
        let col = l.col(j);
        for i in j + 1..t {
            x[i] -= col[i] * xj;
        }
    }
}

/// Solve `x := L^{-T} x` with `L` unit lower.
pub fn solve_unit_lower_transpose(l: &DenseMat, x: &mut [Complex64]) {
    let t = l.rows();
    debug_assert_eq!(x.len(), t);
    for j in (0..t).rev() {
        let col = l.col(j);
        let mut acc = Complex64::ZERO;
        for i in j + 1..t {
            acc += col[i] * x[i];
        }
        x[j] -= acc;
    }
}

/// Multiply `x := (I + strictly_lower(l)) x` in place.
pub fn trimv_unit_lower(l: &DenseMat, x: &mut [Complex64]) {
    let t = l.rows();
    debug_assert_eq!(x.len(), t);
    for j in (0..t).rev() {
        let xj = x[j];
        if xj == Complex64::ZERO {
            continue;
        }
        let col = l.col(j);
        for i in j + 1..t {
            x[i] += col[i] * xj;
        }
    }
}

/// Multiply `x := (I + strictly_lower(l))^T x` in place.
pub fn trimv_unit_lower_transpose(l: &DenseMat, x: &mut [Complex64]) {
    let t = l.rows();
    debug_assert_eq!(x.len(), t);
    for j in 0..t {
        let col = l.col(j);
        let mut acc = Complex64::ZERO;
        for i in j + 1..t {
            acc += col[i] * x[i];
        }
        x[j] += acc;
    }
}

/// Multiply-add count of one unit-lower solve or trimv of size `t` (both
/// touch the same strictly lower triangle once).
pub fn tri_flops(t: u64) -> u64 {
    t * t.saturating_sub(1) / 2
}

/// `b := b * L^{-T}` for unit-lower `l` (`b` is `m x t`, `l` is `t x t`).
pub fn trsm_right_unit_lower_transpose(b: &mut DenseMat, l: &DenseMat) {
    let t = l.rows();
    assert_eq!(b.cols(), t);
    // X L^T = B column by column: X[:,j] = B[:,j] - sum_{k<j} X[:,k] L[j][k].
    for j in 0..t {
        for k in 0..j {
            let coef = l.at(j, k);
            if coef == Complex64::ZERO {
                continue;
            }
            let (src, dst) = b.col_pair_mut(k, j);
            for i in 0..dst.len() {
                dst[i] -= coef * src[i];
            }
        }
    }
}

/// Multiply-add count of [`trsm_right_unit_lower_transpose`].
pub fn trsm_flops(m: u64, t: u64) -> u64 {
    m * t * t.saturating_sub(1) / 2
}

/// Scale column `j` of `b` by `1 / d[j]`.
pub fn scale_cols_inv(b: &mut DenseMat, d: &[Complex64]) {
    assert_eq!(b.cols(), d.len());
    for j in 0..b.cols() {
        let inv = d[j].inv();
        for v in b.col_mut(j) {
            *v *= inv;
        }
    }
}

/// Rank-k update on the lower triangle: `c[i][j] -= sum_k z[i][k] f[j][k]`
/// for `i >= j`. The strictly upper triangle of `c` is left untouched.
pub fn rank_update_lower(c: &mut DenseMat, z: &DenseMat, f: &DenseMat) {
    let b = c.rows();
    assert_eq!(c.cols(), b);
    assert_eq!(z.rows(), b);
    assert_eq!(f.rows(), b);
    assert_eq!(z.cols(), f.cols());
    for k in 0..z.cols() {
        for j in 0..b {
            let coef = f.at(j, k);
            if coef == Complex64::ZERO {
                continue;
            }
            let zcol = z.col(k);
            let ccol = c.col_mut(j);
            for i in j..b {
                ccol[i] -= coef * zcol[i];
            }
        }
    }
}

/// Multiply-add count of [`rank_update_lower`] with update rank `t`.
pub fn rank_update_flops(b: u64, t: u64) -> u64 {
    t * b * (b + 1) / 2
}

/// Invert a unit-lower triangular matrix in place (strictly lower storage).
pub fn unit_lower_invert_in_place(l: &mut DenseMat) {
    let t = l.rows();
    assert_eq!(l.cols(), t);
    // Column j of the inverse: X[i][j] = -(L[i][j] + sum_{j<k<i} L[i][k] X[k][j]).
    // Columns right of j are still the original L when column j is built, and
    // rows above i in column j already hold inverse entries.
    for j in 0..t {
        for i in j + 1..t {
            let mut acc = l.at(i, j);
            for k in j + 1..i {
                acc += l.at(i, k) * l.at(k, j);
            }
            *l.at_mut(i, j) = -acc;
        }
    }
}

/// Multiply-add count of [`unit_lower_invert_in_place`].
pub fn unit_lower_invert_flops(t: u64) -> u64 {
    if t < 3 {
        return 0;
    }
    // sum over j < i of (i - j - 1)
    (t * t * t - 3 * t * t + 2 * t) / 6
}

/// LU factorization with partial pivoting, used by the naive block reference
/// path. Overwrites `a` with the L (unit lower) and U factors and returns the
/// pivot rows.
pub fn lu_factor_pp(a: &mut DenseMat) -> Result<Vec<usize>> {
    let n = a.rows();
    assert_eq!(a.cols(), n);
    let mut piv = Vec::with_capacity(n);
    for k in 0..n {
        let mut p = k;
        let mut best = a.at(k, k).norm();
        for i in k + 1..n {
            let mag = a.at(i, k).norm();
            if mag > best {
                best = mag;
                p = i;
            }
        }
        if best == 0.0 {
            return Err(Error::Domain(format!("singular LU pivot at column {k}")));
        }
        piv.push(p);
        if p != k {
            for j in 0..n {
                let tmp = a.at(k, j);
                *a.at_mut(k, j) = a.at(p, j);
                *a.at_mut(p, j) = tmp;
            }
        }
        let inv = a.at(k, k).inv();
        for i in k + 1..n {
            *a.at_mut(i, k) = a.at(i, k) * inv;
        }
        for j in k + 1..n {
            let coef = a.at(k, j);
            if coef == Complex64::ZERO {
                continue;
            }
            let (src, dst) = a.col_pair_mut(k, j);
            for i in k + 1..n {
                dst[i] -= coef * src[i];
            }
        }
    }
    Ok(piv)
}

/// Solve `A x = b` in place given [`lu_factor_pp`] output.
pub fn lu_solve_pp(lu: &DenseMat, piv: &[usize], x: &mut [Complex64]) {
    let n = lu.rows();
    debug_assert_eq!(x.len(), n);
    for (k, &p) in piv.iter().enumerate() {
        x.swap(k, p);
    }
    for j in 0..n {
        let xj = x[j];
        if xj == Complex64::ZERO {
            continue;
        }
        let col = lu.col(j);
        for i in j + 1..n {
            x[i] -= col[i] * xj;
        }
    }
    for j in (0..n).rev() {
        let xj = x[j] / lu.at(j, j);
        x[j] = xj;
        if xj == Complex64::ZERO {
            continue;
        }
        let col = lu.col(j);
        for i in 0..j {
            x[i] -= col[i] * xj;
        }
    }
}

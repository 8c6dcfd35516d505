//! Second-order finite-difference discretization of the Helmholtz operator
//! with perfectly-matched-layer (PML) boundary faces.
//!
//! The grid holds interior points only: homogeneous Dirichlet rows are
//! eliminated, so a `n1 x n2 x n3` grid over a box of extents `(e1, e2, e3)`
//! places point `(i1, i2, i3)` at `((i1+1) h1, (i2+1) h2, (i3+1) h3)` with
//! `h_k = e_k / (n_k + 1)`. Flat indices are plane-major,
//! `i1 + i2 n1 + i3 n1 n2`, which makes each constant-`x3` plane a contiguous
//! block and the whole operator block tridiagonal by planes.
//!
//! PML is realized by complex coordinate stretching `s_k = 1 + i sigma_k / omega`
//! evaluated at points and cell midpoints. The stretched equation is
//! multiplied through by `s1 s2 s3`: each row's stencil terms are scaled by
//! the product of the transverse stretch factors (which keeps the assembled
//! operator complex symmetric entry for entry) and the mass term becomes
//! `-s1 s2 s3 (omega + i alpha)^2 / c(x)^2`. The damped and undamped
//! operators therefore differ only on the diagonal, and at unstretched points
//! the difference is exactly `(alpha^2 - 2 i omega alpha) / c^2`.

use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sweep::PanelPartition;
use crate::velocity::{PmlProfile, VelocityModel};

/// Frequency and artificial damping for an assembled operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DampingSpec {
    /// Angular frequency `omega`.
    pub omega: f64,
    /// Artificial damping `alpha`; the damped operator uses `omega + i alpha`.
    pub alpha: f64,
}

impl DampingSpec {
    pub fn new(omega: f64, alpha: f64) -> Self {
        DampingSpec { omega, alpha }
    }

    /// No artificial damping: the operator `A` itself.
    pub fn undamped(omega: f64) -> Self {
        DampingSpec { omega, alpha: 0.0 }
    }

    /// The standard shifted operator `J` with `alpha = 2 pi`.
    pub fn standard(omega: f64) -> Self {
        DampingSpec {
            omega,
            alpha: 2.0 * std::f64::consts::PI,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.omega < 0.0 || !self.omega.is_finite() {
            return Err(Error::Config(format!(
                "omega must be finite and non-negative: {}",
                self.omega
            )));
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(Error::Config(format!(
                "alpha must be finite and non-negative: {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Index of the `(axis, side)` face in [`GridSpec::pml_faces`].
pub fn face_index(axis: usize, high: bool) -> usize {
    2 * axis + usize::from(high)
}

/// Geometry of a discretization grid.
#[derive(Clone, Debug)]
pub struct GridSpec {
    /// Interior points per axis.
    pub dims: [usize; 3],
    /// Grid spacing per axis.
    pub spacing: [f64; 3],
    /// Which of the six faces carry PML, ordered
    /// `[x1 low, x1 high, x2 low, x2 high, x3 low, x3 high]`.
    pub pml_faces: [bool; 6],
    /// PML profile; its `h` is substituted per axis when evaluated.
    pub profile: PmlProfile,
    /// Diagnostic resolution, points per shortest wavelength.
    pub points_per_wavelength: f64,
}

impl GridSpec {
    /// Grid over a box with the given extents. PML thickness, amplitude, and
    /// exponent come from `profile` (its `h` field is ignored and substituted
    /// per axis).
    pub fn new(
        dims: [usize; 3],
        extents: [f64; 3],
        pml_faces: [bool; 6],
        profile: PmlProfile,
    ) -> Result<Self> {
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::Config(format!("grid dims must be positive: {dims:?}")));
        }
        if extents.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Config(format!("grid extents must be positive: {extents:?}")));
        }
        let spacing = [
            extents[0] / (dims[0] + 1) as f64,
            extents[1] / (dims[1] + 1) as f64,
            extents[2] / (dims[2] + 1) as f64,
        ];
        let grid = GridSpec {
            dims,
            spacing,
            pml_faces,
            profile,
            points_per_wavelength: 0.0,
        };
        for axis in 0..3 {
            for high in [false, true] {
                if grid.pml_faces[face_index(axis, high)] {
                    if profile.gamma == 0 {
                        return Err(Error::Config(
                            "a PML face needs a profile with gamma >= 1".into(),
                        ));
                    }
                    if profile.gamma >= dims[axis] {
                        return Err(Error::Config(format!(
                            "PML thickness {} must be smaller than dim {} on axis {axis}",
                            profile.gamma, dims[axis]
                        )));
                    }
                }
            }
        }
        Ok(grid)
    }

    /// Unit-cube grid with PML only on the `x3 = 0` face.
    pub fn unit_cube_pml_bottom(dims: [usize; 3], profile: PmlProfile) -> Result<Self> {
        let mut faces = [false; 6];
        faces[face_index(2, false)] = true;
        GridSpec::new(dims, [1.0; 3], faces, profile)
    }

    pub fn with_points_per_wavelength(mut self, ppw: f64) -> Self {
        self.points_per_wavelength = ppw;
        self
    }

    /// Total number of unknowns.
    pub fn n_points(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Physical extents implied by dims and spacing.
    pub fn extents(&self) -> [f64; 3] {
        [
            self.spacing[0] * (self.dims[0] + 1) as f64,
            self.spacing[1] * (self.dims[1] + 1) as f64,
            self.spacing[2] * (self.dims[2] + 1) as f64,
        ]
    }

    /// Flat plane-major index of a grid point.
    pub fn natural_index(&self, coords: [usize; 3]) -> Result<usize> {
        natural_index(coords, self.dims)
    }

    /// Inverse of [`GridSpec::natural_index`].
    pub fn coords_of(&self, idx: usize) -> Result<[usize; 3]> {
        let [n1, n2, n3] = self.dims;
        if idx >= n1 * n2 * n3 {
            return Err(Error::Dimension {
                expected: n1 * n2 * n3,
                got: idx,
            });
        }
        Ok([idx % n1, (idx / n1) % n2, idx / (n1 * n2)])
    }

    /// Physical position of a grid point.
    pub fn position(&self, coords: [usize; 3]) -> [f64; 3] {
        [
            (coords[0] + 1) as f64 * self.spacing[0],
            (coords[1] + 1) as f64 * self.spacing[1],
            (coords[2] + 1) as f64 * self.spacing[2],
        ]
    }

    /// Damping tables for this grid's PML faces: `sigma` at every point
    /// coordinate and at every cell midpoint, per axis.
    pub(crate) fn stretch_tables(&self) -> StretchTables {
        let mut tables = StretchTables::default();
        for axis in 0..3 {
            let n = self.dims[axis];
            let h = self.spacing[axis];
            let profile = PmlProfile { h, ..self.profile };
            let low = self.pml_faces[face_index(axis, false)];
            let high = self.pml_faces[face_index(axis, true)];
            let sigma_at = |t: f64| -> f64 {
                let mut s = 0.0;
                if low {
                    let depth = (profile.gamma as f64 + 1.0) * h - t;
                    if depth > 0.0 {
                        s += profile.sigma(depth).expect("non-negative depth");
                    }
                }
                if high {
                    let depth = t - (n - profile.gamma) as f64 * h;
                    if depth > 0.0 {
                        s += profile.sigma(depth).expect("non-negative depth");
                    }
                }
                s
            };
            tables.point[axis] = (0..n).map(|i| sigma_at((i + 1) as f64 * h)).collect();
            tables.mid[axis] = (0..=n).map(|i| sigma_at((i as f64 + 0.5) * h)).collect();
        }
        tables
    }
}

/// Flat plane-major index `i1 + i2 n1 + i3 n1 n2`, bounds checked.
pub fn natural_index(coords: [usize; 3], dims: [usize; 3]) -> Result<usize> {
    for k in 0..3 {
        if coords[k] >= dims[k] {
            return Err(Error::Dimension {
                expected: dims[k],
                got: coords[k],
            });
        }
    }
    Ok(coords[0] + coords[1] * dims[0] + coords[2] * dims[0] * dims[1])
}

/// PML damping sampled along each axis; `point[k][i]` sits at `(i+1) h_k` and
/// `mid[k][i]` at `(i+0.5) h_k`.
#[derive(Clone, Debug, Default)]
pub(crate) struct StretchTables {
    pub point: [Vec<f64>; 3],
    pub mid: [Vec<f64>; 3],
}

impl StretchTables {
    pub(crate) fn no_pml(dims: [usize; 3]) -> Self {
        let mut t = StretchTables::default();
        for axis in 0..3 {
            t.point[axis] = vec![0.0; dims[axis]];
            t.mid[axis] = vec![0.0; dims[axis] + 1];
        }
        t
    }
}

/// Compressed sparse row complex matrix. Column indices within each row are
/// sorted and unique.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseOperator {
    /// Build from unordered triplets; duplicate entries are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: Vec<(usize, usize, Complex64)>,
    ) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in &triplets {
            if r >= nrows {
                return Err(Error::Dimension {
                    expected: nrows,
                    got: r,
                });
            }
            if c >= ncols {
                return Err(Error::Dimension {
                    expected: ncols,
                    got: c,
                });
            }
            counts[r + 1] += 1;
        }
        for r in 0..nrows {
            counts[r + 1] += counts[r];
        }
        let mut slot = counts.clone();
        let mut col_idx = vec![0usize; triplets.len()];
        let mut values = vec![Complex64::ZERO; triplets.len()];
        for (r, c, v) in triplets {
            let at = slot[r];
            col_idx[at] = c;
            values[at] = v;
            slot[r] += 1;
        }
        // Sort each row by column and merge duplicates in place.
        let mut out_col = Vec::with_capacity(col_idx.len());
        let mut out_val = Vec::with_capacity(values.len());
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut order: Vec<usize> = Vec::new();
        for r in 0..nrows {
            let lo = counts[r];
            let hi = counts[r + 1];
            order.clear();
            order.extend(lo..hi);
            order.sort_by_key(|&k| col_idx[k]);
            for &k in &order {
                if out_col.len() > row_ptr[r] && *out_col.last().unwrap() == col_idx[k] {
                    *out_val.last_mut().unwrap() += values[k];
                } else {
                    out_col.push(col_idx[k]);
                    out_val.push(values[k]);
                }
            }
            row_ptr[r + 1] = out_col.len();
        }
        Ok(SparseOperator {
            nrows,
            ncols,
            row_ptr,
            col_idx: out_col,
            values: out_val,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// Columns and values of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[Complex64]) {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// Entry lookup; absent entries are zero.
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => Complex64::ZERO,
        }
    }

    /// `y = self * x`.
    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = Complex64::ZERO;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[r] = acc;
        }
    }

    /// `y -= self * x`.
    pub fn matvec_sub(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = Complex64::ZERO;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[r] -= acc;
        }
    }

    /// `y = self^T * x` (no conjugation).
    pub fn matvec_transpose(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        y.fill(Complex64::ZERO);
        for r in 0..self.nrows {
            let xr = x[r];
            if xr == Complex64::ZERO {
                continue;
            }
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                y[*c] += v * xr;
            }
        }
    }

    /// Multiply-adds per matrix-vector product.
    pub fn matvec_flops(&self) -> u64 {
        self.nnz() as u64
    }

    /// First entry without a structural transpose partner, if any.
    pub fn structural_asymmetry(&self) -> Option<(usize, usize)> {
        if self.nrows != self.ncols {
            return Some((self.nrows, self.ncols));
        }
        for r in 0..self.nrows {
            let (cols, _) = self.row(r);
            for &c in cols {
                let (tcols, _) = self.row(c);
                if tcols.binary_search(&r).is_err() {
                    return Some((r, c));
                }
            }
        }
        None
    }

    /// Largest `|A_ij - A_ji|` over stored entries.
    pub fn max_symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(*c, r)).norm());
            }
        }
        worst
    }

    /// Dense copy for small verification paths.
    pub fn to_dense(&self) -> crate::dense::DenseMat {
        let mut m = crate::dense::DenseMat::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                *m.at_mut(r, *c) = *v;
            }
        }
        m
    }

    /// Text export: a `N nnz` header line, then one `row col re im` line per
    /// stored entry in row-major order (0-based indices).
    pub fn write_triplets<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.nrows, self.nnz())?;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {} {}", r, c, v.re, v.im)?;
            }
        }
        Ok(())
    }
}

/// Assemble the stretched 7-point operator from raw parts: per-point wave
/// speeds in natural order and per-axis damping tables.
pub(crate) fn assemble_general(
    dims: [usize; 3],
    spacing: [f64; 3],
    damping: &DampingSpec,
    speeds: &[f64],
    tables: &StretchTables,
) -> Result<SparseOperator> {
    damping.validate()?;
    let [n1, n2, n3] = dims;
    let n = n1 * n2 * n3;
    assert_eq!(speeds.len(), n);
    let any_pml = tables.point.iter().flatten().any(|&s| s != 0.0)
        || tables.mid.iter().flatten().any(|&s| s != 0.0);
    if any_pml && damping.omega <= 0.0 {
        return Err(Error::Config(
            "PML stretching requires a positive omega".into(),
        ));
    }

    let stretch = |sigma: f64| -> Complex64 {
        if sigma == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(1.0, sigma / damping.omega)
        }
    };
    let s_pt: Vec<Vec<Complex64>> = (0..3)
        .map(|k| tables.point[k].iter().map(|&s| stretch(s)).collect())
        .collect();
    let inv_mid: Vec<Vec<Complex64>> = (0..3)
        .map(|k| tables.mid[k].iter().map(|&s| stretch(s).inv()).collect())
        .collect();
    let inv_h2 = [
        1.0 / (spacing[0] * spacing[0]),
        1.0 / (spacing[1] * spacing[1]),
        1.0 / (spacing[2] * spacing[2]),
    ];
    let shift = {
        let s = Complex64::new(damping.omega, damping.alpha);
        s * s
    };

    let mut triplets = Vec::with_capacity(7 * n);
    let strides = [1usize, n1, n1 * n2];
    for i3 in 0..n3 {
        for i2 in 0..n2 {
            for i1 in 0..n1 {
                let idx = i1 + i2 * n1 + i3 * n1 * n2;
                let coords = [i1, i2, i3];
                let s = [s_pt[0][i1], s_pt[1][i2], s_pt[2][i3]];
                let transverse = [s[1] * s[2], s[0] * s[2], s[0] * s[1]];
                let mut diag = Complex64::ZERO;
                for axis in 0..3 {
                    let i = coords[axis];
                    let lo = inv_mid[axis][i];
                    let hi = inv_mid[axis][i + 1];
                    let t = transverse[axis] * inv_h2[axis];
                    diag += t * (lo + hi);
                    if i > 0 {
                        triplets.push((idx, idx - strides[axis], -t * lo));
                    }
                    if i + 1 < dims[axis] {
                        triplets.push((idx, idx + strides[axis], -t * hi));
                    }
                }
                let c = speeds[idx];
                diag -= s[0] * s[1] * s[2] * shift / (c * c);
                triplets.push((idx, idx, diag));
            }
        }
    }
    SparseOperator::from_triplets(n, n, triplets)
}

/// Assemble the Helmholtz operator on a grid over a velocity model.
///
/// With `damping.alpha == 0` this is the physical operator `A`; with a
/// positive `alpha` it is the artificially damped operator `J` used to build
/// preconditioners. The two share every off-diagonal entry.
pub fn assemble(
    grid: &GridSpec,
    model: &VelocityModel,
    damping: &DampingSpec,
) -> Result<SparseOperator> {
    let ge = grid.extents();
    let me = model.extents();
    for k in 0..3 {
        if (ge[k] - me[k]).abs() > 1e-9 * me[k].max(1.0) {
            return Err(Error::Config(format!(
                "grid extents {ge:?} do not match model extents {me:?}"
            )));
        }
    }
    let [n1, n2, n3] = grid.dims;
    let mut speeds = Vec::with_capacity(grid.n_points());
    for i3 in 0..n3 {
        for i2 in 0..n2 {
            for i1 in 0..n1 {
                speeds.push(model.speed_at(grid.position([i1, i2, i3]))?);
            }
        }
    }
    assemble_general(
        grid.dims,
        grid.spacing,
        damping,
        &speeds,
        &grid.stretch_tables(),
    )
}

/// Diagonal and sub-diagonal panel blocks of a plane-major operator.
#[derive(Clone, Debug)]
pub struct PanelBlocks {
    /// `J_{i,i}`, one square block per panel.
    pub diag: Vec<SparseOperator>,
    /// `J_{i+1,i}`, coupling panel `i` forward into panel `i+1`.
    pub couplers: Vec<SparseOperator>,
}

/// Split a plane-major operator into panel diagonal blocks and sub-diagonal
/// couplers. Entries reaching beyond adjacent panels are rejected.
pub fn extract_panel_blocks(
    op: &SparseOperator,
    partition: &PanelPartition,
    plane_size: usize,
) -> Result<PanelBlocks> {
    if !op.is_square() {
        return Err(Error::Config("panel extraction needs a square operator".into()));
    }
    let n3 = partition.total_planes();
    if op.nrows() != n3 * plane_size {
        return Err(Error::Dimension {
            expected: n3 * plane_size,
            got: op.nrows(),
        });
    }
    let m = partition.len();
    let row_range = |p: usize| {
        let r = partition.planes(p);
        (r.start * plane_size)..(r.end * plane_size)
    };
    let panel_of_row: Vec<usize> = {
        let mut v = vec![0usize; op.nrows()];
        for p in 0..m {
            for r in row_range(p) {
                v[r] = p;
            }
        }
        v
    };
    let mut diag_trips: Vec<Vec<(usize, usize, Complex64)>> = vec![Vec::new(); m];
    let mut sub_trips: Vec<Vec<(usize, usize, Complex64)>> = vec![Vec::new(); m.saturating_sub(1)];
    for r in 0..op.nrows() {
        let pr = panel_of_row[r];
        let r0 = row_range(pr).start;
        let (cols, vals) = op.row(r);
        for (c, v) in cols.iter().zip(vals) {
            let pc = panel_of_row[*c];
            let c0 = row_range(pc).start;
            if pc == pr {
                diag_trips[pr].push((r - r0, c - c0, *v));
            } else if pc + 1 == pr {
                sub_trips[pc].push((r - r0, c - c0, *v));
            } else if pc == pr + 1 {
                // Upper coupler; dropped, it is the transpose of J_{pc,pr}.
            } else {
                return Err(Error::Config(format!(
                    "operator couples panels {pr} and {pc}; not block tridiagonal"
                )));
            }
        }
    }
    let mut diag = Vec::with_capacity(m);
    for (p, trips) in diag_trips.into_iter().enumerate() {
        let len = row_range(p).len();
        diag.push(SparseOperator::from_triplets(len, len, trips)?);
    }
    let mut couplers = Vec::with_capacity(m.saturating_sub(1));
    for (p, trips) in sub_trips.into_iter().enumerate() {
        let rows = row_range(p + 1).len();
        let cols = row_range(p).len();
        couplers.push(SparseOperator::from_triplets(rows, cols, trips)?);
    }
    Ok(PanelBlocks { diag, couplers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::partition_panels;

    fn laplacian_grid(dims: [usize; 3]) -> GridSpec {
        let extents = [
            (dims[0] + 1) as f64,
            (dims[1] + 1) as f64,
            (dims[2] + 1) as f64,
        ];
        GridSpec::new(dims, extents, [false; 6], PmlProfile::new(0, 0.0, 3, 1.0)).unwrap()
    }

    #[test]
    fn natural_index_examples() {
        assert_eq!(natural_index([0, 0, 0], [3, 4, 5]).unwrap(), 0);
        assert_eq!(natural_index([2, 3, 4], [3, 4, 5]).unwrap(), 59);
        assert_eq!(natural_index([1, 0, 1], [2, 2, 2]).unwrap(), 5);
        assert!(natural_index([3, 0, 0], [3, 4, 5]).is_err());
    }

    #[test]
    fn natural_index_round_trips() {
        let grid = laplacian_grid([3, 4, 5]);
        for idx in 0..grid.n_points() {
            let coords = grid.coords_of(idx).unwrap();
            assert_eq!(grid.natural_index(coords).unwrap(), idx);
        }
    }

    #[test]
    fn interior_laplacian_row() {
        // omega = 0, unit speed, h = 1: the plain 7-point Laplacian.
        let grid = laplacian_grid([3, 3, 3]);
        let model = VelocityModel::uniform_on(1.0, grid.extents()).unwrap();
        let a = assemble(&grid, &model, &DampingSpec::undamped(0.0)).unwrap();
        let center = grid.natural_index([1, 1, 1]).unwrap();
        assert_eq!(a.get(center, center), Complex64::new(6.0, 0.0));
        let (cols, vals) = a.row(center);
        assert_eq!(cols.len(), 7);
        for (c, v) in cols.iter().zip(vals) {
            if *c != center {
                assert_eq!(*v, Complex64::new(-1.0, 0.0));
            }
        }
        // A corner row still carries the full diagonal but fewer neighbors.
        let corner = grid.natural_index([0, 0, 0]).unwrap();
        assert_eq!(a.get(corner, corner), Complex64::new(6.0, 0.0));
        assert_eq!(a.row(corner).0.len(), 4);
    }

    fn pml_grid(dims: [usize; 3], gamma: usize, amp: f64) -> GridSpec {
        GridSpec::unit_cube_pml_bottom(dims, PmlProfile::new(gamma, amp, 3, 1.0)).unwrap()
    }

    #[test]
    fn assembled_operator_is_exactly_symmetric() {
        let grid = pml_grid([5, 4, 4], 2, 40.0);
        let model = VelocityModel::wedge();
        let a = assemble(&grid, &model, &DampingSpec::undamped(12.0)).unwrap();
        assert!(a.structural_asymmetry().is_none());
        for r in 0..a.nrows() {
            let (cols, vals) = a.row(r);
            for (c, v) in cols.iter().zip(vals) {
                // Entrywise equality, not approximate.
                assert_eq!(*v, a.get(*c, r), "asymmetry at ({r}, {c})");
            }
        }
    }

    #[test]
    fn damped_and_undamped_differ_only_on_the_diagonal() {
        let grid = pml_grid([4, 4, 5], 2, 40.0);
        let model = VelocityModel::two_layer();
        let omega = 10.0;
        let alpha = 2.0 * std::f64::consts::PI;
        let a = assemble(&grid, &model, &DampingSpec::undamped(omega)).unwrap();
        let j = assemble(&grid, &model, &DampingSpec::new(omega, alpha)).unwrap();
        assert_eq!(a.nnz(), j.nnz());
        // PML sits on the x3-low face only, so the stretch product at a point
        // reduces to s3; compute it from the profile directly.
        let h = grid.spacing[2];
        let stretch3 = |i3: usize| {
            let depth = (grid.profile.gamma as f64 + 1.0) * h - (i3 + 1) as f64 * h;
            let sigma = if depth > 0.0 {
                PmlProfile { h, ..grid.profile }.sigma(depth).unwrap()
            } else {
                0.0
            };
            Complex64::new(1.0, sigma / omega)
        };
        let expected_shift = |c: f64, i3: usize| {
            stretch3(i3) * Complex64::new(alpha * alpha, -2.0 * omega * alpha)
                / Complex64::new(c * c, 0.0)
        };
        for r in 0..a.nrows() {
            let (cols, av) = a.row(r);
            let (jcols, jv) = j.row(r);
            assert_eq!(cols, jcols);
            for ((c, a_val), j_val) in cols.iter().zip(av).zip(jv) {
                if *c == r {
                    let coords = grid.coords_of(r).unwrap();
                    let speed = model.speed_at(grid.position(coords)).unwrap();
                    let diff = j_val - a_val;
                    let want = expected_shift(speed, coords[2]);
                    assert!(
                        (diff - want).norm() <= 1e-12 * want.norm(),
                        "diagonal shift mismatch at row {r}"
                    );
                } else {
                    // Couplers agree exactly.
                    assert_eq!(a_val, j_val);
                }
            }
        }
    }

    #[test]
    fn pml_rows_gain_imaginary_parts() {
        let grid = pml_grid([3, 3, 6], 2, 40.0);
        let model = VelocityModel::uniform(1.0).unwrap();
        let a = assemble(&grid, &model, &DampingSpec::undamped(8.0)).unwrap();
        // A row deep in the PML has complex couplers along x3.
        let deep = grid.natural_index([1, 1, 0]).unwrap();
        let up = grid.natural_index([1, 1, 1]).unwrap();
        assert!(a.get(deep, up).im.abs() > 1e-12);
        // A row far from the PML face has purely real couplers.
        let far = grid.natural_index([1, 1, 5]).unwrap();
        let far_dn = grid.natural_index([1, 1, 4]).unwrap();
        assert_eq!(a.get(far, far_dn).im, 0.0);
    }

    #[test]
    fn operator_is_block_tridiagonal_by_planes() {
        let grid = pml_grid([4, 3, 5], 1, 30.0);
        let model = VelocityModel::waveguide();
        let a = assemble(&grid, &model, &DampingSpec::standard(9.0)).unwrap();
        for r in 0..a.nrows() {
            let plane_r = grid.coords_of(r).unwrap()[2];
            let (cols, _) = a.row(r);
            for &c in cols {
                let plane_c = grid.coords_of(c).unwrap()[2];
                assert!(plane_r.abs_diff(plane_c) <= 1);
            }
        }
    }

    #[test]
    fn pml_requires_positive_omega() {
        let grid = pml_grid([3, 3, 4], 1, 25.0);
        let model = VelocityModel::uniform(1.0).unwrap();
        assert!(assemble(&grid, &model, &DampingSpec::undamped(0.0)).is_err());
    }

    #[test]
    fn panel_block_shapes_and_coupler_sparsity() {
        let grid = pml_grid([4, 4, 8], 2, 30.0);
        let model = VelocityModel::uniform(1.0).unwrap();
        let j = assemble(&grid, &model, &DampingSpec::standard(10.0)).unwrap();
        let partition = partition_panels(8, 3, 2).unwrap();
        let blocks = extract_panel_blocks(&j, &partition, 16).unwrap();
        assert_eq!(blocks.diag.len(), 3);
        assert_eq!(blocks.couplers.len(), 2);
        assert_eq!(blocks.diag[0].nrows(), 48);
        assert_eq!(blocks.diag[1].nrows(), 48);
        assert_eq!(blocks.diag[2].nrows(), 32);
        assert_eq!(blocks.couplers[0].nrows(), 48);
        assert_eq!(blocks.couplers[0].ncols(), 48);
        assert_eq!(blocks.couplers[1].nrows(), 32);
        assert_eq!(blocks.couplers[1].ncols(), 48);
        // Each coupler holds exactly one entry per point of the boundary plane.
        assert_eq!(blocks.couplers[0].nnz(), 16);
        assert_eq!(blocks.couplers[1].nnz(), 16);
        // Every original entry is accounted for by the diagonal blocks, the
        // couplers, and their transposes.
        let kept: usize = blocks.diag.iter().map(|b| b.nnz()).sum::<usize>()
            + 2 * blocks.couplers.iter().map(|b| b.nnz()).sum::<usize>();
        assert_eq!(kept, j.nnz());
        // Blocks reproduce the original entries.
        let p = 16;
        assert_eq!(blocks.diag[1].get(0, 0), j.get(3 * p, 3 * p));
        assert_eq!(blocks.couplers[0].get(0, 2 * p), j.get(3 * p, 2 * p));
    }

    #[test]
    fn matvec_matches_dense() {
        let grid = pml_grid([3, 2, 4], 1, 20.0);
        let model = VelocityModel::wedge();
        let a = assemble(&grid, &model, &DampingSpec::standard(7.0)).unwrap();
        let n = a.nrows();
        let x: Vec<Complex64> = (0..n)
            .map(|k| Complex64::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos()))
            .collect();
        let mut y = vec![Complex64::ZERO; n];
        a.matvec(&x, &mut y);
        let dense = a.to_dense();
        for i in 0..n {
            let mut acc = Complex64::ZERO;
            for j in 0..n {
                acc += dense.at(i, j) * x[j];
            }
            assert!((acc - y[i]).norm() < 1e-12);
        }
        let mut yt = vec![Complex64::ZERO; n];
        a.matvec_transpose(&x, &mut yt);
        // Symmetric operator: transpose product equals the product.
        for i in 0..n {
            assert!((yt[i] - y[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn triplet_export_format() {
        let op = SparseOperator::from_triplets(
            2,
            2,
            vec![
                (0, 0, Complex64::new(1.5, -0.25)),
                (1, 0, Complex64::new(0.0, 2.0)),
                (1, 1, Complex64::new(3.0, 0.0)),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        op.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "2 3\n0 0 1.5 -0.25\n1 0 0 2\n1 1 3 0\n");
    }

    #[test]
    fn from_triplets_sums_duplicates() {
        let op = SparseOperator::from_triplets(
            2,
            2,
            vec![
                (0, 1, Complex64::new(1.0, 0.0)),
                (0, 1, Complex64::new(0.5, 1.0)),
            ],
        )
        .unwrap();
        assert_eq!(op.nnz(), 1);
        assert_eq!(op.get(0, 1), Complex64::new(1.5, 1.0));
    }
}

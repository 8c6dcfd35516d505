//! The moving-PML sweeping preconditioner.
//!
//! The damped operator `J` is block tridiagonal over panels of `x3` planes.
//! Eliminating panels bottom-up produces Schur complements `S_i` whose
//! inverses act like half-space solves; the preconditioner replaces each
//! half-space by a small auxiliary problem `H_i`: the panel's own planes with
//! `gamma` planes of artificial PML prefixed below. One factorization per
//! panel then yields an approximate block `L D L^T` of `J` that is applied by
//! a forward and a backward sweep over the panels.

use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::discretize::{
    assemble_general, extract_panel_blocks, face_index, DampingSpec, GridSpec, SparseOperator,
    StretchTables,
};
use crate::error::{Error, Result};
use crate::frontal::{factor_flops_of, solve_flops_of, FrontalTree};
use crate::ndtree::nested_dissection;
use crate::velocity::{PmlProfile, VelocityModel};

/// A split of the `x3` planes into consecutive panels of `b` planes each
/// (the last panel may be shorter).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PanelPartition {
    ranges: Vec<Range<usize>>,
    planes_per_panel: usize,
    gamma: usize,
}

impl PanelPartition {
    /// Number of panels `m`.
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Plane range of panel `p`.
    pub fn planes(&self, p: usize) -> Range<usize> {
        self.ranges[p].clone()
    }

    /// Requested planes per panel `b`.
    pub fn planes_per_panel(&self) -> usize {
        self.planes_per_panel
    }

    /// Artificial PML thickness prefixed to panels past the first.
    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn total_planes(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.end)
    }
}

/// Partition `n3` planes into `ceil(n3 / b)` panels of `b` planes.
pub fn partition_panels(n3: usize, b: usize, gamma: usize) -> Result<PanelPartition> {
    if n3 == 0 {
        return Err(Error::Config("cannot partition zero planes".into()));
    }
    if b == 0 {
        return Err(Error::Config("panels need at least one plane".into()));
    }
    let mut ranges = Vec::with_capacity(n3.div_ceil(b));
    let mut start = 0;
    while start < n3 {
        let end = (start + b).min(n3);
        ranges.push(start..end);
        start = end;
    }
    Ok(PanelPartition {
        ranges,
        planes_per_panel: b,
        gamma,
    })
}

/// One panel's PML-padded subproblem `H_i`, factored and ready to apply the
/// approximate Schur-complement inverse `T_i`.
#[derive(Clone, Debug)]
pub struct AuxiliaryProblem {
    panel: usize,
    dims: [usize; 3],
    /// Artificial PML planes prefixed below the panel (0 for panel 0).
    padding: usize,
    h: SparseOperator,
    tree: FrontalTree,
}

impl AuxiliaryProblem {
    pub fn panel(&self) -> usize {
        self.panel
    }

    /// Dims of the padded quasi-2D domain.
    pub fn padded_dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Artificial PML planes below the panel.
    pub fn padding_planes(&self) -> usize {
        self.padding
    }

    /// The padded operator `H_i`.
    pub fn operator(&self) -> &SparseOperator {
        &self.h
    }

    pub fn tree(&self) -> &FrontalTree {
        &self.tree
    }

    /// Rows of the padded domain occupied by the panel's physical planes.
    pub fn panel_rows(&self) -> Range<usize> {
        let plane = self.dims[0] * self.dims[1];
        self.padding * plane..self.dims[2] * plane
    }

    /// `u := T_i u`: extend `u` by zero onto the PML padding, solve against
    /// `H_i`, and restrict back to the panel planes.
    pub fn apply_schur_inverse(&self, u: &mut [Complex64]) -> Result<()> {
        let rows = self.panel_rows();
        if u.len() != rows.len() {
            return Err(Error::Dimension {
                expected: rows.len(),
                got: u.len(),
            });
        }
        if self.padding == 0 {
            return self.tree.solve_in_place(u);
        }
        let mut w = vec![Complex64::ZERO; self.tree.n()];
        w[rows.clone()].copy_from_slice(u);
        self.tree.solve_in_place(&mut w)?;
        u.copy_from_slice(&w[rows]);
        Ok(())
    }

    /// Multiply-add count of one [`AuxiliaryProblem::apply_schur_inverse`].
    pub fn apply_flops(&self) -> u64 {
        solve_flops_of(self.tree.tree())
    }
}

/// Knobs for [`SweepPreconditioner::setup`].
#[derive(Clone, Copy, Debug)]
pub struct SweepConfig {
    /// Invert pivot blocks after factoring so solves use matrix-vector
    /// products.
    pub selective_inversion: bool,
    /// Leaf size for the per-panel nested dissection.
    pub leaf_cutoff: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            selective_inversion: false,
            leaf_cutoff: 32,
        }
    }
}

/// The assembled and factored sweeping preconditioner `M approx J^{-1}`.
#[derive(Clone, Debug)]
pub struct SweepPreconditioner {
    partition: PanelPartition,
    plane_size: usize,
    problems: Vec<AuxiliaryProblem>,
    /// `J_{i+1,i}` for `i = 0..m-1`.
    couplers: Vec<SparseOperator>,
    setup_flops: u64,
}

impl SweepPreconditioner {
    /// Factor one auxiliary problem per panel of `j`.
    ///
    /// Panel 0 keeps the physical PML: its problem is the diagonal block
    /// `J_{0,0}` verbatim. Every later panel is re-assembled on a padded
    /// domain whose first `gamma` planes are artificial PML, with the
    /// velocity extended into the padding by replicating the panel's first
    /// physical plane.
    pub fn setup(
        j: &SparseOperator,
        grid: &GridSpec,
        model: &VelocityModel,
        partition: PanelPartition,
        damping: &DampingSpec,
        config: &SweepConfig,
    ) -> Result<Self> {
        if partition.total_planes() != grid.dims[2] {
            return Err(Error::Config(format!(
                "partition covers {} planes, grid has {}",
                partition.total_planes(),
                grid.dims[2]
            )));
        }
        let plane_size = grid.dims[0] * grid.dims[1];
        if j.nrows() != grid.n_points() {
            return Err(Error::Dimension {
                expected: grid.n_points(),
                got: j.nrows(),
            });
        }
        let blocks = extract_panel_blocks(j, &partition, plane_size)?;
        let tables = grid.stretch_tables();
        let problems: Vec<AuxiliaryProblem> = (0..partition.len())
            .into_par_iter()
            .map(|p| {
                build_problem(
                    p,
                    if p == 0 { Some(&blocks.diag[0]) } else { None },
                    grid,
                    model,
                    &partition,
                    damping,
                    &tables,
                    config,
                )
                .map_err(|e| Error::PanelSetup {
                    panel: p,
                    source: Box::new(e),
                })
            })
            .collect::<Result<_>>()?;
        let setup_flops = problems
            .iter()
            .map(|p| p.tree.factor_flop_count() + p.tree.invert_flop_count())
            .sum();
        Ok(SweepPreconditioner {
            partition,
            plane_size,
            problems,
            couplers: blocks.couplers,
            setup_flops,
        })
    }

    pub fn partition(&self) -> &PanelPartition {
        &self.partition
    }

    pub fn problems(&self) -> &[AuxiliaryProblem] {
        &self.problems
    }

    pub fn coupler(&self, i: usize) -> &SparseOperator {
        &self.couplers[i]
    }

    /// Unknowns in the global problem.
    pub fn n(&self) -> usize {
        self.plane_size * self.partition.total_planes()
    }

    /// Multiply-add count spent factoring (and inverting) all panels.
    pub fn setup_flop_count(&self) -> u64 {
        self.setup_flops
    }

    /// Multiply-add count of one [`SweepPreconditioner::apply_in_place`].
    pub fn apply_flop_count(&self) -> u64 {
        let m = self.problems.len();
        let mut flops = 0;
        for (i, p) in self.problems.iter().enumerate() {
            let solves = if i + 1 < m { 2 } else { 1 };
            flops += solves * p.apply_flops();
        }
        for c in &self.couplers {
            flops += 2 * c.nnz() as u64;
        }
        flops
    }

    fn panel_rows(&self, p: usize) -> Range<usize> {
        let r = self.partition.planes(p);
        r.start * self.plane_size..r.end * self.plane_size
    }

    /// `z := M z`: one forward and one backward sweep over the panels.
    pub fn apply_in_place(&self, z: &mut [Complex64]) -> Result<()> {
        if z.len() != self.n() {
            return Err(Error::Dimension {
                expected: self.n(),
                got: z.len(),
            });
        }
        let m = self.problems.len();
        for i in 0..m {
            let rows = self.panel_rows(i);
            self.problems[i].apply_schur_inverse(&mut z[rows.clone()])?;
            if i + 1 < m {
                let next = self.panel_rows(i + 1);
                let (lo, hi) = z.split_at_mut(rows.end);
                self.couplers[i].matvec_sub(&lo[rows.clone()], &mut hi[..next.len()]);
            }
        }
        let mut buf = Vec::new();
        for i in (0..m.saturating_sub(1)).rev() {
            let rows = self.panel_rows(i);
            let next = self.panel_rows(i + 1);
            buf.clear();
            buf.resize(rows.len(), Complex64::ZERO);
            self.couplers[i].matvec_transpose(&z[next], &mut buf);
            self.problems[i].apply_schur_inverse(&mut buf)?;
            for (zi, bi) in z[rows].iter_mut().zip(&buf) {
                *zi -= bi;
            }
        }
        Ok(())
    }

    /// `M r` into a fresh vector.
    pub fn apply(&self, r: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut z = r.to_vec();
        self.apply_in_place(&mut z)?;
        Ok(z)
    }
}

#[allow(clippy::too_many_arguments)]
fn build_problem(
    panel: usize,
    literal: Option<&SparseOperator>,
    grid: &GridSpec,
    model: &VelocityModel,
    partition: &PanelPartition,
    damping: &DampingSpec,
    global_tables: &StretchTables,
    config: &SweepConfig,
) -> Result<AuxiliaryProblem> {
    let planes = partition.planes(panel);
    let padding = if panel == 0 { 0 } else { partition.gamma() };
    let dims = [grid.dims[0], grid.dims[1], padding + planes.len()];
    let h = match literal {
        Some(block) => block.clone(),
        None => {
            let tables = padded_tables(grid, partition.gamma(), planes.start, dims[2], global_tables);
            let speeds = padded_speeds(grid, model, planes.clone(), padding, dims)?;
            assemble_general(dims, grid.spacing, damping, &speeds, &tables)?
        }
    };
    let mut tree = nested_dissection(dims, config.leaf_cutoff)?;
    tree.symbolic_analysis(&h)?;
    let mut tree = FrontalTree::factor(tree, &h)?;
    if config.selective_inversion {
        tree.selective_invert()?;
    }
    Ok(AuxiliaryProblem {
        panel,
        dims,
        padding,
        h,
        tree,
    })
}

/// Damping tables for the padded domain: `x1`/`x2` copied from the global
/// grid, `x3` the sum of the artificial low-face profile and the global
/// profile at the shifted coordinate.
fn padded_tables(
    grid: &GridSpec,
    gamma: usize,
    start_plane: usize,
    depth: usize,
    global: &StretchTables,
) -> StretchTables {
    let h = grid.spacing[2];
    let artificial = PmlProfile { gamma, h, ..grid.profile };
    let shift = (start_plane as f64 - gamma as f64) * h;
    let sigma3 = |t: f64| -> f64 {
        let mut s = 0.0;
        let depth_a = (gamma as f64 + 1.0) * h - t;
        if gamma > 0 && depth_a > 0.0 {
            s += artificial.sigma(depth_a).expect("positive depth");
        }
        s + global_sigma3(grid, t + shift)
    };
    let mut tables = global.clone();
    tables.point[2] = (0..depth).map(|i| sigma3((i + 1) as f64 * h)).collect();
    tables.mid[2] = (0..=depth).map(|i| sigma3((i as f64 + 0.5) * h)).collect();
    tables
}

fn global_sigma3(grid: &GridSpec, t: f64) -> f64 {
    let n = grid.dims[2];
    let h = grid.spacing[2];
    let profile = PmlProfile { h, ..grid.profile };
    let mut s = 0.0;
    if grid.pml_faces[face_index(2, false)] {
        let depth = (profile.gamma as f64 + 1.0) * h - t;
        if depth > 0.0 {
            s += profile.sigma(depth).expect("positive depth");
        }
    }
    if grid.pml_faces[face_index(2, true)] {
        let depth = t - (n - profile.gamma) as f64 * h;
        if depth > 0.0 {
            s += profile.sigma(depth).expect("positive depth");
        }
    }
    s
}

fn padded_speeds(
    grid: &GridSpec,
    model: &VelocityModel,
    planes: Range<usize>,
    padding: usize,
    dims: [usize; 3],
) -> Result<Vec<f64>> {
    let plane = dims[0] * dims[1];
    let mut speeds = Vec::with_capacity(plane * dims[2]);
    for local in 0..dims[2] {
        let global_plane = if local < padding {
            planes.start
        } else {
            planes.start + local - padding
        };
        for i2 in 0..dims[1] {
            for i1 in 0..dims[0] {
                speeds.push(model.speed_at(grid.position([i1, i2, global_plane]))?);
            }
        }
    }
    Ok(speeds)
}

/// Multiply-add count `setup` will spend on a grid of `dims`, from symbolic
/// structure alone.
pub fn setup_flop_estimate(
    dims: [usize; 3],
    partition: &PanelPartition,
    leaf_cutoff: usize,
) -> Result<u64> {
    if partition.total_planes() != dims[2] {
        return Err(Error::Config(format!(
            "partition covers {} planes, grid has {}",
            partition.total_planes(),
            dims[2]
        )));
    }
    let mut flops = 0;
    for p in 0..partition.len() {
        let padding = if p == 0 { 0 } else { partition.gamma() };
        let pdims = [dims[0], dims[1], padding + partition.planes(p).len()];
        let stencil = crate::discretize::assemble_general(
            pdims,
            [1.0; 3],
            &DampingSpec::undamped(1.0),
            &vec![1.0; pdims[0] * pdims[1] * pdims[2]],
            &StretchTables::no_pml(pdims),
        )?;
        let mut tree = nested_dissection(pdims, leaf_cutoff)?;
        tree.symbolic_analysis(&stencil)?;
        flops += factor_flops_of(&tree);
    }
    Ok(flops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{lu_factor_pp, lu_solve_pp, DenseMat};
    use crate::discretize::assemble;

    fn unit_problem(
        dims: [usize; 3],
        gamma: usize,
        amplitude: f64,
        omega: f64,
        alpha: f64,
    ) -> (SparseOperator, GridSpec, VelocityModel, DampingSpec) {
        let profile = PmlProfile::new(gamma, amplitude, 3, 1.0);
        let grid = GridSpec::unit_cube_pml_bottom(dims, profile).unwrap();
        let model = VelocityModel::uniform(1.0).unwrap();
        let damping = DampingSpec::new(omega, alpha);
        let j = assemble(&grid, &model, &damping).unwrap();
        (j, grid, model, damping)
    }

    fn rng_vec(n: usize, seed: u64) -> Vec<Complex64> {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        (0..n).map(|_| Complex64::new(next(), next())).collect()
    }

    fn norm(v: &[Complex64]) -> f64 {
        v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn partition_covers_every_plane_once() {
        let p = partition_panels(8, 3, 2).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.planes(0), 0..3);
        assert_eq!(p.planes(1), 3..6);
        assert_eq!(p.planes(2), 6..8);
        assert_eq!(p.total_planes(), 8);

        let exact = partition_panels(12, 4, 2).unwrap();
        assert_eq!(exact.len(), 3);
        assert_eq!(exact.planes(2), 8..12);

        let single = partition_panels(5, 5, 1).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single.planes(0), 0..5);

        assert!(partition_panels(4, 0, 1).is_err());
        assert!(partition_panels(0, 2, 1).is_err());
    }

    #[test]
    fn padded_dims_follow_the_panel_and_gamma() {
        let (j, grid, model, damping) = unit_problem([8, 8, 8], 2, 20.0, 8.0, 2.0);
        let partition = partition_panels(8, 4, 2).unwrap();
        let pre = SweepPreconditioner::setup(
            &j,
            &grid,
            &model,
            partition,
            &damping,
            &SweepConfig::default(),
        )
        .unwrap();
        assert_eq!(pre.problems().len(), 2);
        assert_eq!(pre.problems()[0].padded_dims(), [8, 8, 4]);
        assert_eq!(pre.problems()[0].padding_planes(), 0);
        assert_eq!(pre.problems()[1].padded_dims(), [8, 8, 6]);
        assert_eq!(pre.problems()[1].padding_planes(), 2);
    }

    #[test]
    fn single_panel_is_an_exact_solve() {
        let (a, grid, model, damping) = unit_problem([5, 5, 6], 2, 15.0, 5.0, 0.0);
        let partition = partition_panels(6, 6, 2).unwrap();
        let pre = SweepPreconditioner::setup(
            &a,
            &grid,
            &model,
            partition,
            &damping,
            &SweepConfig::default(),
        )
        .unwrap();
        let r = rng_vec(pre.n(), 2);
        let z = pre.apply(&r).unwrap();
        let mut residual = r.clone();
        a.matvec_sub(&z, &mut residual);
        assert!(norm(&residual) / norm(&r) <= 1e-10);
    }

    #[test]
    fn apply_is_linear() {
        let (j, grid, model, damping) = unit_problem([6, 6, 8], 2, 15.0, 6.0, 4.0);
        let partition = partition_panels(8, 3, 2).unwrap();
        let pre = SweepPreconditioner::setup(
            &j,
            &grid,
            &model,
            partition,
            &damping,
            &SweepConfig::default(),
        )
        .unwrap();
        let u = rng_vec(pre.n(), 5);
        let v = rng_vec(pre.n(), 6);
        let (a, b) = (Complex64::new(0.3, -1.2), Complex64::new(-2.0, 0.7));
        let combined: Vec<Complex64> = u
            .iter()
            .zip(&v)
            .map(|(x, y)| a * x + b * y)
            .collect();
        let lhs = pre.apply(&combined).unwrap();
        let mu = pre.apply(&u).unwrap();
        let mv = pre.apply(&v).unwrap();
        let rhs: Vec<Complex64> = mu.iter().zip(&mv).map(|(x, y)| a * x + b * y).collect();
        let diff: Vec<Complex64> = lhs.iter().zip(&rhs).map(|(x, y)| x - y).collect();
        assert!(norm(&diff) / norm(&rhs) <= 1e-12);
    }

    #[test]
    fn panel_zero_schur_inverse_is_a_direct_solve() {
        let (j, grid, model, damping) = unit_problem([4, 4, 6], 1, 12.0, 4.0, 3.0);
        let partition = partition_panels(6, 3, 1).unwrap();
        let pre = SweepPreconditioner::setup(
            &j,
            &grid,
            &model,
            partition.clone(),
            &damping,
            &SweepConfig::default(),
        )
        .unwrap();
        let blocks = extract_panel_blocks(&j, &partition, 16).unwrap();
        let mut tree = nested_dissection([4, 4, 3], 32).unwrap();
        tree.symbolic_analysis(&blocks.diag[0]).unwrap();
        let direct = FrontalTree::factor(tree, &blocks.diag[0]).unwrap();
        let u = rng_vec(48, 9);
        let mut got = u.clone();
        pre.problems()[0].apply_schur_inverse(&mut got).unwrap();
        let want = direct.solve(&u).unwrap();
        let diff: Vec<Complex64> = got.iter().zip(&want).map(|(x, y)| x - y).collect();
        assert!(norm(&diff) <= 1e-13 * norm(&want));

        let zero = vec![Complex64::ZERO; 48];
        let mut z = zero.clone();
        pre.problems()[0].apply_schur_inverse(&mut z).unwrap();
        assert!(z.iter().all(|v| *v == Complex64::ZERO));
    }

    #[test]
    fn padded_schur_inverse_matches_dense_elimination() {
        let (j, grid, model, damping) = unit_problem([4, 4, 3], 1, 10.0, 4.0, 2.0);
        let partition = partition_panels(3, 1, 1).unwrap();
        let pre = SweepPreconditioner::setup(
            &j,
            &grid,
            &model,
            partition,
            &damping,
            &SweepConfig::default(),
        )
        .unwrap();
        let aux = &pre.problems()[1];
        assert_eq!(aux.padded_dims(), [4, 4, 2]);
        let plane = 16;
        let dense = aux.operator().to_dense();
        // Eliminate the padding plane densely: S = H_QQ - H_QP H_PP^{-1} H_PQ.
        let hpp = DenseMat::from_fn(plane, plane, |i, j| dense.at(i, j));
        let hqp = DenseMat::from_fn(plane, plane, |i, j| dense.at(plane + i, j));
        let hqq = DenseMat::from_fn(plane, plane, |i, j| dense.at(plane + i, plane + j));
        let mut lu = hpp.clone();
        let piv = lu_factor_pp(&mut lu).unwrap();
        let mut s = hqq.clone();
        let mut w = vec![Complex64::ZERO; plane];
        for col in 0..plane {
            for (k, wk) in w.iter_mut().enumerate() {
                *wk = hqp.at(col, k);
            }
            lu_solve_pp(&lu, &piv, &mut w);
            hqp.gemv_sub(&w, s.col_mut(col));
        }
        let mut slu = s.clone();
        let spiv = lu_factor_pp(&mut slu).unwrap();
        let u = rng_vec(plane, 33);
        let mut want = u.clone();
        lu_solve_pp(&slu, &spiv, &mut want);
        let mut got = u.clone();
        aux.apply_schur_inverse(&mut got).unwrap();
        let diff: Vec<Complex64> = got.iter().zip(&want).map(|(x, y)| x - y).collect();
        assert!(
            norm(&diff) / norm(&want) <= 1e-11,
            "padded Schur action errs by {}",
            norm(&diff) / norm(&want)
        );
    }

    #[test]
    fn two_panel_error_operator_is_contractive() {
        let (j, grid, model, damping) = unit_problem([6, 6, 6], 2, 15.0, 6.0, 2.0 * std::f64::consts::PI);
        let partition = partition_panels(6, 3, 2).unwrap();
        let pre = SweepPreconditioner::setup(
            &j,
            &grid,
            &model,
            partition,
            &damping,
            &SweepConfig::default(),
        )
        .unwrap();
        let n = pre.n();
        // Power iteration on E = I - M^{-1} J.
        let mut v = rng_vec(n, 41);
        let scale = 1.0 / norm(&v);
        for x in v.iter_mut() {
            *x *= scale;
        }
        let mut rho = 0.0;
        for _ in 0..60 {
            let mut jv = vec![Complex64::ZERO; n];
            j.matvec(&v, &mut jv);
            let mjv = pre.apply(&jv).unwrap();
            let mut next: Vec<Complex64> =
                v.iter().zip(&mjv).map(|(x, y)| x - y).collect();
            rho = norm(&next);
            if rho == 0.0 {
                break;
            }
            let inv = 1.0 / rho;
            for x in next.iter_mut() {
                *x *= inv;
            }
            v = next;
        }
        assert!(rho < 1.0, "spectral radius estimate {rho}");
    }

    #[test]
    fn selective_inversion_does_not_change_apply() {
        let (j, grid, model, damping) = unit_problem([5, 5, 6], 1, 12.0, 5.0, 3.0);
        let partition = partition_panels(6, 2, 1).unwrap();
        let plain = SweepPreconditioner::setup(
            &j,
            &grid,
            &model,
            partition.clone(),
            &damping,
            &SweepConfig::default(),
        )
        .unwrap();
        let inverted = SweepPreconditioner::setup(
            &j,
            &grid,
            &model,
            partition,
            &damping,
            &SweepConfig {
                selective_inversion: true,
                ..SweepConfig::default()
            },
        )
        .unwrap();
        let r = rng_vec(plain.n(), 77);
        let a = plain.apply(&r).unwrap();
        let b = inverted.apply(&r).unwrap();
        let diff: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        assert!(norm(&diff) / norm(&a) <= 1e-12);
        assert!(inverted.setup_flop_count() > plain.setup_flop_count());
    }

    #[test]
    fn setup_estimate_matches_the_measured_counter() {
        let (j, grid, model, damping) = unit_problem([6, 6, 9], 2, 15.0, 6.0, 2.0);
        let partition = partition_panels(9, 3, 2).unwrap();
        let pre = SweepPreconditioner::setup(
            &j,
            &grid,
            &model,
            partition.clone(),
            &damping,
            &SweepConfig::default(),
        )
        .unwrap();
        let estimate = setup_flop_estimate([6, 6, 9], &partition, 32).unwrap();
        assert_eq!(pre.setup_flop_count(), estimate);
    }
}

//! Multifrontal complex-symmetric `L D L^T` factorization and solves.
//!
//! Each supernode of the elimination tree owns a *front*: the dense pivot
//! block `F_TL`, the coupling rows `F_BL` against the supernode's lower
//! structure, and (only while factoring) the Schur update `F_BR` that is
//! extend-added into the parent. Factorization eliminates fronts in
//! post-order; solves run one pass up and one pass down the same tree.
//!
//! After [`FrontalTree::selective_invert`] the pivot blocks hold `inv(L_F)`
//! instead of `L_F`, turning every triangular solve in the solve passes into
//! a triangular matrix-vector product with the same answer.

use num_complex::Complex64;

use crate::dense::{
    ldlt_flops, ldlt_in_place, lu_factor_pp, lu_solve_pp, rank_update_flops, rank_update_lower,
    scale_cols_inv, solve_unit_lower, solve_unit_lower_transpose, tri_flops, trimv_unit_lower,
    trimv_unit_lower_transpose, trsm_flops, trsm_right_unit_lower_transpose,
    unit_lower_invert_flops, unit_lower_invert_in_place, DenseMat, PivotReport,
};
use crate::discretize::SparseOperator;
use crate::error::{Error, Result};
use crate::ndtree::EliminationTree;

/// Factorization progress of a [`FrontalTree`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorState {
    Factored,
    SelectivelyInverted,
}

impl FactorState {
    pub fn name(self) -> &'static str {
        match self {
            FactorState::Factored => "factored",
            FactorState::SelectivelyInverted => "selectively-inverted",
        }
    }
}

/// The factored dense blocks of one supernode.
#[derive(Clone, Debug)]
pub struct Front {
    /// `t x t`; strictly lower part holds unit-lower `L_F`, or `inv(L_F)`
    /// once inverted. The diagonal is implicitly one.
    pub tl: DenseMat,
    /// `b x t` coupling block `F_BL L_F^{-T} D_F^{-1}`.
    pub bl: DenseMat,
    /// Diagonal `D_F`.
    pub d: Vec<Complex64>,
    pub inverted: bool,
}

/// A fully factored elimination tree ready for repeated solves.
#[derive(Clone, Debug)]
pub struct FrontalTree {
    tree: EliminationTree,
    fronts: Vec<Front>,
    state: FactorState,
    factor_flops: u64,
    invert_flops: u64,
    pivots: PivotReport,
}

impl FrontalTree {
    /// Factor `op` over an analyzed elimination tree.
    pub fn factor(tree: EliminationTree, op: &SparseOperator) -> Result<Self> {
        if !tree.is_analyzed() {
            return Err(Error::State {
                required: "analyzed elimination tree",
                actual: "symbolic analysis not run",
            });
        }
        let n = tree.n();
        if op.nrows() != n || op.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                got: op.nrows(),
            });
        }
        let nsup = tree.supernodes.len();
        let mut pending: Vec<Option<DenseMat>> = vec![None; nsup];
        let mut fronts = Vec::with_capacity(nsup);
        let mut flops = 0u64;
        let mut pivots = PivotReport {
            min_abs_pivot: f64::INFINITY,
            near_zero: 0,
        };
        for sid in 0..nsup {
            let s = &tree.supernodes[sid];
            let t = s.size();
            let b = s.lower_struct.len();
            let mut tl = DenseMat::zeros(t, t);
            let mut bl = DenseMat::zeros(b, t);
            let mut br = DenseMat::zeros(b, b);
            for (j, &orig) in s.vertices.iter().enumerate() {
                let gj = s.range.start + j;
                let (cols, vals) = op.row(orig);
                for (&c, &v) in cols.iter().zip(vals) {
                    let pr = tree.perm[c];
                    if pr < gj {
                        continue;
                    }
                    if pr < s.range.end {
                        *tl.at_mut(pr - s.range.start, j) += v;
                    } else {
                        let pos = s.lower_struct.binary_search(&pr).map_err(|_| {
                            Error::Config(format!(
                                "operator entry ({pr}, {gj}) outside the analyzed structure"
                            ))
                        })?;
                        *bl.at_mut(pos, j) += v;
                    }
                }
            }
            for &child in &s.children {
                let u = pending[child].take().expect("children precede parents");
                let rel = &tree.supernodes[child].rel_to_parent;
                for k in 0..u.rows() {
                    let sc = rel[k];
                    for m in k..u.rows() {
                        let v = u.at(m, k);
                        if v == Complex64::ZERO {
                            continue;
                        }
                        let sr = rel[m];
                        if sc < t {
                            if sr < t {
                                *tl.at_mut(sr, sc) += v;
                            } else {
                                *bl.at_mut(sr - t, sc) += v;
                            }
                        } else {
                            *br.at_mut(sr - t, sc - t) += v;
                        }
                    }
                }
            }
            let mut d = vec![Complex64::ZERO; t];
            let report = ldlt_in_place(&mut tl, &mut d).map_err(|e| match e {
                Error::SingularFront { index, .. } => Error::SingularFront {
                    supernode: sid,
                    index,
                },
                other => other,
            })?;
            if report.near_zero > 0 {
                log::warn!(
                    "supernode {sid}: {} pivot(s) below the warning threshold",
                    report.near_zero
                );
            }
            pivots.min_abs_pivot = pivots.min_abs_pivot.min(report.min_abs_pivot);
            pivots.near_zero += report.near_zero;
            trsm_right_unit_lower_transpose(&mut bl, &tl);
            let z = bl.clone();
            scale_cols_inv(&mut bl, &d);
            rank_update_lower(&mut br, &z, &bl);
            pending[sid] = Some(br);
            fronts.push(Front {
                tl,
                bl,
                d,
                inverted: false,
            });
            let (tu, bu) = (t as u64, b as u64);
            flops += ldlt_flops(tu) + trsm_flops(bu, tu) + bu * tu + rank_update_flops(bu, tu);
        }
        Ok(FrontalTree {
            tree,
            fronts,
            state: FactorState::Factored,
            factor_flops: flops,
            invert_flops: 0,
            pivots,
        })
    }

    /// Overwrite every pivot block with its inverse so solves become
    /// triangular matrix-vector products.
    pub fn selective_invert(&mut self) -> Result<()> {
        if self.state != FactorState::Factored {
            return Err(Error::State {
                required: FactorState::Factored.name(),
                actual: self.state.name(),
            });
        }
        for front in &mut self.fronts {
            unit_lower_invert_in_place(&mut front.tl);
            front.inverted = true;
            self.invert_flops += unit_lower_invert_flops(front.tl.rows() as u64);
        }
        self.state = FactorState::SelectivelyInverted;
        Ok(())
    }

    pub fn state(&self) -> FactorState {
        self.state
    }

    pub fn tree(&self) -> &EliminationTree {
        &self.tree
    }

    pub fn front(&self, sid: usize) -> &Front {
        &self.fronts[sid]
    }

    pub fn n(&self) -> usize {
        self.tree.n()
    }

    /// Multiply-add count of the numeric factorization.
    pub fn factor_flop_count(&self) -> u64 {
        self.factor_flops
    }

    /// Multiply-add count spent inverting pivot blocks.
    pub fn invert_flop_count(&self) -> u64 {
        self.invert_flops
    }

    /// Multiply-add count of one [`FrontalTree::solve_in_place`] call.
    pub fn solve_flop_count(&self) -> u64 {
        solve_flops_of(&self.tree)
    }

    /// Pivot magnitudes observed while factoring.
    pub fn pivot_report(&self) -> PivotReport {
        self.pivots
    }

    /// Solve `A x = b` in place, `x` in natural (grid) ordering.
    pub fn solve_in_place(&self, x: &mut [Complex64]) -> Result<()> {
        let n = self.n();
        if x.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: x.len(),
            });
        }
        let mut w = vec![Complex64::ZERO; n];
        for (i, &v) in x.iter().enumerate() {
            w[self.tree.perm[i]] = v;
        }
        let mut xs = Vec::new();
        let mut ls = Vec::new();
        for (sid, front) in self.fronts.iter().enumerate() {
            let s = &self.tree.supernodes[sid];
            let seg = &mut w[s.range.clone()];
            if front.inverted {
                trimv_unit_lower(&front.tl, seg);
            } else {
                solve_unit_lower(&front.tl, seg);
            }
            if !s.lower_struct.is_empty() {
                xs.clear();
                xs.extend_from_slice(&w[s.range.clone()]);
                ls.clear();
                ls.extend(s.lower_struct.iter().map(|&i| w[i]));
                front.bl.gemv_sub(&xs, &mut ls);
                for (k, &i) in s.lower_struct.iter().enumerate() {
                    w[i] = ls[k];
                }
            }
        }
        for (sid, front) in self.fronts.iter().enumerate() {
            let start = self.tree.supernodes[sid].range.start;
            for (k, &dk) in front.d.iter().enumerate() {
                w[start + k] *= dk.inv();
            }
        }
        for (sid, front) in self.fronts.iter().enumerate().rev() {
            let s = &self.tree.supernodes[sid];
            if !s.lower_struct.is_empty() {
                ls.clear();
                ls.extend(s.lower_struct.iter().map(|&i| w[i]));
                front.bl.gemv_transpose_sub(&ls, &mut w[s.range.clone()]);
            }
            let seg = &mut w[s.range.clone()];
            if front.inverted {
                trimv_unit_lower_transpose(&front.tl, seg);
            } else {
                solve_unit_lower_transpose(&front.tl, seg);
            }
        }
        for (i, v) in x.iter_mut().enumerate() {
            *v = w[self.tree.perm[i]];
        }
        Ok(())
    }

    /// Solve `A x = b` into a fresh vector.
    pub fn solve(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}

/// Multiply-add count of one multifrontal solve over `tree`.
pub fn solve_flops_of(tree: &EliminationTree) -> u64 {
    let mut flops = tree.n() as u64;
    for s in &tree.supernodes {
        let (t, b) = (s.size() as u64, s.lower_struct.len() as u64);
        flops += 2 * (tri_flops(t) + b * t);
    }
    flops
}

/// Multiply-add count a numeric factorization over `tree` will spend,
/// computable from the symbolic structure alone.
pub fn factor_flops_of(tree: &EliminationTree) -> u64 {
    let mut flops = 0;
    for s in &tree.supernodes {
        let (t, b) = (s.size() as u64, s.lower_struct.len() as u64);
        flops += ldlt_flops(t) + trsm_flops(b, t) + b * t + rank_update_flops(b, t);
    }
    flops
}

/// Dense block `LDL^T` factorization of a block-tridiagonal operator: the
/// Schur complements `S_i = A_{i,i} - A_{i,i-1} S_{i-1}^{-1} A_{i,i-1}^T`
/// computed with dense arithmetic. Deliberately slow and direct; used as an
/// oracle against the multifrontal path.
#[derive(Clone, Debug)]
pub struct NaiveBlockFactor {
    plane: usize,
    schur: Vec<DenseMat>,
    lu: Vec<(DenseMat, Vec<usize>)>,
    couplers: Vec<DenseMat>,
}

/// Factor a block-tridiagonal `op` with square blocks of `plane` rows.
pub fn naive_block_fact(op: &SparseOperator, plane: usize) -> Result<NaiveBlockFactor> {
    let n = op.nrows();
    if plane == 0 || n % plane != 0 {
        return Err(Error::Config(format!(
            "{n} rows do not split into planes of {plane}"
        )));
    }
    let m = n / plane;
    let mut diag = vec![DenseMat::zeros(plane, plane); m];
    let mut couplers = vec![DenseMat::zeros(plane, plane); m.saturating_sub(1)];
    for r in 0..n {
        let (cols, vals) = op.row(r);
        let br = r / plane;
        for (&c, &v) in cols.iter().zip(vals) {
            let bc = c / plane;
            if br == bc {
                *diag[br].at_mut(r - br * plane, c - bc * plane) += v;
            } else if br == bc + 1 {
                *couplers[bc].at_mut(r - br * plane, c - bc * plane) += v;
            } else if bc != br + 1 {
                return Err(Error::Config(format!(
                    "entry ({r}, {c}) violates block tridiagonality"
                )));
            }
        }
    }
    let mut schur = Vec::with_capacity(m);
    let mut lu: Vec<(DenseMat, Vec<usize>)> = Vec::with_capacity(m);
    for i in 0..m {
        let mut s = diag[i].clone();
        if i > 0 {
            let c = &couplers[i - 1];
            let (prev, piv) = &lu[i - 1];
            // S_i -= C S_{i-1}^{-1} C^T, one column of C^T at a time.
            let mut w = vec![Complex64::ZERO; plane];
            for j in 0..plane {
                for (k, wk) in w.iter_mut().enumerate() {
                    *wk = c.at(j, k);
                }
                lu_solve_pp(prev, piv, &mut w);
                c.gemv_sub(&w, s.col_mut(j));
            }
        }
        let mut f = s.clone();
        let piv = lu_factor_pp(&mut f).map_err(|_| Error::SingularFront {
            supernode: i,
            index: 0,
        })?;
        schur.push(s);
        lu.push((f, piv));
    }
    Ok(NaiveBlockFactor {
        plane,
        schur,
        lu,
        couplers,
    })
}

impl NaiveBlockFactor {
    /// The dense Schur complement `S_i`.
    pub fn schur_block(&self, i: usize) -> &DenseMat {
        &self.schur[i]
    }

    /// Solve `A x = b` in place using the factored Schur complements.
    pub fn naive_block_solve(&self, x: &mut [Complex64]) -> Result<()> {
        let m = self.lu.len();
        let p = self.plane;
        if x.len() != m * p {
            return Err(Error::Dimension {
                expected: m * p,
                got: x.len(),
            });
        }
        let mut tmp = vec![Complex64::ZERO; p];
        for i in 0..m - 1 {
            tmp.copy_from_slice(&x[i * p..(i + 1) * p]);
            let (f, piv) = &self.lu[i];
            lu_solve_pp(f, piv, &mut tmp);
            self.couplers[i].gemv_sub(&tmp, &mut x[(i + 1) * p..(i + 2) * p]);
        }
        for i in 0..m {
            let (f, piv) = &self.lu[i];
            lu_solve_pp(f, piv, &mut x[i * p..(i + 1) * p]);
        }
        for i in (0..m - 1).rev() {
            for v in tmp.iter_mut() {
                *v = Complex64::ZERO;
            }
            self.couplers[i].gemv_transpose_sub(&x[(i + 1) * p..(i + 2) * p], &mut tmp);
            let (f, piv) = &self.lu[i];
            lu_solve_pp(f, piv, &mut tmp);
            for (k, v) in tmp.iter().enumerate() {
                x[i * p + k] += v;
            }
        }
        Ok(())
    }
}

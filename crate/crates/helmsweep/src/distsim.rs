//! Deterministic in-process simulation of distributed vector and frontal
//! layouts over an `r x c` process grid, with per-rank communication
//! accounting.
//!
//! Nothing here sends real messages. Ranks are logical participants stepped
//! in a fixed order, collectives execute as atomic exchanges, and a
//! [`CommLedger`] records what each rank would have contributed: an
//! all-gather over a group of `g` ranks charges a rank holding `l` entries
//! with `l * (g - 1)` entries sent and `ceil(log2 g)` messages, a
//! reduce-scatter charges the entries a rank holds on behalf of others, and
//! a permutation charges one message per moved segment. The ledger also
//! tracks the buffer volume each collective assembles at a rank
//! (`gathered`), which is the quantity that shrinks like `n / sqrt(q)` on
//! square grids.
//!
//! Entry `i` of a vector with alignment `sigma` lives on rank
//! `(i + sigma) mod q` under [`Distribution::VC`], on grid position
//! `(floor((i + sigma) / c) mod r, (i + sigma) mod c)` under
//! [`Distribution::VR`], on every rank of process row `(i + sigma) mod r`
//! under [`Distribution::MC`], and on every rank of process column
//! `(i + sigma) mod c` under [`Distribution::MR`]. Matrices are element-wise
//! cyclic: entry `(i, j)` lives at position
//! `((i + row_align) mod r, (j + col_align) mod c)`.

use std::io::{self, Write};
use std::ops::Range;

use num_complex::Complex64;

use crate::dense::{
    solve_unit_lower, solve_unit_lower_transpose, trimv_unit_lower, trimv_unit_lower_transpose,
    DenseMat,
};
use crate::error::{Error, Result};
use crate::frontal::{FactorState, Front, FrontalTree};
use crate::ndtree::EliminationTree;

/// An `r x c` grid of logical ranks. Rank `k` sits at position
/// `(k mod r, k div r)`: ranks fill the grid column by column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProcessGrid {
    rows: usize,
    cols: usize,
}

impl ProcessGrid {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config(
                "process grid dimensions must be positive".into(),
            ));
        }
        Ok(ProcessGrid { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn size(&self) -> usize {
        self.rows * self.cols
    }

    pub fn position_of(&self, rank: usize) -> (usize, usize) {
        (rank % self.rows, rank / self.rows)
    }

    pub fn rank_at(&self, row: usize, col: usize) -> usize {
        row + col * self.rows
    }
}

/// Rank owning entry `i` of a [`Distribution::VC`] vector with alignment
/// `align`.
pub fn vc_owner(i: usize, align: usize, grid: ProcessGrid) -> usize {
    (i + align) % grid.size()
}

/// Grid position owning entry `i` of a [`Distribution::VR`] vector with
/// alignment `align`.
pub fn vr_owner(i: usize, align: usize, grid: ProcessGrid) -> (usize, usize) {
    let j = i + align;
    ((j / grid.cols()) % grid.rows(), j % grid.cols())
}

/// Vector layouts over a process grid.
///
/// `VC` and `VR` assign each entry to exactly one rank, cycling through the
/// grid in column-major (respectively row-major) position order. `MC` and
/// `MR` replicate each entry across one process row (respectively column);
/// `Star` replicates everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distribution {
    VC,
    VR,
    MC,
    MR,
    Star,
}

impl Distribution {
    fn name(self) -> &'static str {
        match self {
            Distribution::VC => "VC",
            Distribution::VR => "VR",
            Distribution::MC => "MC",
            Distribution::MR => "MR",
            Distribution::Star => "STAR",
        }
    }
}

/// First owned index and stride of `rank`'s slice of an `n`-vector. Every
/// distribution owns an arithmetic progression of global indices: residue
/// classes mod `q` for `VC`/`VR`, mod `r` or `c` for `MC`/`MR`.
fn progression(dist: Distribution, align: usize, grid: ProcessGrid, rank: usize) -> (usize, usize) {
    let (r, c, q) = (grid.rows(), grid.cols(), grid.size());
    let (s, t) = grid.position_of(rank);
    match dist {
        Distribution::VC => ((rank + q - align % q) % q, q),
        Distribution::VR => ((s * c + t + q - align % q) % q, q),
        Distribution::MC => ((s + r - align % r) % r, r),
        Distribution::MR => ((t + c - align % c) % c, c),
        Distribution::Star => (0, 1),
    }
}

fn progression_len(first: usize, stride: usize, n: usize) -> usize {
    if first >= n {
        0
    } else {
        (n - first - 1) / stride + 1
    }
}

fn ceil_log2(g: usize) -> u64 {
    if g <= 1 {
        0
    } else {
        (usize::BITS - (g - 1).leading_zeros()) as u64
    }
}

/// The collective operations the ledger distinguishes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CollectiveClass {
    RowAllGather,
    ColAllGather,
    RowReduceScatter,
    ColReduceScatter,
    Permute,
}

impl CollectiveClass {
    pub const ALL: [CollectiveClass; 5] = [
        CollectiveClass::RowAllGather,
        CollectiveClass::ColAllGather,
        CollectiveClass::RowReduceScatter,
        CollectiveClass::ColReduceScatter,
        CollectiveClass::Permute,
    ];

    /// Label used in CSV exports.
    pub fn label(self) -> &'static str {
        match self {
            CollectiveClass::RowAllGather => "row-allgather",
            CollectiveClass::ColAllGather => "col-allgather",
            CollectiveClass::RowReduceScatter => "row-reduce-scatter",
            CollectiveClass::ColReduceScatter => "col-reduce-scatter",
            CollectiveClass::Permute => "permute",
        }
    }

    fn index(self) -> usize {
        match self {
            CollectiveClass::RowAllGather => 0,
            CollectiveClass::ColAllGather => 1,
            CollectiveClass::RowReduceScatter => 2,
            CollectiveClass::ColReduceScatter => 3,
            CollectiveClass::Permute => 4,
        }
    }
}

/// Per-rank communication counters. Volumes count complex entries and
/// messages count collective rounds; `gathered` is the buffer volume a
/// collective assembles at the rank, the quantity whose per-rank maximum
/// halves when a square grid doubles.
#[derive(Clone, Debug)]
pub struct CommLedger {
    sent: Vec<[u64; 5]>,
    messages: Vec<[u64; 5]>,
    gathered: Vec<[u64; 5]>,
}

impl CommLedger {
    pub fn new(ranks: usize) -> Self {
        CommLedger {
            sent: vec![[0; 5]; ranks],
            messages: vec![[0; 5]; ranks],
            gathered: vec![[0; 5]; ranks],
        }
    }

    pub fn ranks(&self) -> usize {
        self.sent.len()
    }

    fn charge(&mut self, rank: usize, class: CollectiveClass, sent: u64, msgs: u64, gathered: u64) {
        let c = class.index();
        self.sent[rank][c] += sent;
        self.messages[rank][c] += msgs;
        self.gathered[rank][c] += gathered;
    }

    fn absorb(&mut self, other: &CommLedger, offset: usize) {
        for k in 0..other.ranks() {
            for c in 0..5 {
                self.sent[offset + k][c] += other.sent[k][c];
                self.messages[offset + k][c] += other.messages[k][c];
                self.gathered[offset + k][c] += other.gathered[k][c];
            }
        }
    }

    pub fn sent(&self, rank: usize, class: CollectiveClass) -> u64 {
        self.sent[rank][class.index()]
    }

    pub fn messages(&self, rank: usize, class: CollectiveClass) -> u64 {
        self.messages[rank][class.index()]
    }

    pub fn gathered(&self, rank: usize, class: CollectiveClass) -> u64 {
        self.gathered[rank][class.index()]
    }

    pub fn total_sent(&self) -> u64 {
        self.sent.iter().flatten().sum()
    }

    pub fn total_messages(&self) -> u64 {
        self.messages.iter().flatten().sum()
    }

    /// Largest per-rank all-gather buffer volume (row and column classes
    /// combined).
    pub fn max_allgather_volume(&self) -> u64 {
        self.gathered
            .iter()
            .map(|g| g[0] + g[1])
            .max()
            .unwrap_or(0)
    }

    /// One `rank,class,entries_sent,messages` row per rank and class.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "rank,class,entries_sent,messages")?;
        for rank in 0..self.ranks() {
            for class in CollectiveClass::ALL {
                writeln!(
                    out,
                    "{},{},{},{}",
                    rank,
                    class.label(),
                    self.sent(rank, class),
                    self.messages(rank, class)
                )?;
            }
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// A complex vector split across the ranks of a process grid. Each rank
/// stores its owned entries in ascending global index order; placing every
/// owned entry back at its global index reconstructs the vector exactly.
#[derive(Clone, Debug)]
pub struct DistVector {
    len: usize,
    dist: Distribution,
    align: usize,
    grid: ProcessGrid,
    locals: Vec<Vec<Complex64>>,
}

impl DistVector {
    pub fn from_global(
        values: &[Complex64],
        dist: Distribution,
        align: usize,
        grid: ProcessGrid,
    ) -> Result<Self> {
        if align >= grid.size() {
            return Err(Error::Config(format!(
                "alignment {align} outside [0, {})",
                grid.size()
            )));
        }
        let n = values.len();
        let locals = (0..grid.size())
            .map(|rank| {
                let (first, stride) = progression(dist, align, grid, rank);
                values.iter().skip(first).step_by(stride).copied().collect()
            })
            .collect();
        Ok(DistVector {
            len: n,
            dist,
            align,
            grid,
            locals,
        })
    }

    pub fn to_global(&self) -> Vec<Complex64> {
        let mut out = vec![Complex64::ZERO; self.len];
        for rank in 0..self.grid.size() {
            let (first, stride) = progression(self.dist, self.align, self.grid, rank);
            for (k, &v) in self.locals[rank].iter().enumerate() {
                out[first + k * stride] = v;
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn distribution(&self) -> Distribution {
        self.dist
    }

    pub fn alignment(&self) -> usize {
        self.align
    }

    pub fn grid(&self) -> ProcessGrid {
        self.grid
    }

    pub fn local(&self, rank: usize) -> &[Complex64] {
        &self.locals[rank]
    }

    /// Global indices of the entries `rank` owns, ascending.
    pub fn owned_indices(&self, rank: usize) -> Vec<usize> {
        let (first, stride) = progression(self.dist, self.align, self.grid, rank);
        (0..self.locals[rank].len())
            .map(|k| first + k * stride)
            .collect()
    }

    /// Move to `target`, charging the ledger per the collective that a real
    /// run would issue: row all-gather for `VC -> MC`, column all-gather for
    /// `VR -> MR`, a rank permutation for `VC <-> VR`, and nothing for
    /// `MC -> VC` (each rank already holds its slice). The values themselves
    /// move bit-for-bit.
    pub fn redistribute(
        &self,
        target: Distribution,
        ledger: &mut CommLedger,
    ) -> Result<DistVector> {
        let q = self.grid.size();
        let out = DistVector::from_global(&self.to_global(), target, self.align, self.grid)?;
        match (self.dist, target) {
            (Distribution::VC, Distribution::MC) => {
                let g = self.grid.cols();
                for rank in 0..q {
                    let l = self.locals[rank].len() as u64;
                    ledger.charge(
                        rank,
                        CollectiveClass::RowAllGather,
                        l * (g as u64 - 1),
                        ceil_log2(g),
                        out.locals[rank].len() as u64,
                    );
                }
            }
            (Distribution::VR, Distribution::MR) => {
                let g = self.grid.rows();
                for rank in 0..q {
                    let l = self.locals[rank].len() as u64;
                    ledger.charge(
                        rank,
                        CollectiveClass::ColAllGather,
                        l * (g as u64 - 1),
                        ceil_log2(g),
                        out.locals[rank].len() as u64,
                    );
                }
            }
            (Distribution::MC, Distribution::VC) => {}
            (Distribution::VC, Distribution::VR) | (Distribution::VR, Distribution::VC) => {
                for rank in 0..q {
                    let to = permute_target(self.dist, rank, self.grid);
                    let l = self.locals[rank].len() as u64;
                    if to != rank && l > 0 {
                        ledger.charge(rank, CollectiveClass::Permute, l, 1, 0);
                        ledger.charge(to, CollectiveClass::Permute, 0, 0, l);
                    }
                }
            }
            (from, to) => {
                return Err(Error::Unsupported(format!(
                    "redistribution {} -> {}",
                    from.name(),
                    to.name()
                )))
            }
        }
        Ok(out)
    }
}

/// Rank receiving `rank`'s whole local segment under a `VC <-> VR` permute.
/// Both sides cycle entries mod `q`; only the residue-to-rank map changes.
fn permute_target(from: Distribution, rank: usize, grid: ProcessGrid) -> usize {
    let (r, c) = (grid.rows(), grid.cols());
    match from {
        Distribution::VC => rank / c + (rank % c) * r,
        Distribution::VR => {
            let (s, t) = grid.position_of(rank);
            s * c + t
        }
        _ => unreachable!("permutation is only defined between VC and VR"),
    }
}

/// A complex matrix in an element-wise two-dimensional cyclic layout over a
/// process grid.
#[derive(Clone, Debug)]
pub struct DistMatrix {
    rows: usize,
    cols: usize,
    grid: ProcessGrid,
    row_align: usize,
    col_align: usize,
    locals: Vec<DenseMat>,
}

impl DistMatrix {
    pub fn from_global(
        a: &DenseMat,
        grid: ProcessGrid,
        row_align: usize,
        col_align: usize,
    ) -> Result<Self> {
        if row_align >= grid.rows() || col_align >= grid.cols() {
            return Err(Error::Config(format!(
                "matrix alignment ({row_align}, {col_align}) outside the {} x {} grid",
                grid.rows(),
                grid.cols()
            )));
        }
        let (r, c) = (grid.rows(), grid.cols());
        let locals = (0..grid.size())
            .map(|rank| {
                let (s, t) = grid.position_of(rank);
                let fr = (s + r - row_align) % r;
                let fc = (t + c - col_align) % c;
                let nr = progression_len(fr, r, a.rows());
                let nc = progression_len(fc, c, a.cols());
                DenseMat::from_fn(nr, nc, |li, lj| a.at(fr + li * r, fc + lj * c))
            })
            .collect();
        Ok(DistMatrix {
            rows: a.rows(),
            cols: a.cols(),
            grid,
            row_align,
            col_align,
            locals,
        })
    }

    pub fn to_global(&self) -> DenseMat {
        let mut out = DenseMat::zeros(self.rows, self.cols);
        let (r, c) = (self.grid.rows(), self.grid.cols());
        for rank in 0..self.grid.size() {
            let (s, t) = self.grid.position_of(rank);
            let fr = (s + r - self.row_align) % r;
            let fc = (t + c - self.col_align) % c;
            let loc = &self.locals[rank];
            for lj in 0..loc.cols() {
                for li in 0..loc.rows() {
                    *out.at_mut(fr + li * r, fc + lj * c) = loc.at(li, lj);
                }
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn grid(&self) -> ProcessGrid {
        self.grid
    }

    pub fn local(&self, rank: usize) -> &DenseMat {
        &self.locals[rank]
    }
}

/// Distributed `y = F x` (or `F^T x`) for a square matrix against a
/// [`Distribution::VC`] vector, returned in the same layout.
///
/// The plain path permutes `x` to `VR`, all-gathers within process columns
/// to `MR`, multiplies each local block, and sum-scatters the partial
/// products within process rows straight into the `VC` result. The
/// transposed path all-gathers within rows to `MC`, multiplies against the
/// transposed blocks, sum-scatters within columns to `VR`, and permutes
/// back to `VC`. Partial sums accumulate in ascending rank order, so the
/// result is deterministic.
pub fn dist_trimv(
    f: &DistMatrix,
    x: &DistVector,
    transposed: bool,
    ledger: &mut CommLedger,
) -> Result<DistVector> {
    if f.rows != f.cols {
        return Err(Error::Dimension {
            expected: f.rows,
            got: f.cols,
        });
    }
    if x.len() != f.rows {
        return Err(Error::Dimension {
            expected: f.rows,
            got: x.len(),
        });
    }
    if x.distribution() != Distribution::VC {
        return Err(Error::Unsupported(format!(
            "dist_trimv input must be VC, got {}",
            x.distribution().name()
        )));
    }
    let grid = f.grid;
    if x.grid() != grid {
        return Err(Error::Config("process grids differ".into()));
    }
    let align = x.alignment();
    if f.row_align != align % grid.rows() || f.col_align != align % grid.cols() {
        return Err(Error::Config(
            "matrix and vector alignments are inconsistent".into(),
        ));
    }
    let q = grid.size();
    if !transposed {
        let xr = x.redistribute(Distribution::VR, ledger)?;
        let xm = xr.redistribute(Distribution::MR, ledger)?;
        let mut partials = Vec::with_capacity(q);
        for rank in 0..q {
            let loc = f.local(rank);
            let xs = xm.local(rank);
            let mut z = vec![Complex64::ZERO; loc.rows()];
            for (lj, &xv) in xs.iter().enumerate() {
                for (zi, &fv) in z.iter_mut().zip(loc.col(lj)) {
                    *zi += fv * xv;
                }
            }
            partials.push(z);
        }
        Ok(sum_scatter(&partials, x.len(), align, grid, true, ledger))
    } else {
        let xm = x.redistribute(Distribution::MC, ledger)?;
        let mut partials = Vec::with_capacity(q);
        for rank in 0..q {
            let loc = f.local(rank);
            let xs = xm.local(rank);
            let mut z = vec![Complex64::ZERO; loc.cols()];
            for (lj, zv) in z.iter_mut().enumerate() {
                for (&fv, &xv) in loc.col(lj).iter().zip(xs) {
                    *zv += fv * xv;
                }
            }
            partials.push(z);
        }
        let yr = sum_scatter(&partials, x.len(), align, grid, false, ledger);
        yr.redistribute(Distribution::VC, ledger)
    }
}

/// Sum per-rank partial buffers within process rows (columns) and scatter
/// the totals into a `VC` (`VR`) vector. Each rank's final slice is a subset
/// of its group's index set, so the scatter needs no further exchange; the
/// reduce-scatter charge is the part of the buffer a rank holds for others.
fn sum_scatter(
    partials: &[Vec<Complex64>],
    len: usize,
    align: usize,
    grid: ProcessGrid,
    within_rows: bool,
    ledger: &mut CommLedger,
) -> DistVector {
    let (r, c, q) = (grid.rows(), grid.cols(), grid.size());
    let (groups, gsize, class, out_dist) = if within_rows {
        (
            r,
            c,
            CollectiveClass::RowReduceScatter,
            Distribution::VC,
        )
    } else {
        (
            c,
            r,
            CollectiveClass::ColReduceScatter,
            Distribution::VR,
        )
    };
    let mut locals = vec![Vec::new(); q];
    for g in 0..groups {
        let members: Vec<usize> = (0..gsize)
            .map(|m| if within_rows { g + m * r } else { m + g * r })
            .collect();
        let buf_len = partials[members[0]].len();
        let mut total = vec![Complex64::ZERO; buf_len];
        for &k in &members {
            debug_assert_eq!(partials[k].len(), buf_len);
            for (acc, v) in total.iter_mut().zip(&partials[k]) {
                *acc += v;
            }
        }
        let (gfirst, gstride) = if within_rows {
            ((g + r - align % r) % r, r)
        } else {
            ((g + c - align % c) % c, c)
        };
        for &k in &members {
            let (first, _) = progression(out_dist, align, grid, k);
            let mut own = Vec::with_capacity(progression_len(first, q, len));
            let mut i = first;
            while i < len {
                own.push(total[(i - gfirst) / gstride]);
                i += q;
            }
            ledger.charge(
                k,
                class,
                (buf_len - own.len()) as u64,
                ceil_log2(gsize),
                own.len() as u64,
            );
            locals[k] = own;
        }
    }
    DistVector {
        len,
        dist: out_dist,
        align,
        grid,
        locals,
    }
}

/// Contiguous rank teams for every supernode of an elimination tree.
#[derive(Clone, Debug)]
pub struct SubteamAssignment {
    teams: Vec<Range<usize>>,
    grids: Vec<(usize, usize)>,
    ranks: usize,
}

impl SubteamAssignment {
    pub fn team(&self, supernode: usize) -> Range<usize> {
        self.teams[supernode].clone()
    }

    pub fn grid(&self, supernode: usize) -> ProcessGrid {
        let (rows, cols) = self.grids[supernode];
        ProcessGrid { rows, cols }
    }

    /// Ranks factoring (and solving with) this supernode's front.
    pub fn team_size(&self, supernode: usize) -> usize {
        self.teams[supernode].len()
    }

    /// Ranks participating in a full solve: the whole pool.
    pub fn ranks(&self) -> usize {
        self.ranks
    }

    pub fn len(&self) -> usize {
        self.teams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.teams.is_empty()
    }

    /// Alignment of this supernode's subvector within its team:
    /// `(s * ceil(q / m)) mod q` spreads the `m` supernodal segments over
    /// the `q` team ranks instead of piling every segment onto rank 0.
    pub fn alignment(&self, supernode: usize) -> usize {
        let q = self.teams[supernode].len();
        (supernode * q.div_ceil(self.teams.len())) % q
    }
}

/// Map supernodes to nested contiguous rank teams: the root works on all
/// `p` ranks and every separator splits its team between its children, the
/// first child taking the larger half. Teams of size one serve entire
/// subtrees. Each team gets an `r' x c'` grid with `r'` the largest divisor
/// of the team size not exceeding its square root.
pub fn subtree_to_subteam(tree: &EliminationTree, p: usize) -> Result<SubteamAssignment> {
    if p == 0 {
        return Err(Error::Config("rank pool must not be empty".into()));
    }
    let nsup = tree.supernodes.len();
    let mut teams = vec![0..0; nsup];
    let mut stack = vec![(tree.root(), 0..p)];
    while let Some((sid, team)) = stack.pop() {
        let children = &tree.supernodes[sid].children;
        if team.len() <= 1 || children.len() < 2 {
            for &ch in children {
                stack.push((ch, team.clone()));
            }
        } else {
            let mid = team.start + team.len().div_ceil(2);
            stack.push((children[0], team.start..mid));
            stack.push((children[1], mid..team.end));
        }
        teams[sid] = team;
    }
    let grids = teams.iter().map(|t| team_grid(t.len())).collect();
    Ok(SubteamAssignment {
        teams,
        grids,
        ranks: p,
    })
}

fn team_grid(size: usize) -> (usize, usize) {
    let mut r = 1;
    while (r + 1) * (r + 1) <= size {
        r += 1;
    }
    while size % r != 0 {
        r -= 1;
    }
    (r, size / r)
}

/// Which per-front pivot-block operation a simulated solve runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolvePath {
    /// Sequential-dependency triangular solves on factored fronts; every
    /// eliminated entry is broadcast to the rest of the team.
    TriangularSolve,
    /// Distributed triangular matrix-vector products on selectively
    /// inverted fronts.
    InvertedMultiply,
}

/// Run the multifrontal solve with every supernode's pivot-block operation
/// executed over its assigned team, and account the communication.
///
/// Both paths reproduce the sequential [`FrontalTree::solve`]; they differ
/// in cost shape. The triangular path broadcasts once per eliminated
/// column, so its message count grows with the front size, while the
/// inverted path runs a fixed pipeline of collectives per front. Coupling
/// updates between a front and its ancestors are applied locally without
/// charges; the ledger isolates the pivot-block traffic the two paths
/// disagree on.
pub fn simulated_multifrontal_solve(
    fronts: &FrontalTree,
    assignment: &SubteamAssignment,
    path: SolvePath,
    b: &[Complex64],
) -> Result<(Vec<Complex64>, CommLedger)> {
    let required = match path {
        SolvePath::TriangularSolve => FactorState::Factored,
        SolvePath::InvertedMultiply => FactorState::SelectivelyInverted,
    };
    if fronts.state() != required {
        return Err(Error::State {
            required: required.name(),
            actual: fronts.state().name(),
        });
    }
    let tree = fronts.tree();
    let n = fronts.n();
    if b.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: b.len(),
        });
    }
    if assignment.len() != tree.supernodes.len() {
        return Err(Error::Config(
            "subteam assignment does not match the elimination tree".into(),
        ));
    }
    let mut ledger = CommLedger::new(assignment.ranks());
    let mut w = vec![Complex64::ZERO; n];
    for (i, &v) in b.iter().enumerate() {
        w[tree.perm[i]] = v;
    }
    let mut xs = Vec::new();
    let mut ls = Vec::new();
    for (sid, s) in tree.supernodes.iter().enumerate() {
        let front = fronts.front(sid);
        apply_pivot_block(
            front,
            assignment,
            sid,
            false,
            path,
            &mut w[s.range.clone()],
            &mut ledger,
        )?;
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
    for (sid, s) in tree.supernodes.iter().enumerate() {
        for (k, &dk) in fronts.front(sid).d.iter().enumerate() {
            w[s.range.start + k] *= dk.inv();
        }
    }
    for (sid, s) in tree.supernodes.iter().enumerate().rev() {
        let front = fronts.front(sid);
        if !s.lower_struct.is_empty() {
            ls.clear();
            ls.extend(s.lower_struct.iter().map(|&i| w[i]));
            front.bl.gemv_transpose_sub(&ls, &mut w[s.range.clone()]);
        }
        apply_pivot_block(
            front,
            assignment,
            sid,
            true,
            path,
            &mut w[s.range.clone()],
            &mut ledger,
        )?;
    }
    let mut x = vec![Complex64::ZERO; n];
    for (i, v) in x.iter_mut().enumerate() {
        *v = w[tree.perm[i]];
    }
    Ok((x, ledger))
}

fn apply_pivot_block(
    front: &Front,
    assignment: &SubteamAssignment,
    sid: usize,
    transposed: bool,
    path: SolvePath,
    seg: &mut [Complex64],
    ledger: &mut CommLedger,
) -> Result<()> {
    let team = assignment.team(sid);
    if team.len() <= 1 {
        match (path, transposed) {
            (SolvePath::TriangularSolve, false) => solve_unit_lower(&front.tl, seg),
            (SolvePath::TriangularSolve, true) => solve_unit_lower_transpose(&front.tl, seg),
            (SolvePath::InvertedMultiply, false) => trimv_unit_lower(&front.tl, seg),
            (SolvePath::InvertedMultiply, true) => trimv_unit_lower_transpose(&front.tl, seg),
        }
        return Ok(());
    }
    let grid = assignment.grid(sid);
    let align = assignment.alignment(sid);
    let mut sub = CommLedger::new(grid.size());
    match path {
        SolvePath::TriangularSolve => {
            if transposed {
                solve_unit_lower_transpose(&front.tl, seg);
            } else {
                solve_unit_lower(&front.tl, seg);
            }
            let q = grid.size();
            for j in 0..seg.len() {
                let owner = vc_owner(j, align, grid);
                for k in 0..q {
                    let sent = if k == owner { (q - 1) as u64 } else { 0 };
                    sub.charge(k, CollectiveClass::RowAllGather, sent, ceil_log2(q), 1);
                }
            }
        }
        SolvePath::InvertedMultiply => {
            let lm = explicit_unit_lower(&front.tl);
            let fm = DistMatrix::from_global(&lm, grid, align % grid.rows(), align % grid.cols())?;
            let xd = DistVector::from_global(seg, Distribution::VC, align, grid)?;
            let yd = dist_trimv(&fm, &xd, transposed, &mut sub)?;
            for (v, y) in seg.iter_mut().zip(yd.to_global()) {
                *v = y;
            }
        }
    }
    ledger.absorb(&sub, team.start);
    Ok(())
}

/// The unit-lower content of a pivot block as an explicit dense matrix.
fn explicit_unit_lower(tl: &DenseMat) -> DenseMat {
    DenseMat::from_fn(tl.rows(), tl.cols(), |i, j| {
        if i == j {
            Complex64::ONE
        } else if i > j {
            tl.at(i, j)
        } else {
            Complex64::ZERO
        }
    })
}

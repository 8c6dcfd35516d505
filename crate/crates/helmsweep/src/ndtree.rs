//! Nested dissection of quasi-2D grids and the supernodal elimination tree.
//!
//! Separators are one-vertex-thick slabs that always span the full `x3`
//! depth: the recursion only ever splits the `x1`/`x2` top view, which is
//! what makes thin-panel factorizations cheap. Supernodes are the separators
//! plus the undivided leaf boxes; the post-order over supernodes defines the
//! fill-reducing permutation (every supernode's vertices become a contiguous
//! index range).

use std::fmt::Write as _;
use std::ops::Range;

use crate::discretize::SparseOperator;
use crate::error::{Error, Result};

/// What a supernode consists of.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SupernodeKind {
    /// An undivided sub-box (top-view ranges; the full depth is implied).
    Leaf { region: [Range<usize>; 2] },
    /// A separating slab `i_axis == coord` spanning the region and depth.
    Separator { axis: usize, coord: usize },
}

/// A leaf box or separator slab together with its place in the tree.
#[derive(Clone, Debug)]
pub struct Supernode {
    pub id: usize,
    pub kind: SupernodeKind,
    /// Natural (grid-order) indices of the members, ascending.
    pub vertices: Vec<usize>,
    /// Members in the reordered index space; always contiguous.
    pub range: Range<usize>,
    /// Zero or two child supernode ids.
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    /// Distance from the root (root is 0).
    pub depth: usize,
    /// Reordered indices of the ancestor rows this supernode updates,
    /// ascending. Filled by symbolic analysis.
    pub lower_struct: Vec<usize>,
    /// For each `lower_struct` position, the slot in the parent's front
    /// (member slots first, then the parent's own lower structure). Filled by
    /// symbolic analysis; empty at the root.
    pub rel_to_parent: Vec<usize>,
}

impl Supernode {
    /// Member count `t`.
    pub fn size(&self) -> usize {
        self.vertices.len()
    }
}

/// Nested-dissection ordering of a quasi-2D grid.
#[derive(Clone, Debug)]
pub struct EliminationTree {
    pub dims: [usize; 3],
    pub leaf_cutoff: usize,
    /// Supernodes in post-order; the root is last.
    pub supernodes: Vec<Supernode>,
    /// Natural index to reordered index.
    pub perm: Vec<usize>,
    /// Reordered index to natural index.
    pub iperm: Vec<usize>,
    supernode_of: Vec<usize>,
    analyzed: bool,
}

struct Builder {
    dims: [usize; 3],
    cutoff: usize,
    supernodes: Vec<Supernode>,
}

impl Builder {
    fn vertex(&self, i1: usize, i2: usize, i3: usize) -> usize {
        i1 + i2 * self.dims[0] + i3 * self.dims[0] * self.dims[1]
    }

    fn region_vertices(&self, r1: &Range<usize>, r2: &Range<usize>) -> Vec<usize> {
        let mut v = Vec::with_capacity(r1.len() * r2.len() * self.dims[2]);
        for i3 in 0..self.dims[2] {
            for i2 in r2.clone() {
                for i1 in r1.clone() {
                    v.push(self.vertex(i1, i2, i3));
                }
            }
        }
        v
    }

    fn push(&mut self, kind: SupernodeKind, vertices: Vec<usize>, children: Vec<usize>) -> usize {
        let id = self.supernodes.len();
        self.supernodes.push(Supernode {
            id,
            kind,
            vertices,
            range: 0..0,
            children,
            parent: None,
            depth: 0,
            lower_struct: Vec::new(),
            rel_to_parent: Vec::new(),
        });
        id
    }

    fn build(&mut self, r1: Range<usize>, r2: Range<usize>) -> usize {
        let lens = [r1.len(), r2.len()];
        let count = lens[0] * lens[1] * self.dims[2];
        if count <= self.cutoff || lens[0].max(lens[1]) < 3 {
            let vertices = self.region_vertices(&r1, &r2);
            return self.push(SupernodeKind::Leaf { region: [r1, r2] }, vertices, Vec::new());
        }
        // Split the longer top-view axis; ties go to axis 0.
        let axis = if lens[0] >= lens[1] { 0 } else { 1 };
        let (start, len) = if axis == 0 {
            (r1.start, lens[0])
        } else {
            (r2.start, lens[1])
        };
        let coord = start + len / 2;
        let (left, right) = if axis == 0 {
            (
                (r1.start..coord, r2.clone()),
                (coord + 1..r1.end, r2.clone()),
            )
        } else {
            (
                (r1.clone(), r2.start..coord),
                (r1.clone(), coord + 1..r2.end),
            )
        };
        let lid = self.build(left.0, left.1);
        let rid = self.build(right.0, right.1);
        let vertices = if axis == 0 {
            self.region_vertices(&(coord..coord + 1), &r2)
        } else {
            self.region_vertices(&r1, &(coord..coord + 1))
        };
        self.push(
            SupernodeKind::Separator { axis, coord },
            vertices,
            vec![lid, rid],
        )
    }
}

/// Build the nested-dissection elimination tree of a `dims` grid, stopping
/// at regions of `leaf_cutoff` or fewer vertices. The `x3` axis is never
/// split.
pub fn nested_dissection(dims: [usize; 3], leaf_cutoff: usize) -> Result<EliminationTree> {
    if dims.iter().any(|&n| n == 0) {
        return Err(Error::Config(format!("grid dims must be positive: {dims:?}")));
    }
    let mut b = Builder {
        dims,
        cutoff: leaf_cutoff,
        supernodes: Vec::new(),
    };
    let root = b.build(0..dims[0], 0..dims[1]);
    let mut supernodes = b.supernodes;
    debug_assert_eq!(root, supernodes.len() - 1);

    // Parent links and depths, walking down from the root.
    let mut stack = vec![(root, 0usize)];
    while let Some((id, depth)) = stack.pop() {
        supernodes[id].depth = depth;
        let children = supernodes[id].children.clone();
        for c in children {
            supernodes[c].parent = Some(id);
            stack.push((c, depth + 1));
        }
    }

    let n = dims[0] * dims[1] * dims[2];
    let mut perm = vec![usize::MAX; n];
    let mut iperm = vec![usize::MAX; n];
    let mut supernode_of = vec![usize::MAX; n];
    let mut cursor = 0;
    for s in supernodes.iter_mut() {
        s.range = cursor..cursor + s.vertices.len();
        for (offset, &orig) in s.vertices.iter().enumerate() {
            let new = cursor + offset;
            perm[orig] = new;
            iperm[new] = orig;
            supernode_of[new] = s.id;
        }
        cursor += s.vertices.len();
    }
    if cursor != n || perm.iter().any(|&p| p == usize::MAX) {
        return Err(Error::Config(
            "nested dissection did not produce a permutation".into(),
        ));
    }
    Ok(EliminationTree {
        dims,
        leaf_cutoff,
        supernodes,
        perm,
        iperm,
        supernode_of,
        analyzed: false,
    })
}

impl EliminationTree {
    /// Unknown count.
    pub fn n(&self) -> usize {
        self.perm.len()
    }

    /// Id of the root supernode.
    pub fn root(&self) -> usize {
        self.supernodes.len() - 1
    }

    /// Supernode owning a reordered index.
    pub fn supernode_of(&self, new_index: usize) -> usize {
        self.supernode_of[new_index]
    }

    /// Longest root-to-leaf path length.
    pub fn depth(&self) -> usize {
        self.supernodes.iter().map(|s| s.depth).max().unwrap_or(0)
    }

    /// Whether symbolic analysis has filled the lower structures.
    pub fn is_analyzed(&self) -> bool {
        self.analyzed
    }

    /// Fill every supernode's lower structure and relative index map from the
    /// operator's sparsity pattern. The operator is given in natural order;
    /// the tree's permutation is applied internally.
    pub fn symbolic_analysis(&mut self, op: &SparseOperator) -> Result<()> {
        if op.nrows() != self.n() {
            return Err(Error::Dimension {
                expected: self.n(),
                got: op.nrows(),
            });
        }
        if let Some((r, c)) = op.structural_asymmetry() {
            return Err(Error::Unsymmetric(r, c));
        }
        for sid in 0..self.supernodes.len() {
            let end = self.supernodes[sid].range.end;
            let mut ls: Vec<usize> = Vec::new();
            for &orig in &self.supernodes[sid].vertices {
                let (cols, _) = op.row(orig);
                for &c in cols {
                    let pc = self.perm[c];
                    if pc >= end {
                        ls.push(pc);
                    }
                }
            }
            for &child in &self.supernodes[sid].children {
                for &idx in &self.supernodes[child].lower_struct {
                    if idx >= end {
                        ls.push(idx);
                    }
                }
            }
            ls.sort_unstable();
            ls.dedup();
            self.supernodes[sid].lower_struct = ls;
        }
        // Relative index maps: child lower-struct position to parent front
        // slot (members first, then the parent's lower structure).
        for sid in 0..self.supernodes.len() {
            let Some(parent) = self.supernodes[sid].parent else {
                self.supernodes[sid].rel_to_parent = Vec::new();
                continue;
            };
            let prange = self.supernodes[parent].range.clone();
            let pls = &self.supernodes[parent].lower_struct;
            let t = prange.len();
            let mut rel = Vec::with_capacity(self.supernodes[sid].lower_struct.len());
            for &idx in &self.supernodes[sid].lower_struct {
                let slot = if prange.contains(&idx) {
                    idx - prange.start
                } else {
                    match pls.binary_search(&idx) {
                        Ok(pos) => t + pos,
                        Err(_) => {
                            return Err(Error::Config(format!(
                                "supernode {sid} updates index {idx} outside its parent's front"
                            )))
                        }
                    }
                };
                rel.push(slot);
            }
            self.supernodes[sid].rel_to_parent = rel;
        }
        self.analyzed = true;
        Ok(())
    }

    /// Indented text rendering, one `id size lower-struct-size` line per
    /// supernode, children below their parent.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![self.root()];
        while let Some(id) = stack.pop() {
            let s = &self.supernodes[id];
            let _ = writeln!(
                out,
                "{:indent$}{} {} {}",
                "",
                s.id,
                s.size(),
                s.lower_struct.len(),
                indent = 2 * s.depth
            );
            // Push right then left so the left child prints first.
            for &c in s.children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }
}

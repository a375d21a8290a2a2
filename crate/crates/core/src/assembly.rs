//! Residual assembly, finite-difference Jacobian blocks and the regularized
//! Newton system in block sparse form.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{gemv_add, identity_block, zero_block, Block, BlockVec};
use crate::mesh::{Edge, MeshLevel, Neighbor};
use crate::physics::{ghost_state, hydrostatic_reconstruct, interface_totals, BoundarySpec, FluxKind, FluxVector, Physics, State};
use crate::problems::Boundaries;

/// Forward-difference step of the Jacobian.
pub const FD_STEP: f64 = 1e-8;
/// Central-difference step used where the forward difference misbehaves.
pub const FD_FALLBACK_STEP: f64 = 1e-6;
/// Forward-difference entries above this magnitude trigger the fallback.
pub const FD_ENTRY_LIMIT: f64 = 1e8;

/// Block compressed-row matrix with dense `M x M` blocks and a diagonal block
/// in every row. Column indices are sorted within each row.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSparseMatrix<const M: usize> {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    blocks: Vec<Block<M>>,
    diag_pos: Vec<usize>,
}

impl<const M: usize> BlockSparseMatrix<M> {
    /// Zero matrix with the given column sets per row; diagonal entries are
    /// added where missing.
    pub fn from_pattern(rows: &[Vec<usize>]) -> Result<Self> {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut diag_pos = Vec::with_capacity(n);
        row_ptr.push(0);
        for (i, cols) in rows.iter().enumerate() {
            let mut c: Vec<usize> = cols.clone();
            c.push(i);
            c.sort_unstable();
            c.dedup();
            if let Some(&bad) = c.iter().find(|&&j| j >= n) {
                return Err(Error::DimensionMismatch(format!("column {bad} in a {n}-row matrix")));
            }
            let start = col_idx.len();
            diag_pos.push(start + c.binary_search(&i).unwrap());
            col_idx.extend(c);
            row_ptr.push(col_idx.len());
        }
        let blocks = vec![zero_block::<M>(); col_idx.len()];
        Ok(BlockSparseMatrix {
            row_ptr,
            col_idx,
            blocks,
            diag_pos,
        })
    }

    /// Pattern of cell-to-neighbour coupling on a mesh.
    pub fn mesh_pattern(mesh: &MeshLevel) -> Vec<Vec<usize>> {
        let mut rows: Vec<Vec<usize>> = (0..mesh.n_cells()).map(|i| vec![i]).collect();
        for e in &mesh.edges {
            if let Neighbor::Cell(j) = e.right {
                rows[e.left].push(j);
                rows[j].push(e.left);
            }
        }
        rows
    }

    pub fn n_rows(&self) -> usize {
        self.diag_pos.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.col_idx.len()
    }

    /// Positions of row `i` in `cols()` and `blocks()`.
    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    #[inline]
    pub fn cols(&self) -> &[usize] {
        &self.col_idx
    }

    #[inline]
    pub fn blocks(&self) -> &[Block<M>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Block<M>] {
        &mut self.blocks
    }

    #[inline]
    pub fn diag_position(&self, i: usize) -> usize {
        self.diag_pos[i]
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, &Block<M>)> {
        let r = self.row_range(i);
        self.col_idx[r.clone()].iter().copied().zip(self.blocks[r].iter())
    }

    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_range(i);
        self.col_idx[r.clone()].binary_search(&j).ok().map(|k| r.start + k)
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&Block<M>> {
        self.find(i, j).map(|p| &self.blocks[p])
    }

    pub fn block_mut(&mut self, i: usize, j: usize) -> Option<&mut Block<M>> {
        self.find(i, j).map(move |p| &mut self.blocks[p])
    }

    pub fn diag(&self, i: usize) -> &Block<M> {
        &self.blocks[self.diag_pos[i]]
    }

    pub fn diag_mut(&mut self, i: usize) -> &mut Block<M> {
        let p = self.diag_pos[i];
        &mut self.blocks[p]
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[[f64; M]]) -> Result<BlockVec<M>> {
        if x.len() != self.n_rows() {
            return Err(Error::DimensionMismatch(format!(
                "vector of {} blocks for a {}-row matrix",
                x.len(),
                self.n_rows()
            )));
        }
        let mut y = vec![[0.0; M]; self.n_rows()];
        for (i, yi) in y.iter_mut().enumerate() {
            for p in self.row_range(i) {
                gemv_add(&self.blocks[p], &x[self.col_idx[p]], yi);
            }
        }
        Ok(y)
    }

    /// `b - A x`.
    pub fn linear_residual(&self, x: &[[f64; M]], b: &[[f64; M]]) -> Result<BlockVec<M>> {
        let ax = self.matvec(x)?;
        Ok(b.iter()
            .zip(ax.iter())
            .map(|(bi, ai)| {
                let mut r = [0.0; M];
                for k in 0..M {
                    r[k] = bi[k] - ai[k];
                }
                r
            })
            .collect())
    }

    /// Entry-wise sum of two matrices with the same pattern.
    pub fn try_add(&self, other: &Self) -> Result<Self> {
        if !self.same_pattern(other) {
            return Err(Error::DimensionMismatch("matrices have different patterns".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.blocks.iter_mut().zip(other.blocks.iter()) {
            crate::linalg::block_add_assign(a, b);
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n_rows() * M;
        let mut d = DMatrix::zeros(n, n);
        for i in 0..self.n_rows() {
            for (j, b) in self.row(i) {
                for r in 0..M {
                    for c in 0..M {
                        d[(i * M + r, j * M + c)] = b[r][c];
                    }
                }
            }
        }
        d
    }

    /// Coordinate dump: one block per line, `row col` then the entries row by row.
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# block_size {M}")?;
        for i in 0..self.n_rows() {
            for (j, b) in self.row(i) {
                write!(w, "{i} {j}")?;
                for row in b {
                    for v in row {
                        write!(w, " {v:.16e}")?;
                    }
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// Per-cell residuals with their ℓ¹ norms.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualVector {
    pub cells: Vec<FluxVector>,
    pub norms: Vec<f64>,
    pub total: f64,
}

impl ResidualVector {
    fn from_cells(cells: Vec<FluxVector>) -> Self {
        let norms: Vec<f64> = cells.iter().map(|r| r.l1_norm()).collect();
        let total = norms.iter().sum();
        ResidualVector { cells, norms, total }
    }

    pub fn block<const M: usize>(&self, i: usize) -> [f64; M] {
        let mut out = [0.0; M];
        out.copy_from_slice(&self.cells[i].0[..M]);
        out
    }
}

/// Which cell of an edge a Jacobian block differentiates with respect to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// The regularized Newton system `A δU = rhs` on one level.
#[derive(Clone, Debug)]
pub struct LinearSystem<const M: usize> {
    pub matrix: BlockSparseMatrix<M>,
    pub rhs: BlockVec<M>,
    pub residual: ResidualVector,
    /// Rows frozen at the dry state.
    pub dry: Vec<bool>,
}

/// Finite volume operator of one mesh level.
#[derive(Clone, Copy, Debug)]
pub struct Discretization<'a> {
    pub mesh: &'a MeshLevel,
    pub boundaries: &'a Boundaries,
    pub flux: FluxKind,
    pub phys: Physics,
}

fn fd_ok(v: &FluxVector) -> bool {
    v.0.iter().all(|x| x.is_finite() && x.abs() <= FD_ENTRY_LIMIT)
}

/// Derivatives of both outputs of `f` with respect to component `k` of `u`:
/// forward differences with step `eps`, central differences as a fallback.
fn fd_column<F>(f: &F, base: (FluxVector, FluxVector), u: &State, k: usize, eps: f64) -> Result<(FluxVector, FluxVector)>
where
    F: Fn(&State) -> Result<(FluxVector, FluxVector)>,
{
    let shifted = |d: f64| u.with_component(k, u.component(k) + d);
    if let Ok((a, b)) = f(&shifted(eps)) {
        let da = (a - base.0) * (1.0 / eps);
        let db = (b - base.1) * (1.0 / eps);
        if fd_ok(&da) && fd_ok(&db) {
            return Ok((da, db));
        }
    }
    let h = FD_FALLBACK_STEP;
    let (ap, bp) = f(&shifted(h))?;
    let (am, bm) = f(&shifted(-h))?;
    let da = (ap - am) * (0.5 / h);
    let db = (bp - bm) * (0.5 / h);
    if da.is_finite() && db.is_finite() {
        Ok((da, db))
    } else {
        Err(Error::NonFiniteSpeed)
    }
}

#[inline]
fn add_column<const M: usize>(block: &mut Block<M>, k: usize, col: &FluxVector, scale: f64) {
    for r in 0..M {
        block[r][k] += scale * col.0[r];
    }
}

impl<'a> Discretization<'a> {
    pub fn new(mesh: &'a MeshLevel, boundaries: &'a Boundaries, flux: FluxKind, phys: Physics) -> Result<Self> {
        for e in &mesh.edges {
            if let Neighbor::Boundary(tag) = e.right {
                if boundaries.get(tag).is_none() {
                    return Err(Error::Config(format!("no boundary condition for the {tag} side")));
                }
            }
        }
        Ok(Discretization {
            mesh,
            boundaries,
            flux,
            phys,
        })
    }

    fn spec(&self, e: &Edge) -> &BoundarySpec {
        match e.right {
            Neighbor::Boundary(tag) => self.boundaries.get(tag).expect("checked in new"),
            Neighbor::Cell(_) => unreachable!("interior edge has no boundary condition"),
        }
    }

    fn interior_totals(&self, e: &Edge, ui: &State, uj: &State, j: usize) -> Result<(FluxVector, FluxVector)> {
        let zi = self.mesh.cells[e.left].bed;
        let zj = self.mesh.cells[j].bed;
        interface_totals(self.flux, ui, uj, zi, zj, e.normal, &self.phys)
    }

    fn boundary_total(&self, e: &Edge, ui: &State) -> Result<FluxVector> {
        let zi = self.mesh.cells[e.left].bed;
        let ghost = ghost_state(ui, self.spec(e), e.normal, &self.phys)?;
        interface_totals(self.flux, ui, &ghost, zi, zi, e.normal, &self.phys).map(|(f, _)| f)
    }

    fn check_len(&self, states: &[State]) -> Result<()> {
        if states.len() != self.mesh.n_cells() {
            return Err(Error::DimensionMismatch(format!(
                "{} states on a {}-cell mesh",
                states.len(),
                self.mesh.n_cells()
            )));
        }
        Ok(())
    }

    /// `R_i = Σ_e |e| (F̂ - S)` for every cell.
    pub fn residual(&self, states: &[State]) -> Result<ResidualVector> {
        self.check_len(states)?;
        let mut cells = vec![FluxVector::ZERO; states.len()];
        for e in &self.mesh.edges {
            let i = e.left;
            match e.right {
                Neighbor::Cell(j) => {
                    let (fi, fj) = self.interior_totals(e, &states[i], &states[j], j)?;
                    cells[i] += fi * e.length;
                    cells[j] += fj * e.length;
                }
                Neighbor::Boundary(_) => {
                    cells[i] += self.boundary_total(e, &states[i])? * e.length;
                }
            }
        }
        Ok(ResidualVector::from_cells(cells))
    }

    /// Residual of a single cell from the current neighbour values; equal
    /// bit for bit to the corresponding entry of [`Self::residual`].
    pub fn cell_residual(&self, states: &[State], i: usize) -> Result<FluxVector> {
        let mut r = FluxVector::ZERO;
        for &ei in &self.mesh.cells[i].edges {
            let e = &self.mesh.edges[ei];
            r += self.edge_total_for(e, states, i, &states[i])? * e.length;
        }
        Ok(r)
    }

    /// Total flux of edge `e` seen from cell `i`, with `ui` in place of `states[i]`.
    fn edge_total_for(&self, e: &Edge, states: &[State], i: usize, ui: &State) -> Result<FluxVector> {
        match e.right {
            Neighbor::Cell(j) => {
                if e.left == i {
                    self.interior_totals(e, ui, &states[j], j).map(|t| t.0)
                } else {
                    self.interior_totals(e, &states[e.left], ui, j).map(|t| t.1)
                }
            }
            Neighbor::Boundary(_) => self.boundary_total(e, ui),
        }
    }

    /// `∂F̂/∂Ū` of the total flux seen from the left cell of `edge`, with
    /// respect to the left or right cell, not scaled by the edge length. On
    /// boundary edges the ghost state follows the perturbed interior state.
    pub fn jacobian_block_fd<const M: usize>(
        &self,
        states: &[State],
        edge: usize,
        side: Side,
        eps: f64,
    ) -> Result<Block<M>> {
        self.check_len(states)?;
        if !(eps > 0.0) {
            return Err(Error::Config(format!("finite-difference step must be positive, got {eps}")));
        }
        let e = &self.mesh.edges[edge];
        let i = e.left;
        let mut block = zero_block::<M>();
        match (e.right, side) {
            (Neighbor::Boundary(_), Side::Right) => {
                return Err(Error::Config("a boundary edge has no right cell".into()));
            }
            (Neighbor::Boundary(_), Side::Left) => {
                let f = |u: &State| self.boundary_total(e, u).map(|v| (v, FluxVector::ZERO));
                let base = f(&states[i])?;
                for k in 0..M {
                    let (d, _) = fd_column(&f, base, &states[i], k, eps)?;
                    add_column(&mut block, k, &d, 1.0);
                }
            }
            (Neighbor::Cell(j), Side::Left) => {
                let f = |u: &State| self.interior_totals(e, u, &states[j], j);
                let base = f(&states[i])?;
                for k in 0..M {
                    let (d, _) = fd_column(&f, base, &states[i], k, eps)?;
                    add_column(&mut block, k, &d, 1.0);
                }
            }
            (Neighbor::Cell(j), Side::Right) => {
                let f = |u: &State| self.interior_totals(e, &states[i], u, j);
                let base = f(&states[j])?;
                for k in 0..M {
                    let (d, _) = fd_column(&f, base, &states[j], k, eps)?;
                    add_column(&mut block, k, &d, 1.0);
                }
            }
        }
        Ok(block)
    }

    /// Local residual of cell `i` and the regularized diagonal block
    /// `α‖R_i‖₁ I + Σ_e |e| ∂F̂/∂Ū_i`.
    pub fn local_system<const M: usize>(
        &self,
        states: &[State],
        i: usize,
        alpha: f64,
        eps: f64,
    ) -> Result<([f64; M], Block<M>)> {
        let mut r = FluxVector::ZERO;
        let mut d = zero_block::<M>();
        for &ei in &self.mesh.cells[i].edges {
            let e = &self.mesh.edges[ei];
            let f = |u: &State| self.edge_total_for(e, states, i, u).map(|v| (v, FluxVector::ZERO));
            let base = f(&states[i])?;
            r += base.0 * e.length;
            for k in 0..M {
                let (col, _) = fd_column(&f, base, &states[i], k, eps)?;
                add_column(&mut d, k, &col, e.length);
            }
        }
        let mut rm = [0.0; M];
        rm.copy_from_slice(&r.0[..M]);
        let reg = alpha * r.l1_norm();
        for (k, row) in d.iter_mut().enumerate() {
            row[k] += reg;
        }
        Ok((rm, d))
    }

    /// `Σ_e |e| (|u_n| + √(g h))` over the hydrostatically reconstructed
    /// neighbour states of cell `i` (ghost states on the boundary). Used as a
    /// pseudo-time diagonal for dry cells, whose own flux derivative vanishes
    /// when water only pours in from a higher neighbour.
    pub fn neighbour_speed(&self, states: &[State], i: usize) -> Result<f64> {
        let zi = self.mesh.cells[i].bed;
        let mut total = 0.0;
        for &ei in &self.mesh.cells[i].edges {
            let e = &self.mesh.edges[ei];
            let (nb, zj) = match e.right {
                Neighbor::Cell(j) => {
                    let other = if e.left == i { j } else { e.left };
                    (states[other], self.mesh.cells[other].bed)
                }
                Neighbor::Boundary(_) => (ghost_state(&states[i], self.spec(e), e.normal, &self.phys)?, zi),
            };
            let rec = hydrostatic_reconstruct(&nb, &states[i], zj, zi, self.phys.dry_depth).left;
            let (u, v) = rec.velocity(self.phys.dry_depth);
            let un = u * e.normal[0] + v * e.normal[1];
            total += e.length * (un.abs() + (self.phys.g * rec.h).sqrt());
        }
        Ok(total)
    }

    /// Regularized Newton system: diagonal blocks `α‖R_i‖₁ I + Σ |e| ∂F̂/∂Ū_i`,
    /// off-diagonal blocks `|e| ∂F̂/∂Ū_j`, right-hand side `-R`. Rows of cells
    /// with `h ≤ dry_depth` become identity rows with zero right-hand side.
    pub fn regularized_system<const M: usize>(&self, states: &[State], alpha: f64, eps: f64) -> Result<LinearSystem<M>> {
        self.check_len(states)?;
        let n = states.len();
        let mut a = BlockSparseMatrix::<M>::from_pattern(&BlockSparseMatrix::<M>::mesh_pattern(self.mesh))?;
        let mut cells = vec![FluxVector::ZERO; n];
        for e in &self.mesh.edges {
            let i = e.left;
            let len = e.length;
            match e.right {
                Neighbor::Cell(j) => {
                    let f_i = |u: &State| self.interior_totals(e, u, &states[j], j);
                    let f_j = |u: &State| self.interior_totals(e, &states[i], u, j);
                    let base = f_i(&states[i])?;
                    cells[i] += base.0 * len;
                    cells[j] += base.1 * len;
                    let (pii, pji, pij, pjj) = (
                        a.find(i, i).unwrap(),
                        a.find(j, i).unwrap(),
                        a.find(i, j).unwrap(),
                        a.find(j, j).unwrap(),
                    );
                    let blocks = a.blocks_mut();
                    for k in 0..M {
                        let (di, dj) = fd_column(&f_i, base, &states[i], k, eps)?;
                        add_column(&mut blocks[pii], k, &di, len);
                        add_column(&mut blocks[pji], k, &dj, len);
                        let (di, dj) = fd_column(&f_j, base, &states[j], k, eps)?;
                        add_column(&mut blocks[pij], k, &di, len);
                        add_column(&mut blocks[pjj], k, &dj, len);
                    }
                }
                Neighbor::Boundary(_) => {
                    let f = |u: &State| self.boundary_total(e, u).map(|v| (v, FluxVector::ZERO));
                    let base = f(&states[i])?;
                    cells[i] += base.0 * len;
                    let p = a.diag_position(i);
                    for k in 0..M {
                        let (d, _) = fd_column(&f, base, &states[i], k, eps)?;
                        add_column(&mut a.blocks_mut()[p], k, &d, len);
                    }
                }
            }
        }
        let residual = ResidualVector::from_cells(cells);
        let mut rhs = vec![[0.0; M]; n];
        let mut dry = vec![false; n];
        for i in 0..n {
            if states[i].h <= self.phys.dry_depth {
                dry[i] = true;
                for p in a.row_range(i) {
                    a.blocks_mut()[p] = zero_block::<M>();
                }
                *a.diag_mut(i) = identity_block::<M>();
                continue;
            }
            let reg = alpha * residual.norms[i];
            let d = a.diag_mut(i);
            for (k, row) in d.iter_mut().enumerate() {
                row[k] += reg;
            }
            for k in 0..M {
                rhs[i][k] = -residual.cells[i].0[k];
            }
        }
        Ok(LinearSystem {
            matrix: a,
            rhs,
            residual,
            dry,
        })
    }
}

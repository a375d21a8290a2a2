//! Linear multigrid for the block sparse Newton systems: block symmetric
//! Gauss-Seidel smoothing, Galerkin coarse operators, restriction of the
//! linear residual, piecewise-constant prolongation and the recursive γ-cycle.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::BlockSparseMatrix;
use crate::error::{Error, Result};
use crate::linalg::{gemv_sub, norm2, BlockLu, BlockVec};
use crate::mesh::MeshHierarchy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarsestSolver {
    /// Dense LU of the expanded coarsest matrix, factored once per hierarchy.
    Direct,
    /// Block SGS sweeps until the relative residual drops below 1e-12 or 500
    /// sweeps have been done.
    Sweeps,
}

pub const COARSEST_SWEEP_TOL: f64 = 1e-12;
pub const COARSEST_MAX_SWEEPS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleConfig {
    /// 1 for V-cycles, 2 for W-cycles.
    pub gamma: usize,
    pub nu1: usize,
    pub nu2: usize,
    pub coarsest: CoarsestSolver,
}

impl Default for CycleConfig {
    fn default() -> Self {
        CycleConfig {
            gamma: 1,
            nu1: 1,
            nu2: 1,
            coarsest: CoarsestSolver::Direct,
        }
    }
}

impl CycleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.gamma) {
            return Err(Error::Config(format!("cycle index must be 1 or 2, got {}", self.gamma)));
        }
        if self.nu1 + self.nu2 == 0 {
            return Err(Error::Config("at least one smoothing step is required".into()));
        }
        Ok(())
    }
}

/// LU factors of every diagonal block.
pub fn factor_diagonal<const M: usize>(a: &BlockSparseMatrix<M>) -> Result<Vec<BlockLu<M>>> {
    (0..a.n_rows())
        .map(|i| BlockLu::factor(a.diag(i)).ok_or(Error::SingularBlock(i)))
        .collect()
}

#[inline]
fn relax_row<const M: usize>(a: &BlockSparseMatrix<M>, lu: &BlockLu<M>, x: &mut [[f64; M]], b: &[[f64; M]], i: usize) {
    let mut r = b[i];
    let cols = a.cols();
    let blocks = a.blocks();
    for p in a.row_range(i) {
        let j = cols[p];
        if j != i {
            gemv_sub(&blocks[p], &x[j], &mut r);
        }
    }
    x[i] = lu.solve(&r);
}

/// One forward then one backward block Gauss-Seidel sweep on `A x = b`.
pub fn block_sgs_sweep<const M: usize>(a: &BlockSparseMatrix<M>, diag_lu: &[BlockLu<M>], x: &mut [[f64; M]], b: &[[f64; M]]) {
    let n = a.n_rows();
    for i in 0..n {
        relax_row(a, &diag_lu[i], x, b, i);
    }
    for i in (0..n).rev() {
        relax_row(a, &diag_lu[i], x, b, i);
    }
}

fn parents_of(children: &[Vec<usize>]) -> Result<Vec<usize>> {
    let n_fine: usize = children.iter().map(|c| c.len()).sum();
    let mut parent = vec![usize::MAX; n_fine];
    for (p, ch) in children.iter().enumerate() {
        for &c in ch {
            if c >= n_fine || parent[c] != usize::MAX {
                return Err(Error::DimensionMismatch("agglomeration is not a partition".into()));
            }
            parent[c] = p;
        }
    }
    Ok(parent)
}

/// `A_c(I, J) = Σ_{i ∈ I} Σ_{j ∈ J} A(i, j)`.
pub fn galerkin_coarsen<const M: usize>(fine: &BlockSparseMatrix<M>, children: &[Vec<usize>]) -> Result<BlockSparseMatrix<M>> {
    let parent = parents_of(children)?;
    if parent.len() != fine.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "agglomeration covers {} cells, matrix has {} rows",
            parent.len(),
            fine.n_rows()
        )));
    }
    let mut pattern: Vec<Vec<usize>> = vec![Vec::new(); children.len()];
    for (i, &pi) in parent.iter().enumerate() {
        for (j, _) in fine.row(i) {
            pattern[pi].push(parent[j]);
        }
    }
    let mut coarse = BlockSparseMatrix::<M>::from_pattern(&pattern)?;
    for (pi, ch) in children.iter().enumerate() {
        for &i in ch {
            for (j, b) in fine.row(i) {
                let blk = coarse.block_mut(pi, parent[j]).expect("pattern covers every coupling");
                crate::linalg::block_add_assign(blk, b);
            }
        }
    }
    Ok(coarse)
}

/// Coarse right-hand side `Σ_{i ∈ I} (b_i - (A x)_i)`.
pub fn restrict_residual<const M: usize>(
    a: &BlockSparseMatrix<M>,
    x: &[[f64; M]],
    b: &[[f64; M]],
    children: &[Vec<usize>],
) -> Result<BlockVec<M>> {
    let r = a.linear_residual(x, b)?;
    Ok(children
        .iter()
        .map(|ch| {
            let mut s = [0.0; M];
            for &c in ch {
                for k in 0..M {
                    s[k] += r[c][k];
                }
            }
            s
        })
        .collect())
}

/// Adds each coarse correction to all of its children.
pub fn prolongate_correct<const M: usize>(coarse: &[[f64; M]], children: &[Vec<usize>], fine: &mut [[f64; M]]) {
    for (p, ch) in children.iter().enumerate() {
        for &c in ch {
            for k in 0..M {
                fine[c][k] += coarse[p][k];
            }
        }
    }
}

/// Matrix of one level with its smoother factors.
#[derive(Clone, Debug)]
pub struct LinearLevel<const M: usize> {
    pub matrix: BlockSparseMatrix<M>,
    pub diag_lu: Vec<BlockLu<M>>,
    /// For every cell of this level, its cells on the next finer level
    /// (absent on the finest level).
    pub children: Option<Vec<Vec<usize>>>,
}

impl<const M: usize> LinearLevel<M> {
    pub fn new(matrix: BlockSparseMatrix<M>, children: Option<Vec<Vec<usize>>>) -> Result<Self> {
        let diag_lu = factor_diagonal(&matrix)?;
        Ok(LinearLevel {
            matrix,
            diag_lu,
            children,
        })
    }

    pub fn sweep(&self, x: &mut [[f64; M]], b: &[[f64; M]]) {
        block_sgs_sweep(&self.matrix, &self.diag_lu, x, b);
    }
}

/// Solves the coarsest system according to `mode`; `x` is the initial guess
/// for sweeps and is overwritten.
pub fn solve_coarsest<const M: usize>(
    level: &LinearLevel<M>,
    dense_lu: Option<&nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    x: &mut BlockVec<M>,
    b: &[[f64; M]],
    mode: CoarsestSolver,
) -> Result<()> {
    match mode {
        CoarsestSolver::Direct => {
            let owned;
            let lu = match dense_lu {
                Some(lu) => lu,
                None => {
                    owned = level.matrix.to_dense().lu();
                    &owned
                }
            };
            let rhs = DVector::from_iterator(b.len() * M, b.iter().flat_map(|v| v.iter().copied()));
            let sol = lu.solve(&rhs).ok_or(Error::SingularMatrix)?;
            if sol.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularMatrix);
            }
            for (i, xi) in x.iter_mut().enumerate() {
                for k in 0..M {
                    xi[k] = sol[i * M + k];
                }
            }
        }
        CoarsestSolver::Sweeps => {
            let b_norm = norm2(b);
            if b_norm == 0.0 {
                x.iter_mut().for_each(|v| *v = [0.0; M]);
                return Ok(());
            }
            for _ in 0..COARSEST_MAX_SWEEPS {
                level.sweep(x, b);
                let r = level.matrix.linear_residual(x, b)?;
                if norm2(&r) < COARSEST_SWEEP_TOL * b_norm {
                    break;
                }
            }
        }
    }
    Ok(())
}

/// Galerkin hierarchy of linear levels from finest (index 0) to coarsest.
#[derive(Debug)]
pub struct Multigrid<const M: usize> {
    pub levels: Vec<LinearLevel<M>>,
    pub config: CycleConfig,
    coarse_lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    visits: Vec<usize>,
    /// Linear residual norm after each cycle run through [`Self::solve`].
    pub cycle_log: Vec<f64>,
}

impl<const M: usize> Multigrid<M> {
    /// Builds the hierarchy from explicit agglomerations: `children[l]` maps
    /// the cells of level `l + 1` to cells of level `l`.
    pub fn from_children(fine: BlockSparseMatrix<M>, children: Vec<Vec<Vec<usize>>>, config: CycleConfig) -> Result<Self> {
        config.validate()?;
        let mut levels = vec![LinearLevel::new(fine, None)?];
        for ch in children {
            let coarse = galerkin_coarsen(&levels.last().unwrap().matrix, &ch)?;
            levels.push(LinearLevel::new(coarse, Some(ch))?);
        }
        let coarse_lu = if levels.len() > 1 && config.coarsest == CoarsestSolver::Direct {
            let dense: DMatrix<f64> = levels.last().unwrap().matrix.to_dense();
            let lu = dense.lu();
            if !lu.is_invertible() {
                return Err(Error::SingularMatrix);
            }
            Some(lu)
        } else {
            None
        };
        let n = levels.len();
        Ok(Multigrid {
            levels,
            config,
            coarse_lu,
            visits: vec![0; n],
            cycle_log: Vec::new(),
        })
    }

    /// Uses the first `n_coarse` agglomerations of a mesh hierarchy.
    pub fn new(fine: BlockSparseMatrix<M>, mesh: &MeshHierarchy, n_coarse: usize, config: CycleConfig) -> Result<Self> {
        if n_coarse > mesh.n_coarse_levels() {
            return Err(Error::Config(format!(
                "{n_coarse} coarse levels requested, mesh hierarchy has {}",
                mesh.n_coarse_levels()
            )));
        }
        let children = mesh.levels[1..=n_coarse]
            .iter()
            .map(|l| l.agglomeration.as_ref().expect("coarse levels carry agglomerations").children.clone())
            .collect();
        Self::from_children(fine, children, config)
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// How often each level has been entered since construction or the last reset.
    pub fn visits(&self) -> &[usize] {
        &self.visits
    }

    pub fn reset_visits(&mut self) {
        self.visits.iter_mut().for_each(|v| *v = 0);
    }

    fn cycle_level(&mut self, l: usize, x: &mut BlockVec<M>, b: &[[f64; M]]) -> Result<()> {
        self.visits[l] += 1;
        let last = self.levels.len() - 1;
        if l == last {
            if l == 0 {
                for _ in 0..self.config.nu1 + self.config.nu2 {
                    self.levels[0].sweep(x, b);
                }
                return Ok(());
            }
            return solve_coarsest(&self.levels[l], self.coarse_lu.as_ref(), x, b, self.config.coarsest);
        }
        for _ in 0..self.config.nu1 {
            self.levels[l].sweep(x, b);
        }
        let children = self.levels[l + 1].children.as_ref().expect("coarse level has children");
        let bc = restrict_residual(&self.levels[l].matrix, x, b, children)?;
        let mut xc = vec![[0.0; M]; bc.len()];
        let gamma = if l == 0 { 1 } else { self.config.gamma };
        for _ in 0..gamma {
            self.cycle_level(l + 1, &mut xc, &bc)?;
        }
        let children = self.levels[l + 1].children.as_ref().unwrap();
        prolongate_correct(&xc, children, x);
        for _ in 0..self.config.nu2 {
            self.levels[l].sweep(x, b);
        }
        Ok(())
    }

    /// One γ-cycle on the finest level, improving `x` in place.
    pub fn cycle(&mut self, x: &mut BlockVec<M>, b: &[[f64; M]]) -> Result<()> {
        if x.len() != self.levels[0].matrix.n_rows() || b.len() != x.len() {
            return Err(Error::DimensionMismatch("cycle vectors do not match the matrix".into()));
        }
        self.cycle_level(0, x, b)
    }

    /// `n_cycles` cycles from a zero initial correction.
    pub fn solve(&mut self, b: &[[f64; M]], n_cycles: usize) -> Result<BlockVec<M>> {
        let mut x = vec![[0.0; M]; b.len()];
        for _ in 0..n_cycles {
            self.cycle(&mut x, b)?;
            let r = self.levels[0].matrix.linear_residual(&x, b)?;
            self.cycle_log.push(norm2(&r));
        }
        Ok(x)
    }

    /// Writes the cycle log and level visit counts as CSV.
    pub fn write_log<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "cycle,linear_residual")?;
        for (k, r) in self.cycle_log.iter().enumerate() {
            writeln!(w, "{},{:.6e}", k + 1, r)?;
        }
        writeln!(w, "level,visits")?;
        for (l, v) in self.visits.iter().enumerate() {
            writeln!(w, "{l},{v}")?;
        }
        Ok(())
    }
}

//! Spectral analysis of the block SGS smoother and exact reference solutions.

use std::io::Write;

use nalgebra::{Complex, DMatrix, DVector};

use crate::assembly::BlockSparseMatrix;
use crate::driver::NmgmSolver;
use crate::error::{Error, Result};
use crate::mesh::MeshLevel;
use crate::multigrid::{block_sgs_sweep, factor_diagonal};
use crate::physics::State;

/// Largest expanded dimension accepted by [`iteration_matrix`].
pub const MAX_DENSE_DIM: usize = 4096;

/// Error-propagation matrix `T` of one symmetric block Gauss-Seidel sweep on
/// `a`, built column by column by sweeping each unit vector with a zero
/// right-hand side.
pub fn iteration_matrix<const M: usize>(a: &BlockSparseMatrix<M>) -> Result<DMatrix<f64>> {
    let n = a.n_rows();
    let dim = n * M;
    if dim > MAX_DENSE_DIM {
        return Err(Error::DimensionMismatch(format!(
            "iteration matrix of dimension {dim} exceeds the dense limit {MAX_DENSE_DIM}"
        )));
    }
    let lu = factor_diagonal(a)?;
    let zero = vec![[0.0; M]; n];
    let mut t = DMatrix::zeros(dim, dim);
    let mut x = vec![[0.0; M]; n];
    for col in 0..dim {
        for b in x.iter_mut() {
            *b = [0.0; M];
        }
        x[col / M][col % M] = 1.0;
        block_sgs_sweep(a, &lu, &mut x, &zero);
        for (i, b) in x.iter().enumerate() {
            for k in 0..M {
                t[(i * M + k, col)] = b[k];
            }
        }
    }
    Ok(t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralReport {
    pub eigenvalues: Vec<Complex<f64>>,
    pub rho: f64,
    /// Asymptotic rate `-ln rho`.
    pub r_inf: f64,
}

impl SpectralReport {
    pub fn from_eigenvalues(eigenvalues: Vec<Complex<f64>>) -> Self {
        let rho = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
        SpectralReport {
            eigenvalues,
            rho,
            r_inf: -rho.ln(),
        }
    }

    /// Two columns `Re Im`, one eigenvalue per line.
    pub fn write_scatter<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for z in &self.eigenvalues {
            writeln!(w, "{:.12e} {:.12e}", z.re, z.im)?;
        }
        Ok(())
    }
}

/// All eigenvalues of a dense real matrix via the real Schur form.
pub fn spectrum(t: &DMatrix<f64>) -> Result<SpectralReport> {
    if !t.is_square() {
        return Err(Error::DimensionMismatch("spectrum of a non-square matrix".into()));
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence("matrix has non-finite entries".into()));
    }
    if t.nrows() == 0 {
        return Ok(SpectralReport::from_eigenvalues(Vec::new()));
    }
    let max_iter = 30 * t.nrows();
    let schur = nalgebra::linalg::Schur::try_new(t.clone(), f64::EPSILON, max_iter)
        .ok_or_else(|| Error::NoConvergence(format!("QR iteration did not converge in {max_iter} steps")))?;
    Ok(SpectralReport::from_eigenvalues(schur.complex_eigenvalues().iter().copied().collect()))
}

/// Power-iteration estimate of the spectral radius; meaningful when the
/// dominant eigenvalue is real and separated.
pub fn power_iteration(t: &DMatrix<f64>, max_iter: usize, tol: f64) -> f64 {
    let n = t.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i as f64) * 0.7).sin());
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..max_iter {
        let w = t * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm;
        v = w / norm;
        if (next - est).abs() <= tol * next.max(1e-300) {
            return next;
        }
        est = next;
    }
    est
}

/// Spectrum of the smoother's iteration matrix for the regularized Newton
/// matrix assembled at the solver's current (normally converged) state.
pub fn smoother_spectrum(solver: &NmgmSolver) -> Result<SpectralReport> {
    let disc = solver.discretization(0)?;
    let c = &solver.config;
    let t = match solver.dim() {
        1 => iteration_matrix(&disc.regularized_system::<2>(&solver.states, c.alpha, c.eps_fd)?.matrix)?,
        _ => iteration_matrix(&disc.regularized_system::<3>(&solver.states, c.alpha, c.eps_fd)?.matrix)?,
    };
    spectrum(&t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub samples: Vec<(f64, f64)>,
    /// Slope of `rho = 1 - C dx`.
    pub c: f64,
    /// Root-mean-square misfit of `1 - rho` against `C dx`.
    pub residual: f64,
}

/// Least-squares fit of `1 - rho = C dx` through the origin.
pub fn fit_rate_law(samples: &[(f64, f64)]) -> Result<RateFit> {
    let mut xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if samples.len() < 3 || xs.len() < 3 || samples.iter().any(|&(dx, r)| !(dx > 0.0) || !r.is_finite()) {
        return Err(Error::Config("rate fit needs at least 3 samples with distinct positive spacing".into()));
    }
    let sxx: f64 = samples.iter().map(|s| s.0 * s.0).sum();
    let sxy: f64 = samples.iter().map(|s| s.0 * (1.0 - s.1)).sum();
    let c = sxy / sxx;
    let ss: f64 = samples.iter().map(|s| (1.0 - s.1 - c * s.0).powi(2)).sum();
    Ok(RateFit {
        samples: samples.to_vec(),
        c,
        residual: (ss / samples.len() as f64).sqrt(),
    })
}

/// `q² / (2h²) + g h`: specific energy without the bed.
fn energy(h: f64, q: f64, g: f64) -> f64 {
    q * q / (2.0 * h * h) + g * h
}

pub fn critical_depth(q: f64, g: f64) -> f64 {
    (q * q / g).cbrt()
}

/// Depth on the requested branch of `q²/(2h²) + g (h + z) = e`.
fn bernoulli_depth(q: f64, z: f64, e: f64, g: f64, subcritical: bool) -> Result<f64> {
    let hc = critical_depth(q, g);
    let f = |h: f64| energy(h, q, g) + g * z - e;
    let fc = f(hc);
    if fc > 1e-12 * e.abs().max(1.0) {
        return Err(Error::Regime(format!("no steady depth at bed level {z}: energy {e} below critical")));
    }
    if fc >= 0.0 || q == 0.0 {
        return Ok(if q == 0.0 { (e / g - z).max(0.0) } else { hc });
    }
    // f is convex with its minimum at hc
    let (mut lo, mut hi) = if subcritical {
        let mut hi = 2.0 * hc.max(e / g);
        while f(hi) < 0.0 {
            hi *= 2.0;
        }
        (hc, hi)
    } else {
        let mut lo = 0.5 * hc;
        while f(lo) < 0.0 {
            lo *= 0.5;
        }
        (lo, hc)
    };
    let increasing = subcritical;
    let mut h = 0.5 * (lo + hi);
    for _ in 0..200 {
        let v = f(h);
        if (v > 0.0) == increasing {
            hi = h;
        } else {
            lo = h;
        }
        let d = -q * q / (h * h * h) + g;
        let mut next = h - v / d;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - h).abs() <= 1e-15 * h {
            return Ok(next);
        }
        h = next;
    }
    Ok(h)
}

/// Subcritical steady state of unit discharge `q` with far-field depth
/// `h_inf` over a flat far field, at bed level `z`: returns `(h, u)`.
pub fn exact_subcritical_1d(z: f64, g: f64, q: f64, h_inf: f64) -> Result<(f64, f64)> {
    if q / h_inf >= (g * h_inf).sqrt() {
        return Err(Error::Regime("far field is not subcritical".into()));
    }
    let e = energy(h_inf, q, g);
    let h = bernoulli_depth(q, z, e, g, true)?;
    Ok((h, q / h))
}

/// Steady transcritical flow over a bump: subcritical upstream, critical at
/// the crest, supercritical downstream, optionally with a stationary jump
/// back to the subcritical branch that meets `h_down` at the outlet.
#[derive(Clone)]
pub struct TranscriticalProfile<'a> {
    bed: &'a dyn Fn(f64) -> f64,
    pub g: f64,
    pub q: f64,
    pub x_crest: f64,
    pub h_crest: f64,
    energy_up: f64,
    energy_down: Option<f64>,
    /// Jump location, if any.
    pub shock: Option<f64>,
}

impl std::fmt::Debug for TranscriticalProfile<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TranscriticalProfile")
            .field("q", &self.q)
            .field("x_crest", &self.x_crest)
            .field("h_crest", &self.h_crest)
            .field("shock", &self.shock)
            .finish()
    }
}

/// Momentum function `q²/h + g h²/2`, conserved across a stationary jump.
pub fn momentum_function(h: f64, q: f64, g: f64) -> f64 {
    q * q / h + 0.5 * g * h * h
}

fn locate_crest(bed: &dyn Fn(f64) -> f64, x_min: f64, x_max: f64) -> f64 {
    let n = 20_000;
    let dx = (x_max - x_min) / n as f64;
    let mut best = x_min;
    for i in 0..=n {
        let x = x_min + i as f64 * dx;
        if bed(x) > bed(best) {
            best = x;
        }
    }
    let (mut a, mut b) = ((best - dx).max(x_min), (best + dx).min(x_max));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if bed(c) > bed(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// Builds the transcritical profile on `[x_min, x_max]` with outlet bed
/// level `bed(x_max)`.
pub fn exact_transcritical_1d<'a>(
    bed: &'a dyn Fn(f64) -> f64,
    x_min: f64,
    x_max: f64,
    g: f64,
    q: f64,
    h_down: f64,
    with_shock: bool,
) -> Result<TranscriticalProfile<'a>> {
    let x_crest = locate_crest(bed, x_min, x_max);
    let h_crest = critical_depth(q, g);
    let energy_up = energy(h_crest, q, g) + g * bed(x_crest);
    let mut p = TranscriticalProfile {
        bed,
        g,
        q,
        x_crest,
        h_crest,
        energy_up,
        energy_down: None,
        shock: None,
    };
    if with_shock {
        let e_down = energy(h_down, q, g) + g * bed(x_max);
        if q / h_down >= (g * h_down).sqrt() {
            return Err(Error::Regime("outlet depth is not subcritical".into()));
        }
        p.energy_down = Some(e_down);
        let jump = |x: f64| -> Result<f64> {
            let z = bed(x);
            let h1 = bernoulli_depth(q, z, energy_up, g, false)?;
            let h2 = bernoulli_depth(q, z, e_down, g, true)?;
            Ok(momentum_function(h1, q, g) - momentum_function(h2, q, g))
        };
        // the downstream subcritical branch exists only where its energy
        // exceeds the critical one
        let critical = energy(h_crest, q, g);
        let exists = |x: f64| e_down - g * bed(x) >= critical;
        let mut a = x_crest;
        let mut b = x_max;
        if !exists(b) {
            return Err(Error::Regime("outlet energy below critical".into()));
        }
        if !exists(a) {
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if exists(m) {
                    b = m;
                } else {
                    a = m;
                }
            }
            a = b;
        }
        let mut b = x_max;
        let (fa, fb) = (jump(a)?, jump(b)?);
        if fa.signum() == fb.signum() {
            return Err(Error::Regime("no admissible jump position inside the domain".into()));
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let fm = jump(m)?;
            if fm.signum() == fa.signum() {
                a = m;
            } else {
                b = m;
            }
            if b - a < 1e-14 * (x_max - x_min) {
                break;
            }
        }
        p.shock = Some(0.5 * (a + b));
    }
    Ok(p)
}

impl TranscriticalProfile<'_> {
    /// `(h, u)` at `x`.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        let z = (self.bed)(x);
        let h = if x <= self.x_crest {
            bernoulli_depth(self.q, z, self.energy_up, self.g, true)?
        } else {
            match (self.shock, self.energy_down) {
                (Some(xs), Some(e)) if x > xs => bernoulli_depth(self.q, z, e, self.g, true)?,
                _ => bernoulli_depth(self.q, z, self.energy_up, self.g, false)?,
            }
        };
        Ok((h, self.q / h))
    }

    /// Relative mismatch of the momentum function across the jump.
    pub fn jump_residual(&self) -> Result<f64> {
        let (Some(xs), Some(e)) = (self.shock, self.energy_down) else {
            return Ok(0.0);
        };
        let z = (self.bed)(xs);
        let h1 = bernoulli_depth(self.q, z, self.energy_up, self.g, false)?;
        let h2 = bernoulli_depth(self.q, z, e, self.g, true)?;
        let m1 = momentum_function(h1, self.q, self.g);
        let m2 = momentum_function(h2, self.q, self.g);
        Ok((m1 - m2).abs() / m1)
    }
}

/// Lake at rest with surface level `level`: `h = max(level - z, 0)`, zero velocity.
pub fn lake_at_rest_exact(z: f64, level: f64) -> State {
    State::new((level - z).max(0.0), 0.0, 0.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorNorms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

/// Area-weighted L1, L2 and max norms of `numeric - exact`, per component
/// `(h, hu, hv)`.
pub fn error_norms(mesh: &MeshLevel, numeric: &[State], exact: &[State]) -> Result<[ErrorNorms; 3]> {
    if numeric.len() != mesh.n_cells() || exact.len() != mesh.n_cells() {
        return Err(Error::DimensionMismatch("error norms need one state per cell".into()));
    }
    let mut out = [ErrorNorms::default(); 3];
    for ((c, a), b) in mesh.cells.iter().zip(numeric).zip(exact) {
        for (k, n) in out.iter_mut().enumerate() {
            let d = (a.component(k) - b.component(k)).abs();
            n.l1 += c.area * d;
            n.l2 += c.area * d * d;
            n.linf = n.linf.max(d);
        }
    }
    for n in out.iter_mut() {
        n.l2 = n.l2.sqrt();
    }
    Ok(out)
}

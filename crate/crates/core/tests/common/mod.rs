//! Oracles and property checks shared by the integration tests. Everything
//! here is written against dense linear algebra or closed-form relations so
//! it does not lean on the code it checks.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use swe_nmgm::assembly::{BlockSparseMatrix, Discretization, Side};
use swe_nmgm::linalg::Block;
use swe_nmgm::mesh::{build_uniform_1d, Neighbor};
use swe_nmgm::multigrid::{factor_diagonal, galerkin_coarsen, block_sgs_sweep, CoarsestSolver, CycleConfig, Multigrid};
use swe_nmgm::physics::{numerical_flux, physical_flux_normal, BoundarySpec, FluxKind, FluxVector, Physics, State, GRAVITY};
use swe_nmgm::problems::Boundaries;

pub type Check = Result<(), String>;

pub fn random_wet_state(rng: &mut StdRng) -> State {
    let h = rng.gen_range(0.05..5.0);
    State::new(h, h * rng.gen_range(-3.0..3.0), h * rng.gen_range(-3.0..3.0))
}

pub fn random_normal(rng: &mut StdRng) -> [f64; 2] {
    let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    [a.cos(), a.sin()]
}

/// `T_n U`: momentum expressed in the (normal, tangential) frame.
pub fn rotate(u: &State, n: [f64; 2]) -> State {
    State::new(u.h, u.hu * n[0] + u.hv * n[1], -u.hu * n[1] + u.hv * n[0])
}

fn rotate_flux(f: &FluxVector, n: [f64; 2]) -> FluxVector {
    FluxVector([f.0[0], f.0[1] * n[0] + f.0[2] * n[1], -f.0[1] * n[1] + f.0[2] * n[0]])
}

fn rel_diff(a: &FluxVector, b: &FluxVector) -> f64 {
    let scale = a.0.iter().chain(b.0.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
    a.max_abs_diff(b) / scale
}

pub fn check_consistency(kind: FluxKind, u: &State, n: [f64; 2]) -> Check {
    let phys = Physics::default();
    let f = numerical_flux(kind, u, u, n, &phys).map_err(|e| e.to_string())?;
    let exact = physical_flux_normal(u, n, &phys);
    let d = rel_diff(&f, &exact);
    if d <= 1e-13 {
        Ok(())
    } else {
        Err(format!("{kind:?} consistency off by {d:e} at {u:?}"))
    }
}

pub fn check_conservation(kind: FluxKind, l: &State, r: &State, n: [f64; 2]) -> Check {
    let phys = Physics::default();
    let a = numerical_flux(kind, l, r, n, &phys).map_err(|e| e.to_string())?;
    let b = numerical_flux(kind, r, l, [-n[0], -n[1]], &phys).map_err(|e| e.to_string())?;
    let d = rel_diff(&a, &(-b));
    if d <= 1e-12 {
        Ok(())
    } else {
        Err(format!("{kind:?} conservation off by {d:e}"))
    }
}

pub fn check_rotation(kind: FluxKind, l: &State, r: &State, n: [f64; 2]) -> Check {
    let phys = Physics::default();
    let f = numerical_flux(kind, l, r, n, &phys).map_err(|e| e.to_string())?;
    let fx = numerical_flux(kind, &rotate(l, n), &rotate(r, n), [1.0, 0.0], &phys).map_err(|e| e.to_string())?;
    let d = rel_diff(&rotate_flux(&f, n), &fx);
    if d <= 1e-12 {
        Ok(())
    } else {
        Err(format!("{kind:?} rotation off by {d:e}"))
    }
}

fn open_ends() -> Boundaries {
    Boundaries {
        west: BoundarySpec::supercritical_outflow(),
        east: BoundarySpec::supercritical_outflow(),
        south: None,
        north: None,
    }
}

/// Flat bed, two cells, LLF. The side being differentiated is given the
/// slower wave speed so that `s_max` is set by the other side and stays
/// fixed under the perturbation; the total flux from the left cell is then
/// `½(F(U_L) + F(U_R)) - ½ s (U_R - U_L) - (0, ½ g h_L²)`.
pub fn check_frozen_llf_jacobian(h: f64, u: f64, side: Side) -> Check {
    let phys = Physics::default();
    let g = phys.g;
    let mesh = build_uniform_1d(0.0, 2.0, 2, |_| 0.0).map_err(|e| e.to_string())?;
    let bounds = open_ends();
    let disc = Discretization::new(&mesh, &bounds, FluxKind::Llf, phys).map_err(|e| e.to_string())?;
    let edge = mesh
        .edges
        .iter()
        .position(|e| matches!(e.right, Neighbor::Cell(_)))
        .ok_or("no interior edge")?;
    let e = &mesh.edges[edge];
    if e.normal != [1.0, 0.0] || e.left != 0 {
        return Err(format!("unexpected interior edge {e:?}"));
    }
    let slow = State::new_1d(h, h * u);
    let s_fast = u.abs() + (g * h).sqrt() + 1.0;
    // Unit depth, moving against the slow state, with speed above s_fast.
    let fast = State::new_1d(1.0, ((s_fast - g.sqrt()).max(0.0) + 0.5).copysign(-u));
    let states = match side {
        Side::Left => vec![slow, fast],
        Side::Right => vec![fast, slow],
    };
    let s = {
        let c = |st: &State| (st.hu / st.h).abs() + (g * st.h).sqrt();
        c(&states[0]).max(c(&states[1]))
    };
    let sign = match side {
        Side::Left => 1.0,
        Side::Right => -1.0,
    };
    // ∂F/∂U of the 1D flux (hu, hu²/h + g h²/2) at the differentiated state.
    let a = [[0.0, 1.0], [g * h - u * u, 2.0 * u]];
    let mut want: Block<2> = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            want[r][c] = 0.5 * a[r][c] + if r == c { 0.5 * sign * s } else { 0.0 };
        }
    }
    if side == Side::Left {
        want[1][0] -= g * h;
    }
    let got = disc
        .jacobian_block_fd::<2>(&states, edge, side, 1e-8)
        .map_err(|e| e.to_string())?;
    for r in 0..2 {
        for c in 0..2 {
            // Forward differences of a flux of size F lose about
            // F * 1e-16 / 1e-8 to round-off, hence the relative scale.
            let d = (got[r][c] - want[r][c]).abs() / want[r][c].abs().max(1.0);
            if d > 1e-6 {
                return Err(format!("{side:?} entry ({r},{c}): fd {} vs analytic {} (h={h}, u={u})", got[r][c], want[r][c]));
            }
        }
    }
    Ok(())
}

/// Tridiagonal block pattern on a chain of `n` cells.
fn chain_pattern(n: usize) -> Vec<Vec<usize>> {
    (0..n)
        .map(|i| {
            let mut c = vec![i];
            if i > 0 {
                c.push(i - 1);
            }
            if i + 1 < n {
                c.push(i + 1);
            }
            c
        })
        .collect()
}

fn pairs(n: usize) -> Vec<Vec<usize>> {
    (0..n / 2).map(|p| vec![2 * p, 2 * p + 1]).collect()
}

/// Random block-tridiagonal matrix; `integer` keeps every entry a small
/// integer, `dominant` makes the diagonal blocks strongly dominant.
pub fn random_chain_matrix(rng: &mut StdRng, n: usize, integer: bool, dominant: bool) -> BlockSparseMatrix<2> {
    let mut a = BlockSparseMatrix::<2>::from_pattern(&chain_pattern(n)).unwrap();
    for i in 0..n {
        let cols: Vec<usize> = a.row(i).map(|(j, _)| j).collect();
        for j in cols {
            let blk = a.block_mut(i, j).unwrap();
            for row in blk.iter_mut() {
                for v in row.iter_mut() {
                    *v = if integer {
                        rng.gen_range(-8i32..=8) as f64
                    } else {
                        rng.gen_range(-1.0..1.0)
                    };
                }
            }
            if dominant && i == j {
                blk[0][0] += 8.0;
                blk[1][1] += 8.0;
            }
        }
    }
    a
}

pub fn check_galerkin_linearity(seed: u64) -> Check {
    let mut rng = StdRng::seed_from_u64(seed);
    let n = 2 * rng.gen_range(2..12);
    let a = random_chain_matrix(&mut rng, n, true, false);
    let b = random_chain_matrix(&mut rng, n, true, false);
    let (ca, cb) = (rng.gen_range(-4i32..=4) as f64, rng.gen_range(-4i32..=4) as f64);
    let mut combo = a.clone();
    for i in 0..n {
        let cols: Vec<usize> = a.row(i).map(|(j, _)| j).collect();
        for j in cols {
            let (x, y) = (*a.block(i, j).unwrap(), *b.block(i, j).unwrap());
            let blk = combo.block_mut(i, j).unwrap();
            for r in 0..2 {
                for c in 0..2 {
                    blk[r][c] = ca * x[r][c] + cb * y[r][c];
                }
            }
        }
    }
    let ch = pairs(n);
    let lhs = galerkin_coarsen(&combo, &ch).map_err(|e| e.to_string())?.to_dense();
    let rhs = galerkin_coarsen(&a, &ch).map_err(|e| e.to_string())?.to_dense() * ca
        + galerkin_coarsen(&b, &ch).map_err(|e| e.to_string())?.to_dense() * cb;
    if lhs == rhs {
        Ok(())
    } else {
        Err(format!("Galerkin coarsening not linear (seed {seed})"))
    }
}

/// One forward then one backward block Gauss-Seidel pass on the dense matrix.
fn dense_sgs(a: &DMatrix<f64>, x: &mut DVector<f64>, b: &DVector<f64>, m: usize) {
    let n = a.nrows() / m;
    let relax = |x: &mut DVector<f64>, i: usize| {
        let rows = i * m..(i + 1) * m;
        let mut r = b.rows(i * m, m).into_owned();
        for j in 0..n {
            if j != i {
                r -= a.view((rows.start, j * m), (m, m)) * x.rows(j * m, m);
            }
        }
        let d = a.view((rows.start, i * m), (m, m)).into_owned();
        let xi = d.lu().solve(&r).expect("diagonal block invertible");
        x.rows_mut(i * m, m).copy_from(&xi);
    };
    for i in 0..n {
        relax(x, i);
    }
    for i in (0..n).rev() {
        relax(x, i);
    }
}

fn to_dvec(v: &[[f64; 2]]) -> DVector<f64> {
    DVector::from_iterator(v.len() * 2, v.iter().flat_map(|b| b.iter().copied()))
}

/// One two-level V-cycle (one pre- and one post-smoothing sweep, exact
/// coarse solve) against the same steps written out with dense matrices
/// and an explicit piecewise-constant prolongation `P`.
pub fn check_unrolled_cycle(seed: u64) -> Check {
    let mut rng = StdRng::seed_from_u64(seed);
    let n = 2 * rng.gen_range(2..10);
    let a = random_chain_matrix(&mut rng, n, false, true);
    let b: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let config = CycleConfig {
        gamma: 1,
        nu1: 1,
        nu2: 1,
        coarsest: CoarsestSolver::Direct,
    };
    let mut mg = Multigrid::from_children(a.clone(), vec![pairs(n)], config).map_err(|e| e.to_string())?;
    let mut x = vec![[0.0; 2]; n];
    mg.cycle(&mut x, &b).map_err(|e| e.to_string())?;

    let ad = a.to_dense();
    let bd = to_dvec(&b);
    let mut p = DMatrix::<f64>::zeros(2 * n, n);
    for c in 0..n {
        for k in 0..2 {
            p[(2 * c + k, 2 * (c / 2) + k)] = 1.0;
        }
    }
    let mut xd = DVector::<f64>::zeros(2 * n);
    dense_sgs(&ad, &mut xd, &bd, 2);
    let rc = p.transpose() * (&bd - &ad * &xd);
    let ac = p.transpose() * &ad * &p;
    let ec = ac.lu().solve(&rc).ok_or("singular coarse matrix")?;
    xd += &p * ec;
    dense_sgs(&ad, &mut xd, &bd, 2);

    let d = (to_dvec(&x) - &xd).amax();
    if d <= 1e-12 {
        Ok(())
    } else {
        Err(format!("cycle differs from the unrolled sequence by {d:e} (seed {seed})"))
    }
}

pub fn check_sweep_vs_matrix(seed: u64) -> Check {
    let mut rng = StdRng::seed_from_u64(seed);
    let n = rng.gen_range(2..16);
    let a = random_chain_matrix(&mut rng, n, false, true);
    let t = swe_nmgm::analysis::iteration_matrix::<2>(&a).map_err(|e| e.to_string())?;
    let e: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let lu = factor_diagonal(&a).map_err(|e| e.to_string())?;
    let mut swept = e.clone();
    block_sgs_sweep(&a, &lu, &mut swept, &vec![[0.0; 2]; n]);
    let d = (to_dvec(&swept) - t * to_dvec(&e)).amax();
    if d <= 1e-12 {
        Ok(())
    } else {
        Err(format!("sweep and iteration matrix differ by {d:e} (seed {seed})"))
    }
}

/// Weak oblique hydraulic jump at a wall deflection `theta` (radians) for
/// upstream Froude number `f1`.
#[derive(Clone, Copy, Debug)]
pub struct ObliqueJump {
    /// Shock angle to the upstream flow.
    pub beta: f64,
    pub depth_ratio: f64,
    pub froude_down: f64,
}

pub fn oblique_jump(f1: f64, theta: f64) -> ObliqueJump {
    let deflection = |b: f64| {
        let root = (1.0 + 8.0 * (f1 * b.sin()).powi(2)).sqrt();
        b.tan() * (root - 3.0) / (2.0 * b.tan().powi(2) + root - 1.0)
    };
    let f = |b: f64| theta.tan() - deflection(b);
    let lo0 = (1.0 / f1).asin() + 1e-12;
    // The weak branch is the first sign change above the Mach angle.
    let steps = 100_000;
    let width = (std::f64::consts::FRAC_PI_2 - lo0) / steps as f64;
    let mut lo = lo0;
    let mut hi = lo0;
    for k in 1..=steps {
        hi = lo0 + k as f64 * width;
        if f(hi) < 0.0 {
            break;
        }
        lo = hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta = 0.5 * (lo + hi);
    let fn1 = f1 * beta.sin();
    let depth_ratio = 0.5 * ((1.0 + 8.0 * fn1 * fn1).sqrt() - 1.0);
    // Velocities in units of sqrt(g h1): the normal part drops by the depth
    // ratio, the tangential part is continuous.
    let un2 = fn1 / depth_ratio;
    let ut = f1 * beta.cos();
    let froude_down = un2.hypot(ut) / depth_ratio.sqrt();
    ObliqueJump {
        beta,
        depth_ratio,
        froude_down,
    }
}

pub const G: f64 = GRAVITY;

pub fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[v.len() / 2])
}

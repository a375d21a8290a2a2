//! Conserved-state algebra, numerical fluxes, hydrostatic reconstruction and
//! boundary ghost states for the shallow water equations.
//!
//! All fluxes are evaluated in the edge-aligned frame: for a unit normal
//! `n = (nx, ny)` the normal and tangential velocities are
//! `u_n = u nx + v ny` and `u_t = -u ny + v nx`. One-dimensional problems use
//! the same code path with `v = 0` and `n = (±1, 0)`, so the third flux
//! component is identically zero there.
//!
//! Internally every flux is computed *relative to a reference pressure*
//! `½ g h_ref²`. Each supported flux is an affine combination of physical
//! fluxes whose weights sum to one, so subtracting the reference pressure from
//! every physical flux subtracts it exactly once from the result. The interface
//! source term of the hydrostatic reconstruction is such a reference pressure,
//! and folding it in this way makes the lake-at-rest balance cancel exactly
//! instead of through the difference of two large pressure terms.

use std::fmt;
use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default gravitational acceleration (m/s²).
pub const GRAVITY: f64 = 9.81;
/// Depth below which a state counts as dry.
pub const DRY_DEPTH: f64 = 1e-6;
/// Wave-speed augmentation factor of the LLF flux at wet/dry fronts.
pub const LLF_WET_DRY_FACTOR: f64 = 0.03;
/// Width of Harten's entropy fix in the Roe flux.
pub const ROE_ENTROPY_FIX: f64 = 0.4;

/// Physical constants shared by every flux evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub g: f64,
    pub dry_depth: f64,
    /// Apply the LLF wet/dry speed augmentation on every edge.
    #[serde(default)]
    pub wet_dry: bool,
}

impl Default for Physics {
    fn default() -> Self {
        Physics {
            g: GRAVITY,
            dry_depth: DRY_DEPTH,
            wet_dry: false,
        }
    }
}

impl Physics {
    pub fn with_gravity(g: f64) -> Self {
        Physics {
            g,
            ..Default::default()
        }
    }
}

/// Depth and momentum of one cell, `(h, hu, hv)`. One-dimensional states keep
/// `hv = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct State {
    pub h: f64,
    pub hu: f64,
    pub hv: f64,
}

impl State {
    pub const DRY: State = State {
        h: 0.0,
        hu: 0.0,
        hv: 0.0,
    };

    pub const fn new(h: f64, hu: f64, hv: f64) -> Self {
        State { h, hu, hv }
    }

    pub const fn new_1d(h: f64, hu: f64) -> Self {
        State { h, hu, hv: 0.0 }
    }

    /// Builds a state from two (1D) or three (2D) components.
    pub fn from_components(c: &[f64]) -> Self {
        match c.len() {
            2 => State::new_1d(c[0], c[1]),
            3 => State::new(c[0], c[1], c[2]),
            n => panic!("a state has 2 or 3 components, got {n}"),
        }
    }

    pub fn component(&self, k: usize) -> f64 {
        match k {
            0 => self.h,
            1 => self.hu,
            2 => self.hv,
            _ => panic!("state component {k} out of range"),
        }
    }

    pub fn with_component(mut self, k: usize, value: f64) -> Self {
        match k {
            0 => self.h = value,
            1 => self.hu = value,
            2 => self.hv = value,
            _ => panic!("state component {k} out of range"),
        }
        self
    }

    /// The first `M` components as an array.
    pub fn to_array<const M: usize>(&self) -> [f64; M] {
        let mut out = [0.0; M];
        for (k, v) in out.iter_mut().enumerate() {
            *v = self.component(k);
        }
        out
    }

    pub fn from_array<const M: usize>(a: &[f64; M]) -> Self {
        State::from_components(a)
    }

    /// Velocity `(u, v)`; zero for states shallower than `dry_depth`.
    pub fn velocity(&self, dry_depth: f64) -> (f64, f64) {
        if self.h > dry_depth {
            (self.hu / self.h, self.hv / self.h)
        } else {
            (0.0, 0.0)
        }
    }

    pub fn is_dry(&self, dry_depth: f64) -> bool {
        self.h < dry_depth
    }

    /// Resets states shallower than `dry_depth` to the dry state.
    pub fn clamped(self, dry_depth: f64) -> Self {
        if self.h < dry_depth || !self.h.is_finite() {
            State::DRY
        } else {
            self
        }
    }

    pub fn froude(&self, phys: &Physics) -> f64 {
        if self.is_dry(phys.dry_depth) {
            return 0.0;
        }
        let (u, v) = self.velocity(phys.dry_depth);
        u.hypot(v) / (phys.g * self.h).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.h.is_finite() && self.hu.is_finite() && self.hv.is_finite()
    }

    /// Rebuilds a state from depth and rotated-frame velocities.
    pub fn from_normal_frame(h: f64, un: f64, ut: f64, n: [f64; 2]) -> Self {
        let u = un * n[0] - ut * n[1];
        let v = un * n[1] + ut * n[0];
        State::new(h, h * u, h * v)
    }
}

impl Add for State {
    type Output = State;
    fn add(self, o: State) -> State {
        State::new(self.h + o.h, self.hu + o.hu, self.hv + o.hv)
    }
}

impl Sub for State {
    type Output = State;
    fn sub(self, o: State) -> State {
        State::new(self.h - o.h, self.hu - o.hu, self.hv - o.hv)
    }
}

impl Mul<f64> for State {
    type Output = State;
    fn mul(self, s: f64) -> State {
        State::new(self.h * s, self.hu * s, self.hv * s)
    }
}

/// Normal flux `F(U)·n` or a numerical approximation of it.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FluxVector(pub [f64; 3]);

impl FluxVector {
    pub const ZERO: FluxVector = FluxVector([0.0; 3]);

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &FluxVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for FluxVector {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

impl Add for FluxVector {
    type Output = FluxVector;
    fn add(self, o: FluxVector) -> FluxVector {
        FluxVector([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl AddAssign for FluxVector {
    fn add_assign(&mut self, o: FluxVector) {
        for k in 0..3 {
            self.0[k] += o.0[k];
        }
    }
}

impl Sub for FluxVector {
    type Output = FluxVector;
    fn sub(self, o: FluxVector) -> FluxVector {
        FluxVector([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Mul<f64> for FluxVector {
    type Output = FluxVector;
    fn mul(self, s: f64) -> FluxVector {
        FluxVector([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Neg for FluxVector {
    type Output = FluxVector;
    fn neg(self) -> FluxVector {
        FluxVector([-self.0[0], -self.0[1], -self.0[2]])
    }
}

/// Interface states after hydrostatic reconstruction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconstructedPair {
    pub left: State,
    pub right: State,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FluxKind {
    Hll,
    /// HLLC; identical to HLL in one dimension.
    Hllc,
    Llf,
    Roe,
}

impl FluxKind {
    pub const ALL: [FluxKind; 4] = [FluxKind::Hll, FluxKind::Hllc, FluxKind::Llf, FluxKind::Roe];

    pub fn name(&self) -> &'static str {
        match self {
            FluxKind::Hll => "hll",
            FluxKind::Hllc => "hllc",
            FluxKind::Llf => "llf",
            FluxKind::Roe => "roe",
        }
    }

    /// Whether the flux can be evaluated next to dry states.
    pub fn supports_dry(&self) -> bool {
        !matches!(self, FluxKind::Roe)
    }
}

impl fmt::Display for FluxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FluxKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hll" => Ok(FluxKind::Hll),
            "hllc" => Ok(FluxKind::Hllc),
            "llf" => Ok(FluxKind::Llf),
            "roe" => Ok(FluxKind::Roe),
            other => Err(Error::Config(format!("unknown flux '{other}'"))),
        }
    }
}

/// Primitive variables in the edge-aligned frame.
#[derive(Clone, Copy, Debug)]
struct Frame {
    h: f64,
    un: f64,
    ut: f64,
}

impl Frame {
    fn from_velocity(h: f64, u: f64, v: f64, n: [f64; 2], dry_depth: f64) -> Frame {
        let h = h.max(0.0);
        if h < dry_depth {
            Frame { h, un: 0.0, ut: 0.0 }
        } else {
            Frame {
                h,
                un: u * n[0] + v * n[1],
                ut: -u * n[1] + v * n[0],
            }
        }
    }

    fn from_state(s: &State, n: [f64; 2], dry_depth: f64) -> Frame {
        let (u, v) = s.velocity(dry_depth);
        Frame::from_velocity(s.h, u, v, n, dry_depth)
    }

    fn conserved(&self) -> [f64; 3] {
        [self.h, self.h * self.un, self.h * self.ut]
    }

    fn celerity(&self, g: f64) -> f64 {
        (g * self.h).sqrt()
    }

    /// Physical flux in the edge frame with the pressure measured relative to
    /// `½ g h_ref²`.
    fn flux(&self, g: f64, h_ref: f64) -> [f64; 3] {
        let q = self.h * self.un;
        [
            q,
            q * self.un + 0.5 * g * (self.h - h_ref) * (self.h + h_ref),
            q * self.ut,
        ]
    }
}

fn rotate_back(f: [f64; 3], n: [f64; 2]) -> FluxVector {
    FluxVector([f[0], n[0] * f[1] - n[1] * f[2], n[1] * f[1] + n[0] * f[2]])
}

fn pressure_vector(h: f64, n: [f64; 2], g: f64) -> FluxVector {
    let p = 0.5 * g * h * h;
    FluxVector([0.0, p * n[0], p * n[1]])
}

/// `F(U)·n`.
pub fn physical_flux_normal(u: &State, n: [f64; 2], phys: &Physics) -> FluxVector {
    let f = Frame::from_state(u, n, phys.dry_depth);
    rotate_back(f.flux(phys.g, 0.0), n)
}

/// Hydrostatic reconstruction of the interface depths: each side keeps its
/// free-surface level clipped by the higher of the two bed elevations, and its
/// own cell velocity.
pub fn hydrostatic_reconstruct(
    ui: &State,
    uj: &State,
    zi: f64,
    zj: f64,
    dry_depth: f64,
) -> ReconstructedPair {
    let zmax = zi.max(zj);
    let hl = (ui.h + zi - zmax).max(0.0);
    let hr = (uj.h + zj - zmax).max(0.0);
    let (ul, vl) = ui.velocity(dry_depth);
    let (ur, vr) = uj.velocity(dry_depth);
    ReconstructedPair {
        left: State::new(hl, hl * ul, hl * vl),
        right: State::new(hr, hr * ur, hr * vr),
    }
}

/// Interface source `(0, ½ g h² nx, ½ g h² ny)`.
pub fn interface_source(h_minus: f64, n: [f64; 2], g: f64) -> FluxVector {
    pressure_vector(h_minus, n, g)
}

/// HLL wave-speed estimates `(s_L, s_R)` including the dry-state variants.
fn hll_speeds(l: &Frame, r: &Frame, phys: &Physics) -> Result<(f64, f64)> {
    let g = phys.g;
    let cl = l.celerity(g);
    let cr = r.celerity(g);
    let u_star = 0.5 * (l.un + r.un) + cl - cr;
    let h_star = (cl + cr + 0.5 * (l.un - r.un)).powi(2) / (4.0 * g);
    let c_star = (g * h_star).sqrt();
    let s_left = if l.h < phys.dry_depth {
        r.un - 2.0 * cr
    } else {
        (l.un - cl).min(u_star - c_star)
    };
    let s_right = if r.h < phys.dry_depth {
        l.un + 2.0 * cl
    } else {
        (r.un + cr).max(u_star + c_star)
    };
    if !(s_left.is_finite() && s_right.is_finite()) {
        return Err(Error::NonFiniteSpeed);
    }
    Ok((s_left, s_right))
}

fn hll_frame(l: &Frame, r: &Frame, phys: &Physics, h_ref: f64) -> Result<([f64; 3], f64, f64)> {
    let (sl, sr) = hll_speeds(l, r, phys)?;
    let fl = l.flux(phys.g, h_ref);
    let fr = r.flux(phys.g, h_ref);
    let out = if sl >= 0.0 {
        fl
    } else if sr <= 0.0 {
        fr
    } else {
        let ul = l.conserved();
        let ur = r.conserved();
        let mut f = [0.0; 3];
        for k in 0..3 {
            f[k] = (sr * fl[k] - sl * fr[k] + sl * sr * (ur[k] - ul[k])) / (sr - sl);
        }
        f
    };
    Ok((out, sl, sr))
}

fn hllc_frame(l: &Frame, r: &Frame, phys: &Physics, h_ref: f64) -> Result<[f64; 3]> {
    let (mut f, sl, sr) = hll_frame(l, r, phys, h_ref)?;
    if sl >= 0.0 || sr <= 0.0 {
        return Ok(f);
    }
    let num = sl * r.h * (r.un - sr) - sr * l.h * (l.un - sl);
    let den = r.h * (r.un - sr) - l.h * (l.un - sl);
    let sm = num / den;
    f[2] = if sm >= 0.0 { l.ut * f[0] } else { r.ut * f[0] };
    Ok(f)
}

fn llf_frame(l: &Frame, r: &Frame, phys: &Physics, h_ref: f64) -> [f64; 3] {
    let g = phys.g;
    let mut s = (l.un.abs() + l.celerity(g)).max(r.un.abs() + r.celerity(g));
    if l.h < phys.dry_depth || r.h < phys.dry_depth || phys.wet_dry {
        s += LLF_WET_DRY_FACTOR * (g * l.h.max(r.h)).sqrt();
    }
    let fl = l.flux(g, h_ref);
    let fr = r.flux(g, h_ref);
    let ul = l.conserved();
    let ur = r.conserved();
    let mut f = [0.0; 3];
    for k in 0..3 {
        f[k] = 0.5 * (fl[k] + fr[k] - s * (ur[k] - ul[k]));
    }
    f
}

/// Eigen-decomposition of the Roe matrix between two wet states, in the edge
/// frame `(h, h u_n, h u_t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoeWaves {
    pub speeds: [f64; 3],
    pub strengths: [f64; 3],
    pub vectors: [[f64; 3]; 3],
}

fn roe_waves_frame(l: &Frame, r: &Frame, g: f64) -> RoeWaves {
    let wl = l.h.sqrt();
    let wr = r.h.sqrt();
    let un = (wl * l.un + wr * r.un) / (wl + wr);
    let ut = (wl * l.ut + wr * r.ut) / (wl + wr);
    let c = (0.5 * g * (l.h + r.h)).sqrt();
    let ul = l.conserved();
    let ur = r.conserved();
    let dh = ur[0] - ul[0];
    let dqn = ur[1] - ul[1];
    let dqt = ur[2] - ul[2];
    RoeWaves {
        speeds: [un - c, un, un + c],
        strengths: [
            ((un + c) * dh - dqn) / (2.0 * c),
            dqt - ut * dh,
            (dqn - (un - c) * dh) / (2.0 * c),
        ],
        vectors: [[1.0, un - c, ut], [0.0, 0.0, 1.0], [1.0, un + c, ut]],
    }
}

/// Harten's entropy fix `Q(x)`.
pub fn roe_entropy_fix(x: f64, eps_f: f64) -> f64 {
    if x.abs() < 2.0 * eps_f {
        x * x / (4.0 * eps_f) + eps_f
    } else {
        x.abs()
    }
}

fn roe_frame(l: &Frame, r: &Frame, phys: &Physics, h_ref: f64) -> Result<[f64; 3]> {
    if l.h < phys.dry_depth || r.h < phys.dry_depth || phys.wet_dry {
        return Err(Error::DryStateUnsupported(FluxKind::Roe));
    }
    let waves = roe_waves_frame(l, r, phys.g);
    let fl = l.flux(phys.g, h_ref);
    let fr = r.flux(phys.g, h_ref);
    let mut f = [0.0; 3];
    for k in 0..3 {
        let diss: f64 = (0..3)
            .map(|w| {
                roe_entropy_fix(waves.speeds[w], ROE_ENTROPY_FIX)
                    * waves.strengths[w]
                    * waves.vectors[w][k]
            })
            .sum();
        f[k] = 0.5 * (fl[k] + fr[k] - diss);
    }
    Ok(f)
}

/// Numerical flux in the edge frame relative to the reference pressure of `h_ref`.
fn frame_flux(kind: FluxKind, l: &Frame, r: &Frame, phys: &Physics, h_ref: f64) -> Result<[f64; 3]> {
    if kind != FluxKind::Roe && l.h < phys.dry_depth && r.h < phys.dry_depth {
        let p = -0.5 * phys.g * h_ref * h_ref;
        return Ok([0.0, p, 0.0]);
    }
    match kind {
        FluxKind::Hll => hll_frame(l, r, phys, h_ref).map(|(f, _, _)| f),
        FluxKind::Hllc => hllc_frame(l, r, phys, h_ref),
        FluxKind::Llf => Ok(llf_frame(l, r, phys, h_ref)),
        FluxKind::Roe => roe_frame(l, r, phys, h_ref),
    }
}

/// Numerical flux `F̂_n(U_-, U_+)` of the given family.
pub fn numerical_flux(
    kind: FluxKind,
    left: &State,
    right: &State,
    n: [f64; 2],
    phys: &Physics,
) -> Result<FluxVector> {
    let l = Frame::from_state(left, n, phys.dry_depth);
    let r = Frame::from_state(right, n, phys.dry_depth);
    frame_flux(kind, &l, &r, phys, 0.0).map(|f| rotate_back(f, n))
}

pub fn flux_hll(left: &State, right: &State, n: [f64; 2], phys: &Physics) -> Result<FluxVector> {
    numerical_flux(FluxKind::Hll, left, right, n, phys)
}

pub fn flux_hllc(left: &State, right: &State, n: [f64; 2], phys: &Physics) -> Result<FluxVector> {
    numerical_flux(FluxKind::Hllc, left, right, n, phys)
}

pub fn flux_llf(left: &State, right: &State, n: [f64; 2], phys: &Physics) -> Result<FluxVector> {
    numerical_flux(FluxKind::Llf, left, right, n, phys)
}

pub fn flux_roe(left: &State, right: &State, n: [f64; 2], phys: &Physics) -> Result<FluxVector> {
    numerical_flux(FluxKind::Roe, left, right, n, phys)
}

/// Roe-matrix waves between two states, expressed in the edge frame.
pub fn roe_decomposition(left: &State, right: &State, n: [f64; 2], phys: &Physics) -> Result<RoeWaves> {
    let l = Frame::from_state(left, n, phys.dry_depth);
    let r = Frame::from_state(right, n, phys.dry_depth);
    if l.h < phys.dry_depth || r.h < phys.dry_depth || phys.wet_dry {
        return Err(Error::DryStateUnsupported(FluxKind::Roe));
    }
    Ok(roe_waves_frame(&l, &r, phys.g))
}

/// Wave speed bound used by the LLF flux (exposed for analytic Jacobian checks).
pub fn llf_speed(left: &State, right: &State, n: [f64; 2], phys: &Physics) -> f64 {
    let l = Frame::from_state(left, n, phys.dry_depth);
    let r = Frame::from_state(right, n, phys.dry_depth);
    let mut s = (l.un.abs() + l.celerity(phys.g)).max(r.un.abs() + r.celerity(phys.g));
    if l.h < phys.dry_depth || r.h < phys.dry_depth || phys.wet_dry {
        s += LLF_WET_DRY_FACTOR * (phys.g * l.h.max(r.h)).sqrt();
    }
    s
}

/// Both one-sided totals of an interior interface: the flux minus the
/// interface source as seen from cell `i` (normal `n`) and from cell `j`
/// (normal `-n`). Neither is scaled by the edge length.
pub(crate) fn interface_totals(
    kind: FluxKind,
    ui: &State,
    uj: &State,
    zi: f64,
    zj: f64,
    n: [f64; 2],
    phys: &Physics,
) -> Result<(FluxVector, FluxVector)> {
    let zmax = zi.max(zj);
    let hl = (ui.h + zi - zmax).max(0.0);
    let hr = (uj.h + zj - zmax).max(0.0);
    let (ul, vl) = ui.velocity(phys.dry_depth);
    let (ur, vr) = uj.velocity(phys.dry_depth);
    let l = Frame::from_velocity(hl, ul, vl, n, phys.dry_depth);
    let r = Frame::from_velocity(hr, ur, vr, n, phys.dry_depth);
    let mut f = frame_flux(kind, &l, &r, phys, hl)?;
    let from_i = rotate_back(f, n);
    f[1] -= 0.5 * phys.g * (hr - hl) * (hr + hl);
    let from_j = -rotate_back(f, n);
    Ok((from_i, from_j))
}

/// Total interface flux `F̂_n(U_-, U_+) - S(h_-)` seen from cell `i`.
pub fn total_interface_flux(
    ui: &State,
    uj: &State,
    zi: f64,
    zj: f64,
    n: [f64; 2],
    kind: FluxKind,
    phys: &Physics,
) -> Result<FluxVector> {
    interface_totals(kind, ui, uj, zi, zj, n, phys).map(|(fi, _)| fi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    SubcriticalInflow,
    SubcriticalOutflow,
    SupercriticalInflow,
    SupercriticalOutflow,
    SlipWall,
    ReflectiveWall,
    /// Picks one of the four open-boundary kinds from the interior Froude
    /// number and the sign of the normal velocity.
    AutoOpen,
}

impl fmt::Display for BoundaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundaryKind::SubcriticalInflow => "subcritical_inflow",
            BoundaryKind::SubcriticalOutflow => "subcritical_outflow",
            BoundaryKind::SupercriticalInflow => "supercritical_inflow",
            BoundaryKind::SupercriticalOutflow => "supercritical_outflow",
            BoundaryKind::SlipWall => "slip_wall",
            BoundaryKind::ReflectiveWall => "reflective_wall",
            BoundaryKind::AutoOpen => "auto_open",
        };
        f.write_str(s)
    }
}

/// Boundary condition of one boundary segment.
///
/// `discharge` is the prescribed inflow discharge per unit width, `h·(-u_n)`
/// with `n` the outward normal, so it is positive for flow entering the
/// domain. `tangential_velocity` defaults to zero where it is prescribed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub kind: BoundaryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discharge: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tangential_velocity: Option<f64>,
}

impl BoundarySpec {
    fn bare(kind: BoundaryKind) -> Self {
        BoundarySpec {
            kind,
            depth: None,
            discharge: None,
            tangential_velocity: None,
        }
    }

    pub fn subcritical_inflow(discharge: f64) -> Self {
        BoundarySpec {
            discharge: Some(discharge),
            ..Self::bare(BoundaryKind::SubcriticalInflow)
        }
    }

    pub fn subcritical_outflow(depth: f64) -> Self {
        BoundarySpec {
            depth: Some(depth),
            ..Self::bare(BoundaryKind::SubcriticalOutflow)
        }
    }

    pub fn supercritical_inflow(depth: f64, discharge: f64) -> Self {
        BoundarySpec {
            depth: Some(depth),
            discharge: Some(discharge),
            ..Self::bare(BoundaryKind::SupercriticalInflow)
        }
    }

    pub fn supercritical_outflow() -> Self {
        Self::bare(BoundaryKind::SupercriticalOutflow)
    }

    pub fn slip_wall() -> Self {
        Self::bare(BoundaryKind::SlipWall)
    }

    pub fn reflective_wall() -> Self {
        Self::bare(BoundaryKind::ReflectiveWall)
    }

    pub fn auto_open(depth: Option<f64>, discharge: Option<f64>) -> Self {
        BoundarySpec {
            depth,
            discharge,
            ..Self::bare(BoundaryKind::AutoOpen)
        }
    }

    /// Checks that exactly the data each kind needs is present and sane.
    pub fn validate(&self) -> Result<()> {
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Boundary(format!("{} requires {what}", self.kind)))
            }
        };
        if let Some(h) = self.depth {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::Boundary(format!("prescribed depth must be positive, got {h}")));
            }
        }
        if let Some(q) = self.discharge {
            if !q.is_finite() {
                return Err(Error::Boundary("prescribed discharge is not finite".into()));
            }
        }
        match self.kind {
            BoundaryKind::SubcriticalInflow => need(self.discharge.is_some(), "a discharge"),
            BoundaryKind::SubcriticalOutflow => need(self.depth.is_some(), "a depth"),
            BoundaryKind::SupercriticalInflow => {
                need(self.depth.is_some() && self.discharge.is_some(), "a depth and a discharge")
            }
            BoundaryKind::AutoOpen => {
                need(self.depth.is_some() || self.discharge.is_some(), "a depth or a discharge")
            }
            BoundaryKind::SupercriticalOutflow | BoundaryKind::SlipWall | BoundaryKind::ReflectiveWall => {
                need(
                    self.depth.is_none() && self.discharge.is_none() && self.tangential_velocity.is_none(),
                    "no prescribed data",
                )
            }
        }
    }

    /// The concrete kind applied to the given interior state.
    pub fn resolve(&self, interior: &State, n: [f64; 2], phys: &Physics) -> BoundaryKind {
        if self.kind != BoundaryKind::AutoOpen {
            return self.kind;
        }
        let f = Frame::from_state(interior, n, phys.dry_depth);
        let subcritical = interior.froude(phys) < 1.0;
        let inflow = f.un < 0.0;
        match (inflow, subcritical) {
            (true, true) => {
                if self.discharge.is_some() {
                    BoundaryKind::SubcriticalInflow
                } else {
                    BoundaryKind::SubcriticalOutflow
                }
            }
            (true, false) => match (self.depth, self.discharge) {
                (Some(_), Some(_)) => BoundaryKind::SupercriticalInflow,
                (None, Some(_)) => BoundaryKind::SubcriticalInflow,
                _ => BoundaryKind::SubcriticalOutflow,
            },
            // A discharge-only boundary keeps driving its inflow even while the
            // interior is at rest or briefly flows outward.
            (false, true) => match (self.depth, self.discharge) {
                (Some(_), _) => BoundaryKind::SubcriticalOutflow,
                (None, Some(_)) => BoundaryKind::SubcriticalInflow,
                (None, None) => BoundaryKind::SupercriticalOutflow,
            },
            (false, false) => BoundaryKind::SupercriticalOutflow,
        }
    }
}

/// Solves `2 sqrt(g h) - q / h = r` for the ghost depth of a subcritical
/// inflow boundary. The left-hand side is strictly increasing in `h`.
fn subcritical_inflow_depth(q: f64, invariant: f64, h_interior: f64, phys: &Physics) -> Result<f64> {
    let g = phys.g;
    let f = |h: f64| 2.0 * (g * h).sqrt() - q / h - invariant;
    let df = |h: f64| (g / h).sqrt() + q / (h * h);
    let mut lo = phys.dry_depth;
    let mut hi = 10.0 * h_interior.max(0.0) + 10.0;
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return Err(Error::Boundary(format!(
            "no subcritical inflow depth for discharge {q} and invariant {invariant}"
        )));
    }
    let mut h = h_interior.clamp(lo, hi);
    if h <= lo {
        h = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let v = f(h);
        if v == 0.0 {
            return Ok(h);
        }
        if v < 0.0 {
            lo = h;
        } else {
            hi = h;
        }
        let mut next = h - v / df(h);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - h).abs() <= 1e-15 * h.max(1.0) {
            return Ok(next);
        }
        h = next;
    }
    Ok(h)
}

/// Ghost-cell state across a boundary edge with outward unit normal `n`.
pub fn ghost_state(interior: &State, spec: &BoundarySpec, n: [f64; 2], phys: &Physics) -> Result<State> {
    let g = phys.g;
    let f = Frame::from_state(interior, n, phys.dry_depth);
    let invariant = f.un + 2.0 * f.celerity(g);
    let (h, un, ut) = match spec.resolve(interior, n, phys) {
        BoundaryKind::SubcriticalInflow => {
            let q = spec
                .discharge
                .ok_or_else(|| Error::Boundary("subcritical inflow without discharge".into()))?;
            let h = subcritical_inflow_depth(q, invariant, f.h, phys)?;
            (h, -q / h, spec.tangential_velocity.unwrap_or(0.0))
        }
        BoundaryKind::SubcriticalOutflow => {
            let h = spec
                .depth
                .ok_or_else(|| Error::Boundary("subcritical outflow without depth".into()))?;
            (h, invariant - 2.0 * (g * h).sqrt(), f.ut)
        }
        BoundaryKind::SupercriticalInflow => {
            let (h, q) = spec
                .depth
                .zip(spec.discharge)
                .ok_or_else(|| Error::Boundary("supercritical inflow needs depth and discharge".into()))?;
            (h, -q / h, spec.tangential_velocity.unwrap_or(0.0))
        }
        BoundaryKind::SupercriticalOutflow => return Ok(*interior),
        BoundaryKind::SlipWall => (f.h, 0.0, f.ut),
        BoundaryKind::ReflectiveWall => (f.h, -f.un, f.ut),
        BoundaryKind::AutoOpen => unreachable!("resolve never returns auto_open"),
    };
    Ok(State::from_normal_frame(h, un, ut, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const PHYS: Physics = Physics {
        g: 9.81,
        dry_depth: DRY_DEPTH,
        wet_dry: false,
    };

    #[test]
    fn physical_flux_1d() {
        let f = physical_flux_normal(&State::new_1d(1.0, 1.0), [1.0, 0.0], &PHYS);
        assert_relative_eq!(f[0], 1.0);
        assert_relative_eq!(f[1], 5.905, epsilon = 1e-14);
        assert_eq!(f[2], 0.0);
        assert_eq!(physical_flux_normal(&State::DRY, [0.6, 0.8], &PHYS), FluxVector::ZERO);
    }

    #[test]
    fn reconstruction_cases() {
        let p = hydrostatic_reconstruct(&State::new_1d(1.0, 0.0), &State::new_1d(0.5, 0.0), 0.0, 0.5, DRY_DEPTH);
        assert_relative_eq!(p.left.h, 0.5);
        assert_relative_eq!(p.right.h, 0.5);
        let p = hydrostatic_reconstruct(&State::new_1d(0.2, 0.0), &State::new_1d(0.0, 0.0), 0.0, 0.5, DRY_DEPTH);
        assert_eq!(p.left.h, 0.0);
        // velocity is carried over, momentum rebuilt from the clipped depth
        let p = hydrostatic_reconstruct(&State::new_1d(1.0, 2.0), &State::new_1d(1.0, 1.0), 0.0, 0.25, DRY_DEPTH);
        assert_relative_eq!(p.left.hu / p.left.h, 2.0);
        assert_relative_eq!(p.left.h, 0.75);
    }

    #[test]
    fn source_term() {
        let s = interface_source(1.0, [1.0, 0.0], 9.81);
        assert_eq!(s, FluxVector([0.0, 4.905, 0.0]));
        assert_eq!(interface_source(0.0, [0.0, 1.0], 9.81), FluxVector::ZERO);
    }

    #[test]
    fn supercritical_left_state_is_upwinded() {
        let l = State::new_1d(1.0, 10.0);
        let r = State::new_1d(0.8, 7.0);
        let f = flux_hll(&l, &r, [1.0, 0.0], &PHYS).unwrap();
        assert_eq!(f, physical_flux_normal(&l, [1.0, 0.0], &PHYS));
    }

    #[test]
    fn llf_wet_dry_speed() {
        let s = llf_speed(&State::new_1d(1.0, 0.0), &State::DRY, [1.0, 0.0], &PHYS);
        assert_relative_eq!(s, 9.81f64.sqrt() * 1.03, epsilon = 1e-14);
        let f = flux_llf(&State::DRY, &State::DRY, [1.0, 0.0], &PHYS).unwrap();
        assert_eq!(f.l1_norm(), 0.0);
    }

    #[test]
    fn entropy_fix_values() {
        assert_relative_eq!(roe_entropy_fix(0.0, 0.4), 0.4);
        assert_relative_eq!(roe_entropy_fix(1.0, 0.4), 1.0);
        assert_relative_eq!(roe_entropy_fix(-1.0, 0.4), 1.0);
        // continuous at |x| = 2 eps
        assert_relative_eq!(roe_entropy_fix(0.8 - 1e-12, 0.4), 0.8, epsilon = 1e-11);
    }

    #[test]
    fn roe_rejects_dry() {
        let err = flux_roe(&State::new_1d(1.0, 0.0), &State::DRY, [1.0, 0.0], &PHYS).unwrap_err();
        assert!(matches!(err, Error::DryStateUnsupported(FluxKind::Roe)));
    }

    #[test]
    fn flat_bed_total_flux_is_flux_minus_pressure() {
        let ui = State::new_1d(1.2, 0.7);
        let uj = State::new_1d(0.9, 0.4);
        let n = [1.0, 0.0];
        let total = total_interface_flux(&ui, &uj, 0.3, 0.3, n, FluxKind::Hll, &PHYS).unwrap();
        let f = flux_hll(&ui, &uj, n, &PHYS).unwrap();
        let expect = f - interface_source(1.2, n, PHYS.g);
        assert!(total.max_abs_diff(&expect) < 1e-13);
    }

    #[test]
    fn ghost_copy_and_walls() {
        let ui = State::new_1d(0.3, 0.54);
        let g = ghost_state(&ui, &BoundarySpec::supercritical_outflow(), [1.0, 0.0], &PHYS).unwrap();
        assert_eq!(g, ui);

        // u_n = 2, u_t = 1 on a tilted wall
        let n = [0.6, 0.8];
        let (un, ut) = (2.0, 1.0);
        let ui = State::from_normal_frame(0.7, un, ut, n);
        let g = ghost_state(&ui, &BoundarySpec::reflective_wall(), n, &PHYS).unwrap();
        let (u, v) = g.velocity(DRY_DEPTH);
        assert_relative_eq!(g.h, 0.7);
        assert_relative_eq!(u * n[0] + v * n[1], -2.0, epsilon = 1e-13);
        assert_relative_eq!(-u * n[1] + v * n[0], 1.0, epsilon = 1e-13);

        let g = ghost_state(&ui, &BoundarySpec::slip_wall(), n, &PHYS).unwrap();
        let (u, v) = g.velocity(DRY_DEPTH);
        assert!((u * n[0] + v * n[1]).abs() < 1e-14);
        assert_relative_eq!(-u * n[1] + v * n[0], 1.0, epsilon = 1e-13);
    }

    #[test]
    fn subcritical_outflow_keeps_outgoing_invariant() {
        let ui = State::new_1d(0.8, 0.6);
        let n = [1.0, 0.0];
        let g = ghost_state(&ui, &BoundarySpec::subcritical_outflow(0.75), n, &PHYS).unwrap();
        assert_eq!(g.h, 0.75);
        let r_ghost = g.hu / g.h + 2.0 * (9.81 * g.h).sqrt();
        let r_int = 0.6 / 0.8 + 2.0 * (9.81f64 * 0.8).sqrt();
        assert!((r_ghost - r_int).abs() < 1e-12);
    }

    #[test]
    fn subcritical_inflow_solves_discharge_and_invariant() {
        let ui = State::new_1d(1.1, 0.9);
        let n = [-1.0, 0.0];
        let g = ghost_state(&ui, &BoundarySpec::subcritical_inflow(1.0), n, &PHYS).unwrap();
        let un_g = -g.hu / g.h;
        assert!((g.h * -un_g - 1.0).abs() < 1e-12);
        let r_int = -0.9 / 1.1 + 2.0 * (9.81f64 * 1.1).sqrt();
        assert!((un_g + 2.0 * (9.81 * g.h).sqrt() - r_int).abs() < 1e-12);
    }

    #[test]
    fn supercritical_inflow_prescribes_everything() {
        let q = 2.5 * 9.81f64.sqrt();
        let spec = BoundarySpec::supercritical_inflow(1.0, q);
        let g = ghost_state(&State::new(0.4, 0.1, 0.3), &spec, [-1.0, 0.0], &PHYS).unwrap();
        assert_relative_eq!(g.h, 1.0);
        assert_relative_eq!(g.hu, q, epsilon = 1e-14);
        assert_eq!(g.hv, 0.0);
    }

    #[test]
    fn auto_open_dispatch() {
        let spec = BoundarySpec::auto_open(Some(1.0), Some(1.0));
        let west = [-1.0, 0.0];
        let east = [1.0, 0.0];
        let u = State::new_1d(1.0, 1.0);
        assert_eq!(spec.resolve(&u, west, &PHYS), BoundaryKind::SubcriticalInflow);
        assert_eq!(spec.resolve(&u, east, &PHYS), BoundaryKind::SubcriticalOutflow);
        let fast = State::new_1d(0.3, 3.0);
        assert_eq!(spec.resolve(&fast, east, &PHYS), BoundaryKind::SupercriticalOutflow);
        assert_eq!(spec.resolve(&fast, west, &PHYS), BoundaryKind::SupercriticalInflow);
        let fast_in = State::new_1d(0.3, -3.0);
        assert_eq!(spec.resolve(&fast_in, east, &PHYS), BoundaryKind::SupercriticalInflow);
        let inflow_only = BoundarySpec::auto_open(None, Some(0.1));
        let still = State::new(0.2, 0.0, 0.0);
        assert_eq!(inflow_only.resolve(&still, west, &PHYS), BoundaryKind::SubcriticalInflow);
    }

    #[test]
    fn boundary_validation() {
        assert!(BoundarySpec::subcritical_outflow(0.3).validate().is_ok());
        let missing = BoundarySpec {
            depth: None,
            ..BoundarySpec::subcritical_outflow(0.3)
        };
        assert!(missing.validate().is_err());
        assert!(BoundarySpec::subcritical_outflow(-1.0).validate().is_err());
        let walled = BoundarySpec {
            depth: Some(1.0),
            ..BoundarySpec::slip_wall()
        };
        assert!(walled.validate().is_err());
    }

    #[test]
    fn flux_kind_parsing() {
        for k in FluxKind::ALL {
            assert_eq!(k.name().parse::<FluxKind>().unwrap(), k);
        }
        assert!("godunov".parse::<FluxKind>().is_err());
    }
}

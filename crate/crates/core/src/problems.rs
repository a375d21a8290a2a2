//! Declarative problem specifications and the built-in catalog of benchmark
//! flows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::mesh::{build_channel_2d, build_uniform_1d, BoundaryTag, ChannelSpec, MeshLevel};
use crate::physics::{BoundaryKind, BoundarySpec, FluxKind, Physics, State, DRY_DEPTH, GRAVITY};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Geometry {
    Interval { x_min: f64, x_max: f64 },
    Channel { channel: ChannelSpec },
}

/// Bed elevation: an expression of `x` and `y`, or a 1D table interpolated
/// piecewise linearly (constant beyond its ends).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bed {
    Expr(Expr),
    Table { x: Vec<f64>, z: Vec<f64> },
}

impl Bed {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Bed::Expr(e) => e.eval(x, y, 0.0),
            Bed::Table { x: xs, z } => {
                if x <= xs[0] {
                    return z[0];
                }
                let last = xs.len() - 1;
                if x >= xs[last] {
                    return z[last];
                }
                let k = xs.partition_point(|&v| v <= x) - 1;
                let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
                z[k] + t * (z[k + 1] - z[k])
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Bed::Expr(e) => {
                if e.uses("z") {
                    return Err(Error::Config("the bed expression cannot refer to z".into()));
                }
            }
            Bed::Table { x, z } => {
                if x.len() < 2 || x.len() != z.len() {
                    return Err(Error::Config("a bed table needs matching x and z with at least 2 points".into()));
                }
                if x.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config("bed table abscissae must increase strictly".into()));
                }
                if z.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("bed table contains non-finite values".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boundaries {
    pub west: BoundarySpec,
    pub east: BoundarySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub south: Option<BoundarySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub north: Option<BoundarySpec>,
}

impl Boundaries {
    pub fn get(&self, tag: BoundaryTag) -> Option<&BoundarySpec> {
        match tag {
            BoundaryTag::West => Some(&self.west),
            BoundaryTag::East => Some(&self.east),
            BoundaryTag::South => self.south.as_ref(),
            BoundaryTag::North => self.north.as_ref(),
        }
    }
}

/// Initial data as expressions of `x`, `y` and the bed elevation `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub h: Expr,
    pub hu: Expr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hv: Option<Expr>,
}

/// Exact or reference solution attached to a problem.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    #[default]
    None,
    /// Smooth subcritical flow of unit discharge `discharge` with far-field
    /// depth `depth` over a flat far field.
    Subcritical { discharge: f64, depth: f64 },
    /// Flow over a single bump, critical at the crest, optionally with a
    /// stationary hydraulic jump matching `depth_downstream` at the outlet.
    Transcritical {
        discharge: f64,
        depth_downstream: f64,
        shock: bool,
    },
    /// Water at rest with free surface `level`.
    LakeAtRest { level: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CycleKind {
    V,
    W,
}

impl CycleKind {
    pub fn gamma(&self) -> usize {
        match self {
            CycleKind::V => 1,
            CycleKind::W => 2,
        }
    }
}

impl std::str::FromStr for CycleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "v" => Ok(CycleKind::V),
            "w" => Ok(CycleKind::W),
            other => Err(Error::Config(format!("unknown cycle '{other}'"))),
        }
    }
}

/// Solver settings a problem is normally run with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunDefaults {
    pub flux: FluxKind,
    pub cycle: CycleKind,
    pub levels: usize,
    pub n_mg: usize,
    pub eps_p: f64,
    pub nx: usize,
    #[serde(default = "one")]
    pub ny: usize,
}

fn one() -> usize {
    1
}

fn default_gravity() -> f64 {
    GRAVITY
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub geometry: Geometry,
    pub bed: Bed,
    pub boundaries: Boundaries,
    pub initial: InitialData,
    #[serde(default)]
    pub reference: Reference,
    #[serde(default = "default_gravity")]
    pub g: f64,
    /// The problem has wet/dry fronts: the LLF wave speed is augmented on
    /// every edge, not only on edges with a dry side.
    #[serde(default)]
    pub wet_dry: bool,
    pub defaults: RunDefaults,
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        match self.geometry {
            Geometry::Interval { .. } => 1,
            Geometry::Channel { .. } => 2,
        }
    }

    pub fn physics(&self) -> Physics {
        Physics {
            g: self.g,
            dry_depth: DRY_DEPTH,
            wet_dry: self.wet_dry,
        }
    }

    pub fn bed_at(&self, x: f64, y: f64) -> f64 {
        self.bed.eval(x, y)
    }

    /// Finest mesh with `nx` (and in 2D `ny`) cells.
    pub fn build_mesh(&self, nx: usize, ny: usize) -> Result<MeshLevel> {
        match &self.geometry {
            Geometry::Interval { x_min, x_max } => build_uniform_1d(*x_min, *x_max, nx, |x| self.bed_at(x, 0.0)),
            Geometry::Channel { channel } => build_channel_2d(channel, nx, ny, |x, y| self.bed_at(x, y)),
        }
    }

    pub fn boundary(&self, tag: BoundaryTag) -> Result<&BoundarySpec> {
        self.boundaries
            .get(tag)
            .ok_or_else(|| Error::Config(format!("problem '{}' has no {tag} boundary", self.name)))
    }

    /// Admissible initial state at a point with bed elevation `z`.
    pub fn initial_state(&self, x: f64, y: f64, z: f64) -> State {
        let h = self.initial.h.eval(x, y, z).max(0.0);
        let hu = self.initial.hu.eval(x, y, z);
        let hv = match (&self.initial.hv, self.dim()) {
            (Some(e), 2) => e.eval(x, y, z),
            _ => 0.0,
        };
        State::new(h, hu, hv).clamped(DRY_DEPTH)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g.is_finite() && self.g > 0.0) {
            return Err(Error::Config(format!("gravity must be positive, got {}", self.g)));
        }
        self.bed.validate()?;
        if self.dim() == 2 && matches!(self.bed, Bed::Table { .. }) {
            return Err(Error::Config("bed tables are only supported in 1D".into()));
        }
        let b = &self.boundaries;
        match self.dim() {
            1 => {
                if b.south.is_some() || b.north.is_some() {
                    return Err(Error::Config("1D problems only have west and east boundaries".into()));
                }
            }
            _ => {
                if b.south.is_none() || b.north.is_none() {
                    return Err(Error::Config("2D problems need south and north boundaries".into()));
                }
            }
        }
        for tag in BoundaryTag::ALL {
            if let Some(spec) = b.get(tag) {
                spec.validate()
                    .map_err(|e| Error::Config(format!("{tag} boundary: {e}")))?;
                if spec.kind == BoundaryKind::SupercriticalInflow {
                    let (h, q) = (spec.depth.unwrap(), spec.discharge.unwrap());
                    let fr = (q / h).abs() / (self.g * h).sqrt();
                    if fr < 1.0 {
                        return Err(Error::Regime(format!(
                            "{tag} supercritical inflow has Froude number {fr:.3} < 1"
                        )));
                    }
                }
            }
        }
        let d = &self.defaults;
        if d.nx < 2 || d.ny < 1 || d.n_mg < 1 || !(d.eps_p > 0.0) {
            return Err(Error::Config("invalid run defaults".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<ProblemSpec> {
        let spec: ProblemSpec = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Reads and validates a problem file.
pub fn load_custom(path: &Path) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path)?;
    ProblemSpec::from_toml(&text)
}

fn ex(s: &str) -> Expr {
    Expr::parse(s).expect("catalog expressions are valid")
}

fn open_1d(west: BoundarySpec, east: BoundarySpec) -> Boundaries {
    Boundaries {
        west,
        east,
        south: None,
        north: None,
    }
}

fn defaults(flux: FluxKind, cycle: CycleKind, n_mg: usize, eps_p: f64, nx: usize, ny: usize) -> RunDefaults {
    RunDefaults {
        flux,
        cycle,
        levels: 3,
        n_mg,
        eps_p,
        nx,
        ny,
    }
}

const BUMP: &str = "max(0.2 - 0.05*(x-10)^2, 0)";

pub fn example1() -> ProblemSpec {
    ProblemSpec {
        name: "ex1".into(),
        description: "smooth subcritical flow over two Gaussian bumps".into(),
        geometry: Geometry::Interval {
            x_min: -10.0,
            x_max: 10.0,
        },
        bed: Bed::Expr(ex("0.2*exp(-(x+1)^2/2) + 0.3*exp(-(x-1.5)^2)")),
        boundaries: open_1d(
            BoundarySpec::auto_open(Some(1.0), Some(1.0)),
            BoundarySpec::auto_open(Some(1.0), Some(1.0)),
        ),
        initial: InitialData {
            h: ex("1 - z"),
            hu: ex("1"),
            hv: None,
        },
        reference: Reference::Subcritical {
            discharge: 1.0,
            depth: 1.0,
        },
        g: GRAVITY,
        wet_dry: false,
        defaults: defaults(FluxKind::Hll, CycleKind::V, 2, 0.2, 512, 1),
    }
}

fn example2(name: &str, q: f64, h_out: f64, shock: bool) -> ProblemSpec {
    ProblemSpec {
        name: name.into(),
        description: if shock {
            "transcritical flow over a bump with a stationary hydraulic jump".into()
        } else {
            "transcritical flow over a bump without a shock".into()
        },
        geometry: Geometry::Interval {
            x_min: 0.0,
            x_max: 25.0,
        },
        bed: Bed::Expr(ex(BUMP)),
        boundaries: open_1d(
            BoundarySpec::auto_open(None, Some(q)),
            BoundarySpec::auto_open(Some(h_out), None),
        ),
        initial: InitialData {
            h: ex(&format!("{h_out:?} - z")),
            hu: ex(&format!("{q:?}")),
            hv: None,
        },
        reference: Reference::Transcritical {
            discharge: q,
            depth_downstream: h_out,
            shock,
        },
        g: GRAVITY,
        wet_dry: false,
        defaults: defaults(FluxKind::Hll, CycleKind::V, 2, 0.2, 512, 1),
    }
}

pub fn example2_i() -> ProblemSpec {
    example2("ex2-i", 1.53, 0.66, false)
}

pub fn example2_ii() -> ProblemSpec {
    example2("ex2-ii", 0.18, 0.33, true)
}

pub fn example3() -> ProblemSpec {
    ProblemSpec {
        name: "ex3".into(),
        description: "draining to a lake at rest with a dry bump".into(),
        geometry: Geometry::Interval {
            x_min: 0.0,
            x_max: 20.0,
        },
        bed: Bed::Expr(ex(BUMP)),
        boundaries: open_1d(BoundarySpec::subcritical_outflow(0.1), BoundarySpec::subcritical_outflow(0.1)),
        initial: InitialData {
            h: ex("0.22 - z"),
            hu: ex("0"),
            hv: None,
        },
        reference: Reference::LakeAtRest { level: 0.1 },
        g: GRAVITY,
        wet_dry: true,
        defaults: defaults(FluxKind::Llf, CycleKind::W, 2, 0.2, 512, 1),
    }
}

fn walls(spec: BoundarySpec) -> (Option<BoundarySpec>, Option<BoundarySpec>) {
    (Some(spec), Some(spec))
}

fn example4(name: &str, angle_deg: f64, end: Option<f64>) -> ProblemSpec {
    let q = 2.5 * GRAVITY.sqrt();
    let (south, north) = walls(BoundarySpec::slip_wall());
    ProblemSpec {
        name: name.into(),
        description: format!("supercritical flow through a channel narrowing at {angle_deg} degrees"),
        geometry: Geometry::Channel {
            channel: ChannelSpec::Constricting {
                length: 90.0,
                half_width: 20.0,
                angle_deg,
                start: 10.0,
                end,
            },
        },
        bed: Bed::Expr(ex("0")),
        boundaries: Boundaries {
            west: BoundarySpec::supercritical_inflow(1.0, q),
            east: BoundarySpec::supercritical_outflow(),
            south,
            north,
        },
        initial: InitialData {
            h: ex("1"),
            hu: ex(&format!("{q:?}")),
            hv: Some(ex("0")),
        },
        reference: Reference::None,
        g: GRAVITY,
        wet_dry: false,
        defaults: defaults(FluxKind::Hllc, CycleKind::V, 3, 200.0, 144, 80),
    }
}

pub fn example4_i() -> ProblemSpec {
    example4("ex4-i", 5.0, None)
}

pub fn example4_ii() -> ProblemSpec {
    example4("ex4-ii", 15.0, Some(30.0))
}

/// Cosine-constriction channel with inflow Froude number `f_in`; subcritical
/// inflow data is used below 1 and supercritical above.
pub fn example5(f_in: f64) -> Result<ProblemSpec> {
    if !(f_in > 0.0) || f_in == 1.0 {
        return Err(Error::Config(format!(
            "inflow Froude number must be positive and different from 1, got {f_in}"
        )));
    }
    let h0 = 1.0;
    let q = h0 * f_in * (GRAVITY * h0).sqrt();
    let west = if f_in < 1.0 {
        BoundarySpec::subcritical_inflow(q)
    } else {
        BoundarySpec::supercritical_inflow(h0, q)
    };
    let (south, north) = walls(BoundarySpec::slip_wall());
    Ok(ProblemSpec {
        name: format!("ex5-f{f_in}"),
        description: format!("cosine channel constriction, inflow Froude number {f_in}"),
        geometry: Geometry::Channel {
            channel: ChannelSpec::CosineConstriction {
                length: 3.0,
                w_min: 0.9,
            },
        },
        bed: Bed::Expr(ex("0")),
        boundaries: Boundaries {
            west,
            east: BoundarySpec::auto_open(Some(h0), None),
            south,
            north,
        },
        initial: InitialData {
            h: ex(&format!("{h0:?}")),
            hu: ex(&format!("{q:?}")),
            hv: Some(ex("0")),
        },
        reference: Reference::None,
        g: GRAVITY,
        wet_dry: false,
        defaults: defaults(FluxKind::Hllc, CycleKind::V, 3, 0.2, 96, 32),
    })
}

fn channel_25x10() -> Geometry {
    Geometry::Channel {
        channel: ChannelSpec::Rectangle {
            x_min: 0.0,
            x_max: 25.0,
            y_min: -5.0,
            y_max: 5.0,
        },
    }
}

pub fn example6() -> ProblemSpec {
    let (south, north) = walls(BoundarySpec::reflective_wall());
    ProblemSpec {
        name: "ex6".into(),
        description: "transcritical flow over a round bump".into(),
        geometry: channel_25x10(),
        bed: Bed::Expr(ex("max(0.2 - 0.05*((x-10)^2 + y^2), 0)")),
        boundaries: Boundaries {
            west: BoundarySpec::auto_open(None, Some(1.53)),
            east: BoundarySpec::auto_open(Some(0.52), None),
            south,
            north,
        },
        initial: InitialData {
            h: ex("0.52 - z"),
            hu: ex("1.53"),
            hv: Some(ex("0")),
        },
        reference: Reference::None,
        g: GRAVITY,
        wet_dry: false,
        defaults: defaults(FluxKind::Hllc, CycleKind::V, 3, 2.0, 160, 64),
    }
}

pub fn example7() -> ProblemSpec {
    let (south, north) = walls(BoundarySpec::reflective_wall());
    ProblemSpec {
        name: "ex7".into(),
        description: "channel flow around an emerged hill".into(),
        geometry: channel_25x10(),
        bed: Bed::Expr(ex("max(1.2 - 0.3*((x-10)^2 + y^2), 0)")),
        boundaries: Boundaries {
            west: BoundarySpec::auto_open(None, Some(0.1)),
            east: BoundarySpec::auto_open(Some(0.2), None),
            south,
            north,
        },
        initial: InitialData {
            h: ex("max(0.2 - z, 0)"),
            hu: ex("0"),
            hv: Some(ex("0")),
        },
        reference: Reference::None,
        g: GRAVITY,
        wet_dry: true,
        defaults: defaults(FluxKind::Llf, CycleKind::V, 3, 0.2, 128, 64),
    }
}

/// Uniform flow over a flat bed; the initial data is already the discrete
/// steady state.
pub fn uniform_flow() -> ProblemSpec {
    ProblemSpec {
        name: "uniform".into(),
        description: "uniform subcritical flow over a flat bed".into(),
        geometry: Geometry::Interval {
            x_min: 0.0,
            x_max: 10.0,
        },
        bed: Bed::Expr(ex("0")),
        boundaries: open_1d(BoundarySpec::subcritical_inflow(0.5), BoundarySpec::subcritical_outflow(1.0)),
        initial: InitialData {
            h: ex("1"),
            hu: ex("0.5"),
            hv: None,
        },
        reference: Reference::Subcritical {
            discharge: 0.5,
            depth: 1.0,
        },
        g: GRAVITY,
        wet_dry: false,
        defaults: defaults(FluxKind::Hll, CycleKind::V, 2, 0.2, 64, 1),
    }
}

/// All built-in problems; the cosine-constriction entry uses inflow Froude
/// number 0.5.
pub fn catalog() -> Vec<ProblemSpec> {
    vec![
        example1(),
        example2_i(),
        example2_ii(),
        example3(),
        example4_i(),
        example4_ii(),
        example5(0.5).expect("valid Froude number"),
        example6(),
        example7(),
        uniform_flow(),
    ]
}

/// Looks a problem up by name. `ex5` accepts an optional inflow Froude number
/// suffix, as in `ex5:1.2`.
pub fn by_name(name: &str) -> Result<ProblemSpec> {
    let lower = name.to_ascii_lowercase();
    if let Some(rest) = lower.strip_prefix("ex5") {
        let f = match rest.strip_prefix(':').or_else(|| rest.strip_prefix("-f")) {
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad inflow Froude number in '{name}'")))?,
            None if rest.is_empty() => 0.5,
            None => return Err(Error::Config(format!("unknown problem '{name}'"))),
        };
        return example5(f);
    }
    catalog()
        .into_iter()
        .find(|p| p.name == lower)
        .ok_or_else(|| Error::Config(format!("unknown problem '{name}'")))
}

//! Uniform 1D meshes, structured boundary-fitted quadrilateral meshes for
//! channel geometries, and the agglomerated coarse-level hierarchy.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which side of the computational rectangle a boundary edge lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    West,
    East,
    South,
    North,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 4] = [
        BoundaryTag::West,
        BoundaryTag::East,
        BoundaryTag::South,
        BoundaryTag::North,
    ];
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundaryTag::West => "west",
            BoundaryTag::East => "east",
            BoundaryTag::South => "south",
            BoundaryTag::North => "north",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Neighbor {
    Cell(usize),
    Boundary(BoundaryTag),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub centroid: [f64; 2],
    pub area: f64,
    pub bed: f64,
    pub edges: Vec<usize>,
}

/// An edge with unit normal pointing from `left` to `right` (outward on the
/// boundary).
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub index: usize,
    pub left: usize,
    pub right: Neighbor,
    pub normal: [f64; 2],
    pub length: f64,
    pub midpoint: [f64; 2],
}

/// Fine-to-coarse agglomeration map of a coarse level.
#[derive(Clone, Debug, PartialEq)]
pub struct Agglomeration {
    /// Fine cells making up each coarse cell.
    pub children: Vec<Vec<usize>>,
    /// Coarse cell containing each fine cell.
    pub parent: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshLevel {
    /// 1 or 2.
    pub dim: usize,
    /// Cells per direction; `ny == 1` in 1D.
    pub nx: usize,
    pub ny: usize,
    pub level: usize,
    pub cells: Vec<Cell>,
    pub edges: Vec<Edge>,
    /// Present on every level except the finest.
    pub agglomeration: Option<Agglomeration>,
}

/// Channel outlines for 2D meshes. Walls are given as `y = bottom(x)` and
/// `y = top(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ChannelSpec {
    Rectangle {
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },
    /// Symmetric channel `[0, length]` of half-width `half_width` whose walls
    /// turn inward by `angle_deg` from `start` to `end` (or to the outlet).
    Constricting {
        length: f64,
        half_width: f64,
        angle_deg: f64,
        start: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        end: Option<f64>,
    },
    /// Channel `[0, length]` of unit width narrowed to `w_min` by a cosine
    /// profile of unit length centred at `length / 2`.
    CosineConstriction { length: f64, w_min: f64 },
}

impl ChannelSpec {
    pub fn x_range(&self) -> (f64, f64) {
        match *self {
            ChannelSpec::Rectangle { x_min, x_max, .. } => (x_min, x_max),
            ChannelSpec::Constricting { length, .. } | ChannelSpec::CosineConstriction { length, .. } => {
                (0.0, length)
            }
        }
    }

    /// Bottom and top wall positions at `x`.
    pub fn walls(&self, x: f64) -> (f64, f64) {
        match *self {
            ChannelSpec::Rectangle { y_min, y_max, .. } => (y_min, y_max),
            ChannelSpec::Constricting {
                length,
                half_width,
                angle_deg,
                start,
                end,
            } => {
                let stop = end.unwrap_or(length);
                let run = x.clamp(start, stop) - start;
                let w = half_width - run * angle_deg.to_radians().tan();
                (-w, w)
            }
            ChannelSpec::CosineConstriction { length, w_min } => {
                let w = Self::cosine_width(x - 0.5 * length, w_min);
                (-0.5 * w, 0.5 * w)
            }
        }
    }

    fn cosine_width(s: f64, w_min: f64) -> f64 {
        if s.abs() <= 0.5 {
            1.0 - (1.0 - w_min) * (PI * s).cos().powi(2)
        } else {
            1.0
        }
    }

    pub fn width(&self, x: f64) -> f64 {
        let (b, t) = self.walls(x);
        t - b
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidMesh(m));
        match *self {
            ChannelSpec::Rectangle {
                x_min,
                x_max,
                y_min,
                y_max,
            } => {
                if !(x_max > x_min && y_max > y_min) {
                    return bad(format!("degenerate rectangle [{x_min},{x_max}]x[{y_min},{y_max}]"));
                }
            }
            ChannelSpec::Constricting {
                length,
                half_width,
                start,
                end,
                ..
            } => {
                if !(length > 0.0 && half_width > 0.0 && (0.0..=length).contains(&start)) {
                    return bad("degenerate constricting channel".into());
                }
                if let Some(e) = end {
                    if !(e >= start && e <= length) {
                        return bad(format!("constriction end {e} outside [{start}, {length}]"));
                    }
                }
                if self.width(length) <= 0.0 {
                    return bad("constriction closes the channel".into());
                }
            }
            ChannelSpec::CosineConstriction { length, w_min } => {
                if !(length >= 1.0 && w_min > 0.0 && w_min <= 1.0) {
                    return bad(format!("invalid cosine constriction (length {length}, w_min {w_min})"));
                }
            }
        }
        Ok(())
    }
}

fn polygon_area_centroid(p: &[[f64; 2]]) -> (f64, [f64; 2]) {
    let mut a = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for k in 0..p.len() {
        let [x0, y0] = p[k];
        let [x1, y1] = p[(k + 1) % p.len()];
        let cross = x0 * y1 - x1 * y0;
        a += cross;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    let a = 0.5 * a;
    (a, [cx / (6.0 * a), cy / (6.0 * a)])
}

/// Uniform mesh of `[x_min, x_max]` with the bed sampled at cell centres.
pub fn build_uniform_1d(x_min: f64, x_max: f64, n_cells: usize, bed: impl Fn(f64) -> f64) -> Result<MeshLevel> {
    if n_cells < 2 {
        return Err(Error::InvalidMesh(format!("need at least 2 cells, got {n_cells}")));
    }
    if !(x_max > x_min) {
        return Err(Error::InvalidMesh(format!("empty interval [{x_min}, {x_max}]")));
    }
    let dx = (x_max - x_min) / n_cells as f64;
    let mut cells = Vec::with_capacity(n_cells);
    for i in 0..n_cells {
        let x = x_min + (i as f64 + 0.5) * dx;
        let z = bed(x);
        if !z.is_finite() {
            return Err(Error::InvalidMesh(format!("bed is not finite at x = {x}")));
        }
        cells.push(Cell {
            index: i,
            centroid: [x, 0.0],
            area: dx,
            bed: z,
            edges: vec![i, i + 1],
        });
    }
    let mut edges = Vec::with_capacity(n_cells + 1);
    for k in 0..=n_cells {
        let x = if k == n_cells { x_max } else { x_min + k as f64 * dx };
        let (left, right, normal) = if k == 0 {
            (0, Neighbor::Boundary(BoundaryTag::West), [-1.0, 0.0])
        } else if k == n_cells {
            (n_cells - 1, Neighbor::Boundary(BoundaryTag::East), [1.0, 0.0])
        } else {
            (k - 1, Neighbor::Cell(k), [1.0, 0.0])
        };
        edges.push(Edge {
            index: k,
            left,
            right,
            normal,
            length: 1.0,
            midpoint: [x, 0.0],
        });
    }
    Ok(MeshLevel {
        dim: 1,
        nx: n_cells,
        ny: 1,
        level: 0,
        cells,
        edges,
        agglomeration: None,
    })
}

/// Structured quadrilateral mesh of a channel by transfinite interpolation
/// between its walls. Cell `(ix, iy)` has index `ix * ny + iy`.
pub fn build_channel_2d(
    geometry: &ChannelSpec,
    nx: usize,
    ny: usize,
    bed: impl Fn(f64, f64) -> f64,
) -> Result<MeshLevel> {
    geometry.validate()?;
    if nx < 1 || ny < 1 || nx * ny < 2 {
        return Err(Error::InvalidMesh(format!("need at least 2 cells, got {nx}x{ny}")));
    }
    let (x0, x1) = geometry.x_range();
    let node = |i: usize, j: usize| -> [f64; 2] {
        let x = if i == nx {
            x1
        } else {
            x0 + (x1 - x0) * i as f64 / nx as f64
        };
        let (b, t) = geometry.walls(x);
        let y = if j == ny { t } else { b + (t - b) * j as f64 / ny as f64 };
        [x, y]
    };
    let cell_index = |ix: usize, iy: usize| ix * ny + iy;

    let mut cells = Vec::with_capacity(nx * ny);
    for ix in 0..nx {
        for iy in 0..ny {
            let quad = [node(ix, iy), node(ix + 1, iy), node(ix + 1, iy + 1), node(ix, iy + 1)];
            let (area, centroid) = polygon_area_centroid(&quad);
            if !(area > 0.0) {
                return Err(Error::InvalidMesh(format!("non-positive area at cell ({ix}, {iy})")));
            }
            let z = bed(centroid[0], centroid[1]);
            if !z.is_finite() {
                return Err(Error::InvalidMesh(format!("bed is not finite at {centroid:?}")));
            }
            cells.push(Cell {
                index: cell_index(ix, iy),
                centroid,
                area,
                bed: z,
                edges: Vec::with_capacity(4),
            });
        }
    }

    let mut edges: Vec<Edge> = Vec::with_capacity((nx + 1) * ny + nx * (ny + 1));
    let mut push = |cells: &mut Vec<Cell>, left: usize, right: Neighbor, a: [f64; 2], b: [f64; 2], normal: [f64; 2]| {
        let index = edges.len();
        let length = (b[0] - a[0]).hypot(b[1] - a[1]);
        cells[left].edges.push(index);
        if let Neighbor::Cell(j) = right {
            cells[j].edges.push(index);
        }
        edges.push(Edge {
            index,
            left,
            right,
            normal,
            length,
            midpoint: [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])],
        });
    };

    // faces of constant ix, normal towards +x
    for i in 0..=nx {
        for j in 0..ny {
            let a = node(i, j);
            let b = node(i, j + 1);
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            let n = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
            if i == 0 {
                push(&mut cells, cell_index(0, j), Neighbor::Boundary(BoundaryTag::West), a, b, [-n[0], -n[1]]);
            } else if i == nx {
                push(&mut cells, cell_index(nx - 1, j), Neighbor::Boundary(BoundaryTag::East), a, b, n);
            } else {
                push(&mut cells, cell_index(i - 1, j), Neighbor::Cell(cell_index(i, j)), a, b, n);
            }
        }
    }
    // faces of constant iy, normal towards +y
    for j in 0..=ny {
        for i in 0..nx {
            let a = node(i, j);
            let b = node(i + 1, j);
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            let n = [-(b[1] - a[1]) / len, (b[0] - a[0]) / len];
            if j == 0 {
                push(&mut cells, cell_index(i, 0), Neighbor::Boundary(BoundaryTag::South), a, b, [-n[0], -n[1]]);
            } else if j == ny {
                push(&mut cells, cell_index(i, ny - 1), Neighbor::Boundary(BoundaryTag::North), a, b, n);
            } else {
                push(&mut cells, cell_index(i, j - 1), Neighbor::Cell(cell_index(i, j)), a, b, n);
            }
        }
    }
    Ok(MeshLevel {
        dim: 2,
        nx,
        ny,
        level: 0,
        cells,
        edges,
        agglomeration: None,
    })
}

impl MeshLevel {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(|c| c.area).sum()
    }

    /// Index of the cell in column `ix`, row `iy`.
    pub fn cell_at(&self, ix: usize, iy: usize) -> usize {
        ix * self.ny + iy
    }

    /// Fine cells grouped per coarse cell for the next coarser level.
    fn coarse_children(&self) -> Result<(usize, usize, Vec<Vec<usize>>)> {
        let (cnx, cny) = if self.dim == 1 {
            if self.nx % 2 != 0 {
                return Err(Error::InvalidMesh(format!("{} cells cannot be paired", self.nx)));
            }
            (self.nx / 2, 1)
        } else {
            if self.nx % 2 != 0 || self.ny % 2 != 0 {
                return Err(Error::InvalidMesh(format!(
                    "{}x{} cells cannot be grouped 2x2",
                    self.nx, self.ny
                )));
            }
            (self.nx / 2, self.ny / 2)
        };
        if cnx * cny < 2 {
            return Err(Error::InvalidMesh(format!(
                "coarsening {} cells leaves a single cell without interior edges",
                self.n_cells()
            )));
        }
        let children = if self.dim == 1 {
            (0..cnx).map(|i| vec![2 * i, 2 * i + 1]).collect()
        } else {
            let mut ch = Vec::with_capacity(cnx * cny);
            for ix in 0..cnx {
                for iy in 0..cny {
                    ch.push(vec![
                        self.cell_at(2 * ix, 2 * iy),
                        self.cell_at(2 * ix, 2 * iy + 1),
                        self.cell_at(2 * ix + 1, 2 * iy),
                        self.cell_at(2 * ix + 1, 2 * iy + 1),
                    ]);
                }
            }
            ch
        };
        Ok((cnx, cny, children))
    }

    /// Agglomerates pairs (1D) or 2x2 blocks (2D) of cells. Fine edges shared
    /// by two coarse cells are merged; a merged edge carries the summed
    /// length-weighted normal of its pieces.
    pub fn coarsen(&self) -> Result<MeshLevel> {
        let (cnx, cny, children) = self.coarse_children()?;
        let mut parent = vec![0; self.n_cells()];
        for (p, ch) in children.iter().enumerate() {
            for &c in ch {
                parent[c] = p;
            }
        }
        let mut cells: Vec<Cell> = children
            .iter()
            .enumerate()
            .map(|(p, ch)| {
                let area: f64 = ch.iter().map(|&c| self.cells[c].area).sum();
                let mut centroid = [0.0; 2];
                let mut bed = 0.0;
                for &c in ch {
                    let cell = &self.cells[c];
                    centroid[0] += cell.area * cell.centroid[0];
                    centroid[1] += cell.area * cell.centroid[1];
                    bed += cell.area * cell.bed;
                }
                Cell {
                    index: p,
                    centroid: [centroid[0] / area, centroid[1] / area],
                    area,
                    bed: bed / area,
                    edges: Vec::new(),
                }
            })
            .collect();

        struct Acc {
            left: usize,
            right: Neighbor,
            s: [f64; 2],
            length: f64,
            mid: [f64; 2],
        }
        let mut order: Vec<Acc> = Vec::new();
        let mut lookup: HashMap<(usize, Neighbor), usize> = HashMap::new();
        for e in &self.edges {
            let pl = parent[e.left];
            let (key, sign) = match e.right {
                Neighbor::Cell(j) => {
                    let pr = parent[j];
                    if pr == pl {
                        continue;
                    }
                    if lookup.contains_key(&(pr, Neighbor::Cell(pl))) {
                        ((pr, Neighbor::Cell(pl)), -1.0)
                    } else {
                        ((pl, Neighbor::Cell(pr)), 1.0)
                    }
                }
                Neighbor::Boundary(tag) => ((pl, Neighbor::Boundary(tag)), 1.0),
            };
            let slot = *lookup.entry(key).or_insert_with(|| {
                order.push(Acc {
                    left: key.0,
                    right: key.1,
                    s: [0.0; 2],
                    length: 0.0,
                    mid: [0.0; 2],
                });
                order.len() - 1
            });
            let acc = &mut order[slot];
            acc.s[0] += sign * e.length * e.normal[0];
            acc.s[1] += sign * e.length * e.normal[1];
            acc.length += e.length;
            acc.mid[0] += e.length * e.midpoint[0];
            acc.mid[1] += e.length * e.midpoint[1];
        }
        let mut edges = Vec::with_capacity(order.len());
        for (index, acc) in order.into_iter().enumerate() {
            let len = acc.s[0].hypot(acc.s[1]);
            if !(len > 0.0) {
                return Err(Error::InvalidMesh("merged coarse edge has zero length".into()));
            }
            cells[acc.left].edges.push(index);
            if let Neighbor::Cell(j) = acc.right {
                cells[j].edges.push(index);
            }
            edges.push(Edge {
                index,
                left: acc.left,
                right: acc.right,
                normal: [acc.s[0] / len, acc.s[1] / len],
                length: len,
                midpoint: [acc.mid[0] / acc.length, acc.mid[1] / acc.length],
            });
        }
        Ok(MeshLevel {
            dim: self.dim,
            nx: cnx,
            ny: cny,
            level: self.level + 1,
            cells,
            edges,
            agglomeration: Some(Agglomeration { children, parent }),
        })
    }

    /// One line per cell: index, centroid, area, bed.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# index x y area z")?;
        for c in &self.cells {
            writeln!(
                w,
                "{} {:.16e} {:.16e} {:.16e} {:.16e}",
                c.index, c.centroid[0], c.centroid[1], c.area, c.bed
            )?;
        }
        Ok(())
    }
}

/// Mesh levels from finest (index 0) to coarsest.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshHierarchy {
    pub levels: Vec<MeshLevel>,
}

impl MeshHierarchy {
    pub fn finest(&self) -> &MeshLevel {
        &self.levels[0]
    }

    pub fn coarsest(&self) -> &MeshLevel {
        self.levels.last().expect("hierarchy has at least one level")
    }

    /// Number of coarse levels `N_L`.
    pub fn n_coarse_levels(&self) -> usize {
        self.levels.len() - 1
    }
}

pub fn build_hierarchy(finest: MeshLevel, n_coarse_levels: usize) -> Result<MeshHierarchy> {
    let mut levels = Vec::with_capacity(n_coarse_levels + 1);
    levels.push(finest);
    for _ in 0..n_coarse_levels {
        let next = levels.last().unwrap().coarsen()?;
        levels.push(next);
    }
    Ok(MeshHierarchy { levels })
}

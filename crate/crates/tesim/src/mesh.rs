//! Meshes: uniform intervals and structured triangulations of rectangles.
//!
//! The boundary is partitioned into the radiative part Γ (power-law heat
//! exchange) and the electrical contact part Γ_N (prescribed normal current).
//! Sides of the domain are assigned wholesale to one part or the other; a
//! side listed in `gamma_n` carries the Γ_N tag, every other side carries Γ.
//!
//! The mesh also owns the geometric pieces every downstream consumer shares:
//! P1 shape gradients per cell, quadrature points on cells and boundary
//! facets (the same rules assembly and norm evaluation must agree on), and
//! the lumped (row-sum) mass vector used for nodal time-derivative terms.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Result, SimError};
use crate::quadrature::{GAUSS_2, GAUSS_4, TRI_MIDPOINT_3};

/// Supported domains.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DomainSpec {
    /// The interval (0, length).
    Interval { length: f64 },
    /// The rectangle (0, lx) × (0, ly).
    Rectangle { lx: f64, ly: f64 },
}

impl DomainSpec {
    pub fn dimension(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::Rectangle { .. } => 2,
        }
    }

    /// |Ω|: length or area.
    pub fn measure(&self) -> f64 {
        match self {
            DomainSpec::Interval { length } => *length,
            DomainSpec::Rectangle { lx, ly } => lx * ly,
        }
    }

    /// diam(Ω).
    pub fn diameter(&self) -> f64 {
        match self {
            DomainSpec::Interval { length } => *length,
            DomainSpec::Rectangle { lx, ly } => lx.hypot(*ly),
        }
    }
}

/// Which boundary part a facet belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryTag {
    /// Radiative part (power-law heat exchange, datum h).
    Gamma,
    /// Electrical contact part (normal current flux, datum g).
    GammaN,
}

/// Selector used when assembling or integrating over parts of the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundarySelector {
    All,
    Gamma,
    GammaN,
}

impl BoundarySelector {
    pub fn accepts(&self, tag: BoundaryTag) -> bool {
        match self {
            BoundarySelector::All => true,
            BoundarySelector::Gamma => tag == BoundaryTag::Gamma,
            BoundarySelector::GammaN => tag == BoundaryTag::GammaN,
        }
    }
}

/// Geometric side of the domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub fn name(&self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        }
    }
}

/// A boundary facet: a vertex (1D) or an edge (2D).
#[derive(Clone, Debug)]
pub struct Facet {
    /// One vertex id in 1D, two in 2D.
    pub vertices: Vec<usize>,
    pub tag: BoundaryTag,
    pub side: Side,
    /// 1 for a vertex (point evaluation), edge length in 2D.
    pub measure: f64,
}

/// Constant P1 gradients and measure of one cell.
#[derive(Clone, Copy, Debug)]
pub struct CellGeometry {
    pub grads: [[f64; 2]; 3],
    pub measure: f64,
}

/// One quadrature point with the shape-function values of the owning entity
/// (cell or facet) evaluated at it.
#[derive(Clone, Copy, Debug)]
pub struct QuadPoint {
    pub x: [f64; 2],
    pub w: f64,
    pub shapes: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub domain: DomainSpec,
    pub vertices: Vec<[f64; 2]>,
    /// Vertex ids per cell; 2 used in 1D, 3 in 2D (third slot repeats in 1D).
    cells: Vec<[usize; 3]>,
    pub facets: Vec<Facet>,
    /// Lumped (row-sum) mass vector: ∫ basis_i dx.
    pub lumped: DVector<f64>,
    /// Largest cell diameter.
    pub h_max: f64,
}

impl Mesh {
    pub fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Vertex ids of cell `c` (2 entries in 1D, 3 in 2D).
    pub fn cell_nodes(&self, c: usize) -> &[usize] {
        &self.cells[c][..self.dimension() + 1]
    }

    /// Constant P1 shape gradients and the measure of cell `c`.
    pub fn cell_geometry(&self, c: usize) -> CellGeometry {
        let nodes = self.cell_nodes(c);
        match self.dimension() {
            1 => {
                let x0 = self.vertices[nodes[0]][0];
                let x1 = self.vertices[nodes[1]][0];
                let h = x1 - x0;
                CellGeometry {
                    grads: [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0, 0.0]],
                    measure: h.abs(),
                }
            }
            _ => {
                let p0 = self.vertices[nodes[0]];
                let p1 = self.vertices[nodes[1]];
                let p2 = self.vertices[nodes[2]];
                let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
                let area = 0.5 * det.abs();
                let inv = 1.0 / det;
                // grad λ_i is the inward-rotated opposite edge over det.
                let g0 = [(p1[1] - p2[1]) * inv, (p2[0] - p1[0]) * inv];
                let g1 = [(p2[1] - p0[1]) * inv, (p0[0] - p2[0]) * inv];
                let g2 = [(p0[1] - p1[1]) * inv, (p1[0] - p0[0]) * inv];
                CellGeometry { grads: [g0, g1, g2], measure: area }
            }
        }
    }

    /// Quadrature points of cell `c` (2-pt Gauss in 1D, 3-pt midpoint rule on
    /// triangles). Weights sum to the cell measure. Returns (points, count).
    pub fn cell_quad_points(&self, c: usize) -> ([QuadPoint; 3], usize) {
        let nodes = self.cell_nodes(c);
        let mut out = [QuadPoint { x: [0.0; 2], w: 0.0, shapes: [0.0; 3] }; 3];
        match self.dimension() {
            1 => {
                let x0 = self.vertices[nodes[0]][0];
                let x1 = self.vertices[nodes[1]][0];
                let h = x1 - x0;
                for (k, &(xi, wi)) in GAUSS_2.iter().enumerate() {
                    let s = 0.5 * (1.0 + xi); // reference coordinate in [0,1]
                    out[k] = QuadPoint {
                        x: [x0 + s * h, 0.0],
                        w: 0.5 * wi * h.abs(),
                        shapes: [1.0 - s, s, 0.0],
                    };
                }
                (out, 2)
            }
            _ => {
                let p0 = self.vertices[nodes[0]];
                let p1 = self.vertices[nodes[1]];
                let p2 = self.vertices[nodes[2]];
                let area = self.cell_geometry(c).measure;
                for (k, &(l0, l1, l2, w)) in TRI_MIDPOINT_3.iter().enumerate() {
                    out[k] = QuadPoint {
                        x: [
                            l0 * p0[0] + l1 * p1[0] + l2 * p2[0],
                            l0 * p0[1] + l1 * p1[1] + l2 * p2[1],
                        ],
                        w: w * area,
                        shapes: [l0, l1, l2],
                    };
                }
                (out, 3)
            }
        }
    }

    /// Quadrature points of facet `f`: point evaluation (weight 1) on vertex
    /// facets, 4-pt Gauss on edges. Returns (points, count).
    pub fn facet_quad_points(&self, f: usize) -> ([QuadPoint; 4], usize) {
        let facet = &self.facets[f];
        let mut out = [QuadPoint { x: [0.0; 2], w: 0.0, shapes: [0.0; 3] }; 4];
        if facet.vertices.len() == 1 {
            out[0] = QuadPoint {
                x: self.vertices[facet.vertices[0]],
                w: 1.0,
                shapes: [1.0, 0.0, 0.0],
            };
            return (out, 1);
        }
        let p0 = self.vertices[facet.vertices[0]];
        let p1 = self.vertices[facet.vertices[1]];
        for (k, &(xi, wi)) in GAUSS_4.iter().enumerate() {
            let s = 0.5 * (1.0 + xi);
            out[k] = QuadPoint {
                x: [p0[0] + s * (p1[0] - p0[0]), p0[1] + s * (p1[1] - p0[1])],
                w: 0.5 * wi * facet.measure,
                shapes: [1.0 - s, s, 0.0],
            };
        }
        (out, 4)
    }

    /// Total measure of the selected boundary part (vertex facets count 1).
    pub fn boundary_measure(&self, sel: BoundarySelector) -> f64 {
        self.facets
            .iter()
            .filter(|f| sel.accepts(f.tag))
            .map(|f| f.measure)
            .sum()
    }
}

/// Build a mesh. `resolution` is `[n]` for an interval and `[nx, ny]` for a
/// rectangle; `gamma_n` lists the sides carrying the electrical-contact tag
/// (each side at most once), all remaining sides are radiative.
pub fn build_mesh(domain: &DomainSpec, resolution: &[usize], gamma_n: &[Side]) -> Result<Arc<Mesh>> {
    for (i, s) in gamma_n.iter().enumerate() {
        if gamma_n[..i].contains(s) {
            return Err(SimError::InvalidSpec(format!(
                "side '{}' listed twice in the contact-boundary set",
                s.name()
            )));
        }
    }
    let tag_of = |side: Side| {
        if gamma_n.contains(&side) {
            BoundaryTag::GammaN
        } else {
            BoundaryTag::Gamma
        }
    };
    match *domain {
        DomainSpec::Interval { length } => {
            if !(length > 0.0) {
                return Err(SimError::InvalidSpec(format!(
                    "interval length must be positive, got {length}"
                )));
            }
            if gamma_n.iter().any(|s| matches!(s, Side::Bottom | Side::Top)) {
                return Err(SimError::UnsupportedDomain(
                    "an interval has no bottom/top sides".into(),
                ));
            }
            let [n] = resolution else {
                return Err(SimError::InvalidSpec(format!(
                    "interval expects one resolution entry, got {resolution:?}"
                )));
            };
            let n = *n;
            if n < 1 {
                return Err(SimError::InvalidSpec("resolution must be ≥ 1".into()));
            }
            let vertices: Vec<[f64; 2]> =
                (0..=n).map(|i| [length * i as f64 / n as f64, 0.0]).collect();
            let cells: Vec<[usize; 3]> = (0..n).map(|i| [i, i + 1, i + 1]).collect();
            let facets = vec![
                Facet { vertices: vec![0], tag: tag_of(Side::Left), side: Side::Left, measure: 1.0 },
                Facet { vertices: vec![n], tag: tag_of(Side::Right), side: Side::Right, measure: 1.0 },
            ];
            Ok(Arc::new(finish(DomainSpec::Interval { length }, vertices, cells, facets)))
        }
        DomainSpec::Rectangle { lx, ly } => {
            if !(lx > 0.0 && ly > 0.0) {
                return Err(SimError::InvalidSpec(format!(
                    "rectangle sides must be positive, got {lx} x {ly}"
                )));
            }
            let [nx, ny] = resolution else {
                return Err(SimError::InvalidSpec(format!(
                    "rectangle expects two resolution entries, got {resolution:?}"
                )));
            };
            let (nx, ny) = (*nx, *ny);
            if nx < 1 || ny < 1 {
                return Err(SimError::InvalidSpec("resolution must be ≥ 1 in each direction".into()));
            }
            let vid = |i: usize, j: usize| j * (nx + 1) + i;
            let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
            for j in 0..=ny {
                for i in 0..=nx {
                    vertices.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
                }
            }
            // Each grid square splits along its bottom-left→top-right diagonal.
            let mut cells = Vec::with_capacity(2 * nx * ny);
            for j in 0..ny {
                for i in 0..nx {
                    let (v00, v10) = (vid(i, j), vid(i + 1, j));
                    let (v01, v11) = (vid(i, j + 1), vid(i + 1, j + 1));
                    cells.push([v00, v10, v11]);
                    cells.push([v00, v11, v01]);
                }
            }
            let hx = lx / nx as f64;
            let hy = ly / ny as f64;
            let mut facets = Vec::new();
            for i in 0..nx {
                facets.push(Facet {
                    vertices: vec![vid(i, 0), vid(i + 1, 0)],
                    tag: tag_of(Side::Bottom),
                    side: Side::Bottom,
                    measure: hx,
                });
                facets.push(Facet {
                    vertices: vec![vid(i, ny), vid(i + 1, ny)],
                    tag: tag_of(Side::Top),
                    side: Side::Top,
                    measure: hx,
                });
            }
            for j in 0..ny {
                facets.push(Facet {
                    vertices: vec![vid(0, j), vid(0, j + 1)],
                    tag: tag_of(Side::Left),
                    side: Side::Left,
                    measure: hy,
                });
                facets.push(Facet {
                    vertices: vec![vid(nx, j), vid(nx, j + 1)],
                    tag: tag_of(Side::Right),
                    side: Side::Right,
                    measure: hy,
                });
            }
            Ok(Arc::new(finish(DomainSpec::Rectangle { lx, ly }, vertices, cells, facets)))
        }
    }
}

fn finish(domain: DomainSpec, vertices: Vec<[f64; 2]>, cells: Vec<[usize; 3]>, facets: Vec<Facet>) -> Mesh {
    let mut mesh = Mesh {
        domain,
        vertices,
        cells,
        facets,
        lumped: DVector::zeros(0),
        h_max: 0.0,
    };
    let n = mesh.vertices.len();
    let mut lumped = DVector::zeros(n);
    let mut h_max: f64 = 0.0;
    for c in 0..mesh.n_cells() {
        let geom = mesh.cell_geometry(c);
        let nodes = mesh.cell_nodes(c);
        let share = geom.measure / nodes.len() as f64;
        for &v in nodes {
            lumped[v] += share;
        }
        // Cell diameter: longest pairwise vertex distance.
        for a in 0..nodes.len() {
            for b in (a + 1)..nodes.len() {
                let pa = mesh.vertices[nodes[a]];
                let pb = mesh.vertices[nodes[b]];
                h_max = h_max.max((pa[0] - pb[0]).hypot(pa[1] - pb[1]));
            }
        }
    }
    mesh.lumped = lumped;
    mesh.h_max = h_max;
    mesh
}

//! Assembly of weighted P1 bilinear forms and boundary terms.
//!
//! Every form takes its weight as a closure evaluated at quadrature points;
//! the closure receives enough context (position, owning cell/facet, node
//! ids, shape values) to compose material laws with the current nodal state,
//! e.g. w(x) = σ(x, u(x))·F(x, u(x), φ(x)) for a frozen pair (u, φ).
//!
//! Positivity-critical forms (diffusion, mass, boundary radiation) reject
//! non-positive weights at any quadrature point; sign-indefinite coupling
//! blocks use the `_signed` variants. Assembly is sequential and triplet
//! order is fixed, so matrices are bit-reproducible.

use nalgebra::DVector;

use crate::coefficients::SpatialFn;
use crate::error::{Result, SimError};
use crate::linalg::Csr;
use crate::mesh::{BoundarySelector, BoundaryTag};
use crate::space::{DiscreteField, FunctionSpace};

/// Quadrature-point context inside a cell.
pub struct CellPoint<'a> {
    pub x: [f64; 2],
    pub cell: usize,
    pub nodes: &'a [usize],
    pub shapes: &'a [f64],
}

impl<'a> CellPoint<'a> {
    /// Value of a nodal field at this point.
    pub fn value(&self, field: &DiscreteField) -> f64 {
        field.value_at(self.nodes, self.shapes)
    }
}

/// Quadrature-point context on a boundary facet.
pub struct FacetPoint<'a> {
    pub x: [f64; 2],
    pub facet: usize,
    pub tag: BoundaryTag,
    pub nodes: &'a [usize],
    pub shapes: &'a [f64],
}

impl<'a> FacetPoint<'a> {
    pub fn value(&self, field: &DiscreteField) -> f64 {
        field.value_at(self.nodes, self.shapes)
    }
}

fn stiffness_impl(
    space: &FunctionSpace,
    weight: &dyn Fn(&CellPoint) -> f64,
    require_positive: bool,
) -> Result<Csr> {
    let mesh = &space.mesh;
    let n = space.dof_count();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for c in 0..mesh.n_cells() {
        let nodes = mesh.cell_nodes(c);
        let geom = mesh.cell_geometry(c);
        let (qps, nq) = mesh.cell_quad_points(c);
        // Gradients are constant per cell, so the weight integrates once.
        let mut wsum = 0.0;
        for q in &qps[..nq] {
            let w = weight(&CellPoint { x: q.x, cell: c, nodes, shapes: &q.shapes[..nodes.len()] });
            if require_positive && !(w > 0.0) {
                return Err(SimError::NonpositiveWeight(format!(
                    "stiffness weight = {w} at x = {:?} (cell {c})",
                    q.x
                )));
            }
            if !w.is_finite() {
                return Err(SimError::NonpositiveWeight(format!(
                    "stiffness weight not finite at x = {:?} (cell {c})",
                    q.x
                )));
            }
            wsum += q.w * w;
        }
        for (a, &na) in nodes.iter().enumerate() {
            for (b, &nb) in nodes.iter().enumerate() {
                let dot = geom.grads[a][0] * geom.grads[b][0] + geom.grads[a][1] * geom.grads[b][1];
                triplets.push((na, nb, wsum * dot));
            }
        }
    }
    Ok(Csr::from_triplets(n, &triplets))
}

/// ∫ w(x) ∇φ_j · ∇φ_i dx with w required strictly positive at every
/// quadrature point (diffusion-type operators).
pub fn weighted_stiffness(space: &FunctionSpace, weight: &dyn Fn(&CellPoint) -> f64) -> Result<Csr> {
    stiffness_impl(space, weight, true)
}

/// Same form for sign-indefinite weights (coupling blocks like σ·F or σ·α_S).
pub fn weighted_stiffness_signed(
    space: &FunctionSpace,
    weight: &dyn Fn(&CellPoint) -> f64,
) -> Result<Csr> {
    stiffness_impl(space, weight, false)
}

/// ∫ w(x) φ_j φ_i dx with w required strictly positive.
pub fn weighted_mass(space: &FunctionSpace, weight: &dyn Fn(&CellPoint) -> f64) -> Result<Csr> {
    let mesh = &space.mesh;
    let n = space.dof_count();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for c in 0..mesh.n_cells() {
        let nodes = mesh.cell_nodes(c);
        let (qps, nq) = mesh.cell_quad_points(c);
        for q in &qps[..nq] {
            let w = weight(&CellPoint { x: q.x, cell: c, nodes, shapes: &q.shapes[..nodes.len()] });
            if !(w > 0.0) || !w.is_finite() {
                return Err(SimError::NonpositiveWeight(format!(
                    "mass weight = {w} at x = {:?} (cell {c})",
                    q.x
                )));
            }
            for (a, &na) in nodes.iter().enumerate() {
                for (b, &nb) in nodes.iter().enumerate() {
                    triplets.push((na, nb, q.w * w * q.shapes[a] * q.shapes[b]));
                }
            }
        }
    }
    Ok(Csr::from_triplets(n, &triplets))
}

/// ∫ w(x) φ_j φ_i ds over the selected boundary part, w > 0 required.
pub fn boundary_mass(
    space: &FunctionSpace,
    weight: &dyn Fn(&FacetPoint) -> f64,
    sel: BoundarySelector,
) -> Result<Csr> {
    let mesh = &space.mesh;
    let n = space.dof_count();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for f in 0..mesh.facets.len() {
        let facet = &mesh.facets[f];
        if !sel.accepts(facet.tag) {
            continue;
        }
        let (qps, nq) = mesh.facet_quad_points(f);
        let nodes = &facet.vertices;
        for q in &qps[..nq] {
            let w = weight(&FacetPoint {
                x: q.x,
                facet: f,
                tag: facet.tag,
                nodes,
                shapes: &q.shapes[..nodes.len()],
            });
            if !(w > 0.0) || !w.is_finite() {
                return Err(SimError::NonpositiveWeight(format!(
                    "boundary mass weight = {w} at x = {:?} (facet {f})",
                    q.x
                )));
            }
            for (a, &na) in nodes.iter().enumerate() {
                for (b, &nb) in nodes.iter().enumerate() {
                    triplets.push((na, nb, q.w * w * q.shapes[a] * q.shapes[b]));
                }
            }
        }
    }
    Ok(Csr::from_triplets(n, &triplets))
}

/// Nonlinear radiative boundary term on Γ. Returns the residual vector
///
///   r_i = ∫_Γ γ(x) |θ|^{ℓ−2} θ φ_i ds
///
/// and its Jacobian J_ij = ∫_Γ γ(x) (ℓ−1) |θ|^{ℓ−2} φ_i φ_j ds. For ℓ = 2
/// the convention |0|⁰ = 1 applies, making the term linear. A state
/// dependence of γ can be folded into the weight closure; the Jacobian then
/// treats that dependence as frozen (exact whenever γ = γ(x)).
pub fn boundary_power(
    space: &FunctionSpace,
    gamma: &dyn Fn(&FacetPoint) -> f64,
    theta: &DiscreteField,
    ell: f64,
) -> Result<(DVector<f64>, Csr)> {
    let mesh = &space.mesh;
    let n = space.dof_count();
    let mut residual = DVector::zeros(n);
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for f in 0..mesh.facets.len() {
        let facet = &mesh.facets[f];
        if facet.tag != BoundaryTag::Gamma {
            continue;
        }
        let (qps, nq) = mesh.facet_quad_points(f);
        let nodes = &facet.vertices;
        for q in &qps[..nq] {
            let fp = FacetPoint {
                x: q.x,
                facet: f,
                tag: facet.tag,
                nodes,
                shapes: &q.shapes[..nodes.len()],
            };
            let g = gamma(&fp);
            if !(g > 0.0) || !g.is_finite() {
                return Err(SimError::NonpositiveWeight(format!(
                    "radiation coefficient = {g} at x = {:?} (facet {f})",
                    q.x
                )));
            }
            let th = fp.value(theta);
            // |θ|^{ℓ−2} with the ℓ = 2 limit |0|⁰ = 1.
            let pow = if ell == 2.0 { 1.0 } else { th.abs().powf(ell - 2.0) };
            let flux = g * pow * th;
            let slope = g * (ell - 1.0) * pow;
            for (a, &na) in nodes.iter().enumerate() {
                residual[na] += q.w * flux * q.shapes[a];
                for (b, &nb) in nodes.iter().enumerate() {
                    triplets.push((na, nb, q.w * slope * q.shapes[a] * q.shapes[b]));
                }
            }
        }
    }
    Ok((residual, Csr::from_triplets(n, &triplets)))
}

/// ∫ |source(x)|^p ds over the selected boundary part, with the same facet
/// quadrature as the load assembly — so Hölder pairings between loads and
/// nodal fields are exact at the discrete level (the energy ledgers rely on
/// this consistency).
pub fn boundary_function_power(
    space: &FunctionSpace,
    source: &SpatialFn,
    p: f64,
    sel: BoundarySelector,
) -> f64 {
    let mesh = &space.mesh;
    let mut acc = 0.0;
    for f in 0..mesh.facets.len() {
        let facet = &mesh.facets[f];
        if !sel.accepts(facet.tag) {
            continue;
        }
        let (qps, nq) = mesh.facet_quad_points(f);
        for q in &qps[..nq] {
            acc += q.w * source.eval(q.x).abs().powf(p);
        }
    }
    acc
}

/// Boundary load vector r_i = ∫ source(x) φ_i ds over the selected part.
pub fn boundary_load(space: &FunctionSpace, source: &SpatialFn, sel: BoundarySelector) -> DVector<f64> {
    let mesh = &space.mesh;
    let mut out = DVector::zeros(space.dof_count());
    for f in 0..mesh.facets.len() {
        let facet = &mesh.facets[f];
        if !sel.accepts(facet.tag) {
            continue;
        }
        let (qps, nq) = mesh.facet_quad_points(f);
        let nodes = &facet.vertices;
        for q in &qps[..nq] {
            let s = source.eval(q.x);
            for (a, &na) in nodes.iter().enumerate() {
                out[na] += q.w * s * q.shapes[a];
            }
        }
    }
    out
}

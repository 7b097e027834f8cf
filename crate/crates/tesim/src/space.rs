//! P1 finite-element function spaces and nodal fields.
//!
//! Two spaces appear in the model: the temperature space (all nodal values
//! free) and the potential space, which is determined only up to a constant
//! and therefore carries a mean-zero constraint — either ∫_Ω v dx = 0 or
//! ∫_∂Ω v ds = 0. The constraint is enforced via a Lagrange multiplier in
//! the solvers; here it only selects the constraint functional.
//!
//! Norms are evaluated with the same quadrature rules used for assembly
//! (see [`crate::quadrature`]); this is what lets the verifier's energy
//! inequalities close at machine precision instead of quadrature precision.

use nalgebra::DVector;
use std::sync::Arc;

use crate::mesh::{BoundarySelector, Mesh};

/// Zero-mean constraint attached to a space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constraint {
    None,
    /// ∫_Ω v dx = 0.
    MeanZeroVolume,
    /// ∫_∂Ω v ds = 0.
    MeanZeroBoundary,
}

/// Normalization mode for explicit projections.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeanZeroMode {
    Volume,
    Boundary,
}

/// A P1 nodal space over a shared mesh.
#[derive(Clone, Debug)]
pub struct FunctionSpace {
    pub mesh: Arc<Mesh>,
    pub constraint: Constraint,
}

impl FunctionSpace {
    pub fn new(mesh: Arc<Mesh>, constraint: Constraint) -> Self {
        FunctionSpace { mesh, constraint }
    }

    pub fn dof_count(&self) -> usize {
        self.mesh.n_vertices()
    }

    /// Constraint functional as a vector c with cᵀ·values = mean integral;
    /// `None` for unconstrained spaces. Volume: c_i = ∫_Ω φ_i dx (the lumped
    /// mass vector, exact for P1). Boundary: c_i = ∫_∂Ω φ_i ds.
    pub fn constraint_vector(&self) -> Option<DVector<f64>> {
        match self.constraint {
            Constraint::None => None,
            Constraint::MeanZeroVolume => Some(self.mesh.lumped.clone()),
            Constraint::MeanZeroBoundary => {
                let mut c = DVector::zeros(self.dof_count());
                for f in 0..self.mesh.facets.len() {
                    let (qps, nq) = self.mesh.facet_quad_points(f);
                    let nodes = &self.mesh.facets[f].vertices;
                    for q in &qps[..nq] {
                        for (k, &nd) in nodes.iter().enumerate() {
                            c[nd] += q.w * q.shapes[k];
                        }
                    }
                }
                Some(c)
            }
        }
    }
}

/// The four norms the energy bookkeeping needs, all evaluated with
/// assembly-consistent quadrature.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct FieldNorms {
    pub l2_volume: f64,
    pub h1_semi: f64,
    /// L^ℓ norm over the radiative boundary part Γ.
    pub l_ell_boundary: f64,
    /// L² norm over the contact boundary part Γ_N.
    pub l2_boundary: f64,
}

/// A nodal P1 field.
#[derive(Clone, Debug)]
pub struct DiscreteField {
    pub space: FunctionSpace,
    pub values: DVector<f64>,
}

impl DiscreteField {
    pub fn zeros(space: FunctionSpace) -> Self {
        let n = space.dof_count();
        DiscreteField { space, values: DVector::zeros(n) }
    }

    pub fn constant(space: FunctionSpace, c: f64) -> Self {
        let n = space.dof_count();
        DiscreteField { space, values: DVector::from_element(n, c) }
    }

    /// Nodal interpolation of a pointwise function.
    pub fn from_fn(space: FunctionSpace, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = DVector::from_iterator(
            space.dof_count(),
            space.mesh.vertices.iter().map(|&x| f(x)),
        );
        DiscreteField { space, values }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.space.mesh
    }

    /// Value at a quadrature point described by (nodes, shapes).
    pub fn value_at(&self, nodes: &[usize], shapes: &[f64]) -> f64 {
        nodes
            .iter()
            .zip(shapes)
            .map(|(&nd, &s)| s * self.values[nd])
            .sum()
    }

    /// Constant gradient on cell `c`.
    pub fn grad_on_cell(&self, c: usize) -> [f64; 2] {
        let mesh = self.mesh();
        let geom = mesh.cell_geometry(c);
        let nodes = mesh.cell_nodes(c);
        let mut g = [0.0, 0.0];
        for (k, &nd) in nodes.iter().enumerate() {
            g[0] += self.values[nd] * geom.grads[k][0];
            g[1] += self.values[nd] * geom.grads[k][1];
        }
        g
    }

    /// ‖v‖_{L²(Ω)} by cell quadrature (exact for P1).
    pub fn l2(&self) -> f64 {
        let mesh = self.mesh();
        let mut acc = 0.0;
        for c in 0..mesh.n_cells() {
            let (qps, nq) = mesh.cell_quad_points(c);
            let nodes = mesh.cell_nodes(c);
            for q in &qps[..nq] {
                let v = self.value_at(nodes, &q.shapes);
                acc += q.w * v * v;
            }
        }
        acc.sqrt()
    }

    /// |v|_{H¹(Ω)} = ‖∇v‖_{L²} (gradients are cellwise constant).
    pub fn h1_semi(&self) -> f64 {
        let mesh = self.mesh();
        let mut acc = 0.0;
        for c in 0..mesh.n_cells() {
            let g = self.grad_on_cell(c);
            acc += mesh.cell_geometry(c).measure * (g[0] * g[0] + g[1] * g[1]);
        }
        acc.sqrt()
    }

    /// ‖v‖_{L²} over the selected boundary part, by facet quadrature.
    pub fn l2_boundary(&self, sel: BoundarySelector) -> f64 {
        let mesh = self.mesh();
        let mut acc = 0.0;
        for f in 0..mesh.facets.len() {
            if !sel.accepts(mesh.facets[f].tag) {
                continue;
            }
            let (qps, nq) = mesh.facet_quad_points(f);
            let nodes = &mesh.facets[f].vertices;
            for q in &qps[..nq] {
                let v = self.value_at(nodes, &q.shapes);
                acc += q.w * v * v;
            }
        }
        acc.sqrt()
    }

    /// ‖v‖_{L^ℓ} over the selected boundary part.
    pub fn l_ell_boundary(&self, ell: f64, sel: BoundarySelector) -> f64 {
        let mesh = self.mesh();
        let mut acc = 0.0;
        for f in 0..mesh.facets.len() {
            if !sel.accepts(mesh.facets[f].tag) {
                continue;
            }
            let (qps, nq) = mesh.facet_quad_points(f);
            let nodes = &mesh.facets[f].vertices;
            for q in &qps[..nq] {
                let v = self.value_at(nodes, &q.shapes);
                acc += q.w * v.abs().powf(ell);
            }
        }
        acc.powf(1.0 / ell)
    }

    /// All four bookkeeping norms at once; the power norm is taken on Γ and
    /// the plain boundary L² norm on Γ_N, matching where each datum lives.
    pub fn norms(&self, ell: f64) -> FieldNorms {
        FieldNorms {
            l2_volume: self.l2(),
            h1_semi: self.h1_semi(),
            l_ell_boundary: self.l_ell_boundary(ell, BoundarySelector::Gamma),
            l2_boundary: self.l2_boundary(BoundarySelector::GammaN),
        }
    }

    /// Lumped (diagonal-mass) L² norm: √(Σ m_i v_i²). This is the norm the
    /// nodal time-derivative terms are measured in.
    pub fn lumped_l2(&self) -> f64 {
        self.lumped_dot(self).sqrt()
    }

    /// Lumped inner product Σ m_i v_i w_i.
    pub fn lumped_dot(&self, other: &DiscreteField) -> f64 {
        let m = &self.mesh().lumped;
        let mut acc = 0.0;
        for i in 0..self.values.len() {
            acc += m[i] * self.values[i] * other.values[i];
        }
        acc
    }

    /// Exact mean over the volume: (∫v dx)/|Ω|.
    pub fn mean_volume(&self) -> f64 {
        self.mesh().lumped.dot(&self.values) / self.mesh().domain.measure()
    }

    /// Exact mean over the whole boundary: (∫_∂Ω v ds)/|∂Ω|.
    pub fn mean_boundary(&self) -> f64 {
        let mesh = self.mesh();
        let mut acc = 0.0;
        for f in 0..mesh.facets.len() {
            let (qps, nq) = mesh.facet_quad_points(f);
            let nodes = &mesh.facets[f].vertices;
            for q in &qps[..nq] {
                acc += q.w * self.value_at(nodes, &q.shapes);
            }
        }
        acc / mesh.boundary_measure(BoundarySelector::All)
    }

    /// Subtract the volume or boundary mean.
    pub fn project_mean_zero(&self, mode: MeanZeroMode) -> DiscreteField {
        let mean = match mode {
            MeanZeroMode::Volume => self.mean_volume(),
            MeanZeroMode::Boundary => self.mean_boundary(),
        };
        DiscreteField {
            space: self.space.clone(),
            values: self.values.map(|v| v - mean),
        }
    }

    /// self − other (same space).
    pub fn sub(&self, other: &DiscreteField) -> DiscreteField {
        DiscreteField {
            space: self.space.clone(),
            values: &self.values - &other.values,
        }
    }
}

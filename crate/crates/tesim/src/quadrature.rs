//! Quadrature rules shared by assembly, norms, and coefficient integrals.
//!
//! The discrete energy bookkeeping in [`crate::verifier`] only closes to
//! machine precision if every norm is evaluated with the *same* rule used to
//! assemble the corresponding bilinear form. The rules below are therefore
//! the single source of truth:
//!
//! - interval cells: 2-point Gauss (exact through degree 3);
//! - triangle cells: 3-point edge-midpoint rule (exact through degree 2);
//! - boundary facets (2D edges): 4-point Gauss (exact through degree 7),
//!   enough headroom for the power-law boundary term |θ|^{ℓ−2}θ·v at the
//!   shipped exponents;
//! - 1D boundary "facets" are single vertices: point evaluation, weight 1.
//!
//! Profile integrals in the temperature variable (antiderivatives of the
//! volumetric heat-capacity law) use adaptive Simpson with an absolute
//! tolerance, since table- and clamp-based material laws have kinks.

use crate::error::{Result, SimError};

/// 2-point Gauss–Legendre rule on [-1, 1]: (node, weight). Exact deg ≤ 3.
pub const GAUSS_2: [(f64, f64); 2] = [
    (-0.577_350_269_189_625_8, 1.0), // -1/√3
    (0.577_350_269_189_625_8, 1.0),  // +1/√3
];

/// 4-point Gauss–Legendre rule on [-1, 1]: (node, weight). Exact deg ≤ 7.
pub const GAUSS_4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_2),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_2),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
];

/// 3-point rule on the reference triangle in barycentric coordinates:
/// (λ0, λ1, λ2, weight), weights summing to 1 (multiply by the cell area).
/// Edge-midpoint rule; exact for polynomials of degree ≤ 2.
pub const TRI_MIDPOINT_3: [(f64, f64, f64, f64); 3] = [
    (0.5, 0.5, 0.0, 1.0 / 3.0),
    (0.0, 0.5, 0.5, 1.0 / 3.0),
    (0.5, 0.0, 0.5, 1.0 / 3.0),
];

/// Map a reference rule on [-1, 1] to the interval [a, b].
/// Returns (point, weight) pairs; weights sum to (b − a).
pub fn map_to_interval(rule: &[(f64, f64)], a: f64, b: f64) -> Vec<(f64, f64)> {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    rule.iter().map(|&(x, w)| (mid + half * x, w * half)).collect()
}

/// Adaptive Simpson integration of `f` over [a, b] to absolute tolerance
/// `tol`. Handles a > b by orientation (result is antisymmetric) and a == b
/// exactly (returns 0). Errors with [`SimError::QuadratureFailure`] if the
/// recursion depth limit is reached before the local error bound is met.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return adaptive_simpson(f, b, a, tol).map(|v| -v);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol.max(f64::MIN_POSITIVE), 60)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol {
        // Richardson extrapolation term improves the estimate one order.
        return Ok(left + right + err / 15.0);
    }
    if depth == 0 {
        return Err(SimError::QuadratureFailure {
            a,
            b,
            tol,
            err: err.abs() / 15.0,
        });
    }
    let lv = simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let rv = simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(lv + rv)
}

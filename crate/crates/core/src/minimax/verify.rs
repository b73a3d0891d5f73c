use serde::Serialize;

use super::LinkingGeometry;
use crate::error::Result;
use crate::field::Field;
use crate::functional::{cone_position_from, dual_norm, eval_energy, grad_energy, ConePosition};
use crate::problem::ProblemSpec;
use crate::scalar::Real;

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport<T> {
    pub cerami: T,
    /// Largest nodal residual of the strong form
    /// `-div(|grad u|^(p-2) grad u) + (b - lambda V)|u|^(p-2) u - f(x, u)`.
    pub strong_residual: T,
    pub phi: T,
    pub norm_w: T,
    pub nontrivial: bool,
    pub converged: bool,
    /// Cone position relative to the geometry's eigenvalue bracket.
    pub cone: Option<ConePosition>,
    /// `Phi(u) >= alpha - tol`, checked for nontrivial fields.
    pub above_alpha: Option<bool>,
    pub passed: bool,
}

pub fn verify_solution<T: Real>(
    u: &Field<T>,
    spec: &ProblemSpec<T>,
    tol: T,
    geom: Option<&LinkingGeometry<T>>,
) -> Result<VerificationReport<T>> {
    let e = eval_energy(u, spec)?;
    let g = grad_energy(u, spec)?.grad_phi;
    let cerami = (T::one() + e.norm_w) * dual_norm(&g, spec);
    let w = spec.grid.weight();
    let strong_residual = g.max_abs() / w;
    let nontrivial = e.norm_w > spec.delta_nontrivial();
    let converged = cerami < tol;
    let cone = geom.map(|geo| {
        // cones are defined for the lambda >= 0 representation
        let i = if spec.lambda < T::zero() { -e.i } else { e.i };
        cone_position_from(e.h, i, geo.lambda_m, geo.lambda_m1)
    });
    let above_alpha = match geom {
        Some(geo) if nontrivial => Some(e.phi >= geo.alpha - tol),
        _ => None,
    };
    Ok(VerificationReport {
        cerami,
        strong_residual,
        phi: e.phi,
        norm_w: e.norm_w,
        nontrivial,
        converged,
        cone,
        above_alpha,
        passed: converged && above_alpha != Some(false),
    })
}

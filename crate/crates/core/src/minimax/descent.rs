use super::{Metric, TraceRow};
use crate::error::Result;
use crate::field::Field;
use crate::functional::{cerami_residual, dual_norm, eval_energy, grad_energy, hessian_solver, HessianKind};
use crate::problem::ProblemSpec;
use crate::scalar::Real;

/// Newton iteration on `Phi'(u) = 0` from a nearby point.
///
/// A small Levenberg shift keeps the indefinite (and, for translation
/// invariant problems, nearly singular) second derivative invertible. Steps
/// are backtracked until the Cerami residual decreases. Returns the final
/// field, its residual and the number of iterations.
pub fn newton_polish<T: Real>(
    u0: &Field<T>,
    spec: &ProblemSpec<T>,
    tol: T,
    max_iter: usize,
) -> Result<(Field<T>, T, usize)> {
    let w = spec.grid.weight();
    let mut u = u0.clone();
    let mut res = cerami_residual(&u, spec)?;
    let mut iterations = 0;
    while iterations < max_iter && res >= tol {
        iterations += 1;
        let g = grad_energy(&u, spec)?.grad_phi;
        let shift = w * T::lit(1e-2) * res.min(T::one());
        let solver = match hessian_solver(&u, spec, HessianKind::Phi, T::zero(), shift) {
            Ok(s) => s,
            Err(_) => hessian_solver(&u, spec, HessianKind::Phi, T::zero(), shift + w * T::lit(1e-6))?,
        };
        let step = Field::from_vec_unchecked(solver.solve(g.values())).scaled(-T::one());
        if !step.is_finite() {
            break;
        }
        let mut t = T::one();
        let mut improved = false;
        for _ in 0..30 {
            let cand = u.axpy(t, &step);
            if let Ok(r) = cerami_residual(&cand, spec) {
                if r.is_finite() && r < res {
                    u = cand;
                    res = r;
                    improved = true;
                    break;
                }
            }
            t *= T::lit(0.5);
        }
        if !improved {
            break;
        }
    }
    Ok((u, res, iterations))
}

fn row<T: Real>(iteration: usize, u: &Field<T>, spec: &ProblemSpec<T>) -> Result<TraceRow<T>> {
    let e = eval_energy(u, spec)?;
    let g = grad_energy(u, spec)?.grad_phi;
    Ok(TraceRow {
        iteration,
        phi: e.phi,
        cerami: (T::one() + e.norm_w) * dual_norm(&g, spec),
        norm: e.norm_w,
    })
}

/// Armijo descent on `Phi` along the Sobolev gradient, recording `Phi`, the
/// Cerami residual and `||u||` at the start and after each of `budget`
/// steps. Stops early if the iterate blows up.
pub fn descend_cerami<T: Real>(u0: &Field<T>, spec: &ProblemSpec<T>, budget: usize) -> Result<Vec<TraceRow<T>>> {
    let metric = Metric::new(spec)?;
    let mut u = u0.clone();
    let mut current = row(0, &u, spec)?;
    let mut trace = vec![current];
    let mut step = T::one();
    for k in 1..=budget.max(1) {
        let g = grad_energy(&u, spec)?.grad_phi;
        let d = metric.riesz(&g);
        let slope = g.dot(&d);
        let mut moved = false;
        if slope > T::zero() {
            let mut s = step;
            for _ in 0..60 {
                let cand = u.axpy(-s, &d);
                if let Ok(val) = eval_energy(&cand, spec) {
                    if val.phi <= current.phi - T::lit(1e-4) * s * slope {
                        u = cand;
                        moved = true;
                        break;
                    }
                }
                s *= T::lit(0.5);
            }
            step = (s * T::lit(2.0)).min(T::lit(1e3));
        }
        current = if moved {
            row(k, &u, spec)?
        } else {
            TraceRow { iteration: k, ..current }
        };
        trace.push(current);
        if !current.norm.is_finite() || current.norm > T::lit(1e12) {
            break;
        }
    }
    Ok(trace)
}

//! The weighted eigenproblem `H'(u) = lambda I'(u)` on `M = {I = 1}`.
//!
//! The first eigenvalue is the minimum of `H` on `M`, found by
//! preconditioned projected descent. Higher eigenvalues for `p != 2` are
//! bracketed by the disjoint-bump construction: `n` bumps with separated
//! supports span a set on which `max H` over the `I`-unit sphere is
//! `max_i H(bump_i)`, an upper bound for `lambda_n`. That bound is then
//! sharpened by Newton refinement of the eigen-equation. At `p = 2` the
//! problem is a linear generalized eigenproblem and is solved densely.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::functional::{
    dual_norm, eval_energy, EnergyBreakdown, grad_energy, hessian_entries, HessianKind, Preconditioner,
};
use crate::grid::GridKind;
use crate::linalg::{BandSolver, DenseLu};
use crate::problem::ProblemSpec;
use crate::rng::{smooth_field, substream};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Certification {
    /// Discrete eigenvalue of the linear `p = 2` pencil.
    ExactP2,
    /// Eigen-equation solved to tolerance.
    Refined,
    /// Only the disjoint-bump upper bound is available.
    UpperBound,
}

#[derive(Debug, Clone)]
pub struct EigenPair<T> {
    pub lambda: T,
    pub u: Field<T>,
    /// `||H'(u) - lambda I'(u)||_*`
    pub residual: T,
    /// `|I(u) - 1|`
    pub normalization_defect: T,
    /// Tolerance the residual was driven below.
    pub tolerance: T,
}

impl<T: Real> EigenPair<T> {
    /// Builds a pair with `lambda = H(u) / I(u)` and fresh diagnostics.
    pub fn from_field(u: Field<T>, spec: &ProblemSpec<T>, tolerance: T) -> Result<Self> {
        let e = eval_energy(&u, spec)?;
        if !(e.i > T::zero()) {
            return Err(Error::NotInPositiveCone { value: e.i.as_f64() });
        }
        let lambda = e.h / e.i;
        let residual = eigen_residual(&u, lambda, spec)?;
        Ok(Self {
            lambda,
            u,
            residual,
            normalization_defect: (e.i - T::one()).abs(),
            tolerance,
        })
    }
}

pub fn eigen_residual<T: Real>(u: &Field<T>, lambda: T, spec: &ProblemSpec<T>) -> Result<T> {
    let g = grad_energy(u, spec)?;
    Ok(dual_norm(&g.grad_h.axpy(-lambda, &g.grad_i), spec))
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumEntry<T> {
    pub value: T,
    pub certification: Certification,
    /// Disjoint-bump bound this entry was refined from, if any.
    pub upper_bound: Option<T>,
    #[serde(skip)]
    pub pair: Option<EigenPair<T>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumEstimate<T> {
    pub entries: Vec<SpectrumEntry<T>>,
    /// Whether `entries` lists every eigenvalue of the discrete problem.
    pub exhaustive: bool,
}

/// Relative distance below which `lambda` counts as resonant.
pub const RESONANCE_TOL: f64 = 1e-9;

impl<T: Real> SpectrumEstimate<T> {
    pub fn values(&self) -> Vec<T> {
        self.entries.iter().map(|e| e.value).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The `m` with `lambda_m <= lambda < lambda_{m+1}`, when every value up
    /// to `lambda_{m+1}` is certified and `lambda` is not resonant.
    pub fn m_index(&self, lambda: T) -> Option<usize> {
        // resonant values count as below lambda, with their full multiplicity
        let below = |v: T| v <= lambda + T::lit(RESONANCE_TOL) * v.abs().max(T::one());
        for (m, e) in self.entries.iter().enumerate() {
            if e.certification == Certification::UpperBound {
                return None;
            }
            if !below(e.value) {
                return Some(m);
            }
        }
        if self.exhaustive {
            Some(self.entries.len())
        } else {
            None
        }
    }

    pub fn pair(&self, n: usize) -> Option<&EigenPair<T>> {
        self.entries.get(n).and_then(|e| e.pair.as_ref())
    }
}

/// Rescales `u` onto `M = {I = 1}`.
pub fn normalize_to_m<T: Real>(u: &Field<T>, spec: &ProblemSpec<T>) -> Result<Field<T>> {
    let e = eval_energy(u, spec)?;
    if !(e.i > T::zero()) {
        return Err(Error::NotInPositiveCone { value: e.i.as_f64() });
    }
    Ok(u.scaled(e.i.powf(-T::one() / spec.p)))
}

#[derive(Debug, Clone)]
pub struct RayleighOptions<T> {
    pub tol: T,
    pub max_iter: usize,
    pub starts: usize,
    pub seed: u64,
}

impl<T: Real> Default for RayleighOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-8),
            max_iter: 20_000,
            starts: 8,
            seed: 0,
        }
    }
}

/// Result of a projected descent run, including the Rayleigh quotient after
/// every accepted step.
#[derive(Debug, Clone)]
pub struct DescentRun<T> {
    pub pair: EigenPair<T>,
    pub history: Vec<T>,
    pub converged: bool,
}

/// Projected descent of the Rayleigh quotient `H / I` on `M`, optionally
/// confined to the free values where `mask` is true.
pub fn rayleigh_descent<T: Real>(
    spec: &ProblemSpec<T>,
    init: &Field<T>,
    tol: T,
    max_iter: usize,
    mask: Option<&[bool]>,
) -> Result<DescentRun<T>> {
    spec.grid.check_field(init)?;
    let precond = match mask {
        None => Preconditioner::new(spec)?,
        Some(m) => Preconditioner::masked(spec, m)?,
    };
    let restrict = |f: Field<T>| -> Field<T> {
        match mask {
            None => f,
            Some(m) => Field::from_vec_unchecked(
                f.values()
                    .iter()
                    .zip(m)
                    .map(|(&v, &keep)| if keep { v } else { T::zero() })
                    .collect(),
            ),
        }
    };
    let mut u = normalize_to_m(&restrict(init.clone()), spec)?;
    let p = spec.p;
    let armijo = T::lit(1e-4);
    let mut step = T::one();
    let mut e = eval_energy(&u, spec)?;
    let mut lambda = e.h / e.i;
    let mut history = vec![lambda];
    let mut residual;
    let mut best_residual = T::infinity();
    let mut idle = 0usize;
    // decreases below this are rounding noise in the quotient
    let slack = T::lit(8.0) * T::epsilon();
    for _ in 0..max_iter {
        let g = grad_energy(&u, spec)?;
        let r = restrict(g.grad_h.axpy(-lambda, &g.grad_i).scaled(T::one() / e.i));
        residual = dual_norm(&r, spec) * e.i;
        if residual < tol {
            let pair = finish_pair(u, spec, tol)?;
            return Ok(DescentRun {
                pair,
                history,
                converged: true,
            });
        }
        let lambda_moved = history.len() > 1
            && history[history.len() - 2] - lambda > slack * lambda.abs();
        if residual < best_residual * T::lit(0.999) || lambda_moved {
            best_residual = best_residual.min(residual);
            idle = 0;
        } else {
            idle += 1;
            if idle > 50 {
                break;
            }
        }
        let mut d = if p < T::lit(2.0) {
            // the fixed metric degenerates where |grad u| is small; use the
            // clamped local second derivative of H instead
            let local = match mask {
                None => local_metric(&u, spec, None),
                Some(m) => local_metric(&u, spec, Some(m)),
            };
            match local {
                Ok(solver) => restrict(Field::from_vec_unchecked(solver.solve(r.values()))),
                Err(_) => restrict(precond.apply(&r)),
            }
        } else {
            restrict(precond.apply(&r))
        };
        // remove the radial part so the step is tangent to {I = const}
        let radial = g.grad_i.dot(&d) / (p * e.i);
        d = d.axpy(-radial, &u);
        let slope = r.dot(&d);
        if !(slope > T::zero()) {
            break;
        }
        let try_step = |s: T| -> Option<(Field<T>, EnergyBreakdown<T>, T)> {
            let t = normalize_to_m(&u.axpy(-s, &d), spec).ok()?;
            let et = eval_energy(&t, spec).ok()?;
            let lt = et.h / et.i;
            (lt <= lambda - armijo * s * slope + slack * lambda.abs()).then_some((t, et, lt))
        };
        let mut accepted = None;
        let mut s = step;
        for k in 0..80 {
            if let Some(found) = try_step(s) {
                // Armijo also accepts overlong steps that barely damp the
                // stiff modes; prefer the half step when it does better
                if k == 0 {
                    if let Some(half) = try_step(s * T::lit(0.5)) {
                        if half.2 <= found.2 + slack * lambda.abs() {
                            s *= T::lit(0.5);
                            accepted = Some(half);
                            break;
                        }
                    }
                }
                accepted = Some(found);
                break;
            }
            s *= T::lit(0.5);
        }
        let Some((t, et, lt)) = accepted else {
            break;
        };
        u = t;
        e = et;
        lambda = lt;
        history.push(lambda);
        step = (s * T::lit(2.0)).min(T::lit(1e6));
    }
    let pair = finish_pair(u, spec, tol)?;
    let converged = pair.residual < tol;
    if !converged {
        log::debug!("rayleigh descent stopped at residual {}", pair.residual);
    }
    Ok(DescentRun {
        pair,
        history,
        converged,
    })
}

fn local_metric<T: Real>(u: &Field<T>, spec: &ProblemSpec<T>, mask: Option<&[bool]>) -> Result<BandSolver<T>> {
    let mut entries = hessian_entries(u, spec, HessianKind::Pencil, T::zero())?;
    if let Some(m) = mask {
        entries.retain(|&(i, j, _)| m[i] && m[j]);
        entries.extend((0..m.len()).filter(|&d| !m[d]).map(|d| (d, d, T::one())));
    }
    let (order, bw) = spec.grid.band_ordering();
    BandSolver::assemble(&order, bw, &entries)
}

fn finish_pair<T: Real>(u: Field<T>, spec: &ProblemSpec<T>, tol: T) -> Result<EigenPair<T>> {
    let u = normalize_to_m(&u, spec)?;
    EigenPair::from_field(u, spec, tol)
}

/// Residual tolerance matching an eigenvalue accuracy of about `tol`.
///
/// For `p < 2` the residual near a minimizer decays like `d^(p-1)` in the
/// distance `d` while the quotient error decays like `d^p`, so the residual
/// target is relaxed to `tol^((p-1)/p)`.
pub fn residual_tolerance<T: Real>(tol: T, p: T) -> T {
    if p < T::lit(2.0) {
        tol.powf((p - T::one()) / p)
    } else {
        tol
    }
}

/// Minimizes `H` on `M` from `init`; errors with the best iterate when the
/// residual does not drop below [`residual_tolerance`].
pub fn minimize_rayleigh<T: Real>(spec: &ProblemSpec<T>, init: &Field<T>, tol: T) -> Result<EigenPair<T>> {
    let e = eval_energy(init, spec)?;
    if !(e.i > T::zero()) {
        return Err(Error::NotInPositiveCone { value: e.i.as_f64() });
    }
    let opts = RayleighOptions::<T>::default();
    let tol = residual_tolerance(tol, spec.p);
    let run = rayleigh_descent(spec, init, tol, opts.max_iter, None)?;
    if run.converged {
        Ok(run.pair)
    } else {
        Err(Error::NotConverged {
            iterations: run.history.len(),
            residual: run.pair.residual.as_f64(),
            best: run.pair.u.values().iter().map(|v| v.as_f64()).collect(),
        })
    }
}

/// Seeded smooth initial fields with `I > 0`, one per start.
pub fn random_starts<T: Real>(spec: &ProblemSpec<T>, starts: usize, seed: u64) -> Result<Vec<Field<T>>> {
    if !spec.has_positive_weight() {
        return Err(Error::NotInPositiveCone { value: 0.0 });
    }
    let precond = Preconditioner::new(spec)?;
    let positive: Vec<bool> = (0..spec.grid.num_dofs())
        .map(|d| spec.v[spec.grid.dof_node(d)] > T::zero())
        .collect();
    (0..starts)
        .map(|k| {
            let mut rng = substream(seed, k as u64);
            for _ in 0..100 {
                let f = smooth_field(&mut rng, spec, &precond);
                // start 0 is sign-definite, the others signed
                let f = if k == 0 { f.map(|v| v.abs()) } else { f };
                if eval_energy(&f, spec)?.i > T::zero() {
                    return Ok(f);
                }
                let clipped = Field::from_vec_unchecked(
                    f.values()
                        .iter()
                        .zip(&positive)
                        .map(|(&v, &keep)| if keep { v } else { T::zero() })
                        .collect(),
                );
                if eval_energy(&clipped, spec)?.i > T::zero() {
                    return Ok(clipped);
                }
            }
            Err(Error::NotInPositiveCone { value: 0.0 })
        })
        .collect()
}

/// Multi-start minimization; returns the smallest eigenvalue found.
/// Starts run in parallel and are merged in start order.
pub fn lowest_eigenpair<T: Real>(spec: &ProblemSpec<T>, opts: &RayleighOptions<T>) -> Result<EigenPair<T>> {
    let inits = random_starts(spec, opts.starts.max(1), opts.seed)?;
    let tol = residual_tolerance(opts.tol, spec.p);
    let runs: Vec<Result<DescentRun<T>>> = inits
        .par_iter()
        .map(|init| rayleigh_descent(spec, init, tol, opts.max_iter, None))
        .collect();
    let mut best: Option<DescentRun<T>> = None;
    let mut first_err = None;
    for run in runs {
        match run {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(b) => r.pair.lambda < b.pair.lambda,
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let best = match (best, first_err) {
        (Some(b), _) => b,
        (None, Some(e)) => return Err(e),
        (None, None) => unreachable!("at least one start"),
    };
    if best.converged {
        Ok(best.pair)
    } else {
        Err(Error::NotConverged {
            iterations: best.history.len(),
            residual: best.pair.residual.as_f64(),
            best: best.pair.u.values().iter().map(|v| v.as_f64()).collect(),
        })
    }
}

/// Whether `candidate` differs from every stored field up to sign.
pub fn is_distinct<T: Real>(candidate: &Field<T>, stored: &[Field<T>]) -> bool {
    stored.iter().all(|old| {
        let n = old.norm_l2();
        let minus = (candidate - old).norm_l2() / n;
        let plus = (candidate + old).norm_l2() / n;
        minus > T::lit(1e-3) && plus > T::lit(1e-3)
    })
}

fn supports<T: Real>(f: &Field<T>) -> Vec<bool> {
    f.values().iter().map(|v| *v != T::zero()).collect()
}

/// Checks that no difference stencil touches two bumps, which makes `H` and
/// `I` additive over linear combinations of the bumps.
pub fn check_separated<T: Real>(bumps: &[Field<T>], spec: &ProblemSpec<T>) -> Result<()> {
    let grid = &spec.grid;
    let mut owner = vec![usize::MAX; grid.num_nodes()];
    for (k, b) in bumps.iter().enumerate() {
        grid.check_field(b)?;
        for (d, &v) in b.values().iter().enumerate() {
            if v != T::zero() {
                let node = grid.dof_node(d);
                if owner[node] != usize::MAX {
                    return Err(Error::OverlappingSupports(owner[node], k));
                }
                owner[node] = k;
            }
        }
    }
    for node in 0..grid.num_nodes() {
        let mut seen = owner[node];
        for a in 0..grid.dims() {
            if let Some(nb) = grid.forward(node, a) {
                let o = owner[nb];
                if o != usize::MAX {
                    if seen != usize::MAX && seen != o {
                        return Err(Error::OverlappingSupports(seen.min(o), seen.max(o)));
                    }
                    seen = o;
                }
            }
        }
    }
    Ok(())
}

/// Upper bound for `lambda_n` from `n` bumps with separated supports:
/// the maximum of `H` over the `I`-unit sphere of their span, which equals
/// `max_i H(bump_i / I(bump_i)^(1/p))`.
pub fn subspace_minimax_bound<T: Real>(n: usize, spec: &ProblemSpec<T>, bumps: &[Field<T>]) -> Result<T> {
    if bumps.len() != n || n == 0 {
        return Err(Error::InvalidProblem(format!(
            "expected {n} bumps, got {}",
            bumps.len()
        )));
    }
    check_separated(bumps, spec)?;
    let mut bound = T::neg_infinity();
    for b in bumps {
        let h = eval_energy(&normalize_to_m(b, spec)?, spec)?.h;
        bound = bound.max(h);
    }
    Ok(bound)
}

/// Smooth tents on `n` equal slabs along the first axis, one zero node
/// between neighbours, restricted to `{V > 0}`.
pub fn default_bumps<T: Real>(n: usize, spec: &ProblemSpec<T>) -> Result<Vec<Field<T>>> {
    let grid = &spec.grid;
    let n0 = grid.nodes_per_axis()[0];
    let (lo, hi) = match grid.kind() {
        GridKind::Periodic1d => (0, n0),
        GridKind::BoxNd => (1, n0 - 1),
    };
    let span = hi - lo;
    if n == 0 || span < 2 * n {
        return Err(Error::InvalidProblem(format!(
            "cannot fit {n} separated bumps on {span} nodes"
        )));
    }
    let pi = T::PI();
    let mut bumps = Vec::with_capacity(n);
    for k in 0..n {
        let start = lo + k * span / n;
        let end = lo + (k + 1) * span / n;
        let len = T::from_count(end - start);
        let values: Vec<T> = (0..grid.num_dofs())
            .map(|d| {
                let node = grid.dof_node(d);
                let i = grid.axis_index(node, 0);
                if i <= start || i >= end || !(spec.v[node] > T::zero()) {
                    return T::zero();
                }
                let mut v = (pi * T::from_count(i - start) / len).sin();
                for a in 1..grid.dims() {
                    let na = grid.nodes_per_axis()[a];
                    let j = grid.axis_index(node, a);
                    v *= (pi * T::from_count(j) / T::from_count(na - 1)).sin();
                }
                v
            })
            .collect();
        let f = Field::from_vec_unchecked(values);
        if eval_energy(&f, spec)?.i <= T::zero() {
            return Err(Error::NotInPositiveCone { value: 0.0 });
        }
        bumps.push(f);
    }
    Ok(bumps)
}

/// Lowers every bump's Rayleigh quotient on its own support. Returns the
/// optimized bumps (on `M`) and the bound after each sweep of descent steps;
/// the bound sequence is non-increasing.
pub fn optimize_bumps<T: Real>(
    spec: &ProblemSpec<T>,
    bumps: &[Field<T>],
    tol: T,
    max_iter: usize,
) -> Result<(Vec<Field<T>>, Vec<T>)> {
    check_separated(bumps, spec)?;
    let runs: Vec<Result<DescentRun<T>>> = bumps
        .par_iter()
        .map(|b| {
            let mask = supports(b);
            rayleigh_descent(spec, b, tol, max_iter, Some(&mask))
        })
        .collect();
    let runs: Vec<DescentRun<T>> = runs.into_iter().collect::<Result<_>>()?;
    let longest = runs.iter().map(|r| r.history.len()).max().unwrap_or(0);
    let bounds = (0..longest)
        .map(|k| {
            runs.iter()
                .map(|r| r.history[k.min(r.history.len() - 1)])
                .fold(T::neg_infinity(), T::max)
        })
        .collect();
    Ok((runs.into_iter().map(|r| r.pair.u).collect(), bounds))
}

/// Newton iteration on `{H'(u) - lambda I'(u) = 0, I(u) = 1}`.
///
/// The Jacobian carries a Levenberg shift proportional to the residual so
/// that multiple eigenvalues (exact at `p = 2` on symmetric domains) do not
/// stall it. For `p < 2` the second derivatives are clamped and the steps
/// damped, which turns the iteration into a damped fixed-point scheme.
pub fn refine_eigenpair<T: Real>(pair: &EigenPair<T>, spec: &ProblemSpec<T>, tol: T) -> Result<EigenPair<T>> {
    if !pair.residual.is_finite() {
        return Err(Error::InvalidProblem("eigenpair residual is not finite".into()));
    }
    let n = spec.grid.num_dofs();
    let mut u = normalize_to_m(&pair.u, spec).unwrap_or_else(|_| pair.u.clone());
    let mut lambda = eval_energy(&u, spec)
        .map(|e| if e.i > T::zero() { e.h / e.i } else { pair.lambda })
        .unwrap_or(pair.lambda);
    let w = spec.grid.weight();
    let max_damping = if spec.p < T::lit(2.0) { T::lit(0.5) } else { T::one() };
    let merit = |u: &Field<T>, lambda: T| -> Result<(T, T)> {
        let e = eval_energy(u, spec)?;
        let r = eigen_residual(u, lambda, spec)?;
        Ok((r, (e.i - T::one()).abs()))
    };
    let (mut res, mut defect) = merit(&u, lambda)?;
    let mut best = (res, u.clone(), lambda);
    for iteration in 0..60 {
        if res < tol && defect < T::lit(1e-12) {
            break;
        }
        let g = grad_energy(&u, spec)?;
        let e = eval_energy(&u, spec)?;
        let f = g.grad_h.axpy(-lambda, &g.grad_i);
        let shift = w * res.min(T::one()).max(T::lit(1e-10));
        let dim = n + 1;
        let mut a = vec![T::zero(); dim * dim];
        for (i, j, v) in hessian_entries(&u, spec, HessianKind::Pencil, lambda)? {
            a[i * dim + j] += v;
        }
        for d in 0..n {
            a[d * dim + d] += shift;
            a[d * dim + n] = -g.grad_i[d];
            a[n * dim + d] = g.grad_i[d];
        }
        let lu = DenseLu::factor(dim, a).map_err(|err| match err {
            Error::SingularMatrix { .. } => Error::SingularJacobian { iteration },
            other => other,
        })?;
        let mut rhs: Vec<T> = f.values().iter().map(|&v| -v).collect();
        rhs.push(T::one() - e.i);
        let step = lu.solve(&rhs);
        let du = Field::from_vec_unchecked(step[..n].to_vec());
        let dl = step[n];
        let mut t = max_damping;
        let mut improved = false;
        for _ in 0..20 {
            let cand = u.axpy(t, &du);
            let cl = lambda + t * dl;
            if let Ok((r, def)) = merit(&cand, cl) {
                if r.is_finite() && (r < res || (r <= res && def < defect)) {
                    u = cand;
                    lambda = cl;
                    res = r;
                    defect = def;
                    improved = true;
                    break;
                }
            }
            t *= T::lit(0.5);
        }
        if res < best.0 {
            best = (res, u.clone(), lambda);
        }
        if !improved {
            break;
        }
    }
    let (_, u, _) = best;
    let refined = EigenPair::from_field(normalize_to_m(&u, spec)?, spec, tol)?;
    if refined.residual < tol {
        Ok(refined)
    } else {
        Err(Error::NotConverged {
            iterations: 60,
            residual: refined.residual.as_f64(),
            best: refined.u.values().iter().map(|v| v.as_f64()).collect(),
        })
    }
}

/// Largest pencil handed to the dense oracle.
pub const ORACLE_LIMIT: usize = 2048;

/// All eigenvalues with positive `I`-form of the linear pencil at `p = 2`:
/// `A u = lambda B u` with `A = H''` (positive definite) and `B = I''`
/// (diagonal, possibly indefinite). Solved through `L^{-1} B L^{-T}` with
/// `A = L L^T`, keeping its positive eigenvalues `1 / lambda`.
pub fn linear_spectrum_oracle<T: Real>(spec: &ProblemSpec<T>) -> Result<SpectrumEstimate<T>> {
    use nalgebra::{DMatrix, DVector, SymmetricEigen};

    if spec.p != T::lit(2.0) {
        return Err(Error::RequiresLinear(spec.p.as_f64()));
    }
    let grid = &spec.grid;
    let n = grid.num_dofs();
    if n > ORACLE_LIMIT {
        return Err(Error::TooLarge {
            dofs: n,
            limit: ORACLE_LIMIT,
        });
    }
    let zero = Field::zeros(n);
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (i, j, v) in hessian_entries(&zero, spec, HessianKind::Stiffness, T::zero())? {
        a[(i, j)] += v.as_f64();
    }
    let w = grid.weight().as_f64();
    let bdiag: Vec<f64> = (0..n)
        .map(|d| w * spec.v[grid.dof_node(d)].as_f64())
        .collect();
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::InvalidProblem("stiffness matrix is not positive definite".into()))?;
    let l = chol.l();
    let b = DMatrix::from_diagonal(&DVector::from_vec(bdiag.clone()));
    let lb = l
        .solve_lower_triangular(&b)
        .ok_or(Error::SingularMatrix { pivot: 0 })?;
    let mut c = l
        .solve_lower_triangular(&lb.transpose())
        .ok_or(Error::SingularMatrix { pivot: 0 })?;
    c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lt = l.transpose();
    let mut entries = Vec::new();
    for (k, &mu) in eig.eigenvalues.iter().enumerate() {
        if mu <= 1e-13 * top {
            continue;
        }
        let y = eig.eigenvectors.column(k).into_owned();
        let x = lt
            .solve_upper_triangular(&y)
            .ok_or(Error::SingularMatrix { pivot: k })?;
        // I(x) = x^T B x / 2
        let ix: f64 = x.iter().zip(&bdiag).map(|(v, b)| v * v * b).sum::<f64>() / 2.0;
        let mut x: Vec<f64> = x.iter().map(|v| v / ix.sqrt()).collect();
        orient(&mut x);
        let u = Field::from_vec_unchecked(x.iter().map(|&v| T::lit(v)).collect());
        let pair = EigenPair::from_field(u, spec, T::lit(1e-8))?;
        entries.push(SpectrumEntry {
            value: T::lit(1.0 / mu),
            certification: Certification::ExactP2,
            upper_bound: None,
            pair: Some(pair),
        });
    }
    entries.sort_by(|x, y| x.value.partial_cmp(&y.value).expect("finite eigenvalues"));
    Ok(SpectrumEstimate {
        entries,
        exhaustive: true,
    })
}

/// Deterministic sign: positive mean, or a positive largest entry.
fn orient(x: &mut [f64]) {
    let sum: f64 = x.iter().sum();
    let norm: f64 = x.iter().map(|v| v.abs()).sum();
    let flip = if sum.abs() > 1e-8 * norm {
        sum < 0.0
    } else {
        let k = x
            .iter()
            .enumerate()
            .fold(0, |b, (i, v)| if v.abs() > x[b].abs() * (1.0 + 1e-12) { i } else { b });
        x[k] < 0.0
    };
    if flip {
        x.iter_mut().for_each(|v| *v = -*v);
    }
}

/// `#{n : lambda_n <= lambda}` at `p = 2`.
pub fn count_spectrum_below<T: Real>(lambda: T, spec: &ProblemSpec<T>) -> Result<usize> {
    let s = linear_spectrum_oracle(spec)?;
    for e in &s.entries {
        if (lambda - e.value).abs() <= T::lit(RESONANCE_TOL) * e.value.abs().max(T::one()) {
            return Err(Error::Resonant {
                lambda: lambda.as_f64(),
                eigenvalue: e.value.as_f64(),
            });
        }
    }
    Ok(s.entries.iter().filter(|e| e.value <= lambda).count())
}

/// First `count` eigenvalues: exact at `p = 2`, otherwise the multi-start
/// minimum followed by refined disjoint-bump bounds.
pub fn estimate_spectrum<T: Real>(
    spec: &ProblemSpec<T>,
    count: usize,
    opts: &RayleighOptions<T>,
) -> Result<SpectrumEstimate<T>> {
    if spec.p == T::lit(2.0) && spec.grid.num_dofs() <= ORACLE_LIMIT {
        let mut s = linear_spectrum_oracle(spec)?;
        if count < s.entries.len() {
            s.entries.truncate(count);
            s.exhaustive = false;
        }
        return Ok(s);
    }
    let mut entries = Vec::with_capacity(count);
    let first = lowest_eigenpair(spec, opts)?;
    let first = refine_eigenpair(&first, spec, opts.tol).unwrap_or(first);
    entries.push(SpectrumEntry {
        value: first.lambda,
        certification: Certification::Refined,
        upper_bound: None,
        pair: Some(first),
    });
    for n in 2..=count {
        let bumps = default_bumps(n, spec)?;
        let (optimized, bounds) = optimize_bumps(spec, &bumps, opts.tol, opts.max_iter)?;
        let bound = subspace_minimax_bound(n, spec, &optimized)?
            .min(bounds.last().copied().unwrap_or(T::infinity()));
        entries.push(refine_from_bumps(spec, &optimized, bound, opts.tol));
    }
    entries.sort_by(|x, y| x.value.partial_cmp(&y.value).expect("finite eigenvalues"));
    Ok(SpectrumEstimate {
        entries,
        exhaustive: false,
    })
}

/// Refines the alternating-sign sum of optimized bumps; keeps the refined
/// value only when it does not exceed the bump bound.
pub fn refine_from_bumps<T: Real>(
    spec: &ProblemSpec<T>,
    bumps: &[Field<T>],
    bound: T,
    tol: T,
) -> SpectrumEntry<T> {
    let upper = SpectrumEntry {
        value: bound,
        certification: Certification::UpperBound,
        upper_bound: Some(bound),
        pair: None,
    };
    let mut init = Field::zeros(spec.grid.num_dofs());
    for (k, b) in bumps.iter().enumerate() {
        let sign = if k % 2 == 0 { T::one() } else { -T::one() };
        init = init.axpy(sign, b);
    }
    let Ok(start) = normalize_to_m(&init, spec).and_then(|u| EigenPair::from_field(u, spec, tol)) else {
        return upper;
    };
    match refine_eigenpair(&start, spec, tol) {
        Ok(pair) if pair.lambda <= bound + tol.max(T::lit(1e-9) * bound.abs()) => SpectrumEntry {
            value: pair.lambda,
            certification: Certification::Refined,
            upper_bound: Some(bound),
            pair: Some(pair),
        },
        _ => upper,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::problem::NonlinearitySpec;

    fn spec(n: usize, p: f64) -> ProblemSpec<f64> {
        ProblemSpec::uniform(
            Grid::periodic(n, 1.0).unwrap(),
            p,
            0.0,
            1.0,
            1.0,
            NonlinearitySpec::pure_power(p + 2.0),
        )
        .unwrap()
    }

    #[test]
    fn normalization() {
        let s = spec(16, 2.0);
        // I(c) = c^2 / 2, so I(2) = 2 = 2^p / 2
        let u = Field::constant(16, 2.0 * 2f64.sqrt());
        let e = eval_energy(&u, &s).unwrap();
        assert!((e.i - 4.0).abs() < 1e-14);
        let m = normalize_to_m(&u, &s).unwrap();
        assert!((m[0] - 2f64.sqrt()).abs() < 1e-14);
        let again = normalize_to_m(&m, &s).unwrap();
        assert!((&again - &m).max_abs() < 1e-15);
    }

    #[test]
    fn normalization_rejects_negative_weight_support() {
        let mut s = spec(16, 2.0);
        s.v = (0..16).map(|i| if i < 8 { 1.0 } else { -1.0 }).collect();
        let u = Field::new((0..16).map(|i| if i < 8 { 0.0 } else { 1.0 }).collect()).unwrap();
        assert!(matches!(
            normalize_to_m(&u, &s),
            Err(Error::NotInPositiveCone { .. })
        ));
    }

    #[test]
    fn constant_eigenpair_is_fixed_by_newton() {
        let s = spec(32, 2.0);
        let u = normalize_to_m(&Field::constant(32, 1.0), &s).unwrap();
        let pair = EigenPair::from_field(u.clone(), &s, 1e-10).unwrap();
        assert!(pair.residual < 1e-13);
        let refined = refine_eigenpair(&pair, &s, 1e-10).unwrap();
        assert!((refined.lambda - 1.0).abs() < 1e-13);
        assert!((&refined.u - &u).max_abs() < 1e-13);
    }

    #[test]
    fn separated_support_check() {
        let s = spec(16, 2.0);
        let a = Field::new((0..16).map(|i| if (1..8).contains(&i) { 1.0 } else { 0.0 }).collect()).unwrap();
        let touching =
            Field::new((0..16).map(|i| if (8..15).contains(&i) { 1.0 } else { 0.0 }).collect()).unwrap();
        let apart =
            Field::new((0..16).map(|i| if (9..16).contains(&i) { 1.0 } else { 0.0 }).collect()).unwrap();
        assert!(matches!(
            subspace_minimax_bound(2, &s, &[a.clone(), touching]),
            Err(Error::OverlappingSupports(0, 1))
        ));
        // 15 wraps onto 0, which is outside `a`
        assert!(subspace_minimax_bound(2, &s, &[a.clone(), apart.clone()]).is_ok());
        assert!(subspace_minimax_bound(2, &s, &[a.clone(), a]).is_err());
    }

    #[test]
    fn single_bump_bound_is_rayleigh_value() {
        let s = spec(32, 2.0);
        let u = Field::constant(32, 1.0);
        let b = subspace_minimax_bound(1, &s, &[u]).unwrap();
        assert!((b - 1.0).abs() < 1e-14);
    }

    #[test]
    fn m_index_and_resonance() {
        let s = spec(64, 2.0);
        let spectrum = linear_spectrum_oracle(&s).unwrap();
        assert_eq!(spectrum.m_index(0.5), Some(0));
        assert_eq!(spectrum.m_index(20.0), Some(1));
        // lambda_2 = lambda_3 on the circle; resonance takes both copies
        let l2 = spectrum.values()[1];
        assert_eq!(spectrum.m_index(l2), Some(3));
        assert_eq!(count_spectrum_below(0.5, &s).unwrap(), 0);
        assert_eq!(count_spectrum_below(20.0, &s).unwrap(), 1);
        assert!(matches!(
            count_spectrum_below(1.0, &s),
            Err(Error::Resonant { .. })
        ));
        assert!(matches!(
            linear_spectrum_oracle(&spec(16, 3.0)),
            Err(Error::RequiresLinear(_))
        ));
    }

    #[test]
    fn oracle_respects_positive_pencil() {
        let mut s = spec(64, 2.0);
        s.v = (0..64).map(|i| if i < 32 { 1.0 } else { -1.0 }).collect();
        let spectrum = linear_spectrum_oracle(&s).unwrap();
        assert!(spectrum.values()[0] > 0.0);
        for e in &spectrum.entries {
            let pair = e.pair.as_ref().unwrap();
            assert!((eval_energy(&pair.u, &s).unwrap().i - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn distinctness_modulo_sign() {
        let a = Field::new(vec![1.0, 0.0]).unwrap();
        assert!(!is_distinct(&a.scaled(-1.0), std::slice::from_ref(&a)));
        assert!(is_distinct(&Field::new(vec![0.0, 1.0]).unwrap(), &[a]));
    }
}

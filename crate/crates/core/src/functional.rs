//! The energies `H`, `I`, `J`, `Phi = H - lambda I - J` on a grid, their
//! exact discrete gradients and Hessians, and the tests built on them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{divergence, forward_difference_full, Flux};
use crate::linalg::BandSolver;
use crate::problem::ProblemSpec;
use crate::scalar::{signed_pow, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown<T> {
    #[serde(rename = "H")]
    pub h: T,
    #[serde(rename = "I")]
    pub i: T,
    #[serde(rename = "J")]
    pub j: T,
    #[serde(rename = "Phi")]
    pub phi: T,
    /// `||u|| = (p H)^(1/p)`
    pub norm_w: T,
}

#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub grad_h: Field<T>,
    pub grad_i: Field<T>,
    pub grad_j: Field<T>,
    pub grad_phi: Field<T>,
}

fn check_node<T: Real>(v: T, node: usize, quantity: &'static str) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { node, quantity })
    }
}

pub(crate) fn norm_from_h<T: Real>(h: T, p: T) -> T {
    (p * h).max(T::zero()).powf(T::one() / p)
}

/// Evaluates `H`, `I`, `J` and `Phi` by node quadrature.
pub fn eval_energy<T: Real>(u: &Field<T>, spec: &ProblemSpec<T>) -> Result<EnergyBreakdown<T>> {
    let grid = &spec.grid;
    grid.check_field(u)?;
    let full = grid.extend(u.values());
    let flux = forward_difference_full(&full, grid);
    let p = spec.p;
    let (mut sh, mut si, mut sj) = (T::zero(), T::zero(), T::zero());
    for (node, &t) in full.iter().enumerate() {
        let at = t.abs().powf(p);
        let grad_term = check_node(flux.magnitude(node).powf(p), node, "|grad u|^p")?;
        sh += grad_term + spec.b[node] * at;
        si += spec.v[node] * at;
        sj += check_node(spec.f.primitive(spec.coords(node), t), node, "F(x, u)")?;
    }
    let w = grid.weight();
    let h = check_node(w * sh / p, 0, "H")?;
    let i = check_node(w * si / p, 0, "I")?;
    let j = check_node(w * sj, 0, "J")?;
    Ok(EnergyBreakdown {
        h,
        i,
        j,
        phi: h - spec.lambda * i - j,
        norm_w: norm_from_h(h, p),
    })
}

/// `Phi(u)` alone.
pub fn phi<T: Real>(u: &Field<T>, spec: &ProblemSpec<T>) -> Result<T> {
    Ok(eval_energy(u, spec)?.phi)
}

/// `|g|^(p-2) g` per node and axis.
fn flux_power<T: Real>(flux: &Flux<T>, p: T) -> Flux<T> {
    let n = flux.axis(0).len();
    let factors: Vec<T> = (0..n)
        .map(|node| {
            let m = flux.magnitude(node);
            if m == T::zero() {
                T::zero()
            } else {
                m.powf(p - T::lit(2.0))
            }
        })
        .collect();
    Flux::from_components(
        (0..flux.dims())
            .map(|a| flux.axis(a).iter().zip(&factors).map(|(&g, &s)| g * s).collect())
            .collect(),
    )
}

/// Exact derivatives of the discrete sums of [`eval_energy`] with respect
/// to the free node values.
pub fn grad_energy<T: Real>(u: &Field<T>, spec: &ProblemSpec<T>) -> Result<Gradients<T>> {
    let grid = &spec.grid;
    grid.check_field(u)?;
    let full = grid.extend(u.values());
    let flux = forward_difference_full(&full, grid);
    let div = divergence(&flux_power(&flux, spec.p), grid);
    let w = grid.weight();
    let n = grid.num_dofs();
    let (mut gh, mut gi, mut gj, mut gp) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for d in 0..n {
        let node = grid.dof_node(d);
        let t = full[node];
        let phi_p = signed_pow(t, spec.p - T::one());
        let h = check_node(w * (spec.b[node] * phi_p - div[node]), node, "H'(u)")?;
        let i = w * spec.v[node] * phi_p;
        let j = check_node(w * spec.f.f(spec.coords(node), t), node, "f(x, u)")?;
        gh.push(h);
        gi.push(i);
        gj.push(j);
        gp.push(h - spec.lambda * i - j);
    }
    Ok(Gradients {
        grad_h: Field::from_vec_unchecked(gh),
        grad_i: Field::from_vec_unchecked(gi),
        grad_j: Field::from_vec_unchecked(gj),
        grad_phi: Field::from_vec_unchecked(gp),
    })
}

/// Quadrature-weighted Euclidean norm of a residual covector, used in place
/// of the dual norm of `W`: `sqrt(sum r_j^2 / w_j)`.
pub fn dual_norm<T: Real>(r: &Field<T>, spec: &ProblemSpec<T>) -> T {
    (r.dot(r) / spec.grid.weight()).sqrt()
}

/// `(1 + ||u||) ||Phi'(u)||_*`
pub fn cerami_residual<T: Real>(u: &Field<T>, spec: &ProblemSpec<T>) -> Result<T> {
    let e = eval_energy(u, spec)?;
    let g = grad_energy(u, spec)?;
    Ok((T::one() + e.norm_w) * dual_norm(&g.grad_phi, spec))
}

/// Lower clamp applied to `|g|` and `|u|` where the second derivative of a
/// power below 2 is singular.
fn regularized<T: Real>(m: T, p: T) -> Option<T> {
    if m == T::zero() {
        if p > T::lit(2.0) {
            None
        } else if p == T::lit(2.0) {
            Some(T::one())
        } else {
            Some(T::lit(1e-8).powf(p - T::lit(2.0)))
        }
    } else if p < T::lit(2.0) {
        Some(m.max(T::lit(1e-8)).powf(p - T::lit(2.0)))
    } else {
        Some(m.powf(p - T::lit(2.0)))
    }
}

/// Which second derivative to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianKind {
    /// `Phi''(u)`
    Phi,
    /// `H''(u) - mu I''(u)`, the linearization of the eigenproblem
    Pencil,
    /// `H''` of the quadratic (`p = 2`) energy, independent of `u`: the Riesz
    /// map of the `W^{1,2}` inner product used as a preconditioner
    Stiffness,
}

/// Assembles a symmetric second derivative as `(row, col, value)` triplets
/// over free values. `mu` is the spectral parameter for
/// [`HessianKind::Pencil`] and ignored otherwise.
pub fn hessian_entries<T: Real>(
    u: &Field<T>,
    spec: &ProblemSpec<T>,
    kind: HessianKind,
    mu: T,
) -> Result<Vec<(usize, usize, T)>> {
    let grid = &spec.grid;
    grid.check_field(u)?;
    let dims = grid.dims();
    let w = grid.weight();
    let two = T::lit(2.0);
    let p = if kind == HessianKind::Stiffness { two } else { spec.p };
    let full = grid.extend(u.values());
    let flux = forward_difference_full(&full, grid);
    let mut out = Vec::with_capacity(grid.num_nodes() * (dims + 1) * (dims + 1) + grid.num_dofs());
    let mut stencil: Vec<(Option<usize>, Vec<T>)> = Vec::with_capacity(dims + 1);
    let mut local = vec![T::zero(); dims * dims];
    for node in 0..grid.num_nodes() {
        // M = |g|^(p-2) I + (p-2)|g|^(p-4) g g^T
        let g: Vec<T> = (0..dims).map(|a| flux.axis(a)[node]).collect();
        let mag = flux.magnitude(node);
        let Some(s) = regularized(mag, p) else {
            continue;
        };
        for a in 0..dims {
            for b in 0..dims {
                let iso = if a == b { s } else { T::zero() };
                let aniso = if mag > T::zero() && p != two {
                    (p - two) * s * g[a] * g[b] / (mag * mag)
                } else {
                    T::zero()
                };
                local[a * dims + b] = w * (iso + aniso);
            }
        }
        // columns of the local difference matrix G (dims x stencil)
        stencil.clear();
        stencil.push((
            grid.node_dof(node),
            grid.spacing().iter().map(|&h| -T::one() / h).collect(),
        ));
        for a in 0..dims {
            if let Some(nb) = grid.forward(node, a) {
                let mut col = vec![T::zero(); dims];
                col[a] = T::one() / grid.spacing()[a];
                stencil.push((grid.node_dof(nb), col));
            }
        }
        for (ds, cs) in &stencil {
            let Some(r) = *ds else { continue };
            for (dt, ct) in &stencil {
                let Some(c) = *dt else { continue };
                let mut v = T::zero();
                for a in 0..dims {
                    if cs[a] == T::zero() {
                        continue;
                    }
                    for b in 0..dims {
                        v += cs[a] * local[a * dims + b] * ct[b];
                    }
                }
                if v != T::zero() {
                    out.push((r, c, v));
                }
            }
        }
    }
    for d in 0..grid.num_dofs() {
        let node = grid.dof_node(d);
        let t = full[node];
        let diag = match kind {
            HessianKind::Stiffness => w * spec.b[node],
            _ => {
                let pw = regularized(t.abs(), p).unwrap_or(T::zero()) * (p - T::one());
                let weight = match kind {
                    HessianKind::Phi => spec.b[node] - spec.lambda * spec.v[node],
                    _ => spec.b[node] - mu * spec.v[node],
                };
                let nonlinear = if kind == HessianKind::Phi {
                    spec.f.df(spec.coords(node), t)
                } else {
                    T::zero()
                };
                w * (weight * pw - nonlinear)
            }
        };
        out.push((d, d, check_node(diag, node, "Hessian diagonal")?));
    }
    Ok(out)
}

/// Applies assembled triplets to a vector.
pub fn apply_entries<T: Real>(entries: &[(usize, usize, T)], v: &Field<T>) -> Field<T> {
    let mut out = vec![T::zero(); v.len()];
    for &(i, j, a) in entries {
        out[i] += a * v[j];
    }
    Field::from_vec_unchecked(out)
}

/// Band solver for the selected Hessian, with `shift` added to the diagonal.
pub fn hessian_solver<T: Real>(
    u: &Field<T>,
    spec: &ProblemSpec<T>,
    kind: HessianKind,
    mu: T,
    shift: T,
) -> Result<BandSolver<T>> {
    let mut entries = hessian_entries(u, spec, kind, mu)?;
    if shift != T::zero() {
        entries.extend((0..u.len()).map(|d| (d, d, shift)));
    }
    let (order, bw) = spec.grid.band_ordering();
    BandSolver::assemble(&order, bw, &entries)
}

/// Riesz map of the `p = 2` energy norm, factored once per problem.
#[derive(Debug, Clone)]
pub struct Preconditioner<T> {
    solver: BandSolver<T>,
}

impl<T: Real> Preconditioner<T> {
    pub fn new(spec: &ProblemSpec<T>) -> Result<Self> {
        let zero = Field::zeros(spec.grid.num_dofs());
        Ok(Self {
            solver: hessian_solver(&zero, spec, HessianKind::Stiffness, T::zero(), T::zero())?,
        })
    }

    /// The stiffness map restricted to the free values where `mask` holds;
    /// masked-out values are decoupled and left unchanged.
    pub fn masked(spec: &ProblemSpec<T>, mask: &[bool]) -> Result<Self> {
        let zero = Field::zeros(spec.grid.num_dofs());
        if mask.len() != zero.len() {
            return Err(Error::LengthMismatch {
                expected: zero.len(),
                got: mask.len(),
            });
        }
        let mut entries: Vec<(usize, usize, T)> =
            hessian_entries(&zero, spec, HessianKind::Stiffness, T::zero())?
                .into_iter()
                .filter(|&(i, j, _)| mask[i] && mask[j])
                .collect();
        entries.extend((0..mask.len()).filter(|&d| !mask[d]).map(|d| (d, d, T::one())));
        let (order, bw) = spec.grid.band_ordering();
        Ok(Self {
            solver: BandSolver::assemble(&order, bw, &entries)?,
        })
    }

    /// Sobolev gradient: solves `K s = g`.
    pub fn apply(&self, g: &Field<T>) -> Field<T> {
        Field::from_vec_unchecked(self.solver.solve(g.values()))
    }
}

/// `<H'(u) - H'(v), u - v> - (||u||^(p-1) - ||v||^(p-1)) (||u|| - ||v||)`,
/// non-negative up to rounding.
pub fn monotonicity_gap<T: Real>(u: &Field<T>, v: &Field<T>, spec: &ProblemSpec<T>) -> Result<T> {
    spec.grid.check_field(u)?;
    spec.grid.check_field(v)?;
    let (eu, ev) = (eval_energy(u, spec)?, eval_energy(v, spec)?);
    let (gu, gv) = (grad_energy(u, spec)?, grad_energy(v, spec)?);
    let diff = u - v;
    let pairing = (&gu.grad_h - &gv.grad_h).dot(&diff);
    let pm1 = spec.p - T::one();
    let (nu, nv) = (eu.norm_w, ev.norm_w);
    Ok(pairing - (nu.powf(pm1) - nv.powf(pm1)) * (nu - nv))
}

/// Membership of `u` in the closed cones `C- = {H <= lambda_m I}` and
/// `C+ = {H >= lambda_{m+1} I}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConePosition {
    pub in_c_minus: bool,
    pub in_c_plus: bool,
}

impl ConePosition {
    pub fn neither(&self) -> bool {
        !self.in_c_minus && !self.in_c_plus
    }

    pub fn label(&self) -> &'static str {
        match (self.in_c_minus, self.in_c_plus) {
            (true, true) => "both",
            (true, false) => "C-",
            (false, true) => "C+",
            (false, false) => "neither",
        }
    }
}

/// Cone test from already evaluated energies, with the scale-aware
/// tolerance `1e-12 (H + |I| + 1)`.
pub fn cone_position_from<T: Real>(h: T, i: T, lambda_m: T, lambda_m1: T) -> ConePosition {
    let tol = T::lit(1e-12) * (h + i.abs() + T::one());
    ConePosition {
        in_c_minus: h <= lambda_m * i + tol,
        in_c_plus: h >= lambda_m1 * i - tol,
    }
}

pub fn cone_membership<T: Real>(
    u: &Field<T>,
    lambda_m: T,
    lambda_m1: T,
    spec: &ProblemSpec<T>,
) -> Result<ConePosition> {
    if lambda_m > lambda_m1 {
        return Err(Error::InvalidProblem(format!(
            "cone bounds out of order: lambda_m = {lambda_m} > lambda_m+1 = {lambda_m1}"
        )));
    }
    let e = eval_energy(u, spec)?;
    Ok(cone_position_from(e.h, e.i, lambda_m, lambda_m1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::problem::NonlinearitySpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn anchor_spec(n: usize) -> ProblemSpec<f64> {
        ProblemSpec::uniform(
            Grid::periodic(n, 1.0).unwrap(),
            2.0,
            0.0,
            1.0,
            1.0,
            NonlinearitySpec::pure_power(4.0),
        )
        .unwrap()
    }

    fn random_field(rng: &mut ChaCha8Rng, n: usize) -> Field<f64> {
        Field::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn constant_field_energies() {
        let s = anchor_spec(16);
        let e = eval_energy(&Field::constant(16, 1.0), &s).unwrap();
        assert!((e.h - 0.5).abs() < 1e-15);
        assert!((e.i - 0.5).abs() < 1e-15);
        assert!((e.j - 0.25).abs() < 1e-15);
        assert!((e.phi - 0.25).abs() < 1e-15);
        let g = grad_energy(&Field::constant(16, 1.0), &s).unwrap();
        assert!(g.grad_phi.max_abs() < 1e-15);
        assert!(cerami_residual(&Field::constant(16, 1.0), &s).unwrap() < 1e-14);
    }

    #[test]
    fn zero_field_is_critical() {
        let s = anchor_spec(16);
        let z = Field::zeros(16);
        let e = eval_energy(&z, &s).unwrap();
        assert_eq!((e.h, e.i, e.j, e.phi, e.norm_w), (0.0, 0.0, 0.0, 0.0, 0.0));
        let g = grad_energy(&z, &s).unwrap();
        assert_eq!(g.grad_h.max_abs(), 0.0);
        assert_eq!(g.grad_i.max_abs(), 0.0);
        assert_eq!(cerami_residual(&z, &s).unwrap(), 0.0);
    }

    /// Second, loop-based quadrature for periodic 1-d grids.
    fn naive_energy(u: &[f64], s: &ProblemSpec<f64>) -> (f64, f64, f64) {
        let n = u.len();
        let h = 1.0 / n as f64;
        let p = s.p;
        let (mut eh, mut ei, mut ej) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let d = (u[(i + 1) % n] - u[i]) / h;
            eh += h * (d.abs().powf(p) + s.b[i] * u[i].abs().powf(p)) / p;
            ei += h * s.v[i] * u[i].abs().powf(p) / p;
            ej += h * u[i].abs().powf(s.f.q) / s.f.q;
        }
        (eh, ei, ej)
    }

    #[test]
    fn energy_matches_naive_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = anchor_spec(32);
        s.p = 2.5;
        s.v = (0..32).map(|i| (i as f64 * 0.3).cos()).collect();
        for _ in 0..10 {
            let u = random_field(&mut rng, 32);
            let e = eval_energy(&u, &s).unwrap();
            let (h, i, j) = naive_energy(u.values(), &s);
            assert!((e.h - h).abs() <= 1e-12 * h.abs());
            assert!((e.i - i).abs() <= 1e-12 * i.abs().max(1e-300) + 1e-15);
            assert!((e.j - j).abs() <= 1e-12 * j.abs());
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = anchor_spec(32);
        for (grid, p) in [
            (Grid::periodic(32, 1.0).unwrap(), 2.5),
            (Grid::boxed(2, 8, 2.0).unwrap(), 3.0),
        ] {
            let n = grid.num_nodes();
            let s = ProblemSpec::new(
                grid,
                p,
                0.7,
                (0..n).map(|i| 1.0 + 0.1 * (i % 3) as f64).collect(),
                (0..n).map(|i| (i as f64).sin()).collect(),
                base.f.clone(),
            )
            .unwrap();
            let m = s.grid.num_dofs();
            for _ in 0..5 {
                let u = random_field(&mut rng, m);
                let v = random_field(&mut rng, m);
                let g = grad_energy(&u, &s).unwrap();
                let eps = 1e-5;
                let fd = (phi(&u.axpy(eps, &v), &s).unwrap() - phi(&u.axpy(-eps, &v), &s).unwrap())
                    / (2.0 * eps);
                let an = g.grad_phi.dot(&v);
                assert!((fd - an).abs() < 1e-6 * an.abs().max(1.0), "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (grid, p) in [
            (Grid::periodic(24, 1.0).unwrap(), 2.0),
            (Grid::periodic(24, 1.0).unwrap(), 3.0),
            (Grid::boxed(2, 7, 2.0).unwrap(), 2.5),
        ] {
            let n = grid.num_nodes();
            let s = ProblemSpec::new(
                grid,
                p,
                1.3,
                vec![1.0; n],
                (0..n).map(|i| (i as f64 * 0.7).cos()).collect(),
                NonlinearitySpec::pure_power(4.0),
            )
            .unwrap();
            let m = s.grid.num_dofs();
            let u = random_field(&mut rng, m);
            let v = random_field(&mut rng, m);
            let entries = hessian_entries(&u, &s, HessianKind::Phi, 0.0).unwrap();
            let hv = apply_entries(&entries, &v);
            let eps = 1e-6;
            let gp = grad_energy(&u.axpy(eps, &v), &s).unwrap().grad_phi;
            let gm = grad_energy(&u.axpy(-eps, &v), &s).unwrap().grad_phi;
            let fd = (&gp - &gm).scaled(1.0 / (2.0 * eps));
            let err = (&fd - &hv).max_abs();
            assert!(err < 1e-6 * hv.max_abs().max(1.0), "p = {p}: {err}");
        }
    }

    #[test]
    fn homogeneity_and_euler_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = anchor_spec(32);
        for p in [1.5, 2.0, 3.0] {
            s.p = p;
            s.f = NonlinearitySpec::pure_power(p + 2.0);
            let u = random_field(&mut rng, 32);
            let e = eval_energy(&u, &s).unwrap();
            let et = eval_energy(&u.scaled(-1.7), &s).unwrap();
            let k = 1.7f64.powf(p);
            assert!((et.h - k * e.h).abs() <= 1e-12 * et.h);
            assert!((et.i - k * e.i).abs() <= 1e-12 * et.i.abs());
            let g = grad_energy(&u, &s).unwrap();
            assert!((g.grad_h.dot(&u) - p * e.h).abs() <= 1e-12 * p * e.h);
            assert!((g.grad_i.dot(&u) - p * e.i).abs() <= 1e-12 * (p * e.i).abs());
        }
    }

    #[test]
    fn monotonicity_gap_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let s = anchor_spec(16);
        let u = random_field(&mut rng, 16);
        assert_eq!(monotonicity_gap(&u, &u, &s).unwrap(), 0.0);
        let z = Field::zeros(16);
        let g = monotonicity_gap(&u, &z, &s).unwrap();
        assert!(g.abs() < 1e-12);
        assert!(monotonicity_gap(&u, &Field::zeros(15), &s).is_err());
    }

    #[test]
    fn cone_membership_cases() {
        let s = anchor_spec(16);
        let zero = cone_membership(&Field::zeros(16), 1.0, 2.0, &s).unwrap();
        assert!(zero.in_c_minus && zero.in_c_plus);
        let pos = cone_position_from(1.0, 1.0, 2.0, 3.0);
        assert!(pos.in_c_minus && !pos.in_c_plus);
        let one = cone_membership(&Field::constant(16, 1.0), 1.0, 40.0, &s).unwrap();
        assert!(one.in_c_minus && !one.in_c_plus);
        assert!(cone_membership(&Field::zeros(16), 3.0, 2.0, &s).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let s = ProblemSpec::<f32>::uniform(
            Grid::periodic(16, 1.0).unwrap(),
            2.0,
            0.0,
            1.0,
            1.0,
            NonlinearitySpec::pure_power(4.0),
        )
        .unwrap();
        let e = eval_energy(&Field::constant(16, 1.0f32), &s).unwrap();
        assert!((e.phi - 0.25).abs() < 1e-6);
    }

    #[test]
    fn preconditioner_inverts_stiffness() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for grid in [Grid::periodic(20, 1.0).unwrap(), Grid::boxed(2, 8, 2.0).unwrap()] {
            let s = ProblemSpec::uniform(grid, 3.0, 0.0, 2.0, 1.0, NonlinearitySpec::pure_power(4.0))
                .unwrap();
            let m = s.grid.num_dofs();
            let k = hessian_entries(&Field::zeros(m), &s, HessianKind::Stiffness, 0.0).unwrap();
            let x = random_field(&mut rng, m);
            let y = Preconditioner::new(&s).unwrap().apply(&apply_entries(&k, &x));
            assert!((&y - &x).max_abs() < 1e-10);
        }
    }
}

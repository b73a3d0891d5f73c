use rand::Rng;

use super::{unit_w, LinkingGeometry, Metric};
use crate::eigen::SpectrumEstimate;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::functional::{cone_position_from, eval_energy, grad_energy, phi, Preconditioner};
use crate::grid::GridKind;
use crate::problem::ProblemSpec;
use crate::rng::{smooth_field, substream, SolverRng};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct GeometryOptions {
    /// Random `C+` rays besides `e`; half smooth, half localized.
    pub rays: usize,
    pub seed: u64,
    pub min_radius: f64,
    pub max_radius: f64,
    pub radii_per_octave: usize,
    /// Directions sampled on the `r_minus` cap.
    pub cap_samples: usize,
    pub max_doublings: usize,
    /// Best sampled rays refined by descent on each sphere.
    pub refine_rays: usize,
    pub refine_iters: usize,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        Self {
            rays: 24,
            seed: 0,
            min_radius: 1e-3,
            max_radius: 1e4,
            radii_per_octave: 4,
            cap_samples: 64,
            max_doublings: 60,
            refine_rays: 3,
            refine_iters: 300,
        }
    }
}

/// Picks `m`, `e` and the `C-` model from `spectrum`, then the radii:
/// `r_plus` maximizes the sampled minimum of `Phi` over `C+` rays and
/// `r_minus` is the first doubling of `2 r_plus` at which `Phi <= 0` on every
/// sampled direction of `C- + R+ e`.
///
/// `spec` must have `lambda >= 0` and `spectrum` must belong to it; pass
/// `None` when `V+ = 0`.
pub fn estimate_geometry<T: Real>(
    spec: &ProblemSpec<T>,
    spectrum: Option<&SpectrumEstimate<T>>,
    opts: &GeometryOptions,
) -> Result<LinkingGeometry<T>> {
    if spec.lambda < T::zero() {
        return Err(Error::InvalidProblem(
            "geometry expects lambda >= 0; flip (lambda, V) first".into(),
        ));
    }
    let metric = Metric::new(spec)?;
    let precond = Preconditioner::new(spec)?;
    let mut rng = substream(opts.seed, 1_000);

    let (m, lambda_m, lambda_m1, e_raw, basis_raw) = match spectrum {
        Some(s) if spec.has_positive_weight() => {
            let m = s.m_index(spec.lambda).ok_or_else(|| {
                Error::Geometry(format!(
                    "lambda = {} is not bracketed by certified eigenvalues",
                    spec.lambda
                ))
            })?;
            let above = s.entries.get(m).ok_or_else(|| {
                Error::Geometry(format!("no eigenvalue above lambda = {} was computed", spec.lambda))
            })?;
            let mut basis = Vec::with_capacity(m);
            for (k, entry) in s.entries[..m].iter().enumerate() {
                let pair = entry.pair.as_ref().ok_or_else(|| {
                    Error::ModelUnavailable(format!(
                        "eigenvalue {} has no eigenfunction; use p = 2 or lambda below the first eigenvalue",
                        k + 1
                    ))
                })?;
                basis.push(pair.u.clone());
            }
            let lambda_m = if m == 0 { T::zero() } else { s.entries[m - 1].value };
            let e = match &above.pair {
                Some(pair) => pair.u.clone(),
                None => outside_c_minus(spec, &metric, &precond, &basis, lambda_m, above.value, &mut rng)?,
            };
            (m, lambda_m, above.value, e, basis)
        }
        _ => {
            // C- = {0}: any non-zero direction works
            let e = smooth_field(&mut rng, spec, &precond).map(|v| v.abs());
            (0, T::zero(), T::infinity(), e, Vec::new())
        }
    };
    let e = unit_w(&e_raw, spec)?.ok_or_else(|| Error::Geometry("direction e vanishes".into()))?;
    let basis: Vec<Field<T>> = basis_raw
        .iter()
        .map(|b| unit_w(b, spec)?.ok_or_else(|| Error::Geometry("zero eigenfunction".into())))
        .collect::<Result<_>>()?;
    let ee = eval_energy(&e, spec)?;
    if m > 0 && cone_position_from(ee.h, ee.i, lambda_m, lambda_m1).in_c_minus {
        return Err(Error::Geometry("direction e lies in C-".into()));
    }
    let model_exact = spec.p == T::lit(2.0) || m <= 1;

    let rays = c_plus_rays(spec, &metric, &precond, &basis, &e, lambda_m1, opts, &mut rng)?;
    let (profile, r_sampled, _) = sphere_profile(spec, &rays, opts)?;
    let (r_plus, alpha) = refine_sphere_level(spec, &metric, &basis, &rays, lambda_m1, r_sampled, &profile, opts)?;
    let directions = half_span_directions(spec, &basis, &e, opts.cap_samples, &mut rng)?;
    let (r_minus, cap_max) = cap_radius(spec, &directions, r_plus, opts.max_doublings)?;

    Ok(LinkingGeometry {
        m,
        lambda_m,
        lambda_m1,
        r_plus,
        r_minus,
        alpha,
        profile,
        cap_max,
        flipped: false,
        model_exact,
        e,
        basis,
    })
}

fn outside_c_minus<T: Real>(
    spec: &ProblemSpec<T>,
    metric: &Metric<T>,
    precond: &Preconditioner<T>,
    basis: &[Field<T>],
    lambda_m: T,
    lambda_m1: T,
    rng: &mut SolverRng,
) -> Result<Field<T>> {
    for _ in 0..100 {
        let f = metric.project_out(&smooth_field(rng, spec, precond), basis);
        let en = eval_energy(&f, spec)?;
        if !cone_position_from(en.h, en.i, lambda_m, lambda_m1).in_c_minus {
            return Ok(f);
        }
    }
    Err(Error::Geometry("no sampled direction outside C-".into()))
}

/// A smooth bump of half-width `width` nodes centred at node `center` along
/// the first axis, with a sine profile across the remaining axes.
pub(crate) fn localized_field<T: Real>(spec: &ProblemSpec<T>, center: usize, width: usize) -> Field<T> {
    let grid = &spec.grid;
    let n0 = grid.nodes_per_axis()[0];
    let periodic = grid.kind() == GridKind::Periodic1d;
    let half_pi = T::FRAC_PI_2();
    Field::from_vec_unchecked(
        (0..grid.num_dofs())
            .map(|d| {
                let node = grid.dof_node(d);
                let i = grid.axis_index(node, 0);
                let mut dist = i.abs_diff(center);
                if periodic {
                    dist = dist.min(n0 - dist);
                }
                if dist >= width {
                    return T::zero();
                }
                let c = (half_pi * T::from_count(dist) / T::from_count(width)).cos();
                let mut v = c * c;
                for a in 1..grid.dims() {
                    let na = grid.nodes_per_axis()[a];
                    v *= (T::PI() * T::from_count(grid.axis_index(node, a)) / T::from_count(na - 1)).sin();
                }
                v
            })
            .collect(),
    )
}

#[allow(clippy::too_many_arguments)]
fn c_plus_rays<T: Real>(
    spec: &ProblemSpec<T>,
    metric: &Metric<T>,
    precond: &Preconditioner<T>,
    basis: &[Field<T>],
    e: &Field<T>,
    lambda_m1: T,
    opts: &GeometryOptions,
    rng: &mut SolverRng,
) -> Result<Vec<Field<T>>> {
    let n0 = spec.grid.nodes_per_axis()[0];
    let mut rays = vec![e.clone()];
    let mut rejected = 0usize;
    for k in 0..opts.rays {
        let raw = if k % 2 == 0 {
            smooth_field(rng, spec, precond)
        } else {
            let width = (n0 >> rng.random_range(2..6u32)).max(2);
            localized_field(spec, rng.random_range(0..n0), width)
        };
        let f = metric.project_out(&raw, basis);
        let Some(u) = unit_w(&f, spec)? else { continue };
        if !basis.is_empty() {
            let en = eval_energy(&u, spec)?;
            if !cone_position_from(en.h, en.i, T::zero(), lambda_m1).in_c_plus {
                rejected += 1;
                continue;
            }
        }
        rays.push(u);
    }
    if rejected > 0 {
        log::info!("{rejected} sampled rays fell outside C+ and were dropped");
    }
    Ok(rays)
}

type Profile<T> = (Vec<(T, T)>, T, T);

fn sphere_profile<T: Real>(spec: &ProblemSpec<T>, rays: &[Field<T>], opts: &GeometryOptions) -> Result<Profile<T>> {
    let ratio = 2f64.powf(1.0 / opts.radii_per_octave.max(1) as f64);
    let mut r = opts.min_radius;
    let mut profile = Vec::new();
    let mut best = (T::zero(), T::neg_infinity());
    while r <= opts.max_radius {
        let rt = T::lit(r);
        let mut low = T::infinity();
        for ray in rays {
            low = low.min(phi(&ray.scaled(rt), spec)?);
        }
        profile.push((rt, low));
        if low > best.1 {
            best = (rt, low);
        }
        if best.1 > T::zero() && low < -best.1.abs() * T::lit(10.0) {
            break;
        }
        r *= ratio;
    }
    let (r_plus, alpha) = best;
    if !(alpha > T::zero()) {
        let shown: Vec<String> = profile.iter().map(|(r, v)| format!("{r:.3e}:{v:.3e}")).collect();
        return Err(Error::Geometry(format!(
            "no radius with positive sampled sphere minimum; profile {}",
            shown.join(" ")
        )));
    }
    Ok((profile, r_plus, alpha))
}

/// Lowers the sampled sphere minimum by projected descent of `Phi` on
/// `{||u|| = r} ∩ C+`, started from the best rays, at radii around the
/// sampled optimum. Returns the radius with the largest refined minimum and
/// that minimum.
#[allow(clippy::too_many_arguments)]
fn refine_sphere_level<T: Real>(
    spec: &ProblemSpec<T>,
    metric: &Metric<T>,
    basis: &[Field<T>],
    rays: &[Field<T>],
    lambda_m1: T,
    r_sampled: T,
    profile: &[(T, T)],
    opts: &GeometryOptions,
) -> Result<(T, T)> {
    let radii: Vec<T> = profile
        .iter()
        .map(|&(r, _)| r)
        .filter(|&r| r >= r_sampled * T::lit(0.25) && r <= r_sampled * T::lit(2.0))
        .step_by(2)
        .collect();
    let mut best = (r_sampled, T::neg_infinity());
    for &r in &radii {
        let mut scored: Vec<(T, usize)> = rays
            .iter()
            .enumerate()
            .map(|(i, ray)| Ok((phi(&ray.scaled(r), spec)?, i)))
            .collect::<Result<_>>()?;
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite energies").then(a.1.cmp(&b.1)));
        let mut low = T::infinity();
        for &(_, i) in scored.iter().take(opts.refine_rays.max(1)) {
            low = low.min(sphere_min(spec, metric, basis, &rays[i], r, lambda_m1, opts.refine_iters)?);
        }
        if low > best.1 {
            best = (r, low);
        }
    }
    if !(best.1 > T::zero()) {
        return Err(Error::Geometry(format!(
            "refined sphere minimum is not positive (best {} at r = {})",
            best.1, best.0
        )));
    }
    Ok(best)
}

fn sphere_min<T: Real>(
    spec: &ProblemSpec<T>,
    metric: &Metric<T>,
    basis: &[Field<T>],
    start: &Field<T>,
    r: T,
    lambda_m1: T,
    iters: usize,
) -> Result<T> {
    let on_sphere = |f: &Field<T>| -> Result<Option<Field<T>>> {
        let Some(u) = unit_w(f, spec)? else { return Ok(None) };
        if !basis.is_empty() {
            let en = eval_energy(&u, spec)?;
            if !cone_position_from(en.h, en.i, T::zero(), lambda_m1).in_c_plus {
                return Ok(None);
            }
        }
        Ok(Some(u.scaled(r)))
    };
    let mut u = start.scaled(r);
    let mut value = phi(&u, spec)?;
    let mut step = T::one();
    for _ in 0..iters {
        let g = grad_energy(&u, spec)?.grad_phi;
        let mut d = metric.project_out(&metric.riesz(&g), basis);
        d = d.axpy(-metric.dot(&d, &u) / metric.dot(&u, &u), &u);
        let slope = g.dot(&d);
        if !(slope > T::lit(1e-14) * (T::one() + value.abs())) {
            break;
        }
        let mut s = step;
        let mut moved = false;
        for _ in 0..40 {
            if let Some(cand) = on_sphere(&u.axpy(-s, &d))? {
                let v = phi(&cand, spec)?;
                if v <= value - T::lit(1e-4) * s * slope {
                    u = cand;
                    value = v;
                    moved = true;
                    break;
                }
            }
            s *= T::lit(0.5);
        }
        if !moved {
            break;
        }
        step = (s * T::lit(2.0)).min(T::lit(1e3));
    }
    Ok(value)
}

/// Unit directions of `span(basis) + R+ w`: `w`, `+-basis`, and seeded
/// random combinations with a non-negative `w` coefficient.
pub(crate) fn half_span_directions<T: Real>(
    spec: &ProblemSpec<T>,
    basis: &[Field<T>],
    w: &Field<T>,
    count: usize,
    rng: &mut SolverRng,
) -> Result<Vec<Field<T>>> {
    let mut out = vec![w.clone()];
    for b in basis {
        out.push(b.clone());
        out.push(b.scaled(-T::one()));
    }
    if basis.is_empty() {
        return Ok(out);
    }
    for _ in 0..count {
        let mut f = w.scaled(T::lit(rng.random_range(0.0..1.0)));
        for b in basis {
            f = f.axpy(T::lit(rng.random_range(-1.0..1.0)), b);
        }
        if let Some(u) = unit_w(&f, spec)? {
            out.push(u);
        }
    }
    Ok(out)
}

fn cap_radius<T: Real>(
    spec: &ProblemSpec<T>,
    directions: &[Field<T>],
    r_plus: T,
    max_doublings: usize,
) -> Result<(T, T)> {
    let mut r = r_plus * T::lit(2.0);
    for _ in 0..max_doublings {
        let mut top = T::neg_infinity();
        for d in directions {
            top = top.max(phi(&d.scaled(r), spec)?);
        }
        if top <= T::zero() {
            return Ok((r, top));
        }
        r *= T::lit(2.0);
    }
    Err(Error::Geometry(format!(
        "Phi stayed positive on the cap after {max_doublings} doublings (r = {r})"
    )))
}


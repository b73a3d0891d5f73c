use rand::Rng;

use super::{
    classify, newton_polish, unit_w, Classification, CriticalPointResult, LinkingGeometry, Method, Metric, TraceRow,
};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::functional::{apply_entries, dual_norm, eval_energy, grad_energy, hessian_entries, phi, HessianKind};
use crate::linalg::DenseLu;
use crate::problem::ProblemSpec;
use crate::rng::substream;
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct LinkingOptions {
    /// Frozen boundary samples of each `Q_w`.
    pub samples: usize,
    pub max_iter: usize,
    pub polish_switch: f64,
    /// Doublings of `r_minus` allowed when the outer arc turns positive.
    pub max_boundary_doublings: usize,
    pub seed: u64,
}

impl Default for LinkingOptions {
    fn default() -> Self {
        Self {
            samples: 200,
            max_iter: 2000,
            polish_switch: 1e-3,
            max_boundary_doublings: 20,
            seed: 0,
        }
    }
}

fn combine<T: Real>(psi: &[Field<T>], c: &[T]) -> Field<T> {
    let mut u = Field::zeros(psi[0].len());
    for (f, &a) in psi.iter().zip(c) {
        u = u.axpy(a, f);
    }
    u
}

/// Cholesky test for negative definiteness of a small symmetric matrix.
fn negative_definite<T: Real>(k: usize, g: &[T]) -> bool {
    let mut l = vec![T::zero(); k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = -g[i * k + j];
            for r in 0..j {
                s -= l[i * k + r] * l[j * k + r];
            }
            if i == j {
                if !(s > T::zero()) {
                    return false;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    true
}

/// The peak map `w -> P(w)`: the maximizer of `Phi` over
/// `{sum c_i b_i + t w : t >= 0}`.
struct PeakMap<'a, T> {
    spec: &'a ProblemSpec<T>,
    metric: &'a Metric<T>,
    basis: &'a [Field<T>],
}

struct Peak<T> {
    coeffs: Vec<T>,
    u: Field<T>,
    value: T,
}

impl<T: Real> PeakMap<'_, T> {
    fn find(&self, w: &Field<T>, warm: Option<&[T]>) -> Result<Peak<T>> {
        let m = self.basis.len();
        let k = m + 1;
        let mut psi: Vec<Field<T>> = self.basis.to_vec();
        psi.push(w.clone());
        let mut gram = vec![T::zero(); k * k];
        for a in 0..k {
            for b in 0..k {
                gram[a * k + b] = self.metric.dot(&psi[a], &psi[b]);
            }
        }
        let gram_lu = DenseLu::factor(k, gram.clone())?;
        let mut c = match warm {
            Some(c) if c.len() == k && c[m] > T::zero() => c.to_vec(),
            _ => {
                let mut c = vec![T::zero(); k];
                c[m] = self.ray_peak(w)?;
                c
            }
        };
        let mut u = combine(&psi, &c);
        let mut value = phi(&u, self.spec)?;
        for _ in 0..100 {
            let g = grad_energy(&u, self.spec)?.grad_phi;
            let ga: Vec<T> = psi.iter().map(|f| f.dot(&g)).collect();
            let hess = hessian_entries(&u, self.spec, HessianKind::Phi, T::zero())?;
            let hpsi: Vec<Field<T>> = psi.iter().map(|f| apply_entries(&hess, f)).collect();
            let mut gm = vec![T::zero(); k * k];
            for a in 0..k {
                for b in 0..k {
                    gm[a * k + b] = psi[a].dot(&hpsi[b]);
                }
            }
            let newton = negative_definite(k, &gm);
            let delta: Vec<T> = if newton {
                DenseLu::factor(k, gm)?
                    .solve(&ga)
                    .into_iter()
                    .map(|v| -v)
                    .collect()
            } else {
                gram_lu.solve(&ga)
            };
            let size = {
                let mut s = T::zero();
                for a in 0..k {
                    for b in 0..k {
                        s += delta[a] * gram[a * k + b] * delta[b];
                    }
                }
                s.max(T::zero()).sqrt()
            };
            let scale = {
                let mut s = T::zero();
                for a in 0..k {
                    for b in 0..k {
                        s += c[a] * gram[a * k + b] * c[b];
                    }
                }
                s.max(T::zero()).sqrt()
            };
            if newton && size <= T::lit(1e-13) * (T::one() + scale) {
                break;
            }
            let slack = T::lit(4.0) * T::epsilon() * value.abs();
            let mut tau = T::one();
            let mut moved = false;
            for _ in 0..60 {
                let mut cn: Vec<T> = c.iter().zip(&delta).map(|(&x, &d)| x + tau * d).collect();
                if cn[m] <= T::zero() {
                    cn[m] = c[m] * T::lit(0.5);
                }
                let un = combine(&psi, &cn);
                let vn = phi(&un, self.spec)?;
                if vn >= value - slack && (vn > value || newton) {
                    c = cn;
                    u = un;
                    value = vn;
                    moved = true;
                    break;
                }
                tau *= T::lit(0.5);
            }
            if !moved {
                break;
            }
        }
        if !(c[m] > T::zero()) {
            return Err(Error::Geometry("peak collapsed onto the C- model".into()));
        }
        Ok(Peak { coeffs: c, u, value })
    }

    /// Maximizer of `t -> Phi(t w)` by a coarse geometric scan.
    fn ray_peak(&self, w: &Field<T>) -> Result<T> {
        let mut t = T::lit(1e-3);
        let mut best = (t, T::neg_infinity());
        while t < T::lit(1e6) {
            let v = phi(&w.scaled(t), self.spec)?;
            if v > best.1 {
                best = (t, v);
            } else if best.1 > T::zero() && v < T::zero() {
                break;
            }
            t *= T::lit(1.25);
        }
        Ok(best.0)
    }
}

/// Coefficient vectors `(c, t)` of frozen boundary samples: the `C-` ball
/// (`t = 0`) and the outer arc (`t >= 0`, unit norm before scaling).
struct BoundarySamples<T> {
    ball: Vec<(Vec<T>, T)>,
    arc: Vec<Vec<T>>,
}

impl<T: Real> BoundarySamples<T> {
    fn new(m: usize, count: usize, seed: u64) -> Self {
        let mut rng = substream(seed, 2_000);
        let mut ball = Vec::new();
        let mut arc = Vec::new();
        let n_ball = if m == 0 { 0 } else { count / 4 };
        for i in 0..n_ball {
            let c: Vec<T> = (0..m).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect();
            let frac = T::from_count(i % 8 + 1) / T::lit(8.0);
            ball.push((c, frac));
        }
        for i in 0..count - n_ball {
            let mut c: Vec<T> = (0..m).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect();
            // include the pure w direction and near-C- directions
            let t = match i {
                0 => {
                    c.iter_mut().for_each(|x| *x = T::zero());
                    T::one()
                }
                _ => T::lit(rng.random_range(0.0..1.0)),
            };
            c.push(t);
            arc.push(c);
        }
        Self { ball, arc }
    }

    fn ball_max(&self, spec: &ProblemSpec<T>, basis: &[Field<T>], r: T) -> Result<T> {
        let mut top = T::neg_infinity();
        for (c, frac) in &self.ball {
            if let Some(u) = unit_w(&combine(basis, c), spec)? {
                top = top.max(phi(&u.scaled(r * *frac), spec)?);
            }
        }
        Ok(top)
    }

    fn arc_max(&self, spec: &ProblemSpec<T>, psi: &[Field<T>], r: T) -> Result<(T, usize)> {
        let mut top = (T::neg_infinity(), 0);
        for (i, c) in self.arc.iter().enumerate() {
            if let Some(u) = unit_w(&combine(psi, c), spec)? {
                let v = phi(&u.scaled(r), spec)?;
                if v > top.0 {
                    top = (v, i);
                }
            }
        }
        Ok(top)
    }
}

/// Local minimax search over the half-subspaces
/// `Q_w = span(C- model) + R+ w`.
///
/// For a unit direction `w` outside the model, `P(w)` is the maximizer of
/// `Phi` on `Q_w`; `w` is then moved along the Sobolev gradient at `P(w)`
/// with Armijo steps on `Phi(P(w))`, so the recorded minimax values never
/// increase. The boundary of each `Q_w` (the `C-` ball and the outer arc at
/// `r_minus`) is sampled every iteration and must keep `Phi <= 0` up to the
/// cone tolerance; `r_minus` is doubled if the arc turns positive.
pub fn linking_minimax<T: Real>(
    spec: &ProblemSpec<T>,
    geom: &LinkingGeometry<T>,
    tol: T,
    opts: &LinkingOptions,
) -> Result<CriticalPointResult<T>> {
    let metric = Metric::new(spec)?;
    let basis = &geom.basis;
    let m = basis.len();
    let map = PeakMap {
        spec,
        metric: &metric,
        basis,
    };
    let mut notes = Vec::new();
    if !geom.model_exact {
        notes.push("C- model spans refined eigenfunctions; membership is checked on samples only".into());
    }
    let samples = BoundarySamples::new(m, opts.samples.max(2), opts.seed);
    let boundary_tol = |scale: T| T::lit(1e-12) * (scale.abs() + T::one());

    let mut r_minus = geom.r_minus;
    let ball_max = samples.ball_max(spec, basis, r_minus)?;
    if ball_max > boundary_tol(ball_max) {
        return Err(Error::BoundaryViolation {
            sample: 0,
            value: ball_max.as_f64(),
        });
    }
    let mut w = unit_w(&metric.project_out(&geom.e, basis), spec)?
        .ok_or_else(|| Error::Geometry("e lies in the span of the C- model".into()))?;
    let mut peak = map.find(&w, None)?;
    let mut boundary_max = ball_max;

    let check_arc = |w: &Field<T>, r_minus: &mut T, notes: &mut Vec<String>| -> Result<T> {
        let mut psi = basis.clone();
        psi.push(w.clone());
        for _ in 0..=opts.max_boundary_doublings {
            let (top, idx) = samples.arc_max(spec, &psi, *r_minus)?;
            if top <= boundary_tol(top) {
                return Ok(top);
            }
            notes.push(format!(
                "outer arc sample {idx} reached Phi = {top:e}; r_minus doubled to {}",
                *r_minus * T::lit(2.0)
            ));
            *r_minus *= T::lit(2.0);
        }
        let (top, idx) = samples.arc_max(spec, &psi, *r_minus)?;
        Err(Error::BoundaryViolation {
            sample: idx,
            value: top.as_f64(),
        })
    };
    boundary_max = boundary_max.max(check_arc(&w, &mut r_minus, &mut notes)?);

    let mut minimax_trace = vec![peak.value];
    let mut trace = Vec::new();
    let mut switch = T::lit(opts.polish_switch);
    let mut step = T::one();
    let mut best = (peak.u.clone(), T::infinity());

    for iteration in 0..opts.max_iter {
        let e = eval_energy(&peak.u, spec)?;
        let g = grad_energy(&peak.u, spec)?.grad_phi;
        let cerami = (T::one() + e.norm_w) * dual_norm(&g, spec);
        trace.push(TraceRow {
            iteration,
            phi: peak.value,
            cerami,
            norm: e.norm_w,
        });
        if cerami < best.1 {
            best = (peak.u.clone(), cerami);
        }
        let finish = |u: Field<T>, notes: Vec<String>, trace: Vec<TraceRow<T>>, minimax_trace: Vec<T>| {
            result(spec, geom, tol, u, iteration, trace, minimax_trace, boundary_max, r_minus, notes)
        };
        if cerami < tol {
            return finish(peak.u, notes, trace, minimax_trace);
        }
        if cerami < switch {
            let (u, r, it) = newton_polish(&peak.u, spec, tol, 40)?;
            let v = phi(&u, spec)?;
            if r < tol && (v - peak.value).abs() <= T::lit(1e-2) * peak.value.abs() + tol {
                notes.push(format!("Newton polish from Cerami residual {cerami:e} took {it} steps"));
                return finish(u, notes, trace, minimax_trace);
            }
            switch *= T::lit(0.1);
        }

        let d = metric.riesz(&g);
        let dd = g.dot(&d);
        let t = peak.coeffs[m];
        let mut s = step / t;
        let mut accepted = None;
        for _ in 0..50 {
            let moved = metric.project_out(&w.axpy(-s, &d), basis);
            if let Some(wn) = unit_w(&moved, spec)? {
                let warm: Vec<T> = peak.coeffs.clone();
                if let Ok(pn) = map.find(&wn, Some(&warm)) {
                    if pn.value <= peak.value - T::lit(1e-4) * t * s * dd {
                        accepted = Some((wn, pn));
                        break;
                    }
                }
            }
            s *= T::lit(0.5);
        }
        let Some((wn, pn)) = accepted else {
            notes.push(format!("minimax step stalled at Cerami residual {cerami:e}"));
            let (u, r, it) = newton_polish(&peak.u, spec, tol, 60)?;
            if r < tol {
                notes.push(format!("Newton polish took {it} steps"));
                return finish(u, notes, trace, minimax_trace);
            }
            break;
        };
        step = (s * t * T::lit(2.0)).min(T::lit(1e3));
        w = wn;
        peak = pn;
        minimax_trace.push(peak.value);
        boundary_max = boundary_max.max(check_arc(&w, &mut r_minus, &mut notes)?);
    }
    let (u, residual) = best;
    Err(Error::NotConverged {
        iterations: trace.len(),
        residual: residual.as_f64(),
        best: u.values().iter().map(|v| v.as_f64()).collect(),
    })
}

#[allow(clippy::too_many_arguments)]
fn result<T: Real>(
    spec: &ProblemSpec<T>,
    geom: &LinkingGeometry<T>,
    tol: T,
    u: Field<T>,
    iteration: usize,
    trace: Vec<TraceRow<T>>,
    minimax_trace: Vec<T>,
    boundary_max: T,
    r_minus: T,
    mut notes: Vec<String>,
) -> Result<CriticalPointResult<T>> {
    let e = eval_energy(&u, spec)?;
    let g = grad_energy(&u, spec)?.grad_phi;
    let cerami = (T::one() + e.norm_w) * dual_norm(&g, spec);
    let classification = classify(spec, e.norm_w, cerami, e.phi, tol);
    if classification == Classification::NontrivialCandidate && e.phi < geom.alpha - tol {
        notes.push(format!(
            "critical value {} is below the sampled level alpha = {}",
            e.phi, geom.alpha
        ));
    }
    let mut geometry = geom.clone();
    geometry.r_minus = r_minus;
    Ok(CriticalPointResult {
        u,
        value: e.phi,
        cerami,
        norm_w: e.norm_w,
        iterations: iteration + 1,
        classification,
        method: Method::Linking,
        geometry,
        trace,
        minimax_trace,
        boundary_max: Some(boundary_max),
        notes,
    })
}

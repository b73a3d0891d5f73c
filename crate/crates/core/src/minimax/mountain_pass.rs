use super::{
    classify, newton_polish, Classification, CriticalPointResult, LinkingGeometry, Method, Metric, TraceRow,
};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::functional::{dual_norm, eval_energy, grad_energy, phi};
use crate::problem::ProblemSpec;
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct PathOptions {
    /// Path nodes including both endpoints.
    pub nodes: usize,
    /// Nodes on each side of the peak moved per iteration.
    pub window: usize,
    pub max_iter: usize,
    /// Cerami residual below which Newton polishing is attempted.
    pub polish_switch: f64,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self {
            nodes: 41,
            window: 2,
            max_iter: 3000,
            polish_switch: 1e-3,
        }
    }
}

/// Maximizes `Phi` on the segment `a + s (b - a)`, `s in [0, 1]`, by golden
/// section search.
fn segment_max<T: Real>(a: &Field<T>, b: &Field<T>, spec: &ProblemSpec<T>) -> Result<(Field<T>, T)> {
    let diff = b - a;
    let at = |s: T| -> Result<(Field<T>, T)> {
        let u = a.axpy(s, &diff);
        let v = phi(&u, spec)?;
        Ok((u, v))
    };
    let g = T::lit(0.618_033_988_749_894_9);
    let (mut lo, mut hi) = (T::zero(), T::one());
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = at(x1)?.1;
    let mut f2 = at(x2)?.1;
    while hi - lo > T::lit(1e-12) {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = at(x1)?.1;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = at(x2)?.1;
        }
    }
    let mut best = at((lo + hi) * T::lit(0.5))?;
    for s in [T::zero(), T::one()] {
        let cand = at(s)?;
        if cand.1 > best.1 {
            best = cand;
        }
    }
    Ok(best)
}

/// Redistributes interior nodes uniformly in `K`-arc length.
fn respline<T: Real>(path: &[Field<T>], metric: &Metric<T>) -> Vec<Field<T>> {
    let k = path.len();
    let mut cum = vec![T::zero(); k];
    for i in 1..k {
        let d = &path[i] - &path[i - 1];
        cum[i] = cum[i - 1] + metric.dot(&d, &d).max(T::zero()).sqrt();
    }
    let total = cum[k - 1];
    if !(total > T::zero()) {
        return path.to_vec();
    }
    let mut out = Vec::with_capacity(k);
    out.push(path[0].clone());
    let mut seg = 1;
    for i in 1..k - 1 {
        let target = total * T::from_count(i) / T::from_count(k - 1);
        while seg < k - 1 && cum[seg] < target {
            seg += 1;
        }
        let len = cum[seg] - cum[seg - 1];
        let s = if len > T::zero() { (target - cum[seg - 1]) / len } else { T::zero() };
        out.push(path[seg - 1].axpy(s, &(&path[seg] - &path[seg - 1])));
    }
    out.push(path[k - 1].clone());
    out
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax_lowest<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mountain-pass search between `0` and `r_minus e`.
///
/// Each iteration locates the path maximum (refined on the two segments
/// around the highest node), moves the nodes near it down the Sobolev
/// gradient with the path tangent removed, and re-splines the path. Once the
/// Cerami residual at the peak is small the peak is polished by Newton.
pub fn mountain_pass<T: Real>(
    spec: &ProblemSpec<T>,
    geom: &LinkingGeometry<T>,
    tol: T,
    opts: &PathOptions,
) -> Result<CriticalPointResult<T>> {
    if geom.m != 0 {
        return Err(Error::InvalidProblem(format!(
            "mountain pass needs C- = {{0}}, got m = {}",
            geom.m
        )));
    }
    let k = opts.nodes.max(3);
    let metric = Metric::new(spec)?;
    let end = geom.e.scaled(geom.r_minus);
    let end_value = phi(&end, spec)?;
    if end_value > T::zero() {
        return Err(Error::Geometry(format!("path endpoint has Phi = {end_value} > 0")));
    }
    let mut path: Vec<Field<T>> = (0..k)
        .map(|i| end.scaled(T::from_count(i) / T::from_count(k - 1)))
        .collect();
    let mut trace = Vec::new();
    let mut minimax_trace = Vec::new();
    let mut notes = Vec::new();
    let mut switch = T::lit(opts.polish_switch);
    let mut steps = vec![T::one(); k];
    let mut best: Option<(Field<T>, T)> = None;

    for iteration in 0..opts.max_iter {
        let values: Vec<T> = path.iter().map(|z| phi(z, spec)).collect::<Result<_>>()?;
        let j = argmax_lowest(&values);
        if j == 0 || j == k - 1 {
            return Err(Error::PathCollapse { endpoint: j });
        }
        let (left, lv) = segment_max(&path[j - 1], &path[j], spec)?;
        let (right, rv) = segment_max(&path[j], &path[j + 1], spec)?;
        let (peak, value) = if rv > lv { (right, rv) } else { (left, lv) };
        path[j] = peak.clone();
        minimax_trace.push(value);

        let e = eval_energy(&peak, spec)?;
        let g = grad_energy(&peak, spec)?.grad_phi;
        let cerami = (T::one() + e.norm_w) * dual_norm(&g, spec);
        trace.push(TraceRow {
            iteration,
            phi: value,
            cerami,
            norm: e.norm_w,
        });
        if best.as_ref().is_none_or(|(_, c)| cerami < *c) {
            best = Some((peak.clone(), cerami));
        }
        if cerami < tol {
            return finish(spec, geom, tol, peak, iteration, trace, minimax_trace, &path, end_value, notes);
        }
        if cerami < switch {
            let (u, r, it) = newton_polish(&peak, spec, tol, 40)?;
            let v = phi(&u, spec)?;
            if r < tol && (v - value).abs() <= T::lit(1e-2) * value.abs() + tol {
                notes.push(format!("Newton polish from Cerami residual {cerami:e} took {it} steps"));
                return finish(spec, geom, tol, u, iteration, trace, minimax_trace, &path, end_value, notes);
            }
            switch *= T::lit(0.1);
        }

        let lo = j.saturating_sub(opts.window).max(1);
        let hi = (j + opts.window).min(k - 2);
        for i in lo..=hi {
            let z = &path[i];
            let gi = grad_energy(z, spec)?.grad_phi;
            let d = metric.riesz(&gi);
            let tangent = &path[i + 1] - &path[i - 1];
            let tt = metric.dot(&tangent, &tangent);
            let d = if tt > T::zero() {
                d.axpy(-metric.dot(&d, &tangent) / tt, &tangent)
            } else {
                d
            };
            let slope = gi.dot(&d);
            if !(slope > T::zero()) {
                continue;
            }
            let base = phi(z, spec)?;
            let mut s = steps[i];
            for _ in 0..50 {
                let cand = z.axpy(-s, &d);
                if phi(&cand, spec)? <= base - T::lit(1e-4) * s * slope {
                    path[i] = cand;
                    break;
                }
                s *= T::lit(0.5);
            }
            steps[i] = (s * T::lit(2.0)).min(T::lit(1e3));
        }
        path = respline(&path, &metric);
    }
    let (u, residual) = best.expect("at least one iteration");
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        residual: residual.as_f64(),
        best: u.values().iter().map(|v| v.as_f64()).collect(),
    })
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Real>(
    spec: &ProblemSpec<T>,
    geom: &LinkingGeometry<T>,
    tol: T,
    u: Field<T>,
    iterations: usize,
    trace: Vec<TraceRow<T>>,
    minimax_trace: Vec<T>,
    path: &[Field<T>],
    end_value: T,
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
    let start = phi(&path[0], spec)?;
    Ok(CriticalPointResult {
        u,
        value: e.phi,
        cerami,
        norm_w: e.norm_w,
        iterations: iterations + 1,
        classification,
        method: Method::MountainPass,
        geometry: geom.clone(),
        trace,
        minimax_trace,
        boundary_max: Some(start.max(end_value)),
        notes,
    })
}

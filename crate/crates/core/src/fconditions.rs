//! Sampling-based diagnostics for the structural conditions on `f`:
//! growth and sign, superlinearity at infinity, sublinearity at zero and the
//! monotonicity of `F(t) = f(t) t - p F(t)` along rays.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::NonlinearitySpec;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan<T> {
    /// Smallest sampled `|t|`, below 1.
    pub t_min: T,
    /// Largest sampled `|t|`, above 1.
    pub t_max: T,
    /// Log-spaced samples per sign.
    pub t_samples: usize,
    /// Uniform samples of `s` on `[0, 1]`.
    pub s_samples: usize,
    /// Spatial points at which an `x`-dependent `f` is probed.
    pub points: Vec<Vec<T>>,
}

impl<T: Real> Default for SamplingPlan<T> {
    fn default() -> Self {
        Self {
            t_min: T::lit(1e-6),
            t_max: T::lit(1e3),
            t_samples: 91,
            s_samples: 21,
            points: vec![Vec::new()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FConditionReport {
    pub f1: ConditionResult,
    pub f2: ConditionResult,
    pub f3: ConditionResult,
    pub f4: ConditionResult,
    /// Least-squares `C` in `|f(t)| ~ C (1 + |t|^(q-1))`.
    pub growth_constant: f64,
    pub note: &'static str,
}

impl FConditionReport {
    pub fn all_passed(&self) -> bool {
        self.f1.passed && self.f2.passed && self.f3.passed && self.f4.passed
    }

    pub fn conditions(&self) -> [&ConditionResult; 4] {
        [&self.f1, &self.f2, &self.f3, &self.f4]
    }
}

fn log_samples<T: Real>(plan: &SamplingPlan<T>) -> Vec<T> {
    let (a, b) = (plan.t_min.ln(), plan.t_max.ln());
    let n = plan.t_samples;
    (0..n)
        .map(|k| (a + (b - a) * T::from_count(k) / T::from_count(n - 1)).exp())
        .collect()
}

pub fn check_f_conditions<T: Real>(
    f: &NonlinearitySpec<T>,
    p: T,
    plan: &SamplingPlan<T>,
) -> Result<FConditionReport> {
    if !(plan.t_min > T::zero() && plan.t_min < T::one() && plan.t_max > T::one()) {
        return Err(Error::InvalidSampling(format!(
            "need 0 < t_min < 1 < t_max, got [{}, {}]",
            plan.t_min, plan.t_max
        )));
    }
    if plan.t_samples < 8 || plan.s_samples < 2 || plan.points.is_empty() {
        return Err(Error::InvalidSampling(
            "need at least 8 t-samples, 2 s-samples and one spatial point".into(),
        ));
    }
    let mags = log_samples(plan);
    let one = T::one();
    let q = f.q;

    // (f1): sign and growth
    let mut sign_violation = None;
    let (mut num, mut den) = (T::zero(), T::zero());
    let mut ratio_at = |t: T, x: &[T]| -> T {
        let a = one + t.abs().powf(q - one);
        let y = f.f(x, t).abs();
        num += a * y;
        den += a * a;
        y / a
    };
    let mut tail_growth = T::zero();
    let decade = mags.len() / (((plan.t_max / plan.t_min).log10()).round().as_f64().max(1.0) as usize).max(1);
    for x in &plan.points {
        let mut ratios = Vec::with_capacity(mags.len());
        for &m in &mags {
            for t in [m, -m] {
                if f.f(x, t) * t < T::zero() && sign_violation.is_none() {
                    sign_violation = Some(t);
                }
            }
            ratios.push(ratio_at(m, x).max(ratio_at(-m, x)));
        }
        let last = ratios[ratios.len() - 1];
        let earlier = ratios[ratios.len() - 1 - decade.min(ratios.len() - 1)];
        let growth = if earlier > T::zero() { last / earlier } else { T::zero() };
        tail_growth = tail_growth.max(growth);
    }
    let growth_constant = if den > T::zero() { num / den } else { T::zero() };
    let f1_pass = sign_violation.is_none() && q > p && tail_growth <= T::lit(2.0);
    let f1 = ConditionResult {
        name: "f1",
        passed: f1_pass,
        detail: match sign_violation {
            Some(t) => format!("sign test failed: f(t) t < 0 at t = {t}"),
            None if !(q > p) => format!("growth exponent q = {q} does not exceed p = {p}"),
            None if tail_growth > T::lit(2.0) => format!(
                "|f(t)| / (1 + |t|^(q-1)) grows by {tail_growth} over the last decade"
            ),
            None => format!("f(t) t >= 0 on all samples; fitted growth constant C = {growth_constant}"),
        },
    };

    // (f2): f(t) t / |t|^p strictly increasing for |t| >= 1
    let mut f2_fail = None;
    // (f3): |f(t)| / |t|^(p-1) strictly decreasing as |t| -> 0
    let mut f3_fail = None;
    for x in &plan.points {
        for sign in [one, -one] {
            let mut prev: Option<T> = None;
            for &m in mags.iter().filter(|&&m| m >= one) {
                let t = sign * m;
                let g = f.f(x, t) * t / m.powf(p);
                if let Some(pv) = prev {
                    if !(g > pv) && f2_fail.is_none() {
                        f2_fail = Some((t, g, pv));
                    }
                }
                prev = Some(g);
            }
            let mut prev: Option<T> = None;
            for &m in mags.iter().rev().filter(|&&m| m <= one) {
                let t = sign * m;
                let r = f.f(x, t).abs() / m.powf(p - one);
                if let Some(pv) = prev {
                    if !(r < pv) && f3_fail.is_none() {
                        f3_fail = Some((t, r, pv));
                    }
                }
                prev = Some(r);
            }
        }
    }
    let f2 = ConditionResult {
        name: "f2",
        passed: f2_fail.is_none(),
        detail: match f2_fail {
            Some((t, g, pv)) => format!("f(t) t / |t|^p not increasing at t = {t}: {g} after {pv}"),
            None => "f(t) t / |t|^p increasing on the sampled tail".into(),
        },
    };
    let f3 = ConditionResult {
        name: "f3",
        passed: f3_fail.is_none(),
        detail: match f3_fail {
            Some((t, r, pv)) => {
                format!("|f(t)| / |t|^(p-1) not decreasing toward 0 at t = {t}: {r} after {pv}")
            }
            None => "|f(t)| / |t|^(p-1) decreases toward 0 on the sampled range".into(),
        },
    };

    // (f4): theta F(t) >= F(s t)
    let mut f4_fail = None;
    let theta = f.theta;
    for x in &plan.points {
        for &m in &mags {
            for t in [m, -m] {
                let ft = f.excess(x, t, p);
                for k in 0..plan.s_samples {
                    let s = T::from_count(k) / T::from_count(plan.s_samples - 1);
                    let fst = f.excess(x, s * t, p);
                    let tol = T::lit(1e-9) * (ft.abs() + fst.abs() + T::min_positive_value());
                    if theta * ft < fst - tol && f4_fail.is_none() {
                        f4_fail = Some((t, s, ft, fst));
                    }
                }
            }
        }
    }
    let f4 = ConditionResult {
        name: "f4",
        passed: f4_fail.is_none(),
        detail: match f4_fail {
            Some((t, s, ft, fst)) => format!(
                "theta F(t) = {} < F(s t) = {fst} at t = {t}, s = {s}",
                theta * ft
            ),
            None => format!("theta F(t) >= F(s t) on the (t, s) sample grid with theta = {theta}"),
        },
    };

    Ok(FConditionReport {
        f1,
        f2,
        f3,
        f4,
        growth_constant: growth_constant.as_f64(),
        note: "sampling-based: a pass is evidence, not proof",
    })
}

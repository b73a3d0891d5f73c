//! Property suites shared by the command line `verify` run and the
//! acceptance tests. Each suite reports its worst case against a fixed
//! threshold.

use rand::Rng;
use serde::Serialize;

use crate::eigen::{lowest_eigenpair, linear_spectrum_oracle, RayleighOptions};
use crate::error::Result;
use crate::fconditions::{check_f_conditions, SamplingPlan};
use crate::field::Field;
use crate::functional::{eval_energy, grad_energy, monotonicity_gap};
use crate::grid::Grid;
use crate::problem::{NonlinearitySpec, ProblemSpec};
use crate::rng::{substream, uniform_field, SolverRng};
use crate::scalar::Real;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub failures: usize,
    /// Worst observed value of the suite's metric.
    pub worst: f64,
    pub threshold: f64,
    pub detail: String,
}

impl SuiteResult {
    fn new(name: impl Into<String>, cases: usize, failures: usize, worst: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            passed: failures == 0 && cases > 0,
            cases,
            failures,
            worst,
            threshold,
            detail,
        }
    }

    /// One human-readable line.
    pub fn line(&self) -> String {
        format!(
            "{} {}: {} cases, {} failures, worst {:.3e} (threshold {:.1e}){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.failures,
            self.worst,
            self.threshold,
            if self.detail.is_empty() { String::new() } else { format!(" [{}]", self.detail) }
        )
    }
}

/// Uniform values times a log-uniform amplitude in `[0.1, 10]`.
pub fn random_field<T: Real>(rng: &mut SolverRng, len: usize) -> Field<T> {
    let amp = T::lit(10f64.powf(rng.random_range(-1.0..1.0)));
    uniform_field::<T>(rng, len).scaled(amp)
}

/// The periodic test problem with `b = V = 1` and `f = |t|^(q-2) t`.
pub fn standard_spec<T: Real>(n: usize, p: T, lambda: T, q: T) -> Result<ProblemSpec<T>> {
    ProblemSpec::uniform(
        Grid::periodic(n, 1.0)?,
        p,
        lambda,
        T::one(),
        T::one(),
        NonlinearitySpec::pure_power(q),
    )
}

/// Relative error of `<Phi'(u), v>` against the central difference with
/// step `eps`, over `count` random pairs.
pub fn gradient_suite<T: Real>(spec: &ProblemSpec<T>, count: usize, eps: T, seed: u64) -> Result<SuiteResult> {
    let threshold = 1e-6;
    let n = spec.grid.num_dofs();
    let mut rng = substream(seed, 10);
    let (mut worst, mut failures) = (0.0f64, 0);
    for _ in 0..count {
        let u: Field<T> = uniform_field(&mut rng, n);
        let v: Field<T> = uniform_field(&mut rng, n);
        let an = grad_energy(&u, spec)?.grad_phi.dot(&v);
        let plus = eval_energy(&u.axpy(eps, &v), spec)?.phi;
        let minus = eval_energy(&u.axpy(-eps, &v), spec)?.phi;
        let fd = (plus - minus) / (T::lit(2.0) * eps);
        let rel = ((fd - an).abs() / an.abs().max(T::lit(1e-300))).as_f64();
        worst = worst.max(rel);
        if !(rel < threshold) {
            failures += 1;
        }
    }
    Ok(SuiteResult::new(
        format!("gradient p={}", spec.p),
        count,
        failures,
        worst,
        threshold,
        format!("eps={:e}", eps.as_f64()),
    ))
}

/// `H(tu) = |t|^p H(u)`, `I(tu) = |t|^p I(u)` and the Euler identities
/// `<H'(u), u> = p H(u)`, `<I'(u), u> = p I(u)`, relative to `1e-12`.
pub fn homogeneity_suite<T: Real>(spec: &ProblemSpec<T>, count: usize, seed: u64) -> Result<SuiteResult> {
    let threshold = 1e-12;
    let n = spec.grid.num_dofs();
    let p = spec.p;
    let mut rng = substream(seed, 11);
    let (mut worst, mut failures) = (0.0f64, 0);
    let rel = |a: T, b: T, scale: T| ((a - b).abs() / scale.max(T::min_positive_value())).as_f64();
    for _ in 0..count {
        let u: Field<T> = random_field(&mut rng, n);
        let t = T::lit(rng.random_range(-3.0..3.0));
        let e = eval_energy(&u, spec)?;
        let et = eval_energy(&u.scaled(t), spec)?;
        let g = grad_energy(&u, spec)?;
        let tp = t.abs().powf(p);
        // I may vanish for sign-changing V; scale by the positive part
        let i_scale = e.h.max(e.i.abs());
        let errs = [
            rel(et.h, tp * e.h, tp * e.h),
            rel(et.i, tp * e.i, tp * i_scale),
            rel(g.grad_h.dot(&u), p * e.h, p * e.h),
            rel(g.grad_i.dot(&u), p * e.i, p * i_scale),
        ];
        let case = errs.iter().copied().fold(0.0, f64::max);
        worst = worst.max(case);
        if !(case < threshold) {
            failures += 1;
        }
    }
    Ok(SuiteResult::new(
        format!("homogeneity+euler p={}", p),
        count,
        failures,
        worst,
        threshold,
        String::new(),
    ))
}

/// The monotonicity gap over random pairs; the metric is
/// `-gap / (1 + ||u||^p + ||v||^p)`, which must stay below `1e-10`.
pub fn monotonicity_suite<T: Real>(spec: &ProblemSpec<T>, pairs: usize, seed: u64) -> Result<SuiteResult> {
    let threshold = 1e-10;
    let n = spec.grid.num_dofs();
    let mut rng = substream(seed, 12);
    let (mut worst, mut failures) = (f64::NEG_INFINITY, 0);
    for k in 0..pairs {
        let u: Field<T> = random_field(&mut rng, n);
        // every tenth pair is nearly parallel, where the gap is smallest
        let v: Field<T> = if k % 10 == 0 {
            u.scaled(T::lit(rng.random_range(-2.0..2.0)))
                .axpy(T::lit(1e-3), &random_field(&mut rng, n))
        } else {
            random_field(&mut rng, n)
        };
        let gap = monotonicity_gap(&u, &v, spec)?;
        let nu = eval_energy(&u, spec)?.norm_w;
        let nv = eval_energy(&v, spec)?.norm_w;
        let scale = T::one() + nu.powf(spec.p) + nv.powf(spec.p);
        let metric = (-gap / scale).as_f64();
        worst = worst.max(metric);
        if !(metric <= threshold) {
            failures += 1;
        }
    }
    Ok(SuiteResult::new(
        format!("monotonicity gap p={}", spec.p),
        pairs,
        failures,
        worst,
        threshold,
        String::new(),
    ))
}

/// Sampled structural conditions on `f`.
pub fn f_conditions_suite<T: Real>(f: &NonlinearitySpec<T>, p: T) -> Result<SuiteResult> {
    let report = check_f_conditions(f, p, &SamplingPlan::default())?;
    let failed: Vec<&str> = report.conditions().iter().filter(|c| !c.passed).map(|c| c.name).collect();
    Ok(SuiteResult::new(
        "f conditions",
        4,
        failed.len(),
        failed.len() as f64,
        0.0,
        if failed.is_empty() {
            format!("growth constant {:.3e}; {}", report.growth_constant, report.note)
        } else {
            format!("failed: {}", failed.join(", "))
        },
    ))
}

/// `lambda_1 = 1` for `b = V = 1` on the periodic circle, for every `p`.
pub fn lambda1_anchor_suite<T: Real>(ps: &[T], n: usize, seed: u64) -> Result<SuiteResult> {
    let threshold = 1e-6;
    let (mut worst, mut failures) = (0.0f64, 0);
    let mut detail = Vec::new();
    for &p in ps {
        let spec = standard_spec(n, p, T::zero(), p + T::lit(2.0))?;
        let opts = RayleighOptions {
            seed,
            ..RayleighOptions::default()
        };
        let err = match lowest_eigenpair(&spec, &opts) {
            Ok(pair) => (pair.lambda - T::one()).abs().as_f64(),
            Err(_) => f64::INFINITY,
        };
        detail.push(format!("p={p}: {err:.2e}"));
        worst = worst.max(err);
        if !(err < threshold) {
            failures += 1;
        }
    }
    Ok(SuiteResult::new(
        "lambda1 anchor",
        ps.len(),
        failures,
        worst,
        threshold,
        detail.join(", "),
    ))
}

/// `Phi <= 0` on fields in the span of eigenfunctions with eigenvalue at
/// most `lambda` (a linear model of `C-` at `p = 2`). Skipped (zero cases)
/// when `p != 2` or no eigenvalue lies below `lambda`.
pub fn cone_sign_suite<T: Real>(spec: &ProblemSpec<T>, count: usize, seed: u64) -> Result<SuiteResult> {
    let threshold = 1e-10;
    let name = format!("cone sign lambda={}", spec.lambda);
    if spec.p != T::lit(2.0) || spec.lambda < T::zero() {
        return Ok(SuiteResult::new(name, 0, 0, 0.0, threshold, "needs p = 2 and lambda >= 0".into()));
    }
    let spectrum = linear_spectrum_oracle(spec)?;
    let basis: Vec<&Field<T>> = spectrum
        .entries
        .iter()
        .filter(|e| e.value <= spec.lambda)
        .filter_map(|e| e.pair.as_ref().map(|p| &p.u))
        .collect();
    if basis.is_empty() {
        return Ok(SuiteResult::new(name, 0, 0, 0.0, threshold, "no eigenvalue below lambda".into()));
    }
    let mut rng = substream(seed, 13);
    let n = spec.grid.num_dofs();
    let (mut worst, mut failures) = (f64::NEG_INFINITY, 0);
    for _ in 0..count {
        let amp = 10f64.powf(rng.random_range(-2.0..2.0));
        let mut u = Field::zeros(n);
        for b in &basis {
            u = u.axpy(T::lit(amp * rng.random_range(-1.0..1.0)), b);
        }
        let value = eval_energy(&u, spec)?.phi.as_f64();
        worst = worst.max(value);
        if !(value <= threshold) {
            failures += 1;
        }
    }
    Ok(SuiteResult::new(
        name,
        count,
        failures,
        worst,
        threshold,
        format!("model dimension {}", basis.len()),
    ))
}

/// `Phi` is bitwise unchanged by `(lambda, V) -> (-lambda, -V)`.
pub fn flip_suite<T: Real>(spec: &ProblemSpec<T>, count: usize, seed: u64) -> Result<SuiteResult> {
    let flipped = spec.flipped();
    let mut rng = substream(seed, 14);
    let n = spec.grid.num_dofs();
    let mut failures = 0;
    let mut worst = 0.0f64;
    for _ in 0..count {
        let u: Field<T> = random_field(&mut rng, n);
        let a = eval_energy(&u, spec)?.phi;
        let b = eval_energy(&u, &flipped)?.phi;
        if a.as_f64().to_bits() != b.as_f64().to_bits() {
            failures += 1;
            worst = worst.max((a - b).abs().as_f64());
        }
    }
    Ok(SuiteResult::new("flip identity", count, failures, worst, 0.0, String::new()))
}

/// Sizes of the standard sweep.
#[derive(Debug, Clone)]
pub struct SuitePlan {
    pub gradient_fields: usize,
    pub homogeneity_fields: usize,
    pub monotonicity_pairs: usize,
    pub cone_samples: usize,
    pub flip_fields: usize,
    pub anchor_nodes: usize,
    pub seed: u64,
}

impl Default for SuitePlan {
    fn default() -> Self {
        Self {
            gradient_fields: 100,
            homogeneity_fields: 100,
            monotonicity_pairs: 1000,
            cone_samples: 200,
            flip_fields: 100,
            anchor_nodes: 256,
            seed: 0,
        }
    }
}

/// Runs every suite on the standard periodic problems and on `spec`.
pub fn run_all(spec: &ProblemSpec<f64>, plan: &SuitePlan) -> Result<Vec<SuiteResult>> {
    let seed = plan.seed;
    let mut out = Vec::new();
    for p in [2.0, 2.5, 3.0] {
        out.push(gradient_suite(&standard_spec(64, p, 0.5, p + 2.0)?, plan.gradient_fields, 1e-5, seed)?);
    }
    if spec.p >= 2.0 {
        out.push(gradient_suite(spec, plan.gradient_fields, 1e-5, seed)?);
    }
    for p in [1.5, 2.0, 3.0] {
        out.push(homogeneity_suite(&standard_spec(64, p, 0.5, p + 2.0)?, plan.homogeneity_fields, seed)?);
        out.push(monotonicity_suite(&standard_spec(64, p, 0.0, p + 2.0)?, plan.monotonicity_pairs, seed)?);
    }
    out.push(homogeneity_suite(spec, plan.homogeneity_fields, seed)?);
    out.push(monotonicity_suite(spec, plan.monotonicity_pairs, seed)?);
    out.push(f_conditions_suite(&spec.f, spec.p)?);
    out.push(lambda1_anchor_suite(&[1.5, 2.0, 3.0], plan.anchor_nodes, seed)?);
    out.push(cone_sign_suite(&standard_spec(128, 2.0, 50.0, 4.0)?, plan.cone_samples, seed)?);
    if spec.p == 2.0 && spec.grid.num_dofs() <= crate::eigen::ORACLE_LIMIT {
        let s = spec.with_nonnegative_lambda();
        let r = cone_sign_suite(&s, plan.cone_samples, seed)?;
        if r.cases > 0 {
            out.push(r);
        }
    }
    out.push(flip_suite(spec, plan.flip_fields, seed)?);
    Ok(out)
}

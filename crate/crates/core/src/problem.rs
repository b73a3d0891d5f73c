//! Problem instances: exponent, spectral parameter, coefficients and the
//! nonlinearity, sampled onto a grid and validated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{DomainDescriptor, Grid, GridKind};
use crate::scalar::{signed_pow, Real};

/// A coefficient given either as a number or as an expression in `x1..xN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    Constant(f64),
    Expression(String),
}

impl CoefficientSpec {
    fn sample<T: Real>(&self, grid: &Grid<T>, name: &str) -> Result<Vec<T>> {
        let values: Vec<T> = match self {
            CoefficientSpec::Constant(c) => vec![T::lit(*c); grid.num_nodes()],
            CoefficientSpec::Expression(src) => {
                let e = Expr::parse(src)?;
                if e.uses_t() {
                    return Err(Error::InvalidProblem(format!(
                        "coefficient {name} may not depend on t"
                    )));
                }
                if let Some(a) = e.max_axis() {
                    if a >= grid.dims() {
                        return Err(Error::InvalidProblem(format!(
                            "coefficient {name} uses x{} on a {}-dimensional grid",
                            a + 1,
                            grid.dims()
                        )));
                    }
                }
                (0..grid.num_nodes())
                    .map(|n| e.eval(T::zero(), &grid.coords(n)))
                    .collect()
            }
        };
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "coefficient {name} is not finite at node {node}"
            )));
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearityKind {
    /// `f(t) = |t|^(q-2) t`
    PurePower,
    /// `f(t) = coeff |t|^(q-2) t`
    ScaledPower,
    /// `f(x, t)` given by an expression; `q` and `theta` supplied by the user.
    CustomSampled,
}

/// Serializable nonlinearity description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityDescriptor {
    pub kind: NonlinearityKind,
    pub q: f64,
    #[serde(default = "one")]
    pub coeff: f64,
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default)]
    pub expr: Option<String>,
}

fn one() -> f64 {
    1.0
}

/// The nonlinearity `f`, its primitive `F` and its `t`-derivative.
#[derive(Debug, Clone)]
pub struct NonlinearitySpec<T> {
    pub kind: NonlinearityKind,
    pub q: T,
    pub coeff: T,
    pub theta: T,
    expr: Option<(Expr, Expr)>,
}

/// Relative tolerance of the adaptive Simpson rule used for custom `F`.
const PRIMITIVE_TOL: f64 = 1e-10;

impl<T: Real> NonlinearitySpec<T> {
    pub fn pure_power(q: T) -> Self {
        Self {
            kind: NonlinearityKind::PurePower,
            q,
            coeff: T::one(),
            theta: T::one(),
            expr: None,
        }
    }

    /// `coeff |t|^(q-2) t`. Negative coefficients are representable so that
    /// condition checks can diagnose them; [`ProblemSpec::new`] rejects them.
    pub fn scaled_power(q: T, coeff: T) -> Self {
        Self {
            kind: NonlinearityKind::ScaledPower,
            q,
            coeff,
            theta: T::one(),
            expr: None,
        }
    }

    pub fn custom(expr: &str, q: T, theta: T) -> Result<Self> {
        let e = Expr::parse(expr)?;
        let d = e.derivative_t();
        Ok(Self {
            kind: NonlinearityKind::CustomSampled,
            q,
            coeff: T::one(),
            theta,
            expr: Some((e, d)),
        })
    }

    pub fn from_descriptor(d: &NonlinearityDescriptor) -> Result<Self> {
        match d.kind {
            NonlinearityKind::PurePower => {
                if d.coeff != 1.0 {
                    return Err(Error::InvalidProblem(
                        "pure-power nonlinearity has coeff = 1; use scaled-power".into(),
                    ));
                }
                Ok(Self::pure_power(T::lit(d.q)))
            }
            NonlinearityKind::ScaledPower => Ok(Self::scaled_power(T::lit(d.q), T::lit(d.coeff))),
            NonlinearityKind::CustomSampled => {
                let src = d.expr.as_deref().ok_or_else(|| {
                    Error::InvalidProblem("custom-sampled nonlinearity needs expr".into())
                })?;
                let mut s = Self::custom(src, T::lit(d.q), T::lit(d.theta))?;
                s.coeff = T::lit(d.coeff);
                Ok(s)
            }
        }
    }

    pub fn expression(&self) -> Option<&Expr> {
        self.expr.as_ref().map(|(e, _)| e)
    }

    /// Same nonlinearity multiplied by `c`.
    pub fn times(&self, c: T) -> Self {
        let mut out = self.clone();
        if out.kind == NonlinearityKind::PurePower {
            out.kind = NonlinearityKind::ScaledPower;
        }
        out.coeff *= c;
        out
    }

    #[inline]
    pub fn f(&self, x: &[T], t: T) -> T {
        match &self.expr {
            None => self.coeff * signed_pow(t, self.q - T::one()),
            Some((e, _)) => self.coeff * e.eval(t, x),
        }
    }

    #[inline]
    pub fn df(&self, x: &[T], t: T) -> T {
        match &self.expr {
            None => {
                if t == T::zero() && self.q < T::lit(2.0) {
                    return T::zero();
                }
                self.coeff * (self.q - T::one()) * t.abs().powf(self.q - T::lit(2.0))
            }
            Some((_, d)) => self.coeff * d.eval(t, x),
        }
    }

    /// `F(x, t) = int_0^t f(x, s) ds`, closed form for powers.
    pub fn primitive(&self, x: &[T], t: T) -> T {
        match &self.expr {
            None => self.coeff * t.abs().powf(self.q) / self.q,
            Some(_) => {
                if t == T::zero() {
                    return T::zero();
                }
                let g = |s: T| self.f(x, s);
                adaptive_simpson(&g, T::zero(), t, T::lit(PRIMITIVE_TOL))
            }
        }
    }

    /// `f(x, t) t - p F(x, t)`.
    pub fn excess(&self, x: &[T], t: T, p: T) -> T {
        self.f(x, t) * t - p * self.primitive(x, t)
    }
}

fn adaptive_simpson<T: Real>(f: &impl Fn(T) -> T, a: T, b: T, tol: T) -> T {
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    let fa = f(a);
    let fb = f(b);
    let m = (a + b) / two;
    let fm = f(m);
    let whole = (b - a) / six * (fa + T::lit(4.0) * fm + fb);
    let scale = whole.abs().max(T::min_positive_value());
    simpson_step(f, a, b, fa, fm, fb, whole, tol * scale.max(T::one()), 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<T: Real>(
    f: &impl Fn(T) -> T,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: usize,
) -> T {
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    let m = (a + b) / two;
    let lm = (a + m) / two;
    let rm = (m + b) / two;
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / six * (fa + T::lit(4.0) * flm + fm);
    let right = (b - m) / six * (fm + T::lit(4.0) * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= T::lit(15.0) * tol {
        return left + right + delta / T::lit(15.0);
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / two, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / two, depth - 1)
}

/// Serializable problem description (everything but the grid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDescriptor {
    pub p: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "unit_coefficient")]
    pub b: CoefficientSpec,
    #[serde(default = "unit_coefficient", rename = "V")]
    pub v: CoefficientSpec,
    pub f: NonlinearityDescriptor,
}

fn unit_coefficient() -> CoefficientSpec {
    CoefficientSpec::Constant(1.0)
}

/// A complete, validated problem instance on a concrete grid.
#[derive(Debug, Clone)]
pub struct ProblemSpec<T> {
    pub grid: Grid<T>,
    pub p: T,
    pub lambda: T,
    /// `b` sampled at every node.
    pub b: Vec<T>,
    /// `V` sampled at every node.
    pub v: Vec<T>,
    pub f: NonlinearitySpec<T>,
    /// `min b`
    pub b0: T,
    /// `max |V|`
    pub v_inf: T,
    coords: Vec<Vec<T>>,
}

impl<T: Real> ProblemSpec<T> {
    pub fn new(
        grid: Grid<T>,
        p: T,
        lambda: T,
        b: Vec<T>,
        v: Vec<T>,
        f: NonlinearitySpec<T>,
    ) -> Result<Self> {
        if !(p > T::one()) {
            return Err(Error::InvalidProblem(format!("p must exceed 1, got {p}")));
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidProblem("lambda must be finite".into()));
        }
        for (name, c) in [("b", &b), ("V", &v)] {
            if c.len() != grid.num_nodes() {
                return Err(Error::LengthMismatch {
                    expected: grid.num_nodes(),
                    got: c.len(),
                });
            }
            if let Some(node) = c.iter().position(|x| !x.is_finite()) {
                return Err(Error::InvalidProblem(format!(
                    "{name} is not finite at node {node}"
                )));
            }
        }
        let b0 = b.iter().copied().fold(T::infinity(), T::min);
        if !(b0 > T::zero()) {
            return Err(Error::InvalidProblem(format!(
                "b must be bounded below by a positive constant, min b = {b0}"
            )));
        }
        let v_inf = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        if !(f.q > p) {
            return Err(Error::InvalidProblem(format!(
                "growth exponent q = {} must exceed p = {p}",
                f.q
            )));
        }
        if let Some(crit) = critical_exponent(&grid, p) {
            if !(f.q < crit) {
                return Err(Error::InvalidProblem(format!(
                    "growth exponent q = {} is not subcritical (p* = {crit})",
                    f.q
                )));
            }
        }
        if f.coeff < T::zero() {
            return Err(Error::InvalidProblem(format!(
                "nonlinearity coefficient must be non-negative, got {}",
                f.coeff
            )));
        }
        if f.theta < T::one() {
            return Err(Error::InvalidProblem(format!(
                "theta must be at least 1, got {}",
                f.theta
            )));
        }
        if let Some(a) = f.expression().and_then(Expr::max_axis) {
            if a >= grid.dims() {
                return Err(Error::InvalidProblem(format!(
                    "nonlinearity uses x{} on a {}-dimensional grid",
                    a + 1,
                    grid.dims()
                )));
            }
        }
        let coords = (0..grid.num_nodes()).map(|n| grid.coords(n)).collect();
        Ok(Self {
            grid,
            p,
            lambda,
            b,
            v,
            f,
            b0,
            v_inf,
            coords,
        })
    }

    pub fn from_descriptors(problem: &ProblemDescriptor, domain: &DomainDescriptor) -> Result<Self> {
        let grid = Grid::build(domain)?;
        let b = problem.b.sample(&grid, "b")?;
        let v = problem.v.sample(&grid, "V")?;
        let f = NonlinearitySpec::from_descriptor(&problem.f)?;
        Self::new(grid, T::lit(problem.p), T::lit(problem.lambda), b, v, f)
    }

    /// Constant coefficients `b` and `V` on `grid`.
    pub fn uniform(grid: Grid<T>, p: T, lambda: T, b: T, v: T, f: NonlinearitySpec<T>) -> Result<Self> {
        let n = grid.num_nodes();
        Self::new(grid, p, lambda, vec![b; n], vec![v; n], f)
    }

    pub fn coords(&self, node: usize) -> &[T] {
        &self.coords[node]
    }

    pub fn with_lambda(&self, lambda: T) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn with_nonlinearity(&self, f: NonlinearitySpec<T>) -> Self {
        Self { f, ..self.clone() }
    }

    /// The same functional written with `(lambda, V) -> (-lambda, -V)`.
    pub fn flipped(&self) -> Self {
        Self {
            lambda: -self.lambda,
            v: self.v.iter().map(|&x| -x).collect(),
            ..self.clone()
        }
    }

    /// Representation with `lambda >= 0` (flipped when `lambda < 0`).
    pub fn with_nonnegative_lambda(&self) -> Self {
        if self.lambda < T::zero() {
            self.flipped()
        } else {
            self.clone()
        }
    }

    /// Whether `V > 0` somewhere on the free nodes.
    pub fn has_positive_weight(&self) -> bool {
        (0..self.grid.num_dofs()).any(|d| self.v[self.grid.dof_node(d)] > T::zero())
    }

    /// Norm scale used to separate genuine solutions from rounding noise.
    pub fn delta_nontrivial(&self) -> T {
        T::lit(1e-4) * self.grid.measure().powf(T::one() / self.p)
    }
}

/// `N p / (N - p)` on boxes with `N > p`; `None` (= infinity) otherwise.
pub fn critical_exponent<T: Real>(grid: &Grid<T>, p: T) -> Option<T> {
    let n = T::from_count(grid.dims());
    match grid.kind() {
        GridKind::BoxNd if n > p => Some(n * p / (n - p)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid<f64> {
        Grid::periodic(16, 1.0).unwrap()
    }

    #[test]
    fn power_primitive_and_derivative() {
        let f = NonlinearitySpec::<f64>::pure_power(4.0);
        assert_eq!(f.f(&[], -2.0), -8.0);
        assert_eq!(f.primitive(&[], -2.0), 4.0);
        assert_eq!(f.df(&[], -2.0), 12.0);
        assert_eq!(f.excess(&[], 2.0, 2.0), 16.0 - 8.0);
    }

    #[test]
    fn custom_primitive_uses_quadrature() {
        let f = NonlinearitySpec::<f64>::custom("t^3 + t*exp(-t*t)", 4.0, 1.0).unwrap();
        for &t in &[-1.7f64, 0.3, 2.5] {
            let exact = t.powi(4) / 4.0 + 0.5 * (1.0 - (-t * t).exp());
            assert!((f.primitive(&[], t) - exact).abs() < 1e-9 * (1.0 + exact.abs()));
        }
        assert!((f.df(&[], 1.0) - (3.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let f = NonlinearitySpec::pure_power(4.0);
        assert!(ProblemSpec::uniform(grid(), 2.0, 0.0, 1.0, 1.0, f.clone()).is_ok());
        assert!(ProblemSpec::uniform(grid(), 1.0, 0.0, 1.0, 1.0, f.clone()).is_err());
        assert!(ProblemSpec::uniform(grid(), 2.0, 0.0, 0.0, 1.0, f.clone()).is_err());
        assert!(ProblemSpec::uniform(grid(), 2.0, f64::NAN, 1.0, 1.0, f.clone()).is_err());
        assert!(ProblemSpec::uniform(grid(), 4.0, 0.0, 1.0, 1.0, f.clone()).is_err());
        let neg = NonlinearitySpec::scaled_power(4.0, -1.0);
        assert!(ProblemSpec::uniform(grid(), 2.0, 0.0, 1.0, 1.0, neg).is_err());
        // subcritical check on a 3-d box: p* = 6 for p = 2
        let g3 = Grid::boxed(3, 6, 2.0).unwrap();
        let f7 = NonlinearitySpec::pure_power(7.0);
        assert!(ProblemSpec::uniform(g3.clone(), 2.0, 0.0, 1.0, 1.0, f7.clone()).is_err());
        assert!(ProblemSpec::uniform(g3, 2.0, 0.0, 1.0, 1.0, f).is_ok());
        // periodic 1-d admits any q > p
        assert!(ProblemSpec::uniform(grid(), 2.0, 0.0, 1.0, 1.0, f7).is_ok());
    }

    #[test]
    fn expression_coefficients() {
        let desc = ProblemDescriptor {
            p: 2.0,
            lambda: -3.0,
            b: CoefficientSpec::Constant(2.0),
            v: CoefficientSpec::Expression("2 + cos(2*pi*x)".into()),
            f: NonlinearityDescriptor {
                kind: NonlinearityKind::PurePower,
                q: 4.0,
                coeff: 1.0,
                theta: 1.0,
                expr: None,
            },
        };
        let s = ProblemSpec::<f64>::from_descriptors(&desc, &DomainDescriptor::periodic(8, 1.0)).unwrap();
        assert_eq!(s.b0, 2.0);
        assert!((s.v[0] - 3.0).abs() < 1e-15);
        assert!((s.v_inf - 3.0).abs() < 1e-15);
        let flipped = s.with_nonnegative_lambda();
        assert_eq!(flipped.lambda, 3.0);
        assert_eq!(flipped.v[0], -s.v[0]);
        let mut bad = desc.clone();
        bad.b = CoefficientSpec::Expression("x2".into());
        assert!(ProblemSpec::<f64>::from_descriptors(&bad, &DomainDescriptor::periodic(8, 1.0)).is_err());
    }
}

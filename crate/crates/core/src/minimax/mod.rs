//! Search for nontrivial critical points of `Phi`.
//!
//! With `C- = {0}` the critical point is a mountain pass between the origin
//! and a point of negative energy. Otherwise it is found as a local minimax
//! over half-subspaces `span(C- model) + R+ w`, whose boundary (the `C-`
//! ball and the outer arc) carries non-positive energy while `Phi >= alpha`
//! on the sphere `S+` of radius `r_plus` in `C+`.

mod descent;
mod geometry;
mod linking;
mod mountain_pass;
mod verify;

use serde::Serialize;

use crate::eigen::{estimate_spectrum, linear_spectrum_oracle, RayleighOptions, SpectrumEstimate, ORACLE_LIMIT};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::functional::{apply_entries, eval_energy, hessian_entries, HessianKind, Preconditioner};
use crate::problem::ProblemSpec;
use crate::scalar::Real;

pub use descent::{descend_cerami, newton_polish};
pub use geometry::{estimate_geometry, GeometryOptions};
pub use linking::{linking_minimax, LinkingOptions};
pub use mountain_pass::{mountain_pass, PathOptions};
pub use verify::{verify_solution, VerificationReport};

/// Radii, level and directions describing the linking geometry of one
/// problem. All quantities refer to the representation
/// with `lambda >= 0`.
#[derive(Debug, Clone, Serialize)]
pub struct LinkingGeometry<T> {
    /// Number of eigenvalues `<= lambda`; 0 means `C- = {0}`.
    pub m: usize,
    pub lambda_m: T,
    /// `+inf` (serialized as null) when there is no eigenvalue above `lambda`.
    pub lambda_m1: T,
    pub r_plus: T,
    pub r_minus: T,
    /// Sampled minimum of `Phi` on the `r_plus` sphere in `C+`.
    pub alpha: T,
    /// `(r, min Phi)` over the sampled `C+` rays.
    pub profile: Vec<(T, T)>,
    /// Sampled maximum of `Phi` on the `r_minus` sphere of `C- + R+ e`.
    pub cap_max: T,
    /// Whether `(lambda, V)` was flipped to make `lambda >= 0`.
    pub flipped: bool,
    /// Whether every vector of the `C-` model is known to lie in `C-`.
    pub model_exact: bool,
    /// Direction outside `C-` with unit norm.
    #[serde(skip)]
    pub e: Field<T>,
    /// Unit-norm spanning vectors of the `C-` model.
    #[serde(skip)]
    pub basis: Vec<Field<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Trivial,
    NontrivialCandidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MountainPass,
    Linking,
}

/// One row of a descent trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow<T> {
    pub iteration: usize,
    pub phi: T,
    pub cerami: T,
    pub norm: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalPointResult<T> {
    #[serde(skip)]
    pub u: Field<T>,
    pub value: T,
    pub cerami: T,
    pub norm_w: T,
    pub iterations: usize,
    pub classification: Classification,
    pub method: Method,
    pub geometry: LinkingGeometry<T>,
    #[serde(skip)]
    pub trace: Vec<TraceRow<T>>,
    /// Minimax estimate per outer iteration, non-increasing.
    pub minimax_trace: Vec<T>,
    /// Largest `Phi` seen on frozen boundary samples, if any were used.
    pub boundary_max: Option<T>,
    pub notes: Vec<String>,
}

/// Default Cerami tolerance: tighter in the linear case.
pub fn default_tolerance<T: Real>(p: T) -> T {
    if p == T::lit(2.0) {
        T::lit(1e-8)
    } else {
        T::lit(1e-6)
    }
}

pub(crate) fn classify<T: Real>(spec: &ProblemSpec<T>, norm: T, cerami: T, value: T, tol: T) -> Classification {
    if norm > spec.delta_nontrivial() && cerami < tol && value > T::zero() {
        Classification::NontrivialCandidate
    } else {
        Classification::Trivial
    }
}

/// Riesz map and inner product of the `p = 2` energy, used both as the
/// descent metric and to orthogonalize directions.
#[derive(Debug, Clone)]
pub(crate) struct Metric<T> {
    precond: Preconditioner<T>,
    stiffness: Vec<(usize, usize, T)>,
}

impl<T: Real> Metric<T> {
    pub(crate) fn new(spec: &ProblemSpec<T>) -> Result<Self> {
        let zero = Field::zeros(spec.grid.num_dofs());
        Ok(Self {
            precond: Preconditioner::new(spec)?,
            stiffness: hessian_entries(&zero, spec, HessianKind::Stiffness, T::zero())?,
        })
    }

    /// `a^T K b`
    pub(crate) fn dot(&self, a: &Field<T>, b: &Field<T>) -> T {
        apply_entries(&self.stiffness, b).dot(a)
    }

    /// Sobolev gradient `K^{-1} g`.
    pub(crate) fn riesz(&self, g: &Field<T>) -> Field<T> {
        self.precond.apply(g)
    }

    /// Removes the `K`-orthogonal projection onto `basis`.
    pub(crate) fn project_out(&self, v: &Field<T>, basis: &[Field<T>]) -> Field<T> {
        let mut out = v.clone();
        // two passes of Gram-Schmidt against a non-orthogonal basis
        for _ in 0..2 {
            for b in basis {
                let c = self.dot(&out, b) / self.dot(b, b);
                out = out.axpy(-c, b);
            }
        }
        out
    }
}

/// `u / ||u||_W`, or `None` for (numerically) zero fields.
pub(crate) fn unit_w<T: Real>(u: &Field<T>, spec: &ProblemSpec<T>) -> Result<Option<Field<T>>> {
    let n = eval_energy(u, spec)?.norm_w;
    if n > T::zero() && n.is_finite() {
        Ok(Some(u.scaled(T::one() / n)))
    } else {
        Ok(None)
    }
}

/// Options for [`solve`].
#[derive(Debug, Clone)]
pub struct SolveOptions<T> {
    /// Cerami tolerance; [`default_tolerance`] when `None`.
    pub tol: Option<T>,
    pub seed: u64,
    pub eigen: RayleighOptions<T>,
    pub geometry: GeometryOptions,
    pub path: PathOptions,
    pub linking: LinkingOptions,
}

impl<T: Real> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            tol: None,
            seed: 0,
            eigen: RayleighOptions::default(),
            geometry: GeometryOptions::default(),
            path: PathOptions::default(),
            linking: LinkingOptions::default(),
        }
    }
}

/// Spectrum of `spec` far enough to place `lambda` between two eigenvalues.
pub fn spectrum_for<T: Real>(spec: &ProblemSpec<T>, opts: &RayleighOptions<T>) -> Result<SpectrumEstimate<T>> {
    if spec.p == T::lit(2.0) && spec.grid.num_dofs() <= ORACLE_LIMIT {
        return linear_spectrum_oracle(spec);
    }
    let mut last = None;
    for count in 2..=8 {
        let s = estimate_spectrum(spec, count, opts)?;
        if s.m_index(spec.lambda).is_some() || s.values().last().is_some_and(|&v| v > spec.lambda) {
            return Ok(s);
        }
        last = Some(s);
    }
    last.ok_or_else(|| Error::Geometry("empty spectrum".into()))
}

/// Full pipeline: flip to `lambda >= 0`, bracket `lambda` in the spectrum,
/// estimate the geometry and run the matching minimax search.
pub fn solve<T: Real>(spec: &ProblemSpec<T>, opts: &SolveOptions<T>) -> Result<CriticalPointResult<T>> {
    let flipped = spec.lambda < T::zero();
    let s = spec.with_nonnegative_lambda();
    let tol = opts.tol.unwrap_or_else(|| default_tolerance(s.p));
    let spectrum = if s.has_positive_weight() {
        Some(spectrum_for(&s, &RayleighOptions { seed: opts.seed, ..opts.eigen.clone() })?)
    } else {
        None
    };
    let mut geom_opts = opts.geometry.clone();
    geom_opts.seed = opts.seed;
    let mut geom = estimate_geometry(&s, spectrum.as_ref(), &geom_opts)?;
    geom.flipped = flipped;
    if geom.m == 0 {
        mountain_pass(&s, &geom, tol, &opts.path)
    } else {
        let mut lopts = opts.linking.clone();
        lopts.seed = opts.seed;
        linking_minimax(&s, &geom, tol, &lopts)
    }
}

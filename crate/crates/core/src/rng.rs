//! Seeded random fields.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::Field;
use crate::functional::Preconditioner;
use crate::problem::ProblemSpec;
use crate::scalar::Real;

pub type SolverRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SolverRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `index` derived from `seed`, independent of evaluation order.
pub fn substream(seed: u64, index: u64) -> SolverRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + 1);
    rng
}

/// Independent uniform values in `[-1, 1]`.
pub fn uniform_field<T: Real>(rng: &mut SolverRng, len: usize) -> Field<T> {
    Field::from_vec_unchecked(
        (0..len)
            .map(|_| T::lit(rng.random_range(-1.0..1.0)))
            .collect(),
    )
}

/// White noise smoothed by the inverse stiffness operator, scaled to unit
/// maximum. Such fields have bounded difference quotients at every
/// resolution.
pub fn smooth_field<T: Real>(
    rng: &mut SolverRng,
    spec: &ProblemSpec<T>,
    precond: &Preconditioner<T>,
) -> Field<T> {
    let noise = uniform_field::<T>(rng, spec.grid.num_dofs()).scaled(spec.grid.weight());
    let s = precond.apply(&noise);
    let m = s.max_abs();
    if m > T::zero() {
        s.scaled(T::one() / m)
    } else {
        s
    }
}

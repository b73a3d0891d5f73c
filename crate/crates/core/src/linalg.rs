//! Direct solvers for the sparse Hessians and small dense systems.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square band matrix with half-width `bw`, stored with `bw` extra
/// superdiagonals for the fill produced by partial pivoting.
#[derive(Debug, Clone)]
pub struct BandMatrix<T> {
    n: usize,
    bw: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> BandMatrix<T> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        let width = 3 * bw + 1;
        Self {
            n,
            bw,
            width,
            data: vec![T::zero(); n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.bw - i)
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) {
        assert!(
            i.abs_diff(j) <= self.bw,
            "entry ({i}, {j}) outside band {}",
            self.bw
        );
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if i.abs_diff(j) > self.bw {
            T::zero()
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// LU factorization with partial pivoting restricted to the band.
    pub fn factor(mut self) -> Result<BandLu<T>> {
        let (n, bw) = (self.n, self.bw);
        let scale = self
            .data
            .iter()
            .fold(T::zero(), |m, v| m.max(v.abs()))
            .max(T::min_positive_value());
        let tiny = scale * T::epsilon() * T::lit(1e-3);
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last = (k + bw).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for r in k + 1..=last {
                let v = self.data[self.idx(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > tiny) {
                return Err(Error::SingularMatrix { pivot: k });
            }
            piv[k] = p;
            let cmax = (k + 2 * bw).min(n - 1);
            if p != k {
                for c in k..=cmax {
                    let (a, b) = (self.idx(k, c), self.idx(p, c));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for r in k + 1..=last {
                let rk = self.idx(r, k);
                let l = self.data[rk] / pivot;
                self.data[rk] = l;
                if l == T::zero() {
                    continue;
                }
                for c in k + 1..=cmax {
                    let kc = self.data[self.idx(k, c)];
                    let rc = self.idx(r, c);
                    self.data[rc] -= l * kc;
                }
            }
        }
        Ok(BandLu { m: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu<T> {
    m: BandMatrix<T>,
    piv: Vec<usize>,
}

impl<T: Real> BandLu<T> {
    pub fn solve_in_place(&self, b: &mut [T]) {
        let (n, bw) = (self.m.n, self.m.bw);
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            for r in k + 1..=(k + bw).min(n - 1) {
                b[r] -= self.m.data[self.m.idx(r, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for c in k + 1..=(k + 2 * bw).min(n - 1) {
                s -= self.m.data[self.m.idx(k, c)] * b[c];
            }
            b[k] = s / self.m.data[self.m.idx(k, k)];
        }
    }
}

/// Band solver for a matrix indexed by grid degrees of freedom, assembled
/// under a band-reducing ordering.
#[derive(Debug, Clone)]
pub struct BandSolver<T> {
    lu: BandLu<T>,
    order: Vec<usize>,
}

impl<T: Real> BandSolver<T> {
    /// `order[position] = dof`; `bw` is the half-width under that ordering.
    pub fn assemble(order: &[usize], bw: usize, entries: &[(usize, usize, T)]) -> Result<Self> {
        let n = order.len();
        let mut pos = vec![0usize; n];
        for (p, &d) in order.iter().enumerate() {
            pos[d] = p;
        }
        let mut m = BandMatrix::zeros(n, bw);
        for &(i, j, v) in entries {
            m.add(pos[i], pos[j], v);
        }
        Ok(Self {
            lu: m.factor()?,
            order: order.to_vec(),
        })
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let mut b: Vec<T> = self.order.iter().map(|&d| rhs[d]).collect();
        self.lu.solve_in_place(&mut b);
        let mut out = vec![T::zero(); b.len()];
        for (p, &d) in self.order.iter().enumerate() {
            out[d] = b[p];
        }
        out
    }
}

/// Dense LU with partial pivoting, row-major.
#[derive(Debug, Clone)]
pub struct DenseLu<T> {
    n: usize,
    a: Vec<T>,
    piv: Vec<usize>,
}

/// Largest system handed to [`DenseLu`].
pub const DENSE_LIMIT: usize = 2049;

impl<T: Real> DenseLu<T> {
    pub fn factor(n: usize, mut a: Vec<T>) -> Result<Self> {
        if n > DENSE_LIMIT {
            return Err(Error::TooLarge {
                dofs: n,
                limit: DENSE_LIMIT,
            });
        }
        assert_eq!(a.len(), n * n);
        let scale = a
            .iter()
            .fold(T::zero(), |m, v| m.max(v.abs()))
            .max(T::min_positive_value());
        let tiny = scale * T::epsilon() * T::lit(1e-3);
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let (mut p, mut best) = (k, a[k * n + k].abs());
            for r in k + 1..n {
                if a[r * n + k].abs() > best {
                    best = a[r * n + k].abs();
                    p = r;
                }
            }
            if !(best > tiny) {
                return Err(Error::SingularMatrix { pivot: k });
            }
            piv[k] = p;
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
            }
            let pivot = a[k * n + k];
            let (head, tail) = a.split_at_mut((k + 1) * n);
            let row_k = &head[k * n..];
            for row in tail.chunks_mut(n) {
                let l = row[k] / pivot;
                row[k] = l;
                if l != T::zero() {
                    for c in k + 1..n {
                        row[c] -= l * row_k[c];
                    }
                }
            }
        }
        Ok(Self { n, a, piv })
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let n = self.n;
        let mut b = rhs.to_vec();
        for k in 0..n {
            b.swap(k, self.piv[k]);
        }
        for r in 0..n {
            let mut s = b[r];
            for c in 0..r {
                s -= self.a[r * n + c] * b[c];
            }
            b[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = b[r];
            for c in r + 1..n {
                s -= self.a[r * n + c] * b[c];
            }
            b[r] = s / self.a[r * n + r];
        }
        b
    }
}

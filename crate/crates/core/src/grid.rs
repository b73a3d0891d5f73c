//! Uniform grids, node quadrature and forward-difference operators.
//!
//! Every energy in the crate is a plain weighted sum over grid nodes and every
//! gradient is the exact derivative of that sum. The forward difference and
//! the backward-difference divergence below are exact adjoints of each other
//! (summation by parts), which is what makes those gradients exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    /// The circle `R / (length Z)` sampled at `x_i = i h`.
    #[serde(rename = "periodic-1d")]
    Periodic1d,
    /// The box `[-L/2, L/2]^N` sampled at cell centres with the outer ring of
    /// nodes pinned to zero.
    BoxNd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    ZeroDirichlet,
}

/// A scalar or a per-axis list in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAxis<V> {
    Uniform(V),
    List(Vec<V>),
}

impl<V: Copy> PerAxis<V> {
    fn expand(&self, dims: usize, what: &str) -> Result<Vec<V>> {
        match self {
            PerAxis::Uniform(v) => Ok(vec![*v; dims]),
            PerAxis::List(list) if list.len() == dims => Ok(list.clone()),
            PerAxis::List(list) => Err(Error::InvalidGrid(format!(
                "{what} lists {} entries for {dims} dimensions",
                list.len()
            ))),
        }
    }
}

/// Serializable description of a domain, as found in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainDescriptor {
    pub kind: GridKind,
    /// Spatial dimension; must be 1 for periodic grids.
    #[serde(default = "default_dims")]
    pub dims: usize,
    /// Nodes per axis (defaults: 256 periodic, 64 box).
    #[serde(default)]
    pub nodes: Option<PerAxis<usize>>,
    /// Physical length per axis (defaults: circumference 1, box side 8).
    #[serde(default)]
    pub extent: Option<PerAxis<f64>>,
}

fn default_dims() -> usize {
    1
}

impl DomainDescriptor {
    pub fn periodic(nodes: usize, length: f64) -> Self {
        Self {
            kind: GridKind::Periodic1d,
            dims: 1,
            nodes: Some(PerAxis::Uniform(nodes)),
            extent: Some(PerAxis::Uniform(length)),
        }
    }

    pub fn boxed(dims: usize, nodes: usize, side: f64) -> Self {
        Self {
            kind: GridKind::BoxNd,
            dims,
            nodes: Some(PerAxis::Uniform(nodes)),
            extent: Some(PerAxis::Uniform(side)),
        }
    }
}

pub const DEFAULT_PERIODIC_NODES: usize = 256;
pub const DEFAULT_BOX_NODES: usize = 64;
pub const DEFAULT_BOX_SIDE: f64 = 8.0;

const NOT_A_DOF: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    kind: GridKind,
    dims: usize,
    nodes: Vec<usize>,
    extents: Vec<T>,
    spacing: Vec<T>,
    cell_volume: T,
    strides: Vec<usize>,
    total: usize,
    dof_nodes: Vec<usize>,
    node_dof: Vec<usize>,
}

impl<T: Real> Grid<T> {
    pub fn build(desc: &DomainDescriptor) -> Result<Self> {
        if desc.dims == 0 {
            return Err(Error::InvalidGrid("dimension must be positive".into()));
        }
        if desc.kind == GridKind::Periodic1d && desc.dims != 1 {
            return Err(Error::InvalidGrid(format!(
                "periodic-1d grids are one-dimensional, got dims = {}",
                desc.dims
            )));
        }
        let (default_nodes, default_extent) = match desc.kind {
            GridKind::Periodic1d => (DEFAULT_PERIODIC_NODES, 1.0),
            GridKind::BoxNd => (DEFAULT_BOX_NODES, DEFAULT_BOX_SIDE),
        };
        let nodes = desc
            .nodes
            .clone()
            .unwrap_or(PerAxis::Uniform(default_nodes))
            .expand(desc.dims, "nodes")?;
        let extents = desc
            .extent
            .clone()
            .unwrap_or(PerAxis::Uniform(default_extent))
            .expand(desc.dims, "extent")?;
        if let Some(n) = nodes.iter().find(|&&n| n < 4) {
            return Err(Error::InvalidGrid(format!(
                "need at least 4 nodes per axis for the stencil, got {n}"
            )));
        }
        if let Some(l) = extents.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidGrid(format!("extent must be positive, got {l}")));
        }

        let extents: Vec<T> = extents.into_iter().map(T::lit).collect();
        let spacing: Vec<T> = extents
            .iter()
            .zip(&nodes)
            .map(|(&l, &n)| l / T::from_count(n))
            .collect();
        let cell_volume = spacing.iter().fold(T::one(), |acc, &h| acc * h);
        let mut strides = Vec::with_capacity(desc.dims);
        let mut total = 1usize;
        for &n in &nodes {
            strides.push(total);
            total = total
                .checked_mul(n)
                .ok_or_else(|| Error::InvalidGrid("grid too large".into()))?;
        }

        let mut grid = Self {
            kind: desc.kind,
            dims: desc.dims,
            nodes,
            extents,
            spacing,
            cell_volume,
            strides,
            total,
            dof_nodes: Vec::new(),
            node_dof: vec![NOT_A_DOF; total],
        };
        for node in 0..total {
            if !grid.is_boundary(node) {
                grid.node_dof[node] = grid.dof_nodes.len();
                grid.dof_nodes.push(node);
            }
        }
        Ok(grid)
    }

    pub fn periodic(nodes: usize, length: f64) -> Result<Self> {
        Self::build(&DomainDescriptor::periodic(nodes, length))
    }

    pub fn boxed(dims: usize, nodes: usize, side: f64) -> Result<Self> {
        Self::build(&DomainDescriptor::boxed(dims, nodes, side))
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn boundary(&self) -> Boundary {
        match self.kind {
            GridKind::Periodic1d => Boundary::Periodic,
            GridKind::BoxNd => Boundary::ZeroDirichlet,
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes
    }

    pub fn extents(&self) -> &[T] {
        &self.extents
    }

    pub fn spacing(&self) -> &[T] {
        &self.spacing
    }

    /// Total number of nodes, boundary included.
    pub fn num_nodes(&self) -> usize {
        self.total
    }

    /// Number of free values, i.e. the length of a [`Field`] on this grid.
    pub fn num_dofs(&self) -> usize {
        self.dof_nodes.len()
    }

    /// Quadrature weight of a single node (uniform grids: the cell volume).
    pub fn weight(&self) -> T {
        self.cell_volume
    }

    pub fn weights(&self) -> Vec<T> {
        vec![self.cell_volume; self.total]
    }

    /// Domain measure, the sum of all node weights.
    pub fn measure(&self) -> T {
        self.extents.iter().fold(T::one(), |acc, &l| acc * l)
    }

    pub fn axis_index(&self, node: usize, axis: usize) -> usize {
        (node / self.strides[axis]) % self.nodes[axis]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        match self.kind {
            GridKind::Periodic1d => false,
            GridKind::BoxNd => (0..self.dims).any(|a| {
                let i = self.axis_index(node, a);
                i == 0 || i + 1 == self.nodes[a]
            }),
        }
    }

    pub fn dof_node(&self, dof: usize) -> usize {
        self.dof_nodes[dof]
    }

    pub fn node_dof(&self, node: usize) -> Option<usize> {
        match self.node_dof[node] {
            NOT_A_DOF => None,
            d => Some(d),
        }
    }

    pub fn coords(&self, node: usize) -> Vec<T> {
        (0..self.dims)
            .map(|a| {
                let i = T::from_count(self.axis_index(node, a));
                match self.kind {
                    GridKind::Periodic1d => i * self.spacing[a],
                    GridKind::BoxNd => {
                        (i + T::lit(0.5)) * self.spacing[a] - self.extents[a] / T::lit(2.0)
                    }
                }
            })
            .collect()
    }

    /// Forward neighbour along `axis`; `None` past the edge of a box.
    pub fn forward(&self, node: usize, axis: usize) -> Option<usize> {
        let i = self.axis_index(node, axis);
        let s = self.strides[axis];
        if i + 1 < self.nodes[axis] {
            Some(node + s)
        } else {
            match self.kind {
                GridKind::Periodic1d => Some(node + s - self.nodes[axis] * s),
                GridKind::BoxNd => None,
            }
        }
    }

    /// Backward neighbour along `axis`; `None` past the edge of a box.
    pub fn backward(&self, node: usize, axis: usize) -> Option<usize> {
        let i = self.axis_index(node, axis);
        let s = self.strides[axis];
        if i > 0 {
            Some(node - s)
        } else {
            match self.kind {
                GridKind::Periodic1d => Some(node + (self.nodes[axis] - 1) * s),
                GridKind::BoxNd => None,
            }
        }
    }

    /// Scatters free values into a full node vector (boundary ring = 0).
    pub fn extend(&self, dofs: &[T]) -> Vec<T> {
        let mut full = vec![T::zero(); self.total];
        for (d, &node) in self.dof_nodes.iter().enumerate() {
            full[node] = dofs[d];
        }
        full
    }

    /// Gathers the free values out of a full node vector.
    pub fn restrict(&self, full: &[T]) -> Vec<T> {
        self.dof_nodes.iter().map(|&n| full[n]).collect()
    }

    pub fn check_field(&self, u: &Field<T>) -> Result<()> {
        if u.len() != self.num_dofs() {
            return Err(Error::LengthMismatch {
                expected: self.num_dofs(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Samples `f(coords)` at every free node.
    pub fn sample(&self, f: impl Fn(&[T]) -> T) -> Field<T> {
        Field::from_vec_unchecked(
            self.dof_nodes
                .iter()
                .map(|&n| f(&self.coords(n)))
                .collect(),
        )
    }

    /// A permutation of the free values under which every stencil coupling
    /// lies within a narrow band, with that band's half-width.
    ///
    /// Boxes use lexicographic order (half-width = largest interior stride).
    /// The periodic circle is folded `0, n-1, 1, n-2, ...` so that the wrap
    /// edge becomes a band entry and the half-width is 2.
    pub fn band_ordering(&self) -> (Vec<usize>, usize) {
        let n = self.num_dofs();
        match self.kind {
            GridKind::Periodic1d => {
                let mut order = Vec::with_capacity(n);
                let (mut lo, mut hi) = (0usize, n - 1);
                while lo <= hi {
                    order.push(lo);
                    if lo != hi {
                        order.push(hi);
                    }
                    lo += 1;
                    if hi == 0 {
                        break;
                    }
                    hi -= 1;
                }
                (order, 2)
            }
            GridKind::BoxNd => {
                let interior: Vec<usize> = self.nodes.iter().map(|n| n - 2).collect();
                let width = interior[..self.dims - 1].iter().product::<usize>();
                ((0..n).collect(), width.max(1))
            }
        }
    }
}

/// Per-node forward difference quotients, one component per axis over all
/// nodes of the grid (boundary included).
#[derive(Debug, Clone, PartialEq)]
pub struct Flux<T> {
    components: Vec<Vec<T>>,
}

impl<T: Real> Flux<T> {
    pub fn axis(&self, a: usize) -> &[T] {
        &self.components[a]
    }

    pub fn dims(&self) -> usize {
        self.components.len()
    }

    /// Euclidean length of the difference vector at `node`.
    pub fn magnitude(&self, node: usize) -> T {
        if self.components.len() == 1 {
            return self.components[0][node].abs();
        }
        self.components
            .iter()
            .map(|c| c[node] * c[node])
            .sum::<T>()
            .sqrt()
    }

    pub(crate) fn from_components(components: Vec<Vec<T>>) -> Self {
        Self { components }
    }
}

/// Forward differences of a full node vector (`u` already extended).
pub(crate) fn forward_difference_full<T: Real>(full: &[T], grid: &Grid<T>) -> Flux<T> {
    let components = (0..grid.dims())
        .map(|a| {
            let inv_h = T::one() / grid.spacing()[a];
            (0..grid.num_nodes())
                .map(|node| {
                    let next = grid.forward(node, a).map_or(T::zero(), |m| full[m]);
                    (next - full[node]) * inv_h
                })
                .collect()
        })
        .collect();
    Flux { components }
}

/// `(u_{i+e_a} - u_i) / h_a` at every node and axis. Periodic grids wrap;
/// on boxes the value beyond the last node is the zero boundary value.
pub fn forward_difference<T: Real>(u: &Field<T>, grid: &Grid<T>) -> Result<Flux<T>> {
    grid.check_field(u)?;
    Ok(forward_difference_full(&grid.extend(u.values()), grid))
}

/// Backward-difference divergence over all nodes, the negative adjoint of
/// [`forward_difference`]: `sum_i F(i).Dv(i) = -sum_i div F(i) v(i)`.
pub fn divergence<T: Real>(flux: &Flux<T>, grid: &Grid<T>) -> Vec<T> {
    let mut div = vec![T::zero(); grid.num_nodes()];
    for a in 0..grid.dims() {
        let inv_h = T::one() / grid.spacing()[a];
        let f = flux.axis(a);
        for (node, d) in div.iter_mut().enumerate() {
            let prev = grid.backward(node, a).map_or(T::zero(), |m| f[m]);
            *d += (f[node] - prev) * inv_h;
        }
    }
    div
}

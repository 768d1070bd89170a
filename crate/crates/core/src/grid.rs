//! Phase space discretization.
//!
//! A [`PhaseGrid`] is a finite directed multigraph with a time step `h`. The
//! usual way to build one is [`build_torus_grid`], which discretizes the flat
//! torus `𝕋^d = ℝ^d/ℤ^d` (`d ∈ {1, 2}`) with `n` nodes per axis and attaches a
//! stencil of integer offsets `k` with `|k|_∞ ≤ K` to every node. The edge
//! `(x, k)` has head `x ⊕ k` (periodic) and velocity `v = k·Δx/h`, so heads
//! always land on grid nodes.
//!
//! Edges are numbered `x·m + s` where `s` indexes the lexicographically sorted
//! stencil of size `m`; edge order is therefore the lexicographic order of
//! `(node index, offset)` pairs, which the solvers use for tie-breaking.
//!
//! Abstract phase spaces without coordinates can be built with
//! [`PhaseGrid::network`]; they support everything except sampling from a
//! callback and fiber convexification.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

/// Sum-of-charges tolerance for boundary currents, relative to `max(1, Σ|c|)`.
pub const CHARGE_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("dimension must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error("need at least 2 nodes per dimension, got {0}")]
    TooFewNodes(usize),
    #[error("stencil radius must be at least 1, got {0}")]
    BadStencilRadius(usize),
    #[error("time step must be positive and finite, got {0}")]
    BadTimeStep(f64),
    #[error("edge {edge} references node {node} but the graph has {node_count} nodes")]
    BadEdgeEndpoint {
        edge: usize,
        node: usize,
        node_count: usize,
    },
    #[error("non-finite Lagrangian value {value} on edge {edge} (node {node}, offset {offset:?})")]
    NonFiniteLagrangian {
        edge: usize,
        node: usize,
        offset: [i32; 2],
        value: f64,
    },
    #[error("non-finite value {value} on edge {edge}")]
    NonFiniteValue { edge: usize, value: f64 },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("measure weight on edge {edge} is {weight}; weights must be finite and nonnegative")]
    BadWeight { edge: usize, weight: f64 },
    #[error("edge index {edge} out of range ({edge_count} edges)")]
    EdgeOutOfRange { edge: usize, edge_count: usize },
    #[error("node index {node} out of range ({node_count} nodes)")]
    NodeOutOfRange { node: usize, node_count: usize },
    #[error("charge on node {node} is not finite")]
    NonFiniteCharge { node: usize },
    #[error("charges sum to {sum}, a boundary current must have total charge zero")]
    NonzeroTotalCharge { sum: f64 },
    #[error("operation needs torus geometry but the phase space is an abstract network")]
    NotATorus,
}

/// Torus geometry attached to a [`PhaseGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Torus {
    dim: usize,
    n: usize,
    radius: usize,
    stencil: Vec<[i32; 2]>,
}

impl Torus {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes_per_dim(&self) -> usize {
        self.n
    }

    pub fn stencil_radius(&self) -> usize {
        self.radius
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Stencil offsets in lexicographic order. Unused trailing components are 0.
    pub fn stencil(&self) -> &[[i32; 2]] {
        &self.stencil
    }

    pub fn stencil_len(&self) -> usize {
        self.stencil.len()
    }

    /// Index of the zero offset in [`Torus::stencil`].
    pub fn rest_index(&self) -> usize {
        self.stencil.len() / 2
    }

    /// Stencil index of the negated offset.
    pub fn opposite(&self, s: usize) -> usize {
        self.stencil.len() - 1 - s
    }

    /// True if the offset lies on the outer ring of the stencil.
    pub fn is_stencil_boundary(&self, s: usize) -> bool {
        let k = self.stencil[s];
        let r = self.radius as i32;
        k[..self.dim].iter().any(|c| c.abs() == r)
    }

    pub fn node_coords(&self, node: usize) -> [usize; 2] {
        if self.dim == 1 {
            [node, 0]
        } else {
            [node / self.n, node % self.n]
        }
    }

    pub fn node_index(&self, coords: [usize; 2]) -> usize {
        if self.dim == 1 {
            coords[0]
        } else {
            coords[0] * self.n + coords[1]
        }
    }

    fn shift(&self, node: usize, k: [i32; 2]) -> usize {
        let c = self.node_coords(node);
        let n = self.n as i64;
        let mut out = [0usize; 2];
        for i in 0..self.dim {
            out[i] = (c[i] as i64 + k[i] as i64).rem_euclid(n) as usize;
        }
        self.node_index(out)
    }

    /// Wraparound ℓ∞ distance between two nodes, in index units.
    pub fn index_distance(&self, a: usize, b: usize) -> usize {
        let ca = self.node_coords(a);
        let cb = self.node_coords(b);
        (0..self.dim)
            .map(|i| {
                let d = ca[i].abs_diff(cb[i]);
                d.min(self.n - d)
            })
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, PartialEq)]
struct GridInner {
    torus: Option<Torus>,
    node_count: usize,
    tails: Vec<usize>,
    heads: Vec<usize>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    time_step: f64,
}

/// Discrete phase space: nodes, edges `(tail → head)` and a time step.
///
/// Cloning is cheap (shared storage).
#[derive(Debug, Clone)]
pub struct PhaseGrid(Arc<GridInner>);

impl PartialEq for PhaseGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || *self.0 == *other.0
    }
}

/// Builds the periodic grid on `𝕋^d` with the full square stencil of radius `stencil_radius`.
pub fn build_torus_grid(
    d: usize,
    n: usize,
    stencil_radius: usize,
    h: f64,
) -> Result<PhaseGrid, GridError> {
    if !(1..=2).contains(&d) {
        return Err(GridError::BadDimension(d));
    }
    if n < 2 {
        return Err(GridError::TooFewNodes(n));
    }
    if stencil_radius < 1 {
        return Err(GridError::BadStencilRadius(stencil_radius));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(GridError::BadTimeStep(h));
    }
    let r = stencil_radius as i32;
    let mut stencil = Vec::new();
    if d == 1 {
        for k in -r..=r {
            stencil.push([k, 0]);
        }
    } else {
        for k0 in -r..=r {
            for k1 in -r..=r {
                stencil.push([k0, k1]);
            }
        }
    }
    let torus = Torus {
        dim: d,
        n,
        radius: stencil_radius,
        stencil,
    };
    let node_count = n.pow(d as u32);
    let m = torus.stencil.len();
    let mut tails = Vec::with_capacity(node_count * m);
    let mut heads = Vec::with_capacity(node_count * m);
    for x in 0..node_count {
        for k in &torus.stencil {
            tails.push(x);
            heads.push(torus.shift(x, *k));
        }
    }
    Ok(PhaseGrid::assemble(Some(torus), node_count, tails, heads, h))
}

impl PhaseGrid {
    /// Abstract phase space from an explicit edge list `(tail, head)`.
    ///
    /// Edge indices follow the order of `edges`.
    pub fn network(
        node_count: usize,
        edges: &[(usize, usize)],
        h: f64,
    ) -> Result<Self, GridError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(GridError::BadTimeStep(h));
        }
        for (e, &(t, hd)) in edges.iter().enumerate() {
            for node in [t, hd] {
                if node >= node_count {
                    return Err(GridError::BadEdgeEndpoint {
                        edge: e,
                        node,
                        node_count,
                    });
                }
            }
        }
        let tails = edges.iter().map(|e| e.0).collect();
        let heads = edges.iter().map(|e| e.1).collect();
        Ok(Self::assemble(None, node_count, tails, heads, h))
    }

    fn assemble(
        torus: Option<Torus>,
        node_count: usize,
        tails: Vec<usize>,
        heads: Vec<usize>,
        time_step: f64,
    ) -> Self {
        let mut out_edges = vec![Vec::new(); node_count];
        let mut in_edges = vec![Vec::new(); node_count];
        for (e, (&t, &h)) in tails.iter().zip(&heads).enumerate() {
            out_edges[t].push(e);
            in_edges[h].push(e);
        }
        PhaseGrid(Arc::new(GridInner {
            torus,
            node_count,
            tails,
            heads,
            out_edges,
            in_edges,
            time_step,
        }))
    }

    pub fn torus(&self) -> Option<&Torus> {
        self.0.torus.as_ref()
    }

    pub fn require_torus(&self) -> Result<&Torus, GridError> {
        self.torus().ok_or(GridError::NotATorus)
    }

    pub fn node_count(&self) -> usize {
        self.0.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.0.tails.len()
    }

    pub fn time_step(&self) -> f64 {
        self.0.time_step
    }

    pub fn tail(&self, e: usize) -> usize {
        self.0.tails[e]
    }

    pub fn head(&self, e: usize) -> usize {
        self.0.heads[e]
    }

    pub fn tails(&self) -> &[usize] {
        &self.0.tails
    }

    pub fn heads(&self) -> &[usize] {
        &self.0.heads
    }

    /// Edges leaving `x`, in increasing index order.
    pub fn out_edges(&self, x: usize) -> &[usize] {
        &self.0.out_edges[x]
    }

    /// Edges entering `x`, in increasing index order.
    pub fn in_edges(&self, x: usize) -> &[usize] {
        &self.0.in_edges[x]
    }

    /// Torus edge index of `(node, stencil index)`.
    pub fn edge_at(&self, node: usize, s: usize) -> Option<usize> {
        let t = self.torus()?;
        (node < self.node_count() && s < t.stencil_len()).then(|| node * t.stencil_len() + s)
    }

    /// Stencil index of a torus edge.
    pub fn stencil_index(&self, e: usize) -> Option<usize> {
        self.torus().map(|t| e % t.stencil_len())
    }

    pub fn offset(&self, e: usize) -> Option<[i32; 2]> {
        self.torus().map(|t| t.stencil[e % t.stencil_len()])
    }

    /// Position of a node in `[0, 1)^d`; unused components are 0.
    pub fn position(&self, x: usize) -> Option<[f64; 2]> {
        let t = self.torus()?;
        let c = t.node_coords(x);
        let dx = t.spacing();
        Some([c[0] as f64 * dx, if t.dim == 2 { c[1] as f64 * dx } else { 0.0 }])
    }

    /// Velocity `k·Δx/h` of stencil entry `s`.
    pub fn stencil_velocity(&self, s: usize) -> Option<[f64; 2]> {
        let t = self.torus()?;
        let k = t.stencil.get(s)?;
        let scale = t.spacing() / self.time_step();
        Some([k[0] as f64 * scale, k[1] as f64 * scale])
    }

    pub fn velocity(&self, e: usize) -> Option<[f64; 2]> {
        let s = self.stencil_index(e)?;
        self.stencil_velocity(s)
    }

    pub(crate) fn same_as(&self, other: &PhaseGrid) -> bool {
        self == other
    }
}

/// Sampled Lagrangian: one finite value per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianTable {
    grid: PhaseGrid,
    values: Vec<f64>,
}

impl LagrangianTable {
    pub fn from_values(grid: &PhaseGrid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.edge_count() {
            return Err(GridError::LengthMismatch {
                expected: grid.edge_count(),
                got: values.len(),
            });
        }
        if let Some((edge, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFiniteValue { edge, value });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, e: usize) -> f64 {
        self.values[e]
    }

    /// `a·L + b`, edge-wise.
    pub fn affine(&self, a: f64, b: f64) -> Result<Self, GridError> {
        Self::from_values(&self.grid, self.values.iter().map(|v| a * v + b).collect())
    }
}

/// Evaluates `lagrangian(position, velocity)` on every edge of a torus grid.
///
/// Both slices passed to the callback have length `d`.
pub fn sample_lagrangian<F>(grid: &PhaseGrid, lagrangian: F) -> Result<LagrangianTable, GridError>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let torus = grid.require_torus()?;
    let d = torus.dim();
    let m = torus.stencil_len();
    let mut values = Vec::with_capacity(grid.edge_count());
    for x in 0..grid.node_count() {
        let pos = grid.position(x).unwrap_or_default();
        for s in 0..m {
            let vel = grid.stencil_velocity(s).unwrap_or_default();
            let value = lagrangian(&pos[..d], &vel[..d]);
            if !value.is_finite() {
                return Err(GridError::NonFiniteLagrangian {
                    edge: x * m + s,
                    node: x,
                    offset: torus.stencil[s],
                    value,
                });
            }
            values.push(value);
        }
    }
    Ok(LagrangianTable {
        grid: grid.clone(),
        values,
    })
}

/// `df(e) = (f(head) − f(tail)) / h` on every edge.
///
/// Panics if `f` does not have one value per node.
pub fn discrete_differential(f: &[f64], grid: &PhaseGrid) -> Vec<f64> {
    assert_eq!(f.len(), grid.node_count(), "potential length must equal node count");
    let h = grid.time_step();
    grid.tails()
        .iter()
        .zip(grid.heads())
        .map(|(&t, &hd)| (f[hd] - f[t]) / h)
        .collect()
}

/// Nonnegative edge weights, stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    grid: PhaseGrid,
    weights: BTreeMap<usize, f64>,
}

impl DiscreteMeasure {
    pub fn zero(grid: &PhaseGrid) -> Self {
        Self {
            grid: grid.clone(),
            weights: BTreeMap::new(),
        }
    }

    /// Builds a measure from `(edge, weight)` pairs; repeated edges accumulate
    /// and zero weights are dropped.
    pub fn from_weights<I>(grid: &PhaseGrid, weights: I) -> Result<Self, GridError>
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let mut mu = Self::zero(grid);
        for (edge, weight) in weights {
            mu.add(edge, weight)?;
        }
        Ok(mu)
    }

    /// Uniform probability measure on the given edges.
    pub fn uniform_on(grid: &PhaseGrid, edges: &[usize]) -> Result<Self, GridError> {
        let w = 1.0 / edges.len() as f64;
        Self::from_weights(grid, edges.iter().map(|&e| (e, w)))
    }

    pub fn add(&mut self, edge: usize, weight: f64) -> Result<(), GridError> {
        if edge >= self.grid.edge_count() {
            return Err(GridError::EdgeOutOfRange {
                edge,
                edge_count: self.grid.edge_count(),
            });
        }
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(GridError::BadWeight { edge, weight });
        }
        if weight > 0.0 {
            *self.weights.entry(edge).or_insert(0.0) += weight;
        }
        Ok(())
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn weight(&self, edge: usize) -> f64 {
        self.weights.get(&edge).copied().unwrap_or(0.0)
    }

    /// `(edge, weight)` pairs of the support, in edge order.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights.iter().map(|(&e, &w)| (e, w))
    }

    pub fn support_len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.weights.values().sum()
    }

    /// Tail nodes of the support, `π(supp μ)`, sorted and deduplicated.
    pub fn projected_support(&self) -> Vec<usize> {
        let mut nodes: Vec<usize> = self.weights.keys().map(|&e| self.grid.tail(e)).collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    /// `Σ_e μ(e)·values(e)`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.support().map(|(e, w)| w * values[e]).sum()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, GridError> {
        Self::from_weights(&self.grid, self.support().map(|(e, w)| (e, w * factor)))
    }

    pub fn sum(&self, other: &DiscreteMeasure) -> Result<Self, GridError> {
        let mut out = self.clone();
        for (e, w) in other.support() {
            out.add(e, w)?;
        }
        Ok(out)
    }
}

/// Node-supported 0-current with total charge zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCurrent {
    grid: PhaseGrid,
    charges: Vec<f64>,
}

impl BoundaryCurrent {
    pub fn new(grid: &PhaseGrid, charges: Vec<f64>) -> Result<Self, GridError> {
        if charges.len() != grid.node_count() {
            return Err(GridError::LengthMismatch {
                expected: grid.node_count(),
                got: charges.len(),
            });
        }
        if let Some(node) = charges.iter().position(|c| !c.is_finite()) {
            return Err(GridError::NonFiniteCharge { node });
        }
        let sum: f64 = charges.iter().sum();
        let scale: f64 = charges.iter().map(|c| c.abs()).sum::<f64>().max(1.0);
        if sum.abs() > CHARGE_SUM_TOLERANCE * scale {
            return Err(GridError::NonzeroTotalCharge { sum });
        }
        Ok(Self {
            grid: grid.clone(),
            charges,
        })
    }

    pub fn zero(grid: &PhaseGrid) -> Self {
        Self {
            grid: grid.clone(),
            charges: vec![0.0; grid.node_count()],
        }
    }

    /// `(δ_to − δ_from)/h`: the boundary of a unit-flow path from `from` to `to`.
    pub fn point_pair(grid: &PhaseGrid, from: usize, to: usize) -> Result<Self, GridError> {
        for node in [from, to] {
            if node >= grid.node_count() {
                return Err(GridError::NodeOutOfRange {
                    node,
                    node_count: grid.node_count(),
                });
            }
        }
        let mut charges = vec![0.0; grid.node_count()];
        let h = grid.time_step();
        charges[to] += 1.0 / h;
        charges[from] -= 1.0 / h;
        Self::new(grid, charges)
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn charges(&self) -> &[f64] {
        &self.charges
    }

    pub fn charge(&self, x: usize) -> f64 {
        self.charges[x]
    }

    pub fn is_zero(&self) -> bool {
        self.charges.iter().all(|&c| c == 0.0)
    }

    /// `⟨c, f⟩ = Σ_x c(x)·f(x)`.
    pub fn pair(&self, f: &[f64]) -> f64 {
        self.charges.iter().zip(f).map(|(c, v)| c * v).sum()
    }

    /// Nodes carrying nonzero charge.
    pub fn support(&self) -> Vec<usize> {
        (0..self.charges.len())
            .filter(|&x| self.charges[x] != 0.0)
            .collect()
    }
}

/// `∂μ(y) = (inflow(y) − outflow(y))/h`, so that `⟨∂μ, f⟩ = Σ_e μ(e)·df(e)`.
pub fn boundary_of_measure(mu: &DiscreteMeasure) -> BoundaryCurrent {
    let grid = mu.grid();
    let h = grid.time_step();
    let mut charges = vec![0.0; grid.node_count()];
    for (e, w) in mu.support() {
        charges[grid.head(e)] += w;
        charges[grid.tail(e)] -= w;
    }
    for c in &mut charges {
        *c /= h;
    }
    BoundaryCurrent {
        grid: grid.clone(),
        charges,
    }
}

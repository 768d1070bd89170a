//! Fiberwise lower convex envelope of a sampled Lagrangian and its fiber derivative.
//!
//! For each node the stencil velocities and their Lagrangian values form a point
//! cloud; the envelope is the lower convex hull evaluated at the same velocities.
//! In one dimension the hull comes from a monotone chain and the subgradient at a
//! velocity is the interval between the adjacent hull slopes. In two dimensions
//! every supporting plane through three samples is enumerated (stencils have at
//! most 25 points) and the subgradient is summarized by the bounding box of the
//! gradients of supporting planes through the evaluated point.
//!
//! Velocities on the outer ring of the stencil only see one side of the fiber;
//! their subgradients are reported but flagged.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{DiscreteMeasure, GridError, LagrangianTable, PhaseGrid};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConvexifyError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("node {node} out of range ({node_count} nodes)")]
    NodeOutOfRange { node: usize, node_count: usize },
    #[error("stencil index {index} out of range ({len} entries)")]
    StencilIndexOutOfRange { index: usize, len: usize },
    #[error("node {0} is not in the projected support")]
    UndefinedNode(usize),
    #[error("envelope and measure live on different grids")]
    GridMismatch,
}

/// Lower convex envelope of one-dimensional samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope1d {
    pub values: Vec<f64>,
    pub p_minus: Vec<f64>,
    pub p_plus: Vec<f64>,
}

/// Lower convex envelope of samples `(vs[i], ls[i])`; `vs` must be strictly increasing.
pub fn lower_envelope_1d(vs: &[f64], ls: &[f64]) -> Envelope1d {
    assert_eq!(vs.len(), ls.len());
    assert!(vs.windows(2).all(|w| w[0] < w[1]), "velocities must increase");
    let m = vs.len();

    let mut hull: Vec<usize> = Vec::with_capacity(m);
    for i in 0..m {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // drop b unless it lies strictly below the chord a–i
            let cross = (vs[b] - vs[a]) * (ls[i] - ls[a]) - (ls[b] - ls[a]) * (vs[i] - vs[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }

    let slope = |a: usize, b: usize| (ls[b] - ls[a]) / (vs[b] - vs[a]);
    let mut values = vec![0.0; m];
    let mut p_minus = vec![0.0; m];
    let mut p_plus = vec![0.0; m];
    let mut k = 0;
    for i in 0..m {
        while k + 1 < hull.len() && hull[k + 1] <= i {
            k += 1;
        }
        if hull[k] == i {
            values[i] = ls[i];
            let left = (k > 0).then(|| slope(hull[k - 1], i));
            let right = (k + 1 < hull.len()).then(|| slope(i, hull[k + 1]));
            let (lo, hi) = match (left, right) {
                (Some(l), Some(r)) => (l, r),
                (Some(l), None) => (l, l),
                (None, Some(r)) => (r, r),
                (None, None) => (0.0, 0.0),
            };
            p_minus[i] = lo;
            p_plus[i] = hi;
        } else {
            let (a, b) = (hull[k], hull[k + 1]);
            let s = slope(a, b);
            values[i] = (ls[a] + s * (vs[i] - vs[a])).min(ls[i]);
            p_minus[i] = s;
            p_plus[i] = s;
        }
    }
    Envelope1d {
        values,
        p_minus,
        p_plus,
    }
}

/// Lower convex envelope of two-dimensional samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope2d {
    pub values: Vec<f64>,
    /// Componentwise lower corner of the supporting-gradient bounding box.
    pub p_low: Vec<[f64; 2]>,
    pub p_high: Vec<[f64; 2]>,
}

/// Plane `L = r + p·v` through three samples, if they are not collinear.
fn plane(vs: &[[f64; 2]], ls: &[f64], i: usize, j: usize, k: usize, det_tol: f64) -> Option<(f64, [f64; 2])> {
    let a = [vs[j][0] - vs[i][0], vs[j][1] - vs[i][1]];
    let b = [vs[k][0] - vs[i][0], vs[k][1] - vs[i][1]];
    let det = a[0] * b[1] - a[1] * b[0];
    if det.abs() <= det_tol {
        return None;
    }
    let (da, db) = (ls[j] - ls[i], ls[k] - ls[i]);
    let p = [(da * b[1] - db * a[1]) / det, (db * a[0] - da * b[0]) / det];
    Some((ls[i] - p[0] * vs[i][0] - p[1] * vs[i][1], p))
}

/// Lower convex envelope of samples `(vs[i], ls[i])` in the plane.
///
/// If all samples are collinear there is no supporting plane through three of
/// them and the samples are returned unchanged with zero gradients.
pub fn lower_envelope_2d(vs: &[[f64; 2]], ls: &[f64]) -> Envelope2d {
    assert_eq!(vs.len(), ls.len());
    let m = vs.len();
    let vscale = vs.iter().fold(0.0f64, |s, v| s.max(v[0].abs()).max(v[1].abs())).max(1e-300);
    let lscale = 1.0 + ls.iter().fold(0.0f64, |s, l| s.max(l.abs()));
    let det_tol = 1e-12 * vscale * vscale;
    let tol = 1e-10 * lscale;

    let mut planes: Vec<(f64, [f64; 2])> = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            for k in j + 1..m {
                if let Some((r, p)) = plane(vs, ls, i, j, k, det_tol) {
                    if (0..m).all(|q| r + p[0] * vs[q][0] + p[1] * vs[q][1] <= ls[q] + tol) {
                        planes.push((r, p));
                    }
                }
            }
        }
    }

    let eval = |(r, p): &(f64, [f64; 2]), v: [f64; 2]| r + p[0] * v[0] + p[1] * v[1];
    let mut values = ls.to_vec();
    let mut p_low = vec![[0.0; 2]; m];
    let mut p_high = vec![[0.0; 2]; m];
    if planes.is_empty() {
        return Envelope2d {
            values,
            p_low,
            p_high,
        };
    }
    for q in 0..m {
        let best = planes
            .iter()
            .map(|pl| eval(pl, vs[q]))
            .fold(f64::NEG_INFINITY, f64::max)
            .min(ls[q]);
        values[q] = best;
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for pl in planes.iter().filter(|pl| (eval(pl, vs[q]) - best).abs() <= tol) {
            for c in 0..2 {
                lo[c] = lo[c].min(pl.1[c]);
                hi[c] = hi[c].max(pl.1[c]);
            }
        }
        p_low[q] = lo;
        p_high[q] = hi;
    }
    Envelope2d {
        values,
        p_low,
        p_high,
    }
}

/// Envelope values and subgradient boxes on every edge of a torus grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberEnvelope {
    grid: PhaseGrid,
    lagrangian: Vec<f64>,
    values: Vec<f64>,
    p_minus: Vec<[f64; 2]>,
    p_plus: Vec<[f64; 2]>,
}

impl FiberEnvelope {
    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    /// Envelope value per edge.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Original Lagrangian value per edge.
    pub fn lagrangian(&self) -> &[f64] {
        &self.lagrangian
    }

    pub fn p_minus(&self, e: usize) -> [f64; 2] {
        self.p_minus[e]
    }

    pub fn p_plus(&self, e: usize) -> [f64; 2] {
        self.p_plus[e]
    }

    /// The envelope as a Lagrangian table on the same grid.
    pub fn as_table(&self) -> LagrangianTable {
        LagrangianTable::from_values(&self.grid, self.values.clone())
            .expect("envelope values are finite")
    }
}

pub fn fiber_convex_envelope(table: &LagrangianTable) -> Result<FiberEnvelope, ConvexifyError> {
    let grid = table.grid();
    let torus = grid.require_torus()?;
    let m = torus.stencil_len();
    let velocities: Vec<[f64; 2]> = (0..m)
        .map(|s| grid.stencil_velocity(s).expect("stencil index"))
        .collect();
    let l = table.values();
    let mut values = vec![0.0; l.len()];
    let mut p_minus = vec![[0.0; 2]; l.len()];
    let mut p_plus = vec![[0.0; 2]; l.len()];

    if torus.dim() == 1 {
        let vs: Vec<f64> = velocities.iter().map(|v| v[0]).collect();
        for x in 0..grid.node_count() {
            let range = x * m..(x + 1) * m;
            let env = lower_envelope_1d(&vs, &l[range.clone()]);
            for (s, e) in range.enumerate() {
                values[e] = env.values[s];
                p_minus[e] = [env.p_minus[s], 0.0];
                p_plus[e] = [env.p_plus[s], 0.0];
            }
        }
    } else {
        for x in 0..grid.node_count() {
            let range = x * m..(x + 1) * m;
            let env = lower_envelope_2d(&velocities, &l[range.clone()]);
            for (s, e) in range.enumerate() {
                values[e] = env.values[s];
                p_minus[e] = env.p_low[s];
                p_plus[e] = env.p_high[s];
            }
        }
    }
    Ok(FiberEnvelope {
        grid: grid.clone(),
        lagrangian: l.to_vec(),
        values,
        p_minus,
        p_plus,
    })
}

/// Midpoint of the subgradient box at one stencil velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberDerivative {
    /// Unused components are 0.
    pub covector: [f64; 2],
    /// Half the largest side of the subgradient box; 0 where the envelope is differentiable.
    pub width: f64,
    /// Set for velocities on the outer ring of the stencil.
    pub one_sided: bool,
}

pub fn envelope_fiber_derivative(
    env: &FiberEnvelope,
    x: usize,
    s: usize,
) -> Result<FiberDerivative, ConvexifyError> {
    let torus = env.grid.require_torus()?;
    if x >= env.grid.node_count() {
        return Err(ConvexifyError::NodeOutOfRange {
            node: x,
            node_count: env.grid.node_count(),
        });
    }
    if s >= torus.stencil_len() {
        return Err(ConvexifyError::StencilIndexOutOfRange {
            index: s,
            len: torus.stencil_len(),
        });
    }
    let e = x * torus.stencil_len() + s;
    let (lo, hi) = (env.p_minus[e], env.p_plus[e]);
    Ok(FiberDerivative {
        covector: [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0],
        width: ((hi[0] - lo[0]) / 2.0).max((hi[1] - lo[1]) / 2.0),
        one_sided: torus.is_stencil_boundary(s),
    })
}

/// Largest difference quotient `|∂L̃/∂v(x, v) − ∂L̃/∂v(x′, v)| / Δx` over grid
/// neighbours `x, x′` and interior stencil velocities `v`.
pub fn envelope_lipschitz_in_x(env: &FiberEnvelope) -> Result<f64, ConvexifyError> {
    let torus = env.grid.require_torus()?;
    let n = torus.nodes_per_dim();
    let dx = torus.spacing();
    let mut best = 0.0f64;
    for x in 0..env.grid.node_count() {
        let c = torus.node_coords(x);
        for axis in 0..torus.dim() {
            let mut cn = c;
            cn[axis] = (c[axis] + 1) % n;
            let y = torus.node_index(cn);
            if y == x {
                continue;
            }
            for s in (0..torus.stencil_len()).filter(|&s| !torus.is_stencil_boundary(s)) {
                let a = envelope_fiber_derivative(env, x, s)?.covector;
                let b = envelope_fiber_derivative(env, y, s)?.covector;
                let d = (a[0] - b[0]).abs().max((a[1] - b[1]).abs());
                best = best.max(d / dx);
            }
        }
    }
    Ok(best)
}

/// Fiber derivatives at the supported velocities of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMomentum {
    /// `(stencil index, derivative)` per supported velocity, in stencil order.
    pub momenta: Vec<(usize, FiberDerivative)>,
    /// μ-weighted mean, over interior velocities when there are any.
    pub representative: [f64; 2],
    /// Largest ℓ∞ difference between two supported momenta.
    pub spread: f64,
    /// Every supported velocity is on the stencil's outer ring.
    pub one_sided: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumField {
    grid: PhaseGrid,
    nodes: Vec<Option<NodeMomentum>>,
}

impl MomentumField {
    pub fn at(&self, x: usize) -> Result<&NodeMomentum, ConvexifyError> {
        self.nodes
            .get(x)
            .and_then(Option::as_ref)
            .ok_or(ConvexifyError::UndefinedNode(x))
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    /// Nodes of the projected support, increasing.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, &NodeMomentum)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(x, m)| m.as_ref().map(|m| (x, m)))
    }

    /// Representatives as a node-indexed table (`None` off the support).
    pub fn representatives(&self) -> Vec<Option<[f64; 2]>> {
        self.nodes
            .iter()
            .map(|m| m.as_ref().map(|m| m.representative))
            .collect()
    }

    /// Nodes whose momenta are all one-sided.
    pub fn one_sided_nodes(&self) -> Vec<usize> {
        self.nodes().filter(|(_, m)| m.one_sided).map(|(x, _)| x).collect()
    }
}

pub fn momentum_field(
    env: &FiberEnvelope,
    mu: &DiscreteMeasure,
) -> Result<MomentumField, ConvexifyError> {
    if !env.grid.same_as(mu.grid()) {
        return Err(ConvexifyError::GridMismatch);
    }
    let grid = &env.grid;
    let torus = grid.require_torus()?;
    let mut per_node: Vec<Vec<(usize, f64)>> = vec![Vec::new(); grid.node_count()];
    for (e, w) in mu.support() {
        per_node[grid.tail(e)].push((e % torus.stencil_len(), w));
    }

    let mut nodes = vec![None; grid.node_count()];
    for (x, supported) in per_node.into_iter().enumerate() {
        if supported.is_empty() {
            continue;
        }
        let mut momenta = Vec::with_capacity(supported.len());
        for &(s, _) in &supported {
            momenta.push((s, envelope_fiber_derivative(env, x, s)?));
        }
        let one_sided = momenta.iter().all(|(_, d)| d.one_sided);
        let mut sum = [0.0; 2];
        let mut total = 0.0;
        for ((_, d), &(_, w)) in momenta.iter().zip(&supported) {
            if one_sided || !d.one_sided {
                sum[0] += w * d.covector[0];
                sum[1] += w * d.covector[1];
                total += w;
            }
        }
        let mut spread = 0.0f64;
        for (i, (_, a)) in momenta.iter().enumerate() {
            for (_, b) in &momenta[i + 1..] {
                let d = (a.covector[0] - b.covector[0])
                    .abs()
                    .max((a.covector[1] - b.covector[1]).abs());
                spread = spread.max(d);
            }
        }
        nodes[x] = Some(NodeMomentum {
            momenta,
            representative: [sum[0] / total, sum[1] / total],
            spread,
            one_sided,
        });
    }
    Ok(MomentumField {
        grid: grid.clone(),
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_torus_grid, sample_lagrangian};
    use alloc::vec::Vec;

    #[test]
    fn double_well_chord() {
        let vs = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let ls: Vec<f64> = vs.iter().map(|v: &f64| (v * v - 1.0) * (v * v - 1.0)).collect();
        assert_eq!(ls, vec![9.0, 0.0, 1.0, 0.0, 9.0]);
        let env = lower_envelope_1d(&vs, &ls);
        assert_eq!(env.values, vec![9.0, 0.0, 0.0, 0.0, 9.0]);
        assert_eq!((env.p_minus[2], env.p_plus[2]), (0.0, 0.0));
        assert_eq!((env.p_minus[1], env.p_plus[1]), (-9.0, 0.0));
    }

    #[test]
    fn convex_and_affine_fibers_unchanged() {
        let vs = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let quad: Vec<f64> = vs.iter().map(|v| v * v / 2.0).collect();
        assert_eq!(lower_envelope_1d(&vs, &quad).values, quad);
        let aff: Vec<f64> = vs.iter().map(|v| 0.7 * v - 0.2).collect();
        let env = lower_envelope_1d(&vs, &aff);
        for (i, a) in aff.iter().enumerate() {
            assert!((env.values[i] - a).abs() < 1e-15);
            assert!((env.p_minus[i] - 0.7).abs() < 1e-12 && (env.p_plus[i] - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_derivative_and_width() {
        let g = build_torus_grid(1, 4, 1, 0.25).unwrap();
        let t = sample_lagrangian(&g, |_, v| v[0] * v[0] / 2.0).unwrap();
        let env = fiber_convex_envelope(&t).unwrap();
        let mid = envelope_fiber_derivative(&env, 0, 1).unwrap();
        assert_eq!(mid.covector[0], 0.0);
        assert_eq!(mid.width, 0.5);
        assert!(!mid.one_sided);
        let end = envelope_fiber_derivative(&env, 0, 2).unwrap();
        assert!(end.one_sided);
        assert_eq!(end.width, 0.0);
        assert_eq!(end.covector[0], 0.5);
        assert!(matches!(
            envelope_fiber_derivative(&env, 0, 3),
            Err(ConvexifyError::StencilIndexOutOfRange { .. })
        ));
    }

    #[test]
    fn two_dimensional_envelope() {
        let g = build_torus_grid(2, 3, 1, 1.0 / 3.0).unwrap();
        let t = sample_lagrangian(&g, |_, v| {
            let r = v[0] * v[0] + v[1] * v[1];
            (r - 1.0) * (r - 1.0)
        })
        .unwrap();
        let env = fiber_convex_envelope(&t).unwrap();
        let rest = g.torus().unwrap().rest_index();
        // the four unit velocities carry zero cost, so the rest point drops to 0
        assert_eq!(env.values()[rest], 0.0);
        let d = envelope_fiber_derivative(&env, 0, rest).unwrap();
        assert_eq!(d.covector, [0.0, 0.0]);
        assert_eq!(d.width, 0.0);
        for e in 0..g.edge_count() {
            assert!(env.values()[e] <= t.value(e));
        }
    }

    #[test]
    fn paraboloid_is_its_own_envelope() {
        let g = build_torus_grid(2, 2, 2, 0.5).unwrap();
        let t = sample_lagrangian(&g, |_, v| v[0] * v[0] + 0.5 * v[1] * v[1]).unwrap();
        let env = fiber_convex_envelope(&t).unwrap();
        for e in 0..g.edge_count() {
            assert!((env.values()[e] - t.value(e)).abs() < 1e-12);
        }
        let rest = g.torus().unwrap().rest_index();
        let d = envelope_fiber_derivative(&env, 0, rest).unwrap();
        assert!(d.covector[0].abs() < 1e-12 && d.covector[1].abs() < 1e-12);
    }

    #[test]
    fn momentum_on_support() {
        let g = build_torus_grid(1, 4, 2, 0.25).unwrap();
        let t = sample_lagrangian(&g, |_, v| (v[0] * v[0] - 1.0) * (v[0] * v[0] - 1.0)).unwrap();
        let env = fiber_convex_envelope(&t).unwrap();
        // both unit velocities at node 1
        let a = g.edge_at(1, 1).unwrap();
        let b = g.edge_at(1, 3).unwrap();
        let mu = DiscreteMeasure::from_weights(&g, [(a, 0.5), (b, 0.5)]).unwrap();
        let field = momentum_field(&env, &mu).unwrap();
        let m = field.at(1).unwrap();
        assert_eq!(m.momenta.len(), 2);
        assert!(m.spread > 0.0);
        assert_eq!(field.at(0), Err(ConvexifyError::UndefinedNode(0)));
    }
}

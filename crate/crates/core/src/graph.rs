//! Time-varying communication graphs, masks and doubly stochastic mixing matrices.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    consensus_operator, disagreement_projector, eigenvalue_moduli, spectral_norm, Matrix,
};

/// Tolerance used for row/column sum checks on mixing matrices.
pub const STOCHASTIC_TOL: f64 = 1e-10;

/// Node set plus τ undirected edge sets. Self-loops are implicit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeVaryingGraph {
    node_count: usize,
    snapshots: Vec<Vec<(usize, usize)>>,
}

impl TimeVaryingGraph {
    /// Builds a graph from raw edge lists. Edges are canonicalized to `r < q`
    /// and sorted; duplicates, self-loops and out-of-range endpoints are rejected.
    pub fn new(node_count: usize, snapshots: Vec<Vec<(usize, usize)>>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidGraph("node count must be positive".into()));
        }
        if snapshots.is_empty() {
            return Err(Error::InvalidGraph("window length must be at least 1".into()));
        }
        let mut canonical = Vec::with_capacity(snapshots.len());
        for (l, edges) in snapshots.into_iter().enumerate() {
            let mut seen = BTreeSet::new();
            for (a, b) in edges {
                if a >= node_count || b >= node_count {
                    return Err(Error::InvalidGraph(format!(
                        "snapshot {l}: edge ({a},{b}) out of range for {node_count} nodes"
                    )));
                }
                if a == b {
                    return Err(Error::InvalidGraph(format!(
                        "snapshot {l}: explicit self-loop at node {a}"
                    )));
                }
                let edge = (a.min(b), a.max(b));
                if !seen.insert(edge) {
                    return Err(Error::InvalidGraph(format!(
                        "snapshot {l}: duplicate edge ({},{})",
                        edge.0, edge.1
                    )));
                }
            }
            canonical.push(seen.into_iter().collect());
        }
        Ok(Self {
            node_count,
            snapshots: canonical,
        })
    }

    /// The same edge set repeated over a window of `tau` snapshots.
    pub fn repeated(node_count: usize, edges: Vec<(usize, usize)>, tau: usize) -> Result<Self> {
        Self::new(node_count, vec![edges; tau])
    }

    pub fn ring(node_count: usize, tau: usize) -> Result<Self> {
        let edges = match node_count {
            0 | 1 => vec![],
            2 => vec![(0, 1)],
            n => (0..n).map(|r| (r, (r + 1) % n)).collect(),
        };
        Self::repeated(node_count, edges, tau)
    }

    pub fn path(node_count: usize, tau: usize) -> Result<Self> {
        let edges = (1..node_count).map(|r| (r - 1, r)).collect();
        Self::repeated(node_count, edges, tau)
    }

    pub fn complete(node_count: usize, tau: usize) -> Result<Self> {
        let edges = (0..node_count)
            .flat_map(|r| (r + 1..node_count).map(move |q| (r, q)))
            .collect();
        Self::repeated(node_count, edges, tau)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Window length τ.
    pub fn window(&self) -> usize {
        self.snapshots.len()
    }

    pub fn snapshot(&self, l: usize) -> &[(usize, usize)] {
        &self.snapshots[l]
    }

    pub fn snapshots(&self) -> &[Vec<(usize, usize)>] {
        &self.snapshots
    }

    /// Neighbours of `r` in snapshot `l`, excluding `r` itself.
    pub fn neighbors(&self, l: usize, r: usize) -> Vec<usize> {
        self.snapshots[l]
            .iter()
            .filter_map(|&(a, b)| match (a == r, b == r) {
                (true, _) => Some(b),
                (_, true) => Some(a),
                _ => None,
            })
            .collect()
    }

    pub fn degrees(&self, l: usize) -> Vec<usize> {
        let mut deg = vec![0; self.node_count];
        for &(a, b) in &self.snapshots[l] {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Edges present in at least one snapshot.
    pub fn union_edges(&self) -> Vec<(usize, usize)> {
        let set: BTreeSet<_> = self.snapshots.iter().flatten().copied().collect();
        set.into_iter().collect()
    }

    /// Connectivity, diameter and radius of the union-over-window graph.
    pub fn stats(&self) -> GraphStats {
        let n = self.node_count;
        let mut adjacency = vec![Vec::new(); n];
        let union = self.union_edges();
        for &(a, b) in &union {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let mut eccentricities = Vec::with_capacity(n);
        let mut connected = true;
        for source in 0..n {
            let dist = bfs_distances(&adjacency, source);
            if dist.iter().any(Option::is_none) {
                connected = false;
                break;
            }
            eccentricities.push(dist.into_iter().flatten().max().unwrap_or(0));
        }
        let (diameter, radius) = if connected {
            (
                eccentricities.iter().copied().max(),
                eccentricities.iter().copied().min(),
            )
        } else {
            (None, None)
        };
        GraphStats {
            nodes: n,
            window: self.window(),
            union_edges: union.len(),
            connected,
            diameter,
            radius,
        }
    }

    /// Edge-list text: `R tau` followed by one `l r q` line per edge.
    pub fn to_edge_list(&self, header: &[String]) -> String {
        let mut out = String::new();
        for line in header {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "{} {}", self.node_count, self.window());
        for (l, edges) in self.snapshots.iter().enumerate() {
            for &(r, q) in edges {
                let _ = writeln!(out, "{l} {r} {q}");
            }
        }
        out
    }

    pub fn parse_edge_list(text: &str, origin: &str) -> Result<Self> {
        let mut dims: Option<(usize, usize)> = None;
        let mut snapshots: Vec<Vec<(usize, usize)>> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let number = |i: usize, name: &str| -> Result<usize> {
                fields
                    .get(i)
                    .ok_or_else(|| Error::parse(origin, line_no, name, "missing"))?
                    .parse::<usize>()
                    .map_err(|e| Error::parse(origin, line_no, name, e.to_string()))
            };
            match dims {
                None => {
                    if fields.len() != 2 {
                        return Err(Error::parse(origin, line_no, "header", "expected `R tau`"));
                    }
                    let (r, tau) = (number(0, "R")?, number(1, "tau")?);
                    dims = Some((r, tau));
                    snapshots = vec![Vec::new(); tau];
                }
                Some((_, tau)) => {
                    if fields.len() != 3 {
                        return Err(Error::parse(origin, line_no, "edge", "expected `l r q`"));
                    }
                    let l = number(0, "l")?;
                    if l >= tau {
                        return Err(Error::parse(
                            origin,
                            line_no,
                            "l",
                            format!("snapshot index {l} >= tau {tau}"),
                        ));
                    }
                    snapshots[l].push((number(1, "r")?, number(2, "q")?));
                }
            }
        }
        let (r, _) = dims.ok_or_else(|| Error::parse(origin, 0, "header", "empty edge list"))?;
        Self::new(r, snapshots)
    }

    pub fn read_edge_list(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_edge_list(&text, &path.display().to_string())
    }

    pub fn write_edge_list(&self, path: &Path, header: &[String]) -> Result<()> {
        std::fs::write(path, self.to_edge_list(header)).map_err(|e| Error::io(path, e))
    }
}

fn bfs_distances(adjacency: &[Vec<usize>], source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adjacency.len()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap_or(0);
        for &v in &adjacency[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub window: usize,
    pub union_edges: usize,
    pub connected: bool,
    pub diameter: Option<usize>,
    pub radius: Option<usize>,
}

/// Symmetric k-nearest-neighbour edge set over 3-D points.
pub fn knn_edges(points: &[[f64; 3]], k: usize) -> Vec<(usize, usize)> {
    let mut set = BTreeSet::new();
    for (i, p) in points.iter().enumerate() {
        let mut others: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, q)| (distance(p, q), j))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k) {
            set.insert((i.min(j), i.max(j)));
        }
    }
    set.into_iter().collect()
}

/// k-nearest-neighbour edges, plus the shortest edge joining each pair of
/// components until the union is connected.
pub fn connected_knn_edges(points: &[[f64; 3]], k: usize) -> Vec<(usize, usize)> {
    let mut set: BTreeSet<(usize, usize)> = knn_edges(points, k).into_iter().collect();
    let n = points.len();
    loop {
        let comp = components(n, &set);
        if comp.iter().all(|&c| c == comp[0]) {
            break;
        }
        // join component 0 to its closest outside node
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| comp[i] == comp[0]) {
            for j in (0..n).filter(|&j| comp[j] != comp[0]) {
                let d = distance(&points[i], &points[j]);
                if best.is_none_or(|b| d < b.0) {
                    best = Some((d, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("disconnected set has an outside node");
        set.insert((i.min(j), i.max(j)));
    }
    set.into_iter().collect()
}

fn components(n: usize, edges: &BTreeSet<(usize, usize)>) -> Vec<usize> {
    let mut label: Vec<usize> = (0..n).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut label, a), find(&mut label, b));
        if ra != rb {
            label[ra.max(rb)] = ra.min(rb);
        }
    }
    (0..n).map(|i| find(&mut label, i)).collect()
}

/// Edges between all point pairs closer than `threshold`.
pub fn radius_edges(points: &[[f64; 3]], threshold: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if distance(&points[i], &points[j]) <= threshold {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Uniform random points on the unit sphere.
pub fn random_sphere_points<R: Rng>(count: usize, rng: &mut R) -> Vec<[f64; 3]> {
    (0..count)
        .map(|_| {
            let z: f64 = rng.random_range(-1.0..1.0);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let s = (1.0 - z * z).sqrt();
            [s * phi.cos(), s * phi.sin(), z]
        })
        .collect()
}

/// Per-snapshot random activation of a base edge set: each edge is kept in
/// each snapshot independently with probability `p`.
pub fn random_activation<R: Rng>(
    base: &[(usize, usize)],
    tau: usize,
    p: f64,
    rng: &mut R,
) -> Vec<Vec<(usize, usize)>> {
    (0..tau)
        .map(|_| {
            base.iter()
                .copied()
                .filter(|_| p >= 1.0 || rng.random::<f64>() < p)
                .collect()
        })
        .collect()
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Binary support pattern of one snapshot, including the diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    size: usize,
    support: Vec<bool>,
}

impl Mask {
    pub fn from_edges(size: usize, edges: &[(usize, usize)]) -> Self {
        let mut support = vec![false; size * size];
        for r in 0..size {
            support[r * size + r] = true;
        }
        for &(r, q) in edges {
            support[r * size + q] = true;
            support[q * size + r] = true;
        }
        Self { size, support }
    }

    pub fn full(size: usize) -> Self {
        Self {
            size,
            support: vec![true; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn contains(&self, r: usize, q: usize) -> bool {
        self.support[r * self.size + q]
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.size, self.size, |r, q| {
            if self.contains(r, q) {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn nnz(&self) -> usize {
        self.support.iter().filter(|&&b| b).count()
    }
}

pub fn build_masks(graph: &TimeVaryingGraph) -> Vec<Mask> {
    graph
        .snapshots()
        .iter()
        .map(|edges| Mask::from_edges(graph.node_count(), edges))
        .collect()
}

/// A nonnegative doubly stochastic weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    weights: Matrix,
}

impl MixingMatrix {
    /// Validates square shape, nonnegativity and double stochasticity within `tol`.
    pub fn new(weights: Matrix, tol: f64) -> Result<Self> {
        if !weights.is_square() {
            return Err(Error::InvalidMatrix(format!(
                "mixing matrix must be square, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMatrix(
                "mixing weights must be finite and nonnegative".into(),
            ));
        }
        let m = Self { weights };
        let err = m.stochasticity_error();
        if err > tol {
            return Err(Error::InvalidMatrix(format!(
                "not doubly stochastic: max |sum - 1| = {err:e} > {tol:e}"
            )));
        }
        Ok(m)
    }

    /// Validates against a mask as well.
    pub fn with_mask(weights: Matrix, mask: &Mask, tol: f64) -> Result<Self> {
        let m = Self::new(weights, tol)?;
        if m.size() != mask.size() {
            return Err(Error::Dimension(format!(
                "matrix size {} vs mask size {}",
                m.size(),
                mask.size()
            )));
        }
        if let Some((r, q)) = m.mask_violation(mask) {
            return Err(Error::InvalidMatrix(format!(
                "nonzero weight at ({r},{q}) outside the mask"
            )));
        }
        Ok(m)
    }

    pub(crate) fn from_raw(weights: Matrix) -> Self {
        Self { weights }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_raw(Matrix::identity(n, n))
    }

    pub fn consensus(n: usize) -> Self {
        Self::from_raw(consensus_operator(n))
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn into_weights(self) -> Matrix {
        self.weights
    }

    pub fn size(&self) -> usize {
        self.weights.nrows()
    }

    /// max over rows and columns of |sum − 1|.
    pub fn stochasticity_error(&self) -> f64 {
        let rows = self
            .weights
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max);
        let cols = self
            .weights
            .column_iter()
            .map(|c| (c.sum() - 1.0).abs())
            .fold(0.0, f64::max);
        rows.max(cols)
    }

    /// First entry that is nonzero where the mask is zero.
    pub fn mask_violation(&self, mask: &Mask) -> Option<(usize, usize)> {
        let n = self.size();
        (0..n)
            .flat_map(|r| (0..n).map(move |q| (r, q)))
            .find(|&(r, q)| !mask.contains(r, q) && self.weights[(r, q)] != 0.0)
    }

    /// (W + I)/2.
    pub fn lazy(&self) -> MixingMatrix {
        let n = self.size();
        Self::from_raw((&self.weights + Matrix::identity(n, n)) * 0.5)
    }
}

/// τ mixing matrices applied periodically. When `lazy` is set, the effective
/// factor at each layer is (W + I)/2 rather than W itself.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingSchedule {
    matrices: Vec<MixingMatrix>,
    lazy: bool,
}

impl MixingSchedule {
    pub fn new(matrices: Vec<MixingMatrix>, lazy: bool) -> Result<Self> {
        let Some(first) = matrices.first() else {
            return Err(Error::InvalidMatrix("schedule needs at least one matrix".into()));
        };
        let n = first.size();
        if let Some(bad) = matrices.iter().find(|m| m.size() != n) {
            return Err(Error::Dimension(format!(
                "schedule mixes sizes {n} and {}",
                bad.size()
            )));
        }
        Ok(Self { matrices, lazy })
    }

    pub fn single(matrix: MixingMatrix) -> Self {
        Self {
            matrices: vec![matrix],
            lazy: false,
        }
    }

    pub fn window(&self) -> usize {
        self.matrices.len()
    }

    pub fn size(&self) -> usize {
        self.matrices[0].size()
    }

    pub fn is_lazy(&self) -> bool {
        self.lazy
    }

    pub fn matrices(&self) -> &[MixingMatrix] {
        &self.matrices
    }

    /// The factor actually applied at layer `l`.
    pub fn effective(&self, l: usize) -> MixingMatrix {
        if self.lazy {
            self.matrices[l].lazy()
        } else {
            self.matrices[l].clone()
        }
    }

    pub fn effective_matrices(&self) -> Vec<Matrix> {
        (0..self.window())
            .map(|l| self.effective(l).into_weights())
            .collect()
    }

    /// Checks every layer against its snapshot mask.
    pub fn validate(&self, masks: &[Mask], tol: f64) -> Result<()> {
        if masks.len() != self.window() {
            return Err(Error::Dimension(format!(
                "{} masks for a window of {}",
                masks.len(),
                self.window()
            )));
        }
        for (l, (m, mask)) in self.matrices.iter().zip(masks).enumerate() {
            MixingMatrix::with_mask(m.weights.clone(), mask, tol)
                .map_err(|e| Error::InvalidMatrix(format!("layer {l}: {e}")))?;
        }
        Ok(())
    }
}

/// Metropolis–Hastings weights w_rq = 1/(1 + max(deg_r, deg_q)) on snapshot `l`.
pub fn metropolis_weights(
    graph: &TimeVaryingGraph,
    snapshot_index: usize,
    lazy: bool,
) -> Result<MixingMatrix> {
    if snapshot_index >= graph.window() {
        return Err(Error::InvalidGraph(format!(
            "snapshot {snapshot_index} out of range for window {}",
            graph.window()
        )));
    }
    let n = graph.node_count();
    let deg = graph.degrees(snapshot_index);
    let mut w = Matrix::zeros(n, n);
    for &(r, q) in graph.snapshot(snapshot_index) {
        let v = 1.0 / (1.0 + deg[r].max(deg[q]) as f64);
        w[(r, q)] = v;
        w[(q, r)] = v;
    }
    for r in 0..n {
        let off: f64 = (0..n).filter(|&q| q != r).map(|q| w[(r, q)]).sum();
        w[(r, r)] = 1.0 - off;
    }
    let m = MixingMatrix::from_raw(w);
    Ok(if lazy { m.lazy() } else { m })
}

/// ε_τ = ‖W^(τ−1)···W^(0) − (1/R)11ᵀ‖₂ over the effective factors.
pub fn contraction_factor(schedule: &MixingSchedule) -> Result<f64> {
    let n = schedule.size();
    let mut product = Matrix::identity(n, n);
    for l in 0..schedule.window() {
        let f = schedule.effective(l);
        if f.size() != n {
            return Err(Error::Dimension("schedule sizes differ".into()));
        }
        product = f.weights() * product;
    }
    Ok(spectral_norm(&(product - consensus_operator(n))))
}

/// Second-largest eigenvalue modulus.
pub fn second_eigenvalue(matrix: &MixingMatrix) -> Result<f64> {
    let w = matrix.weights();
    if !w.is_square() {
        return Err(Error::Dimension("second_eigenvalue needs a square matrix".into()));
    }
    Ok(eigenvalue_moduli(w).get(1).copied().unwrap_or(0.0))
}

/// ‖J⊥ (W − I) J⊥‖₂, the norm of W − I on the consensus-orthogonal subspace.
pub fn disagreement_projector_norm(matrix: &MixingMatrix) -> f64 {
    let n = matrix.size();
    let p = disagreement_projector(n);
    let d = matrix.weights() - Matrix::identity(n, n);
    spectral_norm(&(&p * d * &p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn masks_for_small_graphs() {
        let g = TimeVaryingGraph::new(2, vec![vec![(0, 1)]]).unwrap();
        assert_eq!(build_masks(&g)[0].to_matrix(), Matrix::from_element(2, 2, 1.0));

        let g = TimeVaryingGraph::new(3, vec![vec![]]).unwrap();
        assert_eq!(build_masks(&g)[0].to_matrix(), Matrix::identity(3, 3));

        let g = TimeVaryingGraph::new(3, vec![vec![(1, 0)]]).unwrap();
        let m = build_masks(&g)[0].to_matrix();
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(m[(1, 0)], 1.0);
        assert_eq!(m[(0, 2)], 0.0);
        assert_eq!(m[(2, 0)], 0.0);
        assert_eq!(m.diagonal(), nalgebra::DVector::from_element(3, 1.0));
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(TimeVaryingGraph::new(3, vec![vec![(0, 3)]]).is_err());
        assert!(TimeVaryingGraph::new(3, vec![vec![(0, 1), (1, 0)]]).is_err());
        assert!(TimeVaryingGraph::new(3, vec![vec![(2, 2)]]).is_err());
        assert!(TimeVaryingGraph::new(3, vec![]).is_err());
        assert!(TimeVaryingGraph::new(0, vec![vec![]]).is_err());
    }

    #[test]
    fn metropolis_pair() {
        let g = TimeVaryingGraph::new(2, vec![vec![(0, 1)]]).unwrap();
        let w = metropolis_weights(&g, 0, false).unwrap();
        assert_abs_diff_eq!(w.weights(), &Matrix::from_element(2, 2, 0.5), epsilon = 1e-15);
        let w = metropolis_weights(&g, 0, true).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75]);
        assert_abs_diff_eq!(w.weights(), &expected, epsilon = 1e-15);
        assert!(metropolis_weights(&g, 1, true).is_err());
    }

    #[test]
    fn contraction_of_trivial_schedules() {
        for n in [1, 2, 5, 17] {
            let s = MixingSchedule::single(MixingMatrix::consensus(n));
            assert_abs_diff_eq!(contraction_factor(&s).unwrap(), 0.0, epsilon = 1e-14);
        }
        let s = MixingSchedule::single(MixingMatrix::identity(2));
        assert_abs_diff_eq!(contraction_factor(&s).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn second_eigenvalue_extremes() {
        let j = MixingMatrix::consensus(6);
        assert_abs_diff_eq!(second_eigenvalue(&j).unwrap(), 0.0, epsilon = 1e-12);
        let i = MixingMatrix::identity(4);
        assert_abs_diff_eq!(second_eigenvalue(&i).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn projector_norm_extremes() {
        assert_abs_diff_eq!(
            disagreement_projector_norm(&MixingMatrix::identity(5)),
            0.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            disagreement_projector_norm(&MixingMatrix::consensus(5)),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn ring_and_path_stats() {
        let s = TimeVaryingGraph::ring(4, 1).unwrap().stats();
        assert_eq!((s.union_edges, s.diameter, s.radius), (4, Some(2), Some(2)));
        let s = TimeVaryingGraph::path(5, 2).unwrap().stats();
        assert_eq!((s.diameter, s.radius), (Some(4), Some(2)));
        let g = TimeVaryingGraph::new(4, vec![vec![(0, 1)], vec![(2, 3)]]).unwrap();
        assert!(!g.stats().connected);
    }

    #[test]
    fn edge_list_roundtrip_and_errors() {
        let g = TimeVaryingGraph::new(4, vec![vec![(0, 1), (2, 3)], vec![(1, 2)]]).unwrap();
        let text = g.to_edge_list(&["seed 3".into()]);
        assert!(text.starts_with("# seed 3\n4 2\n"));
        assert_eq!(TimeVaryingGraph::parse_edge_list(&text, "mem").unwrap(), g);

        let err = TimeVaryingGraph::parse_edge_list("3 1\n0 0 x\n", "f").unwrap_err();
        assert!(err.to_string().contains("f:2"), "{err}");
        assert!(TimeVaryingGraph::parse_edge_list("3 1\n1 0 1\n", "f").is_err());
        assert!(TimeVaryingGraph::parse_edge_list("# only comments\n", "f").is_err());
    }

    #[test]
    fn mixing_matrix_validation() {
        let mask = Mask::from_edges(3, &[(0, 1)]);
        let ok = Matrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 1.0]);
        assert!(MixingMatrix::with_mask(ok, &mask, STOCHASTIC_TOL).is_ok());
        let off_mask = Matrix::from_element(3, 3, 1.0 / 3.0);
        assert!(MixingMatrix::with_mask(off_mask, &mask, STOCHASTIC_TOL).is_err());
        let not_ds = Matrix::from_row_slice(2, 2, &[0.6, 0.4, 0.6, 0.4]);
        assert!(MixingMatrix::new(not_ds, STOCHASTIC_TOL).is_err());
    }

    #[test]
    fn connected_knn_bridges_clusters() {
        // two tight clusters far apart: plain 1-NN stays split
        let pts = [[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [5.0, 0.0, 0.0], [5.2, 0.0, 0.0]];
        let plain = TimeVaryingGraph::repeated(4, knn_edges(&pts, 1), 1).unwrap();
        assert!(!plain.stats().connected);
        let edges = connected_knn_edges(&pts, 1);
        assert_eq!(edges, vec![(0, 1), (1, 2), (2, 3)]);
        let g = TimeVaryingGraph::repeated(4, edges, 1).unwrap();
        assert!(g.stats().connected);
    }
}

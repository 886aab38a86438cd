//! Region adjacency graphs and their Laplacians.
//!
//! Both the spatial graph (regions joined by a border relation) and the
//! temporal graph (months joined in a path) are undirected and unweighted.
//! The Laplacian `L = D - W` is never materialised for the solver; it is
//! applied edge by edge. The spatio-temporal penalty is the Kronecker
//! product `L_s (x) L_t`, applied through the identity
//! `(L_s (x) L_t) vec(H) = vec(L_t H L_s)`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::linalg::DMat;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("adjacency references unknown region code `{0}`")]
    UnknownCode(String),
    #[error("duplicate region code `{0}` in node list")]
    DuplicateCode(String),
    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) out of bounds for {2} nodes")]
    EdgeOutOfBounds(usize, usize, usize),
    #[error("graph needs at least one node")]
    Empty,
    #[error("path graph needs at least 2 nodes, got {0}")]
    PathTooShort(usize),
}

/// Undirected graph on `0..n`, stored as a deduplicated edge list.
///
/// Invariants: every edge `(a, b)` satisfies `a < b < n`; edges are sorted
/// and unique; `degrees[i]` equals the number of edges incident to `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    degrees: Vec<f64>,
}

impl RegionGraph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            if a >= n || b >= n {
                return Err(GraphError::EdgeOutOfBounds(a, b, n));
            }
            normalized.push(if a < b { (a, b) } else { (b, a) });
        }
        normalized.sort_unstable();
        normalized.dedup();
        let mut degrees = alloc::vec![0.0; n];
        for &(a, b) in &normalized {
            degrees[a] += 1.0;
            degrees[b] += 1.0;
        }
        Ok(RegionGraph { n, edges: normalized, degrees })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// `y = L x` with `L = D - W`, applied edge by edge.
    pub fn apply_laplacian(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            y[i] = self.degrees[i] * x[i];
        }
        for &(a, b) in &self.edges {
            y[a] -= x[b];
            y[b] -= x[a];
        }
    }

    /// `xᵀ L x = Σ_{(a,b) in E} (x_a - x_b)²`; non-negative by construction.
    pub fn laplacian_quadform(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        self.edges.iter().map(|&(a, b)| (x[a] - x[b]) * (x[a] - x[b])).sum()
    }

    /// Dense `L = D - W`, for tests and small diagnostics only.
    pub fn dense_laplacian(&self) -> DMat {
        let mut l = DMat::zeros(self.n, self.n);
        for i in 0..self.n {
            l.set(i, i, self.degrees[i]);
        }
        for &(a, b) in &self.edges {
            l.set(a, b, -1.0);
            l.set(b, a, -1.0);
        }
        l
    }

    /// Subgraph induced by `nodes` (ascending original indices); node `k`
    /// of the result is `nodes[k]`, and edges survive when both endpoints
    /// are selected.
    pub fn induced(&self, nodes: &[usize]) -> Result<RegionGraph, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut position: BTreeMap<usize, usize> = BTreeMap::new();
        for (k, &node) in nodes.iter().enumerate() {
            if node >= self.n {
                return Err(GraphError::EdgeOutOfBounds(node, node, self.n));
            }
            position.insert(node, k);
        }
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| match (position.get(&a), position.get(&b)) {
                (Some(&x), Some(&y)) => Some((x, y)),
                _ => None,
            })
            .collect();
        RegionGraph::new(nodes.len(), &edges)
    }
}

/// Path-graph Laplacian over `n` consecutive months (`n >= 2`).
pub fn path_laplacian(n: usize) -> Result<RegionGraph, GraphError> {
    if n < 2 {
        return Err(GraphError::PathTooShort(n));
    }
    let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    RegionGraph::new(n, &edges)
}

/// Build the spatial graph from region codes and coded border pairs.
///
/// `codes` must be unique; both endpoints of every pair must appear in it.
/// Reversed and repeated pairs collapse to a single undirected edge.
pub fn adjacency_laplacian<S: AsRef<str>>(
    codes: &[String],
    pairs: &[(S, S)],
) -> Result<RegionGraph, GraphError> {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, code) in codes.iter().enumerate() {
        if index.insert(code.as_str(), i).is_some() {
            return Err(GraphError::DuplicateCode(code.clone()));
        }
    }
    let mut edges = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let (a, b) = (a.as_ref(), b.as_ref());
        let ia = *index.get(a).ok_or_else(|| GraphError::UnknownCode(String::from(a)))?;
        let ib = *index.get(b).ok_or_else(|| GraphError::UnknownCode(String::from(b)))?;
        if ia == ib {
            return Err(GraphError::SelfLoop(ia));
        }
        edges.push((ia, ib));
    }
    RegionGraph::new(codes.len(), &edges)
}

/// The Kronecker penalty `L_s (x) L_t` acting on deviation fields.
///
/// A deviation field `H` is `T x p` (months by regions) stored column-major:
/// region `r` occupies the contiguous block `[r*T, (r+1)*T)`. That layout is
/// shared with the solver's coefficient vector.
#[derive(Debug, Clone)]
pub struct SpatioTemporalPenalty {
    spatial: RegionGraph,
    temporal: RegionGraph,
}

/// Pair a spatial and a temporal graph into the Kronecker penalty operator.
pub fn kronecker_penalty(spatial: RegionGraph, temporal: RegionGraph) -> SpatioTemporalPenalty {
    SpatioTemporalPenalty { spatial, temporal }
}

impl SpatioTemporalPenalty {
    pub fn spatial(&self) -> &RegionGraph {
        &self.spatial
    }

    pub fn temporal(&self) -> &RegionGraph {
        &self.temporal
    }

    pub fn field_len(&self) -> usize {
        self.spatial.n * self.temporal.n
    }

    /// `out = (L_s (x) L_t) h`, computed as `L_t (H L_s)` column by column.
    pub fn apply(&self, h: &[f64], out: &mut [f64]) {
        let p = self.spatial.n;
        let t = self.temporal.n;
        debug_assert_eq!(h.len(), p * t);
        debug_assert_eq!(out.len(), p * t);

        // tmp = H L_s: column r is deg_s(r) H_r minus the neighbour columns.
        let mut tmp = alloc::vec![0.0; p * t];
        for r in 0..p {
            let deg = self.spatial.degrees[r];
            let src = &h[r * t..(r + 1) * t];
            let dst = &mut tmp[r * t..(r + 1) * t];
            for k in 0..t {
                dst[k] = deg * src[k];
            }
        }
        for &(a, b) in &self.spatial.edges {
            for k in 0..t {
                tmp[a * t + k] -= h[b * t + k];
                tmp[b * t + k] -= h[a * t + k];
            }
        }
        for r in 0..p {
            self.temporal.apply_laplacian(&tmp[r * t..(r + 1) * t], &mut out[r * t..(r + 1) * t]);
        }
    }

    /// `hᵀ (L_s (x) L_t) h = Σ_{(a,b) in E_s} (H_a - H_b)ᵀ L_t (H_a - H_b)`.
    ///
    /// Only differences across both a spatial edge and a temporal edge are
    /// penalized, so any field constant across regions (or linear-in-nothing
    /// per-region constants over time) costs nothing.
    pub fn quadform(&self, h: &[f64]) -> f64 {
        let p = self.spatial.n;
        let t = self.temporal.n;
        debug_assert_eq!(h.len(), p * t);
        let mut diff = alloc::vec![0.0; t];
        let mut total = 0.0;
        for &(a, b) in &self.spatial.edges {
            for k in 0..t {
                diff[k] = h[a * t + k] - h[b * t + k];
            }
            total += self.temporal.laplacian_quadform(&diff);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn path_laplacian_diagonal_and_row_sums() {
        // Path on 4 months: degrees 1, 2, 2, 1, and every Laplacian row sums to zero.
        let g = path_laplacian(4).unwrap();
        assert_eq!(g.degrees(), &[1.0, 2.0, 2.0, 1.0]);
        let l = g.dense_laplacian();
        for i in 0..4 {
            let sum: f64 = (0..4).map(|j| l.get(i, j)).sum();
            assert_abs_diff_eq!(sum, 0.0, epsilon = 1e-15);
        }
        assert_eq!(l.get(0, 1), -1.0);
        assert_eq!(l.get(2, 2), 2.0);
    }

    #[test]
    fn two_month_path_is_difference_laplacian() {
        let l = path_laplacian(2).unwrap().dense_laplacian();
        assert_eq!(
            (l.get(0, 0), l.get(0, 1), l.get(1, 0), l.get(1, 1)),
            (1.0, -1.0, -1.0, 1.0)
        );
        assert_eq!(path_laplacian(1), Err(GraphError::PathTooShort(1)));
    }

    #[test]
    fn path_spectrum_matches_closed_form() {
        // Path-graph Laplacian eigenvalues are 2 - 2 cos(pi k / n), k = 0..n-1.
        let n = 6;
        let l = path_laplacian(n).unwrap().dense_laplacian();
        let mut got = crate::linalg::jacobi_eigh(&l).eigenvalues;
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (k, lam) in got.iter().enumerate() {
            let want = 2.0 - 2.0 * (core::f64::consts::PI * k as f64 / n as f64).cos();
            assert_abs_diff_eq!(*lam, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn apply_matches_dense_matvec() {
        let g = RegionGraph::new(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)]).unwrap();
        let x = [0.3, -1.2, 2.0, 0.0, 5.5];
        let mut y = [0.0; 5];
        g.apply_laplacian(&x, &mut y);
        let dense = g.dense_laplacian().matvec(&x);
        for i in 0..5 {
            assert_abs_diff_eq!(y[i], dense[i], epsilon = 1e-12);
        }
        // Quadratic form agrees with x' L x and is non-negative.
        let q = g.laplacian_quadform(&x);
        assert_abs_diff_eq!(q, crate::linalg::dot(&x, &dense), epsilon = 1e-12);
        assert!(q >= 0.0);
    }

    #[test]
    fn constant_vector_is_in_null_space() {
        let g = RegionGraph::new(6, &[(0, 1), (1, 2), (3, 4), (4, 5), (2, 3)]).unwrap();
        let x = [7.5; 6];
        let mut y = [0.0; 6];
        g.apply_laplacian(&x, &mut y);
        for v in y {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(g.laplacian_quadform(&x), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn edge_deduplication_and_reversal() {
        let g = RegionGraph::new(3, &[(0, 1), (1, 0), (2, 1), (1, 2), (1, 2)]).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.degrees(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn induced_subgraph_keeps_internal_edges() {
        // Path 0-1-2-3-4 plus chord (1, 4).
        let g = RegionGraph::new(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (1, 4)]).unwrap();
        let sub = g.induced(&[1, 2, 4]).unwrap();
        assert_eq!(sub.node_count(), 3);
        // Kept edges: (1,2) -> (0,1) and (1,4) -> (0,2).
        assert_eq!(sub.edges(), &[(0, 1), (0, 2)]);
        assert_eq!(sub.degree(0), 2.0);
        assert_eq!(g.induced(&[]), Err(GraphError::Empty));
        assert!(g.induced(&[0, 9]).is_err());
    }

    #[test]
    fn coded_adjacency_validates_inputs() {
        let codes = vec!["A".to_string(), "B".to_string(), "C".to_string()];
        let g = adjacency_laplacian(&codes, &[("B", "A"), ("A", "B"), ("B", "C")]).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(
            adjacency_laplacian(&codes, &[("A", "Z")]),
            Err(GraphError::UnknownCode("Z".to_string()))
        );
        assert_eq!(adjacency_laplacian(&codes, &[("A", "A")]), Err(GraphError::SelfLoop(0)));
        let dup = vec!["A".to_string(), "A".to_string()];
        let empty: [(&str, &str); 0] = [];
        assert_eq!(
            adjacency_laplacian(&dup, &empty),
            Err(GraphError::DuplicateCode("A".to_string()))
        );
    }

    #[test]
    fn self_loop_and_bounds_rejected() {
        assert_eq!(RegionGraph::new(3, &[(1, 1)]), Err(GraphError::SelfLoop(1)));
        assert_eq!(RegionGraph::new(3, &[(0, 3)]), Err(GraphError::EdgeOutOfBounds(0, 3, 3)));
        assert_eq!(RegionGraph::new(0, &[]), Err(GraphError::Empty));
    }

    /// Dense Kronecker product of the two Laplacians, built by definition.
    fn dense_kron(s: &DMat, t: &DMat) -> DMat {
        let (p, tt) = (s.rows(), t.rows());
        DMat::from_fn(p * tt, p * tt, |row, col| {
            let (rs, rt) = (row / tt, row % tt);
            let (cs, ct) = (col / tt, col % tt);
            s.get(rs, cs) * t.get(rt, ct)
        })
    }

    #[test]
    fn kronecker_apply_matches_dense_product() {
        let spatial = RegionGraph::new(3, &[(0, 1), (1, 2)]).unwrap();
        let temporal = path_laplacian(4).unwrap();
        let penalty = kronecker_penalty(spatial.clone(), temporal.clone());
        let dense = dense_kron(&spatial.dense_laplacian(), &temporal.dense_laplacian());

        let h: Vec<f64> = (0..12).map(|i| ((i * 37 + 5) % 11) as f64 - 5.0).collect();
        let mut out = vec![0.0; 12];
        penalty.apply(&h, &mut out);
        let want = dense.matvec(&h);
        for i in 0..12 {
            assert_abs_diff_eq!(out[i], want[i], epsilon = 1e-12);
        }
        let q = penalty.quadform(&h);
        assert_abs_diff_eq!(q, crate::linalg::dot(&h, &want), epsilon = 1e-10);
    }

    #[test]
    fn kronecker_null_space_contains_region_constants() {
        // A field where every region follows its own constant offset incurs no
        // penalty: only mixed space-time differences are charged.
        let spatial = RegionGraph::new(3, &[(0, 1), (1, 2)]).unwrap();
        let temporal = path_laplacian(5).unwrap();
        let penalty = kronecker_penalty(spatial, temporal);
        let mut h = vec![0.0; 15];
        for r in 0..3 {
            for k in 0..5 {
                h[r * 5 + k] = 10.0 * r as f64;
            }
        }
        assert_abs_diff_eq!(penalty.quadform(&h), 0.0, epsilon = 1e-15);
        // A common trend shared by all regions is also free.
        for r in 0..3 {
            for k in 0..5 {
                h[r * 5 + k] = (k * k) as f64;
            }
        }
        assert_abs_diff_eq!(penalty.quadform(&h), 0.0, epsilon = 1e-12);
    }
}

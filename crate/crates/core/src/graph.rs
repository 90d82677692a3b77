//! Latent geometry graphs.
//!
//! A latent geometry graph (LGG) is a k-NN graph over latent feature vectors.
//! Edges are chosen by cosine similarity and weighted by it, clamped below at
//! [`EDGE_FLOOR`] so that every selected edge carries positive weight. The
//! directed k-NN relation is symmetrized by union (`A = max(W, Wᵀ)`).
//!
//! ```text
//! w_ij = max(ε_w, cos(z_i, z_j))       for j in kNN(i)
//! A    = max(W, Wᵀ)
//! L    = I − D^{-1/2} A D^{-1/2}
//! ```

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Lower clamp on edge weights.
pub const EDGE_FLOOR: f64 = 1e-6;
/// Floor applied to vector norms inside the cosine.
pub const NORM_FLOOR: f64 = 1e-12;
pub const DEFAULT_K: usize = 5;

/// Latent feature vectors with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    features: Array2<f64>,
    labels: Vec<usize>,
}

impl EmbeddingBatch {
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput(format!(
                "embedding batch must be non-empty, got {n}x{d}"
            )));
        }
        if labels.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} labels for {n} feature rows",
                labels.len()
            )));
        }
        if let Some((idx, _)) = features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite feature at row {}, column {}",
                idx / d,
                idx % d
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows selected by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(features, labels)
    }

    pub fn into_parts(self) -> (Array2<f64>, Vec<usize>) {
        (self.features, self.labels)
    }
}

/// Symmetric weighted adjacency with node labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGraph {
    adjacency: Array2<f64>,
    labels: Vec<usize>,
}

impl LatentGraph {
    /// Validates symmetry, an empty diagonal and weights in `[0, 1]`.
    pub fn new(adjacency: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        let (n, m) = adjacency.dim();
        if n != m {
            return Err(Error::InvalidInput(format!("adjacency is {n}x{m}, not square")));
        }
        if labels.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} labels for {n} nodes",
                labels.len()
            )));
        }
        for i in 0..n {
            if adjacency[[i, i]] != 0.0 {
                return Err(Error::InvalidInput(format!("self-loop at node {i}")));
            }
            for j in 0..n {
                let a = adjacency[[i, j]];
                if !(0.0..=1.0).contains(&a) {
                    return Err(Error::InvalidInput(format!(
                        "weight a[{i},{j}] = {a} outside [0, 1]"
                    )));
                }
                if a != adjacency[[j, i]] {
                    return Err(Error::InvalidInput(format!(
                        "adjacency not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { adjacency, labels })
    }

    pub fn adjacency(&self) -> ArrayView2<'_, f64> {
        self.adjacency.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }
}

/// Normalized Laplacian together with the degrees it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    matrix: Array2<f64>,
    degrees: Array1<f64>,
}

impl Laplacian {
    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn degrees(&self) -> ArrayView1<'_, f64> {
        self.degrees.view()
    }

    pub fn size(&self) -> usize {
        self.degrees.len()
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.matrix
    }
}

/// The undirected edge set of a k-NN graph, each pair stored as `(i, j)` with
/// `i < j`, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnnTopology {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl KnnTopology {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn node_count(&self) -> usize {
        self.n
    }
}

/// Rows scaled to unit length, with norms floored at [`NORM_FLOOR`].
pub(crate) fn unit_rows(features: ArrayView2<'_, f64>) -> (Array2<f64>, Array1<f64>) {
    let norms = features.map_axis(Axis(1), |row| row.dot(&row).sqrt().max(NORM_FLOOR));
    let mut unit = features.to_owned();
    for (mut row, &norm) in unit.axis_iter_mut(Axis(0)).zip(norms.iter()) {
        row.mapv_inplace(|v| v / norm);
    }
    (unit, norms)
}

/// Pairwise cosine similarity, clamped to at most 1.
pub fn cosine_matrix(features: ArrayView2<'_, f64>) -> Array2<f64> {
    let (unit, _) = unit_rows(features);
    let n = unit.nrows();
    let mut cos = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let c = unit.row(i).dot(&unit.row(j)).min(1.0);
            cos[[i, j]] = c;
            cos[[j, i]] = c;
        }
    }
    cos
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "k must satisfy 1 <= k < n, got k = {k}, n = {n}"
        )));
    }
    Ok(())
}

fn knn_from_cosine(cos: &Array2<f64>, k: usize) -> KnnTopology {
    let n = cos.nrows();
    let mut selected = vec![false; n * n];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        order.sort_by(|&a, &b| cos[[i, b]].total_cmp(&cos[[i, a]]).then(a.cmp(&b)));
        for &j in order.iter().take(k) {
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            selected[lo * n + hi] = true;
        }
    }
    let pairs = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|&(i, j)| selected[i * n + j])
        .collect();
    KnnTopology { n, pairs }
}

/// Edge selection only: each node links its `k` most cosine-similar other
/// nodes, lower index first on ties; the union of those directed links.
pub fn knn_topology(batch: &EmbeddingBatch, k: usize) -> Result<KnnTopology> {
    check_k(batch.len(), k)?;
    Ok(knn_from_cosine(&cosine_matrix(batch.features()), k))
}

/// Weights the edges of a fixed topology by clamped cosine similarity.
pub fn graph_on_topology(batch: &EmbeddingBatch, topology: &KnnTopology) -> Result<LatentGraph> {
    if topology.n != batch.len() {
        return Err(Error::InvalidInput(format!(
            "topology over {} nodes applied to {} embeddings",
            topology.n,
            batch.len()
        )));
    }
    let cos = cosine_matrix(batch.features());
    Ok(weighted(&cos, topology, batch.labels().to_vec()))
}

fn weighted(cos: &Array2<f64>, topology: &KnnTopology, labels: Vec<usize>) -> LatentGraph {
    let n = topology.n;
    let mut adjacency = Array2::zeros((n, n));
    for &(i, j) in &topology.pairs {
        let w = cos[[i, j]].max(EDGE_FLOOR);
        adjacency[[i, j]] = w;
        adjacency[[j, i]] = w;
    }
    LatentGraph { adjacency, labels }
}

/// Builds the latent geometry graph of `batch`.
pub fn build_knn_graph(batch: &EmbeddingBatch, k: usize) -> Result<LatentGraph> {
    check_k(batch.len(), k)?;
    let cos = cosine_matrix(batch.features());
    let topology = knn_from_cosine(&cos, k);
    Ok(weighted(&cos, &topology, batch.labels().to_vec()))
}

/// `L = I − D^{-1/2} A D^{-1/2}`, with `D^{-1/2}` taken as 0 on isolated nodes.
pub fn normalized_laplacian(g: &LatentGraph) -> Laplacian {
    let a = &g.adjacency;
    let n = a.nrows();
    let degrees = a.sum_axis(Axis(1));
    let inv_sqrt = degrees.mapv(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            l[[i, j]] = delta - inv_sqrt[i] * a[[i, j]] * inv_sqrt[j];
        }
    }
    let lt = l.t().to_owned();
    let matrix = (l + lt) * 0.5;
    Laplacian { matrix, degrees }
}

/// Number of components among edges with weight strictly above `threshold`.
pub fn connected_components(g: &LatentGraph, threshold: f64) -> usize {
    let n = g.node_count();
    let mut parent: Vec<usize> = (0..n).collect();

    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    let mut components = n;
    for i in 0..n {
        for j in (i + 1)..n {
            if g.adjacency[[i, j]] > threshold {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                    components -= 1;
                }
            }
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn batch(features: Array2<f64>) -> EmbeddingBatch {
        let n = features.nrows();
        EmbeddingBatch::new(features, vec![0; n]).unwrap()
    }

    #[test]
    fn orthogonal_vectors_link_lowest_index() {
        let g = build_knn_graph(&batch(Array2::eye(3)), 1).unwrap();
        let a = g.adjacency();
        // 0 -> 1, 1 -> 0, 2 -> 0
        assert_eq!(a[[0, 1]], EDGE_FLOOR);
        assert_eq!(a[[0, 2]], EDGE_FLOOR);
        assert_eq!(a[[1, 2]], 0.0);
    }

    #[test]
    fn identical_vectors_make_complete_graph() {
        let f = Array2::from_shape_fn((5, 3), |(_, j)| (j + 1) as f64);
        let g = build_knn_graph(&batch(f), 4).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j { 0.0 } else { 1.0 };
                assert!((g.adjacency()[[i, j]] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn four_points_pair_up() {
        let f = array![[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]];
        let g = build_knn_graph(&batch(f.clone()), 1).unwrap();
        let a = g.adjacency();
        let cos01 = 0.9 / (0.9f64 * 0.9 + 0.01).sqrt();
        assert!((a[[0, 1]] - cos01).abs() < 1e-15);
        assert!((a[[2, 3]] - cos01).abs() < 1e-15);
        for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            assert_eq!(a[[i, j]], 0.0);
        }
    }

    #[test]
    fn rejects_bad_k_and_non_finite() {
        let b = batch(Array2::eye(3));
        assert!(matches!(build_knn_graph(&b, 3), Err(Error::InvalidParameter(_))));
        assert!(matches!(build_knn_graph(&b, 0), Err(Error::InvalidParameter(_))));
        let bad = EmbeddingBatch::new(array![[1.0, f64::NAN]], vec![0]);
        assert!(matches!(bad, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn zero_norm_rows_are_allowed() {
        let f = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let g = build_knn_graph(&batch(f), 1).unwrap();
        assert!(g.adjacency().iter().all(|v| v.is_finite()));
        assert_eq!(g.adjacency()[[0, 1]], EDGE_FLOOR);
    }

    #[test]
    fn laplacian_of_single_edge() {
        let g = LatentGraph::new(array![[0.0, 1.0], [1.0, 0.0]], vec![0, 1]).unwrap();
        let l = normalized_laplacian(&g);
        assert_eq!(l.matrix(), array![[1.0, -1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn isolated_nodes_give_identity() {
        let g = LatentGraph::new(Array2::zeros((3, 3)), vec![0, 1, 2]).unwrap();
        assert_eq!(normalized_laplacian(&g).matrix(), Array2::<f64>::eye(3));
    }

    #[test]
    fn component_counts() {
        let mut a = Array2::zeros((6, 6));
        for (i, j) in [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)] {
            a[[i, j]] = 1.0;
            a[[j, i]] = 1.0;
        }
        let g = LatentGraph::new(a, vec![0; 6]).unwrap();
        assert_eq!(connected_components(&g, 0.0), 2);

        let complete = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 0.0 } else { 0.5 });
        let g = LatentGraph::new(complete, vec![0; 4]).unwrap();
        assert_eq!(connected_components(&g, 0.0), 1);
        assert_eq!(connected_components(&g, 0.5), 4);

        let g = LatentGraph::new(Array2::zeros((5, 5)), vec![0; 5]).unwrap();
        assert_eq!(connected_components(&g, 0.0), 5);
    }

    #[test]
    fn graph_validation() {
        assert!(LatentGraph::new(array![[0.0, 0.5], [0.4, 0.0]], vec![0, 0]).is_err());
        assert!(LatentGraph::new(array![[1.0, 0.0], [0.0, 0.0]], vec![0, 0]).is_err());
        assert!(LatentGraph::new(array![[0.0, 1.5], [1.5, 0.0]], vec![0, 0]).is_err());
    }
}

//! Eigengap loss on a latent geometry graph and its gradient.
//!
//! For ascending Laplacian eigenvalues `λ` and a target community count `g`:
//!
//! ```text
//! ℓ = −λ_{g+1} + Σ_{j≤g} λ_j
//! ```
//!
//! The gradient is taken with the k-NN edge selection held fixed and chains
//! through four stages:
//!
//! ```text
//! dℓ/dL   = Σ_j s_j u_j u_jᵀ,   s_j = +1 (j ≤ g), −1 (j = g+1), 0 otherwise
//! N       = D^{-1/2} A D^{-1/2},   L = I − N
//! w_ij    = max(ε_w, cos(z_i, z_j))
//! cos     = ẑ_i · ẑ_j
//! ```

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::graph::{
    cosine_matrix, graph_on_topology, knn_topology, normalized_laplacian, unit_rows,
    EmbeddingBatch, KnnTopology, EDGE_FLOOR, NORM_FLOOR,
};
use crate::spectral::eigh::eigh;

/// Gaps below this at the loss's cut are reported as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// `−λ_{g+1} + Σ_{j≤g} λ_j` over ascending `eigenvalues`.
pub fn casper_loss(eigenvalues: ArrayView1<'_, f64>, g: usize) -> Result<f64> {
    let n = eigenvalues.len();
    if g == 0 || g + 1 > n {
        return Err(Error::InvalidParameter(format!(
            "eigengap index g = {g} needs 1 <= g < n = {n}"
        )));
    }
    let head: f64 = eigenvalues.iter().take(g).sum();
    Ok(head - eigenvalues[g])
}

/// Loss, embedding gradient and the spectrum it was computed from.
#[derive(Debug, Clone)]
pub struct CasperGradient {
    pub loss: f64,
    /// Same shape as the input features.
    pub grad: Array2<f64>,
    pub eigenvalues: Array1<f64>,
    /// Set when an eigenvalue at the cut (`g` or `g+1`) is repeated within
    /// [`DEGENERACY_TOL`]; the gradient is then a subgradient.
    pub degenerate: bool,
}

fn is_degenerate(eigenvalues: ArrayView1<'_, f64>, g: usize) -> bool {
    let n = eigenvalues.len();
    let lower = eigenvalues[g] - eigenvalues[g - 1] < DEGENERACY_TOL;
    let upper = g + 2 <= n && eigenvalues[g + 1] - eigenvalues[g] < DEGENERACY_TOL;
    lower || upper
}

/// Loss of the graph built on `topology`, with weights recomputed from
/// `batch`. Holding the topology fixed makes this a smooth function of the
/// features away from degeneracies; finite-difference checks go through here.
pub fn casper_loss_on_topology(
    batch: &EmbeddingBatch,
    topology: &KnnTopology,
    g: usize,
) -> Result<f64> {
    let graph = graph_on_topology(batch, topology)?;
    let lap = normalized_laplacian(&graph);
    let dec = eigh(lap.matrix())?;
    casper_loss(dec.eigenvalues(), g)
}

/// Loss and gradient for the k-NN graph of `batch`.
pub fn casper_loss_and_grad(batch: &EmbeddingBatch, k: usize, g: usize) -> Result<CasperGradient> {
    let topology = knn_topology(batch, k)?;
    casper_grad_on_topology(batch, &topology, g)
}

/// As [`casper_loss_and_grad`] with the edge set supplied.
pub fn casper_grad_on_topology(
    batch: &EmbeddingBatch,
    topology: &KnnTopology,
    g: usize,
) -> Result<CasperGradient> {
    let n = batch.len();
    if g == 0 || g + 1 > n {
        return Err(Error::InvalidParameter(format!(
            "eigengap index g = {g} needs 1 <= g < n = {n}"
        )));
    }
    let features = batch.features();
    let cos = cosine_matrix(features);
    let graph = graph_on_topology(batch, topology)?;
    let lap = normalized_laplacian(&graph);
    let dec = eigh(lap.matrix())?;
    let eigenvalues = dec.eigenvalues().to_owned();
    let loss = casper_loss(eigenvalues.view(), g)?;
    let degenerate = is_degenerate(eigenvalues.view(), g);

    // dℓ/dN = −dℓ/dL
    let u = dec.eigenvectors();
    let head = u.slice(ndarray::s![.., ..g]);
    let cut = u.column(g);
    let mut dn = -head.dot(&head.t());
    for i in 0..n {
        for j in 0..n {
            dn[[i, j]] += cut[i] * cut[j];
        }
    }

    let a = graph.adjacency();
    let degrees = lap.degrees();
    let inv_sqrt = degrees.mapv(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });
    let d_degree = Array1::from_shape_fn(n, |i| {
        if degrees[i] > 0.0 {
            let s: f64 = (0..n).map(|j| dn[[i, j]] * a[[i, j]] * inv_sqrt[j]).sum();
            -inv_sqrt[i].powi(3) * s
        } else {
            0.0
        }
    });

    // Gradient on each undirected edge's cosine.
    let mut d_cos = Array2::<f64>::zeros((n, n));
    for &(i, j) in topology.pairs() {
        let c = cos[[i, j]];
        if c <= EDGE_FLOOR {
            continue;
        }
        let dw = 2.0 * dn[[i, j]] * inv_sqrt[i] * inv_sqrt[j] + d_degree[i] + d_degree[j];
        d_cos[[i, j]] = dw;
        d_cos[[j, i]] = dw;
    }

    let grad = cosine_backward(features, &cos, &d_cos);

    Ok(CasperGradient {
        loss,
        grad,
        eigenvalues,
        degenerate,
    })
}

/// Pulls a symmetric gradient on pairwise cosines back to the rows of
/// `features`.
fn cosine_backward(
    features: ArrayView2<'_, f64>,
    cos: &Array2<f64>,
    d_cos: &Array2<f64>,
) -> Array2<f64> {
    let (unit, norms) = unit_rows(features);
    let raw = features.map_axis(Axis(1), |row| row.dot(&row).sqrt());
    let mut grad = d_cos.dot(&unit);
    for i in 0..features.nrows() {
        let mut row = grad.row_mut(i);
        if raw[i] > NORM_FLOOR {
            let radial: f64 = (0..cos.ncols()).map(|j| d_cos[[i, j]] * cos[[i, j]]).sum();
            row.scaled_add(-radial, &unit.row(i));
        }
        row.mapv_inplace(|v| v / norms[i]);
    }
    grad
}

//! Functional maps between the latent graphs of one point set at two
//! checkpoints.
//!
//! With `φ^a`, `φ^b` the Laplacian eigenvectors of the two graphs and `T` a
//! node correspondence, `C[i][j] = Σ_v φ^a_i(v) · φ^b_j(T(v))`. A map close to
//! diagonal means the latent geometry barely moved between checkpoints.

use std::fs;
use std::path::Path;

use log::warn;
use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_knn_graph, normalized_laplacian, EmbeddingBatch};
use crate::spectral::{eigh, SpectralDecomposition};

/// Consecutive eigenvalues closer than this make the map block-ambiguous.
pub const EIGEN_TIE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalMap {
    matrix: Array2<f64>,
}

impl FunctionalMap {
    /// Wraps a square matrix.
    pub fn from_matrix(matrix: Array2<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "functional map must be square and non-empty, got {:?}",
                matrix.dim()
            )));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn rank(&self) -> usize {
        self.matrix.nrows()
    }

    /// Entry-wise magnitudes.
    pub fn magnitudes(&self) -> Array2<f64> {
        self.matrix.mapv(f64::abs)
    }
}

/// Map between the first `r` eigenvectors of `a` and `b`, where node `v` of
/// graph `a` corresponds to node `correspondence[v]` of graph `b`.
pub fn functional_map(
    a: &SpectralDecomposition,
    b: &SpectralDecomposition,
    correspondence: &[usize],
    r: usize,
) -> Result<FunctionalMap> {
    let n = a.len();
    if b.len() != n {
        return Err(Error::InvalidInput(format!("graphs have {n} and {} nodes", b.len())));
    }
    if correspondence.len() != n {
        return Err(Error::InvalidInput(format!(
            "correspondence has {} entries for {n} nodes",
            correspondence.len()
        )));
    }
    let mut hit = vec![false; n];
    for &t in correspondence {
        if t >= n || std::mem::replace(&mut hit[t], true) {
            return Err(Error::InvalidInput("correspondence is not a permutation".into()));
        }
    }
    if r == 0 || r > n {
        return Err(Error::InvalidParameter(format!("rank must be in 1..={n}, got {r}")));
    }
    let phi_a = a.eigenvectors();
    let phi_b = b.eigenvectors().select(Axis(0), correspondence);
    let c = phi_a.slice(ndarray::s![.., ..r]).t().dot(&phi_b.slice(ndarray::s![.., ..r]));
    FunctionalMap::from_matrix(c)
}

/// `Σ_{i≠j} |c_ij| / ‖C‖_F`.
pub fn off_diagonal_energy(c: &FunctionalMap) -> Result<f64> {
    let m = c.matrix();
    let frob = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    if frob == 0.0 {
        return Err(Error::InvalidInput("functional map is all zeros".into()));
    }
    let off: f64 = m
        .indexed_iter()
        .filter(|((i, j), _)| i != j)
        .map(|(_, v)| v.abs())
        .sum();
    Ok(off / frob)
}

/// Indices `i < r - 1` with `λ_{i+1} − λ_i < EIGEN_TIE_TOL`.
pub fn degenerate_indices(eigenvalues: ArrayView1<'_, f64>, r: usize) -> Vec<usize> {
    let r = r.min(eigenvalues.len());
    (0..r.saturating_sub(1))
        .filter(|&i| eigenvalues[i + 1] - eigenvalues[i] < EIGEN_TIE_TOL)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmapMeta {
    pub off_diagonal_energy: f64,
    /// Effective rank: the requested one capped at the node count.
    pub rank: usize,
    pub threshold: f64,
    pub k: usize,
    pub nodes: usize,
    pub degenerate_a: Vec<usize>,
    pub degenerate_b: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmapReport {
    /// `|C|`, unthresholded.
    pub magnitude: Array2<f64>,
    /// `|C|` with entries below the threshold zeroed.
    pub display: Array2<f64>,
    pub meta: FmapMeta,
}

fn decompose(batch: &EmbeddingBatch, k: usize) -> Result<SpectralDecomposition> {
    let g = build_knn_graph(batch, k)?;
    eigh(normalized_laplacian(&g).matrix())
}

/// Compares the latent graphs of the same ordered points at two checkpoints
/// under the identity correspondence. `k` and `r` are capped at `n − 1` and
/// `n`.
pub fn fmap_report(
    a: &EmbeddingBatch,
    b: &EmbeddingBatch,
    k: usize,
    r: usize,
    threshold: f64,
) -> Result<FmapReport> {
    if a.labels() != b.labels() {
        return Err(Error::InvalidInput("snapshots do not share the same labelled points".into()));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 points, got {n}")));
    }
    if k == 0 || r == 0 {
        return Err(Error::InvalidParameter("k and r must be positive".into()));
    }
    let k = k.min(n - 1);
    let r = r.min(n);
    let dec_a = decompose(a, k)?;
    let dec_b = decompose(b, k)?;
    let identity: Vec<usize> = (0..n).collect();
    let c = functional_map(&dec_a, &dec_b, &identity, r)?;
    let meta = FmapMeta {
        off_diagonal_energy: off_diagonal_energy(&c)?,
        rank: r,
        threshold,
        k,
        nodes: n,
        degenerate_a: degenerate_indices(dec_a.eigenvalues(), r),
        degenerate_b: degenerate_indices(dec_b.eigenvalues(), r),
    };
    if !meta.degenerate_a.is_empty() || !meta.degenerate_b.is_empty() {
        warn!(
            "near-repeated eigenvalues among the first {r} (a: {:?}, b: {:?}); the map is ambiguous there",
            meta.degenerate_a, meta.degenerate_b
        );
    }
    let magnitude = c.magnitudes();
    let display = magnitude.mapv(|v| if v < threshold { 0.0 } else { v });
    Ok(FmapReport { magnitude, display, meta })
}

fn write_matrix(m: &Array2<f64>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl FmapReport {
    /// Writes `fmap.csv`, `fmap_display.csv` and `fmap_meta.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_matrix(&self.magnitude, &dir.join("fmap.csv"))?;
        write_matrix(&self.display, &dir.join("fmap_display.csv"))?;
        let meta = dir.join("fmap_meta.json");
        fs::write(&meta, serde_json::to_string_pretty(&self.meta)?).map_err(|e| Error::io(&meta, e))
    }
}

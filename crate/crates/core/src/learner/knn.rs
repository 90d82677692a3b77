use std::collections::BTreeMap;

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Majority vote among the `k` Euclidean-nearest supports of each query.
///
/// Neighbours are ranked by distance, then support index. A tied vote goes
/// to the label with the smallest summed neighbour distance, then to the
/// lowest label.
pub fn knn_classify(
    support_features: ArrayView2<'_, f64>,
    support_labels: &[usize],
    query_features: ArrayView2<'_, f64>,
    k: usize,
) -> Result<Vec<usize>> {
    let m = support_features.nrows();
    if m == 0 {
        return Err(Error::InvalidInput("k-NN support set is empty".into()));
    }
    if support_labels.len() != m {
        return Err(Error::InvalidInput(format!(
            "{} support labels for {m} support rows",
            support_labels.len()
        )));
    }
    if support_features.ncols() != query_features.ncols() {
        return Err(Error::InvalidInput(format!(
            "support width {} differs from query width {}",
            support_features.ncols(),
            query_features.ncols()
        )));
    }
    if k == 0 || k.is_multiple_of(2) || k > m {
        return Err(Error::InvalidParameter(format!(
            "k must be odd and in 1..={m}, got {k}"
        )));
    }

    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(m);
    let mut out = Vec::with_capacity(query_features.nrows());
    for query in query_features.rows() {
        dist.clear();
        dist.extend(support_features.rows().into_iter().enumerate().map(|(i, s)| {
            let d2: f64 = s.iter().zip(query.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2.sqrt(), i)
        }));
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut votes: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
        for &(d, i) in dist.iter().take(k) {
            let e = votes.entry(support_labels[i]).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += d;
        }
        let (&label, _) = votes
            .iter()
            .min_by(|(la, a), (lb, b)| {
                b.0.cmp(&a.0)
                    .then(a.1.total_cmp(&b.1))
                    .then(la.cmp(lb))
            })
            .expect("k >= 1 neighbours");
        out.push(label);
    }
    Ok(out)
}

use std::collections::HashMap;
use std::hash::Hash;

use nalgebra::DMatrix;

use super::ols::xtx_inverse;
use crate::error::{domain, Result};

/// Cluster-robust (CR1) covariance of least-squares coefficients:
///
/// ```text
/// V = c · (X'X)⁻¹ (Σ_g X_g' u_g u_g' X_g) (X'X)⁻¹,   c = G/(G−1) · (N−1)/(N−K)
/// ```
///
/// `K` is the number of columns of `design`; for a demeaned design this
/// counts slopes only.
pub fn cluster_robust_vcov<K: Hash + Eq + Clone>(
    design: &DMatrix<f64>,
    residuals: &[f64],
    cluster_ids: &[K],
) -> Result<DMatrix<f64>> {
    let bread = xtx_inverse(design)?;
    Ok(sandwich(design, residuals, cluster_ids, &bread)?.0)
}

/// CR1 sandwich with a precomputed bread. Returns the matrix and the number
/// of clusters.
pub(crate) fn sandwich<K: Hash + Eq + Clone>(
    design: &DMatrix<f64>,
    residuals: &[f64],
    cluster_ids: &[K],
    bread: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, usize)> {
    let (n, k) = design.shape();
    if residuals.len() != n || cluster_ids.len() != n {
        return Err(domain(format!(
            "design has {n} rows, residuals {} and cluster ids {}",
            residuals.len(),
            cluster_ids.len()
        )));
    }
    let mut index: HashMap<K, usize> = HashMap::new();
    let group_of: Vec<usize> = cluster_ids
        .iter()
        .map(|id| {
            let next = index.len();
            *index.entry(id.clone()).or_insert(next)
        })
        .collect();
    let g = index.len();
    if g < 2 {
        return Err(domain(format!(
            "cluster-robust variance needs at least 2 clusters, found {g}"
        )));
    }
    if n <= k {
        return Err(domain(format!(
            "cluster-robust variance needs more observations ({n}) than columns ({k})"
        )));
    }

    let mut scores = DMatrix::<f64>::zeros(g, k);
    for (i, (&grp, &u)) in group_of.iter().zip(residuals).enumerate() {
        for j in 0..k {
            scores[(grp, j)] += design[(i, j)] * u;
        }
    }
    let meat = scores.transpose() * &scores;
    let (gf, nf, kf) = (g as f64, n as f64, k as f64);
    let factor = gf / (gf - 1.0) * (nf - 1.0) / (nf - kf);
    let v = bread * meat * bread * factor;
    Ok(((&v + v.transpose()) * 0.5, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_two_cluster_fixture() {
        // X = (1, 2, 3)', u = (1, -1, 2), clusters {a, a, b}.
        // X'X = 14; scores: a -> 1 - 2 = -1, b -> 6; meat = 37.
        // CR1 factor = 2/1 · 2/2 = 2, so V = 2 · 37 / 196 = 37/98.
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let v = cluster_robust_vcov(&x, &[1.0, -1.0, 2.0], &["a", "a", "b"]).unwrap();
        assert!((v[(0, 0)] - 37.0 / 98.0).abs() < 1e-12);
    }

    #[test]
    fn singleton_clusters_match_hc1() {
        let x = DMatrix::from_row_slice(
            5,
            2,
            &[
                1.0, 0.5, //
                1.0, -1.0, //
                1.0, 2.0, //
                1.0, 3.5, //
                1.0, 0.0,
            ],
        );
        let u = [0.3, -1.2, 0.8, 0.1, -0.4];
        let ids: Vec<usize> = (0..5).collect();
        let v = cluster_robust_vcov(&x, &u, &ids).unwrap();

        let bread = xtx_inverse(&x).unwrap();
        let mut meat = DMatrix::zeros(2, 2);
        for (i, ui) in u.iter().enumerate() {
            let xi = x.row(i).transpose();
            meat += &xi * xi.transpose() * (ui * ui);
        }
        let hc1 = &bread * meat * &bread * (5.0 / 3.0);
        assert!((v - hc1).amax() < 1e-12);
    }

    #[test]
    fn single_cluster_is_an_error() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let err = cluster_robust_vcov(&x, &[1.0, 2.0, 3.0], &[1, 1, 1]).unwrap_err();
        assert!(err.to_string().contains("at least 2 clusters"));
        assert!(cluster_robust_vcov(&x, &[1.0, 2.0], &[1, 2]).is_err());
    }
}

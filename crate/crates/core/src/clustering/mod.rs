//! Meta-class generation: grouping leaf labels into K meta-classes.
//!
//! Two routes are provided. The geometric route runs K-Means (K chosen by
//! silhouette), seeds a Gaussian mixture with the centroids and assigns each
//! label to its most responsible component. The topical route counts density
//! clusters with OPTICS, fits that many LDA topics over per-label documents
//! and assigns labels to topics by the entropy of their similarity profile.

mod entropy;
mod gmm;
mod kmeans;
mod lda;
mod meta;
mod optics;

pub use entropy::{entropy_assign, entropy_choice, entropy_term, topic_centroids, topic_distribution, AssignRule};
pub use gmm::{gmm_em, CovarianceType, GmmModel, GmmParams};
pub use kmeans::{kmeans, pick_best_k, select_k, silhouette_mean, silhouette_samples, KMeansModel, KMeansParams};
pub use lda::{lda_fit, LdaParams, TopicModel};
pub use meta::{
    build_meta_map, label_vectors_from_documents, label_vectors_from_names, LabelAssignment, LabelDiagnostics,
    LabelVector, LabelVectorSource, MetaClassMap, MetaInputs, MetaMethod,
};
pub use optics::{optics, OpticsParams, OpticsResult};

/// Adjusted Rand index between two partitions of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "partitions must cover the same items");
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let pairs = |n: u64| (n * n.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&n| pairs(n)).sum();
    let rows: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| pairs(table.iter().map(|r| r[j]).sum())).sum();
    let total = pairs(a.len() as u64);
    let expected = rows * cols / total;
    let max = (rows + cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Project centred vectors onto their leading principal components
/// (power iteration with deflation).
pub fn pca_project(points: &[Vec<f64>], components: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::Rng as _;
    let n = points.len();
    let d = points.first().map_or(0, Vec::len);
    let components = components.min(d);
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n.max(1) as f64).collect();
    let centred: Vec<Vec<f64>> = points.iter().map(|p| p.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for p in &centred {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += p[i] * p[j];
            }
        }
    }
    let mut rng = crate::util::seeded_rng(seed);
    let mut axes: Vec<Vec<f64>> = Vec::new();
    for _ in 0..components {
        let mut v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut lambda = 0.0;
        for _ in 0..500 {
            let mut w: Vec<f64> = (0..d).map(|i| (0..d).map(|j| cov[i][j] * v[j]).sum()).collect();
            for a in &axes {
                let dot: f64 = w.iter().zip(a).map(|(x, y)| x * y).sum();
                w.iter_mut().zip(a).for_each(|(x, y)| *x -= dot * y);
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            w.iter_mut().for_each(|x| *x /= norm);
            let converged = (norm - lambda).abs() <= 1e-12 * norm.max(1.0);
            lambda = norm;
            v = w;
            if converged {
                break;
            }
        }
        axes.push(v);
    }
    centred
        .iter()
        .map(|p| axes.iter().map(|a| p.iter().zip(a).map(|(x, y)| x * y).sum()).collect())
        .collect()
}

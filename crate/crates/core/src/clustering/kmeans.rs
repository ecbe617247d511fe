use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{derive_seed, euclidean, seeded_rng, squared_euclidean};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansParams {
    pub max_iter: usize,
    /// Stop once the summed squared centroid shift falls to this value.
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest final inertia wins.
    pub n_init: usize,
    pub seed: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            max_iter: 300,
            tol: 1e-12,
            n_init: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
}

impl KMeansModel {
    /// Model whose centroids are the means of a given hard partition.
    pub fn from_assignments(points: &[Vec<f64>], assignments: &[usize], k: usize) -> Result<Self> {
        if points.len() != assignments.len() {
            return Err(Error::LengthMismatch(points.len(), assignments.len()));
        }
        if let Some(&bad) = assignments.iter().find(|&&a| a >= k) {
            return Err(Error::InvalidParameter(format!("cluster id {bad} out of range for K={k}")));
        }
        let centroids = means(points, assignments, k);
        if let Some(empty) = cluster_sizes(assignments, k).iter().position(|&s| s == 0) {
            return Err(Error::Clustering(format!("cluster {empty} is empty")));
        }
        let inertia = inertia(points, assignments, &centroids);
        Ok(KMeansModel {
            k,
            centroids,
            assignments: assignments.to_vec(),
            inertia,
            inertia_trace: vec![inertia],
        })
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        cluster_sizes(&self.assignments, self.k)
    }
}

pub(crate) fn cluster_sizes(assignments: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    sizes
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let d = points.first().map_or(0, Vec::len);
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Clustering("vectors have differing dimensions".into()));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Clustering("non-finite coordinate".into()));
    }
    Ok(d)
}

fn means(points: &[Vec<f64>], assignments: &[usize], k: usize) -> Vec<Vec<f64>> {
    let d = points.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    sums
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_euclidean(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn inertia(points: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| squared_euclidean(p, &centroids[a]))
        .sum()
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut crate::util::Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_euclidean(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut x = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if x < w {
                    pick = i;
                    break;
                }
                x -= w;
            }
            pick
        } else {
            // all remaining mass at existing centroids (duplicate points)
            rng.random_range(0..points.len())
        };
        centroids.push(points[next].clone());
        for (di, p) in d2.iter_mut().zip(points) {
            *di = di.min(squared_euclidean(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

/// Move the point farthest from its centroid (among clusters with more than
/// one member) into each empty cluster.
fn repair_empty(points: &[Vec<f64>], assignments: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    loop {
        let sizes = cluster_sizes(assignments, k);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let victim = (0..points.len())
            .filter(|&i| sizes[assignments[i]] > 1)
            .max_by(|&a, &b| {
                let da = squared_euclidean(&points[a], &centroids[assignments[a]]);
                let db = squared_euclidean(&points[b], &centroids[assignments[b]]);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("K <= n guarantees a donor cluster");
        log::debug!("k-means: cluster {empty} empty, moving point {victim}");
        assignments[victim] = empty;
        centroids[empty] = points[victim].clone();
    }
}

fn lloyd(points: &[Vec<f64>], k: usize, params: &KMeansParams, seed: u64) -> KMeansModel {
    let mut rng = seeded_rng(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignments = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    for _ in 0..params.max_iter.max(1) {
        let mut changed = false;
        for (a, p) in assignments.iter_mut().zip(points) {
            let (j, _) = nearest(p, &centroids);
            changed |= *a != j;
            *a = j;
        }
        repair_empty(points, &mut assignments, &mut centroids);
        trace.push(inertia(points, &assignments, &centroids));
        if !changed {
            break;
        }
        let updated = means(points, &assignments, k);
        let shift: f64 = updated.iter().zip(&centroids).map(|(a, b)| squared_euclidean(a, b)).sum();
        centroids = updated;
        if shift <= params.tol {
            for (a, p) in assignments.iter_mut().zip(points) {
                *a = nearest(p, &centroids).0;
            }
            repair_empty(points, &mut assignments, &mut centroids);
            trace.push(inertia(points, &assignments, &centroids));
            break;
        }
    }
    let inertia = *trace.last().unwrap();
    KMeansModel {
        k,
        centroids,
        assignments,
        inertia,
        inertia_trace: trace,
    }
}

/// Lloyd's algorithm with k-means++ seeding, best of `n_init` restarts.
pub fn kmeans(points: &[Vec<f64>], k: usize, params: &KMeansParams) -> Result<KMeansModel> {
    check_points(points)?;
    if k == 0 || k > points.len() {
        return Err(Error::Clustering(format!(
            "K={k} is not in [1, {}] (number of vectors)",
            points.len()
        )));
    }
    let mut best: Option<KMeansModel> = None;
    for run in 0..params.n_init.max(1) {
        let model = lloyd(points, k, params, derive_seed(params.seed, &format!("kmeans-{run}")));
        if best.as_ref().is_none_or(|b| model.inertia < b.inertia) {
            best = Some(model);
        }
    }
    Ok(best.unwrap())
}

/// Per-point silhouette coefficients (Euclidean). Points in singleton
/// clusters get 0.
pub fn silhouette_samples(points: &[Vec<f64>], assignments: &[usize]) -> Result<Vec<f64>> {
    if points.len() != assignments.len() {
        return Err(Error::LengthMismatch(points.len(), assignments.len()));
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let sizes = cluster_sizes(assignments, k);
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::Clustering("silhouette needs at least two non-empty clusters".into()));
    }
    let mut out = Vec::with_capacity(points.len());
    let mut sums = vec![0.0; k];
    for (i, p) in points.iter().enumerate() {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (q, &b) in points.iter().zip(assignments) {
            sums[b] += euclidean(p, q);
        }
        let own = assignments[i];
        if sizes[own] == 1 {
            out.push(0.0);
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        out.push(if denom > 0.0 { (b - a) / denom } else { 0.0 });
    }
    Ok(out)
}

pub fn silhouette_mean(points: &[Vec<f64>], assignments: &[usize]) -> Result<f64> {
    let s = silhouette_samples(points, assignments)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// The K with the highest score; exact ties go to the smaller K.
pub fn pick_best_k(scores: &[(usize, f64)]) -> Option<usize> {
    let mut sorted = scores.to_vec();
    sorted.sort_by_key(|&(k, _)| k);
    let mut best: Option<(usize, f64)> = None;
    for (k, s) in sorted {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    best.map(|(k, _)| k)
}

/// Choose K in `k_range` by mean silhouette. Returns K* and every
/// `(K, silhouette)` that was evaluated.
pub fn select_k(
    points: &[Vec<f64>],
    k_range: std::ops::RangeInclusive<usize>,
    params: &KMeansParams,
) -> Result<(usize, Vec<(usize, f64)>)> {
    if k_range.is_empty() || *k_range.start() < 2 {
        return Err(Error::InvalidParameter(format!(
            "K range {}..={} must be non-empty and start at 2 or more",
            k_range.start(),
            k_range.end()
        )));
    }
    let mut scores = Vec::new();
    for k in k_range {
        let model = kmeans(points, k, params)?;
        let s = silhouette_mean(points, &model.assignments)?;
        log::debug!("select_k: K={k} silhouette={s:.4}");
        scores.push((k, s));
    }
    Ok((pick_best_k(&scores).unwrap(), scores))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    /// `n` points per centre with isotropic Gaussian noise.
    pub(crate) fn blobs(centres: &[Vec<f64>], n: usize, spread: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = seeded_rng(seed);
        let noise = Normal::new(0.0, spread).unwrap();
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (c, centre) in centres.iter().enumerate() {
            for _ in 0..n {
                pts.push(centre.iter().map(|x| x + noise.sample(&mut rng)).collect());
                truth.push(c);
            }
        }
        (pts, truth)
    }

    #[test]
    fn two_tight_pairs() {
        let pts = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 0.0], vec![10.0, 1.0]];
        let m = kmeans(&pts, 2, &KMeansParams::default()).unwrap();
        let mut c = m.centroids.clone();
        c.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(c, vec![vec![0.0, 0.5], vec![10.0, 0.5]]);
        assert_eq!(m.assignments[0], m.assignments[1]);
        assert_ne!(m.assignments[0], m.assignments[2]);
    }

    #[test]
    fn duplicated_points_give_same_centroids() {
        let (pts, _) = blobs(&[vec![0.0, 0.0], vec![8.0, 8.0], vec![-8.0, 8.0]], 10, 1.0, 4);
        let twice: Vec<Vec<f64>> = pts.iter().chain(pts.iter()).cloned().collect();
        let sort = |mut c: Vec<Vec<f64>>| {
            c.sort_by(|a, b| a[0].total_cmp(&b[0]));
            c
        };
        let a = sort(kmeans(&pts, 3, &KMeansParams::default()).unwrap().centroids);
        let b = sort(kmeans(&twice, 3, &KMeansParams::default()).unwrap().centroids);
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn inertia_trace_non_increasing_and_fixed_point() {
        let mut rng = seeded_rng(0);
        let pts: Vec<Vec<f64>> = (0..200).map(|_| (0..5).map(|_| rng.random::<f64>()).collect()).collect();
        let m = kmeans(&pts, 6, &KMeansParams { n_init: 1, ..KMeansParams::default() }).unwrap();
        for w in m.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", m.inertia_trace);
        }
        for (p, &a) in pts.iter().zip(&m.assignments) {
            assert_eq!(nearest(p, &m.centroids).0, a);
        }
        assert!(m.cluster_sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn too_many_clusters_is_an_error() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(kmeans(&pts, 3, &KMeansParams::default()).is_err());
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let pts = vec![vec![1.0, 1.0]; 5];
        let m = kmeans(&pts, 3, &KMeansParams::default()).unwrap();
        assert!(m.cluster_sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn silhouette_far_blobs() {
        let (pts, truth) = blobs(&[vec![0.0, 0.0], vec![100.0, 0.0]], 20, 1.0, 1);
        assert!(silhouette_mean(&pts, &truth).unwrap() > 0.9);
    }

    #[test]
    fn silhouette_definition_cases() {
        // point 1 sits exactly halfway: a = b = 1
        let pts = vec![vec![0.0], vec![1.0], vec![2.0], vec![-5.0], vec![7.0]];
        let s = silhouette_samples(&pts[..3], &[0, 0, 1]).unwrap();
        assert_eq!(s[1], 0.0);
        assert_eq!(s[2], 0.0); // singleton
        // 2 is much closer to cluster 0 than to its own cluster
        let s = silhouette_samples(&[pts[0].clone(), pts[1].clone(), pts[2].clone(), pts[4].clone(), vec![8.0]], &[0, 0, 1, 1, 1]).unwrap();
        assert!(s[2] < 0.0);
        assert!(silhouette_mean(&pts, &[0; 5]).is_err());
    }

    #[test]
    fn select_k_finds_planted_blobs() {
        let (pts, _) = blobs(&[vec![0.0, 0.0], vec![20.0, 0.0], vec![10.0, 17.0]], 15, 1.0, 9);
        let (k, scores) = select_k(&pts, 3..=10, &KMeansParams::default()).unwrap();
        assert_eq!(k, 3);
        assert_eq!(scores.len(), 8);
    }

    #[test]
    fn ties_pick_smallest_k() {
        assert_eq!(pick_best_k(&[(4, 0.5), (3, 0.5), (5, 0.2)]), Some(3));
        assert_eq!(pick_best_k(&[(3, 0.1), (4, 0.7)]), Some(4));
    }

    proptest::proptest! {
        #[test]
        fn silhouette_is_bounded(seed in 0u64..1000, n in 4usize..30, k in 2usize..4) {
            let mut rng = seeded_rng(seed);
            let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
            let assign: Vec<usize> = (0..n).map(|i| i % k).collect();
            for s in silhouette_samples(&pts, &assign).unwrap() {
                proptest::prop_assert!((-1.0..=1.0).contains(&s));
            }
        }
    }
}

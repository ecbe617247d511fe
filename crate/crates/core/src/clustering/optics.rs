//! OPTICS ordering plus ξ-steep cluster extraction.
//!
//! The extraction follows the widely used scikit-learn formulation
//! (steep areas, predecessor correction, smallest clusters first).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::euclidean;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpticsParams {
    pub min_samples: usize,
    pub xi: f64,
    /// Defaults to `min_samples`.
    pub min_cluster_size: Option<usize>,
}

impl Default for OpticsParams {
    fn default() -> Self {
        OpticsParams {
            min_samples: 5,
            xi: 0.05,
            min_cluster_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticsResult {
    pub ordering: Vec<usize>,
    /// `None` is the undefined reachability (first point of each component).
    pub reachability: Vec<Option<f64>>,
    pub core_distances: Vec<f64>,
    pub predecessor: Vec<Option<usize>>,
    /// Cluster per point; `None` is noise.
    pub labels: Vec<Option<usize>>,
    pub n_clusters: usize,
}

impl OpticsResult {
    /// ς for downstream use; zero clusters is an error there.
    pub fn require_clusters(&self) -> Result<usize> {
        if self.n_clusters == 0 {
            Err(Error::Clustering("OPTICS labelled every point as noise".into()))
        } else {
            Ok(self.n_clusters)
        }
    }
}

pub fn optics(points: &[Vec<f64>], params: &OpticsParams) -> Result<OpticsResult> {
    let n = points.len();
    if params.min_samples < 2 {
        return Err(Error::InvalidParameter("OPTICS min_samples must be at least 2".into()));
    }
    if !(params.xi > 0.0 && params.xi < 1.0) {
        return Err(Error::InvalidParameter("OPTICS xi must lie in (0, 1)".into()));
    }
    if n < params.min_samples {
        return Err(Error::Clustering(format!(
            "{n} points is fewer than min_samples={}",
            params.min_samples
        )));
    }
    let dist: Vec<Vec<f64>> = points
        .iter()
        .map(|p| points.iter().map(|q| euclidean(p, q)).collect())
        .collect();
    // k-th nearest neighbour counting the point itself
    let core: Vec<f64> = dist
        .iter()
        .map(|row| {
            let mut r = row.clone();
            r.sort_by(f64::total_cmp);
            r[params.min_samples - 1]
        })
        .collect();

    let mut reach = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut processed = vec![false; n];
    let mut ordering = Vec::with_capacity(n);
    for _ in 0..n {
        let point = (0..n)
            .filter(|&i| !processed[i])
            .min_by(|&a, &b| reach[a].total_cmp(&reach[b]).then(a.cmp(&b)))
            .unwrap();
        processed[point] = true;
        ordering.push(point);
        if core[point].is_finite() {
            for q in 0..n {
                if processed[q] {
                    continue;
                }
                let r = dist[point][q].max(core[point]);
                if r < reach[q] {
                    reach[q] = r;
                    pred[q] = Some(point);
                }
            }
        }
    }

    let plot: Vec<f64> = ordering.iter().map(|&i| reach[i]).collect();
    let pred_plot: Vec<Option<usize>> = ordering.iter().map(|&i| pred[i]).collect();
    let min_cluster_size = params.min_cluster_size.unwrap_or(params.min_samples).max(2);
    let clusters = xi_clusters(&plot, &pred_plot, &ordering, params.xi, params.min_samples, min_cluster_size);

    let mut plot_labels: Vec<Option<usize>> = vec![None; n];
    let mut n_clusters = 0;
    for (s, e) in clusters {
        if plot_labels[s..=e].iter().all(Option::is_none) {
            plot_labels[s..=e].iter_mut().for_each(|l| *l = Some(n_clusters));
            n_clusters += 1;
        }
    }
    let mut labels = vec![None; n];
    for (pos, &i) in ordering.iter().enumerate() {
        labels[i] = plot_labels[pos];
    }
    Ok(OpticsResult {
        ordering,
        reachability: reach.iter().map(|r| r.is_finite().then_some(*r)).collect(),
        core_distances: core,
        predecessor: pred,
        labels,
        n_clusters,
    })
}

fn extend_region(steep: &[bool], xward: &[bool], start: usize, min_samples: usize) -> usize {
    let mut non_xward = 0;
    let mut end = start;
    for index in start..steep.len() {
        if steep[index] {
            non_xward = 0;
            end = index;
        } else if !xward[index] {
            non_xward += 1;
            if non_xward > min_samples {
                break;
            }
        } else {
            return end;
        }
    }
    end
}

#[derive(Debug, Clone, Copy)]
struct SteepDown {
    start: usize,
    end: usize,
    mib: f64,
}

fn update_filter_sdas(sdas: Vec<SteepDown>, mib: f64, xi_complement: f64, plot: &[f64]) -> Vec<SteepDown> {
    if mib.is_infinite() {
        return Vec::new();
    }
    sdas.into_iter()
        .filter(|d| mib <= plot[d.start] * xi_complement)
        .map(|d| SteepDown { mib: d.mib.max(mib), ..d })
        .collect()
}

fn correct_predecessor(
    plot: &[f64],
    pred_plot: &[Option<usize>],
    ordering: &[usize],
    s: usize,
    mut e: usize,
) -> Option<(usize, usize)> {
    while s < e {
        if plot[s] > plot[e] {
            return Some((s, e));
        }
        if let Some(p_e) = pred_plot[e] {
            if ordering[s..e].contains(&p_e) {
                return Some((s, e));
            }
        }
        e -= 1;
    }
    None
}

/// Candidate clusters as inclusive ranges of the reachability plot.
fn xi_clusters(
    plot_in: &[f64],
    pred_plot: &[Option<usize>],
    ordering: &[usize],
    xi: f64,
    min_samples: usize,
    min_cluster_size: usize,
) -> Vec<(usize, usize)> {
    let mut plot = plot_in.to_vec();
    plot.push(f64::INFINITY);
    let n = plot_in.len();
    let xi_complement = 1.0 - xi;
    let ratio: Vec<f64> = (0..n).map(|i| plot[i] / plot[i + 1]).collect();
    let steep_up: Vec<bool> = ratio.iter().map(|&r| r <= xi_complement).collect();
    let steep_down: Vec<bool> = ratio.iter().map(|&r| r >= 1.0 / xi_complement).collect();
    let downward: Vec<bool> = ratio.iter().map(|&r| r > 1.0).collect();
    let upward: Vec<bool> = ratio.iter().map(|&r| r < 1.0).collect();

    let mut sdas: Vec<SteepDown> = Vec::new();
    let mut clusters = Vec::new();
    let mut index = 0;
    let mut mib = 0.0f64;
    for steep_index in (0..n).filter(|&i| steep_up[i] || steep_down[i]) {
        if steep_index < index {
            continue;
        }
        mib = plot[index..=steep_index].iter().cloned().fold(mib, f64::max);
        sdas = update_filter_sdas(sdas, mib, xi_complement, &plot);
        if steep_down[steep_index] {
            let end = extend_region(&steep_down, &upward, steep_index, min_samples);
            sdas.push(SteepDown {
                start: steep_index,
                end,
                mib: 0.0,
            });
            index = end + 1;
            mib = plot[index];
        } else {
            let u_start = steep_index;
            let u_end = extend_region(&steep_up, &downward, u_start, min_samples);
            index = u_end + 1;
            mib = plot[index];
            let mut found = Vec::new();
            for d in &sdas {
                let mut c_start = d.start;
                let mut c_end = u_end;
                if plot[c_end + 1] * xi_complement < d.mib {
                    continue;
                }
                let d_max = plot[d.start];
                if d_max * xi_complement >= plot[c_end + 1] {
                    while plot[c_start + 1] > plot[c_end + 1] && c_start < d.end {
                        c_start += 1;
                    }
                } else if plot[c_end + 1] * xi_complement >= d_max {
                    while plot[c_end - 1] > d_max && c_end > u_start {
                        c_end -= 1;
                    }
                }
                let Some((s, e)) = correct_predecessor(&plot, pred_plot, ordering, c_start, c_end) else {
                    continue;
                };
                if e - s + 1 < min_cluster_size || s > d.end || e < u_start {
                    continue;
                }
                found.push((s, e));
            }
            found.reverse();
            clusters.extend(found);
        }
    }
    clusters
}

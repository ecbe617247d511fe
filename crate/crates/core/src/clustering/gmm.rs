use serde::{Deserialize, Serialize};

use super::kmeans::KMeansModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceType {
    #[default]
    Diagonal,
    Spherical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GmmParams {
    pub max_iter: usize,
    /// Stop once the log-likelihood gain drops below this.
    pub tol: f64,
    pub cov_floor: f64,
    pub covariance: CovarianceType,
}

impl Default for GmmParams {
    fn default() -> Self {
        GmmParams {
            max_iter: 200,
            tol: 1e-6,
            cov_floor: 1e-6,
            covariance: CovarianceType::Diagonal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Per-dimension variances; spherical models repeat one value.
    pub variances: Vec<Vec<f64>>,
    pub covariance: CovarianceType,
    pub responsibilities: Vec<Vec<f64>>,
    pub log_likelihood_trace: Vec<f64>,
    /// Set when any variance had to be raised to the floor.
    pub floored: bool,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Hard assignment: argmax responsibility per point.
    pub fn hard_assignments(&self) -> Vec<usize> {
        self.responsibilities.iter().map(|r| crate::util::argmax(r)).collect()
    }
}

const LN_2PI: f64 = 1.837_877_066_409_345_3;

fn log_gaussian(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((xi, mi), vi) in x.iter().zip(mean).zip(var) {
        let d = xi - mi;
        acc += LN_2PI + vi.ln() + d * d / vi;
    }
    -0.5 * acc
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

struct Fit<'a> {
    points: &'a [Vec<f64>],
    params: &'a GmmParams,
    floored: bool,
}

impl Fit<'_> {
    fn estimate_variances(&mut self, resp: &[Vec<f64>], k: usize, nk: f64, mean: &[f64]) -> Vec<f64> {
        let d = mean.len();
        let mut var = vec![0.0; d];
        if nk > 0.0 {
            for (p, r) in self.points.iter().zip(resp) {
                let w = r[k];
                for ((v, x), m) in var.iter_mut().zip(p).zip(mean) {
                    *v += w * (x - m) * (x - m);
                }
            }
            var.iter_mut().for_each(|v| *v /= nk);
        }
        if self.params.covariance == CovarianceType::Spherical {
            let avg = var.iter().sum::<f64>() / d.max(1) as f64;
            var.iter_mut().for_each(|v| *v = avg);
        }
        for v in &mut var {
            if *v < self.params.cov_floor {
                *v = self.params.cov_floor;
                self.floored = true;
            }
        }
        var
    }

    fn e_step(&self, weights: &[f64], means: &[Vec<f64>], vars: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
        let mut total = 0.0;
        let mut resp = Vec::with_capacity(self.points.len());
        let mut logs = vec![0.0; weights.len()];
        for p in self.points {
            for (k, l) in logs.iter_mut().enumerate() {
                *l = weights[k].ln() + log_gaussian(p, &means[k], &vars[k]);
            }
            let lse = log_sum_exp(&logs);
            total += lse;
            resp.push(logs.iter().map(|l| (l - lse).exp()).collect());
        }
        (resp, total)
    }
}

/// Expectation–maximisation for a Gaussian mixture started from a K-Means fit.
pub fn gmm_em(points: &[Vec<f64>], init: &KMeansModel, params: &GmmParams) -> Result<GmmModel> {
    if points.len() != init.assignments.len() {
        return Err(Error::LengthMismatch(points.len(), init.assignments.len()));
    }
    if !(params.cov_floor > 0.0) {
        return Err(Error::InvalidParameter("cov_floor must be positive".into()));
    }
    let n = points.len() as f64;
    let k = init.k;
    let mut fit = Fit {
        points,
        params,
        floored: false,
    };
    let hard: Vec<Vec<f64>> = init
        .assignments
        .iter()
        .map(|&a| (0..k).map(|j| if j == a { 1.0 } else { 0.0 }).collect())
        .collect();
    let sizes = init.cluster_sizes();
    let mut weights: Vec<f64> = sizes.iter().map(|&s| s as f64 / n).collect();
    let mut means = init.centroids.clone();
    let mut vars: Vec<Vec<f64>> = (0..k)
        .map(|j| fit.estimate_variances(&hard, j, sizes[j] as f64, &means[j]))
        .collect();

    let mut trace = Vec::new();
    let mut resp;
    let mut iter = 0;
    loop {
        let (r, ll) = fit.e_step(&weights, &means, &vars);
        resp = r;
        if !ll.is_finite() {
            return Err(Error::Clustering(format!("log-likelihood became {ll}")));
        }
        let converged = trace.last().is_some_and(|&prev: &f64| ll - prev < params.tol);
        trace.push(ll);
        if converged || iter == params.max_iter {
            break;
        }
        iter += 1;
        for j in 0..k {
            let nk: f64 = resp.iter().map(|r| r[j]).sum();
            weights[j] = nk / n;
            if nk > 0.0 {
                let mut m = vec![0.0; means[j].len()];
                for (p, r) in points.iter().zip(&resp) {
                    for (mi, x) in m.iter_mut().zip(p) {
                        *mi += r[j] * x;
                    }
                }
                m.iter_mut().for_each(|x| *x /= nk);
                means[j] = m;
            }
            vars[j] = fit.estimate_variances(&resp, j, nk, &means[j]);
        }
    }
    if fit.floored {
        log::warn!("gmm: variance collapsed below {}; floored", params.cov_floor);
    }
    Ok(GmmModel {
        weights,
        means,
        variances: vars,
        covariance: params.covariance,
        responsibilities: resp,
        log_likelihood_trace: trace,
        floored: fit.floored,
    })
}

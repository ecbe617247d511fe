use serde::{Deserialize, Serialize};

use super::{Features, SampleSet};
use crate::error::{Error, Result};
use crate::util::softmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NbFeatureMode {
    /// Binary presence of each vocabulary token (Bernoulli event model).
    #[default]
    Onehot,
    /// TF-IDF masses, multinomial-style.
    Tfidf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NbParams {
    pub alpha: f64,
    pub mode: NbFeatureMode,
    /// Score only present tokens (drop the `log(1-P)` absence terms).
    pub presence_only: bool,
}

impl Default for NbParams {
    fn default() -> Self {
        NbParams {
            alpha: 0.2,
            mode: NbFeatureMode::Onehot,
            presence_only: false,
        }
    }
}

/// Naive Bayes over a fixed vocabulary. Tables are stored as logs,
/// feature-major: `log_p[i * C + j]` is `log P(x_i | y_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliNbModel {
    pub params: NbParams,
    pub classes: Vec<usize>,
    pub n_features: usize,
    pub log_prior: Vec<f64>,
    pub log_p: Vec<f64>,
    /// `log(1 - P(x_i | y_j))`; empty in tfidf mode.
    pub log_q: Vec<f64>,
    /// `Σ_i log(1 - P(x_i | y_j))` per class.
    absent_sum: Vec<f64>,
}

impl BernoulliNbModel {
    pub(crate) fn from_tables(
        params: NbParams,
        classes: Vec<usize>,
        n_features: usize,
        log_prior: Vec<f64>,
        log_p: Vec<f64>,
        log_q: Vec<f64>,
    ) -> Self {
        let c = classes.len();
        let mut absent_sum = vec![0.0; c];
        if !log_q.is_empty() {
            for row in log_q.chunks(c) {
                for (s, q) in absent_sum.iter_mut().zip(row) {
                    *s += q;
                }
            }
        }
        BernoulliNbModel {
            params,
            classes,
            n_features,
            log_prior,
            log_p,
            log_q,
            absent_sum,
        }
    }

    /// `P(x_i | y_j)` for local class index `j`.
    pub fn conditional(&self, feature: usize, class: usize) -> f64 {
        self.log_p[feature * self.classes.len() + class].exp()
    }

    pub fn prior(&self, class: usize) -> f64 {
        self.log_prior[class].exp()
    }

    /// Unnormalised log joint per local class.
    pub fn log_joint(&self, x: &[(usize, f64)]) -> Vec<f64> {
        let c = self.classes.len();
        let mut scores = self.log_prior.clone();
        let in_range = x.iter().filter(|(i, _)| *i < self.n_features);
        match self.params.mode {
            NbFeatureMode::Onehot => {
                if !self.params.presence_only {
                    scores.iter_mut().zip(&self.absent_sum).for_each(|(s, a)| *s += a);
                }
                let mut seen = std::collections::HashSet::new();
                for &(i, _) in in_range {
                    if !seen.insert(i) {
                        continue;
                    }
                    for (j, s) in scores.iter_mut().enumerate() {
                        *s += self.log_p[i * c + j];
                        if !self.params.presence_only {
                            *s -= self.log_q[i * c + j];
                        }
                    }
                }
            }
            NbFeatureMode::Tfidf => {
                for &(i, w) in in_range {
                    for (j, s) in scores.iter_mut().enumerate() {
                        *s += w * self.log_p[i * c + j];
                    }
                }
            }
        }
        scores
    }

    pub fn predict_proba(&self, x: &[(usize, f64)]) -> Vec<f64> {
        softmax(&self.log_joint(x))
    }
}

/// Fit over `classes` (global ids, ascending); every listed class must have
/// at least one sample.
pub fn nb_fit(
    data: &dyn SampleSet,
    classes: &[usize],
    n_features: usize,
    params: &NbParams,
) -> Result<BernoulliNbModel> {
    if classes.len() < 2 {
        return Err(Error::InvalidParameter("Naive Bayes needs at least two classes".into()));
    }
    if !(params.alpha >= 0.0) {
        return Err(Error::InvalidParameter("smoothing alpha must be non-negative".into()));
    }
    let c = classes.len();
    let local: std::collections::HashMap<usize, usize> = classes.iter().enumerate().map(|(j, &g)| (g, j)).collect();
    let mut docs = vec![0usize; c];
    let mut mass = vec![0.0f64; n_features * c];
    let mut total_mass = vec![0.0f64; c];
    for s in 0..data.len() {
        let Some(&j) = local.get(&data.label(s)) else {
            continue;
        };
        docs[j] += 1;
        let Features::Sparse(x) = data.features(s) else {
            return Err(Error::ShapeMismatch {
                expected: "sparse features".into(),
                actual: "dense features".into(),
            });
        };
        match params.mode {
            NbFeatureMode::Onehot => {
                let mut ids: Vec<usize> = x.iter().map(|&(i, _)| i).filter(|&i| i < n_features).collect();
                ids.sort_unstable();
                ids.dedup();
                for i in ids {
                    mass[i * c + j] += 1.0;
                }
            }
            NbFeatureMode::Tfidf => {
                for (i, w) in x {
                    if i < n_features {
                        mass[i * c + j] += w;
                        total_mass[j] += w;
                    }
                }
            }
        }
    }
    if let Some(j) = docs.iter().position(|&d| d == 0) {
        return Err(Error::EmptyClass(classes[j]));
    }
    let n: usize = docs.iter().sum();
    let log_prior = docs.iter().map(|&d| (d as f64 / n as f64).ln()).collect();
    let a = params.alpha;
    let (log_p, log_q) = match params.mode {
        NbFeatureMode::Onehot => {
            let mut lp = Vec::with_capacity(mass.len());
            let mut lq = Vec::with_capacity(mass.len());
            for (k, &m) in mass.iter().enumerate() {
                let nj = docs[k % c] as f64;
                let p = (m + a) / (nj + 2.0 * a);
                lp.push(p.ln());
                lq.push((1.0 - p).ln());
            }
            (lp, lq)
        }
        NbFeatureMode::Tfidf => {
            let v = n_features as f64;
            let lp = mass
                .iter()
                .enumerate()
                .map(|(k, &m)| ((m + a) / (total_mass[k % c] + a * v)).ln())
                .collect();
            (lp, Vec::new())
        }
    };
    Ok(BernoulliNbModel::from_tables(
        params.clone(),
        classes.to_vec(),
        n_features,
        log_prior,
        log_p,
        log_q,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::InMemorySet;

    // vocabulary: 0 rain, 1 pipe, 2 tax; class 0 = A, class 1 = B
    fn fixture() -> InMemorySet {
        let doc = |ids: &[usize]| Features::Sparse(ids.iter().map(|&i| (i, 1.0)).collect());
        InMemorySet::new(vec![doc(&[0]), doc(&[0, 1]), doc(&[2])], vec![0, 0, 1])
    }

    #[test]
    fn smoothed_conditionals_and_priors() {
        let m = nb_fit(&fixture(), &[0, 1], 3, &NbParams::default()).unwrap();
        assert!((m.conditional(0, 0) - 2.2 / 2.4).abs() < 1e-12);
        assert!((m.conditional(2, 0) - 0.2 / 2.4).abs() < 1e-12);
        assert!((m.prior(0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.prior(1) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unsmoothed_gives_zero() {
        let m = nb_fit(&fixture(), &[0, 1], 3, &NbParams { alpha: 0.0, ..NbParams::default() }).unwrap();
        assert_eq!(m.conditional(2, 0), 0.0);
    }

    #[test]
    fn rain_favours_a_and_posteriors_are_distributions() {
        let m = nb_fit(&fixture(), &[0, 1], 3, &NbParams::default()).unwrap();
        let p = m.predict_proba(&[(0, 1.0)]);
        assert!(p[0] > p[1]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn empty_doc_presence_only_returns_priors() {
        let params = NbParams { presence_only: true, ..NbParams::default() };
        let m = nb_fit(&fixture(), &[0, 1], 3, &params).unwrap();
        let p = m.predict_proba(&[]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_class_is_an_error() {
        assert!(matches!(
            nb_fit(&fixture(), &[0, 1, 5], 3, &NbParams::default()),
            Err(Error::EmptyClass(5))
        ));
        assert!(nb_fit(&fixture(), &[0], 3, &NbParams::default()).is_err());
    }

    #[test]
    fn tfidf_mode_is_multinomial() {
        let data = InMemorySet::new(
            vec![
                Features::Sparse(vec![(0, 2.0), (1, 1.0)]),
                Features::Sparse(vec![(2, 3.0)]),
            ],
            vec![0, 1],
        );
        let params = NbParams { mode: NbFeatureMode::Tfidf, ..NbParams::default() };
        let m = nb_fit(&data, &[0, 1], 3, &params).unwrap();
        // (2 + 0.2) / (3 + 0.2 * 3)
        assert!((m.conditional(0, 0) - 2.2 / 3.6).abs() < 1e-12);
        let total: f64 = (0..3).map(|i| m.conditional(i, 0)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(m.predict_proba(&[(2, 1.0)])[1] > 0.5);
    }

    #[test]
    fn relabelling_classes_permutes_posteriors() {
        let data = fixture();
        let swapped = InMemorySet::new((0..3).map(|i| data.features(i)).collect(), vec![1, 1, 0]);
        let a = nb_fit(&data, &[0, 1], 3, &NbParams::default()).unwrap();
        let b = nb_fit(&swapped, &[0, 1], 3, &NbParams::default()).unwrap();
        let pa = a.predict_proba(&[(1, 1.0)]);
        let pb = b.predict_proba(&[(1, 1.0)]);
        assert!((pa[0] - pb[1]).abs() < 1e-15 && (pa[1] - pb[0]).abs() < 1e-15);
    }
}

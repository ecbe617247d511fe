//! Precision/recall (micro and macro), log loss, confusion matrices,
//! inference timing and log-loss based selection of the best model.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-vs-rest counts for a single class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ClassCounts {
    /// `TP / (TP + FP)`, or 0 when the class is never predicted.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `TP / (TP + FN)`, or 0 when the class never occurs.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Median wall-clock seconds for one full pass over the dataset.
    pub seconds: f64,
    pub runs: Vec<f64>,
    pub hardware: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub n_samples: usize,
    pub n_classes: usize,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub per_class: Vec<ClassCounts>,
    /// Classes absent from both truth and predictions; they count as 0 in
    /// the macro averages.
    pub absent_classes: Vec<usize>,
    /// `confusion[t][p]`: samples of true class `t` predicted as `p`.
    pub confusion: Vec<Vec<usize>>,
    pub log_loss: Option<f64>,
    pub inference_time: Option<Timing>,
    pub dataset_hash: Option<String>,
    /// Meta-class level confusion for hierarchical models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta_confusion: Option<Vec<Vec<usize>>>,
}

pub fn confusion_matrix(truth: &[usize], predicted: &[usize], l: usize) -> Result<Vec<Vec<usize>>> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch(truth.len(), predicted.len()));
    }
    let mut m = vec![vec![0usize; l]; l];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= l || p >= l {
            return Err(Error::InvalidParameter(format!("class id {} outside 0..{l}", t.max(p))));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// Micro/macro precision and recall over `l` classes (log loss and timing
/// are left empty).
pub fn compute_metrics(truth: &[usize], predicted: &[usize], l: usize) -> Result<EvalReport> {
    let confusion = confusion_matrix(truth, predicted, l)?;
    let n = truth.len();
    let per_class: Vec<ClassCounts> = (0..l)
        .map(|c| {
            let tp = confusion[c][c];
            let row: usize = confusion[c].iter().sum();
            let col: usize = confusion.iter().map(|r| r[c]).sum();
            ClassCounts {
                tp,
                fp: col - tp,
                fn_: row - tp,
                tn: n + tp - row - col,
            }
        })
        .collect();
    let absent_classes = per_class
        .iter()
        .enumerate()
        .filter(|(_, c)| c.tp + c.fp + c.fn_ == 0)
        .map(|(i, _)| i)
        .collect();
    let sum = |f: fn(&ClassCounts) -> usize| per_class.iter().map(f).sum::<usize>();
    let (tp, fp, fn_) = (sum(|c| c.tp), sum(|c| c.fp), sum(|c| c.fn_));
    let macro_avg = |f: fn(&ClassCounts) -> f64| {
        if l == 0 {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / l as f64
        }
    };
    Ok(EvalReport {
        model_id: String::new(),
        n_samples: n,
        n_classes: l,
        micro_precision: ratio(tp, tp + fp),
        micro_recall: ratio(tp, tp + fn_),
        macro_precision: macro_avg(ClassCounts::precision),
        macro_recall: macro_avg(ClassCounts::recall),
        per_class,
        absent_classes,
        confusion,
        log_loss: None,
        inference_time: None,
        dataset_hash: None,
        meta_confusion: None,
    })
}

fn check_rows(truth: &[usize], proba: &[Vec<f64>]) -> Result<()> {
    if truth.len() != proba.len() {
        return Err(Error::LengthMismatch(truth.len(), proba.len()));
    }
    for (row, (p, &t)) in proba.iter().zip(truth).enumerate() {
        let sum: f64 = p.iter().sum();
        if p.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::NotADistribution { row, sum });
        }
        if t >= p.len() {
            return Err(Error::InvalidParameter(format!("true class {t} outside row of width {}", p.len())));
        }
    }
    Ok(())
}

/// Sum over classes of `y log p + (1 - y) log(1 - p)` per sample, averaged;
/// this is the literal (non-positive) form.
pub fn log_loss_signed(truth: &[usize], proba: &[Vec<f64>], clip: f64) -> Result<f64> {
    check_rows(truth, proba)?;
    if truth.is_empty() {
        return Err(Error::InvalidParameter("log loss of an empty dataset".into()));
    }
    let total: f64 = proba
        .iter()
        .zip(truth)
        .map(|(p, &t)| {
            p.iter()
                .enumerate()
                .map(|(i, &v)| {
                    let v = v.clamp(clip, 1.0 - clip);
                    if i == t {
                        v.ln()
                    } else {
                        (1.0 - v).ln()
                    }
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / truth.len() as f64)
}

/// Mean per-sample binary cross-entropy summed over classes, with
/// probabilities clipped to `[clip, 1 - clip]`. Lower is better.
pub fn log_loss(truth: &[usize], proba: &[Vec<f64>], clip: f64) -> Result<f64> {
    Ok(-log_loss_signed(truth, proba, clip)?)
}

pub fn hardware_description() -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{}-{} ({} hardware threads)", std::env::consts::ARCH, std::env::consts::OS, threads)
}

/// Run `pass` (one full inference pass) `repeats` times and report the
/// median wall-clock time.
pub fn time_inference(repeats: usize, mut pass: impl FnMut() -> Result<()>) -> Result<Timing> {
    if repeats == 0 {
        return Err(Error::InvalidParameter("at least one timing repeat is needed".into()));
    }
    let mut runs = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        pass()?;
        runs.push(t.elapsed().as_secs_f64());
    }
    Ok(Timing {
        seconds: median(&runs),
        runs,
        hardware: hardware_description(),
    })
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDecision {
    pub candidates: Vec<String>,
    pub log_losses: Vec<f64>,
    pub winner: String,
    pub winner_index: usize,
    pub dataset_hash: Option<String>,
}

/// Pick the candidate with the lowest validation log loss; ties go to the
/// earliest registered. All reports must come from the same dataset.
pub fn select_best(reports: &[EvalReport]) -> Result<EnsembleDecision> {
    if reports.len() < 2 {
        return Err(Error::InvalidParameter("model selection needs at least two candidates".into()));
    }
    let hash = reports[0].dataset_hash.clone();
    for r in &reports[1..] {
        if r.dataset_hash != hash {
            return Err(Error::HashMismatch {
                what: format!("validation set of `{}`", r.model_id),
                expected: hash.clone().unwrap_or_else(|| "none".into()),
                found: r.dataset_hash.clone().unwrap_or_else(|| "none".into()),
            });
        }
    }
    let losses = reports
        .iter()
        .map(|r| {
            r.log_loss
                .ok_or_else(|| Error::InvalidParameter(format!("`{}` has no log loss", r.model_id)))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut winner = 0;
    for (i, &l) in losses.iter().enumerate() {
        if l < losses[winner] {
            winner = i;
        }
    }
    Ok(EnsembleDecision {
        candidates: reports.iter().map(|r| r.model_id.clone()).collect(),
        log_losses: losses,
        winner: reports[winner].model_id.clone(),
        winner_index: winner,
        dataset_hash: hash,
    })
}

/// Confusion matrix as CSV: header `truth\predicted,<names...>`, then one
/// row per true class.
pub fn write_confusion_csv(path: &Path, confusion: &[Vec<usize>], names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["truth\\predicted".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in names.iter().zip(confusion) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(usize::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn from_confusion(m: &[[usize; 3]]) -> (Vec<usize>, Vec<usize>) {
        let mut t = Vec::new();
        let mut p = Vec::new();
        for (i, row) in m.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                for _ in 0..c {
                    t.push(i);
                    p.push(j);
                }
            }
        }
        (t, p)
    }

    #[test]
    fn hand_fixture() {
        let (t, p) = from_confusion(&[[2, 0, 0], [1, 1, 0], [0, 0, 1]]);
        let r = compute_metrics(&t, &p, 3).unwrap();
        assert!((r.micro_precision - 0.8).abs() < 1e-12);
        assert!((r.micro_recall - 0.8).abs() < 1e-12);
        assert!((r.macro_recall - (1.0 + 0.5 + 1.0) / 3.0).abs() < 1e-12);
        assert!((r.macro_precision - (2.0 / 3.0 + 1.0 + 1.0) / 3.0).abs() < 1e-12);
        assert_eq!(r.per_class[0], ClassCounts { tp: 2, fp: 1, fn_: 0, tn: 2 });
    }

    #[test]
    fn perfect_predictions() {
        let t = vec![0, 1, 2, 2];
        let r = compute_metrics(&t, &t, 3).unwrap();
        for v in [r.micro_precision, r.micro_recall, r.macro_precision, r.macro_recall] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn absent_classes_count_as_zero_in_macro() {
        let t = vec![0, 1];
        let r = compute_metrics(&t, &t, 4).unwrap();
        assert_eq!(r.absent_classes, vec![2, 3]);
        assert_eq!(r.macro_precision, 0.5);
        assert_eq!(r.micro_precision, 1.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(compute_metrics(&[0], &[0, 1], 2), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn uniform_four_class_log_loss() {
        let p = vec![vec![0.25; 4]; 3];
        let l = log_loss(&[0, 2, 3], &p, 1e-7).unwrap();
        let expected = -(0.25f64.ln() + 3.0 * 0.75f64.ln());
        assert!((l - expected).abs() < 1e-12);
        assert!((l - 2.2493).abs() < 1e-4);
        assert!((log_loss_signed(&[0, 2, 3], &p, 1e-7).unwrap() + l).abs() < 1e-15);
    }

    #[test]
    fn one_hot_log_loss_is_near_zero() {
        let p = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
        let l = log_loss(&[0, 2], &p, 1e-7).unwrap();
        assert!(l > 0.0 && l < 1e-5);
        assert!((l - (-3.0 * (1.0f64 - 1e-7).ln())).abs() < 1e-12);
    }

    #[test]
    fn invalid_rows_are_rejected() {
        let err = log_loss(&[0], &[vec![0.5, 0.6]], 1e-7).unwrap_err();
        assert!(matches!(err, Error::NotADistribution { row: 0, .. }));
    }

    fn report(id: &str, loss: f64, hash: &str) -> EvalReport {
        let mut r = compute_metrics(&[0, 1], &[0, 1], 2).unwrap();
        r.model_id = id.into();
        r.log_loss = Some(loss);
        r.dataset_hash = Some(hash.into());
        r
    }

    #[test]
    fn select_best_is_argmin_with_first_tie() {
        let rs = [report("a", 1.5, "h"), report("b", 1.2, "h"), report("c", 2.0, "h")];
        let d = select_best(&rs).unwrap();
        assert_eq!((d.winner_index, d.winner.as_str()), (1, "b"));
        let d = select_best(&[report("a", 1.2, "h"), report("b", 1.2, "h")]).unwrap();
        assert_eq!(d.winner_index, 0);
    }

    #[test]
    fn select_best_rejects_mixed_datasets_and_singletons() {
        assert!(matches!(
            select_best(&[report("a", 1.0, "h"), report("b", 0.5, "g")]),
            Err(Error::HashMismatch { .. })
        ));
        assert!(select_best(&[report("a", 1.0, "h")]).is_err());
    }

    #[test]
    fn timing_reports_median() {
        let mut calls = 0;
        let t = time_inference(3, || {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 3);
        assert_eq!(t.runs.len(), 3);
        assert_eq!(t.seconds, median(&t.runs));
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn confusion_csv_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        write_confusion_csv(&path, &[vec![1, 2], vec![0, 3]], &["x".into(), "y".into()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "truth\\predicted,x,y\nx,1,2\ny,0,3\n");
    }

    proptest! {
        #[test]
        fn invariants(pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..60), shift in 0usize..5) {
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let r = compute_metrics(&t, &p, 5).unwrap();
            prop_assert!((r.micro_precision - r.micro_recall).abs() < 1e-12);
            for (c, row) in r.confusion.iter().enumerate() {
                prop_assert_eq!(row.iter().sum::<usize>(), t.iter().filter(|&&y| y == c).count());
            }
            for v in [r.micro_precision, r.macro_precision, r.macro_recall] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            // consistent relabelling leaves the scores unchanged
            let perm = |y: usize| (y + shift) % 5;
            let r2 = compute_metrics(&t.iter().map(|&y| perm(y)).collect::<Vec<_>>(), &p.iter().map(|&y| perm(y)).collect::<Vec<_>>(), 5).unwrap();
            prop_assert!((r.macro_precision - r2.macro_precision).abs() < 1e-12);
            prop_assert!((r.macro_recall - r2.macro_recall).abs() < 1e-12);
            prop_assert_eq!(r.micro_precision, r2.micro_precision);
        }

        #[test]
        fn log_loss_falls_as_true_class_gains(a in 0.01f64..0.98, d in 0.001f64..0.01) {
            let b = (a + d).min(0.99);
            prop_assume!(b > a);
            let la = log_loss(&[0], &[vec![a, 1.0 - a]], 1e-7).unwrap();
            let lb = log_loss(&[0], &[vec![b, 1.0 - b]], 1e-7).unwrap();
            prop_assert!(lb < la);
        }
    }
}

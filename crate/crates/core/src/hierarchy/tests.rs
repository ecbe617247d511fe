use std::sync::atomic::{AtomicUsize, Ordering};

use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::classifiers::InMemorySet;
use crate::clustering::MetaMethod;
use crate::util::seeded_rng;

const N_FEATURES: usize = 60;
/// Token ids at or above this carry the sample index; models never see them
/// (they are outside the vocabulary) but oracle stubs can read them.
const TAG: usize = 1_000_000;

/// 12 labels in 3 themes: each label has 3 signature tokens (ids 3y..3y+3)
/// plus a shared theme token block at 36 + 8·theme.
fn corpus(n: usize, seed: u64) -> (InMemorySet, MetaClassMap) {
    let mut rng = seeded_rng(seed);
    let meta_of: Vec<usize> = (0..12).map(|y| y / 4).collect();
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let y = rng.random_range(0..12);
        let mut toks: Vec<(usize, f64)> = Vec::new();
        for t in 0..3 {
            if rng.random::<f64>() < 0.6 {
                toks.push((3 * y + t, 1.0));
            }
        }
        for t in 0..8 {
            if rng.random::<f64>() < 0.3 {
                toks.push((36 + 8 * meta_of[y] + t, 1.0));
            }
        }
        if rng.random::<f64>() < 0.3 {
            toks.push((rng.random_range(0..N_FEATURES), 1.0));
        }
        toks.push((TAG + i, 1.0));
        feats.push(Features::Sparse(toks));
        labels.push(y);
    }
    let map = MetaClassMap::from_assignment(MetaMethod::KmeansGmm, 3, &meta_of).unwrap();
    (InMemorySet::new(feats, labels), map)
}

fn input() -> InputSpec {
    InputSpec {
        n_features: N_FEATURES,
        sequence: (0, 0),
    }
}

fn sample_id(x: &Features) -> usize {
    match x {
        Features::Sparse(v) => v.iter().find(|(i, _)| *i >= TAG).map(|(i, _)| i - TAG).unwrap(),
        Features::Dense(_) => unreachable!(),
    }
}

/// Predictor with fixed outputs per sample id; counts evaluated samples.
struct Stub {
    classes: Vec<usize>,
    rows: Vec<Vec<f64>>,
    calls: AtomicUsize,
}

impl Stub {
    fn new(classes: Vec<usize>, rows: Vec<Vec<f64>>) -> Self {
        Stub {
            classes,
            rows,
            calls: AtomicUsize::new(0),
        }
    }
}

impl Predictor for Stub {
    fn classes(&self) -> &[usize] {
        &self.classes
    }

    fn predict_proba_batch(&self, xs: &[&Features]) -> Result<Vec<Vec<f64>>> {
        self.calls.fetch_add(xs.len(), Ordering::Relaxed);
        Ok(xs.iter().map(|x| self.rows[sample_id(x)].clone()).collect())
    }
}

struct Counting<'a>(&'a dyn Predictor, AtomicUsize);

impl Predictor for Counting<'_> {
    fn classes(&self) -> &[usize] {
        self.0.classes()
    }

    fn predict_proba_batch(&self, xs: &[&Features]) -> Result<Vec<Vec<f64>>> {
        self.1.fetch_add(xs.len(), Ordering::Relaxed);
        self.0.predict_proba_batch(xs)
    }
}

fn refs(data: &InMemorySet) -> Vec<&Features> {
    data.features.iter().collect()
}

#[test]
fn trains_k_plus_one_models() {
    let (data, map) = corpus(600, 1);
    let h = train_hierarchical(ModelKind::HierNb, &data, &map, input(), &HierarchyConfig::default()).unwrap();
    assert_eq!(h.leaf_models.len(), 3);
    assert_eq!(h.meta_model.classes(), &[0, 1, 2]);
    for (m, leaf) in h.leaf_models.iter().enumerate() {
        assert_eq!(leaf.classes(), map.members(m).as_slice());
    }
    let preds = infer_cascade(&h, &refs(&data)).unwrap();
    let acc = preds.iter().zip(&data.labels).filter(|(p, &y)| p.label == y).count() as f64 / data.len() as f64;
    assert!(acc > 0.6, "training accuracy {acc}");
}

#[test]
fn cascade_label_lies_in_selected_meta_class_and_runs_two_models() {
    let (data, map) = corpus(300, 2);
    let h = train_hierarchical(ModelKind::Nb, &data, &map, input(), &HierarchyConfig::default()).unwrap();
    let meta = Counting(&h.meta_model, AtomicUsize::new(0));
    let leaves: Vec<Counting> = h.leaf_models.iter().map(|l| Counting(l, AtomicUsize::new(0))).collect();
    let leaf_refs: Vec<&dyn Predictor> = leaves.iter().map(|l| l as &dyn Predictor).collect();
    let xs = refs(&data);
    let preds = cascade_with(&meta, &leaf_refs, &xs).unwrap();
    let meta_decisions = h.predict_meta(&xs).unwrap();
    for (p, m) in preds.iter().zip(&meta_decisions) {
        assert_eq!(p.meta, *m);
        assert_eq!(map.meta_of(p.label), p.meta);
        assert!(p.probability > 0.0 && p.probability <= 1.0);
    }
    let leaf_calls: usize = leaves.iter().map(|l| l.1.load(Ordering::Relaxed)).sum();
    assert_eq!(meta.1.load(Ordering::Relaxed), data.len());
    assert_eq!(leaf_calls, data.len());

    let leaves: Vec<Counting> = h.leaf_models.iter().map(|l| Counting(l, AtomicUsize::new(0))).collect();
    let leaf_refs: Vec<&dyn Predictor> = leaves.iter().map(|l| l as &dyn Predictor).collect();
    max_prob_with(&leaf_refs, &xs).unwrap();
    let leaf_calls: usize = leaves.iter().map(|l| l.1.load(Ordering::Relaxed)).sum();
    assert_eq!(leaf_calls, 3 * data.len());
}

#[test]
fn perfect_meta_gate_gives_leaf_weighted_accuracy() {
    let (data, map) = corpus(500, 3);
    let h = train_hierarchical(ModelKind::Nb, &data, &map, input(), &HierarchyConfig::default()).unwrap();
    let oracle = Stub::new(
        vec![0, 1, 2],
        data.labels
            .iter()
            .map(|&y| (0..3).map(|m| if m == map.meta_of(y) { 1.0 } else { 0.0 }).collect())
            .collect(),
    );
    let xs = refs(&data);
    let leaves = h.leaves();
    let preds = cascade_with(&oracle, &leaves, &xs).unwrap();
    let n = data.len() as f64;
    let cascade_acc = preds.iter().zip(&data.labels).filter(|(p, &y)| p.label == y).count() as f64 / n;

    let mut identity = 0.0;
    for m in 0..3 {
        let idx: Vec<usize> = (0..data.len()).filter(|&i| map.meta_of(data.labels[i]) == m).collect();
        let sub: Vec<&Features> = idx.iter().map(|&i| xs[i]).collect();
        let probs = h.leaf_models[m].predict_proba_batch(&sub).unwrap();
        let correct = idx
            .iter()
            .zip(&probs)
            .filter(|(&i, p)| h.leaf_models[m].classes()[argmax(p)] == data.labels[i])
            .count();
        let share = idx.len() as f64 / n;
        identity += share * correct as f64 / idx.len() as f64;
    }
    assert!((cascade_acc - identity).abs() < 1e-12, "{cascade_acc} vs {identity}");
}

#[test]
fn single_meta_class_matches_flat_model() {
    let (data, _) = corpus(300, 4);
    let map = MetaClassMap::from_assignment(MetaMethod::KmeansGmm, 1, &[0; 12]).unwrap();
    let h = train_hierarchical(ModelKind::Nb, &data, &map, input(), &HierarchyConfig::default()).unwrap();
    assert!(matches!(h.meta_model, ClassifierModel::Constant(_)));
    let flat = ClassifierModel::fit(ModelKind::Nb, &data, input(), &FitConfig::default()).unwrap();
    let xs = refs(&data);
    let cascade = infer_cascade(&h, &xs).unwrap();
    let max_prob = infer_max_prob(&h, &xs).unwrap();
    for ((c, m), p) in cascade.iter().zip(&max_prob).zip(flat.predict_proba_batch(&xs).unwrap()) {
        assert_eq!(c.label, flat.classes()[argmax(&p)]);
        assert_eq!(c.label, m.label);
        assert!((c.probability - m.probability).abs() < 1e-12);
    }
}

#[test]
fn single_label_meta_class_gets_constant_leaf() {
    let (data, _) = corpus(300, 5);
    let meta_of: Vec<usize> = (0..12).map(|y| usize::from(y != 0)).collect();
    let map = MetaClassMap::from_assignment(MetaMethod::KmeansGmm, 2, &meta_of).unwrap();
    let h = train_hierarchical(ModelKind::Nb, &data, &map, input(), &HierarchyConfig::default()).unwrap();
    assert!(matches!(h.leaf_models[0], ClassifierModel::Constant(_)));
    assert_eq!(h.warnings.len(), 1);
}

#[test]
fn meta_class_without_samples_is_an_error() {
    let (data, _) = corpus(100, 6);
    let keep: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] >= 4).collect();
    let sub = InMemorySet::new(
        keep.iter().map(|&i| data.features[i].clone()).collect(),
        keep.iter().map(|&i| data.labels[i]).collect(),
    );
    let map = MetaClassMap::from_assignment(MetaMethod::KmeansGmm, 3, &(0..12).map(|y| y / 4).collect::<Vec<_>>()).unwrap();
    let err = train_hierarchical(ModelKind::Nb, &sub, &map, input(), &HierarchyConfig::default()).unwrap_err();
    assert!(matches!(err, Error::EmptyClass(0)));
}

#[test]
fn rescnn_hierarchies_are_rejected() {
    let (data, map) = corpus(50, 7);
    let err = train_hierarchical(ModelKind::ResCnn, &data, &map, input(), &HierarchyConfig::default()).unwrap_err();
    assert!(matches!(err, Error::InvalidParameter(_)));
}

#[test]
fn predicted_membership_keeps_leaf_labels_inside_meta_class() {
    let (data, map) = corpus(400, 8);
    let cfg = HierarchyConfig {
        membership: LeafMembership::Predicted,
        ..Default::default()
    };
    let h = train_hierarchical(ModelKind::Nb, &data, &map, input(), &cfg).unwrap();
    for (m, leaf) in h.leaf_models.iter().enumerate() {
        assert!(leaf.classes().iter().all(|&y| map.meta_of(y) == m));
    }
}

#[test]
fn distribution_is_normalised() {
    let (data, map) = corpus(200, 9);
    let h = train_hierarchical(ModelKind::Nb, &data, &map, input(), &HierarchyConfig::default()).unwrap();
    for row in h.predict_distribution(&refs(&data)).unwrap() {
        assert_eq!(row.len(), 12);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn save_and_load_roundtrip() {
    let (data, map) = corpus(200, 10);
    let h = train_hierarchical(ModelKind::Nb, &data, &map, input(), &HierarchyConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = save_hierarchy(dir.path(), &h, Some("vocab")).unwrap();
    assert_eq!(written.len(), 3 + 3);
    let loaded = load_hierarchy(dir.path(), Some("vocab")).unwrap();
    let xs = refs(&data);
    assert_eq!(infer_cascade(&loaded, &xs).unwrap(), infer_cascade(&h, &xs).unwrap());
    assert!(matches!(load_hierarchy(dir.path(), Some("other")), Err(Error::HashMismatch { .. })));

    let mut other = map.clone();
    other.provenance.insert("edited".into(), "yes".into());
    other.save(&dir.path().join("meta_map.json")).unwrap();
    assert!(matches!(load_hierarchy(dir.path(), Some("vocab")), Err(Error::HashMismatch { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cascade_stays_in_the_chosen_partition(
        meta_of in proptest::collection::vec(0usize..3, 6),
        raw in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 9), 20),
    ) {
        let mut meta_of = meta_of;
        meta_of[..3].copy_from_slice(&[0, 1, 2]);
        let map = MetaClassMap::from_assignment(MetaMethod::KmeansGmm, 3, &meta_of).unwrap();
        let norm = |v: &[f64]| { let s: f64 = v.iter().sum(); v.iter().map(|x| x / s).collect::<Vec<_>>() };
        let meta = Stub::new(vec![0, 1, 2], raw.iter().map(|r| norm(&r[..3])).collect());
        let leaves: Vec<Stub> = (0..3)
            .map(|m| {
                let members = map.members(m);
                Stub::new(members.clone(), raw.iter().map(|r| norm(&r[3..3 + members.len()])).collect())
            })
            .collect();
        let leaf_refs: Vec<&dyn Predictor> = leaves.iter().map(|l| l as &dyn Predictor).collect();
        let feats: Vec<Features> = (0..raw.len()).map(|i| Features::Sparse(vec![(TAG + i, 1.0)])).collect();
        let xs: Vec<&Features> = feats.iter().collect();
        for (i, p) in cascade_with(&meta, &leaf_refs, &xs).unwrap().iter().enumerate() {
            prop_assert_eq!(p.meta, argmax(&meta.rows[i]));
            prop_assert_eq!(map.meta_of(p.label), p.meta);
        }
    }
}

//! Meta-class discovery. Both constructions run; `cluster.method` picks the
//! one hierarchical models train on (copied to `meta_map.json`).

use serde::Serialize;

use hybridclf::clustering::{
    build_meta_map, gmm_em, kmeans, label_vectors_from_documents, label_vectors_from_names, lda_fit, optics,
    select_k, silhouette_samples, LabelVector, LabelVectorSource, MetaClassMap, MetaInputs, MetaMethod,
};
use hybridclf::features::EmbeddingMatrix;
use hybridclf::text_prep::TokenStream;
use hybridclf::util::derive_seed;

use super::{load_embedding, write_json, Prepared};
use crate::config::RunConfig;
use crate::encode::TextPipeline;
use crate::error::CliError;
use crate::manifest::{RunManifest, StageRecorder};

#[derive(Serialize, Default)]
struct KmeansReport {
    silhouette_by_k: Vec<(usize, f64)>,
    chosen_k: usize,
    inertia: f64,
    gmm_log_likelihood: Vec<f64>,
    gmm_variance_floored: bool,
}

#[derive(Serialize, Default)]
struct TopicReport {
    optics_clusters: usize,
    optics_noise: usize,
    top_words: Vec<Vec<(String, f64)>>,
}

#[derive(Serialize)]
struct ClusterReport {
    selected: MetaMethod,
    label_vectors: LabelVectorSource,
    zero_vector_labels: Vec<usize>,
    kmeans_gmm: Option<KmeansReport>,
    topic_entropy: Option<TopicReport>,
    warnings: Vec<String>,
}

fn kmeans_route(cfg: &RunConfig, lv: &[LabelVector]) -> Result<(MetaClassMap, KmeansReport), CliError> {
    let pts: Vec<Vec<f64>> = lv.iter().map(|l| l.vector.clone()).collect();
    let c = &cfg.cluster;
    let k_max = c.k_max.min(pts.len().saturating_sub(1));
    let mut params = c.kmeans.clone();
    params.seed = derive_seed(cfg.seed, "kmeans");
    let (k, scores) = select_k(&pts, c.k_min..=k_max, &params)?;
    let km = kmeans(&pts, k, &params)?;
    let sil = silhouette_samples(&pts, &km.assignments)?;
    let gmm = gmm_em(&pts, &km, &c.gmm)?;
    let map = build_meta_map(MetaInputs::KmeansGmm {
        labels: lv,
        gmm: &gmm,
        silhouettes: Some(&sil),
    })?;
    let report = KmeansReport {
        silhouette_by_k: scores,
        chosen_k: k,
        inertia: km.inertia,
        gmm_log_likelihood: gmm.log_likelihood_trace.clone(),
        gmm_variance_floored: gmm.floored,
    };
    Ok((map, report))
}

fn topic_route(
    cfg: &RunConfig,
    lv: &[LabelVector],
    label_docs: &[TokenStream],
    emb: &EmbeddingMatrix,
) -> Result<(MetaClassMap, TopicReport), CliError> {
    let pts: Vec<Vec<f64>> = lv.iter().map(|l| l.vector.clone()).collect();
    let o = optics(&pts, &cfg.cluster.optics)?;
    let n_topics = o.require_clusters()?;
    let mut params = cfg.cluster.lda.clone();
    params.seed = derive_seed(cfg.seed, "lda");
    let topics = lda_fit(label_docs, n_topics, &params)?;
    let map = build_meta_map(MetaInputs::TopicEntropy {
        labels: lv,
        topics: &topics,
        emb,
        rule: cfg.cluster.assign_rule,
    })?;
    let report = TopicReport {
        optics_clusters: o.n_clusters,
        optics_noise: o.labels.iter().filter(|l| l.is_none()).count(),
        top_words: topics.top_words.clone(),
    };
    Ok((map, report))
}

pub fn run(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let mut rec = StageRecorder::start(&cfg.out_dir, "cluster", cfg.hash())?;
    let prep = Prepared::load(cfg, &mut rec)?;
    let emb = load_embedding(cfg, &mut rec)?;
    let (train, _) = prep.train_validation(cfg);
    let n_labels = prep.n_labels();

    let lv = match cfg.cluster.label_vectors {
        LabelVectorSource::NameTokens => {
            let pipeline = TextPipeline::from_config(cfg)?;
            label_vectors_from_names(prep.dict.names(), &emb, pipeline.tokenizer())
        }
        LabelVectorSource::DocumentCentroid => {
            let docs: Vec<TokenStream> = train.iter().map(|&i| prep.tokens[i].clone()).collect();
            let labels: Vec<usize> = train.iter().map(|&i| prep.label(i)).collect();
            label_vectors_from_documents(&docs, &labels, n_labels, &emb)
        }
    };
    let mut warnings = Vec::new();
    let zero: Vec<usize> = lv.iter().filter(|l| l.zero_vector).map(|l| l.label).collect();
    if !zero.is_empty() {
        warnings.push(format!("labels without embedded tokens: {zero:?}"));
    }

    // one pseudo-document per label: all of its training requests
    let mut label_docs = vec![TokenStream::default(); n_labels];
    for &i in &train {
        label_docs[prep.label(i)].tokens.extend(prep.tokens[i].tokens.iter().cloned());
    }

    let mut selected = None;
    let kmeans_gmm = match kmeans_route(cfg, &lv) {
        Ok((map, report)) => {
            let path = rec.path("meta_map.kmeans_gmm.json");
            map.save(&path)?;
            rec.produced(&path)?;
            if cfg.cluster.method == MetaMethod::KmeansGmm {
                selected = Some(map);
            }
            Some(report)
        }
        Err(e) if cfg.cluster.method != MetaMethod::KmeansGmm => {
            warnings.push(format!("kmeans_gmm construction failed: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let topic_entropy = match topic_route(cfg, &lv, &label_docs, &emb) {
        Ok((map, report)) => {
            let path = rec.path("meta_map.topic_entropy.json");
            map.save(&path)?;
            rec.produced(&path)?;
            if cfg.cluster.method == MetaMethod::TopicEntropy {
                selected = Some(map);
            }
            Some(report)
        }
        Err(e) if cfg.cluster.method != MetaMethod::TopicEntropy => {
            warnings.push(format!("topic_entropy construction failed: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    for w in &warnings {
        log::warn!("{w}");
    }

    let mut map = selected.expect("the selected route either succeeded or returned");
    map.provenance
        .insert("label_vectors".into(), format!("{:?}", cfg.cluster.label_vectors));
    map.provenance.insert("embeddings".into(), emb.content_hash());
    let path = rec.path("meta_map.json");
    map.save(&path)?;
    rec.produced(&path)?;
    let report = ClusterReport {
        selected: cfg.cluster.method,
        label_vectors: cfg.cluster.label_vectors,
        zero_vector_labels: zero,
        kmeans_gmm,
        topic_entropy,
        warnings,
    };
    write_json(&mut rec, "report.json", &report)?;
    rec.finish()
}

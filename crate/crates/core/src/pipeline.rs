//! Glue between raw records and the model: example preparation, model
//! construction from a lexicon, and prediction records.

use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::HyperParams;
use crate::corpus::{load_embeddings, random_vectors, ClaimRecord, Label, Lexicon, WordVectors};
use crate::error::Result;
use crate::model::{Example, GetModel, Prediction, TableSizes};
use crate::numcore::ParamStore;

pub fn table_sizes(lex: &Lexicon) -> TableSizes {
    TableSizes {
        words: lex.words.len(),
        speakers: lex.speakers.len(),
        publishers: lex.publishers.len(),
    }
}

/// Encodes and graphs every record. Records left with no usable claim or
/// evidence tokens are skipped with a warning.
pub fn prepare_examples(records: &[ClaimRecord], lex: &Lexicon, hp: &HyperParams) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let inst = lex.encode(r, hp.max_claim_len, hp.max_evidence_len, hp.n_evidences);
        match Example::prepare(&inst, hp.window) {
            Ok(ex) => out.push(ex),
            Err(crate::Error::Data(msg)) => warn!("skipping: {msg}"),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn word_vectors(lex: &Lexicon, hp: &HyperParams, path: Option<&Path>) -> Result<WordVectors> {
    match path {
        Some(p) => {
            let wv = load_embeddings(p, &lex.words, hp.dim, hp.seed)?;
            info!("{} of {} words found in {}", wv.found, lex.words.len(), p.display());
            Ok(wv)
        }
        None => Ok(random_vectors(&lex.words, hp.dim, hp.seed)),
    }
}

/// Fresh model and parameters for `lex`.
pub fn build_model(hp: &HyperParams, lex: &Lexicon, vectors: Option<&Path>) -> Result<(GetModel, ParamStore)> {
    let wv = word_vectors(lex, hp, vectors)?;
    let mut store = ParamStore::new();
    let model = GetModel::build(hp, table_sizes(lex), wv.table, &mut store)?;
    Ok((model, store))
}

/// One line of prediction output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub claim_id: String,
    /// P(claim is true).
    pub y_hat: f64,
    pub predicted_label: String,
    /// Per-evidence document attention, averaged over heads.
    pub doc_attention: Vec<f64>,
    pub doc_attention_heads: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<String>,
}

impl PredictionRecord {
    pub fn new(ex: &Example, pred: &Prediction) -> Self {
        let n = ex.evidences.len();
        let heads = pred.doc_weights.len().max(1) as f64;
        let doc_attention = (0..n)
            .map(|j| pred.doc_weights.iter().map(|h| h[j]).sum::<f64>() / heads)
            .collect();
        let label = if pred.p_true >= 0.5 { Label::True } else { Label::False };
        Self {
            claim_id: ex.claim_id.clone(),
            y_hat: pred.p_true,
            predicted_label: label.as_str().to_string(),
            doc_attention,
            doc_attention_heads: pred.doc_weights.clone(),
            gold_label: ex.label.map(|l| l.as_str().to_string()),
        }
    }
}

/// First `n_train` records for training, the rest for testing, after a
/// class-balanced interleave so both sides keep the label ratio.
pub fn split_records(records: &[ClaimRecord], n_train: usize) -> (Vec<ClaimRecord>, Vec<ClaimRecord>) {
    let (mut t, mut f): (Vec<_>, Vec<_>) = records.iter().partition(|r| r.label == Some(Label::True));
    let total = records.len().max(1);
    let n_true_train = (n_train * t.len() + total / 2) / total;
    let n_true_train = n_true_train.min(t.len());
    let n_false_train = n_train.saturating_sub(n_true_train).min(f.len());
    let test_t = t.split_off(n_true_train);
    let test_f = f.split_off(n_false_train);
    let mut train: Vec<ClaimRecord> = t.into_iter().chain(f).cloned().collect();
    let mut test: Vec<ClaimRecord> = test_t.into_iter().chain(test_f).cloned().collect();
    let key = |r: &ClaimRecord| records.iter().position(|x| x.claim_id == r.claim_id);
    train.sort_by_key(key);
    test.sort_by_key(key);
    (train, test)
}

//! WebAssembly bindings for the browser demo: graph construction,
//! evidence refinement on a single text, and a small in-browser trainer on
//! synthetic data.

use get_core::corpus::{make_synthetic, random_vectors, Lexicon, SynthSpec, Vocabulary};
use get_core::encoder::NodeFeatures;
use get_core::model::Example;
use get_core::numcore::{ParamStore, Tape, Tensor2};
use get_core::pipeline::{build_model, prepare_examples, split_records};
use get_core::refiner::{encode_evidence, EvidenceStack, RefineOptions};
use get_core::textgraph::{build_graph, tokenize, tokenize_words, GraphRecord, TextGraph};
use get_core::training::{evaluate, predict_one, train_step, Adam};
use get_core::{GetModel, HyperParams, Result};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const DEMO_DIM: usize = 8;

fn js(r: Result<Value>) -> std::result::Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

fn text_graph(text: &str, window: usize) -> Result<(Vocabulary, TextGraph)> {
    let words = tokenize_words(text);
    let vocab = Vocabulary::from_words(words.iter().map(String::as_str));
    let graph = build_graph(&tokenize(text, &vocab, usize::MAX), window)?;
    Ok((vocab, graph))
}

pub fn graph_value(text: &str, window: usize) -> Result<Value> {
    let (vocab, graph) = text_graph(text, window)?;
    let rec = GraphRecord::new("input", "evidence", None, &graph, &vocab);
    Ok(serde_json::to_value(rec).expect("graph serializes"))
}

/// Word graph of `text` as JSON: node words, edges and normalized adjacency.
#[wasm_bindgen]
pub fn graph(text: &str, window: usize) -> std::result::Result<String, JsError> {
    js(graph_value(text, window))
}

pub fn refine_value(text: &str, window: usize, discard_rate: f64, layers: usize, seed: u64) -> Result<Value> {
    let (vocab, graph) = text_graph(text, window)?;
    let n = graph.n();
    if n == 0 {
        return Err(get_core::Error::Data("no words in input".into()));
    }
    let table = random_vectors(&vocab, DEMO_DIM, seed).table;
    let rows: Vec<Vec<f64>> = graph.node_vocab.iter().map(|&i| table.row(i).to_vec()).collect();
    let mut store = ParamStore::new();
    let stack = EvidenceStack::register(&mut store, "demo", DEMO_DIM, layers, true, seed);
    let mut tape = Tape::new(&store);
    let h0 = tape.constant(Tensor2::from_rows(&rows));
    let opts = RefineOptions {
        discard_rate,
        score_gating: false,
    };
    let enc = encode_evidence(&mut tape, &graph.adj_norm, NodeFeatures::all_live(h0, n), &stack, opts)?;
    let layer_info: Vec<Value> = enc
        .layers
        .iter()
        .map(|l| {
            json!({
                "scores": l.scores,
                "discarded": l.discarded,
                "live": l.feats.mask,
            })
        })
        .collect();
    let words: Vec<&str> = graph.node_vocab.iter().map(|&i| vocab.word(i)).collect();
    Ok(json!({
        "words": words,
        "edges": graph.edges(),
        "layers": layer_info,
    }))
}

/// Runs `layers` refinement layers with seeded random weights over the
/// graph of `text` and reports scores and discarded nodes per layer.
#[wasm_bindgen]
pub fn refine(
    text: &str,
    window: usize,
    discard_rate: f64,
    layers: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    js(refine_value(text, window, discard_rate, layers, u64::from(seed)))
}

/// Trains on a generated keyword corpus one epoch at a time.
#[wasm_bindgen]
pub struct Trainer {
    hp: HyperParams,
    lexicon: Lexicon,
    model: GetModel,
    store: ParamStore,
    adam: Adam,
    train: Vec<Example>,
    test: Vec<Example>,
    epoch: usize,
}

impl Trainer {
    pub fn create(seed: u64, redundancy_rate: f64, discard_rate: f64) -> Result<Self> {
        let mut hp = HyperParams::desk(seed);
        hp.discard_rate = discard_rate;
        hp.validate()?;
        let records = make_synthetic(&SynthSpec {
            n_claims: 96,
            redundancy_rate,
            seed,
            ..SynthSpec::default()
        });
        let lexicon = Lexicon::from_records(&records);
        let (train_recs, test_recs) = split_records(&records, 64);
        let train = prepare_examples(&train_recs, &lexicon, &hp)?;
        let test = prepare_examples(&test_recs, &lexicon, &hp)?;
        let (model, store) = build_model(&hp, &lexicon, None)?;
        let adam = Adam::new(&store, hp.lr, hp.weight_decay);
        Ok(Self {
            hp,
            lexicon,
            model,
            store,
            adam,
            train,
            test,
            epoch: 0,
        })
    }

    pub fn epoch_value(&mut self) -> Result<Value> {
        let mut total = 0.0;
        let batches: Vec<Vec<&Example>> = self
            .train
            .chunks(self.hp.batch_size)
            .map(|c| c.iter().collect())
            .collect();
        for batch in &batches {
            total += train_step(&self.model, &mut self.store, &mut self.adam, batch)? * batch.len() as f64;
        }
        self.epoch += 1;
        let tr = evaluate(&self.model, &self.store, &self.train)?;
        let te = evaluate(&self.model, &self.store, &self.test)?;
        Ok(json!({
            "epoch": self.epoch,
            "loss": total / self.train.len() as f64,
            "train_f1": tr.metrics.f1_macro,
            "test_f1": te.metrics.f1_macro,
            "test_acc": te.metrics.accuracy(),
        }))
    }

    pub fn inspect_value(&self, index: usize) -> Result<Value> {
        let ex = self
            .test
            .get(index % self.test.len().max(1))
            .ok_or_else(|| get_core::Error::Data("no test claims".into()))?;
        let pred = predict_one(&self.model, &self.store, ex)?;
        let words = |g: &TextGraph| -> Vec<String> {
            g.node_vocab.iter().map(|&i| self.lexicon.words.word(i).to_string()).collect()
        };
        let evidences: Vec<Value> = ex
            .evidences
            .iter()
            .enumerate()
            .map(|(j, (g, _))| {
                json!({
                    "words": words(g),
                    "kept": pred.keep_masks.get(j),
                    "attention": pred.doc_weights.iter().map(|h| h[j]).sum::<f64>() / pred.doc_weights.len() as f64,
                })
            })
            .collect();
        Ok(json!({
            "claim_id": ex.claim_id,
            "claim": words(&ex.claim),
            "gold": ex.label.map(|l| l.as_str()),
            "p_true": pred.p_true,
            "evidences": evidences,
        }))
    }
}

#[wasm_bindgen]
impl Trainer {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, redundancy_rate: f64, discard_rate: f64) -> std::result::Result<Trainer, JsError> {
        Self::create(u64::from(seed), redundancy_rate, discard_rate).map_err(|e| JsError::new(&e.to_string()))
    }

    /// One pass over the training claims; returns loss and F1 as JSON.
    pub fn step(&mut self) -> std::result::Result<String, JsError> {
        js(self.epoch_value())
    }

    /// Prediction with per-evidence attention and kept words for test claim `index`.
    pub fn inspect(&self, index: usize) -> std::result::Result<String, JsError> {
        js(self.inspect_value(index))
    }
}

//! Word co-occurrence graphs built with a sliding window.
//!
//! Within each window the center position is linked to every other
//! position; repeated words collapse into one node, so distant mentions of
//! the same word share a neighbourhood. Adjacency is then normalised as
//! `D^-1/2 (A + I) D^-1/2` with `D_ii = 1 + sum_j A_ij`.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::numcore::Tensor2;

/// A sequence of vocabulary indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<usize>,
}

impl TokenSeq {
    pub fn new(tokens: Vec<usize>) -> Self {
        Self { tokens }
    }

    pub fn raw_len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Splits on Unicode whitespace, lowercases, and strips leading and
/// trailing non-alphanumeric characters. Tokens that are pure punctuation
/// vanish.
pub fn tokenize_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Tokenizes and encodes `text`, mapping unknown words to UNK and keeping at
/// most `max_len` tokens.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSeq {
    let tokens = tokenize_words(text)
        .iter()
        .take(max_len)
        .map(|w| vocab.index_or_unk(w))
        .collect();
    TokenSeq { tokens }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextGraph {
    /// One entry per node, in first-occurrence order.
    pub node_vocab: Vec<usize>,
    /// Symmetric 0/1 matrix with zero diagonal.
    pub adj_raw: Tensor2,
    pub adj_norm: Tensor2,
}

impl TextGraph {
    pub fn n(&self) -> usize {
        self.node_vocab.len()
    }

    /// Undirected edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.adj_raw.get(i, j) != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Merges repeated words. Returns the node list and, for every position,
/// the node it maps to.
pub fn merge_words(tokens: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut node_of: HashMap<usize, usize> = HashMap::new();
    let mut nodes = Vec::new();
    let positions = tokens
        .iter()
        .map(|&t| {
            *node_of.entry(t).or_insert_with(|| {
                nodes.push(t);
                nodes.len() - 1
            })
        })
        .collect();
    (nodes, positions)
}

pub fn build_graph(seq: &TokenSeq, window: usize) -> Result<TextGraph> {
    if window < 2 {
        return Err(Error::Config(format!("window must be >= 2, got {window}")));
    }
    let (node_vocab, node_at) = merge_words(&seq.tokens);
    let n = node_vocab.len();
    let len = seq.tokens.len();
    let mut edges = BTreeSet::new();
    for start in 0..len {
        let end = (start + window).min(len);
        let center = start + (end - start - 1) / 2;
        for pos in (start..end).filter(|&p| p != center) {
            let (a, b) = (node_at[center], node_at[pos]);
            if a != b {
                edges.insert((a.min(b), a.max(b)));
            }
        }
    }
    let mut adj_raw = Tensor2::zeros(n, n);
    for (a, b) in edges {
        adj_raw.set(a, b, 1.0);
        adj_raw.set(b, a, 1.0);
    }
    let adj_norm = normalize(&adj_raw);
    Ok(TextGraph {
        node_vocab,
        adj_raw,
        adj_norm,
    })
}

/// `D^-1/2 (A + I) D^-1/2` where `D_ii = 1 + sum_j A_ij`.
pub fn normalize(adj_raw: &Tensor2) -> Tensor2 {
    let n = adj_raw.rows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / (1.0 + adj_raw.row(i).iter().sum::<f64>()).sqrt())
        .collect();
    let mut out = Tensor2::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let a = adj_raw.get(i, j) + if i == j { 1.0 } else { 0.0 };
            if a != 0.0 {
                out.set(i, j, a * inv_sqrt[i] * inv_sqrt[j]);
            }
        }
    }
    out
}

/// One line of a graph dump file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub claim_id: String,
    /// `"claim"` or `"evidence"`.
    pub role: String,
    /// Evidence position within its claim; absent for claims.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub evidence_index: Option<usize>,
    pub node_words: Vec<String>,
    pub edges: Vec<[usize; 2]>,
    pub adj_norm: Vec<Vec<f64>>,
}

impl GraphRecord {
    pub fn new(
        claim_id: &str,
        role: &str,
        evidence_index: Option<usize>,
        graph: &TextGraph,
        vocab: &Vocabulary,
    ) -> Self {
        Self {
            claim_id: claim_id.to_string(),
            role: role.to_string(),
            evidence_index,
            node_words: graph
                .node_vocab
                .iter()
                .map(|&i| vocab.word(i).to_string())
                .collect(),
            edges: graph.edges().into_iter().map(|(a, b)| [a, b]).collect(),
            adj_norm: graph.adj_norm.to_rows(),
        }
    }
}

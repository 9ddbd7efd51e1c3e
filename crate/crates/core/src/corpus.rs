//! Datasets, vocabularies, pretrained vectors and the synthetic generator.
//!
//! Two tab-separated files describe a corpus:
//!
//! * claims: `claim_id \t label \t speaker \t claim_text`
//! * evidences: `claim_id \t publisher \t evidence_text`
//!
//! Evidences join to claims by `claim_id` and keep file order. Fine-grained
//! labels collapse to two classes at load time.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{init_rng, Tensor2};
use crate::textgraph::{tokenize, tokenize_words, TokenSeq};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    False = 0,
    True = 1,
}

impl Label {
    /// Parses a label column. Empty text or `?` means unlabeled.
    pub fn parse(text: &str) -> std::result::Result<Option<Label>, String> {
        let norm: String = text
            .trim()
            .to_lowercase()
            .chars()
            .map(|c| if c == '-' || c == '_' { ' ' } else { c })
            .collect();
        match norm.split_whitespace().collect::<Vec<_>>().join(" ").as_str() {
            "" | "?" => Ok(None),
            "true" | "mostly true" | "half true" | "1" => Ok(Some(Label::True)),
            "false" | "mostly false" | "pants on fire" | "pants fire" | "0" => {
                Ok(Some(Label::False))
            }
            _ => Err(format!("unknown label {text:?}")),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::True => "true",
            Label::False => "false",
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Label {
        if v == 0 {
            Label::False
        } else {
            Label::True
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvidenceRecord {
    pub publisher: Option<String>,
    pub text: String,
}

/// A claim as read from disk, before encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct ClaimRecord {
    pub claim_id: String,
    pub label: Option<Label>,
    pub speaker: Option<String>,
    pub text: String,
    pub evidences: Vec<EvidenceRecord>,
}

fn opt_field(s: &str) -> Option<String> {
    let s = s.trim();
    (!s.is_empty()).then(|| s.to_string())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Loads and joins a claims file and an evidences file, keeping at most
/// `max_evidences` per claim. Claims or evidences whose text has no tokens
/// and claims left without evidences are dropped with a warning.
pub fn load_dataset(
    claims_path: &Path,
    evidences_path: &Path,
    max_evidences: usize,
) -> Result<Vec<ClaimRecord>> {
    let mut records: Vec<ClaimRecord> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    let reader = BufReader::new(File::open(claims_path)?);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                claims_path,
                lineno,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        if lineno == 1 && fields[0] == "claim_id" {
            continue;
        }
        let claim_id = fields[0].trim().to_string();
        if claim_id.is_empty() {
            return Err(parse_err(claims_path, lineno, "empty claim_id"));
        }
        let label = Label::parse(fields[1]).map_err(|m| parse_err(claims_path, lineno, m))?;
        if by_id.contains_key(&claim_id) {
            return Err(parse_err(
                claims_path,
                lineno,
                format!("duplicate claim_id {claim_id}"),
            ));
        }
        by_id.insert(claim_id.clone(), records.len());
        records.push(ClaimRecord {
            claim_id,
            label,
            speaker: opt_field(fields[2]),
            text: fields[3].to_string(),
            evidences: Vec::new(),
        });
    }

    let reader = BufReader::new(File::open(evidences_path)?);
    let mut orphans = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(3, '\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                evidences_path,
                lineno,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        if lineno == 1 && fields[0] == "claim_id" {
            continue;
        }
        match by_id.get(fields[0].trim()) {
            Some(&idx) => records[idx].evidences.push(EvidenceRecord {
                publisher: opt_field(fields[1]),
                text: fields[2].to_string(),
            }),
            None => orphans += 1,
        }
    }
    if orphans > 0 {
        warn!("{orphans} evidences reference unknown claim ids and were ignored");
    }

    let mut kept = Vec::with_capacity(records.len());
    for mut r in records {
        if tokenize_words(&r.text).is_empty() {
            warn!("claim {} has no tokens; dropped", r.claim_id);
            continue;
        }
        r.evidences.retain(|e| !tokenize_words(&e.text).is_empty());
        if r.evidences.is_empty() {
            warn!("claim {} has no evidences; dropped", r.claim_id);
            continue;
        }
        r.evidences.truncate(max_evidences);
        kept.push(r);
    }
    Ok(kept)
}

fn clean(s: &str) -> String {
    s.chars()
        .map(|c| if matches!(c, '\t' | '\n' | '\r') { ' ' } else { c })
        .collect()
}

pub fn write_dataset(records: &[ClaimRecord], claims_path: &Path, evidences_path: &Path) -> Result<()> {
    let mut cw = BufWriter::new(File::create(claims_path)?);
    let mut ew = BufWriter::new(File::create(evidences_path)?);
    for r in records {
        writeln!(
            cw,
            "{}\t{}\t{}\t{}",
            clean(&r.claim_id),
            r.label.map_or("", Label::as_str),
            clean(r.speaker.as_deref().unwrap_or("")),
            clean(&r.text)
        )?;
        for e in &r.evidences {
            writeln!(
                ew,
                "{}\t{}\t{}",
                clean(&r.claim_id),
                clean(e.publisher.as_deref().unwrap_or("")),
                clean(&e.text)
            )?;
        }
    }
    cw.flush()?;
    ew.flush()?;
    Ok(())
}

/// Word vocabulary with reserved PAD (0) and UNK (1) entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;

    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Self {
            words: vec!["<pad>".into(), "<unk>".into()],
            index: HashMap::new(),
        };
        v.rebuild_index();
        for w in words {
            if !v.index.contains_key(w) {
                v.index.insert(w.to_string(), v.words.len());
                v.words.push(w.to_string());
            }
        }
        v
    }

    /// Every token of every claim and evidence, in first-occurrence order.
    pub fn from_records(records: &[ClaimRecord]) -> Self {
        let mut all = Vec::new();
        for r in records {
            all.extend(tokenize_words(&r.text));
            for e in &r.evidences {
                all.extend(tokenize_words(&e.text));
            }
        }
        Self::from_words(all.iter().map(String::as_str))
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
    }

    /// Restores the lookup map after deserialisation.
    pub fn reindex(mut self) -> Self {
        self.rebuild_index();
        self
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= 2
    }

    pub fn index_or_unk(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(Self::UNK)
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Speaker or publisher names; index 0 is the shared UNK row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideVocab {
    names: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl SideVocab {
    pub const UNK: usize = 0;

    pub fn from_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Self {
            names: vec!["<unk>".into()],
            index: HashMap::new(),
        };
        for n in names {
            if !v.index.contains_key(n) {
                v.index.insert(n.to_string(), v.names.len());
                v.names.push(n.to_string());
            }
        }
        v
    }

    pub fn reindex(mut self) -> Self {
        self.index = self
            .names
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, w)| (w.clone(), i))
            .collect();
        self
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.len() <= 1
    }

    pub fn lookup(&self, name: Option<&str>) -> usize {
        name.and_then(|n| self.index.get(n).copied())
            .unwrap_or(Self::UNK)
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }
}

/// All lookup tables needed to encode raw records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub words: Vocabulary,
    pub speakers: SideVocab,
    pub publishers: SideVocab,
}

impl Lexicon {
    pub fn from_records(records: &[ClaimRecord]) -> Self {
        Self {
            words: Vocabulary::from_records(records),
            speakers: SideVocab::from_names(records.iter().filter_map(|r| r.speaker.as_deref())),
            publishers: SideVocab::from_names(
                records
                    .iter()
                    .flat_map(|r| r.evidences.iter().filter_map(|e| e.publisher.as_deref())),
            ),
        }
    }

    pub fn reindex(self) -> Self {
        Self {
            words: self.words.reindex(),
            speakers: self.speakers.reindex(),
            publishers: self.publishers.reindex(),
        }
    }

    pub fn encode(
        &self,
        r: &ClaimRecord,
        max_claim_len: usize,
        max_evidence_len: usize,
        max_evidences: usize,
    ) -> ClaimInstance {
        ClaimInstance {
            claim_id: r.claim_id.clone(),
            label: r.label,
            speaker: self.speakers.lookup(r.speaker.as_deref()),
            claim: tokenize(&r.text, &self.words, max_claim_len),
            evidences: r
                .evidences
                .iter()
                .take(max_evidences)
                .map(|e| {
                    (
                        tokenize(&e.text, &self.words, max_evidence_len),
                        self.publishers.lookup(e.publisher.as_deref()),
                    )
                })
                .collect(),
        }
    }
}

/// An encoded claim with its evidences and side-information indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ClaimInstance {
    pub claim_id: String,
    pub label: Option<Label>,
    pub speaker: usize,
    pub claim: TokenSeq,
    /// `(tokens, publisher index)` per evidence.
    pub evidences: Vec<(TokenSeq, usize)>,
}

/// Scale of the uniform init given to words without a pretrained vector.
pub const OOV_INIT_BOUND: f64 = 0.05;

/// Word vector table aligned with a [`Vocabulary`].
#[derive(Clone, Debug)]
pub struct WordVectors {
    pub table: Tensor2,
    /// Number of vocabulary words found in the vector file.
    pub found: usize,
}

/// Seeded U(-0.05, 0.05) rows for every word; PAD and UNK rows are zero.
pub fn random_vectors(vocab: &Vocabulary, dim: usize, seed: u64) -> WordVectors {
    let mut table = Tensor2::zeros(vocab.len(), dim);
    for i in 2..vocab.len() {
        let mut rng = init_rng(seed, vocab.word(i));
        for v in table.row_mut(i) {
            *v = rng.gen_range(-OOV_INIT_BOUND..=OOV_INIT_BOUND);
        }
    }
    WordVectors { table, found: 0 }
}

/// Reads a whitespace-separated text vector file (`token v1 .. vD` per
/// line). A leading `count dim` header line is skipped. Vocabulary words
/// absent from the file keep their seeded random row.
pub fn load_embeddings(path: &Path, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<WordVectors> {
    let mut out = random_vectors(vocab, dim, seed);
    let reader = BufReader::new(File::open(path)?);
    let mut file_dim: Option<usize> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        if lineno == 1 && rest.len() == 1 && token.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
            continue;
        }
        let d = rest.len();
        match file_dim {
            None => {
                if d != dim {
                    return Err(Error::Data(format!(
                        "embedding file {} has dimension {d}, configured dimension is {dim}",
                        path.display()
                    )));
                }
                file_dim = Some(d);
            }
            Some(fd) if fd != d => {
                return Err(parse_err(path, lineno, format!("expected {fd} values, found {d}")));
            }
            _ => {}
        }
        let idx = vocab.index_or_unk(token);
        if idx == Vocabulary::UNK || idx == Vocabulary::PAD {
            continue;
        }
        let row = out.table.row_mut(idx);
        for (slot, s) in row.iter_mut().zip(&rest) {
            *slot = s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, lineno, format!("bad number {s:?}")))?;
        }
        out.found += 1;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignalRule {
    /// A class-specific keyword appears in the claim and in exactly one of
    /// its evidences.
    KeywordMatch,
}

impl std::str::FromStr for SignalRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "keyword-match" => Ok(SignalRule::KeywordMatch),
            other => Err(Error::Config(format!("unknown signal rule {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub n_claims: usize,
    /// Size of the shared content vocabulary.
    pub vocab: usize,
    pub distractor_vocab: usize,
    pub keywords_per_class: usize,
    pub n_evidences: usize,
    pub claim_len: usize,
    pub evidence_len: usize,
    /// Fraction of every evidence's tokens drawn from the distractor words.
    pub redundancy_rate: f64,
    pub signal_rule: SignalRule,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_claims: 96,
            vocab: 40,
            distractor_vocab: 40,
            keywords_per_class: 3,
            n_evidences: 3,
            claim_len: 4,
            evidence_len: 20,
            redundancy_rate: 0.5,
            signal_rule: SignalRule::KeywordMatch,
            seed: 7,
        }
    }
}

/// Generates a corpus whose label is fixed by a planted keyword shared by
/// the claim and one of its evidences. True claims draw the keyword from
/// `kt*`, false claims from `kf*`; content words are `c*`, distractors `d*`.
pub fn make_synthetic(spec: &SynthSpec) -> Vec<ClaimRecord> {
    let mut rng = SplitMix64::seed_from_u64(spec.seed);
    let mut labels: Vec<Label> = (0..spec.n_claims)
        .map(|i| if i < spec.n_claims / 2 { Label::True } else { Label::False })
        .collect();
    labels.shuffle(&mut rng);
    let content = |rng: &mut SplitMix64| format!("c{}", rng.gen_range(0..spec.vocab.max(1)));
    let distractor =
        |rng: &mut SplitMix64| format!("d{}", rng.gen_range(0..spec.distractor_vocab.max(1)));
    let rate = spec.redundancy_rate.clamp(0.0, 1.0);
    let n_distract = ((rate * spec.evidence_len as f64).round() as usize).min(spec.evidence_len);

    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let k = rng.gen_range(0..spec.keywords_per_class.max(1));
            let keyword = match label {
                Label::True => format!("kt{k}"),
                Label::False => format!("kf{k}"),
            };
            let mut claim: Vec<String> =
                (1..spec.claim_len.max(1)).map(|_| content(&mut rng)).collect();
            let at = rng.gen_range(0..=claim.len());
            claim.insert(at, keyword.clone());
            let support = rng.gen_range(0..spec.n_evidences.max(1));
            let evidences = (0..spec.n_evidences.max(1))
                .map(|e| {
                    let is_support = e == support;
                    let distract = if is_support {
                        n_distract.min(spec.evidence_len.saturating_sub(1))
                    } else {
                        n_distract
                    };
                    let mut toks: Vec<String> = (0..distract).map(|_| distractor(&mut rng)).collect();
                    let mut n_content = spec.evidence_len - distract;
                    if is_support {
                        toks.push(keyword.clone());
                        n_content = n_content.saturating_sub(1);
                    }
                    toks.extend((0..n_content).map(|_| content(&mut rng)));
                    toks.shuffle(&mut rng);
                    EvidenceRecord {
                        publisher: Some(format!("pub{}", rng.gen_range(0..6))),
                        text: toks.join(" "),
                    }
                })
                .collect();
            ClaimRecord {
                claim_id: format!("syn{i:05}"),
                label: Some(label),
                speaker: Some(format!("spk{}", rng.gen_range(0..4))),
                text: claim.join(" "),
                evidences,
            }
        })
        .collect()
}

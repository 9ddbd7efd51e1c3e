//! Hyperparameters and the line-oriented `key = value` config format.
//!
//! ```text
//! # comment
//! [model]
//! dim = 300
//! discard_rate = 0.4
//! [train]
//! lr = 0.0001
//! ```
//!
//! Every key belongs to exactly one section. Unknown keys are rejected.

use std::fmt::Write as _;

use crate::corpus::SynthSpec;
use crate::error::{Error, Result};

pub struct KeySpec {
    pub section: &'static str,
    pub key: &'static str,
    pub help: &'static str,
}

const fn k(section: &'static str, key: &'static str, help: &'static str) -> KeySpec {
    KeySpec { section, key, help }
}

/// Every hyperparameter key, grouped by section.
pub const HYPER_KEYS: &[KeySpec] = &[
    k("model", "profile", "snopes (5/2 heads), politifact (3/1 heads) or desk (small widths for synthetic runs)"),
    k("model", "dim", "word embedding and node feature width"),
    k("model", "side_dim", "speaker/publisher embedding width"),
    k("model", "window", "sliding window size for graph construction (>= 2)"),
    k("model", "claim_layers", "claim encoder layers"),
    k("model", "esm_layers", "evidence miner layers before the final encoder"),
    k("model", "discard_rate", "fraction of live evidence nodes dropped per miner layer, in [0,1)"),
    k("model", "ssr", "on/off: structure refinement in the miner layers"),
    k("model", "encoder", "on/off: off feeds raw word vectors to the readout"),
    k("model", "score_gating", "on/off: scale kept features by sigmoid(score)"),
    k("model", "word_heads", "word-level attention heads"),
    k("model", "doc_heads", "document-level attention heads"),
    k("model", "mlp_hidden", "classifier hidden width, 0 for a single linear layer"),
    k("data", "max_claim_len", "tokens kept per claim"),
    k("data", "max_evidence_len", "tokens kept per evidence"),
    k("data", "n_evidences", "evidences kept per claim"),
    k("train", "lr", "Adam learning rate"),
    k("train", "weight_decay", "L2 coefficient added to gradients"),
    k("train", "batch_size", "claims per optimizer step"),
    k("train", "max_epochs", "epoch limit"),
    k("train", "patience", "stop after this many epochs without validation F1-macro gain (0 disables)"),
    k("train", "val_fraction", "stratified share of training data held out for early stopping"),
    k("train", "seed", "seed for init, shuffling and splits"),
    k("train", "freeze_words", "on/off: keep word embeddings fixed"),
];

/// Keys of the `[synth]` section, read by [`set_synth`].
pub const SYNTH_KEYS: &[KeySpec] = &[
    k("synth", "n_claims", "number of generated claims"),
    k("synth", "vocab", "content vocabulary size"),
    k("synth", "distractor_vocab", "distractor vocabulary size"),
    k("synth", "keywords_per_class", "planted keywords per label"),
    k("synth", "n_evidences", "evidences per generated claim"),
    k("synth", "claim_len", "tokens per generated claim"),
    k("synth", "evidence_len", "tokens per generated evidence"),
    k("synth", "redundancy_rate", "share of evidence tokens drawn from distractors"),
    k("synth", "signal_rule", "label rule; only keyword-match"),
    k("synth", "seed", "generator seed (defaults to the training seed)"),
];

/// Sets one `[synth]` key on `spec`.
pub fn set_synth(spec: &mut SynthSpec, key: &str, v: &str) -> Result<()> {
    match key {
        "n_claims" => spec.n_claims = num(key, v)?,
        "vocab" => spec.vocab = num(key, v)?,
        "distractor_vocab" => spec.distractor_vocab = num(key, v)?,
        "keywords_per_class" => spec.keywords_per_class = num(key, v)?,
        "n_evidences" => spec.n_evidences = num(key, v)?,
        "claim_len" => spec.claim_len = num(key, v)?,
        "evidence_len" => spec.evidence_len = num(key, v)?,
        "redundancy_rate" => {
            let r: f64 = num(key, v)?;
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("redundancy_rate must be in [0, 1], got {r}")));
            }
            spec.redundancy_rate = r;
        }
        "signal_rule" => spec.signal_rule = v.trim().parse()?,
        "seed" => spec.seed = num(key, v)?,
        other => return Err(Error::Config(format!("unknown key {other:?} in [synth]"))),
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    pub dim: usize,
    pub side_dim: usize,
    pub window: usize,
    pub claim_layers: usize,
    pub esm_layers: usize,
    pub discard_rate: f64,
    pub ssr: bool,
    pub encoder: bool,
    pub score_gating: bool,
    pub word_heads: usize,
    pub doc_heads: usize,
    pub mlp_hidden: usize,
    pub max_claim_len: usize,
    pub max_evidence_len: usize,
    pub n_evidences: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub freeze_words: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            dim: 300,
            side_dim: 128,
            window: 3,
            claim_layers: 1,
            esm_layers: 1,
            discard_rate: 0.4,
            ssr: true,
            encoder: true,
            score_gating: false,
            word_heads: 5,
            doc_heads: 2,
            mlp_hidden: 0,
            max_claim_len: 30,
            max_evidence_len: 100,
            n_evidences: 30,
            lr: 1e-4,
            weight_decay: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            val_fraction: 0.1,
            seed: 42,
            freeze_words: false,
        }
    }
}

pub fn parse_bool(v: &str) -> Result<bool> {
    match v.trim().to_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        other => Err(Error::Config(format!("expected on/off, got {other:?}"))),
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn onoff(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

impl HyperParams {
    /// Small model and fast optimizer settings for synthetic corpora.
    pub fn desk(seed: u64) -> Self {
        Self {
            dim: 16,
            side_dim: 4,
            word_heads: 2,
            doc_heads: 1,
            max_claim_len: 16,
            max_evidence_len: 32,
            n_evidences: 5,
            lr: 0.01,
            weight_decay: 0.0,
            batch_size: 8,
            max_epochs: 30,
            patience: 0,
            seed,
            ..Self::default()
        }
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "profile" => match v.trim() {
                "snopes" => (self.word_heads, self.doc_heads) = (5, 2),
                "politifact" => (self.word_heads, self.doc_heads) = (3, 1),
                "desk" => *self = Self::desk(self.seed),
                other => return Err(Error::Config(format!("unknown profile {other:?}"))),
            },
            "dim" => self.dim = num(key, v)?,
            "side_dim" => self.side_dim = num(key, v)?,
            "window" => self.window = num(key, v)?,
            "claim_layers" => self.claim_layers = num(key, v)?,
            "esm_layers" => self.esm_layers = num(key, v)?,
            "discard_rate" => self.discard_rate = num(key, v)?,
            "ssr" => self.ssr = parse_bool(v)?,
            "encoder" => self.encoder = parse_bool(v)?,
            "score_gating" => self.score_gating = parse_bool(v)?,
            "word_heads" => self.word_heads = num(key, v)?,
            "doc_heads" => self.doc_heads = num(key, v)?,
            "mlp_hidden" => self.mlp_hidden = num(key, v)?,
            "max_claim_len" => self.max_claim_len = num(key, v)?,
            "max_evidence_len" => self.max_evidence_len = num(key, v)?,
            "n_evidences" => self.n_evidences = num(key, v)?,
            "lr" => self.lr = num(key, v)?,
            "weight_decay" => self.weight_decay = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "max_epochs" => self.max_epochs = num(key, v)?,
            "patience" => self.patience = num(key, v)?,
            "val_fraction" => self.val_fraction = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "freeze_words" => self.freeze_words = parse_bool(v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("side_dim", self.side_dim),
            ("word_heads", self.word_heads),
            ("doc_heads", self.doc_heads),
            ("max_claim_len", self.max_claim_len),
            ("max_evidence_len", self.max_evidence_len),
            ("n_evidences", self.n_evidences),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.window < 2 {
            return Err(Error::Config(format!("window must be >= 2, got {}", self.window)));
        }
        if !(0.0..1.0).contains(&self.discard_rate) {
            return Err(Error::Config(format!(
                "discard_rate must be in [0, 1), got {}",
                self.discard_rate
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Renders every key in config-file form; parsing the result gives back
    /// `self`.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for spec in HYPER_KEYS.iter().filter(|s| s.key != "profile") {
            if spec.section != section {
                section = spec.section;
                let _ = writeln!(out, "[{section}]");
            }
            let _ = writeln!(out, "{} = {}", spec.key, self.get(spec.key));
        }
        out
    }

    pub fn get(&self, key: &str) -> String {
        match key {
            "dim" => self.dim.to_string(),
            "side_dim" => self.side_dim.to_string(),
            "window" => self.window.to_string(),
            "claim_layers" => self.claim_layers.to_string(),
            "esm_layers" => self.esm_layers.to_string(),
            "discard_rate" => self.discard_rate.to_string(),
            "ssr" => onoff(self.ssr).into(),
            "encoder" => onoff(self.encoder).into(),
            "score_gating" => onoff(self.score_gating).into(),
            "word_heads" => self.word_heads.to_string(),
            "doc_heads" => self.doc_heads.to_string(),
            "mlp_hidden" => self.mlp_hidden.to_string(),
            "max_claim_len" => self.max_claim_len.to_string(),
            "max_evidence_len" => self.max_evidence_len.to_string(),
            "n_evidences" => self.n_evidences.to_string(),
            "lr" => self.lr.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "max_epochs" => self.max_epochs.to_string(),
            "patience" => self.patience.to_string(),
            "val_fraction" => self.val_fraction.to_string(),
            "seed" => self.seed.to_string(),
            "freeze_words" => onoff(self.freeze_words).into(),
            _ => String::new(),
        }
    }

    /// Applies entries from [`parse_config`]. Entries outside the
    /// hyperparameter sections are returned untouched for the caller.
    pub fn apply_entries(&mut self, entries: Vec<ConfigEntry>) -> Result<Vec<ConfigEntry>> {
        let mut rest = Vec::new();
        for e in entries {
            match HYPER_KEYS.iter().find(|s| s.key == e.key) {
                Some(spec) if spec.section == e.section => self
                    .set(&e.key, &e.value)
                    .map_err(|err| Error::Config(format!("line {}: {err}", e.line)))?,
                Some(spec) => {
                    return Err(Error::Config(format!(
                        "line {}: key {} belongs in [{}], found in [{}]",
                        e.line, e.key, spec.section, e.section
                    )))
                }
                None if ["model", "data", "train"].contains(&e.section.as_str()) => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key {} in [{}]",
                        e.line, e.key, e.section
                    )))
                }
                None => rest.push(e),
            }
        }
        Ok(rest)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigEntry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Splits config text into `(section, key, value)` entries. `#` and `;`
/// start comments; keys before any section header are an error.
pub fn parse_config(text: &str) -> Result<Vec<ConfigEntry>> {
    let mut section: Option<String> = None;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(name.trim().to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        let section = section
            .clone()
            .ok_or_else(|| Error::Config(format!("line {}: key outside a [section]", i + 1)))?;
        out.push(ConfigEntry {
            section,
            key: key.trim().to_string(),
            value: value.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        HyperParams::default().validate().unwrap();
    }

    #[test]
    fn config_round_trip() {
        let mut hp = HyperParams::default();
        hp.set("discard_rate", "0.2").unwrap();
        hp.set("score_gating", "on").unwrap();
        hp.set("lr", "0.003").unwrap();
        let text = hp.to_config_string();
        let mut back = HyperParams::default();
        let rest = back.apply_entries(parse_config(&text).unwrap()).unwrap();
        assert!(rest.is_empty());
        assert_eq!(back, hp);
    }

    #[test]
    fn unknown_and_misplaced_keys_rejected() {
        let mut hp = HyperParams::default();
        let e = hp
            .apply_entries(parse_config("[model]\nbogus = 1\n").unwrap())
            .unwrap_err();
        assert!(e.to_string().contains("unknown key bogus"));
        let e = hp
            .apply_entries(parse_config("[train]\ndim = 8\n").unwrap())
            .unwrap_err();
        assert!(e.to_string().contains("belongs in [model]"));
        assert!(parse_config("dim = 3").is_err());
    }

    #[test]
    fn profile_sets_heads() {
        let mut hp = HyperParams::default();
        hp.set("profile", "politifact").unwrap();
        assert_eq!((hp.word_heads, hp.doc_heads), (3, 1));
    }

    #[test]
    fn synth_keys_all_settable() {
        let mut spec = SynthSpec::default();
        for key in SYNTH_KEYS {
            let v = if key.key == "signal_rule" { "keyword-match" } else { "1" };
            set_synth(&mut spec, key.key, v).unwrap();
        }
        assert!(set_synth(&mut spec, "redundancy_rate", "1.5").is_err());
        assert!(set_synth(&mut spec, "nope", "1").is_err());
    }

    #[test]
    fn hyper_keys_all_round_trip_through_get() {
        let hp = HyperParams::default();
        for key in HYPER_KEYS.iter().filter(|k| k.key != "profile") {
            let mut other = HyperParams::default();
            other.set(key.key, &hp.get(key.key)).unwrap();
            assert_eq!(other, hp, "{}", key.key);
        }
    }

    #[test]
    fn validation_catches_bad_rate() {
        let hp = HyperParams {
            discard_rate: 1.0,
            ..HyperParams::default()
        };
        assert!(hp.validate().is_err());
    }
}

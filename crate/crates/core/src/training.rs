//! Objective, optimizer, metrics, early-stopped training and k-fold CV.

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::config::HyperParams;
use crate::error::{Error, Result};
use crate::model::{Example, GetModel, Prediction};
use crate::numcore::tape::PROB_CLAMP;
use crate::numcore::{Grads, ParamStore, Tape, Tensor2};

/// `-(y ln p + (1 - y) ln(1 - p))` with `p` clamped away from 0 and 1.
pub fn bce_loss(p_true: f64, label: u8) -> f64 {
    let p = p_true.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let y = f64::from(label);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Adam with L2 weight decay folded into the gradient.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Option<Tensor2>>,
    v: Vec<Option<Tensor2>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: vec![None; store.len()],
            v: vec![None; store.len()],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of every trainable parameter. A parameter the loss never
    /// reached is treated as having zero gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient contains NaN or infinity".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for id in store.ids().collect::<Vec<_>>() {
            if !store.is_trainable(id) {
                continue;
            }
            let (rows, cols) = store.get(id).shape();
            let m = self.m[id.index()].get_or_insert_with(|| Tensor2::zeros(rows, cols));
            let v = self.v[id.index()].get_or_insert_with(|| Tensor2::zeros(rows, cols));
            let g = grads.get(id);
            let theta = store.get_mut(id).data_mut();
            #[allow(clippy::needless_range_loop)]
            for k in 0..theta.len() {
                let grad = g.map_or(0.0, |g| g.data()[k]) + self.weight_decay * theta[k];
                let mk = &mut m.data_mut()[k];
                *mk = self.beta1 * *mk + (1.0 - self.beta1) * grad;
                let vk = &mut v.data_mut()[k];
                *vk = self.beta2 * *vk + (1.0 - self.beta2) * grad * grad;
                let m_hat = *mk / bc1;
                let v_hat = *vk / bc2;
                theta[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassScores {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        // Count form of 2PR / (P + R); exact for the pooled micro case,
        // where it reduces to accuracy.
        Self {
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
        }
    }
}

/// Binary confusion-derived metrics. Class 1 ("true news") is the `-T`
/// positive class, class 0 ("fake news") the `-F` one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub f1_macro: f64,
    pub f1_micro: f64,
    pub true_class: ClassScores,
    pub false_class: ClassScores,
}

pub const TABLE_COLUMNS: [&str; 8] = ["F1-Ma", "F1-Mi", "F1-T", "P-T", "R-T", "F1-F", "P-F", "R-F"];

impl Metrics {
    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.tp + self.fp + self.fn_ + self.tn)
    }

    pub fn columns(&self) -> [f64; 8] {
        [
            self.f1_macro,
            self.f1_micro,
            self.true_class.f1,
            self.true_class.precision,
            self.true_class.recall,
            self.false_class.f1,
            self.false_class.precision,
            self.false_class.recall,
        ]
    }

    /// Fieldwise mean of the rate columns; counts are summed.
    pub fn mean(all: &[Metrics]) -> Metrics {
        let n = all.len().max(1) as f64;
        let avg = |f: &dyn Fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / n;
        let class = |pick: &dyn Fn(&Metrics) -> ClassScores| ClassScores {
            precision: avg(&|m| pick(m).precision),
            recall: avg(&|m| pick(m).recall),
            f1: avg(&|m| pick(m).f1),
        };
        Metrics {
            tp: all.iter().map(|m| m.tp).sum(),
            fp: all.iter().map(|m| m.fp).sum(),
            fn_: all.iter().map(|m| m.fn_).sum(),
            tn: all.iter().map(|m| m.tn).sum(),
            f1_macro: avg(&|m| m.f1_macro),
            f1_micro: avg(&|m| m.f1_micro),
            true_class: class(&|m| m.true_class),
            false_class: class(&|m| m.false_class),
        }
    }
}

pub fn table_header() -> String {
    TABLE_COLUMNS
        .iter()
        .map(|c| format!("{c:>7}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn table_row(m: &Metrics) -> String {
    m.columns()
        .iter()
        .map(|v| format!("{v:>7.3}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn compute_metrics(preds: &[u8], labels: &[u8]) -> Result<Metrics> {
    if preds.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Data("metrics over an empty set".into()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &y) in preds.iter().zip(labels) {
        match (p != 0, y != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let true_class = ClassScores::from_counts(tp, fp, fn_);
    let false_class = ClassScores::from_counts(tn, fn_, fp);
    // Pooled over both classes: every error is one FP and one FN.
    let micro = ClassScores::from_counts(tp + tn, fp + fn_, fn_ + fp);
    Ok(Metrics {
        tp,
        fp,
        fn_,
        tn,
        f1_macro: (true_class.f1 + false_class.f1) / 2.0,
        f1_micro: micro.f1,
        true_class,
        false_class,
    })
}

/// Forward pass without gradients.
pub fn predict_one(model: &GetModel, store: &ParamStore, ex: &Example) -> Result<Prediction> {
    let mut tape = Tape::new(store);
    model.forward(&mut tape, ex)
}

#[cfg(feature = "parallel")]
fn map_examples<T: Send>(
    examples: &[Example],
    f: impl Fn(&Example) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    use rayon::prelude::*;
    examples.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_examples<T: Send>(examples: &[Example], f: impl Fn(&Example) -> Result<T>) -> Result<Vec<T>> {
    examples.iter().map(f).collect()
}

/// `P(true)` for each example, in order.
pub fn predict_all(model: &GetModel, store: &ParamStore, examples: &[Example]) -> Result<Vec<f64>> {
    map_examples(examples, |ex| Ok(predict_one(model, store, ex)?.p_true))
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub mean_loss: f64,
    pub p_true: Vec<f64>,
}

pub fn evaluate(model: &GetModel, store: &ParamStore, examples: &[Example]) -> Result<Evaluation> {
    let p_true = predict_all(model, store, examples)?;
    let labels = examples
        .iter()
        .map(Example::label_u8)
        .collect::<Result<Vec<_>>>()?;
    let preds: Vec<u8> = p_true.iter().map(|&p| u8::from(p >= 0.5)).collect();
    let metrics = compute_metrics(&preds, &labels)?;
    let mean_loss = p_true
        .iter()
        .zip(&labels)
        .map(|(&p, &y)| bce_loss(p, y))
        .sum::<f64>()
        / labels.len() as f64;
    Ok(Evaluation {
        metrics,
        mean_loss,
        p_true,
    })
}

/// Mean batch loss and accumulated gradients, without updating anything.
pub fn batch_gradients(
    model: &GetModel,
    store: &ParamStore,
    batch: &[&Example],
) -> Result<(f64, Grads)> {
    let mut grads = Grads::for_store(store);
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for ex in batch {
        let mut tape = Tape::new(store);
        let (loss, _) = model.loss(&mut tape, ex)?;
        let v = tape.value(loss).get(0, 0);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("loss {v} on claim {}", ex.claim_id)));
        }
        total += v;
        tape.backward(loss, scale);
        tape.accumulate_param_grads(&mut grads);
    }
    Ok((total * scale, grads))
}

/// One optimizer step on `batch`; returns the pre-step mean loss.
pub fn train_step(
    model: &GetModel,
    store: &mut ParamStore,
    adam: &mut Adam,
    batch: &[&Example],
) -> Result<f64> {
    let (loss, grads) = batch_gradients(model, store, batch)?;
    adam.step(store, &grads)?;
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(rename = "val_F1_Ma")]
    pub val_f1_ma: f64,
    #[serde(rename = "val_F1_Mi")]
    pub val_f1_mi: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub log: Vec<EpochLog>,
    /// True when the patience rule ended training before `max_epochs`.
    pub stopped_early: bool,
}

const SHUFFLE_STREAM: u64 = 0x5348_5546_464c_4521;

/// Mini-batch training with per-epoch validation. On return `store` holds
/// the parameters of the best epoch (strictly highest validation F1-macro,
/// earliest on ties).
pub fn train(
    model: &GetModel,
    store: &mut ParamStore,
    train_set: &[Example],
    val_set: &[Example],
    hp: &HyperParams,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Data("empty training or validation split".into()));
    }
    let mut adam = Adam::new(store, hp.lr, hp.weight_decay);
    let mut rng = SplitMix64::seed_from_u64(hp.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(usize, f64, ParamStore)> = None;
    let mut log = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=hp.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(hp.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            loss_sum += train_step(model, store, &mut adam, &batch)? * batch.len() as f64;
        }
        let val = evaluate(model, store, val_set)?;
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_f1_ma: val.metrics.f1_macro,
            val_f1_mi: val.metrics.f1_micro,
            lr: hp.lr,
        };
        on_epoch(&entry);
        log.push(entry);

        let improved = best.as_ref().is_none_or(|(_, f1, _)| val.metrics.f1_macro > *f1);
        if improved {
            best = Some((epoch, val.metrics.f1_macro, store.clone()));
        } else if hp.patience > 0 {
            let best_epoch = best.as_ref().map_or(0, |b| b.0);
            if epoch - best_epoch >= hp.patience {
                info!("early stop at epoch {epoch}, best epoch {best_epoch}");
                stopped_early = true;
                break;
            }
        }
    }
    let (best_epoch, best_val_f1, best_store) = best.expect("at least one epoch");
    *store = best_store;
    Ok(TrainOutcome {
        best_epoch,
        best_val_f1,
        log,
        stopped_early,
    })
}

/// Per-class seeded shuffle, then a share of each class goes to the
/// held-out side. Returns `(kept, held_out)` index lists in ascending order.
pub fn stratified_split(labels: &[u8], held_out: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let (mut kept, mut out) = (Vec::new(), Vec::new());
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_out = (held_out * idx.len() as f64).round() as usize;
        let n_out = if held_out > 0.0 && idx.len() > 1 { n_out.max(1) } else { n_out };
        let n_out = n_out.min(idx.len().saturating_sub(1));
        out.extend_from_slice(&idx[..n_out]);
        kept.extend_from_slice(&idx[n_out..]);
    }
    kept.sort_unstable();
    out.sort_unstable();
    (kept, out)
}

/// Stratified fold assignment: each class is shuffled, then dealt
/// round-robin with one counter shared across classes so fold sizes differ
/// by at most one.
pub fn stratified_folds(labels: &[u8], folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            out[next % folds].push(i);
            next += 1;
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

#[derive(Clone, Debug)]
pub struct FoldResult {
    pub fold: usize,
    pub metrics: Metrics,
    pub outcome: TrainOutcome,
}

#[derive(Clone, Debug)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub mean: Metrics,
}

/// k-fold cross-validation: train on k - 1 folds (with a stratified
/// validation carve-out for early stopping), test on the remaining fold.
/// `build` creates a fresh model and parameter store for every fold.
pub fn cross_validate(
    examples: &[Example],
    hp: &HyperParams,
    folds: usize,
    build: impl Fn() -> Result<(GetModel, ParamStore)>,
    mut on_epoch: impl FnMut(usize, &EpochLog),
) -> Result<CvReport> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    let labels = examples
        .iter()
        .map(Example::label_u8)
        .collect::<Result<Vec<_>>>()?;
    if examples.len() < folds {
        return Err(Error::Data(format!("{} examples cannot fill {folds} folds", examples.len())));
    }
    let assignment = stratified_folds(&labels, folds, hp.seed);
    let mut results = Vec::with_capacity(folds);
    for (f, test_idx) in assignment.iter().enumerate() {
        let test: Vec<Example> = test_idx.iter().map(|&i| examples[i].clone()).collect();
        let test_labels: Vec<u8> = test_idx.iter().map(|&i| labels[i]).collect();
        if test_labels.iter().all(|&l| l == test_labels[0]) {
            warn!("fold {f} test split holds a single class");
        }
        let train_idx: Vec<usize> = (0..examples.len()).filter(|i| !test_idx.contains(i)).collect();
        let train_labels: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
        let (fit_pos, val_pos) = stratified_split(&train_labels, hp.val_fraction, hp.seed ^ f as u64);
        let fit: Vec<Example> = fit_pos.iter().map(|&p| examples[train_idx[p]].clone()).collect();
        let val: Vec<Example> = if val_pos.is_empty() {
            fit.clone()
        } else {
            val_pos.iter().map(|&p| examples[train_idx[p]].clone()).collect()
        };
        let (model, mut store) = build()?;
        let outcome = train(&model, &mut store, &fit, &val, hp, |e| on_epoch(f, e))?;
        let metrics = evaluate(&model, &store, &test)?.metrics;
        results.push(FoldResult {
            fold: f,
            metrics,
            outcome,
        });
    }
    let mean = Metrics::mean(&results.iter().map(|r| r.metrics).collect::<Vec<_>>());
    Ok(CvReport {
        folds: results,
        mean,
    })
}

//! Central-difference verification of tape gradients.

use super::params::{Grads, ParamId, ParamStore};
use super::tape::{NodeId, Tape};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub entries_checked: usize,
    /// Every checked entry, in parameter order.
    pub entries: Vec<GradEntry>,
    /// Loss value at the unperturbed parameters.
    pub loss: f64,
}

/// Relative error used throughout: `|a - n| / max(1e-8, |a| + |n|)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn eval_loss<F>(store: &ParamStore, f: &mut F) -> Result<f64>
where
    F: FnMut(&mut Tape<'_>) -> Result<NodeId>,
{
    let mut tape = Tape::new(store);
    let loss = f(&mut tape)?;
    let v = tape.value(loss);
    if v.shape() != (1, 1) {
        return Err(Error::shape("grad_check loss", v.shape(), (1, 1)));
    }
    let v = v.get(0, 0);
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("loss evaluated to {v}")));
    }
    Ok(v)
}

/// Compares the analytic gradient of every trainable parameter entry with
/// `(f(p + eps) - f(p - eps)) / (2 eps)`.
pub fn grad_check<F>(store: &mut ParamStore, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<'_>) -> Result<NodeId>,
{
    let ids: Vec<ParamId> = store.ids().filter(|&id| store.is_trainable(id)).collect();
    grad_check_params(store, eps, &ids, f)
}

/// As [`grad_check`], restricted to `ids`.
pub fn grad_check_params<F>(
    store: &mut ParamStore,
    eps: f64,
    ids: &[ParamId],
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<'_>) -> Result<NodeId>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Config(format!("grad_check eps {eps} outside [1e-7, 1e-3]")));
    }
    let mut grads = Grads::for_store(store);
    let loss = {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        let v = tape.value(loss).get(0, 0);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("loss evaluated to {v}")));
        }
        tape.backward(loss, 1.0);
        tape.accumulate_param_grads(&mut grads);
        v
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        entries_checked: 0,
        entries: Vec::new(),
        loss,
    };
    for &id in ids {
        for k in 0..store.get(id).len() {
            let orig = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = orig + eps;
            let plus = eval_loss(store, &mut f);
            store.get_mut(id).data_mut()[k] = orig - eps;
            let minus = eval_loss(store, &mut f);
            store.get_mut(id).data_mut()[k] = orig;
            let numeric = (plus? - minus?) / (2.0 * eps);
            let analytic = grads.entry(id, k);
            let err = rel_err(analytic, numeric);
            report.entries_checked += 1;
            report.entries.push(GradEntry {
                param: store.name(id).to_string(),
                index: k,
                analytic,
                numeric,
                rel_err: err,
            });
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = err;
                report.worst = Some((store.name(id).to_string(), k));
                report.worst_analytic = analytic;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}

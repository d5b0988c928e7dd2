use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::{compute_metrics, MetricsReport};
use super::radam::Radam;
use crate::autodiff::Tape;
use crate::data::Ddi;
use crate::error::{Error, Result};
use crate::model::{GraphInputs, Model};

/// Loss terms of one optimisation step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub batch: usize,
    pub total: f64,
    pub ce: f64,
    pub ss1: f64,
    pub ss2: f64,
}

impl LossRecord {
    pub const HEADER: &'static str = "epoch\tbatch\tL\tL_ce\tl_ss1\tl_ss2";

    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.epoch, self.batch, self.total, self.ce, self.ss1, self.ss2
        )
    }
}

pub fn loss_log_text(records: &[LossRecord]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", LossRecord::HEADER);
    for r in records {
        let _ = writeln!(s, "{}", r.to_line());
    }
    s
}

/// Splits `len` items into batches of `size`, folding a trailing singleton into the previous batch.
fn batch_bounds(len: usize, size: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..len).step_by(size).map(|s| (s, (s + size).min(len))).collect();
    if out.len() > 1 && out.last().is_some_and(|&(s, e)| e - s == 1) {
        let (_, end) = out.pop().expect("nonempty");
        out.last_mut().expect("nonempty").1 = end;
    }
    out
}

/// Runs `hp.epochs` epochs of RAdam over both orders of every training interaction.
///
/// `on_batch` sees each record as soon as its step is applied.
pub fn train(
    model: &mut Model,
    inputs: &GraphInputs,
    samples: &[Ddi],
    mut on_batch: impl FnMut(&LossRecord) -> Result<()>,
) -> Result<Vec<LossRecord>> {
    if samples.is_empty() {
        return Err(Error::config("the training fold has no interactions"));
    }
    model.check_inputs(inputs)?;
    let hp = model.hp.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed.wrapping_add(0x5eed));
    let mut opt = Radam::new(hp.lr);
    let mut ordered: Vec<((usize, usize), usize)> = samples
        .iter()
        .flat_map(|d| [((d.a, d.b), d.event), ((d.b, d.a), d.event)])
        .collect();
    let mut records = Vec::new();
    for epoch in 0..hp.epochs {
        ordered.shuffle(&mut rng);
        for (batch, (start, end)) in batch_bounds(ordered.len(), hp.batch_size).into_iter().enumerate() {
            let chunk = &ordered[start..end];
            let pairs: Vec<(usize, usize)> = chunk.iter().map(|c| c.0).collect();
            let labels: Vec<usize> = chunk.iter().map(|c| c.1).collect();
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, true);
            let terms = model.training_loss(&mut tape, &bound, inputs, &pairs, &labels, &mut rng)?;
            let record = LossRecord {
                epoch,
                batch,
                total: tape.value(terms.total).item(),
                ce: tape.value(terms.ce).item(),
                ss1: tape.value(terms.ss1).item(),
                ss2: tape.value(terms.ss2).item(),
            };
            if !record.total.is_finite() {
                let last = records
                    .last()
                    .map_or("none".to_string(), |r: &LossRecord| format!("epoch {} batch {}", r.epoch, r.batch));
                return Err(Error::Numerical(format!(
                    "loss became {} at epoch {epoch} batch {batch}; last good batch: {last}",
                    record.total
                )));
            }
            tape.backward(terms.total)?;
            let grads: BTreeMap<String, _> = bound
                .iter()
                .filter_map(|(name, v)| tape.grad(v).map(|g| (name.to_string(), g.clone())))
                .collect();
            opt.step(&mut model.params, &grads).map_err(|e| match e {
                Error::Numerical(m) => Error::Numerical(format!("{m} (epoch {epoch} batch {batch})")),
                other => other,
            })?;
            on_batch(&record)?;
            records.push(record);
        }
    }
    Ok(records)
}

/// Eval-mode metrics over interactions, each scored as the average of both pair orders.
pub fn evaluate(model: &mut Model, inputs: &GraphInputs, samples: &[Ddi]) -> Result<MetricsReport> {
    let pairs: Vec<(usize, usize)> = samples.iter().map(|d| (d.a, d.b)).collect();
    let labels: Vec<usize> = samples.iter().map(|d| d.event).collect();
    let probs = model.predict(inputs, &pairs)?;
    compute_metrics(&probs, &labels)
}

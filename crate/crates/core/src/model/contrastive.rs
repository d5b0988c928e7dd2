use crate::autodiff::{Tape, Tensor, Var};
use crate::data::Ddi;
use crate::error::{Error, Result};

/// Binary `[N, R]` matrix: entry `(i, r)` is 1 when drug `i` has a training interaction of type `r`.
pub fn interaction_characteristics(train: &[Ddi], num_drugs: usize, num_relations: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[num_drugs, num_relations]);
    for ddi in train {
        if ddi.b >= num_drugs || ddi.event >= num_relations {
            return Err(Error::data(format!(
                "interaction ({}, {}, {}) outside {num_drugs} drugs / {num_relations} relations",
                ddi.a, ddi.b, ddi.event
            )));
        }
        t.set(ddi.a, ddi.event, 1.0);
        t.set(ddi.b, ddi.event, 1.0);
    }
    Ok(t)
}

/// `c_k = t_i + t_j` for every pair.
pub fn pair_characteristics(chars: &Tensor, pairs: &[(usize, usize)]) -> Vec<Vec<f64>> {
    pairs
        .iter()
        .map(|&(i, j)| chars.row(i).iter().zip(chars.row(j)).map(|(a, b)| a + b).collect())
        .collect()
}

/// Cosine similarity; `None` when either vector is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> Option<f64> {
    let nu: f64 = u.iter().map(|x| x * x).sum();
    let nv: f64 = v.iter().map(|x| x * x).sum();
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    // One square root keeps parallel integer vectors at exactly 1.
    Some(dot / (nu * nv).sqrt())
}

/// Ordered positive and negative index pairs within one batch.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ContrastivePairs {
    pub positive: Vec<(usize, usize)>,
    pub negative: Vec<(usize, usize)>,
}

impl ContrastivePairs {
    pub fn is_empty(&self) -> bool {
        self.positive.is_empty() && self.negative.is_empty()
    }
}

pub fn select_contrastive_pairs(chars: &[Vec<f64>], t_pos: f64, t_neg: f64) -> ContrastivePairs {
    let mut out = ContrastivePairs::default();
    for (k, ck) in chars.iter().enumerate() {
        for (q, cq) in chars.iter().enumerate() {
            let Some(s) = cosine(ck, cq) else { continue };
            if s >= t_pos {
                out.positive.push((k, q));
            } else if s <= t_neg {
                out.negative.push((k, q));
            }
        }
    }
    out
}

/// `sigmoid(a · W · bᵀ)` for every row pair, `[rows(a), rows(b)]`.
pub fn discriminator_scores(tape: &mut Tape, a: Var, w: Var, b: Var) -> Result<Var> {
    let aw = tape.matmul(a, w)?;
    let bt = tape.transpose(b)?;
    let logits = tape.matmul(aw, bt)?;
    Ok(tape.sigmoid(logits))
}

/// The two mirrored cross-view losses, sharing one discriminator matrix.
pub fn contrastive_losses(
    tape: &mut Tape,
    embed: Var,
    initi: Var,
    w: Var,
    pairs: &ContrastivePairs,
) -> Result<(Var, Var)> {
    let s1 = discriminator_scores(tape, embed, w, initi)?;
    let l1 = tape.pair_bce(s1, &pairs.positive, &pairs.negative)?;
    let s2 = discriminator_scores(tape, initi, w, embed)?;
    let l2 = tape.pair_bce(s2, &pairs.positive, &pairs.negative)?;
    Ok((l1, l2))
}

use std::collections::BTreeSet;

use super::dataset::{Attribute, Dataset};
use crate::autodiff::Tensor;

/// `|U ∩ V| / |U ∪ V|`, with two empty sets scoring 0.
pub fn jaccard_similarity(u: &BTreeSet<String>, v: &BTreeSet<String>) -> f64 {
    let inter = u.intersection(v).count();
    let union = u.len() + v.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Pairwise Jaccard similarity of all drugs under one attribute, `[N, N]`.
pub fn similarity_block(ds: &Dataset, attr: Attribute) -> Tensor {
    let n = ds.num_drugs();
    let mut out = Tensor::zeros(&[n, n]);
    for i in 0..n {
        let u = ds.drugs[i].descriptors(attr);
        for j in i..n {
            let s = jaccard_similarity(u, ds.drugs[j].descriptors(attr));
            out.set(i, j, s);
            out.set(j, i, s);
        }
    }
    out
}

/// Initial drug features `[N, 3N]`: substructure, enzyme and target blocks side by side.
pub fn build_initial_features(ds: &Dataset) -> Tensor {
    let n = ds.num_drugs();
    let blocks: Vec<Tensor> = Attribute::ALL.iter().map(|a| similarity_block(ds, *a)).collect();
    let mut data = Vec::with_capacity(n * 3 * n);
    for i in 0..n {
        for b in &blocks {
            data.extend_from_slice(b.row(i));
        }
    }
    Tensor::new(vec![n, 3 * n], data).expect("feature length matches shape")
}

//! Interaction and similarity graphs with symmetric degree normalisation.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::autodiff::{SparseMatrix, Tensor};
use crate::data::{similarity_block, Attribute, Dataset, Ddi};
use crate::error::{Error, Result};

/// One symmetric binary adjacency matrix per event type.
#[derive(Clone, Debug)]
pub struct MultiRelAdjacency {
    pub relations: Vec<SparseMatrix>,
    /// Number of distinct event types each drug takes part in.
    pub relation_counts: Vec<usize>,
}

pub fn build_ddi_adjacency(ddis: &[Ddi], num_drugs: usize, num_relations: usize) -> Result<MultiRelAdjacency> {
    let mut edges: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); num_relations];
    for ddi in ddis {
        if ddi.a == ddi.b {
            return Err(Error::data(format!("self interaction on drug {}", ddi.a)));
        }
        if ddi.b >= num_drugs || ddi.a >= num_drugs {
            return Err(Error::data(format!("drug index {} out of range", ddi.a.max(ddi.b))));
        }
        if ddi.event >= num_relations {
            return Err(Error::data(format!("event type {} outside 0..{num_relations}", ddi.event)));
        }
        edges[ddi.event].insert((ddi.a, ddi.b));
        edges[ddi.event].insert((ddi.b, ddi.a));
    }
    let mut relation_counts = vec![0; num_drugs];
    let mut relations = Vec::with_capacity(num_relations);
    for set in &edges {
        let mut touched = BTreeSet::new();
        let triplets: Vec<_> = set
            .iter()
            .map(|&(i, j)| {
                touched.insert(i);
                (i, j, 1.0)
            })
            .collect();
        for d in touched {
            relation_counts[d] += 1;
        }
        relations.push(SparseMatrix::from_triplets(num_drugs, num_drugs, &triplets)?);
    }
    Ok(MultiRelAdjacency {
        relations,
        relation_counts,
    })
}

impl MultiRelAdjacency {
    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// `diag(1/R_i) · Â_r` for every relation; rows of drugs with `R_i = 0` are empty.
    pub fn relational_operators(&self) -> Result<Vec<Arc<SparseMatrix>>> {
        let inv: Vec<f64> = self
            .relation_counts
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 })
            .collect();
        self.relations
            .iter()
            .map(|a| Ok(Arc::new(normalize_sparse(a)?.scale_rows(&inv))))
            .collect()
    }
}

fn normalized_weight(w: f64, di: f64, dj: f64) -> f64 {
    if di > 0.0 && dj > 0.0 {
        w / (di * dj).sqrt()
    } else {
        0.0
    }
}

/// `D^{-1/2} A D^{-1/2}` of a sparse symmetric nonnegative matrix.
pub fn normalize_sparse(a: &SparseMatrix) -> Result<SparseMatrix> {
    if a.rows() != a.cols() {
        return Err(Error::contract(format!("adjacency must be square, got {}x{}", a.rows(), a.cols())));
    }
    for (i, j, w) in a.triplets() {
        if w < 0.0 {
            return Err(Error::contract(format!("negative adjacency weight at ({i}, {j})")));
        }
        if a.get(j, i) != w {
            return Err(Error::contract(format!("adjacency is not symmetric at ({i}, {j})")));
        }
    }
    let d = a.row_sums();
    Ok(a.map_entries(|i, j, w| normalized_weight(w, d[i], d[j])))
}

/// Dense counterpart of [`normalize_sparse`].
pub fn normalize_dense(a: &Tensor) -> Result<Tensor> {
    let (n, m) = a.dims2()?;
    if n != m {
        return Err(Error::contract(format!("adjacency must be square, got {n}x{m}")));
    }
    let mut degrees = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let w = a.at(i, j);
            if w < 0.0 || !w.is_finite() {
                return Err(Error::contract(format!("invalid adjacency weight {w} at ({i}, {j})")));
            }
            if w != a.at(j, i) {
                return Err(Error::contract(format!("adjacency is not symmetric at ({i}, {j})")));
            }
            degrees[i] += w;
        }
    }
    let mut out = a.clone();
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, normalized_weight(a.at(i, j), degrees[i], degrees[j]));
        }
    }
    Ok(out)
}

/// `a^n` by repeated multiplication; `a^0` is the identity.
pub fn matrix_power(a: &Tensor, n: usize) -> Result<Tensor> {
    let (r, c) = a.dims2()?;
    if r != c {
        return Err(Error::shape(format!("matrix power needs a square matrix, got {r}x{c}")));
    }
    let mut out = Tensor::identity(r);
    for _ in 0..n {
        out = out.matmul(a)?;
    }
    Ok(out)
}

/// Normalised graph with memoised powers, handed to the tape as constant operators.
#[derive(Clone, Debug)]
pub struct PowerCache {
    normalized: Tensor,
    powers: HashMap<usize, Arc<SparseMatrix>>,
}

impl PowerCache {
    pub fn new(adjacency: &Tensor) -> Result<Self> {
        Ok(PowerCache {
            normalized: normalize_dense(adjacency)?,
            powers: HashMap::new(),
        })
    }

    pub fn normalized(&self) -> &Tensor {
        &self.normalized
    }

    pub fn power(&mut self, n: usize) -> Result<Arc<SparseMatrix>> {
        if let Some(p) = self.powers.get(&n) {
            return Ok(Arc::clone(p));
        }
        let p = Arc::new(SparseMatrix::from_dense(&matrix_power(&self.normalized, n)?)?);
        self.powers.insert(n, Arc::clone(&p));
        Ok(p)
    }
}

/// Per-attribute Jaccard adjacency, indexed by [`Attribute::index`].
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityAdjacency {
    pub matrices: [Tensor; 3],
}

impl SimilarityAdjacency {
    pub fn get(&self, attr: Attribute) -> &Tensor {
        &self.matrices[attr.index()]
    }
}

pub fn build_dds_adjacency(ds: &Dataset) -> SimilarityAdjacency {
    SimilarityAdjacency {
        matrices: Attribute::ALL.map(|a| similarity_block(ds, a)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn empty_and_single_edge() {
        let adj = build_ddi_adjacency(&[], 3, 2).unwrap();
        assert!(adj.relations.iter().all(|a| a.nnz() == 0));
        assert_eq!(adj.relation_counts, vec![0, 0, 0]);

        let adj = build_ddi_adjacency(&[Ddi::new(0, 1, 2)], 3, 3).unwrap();
        assert_eq!(adj.relations[2].triplets(), vec![(0, 1, 1.0), (1, 0, 1.0)]);
        assert_eq!(adj.relation_counts, vec![1, 1, 0]);
    }

    #[test]
    fn counts_distinct_relations_and_tolerates_duplicates() {
        let ddis = [Ddi::new(0, 1, 0), Ddi::new(0, 2, 0), Ddi::new(0, 3, 2), Ddi::new(1, 0, 0)];
        let adj = build_ddi_adjacency(&ddis, 4, 3).unwrap();
        assert_eq!(adj.relation_counts[0], 2);
        assert_eq!(adj.relations[0].nnz(), 4);
        let bad = Ddi { a: 1, b: 1, event: 0 };
        assert!(build_ddi_adjacency(&[bad], 4, 3).is_err());
    }

    #[test]
    fn normalisation_examples() {
        let swap = t(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(normalize_dense(&swap).unwrap(), swap);
        assert_eq!(normalize_dense(&t(&[&[0.0, 2.0], &[2.0, 0.0]])).unwrap(), swap);
        let isolated = t(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]]);
        let n = normalize_dense(&isolated).unwrap();
        assert!((0..3).all(|k| n.at(2, k) == 0.0 && n.at(k, 2) == 0.0));
        assert!(normalize_dense(&t(&[&[0.0, 1.0], &[0.5, 0.0]])).is_err());
        assert!(normalize_dense(&t(&[&[0.0, -1.0], &[-1.0, 0.0]])).is_err());
        let sparse = SparseMatrix::from_dense(&t(&[&[0.0, 1.0], &[0.0, 0.0]])).unwrap();
        assert!(normalize_sparse(&sparse).is_err());
    }

    #[test]
    fn powers() {
        let swap = t(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(matrix_power(&swap, 0).unwrap(), Tensor::identity(2));
        assert_eq!(matrix_power(&swap, 1).unwrap(), swap);
        assert_eq!(matrix_power(&swap, 2).unwrap(), Tensor::identity(2));
        let mut cache = PowerCache::new(&swap).unwrap();
        let a = cache.power(3).unwrap();
        assert!(Arc::ptr_eq(&a, &cache.power(3).unwrap()));
        assert_eq!(a.to_dense(), swap);
    }

    #[test]
    fn relational_operator_divides_by_relation_count() {
        let ddis = [Ddi::new(0, 1, 0), Ddi::new(0, 2, 1)];
        let adj = build_ddi_adjacency(&ddis, 3, 2).unwrap();
        let ops = adj.relational_operators().unwrap();
        assert!((ops[0].get(0, 1) - 0.5).abs() < 1e-15);
        assert!((ops[0].get(1, 0) - 1.0).abs() < 1e-15);
    }
}

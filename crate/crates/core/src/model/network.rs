use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use super::config::{HyperParams, Variant};
use super::contrastive::{contrastive_losses, interaction_characteristics, pair_characteristics, select_contrastive_pairs};
use super::params::{xavier, Checkpoint, ParamStore};
use crate::autodiff::{conv1d_maxpool, ConvLayer, Mode, SparseMatrix, Tape, Tensor, Var};
use crate::data::{build_initial_features, Attribute, Charset, Dataset, Ddi};
use crate::error::{Error, Result};
use crate::graphs::{build_ddi_adjacency, build_dds_adjacency, PowerCache};

/// Per-dataset, per-fold constants the network reads but never trains.
#[derive(Clone, Debug)]
pub struct GraphInputs {
    pub features: Tensor,
    /// `diag(1/R_i) Â_r` for each relation, built from training interactions only.
    pub relational: Vec<Arc<SparseMatrix>>,
    /// `Â^n` per attribute; `None` stands for the identity (`n = 0`).
    pub propagation: [Option<Arc<SparseMatrix>>; 3],
    pub smiles: Vec<Vec<usize>>,
    pub characteristics: Tensor,
    pub charset_size: usize,
    pub smiles_len: usize,
}

impl GraphInputs {
    pub fn build(ds: &Dataset, train: &[Ddi], hp: &HyperParams, charset: &Charset) -> Result<Self> {
        let n = ds.num_drugs();
        let adjacency = build_ddi_adjacency(train, n, ds.num_relations)?;
        let dds = build_dds_adjacency(ds);
        let propagation = if hp.power == 0 {
            [None, None, None]
        } else {
            let mut out: [Option<Arc<SparseMatrix>>; 3] = [None, None, None];
            for attr in Attribute::ALL {
                out[attr.index()] = Some(PowerCache::new(dds.get(attr))?.power(hp.power)?);
            }
            out
        };
        Ok(GraphInputs {
            features: build_initial_features(ds),
            relational: adjacency.relational_operators()?,
            propagation,
            smiles: ds.drugs.iter().map(|d| charset.indices(&d.smiles, hp.smiles_len)).collect(),
            characteristics: interaction_characteristics(train, n, ds.num_relations)?,
            charset_size: charset.len(),
            smiles_len: hp.smiles_len,
        })
    }

    pub fn num_drugs(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn feature_dim(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn num_relations(&self) -> usize {
        self.characteristics.shape()[1]
    }

    /// One-hot `[K, p, 2q]` batch: drug `i` fills columns `0..q`, drug `j` columns `q..2q`.
    pub fn smiles_batch(&self, pairs: &[(usize, usize)]) -> Tensor {
        let (p, q) = (self.charset_size, self.smiles_len);
        let mut t = Tensor::zeros(&[pairs.len(), p, 2 * q]);
        let data = t.data_mut();
        for (k, &(i, j)) in pairs.iter().enumerate() {
            for (offset, drug) in [(0, i), (q, j)] {
                for (col, &c) in self.smiles[drug].iter().enumerate() {
                    data[(k * p + c) * 2 * q + offset + col] = 1.0;
                }
            }
        }
        t
    }
}

/// Shape facts a checkpoint must agree with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub num_drugs: usize,
    pub feature_dim: usize,
    pub num_relations: usize,
    pub charset_size: usize,
}

impl ModelDims {
    pub fn of(inputs: &GraphInputs) -> Self {
        ModelDims {
            num_drugs: inputs.num_drugs(),
            feature_dim: inputs.feature_dim(),
            num_relations: inputs.num_relations(),
            charset_size: inputs.charset_size,
        }
    }
}

/// Parameters placed on a tape for one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Bound(BTreeMap<String, Var>);

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| Error::contract(format!("parameter `{name}` is not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// The three representations of a batch of drug pairs.
#[derive(Clone, Copy, Debug)]
pub struct PairViews {
    pub initi: Option<Var>,
    pub embed: Var,
    pub smile: Option<Var>,
}

#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub ce: Var,
    pub ss1: Var,
    pub ss2: Var,
}

/// Convex mixing of a batch with a permutation of itself.
#[derive(Clone, Debug, PartialEq)]
pub struct MixPlan {
    pub mu: f64,
    pub perm: Vec<usize>,
}

impl MixPlan {
    pub fn sample<R: Rng + ?Sized>(k: usize, alpha: f64, rng: &mut R) -> Result<Self> {
        let beta = Beta::new(alpha, alpha)
            .map_err(|e| Error::config(format!("mixup alpha {alpha}: {e}")))?;
        let mu = beta.sample(rng);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(rng);
        Ok(MixPlan { mu, perm })
    }

    /// `μ I + (1 − μ) P` as a sparse operator.
    pub fn operator(&self) -> Result<SparseMatrix> {
        let k = self.perm.len();
        let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (row, &src) in self.perm.iter().enumerate() {
            *entries.entry((row, row)).or_default() += self.mu;
            *entries.entry((row, src)).or_default() += 1.0 - self.mu;
        }
        let triplets: Vec<_> = entries.into_iter().map(|((r, c), w)| (r, c, w)).collect();
        SparseMatrix::from_triplets(k, k, &triplets)
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.operator()?.matmul_dense(x)
    }
}

/// Draws a mixing plan and applies it to features and labels.
pub fn mixup<R: Rng + ?Sized>(features: &Tensor, labels: &Tensor, alpha: f64, rng: &mut R) -> Result<(Tensor, Tensor)> {
    let plan = MixPlan::sample(features.dims2()?.0, alpha, rng)?;
    Ok((plan.apply(features)?, plan.apply(labels)?))
}

/// `ReLU( Σ_r (op_r X) W_r + X W_o )`.
pub fn ragsel_forward(tape: &mut Tape, x: Var, ops: &[Arc<SparseMatrix>], w_rel: &[Var], w_self: Var) -> Result<Var> {
    if ops.len() != w_rel.len() {
        return Err(Error::shape(format!(
            "{} relation operators but {} relation weights",
            ops.len(),
            w_rel.len()
        )));
    }
    let mut terms = vec![tape.matmul(x, w_self)?];
    for (op, &w) in ops.iter().zip(w_rel) {
        if op.nnz() == 0 {
            continue;
        }
        let agg = tape.sparse_matmul(Arc::clone(op), x)?;
        terms.push(tape.matmul(agg, w)?);
    }
    let sum = tape.add_all(&terms)?;
    Ok(tape.relu(sum))
}

/// `Σ_a ReLU(Â_a^n H W_a)` over the three attributes.
pub fn ragsep_forward(tape: &mut Tape, h: Var, props: &[Option<Arc<SparseMatrix>>; 3], w: [Var; 3]) -> Result<Var> {
    let mut terms = Vec::with_capacity(3);
    for (prop, w) in props.iter().zip(w) {
        let spread = match prop {
            Some(p) => tape.sparse_matmul(Arc::clone(p), h)?,
            None => h,
        };
        let z = tape.matmul(spread, w)?;
        terms.push(tape.relu(z));
    }
    tape.add_all(&terms)
}

/// Concatenates the views followed by their sum.
pub fn fuse_pair(tape: &mut Tape, views: &[Var]) -> Result<Var> {
    let widths: Vec<usize> = views.iter().map(|&v| tape.value(v).shape().get(1).copied().unwrap_or(0)).collect();
    if widths.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::shape(format!("views must share a width, got {widths:?}")));
    }
    let sum = tape.add_all(views)?;
    let mut parts = views.to_vec();
    parts.push(sum);
    tape.concat_cols(&parts)
}

fn affine(tape: &mut Tape, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let z = tape.matmul(x, weight)?;
    tape.add_row(z, bias)
}

fn init_dense<R: Rng + ?Sized>(p: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) {
    p.insert(format!("{name}.weight"), xavier(&[fan_in, fan_out], fan_in, fan_out, rng));
    p.insert(format!("{name}.bias"), Tensor::zeros(&[fan_out]));
}

fn init_fnn<R: Rng + ?Sized>(p: &mut ParamStore, name: &str, input: usize, width: usize, rng: &mut R) {
    init_dense(p, &format!("{name}.hidden"), input, width, rng);
    p.insert_norm(format!("{name}.norm"), width);
    init_dense(p, &format!("{name}.out"), width, width, rng);
}

const ATTR_NAMES: [&str; 3] = ["substructure", "enzyme", "target"];

fn relation_name(r: usize) -> String {
    format!("ragsel.relation{r:04}.weight")
}

/// RaGSECo network parameters with their architecture settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub hp: HyperParams,
    pub variant: Variant,
    pub dims: ModelDims,
    pub params: ParamStore,
}

impl Model {
    /// Fresh parameters drawn from a generator seeded with `hp.seed`.
    pub fn new(hp: HyperParams, variant: Variant, dims: ModelDims) -> Result<Self> {
        hp.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let mut p = ParamStore::new();
        let (d, e, f) = (dims.feature_dim, hp.embed_dim, hp.fnn_dim);
        let h_dim = if variant.uses_relational() { e } else { d };
        let embed_dim = if variant.uses_propagation() { e } else { h_dim };
        if variant.uses_initial_encoder() {
            init_fnn(&mut p, "fnn1", 2 * d, f, &mut rng);
        }
        init_fnn(&mut p, "fnn2", 2 * embed_dim, f, &mut rng);
        if variant.uses_smiles() {
            let mut c_in = dims.charset_size;
            for (l, (&c_out, &k)) in hp.cnn_channels.iter().zip(&hp.cnn_kernels).enumerate() {
                p.insert(
                    format!("cnn.conv{l}.weight"),
                    xavier(&[c_out, c_in, k], c_in * k, c_out * k, &mut rng),
                );
                p.insert(format!("cnn.conv{l}.bias"), Tensor::zeros(&[c_out]));
                c_in = c_out;
            }
            init_dense(&mut p, "cnn.proj", c_in, f, &mut rng);
        }
        if variant.uses_contrastive() {
            p.insert("discriminator.weight", xavier(&[f, f], f, f, &mut rng));
        }
        init_dense(&mut p, "decoder.hidden", variant.fused_blocks() * f, hp.decoder_hidden, &mut rng);
        p.insert_norm("decoder.norm", hp.decoder_hidden);
        init_dense(&mut p, "decoder.out", hp.decoder_hidden, dims.num_relations, &mut rng);
        if variant.uses_relational() {
            for r in 0..dims.num_relations {
                p.insert(relation_name(r), xavier(&[d, e], d, e, &mut rng));
            }
            p.insert("ragsel.self.weight", xavier(&[d, e], d, e, &mut rng));
        }
        if variant.uses_propagation() {
            for a in ATTR_NAMES {
                p.insert(format!("ragsep.{a}.weight"), xavier(&[h_dim, e], h_dim, e, &mut rng));
            }
        }
        Ok(Model {
            hp,
            variant,
            dims,
            params: p,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut config = vec![
            ("variant".to_string(), self.variant.tag().to_string()),
            ("num_drugs".to_string(), self.dims.num_drugs.to_string()),
            ("feature_dim".to_string(), self.dims.feature_dim.to_string()),
            ("num_relations".to_string(), self.dims.num_relations.to_string()),
            ("charset_size".to_string(), self.dims.charset_size.to_string()),
        ];
        config.extend(self.hp.to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)));
        Checkpoint {
            config,
            params: self.params.clone(),
        }
    }

    /// Rebuilds a model and checks every tensor against the architecture it declares.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut hp = HyperParams::default();
        let mut variant = None;
        let mut dims = [None; 4];
        for (k, v) in &ck.config {
            let num = || -> Result<usize> {
                v.parse().map_err(|_| Error::data(format!("checkpoint `{k}` is not an integer: `{v}`")))
            };
            match k.as_str() {
                "variant" => variant = Some(v.parse::<Variant>()?),
                "num_drugs" => dims[0] = Some(num()?),
                "feature_dim" => dims[1] = Some(num()?),
                "num_relations" => dims[2] = Some(num()?),
                "charset_size" => dims[3] = Some(num()?),
                _ => {
                    if !hp.set(k, v)? {
                        return Err(Error::data(format!("unknown checkpoint setting `{k}`")));
                    }
                }
            }
        }
        let missing = |what: &str| Error::data(format!("checkpoint lacks `{what}`"));
        let dims = ModelDims {
            num_drugs: dims[0].ok_or_else(|| missing("num_drugs"))?,
            feature_dim: dims[1].ok_or_else(|| missing("feature_dim"))?,
            num_relations: dims[2].ok_or_else(|| missing("num_relations"))?,
            charset_size: dims[3].ok_or_else(|| missing("charset_size"))?,
        };
        let variant = variant.ok_or_else(|| missing("variant"))?;
        let template = Model::new(hp, variant, dims)?;
        let expected: Vec<(&str, &[usize])> = template.params.iter().map(|(n, t)| (n, t.shape())).collect();
        let found: Vec<(&str, &[usize])> = ck.params.iter().map(|(n, t)| (n, t.shape())).collect();
        if expected != found {
            let detail = expected
                .iter()
                .find(|e| !found.contains(e))
                .map(|(n, s)| format!("expected `{n}` with shape {s:?}"))
                .or_else(|| found.iter().find(|f| !expected.contains(f)).map(|(n, s)| format!("unexpected `{n}` {s:?}")))
                .unwrap_or_default();
            return Err(Error::data(format!("checkpoint parameters do not match its architecture: {detail}")));
        }
        for name in ["fnn1.norm", "fnn2.norm", "decoder.norm"] {
            if let Some(t) = template.params.norm(name) {
                let got = ck.params.norm(name).ok_or_else(|| missing(name))?;
                if got.running_mean.len() != t.running_mean.len() {
                    return Err(Error::data(format!("batchnorm `{name}` width mismatch")));
                }
            }
        }
        Ok(Model {
            hp: template.hp,
            variant,
            dims,
            params: ck.params.clone(),
        })
    }

    /// Checks that constants built from a dataset fit this model.
    pub fn check_inputs(&self, inputs: &GraphInputs) -> Result<()> {
        let got = ModelDims::of(inputs);
        if got != self.dims {
            return Err(Error::data(format!(
                "model expects {} drugs, {} features, {} relations, {} SMILES symbols; data has {}, {}, {}, {}",
                self.dims.num_drugs,
                self.dims.feature_dim,
                self.dims.num_relations,
                self.dims.charset_size,
                got.num_drugs,
                got.feature_dim,
                got.num_relations,
                got.charset_size
            )));
        }
        if inputs.smiles_len != self.hp.smiles_len {
            return Err(Error::data(format!(
                "model encodes SMILES to length {}, inputs use {}",
                self.hp.smiles_len, inputs.smiles_len
            )));
        }
        Ok(())
    }

    /// Puts every parameter on the tape.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        Bound(
            self.params
                .iter()
                .map(|(name, t)| (name.to_string(), tape.leaf(t.clone(), trainable)))
                .collect(),
        )
    }

    /// Final drug embeddings `[N, ·]` for the configured variant.
    pub fn embed(&self, tape: &mut Tape, bound: &Bound, inputs: &GraphInputs) -> Result<Var> {
        let x = tape.constant(inputs.features.clone());
        let h = if self.variant.uses_relational() {
            let w_rel = (0..self.dims.num_relations)
                .map(|r| bound.get(&relation_name(r)))
                .collect::<Result<Vec<_>>>()?;
            ragsel_forward(tape, x, &inputs.relational, &w_rel, bound.get("ragsel.self.weight")?)?
        } else {
            x
        };
        if !self.variant.uses_propagation() {
            return Ok(h);
        }
        let w = [
            bound.get("ragsep.substructure.weight")?,
            bound.get("ragsep.enzyme.weight")?,
            bound.get("ragsep.target.weight")?,
        ];
        ragsep_forward(tape, h, &inputs.propagation, w)
    }

    fn fnn<R: Rng + ?Sized>(&mut self, tape: &mut Tape, bound: &Bound, name: &str, x: Var, mode: Mode, rng: &mut R) -> Result<Var> {
        let h = affine(tape, x, bound.get(&format!("{name}.hidden.weight"))?, bound.get(&format!("{name}.hidden.bias"))?)?;
        let h = tape.gelu(h);
        let h = tape.batchnorm(h, self.params.norm_mut(&format!("{name}.norm"))?, mode)?;
        let h = tape.dropout(h, self.hp.dropout, mode, rng)?;
        affine(tape, h, bound.get(&format!("{name}.out.weight"))?, bound.get(&format!("{name}.out.bias"))?)
    }

    /// Encodes each ordered pair `(i, j)` into its views.
    #[allow(clippy::too_many_arguments)]
    pub fn encode_pair_views<R: Rng + ?Sized>(
        &mut self,
        tape: &mut Tape,
        bound: &Bound,
        inputs: &GraphInputs,
        embed: Var,
        pairs: &[(usize, usize)],
        mode: Mode,
        rng: &mut R,
    ) -> Result<PairViews> {
        if let Some(&(i, _)) = pairs.iter().find(|(i, j)| i == j) {
            return Err(Error::contract(format!("pair ({i}, {i}) pairs a drug with itself")));
        }
        if let Some(&(i, j)) = pairs.iter().find(|(i, j)| (*i).max(*j) >= self.dims.num_drugs) {
            return Err(Error::data(format!("pair ({i}, {j}) references an unknown drug")));
        }
        let left: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let right: Vec<usize> = pairs.iter().map(|p| p.1).collect();

        let initi = if self.variant.uses_initial_encoder() {
            let x = &inputs.features;
            let mut rows = Vec::with_capacity(pairs.len() * 2 * x.shape()[1]);
            for &(i, j) in pairs {
                rows.extend_from_slice(x.row(i));
                rows.extend_from_slice(x.row(j));
            }
            let xij = tape.constant(Tensor::new(vec![pairs.len(), 2 * x.shape()[1]], rows)?);
            Some(self.fnn(tape, bound, "fnn1", xij, mode, rng)?)
        } else {
            None
        };

        let hi = tape.gather_rows(embed, &left)?;
        let hj = tape.gather_rows(embed, &right)?;
        let hij = tape.concat_cols(&[hi, hj])?;
        let embed_view = self.fnn(tape, bound, "fnn2", hij, mode, rng)?;

        let smile = if self.variant.uses_smiles() {
            let s = tape.constant(inputs.smiles_batch(pairs));
            let layers = (0..self.hp.cnn_channels.len())
                .map(|l| {
                    Ok(ConvLayer {
                        weight: bound.get(&format!("cnn.conv{l}.weight"))?,
                        bias: bound.get(&format!("cnn.conv{l}.bias"))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let pooled = conv1d_maxpool(tape, s, &layers)?;
            Some(affine(tape, pooled, bound.get("cnn.proj.weight")?, bound.get("cnn.proj.bias")?)?)
        } else {
            None
        };
        Ok(PairViews {
            initi,
            embed: embed_view,
            smile,
        })
    }

    /// Fused pair representation for the configured variant.
    pub fn fuse(&self, tape: &mut Tape, views: &PairViews) -> Result<Var> {
        let need = |v: Option<Var>, what: &str| v.ok_or_else(|| Error::contract(format!("{what} view missing")));
        match self.variant {
            Variant::NoContrastive => Ok(views.embed),
            Variant::NoInitial => fuse_pair(tape, &[need(views.smile, "smile")?, views.embed]),
            Variant::NoSmiles => fuse_pair(tape, &[need(views.initi, "initial")?, views.embed]),
            Variant::NoEmbedding => fuse_pair(tape, &[need(views.initi, "initial")?, need(views.smile, "smile")?]),
            _ => fuse_pair(
                tape,
                &[need(views.initi, "initial")?, views.embed, need(views.smile, "smile")?],
            ),
        }
    }

    /// Class probabilities `[K, R]`.
    pub fn decode<R: Rng + ?Sized>(&mut self, tape: &mut Tape, bound: &Bound, p: Var, mode: Mode, rng: &mut R) -> Result<Var> {
        let h = affine(tape, p, bound.get("decoder.hidden.weight")?, bound.get("decoder.hidden.bias")?)?;
        let h = tape.gelu(h);
        let h = tape.batchnorm(h, self.params.norm_mut("decoder.norm")?, mode)?;
        let h = tape.dropout(h, self.hp.dropout, mode, rng)?;
        let logits = affine(tape, h, bound.get("decoder.out.weight")?, bound.get("decoder.out.bias")?)?;
        tape.softmax_rows(logits)
    }

    /// One training forward pass over ordered pairs with labels; returns the loss terms.
    pub fn training_loss<R: Rng + ?Sized>(
        &mut self,
        tape: &mut Tape,
        bound: &Bound,
        inputs: &GraphInputs,
        pairs: &[(usize, usize)],
        labels: &[usize],
        rng: &mut R,
    ) -> Result<LossTerms> {
        if pairs.len() != labels.len() {
            return Err(Error::shape(format!("{} pairs but {} labels", pairs.len(), labels.len())));
        }
        let r = self.dims.num_relations;
        let mut target = Tensor::zeros(&[labels.len(), r]);
        for (k, &y) in labels.iter().enumerate() {
            if y >= r {
                return Err(Error::data(format!("label {y} outside 0..{r}")));
            }
            target.set(k, y, 1.0);
        }
        let embed = self.embed(tape, bound, inputs)?;
        let views = self.encode_pair_views(tape, bound, inputs, embed, pairs, Mode::Train, rng)?;
        let mut fused = self.fuse(tape, &views)?;
        if self.hp.mixup_alpha > 0.0 {
            let plan = MixPlan::sample(pairs.len(), self.hp.mixup_alpha, rng)?;
            let mixed = tape.sparse_matmul(Arc::new(plan.operator()?), fused)?;
            fused = tape.concat_rows(&[fused, mixed])?;
            let mixed_target = plan.apply(&target)?;
            let mut data = target.into_data();
            data.extend_from_slice(mixed_target.data());
            target = Tensor::new(vec![2 * labels.len(), r], data)?;
        }
        let probs = self.decode(tape, bound, fused, Mode::Train, rng)?;
        let ce = tape.cross_entropy_sum(probs, &target)?;
        if !self.variant.uses_contrastive() {
            let zero = tape.constant(Tensor::scalar(0.0));
            return Ok(LossTerms {
                total: ce,
                ce,
                ss1: zero,
                ss2: zero,
            });
        }
        let chars = pair_characteristics(&inputs.characteristics, pairs);
        let selected = select_contrastive_pairs(&chars, self.hp.t_pos, self.hp.t_neg);
        let initi = views
            .initi
            .ok_or_else(|| Error::contract("contrastive losses need the initial view"))?;
        let (ss1, ss2) = contrastive_losses(tape, views.embed, initi, bound.get("discriminator.weight")?, &selected)?;
        let weighted = tape.scale(ce, self.hp.lambda);
        let total = tape.add_all(&[weighted, ss1, ss2])?;
        Ok(LossTerms { total, ce, ss1, ss2 })
    }

    /// Eval-mode probabilities of ordered pairs, `[K, R]`, without averaging orders.
    pub fn predict_ordered(&mut self, inputs: &GraphInputs, pairs: &[(usize, usize)]) -> Result<Tensor> {
        self.check_inputs(inputs)?;
        let r = self.dims.num_relations;
        let mut out = Vec::with_capacity(pairs.len() * r);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let embed = self.embed(&mut tape, &bound, inputs)?;
        let embed_value = tape.value(embed).clone();
        for chunk in pairs.chunks(self.hp.batch_size.max(1)) {
            let mut tape = Tape::new();
            let bound = self.bind(&mut tape, false);
            let embed = tape.constant(embed_value.clone());
            let views = self.encode_pair_views(&mut tape, &bound, inputs, embed, chunk, Mode::Eval, &mut rng)?;
            let fused = self.fuse(&mut tape, &views)?;
            let probs = self.decode(&mut tape, &bound, fused, Mode::Eval, &mut rng)?;
            out.extend_from_slice(tape.value(probs).data());
        }
        Tensor::new(vec![pairs.len(), r], out)
    }

    /// Probabilities averaged over both orders of every pair.
    pub fn predict(&mut self, inputs: &GraphInputs, pairs: &[(usize, usize)]) -> Result<Tensor> {
        let both: Vec<(usize, usize)> = pairs.iter().flat_map(|&(i, j)| [(i, j), (j, i)]).collect();
        let probs = self.predict_ordered(inputs, &both)?;
        let r = self.dims.num_relations;
        let mut out = Tensor::zeros(&[pairs.len(), r]);
        for k in 0..pairs.len() {
            for c in 0..r {
                out.set(k, c, 0.5 * (probs.at(2 * k, c) + probs.at(2 * k + 1, c)));
            }
        }
        Ok(out)
    }
}

//! Drug and interaction files, similarity features, SMILES encoding and
//! cross-validation splits.

mod dataset;
mod features;
mod smiles;
mod split;
pub mod synthetic;

pub use dataset::{read_ddis, read_drugs, write_ddis, write_drugs, Attribute, Dataset, Ddi, DrugRecord};
pub use features::{build_initial_features, jaccard_similarity, similarity_block};
pub use smiles::{encode_smiles, Charset, CHARSET_SIZE, DEFAULT_SMILES_LEN};
pub use split::{make_splits, Fold, SplitPlan, Task};

//! Per-user algorithm selection for collaborative filtering.
//!
//! The crate trains the CF base learners ([`cf`]), scores them per user with
//! NDCG@K ([`eval`]), learns user embeddings with autoencoders ([`repr`]),
//! assembles and resamples the resulting metadataset ([`metaset`]) and trains
//! meta-classifiers that predict each user's best learner ([`metalearn`]).

pub mod cf;
pub mod error;
pub mod eval;
pub mod ingest;
pub(crate) mod linalg;
pub mod metalearn;
pub mod metaset;
pub mod nn;
pub mod repr;
pub mod snapshot;
pub mod sparse;
pub mod synthetic;

pub use cf::{BaseLearnerId, BaseModel, MfModel, PopularityModel};
pub use error::{Error, Result};
pub use eval::{MetaLabel, MetaTarget, NdcgTable};
pub use ingest::{ExplicitDataset, ImplicitDataset, PerUserSplit};
pub use metalearn::{MetaLearnerId, MetaModel, MetaReport};
pub use metaset::{FoldPlan, MetaDataset};
pub use repr::{EmbeddingMatrix, EmbeddingSource};
pub use sparse::SparseBinary;

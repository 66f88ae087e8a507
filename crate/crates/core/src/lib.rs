//! Sense-annotated corpus generation from bitexts and a multilingual lexical
//! knowledge base.
//!
//! Three methods are provided: [`label_prop`] projects gold source
//! annotations to the target side, [`label_sync`] tags both sides with
//! PageRank WSD refined by their translations and keeps the agreeing
//! annotations, and [`label_gen`] projects refined pivot-side WSD to the
//! target.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod align;
pub mod config;
pub mod corpus;
pub mod embedwsd;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod graphwsd;
pub mod lexkb;
pub mod pipelines;
pub mod refine;
pub mod scalar;

pub use align::{align_bitext, AlignConfig};
pub use config::RunConfig;
pub use corpus::{
    AlignedSentencePair, CorpusStats, KeyMap, SenseAnnotation, Sentence, Source, Token, TokenPos,
};
pub use embedwsd::{cosine, nn_disambiguate, EmbeddingStore};
pub use error::{Error, Result};
pub use graphwsd::{disambiguate_w2w, ppr, PprConfig, SenseDistribution, TeleportMode};
pub use lexkb::{LexKb, Pos, Synset, SynsetId};
pub use pipelines::{label_gen, label_prop, label_sync, PipelineReport};
pub use refine::{soft_constraint, SoftConstraintConfig};
pub use scalar::Scalar;

pub type Distribution = SenseDistribution<f64>;
pub type Distribution32 = SenseDistribution<f32>;
pub type Embeddings = EmbeddingStore<f64>;
pub type Embeddings32 = EmbeddingStore<f32>;

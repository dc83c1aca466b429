//! Sublayer-ordering laboratory.
//!
//! Transformers are described by strings over `s` (self-attention), `f`
//! (feedforward) and `c` (cross-attention). This crate parses and samples
//! such strings, trains small character-level models built from them, and
//! compares the attention patterns of trained models.

pub mod attention;
pub mod harness;
pub mod model;
pub mod ordering;
pub mod rng;
pub mod tensor;

pub use attention::{attention_distance, capture, emd_1d, hungarian, AttentionDump, CostMatrix, DistanceReport, GroundMetric};
pub use harness::{Corpus, SearchConfig, TrainConfig, TrialRecord};
pub use model::{build_model, count_params, ModelConfig, TransformerStack};
pub use ordering::{sandwich, sandwich_decoder, OrderingSpec, ParamBudget, SublayerKind};
pub use rng::LabRng;
pub use tensor::{Tape, Tensor, Var};

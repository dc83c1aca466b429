//! Attention distance between models: per-token earth mover's distances
//! between heads, minimized over head matchings.

mod distance;
mod dump;
mod emd;
mod hungarian;

pub use distance::{attention_distance, distance_matrix, grouped_means, DistanceReport, DistanceTable, GroundMetric, GroupedMeans};
pub use dump::{capture, AttentionDump, DUMP_VERSION};
pub use emd::{emd_1d, MASS_TOLERANCE};
pub use hungarian::{hungarian, Assignment, CostMatrix};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum AttentionError {
    #[error("distributions have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("not a probability distribution (mass {0})")]
    NotDistribution(f64),
    #[error("cost matrix is not square: {len} entries for n={n}")]
    NotSquare { n: usize, len: usize },
    #[error("cost {0} is negative or not finite")]
    BadCost(f64),
    #[error("incompatible dumps: {0}")]
    Incompatible(String),
    #[error("malformed dump: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

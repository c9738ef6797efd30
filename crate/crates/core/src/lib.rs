//! Streaming next-POI recommendation over a dynamic geo-human knowledge graph.
//!
//! The crate is organised bottom-up:
//!
//! - [`numkit`]: dense matrices, parameter stores, SGD and gradient checking.
//! - [`kgstore`]: the dynamic knowledge graph with per-user exit windows.
//! - [`embed`]: context-aware translational embedding of the graph.
//! - [`candidates`]: meta-path POI candidate generation.
//! - [`policy`]: pairwise Q-network, epsilon-greedy acting, prioritized replay.
//! - [`reward`]: composite distance / semantic / exact-match reward.
//! - [`legacy`]: the separate user/spatial representation baseline.
//! - [`metrics`]: Prec_Cat, Rec_Cat, Avg_Sim and Avg_Dist.
//! - [`harness`]: ingestion, configuration, the closed training loop and evaluation.

pub mod candidates;
pub mod embed;
mod error;
pub mod geo;
pub mod harness;
pub mod kgstore;
pub mod legacy;
pub mod metrics;
pub mod numkit;
pub mod policy;
pub mod reward;

pub use error::{Error, Result};

pub use candidates::{generate_candidates, CandidateSet, MetaPathScheme};
pub use embed::{EmbedConfig, Embedder, EmbeddingTable};
pub use geo::{haversine_km, GeoPoint, PoiProfile};
pub use harness::{AgentMode, CheckInRecord, RunConfig};
pub use kgstore::{DeltaReport, DynamicKg, EntityId, EntityKind, ObjectId, RelTag, Relation, Triple};
pub use numkit::{Mat, ParamStore};
pub use policy::{PriorityMode, QNet, Transition};
pub use reward::{RewardParts, RewardWeights, WordVectors};

//! The dynamic geo-human knowledge graph.
//!
//! The static skeleton (`<poi, belong_to, category>`, `<poi, locate_at, zone>`)
//! is fixed at construction. Visit events add `<user, visit(t), poi>` and, when
//! the user has a previous visit, `<poi_prev, also_visit, rpoi(poi)>`. Each
//! user keeps a fixed-capacity window of visit events; the oldest event and the
//! triples it induced leave the graph when the window overflows.

mod graph;
mod snapshot;
mod types;

pub use graph::{DynamicKg, StaticPoi, VisitEvent};
pub use snapshot::{read_snapshot, write_snapshot};
pub use types::{ContextQuery, ContextSubgraph, DeltaReport, EntityId, EntityKind, ObjectId, RelTag, Relation, Triple};

/// Default per-user window capacity.
pub const DEFAULT_WINDOW: usize = 50;

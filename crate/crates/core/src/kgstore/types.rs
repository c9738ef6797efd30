use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::numkit::Mat;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityKind {
    User,
    Poi,
    RPoi,
    Category,
    Zone,
}

impl EntityKind {
    pub const ALL: [EntityKind; 5] = [
        EntityKind::User,
        EntityKind::Poi,
        EntityKind::RPoi,
        EntityKind::Category,
        EntityKind::Zone,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::User => "user",
            EntityKind::Poi => "poi",
            EntityKind::RPoi => "rpoi",
            EntityKind::Category => "category",
            EntityKind::Zone => "zone",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId {
    pub kind: EntityKind,
    pub index: usize,
}

impl EntityId {
    pub const fn new(kind: EntityKind, index: usize) -> Self {
        EntityId { kind, index }
    }
    pub const fn user(index: usize) -> Self {
        Self::new(EntityKind::User, index)
    }
    pub const fn poi(index: usize) -> Self {
        Self::new(EntityKind::Poi, index)
    }
    pub const fn rpoi(index: usize) -> Self {
        Self::new(EntityKind::RPoi, index)
    }
    pub const fn category(index: usize) -> Self {
        Self::new(EntityKind::Category, index)
    }
    pub const fn zone(index: usize) -> Self {
        Self::new(EntityKind::Zone, index)
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.index)
    }
}

impl FromStr for EntityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, index) = s
            .split_once(':')
            .ok_or_else(|| Error::Format(format!("entity `{s}` lacks kind:index")))?;
        let kind = EntityKind::ALL
            .into_iter()
            .find(|k| k.as_str() == kind)
            .ok_or_else(|| Error::Format(format!("unknown entity kind `{kind}`")))?;
        let index = index
            .parse()
            .map_err(|_| Error::Format(format!("bad entity index in `{s}`")))?;
        Ok(EntityId { kind, index })
    }
}

/// Relation type without per-edge attributes; this is what gets embedded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelTag {
    BelongTo,
    LocateAt,
    Visit,
    AlsoVisit,
}

impl RelTag {
    pub const ALL: [RelTag; 4] = [RelTag::BelongTo, RelTag::LocateAt, RelTag::Visit, RelTag::AlsoVisit];

    pub fn as_str(self) -> &'static str {
        match self {
            RelTag::BelongTo => "belong_to",
            RelTag::LocateAt => "locate_at",
            RelTag::Visit => "visit",
            RelTag::AlsoVisit => "also_visit",
        }
    }

    /// Entity kinds allowed at the head and tail of this relation.
    pub fn signature(self) -> (EntityKind, EntityKind) {
        match self {
            RelTag::BelongTo => (EntityKind::Poi, EntityKind::Category),
            RelTag::LocateAt => (EntityKind::Poi, EntityKind::Zone),
            RelTag::Visit => (EntityKind::User, EntityKind::Poi),
            RelTag::AlsoVisit => (EntityKind::Poi, EntityKind::RPoi),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    BelongTo,
    LocateAt,
    Visit { time: i64 },
    AlsoVisit,
}

impl Relation {
    pub fn tag(self) -> RelTag {
        match self {
            Relation::BelongTo => RelTag::BelongTo,
            Relation::LocateAt => RelTag::LocateAt,
            Relation::Visit { .. } => RelTag::Visit,
            Relation::AlsoVisit => RelTag::AlsoVisit,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::Visit { time } => write!(f, "visit:{time}"),
            other => f.write_str(other.tag().as_str()),
        }
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "belong_to" => Relation::BelongTo,
            "locate_at" => Relation::LocateAt,
            "also_visit" => Relation::AlsoVisit,
            _ => {
                let time = s
                    .strip_prefix("visit:")
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::Format(format!("unknown relation `{s}`")))?;
                Relation::Visit { time }
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub rel: Relation,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, rel: Relation, tail: EntityId) -> Self {
        Triple { head, rel, tail }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.head, self.rel, self.tail)
    }
}

/// Anything that owns an embedding: an entity or a relation type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectId {
    Entity(EntityId),
    Relation(RelTag),
}

impl From<EntityId> for ObjectId {
    fn from(e: EntityId) -> Self {
        ObjectId::Entity(e)
    }
}

impl From<RelTag> for ObjectId {
    fn from(r: RelTag) -> Self {
        ObjectId::Relation(r)
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectId::Entity(e) => e.fmt(f),
            ObjectId::Relation(r) => write!(f, "rel:{}", r.as_str()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContextQuery {
    Entity(EntityId),
    /// The relation of an existing triple identified by its endpoints.
    Relation {
        head: EntityId,
        tag: RelTag,
        tail: EntityId,
    },
}

/// A context subgraph: node 0 is always the queried object.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextSubgraph {
    pub nodes: Vec<ObjectId>,
    /// Symmetric 0/1 adjacency without self loops.
    pub adjacency: Mat,
}

impl ContextSubgraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DeltaReport {
    /// Graph version after the mutation.
    pub version: u64,
    pub added: Vec<Triple>,
    pub removed: Vec<Triple>,
    /// Objects whose context changed: endpoints of touched triples, their
    /// one-hop neighbours, and the relation types of touched triples.
    pub affected: BTreeSet<ObjectId>,
    pub new_entities: Vec<EntityId>,
}

impl DeltaReport {
    pub fn affected_entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.affected.iter().filter_map(|o| match o {
            ObjectId::Entity(e) => Some(*e),
            ObjectId::Relation(_) => None,
        })
    }
}

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::types::*;
use crate::numkit::Mat;
use crate::{Error, Result};

/// One row of the static skeleton.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StaticPoi {
    pub poi: usize,
    pub category: usize,
    pub zone: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VisitEvent {
    pub poi: usize,
    pub time: i64,
    /// Predecessor POI whose `also_visit` edge into `rpoi(poi)` this event created.
    pub linked_from: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub(super) struct UserWindow {
    pub(super) events: VecDeque<VisitEvent>,
    pub(super) poi_counts: BTreeMap<usize, usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicKg {
    pub(super) window_capacity: usize,
    pub(super) poi_category: Vec<usize>,
    pub(super) poi_zone: Vec<usize>,
    pub(super) category_members: Vec<Vec<usize>>,
    pub(super) zone_members: Vec<Vec<usize>>,
    pub(super) users: BTreeMap<usize, UserWindow>,
    pub(super) visit_counts: Vec<u64>,
    /// (from poi, to poi) -> number of in-window events that created the edge.
    pub(super) also_visit: BTreeMap<(usize, usize), usize>,
    /// to poi -> set of from pois, mirroring `also_visit`.
    pub(super) also_in: Vec<BTreeSet<usize>>,
    /// poi -> user -> in-window visit count.
    pub(super) poi_visitors: Vec<BTreeMap<usize, usize>>,
    pub(super) version: u64,
}

impl DynamicKg {
    /// Initialization stage: the static skeleton, no users and no visits.
    ///
    /// POI indices must be unique and dense (`0..n` in any order). Category and
    /// zone entities are created on first use, sized by the largest index seen.
    pub fn build_static(pois: &[StaticPoi], window_capacity: usize) -> Result<Self> {
        if window_capacity == 0 {
            return Err(Error::Config("window capacity must be positive".into()));
        }
        let n = pois.len();
        let mut poi_category = vec![usize::MAX; n];
        let mut poi_zone = vec![usize::MAX; n];
        for p in pois {
            if p.poi >= n {
                return Err(Error::Ingestion(format!(
                    "poi index {} out of the dense range 0..{n}",
                    p.poi
                )));
            }
            if poi_category[p.poi] != usize::MAX {
                return Err(Error::Ingestion(format!("duplicate poi {}", p.poi)));
            }
            poi_category[p.poi] = p.category;
            poi_zone[p.poi] = p.zone;
        }
        let n_cat = poi_category.iter().map(|&c| c + 1).max().unwrap_or(0);
        let n_zone = poi_zone.iter().map(|&z| z + 1).max().unwrap_or(0);
        let mut category_members = vec![Vec::new(); n_cat];
        let mut zone_members = vec![Vec::new(); n_zone];
        for p in 0..n {
            category_members[poi_category[p]].push(p);
            zone_members[poi_zone[p]].push(p);
        }
        Ok(DynamicKg {
            window_capacity,
            poi_category,
            poi_zone,
            category_members,
            zone_members,
            users: BTreeMap::new(),
            visit_counts: vec![0; n],
            also_visit: BTreeMap::new(),
            also_in: vec![BTreeSet::new(); n],
            poi_visitors: vec![BTreeMap::new(); n],
            version: 0,
        })
    }

    pub fn window_capacity(&self) -> usize {
        self.window_capacity
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn poi_count(&self) -> usize {
        self.poi_category.len()
    }

    pub fn category_count(&self) -> usize {
        self.category_members.len()
    }

    pub fn zone_count(&self) -> usize {
        self.zone_members.len()
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn users(&self) -> impl Iterator<Item = usize> + '_ {
        self.users.keys().copied()
    }

    pub fn category_of(&self, poi: usize) -> usize {
        self.poi_category[poi]
    }

    pub fn zone_of(&self, poi: usize) -> usize {
        self.poi_zone[poi]
    }

    pub fn category_members(&self, category: usize) -> &[usize] {
        &self.category_members[category]
    }

    pub fn zone_members(&self, zone: usize) -> &[usize] {
        &self.zone_members[zone]
    }

    pub fn visit_count(&self, poi: usize) -> u64 {
        self.visit_counts[poi]
    }

    pub fn visit_counts(&self) -> &[u64] {
        &self.visit_counts
    }

    /// In-window visit events of `user`, oldest first.
    pub fn window(&self, user: usize) -> Option<impl ExactSizeIterator<Item = &VisitEvent> + '_> {
        self.users.get(&user).map(|w| w.events.iter())
    }

    pub fn window_len(&self, user: usize) -> usize {
        self.users.get(&user).map_or(0, |w| w.events.len())
    }

    /// Targets `q` of `<poi, also_visit, rpoi(q)>` edges.
    pub fn also_visit_targets(&self, poi: usize) -> impl Iterator<Item = usize> + '_ {
        self.also_visit.range((poi, 0)..(poi + 1, 0)).map(|(&(_, q), _)| q)
    }

    pub fn contains(&self, e: EntityId) -> bool {
        match e.kind {
            EntityKind::User => self.users.contains_key(&e.index),
            EntityKind::Poi | EntityKind::RPoi => e.index < self.poi_count(),
            EntityKind::Category => e.index < self.category_count(),
            EntityKind::Zone => e.index < self.zone_count(),
        }
    }

    /// Every entity, grouped by kind in a fixed order.
    pub fn entities(&self) -> Vec<EntityId> {
        let mut out = Vec::with_capacity(2 * self.poi_count() + self.users.len());
        out.extend(self.users.keys().map(|&u| EntityId::user(u)));
        out.extend((0..self.poi_count()).map(EntityId::poi));
        out.extend((0..self.poi_count()).map(EntityId::rpoi));
        out.extend((0..self.category_count()).map(EntityId::category));
        out.extend((0..self.zone_count()).map(EntityId::zone));
        out
    }

    pub fn entity_count(&self) -> usize {
        self.users.len() + 2 * self.poi_count() + self.category_count() + self.zone_count()
    }

    pub fn entities_of_kind(&self, kind: EntityKind) -> Vec<EntityId> {
        match kind {
            EntityKind::User => self.users.keys().map(|&u| EntityId::user(u)).collect(),
            EntityKind::Poi => (0..self.poi_count()).map(EntityId::poi).collect(),
            EntityKind::RPoi => (0..self.poi_count()).map(EntityId::rpoi).collect(),
            EntityKind::Category => (0..self.category_count()).map(EntityId::category).collect(),
            EntityKind::Zone => (0..self.zone_count()).map(EntityId::zone).collect(),
        }
    }

    pub fn kind_count(&self, kind: EntityKind) -> usize {
        match kind {
            EntityKind::User => self.users.len(),
            EntityKind::Poi | EntityKind::RPoi => self.poi_count(),
            EntityKind::Category => self.category_count(),
            EntityKind::Zone => self.zone_count(),
        }
    }

    /// Evolving stage: one visit event.
    pub fn apply_visit(&mut self, user: usize, poi: usize, time: i64) -> Result<DeltaReport> {
        if poi >= self.poi_count() {
            return Err(Error::Lookup(format!("unknown poi {poi}")));
        }
        let mut delta = DeltaReport::default();
        let u = EntityId::user(user);
        if let Entry::Vacant(e) = self.users.entry(user) {
            e.insert(UserWindow::default());
            delta.new_entities.push(u);
        }
        let window = &self.users[&user];
        if let Some(last) = window.events.back() {
            if time < last.time {
                return Err(Error::StreamOrder {
                    user,
                    last: last.time,
                    time,
                });
            }
        }
        let predecessor = window.events.back().map(|e| e.poi);

        if window.events.len() >= self.window_capacity {
            self.evict_oldest(user, &mut delta);
        }

        let window = self.users.get_mut(&user).expect("inserted above");
        window.events.push_back(VisitEvent {
            poi,
            time,
            linked_from: predecessor,
        });
        *window.poi_counts.entry(poi).or_insert(0) += 1;
        *self.poi_visitors[poi].entry(user).or_insert(0) += 1;
        self.visit_counts[poi] += 1;
        delta
            .added
            .push(Triple::new(u, Relation::Visit { time }, EntityId::poi(poi)));
        if let Some(prev) = predecessor {
            let rc = self.also_visit.entry((prev, poi)).or_insert(0);
            *rc += 1;
            if *rc == 1 {
                self.also_in[poi].insert(prev);
                delta.added.push(Triple::new(
                    EntityId::poi(prev),
                    Relation::AlsoVisit,
                    EntityId::rpoi(poi),
                ));
            }
        }

        self.version += 1;
        delta.version = self.version;
        self.fill_affected(&mut delta);
        Ok(delta)
    }

    fn evict_oldest(&mut self, user: usize, delta: &mut DeltaReport) {
        let window = self.users.get_mut(&user).expect("caller checked");
        let Some(old) = window.events.pop_front() else {
            return;
        };
        decrement(&mut window.poi_counts, old.poi);
        decrement(&mut self.poi_visitors[old.poi], user);
        delta.removed.push(Triple::new(
            EntityId::user(user),
            Relation::Visit { time: old.time },
            EntityId::poi(old.poi),
        ));
        if let Some(prev) = old.linked_from {
            let key = (prev, old.poi);
            if let Some(rc) = self.also_visit.get_mut(&key) {
                *rc -= 1;
                if *rc == 0 {
                    self.also_visit.remove(&key);
                    self.also_in[old.poi].remove(&prev);
                    delta.removed.push(Triple::new(
                        EntityId::poi(prev),
                        Relation::AlsoVisit,
                        EntityId::rpoi(old.poi),
                    ));
                }
            }
        }
    }

    fn fill_affected(&self, delta: &mut DeltaReport) {
        let mut endpoints = BTreeSet::new();
        for t in delta.added.iter().chain(&delta.removed) {
            endpoints.insert(t.head);
            endpoints.insert(t.tail);
            delta.affected.insert(ObjectId::Relation(t.rel.tag()));
        }
        for &e in &endpoints {
            delta.affected.insert(ObjectId::Entity(e));
            for n in self.neighbors(e) {
                delta.affected.insert(ObjectId::Entity(n));
            }
        }
    }

    /// One-hop neighbours in the undirected entity graph, sorted.
    pub fn neighbors(&self, e: EntityId) -> Vec<EntityId> {
        let mut out = Vec::new();
        match e.kind {
            EntityKind::User => {
                if let Some(w) = self.users.get(&e.index) {
                    out.extend(w.poi_counts.keys().map(|&p| EntityId::poi(p)));
                }
            }
            EntityKind::Poi => {
                let p = e.index;
                if p >= self.poi_count() {
                    return out;
                }
                out.extend(self.poi_visitors[p].keys().map(|&u| EntityId::user(u)));
                out.extend(self.also_visit_targets(p).map(EntityId::rpoi));
                out.push(EntityId::category(self.poi_category[p]));
                out.push(EntityId::zone(self.poi_zone[p]));
            }
            EntityKind::RPoi => {
                if e.index < self.poi_count() {
                    out.extend(self.also_in[e.index].iter().map(|&p| EntityId::poi(p)));
                }
            }
            EntityKind::Category => {
                if let Some(m) = self.category_members.get(e.index) {
                    out.extend(m.iter().map(|&p| EntityId::poi(p)));
                }
            }
            EntityKind::Zone => {
                if let Some(m) = self.zone_members.get(e.index) {
                    out.extend(m.iter().map(|&p| EntityId::poi(p)));
                }
            }
        }
        out
    }

    /// Whether any triple links `a` and `b` in either direction.
    pub fn has_edge(&self, a: EntityId, b: EntityId) -> bool {
        use EntityKind::*;
        let (a, b) = if a.kind <= b.kind { (a, b) } else { (b, a) };
        match (a.kind, b.kind) {
            (User, Poi) => self
                .users
                .get(&a.index)
                .is_some_and(|w| w.poi_counts.contains_key(&b.index)),
            (Poi, RPoi) => self.also_visit.contains_key(&(a.index, b.index)),
            (Poi, Category) => self.poi_category.get(a.index) == Some(&b.index),
            (Poi, Zone) => self.poi_zone.get(a.index) == Some(&b.index),
            _ => false,
        }
    }

    /// Relation types present between `head` and `tail` (in that direction).
    pub fn tags_between(&self, head: EntityId, tail: EntityId) -> Vec<RelTag> {
        use EntityKind::*;
        let present = match (head.kind, tail.kind) {
            (User, Poi) => Some(RelTag::Visit),
            (Poi, RPoi) => Some(RelTag::AlsoVisit),
            (Poi, Category) => Some(RelTag::BelongTo),
            (Poi, Zone) => Some(RelTag::LocateAt),
            _ => None,
        };
        present.filter(|_| self.has_edge(head, tail)).into_iter().collect()
    }

    pub fn context_of(&self, query: ContextQuery) -> Result<ContextSubgraph> {
        match query {
            ContextQuery::Entity(e) => {
                if !self.contains(e) {
                    return Err(Error::Lookup(format!("unknown entity {e}")));
                }
                Ok(self.entity_context(e))
            }
            ContextQuery::Relation { head, tag, tail } => {
                if !self.tags_between(head, tail).contains(&tag) {
                    return Err(Error::Lookup(format!(
                        "no {} relation between {head} and {tail}",
                        tag.as_str()
                    )));
                }
                Ok(self.relation_context(head, tag, tail))
            }
        }
    }

    /// Induced subgraph on the entity and its one-hop neighbours.
    pub fn entity_context(&self, e: EntityId) -> ContextSubgraph {
        let mut members = vec![e];
        members.extend(self.neighbors(e));
        let n = members.len();
        let mut adjacency = Mat::zeros(n, n);
        for i in 1..n {
            adjacency.set(0, i, 1.0);
            adjacency.set(i, 0, 1.0);
        }
        // Neighbour-neighbour edges: only POIs have edges to non-POIs, so at
        // most one endpoint of any such pair is a POI.
        for i in 1..n {
            for j in (i + 1)..n {
                if self.has_edge(members[i], members[j]) {
                    adjacency.set(i, j, 1.0);
                    adjacency.set(j, i, 1.0);
                }
            }
        }
        ContextSubgraph {
            nodes: members.into_iter().map(ObjectId::Entity).collect(),
            adjacency,
        }
    }

    /// Star graph centred on `tag` over the other relation types linking the
    /// same ordered pair. The triple does not need to exist.
    pub fn relation_context(&self, head: EntityId, tag: RelTag, tail: EntityId) -> ContextSubgraph {
        let mut nodes = vec![ObjectId::Relation(tag)];
        nodes.extend(
            self.tags_between(head, tail)
                .into_iter()
                .filter(|&t| t != tag)
                .map(ObjectId::Relation),
        );
        let n = nodes.len();
        let mut adjacency = Mat::zeros(n, n);
        for i in 1..n {
            adjacency.set(0, i, 1.0);
            adjacency.set(i, 0, 1.0);
        }
        ContextSubgraph { nodes, adjacency }
    }

    /// Every triple in a fixed order: skeleton by POI, visits by user then
    /// window order, cascade edges sorted.
    pub fn triples(&self) -> Vec<Triple> {
        let mut out = Vec::with_capacity(self.triple_count());
        out.extend(self.static_triples());
        for (&u, w) in &self.users {
            for ev in &w.events {
                out.push(Triple::new(
                    EntityId::user(u),
                    Relation::Visit { time: ev.time },
                    EntityId::poi(ev.poi),
                ));
            }
        }
        for &(p, q) in self.also_visit.keys() {
            out.push(Triple::new(EntityId::poi(p), Relation::AlsoVisit, EntityId::rpoi(q)));
        }
        out
    }

    pub fn static_triples(&self) -> Vec<Triple> {
        let mut out = Vec::with_capacity(2 * self.poi_count());
        for p in 0..self.poi_count() {
            out.push(Triple::new(
                EntityId::poi(p),
                Relation::BelongTo,
                EntityId::category(self.poi_category[p]),
            ));
            out.push(Triple::new(
                EntityId::poi(p),
                Relation::LocateAt,
                EntityId::zone(self.poi_zone[p]),
            ));
        }
        out
    }

    pub fn triple_count(&self) -> usize {
        2 * self.poi_count() + self.users.values().map(|w| w.events.len()).sum::<usize>() + self.also_visit.len()
    }

    pub fn visit_edge_count(&self) -> usize {
        self.users.values().map(|w| w.events.len()).sum()
    }

    pub fn also_visit_count(&self) -> usize {
        self.also_visit.len()
    }

    /// Triples with at least one endpoint in `entities`.
    pub fn triples_incident(&self, entities: &BTreeSet<EntityId>) -> BTreeSet<Triple> {
        let mut out = BTreeSet::new();
        for &e in entities {
            match e.kind {
                EntityKind::User => {
                    if let Some(w) = self.users.get(&e.index) {
                        for ev in &w.events {
                            out.insert(Triple::new(e, Relation::Visit { time: ev.time }, EntityId::poi(ev.poi)));
                        }
                    }
                }
                EntityKind::Poi => {
                    let p = e.index;
                    if p >= self.poi_count() {
                        continue;
                    }
                    out.insert(Triple::new(
                        e,
                        Relation::BelongTo,
                        EntityId::category(self.poi_category[p]),
                    ));
                    out.insert(Triple::new(e, Relation::LocateAt, EntityId::zone(self.poi_zone[p])));
                    for &u in self.poi_visitors[p].keys() {
                        for ev in self.users[&u].events.iter().filter(|ev| ev.poi == p) {
                            out.insert(Triple::new(EntityId::user(u), Relation::Visit { time: ev.time }, e));
                        }
                    }
                    for q in self.also_visit_targets(p) {
                        out.insert(Triple::new(e, Relation::AlsoVisit, EntityId::rpoi(q)));
                    }
                }
                EntityKind::RPoi => {
                    if let Some(froms) = self.also_in.get(e.index) {
                        for &p in froms {
                            out.insert(Triple::new(EntityId::poi(p), Relation::AlsoVisit, e));
                        }
                    }
                }
                EntityKind::Category => {
                    for &p in self.category_members.get(e.index).into_iter().flatten() {
                        out.insert(Triple::new(EntityId::poi(p), Relation::BelongTo, e));
                    }
                }
                EntityKind::Zone => {
                    for &p in self.zone_members.get(e.index).into_iter().flatten() {
                        out.insert(Triple::new(EntityId::poi(p), Relation::LocateAt, e));
                    }
                }
            }
        }
        out
    }

    /// Sorts `pois` by descending lifetime visit count, ties by ascending index.
    pub fn popularity(&self, pois: &[usize]) -> Vec<usize> {
        let mut ranked = pois.to_vec();
        ranked.sort_by(|&a, &b| self.visit_counts[b].cmp(&self.visit_counts[a]).then(a.cmp(&b)));
        ranked
    }

    /// All POIs ranked by popularity.
    pub fn global_popularity(&self) -> Vec<usize> {
        let all: Vec<usize> = (0..self.poi_count()).collect();
        self.popularity(&all)
    }
}

fn decrement(map: &mut BTreeMap<usize, usize>, key: usize) {
    if let Some(c) = map.get_mut(&key) {
        *c -= 1;
        if *c == 0 {
            map.remove(&key);
        }
    }
}

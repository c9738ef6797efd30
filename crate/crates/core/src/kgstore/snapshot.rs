//! Line-oriented text snapshot.
//!
//! ```text
//! #geostream-kg v1
//! #window 50              (or `unbounded`)
//! #version 12
//! #counts 3 0 5           (lifetime visits per POI, by index)
//! #event 0 3 1333476009 2 (user poi time linked_from|-), window order
//! poi:0<TAB>belong_to<TAB>category:0
//! user:0<TAB>visit:1333476009<TAB>poi:3
//! ```
//!
//! Import rebuilds the graph from the skeleton triples and the event header,
//! then requires the rebuilt triple set to equal the listed triples.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use super::graph::{DynamicKg, StaticPoi, UserWindow, VisitEvent};
use super::types::{EntityId, EntityKind, Relation, Triple};
use crate::{Error, Result};

const HEADER: &str = "#geostream-kg v1";

pub fn write_snapshot<W: Write>(kg: &DynamicKg, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{HEADER}")?;
    if kg.window_capacity == usize::MAX {
        writeln!(w, "#window unbounded")?;
    } else {
        writeln!(w, "#window {}", kg.window_capacity)?;
    }
    writeln!(w, "#version {}", kg.version)?;
    write!(w, "#counts")?;
    for c in &kg.visit_counts {
        write!(w, " {c}")?;
    }
    writeln!(w)?;
    for (&u, window) in &kg.users {
        for ev in &window.events {
            let linked = ev.linked_from.map_or_else(|| "-".to_string(), |p| p.to_string());
            writeln!(w, "#event {u} {} {} {linked}", ev.poi, ev.time)?;
        }
    }
    for t in kg.triples() {
        writeln!(w, "{t}")?;
    }
    Ok(())
}

pub fn read_snapshot<R: BufRead>(r: R) -> Result<DynamicKg> {
    let mut lines = r.lines().enumerate();
    let first = lines
        .next()
        .map(|(_, l)| l)
        .transpose()
        .map_err(|e| Error::Format(format!("snapshot read failed: {e}")))?;
    if first.as_deref() != Some(HEADER) {
        return Err(Error::Format("missing snapshot header".into()));
    }
    let mut window = None;
    let mut version = 0;
    let mut counts: Option<Vec<u64>> = None;
    let mut events: Vec<(usize, VisitEvent)> = Vec::new();
    let mut listed = BTreeSet::new();
    let mut category = BTreeMap::new();
    let mut zone = BTreeMap::new();

    for (n, line) in lines {
        let line = line.map_err(|e| Error::Format(format!("snapshot read failed: {e}")))?;
        let bad = |what: &str| Error::Format(format!("snapshot line {}: {what}", n + 1));
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut parts = rest.split_whitespace();
            match parts.next() {
                Some("window") => {
                    let v = parts.next().ok_or_else(|| bad("empty window"))?;
                    window = Some(if v == "unbounded" {
                        usize::MAX
                    } else {
                        v.parse().map_err(|_| bad("bad window"))?
                    });
                }
                Some("version") => {
                    version = parts
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| bad("bad version"))?;
                }
                Some("counts") => {
                    counts = Some(
                        parts
                            .map(|c| c.parse().map_err(|_| bad("bad count")))
                            .collect::<Result<_>>()?,
                    );
                }
                Some("event") => {
                    let f: Vec<&str> = parts.collect();
                    if f.len() != 4 {
                        return Err(bad("event needs 4 fields"));
                    }
                    let user = f[0].parse().map_err(|_| bad("bad user"))?;
                    let poi = f[1].parse().map_err(|_| bad("bad poi"))?;
                    let time = f[2].parse().map_err(|_| bad("bad time"))?;
                    let linked_from = match f[3] {
                        "-" => None,
                        p => Some(p.parse().map_err(|_| bad("bad link"))?),
                    };
                    events.push((user, VisitEvent { poi, time, linked_from }));
                }
                _ => return Err(bad("unknown header line")),
            }
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad("triple needs 3 tab-separated fields"));
        }
        let head: EntityId = f[0].parse()?;
        let rel: Relation = f[1].parse()?;
        let tail: EntityId = f[2].parse()?;
        let (hk, tk) = rel.tag().signature();
        if head.kind != hk || tail.kind != tk {
            return Err(bad("relation endpoints have the wrong kinds"));
        }
        match rel {
            Relation::BelongTo => {
                category.insert(head.index, tail.index);
            }
            Relation::LocateAt => {
                zone.insert(head.index, tail.index);
            }
            _ => {}
        }
        listed.insert(Triple::new(head, rel, tail));
    }

    let window = window.ok_or_else(|| Error::Format("snapshot lacks #window".into()))?;
    if category.keys().ne(zone.keys()) {
        return Err(Error::Consistency(
            "every poi needs both a belong_to and a locate_at triple".into(),
        ));
    }
    let pois: Vec<StaticPoi> = category
        .iter()
        .map(|(&poi, &c)| StaticPoi {
            poi,
            category: c,
            zone: zone[&poi],
        })
        .collect();
    let mut kg = DynamicKg::build_static(&pois, window)?;
    let n = kg.poi_count();
    for (user, ev) in events {
        if ev.poi >= n || ev.linked_from.is_some_and(|p| p >= n) {
            return Err(Error::Consistency(format!("event references unknown poi {}", ev.poi)));
        }
        let w = kg.users.entry(user).or_insert_with(UserWindow::default);
        if w.events.len() >= window {
            return Err(Error::Consistency(format!("user {user} window exceeds capacity")));
        }
        *w.poi_counts.entry(ev.poi).or_insert(0) += 1;
        w.events.push_back(ev);
        *kg.poi_visitors[ev.poi].entry(user).or_insert(0) += 1;
        if let Some(prev) = ev.linked_from {
            *kg.also_visit.entry((prev, ev.poi)).or_insert(0) += 1;
            kg.also_in[ev.poi].insert(prev);
        }
    }
    match counts {
        Some(c) if c.len() == n => kg.visit_counts = c,
        Some(_) => return Err(Error::Consistency("visit count arity mismatch".into())),
        None => return Err(Error::Format("snapshot lacks #counts".into())),
    }
    kg.version = version;

    let rebuilt: BTreeSet<Triple> = kg.triples().into_iter().collect();
    if rebuilt != listed {
        return Err(Error::Consistency(
            "listed triples disagree with the event header".into(),
        ));
    }
    debug_assert!(kg
        .entities()
        .iter()
        .all(|e| e.kind != EntityKind::User || kg.contains(*e)));
    Ok(kg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kg_from(events: &[(usize, usize)], w: usize) -> DynamicKg {
        let pois: Vec<StaticPoi> = (0..6)
            .map(|p| StaticPoi {
                poi: p,
                category: p % 2,
                zone: p % 3,
            })
            .collect();
        let mut kg = DynamicKg::build_static(&pois, w).unwrap();
        for (t, &(u, p)) in events.iter().enumerate() {
            kg.apply_visit(u, p, 1_000 + t as i64).unwrap();
        }
        kg
    }

    proptest! {
        #[test]
        fn snapshot_round_trip(events in proptest::collection::vec((0usize..3, 0usize..6), 0..60), w in 1usize..5) {
            let kg = kg_from(&events, w);
            let mut buf = Vec::new();
            write_snapshot(&kg, &mut buf).unwrap();
            let back = read_snapshot(buf.as_slice()).unwrap();
            prop_assert_eq!(back, kg);
        }
    }

    #[test]
    fn continuing_after_import_matches_continuing_the_original() {
        let mut kg = kg_from(&[(0, 1), (0, 2), (1, 2), (0, 3), (0, 4)], 3);
        let mut buf = Vec::new();
        write_snapshot(&kg, &mut buf).unwrap();
        let mut back = read_snapshot(buf.as_slice()).unwrap();
        let a = kg.apply_visit(0, 5, 9_999).unwrap();
        let b = back.apply_visit(0, 5, 9_999).unwrap();
        assert_eq!(a, b);
        assert_eq!(kg.triples(), back.triples());
    }

    #[test]
    fn tampered_triples_are_rejected() {
        let kg = kg_from(&[(0, 1), (0, 2)], 3);
        let mut buf = Vec::new();
        write_snapshot(&kg, &mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text.push_str("user:0\tvisit:5\tpoi:4\n");
        assert!(matches!(read_snapshot(text.as_bytes()), Err(Error::Consistency(_))));
    }

    #[test]
    fn header_format() {
        let kg = kg_from(&[(0, 1)], 3);
        let mut buf = Vec::new();
        write_snapshot(&kg, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("#geostream-kg v1\n#window 3\n#version 1\n#counts 0 1 0 0 0 0\n#event 0 1 1000 -\n"));
        assert!(text.contains("user:0\tvisit:1000\tpoi:1\n"));
    }
}

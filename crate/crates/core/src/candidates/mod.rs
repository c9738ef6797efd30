//! Meta-path candidate generation.

use std::collections::BTreeSet;
use std::fmt;

use crate::kgstore::DynamicKg;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetaPathScheme {
    /// user -visit-> POI
    Uv,
    /// user -visit-> POI -also_visit-> RPOI
    Uva,
    /// user -visit-> POI -belong_to-> category <-belong_to- POI
    Uvcb,
    /// user -visit-> POI -locate_at-> zone <-locate_at- POI
    Uvzl,
}

impl MetaPathScheme {
    pub const ALL: [MetaPathScheme; 4] = [
        MetaPathScheme::Uv,
        MetaPathScheme::Uva,
        MetaPathScheme::Uvcb,
        MetaPathScheme::Uvzl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetaPathScheme::Uv => "UV",
            MetaPathScheme::Uva => "UVA",
            MetaPathScheme::Uvcb => "UVCB",
            MetaPathScheme::Uvzl => "UVZL",
        }
    }
}

impl fmt::Display for MetaPathScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a candidate came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    Scheme(MetaPathScheme),
    Popular,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateSet {
    pub pois: Vec<usize>,
    pub provenance: Vec<Provenance>,
    pub k: usize,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }

    pub fn contains(&self, poi: usize) -> bool {
        self.pois.contains(&poi)
    }

    /// Every POI in the graph, in index order, tagged as popularity picks.
    pub fn all_pois(kg: &DynamicKg) -> Self {
        let n = kg.poi_count();
        CandidateSet {
            pois: (0..n).collect(),
            provenance: vec![Provenance::Popular; n],
            k: n,
        }
    }
}

/// POI endpoints of every instantiation of `scheme` starting at `user`,
/// with multiplicity. RPOI endpoints are reported as their POI.
pub fn expand_meta_path(kg: &DynamicKg, user: usize, scheme: MetaPathScheme) -> Result<Vec<usize>> {
    let window = kg
        .window(user)
        .ok_or_else(|| Error::Lookup(format!("unknown user {user}")))?;
    let mut out = Vec::new();
    for ev in window {
        let p = ev.poi;
        match scheme {
            MetaPathScheme::Uv => out.push(p),
            MetaPathScheme::Uva => out.extend(kg.also_visit_targets(p)),
            MetaPathScheme::Uvcb => out.extend_from_slice(kg.category_members(kg.category_of(p))),
            MetaPathScheme::Uvzl => out.extend_from_slice(kg.zone_members(kg.zone_of(p))),
        }
    }
    Ok(out)
}

/// Top-`k` popular POIs per scheme in scheme order, first occurrence kept,
/// padded from global popularity up to `min(4k, |POIs|)`. A user the graph
/// has not seen gets padding only.
pub fn generate_candidates(kg: &DynamicKg, user: usize, k: usize) -> CandidateSet {
    let target = (4 * k).min(kg.poi_count());
    let mut seen = BTreeSet::new();
    let mut pois = Vec::with_capacity(target);
    let mut provenance = Vec::with_capacity(target);
    if kg.window(user).is_some() {
        for scheme in MetaPathScheme::ALL {
            let found: BTreeSet<usize> = expand_meta_path(kg, user, scheme)
                .unwrap_or_default()
                .into_iter()
                .collect();
            let ranked = kg.popularity(&found.into_iter().collect::<Vec<_>>());
            for p in ranked.into_iter().take(k) {
                if seen.insert(p) {
                    pois.push(p);
                    provenance.push(Provenance::Scheme(scheme));
                }
            }
        }
    }
    if pois.len() < target {
        for p in kg.global_popularity() {
            if pois.len() >= target {
                break;
            }
            if seen.insert(p) {
                pois.push(p);
                provenance.push(Provenance::Popular);
            }
        }
    }
    CandidateSet { pois, provenance, k }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgstore::{EntityId, EntityKind, RelTag, StaticPoi, Triple};
    use proptest::prelude::*;

    fn kg_with(cats: &[usize], zones: &[usize], window: usize) -> DynamicKg {
        let pois: Vec<_> = cats
            .iter()
            .zip(zones)
            .enumerate()
            .map(|(poi, (&category, &zone))| StaticPoi { poi, category, zone })
            .collect();
        DynamicKg::build_static(&pois, window).unwrap()
    }

    #[test]
    fn unknown_user_is_a_lookup_error() {
        let kg = kg_with(&[0, 1], &[0, 1], 5);
        assert!(matches!(
            expand_meta_path(&kg, 3, MetaPathScheme::Uv),
            Err(Error::Lookup(_))
        ));
    }

    #[test]
    fn category_path_reaches_siblings() {
        let mut kg = kg_with(&[0, 0, 1], &[0, 1, 2], 5);
        kg.apply_visit(0, 0, 1).unwrap();
        let mut got = expand_meta_path(&kg, 0, MetaPathScheme::Uvcb).unwrap();
        got.sort();
        assert_eq!(got, vec![0, 1]);
    }

    #[test]
    fn also_visit_path_follows_cascade() {
        let mut kg = kg_with(&[0, 1], &[0, 1], 5);
        kg.apply_visit(0, 0, 1).unwrap();
        kg.apply_visit(0, 1, 2).unwrap();
        assert_eq!(expand_meta_path(&kg, 0, MetaPathScheme::Uva).unwrap(), vec![1]);
    }

    #[test]
    fn new_user_gets_global_popularity() {
        let mut kg = kg_with(&[0, 1, 2, 3, 4], &[0, 1, 2, 3, 4], 5);
        for (t, p) in [4, 4, 4, 2, 2, 0].into_iter().enumerate() {
            kg.apply_visit(1, p, t as i64).unwrap();
        }
        let c = generate_candidates(&kg, 99, 2);
        // counts: p4=3, p2=2, p0=1, p1=p3=0; the size rule min(4K, |POIs|)
        // asks for all five.
        assert_eq!(c.pois, vec![4, 2, 0, 1, 3]);
        assert!(c.provenance.iter().all(|p| *p == Provenance::Popular));
    }

    #[test]
    fn identical_scheme_outputs_collapse() {
        // One POI in its own category and zone: all four schemes give {p0}.
        let mut kg = kg_with(&[0, 1, 2], &[0, 1, 2], 5);
        kg.apply_visit(0, 0, 1).unwrap();
        kg.apply_visit(0, 0, 2).unwrap();
        for s in MetaPathScheme::ALL {
            let set: BTreeSet<_> = expand_meta_path(&kg, 0, s).unwrap().into_iter().collect();
            assert_eq!(set, BTreeSet::from([0]), "{s}");
        }
        let c = generate_candidates(&kg, 0, 1);
        assert_eq!(c.pois[0], 0);
        assert_eq!(c.provenance[0], Provenance::Scheme(MetaPathScheme::Uv));
        assert_eq!(c.pois.iter().filter(|&&p| p == 0).count(), 1);
        assert!(c.provenance[1..].iter().all(|p| *p == Provenance::Popular));
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn k_one_dedup_example() {
        // Top-1 per scheme comes out as p2, p3, p2, p4. p2 shares zone 0
        // with p4; p3 is reached through the cascade p2 -> rpoi(p3).
        let cats = [1, 2, 0, 3, 4, 5];
        let zones = [1, 2, 0, 3, 0, 5];
        let mut kg = kg_with(&cats, &zones, 2);
        // Make p4 more popular than p2 so UVZL's top-1 is p4.
        for t in 0..3 {
            kg.apply_visit(5, 4, t).unwrap();
        }
        kg.apply_visit(0, 2, 10).unwrap();
        kg.apply_visit(0, 3, 11).unwrap();
        kg.apply_visit(6, 2, 12).unwrap();
        let uv: BTreeSet<_> = expand_meta_path(&kg, 0, MetaPathScheme::Uv)
            .unwrap()
            .into_iter()
            .collect();
        assert_eq!(uv, BTreeSet::from([2, 3]));
        let c = generate_candidates(&kg, 0, 1);
        // UV -> p2 (2 visits vs 1), UVA -> p3, UVCB -> p2 (cats {0,3} -> {p2,p3}), UVZL -> p4.
        assert_eq!(&c.pois[..3], &[2, 3, 4]);
        assert_eq!(
            &c.provenance[..3],
            &[
                Provenance::Scheme(MetaPathScheme::Uv),
                Provenance::Scheme(MetaPathScheme::Uva),
                Provenance::Scheme(MetaPathScheme::Uvzl),
            ]
        );
        assert_eq!(c.len(), 4);
        assert_eq!(c.provenance[3], Provenance::Popular);
    }

    /// Walks the triple list directly to enumerate scheme endpoints.
    fn brute_force(kg: &DynamicKg, user: usize, scheme: MetaPathScheme) -> BTreeSet<usize> {
        let triples = kg.triples();
        let step = |from: EntityId, tag: RelTag| -> Vec<EntityId> {
            triples
                .iter()
                .filter(|t| t.head == from && t.rel.tag() == tag)
                .map(|t| t.tail)
                .collect()
        };
        let back = |to: EntityId, tag: RelTag| -> Vec<EntityId> {
            triples
                .iter()
                .filter(|t: &&Triple| t.tail == to && t.rel.tag() == tag)
                .map(|t| t.head)
                .collect()
        };
        let mut out = BTreeSet::new();
        for p in step(EntityId::user(user), RelTag::Visit) {
            match scheme {
                MetaPathScheme::Uv => {
                    out.insert(p.index);
                }
                MetaPathScheme::Uva => {
                    for r in step(p, RelTag::AlsoVisit) {
                        assert_eq!(r.kind, EntityKind::RPoi);
                        out.insert(r.index);
                    }
                }
                MetaPathScheme::Uvcb => {
                    for c in step(p, RelTag::BelongTo) {
                        out.extend(back(c, RelTag::BelongTo).into_iter().map(|e| e.index));
                    }
                }
                MetaPathScheme::Uvzl => {
                    for z in step(p, RelTag::LocateAt) {
                        out.extend(back(z, RelTag::LocateAt).into_iter().map(|e| e.index));
                    }
                }
            }
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn candidates_are_sound_sized_and_deterministic(
            layout in proptest::collection::vec((0usize..3, 0usize..3), 1..10),
            events in proptest::collection::vec((0usize..4, 0usize..10), 0..30),
            k in 1usize..4,
            window in 1usize..5,
        ) {
            let cats: Vec<usize> = layout.iter().map(|l| l.0).collect();
            let zones: Vec<usize> = layout.iter().map(|l| l.1).collect();
            let mut kg = kg_with(&cats, &zones, window);
            let n = layout.len();
            for (t, (u, p)) in events.into_iter().enumerate() {
                kg.apply_visit(u, p % n, t as i64).unwrap();
            }
            for user in 0..5 {
                let c = generate_candidates(&kg, user, k);
                prop_assert_eq!(c.len(), (4 * k).min(n));
                let distinct: BTreeSet<_> = c.pois.iter().collect();
                prop_assert_eq!(distinct.len(), c.len());
                for (p, prov) in c.pois.iter().zip(&c.provenance) {
                    if let Provenance::Scheme(s) = prov {
                        prop_assert!(brute_force(&kg, user, *s).contains(p));
                    }
                }
                prop_assert_eq!(&c, &generate_candidates(&kg, user, k));
                if kg.window(user).is_some() {
                    for s in MetaPathScheme::ALL {
                        let got: BTreeSet<_> = expand_meta_path(&kg, user, s).unwrap().into_iter().collect();
                        prop_assert_eq!(got, brute_force(&kg, user, s));
                    }
                }
            }
        }
    }
}

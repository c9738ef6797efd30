//! Seeded synthetic check-in streams for smoke tests and demos.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ingest::{CheckInRecord, VenueRecord};

const CATEGORY_NAMES: [&str; 8] = [
    "Coffee Shop",
    "Bar",
    "Restaurant",
    "Park",
    "Museum",
    "Gym",
    "Train Station",
    "Office",
];
const BASE_LAT: f64 = 40.70;
const BASE_LON: f64 = -74.00;
const STEP_SECS: i64 = 600;
const START_TIME: i64 = 1_333_238_400;

fn category_name(c: usize) -> String {
    let base = CATEGORY_NAMES[c % CATEGORY_NAMES.len()];
    match c / CATEGORY_NAMES.len() {
        0 => base.to_string(),
        round => format!("{base} {round}"),
    }
}

/// A POI layout on a jittered grid, spaced wider than the default zone cell
/// so neighbouring POIs usually land in different zones.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPoi {
    pub venue: String,
    pub category: usize,
    pub lat: f64,
    pub lon: f64,
}

pub fn poi_grid(count: usize, categories: usize, rng: &mut ChaCha8Rng) -> Vec<SyntheticPoi> {
    assert!(categories > 0, "need at least one category");
    let side = (count as f64).sqrt().ceil().max(1.0) as usize;
    (0..count)
        .map(|i| SyntheticPoi {
            venue: format!("v{i}"),
            category: i % categories,
            lat: BASE_LAT + 0.013 * (i / side) as f64 + rng.gen_range(0.0..0.002),
            lon: BASE_LON + 0.013 * (i % side) as f64 + rng.gen_range(0.0..0.002),
        })
        .collect()
}

fn record(user: usize, p: &SyntheticPoi, time: i64) -> CheckInRecord {
    CheckInRecord {
        user: format!("u{user}"),
        venue: p.venue.clone(),
        category_id: format!("c{}", p.category),
        category_name: category_name(p.category),
        lat: p.lat,
        lon: p.lon,
        time,
    }
}

/// Visits plus the full venue catalog, so POIs nobody visits still exist.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub records: Vec<CheckInRecord>,
    pub catalog: Vec<VenueRecord>,
}

fn catalog(layout: &[SyntheticPoi]) -> Vec<VenueRecord> {
    layout
        .iter()
        .map(|p| VenueRecord {
            venue: p.venue.clone(),
            category_id: format!("c{}", p.category),
            category_name: category_name(p.category),
            lat: p.lat,
            lon: p.lon,
        })
        .collect()
}

/// One user repeating `cycle` over a layout of `pois` POIs, each in its own
/// category.
pub fn cyclic_stream(pois: usize, cycle: &[usize], events: usize, seed: u64) -> SyntheticData {
    assert!(
        !cycle.is_empty() && cycle.iter().all(|&p| p < pois),
        "cycle must index the layout"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = poi_grid(pois, pois, &mut rng);
    let mut out = Vec::with_capacity(events);
    let mut time = START_TIME;
    for i in 0..events {
        out.push(record(0, &layout[cycle[i % cycle.len()]], time));
        time += STEP_SECS;
    }
    SyntheticData {
        records: out,
        catalog: catalog(&layout),
    }
}

/// `users` users over `pois` POIs in `categories` categories. Each user has
/// a favourite category that advances by one every `events / phases`
/// events; a visit goes to the favourite with probability `focus`, else to a
/// uniform POI. Within a category a user prefers the POI nearest their home
/// slot.
pub fn drifting_stream(
    users: usize,
    pois: usize,
    categories: usize,
    events: usize,
    phases: usize,
    focus: f64,
    seed: u64,
) -> SyntheticData {
    assert!(
        users > 0 && pois >= categories && phases > 0,
        "degenerate drifting stream"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = poi_grid(pois, categories, &mut rng);
    let by_cat: Vec<Vec<usize>> = (0..categories)
        .map(|c| (0..pois).filter(|&p| layout[p].category == c).collect())
        .collect();
    let start: Vec<usize> = (0..users).map(|_| rng.gen_range(0..categories)).collect();
    let home: Vec<usize> = (0..users).map(|_| rng.gen_range(0..usize::MAX)).collect();
    let phase_len = events.div_ceil(phases).max(1);
    let mut order: Vec<usize> = (0..events).map(|i| i % users).collect();
    order.shuffle(&mut rng);
    let mut out = Vec::with_capacity(events);
    let mut time = START_TIME;
    for (i, &u) in order.iter().enumerate() {
        let fav = (start[u] + i / phase_len) % categories;
        let p = if rng.gen::<f64>() < focus {
            let members = &by_cat[fav];
            if rng.gen::<f64>() < 0.7 {
                members[home[u] % members.len()]
            } else {
                members[rng.gen_range(0..members.len())]
            }
        } else {
            rng.gen_range(0..pois)
        };
        out.push(record(u, &layout[p], time));
        time += STEP_SECS;
    }
    SyntheticData {
        records: out,
        catalog: catalog(&layout),
    }
}

/// Built-in datasets addressed as `synthetic:<name>` in configs.
pub fn named(name: &str, seed: u64) -> Option<SyntheticData> {
    match name {
        "cyclic" => Some(cyclic_stream(8, &[0, 1, 2], 600, seed)),
        "drift" => Some(drifting_stream(20, 30, 6, 3000, 3, 0.8, seed)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclic_repeats_the_cycle() {
        let s = cyclic_stream(6, &[0, 1, 2], 9, 7);
        assert_eq!(s.catalog.len(), 6);
        let s = s.records;
        let venues: Vec<&str> = s.iter().map(|r| r.venue.as_str()).collect();
        assert_eq!(venues, ["v0", "v1", "v2", "v0", "v1", "v2", "v0", "v1", "v2"]);
        assert!(s.windows(2).all(|w| w[0].time < w[1].time));
        assert!(s.iter().all(|r| r.user == "u0"));
    }

    #[test]
    fn drifting_is_seeded() {
        assert_eq!(
            drifting_stream(5, 12, 4, 200, 2, 0.8, 3),
            drifting_stream(5, 12, 4, 200, 2, 0.8, 3)
        );
        assert_ne!(
            drifting_stream(5, 12, 4, 200, 2, 0.8, 3),
            drifting_stream(5, 12, 4, 200, 2, 0.8, 4)
        );
    }

    #[test]
    fn drifting_favours_the_current_category() {
        let s = drifting_stream(4, 12, 4, 4000, 1, 0.9, 1).records;
        let mut per_user = std::collections::BTreeMap::<&str, std::collections::BTreeMap<&str, usize>>::new();
        for r in &s {
            *per_user.entry(&r.user).or_default().entry(&r.category_id).or_default() += 1;
        }
        for counts in per_user.values() {
            let top = counts.values().max().unwrap();
            let total: usize = counts.values().sum();
            assert!(*top as f64 > 0.8 * total as f64);
        }
    }

    #[test]
    fn category_names_stay_distinct() {
        assert_eq!(category_name(0), "Coffee Shop");
        assert_eq!(category_name(8), "Coffee Shop 1");
    }
}

//! Check-in ingestion, zone derivation and the temporal split.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::DateTime;

use crate::geo::{GeoPoint, PoiProfile};
use crate::kgstore::StaticPoi;
use crate::{Error, Result};

const FOURSQUARE_TIME: &str = "%a %b %d %H:%M:%S %z %Y";
const MAX_MALFORMED_FRACTION: f64 = 0.10;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckInRecord {
    pub user: String,
    pub venue: String,
    pub category_id: String,
    pub category_name: String,
    pub lat: f64,
    pub lon: f64,
    /// Epoch seconds.
    pub time: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedCheckins {
    /// Stable-sorted by time.
    pub records: Vec<CheckInRecord>,
    pub malformed: usize,
}

/// Accepts either epoch seconds or the Foursquare dump format
/// (`Tue Apr 03 18:00:09 +0000 2012`).
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(t) = s.parse::<i64>() {
        return Some(t);
    }
    DateTime::parse_from_str(s, FOURSQUARE_TIME).ok().map(|t| t.timestamp())
}

/// One TSV line: user, venue, category id, category name, latitude,
/// longitude, optionally a timezone offset, then the timestamp.
pub fn parse_line(line: &str) -> Option<CheckInRecord> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != 7 && f.len() != 8 {
        return None;
    }
    let lat: f64 = f[4].trim().parse().ok()?;
    let lon: f64 = f[5].trim().parse().ok()?;
    GeoPoint::new(lat, lon).ok()?;
    let time = parse_timestamp(f[f.len() - 1])?;
    if f[..4].iter().any(|x| x.trim().is_empty()) {
        return None;
    }
    Some(CheckInRecord {
        user: f[0].trim().to_string(),
        venue: f[1].trim().to_string(),
        category_id: f[2].trim().to_string(),
        category_name: f[3].trim().to_string(),
        lat,
        lon,
        time,
    })
}

pub fn parse_checkins_str(text: &str) -> Result<ParsedCheckins> {
    let mut records = Vec::new();
    let mut malformed = 0usize;
    let mut total = 0usize;
    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        match parse_line(line) {
            Some(r) => records.push(r),
            None => malformed += 1,
        }
    }
    if total > 0 && malformed as f64 > MAX_MALFORMED_FRACTION * total as f64 {
        return Err(Error::Format(format!(
            "{malformed} of {total} check-in lines are malformed"
        )));
    }
    records.sort_by_key(|r| r.time);
    Ok(ParsedCheckins { records, malformed })
}

pub fn parse_checkins(path: &Path) -> Result<ParsedCheckins> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkins_str(&text)
}

/// Inverse of [`parse_line`] with the timestamp as epoch seconds.
pub fn format_checkins(records: &[CheckInRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t0\t{}",
            r.user, r.venue, r.category_id, r.category_name, r.lat, r.lon, r.time
        );
    }
    s
}

/// Grid cell of a coordinate; the floor convention puts boundaries in the
/// lower cell.
pub fn zone_cell(lat: f64, lon: f64, cell_deg: f64) -> (i64, i64) {
    ((lat / cell_deg).floor() as i64, (lon / cell_deg).floor() as i64)
}

/// Zone cell per venue, from the venue's first record.
pub fn derive_zones(records: &[CheckInRecord], cell_deg: f64) -> Result<BTreeMap<String, (i64, i64)>> {
    if !(cell_deg > 0.0) {
        return Err(Error::Config(format!("cell size {cell_deg} must be positive")));
    }
    let mut out = BTreeMap::new();
    for r in records {
        out.entry(r.venue.clone())
            .or_insert_with(|| zone_cell(r.lat, r.lon, cell_deg));
    }
    Ok(out)
}

/// First `floor(fraction * n)` records train, the rest test.
pub fn split_stream<T>(records: &[T], fraction: f64) -> (&[T], &[T]) {
    let cut = ((fraction * records.len() as f64).floor() as usize).min(records.len());
    records.split_at(cut)
}

/// A venue known ahead of the stream, e.g. from a catalog.
#[derive(Clone, Debug, PartialEq)]
pub struct VenueRecord {
    pub venue: String,
    pub category_id: String,
    pub category_name: String,
    pub lat: f64,
    pub lon: f64,
}

impl From<&CheckInRecord> for VenueRecord {
    fn from(r: &CheckInRecord) -> Self {
        VenueRecord {
            venue: r.venue.clone(),
            category_id: r.category_id.clone(),
            category_name: r.category_name.clone(),
            lat: r.lat,
            lon: r.lon,
        }
    }
}

/// One visit with dense user and POI ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub user: usize,
    pub poi: usize,
    pub time: i64,
}

/// A contiguous slice of the stream interned into dense ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub events: Vec<Event>,
    pub pois: Vec<PoiProfile>,
    pub static_pois: Vec<StaticPoi>,
    pub users: Vec<String>,
    pub venues: Vec<String>,
    pub categories: Vec<String>,
    pub zones: Vec<(i64, i64)>,
}

#[derive(Default)]
struct Interner {
    users: BTreeMap<String, usize>,
    venues: BTreeMap<String, usize>,
    categories: BTreeMap<String, usize>,
    zones: BTreeMap<(i64, i64), usize>,
}

impl Interner {
    fn venue(&mut self, ds: &mut Dataset, v: &VenueRecord, cell_deg: f64) -> Result<usize> {
        if let Some(&p) = self.venues.get(&v.venue) {
            return Ok(p);
        }
        let p = ds.venues.len();
        let location = GeoPoint::new(v.lat, v.lon)?;
        self.venues.insert(v.venue.clone(), p);
        ds.venues.push(v.venue.clone());
        let category = match self.categories.get(&v.category_id) {
            Some(&c) => c,
            None => {
                ds.categories.push(v.category_name.clone());
                self.categories.insert(v.category_id.clone(), ds.categories.len() - 1);
                ds.categories.len() - 1
            }
        };
        let cell = zone_cell(v.lat, v.lon, cell_deg);
        let zone = *self.zones.entry(cell).or_insert_with(|| {
            ds.zones.push(cell);
            ds.zones.len() - 1
        });
        ds.pois.push(PoiProfile {
            poi: p,
            category,
            category_name: ds.categories[category].clone(),
            location,
        });
        ds.static_pois.push(StaticPoi { poi: p, category, zone });
        Ok(p)
    }
}

impl Dataset {
    /// Interns `records[offset .. offset + length]` (time-sorted input).
    /// Ids follow first appearance; a venue keeps its first category and
    /// location.
    pub fn from_records(records: &[CheckInRecord], offset: usize, length: usize, cell_deg: f64) -> Result<Self> {
        Self::with_catalog(records, offset, length, cell_deg, &[])
    }

    /// Like [`Self::from_records`], but `catalog` venues are interned first
    /// so they exist even if the slice never visits them.
    pub fn with_catalog(
        records: &[CheckInRecord],
        offset: usize,
        length: usize,
        cell_deg: f64,
        catalog: &[VenueRecord],
    ) -> Result<Self> {
        if !(cell_deg > 0.0) {
            return Err(Error::Config(format!("cell size {cell_deg} must be positive")));
        }
        let end = offset.saturating_add(length).min(records.len());
        let slice = records.get(offset..end).unwrap_or(&[]);
        let mut ds = Dataset {
            events: Vec::with_capacity(slice.len()),
            pois: Vec::new(),
            static_pois: Vec::new(),
            users: Vec::new(),
            venues: Vec::new(),
            categories: Vec::new(),
            zones: Vec::new(),
        };
        let mut interner = Interner::default();
        for v in catalog {
            interner.venue(&mut ds, v, cell_deg)?;
        }
        for r in slice {
            let user = match interner.users.get(&r.user) {
                Some(&u) => u,
                None => {
                    ds.users.push(r.user.clone());
                    interner.users.insert(r.user.clone(), ds.users.len() - 1);
                    ds.users.len() - 1
                }
            };
            let poi = match interner.venues.get(&r.venue) {
                Some(&p) => p,
                None => interner.venue(&mut ds, &VenueRecord::from(r), cell_deg)?,
            };
            ds.events.push(Event {
                user,
                poi,
                time: r.time,
            });
        }
        Ok(ds)
    }

    pub fn split(&self, fraction: f64) -> (&[Event], &[Event]) {
        split_stream(&self.events, fraction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorts_three_lines() {
        let text = "u1\tv1\tc1\tCafe\t40.0\t-73.0\t0\t300\n\
                    u2\tv2\tc2\tBar\t40.1\t-73.1\t0\t100\n\
                    u1\tv3\tc1\tCafe\t40.2\t-73.2\t0\t200\n";
        let p = parse_checkins_str(text).unwrap();
        assert_eq!(p.malformed, 0);
        let times: Vec<i64> = p.records.iter().map(|r| r.time).collect();
        assert_eq!(times, vec![100, 200, 300]);
    }

    #[test]
    fn sort_is_stable_on_ties() {
        let text = "a\tv1\tc\tX\t0\t0\t5\nb\tv2\tc\tX\t0\t0\t5\nc\tv3\tc\tX\t0\t0\t1\n";
        let users: Vec<String> = parse_checkins_str(text)
            .unwrap()
            .records
            .into_iter()
            .map(|r| r.user)
            .collect();
        assert_eq!(users, vec!["c", "a", "b"]);
    }

    #[test]
    fn bad_timestamp_is_skipped_and_counted() {
        let mut text = String::new();
        for i in 0..10 {
            text.push_str(&format!("u\tv{i}\tc\tX\t1.0\t2.0\t0\t{i}\n"));
        }
        text.push_str("u\tv\tc\tX\t1.0\t2.0\t0\tnot a time\n");
        let p = parse_checkins_str(&text).unwrap();
        assert_eq!(p.records.len(), 10);
        assert_eq!(p.malformed, 1);
    }

    #[test]
    fn too_many_malformed_is_format_error() {
        let text = "u\tv\tc\tX\t1.0\t2.0\t0\t1\nbroken\nalso broken\n";
        assert!(matches!(parse_checkins_str(text), Err(Error::Format(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            parse_checkins(Path::new("/nonexistent/checkins.tsv")),
            Err(Error::Io { .. })
        ));
    }

    /// Proleptic Gregorian day count from 1970-01-01.
    fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
        let y = if m <= 2 { y - 1 } else { y };
        let era = y.div_euclid(400);
        let yoe = y - era * 400;
        let mp = (m + 9) % 12;
        let doy = (153 * mp + 2) / 5 + d - 1;
        let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        era * 146097 + doe - 719468
    }

    #[test]
    fn foursquare_timestamp_matches_calendar() {
        let want = days_from_civil(2012, 4, 3) * 86400 + 18 * 3600 + 9;
        assert_eq!(want, 1333476009);
        assert_eq!(parse_timestamp("Tue Apr 03 18:00:09 +0000 2012"), Some(want));
        let shifted = days_from_civil(2012, 4, 3) * 86400 + 14 * 3600 + 9;
        assert_eq!(parse_timestamp("Tue Apr 03 18:00:09 +0400 2012"), Some(shifted));
    }

    #[test]
    fn seven_field_lines_parse() {
        let r = parse_line("u\tv\tc\tMuseum\t40.5\t-73.5\t1333476009").unwrap();
        assert_eq!(r.time, 1333476009);
        assert_eq!(r.category_name, "Museum");
    }

    #[test]
    fn out_of_range_coordinates_are_malformed() {
        assert!(parse_line("u\tv\tc\tX\t95.0\t0.0\t0\t1").is_none());
    }

    #[test]
    fn zone_floor_arithmetic() {
        assert_eq!(zone_cell(40.0049, -73.989, 0.01), (4000, -7399));
        // One metre apart, away from a cell edge.
        assert_eq!(zone_cell(40.7055, -73.9955, 0.01), zone_cell(40.705509, -73.9955, 0.01));
        // On a boundary: the lower cell.
        assert_eq!(zone_cell(0.5, 0.25, 0.25).1, 1);
        assert_eq!(zone_cell(-0.5, 0.0, 0.25), (-2, 0));
    }

    #[test]
    fn split_floor_rule() {
        let ten: Vec<u8> = (0..10).collect();
        assert_eq!(split_stream(&ten, 0.8).0.len(), 8);
        assert_eq!(split_stream(&ten, 0.8).1.len(), 2);
        let one = [0u8];
        assert_eq!(split_stream(&one, 0.8).0.len(), 0);
        assert_eq!(split_stream(&one, 0.8).1.len(), 1);
        let big = vec![0u8; 15000];
        let (a, b) = split_stream(&big, 0.8);
        assert_eq!((a.len(), b.len()), (12000, 3000));
    }

    #[test]
    fn dataset_interns_in_first_appearance_order() {
        let text = "u1\tv1\tc1\tCafe\t40.0001\t-73.0001\t0\t1\n\
                    u2\tv2\tc2\tBar\t40.0002\t-73.0002\t0\t2\n\
                    u1\tv1\tc1\tCafe\t40.0001\t-73.0001\t0\t3\n\
                    u2\tv3\tc1\tCafe\t41.5\t-73.0\t0\t4\n";
        let recs = parse_checkins_str(text).unwrap().records;
        let ds = Dataset::from_records(&recs, 0, 100, 0.01).unwrap();
        assert_eq!(ds.users, vec!["u1", "u2"]);
        assert_eq!(ds.venues, vec!["v1", "v2", "v3"]);
        assert_eq!(ds.categories, vec!["Cafe", "Bar"]);
        let zones: Vec<usize> = ds.static_pois.iter().map(|p| p.zone).collect();
        assert_eq!(zones, vec![0, 0, 1]);
        assert_eq!(
            ds.events[2],
            Event {
                user: 0,
                poi: 0,
                time: 3
            }
        );
        let catalog = [VenueRecord {
            venue: "v9".into(),
            category_id: "c9".into(),
            category_name: "Gym".into(),
            lat: 45.0,
            lon: 7.0,
        }];
        let with = Dataset::with_catalog(&recs, 0, 100, 0.01, &catalog).unwrap();
        assert_eq!(with.venues, vec!["v9", "v1", "v2", "v3"]);
        assert_eq!(with.events[0].poi, 1);
        let tail = Dataset::from_records(&recs, 2, 100, 0.01).unwrap();
        assert_eq!(tail.events.len(), 2);
        assert_eq!(
            tail.events[0],
            Event {
                user: 0,
                poi: 0,
                time: 3
            }
        );
    }

    #[test]
    fn format_round_trips() {
        let text = "u1\tv1\tc1\tCoffee Shop\t40.5\t-73.25\t0\t17\n";
        let recs = parse_checkins_str(text).unwrap().records;
        assert_eq!(parse_checkins_str(&format_checkins(&recs)).unwrap().records, recs);
    }
}

//! Composite reward: distance reciprocal, category similarity and exact
//! match, each centred on a sliding-window baseline, weighted and squashed.

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};

use crate::geo::{haversine_km, PoiProfile};
use crate::numkit::sigmoid;
use crate::{Error, Result};

pub const DEFAULT_D_FLOOR_KM: f64 = 0.1;
pub const DEFAULT_BASELINE_WINDOW: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardWeights {
    pub distance: f64,
    pub category: f64,
    pub exact: f64,
}

impl RewardWeights {
    /// Weights must be nonnegative and sum to one.
    pub fn new(distance: f64, category: f64, exact: f64) -> Result<Self> {
        let all = [distance, category, exact];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!(
                "reward weights must be nonnegative, got {all:?}"
            )));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("reward weights must sum to 1, got {sum}")));
        }
        Ok(RewardWeights {
            distance,
            category,
            exact,
        })
    }
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            distance: 1.0 / 3.0,
            category: 1.0 / 3.0,
            exact: 1.0 / 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RewardParts {
    pub distance: f64,
    pub category: f64,
    pub exact: f64,
}

/// Token vectors read from `token v1 ... vn` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WordVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    source: Option<PathBuf>,
}

impl WordVectors {
    pub fn empty() -> Self {
        WordVectors::default()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut wv = Self::parse(&text)?;
        wv.source = Some(path.to_path_buf());
        Ok(wv)
    }

    /// Blank lines and `#` comments are skipped. All-zero vectors are dropped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut wv = WordVectors::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().unwrap_or_default().to_lowercase();
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("word vectors line {}: {e}", n + 1)))?;
            if values.is_empty() {
                return Err(Error::Format(format!("word vectors line {}: no values", n + 1)));
            }
            if wv.dim == 0 {
                wv.dim = values.len();
            } else if values.len() != wv.dim {
                return Err(Error::Format(format!(
                    "word vectors line {}: expected {} values, found {}",
                    n + 1,
                    wv.dim,
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("word vectors line {}: non-finite value", n + 1)));
            }
            if values.iter().all(|v| *v == 0.0) {
                continue;
            }
            wv.vectors.insert(token, values);
        }
        Ok(wv)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Mean vector of the known tokens of a category name, split on
    /// non-alphanumeric characters after lowercasing.
    pub fn category_vector(&self, name: &str) -> Option<Vec<f64>> {
        let lower = name.to_lowercase();
        let mut sum = vec![0.0; self.dim];
        let mut n = 0usize;
        for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            if let Some(v) = self.vectors.get(token) {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                n += 1;
            }
        }
        (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
    }

    /// Cosine of the two category vectors; 0 when either has no known token.
    pub fn category_similarity(&self, a: &str, b: &str) -> f64 {
        match (self.category_vector(a), self.category_vector(b)) {
            (Some(x), Some(y)) => cosine(&x, &y),
            _ => 0.0,
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub fn component_rewards(pred: &PoiProfile, real: &PoiProfile, wv: &WordVectors, d_floor: f64) -> Result<RewardParts> {
    pred.location.validate()?;
    real.location.validate()?;
    let km = haversine_km(pred.location, real.location);
    let category = if pred.category_name == real.category_name && wv.category_vector(&pred.category_name).is_some() {
        1.0
    } else {
        wv.category_similarity(&pred.category_name, &real.category_name)
    };
    Ok(RewardParts {
        distance: 1.0 / km.max(d_floor),
        category,
        exact: if pred.poi == real.poi { 1.0 } else { 0.0 },
    })
}

pub fn compute_reward(parts: &RewardParts, weights: &RewardWeights, baselines: &RewardParts) -> f64 {
    sigmoid(
        weights.distance * (parts.distance - baselines.distance)
            + weights.category * (parts.category - baselines.category)
            + weights.exact * (parts.exact - baselines.exact),
    )
}

/// Three FIFO windows of past reward parts.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineWindows {
    capacity: usize,
    distance: VecDeque<f64>,
    category: VecDeque<f64>,
    exact: VecDeque<f64>,
}

impl BaselineWindows {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "baseline window capacity must be positive");
        BaselineWindows {
            capacity,
            distance: VecDeque::with_capacity(capacity),
            category: VecDeque::with_capacity(capacity),
            exact: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.distance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distance.is_empty()
    }

    pub fn baselines(&self) -> RewardParts {
        fn mean(w: &VecDeque<f64>) -> f64 {
            if w.is_empty() {
                0.0
            } else {
                w.iter().sum::<f64>() / w.len() as f64
            }
        }
        RewardParts {
            distance: mean(&self.distance),
            category: mean(&self.category),
            exact: mean(&self.exact),
        }
    }

    pub fn update(&mut self, parts: &RewardParts) {
        for (w, v) in [
            (&mut self.distance, parts.distance),
            (&mut self.category, parts.category),
            (&mut self.exact, parts.exact),
        ] {
            if w.len() == self.capacity {
                w.pop_front();
            }
            w.push_back(v);
        }
    }

    pub fn distance_window(&self) -> impl Iterator<Item = f64> + '_ {
        self.distance.iter().copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scored {
    pub parts: RewardParts,
    pub reward: f64,
}

/// Word vectors, weights and baseline windows bundled for the training loop.
#[derive(Clone, Debug)]
pub struct RewardModel {
    pub weights: RewardWeights,
    pub d_floor: f64,
    words: WordVectors,
    windows: BaselineWindows,
}

impl RewardModel {
    pub fn new(words: WordVectors, weights: RewardWeights, window: usize, d_floor: f64) -> Self {
        RewardModel {
            weights,
            d_floor,
            words,
            windows: BaselineWindows::new(window),
        }
    }

    pub fn words(&self) -> &WordVectors {
        &self.words
    }

    pub fn windows(&self) -> &BaselineWindows {
        &self.windows
    }

    /// Empties the baseline windows.
    pub fn reset_baselines(&mut self) {
        self.windows = BaselineWindows::new(self.windows.capacity());
    }

    /// Scores against the current baselines, then appends the raw parts.
    pub fn score(&mut self, pred: &PoiProfile, real: &PoiProfile) -> Result<Scored> {
        let parts = component_rewards(pred, real, &self.words, self.d_floor)?;
        let reward = compute_reward(&parts, &self.weights, &self.windows.baselines());
        self.windows.update(&parts);
        Ok(Scored { parts, reward })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use proptest::prelude::*;

    fn words() -> WordVectors {
        WordVectors::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/wordvecs.txt")).unwrap()
    }

    fn poi(id: usize, name: &str, lat: f64, lon: f64) -> PoiProfile {
        PoiProfile {
            poi: id,
            category: 0,
            category_name: name.into(),
            location: GeoPoint { lat, lon },
        }
    }

    #[test]
    fn fixture_vocabulary_has_twelve_tokens() {
        let wv = words();
        assert_eq!(wv.len(), 12);
        assert_eq!(wv.dim(), 4);
    }

    #[test]
    fn identical_poi_maxes_every_part() {
        let p = poi(3, "Coffee Shop", 40.7, -74.0);
        let parts = component_rewards(&p, &p, &words(), 0.1).unwrap();
        assert_eq!(parts.exact, 1.0);
        assert_eq!(parts.distance, 10.0);
        assert!((parts.category - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_category_different_poi() {
        let a = poi(1, "Bar", 40.7, -74.0);
        let b = poi(2, "Bar", 40.8, -74.1);
        let parts = component_rewards(&a, &b, &words(), 0.1).unwrap();
        assert!((parts.category - 1.0).abs() < 1e-12);
        assert_eq!(parts.exact, 0.0);
    }

    #[test]
    fn two_kilometres_gives_one_half() {
        // Along a meridian, 2 km is 2 / 6371 radians of latitude.
        let dlat = (2.0f64 / 6371.0).to_degrees();
        let a = poi(1, "Park", 10.0, 20.0);
        let b = poi(2, "Park", 10.0 + dlat, 20.0);
        let oracle = 6371.0 * (b.location.lat - a.location.lat).to_radians();
        assert!((oracle - 2.0).abs() < 1e-12);
        let parts = component_rewards(&a, &b, &words(), 0.1).unwrap();
        assert!((parts.distance - 0.5).abs() < 1e-9, "{}", parts.distance);
    }

    #[test]
    fn unknown_tokens_give_zero_similarity() {
        let wv = words();
        assert_eq!(wv.category_similarity("Zzz Yyy", "Coffee Shop"), 0.0);
        assert!(wv.category_vector("High-Street COFFEE").is_some());
    }

    #[test]
    fn category_vector_is_token_mean() {
        let wv = words();
        let v = wv.category_vector("Coffee/Shop").unwrap();
        let want = [0.75, 0.15, 0.05, 0.15];
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_coordinates_are_data_errors() {
        let a = poi(1, "Bar", f64::NAN, 0.0);
        let b = poi(2, "Bar", 0.0, 0.0);
        assert!(matches!(component_rewards(&a, &b, &words(), 0.1), Err(Error::Data(_))));
    }

    #[test]
    fn reward_at_baseline_is_one_half() {
        let p = RewardParts {
            distance: 0.4,
            category: 0.2,
            exact: 1.0,
        };
        assert_eq!(compute_reward(&p, &RewardWeights::default(), &p), 0.5);
    }

    #[test]
    fn exact_match_only() {
        let w = RewardWeights::new(0.0, 0.0, 1.0).unwrap();
        let p = RewardParts {
            exact: 1.0,
            ..Default::default()
        };
        let r = compute_reward(&p, &w, &RewardParts::default());
        assert!((r - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        assert!((r - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn distance_only_log_three() {
        let w = RewardWeights::new(1.0, 0.0, 0.0).unwrap();
        let p = RewardParts {
            distance: 1.0 - 3f64.ln(),
            ..Default::default()
        };
        let b = RewardParts {
            distance: 1.0,
            ..Default::default()
        };
        assert!((compute_reward(&p, &w, &b) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(RewardWeights::new(0.5, 0.5, 0.5).is_err());
        assert!(RewardWeights::new(-0.5, 1.0, 0.5).is_err());
    }

    #[test]
    fn baseline_windows() {
        let mut w = BaselineWindows::new(2);
        assert_eq!(w.baselines(), RewardParts::default());
        for d in [0.2, 0.4] {
            w.update(&RewardParts {
                distance: d,
                ..Default::default()
            });
        }
        assert!((w.baselines().distance - 0.3).abs() < 1e-15);
        let mut w = BaselineWindows::new(2);
        for d in [0.1, 0.3, 0.5] {
            w.update(&RewardParts {
                distance: d,
                ..Default::default()
            });
        }
        assert_eq!(w.distance_window().collect::<Vec<_>>(), vec![0.3, 0.5]);
        assert!((w.baselines().distance - 0.4).abs() < 1e-15);
    }

    #[test]
    fn model_reads_baselines_before_updating() {
        let mut m = RewardModel::new(words(), RewardWeights::new(0.0, 0.0, 1.0).unwrap(), 10, 0.1);
        let p = poi(1, "Gym", 1.0, 1.0);
        let first = m.score(&p, &p).unwrap();
        assert!((first.reward - sigmoid(1.0)).abs() < 1e-15);
        let second = m.score(&p, &p).unwrap();
        assert_eq!(second.reward, 0.5);
    }

    fn parts() -> impl Strategy<Value = RewardParts> {
        (0.0f64..10.0, -1.0f64..1.0, prop_oneof![Just(0.0), Just(1.0)]).prop_map(|(d, c, p)| RewardParts {
            distance: d,
            category: c,
            exact: p,
        })
    }

    fn weights() -> impl Strategy<Value = RewardWeights> {
        (0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b)| {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            RewardWeights {
                distance: lo,
                category: hi - lo,
                exact: 1.0 - hi,
            }
        })
    }

    proptest! {
        #[test]
        fn reward_stays_in_open_unit_interval(p in parts(), b in parts(), w in weights()) {
            let r = compute_reward(&p, &w, &b);
            prop_assert!(r > 0.0 && r < 1.0);
        }

        #[test]
        fn reward_is_monotone_in_each_part(p in parts(), b in parts(), w in weights(), bump in 0.0f64..2.0) {
            let r = compute_reward(&p, &w, &b);
            for i in 0..3 {
                let mut q = p;
                match i {
                    0 => q.distance += bump,
                    1 => q.category += bump,
                    _ => q.exact += bump,
                }
                prop_assert!(compute_reward(&q, &w, &b) >= r);
            }
        }

        #[test]
        fn parts_stay_in_range(
            a in (-80.0f64..80.0, -170.0f64..170.0, 0usize..12),
            b in (-80.0f64..80.0, -170.0f64..170.0, 0usize..12),
            floor in 0.01f64..5.0,
        ) {
            let names = ["coffee", "shop", "cafe", "bar", "pub", "restaurant", "italian", "park", "museum", "gym", "station", "office"];
            let pa = poi(a.2, names[a.2], a.0, a.1);
            let pb = poi(b.2, names[b.2], b.0, b.1);
            let parts = component_rewards(&pa, &pb, &words(), floor).unwrap();
            prop_assert!(parts.distance > 0.0 && parts.distance <= 1.0 / floor);
            prop_assert!((-1.0..=1.0).contains(&parts.category));
            prop_assert!(parts.exact == 0.0 || parts.exact == 1.0);
        }

        #[test]
        fn baselines_match_recomputation(cap in 1usize..6, values in proptest::collection::vec(-3.0f64..3.0, 0..30)) {
            let mut w = BaselineWindows::new(cap);
            for (i, v) in values.iter().enumerate() {
                w.update(&RewardParts { distance: *v, category: -v, exact: 2.0 * v });
                let start = (i + 1).saturating_sub(cap);
                let tail = &values[start..=i];
                let mean = tail.iter().sum::<f64>() / tail.len() as f64;
                let b = w.baselines();
                prop_assert!((b.distance - mean).abs() < 1e-12);
                prop_assert!((b.category + mean).abs() < 1e-12);
                prop_assert!((b.exact - 2.0 * mean).abs() < 1e-12);
                prop_assert!(w.len() <= cap);
            }
        }
    }
}

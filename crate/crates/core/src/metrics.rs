//! Category precision/recall, category similarity and distance over a log of
//! (predicted, real) POI pairs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geo::{haversine_km, PoiProfile};
use crate::reward::WordVectors;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub predicted: PoiProfile,
    pub real: PoiProfile,
}

#[derive(Default)]
struct ClassCounts {
    support: usize,
    tp: usize,
    fp: usize,
    fn_: usize,
}

fn confusion(log: &[EvalRecord]) -> BTreeMap<usize, ClassCounts> {
    let mut by_class: BTreeMap<usize, ClassCounts> = BTreeMap::new();
    for r in log {
        let (p, t) = (r.predicted.category, r.real.category);
        by_class.entry(t).or_default().support += 1;
        if p == t {
            by_class.entry(t).or_default().tp += 1;
        } else {
            by_class.entry(p).or_default().fp += 1;
            by_class.entry(t).or_default().fn_ += 1;
        }
    }
    by_class
}

/// Per-class ratios averaged with weights `|c_k| / n`, where `|c_k|` counts
/// real occurrences; classes with a zero denominator contribute zero.
fn weighted(log: &[EvalRecord], denom: impl Fn(&ClassCounts) -> usize) -> f64 {
    if log.is_empty() {
        return 0.0;
    }
    let n = log.len() as f64;
    confusion(log)
        .values()
        .filter(|c| c.support > 0 && denom(c) > 0)
        .map(|c| c.support as f64 / n * c.tp as f64 / denom(c) as f64)
        .sum()
}

/// Support-weighted category precision. Zero for an empty log.
pub fn prec_cat(log: &[EvalRecord]) -> f64 {
    weighted(log, |c| c.tp + c.fp)
}

/// Support-weighted category recall. Zero for an empty log.
pub fn rec_cat(log: &[EvalRecord]) -> f64 {
    weighted(log, |c| c.tp + c.fn_)
}

/// Mean cosine between real and predicted category vectors.
pub fn avg_sim(log: &[EvalRecord], wv: &WordVectors) -> f64 {
    if log.is_empty() {
        return 0.0;
    }
    log.iter()
        .map(|r| wv.category_similarity(&r.real.category_name, &r.predicted.category_name))
        .sum::<f64>()
        / log.len() as f64
}

/// Mean great-circle distance in kilometres.
pub fn avg_dist(log: &[EvalRecord]) -> Result<f64> {
    if log.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for r in log {
        r.predicted.location.validate()?;
        r.real.location.validate()?;
        total += haversine_km(r.predicted.location, r.real.location);
    }
    Ok(total / log.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub prec_cat: f64,
    pub rec_cat: f64,
    pub avg_sim: f64,
    pub avg_dist_km: f64,
    pub wall_s: f64,
}

pub fn evaluate(log: &[EvalRecord], wv: &WordVectors, wall_s: f64) -> Result<MetricReport> {
    if log.is_empty() {
        return Err(Error::Data("cannot score an empty evaluation log".into()));
    }
    Ok(MetricReport {
        prec_cat: prec_cat(log),
        rec_cat: rec_cat(log),
        avg_sim: avg_sim(log, wv),
        avg_dist_km: avg_dist(log)?,
        wall_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use proptest::prelude::*;
    use std::path::Path;

    const NAMES: [&str; 4] = ["Coffee", "Bar", "Park", "Gym"];

    fn profile(poi: usize, category: usize, lat: f64, lon: f64) -> PoiProfile {
        PoiProfile {
            poi,
            category,
            category_name: NAMES[category % 4].into(),
            location: GeoPoint { lat, lon },
        }
    }

    fn rec(pred_cat: usize, real_cat: usize) -> EvalRecord {
        EvalRecord {
            predicted: profile(pred_cat, pred_cat, 0.0, 0.0),
            real: profile(real_cat, real_cat, 0.0, 0.0),
        }
    }

    fn words() -> WordVectors {
        WordVectors::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/wordvecs.txt")).unwrap()
    }

    /// Brute force from an explicit confusion matrix, unweighted per class.
    fn oracle(log: &[(usize, usize)], classes: usize) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
        let mut m = vec![vec![0usize; classes]; classes];
        for &(p, t) in log {
            m[t][p] += 1;
        }
        let mut precision = vec![0.0; classes];
        let mut recall = vec![0.0; classes];
        let mut support = vec![0; classes];
        for k in 0..classes {
            let predicted: usize = (0..classes).map(|t| m[t][k]).sum();
            let real: usize = m[k].iter().sum();
            support[k] = real;
            if predicted > 0 {
                precision[k] = m[k][k] as f64 / predicted as f64;
            }
            if real > 0 {
                recall[k] = m[k][k] as f64 / real as f64;
            }
        }
        (precision, recall, support)
    }

    #[test]
    fn perfect_log() {
        let log = vec![rec(0, 0), rec(1, 1), rec(2, 2)];
        assert_eq!(prec_cat(&log), 1.0);
        assert_eq!(rec_cat(&log), 1.0);
        assert_eq!(rec_cat(&log[..1]), 1.0);
    }

    #[test]
    fn all_wrong() {
        let log = vec![rec(1, 0), rec(0, 1), rec(0, 2)];
        assert_eq!(prec_cat(&log), 0.0);
        assert_eq!(rec_cat(&log), 0.0);
    }

    #[test]
    fn four_event_hand_case() {
        // reals A A B B, predictions A B B B
        let pairs = [(0, 0), (1, 0), (1, 1), (1, 1)];
        let log: Vec<_> = pairs.iter().map(|&(p, t)| rec(p, t)).collect();
        let (precision, _, support) = oracle(&pairs, 2);
        let n = pairs.len() as f64;
        let want: f64 = (0..2).map(|k| support[k] as f64 / n * precision[k]).sum();
        // A: 1/1, B: 2/3, equal support -> (1 + 2/3) / 2
        assert!((want - 5.0 / 6.0).abs() < 1e-12);
        assert!((prec_cat(&log) - want).abs() < 1e-12);
    }

    #[test]
    fn constant_predictor_recall() {
        // always A; reals half A, half B
        let pairs = [(0, 0), (0, 1), (0, 0), (0, 1)];
        let log: Vec<_> = pairs.iter().map(|&(p, t)| rec(p, t)).collect();
        let (_, recall, support) = oracle(&pairs, 2);
        let want: f64 = (0..2).map(|k| support[k] as f64 / 4.0 * recall[k]).sum();
        assert!((want - 0.5).abs() < 1e-12);
        assert!((rec_cat(&log) - want).abs() < 1e-12);
        assert!((prec_cat(&log) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn similarity_examples() {
        let wv = words();
        let same = vec![rec(0, 0), rec(2, 2)];
        assert!((avg_sim(&same, &wv) - 1.0).abs() < 1e-12);

        let ortho = WordVectors::parse("x 1 0\ny 0 1\n").unwrap();
        let mk = |a: &str, b: &str| EvalRecord {
            predicted: PoiProfile {
                category_name: a.into(),
                ..profile(0, 0, 0.0, 0.0)
            },
            real: PoiProfile {
                category_name: b.into(),
                ..profile(1, 1, 0.0, 0.0)
            },
        };
        assert_eq!(avg_sim(&[mk("x", "y")], &ortho), 0.0);

        let log = vec![mk("x", "x"), mk("x", "y"), mk("x y", "y")];
        let want = (1.0 + 0.0 + 0.5f64.sqrt()) / 3.0;
        assert!((avg_sim(&log, &ortho) - want).abs() < 1e-12);
    }

    #[test]
    fn distance_examples() {
        let at = |lat, lon| profile(0, 0, lat, lon);
        let zero = vec![EvalRecord {
            predicted: at(10.0, 10.0),
            real: at(10.0, 10.0),
        }];
        assert_eq!(avg_dist(&zero).unwrap(), 0.0);
        let degree = vec![EvalRecord {
            predicted: at(0.0, 0.0),
            real: at(0.0, 1.0),
        }];
        let want = 6371.0 * 1f64.to_radians();
        assert!((avg_dist(&degree).unwrap() - want).abs() < 1e-9);
        assert!((avg_dist(&degree).unwrap() - 111.19).abs() < 0.01);
        let antipodal = vec![EvalRecord {
            predicted: at(0.0, 0.0),
            real: at(0.0, 180.0),
        }];
        assert!((avg_dist(&antipodal).unwrap() - std::f64::consts::PI * 6371.0).abs() < 1e-6);
        let bad = vec![EvalRecord {
            predicted: at(95.0, 0.0),
            real: at(0.0, 0.0),
        }];
        assert!(matches!(avg_dist(&bad), Err(Error::Data(_))));
    }

    #[test]
    fn report_keys() {
        let wv = words();
        let report = evaluate(&[rec(0, 0)], &wv, 1.5).unwrap();
        let v = serde_json::to_value(&report).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        let mut want = vec!["avg_dist_km", "avg_sim", "prec_cat", "rec_cat", "wall_s"];
        want.sort();
        let mut got: Vec<&str> = keys.iter().map(|k| k.as_str()).collect();
        got.sort();
        assert_eq!(got, want);
        assert!(evaluate(&[], &wv, 0.0).is_err());
    }

    fn log_strategy() -> impl Strategy<Value = Vec<(usize, usize, f64, f64)>> {
        proptest::collection::vec((0usize..4, 0usize..4, -60.0f64..60.0, -120.0f64..120.0), 1..40)
    }

    fn build(raw: &[(usize, usize, f64, f64)]) -> Vec<EvalRecord> {
        raw.iter()
            .map(|&(p, t, lat, lon)| EvalRecord {
                predicted: profile(p, p, lat, lon),
                real: profile(t, t, lat * 0.5, lon * 0.5),
            })
            .collect()
    }

    proptest! {
        #[test]
        fn metrics_stay_in_range_and_ignore_order(raw in log_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let wv = words();
            let log = build(&raw);
            let p = prec_cat(&log);
            let r = rec_cat(&log);
            let s = avg_sim(&log, &wv);
            let d = avg_dist(&log).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&r));
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
            prop_assert!(d >= 0.0);
            let mut shuffled = log.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert!((prec_cat(&shuffled) - p).abs() < 1e-12);
            prop_assert!((rec_cat(&shuffled) - r).abs() < 1e-12);
            prop_assert!((avg_sim(&shuffled, &wv) - s).abs() < 1e-12);
            prop_assert!((avg_dist(&shuffled).unwrap() - d).abs() < 1e-9);
        }

        #[test]
        fn balanced_logs_give_macro_precision(preds in proptest::collection::vec(0usize..3, 6)) {
            // reals: each of three categories exactly twice
            let reals = [0, 1, 2, 0, 1, 2];
            let pairs: Vec<(usize, usize)> = preds.iter().copied().zip(reals).collect();
            let log: Vec<_> = pairs.iter().map(|&(p, t)| rec(p, t)).collect();
            let (precision, _, _) = oracle(&pairs, 3);
            let macro_p = precision.iter().sum::<f64>() / 3.0;
            prop_assert!((prec_cat(&log) - macro_p).abs() < 1e-12);
        }
    }
}

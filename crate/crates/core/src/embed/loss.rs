use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::kgstore::{DynamicKg, EntityId, EntityKind, RelTag, Triple};

/// Paired positive and negative triples with the hinge margin.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainBatch {
    pub positives: Vec<Triple>,
    pub negatives: Vec<Triple>,
    pub margin: f64,
}

impl TrainBatch {
    pub fn new(positives: Vec<Triple>, negatives: Vec<Triple>, margin: f64) -> Self {
        assert_eq!(positives.len(), negatives.len(), "positives and negatives must pair up");
        TrainBatch {
            positives,
            negatives,
            margin,
        }
    }

    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Triple, &Triple)> {
        self.positives.iter().zip(&self.negatives)
    }
}

/// Identifies one joint embedding: an entity, or a relation type seen
/// between a particular pair of endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum JointKey {
    Entity(EntityId),
    Relation {
        head: EntityId,
        tag: RelTag,
        tail: EntityId,
    },
}

impl JointKey {
    pub fn parts(t: &Triple) -> [JointKey; 3] {
        [
            JointKey::Entity(t.head),
            JointKey::Relation {
                head: t.head,
                tag: t.rel.tag(),
                tail: t.tail,
            },
            JointKey::Entity(t.tail),
        ]
    }
}

/// Entity pools per kind, used to draw corruptions.
pub(crate) struct KindPools {
    pools: BTreeMap<EntityKind, Vec<EntityId>>,
}

impl KindPools {
    pub(crate) fn new(kg: &DynamicKg) -> Self {
        let pools = EntityKind::ALL.iter().map(|&k| (k, kg.entities_of_kind(k))).collect();
        KindPools { pools }
    }

    fn len(&self, kind: EntityKind) -> usize {
        self.pools.get(&kind).map_or(0, Vec::len)
    }

    fn draw_other<R: Rng + ?Sized>(&self, e: EntityId, rng: &mut R) -> EntityId {
        let pool = &self.pools[&e.kind];
        loop {
            let c = *pool.choose(rng).expect("pool has at least two members");
            if c != e {
                return c;
            }
        }
    }
}

/// Replaces the head or the tail with another entity of the same kind.
/// Returns `None` when neither endpoint has an alternative.
pub(crate) fn corrupt<R: Rng + ?Sized>(t: &Triple, pools: &KindPools, rng: &mut R) -> Option<Triple> {
    let head_ok = pools.len(t.head.kind) > 1;
    let tail_ok = pools.len(t.tail.kind) > 1;
    let corrupt_head = match (head_ok, tail_ok) {
        (false, false) => return None,
        (true, false) => true,
        (false, true) => false,
        (true, true) => rng.gen_bool(0.5),
    };
    let mut neg = *t;
    if corrupt_head {
        neg.head = pools.draw_other(t.head, rng);
    } else {
        neg.tail = pools.draw_other(t.tail, rng);
    }
    Some(neg)
}

pub(crate) fn build_batch<R: Rng + ?Sized>(
    positives: &[Triple],
    neg_per_pos: usize,
    margin: f64,
    pools: &KindPools,
    rng: &mut R,
) -> TrainBatch {
    let mut pos = Vec::with_capacity(positives.len() * neg_per_pos);
    let mut neg = Vec::with_capacity(positives.len() * neg_per_pos);
    for t in positives {
        for _ in 0..neg_per_pos {
            if let Some(n) = corrupt(t, pools, rng) {
                pos.push(*t);
                neg.push(n);
            }
        }
    }
    TrainBatch::new(pos, neg, margin)
}

/// `max(0, pos + margin - neg)`.
pub fn hinge(pos: f64, neg: f64, margin: f64) -> f64 {
    (pos + margin - neg).max(0.0)
}

/// `||h + r - t||_1`.
pub fn l1_residual(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    h.iter().zip(r).zip(t).map(|((h, r), t)| (h + r - t).abs()).sum()
}

/// Subgradient of the L1 residual with respect to `h + r - t`.
pub(crate) fn residual_sign(h: &[f64], r: &[f64], t: &[f64]) -> Vec<f64> {
    h.iter()
        .zip(r)
        .zip(t)
        .map(|((h, r), t)| {
            let v = h + r - t;
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgstore::{Relation, StaticPoi};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inactive_hinge_contributes_nothing() {
        assert_eq!(hinge(0.2, 1.5, 1.0), 0.0);
    }

    #[test]
    fn equal_scores_contribute_the_margin() {
        assert_eq!(hinge(0.7, 0.7, 1.0), 1.0);
    }

    #[test]
    fn residual_is_l1() {
        assert_eq!(l1_residual(&[1.0, 0.0], &[0.5, -1.0], &[0.0, 0.0]), 2.5);
    }

    #[test]
    fn corruption_changes_one_endpoint_within_kind() {
        let pois: Vec<_> = (0..6)
            .map(|p| StaticPoi {
                poi: p,
                category: p % 3,
                zone: p % 2,
            })
            .collect();
        let mut kg = DynamicKg::build_static(&pois, 10).unwrap();
        kg.apply_visit(0, 1, 1).unwrap();
        kg.apply_visit(1, 2, 2).unwrap();
        let pools = KindPools::new(&kg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for t in kg.triples() {
            for _ in 0..20 {
                let n = corrupt(&t, &pools, &mut rng).unwrap();
                assert_eq!(n.rel, t.rel);
                let head_changed = n.head != t.head;
                let tail_changed = n.tail != t.tail;
                assert!(head_changed ^ tail_changed);
                assert_eq!(n.head.kind, t.head.kind);
                assert_eq!(n.tail.kind, t.tail.kind);
            }
        }
        let t = Triple::new(EntityId::user(0), Relation::Visit { time: 1 }, EntityId::poi(1));
        let batch = build_batch(&[t], 3, 1.0, &pools, &mut rng);
        assert_eq!(batch.len(), 3);
    }
}

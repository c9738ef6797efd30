//! Context-aware translational embeddings over the dynamic KG.
//!
//! Every entity and each of the four relation types owns a raw vector in an
//! [`EmbeddingTable`]. A [`ContextEncoder`] turns the context subgraph of an
//! object into `cx(o)` and gates it with the raw vector into the joint
//! embedding used by the margin loss and by state pooling.

mod encoder;
mod loss;
mod table;

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kgstore::{ContextSubgraph, DeltaReport, DynamicKg, EntityId, ObjectId, RelTag, Triple};
use crate::numkit::{axpy, GradCheck, GradCheckReport, Mat};
use crate::{Error, Result};

pub use encoder::{
    encode_context, joint_embed, joint_forward, normalized_adjacency, ContextEncoder, ContextForward, JointForward,
};
pub use loss::{hinge, l1_residual, JointKey, TrainBatch};
pub use table::{EmbeddingTable, TABLE_MAGIC};

pub(crate) use encoder::GradSink;
use loss::{build_batch, residual_sign, KindPools};

#[derive(Clone, Debug, PartialEq)]
pub struct EmbedConfig {
    pub dim: usize,
    pub gcn_layers: usize,
    pub margin: f64,
    pub lr: f64,
    pub epochs: usize,
    pub neg_per_pos: usize,
    pub batch_size: usize,
    pub incr_steps: usize,
    /// Cap on the positives used by one incremental update.
    pub max_incr_triples: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dim: 200,
            gcn_layers: 2,
            margin: 1.0,
            lr: 1e-5,
            epochs: 10,
            neg_per_pos: 1,
            batch_size: 64,
            incr_steps: 1,
            max_incr_triples: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Summed hinge loss over each epoch, measured before each step.
    pub epoch_losses: Vec<f64>,
    pub state: Vec<f64>,
}

/// Singleton context of a bare relation type.
fn relation_alone(tag: RelTag) -> ContextSubgraph {
    ContextSubgraph {
        nodes: vec![ObjectId::Relation(tag)],
        adjacency: Mat::zeros(1, 1),
    }
}

fn context_for(kg: &DynamicKg, key: JointKey) -> ContextSubgraph {
    match key {
        JointKey::Entity(e) => kg.entity_context(e),
        JointKey::Relation { head, tag, tail } => kg.relation_context(head, tag, tail),
    }
}

/// Mean of entity joints concatenated with the mean of relation joints.
pub fn pool_vectors<'a, E, R>(entities: E, relations: R, dim: usize) -> Vec<f64>
where
    E: IntoIterator<Item = &'a [f64]>,
    R: IntoIterator<Item = &'a [f64]>,
{
    let mut s = vec![0.0; 2 * dim];
    let mean_into = |vs: &mut dyn Iterator<Item = &'a [f64]>, out: &mut [f64]| {
        let mut n = 0usize;
        for v in vs {
            axpy(1.0, v, out);
            n += 1;
        }
        if n > 0 {
            out.iter_mut().for_each(|x| *x /= n as f64);
        }
    };
    let (left, right) = s.split_at_mut(dim);
    mean_into(&mut entities.into_iter(), left);
    mean_into(&mut relations.into_iter(), right);
    s
}

/// Embedding table, encoder and the cache of joint embeddings behind the
/// pooled state.
#[derive(Clone, Debug)]
pub struct Embedder {
    config: EmbedConfig,
    table: EmbeddingTable,
    encoder: ContextEncoder,
    entity_cache: BTreeMap<EntityId, Vec<f64>>,
    relation_cache: BTreeMap<RelTag, Vec<f64>>,
    last_trainable: BTreeSet<ObjectId>,
    rng: ChaCha8Rng,
}

impl Embedder {
    /// Fresh table for every entity of `kg` plus the four relation types.
    pub fn new(kg: &DynamicKg, config: EmbedConfig, seed: u64) -> Result<Self> {
        if config.dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = ContextEncoder::new(config.dim, config.gcn_layers, &mut rng)?;
        let mut table = EmbeddingTable::new(config.dim);
        for tag in RelTag::ALL {
            table.insert_uniform(ObjectId::Relation(tag), &mut rng)?;
        }
        for e in kg.entities() {
            table.insert_uniform(ObjectId::Entity(e), &mut rng)?;
        }
        Self::from_parts(kg, config, table, encoder, rng.next_u64())
    }

    /// Assembles an embedder from trained parts, e.g. loaded checkpoints.
    pub fn from_parts(
        kg: &DynamicKg,
        config: EmbedConfig,
        table: EmbeddingTable,
        encoder: ContextEncoder,
        seed: u64,
    ) -> Result<Self> {
        if table.dim() != encoder.dim() || table.dim() != config.dim {
            return Err(Error::Compatibility(format!(
                "table dimension {}, encoder dimension {}, configured dimension {}",
                table.dim(),
                encoder.dim(),
                config.dim
            )));
        }
        let mut emb = Embedder {
            config,
            table,
            encoder,
            entity_cache: BTreeMap::new(),
            relation_cache: BTreeMap::new(),
            last_trainable: BTreeSet::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        for tag in RelTag::ALL {
            if !emb.table.contains(ObjectId::Relation(tag)) {
                return Err(Error::Compatibility(format!("table lacks relation {}", tag.as_str())));
            }
        }
        emb.ensure_entities(kg)?;
        emb.rebuild_cache(kg)?;
        Ok(emb)
    }

    pub fn config(&self) -> &EmbedConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn state_dim(&self) -> usize {
        2 * self.config.dim
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn encoder(&self) -> &ContextEncoder {
        &self.encoder
    }

    pub fn encoder_mut(&mut self) -> &mut ContextEncoder {
        &mut self.encoder
    }

    /// Objects the last incremental update was allowed to touch.
    pub fn last_trainable(&self) -> &BTreeSet<ObjectId> {
        &self.last_trainable
    }

    /// Inserts uniformly initialised vectors for entities the table lacks.
    pub fn ensure_entities(&mut self, kg: &DynamicKg) -> Result<Vec<EntityId>> {
        let mut added = Vec::new();
        for e in kg.entities() {
            if !self.table.contains(ObjectId::Entity(e)) {
                self.table.insert_uniform(ObjectId::Entity(e), &mut self.rng)?;
                added.push(e);
            }
        }
        Ok(added)
    }

    pub fn joint_forward(&self, kg: &DynamicKg, key: JointKey) -> Result<JointForward> {
        joint_forward(&context_for(kg, key), &self.encoder, &self.table)
    }

    pub fn joint(&self, kg: &DynamicKg, key: JointKey) -> Result<Vec<f64>> {
        Ok(self.joint_forward(kg, key)?.into_output())
    }

    /// Cached joint embedding of an entity as of the last refresh.
    pub fn cached_joint(&self, e: EntityId) -> Option<&[f64]> {
        self.entity_cache.get(&e).map(Vec::as_slice)
    }

    /// Joint embedding of a POI entity, used as an action vector.
    pub fn poi_vector(&self, poi: usize) -> Option<&[f64]> {
        self.cached_joint(EntityId::poi(poi))
    }

    /// `||h* + r* - t*||_1`.
    pub fn triple_score(&self, kg: &DynamicKg, t: &Triple) -> Result<f64> {
        let [h, r, tl] = JointKey::parts(t).map(|k| self.joint(kg, k));
        Ok(l1_residual(&h?, &r?, &tl?))
    }

    pub fn margin_loss(&self, kg: &DynamicKg, batch: &TrainBatch) -> Result<f64> {
        let mut joints: BTreeMap<JointKey, Vec<f64>> = BTreeMap::new();
        let mut total = 0.0;
        for (p, n) in batch.pairs() {
            let mut score = |t: &Triple| -> Result<f64> {
                let mut parts = Vec::with_capacity(3);
                for key in JointKey::parts(t) {
                    if let Entry::Vacant(e) = joints.entry(key) {
                        e.insert(self.joint(kg, key)?);
                    }
                    parts.push(key);
                }
                Ok(l1_residual(&joints[&parts[0]], &joints[&parts[1]], &joints[&parts[2]]))
            };
            let fp = score(p)?;
            let fneg = score(n)?;
            total += hinge(fp, fneg, batch.margin);
        }
        Ok(total)
    }

    /// Adds `dL/dparam` of the margin loss to the gradient slots and returns
    /// the loss. Table gradients are limited to `trainable` when given.
    pub(crate) fn accumulate_margin_grads(
        &mut self,
        kg: &DynamicKg,
        batch: &TrainBatch,
        train_encoder: bool,
        trainable: Option<&BTreeSet<ObjectId>>,
    ) -> Result<f64> {
        let mut forwards: BTreeMap<JointKey, JointForward> = BTreeMap::new();
        for t in batch.positives.iter().chain(&batch.negatives) {
            for key in JointKey::parts(t) {
                if let Entry::Vacant(e) = forwards.entry(key) {
                    e.insert(self.joint_forward(kg, key)?);
                }
            }
        }
        let d = self.config.dim;
        let mut deltas: BTreeMap<JointKey, Vec<f64>> = BTreeMap::new();
        let mut total = 0.0;
        for (p, n) in batch.pairs() {
            let pk = JointKey::parts(p);
            let nk = JointKey::parts(n);
            let out = |k: &JointKey| forwards[k].output();
            let fp = l1_residual(out(&pk[0]), out(&pk[1]), out(&pk[2]));
            let fneg = l1_residual(out(&nk[0]), out(&nk[1]), out(&nk[2]));
            let h = hinge(fp, fneg, batch.margin);
            total += h;
            if h <= 0.0 {
                continue;
            }
            for (keys, sign) in [(pk, 1.0), (nk, -1.0)] {
                let s = residual_sign(out(&keys[0]), out(&keys[1]), out(&keys[2]));
                for (slot, coef) in [(0, sign), (1, sign), (2, -sign)] {
                    let acc = deltas.entry(keys[slot]).or_insert_with(|| vec![0.0; d]);
                    axpy(coef, &s, acc);
                }
            }
        }
        let mut sink = GradSink {
            encoder: &mut self.encoder,
            train_encoder,
            table: &mut self.table,
            trainable,
        };
        for (key, delta) in &deltas {
            forwards[key].backward(delta, &mut sink)?;
        }
        Ok(total)
    }

    /// Compares the margin-loss gradient on `batch` with central differences,
    /// returning the encoder report and the raw-embedding report.
    pub fn check_margin_gradients(
        &self,
        kg: &DynamicKg,
        batch: &TrainBatch,
        check: &GradCheck,
    ) -> Result<(GradCheckReport, GradCheckReport)> {
        let mut e = self.clone();
        e.table.zero_grads();
        e.encoder.store_mut().zero_grads();
        e.accumulate_margin_grads(kg, batch, true, None)?;
        let mut store = e.encoder.store().clone();
        let encoder = check.run(&mut store, |s| {
            let mut p = self.clone();
            p.encoder.replace_store(s.clone());
            p.margin_loss(kg, batch).unwrap_or(f64::NAN)
        });
        let mut store = e.table.store().clone();
        let table = check.run(&mut store, |s| {
            let mut p = self.clone();
            p.table.replace_store(s.clone());
            p.margin_loss(kg, batch).unwrap_or(f64::NAN)
        });
        Ok((encoder, table))
    }

    /// Minimises the margin loss over every triple of `kg` for the configured
    /// number of epochs and returns the per-epoch losses with the pooled
    /// state.
    pub fn train_init(&mut self, kg: &DynamicKg) -> Result<TrainReport> {
        self.ensure_entities(kg)?;
        let pools = KindPools::new(kg);
        let mut triples = kg.triples();
        let mut epoch_losses = Vec::with_capacity(self.config.epochs);
        for epoch in 0..self.config.epochs {
            triples.shuffle(&mut self.rng);
            let mut epoch_loss = 0.0;
            for chunk in triples.chunks(self.config.batch_size.max(1)) {
                let batch = build_batch(
                    chunk,
                    self.config.neg_per_pos,
                    self.config.margin,
                    &pools,
                    &mut self.rng,
                );
                self.table.zero_grads();
                self.encoder.store_mut().zero_grads();
                let loss = self.accumulate_margin_grads(kg, &batch, true, None)?;
                if !loss.is_finite() {
                    return Err(Error::training(
                        format!("epoch {epoch}"),
                        format!("non-finite margin loss {loss}"),
                    ));
                }
                epoch_loss += loss;
                self.encoder
                    .store_mut()
                    .sgd_step(self.config.lr)
                    .map_err(|e| Error::training(format!("epoch {epoch}"), e.to_string()))?;
                self.table
                    .apply_sgd(self.config.lr, None)
                    .map_err(|e| Error::training(format!("epoch {epoch}"), e.to_string()))?;
            }
            epoch_losses.push(epoch_loss);
        }
        self.rebuild_cache(kg)?;
        Ok(TrainReport {
            epoch_losses,
            state: self.pool_state(),
        })
    }

    /// Retrains only the objects touched by `delta` plus newly seen
    /// entities, with the encoder frozen. Returns the objects whose vectors
    /// changed.
    pub fn incremental_update(&mut self, kg: &DynamicKg, delta: &DeltaReport) -> Result<Vec<ObjectId>> {
        if delta.version != kg.version() {
            return Err(Error::Consistency(format!(
                "delta for version {} applied to graph version {}",
                delta.version,
                kg.version()
            )));
        }
        let new = self.ensure_entities(kg)?;
        let mut trainable: BTreeSet<ObjectId> = delta.affected.clone();
        trainable.extend(new.iter().map(|&e| ObjectId::Entity(e)));
        let mut topo: BTreeSet<EntityId> = delta.affected_entities().collect();
        topo.extend(new.iter().copied());
        if trainable.is_empty() {
            self.last_trainable.clear();
            return Ok(Vec::new());
        }
        let positives = self.incremental_positives(kg, delta, &topo);
        let pools = KindPools::new(kg);
        let mut changed = BTreeSet::new();
        for _ in 0..self.config.incr_steps {
            if positives.is_empty() {
                break;
            }
            let batch = build_batch(
                &positives,
                self.config.neg_per_pos,
                self.config.margin,
                &pools,
                &mut self.rng,
            );
            self.table.zero_grads();
            let loss = self.accumulate_margin_grads(kg, &batch, false, Some(&trainable))?;
            if !loss.is_finite() {
                return Err(Error::training(
                    format!("incremental update at version {}", delta.version),
                    format!("non-finite margin loss {loss}"),
                ));
            }
            self.encoder.store_mut().zero_grads();
            changed.extend(self.table.apply_sgd(self.config.lr, Some(&trainable))?);
        }
        let moved: BTreeSet<EntityId> = changed
            .iter()
            .filter_map(|o| match o {
                ObjectId::Entity(e) => Some(*e),
                ObjectId::Relation(_) => None,
            })
            .collect();
        self.refresh_cache(kg, &topo, &moved)?;
        self.last_trainable = trainable;
        Ok(changed.into_iter().collect())
    }

    fn incremental_positives(&mut self, kg: &DynamicKg, delta: &DeltaReport, topo: &BTreeSet<EntityId>) -> Vec<Triple> {
        let cap = self.config.max_incr_triples.max(delta.added.len());
        let mut out: Vec<Triple> = delta.added.clone();
        let added: BTreeSet<Triple> = delta.added.iter().copied().collect();
        let mut rest: Vec<Triple> = kg
            .triples_incident(topo)
            .into_iter()
            .filter(|t| !added.contains(t))
            .collect();
        if out.len() + rest.len() > cap {
            rest.shuffle(&mut self.rng);
            rest.truncate(cap - out.len());
            rest.sort();
        }
        out.extend(rest);
        out
    }

    /// Pushes `dL/ds` through the pooled state into the objects the last
    /// incremental update could touch, then takes one SGD step on them.
    pub fn apply_state_feedback(&mut self, kg: &DynamicKg, ds: &[f64], lr: f64) -> Result<Vec<ObjectId>> {
        let d = self.config.dim;
        if ds.len() != 2 * d {
            return Err(Error::Dimension {
                op: "apply_state_feedback",
                left: (1, ds.len()),
                right: (1, 2 * d),
            });
        }
        if self.last_trainable.is_empty() || self.entity_cache.is_empty() {
            return Ok(Vec::new());
        }
        let trainable = self.last_trainable.clone();
        let n_entities = self.entity_cache.len() as f64;
        let n_rel = self.relation_cache.len() as f64;
        let entity_delta: Vec<f64> = ds[..d].iter().map(|g| g / n_entities).collect();
        let rel_delta: Vec<f64> = ds[d..].iter().map(|g| g / n_rel).collect();

        // Any entity whose context holds a trainable entity contributes.
        let mut sources: BTreeSet<EntityId> = BTreeSet::new();
        for obj in &trainable {
            if let ObjectId::Entity(e) = *obj {
                sources.insert(e);
                sources.extend(kg.neighbors(e));
            }
        }
        let mut forwards = Vec::with_capacity(sources.len());
        for &e in &sources {
            forwards.push((self.joint_forward(kg, JointKey::Entity(e))?, entity_delta.as_slice()));
        }
        for obj in &trainable {
            if let ObjectId::Relation(tag) = *obj {
                let fwd = joint_forward(&relation_alone(tag), &self.encoder, &self.table)?;
                forwards.push((fwd, rel_delta.as_slice()));
            }
        }
        self.table.zero_grads();
        let mut sink = GradSink {
            encoder: &mut self.encoder,
            train_encoder: false,
            table: &mut self.table,
            trainable: Some(&trainable),
        };
        for (fwd, delta) in &forwards {
            fwd.backward(delta, &mut sink)?;
        }
        let changed = self.table.apply_sgd(lr, Some(&trainable))?;
        let moved: BTreeSet<EntityId> = changed
            .iter()
            .filter_map(|o| match o {
                ObjectId::Entity(e) => Some(*e),
                ObjectId::Relation(_) => None,
            })
            .collect();
        self.refresh_cache(kg, &BTreeSet::new(), &moved)?;
        Ok(changed)
    }

    /// Recomputes every cached joint.
    pub fn rebuild_cache(&mut self, kg: &DynamicKg) -> Result<()> {
        self.entity_cache.clear();
        for e in kg.entities() {
            let v = self.joint(kg, JointKey::Entity(e))?;
            self.entity_cache.insert(e, v);
        }
        self.refresh_relations()
    }

    /// Recomputes joints for entities whose context changed shape (`topo`)
    /// or holds an entity whose vector moved (`moved`).
    pub fn refresh_cache(
        &mut self,
        kg: &DynamicKg,
        topo: &BTreeSet<EntityId>,
        moved: &BTreeSet<EntityId>,
    ) -> Result<()> {
        let mut stale: BTreeSet<EntityId> = topo.clone();
        for &e in moved {
            stale.insert(e);
            stale.extend(kg.neighbors(e));
        }
        for e in stale {
            let v = self.joint(kg, JointKey::Entity(e))?;
            self.entity_cache.insert(e, v);
        }
        self.refresh_relations()
    }

    fn refresh_relations(&mut self) -> Result<()> {
        for tag in RelTag::ALL {
            let fwd = joint_forward(&relation_alone(tag), &self.encoder, &self.table)?;
            self.relation_cache.insert(tag, fwd.into_output());
        }
        Ok(())
    }

    /// Pooled state from the cached joints; dimension `2d`.
    pub fn pool_state(&self) -> Vec<f64> {
        pool_vectors(
            self.entity_cache.values().map(Vec::as_slice),
            self.relation_cache.values().map(Vec::as_slice),
            self.config.dim,
        )
    }

    /// Pooled state recomputed from scratch, bypassing the cache.
    pub fn pool_state_exact(&self, kg: &DynamicKg) -> Result<Vec<f64>> {
        let entities = kg
            .entities()
            .into_iter()
            .map(|e| self.joint(kg, JointKey::Entity(e)))
            .collect::<Result<Vec<_>>>()?;
        let relations = RelTag::ALL
            .iter()
            .map(|&tag| joint_forward(&relation_alone(tag), &self.encoder, &self.table).map(JointForward::into_output))
            .collect::<Result<Vec<_>>>()?;
        Ok(pool_vectors(
            entities.iter().map(Vec::as_slice),
            relations.iter().map(Vec::as_slice),
            self.config.dim,
        ))
    }
}

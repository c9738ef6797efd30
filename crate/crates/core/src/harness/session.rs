//! The closed-loop stream replay shared by training and evaluation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{AgentMode, RunConfig};
use super::ingest::{Dataset, Event};
use crate::candidates::generate_candidates;
use crate::embed::{EmbedConfig, Embedder};
use crate::geo::PoiProfile;
use crate::kgstore::DynamicKg;
use crate::legacy::LegacyModel;
use crate::metrics::EvalRecord;
use crate::numkit::Mat;
use crate::policy::{
    priority_of, select_action, train_step, ActionSet, EpsilonSchedule, PriorityReplayBuffer, QNet, QNetMode,
    Transition,
};
use crate::reward::{RewardModel, WordVectors};
use crate::{Error, Result};

/// One row of the per-event trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub event: usize,
    pub user: usize,
    pub predicted: usize,
    pub real: usize,
    pub reward: f64,
    pub r_d: f64,
    pub r_c: f64,
    pub r_p: f64,
}

pub const TRACE_HEADER: &str = "event,user,predicted,real,reward,r_d,r_c,r_p";

/// Index-level record of what the loop read and when.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CausalityReport {
    pub predictions: usize,
    /// Predictions made after the event being predicted was already revealed.
    pub violations: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeLog {
    pub rows: Vec<TraceRow>,
    pub records: Vec<EvalRecord>,
    pub losses: Vec<f64>,
    pub causality: CausalityReport,
}

impl EpisodeLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(TRACE_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.event, r.user, r.predicted, r.real, r.reward, r.r_d, r.r_c, r.r_p
            );
        }
        s
    }
}

/// The only way the loop touches the stream: asking whose turn it is, and
/// revealing an event once the prediction for it is made.
pub struct StreamCursor<'a> {
    events: &'a [Event],
    revealed: Option<usize>,
    report: CausalityReport,
}

impl<'a> StreamCursor<'a> {
    pub fn new(events: &'a [Event]) -> Self {
        StreamCursor {
            events,
            revealed: None,
            report: CausalityReport::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// User whose next visit is asked for at step `l`.
    pub fn query(&self, l: usize) -> usize {
        self.events[l].user
    }

    /// Marks the moment a prediction for step `l` is committed.
    pub fn predicting(&mut self, l: usize) {
        self.report.predictions += 1;
        if self.revealed.is_some_and(|r| r >= l) {
            self.report.violations += 1;
        }
    }

    pub fn reveal(&mut self, l: usize) -> Event {
        self.revealed = Some(self.revealed.map_or(l, |r| r.max(l)));
        self.events[l]
    }

    pub fn report(&self) -> CausalityReport {
        self.report
    }
}

/// An external policy plugged into evaluation in place of the Q-network.
pub trait Recommender {
    fn recommend(&mut self, event: usize, user: usize, candidates: &[usize]) -> Result<usize>;
}

/// Uniform choice among the candidates.
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        RandomAgent {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Recommender for RandomAgent {
    fn recommend(&mut self, _event: usize, _user: usize, candidates: &[usize]) -> Result<usize> {
        if candidates.is_empty() {
            return Err(Error::ActionSpace("empty candidate set".into()));
        }
        Ok(candidates[self.rng.gen_range(0..candidates.len())])
    }
}

/// Answers with the true next visit, read from its own copy of the stream.
pub struct OracleAgent {
    answers: Vec<usize>,
}

impl OracleAgent {
    pub fn new(events: &[Event]) -> Self {
        OracleAgent {
            answers: events.iter().map(|e| e.poi).collect(),
        }
    }
}

impl Recommender for OracleAgent {
    fn recommend(&mut self, event: usize, _user: usize, _candidates: &[usize]) -> Result<usize> {
        self.answers
            .get(event)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("oracle has no event {event}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Phase {
    Train,
    /// Greedy; the graph and embeddings keep evolving unless `frozen`.
    Eval {
        frozen: bool,
    },
}

pub(crate) fn embed_config(cfg: &RunConfig) -> EmbedConfig {
    EmbedConfig {
        dim: cfg.d,
        gcn_layers: cfg.gcn_layers,
        margin: cfg.margin,
        lr: cfg.embed_lr,
        epochs: cfg.init_epochs,
        neg_per_pos: cfg.neg_per_pos,
        incr_steps: cfg.incr_steps,
        max_incr_triples: cfg.max_incr_triples,
        ..EmbedConfig::default()
    }
}

pub(crate) fn expected_qnet_mode(cfg: &RunConfig, pois: usize) -> QNetMode {
    if cfg.agent.uses_kg_embedding() {
        QNetMode::Pairwise {
            state_dim: 2 * cfg.d,
            action_dim: cfg.d,
        }
    } else {
        QNetMode::Vanilla {
            state_dim: 4 * cfg.legacy_dim,
            actions: pois,
        }
    }
}

/// Everything the loop carries between events.
#[derive(Clone, Debug)]
pub struct Session {
    pub(crate) config: RunConfig,
    pub(crate) pois: Vec<PoiProfile>,
    pub(crate) kg: DynamicKg,
    pub(crate) embedder: Option<Embedder>,
    pub(crate) legacy: Option<LegacyModel>,
    pub(crate) qnet: QNet,
    pub(crate) target: Option<QNet>,
    pub(crate) buffer: PriorityReplayBuffer,
    pub(crate) reward: RewardModel,
    pub(crate) rng: ChaCha8Rng,
    pending: BTreeMap<usize, Transition>,
    train_steps: usize,
    events_seen: usize,
}

impl Session {
    /// Builds the static graph over every POI of `data`, runs the initial
    /// embedding training and draws fresh networks.
    pub fn fresh(config: &RunConfig, data: &Dataset, words: WordVectors) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let kg = DynamicKg::build_static(&data.static_pois, config.effective_window())?;
        let (embedder, legacy) = if config.agent.uses_kg_embedding() {
            let mut e = Embedder::new(&kg, embed_config(config), rng.next_u64())?;
            e.train_init(&kg)?;
            (Some(e), None)
        } else {
            let l = LegacyModel::new(config.legacy_dim, &data.static_pois, config.bin_secs, rng.next_u64())?;
            (None, Some(l))
        };
        let qnet = QNet::new(expected_qnet_mode(config, data.pois.len()), &config.hidden, &mut rng)?;
        Self::assemble(config, data, words, kg, embedder, legacy, qnet, rng)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        config: &RunConfig,
        data: &Dataset,
        words: WordVectors,
        kg: DynamicKg,
        embedder: Option<Embedder>,
        legacy: Option<LegacyModel>,
        qnet: QNet,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if data.pois.is_empty() {
            return Err(Error::Data("dataset has no POIs".into()));
        }
        let target = (config.target_sync > 0).then(|| qnet.clone());
        Ok(Session {
            config: config.clone(),
            pois: data.pois.clone(),
            kg,
            embedder,
            legacy,
            qnet,
            target,
            buffer: PriorityReplayBuffer::new(config.buffer_capacity, config.priority, config.sampling),
            reward: RewardModel::new(words, config.reward_weights()?, config.b, config.d_floor),
            rng,
            pending: BTreeMap::new(),
            train_steps: 0,
            events_seen: 0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn kg(&self) -> &DynamicKg {
        &self.kg
    }

    pub fn embedder(&self) -> Option<&Embedder> {
        self.embedder.as_ref()
    }

    pub fn legacy(&self) -> Option<&LegacyModel> {
        self.legacy.as_ref()
    }

    pub fn qnet(&self) -> &QNet {
        &self.qnet
    }

    pub fn buffer(&self) -> &PriorityReplayBuffer {
        &self.buffer
    }

    pub fn words(&self) -> &WordVectors {
        self.reward.words()
    }

    pub fn pois(&self) -> &[PoiProfile] {
        &self.pois
    }

    fn state_for(&self, user: usize) -> Vec<f64> {
        match (&self.embedder, &self.legacy) {
            (Some(e), _) => e.pool_state(),
            (None, Some(l)) => l.state(user),
            (None, None) => unreachable!("a session always has a representation"),
        }
    }

    fn candidate_pois(&self, user: usize) -> Vec<usize> {
        if self.config.agent.uses_candidates() {
            generate_candidates(&self.kg, user, self.config.k).pois
        } else {
            (0..self.pois.len()).collect()
        }
    }

    fn action_set(&self, pois: Vec<usize>) -> Result<ActionSet> {
        match &self.embedder {
            Some(e) => {
                let mut m = Mat::zeros(pois.len(), e.dim());
                for (i, &p) in pois.iter().enumerate() {
                    let v = e
                        .poi_vector(p)
                        .ok_or_else(|| Error::Consistency(format!("no joint embedding for POI {p}")))?;
                    m.row_mut(i).copy_from_slice(v);
                }
                ActionSet::pairwise(pois, m)
            }
            None => Ok(ActionSet::indices(pois)),
        }
    }

    fn observe_real(&mut self, e: Event) -> Result<()> {
        if self.config.agent == AgentMode::DrprStatic {
            return Ok(());
        }
        let delta = self.kg.apply_visit(e.user, e.poi, e.time)?;
        if let Some(emb) = self.embedder.as_mut() {
            emb.incremental_update(&self.kg, &delta)?;
        }
        if let Some(l) = self.legacy.as_mut() {
            l.observe(e.user, e.poi, e.time)?;
        }
        Ok(())
    }

    fn train_once(&mut self, user: usize) -> Result<f64> {
        let idx = self.buffer.sample_indices(self.config.batch_size, &mut self.rng);
        let batch: Vec<&Transition> = idx.iter().map(|&i| self.buffer.get(i)).collect();
        let out = train_step(
            &mut self.qnet,
            self.target.as_ref(),
            &batch,
            self.config.gamma,
            self.config.lr,
        )?;
        if self.config.encoder_feedback {
            if let Some(e) = self.embedder.as_mut() {
                e.apply_state_feedback(&self.kg, &out.state_grad, self.config.embed_lr)?;
            }
            if let Some(l) = self.legacy.as_mut() {
                l.apply_feedback(&out.state_grad, user, self.config.embed_lr)?;
            }
        }
        if self.buffer.mode() == crate::policy::PriorityMode::Td {
            for &i in &idx {
                let p = priority_of(self.buffer.get(i), self.buffer.mode(), &self.qnet, self.config.gamma)?;
                self.buffer.set_priority(i, p);
            }
        }
        self.train_steps += 1;
        if self.config.target_sync > 0 && self.train_steps.is_multiple_of(self.config.target_sync) {
            self.target = Some(self.qnet.clone());
        }
        Ok(out.loss)
    }

    /// Replays `events` in order. `offset` is the global index of
    /// `events[0]`, used in trace rows and error locations.
    pub fn replay(
        &mut self,
        events: &[Event],
        offset: usize,
        phase: Phase,
        mut agent: Option<&mut dyn Recommender>,
    ) -> Result<EpisodeLog> {
        if matches!(phase, Phase::Eval { .. }) {
            // Evaluation scores against its own baselines, so a reloaded
            // session and a live one agree.
            self.reward.reset_baselines();
        }
        let mut log = EpisodeLog::default();
        let mut cursor = StreamCursor::new(events);
        let schedule = EpsilonSchedule::new(self.config.eps_start, self.config.eps_end, events.len());
        for l in 0..cursor.len() {
            let g = offset + l;
            self.step(&mut cursor, l, g, phase, &schedule, agent.as_deref_mut(), &mut log)
                .map_err(|e| e.at_event(g))?;
        }
        self.pending.clear();
        log.causality = cursor.report();
        Ok(log)
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        cursor: &mut StreamCursor<'_>,
        l: usize,
        g: usize,
        phase: Phase,
        schedule: &EpsilonSchedule,
        agent: Option<&mut (dyn Recommender + '_)>,
        log: &mut EpisodeLog,
    ) -> Result<()> {
        let user = cursor.query(l);
        let state = self.state_for(user);
        let actions = self.action_set(self.candidate_pois(user))?;
        let training = phase == Phase::Train;

        if training {
            if let Some(mut t) = self.pending.remove(&user) {
                t.next = Some((state.clone(), actions.clone()));
                t.priority = priority_of(&t, self.buffer.mode(), &self.qnet, self.config.gamma)?;
                self.buffer.push(t);
            }
        }

        cursor.predicting(l);
        let (index, predicted) = match agent {
            Some(a) => {
                let p = a.recommend(g, user, &actions.pois)?;
                (actions.pois.iter().position(|&q| q == p), p)
            }
            None => {
                let eps = if training { schedule.at(l) } else { 0.0 };
                let c = select_action(&self.qnet, &state, &actions, eps, &mut self.rng)?;
                (Some(c.index), c.poi)
            }
        };
        let pred_profile = self
            .pois
            .get(predicted)
            .ok_or_else(|| Error::ActionSpace(format!("recommended unknown POI {predicted}")))?
            .clone();

        let real = cursor.reveal(l);
        let real_profile = self.pois[real.poi].clone();
        let scored = self.reward.score(&pred_profile, &real_profile)?;

        if training {
            let action_vec = index.and_then(|i| actions.embedding(i).map(<[f64]>::to_vec));
            self.pending.insert(
                user,
                Transition {
                    state,
                    action: predicted,
                    action_vec,
                    reward: scored.reward,
                    next: None,
                    priority: 0.0,
                },
            );
            self.events_seen += 1;
            if !self.buffer.is_empty() && self.events_seen.is_multiple_of(self.config.train_every) {
                let loss = self.train_once(user)?;
                log.losses.push(loss);
            }
        }

        let evolve = match phase {
            Phase::Train => true,
            Phase::Eval { frozen } => !frozen,
        };
        if evolve {
            self.observe_real(real)?;
        }

        log.rows.push(TraceRow {
            event: g,
            user,
            predicted,
            real: real.poi,
            reward: scored.reward,
            r_d: scored.parts.distance,
            r_c: scored.parts.category,
            r_p: scored.parts.exact,
        });
        log.records.push(EvalRecord {
            predicted: pred_profile,
            real: real_profile,
        });
        Ok(())
    }
}

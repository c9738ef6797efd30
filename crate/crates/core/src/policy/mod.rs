//! The imitation agent: a Q-network over dynamic action sets, epsilon-greedy
//! acting, Bellman training and prioritized replay.

mod qnet;
mod replay;
mod train;

use rand::Rng;

use crate::numkit::Mat;
use crate::{Error, Result};

pub use qnet::{MlpTrace, QNet, QNetMode};
pub use replay::{PriorityReplayBuffer, SamplingMode};
pub use train::{bellman_targets, check_bellman_gradients, loss_given_targets, train_step, StepOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorityMode {
    Reward,
    Td,
}

impl std::str::FromStr for PriorityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reward" => Ok(PriorityMode::Reward),
            "td" => Ok(PriorityMode::Td),
            other => Err(Error::Config(format!("unknown priority mode {other:?}"))),
        }
    }
}

/// Candidate POIs and, for pairwise networks, one embedding row per POI.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSet {
    pub pois: Vec<usize>,
    pub embeddings: Option<Mat>,
}

impl ActionSet {
    pub fn pairwise(pois: Vec<usize>, embeddings: Mat) -> Result<Self> {
        if embeddings.rows() != pois.len() {
            return Err(Error::Dimension {
                op: "action set",
                left: (pois.len(), 1),
                right: embeddings.shape(),
            });
        }
        Ok(ActionSet {
            pois,
            embeddings: Some(embeddings),
        })
    }

    pub fn indices(pois: Vec<usize>) -> Self {
        ActionSet { pois, embeddings: None }
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }

    pub fn embedding(&self, i: usize) -> Option<&[f64]> {
        self.embeddings.as_ref().map(|m| m.row(i))
    }
}

/// One scored step. `next` is `None` at terminals.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    /// Action embedding fed to a pairwise network.
    pub action_vec: Option<Vec<f64>>,
    pub reward: f64,
    pub next: Option<(Vec<f64>, ActionSet)>,
    pub priority: f64,
}

impl Transition {
    pub fn is_terminal(&self) -> bool {
        self.next.is_none()
    }
}

fn pairwise_rows(state: &[f64], actions: &Mat) -> Mat {
    let mut x = Mat::zeros(actions.rows(), state.len() + actions.cols());
    for r in 0..actions.rows() {
        let row = x.row_mut(r);
        row[..state.len()].copy_from_slice(state);
        row[state.len()..].copy_from_slice(actions.row(r));
    }
    x
}

/// One score per candidate.
pub fn q_values(net: &QNet, state: &[f64], actions: &ActionSet) -> Result<Vec<f64>> {
    if actions.is_empty() {
        return Err(Error::ActionSpace("empty candidate set".into()));
    }
    check_state(net, state)?;
    match net.mode() {
        QNetMode::Pairwise { action_dim, .. } => {
            let emb = actions
                .embeddings
                .as_ref()
                .ok_or_else(|| Error::ActionSpace("pairwise network needs action embeddings".into()))?;
            if emb.cols() != action_dim {
                return Err(Error::Dimension {
                    op: "q_values",
                    left: emb.shape(),
                    right: (emb.rows(), action_dim),
                });
            }
            Ok(net.predict(&pairwise_rows(state, emb))?.into_vec())
        }
        QNetMode::Vanilla { actions: n, .. } => {
            let out = net.predict(&Mat::row_vector(state))?;
            actions
                .pois
                .iter()
                .map(|&p| {
                    if p < n {
                        Ok(out.get(0, p))
                    } else {
                        Err(Error::ActionSpace(format!("action {p} outside a space of {n}")))
                    }
                })
                .collect()
        }
    }
}

fn check_state(net: &QNet, state: &[f64]) -> Result<()> {
    let want = net.mode().state_dim();
    if state.len() != want {
        return Err(Error::Dimension {
            op: "state",
            left: (1, state.len()),
            right: (1, want),
        });
    }
    Ok(())
}

/// Index of the first maximum.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Choice {
    /// Position in the action set.
    pub index: usize,
    pub poi: usize,
    pub explored: bool,
}

/// Uniform over the set with probability `epsilon`, otherwise the first
/// argmax of the Q-values.
pub fn select_action<R: Rng + ?Sized>(
    net: &QNet,
    state: &[f64],
    actions: &ActionSet,
    epsilon: f64,
    rng: &mut R,
) -> Result<Choice> {
    if actions.is_empty() {
        return Err(Error::ActionSpace("empty candidate set".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        let index = rng.gen_range(0..actions.len());
        return Ok(Choice {
            index,
            poi: actions.pois[index],
            explored: true,
        });
    }
    let index = argmax(&q_values(net, state, actions)?);
    Ok(Choice {
        index,
        poi: actions.pois[index],
        explored: false,
    })
}

fn q_of_action(net: &QNet, t: &Transition) -> Result<f64> {
    let set = match &t.action_vec {
        Some(v) => ActionSet::pairwise(vec![t.action], Mat::row_vector(v))?,
        None => ActionSet::indices(vec![t.action]),
    };
    Ok(q_values(net, &t.state, &set)?[0])
}

fn max_next_q(net: &QNet, t: &Transition) -> Result<f64> {
    match &t.next {
        None => Ok(0.0),
        Some((s, cand)) => Ok(q_values(net, s, cand)?.into_iter().fold(f64::NEG_INFINITY, f64::max)),
    }
}

/// Signed temporal-difference error `r + gamma * max Q(s', a') - Q(s, a)`.
pub fn td_error(t: &Transition, net: &QNet, gamma: f64) -> Result<f64> {
    Ok(t.reward + gamma * max_next_q(net, t)? - q_of_action(net, t)?)
}

/// Reward mode uses `r`; TD mode uses `|td_error|` so priorities stay
/// nonnegative.
pub fn priority_of(t: &Transition, mode: PriorityMode, net: &QNet, gamma: f64) -> Result<f64> {
    match mode {
        PriorityMode::Reward => Ok(t.reward),
        PriorityMode::Td => Ok(td_error(t, net, gamma)?.abs()),
    }
}

/// Linear decay from `start` to `end` over `steps` steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

impl EpsilonSchedule {
    pub fn new(start: f64, end: f64, steps: usize) -> Self {
        EpsilonSchedule { start, end, steps }
    }

    pub fn at(&self, step: usize) -> f64 {
        if self.steps <= 1 {
            return if step == 0 { self.start } else { self.end };
        }
        let frac = (step as f64 / (self.steps - 1) as f64).min(1.0);
        self.start + (self.end - self.start) * frac
    }
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule::new(0.5, 0.05, 1)
    }
}

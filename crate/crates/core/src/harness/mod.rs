//! Ingestion, configuration and the train / evaluate stream replay.
//!
//! Per event the loop pools the state, builds the user's candidate set,
//! acts, reveals the true visit, scores it, stores the transition, trains
//! from replay with feedback into the representation, and only then folds
//! the real visit into the graph and the embeddings.

mod artifacts;
mod config;
mod ingest;
mod session;
mod sweep;
pub mod synthetic;

use std::path::Path;
use std::time::Instant;

pub use artifacts::{load, read_kg, read_report, save, write_report, KG_FILE, METRICS_FILE, TRACE_FILE};
pub use config::{AgentMode, RunConfig, WORDVECS_ENV};
pub use ingest::{
    derive_zones, format_checkins, parse_checkins, parse_checkins_str, parse_line, parse_timestamp, split_stream,
    zone_cell, CheckInRecord, Dataset, Event, ParsedCheckins, VenueRecord,
};
pub use session::{
    CausalityReport, EpisodeLog, OracleAgent, Phase, RandomAgent, Recommender, Session, StreamCursor, TraceRow,
    TRACE_HEADER,
};
pub use sweep::{simplex_grid, sweep_csv, sweep_reward, SweepRow, SWEEP_HEADER};

use crate::metrics::{evaluate, MetricReport};
use crate::reward::WordVectors;
use crate::{Error, Result};

/// Loads the configured dataset: a check-in TSV, or a built-in synthetic
/// stream seeded by the run seed.
pub fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    if let Some(name) = config.dataset.strip_prefix("synthetic:") {
        let data = synthetic::named(name, config.seed)
            .ok_or_else(|| Error::Config(format!("unknown synthetic dataset {name:?}")))?;
        return Dataset::with_catalog(
            &data.records,
            config.stream_offset,
            config.stream_length,
            config.cell_deg,
            &data.catalog,
        );
    }
    if config.dataset.is_empty() {
        return Err(Error::Config("no dataset configured".into()));
    }
    let parsed = parse_checkins(Path::new(&config.dataset))?;
    Dataset::from_records(
        &parsed.records,
        config.stream_offset,
        config.stream_length,
        config.cell_deg,
    )
}

pub fn load_words(config: &RunConfig) -> Result<WordVectors> {
    match &config.wordvecs {
        Some(p) => WordVectors::load(p),
        None => Ok(WordVectors::empty()),
    }
}

pub struct TrainOutcome {
    pub session: Session,
    pub log: EpisodeLog,
    /// Metrics over the training trace; `None` when it is empty.
    pub report: Option<MetricReport>,
}

/// Initial training plus the closed loop over the training split.
pub fn train_on(config: &RunConfig, data: &Dataset, words: WordVectors) -> Result<TrainOutcome> {
    config.validate()?;
    let start = Instant::now();
    let mut session = Session::fresh(config, data, words)?;
    let (train, _) = data.split(config.split);
    let log = session.replay(train, 0, Phase::Train, None)?;
    let report = if log.is_empty() {
        None
    } else {
        Some(evaluate(&log.records, session.words(), start.elapsed().as_secs_f64())?)
    };
    Ok(TrainOutcome { session, log, report })
}

pub fn run_training(config: &RunConfig) -> Result<TrainOutcome> {
    let data = load_dataset(config)?;
    train_on(config, &data, load_words(config)?)
}

/// Trains and writes every artifact to `out`.
pub fn train_to_dir(config: &RunConfig, out: &Path) -> Result<TrainOutcome> {
    let outcome = run_training(config)?;
    save(out, &outcome.session, &outcome.log, outcome.report.as_ref())?;
    Ok(outcome)
}

pub struct EvalOutcome {
    pub report: MetricReport,
    pub log: EpisodeLog,
}

/// Greedy replay of the test split from a trained session.
pub fn evaluate_session(
    session: &mut Session,
    data: &Dataset,
    agent: Option<&mut dyn Recommender>,
) -> Result<EvalOutcome> {
    let (train, test) = data.split(session.config().split);
    let frozen = session.config().frozen_eval;
    let start = Instant::now();
    let log = session.replay(test, train.len(), Phase::Eval { frozen }, agent)?;
    let report = evaluate(&log.records, session.words(), start.elapsed().as_secs_f64())?;
    Ok(EvalOutcome { report, log })
}

/// Loads artifacts from `dir` and evaluates on the configured test split.
pub fn run_eval(config: &RunConfig, dir: &Path) -> Result<EvalOutcome> {
    config.validate()?;
    let data = load_dataset(config)?;
    let mut session = load(dir, config, &data, load_words(config)?)?;
    evaluate_session(&mut session, &data, None)
}

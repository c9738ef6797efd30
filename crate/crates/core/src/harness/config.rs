//! Flat `key = value` run configuration.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::policy::{PriorityMode, SamplingMode};
use crate::reward::RewardWeights;
use crate::{Error, Result};

/// Environment variable overriding the word-vector path of a config file.
pub const WORDVECS_ENV: &str = "GEOSTREAM_WORDVECS";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentMode {
    /// Dynamic KG, meta-path candidates, pairwise Q-network.
    Drpr,
    /// The graph is frozen at its initial skeleton.
    DrprStatic,
    /// No exit mechanism: windows never evict.
    DrprNoExit,
    /// Every POI is a candidate.
    DrprNoCand,
    /// Separate user/spatial representations with a vanilla Q-network.
    Rirl,
}

impl AgentMode {
    pub const ALL: [AgentMode; 5] = [
        AgentMode::Drpr,
        AgentMode::DrprStatic,
        AgentMode::DrprNoExit,
        AgentMode::DrprNoCand,
        AgentMode::Rirl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentMode::Drpr => "drpr",
            AgentMode::DrprStatic => "drpr-static",
            AgentMode::DrprNoExit => "drpr-noexit",
            AgentMode::DrprNoCand => "drpr-nocand",
            AgentMode::Rirl => "rirl",
        }
    }

    pub fn uses_kg_embedding(self) -> bool {
        self != AgentMode::Rirl
    }

    pub fn uses_candidates(self) -> bool {
        !matches!(self, AgentMode::DrprNoCand | AgentMode::Rirl)
    }
}

impl fmt::Display for AgentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown agent mode {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Check-in TSV path, or `synthetic:cyclic` / `synthetic:drift`.
    pub dataset: String,
    pub stream_offset: usize,
    pub stream_length: usize,
    pub split: f64,
    pub d: usize,
    /// Per-scheme candidate count.
    pub k: usize,
    /// Per-user window capacity.
    pub w: usize,
    /// Reward baseline window.
    pub b: usize,
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub lambda_d: f64,
    pub lambda_c: f64,
    pub lambda_p: f64,
    pub priority: PriorityMode,
    pub agent: AgentMode,
    pub seed: u64,
    pub lr: f64,
    pub embed_lr: f64,
    pub margin: f64,
    pub init_epochs: usize,
    pub incr_steps: usize,
    pub neg_per_pos: usize,
    pub gcn_layers: usize,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub train_every: usize,
    pub buffer_capacity: usize,
    /// Copy the online network into the target network every this many
    /// training steps; 0 bootstraps from the online network.
    pub target_sync: usize,
    pub sampling: SamplingMode,
    pub encoder_feedback: bool,
    /// Evaluate without touching the graph or the embeddings.
    pub frozen_eval: bool,
    pub cell_deg: f64,
    pub bin_secs: i64,
    pub legacy_dim: usize,
    pub d_floor: f64,
    pub wordvecs: Option<PathBuf>,
    pub max_incr_triples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: String::new(),
            stream_offset: 0,
            stream_length: 15000,
            split: 0.8,
            d: 200,
            k: 20,
            w: 50,
            b: 200,
            gamma: 0.9,
            eps_start: 0.5,
            eps_end: 0.05,
            lambda_d: 1.0 / 3.0,
            lambda_c: 1.0 / 3.0,
            lambda_p: 1.0 / 3.0,
            priority: PriorityMode::Td,
            agent: AgentMode::Drpr,
            seed: 0,
            lr: 1e-5,
            embed_lr: 1e-5,
            margin: 1.0,
            init_epochs: 10,
            incr_steps: 1,
            neg_per_pos: 1,
            gcn_layers: 2,
            hidden: vec![256, 256],
            batch_size: 32,
            train_every: 1,
            buffer_capacity: 2000,
            target_sync: 0,
            sampling: SamplingMode::TopK,
            encoder_feedback: true,
            frozen_eval: false,
            cell_deg: 0.01,
            bin_secs: 3600,
            legacy_dim: 50,
            d_floor: 0.1,
            wordvecs: None,
            max_incr_triples: 256,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad value {v:?} for {key}"))),
    }
}

fn sampling_str(s: SamplingMode) -> &'static str {
    match s {
        SamplingMode::TopK => "topk",
        SamplingMode::Stochastic => "stochastic",
    }
}

fn priority_str(p: PriorityMode) -> &'static str {
    match p {
        PriorityMode::Reward => "reward",
        PriorityMode::Td => "td",
    }
}

impl RunConfig {
    /// Sets one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "dataset" => self.dataset = v.to_string(),
            "stream_offset" => self.stream_offset = parse(key, v)?,
            "stream_length" => self.stream_length = parse(key, v)?,
            "split" => self.split = parse(key, v)?,
            "d" => self.d = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "w" => self.w = parse(key, v)?,
            "b" => self.b = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "eps_start" => self.eps_start = parse(key, v)?,
            "eps_end" => self.eps_end = parse(key, v)?,
            "lambda_d" => self.lambda_d = parse(key, v)?,
            "lambda_c" => self.lambda_c = parse(key, v)?,
            "lambda_p" => self.lambda_p = parse(key, v)?,
            "priority" => self.priority = v.parse()?,
            "agent" => self.agent = v.parse()?,
            "seed" => self.seed = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "embed_lr" => self.embed_lr = parse(key, v)?,
            "margin" => self.margin = parse(key, v)?,
            "init_epochs" => self.init_epochs = parse(key, v)?,
            "incr_steps" => self.incr_steps = parse(key, v)?,
            "neg_per_pos" => self.neg_per_pos = parse(key, v)?,
            "gcn_layers" => self.gcn_layers = parse(key, v)?,
            "hidden" => {
                self.hidden = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',').map(|h| parse(key, h.trim())).collect::<Result<_>>()?
                }
            }
            "batch_size" => self.batch_size = parse(key, v)?,
            "train_every" => self.train_every = parse(key, v)?,
            "buffer_capacity" => self.buffer_capacity = parse(key, v)?,
            "target_sync" => self.target_sync = parse(key, v)?,
            "sampling" => {
                self.sampling = match v {
                    "topk" => SamplingMode::TopK,
                    "stochastic" => SamplingMode::Stochastic,
                    _ => return Err(Error::Config(format!("unknown sampling mode {v:?}"))),
                }
            }
            "encoder_feedback" => self.encoder_feedback = parse_bool(key, v)?,
            "frozen_eval" => self.frozen_eval = parse_bool(key, v)?,
            "cell_deg" => self.cell_deg = parse(key, v)?,
            "bin_secs" => self.bin_secs = parse(key, v)?,
            "legacy_dim" => self.legacy_dim = parse(key, v)?,
            "d_floor" => self.d_floor = parse(key, v)?,
            "wordvecs" => self.wordvecs = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "max_incr_triples" => self.max_incr_triples = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative dataset and word-vector paths resolve
    /// against the file's directory; `GEOSTREAM_WORDVECS` wins over the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if !cfg.dataset.is_empty() && !cfg.dataset.starts_with("synthetic:") && Path::new(&cfg.dataset).is_relative() {
            cfg.dataset = base.join(&cfg.dataset).to_string_lossy().into_owned();
        }
        if let Some(w) = &cfg.wordvecs {
            if w.is_relative() {
                cfg.wordvecs = Some(base.join(w));
            }
        }
        if let Some(env) = std::env::var_os(WORDVECS_ENV) {
            if !env.is_empty() {
                cfg.wordvecs = Some(PathBuf::from(env));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad(format!("split {} outside (0, 1)", self.split));
        }
        for (name, v) in [
            ("d", self.d),
            ("k", self.k),
            ("w", self.w),
            ("b", self.b),
            ("stream_length", self.stream_length),
            ("gcn_layers", self.gcn_layers),
            ("batch_size", self.batch_size),
            ("train_every", self.train_every),
            ("buffer_capacity", self.buffer_capacity),
            ("legacy_dim", self.legacy_dim),
            ("incr_steps", self.incr_steps),
            ("neg_per_pos", self.neg_per_pos),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        for (name, e) in [("eps_start", self.eps_start), ("eps_end", self.eps_end)] {
            if !(0.0..=1.0).contains(&e) {
                return bad(format!("{name} {e} outside [0, 1]"));
            }
        }
        if !(self.cell_deg > 0.0) {
            return bad("cell_deg must be positive".into());
        }
        if self.bin_secs <= 0 {
            return bad("bin_secs must be positive".into());
        }
        if !(self.d_floor > 0.0) {
            return bad("d_floor must be positive".into());
        }
        for (name, lr) in [("lr", self.lr), ("embed_lr", self.embed_lr)] {
            if !(lr.is_finite() && lr >= 0.0) {
                return bad(format!("{name} must be finite and nonnegative"));
            }
        }
        self.reward_weights()?;
        Ok(())
    }

    pub fn reward_weights(&self) -> Result<RewardWeights> {
        RewardWeights::new(self.lambda_d, self.lambda_c, self.lambda_p)
    }

    /// Window capacity after the agent mode is applied.
    pub fn effective_window(&self) -> usize {
        if self.agent == AgentMode::DrprNoExit {
            usize::MAX
        } else {
            self.w
        }
    }

    /// Serializes every key, one per line, in a form [`Self::parse`] reads back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(s, "dataset = {}", self.dataset);
        let _ = writeln!(s, "stream_offset = {}", self.stream_offset);
        let _ = writeln!(s, "stream_length = {}", self.stream_length);
        let _ = writeln!(s, "split = {}", self.split);
        let _ = writeln!(s, "d = {}", self.d);
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "w = {}", self.w);
        let _ = writeln!(s, "b = {}", self.b);
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "eps_start = {}", self.eps_start);
        let _ = writeln!(s, "eps_end = {}", self.eps_end);
        let _ = writeln!(s, "lambda_d = {}", self.lambda_d);
        let _ = writeln!(s, "lambda_c = {}", self.lambda_c);
        let _ = writeln!(s, "lambda_p = {}", self.lambda_p);
        let _ = writeln!(s, "priority = {}", priority_str(self.priority));
        let _ = writeln!(s, "agent = {}", self.agent);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "embed_lr = {}", self.embed_lr);
        let _ = writeln!(s, "margin = {}", self.margin);
        let _ = writeln!(s, "init_epochs = {}", self.init_epochs);
        let _ = writeln!(s, "incr_steps = {}", self.incr_steps);
        let _ = writeln!(s, "neg_per_pos = {}", self.neg_per_pos);
        let _ = writeln!(s, "gcn_layers = {}", self.gcn_layers);
        let _ = writeln!(s, "hidden = {}", hidden.join(","));
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "train_every = {}", self.train_every);
        let _ = writeln!(s, "buffer_capacity = {}", self.buffer_capacity);
        let _ = writeln!(s, "target_sync = {}", self.target_sync);
        let _ = writeln!(s, "sampling = {}", sampling_str(self.sampling));
        let _ = writeln!(s, "encoder_feedback = {}", self.encoder_feedback);
        let _ = writeln!(s, "frozen_eval = {}", self.frozen_eval);
        let _ = writeln!(s, "cell_deg = {}", self.cell_deg);
        let _ = writeln!(s, "bin_secs = {}", self.bin_secs);
        let _ = writeln!(s, "legacy_dim = {}", self.legacy_dim);
        let _ = writeln!(s, "d_floor = {}", self.d_floor);
        let _ = writeln!(
            s,
            "wordvecs = {}",
            self.wordvecs
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        );
        let _ = writeln!(s, "max_incr_triples = {}", self.max_incr_triples);
        s
    }
}

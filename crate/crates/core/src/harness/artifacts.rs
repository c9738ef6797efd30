//! Checkpoint files written after training and read back for evaluation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::ingest::Dataset;
use super::session::{embed_config, expected_qnet_mode, EpisodeLog, Session};
use crate::embed::{ContextEncoder, Embedder, EmbeddingTable};
use crate::kgstore::{read_snapshot, write_snapshot, DynamicKg};
use crate::legacy::LegacyModel;
use crate::metrics::MetricReport;
use crate::numkit::{read_params, write_params};
use crate::policy::QNet;
use crate::reward::WordVectors;
use crate::{Error, Result};

pub const CONFIG_FILE: &str = "config.txt";
pub const KG_FILE: &str = "kg.snapshot";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const ENCODER_FILE: &str = "encoder.bin";
pub const QNET_FILE: &str = "qnet.bin";
pub const LEGACY_FILE: &str = "legacy.bin";
pub const TRACE_FILE: &str = "trace.csv";
pub const METRICS_FILE: &str = "metrics.json";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_with(path, |w| w.write_all(text.as_bytes()))
}

pub fn write_report(path: &Path, report: &MetricReport) -> Result<()> {
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Format(e.to_string()))?;
    write_text(path, &(json + "\n"))
}

pub fn read_report(path: &Path) -> Result<MetricReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Writes the model checkpoints, the resolved config and the trace.
pub fn save(dir: &Path, session: &Session, log: &EpisodeLog, report: Option<&MetricReport>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join(CONFIG_FILE), &session.config().to_text())?;
    write_with(&dir.join(KG_FILE), |w| write_snapshot(session.kg(), w))?;
    if let Some(e) = session.embedder() {
        write_with(&dir.join(EMBEDDINGS_FILE), |w| e.table().write_to(w))?;
        write_with(&dir.join(ENCODER_FILE), |w| write_params(e.encoder().store(), w))?;
    }
    if let Some(l) = session.legacy() {
        write_with(&dir.join(LEGACY_FILE), |w| l.write_to(w))?;
    }
    write_with(&dir.join(QNET_FILE), |w| write_params(session.qnet().store(), w))?;
    write_text(&dir.join(TRACE_FILE), &log.to_csv())?;
    if let Some(r) = report {
        write_report(&dir.join(METRICS_FILE), r)?;
    }
    Ok(())
}

/// The graph snapshot stored in `dir`.
pub fn read_kg(dir: &Path) -> Result<DynamicKg> {
    read_snapshot(open(&dir.join(KG_FILE))?)
}

/// Rebuilds a session from `dir`. Checkpoint shapes must agree with
/// `config` and `data`.
pub fn load(dir: &Path, config: &RunConfig, data: &Dataset, words: WordVectors) -> Result<Session> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_e7a1);
    let path = |name: &str| -> PathBuf { dir.join(name) };
    let kg = read_snapshot(open(&path(KG_FILE))?)?;
    if kg.poi_count() != data.pois.len() {
        return Err(Error::Compatibility(format!(
            "graph has {} POIs, dataset has {}",
            kg.poi_count(),
            data.pois.len()
        )));
    }
    let (embedder, legacy) = if config.agent.uses_kg_embedding() {
        let table = EmbeddingTable::read_from(open(&path(EMBEDDINGS_FILE))?)?;
        let encoder = ContextEncoder::from_store(read_params(open(&path(ENCODER_FILE))?)?)?;
        if table.dim() != config.d || encoder.dim() != config.d {
            return Err(Error::Compatibility(format!(
                "checkpoint dimension {} does not match configured d = {}",
                table.dim(),
                config.d
            )));
        }
        let e = Embedder::from_parts(&kg, embed_config(config), table, encoder, rng.next_u64())?;
        (Some(e), None)
    } else {
        let mut l = LegacyModel::new(config.legacy_dim, &data.static_pois, config.bin_secs, rng.next_u64())?;
        l.read_into(open(&path(LEGACY_FILE))?)?;
        (None, Some(l))
    };
    let want = expected_qnet_mode(config, data.pois.len());
    let store = read_params(open(&path(QNET_FILE))?)?;
    let qnet = QNet::from_store(store, config.agent.uses_kg_embedding().then_some(2 * config.d))?;
    if qnet.mode() != want {
        return Err(Error::Compatibility(format!(
            "network checkpoint is {:?}, configuration needs {:?}",
            qnet.mode(),
            want
        )));
    }
    Session::assemble(config, data, words, kg, embedder, legacy, qnet, rng)
}

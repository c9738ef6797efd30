//! Seeded fixtures shared by the benches.

use geostream_core::candidates::generate_candidates;
use geostream_core::embed::{EmbedConfig, Embedder};
use geostream_core::kgstore::{DynamicKg, StaticPoi};
use geostream_core::numkit::Mat;
use geostream_core::policy::{ActionSet, QNet, QNetMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub kg: DynamicKg,
    pub embedder: Embedder,
    pub qnet: QNet,
    pub state: Vec<f64>,
    pub actions: ActionSet,
    pub next_user: usize,
    pub next_time: i64,
}

/// A graph of `pois` POIs in 10 categories with `visits` random check-ins
/// from `users` users, an untrained embedder of width `dim` and a pairwise
/// network scoring the candidates of user 0.
pub fn fixture(pois: usize, users: usize, visits: usize, dim: usize, k: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout: Vec<StaticPoi> = (0..pois)
        .map(|p| StaticPoi {
            poi: p,
            category: p % 10,
            zone: p / 5,
        })
        .collect();
    let mut kg = DynamicKg::build_static(&layout, 50).expect("static graph");
    for t in 0..visits {
        kg.apply_visit(rng.gen_range(0..users), rng.gen_range(0..pois), t as i64)
            .expect("visit");
    }
    let config = EmbedConfig {
        dim,
        ..EmbedConfig::default()
    };
    let embedder = Embedder::new(&kg, config, rng.gen()).expect("embedder");
    let state = embedder.pool_state();
    let cands = generate_candidates(&kg, 0, k);
    let mut emb = Mat::zeros(cands.len(), dim);
    for (r, &p) in cands.pois.iter().enumerate() {
        emb.row_mut(r)
            .copy_from_slice(embedder.poi_vector(p).expect("poi vector"));
    }
    let actions = ActionSet::pairwise(cands.pois, emb).expect("action set");
    let mode = QNetMode::Pairwise {
        state_dim: 2 * dim,
        action_dim: dim,
    };
    let qnet = QNet::new(mode, &[256, 256], &mut rng).expect("qnet");
    Fixture {
        kg,
        embedder,
        qnet,
        state,
        actions,
        next_user: rng.gen_range(0..users),
        next_time: visits as i64,
    }
}

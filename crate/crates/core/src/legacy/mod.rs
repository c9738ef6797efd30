//! Comparison baseline with separate user and spatial-graph representations,
//! gated update rules and a temporal traffic context. Its state feeds a
//! vanilla Q-network over the full POI set.

mod rules;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kgstore::StaticPoi;
use crate::numkit::{
    axpy, dot, read_params, uniform_mat, write_params, xavier_bound, GradCheck, GradCheckReport, Mat, ParamId,
    ParamStore,
};
use crate::{Error, Result};

pub use rules::{
    blend, gate, gated_interaction, sibling_preimage, transform_temporal, update_poi, update_sibling, update_tail,
    update_user,
};

pub const DEFAULT_LEGACY_DIM: usize = 50;
pub const DEFAULT_BIN_SECS: i64 = 3600;

/// Per-zone (inner, in-flow, out-flow) transition counts for the current
/// time bin, built from each user's consecutive visits.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalTracker {
    bin_secs: i64,
    current_bin: Option<i64>,
    counts: Mat,
    last_zone: BTreeMap<usize, usize>,
}

impl TemporalTracker {
    pub fn new(zones: usize, bin_secs: i64) -> Self {
        assert!(bin_secs > 0, "bin width must be positive");
        TemporalTracker {
            bin_secs,
            current_bin: None,
            counts: Mat::zeros(zones, 3),
            last_zone: BTreeMap::new(),
        }
    }

    fn bin(&self, time: i64) -> i64 {
        time.div_euclid(self.bin_secs)
    }

    /// Counts visible to an event at `time`: the current bin's counts, or
    /// zeros if `time` falls in a later bin.
    pub fn context_at(&self, time: i64) -> Mat {
        if self.current_bin == Some(self.bin(time)) {
            self.counts.clone()
        } else {
            Mat::zeros(self.counts.rows(), 3)
        }
    }

    pub fn record(&mut self, user: usize, zone: usize, time: i64) {
        let bin = self.bin(time);
        if self.current_bin != Some(bin) {
            self.counts.fill(0.0);
            self.current_bin = Some(bin);
        }
        if let Some(prev) = self.last_zone.insert(user, zone) {
            if prev == zone {
                self.counts.set(zone, 0, self.counts.get(zone, 0) + 1.0);
            } else {
                self.counts.set(zone, 1, self.counts.get(zone, 1) + 1.0);
                self.counts.set(prev, 2, self.counts.get(prev, 2) + 1.0);
            }
        }
    }
}

/// Which tail a sibling shares with the visited POI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TailKind {
    Category,
    Zone,
}

impl TailKind {
    fn rel_index(self) -> usize {
        match self {
            TailKind::Category => 0,
            TailKind::Zone => 1,
        }
    }
}

/// User vectors, POI heads, category and zone tails and the two fixed
/// relation vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialRep {
    pub dim: usize,
    pub users: BTreeMap<usize, Vec<f64>>,
    pub heads: Vec<Vec<f64>>,
    pub categories: Vec<Vec<f64>>,
    pub zones: Vec<Vec<f64>>,
    /// `[belong_to, locate_at]`.
    pub rel: [Vec<f64>; 2],
    poi_category: Vec<usize>,
    poi_zone: Vec<usize>,
    category_members: Vec<Vec<usize>>,
    zone_members: Vec<Vec<usize>>,
}

impl SpatialRep {
    pub fn new<R: Rng + ?Sized>(dim: usize, pois: &[StaticPoi], rng: &mut R) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("legacy dimension must be positive".into()));
        }
        let mut sorted = pois.to_vec();
        sorted.sort_by_key(|p| p.poi);
        if sorted.iter().enumerate().any(|(i, p)| p.poi != i) {
            return Err(Error::Ingestion("POI ids must be dense from 0".into()));
        }
        let n_cat = sorted.iter().map(|p| p.category + 1).max().unwrap_or(0);
        let n_zone = sorted.iter().map(|p| p.zone + 1).max().unwrap_or(0);
        let mut category_members = vec![Vec::new(); n_cat];
        let mut zone_members = vec![Vec::new(); n_zone];
        for p in &sorted {
            category_members[p.category].push(p.poi);
            zone_members[p.zone].push(p.poi);
        }
        let mut unit = |count: usize| -> Vec<Vec<f64>> {
            (0..count)
                .map(|_| (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect())
                .collect()
        };
        let heads = unit(sorted.len());
        let categories = unit(n_cat);
        let zones = unit(n_zone);
        let rel = [
            (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        ];
        Ok(SpatialRep {
            dim,
            users: BTreeMap::new(),
            heads,
            categories,
            zones,
            rel,
            poi_category: sorted.iter().map(|p| p.category).collect(),
            poi_zone: sorted.iter().map(|p| p.zone).collect(),
            category_members,
            zone_members,
        })
    }

    pub fn poi_count(&self) -> usize {
        self.heads.len()
    }

    pub fn zone_count(&self) -> usize {
        self.zones.len()
    }

    pub fn tail(&self, kind: TailKind, poi: usize) -> &[f64] {
        match kind {
            TailKind::Category => &self.categories[self.poi_category[poi]],
            TailKind::Zone => &self.zones[self.poi_zone[poi]],
        }
    }

    fn tail_mut(&mut self, kind: TailKind, poi: usize) -> &mut Vec<f64> {
        match kind {
            TailKind::Category => &mut self.categories[self.poi_category[poi]],
            TailKind::Zone => &mut self.zones[self.poi_zone[poi]],
        }
    }

    /// Other POIs sharing the category or zone of `poi`, with the shared tails.
    pub fn siblings(&self, poi: usize) -> Vec<(usize, Vec<TailKind>)> {
        let mut out: BTreeMap<usize, Vec<TailKind>> = BTreeMap::new();
        for &q in &self.category_members[self.poi_category[poi]] {
            if q != poi {
                out.entry(q).or_default().push(TailKind::Category);
            }
        }
        for &q in &self.zone_members[self.poi_zone[poi]] {
            if q != poi {
                out.entry(q).or_default().push(TailKind::Zone);
            }
        }
        out.into_iter().collect()
    }

    /// User vector, or the neutral `0.5` vector for an unseen user.
    pub fn user_or_neutral(&self, user: usize) -> Vec<f64> {
        self.users.get(&user).cloned().unwrap_or_else(|| vec![0.5; self.dim])
    }

    /// `concat(u, mean heads, mean relations, mean tails)`; length `4N`.
    pub fn state(&self, user: usize) -> Vec<f64> {
        legacy_state(
            &self.user_or_neutral(user),
            &self.heads,
            &self.rel,
            self.categories.iter().chain(&self.zones),
        )
    }
}

fn mean_of<'a>(vs: impl IntoIterator<Item = &'a Vec<f64>>, dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for v in vs {
        axpy(1.0, v, &mut acc);
        n += 1;
    }
    if n > 0 {
        acc.iter_mut().for_each(|x| *x /= n as f64);
    }
    acc
}

pub fn legacy_state<'a>(
    u: &[f64],
    heads: impl IntoIterator<Item = &'a Vec<f64>>,
    rels: impl IntoIterator<Item = &'a Vec<f64>>,
    tails: impl IntoIterator<Item = &'a Vec<f64>>,
) -> Vec<f64> {
    let d = u.len();
    let mut s = Vec::with_capacity(4 * d);
    s.extend_from_slice(u);
    s.extend(mean_of(heads, d));
    s.extend(mean_of(rels, d));
    s.extend(mean_of(tails, d));
    s
}

/// Parameter handles inside the store.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Ids {
    t_w1: ParamId,
    t_w2: ParamId,
    t_b: ParamId,
    u_w: ParamId,
    u_gw: ParamId,
    u_gb: ParamId,
    p_w: ParamId,
    p_gw: ParamId,
    p_gb: ParamId,
    tail_gw: ParamId,
    tail_gb: ParamId,
    sib_gw: ParamId,
    sib_gb: ParamId,
}

const PARAM_NAMES: [&str; 13] = [
    "temporal.w1",
    "temporal.w2",
    "temporal.b",
    "user.w",
    "user.gate_w",
    "user.gate_b",
    "poi.w",
    "poi.gate_w",
    "poi.gate_b",
    "tail.gate_w",
    "tail.gate_b",
    "sibling.gate_w",
    "sibling.gate_b",
];

impl Ids {
    fn resolve(store: &ParamStore) -> Result<Self> {
        let get = |n: &str| {
            store
                .id(n)
                .ok_or_else(|| Error::Format(format!("legacy checkpoint lacks {n}")))
        };
        Ok(Ids {
            t_w1: get("temporal.w1")?,
            t_w2: get("temporal.w2")?,
            t_b: get("temporal.b")?,
            u_w: get("user.w")?,
            u_gw: get("user.gate_w")?,
            u_gb: get("user.gate_b")?,
            p_w: get("poi.w")?,
            p_gw: get("poi.gate_w")?,
            p_gb: get("poi.gate_b")?,
            tail_gw: get("tail.gate_w")?,
            tail_gb: get("tail.gate_b")?,
            sib_gw: get("sibling.gate_w")?,
            sib_gb: get("sibling.gate_b")?,
        })
    }
}

fn new_params<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<ParamStore> {
    let mut s = ParamStore::new();
    let shapes = [
        (n, m),
        (3, 1),
        (n, 1),
        (n, 1),
        (1, n),
        (1, 1),
        (n, 1),
        (1, n),
        (1, 1),
        (1, n),
        (1, 1),
        (1, n),
        (1, 1),
    ];
    for (name, (r, c)) in PARAM_NAMES.iter().zip(shapes) {
        let value = if name.ends_with("_b") || *name == "temporal.b" {
            Mat::zeros(r, c)
        } else {
            uniform_mat(rng, r, c, xavier_bound(r, c))
        };
        s.add(*name, value)?;
    }
    Ok(s)
}

#[derive(Clone, Debug)]
struct TailTrace {
    kind: TailKind,
    old: Vec<f64>,
    gate: f64,
}

#[derive(Clone, Debug)]
struct SiblingTrace {
    shared: Vec<TailKind>,
    old: Vec<f64>,
    hh: Vec<f64>,
    gate: f64,
    new: Vec<f64>,
}

/// Intermediates of one visit update, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct StepTrace {
    user: usize,
    t: Mat,
    v: Vec<f64>,
    t_tilde: Vec<f64>,
    u_old: Vec<f64>,
    u_gate: f64,
    u_x: f64,
    u_new: Vec<f64>,
    h_old: Vec<f64>,
    p_gate: f64,
    p_x: f64,
    h_new: Vec<f64>,
    tails: Vec<TailTrace>,
    siblings: Vec<SiblingTrace>,
}

fn row(store: &ParamStore, id: ParamId) -> &[f64] {
    store.value(id).data()
}

fn scalar(store: &ParamStore, id: ParamId) -> f64 {
    store.value(id).get(0, 0)
}

/// Applies the update rules for `user` visiting `poi` under counts `t`.
fn forward_step(
    store: &ParamStore,
    ids: &Ids,
    rep: &mut SpatialRep,
    user: usize,
    poi: usize,
    t: Mat,
    rng: &mut ChaCha8Rng,
) -> Result<StepTrace> {
    let n = rep.dim;
    let v: Vec<f64> = t.matmul(store.value(ids.t_w2))?.into_vec();
    let t_tilde = transform_temporal(&t, store.value(ids.t_w1), store.value(ids.t_w2), store.value(ids.t_b))?;

    let u_old = match rep.users.get(&user) {
        Some(u) => u.clone(),
        None => (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
    };
    let h_old = rep.heads[poi].clone();

    let u_gate = gate(row(store, ids.u_gw), scalar(store, ids.u_gb), &u_old);
    let u_x = dot(&h_old, &t_tilde);
    let u_new = update_user(
        &u_old,
        &h_old,
        &t_tilde,
        row(store, ids.u_w),
        row(store, ids.u_gw),
        scalar(store, ids.u_gb),
    );

    let p_gate = gate(row(store, ids.p_gw), scalar(store, ids.p_gb), &h_old);
    let p_x = dot(&u_old, &t_tilde);
    let h_new = update_poi(
        &h_old,
        &u_old,
        &t_tilde,
        row(store, ids.p_w),
        row(store, ids.p_gw),
        scalar(store, ids.p_gb),
    );

    let mut tails = Vec::with_capacity(2);
    for kind in [TailKind::Category, TailKind::Zone] {
        let old = rep.tail(kind, poi).to_vec();
        let g = gate(row(store, ids.tail_gw), scalar(store, ids.tail_gb), &old);
        let new = update_tail(
            &old,
            &h_new,
            &rep.rel[kind.rel_index()],
            row(store, ids.tail_gw),
            scalar(store, ids.tail_gb),
        );
        *rep.tail_mut(kind, poi) = new;
        tails.push(TailTrace { kind, old, gate: g });
    }

    let mut siblings = Vec::new();
    for (q, shared) in rep.siblings(poi) {
        let mut hh = vec![0.0; n];
        for &k in &shared {
            let pre = sibling_preimage(rep.tail(k, poi), &rep.rel[k.rel_index()]);
            axpy(1.0 / shared.len() as f64, &pre, &mut hh);
        }
        let old = rep.heads[q].clone();
        let g = gate(row(store, ids.sib_gw), scalar(store, ids.sib_gb), &old);
        let new = update_sibling(&old, &hh, row(store, ids.sib_gw), scalar(store, ids.sib_gb));
        rep.heads[q] = new.clone();
        siblings.push(SiblingTrace {
            shared,
            old,
            hh,
            gate: g,
            new,
        });
    }
    rep.heads[poi] = h_new.clone();
    rep.users.insert(user, u_new.clone());
    Ok(StepTrace {
        user,
        t,
        v,
        t_tilde,
        u_old,
        u_gate,
        u_x,
        u_new,
        h_old,
        p_gate,
        p_x,
        h_new,
        tails,
        siblings,
    })
}

/// Accumulates `dL/dparams` for `dL/ds` where `s = rep.state(query_user)`
/// taken right after the step.
fn backward_step(
    store: &mut ParamStore,
    ids: &Ids,
    rep: &SpatialRep,
    trace: &StepTrace,
    ds: &[f64],
    query_user: usize,
) {
    let n = rep.dim;
    let g_u = &ds[..n];
    let g_h = &ds[n..2 * n];
    let g_t = &ds[3 * n..];
    let n_heads = rep.heads.len() as f64;
    let n_tails = (rep.categories.len() + rep.zones.len()) as f64;

    let mut d_tail: Vec<Vec<f64>> = trace
        .tails
        .iter()
        .map(|_| g_t.iter().map(|g| g / n_tails).collect())
        .collect();
    let tail_slot = |k: TailKind| trace.tails.iter().position(|t| t.kind == k).expect("both tails traced");

    let mut d_sib_gw = vec![0.0; n];
    let mut d_sib_gb = 0.0;
    for s in &trace.siblings {
        let dz: Vec<f64> = s
            .new
            .iter()
            .zip(g_h)
            .map(|(y, g)| g / n_heads * y * (1.0 - y))
            .collect();
        let da: f64 = dz
            .iter()
            .zip(s.old.iter().zip(&s.hh))
            .map(|(d, (o, hh))| d * (o - hh))
            .sum();
        let dpre = da * s.gate * (1.0 - s.gate);
        axpy(dpre, &s.old, &mut d_sib_gw);
        d_sib_gb += dpre;
        let share = (1.0 - s.gate) / s.shared.len() as f64;
        for &k in &s.shared {
            axpy(share, &dz, &mut d_tail[tail_slot(k)]);
        }
    }

    let mut d_h_new: Vec<f64> = g_h.iter().map(|g| g / n_heads).collect();
    let mut d_tail_gw = vec![0.0; n];
    let mut d_tail_gb = 0.0;
    for (tt, dt) in trace.tails.iter().zip(&d_tail) {
        let rel = &rep.rel[tt.kind.rel_index()];
        let da: f64 = dt
            .iter()
            .zip(tt.old.iter().zip(trace.h_new.iter().zip(rel)))
            .map(|(d, (o, (h, r)))| d * (o - (h + r)))
            .sum();
        axpy(1.0 - tt.gate, dt, &mut d_h_new);
        let dpre = da * tt.gate * (1.0 - tt.gate);
        axpy(dpre, &tt.old, &mut d_tail_gw);
        d_tail_gb += dpre;
    }

    let mut d_tt = vec![0.0; n];
    // Visited POI head.
    {
        let w = row(store, ids.p_w).to_vec();
        let dz: Vec<f64> = d_h_new
            .iter()
            .zip(&trace.h_new)
            .map(|(d, y)| d * y * (1.0 - y))
            .collect();
        let da: f64 = dz
            .iter()
            .zip(trace.h_old.iter().zip(&w))
            .map(|(d, (h, wi))| d * (h - wi * trace.p_x))
            .sum();
        let dx = (1.0 - trace.p_gate) * dot(&dz, &w);
        let dpre = da * trace.p_gate * (1.0 - trace.p_gate);
        axpy(
            (1.0 - trace.p_gate) * trace.p_x,
            &dz,
            store.grad_mut(ids.p_w).data_mut(),
        );
        axpy(dpre, &trace.h_old, store.grad_mut(ids.p_gw).data_mut());
        store.grad_mut(ids.p_gb).data_mut()[0] += dpre;
        axpy(dx, &trace.u_old, &mut d_tt);
    }
    // User vector, only when the state reads the updated user.
    if query_user == trace.user {
        let w = row(store, ids.u_w).to_vec();
        let dz: Vec<f64> = g_u.iter().zip(&trace.u_new).map(|(d, y)| d * y * (1.0 - y)).collect();
        let da: f64 = dz
            .iter()
            .zip(trace.u_old.iter().zip(&w))
            .map(|(d, (u, wi))| d * (u - wi * trace.u_x))
            .sum();
        let dx = (1.0 - trace.u_gate) * dot(&dz, &w);
        let dpre = da * trace.u_gate * (1.0 - trace.u_gate);
        axpy(
            (1.0 - trace.u_gate) * trace.u_x,
            &dz,
            store.grad_mut(ids.u_w).data_mut(),
        );
        axpy(dpre, &trace.u_old, store.grad_mut(ids.u_gw).data_mut());
        store.grad_mut(ids.u_gb).data_mut()[0] += dpre;
        axpy(dx, &trace.h_old, &mut d_tt);
    }

    axpy(1.0, &d_sib_gw, store.grad_mut(ids.sib_gw).data_mut());
    store.grad_mut(ids.sib_gb).data_mut()[0] += d_sib_gb;
    axpy(1.0, &d_tail_gw, store.grad_mut(ids.tail_gw).data_mut());
    store.grad_mut(ids.tail_gb).data_mut()[0] += d_tail_gb;

    // Temporal transform.
    let d_tau: Vec<f64> = d_tt
        .iter()
        .zip(&trace.t_tilde)
        .map(|(d, y)| d * y * (1.0 - y))
        .collect();
    axpy(1.0, &d_tau, store.grad_mut(ids.t_b).data_mut());
    let m = trace.v.len();
    let w1 = store.value(ids.t_w1).clone();
    {
        let gw1 = store.grad_mut(ids.t_w1);
        for i in 0..n {
            for j in 0..m {
                let g = gw1.get(i, j) + d_tau[i] * trace.v[j];
                gw1.set(i, j, g);
            }
        }
    }
    let dv: Vec<f64> = (0..m).map(|j| (0..n).map(|i| w1.get(i, j) * d_tau[i]).sum()).collect();
    let gw2 = store.grad_mut(ids.t_w2);
    for c in 0..3 {
        let g: f64 = (0..m).map(|j| trace.t.get(j, c) * dv[j]).sum();
        gw2.set(c, 0, gw2.get(c, 0) + g);
    }
}

/// Representation, parameters and the temporal tracker of the baseline.
#[derive(Clone, Debug)]
pub struct LegacyModel {
    params: ParamStore,
    ids: Ids,
    rep: SpatialRep,
    tracker: TemporalTracker,
    rng: ChaCha8Rng,
    last: Option<StepTrace>,
}

impl LegacyModel {
    pub fn new(dim: usize, pois: &[StaticPoi], bin_secs: i64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rep = SpatialRep::new(dim, pois, &mut rng)?;
        let params = new_params(dim, rep.zone_count().max(1), &mut rng)?;
        let ids = Ids::resolve(&params)?;
        let tracker = TemporalTracker::new(rep.zone_count().max(1), bin_secs);
        Ok(LegacyModel {
            params,
            ids,
            rep,
            tracker,
            rng,
            last: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.rep.dim
    }

    pub fn state_dim(&self) -> usize {
        4 * self.rep.dim
    }

    pub fn rep(&self) -> &SpatialRep {
        &self.rep
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn tracker(&self) -> &TemporalTracker {
        &self.tracker
    }

    /// Applies the update rules for one real visit, then records it in the
    /// temporal tracker.
    pub fn observe(&mut self, user: usize, poi: usize, time: i64) -> Result<()> {
        if poi >= self.rep.poi_count() {
            return Err(Error::Lookup(format!("unknown POI {poi}")));
        }
        let t = self.tracker.context_at(time);
        let trace = forward_step(&self.params, &self.ids, &mut self.rep, user, poi, t, &mut self.rng)?;
        let zone = self.rep.poi_zone[poi];
        self.tracker.record(user, zone, time);
        self.last = Some(trace);
        Ok(())
    }

    pub fn state(&self, user: usize) -> Vec<f64> {
        self.rep.state(user)
    }

    /// Checks the gradient of `weights . state(query_user)` after observing
    /// `(user, poi, time)` against central differences, over every update
    /// rule's weights. The model itself is left untouched.
    pub fn check_step_gradients(
        &self,
        query_user: usize,
        user: usize,
        poi: usize,
        time: i64,
        weights: &[f64],
        check: &GradCheck,
    ) -> Result<GradCheckReport> {
        if weights.len() != self.state_dim() {
            return Err(Error::Dimension {
                op: "legacy gradient check",
                left: (1, weights.len()),
                right: (1, self.state_dim()),
            });
        }
        let t = self.tracker.context_at(time);
        let mut rep = self.rep.clone();
        let mut rng = self.rng.clone();
        let trace = forward_step(&self.params, &self.ids, &mut rep, user, poi, t.clone(), &mut rng)?;
        let mut store = self.params.clone();
        store.zero_grads();
        backward_step(&mut store, &self.ids, &rep, &trace, weights, query_user);
        let ids = self.ids;
        Ok(check.run(&mut store, |s| {
            let mut r = self.rep.clone();
            let mut g = self.rng.clone();
            match forward_step(s, &ids, &mut r, user, poi, t.clone(), &mut g) {
                Ok(_) => dot(&r.state(query_user), weights),
                Err(_) => f64::NAN,
            }
        }))
    }

    /// One SGD step on the update-rule parameters along `dL/ds`, through the
    /// most recent visit update.
    pub fn apply_feedback(&mut self, ds: &[f64], query_user: usize, lr: f64) -> Result<()> {
        if ds.len() != self.state_dim() {
            return Err(Error::Dimension {
                op: "legacy feedback",
                left: (1, ds.len()),
                right: (1, self.state_dim()),
            });
        }
        let Some(trace) = self.last.as_ref() else {
            return Ok(());
        };
        self.params.zero_grads();
        backward_step(&mut self.params, &self.ids, &self.rep, trace, ds, query_user);
        self.params.sgd_step(lr)
    }

    pub fn write_to<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = self.params.clone();
        let rows = |vs: &[Vec<f64>], d: usize| {
            let mut m = Mat::zeros(vs.len(), d);
            for (i, v) in vs.iter().enumerate() {
                m.row_mut(i).copy_from_slice(v);
            }
            m
        };
        let d = self.rep.dim;
        let add =
            |out: &mut ParamStore, name: &str, m: Mat| out.add(name, m).map(|_| ()).map_err(std::io::Error::other);
        add(&mut out, "rep.heads", rows(&self.rep.heads, d))?;
        add(&mut out, "rep.categories", rows(&self.rep.categories, d))?;
        add(&mut out, "rep.zones", rows(&self.rep.zones, d))?;
        add(&mut out, "rep.rel", rows(&self.rep.rel, d))?;
        let users: Vec<Vec<f64>> = self.rep.users.values().cloned().collect();
        let ids: Vec<f64> = self.rep.users.keys().map(|&u| u as f64).collect();
        add(&mut out, "rep.users", rows(&users, d))?;
        add(&mut out, "rep.user_ids", Mat::column_vector(&ids))?;
        write_params(&out, w)
    }

    /// Restores parameters and representation written by [`Self::write_to`]
    /// onto a model built for the same POI layout.
    pub fn read_into<R: Read>(&mut self, r: R) -> Result<()> {
        let store = read_params(r)?;
        let get = |n: &str| {
            store
                .id(n)
                .map(|id| store.value(id).clone())
                .ok_or_else(|| Error::Format(format!("legacy checkpoint lacks {n}")))
        };
        let d = self.rep.dim;
        let rows_of = |m: Mat, want: usize, what: &str| -> Result<Vec<Vec<f64>>> {
            if m.cols() != d || m.rows() != want {
                return Err(Error::Compatibility(format!("legacy {what} shape {:?}", m.shape())));
            }
            Ok((0..m.rows()).map(|i| m.row(i).to_vec()).collect())
        };
        let heads = rows_of(get("rep.heads")?, self.rep.heads.len(), "heads")?;
        let categories = rows_of(get("rep.categories")?, self.rep.categories.len(), "categories")?;
        let zones = rows_of(get("rep.zones")?, self.rep.zones.len(), "zones")?;
        let rel = rows_of(get("rep.rel")?, 2, "relations")?;
        let ids_m = get("rep.user_ids")?;
        let users = rows_of(get("rep.users")?, ids_m.rows(), "users")?;
        let mut params = ParamStore::new();
        for name in PARAM_NAMES {
            let v = get(name)?;
            if v.shape() != self.params.value(self.params.id(name).expect("own param")).shape() {
                return Err(Error::Compatibility(format!(
                    "legacy parameter {name} shape {:?}",
                    v.shape()
                )));
            }
            params.add(name, v)?;
        }
        self.ids = Ids::resolve(&params)?;
        self.params = params;
        self.rep.heads = heads;
        self.rep.categories = categories;
        self.rep.zones = zones;
        self.rep.rel = [rel[0].clone(), rel[1].clone()];
        self.rep.users = ids_m.data().iter().map(|&u| u as usize).zip(users).collect();
        self.last = None;
        Ok(())
    }
}

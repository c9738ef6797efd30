use std::collections::BTreeSet;

use rand::Rng;

use super::EmbeddingTable;
use crate::kgstore::{ContextSubgraph, ObjectId};
use crate::numkit::{axpy, dot, sigmoid, uniform_mat, xavier_bound, Mat, ParamId, ParamStore};
use crate::{Error, Result};

/// GCN layers, the attention scale and the gate vector.
///
/// Attention scores are `scale * (z_i . o)` where `o` is the raw vector of
/// the queried object; the gate is `o* = sigma(gamma) * o + (1 - sigma(gamma)) * cx`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextEncoder {
    dim: usize,
    store: ParamStore,
    layers: Vec<ParamId>,
    attention: ParamId,
    gate: ParamId,
}

impl ContextEncoder {
    pub fn new<R: Rng + ?Sized>(dim: usize, layers: usize, rng: &mut R) -> Result<Self> {
        if layers == 0 {
            return Err(Error::Config("the context encoder needs at least one GCN layer".into()));
        }
        let mut store = ParamStore::new();
        let bound = xavier_bound(dim, dim);
        let layer_ids = (0..layers)
            .map(|k| store.add(format!("gcn.{k}"), uniform_mat(rng, dim, dim, bound)))
            .collect::<Result<Vec<_>>>()?;
        let attention = store.add("attention.scale", Mat::from_rows(&[[1.0]]))?;
        let gate = store.add("gate", Mat::zeros(1, dim))?;
        Ok(ContextEncoder {
            dim,
            store,
            layers: layer_ids,
            attention,
            gate,
        })
    }

    pub fn from_store(store: ParamStore) -> Result<Self> {
        let missing = |n: &str| Error::Format(format!("encoder checkpoint lacks {n}"));
        let gate = store.id("gate").ok_or_else(|| missing("gate"))?;
        let attention = store.id("attention.scale").ok_or_else(|| missing("attention.scale"))?;
        let dim = store.value(gate).cols();
        let mut layers = Vec::new();
        while let Some(id) = store.id(&format!("gcn.{}", layers.len())) {
            if store.value(id).shape() != (dim, dim) {
                return Err(Error::Format(format!("gcn.{} has the wrong shape", layers.len())));
            }
            layers.push(id);
        }
        if layers.is_empty() {
            return Err(missing("gcn.0"));
        }
        Ok(ContextEncoder {
            dim,
            store,
            layers,
            attention,
            gate,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub(crate) fn replace_store(&mut self, store: ParamStore) {
        self.store = store;
    }

    pub fn layer(&self, k: usize) -> &Mat {
        self.store.value(self.layers[k])
    }

    pub fn attention_scale(&self) -> f64 {
        self.store.value(self.attention).get(0, 0)
    }

    pub fn gamma(&self) -> &[f64] {
        self.store.value(self.gate).data()
    }

    pub fn set_gamma(&mut self, gamma: &[f64]) {
        self.store.value_mut(self.gate).data_mut().copy_from_slice(gamma);
    }
}

/// `D^-1/2 (A + I) D^-1/2`.
pub fn normalized_adjacency(adjacency: &Mat) -> Mat {
    let n = adjacency.rows();
    let mut a_hat = adjacency.clone();
    for i in 0..n {
        a_hat.set(i, i, a_hat.get(i, i) + 1.0);
    }
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / a_hat.row(i).iter().sum::<f64>().sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            let v = a_hat.get(i, j) * inv_sqrt[i] * inv_sqrt[j];
            a_hat.set(i, j, v);
        }
    }
    a_hat
}

/// Forward pass of the context encoder, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct ContextForward {
    pub nodes: Vec<ObjectId>,
    norm: Mat,
    normed_inputs: Vec<Mat>,
    pre: Vec<Mat>,
    z: Mat,
    object: Vec<f64>,
    scale: f64,
    dots: Vec<f64>,
    alpha: Vec<f64>,
    cx: Vec<f64>,
}

impl ContextForward {
    pub fn cx(&self) -> &[f64] {
        &self.cx
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn final_layer(&self) -> &Mat {
        &self.z
    }

    pub fn object(&self) -> &[f64] {
        &self.object
    }
}

/// Encodes the context subgraph of `ctx.nodes[0]` into `cx(o)`.
pub fn encode_context(ctx: &ContextSubgraph, enc: &ContextEncoder, table: &EmbeddingTable) -> Result<ContextForward> {
    if table.dim() != enc.dim() {
        return Err(Error::Config(format!(
            "embedding dimension {} does not match encoder dimension {}",
            table.dim(),
            enc.dim()
        )));
    }
    let n = ctx.nodes.len();
    if n == 0 {
        return Err(Error::Consistency("empty context".into()));
    }
    let d = enc.dim();
    let mut x = Mat::zeros(n, d);
    for (i, obj) in ctx.nodes.iter().enumerate() {
        let v = table
            .vector(*obj)
            .ok_or_else(|| Error::Lookup(format!("{obj} has no embedding")))?;
        x.row_mut(i).copy_from_slice(v);
    }
    let object = x.row(0).to_vec();
    let norm = normalized_adjacency(&ctx.adjacency);
    let mut h = x;
    let mut normed_inputs = Vec::with_capacity(enc.layer_count());
    let mut pre = Vec::with_capacity(enc.layer_count());
    for k in 0..enc.layer_count() {
        let nh = norm.matmul(&h)?;
        let p = nh.matmul(enc.layer(k))?;
        h = p.map(|v| v.max(0.0));
        normed_inputs.push(nh);
        pre.push(p);
    }
    let z = h;
    let scale = enc.attention_scale();
    let dots: Vec<f64> = (0..n).map(|i| dot(z.row(i), &object)).collect();
    let max = dots.iter().map(|s| s * scale).fold(f64::NEG_INFINITY, f64::max);
    let mut alpha: Vec<f64> = dots.iter().map(|s| (s * scale - max).exp()).collect();
    let total: f64 = alpha.iter().sum();
    alpha.iter_mut().for_each(|a| *a /= total);
    let mut cx = vec![0.0; d];
    for (i, &a) in alpha.iter().enumerate() {
        axpy(a, z.row(i), &mut cx);
    }
    Ok(ContextForward {
        nodes: ctx.nodes.clone(),
        norm,
        normed_inputs,
        pre,
        z,
        object,
        scale,
        dots,
        alpha,
        cx,
    })
}

/// `o* = sigma(gamma) * o + (1 - sigma(gamma)) * cx`.
pub fn joint_embed(o: &[f64], cx: &[f64], gamma: &[f64]) -> Vec<f64> {
    o.iter()
        .zip(cx)
        .zip(gamma)
        .map(|((&o, &c), &g)| {
            let s = sigmoid(g);
            s * o + (1.0 - s) * c
        })
        .collect()
}

/// Forward pass of one joint embedding.
#[derive(Clone, Debug)]
pub struct JointForward {
    pub context: ContextForward,
    gate: Vec<f64>,
    out: Vec<f64>,
}

impl JointForward {
    pub fn output(&self) -> &[f64] {
        &self.out
    }

    pub fn into_output(self) -> Vec<f64> {
        self.out
    }
}

pub fn joint_forward(ctx: &ContextSubgraph, enc: &ContextEncoder, table: &EmbeddingTable) -> Result<JointForward> {
    let context = encode_context(ctx, enc, table)?;
    let gate: Vec<f64> = enc.gamma().iter().map(|&g| sigmoid(g)).collect();
    let out = joint_embed(context.object(), context.cx(), enc.gamma());
    Ok(JointForward { context, gate, out })
}

/// Where gradients go during a backward pass.
pub(crate) struct GradSink<'a> {
    pub encoder: &'a mut ContextEncoder,
    pub train_encoder: bool,
    pub table: &'a mut EmbeddingTable,
    /// When set, only these objects accumulate table gradients.
    pub trainable: Option<&'a BTreeSet<ObjectId>>,
}

impl GradSink<'_> {
    fn table_grad(&mut self, obj: ObjectId, g: &[f64]) {
        if let Some(set) = self.trainable {
            if !set.contains(&obj) {
                return;
            }
        }
        if let Some(slot) = self.table.grad_mut(obj) {
            axpy(1.0, g, slot);
        }
    }
}

impl JointForward {
    /// Accumulates gradients for `dL/do* = delta`.
    pub(crate) fn backward(&self, delta: &[f64], sink: &mut GradSink<'_>) -> Result<()> {
        let cx = self.context.cx();
        let o = self.context.object();
        let d = delta.len();
        let mut d_object = vec![0.0; d];
        let mut d_cx = vec![0.0; d];
        if sink.train_encoder {
            let gate_id = sink.encoder.gate;
            let g = sink.encoder.store.grad_mut(gate_id).data_mut();
            for j in 0..d {
                let s = self.gate[j];
                g[j] += delta[j] * (o[j] - cx[j]) * s * (1.0 - s);
            }
        }
        for j in 0..d {
            d_object[j] = delta[j] * self.gate[j];
            d_cx[j] = delta[j] * (1.0 - self.gate[j]);
        }
        self.context.backward(&d_cx, d_object, sink)
    }
}

impl ContextForward {
    pub(crate) fn backward(&self, d_cx: &[f64], mut d_object: Vec<f64>, sink: &mut GradSink<'_>) -> Result<()> {
        let n = self.nodes.len();
        let d = d_cx.len();
        let mut dz = Mat::zeros(n, d);
        let d_alpha: Vec<f64> = (0..n).map(|i| dot(d_cx, self.z.row(i))).collect();
        let mean: f64 = self.alpha.iter().zip(&d_alpha).map(|(a, g)| a * g).sum();
        let mut d_scale = 0.0;
        for i in 0..n {
            axpy(self.alpha[i], d_cx, dz.row_mut(i));
            let d_score = self.alpha[i] * (d_alpha[i] - mean);
            d_scale += d_score * self.dots[i];
            axpy(d_score * self.scale, &self.object, dz.row_mut(i));
            axpy(d_score * self.scale, self.z.row(i), &mut d_object);
        }
        if sink.train_encoder {
            let id = sink.encoder.attention;
            let g = sink.encoder.store.grad_mut(id);
            g.set(0, 0, g.get(0, 0) + d_scale);
        }
        let mut dh = dz;
        for k in (0..self.pre.len()).rev() {
            let mut dp = dh;
            for (g, &p) in dp.data_mut().iter_mut().zip(self.pre[k].data()) {
                if p <= 0.0 {
                    *g = 0.0;
                }
            }
            let w_id = sink.encoder.layers[k];
            if sink.train_encoder {
                let gw = self.normed_inputs[k].t_matmul(&dp)?;
                sink.encoder.store.grad_mut(w_id).add_assign(&gw)?;
            }
            let tmp = dp.matmul_t(sink.encoder.store.value(w_id))?;
            dh = self.norm.matmul(&tmp)?;
        }
        for (i, obj) in self.nodes.iter().enumerate() {
            if i == 0 {
                let mut row = dh.row(0).to_vec();
                axpy(1.0, &d_object, &mut row);
                sink.table_grad(*obj, &row);
            } else {
                sink.table_grad(*obj, dh.row(i));
            }
        }
        Ok(())
    }
}

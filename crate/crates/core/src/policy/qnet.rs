use rand::Rng;

use crate::numkit::{uniform_mat, xavier_bound, Mat, ParamId, ParamStore};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QNetMode {
    /// Scores one `concat(state, action)` row at a time.
    Pairwise { state_dim: usize, action_dim: usize },
    /// Maps a state to one score per action of a fixed action space.
    Vanilla { state_dim: usize, actions: usize },
}

impl QNetMode {
    pub fn input_dim(self) -> usize {
        match self {
            QNetMode::Pairwise { state_dim, action_dim } => state_dim + action_dim,
            QNetMode::Vanilla { state_dim, .. } => state_dim,
        }
    }

    pub fn output_dim(self) -> usize {
        match self {
            QNetMode::Pairwise { .. } => 1,
            QNetMode::Vanilla { actions, .. } => actions,
        }
    }

    pub fn state_dim(self) -> usize {
        match self {
            QNetMode::Pairwise { state_dim, .. } | QNetMode::Vanilla { state_dim, .. } => state_dim,
        }
    }
}

/// Fully connected network with relu hidden layers and a linear head.
#[derive(Clone, Debug, PartialEq)]
pub struct QNet {
    mode: QNetMode,
    store: ParamStore,
    layers: Vec<(ParamId, ParamId)>,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    inputs: Vec<Mat>,
    pre: Vec<Mat>,
}

impl QNet {
    pub fn new<R: Rng + ?Sized>(mode: QNetMode, hidden: &[usize], rng: &mut R) -> Result<Self> {
        if mode.input_dim() == 0 || mode.output_dim() == 0 || hidden.contains(&0) {
            return Err(Error::Config(format!(
                "degenerate network shape {mode:?} with hidden {hidden:?}"
            )));
        }
        let mut widths = vec![mode.input_dim()];
        widths.extend_from_slice(hidden);
        widths.push(mode.output_dim());
        let mut store = ParamStore::new();
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (k, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let w = store.add(
                format!("fc.{k}.w"),
                uniform_mat(rng, fan_in, fan_out, xavier_bound(fan_in, fan_out)),
            )?;
            let b = store.add(format!("fc.{k}.b"), Mat::zeros(1, fan_out))?;
            layers.push((w, b));
        }
        Ok(QNet { mode, store, layers })
    }

    /// Rebuilds a network from a checkpointed store; shapes must chain.
    pub fn from_store(store: ParamStore, pairwise_state_dim: Option<usize>) -> Result<Self> {
        let mut layers = Vec::new();
        loop {
            let k = layers.len();
            match (store.id(&format!("fc.{k}.w")), store.id(&format!("fc.{k}.b"))) {
                (Some(w), Some(b)) => layers.push((w, b)),
                _ => break,
            }
        }
        if layers.is_empty() {
            return Err(Error::Format("network checkpoint has no layers".into()));
        }
        for (k, &(w, b)) in layers.iter().enumerate() {
            let (wr, wc) = store.value(w).shape();
            if store.value(b).shape() != (1, wc) {
                return Err(Error::Format(format!("fc.{k}.b does not match fc.{k}.w")));
            }
            if k > 0 && store.value(layers[k - 1].0).cols() != wr {
                return Err(Error::Format(format!("fc.{k}.w does not chain")));
            }
        }
        let input = store.value(layers[0].0).rows();
        let output = store.value(layers[layers.len() - 1].0).cols();
        let mode = match pairwise_state_dim {
            Some(state_dim) if output == 1 && state_dim < input => QNetMode::Pairwise {
                state_dim,
                action_dim: input - state_dim,
            },
            Some(_) => return Err(Error::Compatibility("checkpoint is not a pairwise network".into())),
            None => QNetMode::Vanilla {
                state_dim: input,
                actions: output,
            },
        };
        Ok(QNet { mode, store, layers })
    }

    pub fn mode(&self) -> QNetMode {
        self.mode
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

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn head_bias_mut(&mut self) -> &mut Mat {
        let (_, b) = self.layers[self.layers.len() - 1];
        self.store.value_mut(b)
    }

    pub fn head_weight_mut(&mut self) -> &mut Mat {
        let (w, _) = self.layers[self.layers.len() - 1];
        self.store.value_mut(w)
    }

    /// Forward pass over a batch of input rows.
    pub fn forward(&self, x: &Mat) -> Result<(Mat, MlpTrace)> {
        if x.cols() != self.mode.input_dim() {
            return Err(Error::Dimension {
                op: "qnet forward",
                left: x.shape(),
                right: (x.rows(), self.mode.input_dim()),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (k, &(w, b)) in self.layers.iter().enumerate() {
            let mut p = h.matmul(self.store.value(w))?;
            let bias = self.store.value(b).row(0);
            for r in 0..p.rows() {
                p.row_mut(r).iter_mut().zip(bias).for_each(|(v, b)| *v += b);
            }
            inputs.push(h);
            h = if k == last { p.clone() } else { p.map(|v| v.max(0.0)) };
            pre.push(p);
        }
        Ok((h, MlpTrace { inputs, pre }))
    }

    pub fn predict(&self, x: &Mat) -> Result<Mat> {
        Ok(self.forward(x)?.0)
    }

    /// Accumulates parameter gradients for `dL/dout` and returns `dL/dx`.
    pub fn backward(&mut self, trace: &MlpTrace, d_out: &Mat) -> Result<Mat> {
        let last = self.layers.len() - 1;
        let mut g = d_out.clone();
        for k in (0..self.layers.len()).rev() {
            if k != last {
                for (gv, &p) in g.data_mut().iter_mut().zip(trace.pre[k].data()) {
                    if p <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let (w, b) = self.layers[k];
            let dw = trace.inputs[k].t_matmul(&g)?;
            self.store.grad_mut(w).add_assign(&dw)?;
            let db = self.store.grad_mut(b);
            for r in 0..g.rows() {
                db.row_mut(0).iter_mut().zip(g.row(r)).for_each(|(d, v)| *d += v);
            }
            g = g.matmul_t(self.store.value(w))?;
        }
        Ok(g)
    }
}

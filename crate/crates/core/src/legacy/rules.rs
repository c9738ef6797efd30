//! The update rules as pure functions over plain vectors.

use crate::numkit::{dot, sigmoid, Mat};
use crate::{Error, Result};

/// `sigma(w . x + b)`.
pub fn gate(w: &[f64], b: f64, x: &[f64]) -> f64 {
    sigmoid(dot(w, x) + b)
}

/// `a * old + (1 - a) * new`, per coordinate.
pub fn blend(a: f64, old: &[f64], new: &[f64]) -> Vec<f64> {
    old.iter().zip(new).map(|(o, n)| a * o + (1.0 - a) * n).collect()
}

/// `sigma(W1 . T . W2 + b)` with `W1: N x M`, `T: M x 3`, `W2: 3 x 1`,
/// `b: N x 1`.
pub fn transform_temporal(t: &Mat, w1: &Mat, w2: &Mat, b: &Mat) -> Result<Vec<f64>> {
    let (n, m) = w1.shape();
    if t.shape() != (m, 3) || w2.shape() != (3, 1) || b.shape() != (n, 1) {
        return Err(Error::Config(format!(
            "temporal shapes W1 {:?}, T {:?}, W2 {:?}, b {:?} do not chain",
            w1.shape(),
            t.shape(),
            w2.shape(),
            b.shape()
        )));
    }
    let v = t.matmul(w2)?;
    let tau = w1.matmul(&v)?;
    Ok((0..n).map(|i| sigmoid(tau.get(i, 0) + b.get(i, 0))).collect())
}

/// `sigma(a * old + (1 - a) * w * (partner . context))` with the gate read
/// from `old`. Shared by the user rule and the visited-POI rule.
pub fn gated_interaction(
    old: &[f64],
    partner: &[f64],
    context: &[f64],
    w: &[f64],
    gate_w: &[f64],
    gate_b: f64,
) -> Vec<f64> {
    let a = gate(gate_w, gate_b, old);
    let x = dot(partner, context);
    old.iter()
        .zip(w)
        .map(|(o, wi)| sigmoid(a * o + (1.0 - a) * wi * x))
        .collect()
}

/// User rule: the interaction is between the visited POI head and the
/// temporal context.
pub fn update_user(u: &[f64], h_poi: &[f64], t_tilde: &[f64], w_u: &[f64], gate_w: &[f64], gate_b: f64) -> Vec<f64> {
    gated_interaction(u, h_poi, t_tilde, w_u, gate_w, gate_b)
}

/// Visited-POI rule, driven by the user's pre-update vector.
pub fn update_poi(h: &[f64], u: &[f64], t_tilde: &[f64], w_p: &[f64], gate_w: &[f64], gate_b: f64) -> Vec<f64> {
    gated_interaction(h, u, t_tilde, w_p, gate_w, gate_b)
}

/// Tail rule: blend the old tail towards `h' + rel`.
pub fn update_tail(t: &[f64], h_new: &[f64], rel: &[f64], gate_w: &[f64], gate_b: f64) -> Vec<f64> {
    let a = gate(gate_w, gate_b, t);
    let target: Vec<f64> = h_new.iter().zip(rel).map(|(h, r)| h + r).collect();
    blend(a, t, &target)
}

/// Pre-image of a head under the translation: `t - rel`.
pub fn sibling_preimage(t: &[f64], rel: &[f64]) -> Vec<f64> {
    t.iter().zip(rel).map(|(t, r)| t - r).collect()
}

/// Sibling rule: `sigma(a * h + (1 - a) * hh)`.
pub fn update_sibling(h: &[f64], hh: &[f64], gate_w: &[f64], gate_b: f64) -> Vec<f64> {
    let a = gate(gate_w, gate_b, h);
    blend(a, h, hh).into_iter().map(sigmoid).collect()
}

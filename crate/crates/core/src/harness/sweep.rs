//! Reward-weight sweep over the simplex.

use std::fmt::Write as _;

use super::config::RunConfig;
use super::ingest::Dataset;
use super::{evaluate_session, train_on};
use crate::reward::WordVectors;
use crate::Result;

pub const SWEEP_HEADER: &str = "lambda_d,lambda_c,lambda_p,prec_cat,rec_cat,avg_sim,avg_dist_km";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub lambda_d: f64,
    pub lambda_c: f64,
    pub lambda_p: f64,
    pub prec_cat: f64,
    pub rec_cat: f64,
    pub avg_sim: f64,
    pub avg_dist_km: f64,
}

/// Every `(i, j, steps - i - j) / steps`, `i` outer, `j` inner.
pub fn simplex_grid(steps: usize) -> Vec<(f64, f64, f64)> {
    let n = steps.max(1);
    let mut out = Vec::with_capacity((n + 1) * (n + 2) / 2);
    for i in 0..=n {
        for j in 0..=(n - i) {
            let d = i as f64 / n as f64;
            let c = j as f64 / n as f64;
            out.push((d, c, (n - i - j) as f64 / n as f64));
        }
    }
    out
}

/// Trains and evaluates once per grid point, identical seed each time.
pub fn sweep_reward(config: &RunConfig, data: &Dataset, words: &WordVectors, steps: usize) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (d, c, p) in simplex_grid(steps) {
        let mut cfg = config.clone();
        cfg.lambda_d = d;
        cfg.lambda_c = c;
        cfg.lambda_p = p;
        let mut trained = train_on(&cfg, data, words.clone())?;
        let eval = evaluate_session(&mut trained.session, data, None)?;
        rows.push(SweepRow {
            lambda_d: d,
            lambda_c: c,
            lambda_p: p,
            prec_cat: eval.report.prec_cat,
            rec_cat: eval.report.rec_cat,
            avg_sim: eval.report.avg_sim,
            avg_dist_km: eval.report.avg_dist_km,
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.lambda_d, r.lambda_c, r.lambda_p, r.prec_cat, r.rec_cat, r.avg_sim, r.avg_dist_km
        );
    }
    s
}

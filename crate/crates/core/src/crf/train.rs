//! L2-regularized maximum likelihood training with L-BFGS.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::model::{CrfModel, Instance, Params};

/// Instances per gradient work unit. Fixed so the reduction order (and so
/// the trained model) does not depend on the number of worker threads.
const CHUNK: usize = 64;
const HISTORY: usize = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub l2: f64,
    pub max_iters: usize,
    /// Stop when the relative objective change falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2: 1.0,
            max_iters: 200,
            tol: 1e-5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::InvalidArgument("l2 must be a nonnegative number".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn from_echo(line: &str) -> Option<TrainConfig> {
        let mut cfg = TrainConfig::default();
        for part in line.split_whitespace() {
            let (k, v) = part.split_once('=')?;
            match k {
                "l2" => cfg.l2 = v.parse().ok()?,
                "max_iters" => cfg.max_iters = v.parse().ok()?,
                "tol" => cfg.tol = v.parse().ok()?,
                "seed" => cfg.seed = v.parse().ok()?,
                _ => return None,
            }
        }
        Some(cfg)
    }
}

/// Objective value after each accepted step.
#[derive(Clone, Debug, Default, Serialize)]
pub struct TrainLog {
    pub objectives: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl TrainLog {
    pub fn final_objective(&self) -> f64 {
        self.objectives.last().copied().unwrap_or(f64::NAN)
    }
}

/// Regularized log-likelihood `sum log p(y|x) - l2/2 ||w||^2` and gradient.
pub(crate) fn objective(params: Params<'_>, batch: &[Instance], l2: f64) -> (f64, Vec<f64>) {
    let dim = params.values.len();
    let partial: Vec<(f64, Vec<f64>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; dim];
            let ll: f64 = chunk.iter().map(|inst| params.accumulate(inst, &mut g)).sum();
            (ll, g)
        })
        .collect();
    let mut ll = 0.0;
    let mut grad = vec![0.0; dim];
    for (l, g) in partial {
        ll += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    if l2 > 0.0 {
        for (g, w) in grad.iter_mut().zip(params.values) {
            ll -= 0.5 * l2 * w * w;
            *g -= l2 * w;
        }
    }
    (ll, grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits the model's weights on `data`. Features are taken from the model's
/// alphabet; the starting point is the model's current parameters.
pub fn fit(model: &mut CrfModel, data: &[Instance], cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Validation("no training data".into()));
    }
    for inst in data {
        if inst.labels.len() != inst.features.len() || inst.labels.iter().any(|&y| y >= model.n_labels()) {
            return Err(Error::InvalidArgument("malformed training instance".into()));
        }
    }
    let (n_labels, n_features) = (model.n_labels(), model.n_features());
    let eval = |x: &[f64]| -> (f64, Vec<f64>) {
        let p = Params {
            n_labels,
            n_features,
            values: x,
        };
        // Minimize the negated objective.
        let (ll, mut g) = objective(p, data, cfg.l2);
        g.iter_mut().for_each(|v| *v = -*v);
        (-ll, g)
    };

    let mut x = model.params().to_vec();
    let (mut f, mut g) = eval(&x);
    if !f.is_finite() {
        return Err(Error::Numerical("initial objective is not finite".into()));
    }
    let mut log = TrainLog {
        objectives: vec![-f],
        ..TrainLog::default()
    };
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();

    for iter in 0..cfg.max_iters {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm < 1e-10 {
            log.converged = true;
            break;
        }

        // Two-loop recursion for d = -H g.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push((rho, a));
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y), (rho, a)) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            s_hist.clear();
            y_hist.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }

        // Backtracking line search with the Armijo condition.
        let mut step = if s_hist.is_empty() { 1.0 / gnorm.max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..50 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (fnew, gnew) = eval(&xn);
            if fnew.is_finite() && fnew <= f + 1e-4 * step * slope {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            log.converged = true;
            break;
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 {
            if s_hist.len() == HISTORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        let rel = (f - fnew).abs() / f.abs().max(fnew.abs()).max(1.0);
        x = xn;
        f = fnew;
        g = gnew;
        log.objectives.push(-f);
        log.iterations = iter + 1;
        if rel < cfg.tol {
            log.converged = true;
            break;
        }
    }

    model.set_params(x);
    model.set_config(cfg.clone());
    Ok(log)
}

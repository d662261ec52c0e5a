use std::collections::HashMap;
use std::fmt::Write as _;

use crate::{Error, Result};

use super::train::TrainConfig;

pub(crate) const MODEL_HEADER: &str = "nestrec-crf v1";

/// A sentence encoded against a model's feature alphabet. Features the
/// model has never seen are dropped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Instance {
    pub features: Vec<Vec<usize>>,
    pub labels: Vec<usize>,
}

impl Instance {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Borrowed view of the parameters: emission weights laid out
/// `[feature * n_labels + label]` followed by transitions
/// `[prev * n_labels + curr]`.
#[derive(Clone, Copy)]
pub(crate) struct Params<'a> {
    pub n_labels: usize,
    pub n_features: usize,
    pub values: &'a [f64],
}

impl<'a> Params<'a> {
    pub fn transition(&self, prev: usize, cur: usize) -> f64 {
        self.values[self.n_features * self.n_labels + prev * self.n_labels + cur]
    }

    pub fn transition_offset(&self) -> usize {
        self.n_features * self.n_labels
    }

    /// Row-major `T x L` emission scores.
    pub fn emissions(&self, features: &[Vec<usize>]) -> Vec<f64> {
        let l = self.n_labels;
        let mut out = vec![0.0; features.len() * l];
        for (t, feats) in features.iter().enumerate() {
            let row = &mut out[t * l..(t + 1) * l];
            for &f in feats {
                let w = &self.values[f * l..(f + 1) * l];
                for (r, w) in row.iter_mut().zip(w) {
                    *r += w;
                }
            }
        }
        out
    }

    pub fn sequence_score(&self, features: &[Vec<usize>], labels: &[usize]) -> f64 {
        let emit = self.emissions(features);
        let l = self.n_labels;
        let mut s = 0.0;
        for (t, &y) in labels.iter().enumerate() {
            s += emit[t * l + y];
            if t > 0 {
                s += self.transition(labels[t - 1], y);
            }
        }
        s
    }

    /// Log-space forward and backward tables and the log partition.
    pub fn forward_backward(&self, emit: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let l = self.n_labels;
        let n = emit.len() / l;
        let mut alpha = vec![0.0; n * l];
        let mut beta = vec![0.0; n * l];
        if n == 0 {
            return (alpha, beta, 0.0);
        }
        alpha[..l].copy_from_slice(&emit[..l]);
        let mut buf = vec![0.0; l];
        for t in 1..n {
            for y in 0..l {
                for (p, b) in buf.iter_mut().enumerate() {
                    *b = alpha[(t - 1) * l + p] + self.transition(p, y);
                }
                alpha[t * l + y] = log_sum_exp(&buf) + emit[t * l + y];
            }
        }
        for t in (0..n - 1).rev() {
            for y in 0..l {
                for (c, b) in buf.iter_mut().enumerate() {
                    *b = self.transition(y, c) + emit[(t + 1) * l + c] + beta[(t + 1) * l + c];
                }
                beta[t * l + y] = log_sum_exp(&buf);
            }
        }
        let log_z = log_sum_exp(&alpha[(n - 1) * l..]);
        (alpha, beta, log_z)
    }

    pub fn marginals(&self, features: &[Vec<usize>]) -> Vec<Vec<f64>> {
        let l = self.n_labels;
        let emit = self.emissions(features);
        let (alpha, beta, log_z) = self.forward_backward(&emit);
        (0..features.len())
            .map(|t| {
                (0..l)
                    .map(|y| (alpha[t * l + y] + beta[t * l + y] - log_z).exp())
                    .collect()
            })
            .collect()
    }

    /// Viterbi path; ties prefer the lower label index.
    pub fn viterbi(&self, features: &[Vec<usize>]) -> Vec<usize> {
        let l = self.n_labels;
        let n = features.len();
        if n == 0 {
            return Vec::new();
        }
        let emit = self.emissions(features);
        let mut delta = emit[..l].to_vec();
        let mut back = vec![0usize; n * l];
        for t in 1..n {
            let mut next = vec![0.0; l];
            for y in 0..l {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for (p, d) in delta.iter().enumerate() {
                    let s = d + self.transition(p, y);
                    if s > best {
                        best = s;
                        arg = p;
                    }
                }
                next[y] = best + emit[t * l + y];
                back[t * l + y] = arg;
            }
            delta = next;
        }
        let mut y = 0;
        for (c, d) in delta.iter().enumerate() {
            if *d > delta[y] {
                y = c;
            }
        }
        let mut path = vec![0; n];
        path[n - 1] = y;
        for t in (1..n).rev() {
            y = back[t * l + y];
            path[t - 1] = y;
        }
        path
    }

    /// Adds the log-likelihood of `inst` and its gradient into `grad`.
    pub fn accumulate(&self, inst: &Instance, grad: &mut [f64]) -> f64 {
        let l = self.n_labels;
        let n = inst.len();
        if n == 0 {
            return 0.0;
        }
        let emit = self.emissions(&inst.features);
        let (alpha, beta, log_z) = self.forward_backward(&emit);
        let toff = self.transition_offset();

        let mut score = 0.0;
        for t in 0..n {
            let y = inst.labels[t];
            score += emit[t * l + y];
            for &f in &inst.features[t] {
                grad[f * l + y] += 1.0;
            }
            if t > 0 {
                let p = inst.labels[t - 1];
                score += self.transition(p, y);
                grad[toff + p * l + y] += 1.0;
            }
        }

        for t in 0..n {
            for y in 0..l {
                let m = (alpha[t * l + y] + beta[t * l + y] - log_z).exp();
                if m == 0.0 {
                    continue;
                }
                for &f in &inst.features[t] {
                    grad[f * l + y] -= m;
                }
            }
            if t > 0 {
                for p in 0..l {
                    let a = alpha[(t - 1) * l + p];
                    for c in 0..l {
                        let pm = (a + self.transition(p, c) + emit[t * l + c] + beta[t * l + c] - log_z).exp();
                        grad[toff + p * l + c] -= pm;
                    }
                }
            }
        }
        score - log_z
    }
}

/// Linear-chain CRF over indicator features.
#[derive(Clone, Debug, PartialEq)]
pub struct CrfModel {
    labels: Vec<String>,
    feature_names: Vec<String>,
    feature_index: HashMap<String, usize>,
    /// Emission weights followed by the transition matrix.
    params: Vec<f64>,
    config: Option<TrainConfig>,
}

impl CrfModel {
    /// A zero-weight model over `labels` and the given feature alphabet.
    pub fn new<S: AsRef<str>>(labels: &[S], features: impl IntoIterator<Item = String>) -> CrfModel {
        let labels: Vec<String> = labels.iter().map(|l| l.as_ref().to_string()).collect();
        let mut feature_names = Vec::new();
        let mut feature_index = HashMap::new();
        for f in features {
            if !feature_index.contains_key(&f) {
                feature_index.insert(f.clone(), feature_names.len());
                feature_names.push(f);
            }
        }
        let l = labels.len();
        CrfModel {
            params: vec![0.0; feature_names.len() * l + l * l],
            labels,
            feature_names,
            feature_index,
            config: None,
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn config(&self) -> Option<&TrainConfig> {
        self.config.as_ref()
    }

    pub(crate) fn set_config(&mut self, cfg: TrainConfig) {
        self.config = Some(cfg);
    }

    pub fn feature_id(&self, name: &str) -> Option<usize> {
        self.feature_index.get(name).copied()
    }

    pub(crate) fn view(&self) -> Params<'_> {
        Params {
            n_labels: self.labels.len(),
            n_features: self.feature_names.len(),
            values: &self.params,
        }
    }

    /// All weights: `n_features * n_labels` emissions indexed
    /// `[feature * n_labels + label]`, then `n_labels^2` transitions indexed
    /// `[prev * n_labels + curr]`.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Replaces all weights. Panics on a length mismatch.
    pub fn set_params(&mut self, params: Vec<f64>) {
        assert_eq!(params.len(), self.params.len());
        self.params = params;
    }

    pub fn weight(&self, feature: &str, label: usize) -> f64 {
        self.feature_id(feature)
            .map_or(0.0, |f| self.params[f * self.n_labels() + label])
    }

    pub fn set_weight(&mut self, feature: &str, label: usize, w: f64) {
        let f = match self.feature_id(feature) {
            Some(f) => f,
            None => {
                let f = self.feature_names.len();
                self.feature_names.push(feature.to_string());
                self.feature_index.insert(feature.to_string(), f);
                let l = self.n_labels();
                let at = f * l;
                self.params.splice(at..at, std::iter::repeat_n(0.0, l));
                f
            }
        };
        let l = self.n_labels();
        self.params[f * l + label] = w;
    }

    pub fn transition(&self, prev: usize, cur: usize) -> f64 {
        self.view().transition(prev, cur)
    }

    pub fn set_transition(&mut self, prev: usize, cur: usize, w: f64) {
        let off = self.view().transition_offset();
        let l = self.n_labels();
        self.params[off + prev * l + cur] = w;
    }

    /// Maps feature strings to ids, dropping unknown features.
    pub fn encode<S: AsRef<str>, F: AsRef<[S]>>(&self, features: &[F]) -> Vec<Vec<usize>> {
        features
            .iter()
            .map(|fs| fs.as_ref().iter().filter_map(|f| self.feature_id(f.as_ref())).collect())
            .collect()
    }

    /// Unnormalized score of a label sequence.
    pub fn score(&self, features: &[Vec<usize>], labels: &[usize]) -> f64 {
        self.view().sequence_score(features, labels)
    }

    /// Most probable label sequence.
    pub fn decode(&self, features: &[Vec<usize>]) -> Vec<usize> {
        self.view().viterbi(features)
    }

    /// Per-token posterior label distributions.
    pub fn marginals(&self, features: &[Vec<usize>]) -> Vec<Vec<f64>> {
        self.view().marginals(features)
    }

    /// Log partition function.
    pub fn log_partition(&self, features: &[Vec<usize>]) -> f64 {
        let v = self.view();
        v.forward_backward(&v.emissions(features)).2
    }

    /// Regularized conditional log-likelihood and its gradient, with the
    /// gradient laid out as emission weights followed by transitions.
    pub fn log_likelihood_and_gradient(&self, batch: &[Instance], l2: f64) -> Result<(f64, Vec<f64>)> {
        for inst in batch {
            if inst.features.len() != inst.labels.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} feature rows but {} labels",
                    inst.features.len(),
                    inst.labels.len()
                )));
            }
            if inst.labels.iter().any(|&y| y >= self.n_labels()) {
                return Err(Error::InvalidArgument("label index out of range".into()));
            }
        }
        let (ll, grad) = super::train::objective(self.view(), batch, l2);
        if !ll.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical("non-finite log-likelihood or gradient".into()));
        }
        Ok((ll, grad))
    }

    /// Text serialization: header, config comments, every transition as
    /// `T prev curr weight`, then non-zero emissions as
    /// `F label weight feature`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MODEL_HEADER);
        out.push('\n');
        if let Some(c) = &self.config {
            let _ = writeln!(
                out,
                "# l2={} max_iters={} tol={} seed={}",
                c.l2, c.max_iters, c.tol, c.seed
            );
        }
        let l = self.n_labels();
        for p in 0..l {
            for c in 0..l {
                let _ = writeln!(
                    out,
                    "T {} {} {:.16e}",
                    self.labels[p],
                    self.labels[c],
                    self.transition(p, c)
                );
            }
        }
        for (f, name) in self.feature_names.iter().enumerate() {
            for y in 0..l {
                let w = self.params[f * l + y];
                if w != 0.0 {
                    let _ = writeln!(out, "F {} {:.16e} {}", self.labels[y], w, name);
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<CrfModel> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == MODEL_HEADER => {}
            _ => return Err(Error::Format(format!("missing `{MODEL_HEADER}` header"))),
        }
        let bad = |i: usize, msg: &str| Error::Format(format!("line {}: {msg}", i + 1));
        let parse_w = |i: usize, s: &str| -> Result<f64> {
            let w: f64 = s.parse().map_err(|_| bad(i, "bad weight"))?;
            if !w.is_finite() {
                return Err(bad(i, "non-finite weight"));
            }
            Ok(w)
        };
        let mut config = None;
        let mut labels: Vec<String> = Vec::new();
        let mut transitions: Vec<(String, String, f64)> = Vec::new();
        let mut emissions: Vec<(String, f64, String)> = Vec::new();
        for (i, line) in lines {
            if let Some(c) = line.strip_prefix("# ") {
                config = TrainConfig::from_echo(c);
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("T ") {
                let parts: Vec<&str> = rest.split(' ').collect();
                if parts.len() != 3 {
                    return Err(bad(i, "transition line needs 3 fields"));
                }
                for lbl in &parts[..2] {
                    if !labels.iter().any(|l| l == lbl) {
                        labels.push(lbl.to_string());
                    }
                }
                transitions.push((parts[0].into(), parts[1].into(), parse_w(i, parts[2])?));
            } else if let Some(rest) = line.strip_prefix("F ") {
                let mut parts = rest.splitn(3, ' ');
                let (Some(lbl), Some(w), Some(feat)) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(bad(i, "feature line needs 3 fields"));
                };
                emissions.push((lbl.into(), parse_w(i, w)?, feat.into()));
            } else {
                return Err(bad(i, "unrecognized line"));
            }
        }
        if transitions.len() != labels.len() * labels.len() {
            return Err(Error::Format(format!(
                "{} transition lines for {} labels",
                transitions.len(),
                labels.len()
            )));
        }
        let label_id = |s: &str| labels.iter().position(|l| l == s);
        let mut model = CrfModel::new(&labels, emissions.iter().map(|e| e.2.clone()));
        for (p, c, w) in &transitions {
            model.set_transition(label_id(p).unwrap(), label_id(c).unwrap(), *w);
        }
        for (lbl, w, feat) in &emissions {
            let y = label_id(lbl).ok_or_else(|| Error::Format(format!("feature line uses unknown label `{lbl}`")))?;
            model.set_weight(feat, y, *w);
        }
        model.config = config;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        crate::fsutil::write_atomic(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<CrfModel> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

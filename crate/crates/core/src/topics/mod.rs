//! Topic models over document-term matrices.
//!
//! Models are fit by collapsed Gibbs sampling ([`fit_lda`]) and the number of
//! topics is chosen by minimising the mean pairwise cosine similarity between
//! topic-term distributions ([`select_topic_count`]).

mod lda;
mod select;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use lda::GibbsSampler;
pub use select::{select_topic_count, sweep_seed, sweep_topic_counts, SweepCandidate, TopicSweepResult};

use crate::error::{Error, Result};
use crate::matrix::DocTermMatrix;
use crate::numfmt::round_matrix;

pub const DEFAULT_BETA: f64 = 0.01;
pub const DEFAULT_TOP_N: usize = 10;
pub const DEFAULT_CUTOFF: f64 = 0.01;
const STOCHASTIC_TOLERANCE: f64 = 1e-9;

/// Default symmetric document-topic concentration, 50 / k.
pub fn default_alpha(k: usize) -> f64 {
    50.0 / k as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    /// `None` selects [`default_alpha`] for the fitted k.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Average phi/theta over this many final sweeps; 0 keeps the last sample only.
    pub average_samples: usize,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            alpha: None,
            beta: DEFAULT_BETA,
            iterations: 500,
            seed: 0,
            average_samples: 0,
        }
    }
}

impl FitParams {
    pub fn alpha_for(&self, k: usize) -> f64 {
        self.alpha.unwrap_or_else(|| default_alpha(k))
    }
}

/// A fitted topic model: `phi` is k × V, `theta` is n_docs × k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub iterations: usize,
    pub vocab: Vec<String>,
    pub doc_ids: Vec<String>,
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    /// Documents without tokens; their theta rows are uniform.
    #[serde(default)]
    pub empty_docs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopTerm {
    pub index: usize,
    pub term: String,
    pub probability: f64,
}

/// Fits LDA by collapsed Gibbs sampling for `params.iterations` sweeps.
type Matrix = Vec<Vec<f64>>;

pub fn fit_lda(matrix: &DocTermMatrix, k: usize, params: &FitParams) -> Result<TopicModel> {
    if params.iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be >= 1".into()));
    }
    let alpha = params.alpha_for(k);
    let mut sampler = GibbsSampler::new(matrix, k, alpha, params.beta, params.seed)?;
    let averaged = params.average_samples.min(params.iterations);
    let mut phi_acc: Option<(Matrix, Matrix)> = None;
    for it in 0..params.iterations {
        sampler.sweep();
        if cfg!(debug_assertions) {
            sampler.check_conservation()?;
        }
        if averaged > 0 && it + averaged >= params.iterations {
            let (phi, theta) = (sampler.phi(), sampler.theta());
            phi_acc = Some(match phi_acc {
                None => (phi, theta),
                Some((mut pa, mut ta)) => {
                    add_into(&mut pa, &phi);
                    add_into(&mut ta, &theta);
                    (pa, ta)
                }
            });
        }
    }
    let (phi, theta) = match phi_acc {
        Some((mut pa, mut ta)) => {
            scale(&mut pa, averaged as f64);
            scale(&mut ta, averaged as f64);
            (pa, ta)
        }
        None => (sampler.phi(), sampler.theta()),
    };
    let model = TopicModel {
        k,
        alpha,
        beta: params.beta,
        seed: params.seed,
        iterations: params.iterations,
        vocab: matrix.terms().to_vec(),
        doc_ids: matrix.doc_ids().to_vec(),
        phi,
        theta,
        empty_docs: sampler.empty_docs(),
    };
    model.check_stochastic()?;
    Ok(model)
}

fn add_into(acc: &mut [Vec<f64>], x: &[Vec<f64>]) {
    for (a, r) in acc.iter_mut().zip(x) {
        for (p, q) in a.iter_mut().zip(r) {
            *p += q;
        }
    }
}

fn scale(acc: &mut [Vec<f64>], n: f64) {
    for row in acc {
        for p in row {
            *p /= n;
        }
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Mean cosine similarity over all unordered pairs of topic-term rows.
pub fn topic_similarity(model: &TopicModel) -> Result<f64> {
    if model.k < 2 {
        return Err(Error::InvalidArgument(format!(
            "topic similarity needs k >= 2 (k = {})",
            model.k
        )));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..model.k {
        for j in i + 1..model.k {
            sum += cosine(&model.phi[i], &model.phi[j]);
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

impl TopicModel {
    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn n_terms(&self) -> usize {
        self.vocab.len()
    }

    /// Column `topic` of theta: how strongly the topic explains each document.
    pub fn explanation_vector(&self, topic: usize) -> Result<Vec<f64>> {
        if topic >= self.k {
            return Err(Error::IndexOutOfRange {
                index: topic,
                len: self.k,
            });
        }
        Ok(self.theta.iter().map(|row| row[topic]).collect())
    }

    /// Up to `n` terms with probability ≥ `cutoff`, descending; ties by term index.
    pub fn top_terms(&self, topic: usize, n: usize, cutoff: f64) -> Result<Vec<TopTerm>> {
        let row = self.phi.get(topic).ok_or(Error::IndexOutOfRange {
            index: topic,
            len: self.k,
        })?;
        let mut idx: Vec<usize> = (0..row.len()).filter(|&v| row[v] >= cutoff).collect();
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        idx.truncate(n);
        Ok(idx
            .into_iter()
            .map(|v| TopTerm {
                index: v,
                term: self.vocab[v].clone(),
                probability: row[v],
            })
            .collect())
    }

    /// Shape and simplex checks on phi and theta.
    pub fn check_stochastic(&self) -> Result<()> {
        if self.k == 0 || self.vocab.is_empty() {
            return Err(Error::Invariant("model needs k >= 1 and V >= 1".into()));
        }
        if self.phi.len() != self.k || self.theta.len() != self.doc_ids.len() {
            return Err(Error::Invariant("phi/theta shape mismatch".into()));
        }
        for (name, rows, width) in [("phi", &self.phi, self.vocab.len()), ("theta", &self.theta, self.k)] {
            for (i, row) in rows.iter().enumerate() {
                if row.len() != width {
                    return Err(Error::Invariant(format!("{name} row {i} has width {}", row.len())));
                }
                if row.iter().any(|&p| !p.is_finite() || p < 0.0) {
                    return Err(Error::Invariant(format!("{name} row {i} has a negative entry")));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() >= STOCHASTIC_TOLERANCE {
                    return Err(Error::Invariant(format!("{name} row {i} sums to {s}")));
                }
            }
        }
        Ok(())
    }

    /// JSON with probabilities rounded to 12 significant digits.
    pub fn to_json(&self) -> Result<String> {
        let rounded = TopicModel {
            phi: round_matrix(&self.phi),
            theta: round_matrix(&self.theta),
            ..self.clone()
        };
        Ok(serde_json::to_string_pretty(&rounded)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TopicModel = serde_json::from_str(text)?;
        model.check_stochastic()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        w.write_all(self.to_json()?.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let model: TopicModel = serde_json::from_reader(BufReader::new(file))?;
        model.check_stochastic()?;
        Ok(model)
    }
}

//! Collapsed Gibbs sampler for LDA with symmetric Dirichlet priors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::DocTermMatrix;

/// Sampler state. Token order within a document follows the term strings, so a
/// column permutation of the input yields the same chain.
pub struct GibbsSampler {
    k: usize,
    n_terms: usize,
    alpha: f64,
    beta: f64,
    docs: Vec<u32>,
    words: Vec<u32>,
    topics: Vec<u32>,
    /// n_docs × k
    doc_topic: Vec<u32>,
    /// n_terms × k
    term_topic: Vec<u32>,
    topic_total: Vec<u64>,
    doc_len: Vec<u64>,
    rng: ChaCha8Rng,
    weights: Vec<f64>,
}

impl GibbsSampler {
    pub fn new(matrix: &DocTermMatrix, k: usize, alpha: f64, beta: f64, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha and beta must be positive (alpha={alpha}, beta={beta})"
            )));
        }
        if matrix.total() == 0 {
            return Err(Error::EmptyCorpus);
        }
        let n_docs = matrix.n_docs();
        let n_terms = matrix.n_terms();
        let terms = matrix.terms();

        let total = matrix.total() as usize;
        let mut docs = Vec::with_capacity(total);
        let mut words = Vec::with_capacity(total);
        for d in 0..n_docs {
            let mut row = matrix.row(d).to_vec();
            row.sort_by(|a, b| terms[a.0 as usize].cmp(&terms[b.0 as usize]));
            for (t, c) in row {
                for _ in 0..c {
                    docs.push(d as u32);
                    words.push(t);
                }
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut doc_topic = vec![0u32; n_docs * k];
        let mut term_topic = vec![0u32; n_terms * k];
        let mut topic_total = vec![0u64; k];
        let mut doc_len = vec![0u64; n_docs];
        let topics: Vec<u32> = docs
            .iter()
            .zip(&words)
            .map(|(&d, &w)| {
                let z = rng.random_range(0..k);
                doc_topic[d as usize * k + z] += 1;
                term_topic[w as usize * k + z] += 1;
                topic_total[z] += 1;
                doc_len[d as usize] += 1;
                z as u32
            })
            .collect();

        Ok(Self {
            k,
            n_terms,
            alpha,
            beta,
            docs,
            words,
            topics,
            doc_topic,
            term_topic,
            topic_total,
            doc_len,
            rng,
            weights: vec![0.0; k],
        })
    }

    pub fn n_tokens(&self) -> usize {
        self.docs.len()
    }

    /// One full pass over every token.
    pub fn sweep(&mut self) {
        let k = self.k;
        let (alpha, beta) = (self.alpha, self.beta);
        let v_beta = self.n_terms as f64 * beta;
        let Self {
            docs,
            words,
            topics,
            doc_topic,
            term_topic,
            topic_total,
            rng,
            weights,
            ..
        } = self;
        let mut inv: Vec<f64> = topic_total.iter().map(|&n| 1.0 / (n as f64 + v_beta)).collect();
        for ((&d, &w), z) in docs.iter().zip(words.iter()).zip(topics.iter_mut()) {
            let (d, w, old) = (d as usize, w as usize, *z as usize);
            let dt = &mut doc_topic[d * k..(d + 1) * k];
            let wt = &mut term_topic[w * k..(w + 1) * k];
            dt[old] -= 1;
            wt[old] -= 1;
            topic_total[old] -= 1;
            inv[old] = 1.0 / (topic_total[old] as f64 + v_beta);

            let mut acc = 0.0;
            for t in 0..k {
                acc += (dt[t] as f64 + alpha) * (wt[t] as f64 + beta) * inv[t];
                weights[t] = acc;
            }
            let u = rng.random::<f64>() * acc;
            let new = weights.partition_point(|&c| c <= u).min(k - 1);

            dt[new] += 1;
            wt[new] += 1;
            topic_total[new] += 1;
            inv[new] = 1.0 / (topic_total[new] as f64 + v_beta);
            *z = new as u32;
        }
    }

    /// Verifies Σ_t n_dt = n_d, Σ_v n_tv = n_t and agreement with the assignments.
    pub fn check_conservation(&self) -> Result<()> {
        let k = self.k;
        for (d, len) in self.doc_len.iter().enumerate() {
            let s: u64 = self.doc_topic[d * k..(d + 1) * k].iter().map(|&c| c as u64).sum();
            if s != *len {
                return Err(Error::Invariant(format!("doc {d}: topic counts {s} != length {len}")));
            }
        }
        for t in 0..k {
            let s: u64 = (0..self.n_terms)
                .map(|v| self.term_topic[v * k + t] as u64)
                .sum();
            if s != self.topic_total[t] {
                return Err(Error::Invariant(format!(
                    "topic {t}: term counts {s} != total {}",
                    self.topic_total[t]
                )));
            }
        }
        let mut per_topic = vec![0u64; k];
        for &z in &self.topics {
            per_topic[z as usize] += 1;
        }
        if per_topic != self.topic_total {
            return Err(Error::Invariant("assignments disagree with topic totals".into()));
        }
        Ok(())
    }

    /// phi[t][v] = (n_tv + β) / (n_t + Vβ)
    pub fn phi(&self) -> Vec<Vec<f64>> {
        let k = self.k;
        let v_beta = self.n_terms as f64 * self.beta;
        (0..k)
            .map(|t| {
                let denom = self.topic_total[t] as f64 + v_beta;
                (0..self.n_terms)
                    .map(|v| (self.term_topic[v * k + t] as f64 + self.beta) / denom)
                    .collect()
            })
            .collect()
    }

    /// theta[d][t] = (n_dt + α) / (n_d + kα); uniform for empty documents.
    pub fn theta(&self) -> Vec<Vec<f64>> {
        let k = self.k;
        let k_alpha = k as f64 * self.alpha;
        self.doc_len
            .iter()
            .enumerate()
            .map(|(d, &len)| {
                let denom = len as f64 + k_alpha;
                self.doc_topic[d * k..(d + 1) * k]
                    .iter()
                    .map(|&c| (c as f64 + self.alpha) / denom)
                    .collect()
            })
            .collect()
    }

    pub fn empty_docs(&self) -> Vec<usize> {
        self.doc_len
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == 0)
            .map(|(d, _)| d)
            .collect()
    }

    pub fn assignments(&self) -> &[u32] {
        &self.topics
    }
}

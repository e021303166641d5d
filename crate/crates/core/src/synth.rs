//! Seeded synthetic corpora with planted structure, plus the scores used to
//! check what a fit recovered: topic alignment and adjusted Rand index.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assoc::{cosine_similarity, phenotype_topic_id};
use crate::cluster::ClusterReport;
use crate::error::{Error, Result};
use crate::ingest::ActionLabel;
use crate::matrix::DocTermMatrix;
use crate::topics::TopicModel;

/// Probability that a workflow run steps to the next action of its block
/// rather than to a uniformly drawn one.
const CHAIN_STAY: f64 = 0.7;
/// Mean length of one run drawn from a single workflow topic.
const MEAN_RUN: f64 = 6.0;
/// Source codes per diagnosis group in the emitted code map.
const CODES_PER_GROUP: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub n_bundles: usize,
    pub workflow_topics_per_bundle: usize,
    pub phenotype_topics_per_bundle: usize,
    pub patients_per_bundle: usize,
    pub action_vocab_size: usize,
    /// Number of diagnosis groups (the phenotype vocabulary after mapping).
    pub code_vocab_size: usize,
    pub tokens_per_patient_seq: usize,
    pub codes_per_patient: usize,
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            n_bundles: 3,
            workflow_topics_per_bundle: 2,
            phenotype_topics_per_bundle: 2,
            patients_per_bundle: 200,
            action_vocab_size: 30,
            code_vocab_size: 60,
            tokens_per_patient_seq: 30,
            codes_per_patient: 30,
            noise_rate: 0.05,
            seed: 0,
        }
    }
}

impl PlantedSpec {
    fn n_workflow_topics(&self) -> usize {
        self.n_bundles * self.workflow_topics_per_bundle
    }

    fn n_phenotype_topics(&self) -> usize {
        self.n_bundles * self.phenotype_topics_per_bundle
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bundles == 0
            || self.workflow_topics_per_bundle == 0
            || self.phenotype_topics_per_bundle == 0
            || self.patients_per_bundle == 0
        {
            return Err(Error::InvalidArgument("bundle, topic and patient counts must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::InvalidArgument(format!("noise_rate {} must be in [0, 1)", self.noise_rate)));
        }
        if self.action_vocab_size / self.n_workflow_topics() < 2 {
            return Err(Error::InvalidArgument(format!(
                "action vocabulary {} too small for {} disjoint blocks of >= 2 actions",
                self.action_vocab_size,
                self.n_workflow_topics()
            )));
        }
        if self.code_vocab_size < self.n_phenotype_topics() {
            return Err(Error::InvalidArgument(format!(
                "code vocabulary {} too small for {} disjoint blocks",
                self.code_vocab_size,
                self.n_phenotype_topics()
            )));
        }
        Ok(())
    }
}

/// A planted topic: its support terms with their generating probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTopic {
    pub id: String,
    pub bundle: Option<usize>,
    pub terms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedBundle {
    pub workflow_topics: Vec<String>,
    pub phenotype_topics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub patient_bundle: BTreeMap<String, usize>,
    /// Workflow topics as distributions over single action labels.
    pub workflow_topics: Vec<PlantedTopic>,
    /// Phenotype topics as distributions over diagnosis group codes.
    pub phenotype_topics: Vec<PlantedTopic>,
    pub bundles: Vec<PlantedBundle>,
}

impl GroundTruth {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub events_csv: String,
    pub diagnoses_csv: String,
    pub codemap_csv: String,
    pub truth: GroundTruth,
}

impl SynthCorpus {
    /// Writes `events.csv`, `diagnoses.csv`, `codemap.csv` and `truth.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("events.csv", &self.events_csv),
            ("diagnoses.csv", &self.diagnoses_csv),
            ("codemap.csv", &self.codemap_csv),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        self.truth.save(&dir.join("truth.json"))
    }
}

pub fn action_label(action: usize) -> (String, String) {
    (format!("role{:02}", action / 4), format!("act{action:03}"))
}

pub fn group_code(group: usize) -> String {
    format!("{}", 100 + group)
}

fn source_code(group: usize, variant: usize) -> String {
    format!("{}.{}", 100 + group, variant + 1)
}

/// Index range of block `b` when `total` items are split into `n` equal blocks.
fn block(total: usize, n: usize, b: usize) -> std::ops::Range<usize> {
    let size = total / n;
    b * size..(b + 1) * size
}

/// Generates a corpus in which every patient belongs to one bundle. Each
/// patient mixes their bundle's workflow topics with a weight drawn from
/// U(0, 1) (and likewise, independently, the phenotype topics). Workflow
/// topics are Markov chains on disjoint action blocks and phenotype topics
/// are uniform over disjoint code-group blocks.
pub fn generate_corpus(spec: &PlantedSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_wt = spec.n_workflow_topics();
    let n_pt = spec.n_phenotype_topics();
    let labels: Vec<String> = (0..spec.action_vocab_size)
        .map(|a| {
            let (role, reason) = action_label(a);
            ActionLabel::new(&role, &reason).as_str().to_string()
        })
        .collect();

    let mut truth = GroundTruth {
        patient_bundle: BTreeMap::new(),
        workflow_topics: Vec::new(),
        phenotype_topics: Vec::new(),
        bundles: Vec::new(),
    };
    for b in 0..spec.n_bundles {
        let wf: Vec<usize> = (0..spec.workflow_topics_per_bundle)
            .map(|i| b * spec.workflow_topics_per_bundle + i)
            .collect();
        let ph: Vec<usize> = (0..spec.phenotype_topics_per_bundle)
            .map(|i| b * spec.phenotype_topics_per_bundle + i)
            .collect();
        for &t in &wf {
            let r = block(spec.action_vocab_size, n_wt, t);
            let p = 1.0 / r.len() as f64;
            truth.workflow_topics.push(PlantedTopic {
                id: format!("planted_w{}", t + 1),
                bundle: Some(b),
                terms: r.map(|a| (labels[a].clone(), p)).collect(),
            });
        }
        for &t in &ph {
            let r = block(spec.code_vocab_size, n_pt, t);
            let p = 1.0 / r.len() as f64;
            truth.phenotype_topics.push(PlantedTopic {
                id: format!("planted_p{}", t + 1),
                bundle: Some(b),
                terms: r.map(|g| (group_code(g), p)).collect(),
            });
        }
        truth.bundles.push(PlantedBundle {
            workflow_topics: wf.iter().map(|t| format!("planted_w{}", t + 1)).collect(),
            phenotype_topics: ph.iter().map(|t| format!("planted_p{}", t + 1)).collect(),
        });
    }

    let n_patients = spec.n_bundles * spec.patients_per_bundle;
    let width = n_patients.to_string().len().max(4);
    let mut events: Vec<(usize, usize, usize)> = Vec::with_capacity(n_patients * spec.tokens_per_patient_seq);
    let mut diagnoses = String::from("patient_id,code\n");
    let mut patient_ids = Vec::with_capacity(n_patients);
    for p in 0..n_patients {
        let bundle = p % spec.n_bundles;
        let pid = format!("P{p:0width$}");
        truth.patient_bundle.insert(pid.clone(), bundle);
        patient_ids.push(pid);

        let wf_weights = topic_weights(&mut rng, spec.workflow_topics_per_bundle);
        let mut pos = 0;
        while pos < spec.tokens_per_patient_seq {
            let local = sample_index(&mut rng, &wf_weights);
            let r = block(spec.action_vocab_size, n_wt, bundle * spec.workflow_topics_per_bundle + local);
            let size = r.len();
            let run = 2 + sample_geometric(&mut rng, 1.0 / (MEAN_RUN - 1.0));
            let mut state = rng.random_range(0..size);
            for _ in 0..run.min(spec.tokens_per_patient_seq - pos) {
                let action = if rng.random::<f64>() < spec.noise_rate {
                    rng.random_range(0..spec.action_vocab_size)
                } else {
                    r.start + state
                };
                events.push((p, pos, action));
                pos += 1;
                state = if rng.random::<f64>() < CHAIN_STAY {
                    (state + 1) % size
                } else {
                    rng.random_range(0..size)
                };
            }
        }

        let ph_weights = topic_weights(&mut rng, spec.phenotype_topics_per_bundle);
        for _ in 0..spec.codes_per_patient {
            let group = if rng.random::<f64>() < spec.noise_rate {
                rng.random_range(0..spec.code_vocab_size)
            } else {
                let local = sample_index(&mut rng, &ph_weights);
                let r = block(spec.code_vocab_size, n_pt, bundle * spec.phenotype_topics_per_bundle + local);
                rng.random_range(r)
            };
            let variant = rng.random_range(0..CODES_PER_GROUP);
            let _ = writeln!(diagnoses, "{},{}", patient_ids[p], source_code(group, variant));
        }
    }

    // Rows are shuffled so that readers cannot rely on file order.
    events.shuffle(&mut rng);
    let mut events_csv = String::with_capacity(events.len() * 40);
    events_csv.push_str("patient_id,order_key,actor_role,action_reason\n");
    for (p, pos, action) in events {
        let (role, reason) = action_label(action);
        let _ = writeln!(events_csv, "{},{},{},{}", patient_ids[p], pos, role, reason);
    }

    let mut codemap_csv = String::from("source_code,group_code,description\n");
    for g in 0..spec.code_vocab_size {
        for v in 0..CODES_PER_GROUP {
            let _ = writeln!(codemap_csv, "{},{},Synthetic condition {}", source_code(g, v), group_code(g), g + 1);
        }
    }

    Ok(SynthCorpus {
        events_csv,
        diagnoses_csv: diagnoses,
        codemap_csv,
        truth,
    })
}

fn topic_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    if n == 2 {
        let lambda: f64 = rng.random();
        return vec![lambda, 1.0 - lambda];
    }
    // uniform on the simplex via normalised exponentials
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn sample_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let mut u = rng.random::<f64>() * weights.iter().sum::<f64>();
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Failures before the first success, success probability `p`.
fn sample_geometric(rng: &mut ChaCha8Rng, p: f64) -> usize {
    let u: f64 = 1.0 - rng.random::<f64>();
    (u.ln() / (1.0 - p).ln()).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicCorpusSpec {
    pub n_docs: usize,
    pub vocab_size: usize,
    pub n_topics: usize,
    pub tokens_per_doc: usize,
    pub noise_rate: f64,
    pub seed: u64,
}

/// Bag-of-words corpus: document `d` draws from topic `d % n_topics`, each
/// topic uniform over its own block of terms, with a `noise_rate` share of
/// tokens drawn uniformly from the whole vocabulary.
pub fn generate_topic_corpus(spec: &TopicCorpusSpec) -> Result<(DocTermMatrix, Vec<PlantedTopic>)> {
    if spec.n_topics == 0 || spec.vocab_size / spec.n_topics == 0 {
        return Err(Error::InvalidArgument("vocabulary too small for disjoint topic blocks".into()));
    }
    if !(0.0..1.0).contains(&spec.noise_rate) {
        return Err(Error::InvalidArgument(format!("noise_rate {} must be in [0, 1)", spec.noise_rate)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let terms: Vec<String> = (0..spec.vocab_size).map(|v| format!("t{v:03}")).collect();
    let rows = (0..spec.n_docs)
        .map(|d| {
            let r = block(spec.vocab_size, spec.n_topics, d % spec.n_topics);
            let mut counts = vec![0u64; spec.vocab_size];
            for _ in 0..spec.tokens_per_doc {
                let v = if rng.random::<f64>() < spec.noise_rate {
                    rng.random_range(0..spec.vocab_size)
                } else {
                    rng.random_range(r.clone())
                };
                counts[v] += 1;
            }
            counts
                .into_iter()
                .enumerate()
                .filter(|&(_, c)| c > 0)
                .map(|(v, c)| (v as u32, c))
                .collect()
        })
        .collect();
    let width = spec.n_docs.to_string().len();
    let doc_ids = (0..spec.n_docs).map(|d| format!("d{d:0width$}")).collect();
    let matrix = DocTermMatrix::from_rows(doc_ids, terms.clone(), rows)?;
    let planted = (0..spec.n_topics)
        .map(|t| {
            let r = block(spec.vocab_size, spec.n_topics, t);
            let p = 1.0 / r.len() as f64;
            PlantedTopic {
                id: format!("planted_{}", t + 1),
                bundle: None,
                terms: r.map(|v| (terms[v].clone(), p)).collect(),
            }
        })
        .collect();
    Ok((matrix, planted))
}

/// Maximum-weight assignment of rows to distinct columns (rows ≤ columns),
/// by the Hungarian method on negated weights. Returns the column of each row.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let m = weights[0].len();
    assert!(n <= m, "assignment needs rows <= columns");
    // potentials-based O(n^2 m), 1-indexed with a virtual column 0
    let cost = |i: usize, j: usize| -weights[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            result[owner[j] - 1] = j - 1;
        }
    }
    result
}

/// Cosine similarity of every planted topic (rows) to every learned topic
/// (columns), with terms matched by name.
pub fn similarity_matrix(learned: &TopicModel, planted: &[PlantedTopic]) -> Result<Vec<Vec<f64>>> {
    let index: BTreeMap<&str, usize> = learned.vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    planted
        .iter()
        .map(|p| {
            let mut vec = vec![0.0; learned.vocab.len()];
            let mut outside = 0.0;
            for (term, &w) in &p.terms {
                match index.get(term.as_str()) {
                    Some(&i) => vec[i] = w,
                    None => outside += w * w,
                }
            }
            learned
                .phi
                .iter()
                .map(|row| {
                    let inside = cosine_similarity(&vec, row)?;
                    // planted mass on terms the model never saw still counts in the norm
                    let in_norm = vec.iter().map(|x| x * x).sum::<f64>();
                    Ok(if in_norm + outside == 0.0 {
                        0.0
                    } else {
                        inside * (in_norm / (in_norm + outside)).sqrt()
                    })
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicAlignment {
    /// Mean matched similarity over planted topics (unmatched count as 0).
    pub score: f64,
    /// Learned topic matched to each planted topic.
    pub matching: Vec<Option<usize>>,
    pub similarities: Vec<Vec<f64>>,
}

/// One-to-one matching of planted to learned topics maximising total cosine similarity.
pub fn align_topics(learned: &TopicModel, planted: &[PlantedTopic]) -> Result<TopicAlignment> {
    let sims = similarity_matrix(learned, planted)?;
    if planted.is_empty() {
        return Ok(TopicAlignment {
            score: 0.0,
            matching: Vec::new(),
            similarities: sims,
        });
    }
    let k = learned.k;
    let matching: Vec<Option<usize>> = if planted.len() <= k {
        max_weight_assignment(&sims).into_iter().map(Some).collect()
    } else {
        let transposed: Vec<Vec<f64>> = (0..k).map(|j| sims.iter().map(|r| r[j]).collect()).collect();
        let cols = max_weight_assignment(&transposed);
        let mut m = vec![None; planted.len()];
        for (j, &i) in cols.iter().enumerate() {
            m[i] = Some(j);
        }
        m
    };
    let score = matching
        .iter()
        .enumerate()
        .map(|(i, m)| m.map_or(0.0, |j| sims[i][j]))
        .sum::<f64>()
        / planted.len() as f64;
    Ok(TopicAlignment {
        score,
        matching,
        similarities: sims,
    })
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let n = a.len();
    let pairs = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        // both labelings are all-singletons or all-one-cluster
        return Ok(if sum_a == sum_b { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// ARI between the found phenotype clusters and the planted bundles. Each
/// learned phenotype topic takes the bundle of the planted topic it is
/// matched to, or of its most similar planted topic when left unmatched.
pub fn clustering_agreement(found: &ClusterReport, learned: &TopicModel, truth: &GroundTruth) -> Result<f64> {
    let alignment = align_topics(learned, &truth.phenotype_topics)?;
    let mut planted_of: Vec<Option<usize>> = vec![None; learned.k];
    for (i, m) in alignment.matching.iter().enumerate() {
        if let Some(j) = *m {
            planted_of[j] = Some(i);
        }
    }
    let mut truth_labels = Vec::with_capacity(learned.k);
    for (j, slot) in planted_of.iter().enumerate() {
        let planted = match slot {
            Some(i) => *i,
            None => (0..truth.phenotype_topics.len())
                .max_by(|&x, &y| {
                    alignment.similarities[x][j]
                        .total_cmp(&alignment.similarities[y][j])
                        .then(y.cmp(&x))
                })
                .ok_or_else(|| Error::InvalidArgument("ground truth has no phenotype topics".into()))?,
        };
        truth_labels.push(truth.phenotype_topics[planted].bundle.unwrap_or(planted));
    }
    let ids: Vec<String> = (0..learned.k).map(phenotype_topic_id).collect();
    let found_labels = found.phenotype_labels(&ids)?;
    adjusted_rand_index(&found_labels, &truth_labels)
}

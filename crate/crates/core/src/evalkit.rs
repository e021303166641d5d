//! Plausibility evaluation: random counterpart clusters, Likert scoring and
//! a one-way ANOVA between the inferred and random arms.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::assoc::phenotype_topic_id;
use crate::error::{Error, Result};
use crate::numfmt::format_sig;
use crate::topics::{TopicModel, DEFAULT_CUTOFF, DEFAULT_TOP_N};

const LIKERT: [(&str, f64); 5] = [
    ("not at all likely", 0.0),
    ("slightly likely", 0.25),
    ("moderately likely", 0.5),
    ("very likely", 0.75),
    ("completely likely", 1.0),
];

/// Maps one of the five answer texts (case and spacing insensitive) to its score.
pub fn likert_to_score(answer: &str) -> Result<f64> {
    let norm = answer.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    LIKERT
        .iter()
        .find(|(text, _)| *text == norm)
        .map(|&(_, v)| v)
        .ok_or_else(|| Error::InvalidArgument(format!("unrecognised Likert answer {answer:?}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Inferred,
    Random,
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inferred" => Ok(Arm::Inferred),
            "random" => Ok(Arm::Random),
            _ => Err(Error::InvalidArgument(format!("arm must be inferred or random, got {s:?}"))),
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Inferred => "inferred",
            Arm::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub respondent_id: String,
    pub cluster_id: String,
    pub arm: Arm,
    pub score: f64,
}

/// Reads `respondent_id,cluster_id,arm,answer_text` rows.
pub fn parse_responses<R: Read>(reader: R, file: &str) -> Result<Vec<SurveyResponse>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_format(file, 1, e))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Format {
            file: file.to_string(),
            line: 1,
            message: format!("missing column {name}"),
        })
    };
    let (c_resp, c_cluster, c_arm, c_answer) =
        (col("respondent_id")?, col("cluster_id")?, col("arm")?, col("answer_text")?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| csv_format(file, line, e))?;
        let row_err = |message: String| Error::Row {
            file: file.to_string(),
            line,
            message,
        };
        let field = |c: usize| rec.get(c).unwrap_or("");
        out.push(SurveyResponse {
            respondent_id: field(c_resp).to_string(),
            cluster_id: field(c_cluster).to_string(),
            arm: field(c_arm).parse().map_err(|e: Error| row_err(e.to_string()))?,
            score: likert_to_score(field(c_answer)).map_err(|e| row_err(e.to_string()))?,
        });
    }
    Ok(out)
}

fn csv_format(file: &str, line: u64, e: csv::Error) -> Error {
    Error::Format {
        file: file.to_string(),
        line,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    /// mean(inferred) − mean(random).
    pub mean_difference: f64,
    pub f_statistic: f64,
    pub p_value: f64,
    pub df_between: usize,
    pub df_within: usize,
    /// Set when within-group variance is zero but the means differ, so F is infinite.
    pub infinite_f: bool,
}

/// Upper tail P(F > f) of the F distribution with (d1, d2) degrees of freedom.
pub fn f_upper_tail(f: f64, d1: usize, d2: usize) -> Result<f64> {
    if f.is_nan() || f < 0.0 {
        return Err(Error::InvalidArgument(format!("F statistic {f} must be >= 0")));
    }
    if f == f64::INFINITY {
        return Ok(0.0);
    }
    let dist = FisherSnedecor::new(d1 as f64, d2 as f64)
        .map_err(|e| Error::InvalidArgument(format!("degrees of freedom ({d1}, {d2}): {e}")))?;
    Ok(dist.sf(f).clamp(0.0, 1.0))
}

/// One-way fixed-effects ANOVA with arm as the only factor.
pub fn one_way_anova(inferred: &[f64], random: &[f64]) -> Result<AnovaResult> {
    if inferred.len() < 2 || random.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "each arm needs at least 2 responses (inferred {}, random {})",
            inferred.len(),
            random.len()
        )));
    }
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let (m1, m2) = (mean(inferred), mean(random));
    let n = (inferred.len() + random.len()) as f64;
    let grand = (inferred.iter().sum::<f64>() + random.iter().sum::<f64>()) / n;
    let ss_between = inferred.len() as f64 * (m1 - grand).powi(2) + random.len() as f64 * (m2 - grand).powi(2);
    let ss_within = inferred.iter().map(|x| (x - m1).powi(2)).sum::<f64>()
        + random.iter().map(|x| (x - m2).powi(2)).sum::<f64>();
    let df_between = 1;
    let df_within = inferred.len() + random.len() - 2;

    let (f, infinite_f) = if ss_within == 0.0 {
        if m1 == m2 {
            (0.0, false)
        } else {
            (f64::INFINITY, true)
        }
    } else {
        ((ss_between / df_between as f64) / (ss_within / df_within as f64), false)
    };
    Ok(AnovaResult {
        mean_difference: m1 - m2,
        f_statistic: f,
        p_value: f_upper_tail(f, df_between, df_within)?,
        df_between,
        df_within,
        infinite_f,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAnova {
    pub cluster: String,
    pub result: AnovaResult,
}

/// ANOVA per cluster, clusters in order of first appearance.
pub fn anova_paired_arms(responses: &[SurveyResponse]) -> Result<Vec<ClusterAnova>> {
    let mut order: Vec<&str> = Vec::new();
    let mut arms: HashMap<&str, (Vec<f64>, Vec<f64>)> = HashMap::new();
    for r in responses {
        let entry = arms.entry(r.cluster_id.as_str()).or_insert_with(|| {
            order.push(r.cluster_id.as_str());
            Default::default()
        });
        match r.arm {
            Arm::Inferred => entry.0.push(r.score),
            Arm::Random => entry.1.push(r.score),
        }
    }
    order
        .into_iter()
        .map(|c| {
            let (inf, rnd) = &arms[c];
            let result = one_way_anova(inf, rnd)
                .map_err(|e| Error::InvalidArgument(format!("cluster {c}: {e}")))?;
            Ok(ClusterAnova {
                cluster: c.to_string(),
                result,
            })
        })
        .collect()
}

/// CSV with columns `cluster,mean_difference,p_value`.
pub fn anova_csv(results: &[ClusterAnova]) -> String {
    let mut out = String::from("cluster,mean_difference,p_value\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{}\n",
            r.cluster,
            format_sig(r.result.mean_difference),
            format_sig(r.result.p_value)
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterpartTopic {
    pub topic: usize,
    pub id: String,
    pub diagnoses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterpart {
    pub topics: Vec<CounterpartTopic>,
}

impl Counterpart {
    pub fn diagnosis_count(&self) -> usize {
        self.topics.iter().map(|t| t.diagnoses.len()).sum()
    }
}

/// Top-term diagnosis list of a phenotype topic (top 10, probability ≥ 0.01).
pub fn topic_diagnoses(model: &TopicModel, topic: usize) -> Result<Vec<String>> {
    Ok(model
        .top_terms(topic, DEFAULT_TOP_N, DEFAULT_CUTOFF)?
        .into_iter()
        .map(|t| t.term)
        .collect())
}

/// Draws as many topics as `inferred` holds from the topics outside it and
/// trims their diagnosis lists, lowest probability first, until the total
/// matches the inferred cluster's.
pub fn generate_random_counterpart(
    inferred: &[usize],
    all_topics: &[usize],
    model: &TopicModel,
    seed: u64,
) -> Result<Counterpart> {
    let mut pool: Vec<usize> = all_topics.iter().copied().filter(|t| !inferred.contains(t)).collect();
    pool.sort_unstable();
    pool.dedup();
    if pool.len() < inferred.len() {
        return Err(Error::InvalidArgument(format!(
            "candidate pool has {} topics, {} needed",
            pool.len(),
            inferred.len()
        )));
    }
    let mut target = 0;
    for &t in inferred {
        target += topic_diagnoses(model, t)?.len();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, pool.len(), inferred.len());
    let mut lists: Vec<(usize, Vec<(f64, String)>)> = Vec::with_capacity(inferred.len());
    for i in picks.iter() {
        let t = pool[i];
        let terms = model.top_terms(t, DEFAULT_TOP_N, DEFAULT_CUTOFF)?;
        lists.push((t, terms.into_iter().map(|x| (x.probability, x.term)).collect()));
    }
    let available: usize = lists.iter().map(|(_, l)| l.len()).sum();
    if available < target {
        return Err(Error::InvalidArgument(format!(
            "counterpart reaches only {available} of {target} diagnoses (short by {})",
            target - available
        )));
    }

    // Trim the globally lowest-probability diagnosis, sparing a topic's last
    // entry while any other topic still has more than one.
    let mut excess = available - target;
    while excess > 0 {
        let multi = lists.iter().any(|(_, l)| l.len() > 1);
        let victim = lists
            .iter()
            .enumerate()
            .filter(|(_, (_, l))| !l.is_empty() && (!multi || l.len() > 1))
            .min_by(|(ia, (_, a)), (ib, (_, b))| {
                let pa = a.last().expect("non-empty").0;
                let pb = b.last().expect("non-empty").0;
                pa.total_cmp(&pb).then(ib.cmp(ia))
            })
            .map(|(i, _)| i)
            .expect("excess implies a non-empty list");
        lists[victim].1.pop();
        excess -= 1;
    }

    let counterpart = Counterpart {
        topics: lists
            .into_iter()
            .map(|(t, l)| CounterpartTopic {
                topic: t,
                id: phenotype_topic_id(t),
                diagnoses: l.into_iter().map(|(_, term)| term).collect(),
            })
            .collect(),
    };
    if counterpart.topics.len() != inferred.len() || counterpart.diagnosis_count() != target {
        return Err(Error::Invariant(format!(
            "counterpart has {} topics / {} diagnoses, expected {} / {target}",
            counterpart.topics.len(),
            counterpart.diagnosis_count(),
            inferred.len()
        )));
    }
    Ok(counterpart)
}

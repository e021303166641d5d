//! Workflow ↔ phenotype topic association and the weighted bipartite topic graph.

use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::format_sig;
use crate::topics::TopicModel;

/// Cosine similarity; a zero-norm vector yields 0.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationMatrix {
    pub workflow_topic_ids: Vec<String>,
    pub phenotype_topic_ids: Vec<String>,
    /// `values[i][j]` = association of workflow topic i with phenotype topic j.
    pub values: Vec<Vec<f64>>,
}

pub fn workflow_topic_id(index: usize) -> String {
    format!("w{}", index + 1)
}

pub fn phenotype_topic_id(index: usize) -> String {
    format!("p{}", index + 1)
}

/// Cosine of every workflow explanation vector against every phenotype one.
/// The inputs here are non-negative, so values lie in [0, 1].
pub fn association(workflow: &[Vec<f64>], phenotype: &[Vec<f64>]) -> Result<AssociationMatrix> {
    let n = workflow
        .first()
        .or(phenotype.first())
        .map(Vec::len)
        .unwrap_or(0);
    if n == 0 && (!workflow.is_empty() || !phenotype.is_empty()) {
        return Err(Error::InvalidArgument("explanation vectors must be non-empty".into()));
    }
    for v in workflow.iter().chain(phenotype) {
        if v.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: v.len() });
        }
    }
    let values = workflow
        .iter()
        .map(|w| phenotype.iter().map(|p| cosine_similarity(w, p)).collect())
        .collect::<Result<_>>()?;
    Ok(AssociationMatrix {
        workflow_topic_ids: (0..workflow.len()).map(workflow_topic_id).collect(),
        phenotype_topic_ids: (0..phenotype.len()).map(phenotype_topic_id).collect(),
        values,
    })
}

/// Associates two fitted models over the same patients.
pub fn associate_models(workflow: &TopicModel, phenotype: &TopicModel) -> Result<AssociationMatrix> {
    if workflow.doc_ids != phenotype.doc_ids {
        return Err(Error::InvalidArgument(
            "workflow and phenotype models are fit over different patient lists".into(),
        ));
    }
    let w: Vec<Vec<f64>> = (0..workflow.k)
        .map(|t| workflow.explanation_vector(t))
        .collect::<Result<_>>()?;
    let p: Vec<Vec<f64>> = (0..phenotype.k)
        .map(|t| phenotype.explanation_vector(t))
        .collect::<Result<_>>()?;
    association(&w, &p)
}

impl AssociationMatrix {
    pub fn rows(&self) -> usize {
        self.values.len()
    }

    pub fn cols(&self) -> usize {
        self.phenotype_topic_ids.len()
    }

    /// CSV: header `workflow_topic,<phenotype ids…>`, one row per workflow topic.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["workflow_topic".to_string()];
        header.extend(self.phenotype_topic_ids.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (id, row) in self.workflow_topic_ids.iter().zip(&self.values) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|&x| format_sig(x)));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn from_csv(text: &str, file: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| Error::Format {
            file: file.into(),
            line: 1,
            message: e.to_string(),
        })?;
        if headers.get(0) != Some("workflow_topic") {
            return Err(Error::Format {
                file: file.into(),
                line: 1,
                message: "expected first column `workflow_topic`".into(),
            });
        }
        let phenotype_topic_ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut workflow_topic_ids = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Format {
                file: file.into(),
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            workflow_topic_ids.push(rec[0].to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite() && (0.0..=1.0).contains(v))
                        .ok_or_else(|| Error::Row {
                            file: file.into(),
                            line,
                            message: format!("association `{x}` is not a number in [0,1]"),
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            values.push(row);
        }
        Ok(Self {
            workflow_topic_ids,
            phenotype_topic_ids,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut text = String::new();
        File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, &path.display().to_string())
    }

    pub fn transpose(&self) -> Self {
        let values = (0..self.cols())
            .map(|j| self.values.iter().map(|row| row[j]).collect())
            .collect();
        Self {
            workflow_topic_ids: self.phenotype_topic_ids.clone(),
            phenotype_topic_ids: self.workflow_topic_ids.clone(),
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicKind {
    Workflow,
    Phenotype,
}

impl fmt::Display for TopicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopicKind::Workflow => "workflow",
            TopicKind::Phenotype => "phenotype",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicNode {
    pub id: String,
    pub kind: TopicKind,
    /// Row (workflow) or column (phenotype) in the association matrix.
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicEdge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

/// Undirected weighted graph over workflow and phenotype topics. Nodes
/// `0..|W|` are workflow topics, the remainder phenotype topics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicGraph {
    pub nodes: Vec<TopicNode>,
    pub edges: Vec<TopicEdge>,
}

/// Keeps every association strictly above `weight_threshold` as an edge.
pub fn build_topic_graph(assoc: &AssociationMatrix, weight_threshold: f64) -> Result<TopicGraph> {
    if weight_threshold.is_nan() || weight_threshold < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "weight threshold must be >= 0 (got {weight_threshold})"
        )));
    }
    let n_w = assoc.workflow_topic_ids.len();
    let mut nodes: Vec<TopicNode> = assoc
        .workflow_topic_ids
        .iter()
        .enumerate()
        .map(|(i, id)| TopicNode {
            id: id.clone(),
            kind: TopicKind::Workflow,
            index: i,
        })
        .collect();
    nodes.extend(assoc.phenotype_topic_ids.iter().enumerate().map(|(j, id)| TopicNode {
        id: id.clone(),
        kind: TopicKind::Phenotype,
        index: j,
    }));
    let mut edges = Vec::new();
    for (i, row) in assoc.values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > weight_threshold {
                edges.push(TopicEdge {
                    source: i,
                    target: n_w + j,
                    weight: v,
                });
            }
        }
    }
    let graph = TopicGraph { nodes, edges };
    graph.check_bipartite()?;
    Ok(graph)
}

impl TopicGraph {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    /// Edges only cross the workflow/phenotype boundary; no loops or duplicates.
    pub fn check_bipartite(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for e in &self.edges {
            let (a, b) = (e.source.min(e.target), e.source.max(e.target));
            if b >= self.nodes.len() {
                return Err(Error::Invariant(format!("edge endpoint {b} out of range")));
            }
            if a == b {
                return Err(Error::Invariant(format!("self-loop on {}", self.nodes[a].id)));
            }
            if self.nodes[a].kind == self.nodes[b].kind {
                return Err(Error::Invariant(format!(
                    "edge {} - {} joins two {} topics",
                    self.nodes[a].id, self.nodes[b].id, self.nodes[a].kind
                )));
            }
            if !(e.weight > 0.0 && e.weight <= 1.0) {
                return Err(Error::Invariant(format!("edge weight {} outside (0,1]", e.weight)));
            }
            if !seen.insert((a, b)) {
                return Err(Error::Invariant(format!(
                    "duplicate edge {} - {}",
                    self.nodes[a].id, self.nodes[b].id
                )));
            }
        }
        Ok(())
    }
}

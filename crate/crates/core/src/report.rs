//! Topic tables, workflow graphs in DOT form, and the combined run report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assoc::{phenotype_topic_id, workflow_topic_id};
use crate::cluster::ClusterReport;
use crate::error::{Error, Result};
use crate::ingest::CodeMap;
use crate::numfmt::{format_sig, round_sig, SIGNIFICANT_DIGITS};
use crate::seqmine::Subsequence;
use crate::topics::{TopicModel, TopicSweepResult, DEFAULT_CUTOFF, DEFAULT_TOP_N};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowEdge {
    pub from: String,
    pub to: String,
    pub weight: f64,
}

/// Directed view of one workflow topic built from its top subsequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowGraphView {
    pub nodes: Vec<String>,
    pub edges: Vec<WorkflowEdge>,
    /// Nodes on a cycle of the merged graph (self-loops included).
    pub looped: Vec<String>,
}

impl WorkflowGraphView {
    /// Display name, wrapped in `+` when the node lies on a loop.
    pub fn display_name(&self, node: &str) -> String {
        if self.looped.binary_search_by(|n| n.as_str().cmp(node)).is_ok() {
            format!("+{node}+")
        } else {
            node.to_string()
        }
    }

    pub fn to_dot(&self, graph_name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph {} {{", quote(graph_name));
        for node in &self.nodes {
            let _ = writeln!(out, "  {} [label={}];", quote(node), quote(&self.display_name(node)));
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "  {} -> {} [label={}];",
                quote(&e.from),
                quote(&e.to),
                quote(&format_sig(e.weight))
            );
        }
        out.push_str("}\n");
        out
    }
}

/// DOT double-quoted string literal.
fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for ch in s.chars() {
        match ch {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            '\n' => q.push_str("\\n"),
            '\r' => {}
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

/// Merges the adjacent-pair transitions of the topic's top subsequences;
/// each transition carries the summed probability of the subsequences it
/// appears in (counted once per position).
pub fn workflow_graph(model: &TopicModel, topic: usize, n: usize, cutoff: f64) -> Result<WorkflowGraphView> {
    let mut nodes = BTreeSet::new();
    let mut weights: BTreeMap<(String, String), f64> = BTreeMap::new();
    for term in model.top_terms(topic, n, cutoff)? {
        let seq = Subsequence::parse(&term.term);
        for label in seq.labels() {
            nodes.insert(label.as_str().to_string());
        }
        for pair in seq.labels().windows(2) {
            *weights
                .entry((pair[0].as_str().to_string(), pair[1].as_str().to_string()))
                .or_insert(0.0) += term.probability;
        }
    }
    let nodes: Vec<String> = nodes.into_iter().collect();
    let edges: Vec<WorkflowEdge> = weights
        .into_iter()
        .map(|((from, to), weight)| WorkflowEdge { from, to, weight })
        .collect();
    let looped = cyclic_nodes(&nodes, &edges);
    Ok(WorkflowGraphView { nodes, edges, looped })
}

/// Nodes in a strongly connected component with more than one node, or with a
/// self-loop. Tarjan's algorithm, iterative.
fn cyclic_nodes(nodes: &[String], edges: &[WorkflowEdge]) -> Vec<String> {
    let index_of: BTreeMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let n = nodes.len();
    let mut adj = vec![Vec::new(); n];
    let mut self_loop = vec![false; n];
    for e in edges {
        let (a, b) = (index_of[e.from.as_str()], index_of[e.to.as_str()]);
        if a == b {
            self_loop[a] = true;
        }
        adj[a].push(b);
    }

    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next = 0;
    let mut on_cycle = vec![false; n];
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        let mut work: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut child)) = work.last_mut() {
            if *child < adj[v].len() {
                let w = adj[v][*child];
                *child += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            work.pop();
            if let Some(&(parent, _)) = work.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut component = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    component.push(w);
                    if w == v {
                        break;
                    }
                }
                if component.len() > 1 {
                    for w in component {
                        on_cycle[w] = true;
                    }
                }
            }
        }
    }
    (0..n)
        .filter(|&i| on_cycle[i] || self_loop[i])
        .map(|i| nodes[i].clone())
        .collect()
}

/// DOT digraph of one workflow topic.
pub fn export_workflow_dot(model: &TopicModel, topic: usize, n: usize, cutoff: f64) -> Result<String> {
    let view = workflow_graph(model, topic, n, cutoff)?;
    Ok(view.to_dot(&workflow_topic_id(topic)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicTableRow {
    pub term: String,
    pub description: String,
    pub probability: f64,
}

/// Top `n` terms of a topic with probability ≥ 0.01, descending, with
/// descriptions looked up as group codes in `codes` when supplied.
pub fn topic_table(model: &TopicModel, topic: usize, n: usize, codes: Option<&CodeMap>) -> Result<Vec<TopicTableRow>> {
    Ok(model
        .top_terms(topic, n, DEFAULT_CUTOFF)?
        .into_iter()
        .map(|t| TopicTableRow {
            description: codes
                .and_then(|c| c.group_description(&t.term))
                .unwrap_or_default()
                .to_string(),
            term: t.term,
            probability: t.probability,
        })
        .collect())
}

/// Plain-text table, probabilities to two decimals.
pub fn render_topic_table(title: &str, rows: &[TopicTableRow]) -> String {
    let width = rows.iter().map(|r| r.term.chars().count()).max().unwrap_or(4).max(4);
    let mut out = format!("{title}\n");
    let _ = writeln!(out, "  {:<width$}  {:>4}  description", "term", "prob");
    for r in rows {
        let _ = writeln!(out, "  {:<width$}  {:.2}  {}", r.term, r.probability, r.description);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub id: String,
    pub terms: Vec<TopicTableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub chosen_k: usize,
    pub candidates: Vec<crate::topics::SweepCandidate>,
}

/// The complete machine-readable run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: BTreeMap<String, String>,
    pub workflow_sweep: SweepSummary,
    pub phenotype_sweep: SweepSummary,
    pub workflow_topics: Vec<TopicSummary>,
    pub phenotype_topics: Vec<TopicSummary>,
    pub association_matrix: String,
    pub weight_threshold: f64,
    pub clusters: ClusterReport,
}

/// Everything the report draws on; absent stages are reported by name.
#[derive(Debug, Clone, Default)]
pub struct PipelineArtifacts<'a> {
    pub config: BTreeMap<String, String>,
    pub workflow_sweep: Option<&'a TopicSweepResult>,
    pub phenotype_sweep: Option<&'a TopicSweepResult>,
    pub workflow_model: Option<&'a TopicModel>,
    pub phenotype_model: Option<&'a TopicModel>,
    pub code_map: Option<&'a CodeMap>,
    pub association_path: Option<String>,
    pub weight_threshold: f64,
    pub clusters: Option<&'a ClusterReport>,
}

fn require<T>(value: Option<T>, stage: &str) -> Result<T> {
    value.ok_or_else(|| Error::MissingStage(stage.to_string()))
}

fn round(x: f64) -> f64 {
    round_sig(x, SIGNIFICANT_DIGITS)
}

fn summaries(model: &TopicModel, codes: Option<&CodeMap>, id: fn(usize) -> String) -> Result<Vec<TopicSummary>> {
    (0..model.k)
        .map(|t| {
            let mut terms = topic_table(model, t, DEFAULT_TOP_N, codes)?;
            for row in &mut terms {
                row.probability = round(row.probability);
            }
            Ok(TopicSummary { id: id(t), terms })
        })
        .collect()
}

fn sweep_summary(sweep: &TopicSweepResult) -> SweepSummary {
    SweepSummary {
        chosen_k: sweep.chosen_k,
        candidates: sweep
            .candidates
            .iter()
            .map(|c| crate::topics::SweepCandidate {
                k: c.k,
                similarity: c.similarity.map(round),
            })
            .collect(),
    }
}

/// Builds the report JSON (pretty, deterministic) and its text summary.
pub fn emit_pipeline_report(artifacts: &PipelineArtifacts<'_>) -> Result<(String, String)> {
    let wf_sweep = require(artifacts.workflow_sweep, "select-k (workflow)")?;
    let ph_sweep = require(artifacts.phenotype_sweep, "select-k (phenotype)")?;
    let wf = require(artifacts.workflow_model, "fit-topics (workflow)")?;
    let ph = require(artifacts.phenotype_model, "fit-topics (phenotype)")?;
    let assoc = require(artifacts.association_path.clone(), "associate")?;
    let clusters = require(artifacts.clusters, "cluster")?;

    let report = PipelineReport {
        config: artifacts.config.clone(),
        workflow_sweep: sweep_summary(wf_sweep),
        phenotype_sweep: sweep_summary(ph_sweep),
        workflow_topics: summaries(wf, None, workflow_topic_id)?,
        phenotype_topics: summaries(ph, artifacts.code_map, phenotype_topic_id)?,
        association_matrix: assoc,
        weight_threshold: artifacts.weight_threshold,
        clusters: ClusterReport {
            modularity: round(clusters.modularity),
            ..clusters.clone()
        },
    };
    let json = serde_json::to_string_pretty(&report)? + "\n";
    Ok((json, render_summary(&report)))
}

/// Text summary in the order of a results section: topic counts, learned
/// topics, associations, clusters.
pub fn render_summary(report: &PipelineReport) -> String {
    let mut out = String::new();
    let min_sim = |s: &SweepSummary| {
        s.candidates
            .iter()
            .find(|c| c.k == s.chosen_k)
            .and_then(|c| c.similarity)
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
    };
    out.push_str("Number of topics\n");
    let _ = writeln!(
        out,
        "  workflow topics: {} (mean pairwise similarity {})",
        report.workflow_sweep.chosen_k,
        min_sim(&report.workflow_sweep)
    );
    let _ = writeln!(
        out,
        "  phenotype topics: {} (mean pairwise similarity {})",
        report.phenotype_sweep.chosen_k,
        min_sim(&report.phenotype_sweep)
    );
    out.push_str("\nLearned topics\n");
    for t in report.workflow_topics.iter().chain(&report.phenotype_topics) {
        out.push_str(&render_topic_table(&format!("  {}", t.id), &t.terms));
    }
    out.push_str("\nAssociations\n");
    let _ = writeln!(out, "  matrix: {}", report.association_matrix);
    let _ = writeln!(out, "  edge threshold: {}", format_sig(report.weight_threshold));
    out.push_str("\nClusters\n");
    let _ = writeln!(out, "  modularity: {:.4}", report.clusters.modularity);
    for c in &report.clusters.clusters {
        let _ = writeln!(out, "  {}", c.id);
        let _ = writeln!(out, "    phenotype topics: {}", c.phenotype_topics.join(", "));
        let _ = writeln!(out, "    workflow topics: {}", c.workflow_topics.join(", "));
    }
    if !report.clusters.excluded.is_empty() {
        out.push_str("  workflow-only communities\n");
        for group in &report.clusters.excluded {
            let _ = writeln!(out, "    {}", group.join(", "));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::PhenotypeCluster;
    use crate::topics::tests_support::model_from;

    fn workflow_model(terms: &[(&str, f64)]) -> TopicModel {
        let rest = 1.0 - terms.iter().map(|t| t.1).sum::<f64>();
        let mut vocab: Vec<String> = terms.iter().map(|t| t.0.to_string()).collect();
        let mut phi: Vec<f64> = terms.iter().map(|t| t.1).collect();
        vocab.push("filler".into());
        phi.push(rest);
        let mut m = model_from(vec![phi], vec![vec![1.0]]);
        m.vocab = vocab;
        m
    }

    #[test]
    fn single_transition() {
        let m = workflow_model(&[("a -> b", 0.3)]);
        let view = workflow_graph(&m, 0, 10, 0.01).unwrap();
        assert_eq!(view.edges.len(), 1);
        assert_eq!(view.edges[0].weight, 0.3);
        let dot = view.to_dot("w1");
        assert!(dot.contains("\"a\" -> \"b\" [label=\"0.3\"];"));
        assert!(view.looped.is_empty());
    }

    #[test]
    fn two_cycle_annotates_both_nodes() {
        let m = workflow_model(&[("a -> b", 0.2), ("b -> a", 0.1)]);
        let view = workflow_graph(&m, 0, 10, 0.01).unwrap();
        assert_eq!(view.looped, vec!["a", "b"]);
        let dot = view.to_dot("w1");
        assert!(dot.contains("\"a\" [label=\"+a+\"];"));
        assert!(dot.contains("\"b\" [label=\"+b+\"];"));
    }

    #[test]
    fn unigram_topic_has_nodes_only() {
        let m = workflow_model(&[("a", 0.5), ("b", 0.3)]);
        let view = workflow_graph(&m, 0, 10, 0.01).unwrap();
        assert!(view.edges.is_empty());
        assert!(view.nodes.contains(&"a".to_string()));
    }

    #[test]
    fn empty_top_terms_give_empty_body() {
        let m = workflow_model(&[]);
        let view = workflow_graph(&m, 0, 10, 1.1).unwrap();
        assert_eq!(view.to_dot("w1"), "digraph \"w1\" {\n}\n");
    }

    #[test]
    fn weights_sum_to_positional_mass() {
        let terms = [("a -> b -> c", 0.2), ("b -> c", 0.15), ("c -> a -> b -> d", 0.1), ("d", 0.05)];
        let m = workflow_model(&terms);
        let view = workflow_graph(&m, 0, 10, 0.01).unwrap();
        let expected: f64 = terms
            .iter()
            .map(|(t, p)| (Subsequence::parse(t).len() - 1) as f64 * p)
            .sum();
        let got: f64 = view.edges.iter().map(|e| e.weight).sum();
        assert!((got - expected).abs() < 1e-12);
        assert_eq!(view.looped, vec!["a", "b", "c"]);
        let bc = view.edges.iter().find(|e| e.from == "b" && e.to == "c").unwrap();
        assert!((bc.weight - 0.35).abs() < 1e-12);
    }

    #[test]
    fn self_transition_is_a_loop() {
        let m = workflow_model(&[("a -> a -> b", 0.4)]);
        let view = workflow_graph(&m, 0, 10, 0.01).unwrap();
        assert_eq!(view.looped, vec!["a"]);
    }

    #[test]
    fn names_are_quoted_and_escaped() {
        assert_eq!(quote(r#"nurse|"x"\y"#), r#""nurse|\"x\"\\y""#);
        let m = workflow_model(&[("say \"hi\" -> b\\c", 0.3)]);
        let dot = export_workflow_dot(&m, 0, 10, 0.01).unwrap();
        assert!(dot.contains(r#""say \"hi\"" -> "b\\c""#));
    }

    #[test]
    fn table_rows_and_descriptions() {
        let mut codes = CodeMap::new();
        codes.insert("650", "1010", "Tests associated with child birth").unwrap();
        let mut m = model_from(vec![vec![0.25, 0.7, 0.05 - 0.001, 0.001]], vec![vec![1.0]]);
        m.vocab = vec!["1010".into(), "1020".into(), "1030".into(), "1040".into()];
        let rows = topic_table(&m, 0, 10, Some(&codes)).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].term, "1020");
        assert_eq!(rows[0].description, "");
        assert_eq!(
            rows[1],
            TopicTableRow {
                term: "1010".into(),
                description: "Tests associated with child birth".into(),
                probability: 0.25
            }
        );
        assert!(rows.iter().all(|r| r.probability >= 0.01));
        assert_eq!(topic_table(&m, 0, 1, None).unwrap().len(), 1);
        let text = render_topic_table("p1", &rows);
        assert!(text.contains("0.25  Tests associated with child birth"));
    }

    fn artifacts_fixture() -> (TopicSweepResult, TopicModel, TopicModel, ClusterReport) {
        let sweep = TopicSweepResult {
            candidates: vec![
                crate::topics::SweepCandidate { k: 2, similarity: Some(0.1) },
                crate::topics::SweepCandidate { k: 3, similarity: Some(0.05) },
            ],
            chosen_k: 3,
        };
        let mut wf = model_from(vec![vec![0.6, 0.4], vec![0.3, 0.7]], vec![vec![0.5, 0.5]]);
        wf.vocab = vec!["a -> b".into(), "b -> c".into()];
        let ph = model_from(vec![vec![0.9, 0.1]], vec![vec![1.0]]);
        let clusters = ClusterReport {
            modularity: 0.123456789012345,
            clusters: (1..=4)
                .map(|i| PhenotypeCluster {
                    id: format!("c{i}"),
                    phenotype_topics: vec![format!("p{i}")],
                    workflow_topics: vec![format!("w{i}")],
                })
                .collect(),
            excluded: vec![],
        };
        (sweep, wf, ph, clusters)
    }

    #[test]
    fn report_is_deterministic_and_lists_clusters() {
        let (sweep, wf, ph, clusters) = artifacts_fixture();
        let artifacts = PipelineArtifacts {
            config: BTreeMap::from([("seed".to_string(), "7".to_string())]),
            workflow_sweep: Some(&sweep),
            phenotype_sweep: Some(&sweep),
            workflow_model: Some(&wf),
            phenotype_model: Some(&ph),
            code_map: None,
            association_path: Some("association.csv".into()),
            weight_threshold: 0.0,
            clusters: Some(&clusters),
        };
        let (json, summary) = emit_pipeline_report(&artifacts).unwrap();
        let (again, _) = emit_pipeline_report(&artifacts).unwrap();
        assert_eq!(json, again);
        assert_eq!(summary.matches("\n  c").count(), 4);
        let parsed: PipelineReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.clusters.modularity, 0.123456789012);
    }

    #[test]
    fn missing_stage_is_named() {
        let (sweep, wf, ph, _) = artifacts_fixture();
        let artifacts = PipelineArtifacts {
            workflow_sweep: Some(&sweep),
            phenotype_sweep: Some(&sweep),
            workflow_model: Some(&wf),
            phenotype_model: Some(&ph),
            association_path: Some("association.csv".into()),
            ..Default::default()
        };
        match emit_pipeline_report(&artifacts) {
            Err(Error::MissingStage(s)) => assert_eq!(s, "cluster"),
            other => panic!("unexpected {other:?}"),
        }
    }
}

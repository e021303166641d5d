//! Modularity, Louvain community detection and phenotype-cluster extraction.

mod graph;
mod louvain;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use graph::{modularity as weighted_modularity, WeightedGraph};
pub use louvain::{
    louvain_best_of, louvain_canonical, louvain_weighted, normalize_assignment, LouvainOutcome,
    ScanOrder, MIN_GAIN,
};

use crate::assoc::{TopicGraph, TopicKind};
use crate::error::{Error, Result};

/// Community of every graph node; ids are dense and 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: Vec<usize>,
}

impl Partition {
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        let n_comm = assignment.iter().max().map_or(0, |&c| c + 1);
        let mut used = vec![false; n_comm];
        for &c in &assignment {
            used[c] = true;
        }
        if used.iter().any(|u| !u) {
            return Err(Error::Invariant("community ids are not contiguous".into()));
        }
        Ok(Self { assignment })
    }

    pub fn n_communities(&self) -> usize {
        self.assignment.iter().max().map_or(0, |&c| c + 1)
    }

    pub fn members(&self, community: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == community)
            .map(|(i, _)| i)
    }
}

pub fn modularity(graph: &TopicGraph, partition: &Partition) -> Result<f64> {
    if partition.assignment.len() != graph.n_nodes() {
        return Err(Error::LengthMismatch {
            expected: graph.n_nodes(),
            found: partition.assignment.len(),
        });
    }
    graph::modularity(&WeightedGraph::from_topic_graph(graph)?, &partition.assignment)
}

/// Independent Louvain runs behind one seed.
pub const RESTARTS: u64 = 8;

/// Best of [`RESTARTS`] shuffled runs whose scan seeds are derived from `seed`.
pub fn louvain_seeded(graph: &WeightedGraph, seed: u64) -> Result<LouvainOutcome> {
    let seeds: Vec<u64> = (0..RESTARTS)
        .map(|r| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r))
        .collect();
    louvain_best_of(graph, &seeds)
}

/// Louvain on the topic graph; deterministic for a fixed `seed`.
pub fn louvain(graph: &TopicGraph, seed: u64) -> Result<Partition> {
    let outcome = louvain_seeded(&WeightedGraph::from_topic_graph(graph)?, seed)?;
    Ok(Partition {
        assignment: outcome.assignment,
    })
}

/// Best-of-N Louvain driver over the topic graph.
pub fn louvain_topic_graph(graph: &TopicGraph, seeds: &[u64]) -> Result<(Partition, f64)> {
    let outcome = louvain_best_of(&WeightedGraph::from_topic_graph(graph)?, seeds)?;
    Ok((
        Partition {
            assignment: outcome.assignment,
        },
        outcome.modularity,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhenotypeCluster {
    pub id: String,
    pub phenotype_topics: Vec<String>,
    pub workflow_topics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub modularity: f64,
    pub clusters: Vec<PhenotypeCluster>,
    /// Communities made only of workflow topics, as lists of their ids.
    pub excluded: Vec<Vec<String>>,
}

/// One cluster per community holding a phenotype topic, ordered by the first
/// phenotype topic they contain; workflow-only communities go to `excluded`.
pub fn extract_phenotype_clusters(partition: &Partition, graph: &TopicGraph) -> Result<ClusterReport> {
    if partition.assignment.len() != graph.n_nodes() {
        return Err(Error::LengthMismatch {
            expected: graph.n_nodes(),
            found: partition.assignment.len(),
        });
    }
    let n_comm = partition.n_communities();
    let mut phenos: Vec<Vec<usize>> = vec![Vec::new(); n_comm];
    let mut flows: Vec<Vec<usize>> = vec![Vec::new(); n_comm];
    for (i, node) in graph.nodes.iter().enumerate() {
        let c = partition.assignment[i];
        match node.kind {
            TopicKind::Phenotype => phenos[c].push(i),
            TopicKind::Workflow => flows[c].push(i),
        }
    }
    let ids = |nodes: &[usize]| -> Vec<String> {
        let mut v: Vec<&crate::assoc::TopicNode> = nodes.iter().map(|&i| &graph.nodes[i]).collect();
        v.sort_by_key(|n| n.index);
        v.into_iter().map(|n| n.id.clone()).collect()
    };

    let mut order: Vec<usize> = (0..n_comm).filter(|&c| !phenos[c].is_empty()).collect();
    order.sort_by_key(|&c| phenos[c].iter().map(|&i| graph.nodes[i].index).min());
    let clusters = order
        .iter()
        .enumerate()
        .map(|(n, &c)| PhenotypeCluster {
            id: format!("c{}", n + 1),
            phenotype_topics: ids(&phenos[c]),
            workflow_topics: ids(&flows[c]),
        })
        .collect();
    let mut excluded: Vec<Vec<String>> = (0..n_comm)
        .filter(|&c| phenos[c].is_empty() && !flows[c].is_empty())
        .map(|c| ids(&flows[c]))
        .collect();
    excluded.sort_by_key(|ids| {
        ids.first()
            .and_then(|id| graph.nodes.iter().find(|n| &n.id == id))
            .map(|n| n.index)
    });

    Ok(ClusterReport {
        modularity: modularity(graph, partition).unwrap_or(0.0),
        clusters,
        excluded,
    })
}

impl ClusterReport {
    /// Cluster position of each phenotype topic id in `phenotype_ids`.
    pub fn phenotype_labels(&self, phenotype_ids: &[String]) -> Result<Vec<usize>> {
        phenotype_ids
            .iter()
            .map(|id| {
                self.clusters
                    .iter()
                    .position(|c| c.phenotype_topics.contains(id))
                    .ok_or_else(|| Error::Invariant(format!("phenotype topic {id} is in no cluster")))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let rounded = ClusterReport {
            modularity: crate::numfmt::round_sig(self.modularity, crate::numfmt::SIGNIFICANT_DIGITS),
            ..self.clone()
        };
        Ok(serde_json::to_string_pretty(&rounded)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assoc::{build_topic_graph, AssociationMatrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Restricted-growth enumeration of every set partition of `n` nodes.
    pub(crate) fn all_partitions(n: usize) -> Vec<Vec<usize>> {
        fn rec(i: usize, n: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if i == n {
                out.push(cur.clone());
                return;
            }
            for c in 0..=max {
                cur.push(c);
                rec(i + 1, n, if c == max { max + 1 } else { max }, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(0, n, 0, &mut Vec::new(), &mut out);
        out
    }

    /// Modularity by the Aij − kikj/2m double sum, independent of the
    /// community-aggregate formula used in the implementation.
    fn modularity_double_sum(n: usize, edges: &[(usize, usize, f64)], part: &[usize]) -> f64 {
        let mut a = vec![vec![0.0; n]; n];
        for &(i, j, w) in edges {
            a[i][j] += w;
            a[j][i] += w;
        }
        let k: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
        let m2: f64 = k.iter().sum();
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                if part[i] == part[j] {
                    q += a[i][j] - k[i] * k[j] / m2;
                }
            }
        }
        q / m2
    }

    fn brute_max(n: usize, edges: &[(usize, usize, f64)]) -> f64 {
        all_partitions(n)
            .iter()
            .map(|p| modularity_double_sum(n, edges, p))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn set_partition_counts_are_bell_numbers() {
        let bell = [1, 1, 2, 5, 15, 52, 203, 877, 4140];
        for (n, &b) in bell.iter().enumerate() {
            assert_eq!(all_partitions(n).len(), b);
        }
    }

    #[test]
    fn modularity_examples() {
        let g = WeightedGraph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert_eq!(graph::modularity(&g, &[0, 0, 1, 1]).unwrap(), 0.5);
        assert_eq!(graph::modularity(&g, &[0, 0, 0, 0]).unwrap(), 0.0);
        let edge = WeightedGraph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(graph::modularity(&edge, &[0, 1]).unwrap(), -0.5);
        let empty = WeightedGraph::from_edges(1, &[]).unwrap();
        assert!(matches!(graph::modularity(&empty, &[0]), Err(Error::EmptyGraph)));
    }

    #[test]
    fn modularity_matches_double_sum() {
        let edges = [(0, 1, 0.3), (1, 2, 0.9), (2, 0, 0.4), (2, 3, 0.2), (3, 4, 0.7)];
        let g = WeightedGraph::from_edges(5, &edges).unwrap();
        for p in all_partitions(5) {
            let a = graph::modularity(&g, &p).unwrap();
            let b = modularity_double_sum(5, &edges, &p);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_triangles_recovered() {
        let edges = [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0)];
        let g = WeightedGraph::from_edges(6, &edges).unwrap();
        for seed in 0..10 {
            let out = louvain_weighted(&g, ScanOrder::Shuffled(seed)).unwrap();
            assert_eq!(out.assignment, vec![0, 0, 0, 1, 1, 1]);
            assert!((out.modularity - brute_max(6, &edges)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_edge_joins_both_ends() {
        let g = WeightedGraph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let out = louvain_weighted(&g, ScanOrder::Shuffled(3)).unwrap();
        assert_eq!(out.assignment, vec![0, 0]);
        assert_eq!(out.modularity, 0.0);
    }

    #[test]
    fn edgeless_graph_is_an_error() {
        let g = WeightedGraph::from_edges(1, &[]).unwrap();
        assert!(matches!(louvain_weighted(&g, ScanOrder::Sequential), Err(Error::EmptyGraph)));
        let a = AssociationMatrix {
            workflow_topic_ids: vec!["w1".into()],
            phenotype_topic_ids: vec![],
            values: vec![vec![]],
        };
        let tg = build_topic_graph(&a, 0.0).unwrap();
        assert!(matches!(louvain(&tg, 0), Err(Error::EmptyGraph)));
    }

    #[test]
    fn same_seed_same_partition() {
        let edges = random_edges(&mut ChaCha8Rng::seed_from_u64(77), 8);
        let g = WeightedGraph::from_edges(8, &edges).unwrap();
        let a = louvain_best_of(&g, &[1, 2, 3]).unwrap();
        let b = louvain_best_of(&g, &[1, 2, 3]).unwrap();
        assert_eq!(a, b);
    }

    fn random_edges(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize, f64)> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.5) {
                    edges.push((i, j, rng.random_range(0.05..1.0)));
                }
            }
        }
        edges
    }

    fn bipartite_fixture() -> TopicGraph {
        let a = AssociationMatrix {
            workflow_topic_ids: vec!["w1".into(), "w2".into(), "w3".into(), "w4".into(), "w5".into()],
            phenotype_topic_ids: vec!["p1".into(), "p2".into(), "p3".into()],
            values: vec![
                vec![0.9, 0.8, 0.0],
                vec![0.7, 0.9, 0.0],
                vec![0.0, 0.1, 0.9],
                vec![0.0, 0.0, 0.8],
                vec![0.0, 0.0, 0.0],
            ],
        };
        build_topic_graph(&a, 0.0).unwrap()
    }

    #[test]
    fn clusters_from_partition() {
        let g = bipartite_fixture();
        // nodes: w1..w5 = 0..5, p1..p3 = 5..8
        let part = Partition::new(vec![0, 0, 1, 1, 2, 0, 0, 1]).unwrap();
        let report = extract_phenotype_clusters(&part, &g).unwrap();
        assert_eq!(
            report.clusters,
            vec![
                PhenotypeCluster {
                    id: "c1".into(),
                    phenotype_topics: vec!["p1".into(), "p2".into()],
                    workflow_topics: vec!["w1".into(), "w2".into()],
                },
                PhenotypeCluster {
                    id: "c2".into(),
                    phenotype_topics: vec!["p3".into()],
                    workflow_topics: vec!["w3".into(), "w4".into()],
                },
            ]
        );
        assert_eq!(report.excluded, vec![vec!["w5".to_string()]]);
        assert!((-1.0..=1.0).contains(&report.modularity));
        let labels = report
            .phenotype_labels(&["p1".into(), "p2".into(), "p3".into()])
            .unwrap();
        assert_eq!(labels, vec![0, 0, 1]);
    }

    #[test]
    fn louvain_on_topic_graph_finds_blocks() {
        let g = bipartite_fixture();
        let (part, q) = louvain_topic_graph(&g, &[0, 1, 2, 3]).unwrap();
        let report = extract_phenotype_clusters(&part, &g).unwrap();
        assert_eq!(report.clusters.len(), 2);
        assert_eq!(report.clusters[0].phenotype_topics, vec!["p1", "p2"]);
        assert_eq!(report.clusters[1].phenotype_topics, vec!["p3"]);
        assert!(q > 0.0);
        assert_eq!(report.excluded, vec![vec!["w5".to_string()]]);
    }

    #[test]
    fn partition_requires_contiguous_ids() {
        assert!(Partition::new(vec![0, 2]).is_err());
        assert_eq!(Partition::new(vec![1, 0, 1]).unwrap().n_communities(), 2);
    }

    #[test]
    fn report_json_shape() {
        let g = bipartite_fixture();
        let part = Partition::new(vec![0, 0, 1, 1, 2, 0, 0, 1]).unwrap();
        let report = extract_phenotype_clusters(&part, &g).unwrap();
        let v: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        assert!(v["modularity"].is_number());
        assert_eq!(v["clusters"][0]["id"], "c1");
        assert_eq!(v["clusters"][0]["phenotype_topics"][1], "p2");
        assert_eq!(v["excluded"][0][0], "w5");
    }

    fn oracle_trials(seed: u64, trials: u64) -> Vec<(u64, f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for trial in 0..trials {
            let n = rng.random_range(3..=8);
            let edges = random_edges(&mut rng, n);
            if edges.is_empty() {
                continue;
            }
            let g = WeightedGraph::from_edges(n, &edges).unwrap();
            let got = louvain_seeded(&g, trial).unwrap().modularity;
            let best = brute_max(n, &edges);
            out.push((trial, got, best));
        }
        out
    }

    #[test]
    fn near_brute_force_optimum_on_small_graphs() {
        for (trial, got, best) in oracle_trials(2024, 50) {
            assert!(got >= 0.99 * best - 1e-12, "trial {trial}: {got} vs {best}");
        }
    }

    #[test]
    fn near_brute_force_optimum_wide() {
        let misses: Vec<_> = oracle_trials(7, 1000)
            .into_iter()
            .filter(|&(_, got, best)| got < 0.99 * best - 1e-12)
            .collect();
        assert!(misses.is_empty(), "{} misses: {misses:?}", misses.len());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn levels_never_lower_modularity(seed in 0u64..10_000, n in 3usize..12) {
            let edges = random_edges(&mut ChaCha8Rng::seed_from_u64(seed), n);
            prop_assume!(!edges.is_empty());
            let g = WeightedGraph::from_edges(n, &edges).unwrap();
            let out = louvain_weighted(&g, ScanOrder::Shuffled(seed)).unwrap();
            let mut prev = graph::modularity(&g, &(0..n).collect::<Vec<_>>()).unwrap();
            for &q in &out.level_modularity {
                prop_assert!(q >= prev - 1e-12);
                prev = q;
            }
            if out.n_communities() == 1 {
                prop_assert_eq!(out.modularity, 0.0);
            }
        }

        #[test]
        fn relabelling_preserves_canonical_clusters(seed in 0u64..10_000, n in 3usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let edges = random_edges(&mut rng, n);
            prop_assume!(!edges.is_empty());
            let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            perm.shuffle(&mut rng);
            let permuted_edges: Vec<_> = edges.iter().map(|&(a, b, w)| (perm[a], perm[b], w)).collect();
            let mut permuted_names = vec![String::new(); n];
            for i in 0..n {
                permuted_names[perm[i]] = names[i].clone();
            }
            let a = louvain_canonical(&WeightedGraph::from_edges(n, &edges).unwrap(), &names).unwrap();
            let b = louvain_canonical(&WeightedGraph::from_edges(n, &permuted_edges).unwrap(), &permuted_names).unwrap();
            let groups = |assign: &[usize], names: &[String]| {
                let mut g: Vec<Vec<String>> = vec![Vec::new(); assign.iter().max().unwrap() + 1];
                for (i, &c) in assign.iter().enumerate() {
                    g[c].push(names[i].clone());
                }
                for x in &mut g { x.sort(); }
                g.sort();
                g
            };
            prop_assert_eq!(groups(&a.assignment, &names), groups(&b.assignment, &permuted_names));
            prop_assert!((a.modularity - b.modularity).abs() < 1e-12);
        }
    }
}

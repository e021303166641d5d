use crate::assoc::TopicGraph;
use crate::error::{Error, Result};

/// Undirected weighted graph with optional self-loops, as used by the
/// aggregation phase of Louvain.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    /// Neighbour lists without self entries, sorted by neighbour index.
    adj: Vec<Vec<(usize, f64)>>,
    /// Self-loop contribution to both degree and internal weight
    /// (twice the internal edge weight of an aggregated community).
    loops: Vec<f64>,
}

impl WeightedGraph {
    /// Builds from undirected edges; parallel edges are merged by summing.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut loops = vec![0.0; n];
        for &(a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::IndexOutOfRange {
                    index: a.max(b),
                    len: n,
                });
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidArgument(format!("edge weight {w} must be finite and >= 0")));
            }
            if a == b {
                loops[a] += 2.0 * w;
            } else {
                adj[a].push((b, w));
                adj[b].push((a, w));
            }
        }
        for list in &mut adj {
            list.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(list.len());
            for &(j, w) in list.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += w,
                    _ => merged.push((j, w)),
                }
            }
            *list = merged;
        }
        Ok(Self { adj, loops })
    }

    pub fn from_topic_graph(graph: &TopicGraph) -> Result<Self> {
        let edges: Vec<(usize, usize, f64)> = graph
            .edges
            .iter()
            .map(|e| (e.source, e.target, e.weight))
            .collect();
        Self::from_edges(graph.n_nodes(), &edges)
    }

    pub(crate) fn from_parts(adj: Vec<Vec<(usize, f64)>>, loops: Vec<f64>) -> Self {
        Self { adj, loops }
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    pub fn self_loop(&self, i: usize) -> f64 {
        self.loops[i]
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|&(_, w)| w).sum::<f64>() + self.loops[i]
    }

    /// Total edge weight m (each undirected edge counted once).
    pub fn total_weight(&self) -> f64 {
        (0..self.n_nodes()).map(|i| self.degree(i)).sum::<f64>() / 2.0
    }

    /// Relabels nodes: node `i` of `self` becomes node `order_pos[i]`.
    pub fn permuted(&self, new_index: &[usize]) -> Self {
        let n = self.n_nodes();
        let mut adj = vec![Vec::new(); n];
        let mut loops = vec![0.0; n];
        for i in 0..n {
            let ni = new_index[i];
            loops[ni] = self.loops[i];
            adj[ni] = self.adj[i].iter().map(|&(j, w)| (new_index[j], w)).collect();
            adj[ni].sort_by_key(|&(j, _)| j);
        }
        Self { adj, loops }
    }
}

/// Newman modularity Q = Σ_c [ in_c / 2m − (tot_c / 2m)² ] at resolution 1.
pub fn modularity(graph: &WeightedGraph, assignment: &[usize]) -> Result<f64> {
    if assignment.len() != graph.n_nodes() {
        return Err(Error::LengthMismatch {
            expected: graph.n_nodes(),
            found: assignment.len(),
        });
    }
    let n_comm = assignment.iter().max().map_or(0, |&c| c + 1);
    let mut inner = vec![0.0; n_comm];
    let mut tot = vec![0.0; n_comm];
    let mut two_m = 0.0;
    for i in 0..graph.n_nodes() {
        let c = assignment[i];
        // same summation order for in and tot so a single community gives exactly 0
        let mut node_in = graph.self_loop(i);
        let mut node_deg = graph.self_loop(i);
        for &(j, w) in graph.neighbors(i) {
            node_deg += w;
            if assignment[j] == c {
                node_in += w;
            }
        }
        inner[c] += node_in;
        tot[c] += node_deg;
        two_m += node_deg;
    }
    if two_m <= 0.0 {
        return Err(Error::EmptyGraph);
    }
    Ok(inner
        .iter()
        .zip(&tot)
        .map(|(&i, &t)| i / two_m - (t / two_m) * (t / two_m))
        .sum())
}

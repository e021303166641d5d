//! Two-phase Louvain modularity optimisation.
//!
//! Phase 1 moves single nodes to the neighbouring community with the largest
//! modularity gain until no move helps; phase 2 collapses communities into
//! nodes. Phases repeat until a level produces no move.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{modularity, WeightedGraph};
use crate::error::{Error, Result};

/// Moves must beat staying put by more than this.
pub const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanOrder {
    /// Seeded shuffle, re-drawn every pass.
    Shuffled(u64),
    /// Ascending node index every pass.
    Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LouvainOutcome {
    /// Dense community id per original node, numbered by first appearance.
    pub assignment: Vec<usize>,
    pub modularity: f64,
    /// Modularity of the flattened partition on the input graph after each level.
    pub level_modularity: Vec<f64>,
}

impl LouvainOutcome {
    pub fn n_communities(&self) -> usize {
        self.assignment.iter().max().map_or(0, |&c| c + 1)
    }
}

/// Renumbers labels densely in order of first appearance.
pub fn normalize_assignment(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Local moving phase starting from `init` (community ids below n);
/// returns the community of every node and whether any node moved.
fn local_moving(graph: &WeightedGraph, init: Vec<usize>, order: &mut ScanState) -> (Vec<usize>, bool) {
    let n = graph.n_nodes();
    let m2 = 2.0 * graph.total_weight();
    let degree: Vec<f64> = (0..n).map(|i| graph.degree(i)).collect();
    let mut comm = init;
    let mut tot = vec![0.0; n];
    for i in 0..n {
        tot[comm[i]] += degree[i];
    }
    let mut weight_to = vec![0.0; n];
    let mut marked = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut any_move = false;

    loop {
        let mut moved = false;
        for &i in order.next_pass(n).iter() {
            let ci = comm[i];
            let ki = degree[i];
            for &(j, w) in graph.neighbors(i) {
                let cj = comm[j];
                if !marked[cj] {
                    marked[cj] = true;
                    touched.push(cj);
                }
                weight_to[cj] += w;
            }
            tot[ci] -= ki;

            let gain = |c: usize, w_in: f64| w_in - tot[c] * ki / m2;
            let stay = gain(ci, weight_to[ci]);
            // ascending scan with strict improvement keeps the lowest id among ties
            touched.sort_unstable();
            let mut best_c = ci;
            let mut best_gain = f64::NEG_INFINITY;
            for &c in touched.iter().filter(|&&c| c != ci) {
                let g = gain(c, weight_to[c]);
                if g > best_gain {
                    best_gain = g;
                    best_c = c;
                }
            }
            if best_gain <= stay + MIN_GAIN {
                best_c = ci;
            }

            tot[best_c] += ki;
            if best_c != ci {
                comm[i] = best_c;
                moved = true;
                any_move = true;
            }
            for &c in &touched {
                weight_to[c] = 0.0;
                marked[c] = false;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
    }
    (comm, any_move)
}

/// Collapses each community of `graph` into a single node.
fn aggregate(graph: &WeightedGraph, comm: &[usize], n_comm: usize) -> WeightedGraph {
    let mut loops = vec![0.0; n_comm];
    let mut maps: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n_comm];
    for i in 0..graph.n_nodes() {
        let ci = comm[i];
        loops[ci] += graph.self_loop(i);
        for &(j, w) in graph.neighbors(i) {
            let cj = comm[j];
            if cj == ci {
                loops[ci] += w;
            } else {
                *maps[ci].entry(cj).or_insert(0.0) += w;
            }
        }
    }
    let adj = maps.into_iter().map(|m| m.into_iter().collect()).collect();
    WeightedGraph::from_parts(adj, loops)
}

enum ScanState {
    Shuffled { rng: Box<ChaCha8Rng>, buf: Vec<usize> },
    Sequential { buf: Vec<usize> },
}

impl ScanState {
    fn new(order: ScanOrder) -> Self {
        match order {
            ScanOrder::Shuffled(seed) => ScanState::Shuffled {
                rng: Box::new(ChaCha8Rng::seed_from_u64(seed)),
                buf: Vec::new(),
            },
            ScanOrder::Sequential => ScanState::Sequential { buf: Vec::new() },
        }
    }

    fn next_pass(&mut self, n: usize) -> Vec<usize> {
        match self {
            ScanState::Shuffled { rng, buf } => {
                buf.clear();
                buf.extend(0..n);
                buf.shuffle(rng.as_mut());
                buf.clone()
            }
            ScanState::Sequential { buf } => {
                buf.clear();
                buf.extend(0..n);
                buf.clone()
            }
        }
    }
}

/// Runs Louvain to convergence on `graph`.
///
/// Once the level loop stops, one more local-moving pass is made on the
/// input graph from the flattened partition; if it still finds gains the
/// level loop resumes from the refined partition.
pub fn louvain_weighted(graph: &WeightedGraph, order: ScanOrder) -> Result<LouvainOutcome> {
    if graph.n_nodes() == 0 || graph.total_weight() <= 0.0 {
        return Err(Error::EmptyGraph);
    }
    let n = graph.n_nodes();
    let mut scan = ScanState::new(order);
    let mut membership: Vec<usize> = (0..n).collect();
    let mut level_modularity = Vec::new();
    let mut current_q = modularity(graph, &membership)?;

    loop {
        run_levels(graph, &mut membership, &mut current_q, &mut level_modularity, &mut scan)?;
        let (refined, moved) = local_moving(graph, membership.clone(), &mut scan);
        if !moved {
            break;
        }
        let refined = normalize_assignment(&refined);
        let q = modularity(graph, &refined)?;
        if q <= current_q + MIN_GAIN {
            break;
        }
        level_modularity.push(q);
        current_q = q;
        membership = refined;
    }

    // Plain Louvain stalls in local optima on small dense graphs. Each round
    // restarts local moving, aggregation and move-sequence tuning from
    // perturbed partitions: the current one, each community dissolved into
    // singletons (optionally pushing each former member into its best
    // surviving community first), and each pair of communities merged. The
    // first strict improvement is kept.
    let mut rounds = 0;
    'rounds: while rounds < n {
        rounds += 1;
        let n_comm = membership.iter().max().map_or(0, |&c| c + 1);
        let mut starts = vec![membership.clone()];
        for c in 0..n_comm {
            let mut next = n_comm;
            let dissolved: Vec<usize> = membership
                .iter()
                .map(|&m| {
                    if m == c {
                        next += 1;
                        next - 1
                    } else {
                        m
                    }
                })
                .collect();
            if next - n_comm < 2 {
                continue;
            }
            let mut pushed = dissolved.clone();
            scatter(graph, &mut pushed, n_comm);
            starts.push(dissolved);
            starts.push(pushed);
        }
        if n_comm <= MAX_PAIR_MERGES {
            for a in 0..n_comm {
                for b in a + 1..n_comm {
                    starts.push(membership.iter().map(|&m| if m == b { a } else { m }).collect());
                }
            }
        }
        for start in starts {
            let (trial, q) = polish(graph, start, &mut scan)?;
            if q > current_q + MIN_GAIN {
                membership = trial;
                current_q = q;
                level_modularity.push(q);
                continue 'rounds;
            }
        }
        break;
    }

    let assignment = normalize_assignment(&membership);
    let modularity = modularity(graph, &assignment)?;
    Ok(LouvainOutcome {
        assignment,
        modularity,
        level_modularity,
    })
}

/// Pairwise community merges are tried only up to this many communities.
const MAX_PAIR_MERGES: usize = 64;

/// Largest graph the move-sequence refinement is applied to.
const REFINE_MAX_NODES: usize = 2000;

/// Kernighan-Lin style fine tuning: repeatedly applies the best single-node
/// move (possibly a losing one, possibly into an empty community) with each
/// node moved at most once per pass, then keeps the best prefix of the move
/// sequence. Returns whether the partition changed.
fn refine_moves(graph: &WeightedGraph, comm: &mut [usize]) -> bool {
    let n = graph.n_nodes();
    if n > REFINE_MAX_NODES {
        return false;
    }
    let m2 = 2.0 * graph.total_weight();
    let degree: Vec<f64> = (0..n).map(|i| graph.degree(i)).collect();
    let mut changed = false;
    loop {
        let mut tot = vec![0.0; n];
        let mut size = vec![0usize; n];
        for i in 0..n {
            tot[comm[i]] += degree[i];
            size[comm[i]] += 1;
        }
        let mut locked = vec![false; n];
        let mut history: Vec<(usize, usize)> = Vec::new();
        let mut running = 0.0;
        let mut best = 0.0;
        let mut best_len = 0;
        let mut links: std::collections::BTreeMap<usize, f64> = Default::default();
        for _ in 0..n {
            let mut pick: Option<(f64, usize, usize)> = None;
            for i in (0..n).filter(|&i| !locked[i]) {
                let a = comm[i];
                let ki = degree[i];
                links.clear();
                for &(j, w) in graph.neighbors(i) {
                    *links.entry(comm[j]).or_insert(0.0) += w;
                }
                let w_a = links.get(&a).copied().unwrap_or(0.0);
                let leave = w_a - (tot[a] - ki) * ki / m2;
                let mut consider = |c: usize, w_c: f64| {
                    let delta = 2.0 / m2 * ((w_c - tot[c] * ki / m2) - leave);
                    if pick.is_none_or(|(d, _, _)| delta > d) {
                        pick = Some((delta, i, c));
                    }
                };
                for (&c, &w) in links.iter().filter(|(&c, _)| c != a) {
                    consider(c, w);
                }
                if size[a] > 1 {
                    if let Some(free) = size.iter().position(|&s| s == 0) {
                        consider(free, 0.0);
                    }
                }
            }
            let Some((delta, i, c)) = pick else { break };
            let a = comm[i];
            tot[a] -= degree[i];
            size[a] -= 1;
            tot[c] += degree[i];
            size[c] += 1;
            comm[i] = c;
            locked[i] = true;
            history.push((i, a));
            running += delta;
            if running > best + MIN_GAIN {
                best = running;
                best_len = history.len();
            }
        }
        for &(i, a) in history[best_len..].iter().rev() {
            comm[i] = a;
        }
        if best_len == 0 {
            return changed;
        }
        changed = true;
    }
}

/// Moves every node whose community id is `>= first_free` (a dissolved
/// singleton) into the surviving community with the largest positive gain.
fn scatter(graph: &WeightedGraph, comm: &mut [usize], first_free: usize) {
    let m2 = 2.0 * graph.total_weight();
    let n_ids = comm.iter().max().map_or(0, |&c| c + 1);
    let mut tot = vec![0.0; n_ids];
    for (i, &c) in comm.iter().enumerate() {
        tot[c] += graph.degree(i);
    }
    for i in 0..comm.len() {
        if comm[i] < first_free {
            continue;
        }
        let ki = graph.degree(i);
        let mut links: std::collections::BTreeMap<usize, f64> = Default::default();
        for &(j, w) in graph.neighbors(i) {
            if comm[j] < first_free {
                *links.entry(comm[j]).or_insert(0.0) += w;
            }
        }
        let own = comm[i];
        let mut best = (own, MIN_GAIN);
        for (c, w) in links {
            let g = w - tot[c] * ki / m2;
            if g > best.1 {
                best = (c, g);
            }
        }
        tot[own] -= ki;
        tot[best.0] += ki;
        comm[i] = best.0;
    }
}

/// Local moving, aggregation, move-sequence tuning and aggregation again,
/// starting from `start`; returns the partition and its modularity.
fn polish(graph: &WeightedGraph, start: Vec<usize>, scan: &mut ScanState) -> Result<(Vec<usize>, f64)> {
    let (moved, _) = local_moving(graph, normalize_assignment(&start), scan);
    let mut trial = normalize_assignment(&moved);
    let mut q = modularity(graph, &trial)?;
    run_levels(graph, &mut trial, &mut q, &mut Vec::new(), scan)?;
    if refine_moves(graph, &mut trial) {
        trial = normalize_assignment(&trial);
        q = modularity(graph, &trial)?;
        run_levels(graph, &mut trial, &mut q, &mut Vec::new(), scan)?;
    }
    Ok((normalize_assignment(&trial), q))
}

/// Alternates local moving and aggregation, starting from the communities
/// already in `membership`, until a level brings no gain.
fn run_levels(
    graph: &WeightedGraph,
    membership: &mut [usize],
    current_q: &mut f64,
    level_modularity: &mut Vec<f64>,
    scan: &mut ScanState,
) -> Result<()> {
    let n_start = membership.iter().max().map_or(0, |&c| c + 1);
    let mut level_graph = if n_start == graph.n_nodes() {
        graph.clone()
    } else {
        aggregate(graph, membership, n_start)
    };
    loop {
        let singletons = (0..level_graph.n_nodes()).collect();
        let (comm, moved) = local_moving(&level_graph, singletons, scan);
        if !moved {
            return Ok(());
        }
        let comm = normalize_assignment(&comm);
        let n_comm = comm.iter().max().map_or(0, |&c| c + 1);
        for m in membership.iter_mut() {
            *m = comm[*m];
        }
        let q = modularity(graph, membership)?;
        if q < *current_q - 1e-9 {
            return Err(Error::Invariant(format!(
                "modularity decreased across levels ({current_q} -> {q})"
            )));
        }
        level_modularity.push(q);
        let improved = q > *current_q + MIN_GAIN;
        *current_q = q;
        if !improved || n_comm == level_graph.n_nodes() || n_comm == 1 {
            return Ok(());
        }
        level_graph = aggregate(&level_graph, &comm, n_comm);
    }
}

/// Runs once per seed and keeps the highest modularity (earliest seed on ties).
pub fn louvain_best_of(graph: &WeightedGraph, seeds: &[u64]) -> Result<LouvainOutcome> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    let mut best: Option<LouvainOutcome> = None;
    for &seed in seeds {
        let outcome = louvain_weighted(graph, ScanOrder::Shuffled(seed))?;
        if best.as_ref().is_none_or(|b| outcome.modularity > b.modularity) {
            best = Some(outcome);
        }
    }
    Ok(best.expect("non-empty seeds"))
}

/// Louvain with the graph relabelled so that nodes are scanned in ascending
/// order of `keys`; the partition is therefore independent of node numbering.
pub fn louvain_canonical<K: Ord>(graph: &WeightedGraph, keys: &[K]) -> Result<LouvainOutcome> {
    if keys.len() != graph.n_nodes() {
        return Err(Error::LengthMismatch {
            expected: graph.n_nodes(),
            found: keys.len(),
        });
    }
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut new_index = vec![0; keys.len()];
    for (pos, &node) in order.iter().enumerate() {
        new_index[node] = pos;
    }
    let outcome = louvain_weighted(&graph.permuted(&new_index), ScanOrder::Sequential)?;
    let assignment: Vec<usize> = (0..keys.len()).map(|i| outcome.assignment[new_index[i]]).collect();
    Ok(LouvainOutcome {
        assignment: normalize_assignment(&assignment),
        ..outcome
    })
}

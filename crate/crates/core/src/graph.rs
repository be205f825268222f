//! Undirected simple graphs with optional node features and labels.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node id {id} out of range for {n} nodes")]
    NodeOutOfRange { id: usize, n: usize },
    #[error("feature matrix has {got} rows, expected {expected}")]
    FeatureRows { expected: usize, got: usize },
    #[error("feature rows have inconsistent lengths")]
    RaggedFeatures,
    #[error("label vector has {got} entries, expected {expected}")]
    LabelCount { expected: usize, got: usize },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("graph is empty")]
    Empty,
}

/// Counts of input edges discarded while building a graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub self_loops: usize,
    pub duplicates: usize,
}

/// Unreachable marker in BFS distance tables.
pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    /// Sorted, `u < v`.
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
    features: Option<Vec<Vec<f64>>>,
    labels: Option<Vec<usize>>,
}

impl Graph {
    /// Symmetrises, deduplicates and drops self-loops.
    pub fn build(n: usize, edges: &[(usize, usize)]) -> Result<(Graph, BuildStats), GraphError> {
        let mut stats = BuildStats::default();
        let mut norm = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            for id in [u, v] {
                if id >= n {
                    return Err(GraphError::NodeOutOfRange { id, n });
                }
            }
            if u == v {
                stats.self_loops += 1;
                continue;
            }
            norm.push((u.min(v), u.max(v)));
        }
        norm.sort_unstable();
        let before = norm.len();
        norm.dedup();
        stats.duplicates = before - norm.len();
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &norm {
            adj[u].push(v);
            adj[v].push(u);
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
        }
        Ok((
            Graph {
                n,
                edges: norm,
                adj,
                features: None,
                labels: None,
            },
            stats,
        ))
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Graph, GraphError> {
        Graph::build(n, edges).map(|(g, _)| g)
    }

    pub fn with_features(mut self, features: Vec<Vec<f64>>) -> Result<Graph, GraphError> {
        if features.len() != self.n {
            return Err(GraphError::FeatureRows {
                expected: self.n,
                got: features.len(),
            });
        }
        if let Some(first) = features.first() {
            if features.iter().any(|r| r.len() != first.len()) {
                return Err(GraphError::RaggedFeatures);
            }
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Graph, GraphError> {
        if labels.len() != self.n {
            return Err(GraphError::LabelCount {
                expected: self.n,
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj[u].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.adj[u].binary_search(&v).is_ok()
    }

    pub fn features(&self) -> Option<&[Vec<f64>]> {
        self.features.as_deref()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.features.as_ref().map(|f| f.first().map_or(0, |r| r.len()))
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |m| m + 1)
    }

    /// Single-source BFS hop distances; [`UNREACHABLE`] for other components.
    pub fn bfs(&self, src: usize) -> Vec<u32> {
        let mut dist = vec![UNREACHABLE; self.n];
        let mut queue = std::collections::VecDeque::new();
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u];
            for &v in &self.adj[u] {
                if dist[v] == UNREACHABLE {
                    dist[v] = du + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Row-major `n × n` hop distance table.
    pub fn all_pairs_distances(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.n * self.n);
        for u in 0..self.n {
            out.extend(self.bfs(u));
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.n > 0 && self.bfs(0).iter().all(|&d| d != UNREACHABLE)
    }

    /// Largest connected component (ties broken by smallest member id) and the
    /// original id of each of its nodes.
    pub fn largest_component(&self) -> (Graph, Vec<usize>) {
        let mut comp = vec![usize::MAX; self.n];
        let mut best: Vec<usize> = Vec::new();
        for s in 0..self.n {
            if comp[s] != usize::MAX {
                continue;
            }
            let members: Vec<usize> = self
                .bfs(s)
                .iter()
                .enumerate()
                .filter(|(_, &d)| d != UNREACHABLE)
                .map(|(v, _)| v)
                .collect();
            for &v in &members {
                comp[v] = s;
            }
            if members.len() > best.len() {
                best = members;
            }
        }
        let mut index = vec![usize::MAX; self.n];
        for (i, &v) in best.iter().enumerate() {
            index[v] = i;
        }
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .filter(|(u, _)| index[*u] != usize::MAX)
            .map(|&(u, v)| (index[u], index[v]))
            .collect();
        let mut g = Graph::from_edges(best.len(), &edges).expect("ids in range");
        if let Some(f) = &self.features {
            g.features = Some(best.iter().map(|&v| f[v].clone()).collect());
        }
        if let Some(l) = &self.labels {
            g.labels = Some(best.iter().map(|&v| l[v]).collect());
        }
        (g, best)
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Graph {
        assert_eq!(perm.len(), self.n);
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let mut g = Graph::from_edges(self.n, &edges).expect("permutation");
        let mut inv = vec![0; self.n];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        if let Some(f) = &self.features {
            g.features = Some(inv.iter().map(|&i| f[i].clone()).collect());
        }
        if let Some(l) = &self.labels {
            g.labels = Some(inv.iter().map(|&i| l[i]).collect());
        }
        g
    }

    /// Same nodes, features and labels with a different edge set.
    pub fn with_edges(&self, edges: &[(usize, usize)]) -> Result<Graph, GraphError> {
        let mut g = Graph::from_edges(self.n, edges)?;
        g.features = self.features.clone();
        g.labels = self.labels.clone();
        Ok(g)
    }
}

pub mod generators {
    use super::*;

    /// Heap-indexed balanced binary tree: node `i` has children `2i+1`, `2i+2`.
    pub fn balanced_binary_tree(n: usize) -> Graph {
        let edges: Vec<(usize, usize)> = (1..n).map(|v| ((v - 1) / 2, v)).collect();
        Graph::from_edges(n, &edges).expect("valid tree")
    }

    pub fn path(n: usize) -> Graph {
        let edges: Vec<(usize, usize)> = (1..n).map(|v| (v - 1, v)).collect();
        Graph::from_edges(n, &edges).expect("valid path")
    }

    pub fn cycle(n: usize) -> Graph {
        let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (v - 1, v)).collect();
        if n > 2 {
            edges.push((n - 1, 0));
        }
        Graph::from_edges(n, &edges).expect("valid cycle")
    }

    /// `K_{1,k}` with centre 0.
    pub fn star(k: usize) -> Graph {
        let edges: Vec<(usize, usize)> = (1..=k).map(|v| (0, v)).collect();
        Graph::from_edges(k + 1, &edges).expect("valid star")
    }

    pub fn complete(n: usize) -> Graph {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                edges.push((u, v));
            }
        }
        Graph::from_edges(n, &edges).expect("valid complete graph")
    }

    /// 63-node balanced binary tree whose 32 leaves are joined into a ring through
    /// 32 extra connector nodes (95 nodes): connector `63 + i` links leaf `31 + i`
    /// to leaf `31 + (i + 1) mod 32`.
    pub fn cycle_augmented_tree() -> Graph {
        let mut edges: Vec<(usize, usize)> = (1..63).map(|v| ((v - 1) / 2, v)).collect();
        for i in 0..32 {
            let c = 63 + i;
            edges.push((31 + i, c));
            edges.push((c, 31 + (i + 1) % 32));
        }
        Graph::from_edges(95, &edges).expect("valid graph")
    }

    /// `G(n, p)`.
    pub fn erdos_renyi<R: Rng>(n: usize, p: f64, rng: &mut R) -> Graph {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        Graph::from_edges(n, &edges).expect("valid graph")
    }

    /// Random recursive tree on a shuffled labelling.
    pub fn random_tree<R: Rng>(n: usize, rng: &mut R) -> Graph {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let edges: Vec<(usize, usize)> = (1..n)
            .map(|i| (order[rng.gen_range(0..i)], order[i]))
            .collect();
        Graph::from_edges(n, &edges).expect("valid tree")
    }
}

#[cfg(test)]
mod tests {
    use super::generators::*;
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn build_normalises_edges() {
        let (g, stats) = Graph::build(3, &[(0, 1), (1, 0), (1, 1), (2, 1)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(stats, BuildStats { self_loops: 1, duplicates: 1 });
        assert!(g.has_edge(1, 0) && !g.has_edge(0, 2));
        assert_eq!(
            Graph::build(2, &[(0, 2)]).unwrap_err(),
            GraphError::NodeOutOfRange { id: 2, n: 2 }
        );
    }

    #[test]
    fn generators_have_expected_shape() {
        let t = balanced_binary_tree(63);
        assert_eq!((t.n_nodes(), t.n_edges()), (63, 62));
        assert!(t.is_connected());
        let c = cycle_augmented_tree();
        assert_eq!((c.n_nodes(), c.n_edges()), (95, 62 + 64));
        assert!(c.is_connected());
        assert!((63..95).all(|v| c.degree(v) == 2));
        assert_eq!(cycle(30).n_edges(), 30);
        assert_eq!(star(4).degree(0), 4);
        assert_eq!(complete(5).n_edges(), 10);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let rt = random_tree(40, &mut rng);
        assert_eq!(rt.n_edges(), 39);
        assert!(rt.is_connected());
    }

    #[test]
    fn bfs_distances() {
        let c = cycle(8);
        assert_eq!(c.bfs(0), vec![0, 1, 2, 3, 4, 3, 2, 1]);
        let (g, _) = Graph::build(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(g.bfs(0)[2], UNREACHABLE);
        assert!(!g.is_connected());
    }

    #[test]
    fn largest_component_keeps_attributes() {
        let g = Graph::from_edges(5, &[(0, 1), (2, 3), (3, 4)])
            .unwrap()
            .with_labels(vec![0, 1, 2, 3, 4])
            .unwrap();
        let (lc, ids) = g.largest_component();
        assert_eq!(ids, vec![2, 3, 4]);
        assert_eq!(lc.labels().unwrap(), &[2, 3, 4]);
        assert_eq!(lc.n_edges(), 2);
    }

    #[test]
    fn permutation_relabels() {
        let g = path(3).with_labels(vec![7, 8, 9]).unwrap();
        let p = g.permute(&[2, 0, 1]);
        assert!(p.has_edge(2, 0) && p.has_edge(0, 1) && !p.has_edge(2, 1));
        assert_eq!(p.labels().unwrap(), &[8, 9, 7]);
    }
}

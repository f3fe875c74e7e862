//! Physical network topology: an undirected graph of nodes and links with
//! multidimensional capacities, plus the precomputed structures derived from
//! it — hop-distance rings, exact-length simple paths, delay-sorted routing
//! tables and multi-hop graphs.
//!
//! Everything here is immutable after construction and safe to share across
//! concurrent readers.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scalar::Scalar;

/// Index of a physical node.
pub type NodeId = usize;
/// Index of a physical link.
pub type LinkId = usize;

/// Default hop cap for precomputed routing paths.
pub const DEFAULT_MAX_HOPS: usize = 6;
/// Default per-pair cap on stored routing paths.
pub const DEFAULT_PATHS_PER_PAIR: usize = 64;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("topology parse error: {0}")]
    Parse(String),
    #[error("node {node}: capacity[{dim}] must be strictly positive, got {value}")]
    NonPositiveNodeCapacity { node: NodeId, dim: usize, value: f64 },
    #[error("link {link}: capacity[{dim}] must be strictly positive, got {value}")]
    NonPositiveLinkCapacity { link: LinkId, dim: usize, value: f64 },
    #[error("link {link}: delay must be strictly positive, got {value}")]
    NonPositiveDelay { link: LinkId, value: f64 },
    #[error("link {link}: endpoint {node} is not a declared node (|N|={n})")]
    UnknownEndpoint { link: LinkId, node: NodeId, n: usize },
    #[error("link {link}: self-loop at node {node}")]
    SelfLoop { link: LinkId, node: NodeId },
    #[error("links {first} and {second} duplicate the pair ({u}, {v})")]
    DuplicateLink { first: LinkId, second: LinkId, u: NodeId, v: NodeId },
    #[error("node ids must be 0..{expected}, found id {found}")]
    NonContiguousIds { expected: usize, found: usize },
    #[error("graph is disconnected: node {unreached} unreachable from node 0")]
    Disconnected { unreached: NodeId },
    #[error("topology must have at least one node")]
    Empty,
    #[error("inconsistent resource dimensions: node {node} has {got}, expected {expected}")]
    NodeDimMismatch { node: NodeId, got: usize, expected: usize },
    #[error("inconsistent resource dimensions: link {link} has {got}, expected {expected}")]
    LinkDimMismatch { link: LinkId, got: usize, expected: usize },
}

/// A physical node with its resource capacity vector (length R1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec<T> {
    pub id: NodeId,
    /// Capacity per node resource dimension; by convention `[CPU GHz, memory GB]`.
    pub capacity: Vec<T>,
}

/// A physical link with its resource capacity vector (length R2) and
/// propagation delay in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec<T> {
    pub id: LinkId,
    pub endpoints: (NodeId, NodeId),
    /// Capacity per link resource dimension; by convention `[bandwidth MBps]`.
    pub capacity: Vec<T>,
    pub delay_ms: T,
}

/// Validated undirected simple connected graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Network<T = f64> {
    pub name: String,
    nodes: Vec<NodeSpec<T>>,
    links: Vec<LinkSpec<T>>,
    /// For each node, `(neighbor, link)` pairs sorted by neighbor id.
    adjacency: Vec<Vec<(NodeId, LinkId)>>,
}

/// On-disk topology document.
#[derive(Debug, Serialize, Deserialize)]
struct TopologyDoc {
    #[serde(default)]
    name: String,
    nodes: Vec<NodeDoc>,
    links: Vec<LinkDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeDoc {
    id: usize,
    cpu: f64,
    mem: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct LinkDoc {
    u: usize,
    v: usize,
    bandwidth: f64,
    delay_ms: f64,
}

/// Bundled NSFNET fixture: 14 nodes, 22 links.
pub const NSFNET_JSON: &str = include_str!("../fixtures/nsfnet.json");

impl<T: Scalar> Network<T> {
    /// Builds and validates a network from explicit node and link specs.
    pub fn new(
        name: impl Into<String>,
        nodes: Vec<NodeSpec<T>>,
        links: Vec<LinkSpec<T>>,
    ) -> Result<Self, TopologyError> {
        if nodes.is_empty() {
            return Err(TopologyError::Empty);
        }
        let n = nodes.len();
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(TopologyError::NonContiguousIds { expected: n, found: node.id });
            }
            if node.capacity.len() != nodes[0].capacity.len() {
                return Err(TopologyError::NodeDimMismatch {
                    node: node.id,
                    got: node.capacity.len(),
                    expected: nodes[0].capacity.len(),
                });
            }
            for (dim, &c) in node.capacity.iter().enumerate() {
                if c <= T::zero() {
                    return Err(TopologyError::NonPositiveNodeCapacity {
                        node: node.id,
                        dim,
                        value: c.to_f64_lossy(),
                    });
                }
            }
        }
        let link_dims = links.first().map(|l| l.capacity.len()).unwrap_or(0);
        let mut seen_pairs: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
        let mut pair_owner = std::collections::BTreeMap::new();
        for (i, link) in links.iter().enumerate() {
            if link.id != i {
                return Err(TopologyError::NonContiguousIds { expected: links.len(), found: link.id });
            }
            let (u, v) = link.endpoints;
            if u >= n {
                return Err(TopologyError::UnknownEndpoint { link: link.id, node: u, n });
            }
            if v >= n {
                return Err(TopologyError::UnknownEndpoint { link: link.id, node: v, n });
            }
            if u == v {
                return Err(TopologyError::SelfLoop { link: link.id, node: u });
            }
            if link.capacity.len() != link_dims {
                return Err(TopologyError::LinkDimMismatch {
                    link: link.id,
                    got: link.capacity.len(),
                    expected: link_dims,
                });
            }
            for (dim, &c) in link.capacity.iter().enumerate() {
                if c <= T::zero() {
                    return Err(TopologyError::NonPositiveLinkCapacity {
                        link: link.id,
                        dim,
                        value: c.to_f64_lossy(),
                    });
                }
            }
            if link.delay_ms <= T::zero() {
                return Err(TopologyError::NonPositiveDelay {
                    link: link.id,
                    value: link.delay_ms.to_f64_lossy(),
                });
            }
            let key = (u.min(v), u.max(v));
            if !seen_pairs.insert(key) {
                return Err(TopologyError::DuplicateLink {
                    first: pair_owner[&key],
                    second: link.id,
                    u: key.0,
                    v: key.1,
                });
            }
            pair_owner.insert(key, link.id);
        }

        let mut adjacency = vec![Vec::new(); n];
        for link in &links {
            let (u, v) = link.endpoints;
            adjacency[u].push((v, link.id));
            adjacency[v].push((u, link.id));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }

        let net = Network { name: name.into(), nodes, links, adjacency };
        if let Some(unreached) = net.first_unreachable() {
            return Err(TopologyError::Disconnected { unreached });
        }
        Ok(net)
    }

    /// Parses a topology document (JSON with `nodes: [{id, cpu, mem}]` and
    /// `links: [{u, v, bandwidth, delay_ms}]`) and validates it.
    pub fn from_json(text: &str) -> Result<Self, TopologyError> {
        let doc: TopologyDoc =
            serde_json::from_str(text).map_err(|e| TopologyError::Parse(e.to_string()))?;
        let nodes = doc
            .nodes
            .iter()
            .map(|d| NodeSpec {
                id: d.id,
                capacity: vec![T::from_f64_lossy(d.cpu), T::from_f64_lossy(d.mem)],
            })
            .collect();
        let links = doc
            .links
            .iter()
            .enumerate()
            .map(|(i, d)| LinkSpec {
                id: i,
                endpoints: (d.u, d.v),
                capacity: vec![T::from_f64_lossy(d.bandwidth)],
                delay_ms: T::from_f64_lossy(d.delay_ms),
            })
            .collect();
        let name = if doc.name.is_empty() { "unnamed".to_string() } else { doc.name };
        Network::new(name, nodes, links)
    }

    /// The bundled NSFNET topology (14 nodes, 22 links).
    pub fn nsfnet() -> Self {
        Self::from_json(NSFNET_JSON).expect("bundled NSFNET fixture is valid")
    }

    /// Complete graph on `n` nodes with NSFNET-style capacities, used by the
    /// runtime benchmark.
    pub fn complete(n: usize) -> Self {
        let nodes = (0..n)
            .map(|id| NodeSpec { id, capacity: vec![T::from_f64_lossy(32.0), T::from_f64_lossy(64.0)] })
            .collect();
        let mut links = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                let id = links.len();
                // Deterministic delays cycling through 1..=5 ms.
                let delay = T::from_f64_lossy(1.0 + ((u + v + id) % 5) as f64);
                links.push(LinkSpec {
                    id,
                    endpoints: (u, v),
                    capacity: vec![T::from_f64_lossy(5.0)],
                    delay_ms: delay,
                });
            }
        }
        Network::new(format!("complete-{n}"), nodes, links).expect("complete graph is valid")
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn nodes(&self) -> &[NodeSpec<T>] {
        &self.nodes
    }

    pub fn links(&self) -> &[LinkSpec<T>] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> &NodeSpec<T> {
        &self.nodes[id]
    }

    pub fn link(&self, id: LinkId) -> &LinkSpec<T> {
        &self.links[id]
    }

    /// Number of node resource dimensions (R1).
    pub fn node_dims(&self) -> usize {
        self.nodes[0].capacity.len()
    }

    /// Number of link resource dimensions (R2).
    pub fn link_dims(&self) -> usize {
        self.links.first().map(|l| l.capacity.len()).unwrap_or(0)
    }

    /// `(neighbor, link)` pairs of `n`, sorted by neighbor id.
    pub fn neighbors(&self, n: NodeId) -> &[(NodeId, LinkId)] {
        &self.adjacency[n]
    }

    /// The link joining `u` and `v`, if any.
    pub fn link_between(&self, u: NodeId, v: NodeId) -> Option<LinkId> {
        self.adjacency[u]
            .binary_search_by_key(&v, |&(nbr, _)| nbr)
            .ok()
            .map(|idx| self.adjacency[u][idx].1)
    }

    /// Returns a copy with one capacity dimension scaled by `factor`.
    /// `dim < R1` scales node capacities, otherwise `dim - R1` indexes link
    /// capacities.
    pub fn scaled(&self, dim: usize, factor: T) -> Self {
        let mut out = self.clone();
        let r1 = self.node_dims();
        if dim < r1 {
            for node in &mut out.nodes {
                node.capacity[dim] = node.capacity[dim] * factor;
            }
        } else {
            let ldim = dim - r1;
            for link in &mut out.links {
                link.capacity[ldim] = link.capacity[ldim] * factor;
            }
        }
        out
    }

    /// Hop-distance vector from `src` by breadth-first search
    /// (`usize::MAX` is unreachable; never the case after validation).
    pub fn hop_distances(&self, src: NodeId) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.nodes.len()];
        let mut queue = std::collections::VecDeque::new();
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    fn first_unreachable(&self) -> Option<NodeId> {
        let dist = self.hop_distances(0);
        dist.iter().position(|&d| d == usize::MAX)
    }

    /// Nodes at shortest-path hop distance exactly `k` from `n`
    /// (`k = 0` yields `{n}`). Rings over k partition the node set.
    pub fn k_hop_neighbors(&self, n: NodeId, k: usize) -> Vec<NodeId> {
        let dist = self.hop_distances(n);
        (0..self.nodes.len()).filter(|&m| dist[m] == k).collect()
    }

    /// All simple paths of exactly `k` edges starting at `n`.
    pub fn k_hop_paths(&self, n: NodeId, k: usize) -> Vec<Path> {
        assert!(k >= 1, "k_hop_paths requires k >= 1");
        let mut out = Vec::new();
        let mut nodes = vec![n];
        let mut links = Vec::new();
        let mut visited = vec![false; self.nodes.len()];
        visited[n] = true;
        self.dfs_exact(k, &mut nodes, &mut links, &mut visited, &mut out);
        out
    }

    fn dfs_exact(
        &self,
        remaining: usize,
        nodes: &mut Vec<NodeId>,
        links: &mut Vec<LinkId>,
        visited: &mut [bool],
        out: &mut Vec<Path>,
    ) {
        if remaining == 0 {
            out.push(Path { nodes: nodes.clone(), links: links.clone() });
            return;
        }
        let cur = *nodes.last().unwrap();
        for &(next, link) in &self.adjacency[cur] {
            if visited[next] {
                continue;
            }
            visited[next] = true;
            nodes.push(next);
            links.push(link);
            self.dfs_exact(remaining - 1, nodes, links, visited, out);
            links.pop();
            nodes.pop();
            visited[next] = false;
        }
    }

    /// Total propagation delay of a link sequence.
    pub fn path_delay(&self, links: &[LinkId]) -> T {
        links.iter().map(|&l| self.links[l].delay_ms).sum()
    }

    /// Structural hash over node count and the (sorted) edge list; capacities
    /// are deliberately excluded so capacity-scaled variants of one graph
    /// share the hash.
    pub fn structural_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.nodes.len() as u64).to_le_bytes());
        let mut edges: Vec<(NodeId, NodeId)> = self
            .links
            .iter()
            .map(|l| (l.endpoints.0.min(l.endpoints.1), l.endpoints.0.max(l.endpoints.1)))
            .collect();
        edges.sort_unstable();
        for (u, v) in edges {
            hasher.update((u as u64).to_le_bytes());
            hasher.update((v as u64).to_le_bytes());
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A simple path: `nodes.len() == links.len() + 1`, no repeated node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
}

impl Path {
    pub fn hops(&self) -> usize {
        self.links.len()
    }

    pub fn src(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn dst(&self) -> NodeId {
        *self.nodes.last().unwrap()
    }
}

/// Precomputed routing paths: for each ordered node pair, simple paths up to
/// a hop cap sorted by ascending total delay (ties by hop count, then by node
/// sequence), truncated to `paths_per_pair`.
#[derive(Debug, Clone)]
pub struct PathTable<T = f64> {
    n: usize,
    max_hops: usize,
    /// `paths[src * n + dst]`, empty for `src == dst`.
    paths: Vec<Vec<TablePath<T>>>,
}

#[derive(Debug, Clone)]
pub struct TablePath<T> {
    pub path: Path,
    pub delay: T,
}

impl<T: Scalar> PathTable<T> {
    /// Enumerates simple paths up to `max_hops` between every ordered pair by
    /// depth-first search and stores them delay-sorted.
    pub fn build(net: &Network<T>, max_hops: usize, paths_per_pair: usize) -> Self {
        assert!(max_hops >= 1, "path table requires max_hops >= 1");
        let n = net.node_count();
        let mut paths: Vec<Vec<TablePath<T>>> = vec![Vec::new(); n * n];
        for src in 0..n {
            let mut nodes = vec![src];
            let mut links = Vec::new();
            let mut visited = vec![false; n];
            visited[src] = true;
            Self::dfs_collect(net, max_hops, &mut nodes, &mut links, &mut visited, &mut |p: Path| {
                let delay = net.path_delay(&p.links);
                paths[src * n + p.dst()].push(TablePath { path: p, delay });
            });
        }
        for list in &mut paths {
            list.sort_by(|a, b| {
                a.delay
                    .partial_cmp(&b.delay)
                    .unwrap()
                    .then(a.path.hops().cmp(&b.path.hops()))
                    .then(a.path.nodes.cmp(&b.path.nodes))
            });
            list.truncate(paths_per_pair);
        }
        PathTable { n, max_hops, paths }
    }

    fn dfs_collect(
        net: &Network<T>,
        remaining: usize,
        nodes: &mut Vec<NodeId>,
        links: &mut Vec<LinkId>,
        visited: &mut [bool],
        sink: &mut impl FnMut(Path),
    ) {
        let cur = *nodes.last().unwrap();
        for &(next, link) in net.neighbors(cur) {
            if visited[next] {
                continue;
            }
            visited[next] = true;
            nodes.push(next);
            links.push(link);
            sink(Path { nodes: nodes.clone(), links: links.clone() });
            if remaining > 1 {
                Self::dfs_collect(net, remaining - 1, nodes, links, visited, sink);
            }
            links.pop();
            nodes.pop();
            visited[next] = false;
        }
    }

    pub fn max_hops(&self) -> usize {
        self.max_hops
    }

    /// Delay-sorted paths from `src` to `dst`; empty when `src == dst`.
    pub fn paths(&self, src: NodeId, dst: NodeId) -> &[TablePath<T>] {
        &self.paths[src * self.n + dst]
    }

    /// Minimum-delay path between two distinct nodes, if any is stored.
    pub fn min_delay_path(&self, src: NodeId, dst: NodeId) -> Option<&TablePath<T>> {
        self.paths(src, dst).first()
    }
}

/// Derived graph whose edges join node pairs having a simple path of exactly
/// `k` edges in the base graph. `k = 1` reproduces the base edge set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiHopGraph {
    pub hops: usize,
    /// Undirected edges with `u < v`, sorted.
    pub edges: Vec<(NodeId, NodeId)>,
    /// Per node: neighbors in this graph plus the node itself, sorted.
    pub neighborhoods: Vec<Vec<NodeId>>,
}

impl MultiHopGraph {
    pub fn from_edges(n: usize, hops: usize, mut edges: Vec<(NodeId, NodeId)>) -> Self {
        for e in &mut edges {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let mut neighborhoods: Vec<BTreeSet<NodeId>> = (0..n).map(|i| BTreeSet::from([i])).collect();
        for &(u, v) in &edges {
            neighborhoods[u].insert(v);
            neighborhoods[v].insert(u);
        }
        MultiHopGraph {
            hops,
            edges,
            neighborhoods: neighborhoods.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    /// Neighbors of `i` including the self-loop.
    pub fn neighbors_with_self(&self, i: NodeId) -> &[NodeId] {
        &self.neighborhoods[i]
    }
}

/// Builds the `k`-hop graph of `net`.
pub fn derive_multi_hop_graph<T: Scalar>(net: &Network<T>, k: usize) -> MultiHopGraph {
    assert!(k >= 1, "multi-hop graph requires k >= 1");
    let mut edges = Vec::new();
    for n in 0..net.node_count() {
        for p in net.k_hop_paths(n, k) {
            let dst = p.dst();
            if n < dst {
                edges.push((n, dst));
            }
        }
    }
    MultiHopGraph::from_edges(net.node_count(), k, edges)
}

/// Per-node hop rings and exact-length path sets for receptive fields
/// `0..=max_k`, shared by the fragmentation metric. Depends only on the
/// adjacency structure, so capacity-scaled variants can reuse one cache.
#[derive(Debug, Clone)]
pub struct KhopCache {
    max_k: usize,
    /// `rings[n][k]` = nodes at hop distance exactly k from n.
    rings: Vec<Vec<Vec<NodeId>>>,
    /// `paths[n][k]` = link sequences of the simple paths of exactly k edges
    /// starting at n (k >= 1; index 0 is empty).
    paths: Vec<Vec<Vec<Vec<LinkId>>>>,
}

impl KhopCache {
    pub fn build<T: Scalar>(net: &Network<T>, max_k: usize) -> Self {
        let n = net.node_count();
        let mut rings = Vec::with_capacity(n);
        let mut paths = Vec::with_capacity(n);
        for node in 0..n {
            let dist = net.hop_distances(node);
            let mut node_rings = Vec::with_capacity(max_k + 1);
            for k in 0..=max_k {
                node_rings.push((0..n).filter(|&m| dist[m] == k).collect());
            }
            rings.push(node_rings);
            let mut node_paths = vec![Vec::new()];
            for k in 1..=max_k {
                node_paths.push(net.k_hop_paths(node, k).into_iter().map(|p| p.links).collect());
            }
            paths.push(node_paths);
        }
        KhopCache { max_k, rings, paths }
    }

    pub fn max_k(&self) -> usize {
        self.max_k
    }

    pub fn ring(&self, n: NodeId, k: usize) -> &[NodeId] {
        &self.rings[n][k]
    }

    pub fn paths(&self, n: NodeId, k: usize) -> &[Vec<LinkId>] {
        &self.paths[n][k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph() -> Network<f64> {
        // a - b - c
        Network::new(
            "path3",
            (0..3).map(|id| NodeSpec { id, capacity: vec![10.0, 10.0] }).collect(),
            vec![
                LinkSpec { id: 0, endpoints: (0, 1), capacity: vec![5.0], delay_ms: 1.0 },
                LinkSpec { id: 1, endpoints: (1, 2), capacity: vec![5.0], delay_ms: 1.0 },
            ],
        )
        .unwrap()
    }

    fn triangle() -> Network<f64> {
        Network::new(
            "triangle",
            (0..3).map(|id| NodeSpec { id, capacity: vec![10.0, 10.0] }).collect(),
            vec![
                LinkSpec { id: 0, endpoints: (0, 1), capacity: vec![5.0], delay_ms: 1.0 },
                LinkSpec { id: 1, endpoints: (1, 2), capacity: vec![5.0], delay_ms: 1.0 },
                LinkSpec { id: 2, endpoints: (0, 2), capacity: vec![5.0], delay_ms: 1.0 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn nsfnet_fixture_loads() {
        let net: Network<f64> = Network::nsfnet();
        assert_eq!(net.node_count(), 14);
        assert_eq!(net.link_count(), 22);
    }

    #[test]
    fn two_nodes_one_link_is_valid() {
        let net: Network<f64> = Network::new(
            "pair",
            (0..2).map(|id| NodeSpec { id, capacity: vec![1.0, 1.0] }).collect(),
            vec![LinkSpec { id: 0, endpoints: (0, 1), capacity: vec![1.0], delay_ms: 1.0 }],
        )
        .unwrap();
        assert_eq!(net.node_count(), 2);
    }

    #[test]
    fn disconnected_graph_rejected() {
        let err = Network::<f64>::new(
            "disc",
            (0..3).map(|id| NodeSpec { id, capacity: vec![1.0, 1.0] }).collect(),
            vec![LinkSpec { id: 0, endpoints: (0, 1), capacity: vec![1.0], delay_ms: 1.0 }],
        )
        .unwrap_err();
        assert!(matches!(err, TopologyError::Disconnected { unreached: 2 }));
    }

    #[test]
    fn invalid_fields_name_the_offender() {
        let err = Network::<f64>::new(
            "bad",
            vec![
                NodeSpec { id: 0, capacity: vec![1.0, 1.0] },
                NodeSpec { id: 1, capacity: vec![0.0, 1.0] },
            ],
            vec![LinkSpec { id: 0, endpoints: (0, 1), capacity: vec![1.0], delay_ms: 1.0 }],
        )
        .unwrap_err();
        assert!(err.to_string().contains("node 1"));

        let err = Network::<f64>::from_json(r#"{"nodes": [], "links": []}"#).unwrap_err();
        assert!(matches!(err, TopologyError::Empty));

        let err = Network::<f64>::from_json("not json").unwrap_err();
        assert!(matches!(err, TopologyError::Parse(_)));
    }

    #[test]
    fn duplicate_and_self_loop_rejected() {
        let nodes: Vec<NodeSpec<f64>> =
            (0..2).map(|id| NodeSpec { id, capacity: vec![1.0, 1.0] }).collect();
        let err = Network::new(
            "dup",
            nodes.clone(),
            vec![
                LinkSpec { id: 0, endpoints: (0, 1), capacity: vec![1.0], delay_ms: 1.0 },
                LinkSpec { id: 1, endpoints: (1, 0), capacity: vec![1.0], delay_ms: 1.0 },
            ],
        )
        .unwrap_err();
        assert!(matches!(err, TopologyError::DuplicateLink { .. }));

        let err = Network::new(
            "selfy",
            nodes,
            vec![LinkSpec { id: 0, endpoints: (1, 1), capacity: vec![1.0], delay_ms: 1.0 }],
        )
        .unwrap_err();
        assert!(matches!(err, TopologyError::SelfLoop { link: 0, node: 1 }));
    }

    #[test]
    fn k_hop_neighbors_basics() {
        let net = path_graph();
        assert_eq!(net.k_hop_neighbors(0, 0), vec![0]);
        assert_eq!(net.k_hop_neighbors(0, 2), vec![2]);
        assert_eq!(net.k_hop_neighbors(1, 1), vec![0, 2]);
    }

    #[test]
    fn nsfnet_one_hop_matches_bfs_oracle() {
        let net: Network<f64> = Network::nsfnet();
        // Independent oracle: scan the raw document's edge list.
        let doc: serde_json::Value = serde_json::from_str(NSFNET_JSON).unwrap();
        let mut expect: Vec<usize> = doc["links"]
            .as_array()
            .unwrap()
            .iter()
            .filter_map(|l| {
                let (u, v) = (l["u"].as_u64().unwrap() as usize, l["v"].as_u64().unwrap() as usize);
                if u == 0 {
                    Some(v)
                } else if v == 0 {
                    Some(u)
                } else {
                    None
                }
            })
            .collect();
        expect.sort_unstable();
        assert_eq!(net.k_hop_neighbors(0, 1), expect);
    }

    #[test]
    fn k_hop_paths_cases() {
        let net = path_graph();
        let paths = net.k_hop_paths(0, 2);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].nodes, vec![0, 1, 2]);

        // Star: center 0 with 3 leaves.
        let star: Network<f64> = Network::new(
            "star",
            (0..4).map(|id| NodeSpec { id, capacity: vec![1.0, 1.0] }).collect(),
            (0..3)
                .map(|i| LinkSpec {
                    id: i,
                    endpoints: (0, i + 1),
                    capacity: vec![1.0],
                    delay_ms: 1.0,
                })
                .collect(),
        )
        .unwrap();
        assert_eq!(star.k_hop_paths(0, 1).len(), 3);

        let tri = triangle();
        let mut ends: Vec<Vec<usize>> =
            tri.k_hop_paths(0, 2).into_iter().map(|p| p.nodes).collect();
        ends.sort();
        assert_eq!(ends, vec![vec![0, 1, 2], vec![0, 2, 1]]);
    }

    #[test]
    fn path_table_triangle() {
        let tri = triangle();
        let table = PathTable::build(&tri, 2, DEFAULT_PATHS_PER_PAIR);
        let ab = table.paths(0, 1);
        assert_eq!(ab.len(), 2);
        assert_eq!(ab[0].path.links, vec![0]); // direct link first
        assert_eq!(ab[1].path.hops(), 2);
    }

    #[test]
    fn path_table_path_graph() {
        let net = path_graph();
        let table = PathTable::build(&net, 2, DEFAULT_PATHS_PER_PAIR);
        let ac = table.paths(0, 2);
        assert_eq!(ac.len(), 1);
        assert_eq!(ac[0].path.nodes, vec![0, 1, 2]);
    }

    #[test]
    fn nsfnet_all_pairs_within_six_hops() {
        let net: Network<f64> = Network::nsfnet();
        // BFS oracle: diameter must fit in the hop cap.
        let diameter = (0..net.node_count())
            .map(|s| net.hop_distances(s).into_iter().max().unwrap())
            .max()
            .unwrap();
        assert!(diameter <= DEFAULT_MAX_HOPS);
        let table = PathTable::build(&net, DEFAULT_MAX_HOPS, DEFAULT_PATHS_PER_PAIR);
        for u in 0..net.node_count() {
            for v in 0..net.node_count() {
                if u != v {
                    assert!(!table.paths(u, v).is_empty(), "no path {u}->{v}");
                }
            }
        }
    }

    #[test]
    fn multi_hop_graph_cases() {
        let net = path_graph();
        let g1 = derive_multi_hop_graph(&net, 1);
        assert_eq!(g1.edges, vec![(0, 1), (1, 2)]);
        let g2 = derive_multi_hop_graph(&net, 2);
        assert_eq!(g2.edges, vec![(0, 2)]);

        let tri = triangle();
        let g2 = derive_multi_hop_graph(&tri, 2);
        assert_eq!(g2.edges, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn khop_cache_matches_direct_enumeration() {
        let net: Network<f64> = Network::nsfnet();
        let cache = KhopCache::build(&net, 2);
        for n in 0..net.node_count() {
            for k in 0..=2 {
                assert_eq!(cache.ring(n, k), net.k_hop_neighbors(n, k).as_slice());
                if k >= 1 {
                    let direct: Vec<Vec<LinkId>> =
                        net.k_hop_paths(n, k).into_iter().map(|p| p.links).collect();
                    assert_eq!(cache.paths(n, k), direct.as_slice());
                }
            }
        }
    }
}

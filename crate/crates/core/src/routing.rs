//! Path discovery: bandwidth-filtered Dijkstra inside a DC subgraph (D2D),
//! depth-first search over the cluster graph (C2C), and their combination.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;
use thiserror::Error;

use crate::topology::{ClusterId, ClusterPartition, DcId, LinkId, NetworkGraph};
use crate::units::Kbps;

#[derive(Debug, Error, PartialEq)]
pub enum RoutingError {
    #[error("data center {0} is not in the query subgraph")]
    OutsideSubgraph(DcId),
}

/// Read access to residual link bandwidth.
pub trait LinkAvailability {
    fn free_bw(&self, link: LinkId) -> Kbps;
}

impl LinkAvailability for [Kbps] {
    fn free_bw(&self, link: LinkId) -> Kbps {
        self[link]
    }
}

impl LinkAvailability for Vec<Kbps> {
    fn free_bw(&self, link: LinkId) -> Kbps {
        self[link]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathResult {
    pub hops: Vec<DcId>,
    pub total_distance_km: f64,
    pub links: Vec<LinkId>,
}

impl PathResult {
    pub fn trivial(dc: DcId) -> Self {
        PathResult {
            hops: vec![dc],
            total_distance_km: 0.0,
            links: Vec::new(),
        }
    }

    pub fn source(&self) -> DcId {
        self.hops[0]
    }

    pub fn destination(&self) -> DcId {
        *self.hops.last().unwrap()
    }

    /// Re-walks the path: consecutive hops adjacent through the listed links,
    /// each with at least `bw` free, and the distance equal to the link sum.
    pub fn is_feasible(&self, graph: &NetworkGraph, avail: &(impl LinkAvailability + ?Sized), bw: Kbps) -> bool {
        if self.links.len() + 1 != self.hops.len() {
            return false;
        }
        let mut dist = 0.0;
        for (i, &l) in self.links.iter().enumerate() {
            let link = graph.link(l);
            let (a, b) = (self.hops[i], self.hops[i + 1]);
            if !(link.endpoints == (a, b) || link.endpoints == (b, a)) || avail.free_bw(l) < bw {
                return false;
            }
            dist += link.distance_km;
        }
        dist == self.total_distance_km
    }

    pub fn is_loop_free(&self) -> bool {
        let mut seen = self.hops.clone();
        seen.sort_unstable();
        seen.windows(2).all(|w| w[0] != w[1])
    }
}

/// Instrumentation for the complexity claims.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PathCounters {
    pub dijkstra_calls: u64,
    pub settled_total: u64,
    pub max_settled: usize,
    /// Largest subgraph handed to a single Dijkstra call.
    pub max_subgraph: usize,
    pub dfs_calls: u64,
    pub dfs_edges_visited: u64,
    pub max_dfs_edges: usize,
    #[serde(skip)]
    pub settled_log: Option<Vec<usize>>,
}

impl PathCounters {
    pub fn with_log() -> Self {
        PathCounters {
            settled_log: Some(Vec::new()),
            ..Default::default()
        }
    }

    fn record_dijkstra(&mut self, settled: usize, subgraph: usize) {
        self.dijkstra_calls += 1;
        self.settled_total += settled as u64;
        self.max_settled = self.max_settled.max(settled);
        self.max_subgraph = self.max_subgraph.max(subgraph);
        if let Some(log) = &mut self.settled_log {
            log.push(settled);
        }
    }

    pub fn merge(&mut self, other: &PathCounters) {
        self.dijkstra_calls += other.dijkstra_calls;
        self.settled_total += other.settled_total;
        self.max_settled = self.max_settled.max(other.max_settled);
        self.max_subgraph = self.max_subgraph.max(other.max_subgraph);
        self.dfs_calls += other.dfs_calls;
        self.dfs_edges_visited += other.dfs_edges_visited;
        self.max_dfs_edges = self.max_dfs_edges.max(other.max_dfs_edges);
        if let (Some(a), Some(b)) = (&mut self.settled_log, &other.settled_log) {
            a.extend_from_slice(b);
        }
    }
}

#[derive(PartialEq)]
struct Frontier {
    dist: f64,
    dc: DcId,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (distance, id).
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.dc.cmp(&self.dc))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra from `src` restricted to `members`, stopping at the first settled
/// DC satisfying `is_target` (ties resolved by lowest id).
fn dijkstra_to(
    graph: &NetworkGraph,
    members: &[bool],
    avail: &(impl LinkAvailability + ?Sized),
    src: DcId,
    is_target: impl Fn(DcId) -> bool,
    bw: Kbps,
    counters: &mut PathCounters,
) -> Option<PathResult> {
    let n = graph.dc_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev: Vec<Option<(DcId, LinkId)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut settled = 0;
    dist[src] = 0.0;
    heap.push(Frontier { dist: 0.0, dc: src });
    let mut found = None;
    while let Some(Frontier { dist: d, dc: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        settled += 1;
        if is_target(u) {
            found = Some(u);
            break;
        }
        for &(v, link) in graph.neighbors(u) {
            if !members[v] || done[v] || avail.free_bw(link) < bw {
                continue;
            }
            let nd = d + graph.link(link).distance_km;
            if nd < dist[v] {
                dist[v] = nd;
                prev[v] = Some((u, link));
                heap.push(Frontier { dist: nd, dc: v });
            }
        }
    }
    counters.record_dijkstra(settled, members.iter().filter(|&&m| m).count());
    let target = found?;
    let mut hops = vec![target];
    let mut links = Vec::new();
    let mut cur = target;
    while let Some((p, l)) = prev[cur] {
        hops.push(p);
        links.push(l);
        cur = p;
    }
    hops.reverse();
    links.reverse();
    Some(PathResult {
        hops,
        total_distance_km: dist[target],
        links,
    })
}

/// Shortest path from `src` to `dst` using only DCs in `members` and links
/// with at least `required_bw` free.
pub fn d2d_shortest_path(
    graph: &NetworkGraph,
    members: &[bool],
    avail: &(impl LinkAvailability + ?Sized),
    src: DcId,
    dst: DcId,
    required_bw: Kbps,
    counters: &mut PathCounters,
) -> Result<Option<PathResult>, RoutingError> {
    for dc in [src, dst] {
        if !members.get(dc).copied().unwrap_or(false) {
            return Err(RoutingError::OutsideSubgraph(dc));
        }
    }
    if src == dst {
        return Ok(Some(PathResult::trivial(src)));
    }
    Ok(dijkstra_to(graph, members, avail, src, |d| d == dst, required_bw, counters))
}

/// Shortest path over the whole network, used as a control for C2C.
pub fn global_shortest_path(
    graph: &NetworkGraph,
    avail: &(impl LinkAvailability + ?Sized),
    src: DcId,
    dst: DcId,
    required_bw: Kbps,
    counters: &mut PathCounters,
) -> Option<PathResult> {
    let all = vec![true; graph.dc_count()];
    d2d_shortest_path(graph, &all, avail, src, dst, required_bw, counters)
        .expect("every DC is a member")
}

/// First simple path found by DFS, visiting neighbors in ascending id.
pub fn c2c_cluster_path(
    cluster_graph: &[Vec<ClusterId>],
    src: ClusterId,
    dst: ClusterId,
    counters: &mut PathCounters,
) -> Option<Vec<ClusterId>> {
    counters.dfs_calls += 1;
    if src == dst {
        return Some(vec![src]);
    }
    let mut visited = vec![false; cluster_graph.len()];
    // Stack of (cluster, next neighbor index to try).
    let mut stack: Vec<(ClusterId, usize)> = vec![(src, 0)];
    visited[src] = true;
    let mut edges = 0usize;
    let result = loop {
        let Some(&mut (u, ref mut next)) = stack.last_mut() else {
            break None;
        };
        if *next >= cluster_graph[u].len() {
            stack.pop();
            continue;
        }
        let v = cluster_graph[u][*next];
        *next += 1;
        edges += 1;
        if visited[v] {
            continue;
        }
        visited[v] = true;
        stack.push((v, 0));
        if v == dst {
            break Some(stack.iter().map(|&(c, _)| c).collect());
        }
    };
    counters.dfs_edges_visited += edges as u64;
    counters.max_dfs_edges = counters.max_dfs_edges.max(edges);
    result
}

/// Two-level path discovery. Same-cluster queries run D2D inside the
/// cluster; otherwise the DFS cluster path is walked pairwise, each segment
/// searched over the union of two consecutive clusters only. Fails as a
/// whole if any segment is bandwidth-infeasible.
pub fn find_path(
    graph: &NetworkGraph,
    partition: &ClusterPartition,
    avail: &(impl LinkAvailability + ?Sized),
    src: DcId,
    dst: DcId,
    required_bw: Kbps,
    counters: &mut PathCounters,
) -> Option<PathResult> {
    if src == dst {
        return Some(PathResult::trivial(src));
    }
    let (cs, cd) = (partition.cluster_of(src), partition.cluster_of(dst));
    if cs == cd {
        let mask = partition.mask(&[cs]);
        return d2d_shortest_path(graph, &mask, avail, src, dst, required_bw, counters)
            .expect("endpoints belong to their own cluster");
    }
    let route = c2c_cluster_path(&partition.cluster_adjacency, cs, cd, counters)?;
    let mut hops = vec![src];
    let mut links = Vec::new();
    let mut entry = src;
    for pair in route.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let mask = partition.mask(&[a, b]);
        let segment = if b == cd {
            dijkstra_to(graph, &mask, avail, entry, |d| d == dst, required_bw, counters)?
        } else {
            let gateways = gateways(graph, partition, a, b);
            dijkstra_to(
                graph,
                &mask,
                avail,
                entry,
                |d| gateways.binary_search(&d).is_ok(),
                required_bw,
                counters,
            )?
        };
        hops.extend_from_slice(&segment.hops[1..]);
        links.extend_from_slice(&segment.links);
        entry = segment.destination();
    }
    Some(erase_loops(graph, hops, links))
}

/// DCs of cluster `b` that terminate an inter-cluster link from cluster `a`, sorted.
fn gateways(graph: &NetworkGraph, partition: &ClusterPartition, a: ClusterId, b: ClusterId) -> Vec<DcId> {
    let mut out: Vec<DcId> = partition
        .inter_links
        .iter()
        .filter_map(|&l| {
            let (x, y) = graph.link(l).endpoints;
            match (partition.assignment[x], partition.assignment[y]) {
                (cx, cy) if cx == a && cy == b => Some(y),
                (cx, cy) if cx == b && cy == a => Some(x),
                _ => None,
            }
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Removes cycles from a concatenated walk by cutting back to the first
/// occurrence of any repeated DC.
fn erase_loops(graph: &NetworkGraph, hops: Vec<DcId>, links: Vec<LinkId>) -> PathResult {
    let mut out_hops: Vec<DcId> = Vec::with_capacity(hops.len());
    let mut out_links: Vec<LinkId> = Vec::with_capacity(links.len());
    for (i, &dc) in hops.iter().enumerate() {
        if let Some(pos) = out_hops.iter().position(|&h| h == dc) {
            out_hops.truncate(pos + 1);
            out_links.truncate(pos);
        } else {
            if i > 0 {
                out_links.push(links[i - 1]);
            }
            out_hops.push(dc);
        }
    }
    let total_distance_km = out_links.iter().map(|&l| graph.link(l).distance_km).sum();
    PathResult {
        hops: out_hops,
        total_distance_km,
        links: out_links,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_network, make_clusters, DcEntry, LinkEntry, TopologyConfig};

    pub(crate) fn explicit(points: &[[f64; 2]], links: &[(usize, usize, f64)]) -> NetworkGraph {
        let cfg = TopologyConfig {
            dcs: points
                .iter()
                .map(|p| DcEntry { x: p[0], y: p[1], storage_gb: None, vcpu: None, ram_gb: None })
                .collect(),
            links: links
                .iter()
                .map(|&(a, b, d)| LinkEntry { a, b, bandwidth_mbps: None, distance_km: Some(d) })
                .collect(),
            ..Default::default()
        };
        build_network(&cfg, 0).unwrap()
    }

    fn triangle() -> NetworkGraph {
        // A=0, B=1, C=2 all co-located so any distance is admissible.
        explicit(&[[0.0, 0.0]; 3], &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)])
    }

    #[test]
    fn same_source_and_destination() {
        let g = triangle();
        let free = vec![Kbps(1_000_000); 3];
        let p = d2d_shortest_path(&g, &[true; 3], &free, 1, 1, Kbps(1), &mut PathCounters::default())
            .unwrap()
            .unwrap();
        assert_eq!(p.hops, vec![1]);
        assert_eq!(p.total_distance_km, 0.0);
    }

    #[test]
    fn triangle_prefers_two_hop_path() {
        let g = triangle();
        let free = vec![Kbps(1_000_000); 3];
        let p = d2d_shortest_path(&g, &[true; 3], &free, 0, 2, Kbps(100), &mut PathCounters::default())
            .unwrap()
            .unwrap();
        assert_eq!(p.hops, vec![0, 1, 2]);
        assert_eq!(p.total_distance_km, 2.0);
    }

    #[test]
    fn saturated_link_forces_direct_path() {
        let g = triangle();
        let mut free = vec![Kbps(1_000_000); 3];
        free[0] = Kbps(50); // A-B
        let p = d2d_shortest_path(&g, &[true; 3], &free, 0, 2, Kbps(100), &mut PathCounters::default())
            .unwrap()
            .unwrap();
        assert_eq!(p.hops, vec![0, 2]);
        assert_eq!(p.total_distance_km, 3.0);
        free[2] = Kbps(0);
        assert_eq!(
            d2d_shortest_path(&g, &[true; 3], &free, 0, 2, Kbps(100), &mut PathCounters::default()),
            Ok(None)
        );
    }

    #[test]
    fn endpoints_outside_subgraph_are_errors() {
        let g = triangle();
        let free = vec![Kbps(1); 3];
        assert_eq!(
            d2d_shortest_path(&g, &[true, true, false], &free, 0, 2, Kbps(1), &mut PathCounters::default()),
            Err(RoutingError::OutsideSubgraph(2))
        );
    }

    #[test]
    fn dfs_examples() {
        let mut c = PathCounters::default();
        let chain = vec![vec![1], vec![0, 2], vec![1]];
        assert_eq!(c2c_cluster_path(&chain, 1, 1, &mut c), Some(vec![1]));
        assert_eq!(c2c_cluster_path(&chain, 0, 2, &mut c), Some(vec![0, 1, 2]));
        let split = vec![vec![1], vec![0], vec![]];
        assert_eq!(c2c_cluster_path(&split, 0, 2, &mut c), None);
        // Each undirected edge is examined at most twice.
        assert!(c.max_dfs_edges <= 2 * 2);
    }

    #[test]
    fn dfs_takes_first_path_not_shortest() {
        // 0-1-2-3 and 0-3: ascending order explores 1 first.
        let g = vec![vec![1, 3], vec![0, 2], vec![1, 3], vec![0, 2]];
        let mut c = PathCounters::default();
        assert_eq!(c2c_cluster_path(&g, 0, 3, &mut c), Some(vec![0, 1, 2, 3]));
    }

    #[test]
    fn single_inter_link_forces_crossing() {
        // Cluster A = {0,1}, B = {2,3}; only link 1-2 crosses.
        let g = explicit(
            &[[0.0, 0.0], [10.0, 0.0], [500.0, 0.0], [510.0, 0.0]],
            &[(0, 1, 10.0), (1, 2, 490.0), (2, 3, 10.0)],
        );
        let p = make_clusters(&g, 2, 0).unwrap();
        let free = vec![Kbps(1_000_000); 3];
        let mut c = PathCounters::default();
        let path = find_path(&g, &p, &free, 0, 3, Kbps(10), &mut c).unwrap();
        assert_eq!(path.hops, vec![0, 1, 2, 3]);
        assert_eq!(path.total_distance_km, 510.0);
        assert!(path.is_feasible(&g, &free, Kbps(10)));
        assert!(c.max_settled <= 4);
    }

    #[test]
    fn intra_cluster_query_matches_d2d() {
        let g = build_network(&TopologyConfig::with_dc_count(20), 3).unwrap();
        let p = make_clusters(&g, 5, 3).unwrap();
        let free = vec![Kbps(1_000_000); g.links().len()];
        for members in &p.clusters {
            let mask = p.mask(&[p.cluster_of(members[0])]);
            for &a in members {
                for &b in members {
                    let mut c1 = PathCounters::default();
                    let via_find = find_path(&g, &p, &free, a, b, Kbps(1), &mut c1);
                    let direct = d2d_shortest_path(&g, &mask, &free, a, b, Kbps(1), &mut PathCounters::default()).unwrap();
                    if direct.is_some() {
                        assert_eq!(via_find, direct);
                        assert!(c1.max_settled <= members.len());
                    }
                }
            }
        }
    }

    #[test]
    fn loop_erasure_keeps_a_simple_walk() {
        let g = explicit(&[[0.0, 0.0]; 4], &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]);
        let walk = erase_loops(&g, vec![0, 1, 2, 1, 2, 3], vec![0, 1, 1, 1, 2]);
        assert_eq!(walk.hops, vec![0, 1, 2, 3]);
        assert_eq!(walk.links, vec![0, 1, 2]);
        assert_eq!(walk.total_distance_km, 3.0);
    }
}

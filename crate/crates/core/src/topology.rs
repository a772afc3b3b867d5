//! Network graph construction and size-bounded clustering.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::Kbps;

pub type DcId = usize;
pub type LinkId = usize;
pub type ClusterId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("network needs at least 2 data centers, got {0}")]
    TooFewDcs(usize),
    #[error("data center ids must be dense 0..N-1 (found {found} at position {position})")]
    NonDenseIds { position: usize, found: usize },
    #[error("data center {0} has a non-positive capacity")]
    NonPositiveCapacity(DcId),
    #[error("link {0} has a non-positive bandwidth")]
    NonPositiveBandwidth(LinkId),
    #[error("link {0} is a self-loop")]
    SelfLoop(LinkId),
    #[error("link {0} references unknown data center {1}")]
    UnknownEndpoint(LinkId, DcId),
    #[error("link {0} duplicates an earlier link between {1} and {2}")]
    DuplicateLink(LinkId, DcId, DcId),
    #[error("link {0} is shorter than the straight-line distance of its endpoints")]
    TooShort(LinkId),
    #[error("network graph is disconnected")]
    Disconnected,
    #[error("cluster size limit must be at least 1")]
    ZeroSizeLimit,
    #[error("invalid topology configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataCenterSpec {
    pub id: DcId,
    /// Planar coordinates in km.
    pub position: [f64; 2],
    pub storage_cap: u32,
    /// vCPU count.
    pub compute_cap: u32,
    pub ram_cap: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub endpoints: (DcId, DcId),
    pub bandwidth_cap: Kbps,
    pub distance_km: f64,
}

impl LinkSpec {
    pub fn other(&self, dc: DcId) -> DcId {
        if self.endpoints.0 == dc {
            self.endpoints.1
        } else {
            self.endpoints.0
        }
    }
}

pub fn euclidean(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkGraph {
    dcs: Vec<DataCenterSpec>,
    links: Vec<LinkSpec>,
    /// Per DC: `(neighbor, link)` sorted by neighbor id.
    #[serde(skip)]
    adjacency: Vec<Vec<(DcId, LinkId)>>,
}

impl NetworkGraph {
    pub fn new(dcs: Vec<DataCenterSpec>, links: Vec<LinkSpec>) -> Result<Self, TopologyError> {
        if dcs.len() < 2 {
            return Err(TopologyError::TooFewDcs(dcs.len()));
        }
        for (position, dc) in dcs.iter().enumerate() {
            if dc.id != position {
                return Err(TopologyError::NonDenseIds {
                    position,
                    found: dc.id,
                });
            }
            if dc.storage_cap == 0 || dc.compute_cap == 0 || dc.ram_cap == 0 {
                return Err(TopologyError::NonPositiveCapacity(dc.id));
            }
        }
        let n = dcs.len();
        let mut seen = BTreeSet::new();
        let mut adjacency = vec![Vec::new(); n];
        for (id, link) in links.iter().enumerate() {
            let (a, b) = link.endpoints;
            for end in [a, b] {
                if end >= n {
                    return Err(TopologyError::UnknownEndpoint(id, end));
                }
            }
            if a == b {
                return Err(TopologyError::SelfLoop(id));
            }
            if link.bandwidth_cap == Kbps::ZERO {
                return Err(TopologyError::NonPositiveBandwidth(id));
            }
            let straight = euclidean(dcs[a].position, dcs[b].position);
            if !(link.distance_km >= straight - 1e-9) {
                return Err(TopologyError::TooShort(id));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(TopologyError::DuplicateLink(id, a, b));
            }
            adjacency[a].push((b, id));
            adjacency[b].push((a, id));
        }
        for row in &mut adjacency {
            row.sort_unstable();
        }
        let graph = NetworkGraph {
            dcs,
            links,
            adjacency,
        };
        if !graph.is_connected() {
            return Err(TopologyError::Disconnected);
        }
        Ok(graph)
    }

    pub fn dc_count(&self) -> usize {
        self.dcs.len()
    }

    pub fn dcs(&self) -> &[DataCenterSpec] {
        &self.dcs
    }

    pub fn dc(&self, id: DcId) -> &DataCenterSpec {
        &self.dcs[id]
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &LinkSpec {
        &self.links[id]
    }

    pub fn neighbors(&self, dc: DcId) -> &[(DcId, LinkId)] {
        &self.adjacency[dc]
    }

    pub fn distance_between(&self, a: DcId, b: DcId) -> f64 {
        euclidean(self.dcs[a].position, self.dcs[b].position)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.dcs.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcEntry {
    pub x: f64,
    pub y: f64,
    pub storage_gb: Option<u32>,
    pub vcpu: Option<u32>,
    pub ram_gb: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkEntry {
    pub a: DcId,
    pub b: DcId,
    pub bandwidth_mbps: Option<f64>,
    pub distance_km: Option<f64>,
}

/// Topology section of the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    /// Number of DCs for the random geometric generator. Ignored when `dcs` is given.
    pub dc_count: usize,
    pub area_km: f64,
    pub radius_km: f64,
    pub storage_gb: u32,
    pub ram_gb: u32,
    pub vcpu: u32,
    pub link_bandwidth_mbps: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub dcs: Vec<DcEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<LinkEntry>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            dc_count: 20,
            area_km: 1000.0,
            radius_km: 250.0,
            storage_gb: 2048,
            ram_gb: 256,
            vcpu: 40,
            link_bandwidth_mbps: 1000.0,
            dcs: Vec::new(),
            links: Vec::new(),
        }
    }
}

impl TopologyConfig {
    pub fn with_dc_count(dc_count: usize) -> Self {
        TopologyConfig {
            dc_count,
            ..Default::default()
        }
    }

    pub fn effective_dc_count(&self) -> usize {
        if self.dcs.is_empty() {
            self.dc_count
        } else {
            self.dcs.len()
        }
    }
}

/// Builds a connected network from configuration. Random generation is
/// deterministic for a given `seed`.
pub fn build_network(config: &TopologyConfig, seed: u64) -> Result<NetworkGraph, TopologyError> {
    if !(config.link_bandwidth_mbps > 0.0) {
        return Err(TopologyError::Config("link_bandwidth_mbps must be > 0".into()));
    }
    if config.storage_gb == 0 || config.ram_gb == 0 || config.vcpu == 0 {
        return Err(TopologyError::Config("default capacities must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dcs: Vec<DataCenterSpec> = if config.dcs.is_empty() {
        if config.dc_count < 2 {
            return Err(TopologyError::TooFewDcs(config.dc_count));
        }
        if !(config.area_km > 0.0) {
            return Err(TopologyError::Config("area_km must be > 0".into()));
        }
        (0..config.dc_count)
            .map(|id| DataCenterSpec {
                id,
                position: [
                    rng.gen_range(0.0..config.area_km),
                    rng.gen_range(0.0..config.area_km),
                ],
                storage_cap: config.storage_gb,
                compute_cap: config.vcpu,
                ram_cap: config.ram_gb,
            })
            .collect()
    } else {
        config
            .dcs
            .iter()
            .enumerate()
            .map(|(id, e)| DataCenterSpec {
                id,
                position: [e.x, e.y],
                storage_cap: e.storage_gb.unwrap_or(config.storage_gb),
                compute_cap: e.vcpu.unwrap_or(config.vcpu),
                ram_cap: e.ram_gb.unwrap_or(config.ram_gb),
            })
            .collect()
    };
    let default_bw = Kbps::from_mbps(config.link_bandwidth_mbps);

    let links = if config.links.is_empty() {
        geometric_links(&dcs, config.radius_km, default_bw)
    } else {
        let mut links = Vec::with_capacity(config.links.len());
        for (id, e) in config.links.iter().enumerate() {
            if e.a >= dcs.len() || e.b >= dcs.len() {
                return Err(TopologyError::UnknownEndpoint(id, e.a.max(e.b)));
            }
            let bw = match e.bandwidth_mbps {
                Some(mbps) if !(mbps > 0.0) => return Err(TopologyError::NonPositiveBandwidth(id)),
                Some(mbps) => Kbps::from_mbps(mbps),
                None => default_bw,
            };
            links.push(LinkSpec {
                endpoints: (e.a, e.b),
                bandwidth_cap: bw,
                distance_km: e
                    .distance_km
                    .unwrap_or_else(|| euclidean(dcs[e.a].position, dcs[e.b].position)),
            });
        }
        links
    };
    NetworkGraph::new(dcs, links)
}

/// Connects every pair within `radius_km`, then repeatedly adds the shortest
/// edge joining two components until the graph is connected.
fn geometric_links(dcs: &[DataCenterSpec], radius_km: f64, bw: Kbps) -> Vec<LinkSpec> {
    let n = dcs.len();
    let mut links = Vec::new();
    let mut uf = UnionFind::new(n);
    for a in 0..n {
        for b in a + 1..n {
            let d = euclidean(dcs[a].position, dcs[b].position);
            if d <= radius_km {
                links.push(LinkSpec {
                    endpoints: (a, b),
                    bandwidth_cap: bw,
                    distance_km: d,
                });
                uf.union(a, b);
            }
        }
    }
    while uf.components > 1 {
        let mut best: Option<(f64, DcId, DcId)> = None;
        for a in 0..n {
            for b in a + 1..n {
                if uf.find(a) == uf.find(b) {
                    continue;
                }
                let d = euclidean(dcs[a].position, dcs[b].position);
                if best.map_or(true, |(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let (d, a, b) = best.expect("more than one component implies a crossing pair");
        links.push(LinkSpec {
            endpoints: (a, b),
            bandwidth_cap: bw,
            distance_km: d,
        });
        uf.union(a, b);
    }
    links
}

struct UnionFind {
    parent: Vec<usize>,
    components: usize,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            components: n,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
            self.components -= 1;
        }
    }
}

/// Assignment of DCs to size-bounded clusters and the induced link split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterPartition {
    pub size_limit: usize,
    pub assignment: Vec<ClusterId>,
    pub clusters: Vec<Vec<DcId>>,
    pub centroids: Vec<[f64; 2]>,
    pub intra_links: Vec<Vec<LinkId>>,
    pub inter_links: Vec<LinkId>,
    pub cluster_adjacency: Vec<Vec<ClusterId>>,
}

impl ClusterPartition {
    /// Builds the partition from a raw labelling. Labels are renumbered so
    /// cluster ids follow the lowest DC id in each cluster.
    pub fn from_assignment(graph: &NetworkGraph, labels: &[usize], size_limit: usize) -> Self {
        assert_eq!(labels.len(), graph.dc_count());
        let mut order: Vec<usize> = Vec::new();
        for &l in labels {
            if !order.contains(&l) {
                order.push(l);
            }
        }
        let assignment: Vec<ClusterId> = labels
            .iter()
            .map(|l| order.iter().position(|o| o == l).unwrap())
            .collect();
        let k = order.len();
        let mut clusters = vec![Vec::new(); k];
        for (dc, &c) in assignment.iter().enumerate() {
            clusters[c].push(dc);
        }
        let centroids = clusters
            .iter()
            .map(|members| centroid(graph, members))
            .collect();
        let mut intra_links = vec![Vec::new(); k];
        let mut inter_links = Vec::new();
        for (id, link) in graph.links().iter().enumerate() {
            let (ca, cb) = (assignment[link.endpoints.0], assignment[link.endpoints.1]);
            if ca == cb {
                intra_links[ca].push(id);
            } else {
                inter_links.push(id);
            }
        }
        let mut partition = ClusterPartition {
            size_limit,
            assignment,
            clusters,
            centroids,
            intra_links,
            inter_links,
            cluster_adjacency: Vec::new(),
        };
        partition.cluster_adjacency = cluster_adjacency(graph, &partition);
        partition
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_of(&self, dc: DcId) -> ClusterId {
        self.assignment[dc]
    }

    pub fn is_inter(&self, graph: &NetworkGraph, link: LinkId) -> bool {
        let (a, b) = graph.link(link).endpoints;
        self.assignment[a] != self.assignment[b]
    }

    /// Membership mask for the union of the given clusters.
    pub fn mask(&self, clusters: &[ClusterId]) -> Vec<bool> {
        self.assignment
            .iter()
            .map(|c| clusters.contains(c))
            .collect()
    }
}

fn centroid(graph: &NetworkGraph, members: &[DcId]) -> [f64; 2] {
    let n = members.len() as f64;
    let (sx, sy) = members.iter().fold((0.0, 0.0), |(x, y), &dc| {
        let p = graph.dc(dc).position;
        (x + p[0], y + p[1])
    });
    [sx / n, sy / n]
}

/// Cluster-level graph: an edge joins two clusters iff an inter-cluster link
/// connects them. Neighbor lists are sorted ascending.
pub fn cluster_adjacency(graph: &NetworkGraph, partition: &ClusterPartition) -> Vec<Vec<ClusterId>> {
    let mut adj = vec![BTreeSet::new(); partition.cluster_count()];
    for &link in &partition.inter_links {
        let (a, b) = graph.link(link).endpoints;
        let (ca, cb) = (partition.assignment[a], partition.assignment[b]);
        adj[ca].insert(cb);
        adj[cb].insert(ca);
    }
    adj.into_iter().map(|s| s.into_iter().collect()).collect()
}

const MAX_LLOYD_ITERATIONS: usize = 100;
pub const CENTROID_TOLERANCE_KM: f64 = 1e-9;

/// Constrained k-means: Lloyd iterations whose assignment step greedily fills
/// centroids up to `size_limit`, followed by single-move refinement so that no
/// DC prefers another non-full cluster's centroid.
pub fn make_clusters(
    graph: &NetworkGraph,
    size_limit: usize,
    seed: u64,
) -> Result<ClusterPartition, TopologyError> {
    if size_limit == 0 {
        return Err(TopologyError::ZeroSizeLimit);
    }
    let n = graph.dc_count();
    let limit = size_limit.min(n);
    let k = n.div_ceil(limit);
    let points: Vec<[f64; 2]> = graph.dcs().iter().map(|d| d.position).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(&points, k, &mut rng);

    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let next = greedy_assign(&points, &centroids, limit);
        let changed = next != labels;
        labels = next;
        let updated = means(&points, &labels, &centroids);
        let moved = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| euclidean(*a, *b))
            .fold(0.0, f64::max);
        centroids = updated;
        if !changed || moved <= CENTROID_TOLERANCE_KM {
            break;
        }
    }
    refine(&points, &mut labels, &mut centroids, limit);
    Ok(ClusterPartition::from_assignment(graph, &labels, size_limit))
}

fn kmeans_plus_plus(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let n = points.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    while chosen.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .map(|p| {
                chosen
                    .iter()
                    .map(|&c| euclidean(*p, points[c]).powi(2))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut idx = n - 1;
            for (i, w) in weights.iter().enumerate() {
                if target < *w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        } else {
            // All remaining points coincide with chosen ones.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(pick);
    }
    chosen.into_iter().map(|i| points[i]).collect()
}

fn greedy_assign(points: &[[f64; 2]], centroids: &[[f64; 2]], limit: usize) -> Vec<usize> {
    let k = centroids.len();
    let dist: Vec<Vec<f64>> = points
        .iter()
        .map(|p| centroids.iter().map(|c| euclidean(*p, *c)).collect())
        .collect();
    let margin = |i: usize| -> f64 {
        let mut sorted = dist[i].clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.len() < 2 {
            0.0
        } else {
            sorted[0] - sorted[1]
        }
    };
    let mut order: Vec<(f64, usize)> = (0..points.len()).map(|i| (margin(i), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut load = vec![0usize; k];
    let mut labels = vec![0; points.len()];
    for (_, i) in order {
        let best = (0..k)
            .filter(|&c| load[c] < limit)
            .min_by(|&a, &b| dist[i][a].total_cmp(&dist[i][b]).then(a.cmp(&b)))
            .expect("k * limit >= n leaves room for every DC");
        load[best] += 1;
        labels[i] = best;
    }
    labels
}

fn means(points: &[[f64; 2]], labels: &[usize], previous: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut sums = vec![[0.0, 0.0]; previous.len()];
    let mut counts = vec![0usize; previous.len()];
    for (p, &l) in points.iter().zip(labels) {
        sums[l][0] += p[0];
        sums[l][1] += p[1];
        counts[l] += 1;
    }
    sums.iter()
        .zip(&counts)
        .zip(previous)
        .map(|((s, &c), prev)| {
            if c == 0 {
                *prev
            } else {
                [s[0] / c as f64, s[1] / c as f64]
            }
        })
        .collect()
}

/// Moves single DCs to strictly closer non-full centroids until none remain.
/// Each move lowers the within-cluster sum of squares, so this terminates.
fn refine(points: &[[f64; 2]], labels: &mut [usize], centroids: &mut Vec<[f64; 2]>, limit: usize) {
    let k = centroids.len();
    loop {
        *centroids = means(points, labels, centroids);
        let mut load = vec![0usize; k];
        for &l in labels.iter() {
            load[l] += 1;
        }
        let mut moved = false;
        'scan: for i in 0..points.len() {
            let own = euclidean(points[i], centroids[labels[i]]);
            for c in 0..k {
                if c == labels[i] || load[c] == 0 || load[c] >= limit {
                    continue;
                }
                if euclidean(points[i], centroids[c]) < own - CENTROID_TOLERANCE_KM {
                    labels[i] = c;
                    moved = true;
                    break 'scan;
                }
            }
        }
        if !moved {
            break;
        }
    }
}

/// Checks the stability property: no DC is closer (beyond tolerance) to the
/// centroid of another non-full cluster than to its own.
pub fn is_stable(graph: &NetworkGraph, partition: &ClusterPartition) -> bool {
    graph.dcs().iter().all(|dc| {
        let own = partition.assignment[dc.id];
        let d_own = euclidean(dc.position, partition.centroids[own]);
        partition.clusters.iter().enumerate().all(|(c, members)| {
            c == own
                || members.len() >= partition.size_limit
                || euclidean(dc.position, partition.centroids[c]) >= d_own - CENTROID_TOLERANCE_KM
        })
    })
}

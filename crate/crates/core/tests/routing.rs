use proptest::prelude::*;
use sfcsim_core::routing::{c2c_cluster_path, d2d_shortest_path, find_path, PathCounters};
use sfcsim_core::topology::{build_network, make_clusters, DcId, NetworkGraph, TopologyConfig};
use sfcsim_core::units::Kbps;

/// Exhaustive simple-path search: minimum distance among paths inside
/// `members` whose links all carry at least `bw` free.
fn oracle(g: &NetworkGraph, members: &[bool], free: &[Kbps], src: DcId, dst: DcId, bw: Kbps) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut stack = vec![(src, 0.0, vec![src])];
    while let Some((u, d, path)) = stack.pop() {
        if u == dst {
            best = Some(best.map_or(d, |b: f64| b.min(d)));
            continue;
        }
        for &(v, l) in g.neighbors(u) {
            if members[v] && !path.contains(&v) && free[l] >= bw {
                let mut p = path.clone();
                p.push(v);
                stack.push((v, d + g.link(l).distance_km, p));
            }
        }
    }
    best
}

fn instance(n: usize, seed: u64, loads: &[u64]) -> (NetworkGraph, Vec<Kbps>) {
    let g = build_network(&TopologyConfig::with_dc_count(n), seed).unwrap();
    let free = g
        .links()
        .iter()
        .enumerate()
        .map(|(i, l)| Kbps(l.bandwidth_cap.0 * loads[i % loads.len()] / 100))
        .collect();
    (g, free)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn d2d_matches_exhaustive_search(
        n in 2usize..10,
        seed in any::<u64>(),
        loads in prop::collection::vec(0u64..=100, 1..16),
        src in 0usize..10,
        dst in 0usize..10,
        bw_mbps in 1u64..1000,
    ) {
        let (g, free) = instance(n, seed, &loads);
        let (src, dst) = (src % n, dst % n);
        let all = vec![true; n];
        let bw = Kbps::from_mbps(bw_mbps as f64);
        let got = d2d_shortest_path(&g, &all, &free, src, dst, bw, &mut PathCounters::default()).unwrap();
        let want = oracle(&g, &all, &free, src, dst, bw);
        prop_assert_eq!(got.as_ref().map(|p| p.total_distance_km), want);
        if let Some(p) = got {
            prop_assert!(p.is_feasible(&g, &free, bw));
            prop_assert!(p.is_loop_free());
        }
    }

    #[test]
    fn two_level_paths_are_feasible_and_local(
        n in 4usize..40,
        limit in 1usize..8,
        seed in any::<u64>(),
        pairs in prop::collection::vec((0usize..40, 0usize..40), 1..10),
    ) {
        let g = build_network(&TopologyConfig::with_dc_count(n), seed).unwrap();
        let part = make_clusters(&g, limit, seed ^ 1).unwrap();
        let free: Vec<Kbps> = g.links().iter().map(|l| l.bandwidth_cap).collect();
        let mut sizes: Vec<usize> = part.clusters.iter().map(Vec::len).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        let bound = sizes[0] + sizes.get(1).copied().unwrap_or(0);
        let mut counters = PathCounters::default();
        for (a, b) in pairs {
            let (a, b) = (a % n, b % n);
            // The network is connected, so the cluster graph is too and the
            // DFS always finds a route.
            let route = c2c_cluster_path(
                &part.cluster_adjacency,
                part.cluster_of(a),
                part.cluster_of(b),
                &mut PathCounters::default(),
            );
            prop_assert!(route.is_some());
            if let Some(p) = find_path(&g, &part, &free, a, b, Kbps(1), &mut counters) {
                prop_assert_eq!(p.source(), a);
                prop_assert_eq!(p.destination(), b);
                prop_assert!(p.is_feasible(&g, &free, Kbps(1)));
                prop_assert!(p.is_loop_free());
            }
        }
        prop_assert!(counters.max_settled <= bound);
    }
}

#[test]
fn saturated_links_block_routing() {
    let (g, _) = instance(6, 9, &[100]);
    let none = vec![Kbps::ZERO; g.links().len()];
    let all = vec![true; 6];
    let got = d2d_shortest_path(&g, &all, &none, 0, 5, Kbps(1), &mut PathCounters::default()).unwrap();
    assert!(got.is_none());
}

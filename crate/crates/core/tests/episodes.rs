use proptest::prelude::*;
use sfcsim_core::drl::{ModelConfig, QNetwork};
use sfcsim_core::sim::{run_episode, BwHold, Scenario, SimConfig};
use sfcsim_core::topology::TopologyConfig;
use sfcsim_core::workload::{default_catalog, RequestStatus, SfcKind};

fn scenario(n: usize, limit: usize, scale: f64, whole: bool, parallel: bool) -> Scenario {
    Scenario {
        topology: TopologyConfig::with_dc_count(n),
        cluster_limit: limit,
        scale,
        catalog: default_catalog(),
        sim: SimConfig {
            bw_hold: if whole { BwHold::WholeLifetime } else { BwHold::PerTransfer },
            parallel,
            ..SimConfig::default()
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_request_terminates_and_is_counted(
        n in 2usize..12,
        limit in 1usize..12,
        scale in 0.05f64..0.5,
        whole in any::<bool>(),
        eps in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let sc = scenario(n, limit, scale, whole, false);
        let net = QNetwork::zeros(ModelConfig::default().shape());
        let out = run_episode(&sc, seed, &net, eps, true).unwrap();
        let rep = &out.report;
        prop_assert_eq!(out.world.closed.len() as u64, rep.total.generated);
        prop_assert!(out.world.closed.iter().all(|r| r.is_terminal()));
        prop_assert_eq!(rep.total.generated, rep.total.accepted + rep.total.dropped);
        prop_assert_eq!(rep.rewards.accepted, rep.total.accepted);
        prop_assert_eq!(rep.rewards.dropped, rep.total.dropped);
        let accepted = out.world.closed.iter().filter(|r| r.status == RequestStatus::Accepted).count() as u64;
        prop_assert_eq!(accepted, rep.total.accepted);
        prop_assert!(out.world.verify().is_empty());
        let recorded: f64 = out.transitions.iter().map(|t| t.reward).sum();
        prop_assert!((recorded - rep.rewards.total).abs() < 1e-9);
        for k in SfcKind::ALL {
            let c = rep.per_type[k.index()];
            prop_assert_eq!(c.generated, c.accepted + c.dropped);
        }
    }

    #[test]
    fn parallel_agents_match_sequential(
        n in 4usize..12,
        limit in 1usize..5,
        seed in any::<u64>(),
    ) {
        let net = QNetwork::zeros(ModelConfig::default().shape());
        let a = run_episode(&scenario(n, limit, 0.2, false, false), seed, &net, 0.5, false).unwrap();
        let b = run_episode(&scenario(n, limit, 0.2, false, true), seed, &net, 0.5, false).unwrap();
        prop_assert_eq!(a.report.per_cluster, b.report.per_cluster);
        prop_assert_eq!(a.report.steps, b.report.steps);
        prop_assert_eq!(a.report.rewards, b.report.rewards);
    }
}

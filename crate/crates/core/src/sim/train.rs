use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{run_episode, Scenario, SimError};
use crate::drl::{Dqn, ModelConfig, QNetwork, ReplayMemory};
use crate::units::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Episodes between update rounds.
    pub block_episodes: usize,
    pub updates_per_block: usize,
    pub min_dcs: usize,
    pub max_dcs: usize,
    /// Demand scale drawn uniformly from `[scale_min, scale_max]`.
    pub scale_min: f64,
    pub scale_max: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 1000,
            block_episodes: 20,
            updates_per_block: 350,
            min_dcs: 2,
            max_dcs: 4,
            scale_min: 0.1,
            scale_max: 0.3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.episodes == 0 || self.block_episodes == 0 {
            return Err("episodes and block_episodes must be positive".into());
        }
        if self.min_dcs < 2 || self.min_dcs > self.max_dcs {
            return Err("need 2 <= min_dcs <= max_dcs".into());
        }
        if !(self.scale_min > 0.0) || self.scale_min > self.scale_max {
            return Err("need 0 < scale_min <= scale_max".into());
        }
        Ok(())
    }
}

/// One training-curve record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    pub dc_count: usize,
    pub cluster_limit: usize,
    pub cluster_count: usize,
    pub scale: f64,
    pub epsilon: f64,
    pub generated: u64,
    pub accepted: u64,
    pub acc_ratio: Option<f64>,
    pub reward: f64,
    pub actions: u64,
    pub replay_len: usize,
    pub update_calls: u64,
    /// Mean loss of the update round that followed this episode, if any.
    pub loss: Option<f64>,
}

pub struct TrainOutcome {
    pub final_net: QNetwork,
    /// Weights in use during the block with the best mean acceptance.
    pub best_net: QNetwork,
    pub best_block: Option<usize>,
    pub best_acceptance: Option<f64>,
    pub curve: Vec<CurveRow>,
    pub update_calls: u64,
}

/// Curriculum training: each episode draws a DC count, a cluster limit in
/// `1..=dc_count` and a demand scale; an update round follows every block.
pub fn train(
    base: &Scenario,
    model: &ModelConfig,
    tc: &TrainConfig,
    seed: u64,
    mut on_episode: impl FnMut(&CurveRow),
) -> Result<TrainOutcome, SimError> {
    model.validate().map_err(|e| SimError::Config(e.to_string()))?;
    tc.validate().map_err(SimError::Config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 100));
    let mut dqn = Dqn::new(model.clone(), &mut rng);
    let mut memory = ReplayMemory::new(model.replay_capacity);
    let mut curve = Vec::with_capacity(tc.episodes);
    let mut best: Option<(f64, usize, QNetwork)> = None;
    let mut block_start = dqn.online.clone();
    let mut block_acc = Vec::new();
    let mut update_calls = 0u64;

    for ep in 0..tc.episodes {
        let n = rng.gen_range(tc.min_dcs..=tc.max_dcs);
        let limit = rng.gen_range(1..=n);
        let scale = if tc.scale_max > tc.scale_min {
            rng.gen_range(tc.scale_min..=tc.scale_max)
        } else {
            tc.scale_min
        };
        let mut sc = base.clone();
        sc.topology.dc_count = n;
        sc.topology.dcs.clear();
        sc.topology.links.clear();
        sc.cluster_limit = limit;
        sc.scale = scale;
        let epsilon = model.epsilon(ep);
        let out = run_episode(&sc, derive_seed(seed, 1_000 + ep as u64), &dqn.online, epsilon, true)?;
        for t in out.transitions {
            memory.push(t);
        }
        let rep = &out.report;
        block_acc.push(rep.acceptance_value());
        let mut row = CurveRow {
            episode: ep,
            dc_count: n,
            cluster_limit: limit,
            cluster_count: rep.meta.cluster_count,
            scale,
            epsilon,
            generated: rep.total.generated,
            accepted: rep.total.accepted,
            acc_ratio: rep.acceptance_value(),
            reward: rep.rewards.total,
            actions: rep.actions,
            replay_len: memory.len(),
            update_calls,
            loss: None,
        };
        if (ep + 1) % tc.block_episodes == 0 {
            let vals: Vec<f64> = block_acc.drain(..).flatten().collect();
            if !vals.is_empty() {
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                if best.as_ref().is_none_or(|(b, _, _)| mean > *b) {
                    best = Some((mean, ep / tc.block_episodes, block_start.clone()));
                }
            }
            let mut losses = Vec::new();
            for _ in 0..tc.updates_per_block {
                update_calls += 1;
                if let Some(l) = dqn.update(&memory, &mut rng) {
                    losses.push(l);
                }
            }
            if !losses.is_empty() {
                row.loss = Some(losses.iter().sum::<f64>() / losses.len() as f64);
            }
            row.update_calls = update_calls;
            block_start = dqn.online.clone();
        }
        on_episode(&row);
        curve.push(row);
    }
    let (best_acceptance, best_block, best_net) = match best {
        Some((a, b, net)) => (Some(a), Some(b), net),
        None => (None, None, dqn.online.clone()),
    };
    Ok(TrainOutcome {
        final_net: dqn.online,
        best_net,
        best_block,
        best_acceptance,
        curve,
        update_calls,
    })
}

pub fn write_curve(w: impl std::io::Write, curve: &[CurveRow]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in curve {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SimConfig;
    use crate::topology::TopologyConfig;
    use crate::workload::default_catalog;

    fn setup() -> (Scenario, ModelConfig, TrainConfig) {
        let sc = Scenario {
            topology: TopologyConfig::default(),
            cluster_limit: 1,
            scale: 1.0,
            catalog: default_catalog(),
            sim: SimConfig::default(),
        };
        let mut model = ModelConfig::small();
        model.batch_size = 8;
        let tc = TrainConfig {
            episodes: 4,
            block_episodes: 2,
            updates_per_block: 5,
            scale_min: 0.1,
            scale_max: 0.2,
            ..Default::default()
        };
        (sc, model, tc)
    }

    #[test]
    fn update_rounds_follow_blocks() {
        let (sc, model, tc) = setup();
        let mut seen = 0;
        let out = train(&sc, &model, &tc, 1, |_| seen += 1).unwrap();
        assert_eq!(seen, 4);
        assert_eq!(out.curve.len(), 4);
        assert_eq!(out.update_calls, 10);
        assert_eq!(out.curve[1].update_calls, 5);
        assert_eq!(out.curve[2].update_calls, 5);
        assert!(out.curve.iter().all(|r| (2..=4).contains(&r.dc_count)));
        assert!(out.curve.iter().all(|r| r.cluster_limit <= r.dc_count));
    }

    #[test]
    fn training_is_deterministic() {
        let (sc, model, tc) = setup();
        let a = train(&sc, &model, &tc, 7, |_| {}).unwrap();
        let b = train(&sc, &model, &tc, 7, |_| {}).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.final_net, b.final_net);
        assert_eq!(a.best_net, b.best_net);
    }
}

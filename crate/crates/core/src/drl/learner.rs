use rand::Rng;

use super::encoding::StateEncoding;
use super::network::{NetShape, QNetwork};
use super::replay::ReplayMemory;
use super::ModelConfig;

/// Epsilon-greedy action: uniform with probability `epsilon`, else the
/// lowest-index argmax of Q.
pub fn act(net: &QNetwork, s: &StateEncoding, epsilon: f64, rng: &mut impl Rng) -> usize {
    if rng.gen::<f64>() < epsilon {
        return rng.gen_range(0..net.shape().actions);
    }
    let q = net.trace(s).q;
    argmax(&q)
}

pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// One supervised sample for the TD loss: push Q(state, action) toward target.
pub struct TdSample<'a> {
    pub state: &'a StateEncoding,
    pub action: usize,
    pub target: f64,
}

/// Mean squared TD error and its gradient with respect to all parameters.
pub fn loss_and_grad(net: &QNetwork, batch: &[TdSample]) -> (f64, Vec<f64>) {
    let mut grads = vec![0.0; net.param_count()];
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut dq = vec![0.0; net.shape().actions];
    for s in batch {
        let trace = net.trace(s.state);
        let err = trace.q[s.action] - s.target;
        loss += err * err / n;
        dq.fill(0.0);
        dq[s.action] = 2.0 * err / n;
        net.backward(s.state, &trace, &dq, &mut grads);
    }
    (loss, grads)
}

pub fn loss(net: &QNetwork, batch: &[TdSample]) -> f64 {
    let n = batch.len() as f64;
    batch
        .iter()
        .map(|s| {
            let e = net.trace(s.state).q[s.action] - s.target;
            e * e / n
        })
        .sum()
}

/// DQN learner: online network, optional target network, momentum SGD.
#[derive(Debug, Clone)]
pub struct Dqn {
    pub config: ModelConfig,
    pub online: QNetwork,
    target: Option<QNetwork>,
    velocity: Vec<f64>,
    pub updates: u64,
}

impl Dqn {
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Self {
        let online = QNetwork::xavier(config.shape(), rng);
        Self::from_network(config, online)
    }

    pub fn from_network(config: ModelConfig, online: QNetwork) -> Self {
        let target = config.use_target.then(|| online.clone());
        let velocity = vec![0.0; online.param_count()];
        Dqn {
            config,
            online,
            target,
            velocity,
            updates: 0,
        }
    }

    pub fn shape(&self) -> &NetShape {
        self.online.shape()
    }

    /// Targets y = r + gamma * max Q_target(s'), or r when terminal.
    fn targets(&self, states: &[(StateEncoding, StateEncoding)], batch: &[&super::Transition]) -> Vec<f64> {
        let net = self.target.as_ref().unwrap_or(&self.online);
        batch
            .iter()
            .zip(states)
            .map(|(t, (_, next))| {
                if t.terminal {
                    t.reward
                } else {
                    let q = net.trace(next).q;
                    t.reward + self.config.gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect()
    }

    /// One gradient step on a uniformly sampled batch. None when memory holds
    /// fewer than a batch.
    pub fn update(&mut self, memory: &ReplayMemory, rng: &mut impl Rng) -> Option<f64> {
        let batch = memory.sample(self.config.batch_size, rng)?;
        let states: Vec<(StateEncoding, StateEncoding)> = batch
            .iter()
            .map(|t| (StateEncoding::unpack(&t.state), StateEncoding::unpack(&t.next_state)))
            .collect();
        let targets = self.targets(&states, &batch);
        let samples: Vec<TdSample> = batch
            .iter()
            .zip(&states)
            .zip(&targets)
            .map(|((t, (s, _)), &y)| TdSample {
                state: s,
                action: t.action as usize,
                target: y,
            })
            .collect();
        let (loss, grads) = loss_and_grad(&self.online, &samples);
        self.step(grads);
        Some(loss)
    }

    /// Applies a gradient with momentum SGD and handles target syncing.
    pub fn step(&mut self, mut grads: Vec<f64>) {
        if let Some(clip) = self.config.grad_clip {
            let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > clip {
                for g in &mut grads {
                    *g *= clip / norm;
                }
            }
        }
        let (lr, mu) = (self.config.learning_rate, self.config.momentum);
        for ((w, v), g) in self.online.params.iter_mut().zip(&mut self.velocity).zip(&grads) {
            *v = mu * *v - lr * g;
            *w += *v;
        }
        self.updates += 1;
        if let Some(t) = &mut self.target {
            if self.updates % self.config.target_sync == 0 {
                t.params.copy_from_slice(&self.online.params);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drl::encoding::INPUT_DIMS;
    use crate::drl::replay::Transition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut impl Rng) -> StateEncoding {
        let mut v = |n| (0..n).map(|_| rng.gen::<f64>()).collect::<Vec<_>>();
        StateEncoding {
            a: v(INPUT_DIMS[0]),
            b: v(INPUT_DIMS[1]),
            c: v(INPUT_DIMS[2]),
        }
    }

    #[test]
    fn greedy_action_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(argmax(&[0.0; 13]), 0);
        let mut q = vec![0.0; 13];
        q[12] = 5.0;
        assert_eq!(argmax(&q), 12);
        let scaled: Vec<f64> = q.iter().map(|x| x * 3.5).collect();
        assert_eq!(argmax(&scaled), 12);
        let net = QNetwork::zeros(NetShape::new(4, vec![8], 13));
        assert_eq!(act(&net, &random_state(&mut rng), 0.0, &mut rng), 0);
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let net = QNetwork::zeros(NetShape::new(4, vec![8], 13));
        let s = StateEncoding::zeros();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = 100_000;
        let mut counts = [0u32; 13];
        for _ in 0..draws {
            counts[act(&net, &s, 1.0, &mut rng)] += 1;
        }
        let p = 1.0 / 13.0;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn zero_discount_exact_q_has_zero_loss() {
        let mut cfg = ModelConfig::small();
        cfg.gamma = 0.0;
        cfg.batch_size = 1;
        let net = QNetwork::zeros(cfg.shape());
        let mut dqn = Dqn::from_network(cfg, net);
        // Bias of action 3 alone sets Q(s, 3) = 2 for any state.
        let out_bias = dqn.online.param_count() - 13 + 3;
        dqn.online.params[out_bias] = 2.0;
        let mut mem = ReplayMemory::new(4);
        let s = StateEncoding::zeros().pack();
        mem.push(Transition {
            state: s.clone(),
            action: 3,
            reward: 2.0,
            next_state: s,
            terminal: false,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(dqn.update(&mem, &mut rng), Some(0.0));
    }

    #[test]
    fn insufficient_memory_is_a_no_op() {
        let cfg = ModelConfig::small();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut dqn = Dqn::new(cfg, &mut rng);
        let before = dqn.online.clone();
        assert_eq!(dqn.update(&ReplayMemory::new(10), &mut rng), None);
        assert_eq!(dqn.online, before);
        assert_eq!(dqn.updates, 0);
    }

    #[test]
    fn fixed_transition_converges() {
        let mut cfg = ModelConfig::small();
        cfg.gamma = 0.0;
        cfg.batch_size = 1;
        cfg.momentum = 0.0;
        cfg.learning_rate = 1e-2;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut dqn = Dqn::new(cfg, &mut rng);
        let state = random_state(&mut rng);
        let mut mem = ReplayMemory::new(1);
        mem.push(Transition {
            state: state.pack(),
            action: 5,
            reward: 2.0,
            next_state: state.pack(),
            terminal: true,
        });
        let mut prev = f64::INFINITY;
        for _ in 0..200 {
            let l = dqn.update(&mem, &mut rng).unwrap();
            assert!(l <= prev, "loss rose from {prev} to {l}");
            prev = l;
        }
        assert!(prev < 1e-6, "final loss {prev}");
        let q = dqn.online.forward(&StateEncoding::unpack(&state.pack())).unwrap();
        assert!((q[5] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn target_network_syncs_on_schedule() {
        let mut cfg = ModelConfig::small();
        cfg.target_sync = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut dqn = Dqn::new(cfg, &mut rng);
        let n = dqn.online.param_count();
        for i in 1..=3 {
            dqn.step(vec![1.0; n]);
            let synced = dqn.target.as_ref().unwrap().params == dqn.online.params;
            assert_eq!(synced, i == 3);
        }
    }
}

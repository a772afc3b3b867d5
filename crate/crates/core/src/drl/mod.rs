//! Deep Q-learning: state encoding, the multi-input Q-network, replay memory,
//! the learner and the weight file format.

pub mod encoding;
pub mod learner;
pub mod network;
pub mod replay;
pub mod weights;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workload::VnfKind;

pub use encoding::{encode_state, StateEncoding, INPUT_DIMS};
pub use learner::{act, argmax, loss, loss_and_grad, Dqn, TdSample};
pub use network::{NetShape, QNetwork};
pub use replay::{ReplayMemory, Transition};
pub use weights::{load_weights, save_weights, WeightsError};

/// Place one of each VNF type, uninstall one of each, or stay idle.
pub const ACTION_COUNT: usize = 2 * VnfKind::COUNT + 1;
pub const IDLE_ACTION: usize = 2 * VnfKind::COUNT;

#[derive(Debug, Error, PartialEq)]
pub enum DrlError {
    #[error("input dimensions {got:?} do not match {expected:?}")]
    Dimension { expected: [usize; 3], got: [usize; 3] },
    #[error("invalid model config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub branch_width: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Multiplicative decay per episode.
    pub epsilon_decay: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub target_sync: u64,
    pub use_target: bool,
    /// Global gradient-norm clip; none by default.
    pub grad_clip: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            branch_width: 32,
            hidden: vec![128, 64],
            learning_rate: 1e-3,
            momentum: 0.9,
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 0.995,
            replay_capacity: 50_000,
            batch_size: 64,
            target_sync: 50,
            use_target: true,
            grad_clip: None,
        }
    }
}

impl ModelConfig {
    /// The reduced network used for gradient checks.
    pub fn small() -> Self {
        ModelConfig {
            branch_width: 4,
            hidden: vec![8],
            ..Default::default()
        }
    }

    pub fn shape(&self) -> NetShape {
        NetShape::new(self.branch_width, self.hidden.clone(), ACTION_COUNT)
    }

    pub fn validate(&self) -> Result<(), DrlError> {
        let bad = |m: &str| Err(DrlError::Config(m.into()));
        if self.branch_width == 0 || self.hidden.iter().any(|&h| h == 0) {
            return bad("layer widths must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        let eps = [self.epsilon_start, self.epsilon_end, self.epsilon_decay];
        if eps.iter().any(|e| !(0.0..=1.0).contains(e)) || self.epsilon_end > self.epsilon_start {
            return bad("epsilon schedule must satisfy 0 <= end <= start <= 1 and decay in [0, 1]");
        }
        if self.replay_capacity == 0 || self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return bad("need 0 < batch_size <= replay_capacity");
        }
        if self.target_sync == 0 {
            return bad("target_sync must be positive");
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad("grad_clip must be positive");
            }
        }
        Ok(())
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        (self.epsilon_start * self.epsilon_decay.powi(episode as i32)).max(self.epsilon_end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn defaults() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(ACTION_COUNT, 13);
        assert_eq!(c.epsilon(0), 1.0);
        assert_eq!(c.epsilon(100_000), 0.05);
        assert!((c.epsilon(2) - 0.995f64 * 0.995).abs() < 1e-15);
    }

    /// Central finite differences on every parameter of a small net.
    #[test]
    fn gradients_match_finite_differences() {
        let cfg = ModelConfig::small();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        let mut draws = 0;
        while draws < 10 {
            let mut net = QNetwork::xavier(cfg.shape(), &mut rng);
            for p in &mut net.params {
                *p += rng.gen_range(-0.1..0.1);
            }
            let states: Vec<StateEncoding> = (0..2)
                .map(|_| {
                    let mut v = |n| (0..n).map(|_| rng.gen::<f64>()).collect::<Vec<_>>();
                    StateEncoding { a: v(60), b: v(15), c: v(62) }
                })
                .collect();
            if states
                .iter()
                .flat_map(|s| net.relu_preactivations(s))
                .any(|x| x.abs() < 1e-4)
            {
                continue;
            }
            let batch: Vec<TdSample> = states
                .iter()
                .map(|s| TdSample { state: s, action: rng.gen_range(0..13), target: rng.gen_range(-2.0..2.0) })
                .collect();
            let (_, grads) = loss_and_grad(&net, &batch);
            for i in 0..net.param_count() {
                let w = net.params[i];
                net.params[i] = w + h;
                let up = loss(&net, &batch);
                net.params[i] = w - h;
                let down = loss(&net, &batch);
                net.params[i] = w;
                let numeric = (up - down) / (2.0 * h);
                let rel = (grads[i] - numeric).abs() / grads[i].abs().max(numeric.abs()).max(1e-6);
                assert!(rel < 1e-4, "param {i}: analytic {} numeric {numeric}", grads[i]);
            }
            draws += 1;
        }
    }
}

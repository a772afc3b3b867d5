use serde::{Deserialize, Serialize};

use crate::units::SimTime;

/// How long link bandwidth stays reserved for a transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BwHold {
    /// From the start of each transfer until its propagation completes.
    PerTransfer,
    /// Every reservation is kept until the request terminates.
    WholeLifetime,
}

/// Which DC a local agent acts on next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DcSelection {
    RoundRobin,
    MostPending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub bw_hold: BwHold,
    /// Include propagation from the last VNF's host to the destination.
    pub count_last_mile: bool,
    /// Drop as soon as a lower bound on the completion time misses the deadline.
    pub eager_drop: bool,
    pub dc_selection: DcSelection,
    pub actions_per_step: u32,
    pub action_cost_ms: f64,
    pub step_ms: f64,
    /// Run local agents on a thread pool during the agent phase.
    pub parallel: bool,
    /// Safety cap on steps per episode.
    pub max_steps: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            bw_hold: BwHold::PerTransfer,
            count_last_mile: true,
            eager_drop: true,
            dc_selection: DcSelection::RoundRobin,
            actions_per_step: 100,
            action_cost_ms: 0.01,
            step_ms: 1.0,
            parallel: false,
            max_steps: 1_000_000,
        }
    }
}

impl SimConfig {
    pub fn clock(&self) -> Result<SimClock, String> {
        if !(self.step_ms > 0.0) || !(self.action_cost_ms > 0.0) {
            return Err("step_ms and action_cost_ms must be positive".into());
        }
        let clock = SimClock {
            now: SimTime::ZERO,
            step: SimTime::from_ms(self.step_ms),
            actions_per_step: self.actions_per_step,
            action_cost: SimTime::from_ms(self.action_cost_ms),
        };
        if clock.action_cost.nanos() * self.actions_per_step as u64 > clock.step.nanos() {
            return Err("actions_per_step * action_cost_ms exceeds step_ms".into());
        }
        if self.actions_per_step == 0 {
            return Err("actions_per_step must be positive".into());
        }
        if self.max_steps == 0 {
            return Err("max_steps must be positive".into());
        }
        Ok(clock)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimClock {
    pub now: SimTime,
    pub step: SimTime,
    pub actions_per_step: u32,
    pub action_cost: SimTime,
}

impl SimClock {
    /// Time of the `k`-th action in the step starting at `now`.
    pub fn action_time(&self, k: u32) -> SimTime {
        self.now + SimTime::from_nanos(self.action_cost.nanos() * k as u64)
    }

    pub fn step_end(&self) -> SimTime {
        self.now + self.step
    }

    /// First action index whose time is at or after `t`.
    pub fn first_action_at(&self, t: SimTime) -> u64 {
        t.saturating_sub(self.now).nanos().div_ceil(self.action_cost.nanos())
    }

    pub fn advance(&mut self) {
        self.now += self.step;
    }
}

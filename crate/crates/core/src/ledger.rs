//! Per-request delay accounting, split into propagation and processing
//! (which includes waiting) components.

use serde::{Deserialize, Serialize};

use crate::topology::DcId;
use crate::units::{propagation_delay, SimTime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hop {
    /// Time spent ready but not yet served.
    Wait { duration: SimTime },
    /// Fibre transfer between two DCs; `delay` is derived from `distance_km`.
    Transfer {
        from: DcId,
        to: DcId,
        distance_km: f64,
        delay: SimTime,
    },
    /// Execution of chain position `index`.
    Process {
        index: usize,
        dc: DcId,
        duration: SimTime,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayLedger {
    pub propagation_total: SimTime,
    pub processing_total: SimTime,
    pub hops: Vec<Hop>,
}

impl DelayLedger {
    pub fn accrued(&self) -> SimTime {
        self.propagation_total + self.processing_total
    }

    pub fn wait(&mut self, duration: SimTime) {
        if duration > SimTime::ZERO {
            self.processing_total += duration;
            self.hops.push(Hop::Wait { duration });
        }
    }

    pub fn transfer(&mut self, from: DcId, to: DcId, distance_km: f64) -> SimTime {
        let delay = propagation_delay(distance_km);
        self.propagation_total += delay;
        self.hops.push(Hop::Transfer {
            from,
            to,
            distance_km,
            delay,
        });
        delay
    }

    pub fn process(&mut self, index: usize, dc: DcId, duration: SimTime) {
        self.processing_total += duration;
        self.hops.push(Hop::Process {
            index,
            dc,
            duration,
        });
    }

    /// Recomputes `(propagation, processing)` from the hop log alone,
    /// re-deriving each transfer delay from its distance.
    pub fn recompute(&self) -> (SimTime, SimTime) {
        let mut prop = SimTime::ZERO;
        let mut proc = SimTime::ZERO;
        for hop in &self.hops {
            match hop {
                Hop::Wait { duration } | Hop::Process { duration, .. } => proc += *duration,
                Hop::Transfer { distance_km, .. } => prop += propagation_delay(*distance_km),
            }
        }
        (prop, proc)
    }

    pub fn is_consistent(&self) -> bool {
        self.recompute() == (self.propagation_total, self.processing_total)
    }
}

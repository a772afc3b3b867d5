use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::agents::RewardTally;
use crate::routing::PathCounters;
use crate::workload::SfcKind;

/// Exact fraction; converted to float only for display.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Option<Ratio> {
        (den > 0).then_some(Ratio { num, den })
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    pub generated: u64,
    pub accepted: u64,
    pub dropped: u64,
    /// Summed E2E delay of accepted requests.
    pub e2e_total_ns: u64,
}

impl TypeCounts {
    pub fn add(&mut self, o: &TypeCounts) {
        self.generated += o.generated;
        self.accepted += o.accepted;
        self.dropped += o.dropped;
        self.e2e_total_ns += o.e2e_total_ns;
    }

    pub fn acceptance(&self) -> Option<Ratio> {
        Ratio::new(self.accepted, self.generated)
    }

    pub fn mean_e2e_ms(&self) -> Option<f64> {
        (self.accepted > 0).then(|| self.e2e_total_ns as f64 / self.accepted as f64 / 1e6)
    }
}

pub fn sum_counts<'a>(it: impl IntoIterator<Item = &'a TypeCounts>) -> TypeCounts {
    let mut t = TypeCounts::default();
    for c in it {
        t.add(c);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub scenario_id: String,
    pub dc_count: usize,
    pub cluster_limit: usize,
    pub cluster_count: usize,
    pub scale: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpisodeReport {
    #[serde(flatten)]
    pub meta: ScenarioMeta,
    pub seed: u64,
    /// `[cluster][sfc type]`, credited to the cluster of the source DC.
    pub per_cluster: Vec<Vec<TypeCounts>>,
    pub per_type: Vec<TypeCounts>,
    pub total: TypeCounts,
    /// None for an empty workload.
    pub acceptance: Option<Ratio>,
    pub empty_workload: bool,
    pub drops: BTreeMap<String, u64>,
    pub steps: u64,
    pub actions: u64,
    pub rewards: RewardTally,
    pub agent_rewards: Vec<RewardTally>,
    pub handoffs: u64,
    pub counters: PathCounters,
    pub wall_clock_ms: f64,
}

impl EpisodeReport {
    pub fn acceptance_value(&self) -> Option<f64> {
        self.acceptance.map(Ratio::value)
    }

    pub fn type_acceptance(&self, kind: SfcKind) -> Option<f64> {
        self.per_type[kind.index()].acceptance().map(Ratio::value)
    }
}

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub scenario_id: String,
    pub seed: String,
    pub dc_count: usize,
    pub cluster_limit: usize,
    pub cluster_count: usize,
    pub scale: f64,
    pub sfc_type: String,
    pub generated: u64,
    pub accepted: u64,
    pub dropped: u64,
    pub acc_ratio: Option<f64>,
    pub mean_e2e_ms: Option<f64>,
}

/// One row per SFC type followed by an `ALL` row.
pub fn csv_rows(meta: &ScenarioMeta, seed: &str, per_type: &[TypeCounts]) -> Vec<CsvRow> {
    let row = |name: &str, c: &TypeCounts| CsvRow {
        scenario_id: meta.scenario_id.clone(),
        seed: seed.to_string(),
        dc_count: meta.dc_count,
        cluster_limit: meta.cluster_limit,
        cluster_count: meta.cluster_count,
        scale: meta.scale,
        sfc_type: name.to_string(),
        generated: c.generated,
        accepted: c.accepted,
        dropped: c.dropped,
        acc_ratio: c.acceptance().map(Ratio::value),
        mean_e2e_ms: c.mean_e2e_ms(),
    };
    let mut rows: Vec<CsvRow> = SfcKind::ALL
        .iter()
        .zip(per_type)
        .map(|(k, c)| row(k.name(), c))
        .collect();
    rows.push(row("ALL", &sum_counts(per_type)));
    rows
}

pub fn write_csv(w: impl Write, rows: &[CsvRow]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

use serde::{Deserialize, Serialize};

use super::report::{csv_rows, sum_counts, CsvRow, EpisodeReport, ScenarioMeta, TypeCounts};
use super::{run_episode, Scenario, SimError};
use crate::drl::QNetwork;
use crate::units::derive_seed;
use crate::workload::SfcKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Number of evaluation seeds derived from the run seed.
    pub seeds: usize,
    pub episodes_per_seed: usize,
    pub epsilon: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seeds: 5,
            episodes_per_seed: 3,
            epsilon: 0.05,
        }
    }
}

impl EvalConfig {
    pub fn seed_list(&self, base: u64) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| derive_seed(base, 10_000 + i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub dc_counts: Vec<usize>,
    pub cluster_limits: Vec<usize>,
    pub scales: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            dc_counts: vec![20],
            cluster_limits: vec![1, 4, 20],
            scales: vec![1.0],
        }
    }
}

/// Per-type counts of one seed, summed over its episodes.
#[derive(Debug, Clone, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub per_type: Vec<TypeCounts>,
    pub episodes: Vec<EpisodeReport>,
}

impl SeedResult {
    pub fn acceptance(&self) -> Option<f64> {
        sum_counts(&self.per_type).acceptance().map(|r| r.value())
    }

    pub fn type_acceptance(&self, kind: SfcKind) -> Option<f64> {
        self.per_type[kind.index()].acceptance().map(|r| r.value())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub meta: ScenarioMeta,
    pub seeds: Vec<SeedResult>,
}

impl CellResult {
    /// Unweighted mean over seeds of each seed's acceptance ratio.
    pub fn mean_acceptance(&self) -> Option<f64> {
        mean(self.seeds.iter().map(SeedResult::acceptance))
    }

    pub fn mean_type_acceptance(&self, kind: SfcKind) -> Option<f64> {
        mean(self.seeds.iter().map(|s| s.type_acceptance(kind)))
    }

    /// One block per seed, then an aggregate block with seed `all`.
    pub fn rows(&self) -> Vec<CsvRow> {
        let mut rows = Vec::new();
        let mut total = vec![TypeCounts::default(); SfcKind::COUNT];
        for s in &self.seeds {
            rows.extend(csv_rows(&self.meta, &s.seed.to_string(), &s.per_type));
            for (t, c) in total.iter_mut().zip(&s.per_type) {
                t.add(c);
            }
        }
        rows.extend(csv_rows(&self.meta, "all", &total));
        rows
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs `episodes` episodes for every seed; episode `e` of seed `s` uses the
/// derived seed `(s, e)`.
pub fn evaluate(
    scenario: &Scenario,
    policy: &QNetwork,
    seeds: &[u64],
    episodes: usize,
    epsilon: f64,
) -> Result<CellResult, SimError> {
    let mut out = Vec::new();
    for &seed in seeds {
        let mut per_type = vec![TypeCounts::default(); SfcKind::COUNT];
        let mut reports = Vec::new();
        for e in 0..episodes {
            let r = run_episode(scenario, derive_seed(seed, e as u64), policy, epsilon, false)?.report;
            for (t, c) in per_type.iter_mut().zip(&r.per_type) {
                t.add(c);
            }
            reports.push(r);
        }
        out.push(SeedResult {
            seed,
            per_type,
            episodes: reports,
        });
    }
    let meta = out
        .iter()
        .flat_map(|s| s.episodes.first())
        .map(|r| r.meta.clone())
        .next()
        .unwrap_or_else(|| ScenarioMeta {
            scenario_id: scenario.id(),
            dc_count: scenario.topology.effective_dc_count(),
            cluster_limit: scenario.cluster_limit,
            cluster_count: 0,
            scale: scenario.scale,
        });
    Ok(CellResult { meta, seeds: out })
}

/// Every (DC count, cluster limit, scale) cell of the grid, in that nesting
/// order.
pub fn sweep_cells(base: &Scenario, grid: &SweepConfig) -> Vec<Scenario> {
    let mut cells = Vec::new();
    for &n in &grid.dc_counts {
        for &limit in &grid.cluster_limits {
            for &scale in &grid.scales {
                let mut sc = base.clone();
                sc.topology.dc_count = n;
                sc.topology.dcs.clear();
                sc.topology.links.clear();
                sc.cluster_limit = limit;
                sc.scale = scale;
                cells.push(sc);
            }
        }
    }
    cells
}

/// Evaluates every cell on a pool of `jobs` threads. Results keep grid
/// order regardless of scheduling.
pub fn evaluate_sweep(
    base: &Scenario,
    grid: &SweepConfig,
    policy: &QNetwork,
    eval: &EvalConfig,
    seed: u64,
    jobs: usize,
) -> Result<Vec<CellResult>, SimError> {
    use rayon::prelude::*;
    let cells = sweep_cells(base, grid);
    let seeds = eval.seed_list(seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| SimError::Config(e.to_string()))?;
    pool.install(|| {
        cells
            .par_iter()
            .map(|sc| evaluate(sc, policy, &seeds, eval.episodes_per_seed, eval.epsilon))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drl::ModelConfig;
    use crate::sim::SimConfig;
    use crate::topology::TopologyConfig;
    use crate::workload::default_catalog;

    fn base() -> Scenario {
        Scenario {
            topology: TopologyConfig::with_dc_count(6),
            cluster_limit: 2,
            scale: 0.2,
            catalog: default_catalog(),
            sim: SimConfig::default(),
        }
    }

    #[test]
    fn rows_are_consistent_with_counts() {
        let net = QNetwork::zeros(ModelConfig::small().shape());
        let cell = evaluate(&base(), &net, &[1, 2], 2, 1.0).unwrap();
        let rows = cell.rows();
        assert_eq!(rows.len(), 3 * (SfcKind::COUNT + 1));
        for block in rows.chunks(SfcKind::COUNT + 1) {
            let all = block.last().unwrap();
            let g: u64 = block[..SfcKind::COUNT].iter().map(|r| r.generated).sum();
            let a: u64 = block[..SfcKind::COUNT].iter().map(|r| r.accepted).sum();
            assert_eq!((all.generated, all.accepted), (g, a));
            assert_eq!(all.generated, all.accepted + all.dropped);
        }
    }

    #[test]
    fn grid_order_and_parallel_determinism() {
        let grid = SweepConfig {
            dc_counts: vec![4, 6],
            cluster_limits: vec![1, 2],
            scales: vec![0.2],
        };
        let cells = sweep_cells(&base(), &grid);
        let ids: Vec<String> = cells.iter().map(Scenario::id).collect();
        assert_eq!(ids, ["n4-l1-x0.2", "n4-l2-x0.2", "n6-l1-x0.2", "n6-l2-x0.2"]);
        let net = QNetwork::zeros(ModelConfig::small().shape());
        let eval = EvalConfig {
            seeds: 2,
            episodes_per_seed: 1,
            epsilon: 0.5,
        };
        let one = evaluate_sweep(&base(), &grid, &net, &eval, 3, 1).unwrap();
        let four = evaluate_sweep(&base(), &grid, &net, &eval, 3, 4).unwrap();
        let rows = |c: &[CellResult]| c.iter().flat_map(CellResult::rows).collect::<Vec<_>>();
        assert_eq!(rows(&one), rows(&four));
    }
}

//! The discrete-time engine. Each step runs three phases: local agents act
//! on their own shards, the general agent drains its assist queue, then the
//! world advances the clock, drops hopeless requests and frees resources.

pub mod clock;
pub mod eval;
pub mod report;
pub mod train;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::agents::{
    completion_lower_bound, drop_request, setup, Assist, GeneralAgent, GeneralContext, LocalAgent,
    PhaseContext, RewardTally,
};
use crate::drl::{QNetwork, Transition};
use crate::nfv_state::{release_reservation, ActiveTransfer, Substrate};
use crate::routing::PathCounters;
use crate::topology::{build_network, ClusterPartition, NetworkGraph, TopologyConfig, TopologyError};
use crate::units::{derive_seed, Kbps, SimTime};
use crate::workload::{generate_bundles, Catalog, DropReason, RequestStatus, SfcKind, SfcRequest};

pub use clock::{BwHold, DcSelection, SimClock, SimConfig};
pub use report::{CsvRow, EpisodeReport, Ratio, ScenarioMeta, TypeCounts};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("episode did not finish within {0} steps")]
    StepLimit(u64),
}

/// Everything that defines an episode apart from its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: TopologyConfig,
    pub cluster_limit: usize,
    pub scale: f64,
    pub catalog: Catalog,
    pub sim: SimConfig,
}

impl Scenario {
    pub fn id(&self) -> String {
        format!("n{}-l{}-x{}", self.topology.effective_dc_count(), self.cluster_limit, self.scale)
    }
}

/// Independent RNG streams of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSeeds {
    pub topology: u64,
    pub clusters: u64,
    pub workload: u64,
    pub agents: u64,
}

impl EpisodeSeeds {
    pub fn new(seed: u64) -> Self {
        EpisodeSeeds {
            topology: derive_seed(seed, 1),
            clusters: derive_seed(seed, 2),
            workload: derive_seed(seed, 3),
            agents: derive_seed(seed, 4),
        }
    }
}

/// What happened in one step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StepEvents {
    pub actions: u64,
    pub closed: usize,
    pub deadline_drops: usize,
    pub assists: usize,
}

/// Read-only system snapshot taken by the general agent.
#[derive(Debug, Clone, Serialize)]
pub struct SystemSnapshot {
    pub now_ns: u64,
    /// `[cluster][sfc type]` terminal counts credited to each agent.
    pub per_agent: Vec<Vec<TypeCounts>>,
    pub rewards: Vec<RewardTally>,
    pub vcpu_used: u64,
    pub vcpu_capacity: u64,
    pub bandwidth_used: Kbps,
    pub counters: PathCounters,
}

pub struct World {
    pub graph: NetworkGraph,
    pub partition: ClusterPartition,
    pub catalog: Catalog,
    pub sim: SimConfig,
    pub substrate: Substrate,
    pub locals: Vec<LocalAgent>,
    pub general: GeneralAgent,
    pub clock: SimClock,
    /// Terminal requests in the order they closed.
    pub closed: Vec<SfcRequest>,
    pub generated: usize,
    pub steps: u64,
    bandwidths: Vec<Kbps>,
    record: bool,
}

impl World {
    /// Builds the topology, clusters and workload of `scenario` under `seed`.
    pub fn new(scenario: &Scenario, seed: u64, record: bool) -> Result<World, SimError> {
        let seeds = EpisodeSeeds::new(seed);
        let graph = build_network(&scenario.topology, seeds.topology)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds.workload);
        let requests = generate_bundles(&scenario.catalog, &graph, scenario.scale, &mut rng);
        World::from_parts(graph, scenario, requests, seeds, record)
    }

    /// Builds a world over a given graph and request list. Request ids must be
    /// dense from zero.
    pub fn from_parts(
        graph: NetworkGraph,
        scenario: &Scenario,
        requests: Vec<SfcRequest>,
        seeds: EpisodeSeeds,
        record: bool,
    ) -> Result<World, SimError> {
        let clock = scenario.sim.clock().map_err(SimError::Config)?;
        let s = setup(&graph, scenario.cluster_limit, seeds.clusters, seeds.agents)?;
        let substrate = Substrate::new(&graph, &s.partition);
        let mut locals = s.locals;
        let mut bandwidths = vec![Kbps::ZERO; requests.len()];
        for r in &requests {
            assert!((r.id as usize) < requests.len(), "request ids must be dense");
            bandwidths[r.id as usize] = r.bandwidth;
        }
        let generated = requests.len();
        for r in requests {
            locals[s.partition.cluster_of(r.source_dc)].queue.push(r);
        }
        Ok(World {
            graph,
            partition: s.partition,
            catalog: scenario.catalog.clone(),
            sim: scenario.sim.clone(),
            substrate,
            locals,
            general: s.general,
            clock,
            closed: Vec::new(),
            generated,
            steps: 0,
            bandwidths,
            record,
        })
    }

    pub fn now(&self) -> SimTime {
        self.clock.now
    }

    pub fn finished(&self) -> bool {
        self.closed.len() == self.generated
    }

    pub fn live_requests(&self) -> impl Iterator<Item = &SfcRequest> {
        self.locals
            .iter()
            .flat_map(|a| a.queue.iter().chain(a.closed.iter()))
            .chain(self.general.queue.iter().map(Assist::request))
    }

    /// One 1 ms step: agent phase, general-agent phase, world update.
    pub fn step(&mut self, policy: &QNetwork, epsilon: f64) -> StepEvents {
        let mut ev = StepEvents::default();
        let end = self.clock.step_end();
        let mut pending = vec![false; self.locals.len()];
        for item in &self.general.queue {
            if let Assist::Transfer { from, .. } = item {
                pending[*from] = true;
            }
        }

        let before: u64 = self.locals.iter().map(|a| a.actions_taken).sum();
        let ctx = PhaseContext {
            graph: &self.graph,
            catalog: &self.catalog,
            policy,
            epsilon,
            clock: self.clock,
            sim: &self.sim,
            record: self.record,
            transfer_pending: &pending,
        };
        if self.sim.parallel {
            self.locals
                .par_iter_mut()
                .zip(self.substrate.shards.par_iter_mut())
                .for_each(|(a, s)| a.run_phase(s, &ctx));
        } else {
            for (a, s) in self.locals.iter_mut().zip(self.substrate.shards.iter_mut()) {
                a.run_phase(s, &ctx);
            }
        }
        ev.actions = self.locals.iter().map(|a| a.actions_taken).sum::<u64>() - before;

        for a in &mut self.locals {
            ev.assists += a.outbox.len();
            self.general.queue.extend(a.outbox.drain(..));
        }
        let gctx = GeneralContext {
            graph: &self.graph,
            partition: &self.partition,
            catalog: &self.catalog,
            sim: &self.sim,
            record: self.record,
        };
        self.general.process(end, &gctx, &mut self.substrate, &mut self.locals);

        self.clock.advance();
        let now = self.clock.now;
        ev.deadline_drops = self.drop_hopeless(now);
        ev.closed = self.collect_closed(now);
        self.release_due(now);
        self.steps += 1;
        ev
    }

    fn hopeless(&self, r: &SfcRequest, now: SimTime) -> bool {
        completion_lower_bound(r, &self.catalog, &self.graph, now, &self.sim) > r.tolerance
    }

    fn drop_hopeless(&mut self, now: SimTime) -> usize {
        let mut n = 0;
        for c in 0..self.locals.len() {
            let queue = std::mem::take(&mut self.locals[c].queue);
            for mut r in queue {
                if self.hopeless(&r, now) {
                    drop_request(&mut r, now, DropReason::Deadline);
                    self.locals[c].finish(r, false, self.record);
                    n += 1;
                } else {
                    self.locals[c].queue.push(r);
                }
            }
        }
        let items = std::mem::take(&mut self.general.queue);
        for item in items {
            if self.hopeless(item.request(), now) {
                let from = item.from();
                let (Assist::Transfer { mut request, .. } | Assist::Deliver { mut request, .. }) = item;
                drop_request(&mut request, now, DropReason::Deadline);
                self.locals[from].finish(request, false, self.record);
                n += 1;
            } else {
                self.general.queue.push_back(item);
            }
        }
        n
    }

    /// Moves terminal requests into `closed`; lifetime bandwidth holds linger
    /// until the final delivery lands.
    fn collect_closed(&mut self, now: SimTime) -> usize {
        let mut n = 0;
        for a in &mut self.locals {
            for mut r in a.closed.drain(..) {
                let mut by_key: BTreeMap<_, Vec<_>> = BTreeMap::new();
                for (l, k) in r.held.drain(..) {
                    by_key.entry(k).or_default().push(l);
                }
                let end = r.closed_at.unwrap_or(now).max(now);
                for (key, links) in by_key {
                    self.substrate.transfers.push(ActiveTransfer { key, links, end });
                }
                self.closed.push(r);
                n += 1;
            }
        }
        n
    }

    fn release_due(&mut self, now: SimTime) {
        for shard in &mut self.substrate.shards {
            let (done, keep): (Vec<_>, Vec<_>) = std::mem::take(&mut shard.transfers)
                .into_iter()
                .partition(|t| t.end <= now);
            shard.transfers = keep;
            for t in done {
                release_reservation(shard, &t.links, t.key);
            }
            for dc in &mut shard.dcs {
                dc.release_finished(now);
            }
        }
        let (done, keep): (Vec<_>, Vec<_>) = std::mem::take(&mut self.substrate.transfers)
            .into_iter()
            .partition(|t| t.end <= now);
        self.substrate.transfers = keep;
        for t in done {
            release_reservation(&mut self.substrate, &t.links, t.key);
        }
    }

    /// Recomputes all resource and bandwidth accounting from first
    /// principles and returns every violation.
    pub fn verify(&self) -> Vec<String> {
        let now = self.clock.now;
        let mut errs = self.substrate.verify();
        for d in self.substrate.dcs() {
            for inst in &d.installed {
                if inst.allocated_request.is_some() != (inst.busy_until > now) {
                    errs.push(format!("DC {}: instance {:?} allocation/busy mismatch", d.dc, inst.id));
                }
            }
        }
        let mut used = vec![Kbps::ZERO; self.graph.links().len()];
        let transfers = self
            .substrate
            .transfers
            .iter()
            .chain(self.substrate.shards.iter().flat_map(|s| s.transfers.iter()));
        for t in transfers {
            for &l in &t.links {
                used[l] = used[l] + self.bandwidths[t.key.request as usize];
            }
        }
        for r in self.live_requests() {
            for &(l, _) in &r.held {
                used[l] = used[l] + r.bandwidth;
            }
        }
        for l in self.substrate.links() {
            if l.capacity - l.free != used[l.link] {
                errs.push(format!(
                    "link {}: {} in use, transfers account for {}",
                    l.link,
                    l.capacity - l.free,
                    used[l.link]
                ));
            }
        }
        for r in self.live_requests().chain(self.closed.iter()) {
            if !r.ledger.is_consistent() {
                errs.push(format!("request {}: ledger totals disagree with hop log", r.id));
            }
            if r.arrival <= now && r.accrued_delay() != r.ready_at - r.arrival {
                errs.push(format!("request {}: accrued delay does not match its clock", r.id));
            }
        }
        errs
    }

    /// Per-agent statistics and utilization. Pure read.
    pub fn collect(&self) -> SystemSnapshot {
        let mut per_agent = vec![vec![TypeCounts::default(); SfcKind::COUNT]; self.locals.len()];
        for r in &self.closed {
            let c = &mut per_agent[self.partition.cluster_of(r.source_dc)][r.kind.index()];
            match r.status {
                RequestStatus::Accepted => c.accepted += 1,
                _ => c.dropped += 1,
            }
        }
        let mut counters = self.general.counters.clone();
        for a in &self.locals {
            counters.merge(&a.counters);
        }
        SystemSnapshot {
            now_ns: self.clock.now.nanos(),
            per_agent,
            rewards: self.locals.iter().map(|a| a.tally.clone()).collect(),
            vcpu_used: self.substrate.dcs().map(|d| (d.capacity.vcpu - d.free.vcpu) as u64).sum(),
            vcpu_capacity: self.substrate.dcs().map(|d| d.capacity.vcpu as u64).sum(),
            bandwidth_used: self.substrate.links().map(|l| l.capacity - l.free).sum(),
            counters,
        }
    }

    /// Replay transitions of every agent; each decision's successor state is
    /// the same agent's next decision, and its last one is terminal.
    pub fn take_transitions(&mut self) -> Vec<Transition> {
        let mut out = Vec::new();
        for a in &mut self.locals {
            let ts = std::mem::take(&mut a.transitions);
            let n = ts.len();
            let mut it = ts.into_iter().peekable();
            let mut i = 0;
            while let Some(t) = it.next() {
                i += 1;
                let (next_state, terminal) = match it.peek() {
                    Some(nx) => (nx.state.clone(), false),
                    None => (t.state.clone(), true),
                };
                debug_assert!(terminal == (i == n));
                out.push(Transition {
                    state: t.state,
                    action: t.action,
                    reward: t.reward,
                    next_state,
                    terminal,
                });
            }
        }
        out
    }

    pub fn report(&self, meta: ScenarioMeta, seed: u64, wall_clock_ms: f64) -> EpisodeReport {
        let k = SfcKind::COUNT;
        let mut per_cluster = vec![vec![TypeCounts::default(); k]; self.partition.cluster_count()];
        let mut drops = BTreeMap::new();
        let all = self.live_requests().chain(self.closed.iter());
        for r in all {
            let c = &mut per_cluster[self.partition.cluster_of(r.source_dc)][r.kind.index()];
            c.generated += 1;
            match r.status {
                RequestStatus::Accepted => {
                    c.accepted += 1;
                    c.e2e_total_ns += r.accrued_delay().nanos();
                }
                RequestStatus::Dropped => {
                    c.dropped += 1;
                    let reason = r.drop_reason.map_or("unknown".to_string(), |d| {
                        serde_json::to_value(d).unwrap().as_str().unwrap().to_string()
                    });
                    *drops.entry(reason).or_insert(0) += 1;
                }
                _ => {}
            }
        }
        let per_type: Vec<TypeCounts> = (0..k)
            .map(|t| report::sum_counts(per_cluster.iter().map(|c| &c[t])))
            .collect();
        let total = report::sum_counts(&per_type);
        let mut rewards = RewardTally::default();
        for a in &self.locals {
            rewards.merge(&a.tally);
        }
        let snap = self.collect();
        EpisodeReport {
            meta,
            seed,
            per_cluster,
            per_type,
            total,
            acceptance: total.acceptance(),
            empty_workload: total.generated == 0,
            drops,
            steps: self.steps,
            actions: self.locals.iter().map(|a| a.actions_taken).sum(),
            rewards,
            agent_rewards: snap.rewards,
            handoffs: self.general.handoffs.len() as u64,
            counters: snap.counters,
            wall_clock_ms,
        }
    }

    pub fn meta(&self, scenario_id: String, scale: f64) -> ScenarioMeta {
        ScenarioMeta {
            scenario_id,
            dc_count: self.graph.dc_count(),
            cluster_limit: self.partition.size_limit,
            cluster_count: self.partition.cluster_count(),
            scale,
        }
    }
}

/// Result of one episode.
pub struct EpisodeOutcome {
    pub report: EpisodeReport,
    /// Filled only when recording.
    pub transitions: Vec<Transition>,
    pub world: World,
}

/// Steps `world` until every request is terminal, calling `observe` after
/// each step.
pub fn run_world(
    world: &mut World,
    policy: &QNetwork,
    epsilon: f64,
    mut observe: impl FnMut(&World, &StepEvents),
) -> Result<(), SimError> {
    while !world.finished() {
        if world.steps >= world.sim.max_steps {
            return Err(SimError::StepLimit(world.steps));
        }
        let ev = world.step(policy, epsilon);
        observe(world, &ev);
    }
    Ok(())
}

pub fn run_episode(
    scenario: &Scenario,
    seed: u64,
    policy: &QNetwork,
    epsilon: f64,
    record: bool,
) -> Result<EpisodeOutcome, SimError> {
    let started = Instant::now();
    let mut world = World::new(scenario, seed, record)?;
    run_world(&mut world, policy, epsilon, |_, _| {})?;
    let transitions = if record { world.take_transitions() } else { Vec::new() };
    let meta = world.meta(scenario.id(), scenario.scale);
    let report = world.report(meta, seed, started.elapsed().as_secs_f64() * 1e3);
    Ok(EpisodeOutcome {
        report,
        transitions,
        world,
    })
}

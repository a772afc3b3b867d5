//! Local agents provision requests inside their own cluster shard through
//! DQN-chosen actions; the general agent owns every cross-cluster effect:
//! overflow transfers, inter-cluster delivery and the handoff log.

use std::cmp::Reverse;
use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::drl::{act, encode_state, QNetwork, StateEncoding, ACTION_COUNT, IDLE_ACTION};
use crate::nfv_state::{
    allocate, reserve_bandwidth, ActiveTransfer, ClusterShard, LinkStore, ReservationKey, Substrate,
};
use crate::routing::{d2d_shortest_path, find_path, PathCounters, PathResult};
use crate::sim::clock::{BwHold, DcSelection, SimClock, SimConfig};
use crate::topology::{euclidean, make_clusters, ClusterId, ClusterPartition, DcId, NetworkGraph, TopologyError};
use crate::units::{derive_seed, propagation_delay, propagation_lower_bound, SimTime};
use crate::workload::{Catalog, DropReason, RequestId, RequestStatus, SfcRequest, VnfKind, VnfType};

pub const REWARD_ACCEPT: f64 = 2.0;
pub const REWARD_DROP: f64 = -1.5;
pub const REWARD_INVALID: f64 = -1.0;
pub const REWARD_NEEDED_UNINSTALL: f64 = -0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Place(VnfKind),
    Uninstall(VnfKind),
    Idle,
}

impl Action {
    pub fn from_index(a: usize) -> Action {
        let n = VnfKind::COUNT;
        match a {
            _ if a < n => Action::Place(VnfKind::ALL[a]),
            _ if a < 2 * n => Action::Uninstall(VnfKind::ALL[a - n]),
            IDLE_ACTION => Action::Idle,
            _ => panic!("action index {a} out of range"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionOutcome {
    pub action: usize,
    pub dc: DcId,
    pub reward: f64,
    pub invalid: bool,
    pub uninstalled_needed: bool,
    pub allocated: Option<RequestId>,
    /// The allocation placed the request's last VNF.
    pub chain_completed: bool,
}

/// Counts of every reward emitted by or credited to one agent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTally {
    pub accepted: u64,
    pub dropped: u64,
    pub invalid: u64,
    pub needed_uninstall: u64,
    pub total: f64,
    /// Decisions taken per action index.
    pub action_counts: [u64; ACTION_COUNT],
}

impl RewardTally {
    pub fn merge(&mut self, o: &RewardTally) {
        self.accepted += o.accepted;
        self.dropped += o.dropped;
        self.invalid += o.invalid;
        self.needed_uninstall += o.needed_uninstall;
        self.total += o.total;
        for (a, b) in self.action_counts.iter_mut().zip(&o.action_counts) {
            *a += b;
        }
    }
}

/// A recorded decision; the next state is the agent's following decision.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTransition {
    pub state: Box<[f32]>,
    pub action: u8,
    pub reward: f64,
}

/// Work a local agent hands to the general agent.
#[derive(Debug, Clone, PartialEq)]
pub enum Assist {
    /// No DC of the cluster can host the next VNF.
    Transfer { request: SfcRequest, from: ClusterId },
    /// The chain is done and the destination lies in another cluster.
    Deliver { request: SfcRequest, from: ClusterId },
}

impl Assist {
    pub fn request(&self) -> &SfcRequest {
        match self {
            Assist::Transfer { request, .. } | Assist::Deliver { request, .. } => request,
        }
    }

    pub fn from(&self) -> ClusterId {
        match self {
            Assist::Transfer { from, .. } | Assist::Deliver { from, .. } => *from,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandoffKind {
    Transfer,
    Deliver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handoff {
    pub request: RequestId,
    pub from: ClusterId,
    pub to: ClusterId,
    pub time_ns: u64,
    pub kind: HandoffKind,
}

/// Read-only inputs shared by all local agents during the agent phase.
pub struct PhaseContext<'a> {
    pub graph: &'a NetworkGraph,
    pub catalog: &'a Catalog,
    pub policy: &'a QNetwork,
    pub epsilon: f64,
    pub clock: SimClock,
    pub sim: &'a SimConfig,
    pub record: bool,
    /// Per cluster: requests of that cluster are waiting on the general agent.
    pub transfer_pending: &'a [bool],
}

/// Descending priority `(elapsed + remaining work) / tolerance`, compared
/// exactly; ties go to earlier arrival, then lower id.
pub fn priority_rank(requests: &[&SfcRequest], catalog: &Catalog, now: SimTime) -> Vec<usize> {
    let keys: Vec<(u128, u128)> = requests
        .iter()
        .map(|r| {
            let elapsed = now.max(r.ready_at) - r.arrival;
            let rem = catalog.remaining_work(&r.chain, r.next_vnf_index);
            ((elapsed + rem).nanos() as u128, r.tolerance.nanos() as u128)
        })
        .collect();
    let mut order: Vec<usize> = (0..requests.len()).collect();
    order.sort_by(|&i, &j| {
        let (ni, di) = keys[i];
        let (nj, dj) = keys[j];
        (nj * di)
            .cmp(&(ni * dj))
            .then(requests[i].arrival.cmp(&requests[j].arrival))
            .then(requests[i].id.cmp(&requests[j].id))
    });
    order
}

/// Lower bound on `completion - arrival` for a live request at `now`.
///
/// Without eager dropping this is the time already spent. With it, the
/// remaining processing and, when the last mile counts, the straight-line
/// propagation to the destination are added.
pub fn completion_lower_bound(
    r: &SfcRequest,
    catalog: &Catalog,
    graph: &NetworkGraph,
    now: SimTime,
    sim: &SimConfig,
) -> SimTime {
    let mut lb = now.max(r.ready_at) - r.arrival;
    if sim.eager_drop {
        lb += catalog.remaining_work(&r.chain, r.next_vnf_index);
        if sim.count_last_mile {
            let d = euclidean(graph.dc(r.location).position, graph.dc(r.dest_dc).position);
            let hops = (r.chain_len() - r.next_vnf_index + 1) as u64;
            lb += propagation_lower_bound(d, hops);
        }
    }
    lb
}

/// Reserves `path` for the request's next transfer starting at `start`.
/// Returns the transfer to track when bandwidth is held per transfer.
fn reserve_transfer(
    store: &mut impl LinkStore,
    r: &mut SfcRequest,
    path: &PathResult,
    start: SimTime,
    hold: BwHold,
) -> Option<ActiveTransfer> {
    if path.links.is_empty() {
        return None;
    }
    let key = ReservationKey {
        request: r.id,
        seq: r.transfer_seq,
    };
    reserve_bandwidth(store, path, key, r.bandwidth).expect("path was found under the current availability");
    r.transfer_seq += 1;
    match hold {
        BwHold::PerTransfer => Some(ActiveTransfer {
            key,
            links: path.links.clone(),
            end: start + propagation_delay(path.total_distance_km),
        }),
        BwHold::WholeLifetime => {
            r.held.extend(path.links.iter().map(|&l| (l, key)));
            None
        }
    }
}

/// Delivers a finished chain to its destination starting at `start` and
/// judges the deadline. Returns whether the request is accepted.
fn conclude_delivery(r: &mut SfcRequest, start: SimTime, path: Option<&PathResult>) -> bool {
    r.ledger.wait(start - r.ready_at);
    let mut completion = start;
    if let Some(p) = path {
        if r.location != r.dest_dc {
            completion += r.ledger.transfer(r.location, r.dest_dc, p.total_distance_km);
        }
        r.location = r.dest_dc;
    }
    r.ready_at = completion;
    r.closed_at = Some(completion);
    let accepted = completion - r.arrival <= r.tolerance;
    if accepted {
        r.status = RequestStatus::Accepted;
    } else {
        r.status = RequestStatus::Dropped;
        r.drop_reason = Some(DropReason::Late);
    }
    accepted
}

pub fn drop_request(r: &mut SfcRequest, now: SimTime, reason: DropReason) {
    r.status = RequestStatus::Dropped;
    r.drop_reason = Some(reason);
    r.closed_at = Some(now);
}

#[derive(Debug, Clone)]
pub struct LocalAgent {
    pub cluster: ClusterId,
    pub dcs: Vec<DcId>,
    members: Vec<bool>,
    pub queue: Vec<SfcRequest>,
    cursor: usize,
    rng: ChaCha8Rng,
    pub transitions: Vec<AgentTransition>,
    carried: f64,
    pub tally: RewardTally,
    pub counters: PathCounters,
    pub outbox: Vec<Assist>,
    /// Requests that reached a terminal status since the last collection.
    pub closed: Vec<SfcRequest>,
    pub actions_taken: u64,
}

impl LocalAgent {
    pub fn new(cluster: ClusterId, partition: &ClusterPartition, seed: u64) -> Self {
        LocalAgent {
            cluster,
            dcs: partition.clusters[cluster].clone(),
            members: partition.mask(&[cluster]),
            queue: Vec::new(),
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            transitions: Vec::new(),
            carried: 0.0,
            tally: RewardTally::default(),
            counters: PathCounters::default(),
            outbox: Vec::new(),
            closed: Vec::new(),
            actions_taken: 0,
        }
    }

    pub fn owns(&self, dc: DcId) -> bool {
        self.members[dc]
    }

    /// Adds `r` to the latest transition, or carries it to the next one.
    pub fn credit_latest(&mut self, r: f64, record: bool) {
        if !record {
            return;
        }
        match self.transitions.last_mut() {
            Some(t) => t.reward += r,
            None => self.carried += r,
        }
    }

    fn credit_at(&mut self, index: Option<usize>, r: f64, record: bool) {
        match index {
            Some(i) if record && i < self.transitions.len() => self.transitions[i].reward += r,
            _ => self.credit_latest(r, record),
        }
    }

    /// Records a terminal request and its reward.
    pub fn finish(&mut self, r: SfcRequest, accepted: bool, record: bool) {
        if accepted {
            self.tally.accepted += 1;
            self.tally.total += REWARD_ACCEPT;
            let idx = r.final_alloc.filter(|(c, _)| *c == self.cluster).map(|(_, i)| i);
            self.credit_at(idx, REWARD_ACCEPT, record);
        } else {
            self.tally.dropped += 1;
            self.tally.total += REWARD_DROP;
            self.credit_latest(REWARD_DROP, record);
        }
        self.closed.push(r);
    }

    /// Up to `actions_per_step` decisions, then local deliveries and
    /// escalation of requests the cluster cannot host.
    pub fn run_phase(&mut self, shard: &mut ClusterShard, ctx: &PhaseContext) {
        let clock = ctx.clock;
        let end = clock.step_end();
        let mut k: u64 = 0;
        while k < clock.actions_per_step as u64 {
            let t = clock.action_time(k as u32);
            if !self.queue.iter().any(|r| r.is_pending_at(t)) {
                let next = self
                    .queue
                    .iter()
                    .filter(|r| !r.is_terminal() && !r.chain_done())
                    .map(|r| r.ready_at)
                    .min();
                match next {
                    Some(x) if x > t && x < end => {
                        k = clock.first_action_at(x);
                        continue;
                    }
                    _ => break,
                }
            }
            let outcome = self.act_once(shard, ctx, t);
            k += 1;
            if outcome.invalid {
                break;
            }
        }
        self.deliver(shard, ctx, end);
        self.escalate(shard, ctx, end);
    }

    fn select_dc(&mut self, sim: &SimConfig, t: SimTime) -> DcId {
        match sim.dc_selection {
            DcSelection::RoundRobin => {
                let dc = self.dcs[self.cursor];
                self.cursor = (self.cursor + 1) % self.dcs.len();
                dc
            }
            DcSelection::MostPending => {
                let count = |dc: DcId| {
                    self.queue
                        .iter()
                        .filter(|r| r.location == dc && r.is_pending_at(t))
                        .count()
                };
                *self
                    .dcs
                    .iter()
                    .max_by_key(|&&dc| (count(dc), Reverse(dc)))
                    .unwrap()
            }
        }
    }

    pub fn encode(&self, shard: &ClusterShard, ctx: &PhaseContext, dc: DcId, t: SimTime) -> StateEncoding {
        let live = self.queue.iter().filter(|r| !r.is_terminal()).count();
        let outside = self
            .queue
            .iter()
            .filter(|r| !r.is_terminal() && !self.members[r.dest_dc])
            .count();
        let outside_fraction = if live == 0 { 0.0 } else { outside as f64 / live as f64 };
        encode_state(
            ctx.catalog,
            t,
            shard.dc(dc),
            self.queue.iter().filter(|r| r.location == dc && r.is_pending_at(t)),
            self.queue.iter().filter(|r| r.is_pending_at(t)),
            ctx.transfer_pending[self.cluster],
            outside_fraction,
        )
    }

    /// Selects a DC, encodes the state, chooses and executes one action.
    pub fn act_once(&mut self, shard: &mut ClusterShard, ctx: &PhaseContext, t: SimTime) -> ActionOutcome {
        let dc = self.select_dc(ctx.sim, t);
        let state = self.encode(shard, ctx, dc, t);
        let action = act(ctx.policy, &state, ctx.epsilon, &mut self.rng);
        let outcome = self.execute(shard, ctx, dc, action, t);
        self.actions_taken += 1;
        self.tally.action_counts[action] += 1;
        self.tally.total += outcome.reward;
        if outcome.invalid {
            self.tally.invalid += 1;
        }
        if outcome.uninstalled_needed {
            self.tally.needed_uninstall += 1;
        }
        if ctx.record {
            let reward = outcome.reward + std::mem::take(&mut self.carried);
            self.transitions.push(AgentTransition {
                state: state.pack(),
                action: action as u8,
                reward,
            });
        }
        outcome
    }

    pub fn execute(
        &mut self,
        shard: &mut ClusterShard,
        ctx: &PhaseContext,
        dc: DcId,
        action: usize,
        t: SimTime,
    ) -> ActionOutcome {
        let mut out = ActionOutcome {
            action,
            dc,
            reward: 0.0,
            invalid: false,
            uninstalled_needed: false,
            allocated: None,
            chain_completed: false,
        };
        match Action::from_index(action) {
            Action::Idle => {}
            Action::Place(kind) => {
                let vnf = ctx.catalog.vnf(kind);
                let d = shard.dc_mut(dc);
                let instance = match d.idle_instance(kind, t) {
                    Some(id) => id,
                    None if d.can_place(vnf) => d.place_vnf(vnf).expect("can_place checked"),
                    None => {
                        out.invalid = true;
                        out.reward = REWARD_INVALID;
                        return out;
                    }
                };
                if let Some((id, done)) = self.allocate_top(shard, ctx, dc, instance, vnf, t) {
                    out.allocated = Some(id);
                    out.chain_completed = done;
                }
            }
            Action::Uninstall(kind) => {
                let Some(id) = shard.dc(dc).idle_instance(kind, t) else {
                    out.invalid = true;
                    out.reward = REWARD_INVALID;
                    return out;
                };
                let needed = self
                    .queue
                    .iter()
                    .any(|r| !r.is_terminal() && r.next_vnf() == Some(kind));
                let res = shard
                    .dc_mut(dc)
                    .uninstall_vnf(id, t, needed)
                    .expect("idle instance can be removed");
                out.reward = res.penalty();
                out.uninstalled_needed = needed;
            }
        }
        out
    }

    /// Serves the highest-priority pending request waiting for `vnf` whose
    /// transfer to `dc` is feasible.
    fn allocate_top(
        &mut self,
        shard: &mut ClusterShard,
        ctx: &PhaseContext,
        dc: DcId,
        instance: crate::nfv_state::InstanceId,
        vnf: &VnfType,
        t: SimTime,
    ) -> Option<(RequestId, bool)> {
        let candidates: Vec<usize> = (0..self.queue.len())
            .filter(|&i| {
                let r = &self.queue[i];
                r.is_pending_at(t)
                    && r.next_vnf() == Some(vnf.kind)
                    && !(ctx.sim.eager_drop
                        && completion_lower_bound(r, ctx.catalog, ctx.graph, t, ctx.sim) > r.tolerance)
            })
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let refs: Vec<&SfcRequest> = candidates.iter().map(|&i| &self.queue[i]).collect();
        let order = priority_rank(&refs, ctx.catalog, t);
        for o in order {
            let idx = candidates[o];
            let (loc, bw) = (self.queue[idx].location, self.queue[idx].bandwidth);
            let path = if loc == dc {
                None
            } else {
                match d2d_shortest_path(ctx.graph, &self.members, &*shard, loc, dc, bw, &mut self.counters)
                    .expect("both DCs belong to the cluster")
                {
                    Some(p) => Some(p),
                    None => continue,
                }
            };
            let r = &mut self.queue[idx];
            if let Some(p) = &path {
                if let Some(tr) = reserve_transfer(shard, r, p, t, ctx.sim.bw_hold) {
                    shard.transfers.push(tr);
                }
            }
            let k = r.next_vnf_index;
            let inst = shard.dc_mut(dc).instance_mut(instance).expect("instance exists");
            allocate(r, k, inst, vnf, t, path.as_ref().map(|p| p.total_distance_km))
                .expect("candidate is ready and matches the instance");
            let done = r.chain_done();
            if done && ctx.record {
                r.final_alloc = Some((self.cluster, self.transitions.len()));
            }
            return Some((r.id, done));
        }
        None
    }

    /// Completes requests whose chain finished by `end`: in-cluster
    /// destinations are delivered over D2D paths, others go to the general
    /// agent.
    pub fn deliver(&mut self, shard: &mut ClusterShard, ctx: &PhaseContext, end: SimTime) {
        let queue = std::mem::take(&mut self.queue);
        for mut r in queue {
            if r.is_terminal() || !r.chain_done() || r.ready_at > end {
                self.queue.push(r);
                continue;
            }
            if !ctx.sim.count_last_mile {
                let start = r.ready_at;
                let ok = conclude_delivery(&mut r, start, None);
                self.finish(r, ok, ctx.record);
                continue;
            }
            if !self.members[r.dest_dc] {
                self.outbox.push(Assist::Deliver {
                    request: r,
                    from: self.cluster,
                });
                continue;
            }
            let path = d2d_shortest_path(
                ctx.graph,
                &self.members,
                &*shard,
                r.location,
                r.dest_dc,
                r.bandwidth,
                &mut self.counters,
            )
            .expect("both DCs belong to the cluster");
            match path {
                Some(p) => {
                    let start = r.ready_at;
                    if let Some(tr) = reserve_transfer(shard, &mut r, &p, start, ctx.sim.bw_hold) {
                        shard.transfers.push(tr);
                    }
                    let ok = conclude_delivery(&mut r, start, Some(&p));
                    self.finish(r, ok, ctx.record);
                }
                None => {
                    r.ledger.wait(end - r.ready_at);
                    r.ready_at = end;
                    self.queue.push(r);
                }
            }
        }
    }

    /// Hands requests whose next VNF no DC here can host to the general agent.
    pub fn escalate(&mut self, shard: &ClusterShard, ctx: &PhaseContext, end: SimTime) {
        let queue = std::mem::take(&mut self.queue);
        for r in queue {
            let stuck = !r.is_terminal()
                && r.ready_at <= end
                && r.next_vnf().is_some_and(|v| !shard.can_host(ctx.catalog.vnf(v)));
            if stuck {
                self.outbox.push(Assist::Transfer {
                    request: r,
                    from: self.cluster,
                });
            } else {
                self.queue.push(r);
            }
        }
    }
}

/// Shared environment for the general agent's phase.
pub struct GeneralContext<'a> {
    pub graph: &'a NetworkGraph,
    pub partition: &'a ClusterPartition,
    pub catalog: &'a Catalog,
    pub sim: &'a SimConfig,
    pub record: bool,
}

#[derive(Debug, Clone, Default)]
pub struct GeneralAgent {
    /// FIFO by (step, originating cluster).
    pub queue: VecDeque<Assist>,
    pub handoffs: Vec<Handoff>,
    pub counters: PathCounters,
}

impl GeneralAgent {
    /// Cluster to receive an overflow request: the adjacent cluster able to
    /// host `vnf` with the most free vCPU, else any such cluster; ties go to
    /// the lowest id. Also returns the entry DC, chosen the same way.
    pub fn choose_target(
        partition: &ClusterPartition,
        substrate: &Substrate,
        from: ClusterId,
        vnf: &VnfType,
    ) -> Option<(ClusterId, DcId)> {
        let hosts = |c: &ClusterId| *c != from && substrate.shards[*c].can_host(vnf);
        let best = |it: &mut dyn Iterator<Item = ClusterId>| {
            it.max_by_key(|&c| (substrate.shards[c].free_vcpu(), Reverse(c)))
        };
        let target = best(&mut partition.cluster_adjacency[from].iter().copied().filter(hosts))
            .or_else(|| best(&mut (0..partition.cluster_count()).filter(hosts)))?;
        let entry = substrate.shards[target]
            .dcs
            .iter()
            .filter(|d| d.count(vnf.kind) > 0 || d.can_place(vnf))
            .max_by_key(|d| (d.free.vcpu, Reverse(d.dc)))
            .map(|d| d.dc)?;
        Some((target, entry))
    }

    /// Processes every queued assist at `now`; unroutable ones wait for the
    /// next step.
    pub fn process(
        &mut self,
        now: SimTime,
        ctx: &GeneralContext,
        substrate: &mut Substrate,
        locals: &mut [LocalAgent],
    ) {
        let items = std::mem::take(&mut self.queue);
        for item in items {
            match item {
                Assist::Transfer { mut request, from } => {
                    let vnf = ctx.catalog.vnf(request.next_vnf().expect("transfers carry unfinished chains"));
                    let Some((target, entry)) = Self::choose_target(ctx.partition, substrate, from, vnf) else {
                        drop_request(&mut request, now, DropReason::NoHost);
                        locals[from].finish(request, false, ctx.record);
                        continue;
                    };
                    let path = find_path(
                        ctx.graph,
                        ctx.partition,
                        &*substrate,
                        request.location,
                        entry,
                        request.bandwidth,
                        &mut self.counters,
                    );
                    let Some(p) = path else {
                        self.queue.push_back(Assist::Transfer { request, from });
                        continue;
                    };
                    let start = now.max(request.ready_at);
                    if let Some(tr) = reserve_transfer(substrate, &mut request, &p, start, ctx.sim.bw_hold) {
                        substrate.transfers.push(tr);
                    }
                    request.ledger.wait(start - request.ready_at);
                    let prop = request.ledger.transfer(request.location, entry, p.total_distance_km);
                    request.location = entry;
                    request.ready_at = start + prop;
                    self.handoffs.push(Handoff {
                        request: request.id,
                        from,
                        to: target,
                        time_ns: now.nanos(),
                        kind: HandoffKind::Transfer,
                    });
                    locals[target].queue.push(request);
                }
                Assist::Deliver { mut request, from } => {
                    let path = find_path(
                        ctx.graph,
                        ctx.partition,
                        &*substrate,
                        request.location,
                        request.dest_dc,
                        request.bandwidth,
                        &mut self.counters,
                    );
                    let Some(p) = path else {
                        self.queue.push_back(Assist::Deliver { request, from });
                        continue;
                    };
                    let start = now.max(request.ready_at);
                    if let Some(tr) = reserve_transfer(substrate, &mut request, &p, start, ctx.sim.bw_hold) {
                        substrate.transfers.push(tr);
                    }
                    self.handoffs.push(Handoff {
                        request: request.id,
                        from,
                        to: ctx.partition.cluster_of(request.dest_dc),
                        time_ns: now.nanos(),
                        kind: HandoffKind::Deliver,
                    });
                    let ok = conclude_delivery(&mut request, start, Some(&p));
                    locals[from].finish(request, ok, ctx.record);
                }
            }
        }
    }
}

/// Partition plus one fresh local agent per cluster and an idle general agent.
/// Calling it again discards the previous agents.
pub struct Setup {
    pub partition: ClusterPartition,
    pub locals: Vec<LocalAgent>,
    pub general: GeneralAgent,
}

pub fn setup(
    graph: &NetworkGraph,
    size_limit: usize,
    cluster_seed: u64,
    agent_seed: u64,
) -> Result<Setup, TopologyError> {
    let partition = make_clusters(graph, size_limit, cluster_seed)?;
    let locals = (0..partition.cluster_count())
        .map(|c| LocalAgent::new(c, &partition, derive_seed(agent_seed, c as u64)))
        .collect();
    Ok(Setup {
        partition,
        locals,
        general: GeneralAgent::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{default_catalog, SfcKind};

    fn req(id: RequestId, kind: SfcKind) -> SfcRequest {
        let c = default_catalog();
        let sfc = c.sfc(kind);
        SfcRequest::new(id, sfc, sfc.bandwidth.max(), 0, 1, SimTime::ZERO)
    }

    #[test]
    fn action_decoding() {
        assert_eq!(Action::from_index(0), Action::Place(VnfKind::Nat));
        assert_eq!(Action::from_index(5), Action::Place(VnfKind::Idps));
        assert_eq!(Action::from_index(6), Action::Uninstall(VnfKind::Nat));
        assert_eq!(Action::from_index(12), Action::Idle);
    }

    #[test]
    fn tight_deadline_ranks_first() {
        let c = default_catalog();
        let miot = req(0, SfcKind::Miot);
        let vs = req(1, SfcKind::Vs);
        assert_eq!(priority_rank(&[&vs, &miot], &c, SimTime::ZERO), vec![1, 0]);
        assert_eq!(priority_rank(&[&miot], &c, SimTime::ZERO), vec![0]);
    }

    #[test]
    fn identical_requests_break_ties_by_arrival_then_id() {
        let c = default_catalog();
        let a = req(7, SfcKind::Cg);
        let b = req(3, SfcKind::Cg);
        let mut early = req(9, SfcKind::Cg);
        early.arrival = SimTime::ZERO;
        let mut late_a = a.clone();
        late_a.arrival = SimTime::from_ms(1.0);
        late_a.ready_at = late_a.arrival;
        let now = SimTime::from_ms(1.0);
        assert_eq!(priority_rank(&[&a, &b], &c, now), vec![1, 0]);
        // The later arrival has spent less of its tolerance.
        assert_eq!(priority_rank(&[&late_a, &early], &c, now), vec![1, 0]);
    }

    #[test]
    fn lower_bound_grows_with_elapsed_time() {
        let c = default_catalog();
        let g = crate::topology::build_network(&crate::topology::TopologyConfig::with_dc_count(4), 1).unwrap();
        let r = req(0, SfcKind::Ind40);
        let lazy = SimConfig {
            eager_drop: false,
            ..Default::default()
        };
        assert_eq!(completion_lower_bound(&r, &c, &g, SimTime::from_ms(3.0), &lazy), SimTime::from_ms(3.0));
        let eager = SimConfig::default();
        let lb = completion_lower_bound(&r, &c, &g, SimTime::from_ms(3.0), &eager);
        assert!(lb >= SimTime::from_ms(3.09));
    }

    #[test]
    fn delivery_judges_the_deadline() {
        let mut r = req(0, SfcKind::Ind40);
        r.next_vnf_index = 2;
        r.ready_at = SimTime::from_ms(7.0);
        r.ledger.wait(SimTime::from_ms(7.0));
        let p = PathResult {
            hops: vec![0, 1],
            total_distance_km: 300.0,
            links: vec![0],
        };
        let mut late = r.clone();
        assert!(conclude_delivery(&mut r, SimTime::from_ms(7.0), Some(&p)));
        assert_eq!(r.accrued_delay(), SimTime::from_ms(8.0));
        assert!(!conclude_delivery(&mut late, SimTime::from_ms(7.5), Some(&p)));
        assert_eq!(late.drop_reason, Some(DropReason::Late));
        assert_eq!(late.accrued_delay(), late.ready_at - late.arrival);
    }
}

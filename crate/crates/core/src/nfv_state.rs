//! Mutable NFV substrate: installed VNF instances, DC residual resources and
//! link residual bandwidth.
//!
//! The substrate is stored as one shard per cluster (its DCs and intra-cluster
//! links) plus the inter-cluster links. A local agent is handed only its own
//! shard, so it cannot touch another cluster's state or any inter-cluster link.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::routing::{LinkAvailability, PathResult};
use crate::topology::{ClusterId, ClusterPartition, DataCenterSpec, DcId, LinkId, NetworkGraph};
use crate::units::{Kbps, SimTime};
use crate::workload::{Placement, RequestId, RequestStatus, SfcRequest, VnfKind, VnfType};

#[derive(Debug, Error, PartialEq)]
pub enum NfvError {
    #[error("insufficient resources on DC {dc} for {vnf}")]
    Insufficient { dc: DcId, vnf: VnfKind },
    #[error("unknown VNF instance {0:?}")]
    UnknownInstance(InstanceId),
    #[error("instance {0:?} is busy")]
    Busy(InstanceId),
    #[error("instance type {instance} does not match chain entry {expected}")]
    TypeMismatch { instance: VnfKind, expected: VnfKind },
    #[error("request {request} expects chain index {expected}, got {got}")]
    WrongIndex {
        request: RequestId,
        expected: usize,
        got: usize,
    },
    #[error("request {0} is not ready")]
    NotReady(RequestId),
    #[error("insufficient bandwidth on link {0}")]
    Bandwidth(LinkId),
    #[error("link {0} is outside this shard")]
    OutOfScope(LinkId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceId {
    pub dc: DcId,
    pub serial: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resources {
    pub vcpu: u32,
    pub ram_gb: u32,
    pub storage_gb: u32,
}

impl Resources {
    pub fn of(vnf: &VnfType) -> Self {
        Resources {
            vcpu: vnf.vcpu,
            ram_gb: vnf.ram_gb,
            storage_gb: vnf.storage_gb,
        }
    }

    pub fn covers(&self, need: &Resources) -> bool {
        self.vcpu >= need.vcpu && self.ram_gb >= need.ram_gb && self.storage_gb >= need.storage_gb
    }

    fn add(&mut self, o: &Resources) {
        self.vcpu += o.vcpu;
        self.ram_gb += o.ram_gb;
        self.storage_gb += o.storage_gb;
    }

    fn sub(&mut self, o: &Resources) {
        self.vcpu -= o.vcpu;
        self.ram_gb -= o.ram_gb;
        self.storage_gb -= o.storage_gb;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnfInstance {
    pub id: InstanceId,
    pub kind: VnfKind,
    pub footprint: Resources,
    pub busy_until: SimTime,
    pub allocated_request: Option<RequestId>,
}

impl VnfInstance {
    pub fn is_idle(&self, now: SimTime) -> bool {
        self.busy_until <= now
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcRuntime {
    pub dc: DcId,
    pub capacity: Resources,
    pub free: Resources,
    /// Installed instances in installation order.
    pub installed: Vec<VnfInstance>,
    next_serial: u32,
}

/// Result of an uninstall request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UninstallOutcome {
    Removed,
    /// Removed although same-type demand was pending.
    RemovedNeeded,
}

impl UninstallOutcome {
    pub fn penalty(self) -> f64 {
        match self {
            UninstallOutcome::Removed => 0.0,
            UninstallOutcome::RemovedNeeded => -0.5,
        }
    }
}

impl DcRuntime {
    pub fn new(spec: &DataCenterSpec) -> Self {
        let capacity = Resources {
            vcpu: spec.compute_cap,
            ram_gb: spec.ram_cap,
            storage_gb: spec.storage_cap,
        };
        DcRuntime {
            dc: spec.id,
            capacity,
            free: capacity,
            installed: Vec::new(),
            next_serial: 0,
        }
    }

    /// Whether the free vCPU, RAM and storage all cover `vnf` (inclusive).
    pub fn can_place(&self, vnf: &VnfType) -> bool {
        self.free.covers(&Resources::of(vnf))
    }

    pub fn place_vnf(&mut self, vnf: &VnfType) -> Result<InstanceId, NfvError> {
        if !self.can_place(vnf) {
            return Err(NfvError::Insufficient {
                dc: self.dc,
                vnf: vnf.kind,
            });
        }
        let footprint = Resources::of(vnf);
        self.free.sub(&footprint);
        let id = InstanceId {
            dc: self.dc,
            serial: self.next_serial,
        };
        self.next_serial += 1;
        self.installed.push(VnfInstance {
            id,
            kind: vnf.kind,
            footprint,
            busy_until: SimTime::ZERO,
            allocated_request: None,
        });
        Ok(id)
    }

    /// Removes an idle instance. `needed` marks pending same-type demand,
    /// which still removes the instance but carries a penalty.
    pub fn uninstall_vnf(&mut self, id: InstanceId, now: SimTime, needed: bool) -> Result<UninstallOutcome, NfvError> {
        let pos = self
            .installed
            .iter()
            .position(|i| i.id == id)
            .ok_or(NfvError::UnknownInstance(id))?;
        if !self.installed[pos].is_idle(now) {
            return Err(NfvError::Busy(id));
        }
        let inst = self.installed.remove(pos);
        self.free.add(&inst.footprint);
        Ok(if needed {
            UninstallOutcome::RemovedNeeded
        } else {
            UninstallOutcome::Removed
        })
    }

    pub fn instance(&self, id: InstanceId) -> Option<&VnfInstance> {
        self.installed.iter().find(|i| i.id == id)
    }

    pub fn instance_mut(&mut self, id: InstanceId) -> Option<&mut VnfInstance> {
        self.installed.iter_mut().find(|i| i.id == id)
    }

    /// Lowest-serial idle instance of `kind`.
    pub fn idle_instance(&self, kind: VnfKind, now: SimTime) -> Option<InstanceId> {
        self.installed
            .iter()
            .find(|i| i.kind == kind && i.is_idle(now))
            .map(|i| i.id)
    }

    pub fn count(&self, kind: VnfKind) -> usize {
        self.installed.iter().filter(|i| i.kind == kind).count()
    }

    pub fn idle_count(&self, kind: VnfKind, now: SimTime) -> usize {
        self.installed
            .iter()
            .filter(|i| i.kind == kind && i.is_idle(now))
            .count()
    }

    /// Clears allocations whose processing has finished.
    pub fn release_finished(&mut self, now: SimTime) {
        for inst in &mut self.installed {
            if inst.busy_until <= now {
                inst.allocated_request = None;
            }
        }
    }

    /// Exact accounting check: capacity - free equals the summed footprints.
    pub fn verify(&self) -> Result<(), String> {
        let mut used = Resources::default();
        for inst in &self.installed {
            used.add(&inst.footprint);
        }
        let mut expect = self.capacity;
        if !expect.covers(&used) {
            return Err(format!("DC {}: footprints exceed capacity", self.dc));
        }
        expect.sub(&used);
        if expect != self.free {
            return Err(format!("DC {}: free {:?} != recomputed {:?}", self.dc, self.free, expect));
        }
        Ok(())
    }
}

/// Identifies one bandwidth reservation: a request's `seq`-th transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReservationKey {
    pub request: RequestId,
    pub seq: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRuntime {
    pub link: LinkId,
    pub capacity: Kbps,
    pub free: Kbps,
    pub reservations: BTreeMap<ReservationKey, Kbps>,
}

impl LinkRuntime {
    pub fn new(link: LinkId, capacity: Kbps) -> Self {
        LinkRuntime {
            link,
            capacity,
            free: capacity,
            reservations: BTreeMap::new(),
        }
    }

    fn reserve(&mut self, key: ReservationKey, bw: Kbps) {
        self.free = self.free - bw;
        *self.reservations.entry(key).or_default() = self.reservations.get(&key).copied().unwrap_or_default() + bw;
    }

    fn release(&mut self, key: ReservationKey) {
        if let Some(bw) = self.reservations.remove(&key) {
            self.free = self.free + bw;
        }
    }

    fn release_request(&mut self, request: RequestId) {
        let keys: Vec<ReservationKey> = self
            .reservations
            .keys()
            .filter(|k| k.request == request)
            .copied()
            .collect();
        for k in keys {
            self.release(k);
        }
    }

    pub fn verify(&self) -> Result<(), String> {
        let reserved: Kbps = self.reservations.values().copied().sum();
        if reserved > self.capacity || self.capacity - reserved != self.free {
            return Err(format!(
                "link {}: free {} != capacity {} - reserved {}",
                self.link, self.free, self.capacity, reserved
            ));
        }
        Ok(())
    }
}

/// Mutable access to a set of links.
pub trait LinkStore {
    fn link_rt(&self, link: LinkId) -> Option<&LinkRuntime>;
    fn link_rt_mut(&mut self, link: LinkId) -> Option<&mut LinkRuntime>;
}

/// Reserves `bw` on every link of `path` under `key`, or nothing at all.
pub fn reserve_bandwidth(
    store: &mut impl LinkStore,
    path: &PathResult,
    key: ReservationKey,
    bw: Kbps,
) -> Result<(), NfvError> {
    for &l in &path.links {
        let rt = store.link_rt(l).ok_or(NfvError::OutOfScope(l))?;
        if rt.free < bw {
            return Err(NfvError::Bandwidth(l));
        }
    }
    for &l in &path.links {
        store.link_rt_mut(l).unwrap().reserve(key, bw);
    }
    Ok(())
}

/// Releases one reservation from the listed links. Idempotent.
pub fn release_reservation(store: &mut impl LinkStore, links: &[LinkId], key: ReservationKey) {
    for &l in links {
        if let Some(rt) = store.link_rt_mut(l) {
            rt.release(key);
        }
    }
}

/// Releases every reservation of `request` on the listed links. Idempotent.
pub fn release_bandwidth(store: &mut impl LinkStore, links: &[LinkId], request: RequestId) {
    for &l in links {
        if let Some(rt) = store.link_rt_mut(l) {
            rt.release_request(request);
        }
    }
}

/// An in-flight transfer whose reservation ends at `end`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveTransfer {
    pub key: ReservationKey,
    pub links: Vec<LinkId>,
    pub end: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Intra(ClusterId, usize),
    Inter(usize),
}

/// Where each DC and link lives inside the sharded substrate.
#[derive(Debug)]
pub struct SlotIndex {
    dc: Vec<(ClusterId, usize)>,
    link: Vec<Slot>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterShard {
    pub cluster: ClusterId,
    pub dcs: Vec<DcRuntime>,
    pub links: Vec<LinkRuntime>,
    /// Per-transfer reservations on intra-cluster links.
    pub transfers: Vec<ActiveTransfer>,
    #[serde(skip)]
    index: Arc<SlotIndex>,
}

impl ClusterShard {
    pub fn dc(&self, id: DcId) -> &DcRuntime {
        let (c, i) = self.index.dc[id];
        assert_eq!(c, self.cluster, "DC {id} is outside cluster {}", self.cluster);
        &self.dcs[i]
    }

    pub fn dc_mut(&mut self, id: DcId) -> &mut DcRuntime {
        let (c, i) = self.index.dc[id];
        assert_eq!(c, self.cluster, "DC {id} is outside cluster {}", self.cluster);
        &mut self.dcs[i]
    }

    pub fn owns_dc(&self, id: DcId) -> bool {
        self.index.dc[id].0 == self.cluster
    }

    pub fn free_vcpu(&self) -> u32 {
        self.dcs.iter().map(|d| d.free.vcpu).sum()
    }

    /// Some DC here has an instance of `kind` or room to install one.
    pub fn can_host(&self, vnf: &VnfType) -> bool {
        self.dcs
            .iter()
            .any(|d| d.count(vnf.kind) > 0 || d.can_place(vnf))
    }
}

impl LinkStore for ClusterShard {
    fn link_rt(&self, link: LinkId) -> Option<&LinkRuntime> {
        match self.index.link[link] {
            Slot::Intra(c, i) if c == self.cluster => Some(&self.links[i]),
            _ => None,
        }
    }

    fn link_rt_mut(&mut self, link: LinkId) -> Option<&mut LinkRuntime> {
        match self.index.link[link] {
            Slot::Intra(c, i) if c == self.cluster => Some(&mut self.links[i]),
            _ => None,
        }
    }
}

impl LinkAvailability for ClusterShard {
    /// Links outside the shard read as fully reserved.
    fn free_bw(&self, link: LinkId) -> Kbps {
        self.link_rt(link).map_or(Kbps::ZERO, |l| l.free)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Substrate {
    pub shards: Vec<ClusterShard>,
    pub inter_links: Vec<LinkRuntime>,
    /// Per-transfer reservations that cross or span clusters.
    pub transfers: Vec<ActiveTransfer>,
    #[serde(skip)]
    index: Arc<SlotIndex>,
}

impl Substrate {
    pub fn new(graph: &NetworkGraph, partition: &ClusterPartition) -> Self {
        let mut dc = vec![(0, 0); graph.dc_count()];
        for (c, members) in partition.clusters.iter().enumerate() {
            for (i, &d) in members.iter().enumerate() {
                dc[d] = (c, i);
            }
        }
        let mut link = vec![Slot::Inter(0); graph.links().len()];
        for (c, ls) in partition.intra_links.iter().enumerate() {
            for (i, &l) in ls.iter().enumerate() {
                link[l] = Slot::Intra(c, i);
            }
        }
        for (i, &l) in partition.inter_links.iter().enumerate() {
            link[l] = Slot::Inter(i);
        }
        let index = Arc::new(SlotIndex { dc, link });
        let shards = partition
            .clusters
            .iter()
            .enumerate()
            .map(|(c, members)| ClusterShard {
                cluster: c,
                dcs: members.iter().map(|&d| DcRuntime::new(graph.dc(d))).collect(),
                links: partition.intra_links[c]
                    .iter()
                    .map(|&l| LinkRuntime::new(l, graph.link(l).bandwidth_cap))
                    .collect(),
                transfers: Vec::new(),
                index: index.clone(),
            })
            .collect();
        let inter_links = partition
            .inter_links
            .iter()
            .map(|&l| LinkRuntime::new(l, graph.link(l).bandwidth_cap))
            .collect();
        Substrate {
            shards,
            inter_links,
            transfers: Vec::new(),
            index,
        }
    }

    pub fn dc(&self, id: DcId) -> &DcRuntime {
        let (c, i) = self.index.dc[id];
        &self.shards[c].dcs[i]
    }

    pub fn dc_mut(&mut self, id: DcId) -> &mut DcRuntime {
        let (c, i) = self.index.dc[id];
        &mut self.shards[c].dcs[i]
    }

    pub fn dcs(&self) -> impl Iterator<Item = &DcRuntime> {
        self.shards.iter().flat_map(|s| s.dcs.iter())
    }

    pub fn links(&self) -> impl Iterator<Item = &LinkRuntime> {
        self.shards
            .iter()
            .flat_map(|s| s.links.iter())
            .chain(self.inter_links.iter())
    }

    pub fn free_bandwidth(&self) -> Vec<Kbps> {
        let mut out = vec![Kbps::ZERO; self.index.link.len()];
        for l in self.links() {
            out[l.link] = l.free;
        }
        out
    }

    /// Recomputes every DC and link's accounting from its instances and
    /// reservations. Returns all violations found.
    pub fn verify(&self) -> Vec<String> {
        self.dcs()
            .filter_map(|d| d.verify().err())
            .chain(self.links().filter_map(|l| l.verify().err()))
            .collect()
    }

    pub fn snapshot_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("substrate serializes")
    }
}

impl LinkStore for Substrate {
    fn link_rt(&self, link: LinkId) -> Option<&LinkRuntime> {
        Some(match *self.index.link.get(link)? {
            Slot::Intra(c, i) => &self.shards[c].links[i],
            Slot::Inter(i) => &self.inter_links[i],
        })
    }

    fn link_rt_mut(&mut self, link: LinkId) -> Option<&mut LinkRuntime> {
        Some(match *self.index.link.get(link)? {
            Slot::Intra(c, i) => &mut self.shards[c].links[i],
            Slot::Inter(i) => &mut self.inter_links[i],
        })
    }
}

impl LinkAvailability for Substrate {
    fn free_bw(&self, link: LinkId) -> Kbps {
        self.link_rt(link).map_or(Kbps::ZERO, |l| l.free)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationRecord {
    pub request: RequestId,
    pub index: usize,
    pub instance: InstanceId,
    pub wait: SimTime,
    pub propagation: SimTime,
    pub start: SimTime,
    pub finish: SimTime,
}

/// Allocates `instance` to chain position `k` of `request` at `now`.
///
/// `transfer` carries the distance travelled from the request's current
/// location to the instance's DC (None when co-located). The instance is held
/// from `now` until processing finishes; the waiting time since the request
/// became ready is charged to its ledger.
pub fn allocate(
    request: &mut SfcRequest,
    k: usize,
    instance: &mut VnfInstance,
    vnf: &VnfType,
    now: SimTime,
    transfer_km: Option<f64>,
) -> Result<AllocationRecord, NfvError> {
    if request.next_vnf_index != k || request.is_terminal() || k >= request.chain.len() {
        return Err(NfvError::WrongIndex {
            request: request.id,
            expected: request.next_vnf_index,
            got: k,
        });
    }
    let expected = request.chain[k];
    if instance.kind != expected || vnf.kind != expected {
        return Err(NfvError::TypeMismatch {
            instance: instance.kind,
            expected,
        });
    }
    if !instance.is_idle(now) {
        return Err(NfvError::Busy(instance.id));
    }
    if request.ready_at > now {
        return Err(NfvError::NotReady(request.id));
    }
    let wait = now - request.ready_at;
    request.ledger.wait(wait);
    let dc = instance.id.dc;
    let propagation = match transfer_km {
        Some(km) if request.location != dc => request.ledger.transfer(request.location, dc, km),
        _ => SimTime::ZERO,
    };
    let start = now + propagation;
    let finish = start + vnf.proc_time;
    request.ledger.process(k, dc, vnf.proc_time);
    instance.busy_until = finish;
    instance.allocated_request = Some(request.id);
    request.placements.push(Placement {
        dc,
        instance: instance.id,
        start,
        finish,
    });
    request.next_vnf_index += 1;
    request.location = dc;
    request.ready_at = finish;
    request.status = RequestStatus::InService;
    Ok(AllocationRecord {
        request: request.id,
        index: k,
        instance: instance.id,
        wait,
        propagation,
        start,
        finish,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_network, make_clusters, TopologyConfig};
    use crate::workload::{default_catalog, SfcKind};

    fn default_dc() -> DcRuntime {
        DcRuntime::new(&DataCenterSpec {
            id: 0,
            position: [0.0, 0.0],
            storage_cap: 2048,
            compute_cap: 40,
            ram_cap: 256,
        })
    }

    #[test]
    fn can_place_examples() {
        let c = default_catalog();
        let mut dc = default_dc();
        assert!(dc.can_place(c.vnf(VnfKind::Tm)));
        dc.free.vcpu = 0;
        for v in &c.vnfs {
            assert!(!dc.can_place(v));
        }
        let fw = c.vnf(VnfKind::Fw);
        dc.free = Resources::of(fw);
        assert!(dc.can_place(fw));
    }

    #[test]
    fn place_nat_subtracts_footprint() {
        let c = default_catalog();
        let mut dc = default_dc();
        let id = dc.place_vnf(c.vnf(VnfKind::Nat)).unwrap();
        assert_eq!(dc.free, Resources { vcpu: 39, ram_gb: 252, storage_gb: 2041 });
        assert_eq!(dc.count(VnfKind::Nat), 1);
        assert!(dc.instance(id).unwrap().is_idle(SimTime::ZERO));
        dc.verify().unwrap();
        assert_eq!(dc.uninstall_vnf(id, SimTime::ZERO, false), Ok(UninstallOutcome::Removed));
        assert_eq!(dc.free, dc.capacity);
        dc.verify().unwrap();
    }

    #[test]
    fn place_until_exhausted() {
        let c = default_catalog();
        let mut dc = default_dc();
        let tm = c.vnf(VnfKind::Tm);
        for _ in 0..3 {
            dc.place_vnf(tm).unwrap();
        }
        assert_eq!(dc.free.vcpu, 1);
        assert_eq!(
            dc.place_vnf(tm),
            Err(NfvError::Insufficient { dc: 0, vnf: VnfKind::Tm })
        );
        dc.verify().unwrap();
    }

    #[test]
    fn uninstall_rules() {
        let c = default_catalog();
        let mut dc = default_dc();
        let a = dc.place_vnf(c.vnf(VnfKind::Fw)).unwrap();
        let b = dc.place_vnf(c.vnf(VnfKind::Fw)).unwrap();
        dc.instance_mut(a).unwrap().busy_until = SimTime::from_ms(5.0);
        assert_eq!(dc.uninstall_vnf(a, SimTime::from_ms(1.0), false), Err(NfvError::Busy(a)));
        assert_eq!(
            dc.uninstall_vnf(b, SimTime::from_ms(1.0), true),
            Ok(UninstallOutcome::RemovedNeeded)
        );
        assert_eq!(UninstallOutcome::RemovedNeeded.penalty(), -0.5);
        assert_eq!(
            dc.uninstall_vnf(b, SimTime::ZERO, false),
            Err(NfvError::UnknownInstance(b))
        );
        dc.verify().unwrap();
    }

    fn ind40_request() -> SfcRequest {
        let c = default_catalog();
        SfcRequest::new(0, c.sfc(SfcKind::Ind40), Kbps(70_000), 0, 1, SimTime::ZERO)
    }

    #[test]
    fn allocate_records_wait_and_busy_until() {
        let c = default_catalog();
        let mut dc = default_dc();
        let nat = dc.place_vnf(c.vnf(VnfKind::Nat)).unwrap();
        let fw = dc.place_vnf(c.vnf(VnfKind::Fw)).unwrap();
        let mut r = ind40_request();
        r.arrival = SimTime::from_ms(8.0);
        r.ready_at = r.arrival;
        let rec = allocate(&mut r, 0, dc.instance_mut(nat).unwrap(), c.vnf(VnfKind::Nat), SimTime::from_ms(10.0), None).unwrap();
        assert_eq!(rec.wait, SimTime::from_ms(2.0));
        assert_eq!(rec.finish, SimTime::from_ms(10.06));

        // Request ready at 10.06 exactly, served then: no waiting.
        let now = r.ready_at;
        let rec = allocate(&mut r, 1, dc.instance_mut(fw).unwrap(), c.vnf(VnfKind::Fw), now, None).unwrap();
        assert_eq!(rec.wait, SimTime::ZERO);
        assert_eq!(dc.instance(fw).unwrap().busy_until, now + SimTime::from_ms(0.03));
        assert_eq!(r.accrued_delay(), SimTime::from_ms(2.0 + 0.06 + 0.03));
        assert_eq!(r.accrued_delay(), r.ready_at - r.arrival);
        assert!(r.chain_done());
    }

    #[test]
    fn idle_fw_at_ten() {
        let c = default_catalog();
        let mut dc = default_dc();
        let fw = dc.place_vnf(c.vnf(VnfKind::Fw)).unwrap();
        let mut r = ind40_request();
        r.next_vnf_index = 1;
        r.ready_at = SimTime::from_ms(10.0);
        let rec = allocate(&mut r, 1, dc.instance_mut(fw).unwrap(), c.vnf(VnfKind::Fw), SimTime::from_ms(10.0), None).unwrap();
        assert_eq!(rec.wait, SimTime::ZERO);
        assert_eq!(dc.instance(fw).unwrap().busy_until, SimTime::from_ms(10.03));
    }

    #[test]
    fn allocate_rejects_misuse() {
        let c = default_catalog();
        let mut dc = default_dc();
        let nat = dc.place_vnf(c.vnf(VnfKind::Nat)).unwrap();
        let fw = dc.place_vnf(c.vnf(VnfKind::Fw)).unwrap();
        let mut r = ind40_request();
        assert!(matches!(
            allocate(&mut r, 0, dc.instance_mut(fw).unwrap(), c.vnf(VnfKind::Fw), SimTime::ZERO, None),
            Err(NfvError::TypeMismatch { .. })
        ));
        allocate(&mut r, 0, dc.instance_mut(nat).unwrap(), c.vnf(VnfKind::Nat), SimTime::ZERO, None).unwrap();
        // Chain position 0 a second time violates the single-placement rule.
        let later = SimTime::from_ms(1.0);
        assert!(matches!(
            allocate(&mut r, 0, dc.instance_mut(nat).unwrap(), c.vnf(VnfKind::Nat), later, None),
            Err(NfvError::WrongIndex { .. })
        ));
        let mut other = ind40_request();
        other.id = 1;
        assert_eq!(
            allocate(&mut other, 0, dc.instance_mut(nat).unwrap(), c.vnf(VnfKind::Nat), SimTime::from_ms(0.01), None),
            Err(NfvError::Busy(nat))
        );
    }

    fn two_cluster_substrate() -> (NetworkGraph, ClusterPartition, Substrate) {
        let g = build_network(&TopologyConfig::with_dc_count(8), 5).unwrap();
        let p = make_clusters(&g, 4, 5).unwrap();
        let s = Substrate::new(&g, &p);
        (g, p, s)
    }

    fn single_link_path(g: &NetworkGraph, l: LinkId) -> PathResult {
        let (a, b) = g.link(l).endpoints;
        PathResult {
            hops: vec![a, b],
            total_distance_km: g.link(l).distance_km,
            links: vec![l],
        }
    }

    #[test]
    fn reserve_and_release_bandwidth() {
        let (g, _, mut s) = two_cluster_substrate();
        let path = single_link_path(&g, 0);
        let key = ReservationKey { request: 1, seq: 0 };
        reserve_bandwidth(&mut s, &path, key, Kbps::from_mbps(100.0)).unwrap();
        assert_eq!(s.free_bw(0), Kbps::from_mbps(900.0));
        release_bandwidth(&mut s, &path.links, 1);
        assert_eq!(s.free_bw(0), Kbps::from_mbps(1000.0));
        release_bandwidth(&mut s, &path.links, 1);
        assert_eq!(s.free_bw(0), Kbps::from_mbps(1000.0));
        assert!(s.verify().is_empty());
    }

    #[test]
    fn fifteen_voip_streams() {
        let (g, _, mut s) = two_cluster_substrate();
        let path = single_link_path(&g, 0);
        for r in 0..15 {
            reserve_bandwidth(&mut s, &path, ReservationKey { request: r, seq: 0 }, Kbps::from_mbps(0.064)).unwrap();
        }
        assert_eq!(s.free_bw(0), Kbps::from_mbps(999.04));
        assert!(s.verify().is_empty());
    }

    #[test]
    fn reservation_is_all_or_nothing() {
        let (g, _, mut s) = two_cluster_substrate();
        let (a, _) = g.link(0).endpoints;
        // Pick a second link incident to `a`'s neighbour so the two form a walk.
        let l1 = g.neighbors(g.link(0).other(a)).iter().map(|&(_, l)| l).find(|&l| l != 0);
        let Some(l1) = l1 else { return };
        let mid = g.link(0).other(a);
        let far = g.link(l1).other(mid);
        let path = PathResult {
            hops: vec![a, mid, far],
            total_distance_km: g.link(0).distance_km + g.link(l1).distance_km,
            links: vec![0, l1],
        };
        let big = ReservationKey { request: 7, seq: 0 };
        reserve_bandwidth(&mut s, &single_link_path(&g, l1), big, Kbps::from_mbps(950.0)).unwrap();
        let before = s.free_bandwidth();
        assert_eq!(
            reserve_bandwidth(&mut s, &path, ReservationKey { request: 8, seq: 0 }, Kbps::from_mbps(100.0)),
            Err(NfvError::Bandwidth(l1))
        );
        assert_eq!(s.free_bandwidth(), before);
    }

    #[test]
    fn shard_cannot_reach_inter_links() {
        let (g, p, mut s) = two_cluster_substrate();
        let Some(&inter) = p.inter_links.first() else { return };
        let shard = &mut s.shards[0];
        assert_eq!(shard.free_bw(inter), Kbps::ZERO);
        let path = single_link_path(&g, inter);
        assert_eq!(
            reserve_bandwidth(shard, &path, ReservationKey { request: 0, seq: 0 }, Kbps(1)),
            Err(NfvError::OutOfScope(inter))
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        #[derive(Debug, Clone)]
        enum Op {
            Place(usize, usize),
            Uninstall(usize, usize),
            Reserve(u32, usize, u64),
            Release(u32),
        }

        fn op() -> impl Strategy<Value = Op> {
            prop_oneof![
                (0usize..8, 0usize..6).prop_map(|(d, v)| Op::Place(d, v)),
                (0usize..8, 0usize..6).prop_map(|(d, v)| Op::Uninstall(d, v)),
                (0u32..20, 0usize..64, 1u64..400_000).prop_map(|(r, l, b)| Op::Reserve(r, l, b)),
                (0u32..20).prop_map(Op::Release),
            ]
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn accounting_never_drifts(ops in proptest::collection::vec(op(), 1..200)) {
                let c = default_catalog();
                let (g, _, mut s) = two_cluster_substrate();
                let nl = g.links().len();
                let mut seq = 0;
                for op in ops {
                    match op {
                        Op::Place(d, v) => {
                            let vnf = c.vnf(VnfKind::ALL[v]);
                            let dc = s.dc_mut(d);
                            let could = dc.can_place(vnf);
                            prop_assert_eq!(dc.place_vnf(vnf).is_ok(), could);
                        }
                        Op::Uninstall(d, v) => {
                            let dc = s.dc_mut(d);
                            if let Some(id) = dc.idle_instance(VnfKind::ALL[v], SimTime::ZERO) {
                                dc.uninstall_vnf(id, SimTime::ZERO, false).unwrap();
                            }
                        }
                        Op::Reserve(r, l, b) => {
                            let path = single_link_path(&g, l % nl);
                            seq += 1;
                            let _ = reserve_bandwidth(&mut s, &path, ReservationKey { request: r, seq }, Kbps(b));
                        }
                        Op::Release(r) => {
                            let all: Vec<LinkId> = (0..nl).collect();
                            release_bandwidth(&mut s, &all, r);
                        }
                    }
                    prop_assert!(s.verify().is_empty(), "{:?}", s.verify());
                }
                // Place then uninstall is the identity on accounting.
                let dc = s.dc_mut(0);
                let before = dc.free;
                let vnf = c.vnf(VnfKind::Nat);
                if let Ok(id) = dc.place_vnf(vnf) {
                    dc.uninstall_vnf(id, SimTime::ZERO, false).unwrap();
                }
                prop_assert_eq!(dc.free, before);
            }
        }
    }
}

//! SFC and VNF catalogs, request records and bundle generation.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::DelayLedger;
use crate::nfv_state::{InstanceId, ReservationKey};
use crate::topology::{ClusterId, DcId, LinkId, NetworkGraph};
use crate::units::{Kbps, SimTime};

pub type RequestId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VnfKind {
    #[serde(rename = "NAT")]
    Nat,
    #[serde(rename = "FW")]
    Fw,
    #[serde(rename = "VOC")]
    Voc,
    #[serde(rename = "TM")]
    Tm,
    #[serde(rename = "WO")]
    Wo,
    #[serde(rename = "IDPS")]
    Idps,
}

impl VnfKind {
    pub const ALL: [VnfKind; 6] = [
        VnfKind::Nat,
        VnfKind::Fw,
        VnfKind::Voc,
        VnfKind::Tm,
        VnfKind::Wo,
        VnfKind::Idps,
    ];
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            VnfKind::Nat => "NAT",
            VnfKind::Fw => "FW",
            VnfKind::Voc => "VOC",
            VnfKind::Tm => "TM",
            VnfKind::Wo => "WO",
            VnfKind::Idps => "IDPS",
        }
    }
}

impl fmt::Display for VnfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SfcKind {
    #[serde(rename = "CG")]
    Cg,
    #[serde(rename = "AR")]
    Ar,
    #[serde(rename = "VoIP")]
    Voip,
    #[serde(rename = "VS")]
    Vs,
    #[serde(rename = "MIoT")]
    Miot,
    #[serde(rename = "Ind4.0")]
    Ind40,
}

impl SfcKind {
    pub const ALL: [SfcKind; 6] = [
        SfcKind::Cg,
        SfcKind::Ar,
        SfcKind::Voip,
        SfcKind::Vs,
        SfcKind::Miot,
        SfcKind::Ind40,
    ];
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SfcKind::Cg => "CG",
            SfcKind::Ar => "AR",
            SfcKind::Voip => "VoIP",
            SfcKind::Vs => "VS",
            SfcKind::Miot => "MIoT",
            SfcKind::Ind40 => "Ind4.0",
        }
    }
}

impl fmt::Display for SfcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnfType {
    pub kind: VnfKind,
    pub vcpu: u32,
    pub ram_gb: u32,
    pub storage_gb: u32,
    pub proc_time: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthSpec {
    Fixed(Kbps),
    Range(Kbps, Kbps),
}

impl BandwidthSpec {
    pub fn max(self) -> Kbps {
        match self {
            BandwidthSpec::Fixed(b) => b,
            BandwidthSpec::Range(_, hi) => hi,
        }
    }

    pub fn contains(self, bw: Kbps) -> bool {
        match self {
            BandwidthSpec::Fixed(b) => bw == b,
            BandwidthSpec::Range(lo, hi) => lo <= bw && bw <= hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfcType {
    pub kind: SfcKind,
    pub chain: Vec<VnfKind>,
    pub bandwidth: BandwidthSpec,
    pub e2e_tolerance: SimTime,
    /// Inclusive bundle-size interval.
    pub bundle: (u32, u32),
}

#[derive(Debug, Error, PartialEq)]
pub enum CatalogError {
    #[error("VNF {0} must have positive resources and processing time")]
    NonPositiveVnf(VnfKind),
    #[error("SFC {0} has an empty chain")]
    EmptyChain(SfcKind),
    #[error("SFC {0} has a non-positive delay tolerance")]
    NonPositiveTolerance(SfcKind),
    #[error("SFC {0} has an empty bundle range")]
    EmptyBundle(SfcKind),
    #[error("SFC {0} has an invalid bandwidth")]
    BadBandwidth(SfcKind),
}

/// VNF and SFC catalogs, indexed by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub vnfs: Vec<VnfType>,
    pub sfcs: Vec<SfcType>,
}

impl Default for Catalog {
    fn default() -> Self {
        default_catalog()
    }
}

/// The six SFC types and six VNF types with the reference resource and
/// timing values.
pub fn default_catalog() -> Catalog {
    use VnfKind::*;
    let vnf = |kind, vcpu, ram_gb, storage_gb, hundredths_ms: u64| VnfType {
        kind,
        vcpu,
        ram_gb,
        storage_gb,
        proc_time: SimTime::from_nanos(hundredths_ms * 10_000),
    };
    let sfc = |kind, chain: &[VnfKind], bandwidth, tol_ms: f64, lo, hi| SfcType {
        kind,
        chain: chain.to_vec(),
        bandwidth,
        e2e_tolerance: SimTime::from_ms(tol_ms),
        bundle: (lo, hi),
    };
    let fixed = |mbps| BandwidthSpec::Fixed(Kbps::from_mbps(mbps));
    Catalog {
        vnfs: vec![
            vnf(Nat, 1, 4, 7, 6),
            vnf(Fw, 9, 5, 1, 3),
            vnf(Voc, 5, 11, 13, 11),
            vnf(Tm, 13, 7, 7, 7),
            vnf(Wo, 5, 2, 5, 8),
            vnf(Idps, 11, 15, 2, 2),
        ],
        sfcs: vec![
            sfc(SfcKind::Cg, &[Nat, Fw, Voc, Wo, Idps], fixed(4.0), 80.0, 40, 55),
            sfc(SfcKind::Ar, &[Nat, Fw, Tm, Voc, Idps], fixed(100.0), 10.0, 1, 4),
            sfc(SfcKind::Voip, &[Nat, Fw, Tm, Fw, Nat], fixed(0.064), 100.0, 100, 200),
            sfc(SfcKind::Vs, &[Nat, Fw, Tm, Voc, Idps], fixed(4.0), 100.0, 50, 100),
            sfc(
                SfcKind::Miot,
                &[Nat, Fw, Idps],
                BandwidthSpec::Range(Kbps::from_mbps(1.0), Kbps::from_mbps(50.0)),
                5.0,
                10,
                15,
            ),
            sfc(SfcKind::Ind40, &[Nat, Fw], fixed(70.0), 8.0, 1, 4),
        ],
    }
}

impl Catalog {
    pub fn vnf(&self, kind: VnfKind) -> &VnfType {
        &self.vnfs[kind.index()]
    }

    pub fn sfc(&self, kind: SfcKind) -> &SfcType {
        &self.sfcs[kind.index()]
    }

    pub fn max_tolerance(&self) -> SimTime {
        self.sfcs.iter().map(|s| s.e2e_tolerance).max().unwrap()
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        assert_eq!(self.vnfs.len(), VnfKind::COUNT);
        assert_eq!(self.sfcs.len(), SfcKind::COUNT);
        for v in &self.vnfs {
            if v.vcpu == 0 || v.ram_gb == 0 || v.storage_gb == 0 || v.proc_time == SimTime::ZERO {
                return Err(CatalogError::NonPositiveVnf(v.kind));
            }
        }
        for s in &self.sfcs {
            if s.chain.is_empty() {
                return Err(CatalogError::EmptyChain(s.kind));
            }
            if s.e2e_tolerance == SimTime::ZERO {
                return Err(CatalogError::NonPositiveTolerance(s.kind));
            }
            if s.bundle.0 > s.bundle.1 {
                return Err(CatalogError::EmptyBundle(s.kind));
            }
            let ok = match s.bandwidth {
                BandwidthSpec::Fixed(b) => b > Kbps::ZERO,
                BandwidthSpec::Range(lo, hi) => lo > Kbps::ZERO && lo <= hi,
            };
            if !ok {
                return Err(CatalogError::BadBandwidth(s.kind));
            }
        }
        Ok(())
    }

    /// Sum of processing times of `chain[from..]`.
    pub fn remaining_work(&self, chain: &[VnfKind], from: usize) -> SimTime {
        chain[from..].iter().map(|&v| self.vnf(v).proc_time).sum()
    }

    pub fn apply(&mut self, overrides: &CatalogOverrides) -> Result<(), CatalogError> {
        for (kind, o) in &overrides.vnf {
            let v = &mut self.vnfs[kind.index()];
            if let Some(x) = o.vcpu {
                v.vcpu = x;
            }
            if let Some(x) = o.ram_gb {
                v.ram_gb = x;
            }
            if let Some(x) = o.storage_gb {
                v.storage_gb = x;
            }
            if let Some(ms) = o.proc_time_ms {
                if !(ms > 0.0) {
                    return Err(CatalogError::NonPositiveVnf(*kind));
                }
                v.proc_time = SimTime::from_ms(ms);
            }
        }
        for (kind, o) in &overrides.sfc {
            let s = &mut self.sfcs[kind.index()];
            if let Some(chain) = &o.chain {
                s.chain = chain.clone();
            }
            if let Some(ms) = o.e2e_ms {
                if !(ms > 0.0) {
                    return Err(CatalogError::NonPositiveTolerance(*kind));
                }
                s.e2e_tolerance = SimTime::from_ms(ms);
            }
            if let Some(mbps) = o.bandwidth_mbps {
                if !(mbps > 0.0) {
                    return Err(CatalogError::BadBandwidth(*kind));
                }
                s.bandwidth = BandwidthSpec::Fixed(Kbps::from_mbps(mbps));
            }
            if let Some([lo, hi]) = o.bandwidth_range_mbps {
                if !(lo > 0.0 && lo <= hi) {
                    return Err(CatalogError::BadBandwidth(*kind));
                }
                s.bandwidth = BandwidthSpec::Range(Kbps::from_mbps(lo), Kbps::from_mbps(hi));
            }
            if let Some([lo, hi]) = o.bundle {
                s.bundle = (lo, hi);
            }
        }
        self.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VnfOverride {
    pub vcpu: Option<u32>,
    pub ram_gb: Option<u32>,
    pub storage_gb: Option<u32>,
    pub proc_time_ms: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfcOverride {
    pub chain: Option<Vec<VnfKind>>,
    pub e2e_ms: Option<f64>,
    pub bandwidth_mbps: Option<f64>,
    pub bandwidth_range_mbps: Option<[f64; 2]>,
    pub bundle: Option<[u32; 2]>,
}

/// Catalog overrides accepted from the configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogOverrides {
    pub vnf: BTreeMap<VnfKind, VnfOverride>,
    pub sfc: BTreeMap<SfcKind, SfcOverride>,
}

impl CatalogOverrides {
    pub fn is_empty(&self) -> bool {
        self.vnf.is_empty() && self.sfc.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestStatus {
    Pending,
    InService,
    Accepted,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    /// The tolerance was exceeded, or a lower bound on the remaining work
    /// already exceeds it.
    Deadline,
    /// No cluster could host the next VNF.
    NoHost,
    /// Delivered after the tolerance elapsed.
    Late,
}

/// Where chain position `k` ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub dc: DcId,
    pub instance: InstanceId,
    pub start: SimTime,
    pub finish: SimTime,
}

/// Reference to a recorded transition: `(cluster, index in that agent's log)`.
pub type TransitionRef = (ClusterId, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfcRequest {
    pub id: RequestId,
    pub kind: SfcKind,
    pub chain: Vec<VnfKind>,
    pub tolerance: SimTime,
    pub bandwidth: Kbps,
    pub source_dc: DcId,
    pub dest_dc: DcId,
    pub arrival: SimTime,
    pub next_vnf_index: usize,
    pub placements: Vec<Placement>,
    pub ledger: DelayLedger,
    pub status: RequestStatus,
    pub drop_reason: Option<DropReason>,
    /// DC holding the request's data (source, or the last VNF's host).
    pub location: DcId,
    /// When the request becomes ready for its next step.
    pub ready_at: SimTime,
    /// Time the request reached a terminal status.
    pub closed_at: Option<SimTime>,
    #[serde(skip)]
    pub final_alloc: Option<TransitionRef>,
    #[serde(skip)]
    pub transfer_seq: u32,
    /// Reservations held for the whole request lifetime.
    #[serde(skip)]
    pub held: Vec<(LinkId, ReservationKey)>,
}

impl SfcRequest {
    pub fn new(id: RequestId, sfc: &SfcType, bandwidth: Kbps, source: DcId, dest: DcId, arrival: SimTime) -> Self {
        SfcRequest {
            id,
            kind: sfc.kind,
            chain: sfc.chain.clone(),
            tolerance: sfc.e2e_tolerance,
            bandwidth,
            source_dc: source,
            dest_dc: dest,
            arrival,
            next_vnf_index: 0,
            placements: Vec::new(),
            ledger: DelayLedger::default(),
            status: RequestStatus::Pending,
            drop_reason: None,
            location: source,
            ready_at: arrival,
            closed_at: None,
            final_alloc: None,
            transfer_seq: 0,
            held: Vec::new(),
        }
    }

    pub fn accrued_delay(&self) -> SimTime {
        self.ledger.accrued()
    }

    pub fn chain_len(&self) -> usize {
        self.chain.len()
    }

    pub fn chain_done(&self) -> bool {
        self.next_vnf_index == self.chain.len()
    }

    pub fn next_vnf(&self) -> Option<VnfKind> {
        self.chain.get(self.next_vnf_index).copied()
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.status, RequestStatus::Accepted | RequestStatus::Dropped)
    }

    /// Ready for its next VNF at `now`.
    pub fn is_pending_at(&self, now: SimTime) -> bool {
        !self.is_terminal() && !self.chain_done() && self.ready_at <= now
    }

    pub fn deadline(&self) -> SimTime {
        self.arrival + self.tolerance
    }

    pub fn record(&self) -> WorkloadRecord {
        WorkloadRecord {
            id: self.id,
            sfc_type: self.kind,
            bandwidth_kbps: self.bandwidth.0,
            source_dc: self.source_dc,
            dest_dc: self.dest_dc,
            arrival_ns: self.arrival.nanos(),
        }
    }
}

/// Uniform integer bundle size scaled and rounded.
fn bundle_count(rng: &mut impl Rng, (lo, hi): (u32, u32), scale: f64) -> usize {
    let base = rng.gen_range(lo..=hi);
    (scale * base as f64).round() as usize
}

/// Generates one episode's requests: per SFC type, `round(scale * U{bundle})`
/// requests with distinct uniformly drawn source and destination DCs, all
/// arriving at t = 0.
pub fn generate_bundles(
    catalog: &Catalog,
    graph: &NetworkGraph,
    scale: f64,
    rng: &mut impl Rng,
) -> Vec<SfcRequest> {
    assert!(scale > 0.0, "scale must be positive");
    let n = graph.dc_count();
    let mut out = Vec::new();
    for sfc in &catalog.sfcs {
        let count = bundle_count(rng, sfc.bundle, scale);
        for _ in 0..count {
            let bandwidth = match sfc.bandwidth {
                BandwidthSpec::Fixed(b) => b,
                BandwidthSpec::Range(lo, hi) => Kbps(rng.gen_range(lo.0..=hi.0)),
            };
            let source = rng.gen_range(0..n);
            let mut dest = rng.gen_range(0..n - 1);
            if dest >= source {
                dest += 1;
            }
            let id = out.len() as RequestId;
            out.push(SfcRequest::new(id, sfc, bandwidth, source, dest, SimTime::ZERO));
        }
    }
    out
}

/// One line of a workload replay file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadRecord {
    pub id: RequestId,
    pub sfc_type: SfcKind,
    pub bandwidth_kbps: u64,
    pub source_dc: DcId,
    pub dest_dc: DcId,
    pub arrival_ns: u64,
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("record {id}: {reason}")]
    Invalid { id: RequestId, reason: String },
}

pub fn write_workload(mut w: impl Write, requests: &[SfcRequest]) -> std::io::Result<()> {
    for r in requests {
        serde_json::to_writer(&mut w, &r.record())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a workload file, validating each record against the catalog and graph.
pub fn read_workload(
    r: impl BufRead,
    catalog: &Catalog,
    graph: &NetworkGraph,
) -> Result<Vec<SfcRequest>, WorkloadError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: WorkloadRecord =
            serde_json::from_str(&line).map_err(|source| WorkloadError::Parse { line: i + 1, source })?;
        let invalid = |reason: &str| WorkloadError::Invalid {
            id: rec.id,
            reason: reason.to_string(),
        };
        if rec.id as usize != out.len() {
            return Err(invalid("ids must be dense and in order"));
        }
        let n = graph.dc_count();
        if rec.source_dc >= n || rec.dest_dc >= n || rec.source_dc == rec.dest_dc {
            return Err(invalid("bad source/destination"));
        }
        let sfc = catalog.sfc(rec.sfc_type);
        if !sfc.bandwidth.contains(Kbps(rec.bandwidth_kbps)) {
            return Err(invalid("bandwidth outside the catalog range"));
        }
        out.push(SfcRequest::new(
            rec.id,
            sfc,
            Kbps(rec.bandwidth_kbps),
            rec.source_dc,
            rec.dest_dc,
            SimTime::from_nanos(rec.arrival_ns),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_network, TopologyConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_catalog_values() {
        let c = default_catalog();
        c.validate().unwrap();
        let cg = c.sfc(SfcKind::Cg);
        use VnfKind::*;
        assert_eq!(cg.chain, vec![Nat, Fw, Voc, Wo, Idps]);
        assert_eq!(cg.bandwidth, BandwidthSpec::Fixed(Kbps(4_000)));
        assert_eq!(cg.e2e_tolerance, SimTime::from_ms(80.0));
        assert_eq!(cg.bundle, (40, 55));

        let miot = c.sfc(SfcKind::Miot);
        assert_eq!(miot.chain, vec![Nat, Fw, Idps]);
        assert_eq!(miot.bandwidth, BandwidthSpec::Range(Kbps(1_000), Kbps(50_000)));
        assert_eq!(miot.e2e_tolerance, SimTime::from_ms(5.0));
        assert_eq!(miot.bundle, (10, 15));

        let nat = c.vnf(Nat);
        assert_eq!((nat.vcpu, nat.ram_gb, nat.storage_gb), (1, 4, 7));
        assert_eq!(nat.proc_time, SimTime::from_ms(0.06));
        let idps = c.vnf(Idps);
        assert_eq!((idps.vcpu, idps.ram_gb, idps.storage_gb), (11, 15, 2));
        assert_eq!(idps.proc_time, SimTime::from_ms(0.02));
        assert_eq!(c.vnf(Fw).proc_time, SimTime::from_ms(0.03));
        assert_eq!(c.sfc(SfcKind::Voip).bandwidth, BandwidthSpec::Fixed(Kbps(64)));
        assert_eq!(c.max_tolerance(), SimTime::from_ms(100.0));
    }

    fn graph(n: usize) -> NetworkGraph {
        build_network(&TopologyConfig::with_dc_count(n), 11).unwrap()
    }

    #[test]
    fn bundle_sizes_within_scaled_ranges() {
        let c = default_catalog();
        let g = graph(10);
        for seed in 0..30 {
            for scale in [1.0, 2.0, 1.5] {
                let reqs = generate_bundles(&c, &g, scale, &mut ChaCha8Rng::seed_from_u64(seed));
                for sfc in &c.sfcs {
                    let count = reqs.iter().filter(|r| r.kind == sfc.kind).count() as f64;
                    let lo = (scale * sfc.bundle.0 as f64).round();
                    let hi = (scale * sfc.bundle.1 as f64).round();
                    assert!(count >= lo && count <= hi, "{} {count} not in [{lo},{hi}]", sfc.kind);
                }
            }
        }
    }

    #[test]
    fn voip_and_doubled_cg_examples() {
        let c = default_catalog();
        let g = graph(10);
        let reqs = generate_bundles(&c, &g, 1.0, &mut ChaCha8Rng::seed_from_u64(4));
        let voip = reqs.iter().filter(|r| r.kind == SfcKind::Voip).count();
        assert!((100..=200).contains(&voip));
        let reqs = generate_bundles(&c, &g, 2.0, &mut ChaCha8Rng::seed_from_u64(4));
        let cg = reqs.iter().filter(|r| r.kind == SfcKind::Cg).count();
        assert!((80..=110).contains(&cg));
    }

    #[test]
    fn two_dc_graph_uses_both_endpoints() {
        let c = default_catalog();
        let g = graph(2);
        let reqs = generate_bundles(&c, &g, 1.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(!reqs.is_empty());
        for r in &reqs {
            assert_ne!(r.source_dc, r.dest_dc);
            assert!(r.source_dc < 2 && r.dest_dc < 2);
        }
    }

    #[test]
    fn fields_lie_within_catalog_ranges() {
        let c = default_catalog();
        let g = graph(15);
        let reqs = generate_bundles(&c, &g, 1.0, &mut ChaCha8Rng::seed_from_u64(9));
        for (i, r) in reqs.iter().enumerate() {
            let sfc = c.sfc(r.kind);
            assert_eq!(r.id as usize, i);
            assert!(sfc.bandwidth.contains(r.bandwidth));
            assert_eq!(r.chain, sfc.chain);
            assert_eq!(r.tolerance, sfc.e2e_tolerance);
            assert_eq!(r.status, RequestStatus::Pending);
            assert_eq!(r.arrival, SimTime::ZERO);
        }
        assert!(reqs.iter().any(|r| r.kind == SfcKind::Miot && r.bandwidth != Kbps(1_000)));
    }

    #[test]
    fn workload_file_round_trip() {
        let c = default_catalog();
        let g = graph(8);
        let reqs = generate_bundles(&c, &g, 1.0, &mut ChaCha8Rng::seed_from_u64(2));
        let mut buf = Vec::new();
        write_workload(&mut buf, &reqs).unwrap();
        let back = read_workload(&buf[..], &c, &g).unwrap();
        assert_eq!(back, reqs);
        let bad = b"{\"id\":0,\"sfc_type\":\"CG\",\"bandwidth_kbps\":5,\"source_dc\":0,\"dest_dc\":1,\"arrival_ns\":0}\n";
        assert!(matches!(read_workload(&bad[..], &c, &g), Err(WorkloadError::Invalid { .. })));
    }

    #[test]
    fn overrides_apply_and_validate() {
        let mut c = default_catalog();
        let mut o = CatalogOverrides::default();
        o.vnf.insert(VnfKind::Nat, VnfOverride { vcpu: Some(2), ..Default::default() });
        o.sfc.insert(SfcKind::Ar, SfcOverride { e2e_ms: Some(12.0), ..Default::default() });
        c.apply(&o).unwrap();
        assert_eq!(c.vnf(VnfKind::Nat).vcpu, 2);
        assert_eq!(c.sfc(SfcKind::Ar).e2e_tolerance, SimTime::from_ms(12.0));
        let mut o = CatalogOverrides::default();
        o.sfc.insert(SfcKind::Cg, SfcOverride { chain: Some(vec![]), ..Default::default() });
        assert_eq!(c.apply(&o), Err(CatalogError::EmptyChain(SfcKind::Cg)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn same_seed_same_workload(seed in 0u64..10_000, scale in 0.25f64..2.5) {
                let c = default_catalog();
                let g = graph(6);
                let a = generate_bundles(&c, &g, scale, &mut ChaCha8Rng::seed_from_u64(seed));
                let b = generate_bundles(&c, &g, scale, &mut ChaCha8Rng::seed_from_u64(seed));
                let mut ba = Vec::new();
                let mut bb = Vec::new();
                write_workload(&mut ba, &a).unwrap();
                write_workload(&mut bb, &b).unwrap();
                prop_assert_eq!(ba, bb);
            }
        }
    }
}

//! Fixed-length state encoding, independent of cluster size.
//!
//! Per SFC type, ten features summarise a set of pending requests:
//! count over the bundle maximum, minimum remaining deadline over the largest
//! tolerance, maximum bandwidth over 100 Mbps, mean chain completion, and the
//! distribution of the next VNF over the six VNF types.

use serde::{Deserialize, Serialize};

use crate::nfv_state::{DcRuntime, Resources};
use crate::units::{Kbps, SimTime};
use crate::workload::{Catalog, SfcKind, SfcRequest, VnfKind};

pub const SFC_FEATURES: usize = 4 + VnfKind::COUNT;
pub const INPUT_A: usize = SfcKind::COUNT * SFC_FEATURES;
pub const INPUT_B: usize = 2 * VnfKind::COUNT + 3;
pub const INPUT_C: usize = INPUT_A + 2;
pub const INPUT_DIMS: [usize; 3] = [INPUT_A, INPUT_B, INPUT_C];
pub const BANDWIDTH_SCALE: Kbps = Kbps(100_000);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEncoding {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl StateEncoding {
    pub fn zeros() -> Self {
        StateEncoding {
            a: vec![0.0; INPUT_A],
            b: vec![0.0; INPUT_B],
            c: vec![0.0; INPUT_C],
        }
    }

    pub fn pack(&self) -> Box<[f32]> {
        self.a
            .iter()
            .chain(&self.b)
            .chain(&self.c)
            .map(|&x| x as f32)
            .collect()
    }

    pub fn unpack(packed: &[f32]) -> Self {
        assert_eq!(packed.len(), INPUT_A + INPUT_B + INPUT_C);
        let f = |r: std::ops::Range<usize>| packed[r].iter().map(|&x| x as f64).collect();
        StateEncoding {
            a: f(0..INPUT_A),
            b: f(INPUT_A..INPUT_A + INPUT_B),
            c: f(INPUT_A + INPUT_B..INPUT_A + INPUT_B + INPUT_C),
        }
    }
}

fn ratio(x: u64, scale: u64) -> f64 {
    (x as f64 / scale as f64).clamp(0.0, 1.0)
}

/// Writes the 60 SFC summary features of `requests` into `out`.
pub fn sfc_summary<'a>(
    catalog: &Catalog,
    now: SimTime,
    requests: impl IntoIterator<Item = &'a SfcRequest>,
    out: &mut [f64],
) {
    assert_eq!(out.len(), INPUT_A);
    out.fill(0.0);
    let max_tol = catalog.max_tolerance().nanos();
    let mut count = [0u64; SfcKind::COUNT];
    let mut min_slack = [u64::MAX; SfcKind::COUNT];
    let mut progress = [0.0f64; SfcKind::COUNT];
    for r in requests {
        let k = r.kind.index();
        let f = &mut out[k * SFC_FEATURES..(k + 1) * SFC_FEATURES];
        count[k] += 1;
        let elapsed = now.max(r.ready_at) - r.arrival;
        let slack = r.tolerance.saturating_sub(elapsed).nanos();
        min_slack[k] = min_slack[k].min(slack);
        f[2] = f[2].max(ratio(r.bandwidth.0, BANDWIDTH_SCALE.0));
        progress[k] += r.next_vnf_index as f64 / r.chain_len() as f64;
        if let Some(v) = r.next_vnf() {
            f[4 + v.index()] += 1.0;
        }
    }
    for (k, sfc) in catalog.sfcs.iter().enumerate() {
        let n = count[k];
        if n == 0 {
            continue;
        }
        let f = &mut out[k * SFC_FEATURES..(k + 1) * SFC_FEATURES];
        f[0] = ratio(n, sfc.bundle.1.max(1) as u64);
        f[1] = ratio(min_slack[k], max_tol);
        f[3] = progress[k] / n as f64;
        for h in &mut f[4..] {
            *h /= n as f64;
        }
    }
}

/// Instances of `vnf` that would fit on an empty `dc`.
fn slot_cap(dc: &DcRuntime, vnf: &Resources) -> usize {
    let c = dc.capacity;
    [
        c.vcpu / vnf.vcpu.max(1),
        c.ram_gb / vnf.ram_gb.max(1),
        c.storage_gb / vnf.storage_gb.max(1),
    ]
    .into_iter()
    .min()
    .unwrap()
    .max(1) as usize
}

/// Resource features of one DC: per VNF type installed and idle counts over
/// the DC's slot capacity for that type, then free vCPU, RAM and storage
/// fractions.
pub fn dc_summary(catalog: &Catalog, now: SimTime, dc: &DcRuntime, out: &mut [f64]) {
    assert_eq!(out.len(), INPUT_B);
    for v in &catalog.vnfs {
        let cap = slot_cap(dc, &Resources::of(v)) as f64;
        let i = v.kind.index();
        out[2 * i] = (dc.count(v.kind) as f64 / cap).min(1.0);
        out[2 * i + 1] = (dc.idle_count(v.kind, now) as f64 / cap).min(1.0);
    }
    let (c, f) = (dc.capacity, dc.free);
    out[12] = f.vcpu as f64 / c.vcpu as f64;
    out[13] = f.ram_gb as f64 / c.ram_gb as f64;
    out[14] = f.storage_gb as f64 / c.storage_gb as f64;
}

/// Builds the three inputs for a decision at `dc`.
///
/// `at_dc` are the pending requests located at the DC, `in_cluster` those of
/// the whole cluster. `transfer_pending` and `outside_fraction` carry the
/// general agent's view: whether this cluster has requests awaiting
/// reassignment, and the share of queued requests bound outside the cluster.
pub fn encode_state<'a>(
    catalog: &Catalog,
    now: SimTime,
    dc: &DcRuntime,
    at_dc: impl IntoIterator<Item = &'a SfcRequest>,
    in_cluster: impl IntoIterator<Item = &'a SfcRequest>,
    transfer_pending: bool,
    outside_fraction: f64,
) -> StateEncoding {
    let mut s = StateEncoding::zeros();
    sfc_summary(catalog, now, at_dc, &mut s.a);
    dc_summary(catalog, now, dc, &mut s.b);
    sfc_summary(catalog, now, in_cluster, &mut s.c[..INPUT_A]);
    s.c[INPUT_A] = if transfer_pending { 1.0 } else { 0.0 };
    s.c[INPUT_A + 1] = outside_fraction.clamp(0.0, 1.0);
    s
}

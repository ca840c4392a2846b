//! Worst-case recirculation load of a scanning stateful firewall.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RecircParams {
    /// Table entries; a power of two.
    pub entries: u64,
    /// Seconds between full scans.
    pub interval_s: f64,
    /// New flows per second.
    pub flows_per_s: f64,
    /// Packets per second the pipeline processes.
    pub pipeline_rate_pps: f64,
}

impl RecircParams {
    pub fn new(entries: u64, interval_s: f64, flows_per_s: f64) -> Self {
        RecircParams {
            entries,
            interval_s,
            flows_per_s,
            pipeline_rate_pps: 1e9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RecircRate {
    pub rate_pps: f64,
    /// Fraction of pipeline capacity.
    pub utilization: f64,
    /// Only with the naive minimum packet size model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_pkt_bytes: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum CapacityError {
    #[error("entries must be a positive power of two, got {0}")]
    Entries(u64),
    #[error("{0} must be positive and finite")]
    NotPositive(&'static str),
    #[error("flow rate must be non-negative and finite")]
    Flows,
}

/// `N / i + f * log2(N)` packets per second.
pub fn recirc_rate(p: &RecircParams) -> Result<RecircRate, CapacityError> {
    if p.entries == 0 || !p.entries.is_power_of_two() {
        return Err(CapacityError::Entries(p.entries));
    }
    if !(p.interval_s > 0.0 && p.interval_s.is_finite()) {
        return Err(CapacityError::NotPositive("interval"));
    }
    if !(p.pipeline_rate_pps > 0.0 && p.pipeline_rate_pps.is_finite()) {
        return Err(CapacityError::NotPositive("pipeline rate"));
    }
    if !(p.flows_per_s >= 0.0 && p.flows_per_s.is_finite()) {
        return Err(CapacityError::Flows);
    }
    let n = p.entries as f64;
    let rate_pps = n / p.interval_s + p.flows_per_s * n.log2();
    Ok(RecircRate {
        rate_pps,
        utilization: rate_pps / p.pipeline_rate_pps,
        min_pkt_bytes: None,
    })
}

/// Smallest average packet size at which a 1 Tb/s pipeline still has room
/// for the recirculated packets, assuming 125-byte slots.
pub fn naive_min_pkt_bytes(r: &RecircRate, p: &RecircParams) -> f64 {
    125.0 * p.pipeline_rate_pps / (p.pipeline_rate_pps - r.rate_pps)
}

//! Throughput and in-order delay measurement over simulation traces.
//!
//! Throughput is counted network-wide in information packets per slot over
//! the sender-active span: the clock runs from the first transmission to the
//! last in-order delivery minus the forward propagation, so a loss-free path
//! measures exactly one packet per path per slot. The in-order delay of a
//! packet runs from its first transmission to the slot its in-order decoding
//! completes at the receiver; the acknowledgment trip is not counted, the
//! forward propagation is.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MeasureError {
    #[error("trace incomplete: {delivered} of {expected} packets delivered in order")]
    Incomplete { delivered: u64, expected: u64 },
    #[error("no runs to aggregate")]
    Empty,
}

/// Per-packet delivery bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub raw_index: u64,
    pub first_send_slot: u64,
    pub in_order_slot: u64,
}

impl DeliveryRecord {
    pub fn delay(&self) -> u64 {
        self.in_order_slot - self.first_send_slot
    }
}

/// Everything one simulation run leaves behind.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub records: Vec<DeliveryRecord>,
    pub expected: u64,
    pub paths: usize,
    /// Forward propagation removed from the throughput clock.
    pub forward_latency: u64,
    /// Fraction of slots without any feedback arrival at the sender.
    pub lambda: f64,
    pub sent_packets: u64,
    pub fbfec_packets: u64,
    pub fec_packets: u64,
    pub size_limit_packets: u64,
    /// Packets that physically reached the receiver.
    pub receiver_arrivals: u64,
    /// Arrivals that increased the decoder's rank.
    pub receiver_innovative: u64,
    /// Set when the run hit its slot cap before completing.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct RunMetrics {
    /// Information packets per slot, network level (at most one per path).
    pub normalized_throughput: f64,
    pub mean_delay: f64,
    pub max_delay: u64,
    pub delivered: u64,
    /// Sender-active slots backing the throughput figure.
    pub slots: u64,
    pub lambda: f64,
}

/// Measure one complete trace.
pub fn measure(trace: &RunTrace) -> Result<RunMetrics, MeasureError> {
    if trace.truncated || (trace.records.len() as u64) < trace.expected {
        return Err(MeasureError::Incomplete {
            delivered: trace.records.len() as u64,
            expected: trace.expected,
        });
    }
    let first_send = trace.records.iter().map(|r| r.first_send_slot).min().unwrap_or(0);
    let last_in_order = trace.records.iter().map(|r| r.in_order_slot).max().unwrap_or(0);
    let slots = (last_in_order - trace.forward_latency).saturating_sub(first_send) + 1;
    let delays: Vec<u64> = trace.records.iter().map(|r| r.delay()).collect();
    let mean_delay = delays.iter().sum::<u64>() as f64 / delays.len().max(1) as f64;
    let max_delay = delays.iter().copied().max().unwrap_or(0);
    Ok(RunMetrics {
        normalized_throughput: trace.expected as f64 / slots as f64,
        mean_delay,
        max_delay,
        delivered: trace.expected,
        slots,
        lambda: trace.lambda,
    })
}

/// Combine independent per-path protocol instances run side by side: their
/// throughputs (each over its own active span) add up, their packet delays
/// pool together.
pub fn measure_instances(traces: &[RunTrace]) -> Result<RunMetrics, MeasureError> {
    if traces.is_empty() {
        return Err(MeasureError::Empty);
    }
    let mut throughput = 0.0;
    let mut delays: Vec<u64> = Vec::new();
    let mut delivered = 0;
    let mut slots_max = 0;
    let mut lambda_acc = 0.0;
    for t in traces {
        let m = measure(t)?;
        throughput += m.normalized_throughput;
        delivered += m.delivered;
        slots_max = slots_max.max(m.slots);
        lambda_acc += m.lambda;
        delays.extend(t.records.iter().map(|r| r.delay()));
    }
    let mean_delay = delays.iter().sum::<u64>() as f64 / delays.len().max(1) as f64;
    let max_delay = delays.iter().copied().max().unwrap_or(0);
    Ok(RunMetrics {
        normalized_throughput: throughput,
        mean_delay,
        max_delay,
        delivered,
        slots: slots_max,
        lambda: lambda_acc / traces.len() as f64,
    })
}

/// Mean and sample standard deviation of one metric across iterations.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

fn aggregate_values(values: impl Iterator<Item = f64> + Clone) -> Aggregate {
    let n = values.clone().count();
    let mean = values.clone().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Aggregate { mean, std }
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct MetricsSummary {
    pub iterations: usize,
    pub throughput: Aggregate,
    pub mean_delay: Aggregate,
    pub max_delay: Aggregate,
    pub lambda_mean: f64,
}

/// Aggregate per-iteration metrics into mean and sample deviation.
pub fn aggregate(runs: &[RunMetrics]) -> Result<MetricsSummary, MeasureError> {
    if runs.is_empty() {
        return Err(MeasureError::Empty);
    }
    Ok(MetricsSummary {
        iterations: runs.len(),
        throughput: aggregate_values(runs.iter().map(|r| r.normalized_throughput)),
        mean_delay: aggregate_values(runs.iter().map(|r| r.mean_delay)),
        max_delay: aggregate_values(runs.iter().map(|r| r.max_delay as f64)),
        lambda_mean: runs.iter().map(|r| r.lambda).sum::<f64>() / runs.len() as f64,
    })
}

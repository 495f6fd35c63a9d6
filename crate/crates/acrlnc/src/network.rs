//! Slotted network model: layered topology with i.i.d. per-link erasures,
//! forward propagation of half the round trip, and feedback after one full
//! round trip (hop-by-hop variants scale both by the hop count).

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("need at least one hop and one path")]
    Empty,
    #[error("erasure matrix must be rectangular")]
    Ragged,
    #[error("erasure probability out of [0,1] at path {path}, hop {hop}")]
    BadErasure { path: usize, hop: usize },
    #[error("rtt must be a positive even number of slots, got {0}")]
    OddRtt(u64),
    #[error("rtt {rtt} does not split evenly over {hops} hops (needs a multiple of {needed})")]
    IndivisibleRtt { rtt: u64, hops: usize, needed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    #[default]
    EndToEnd,
    HopByHop,
}

/// A layered erasure network: `hops` stages of `paths` parallel links.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    eps: Vec<Vec<f64>>, // eps[path][hop]
    rtt_slots: u64,
    feedback_mode: FeedbackMode,
}

impl Topology {
    pub fn new(
        eps: Vec<Vec<f64>>,
        rtt_slots: u64,
        feedback_mode: FeedbackMode,
    ) -> Result<Topology, TopologyError> {
        let paths = eps.len();
        let hops = eps.first().map_or(0, |r| r.len());
        if paths == 0 || hops == 0 {
            return Err(TopologyError::Empty);
        }
        if eps.iter().any(|r| r.len() != hops) {
            return Err(TopologyError::Ragged);
        }
        for (p, row) in eps.iter().enumerate() {
            for (h, &e) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&e) {
                    return Err(TopologyError::BadErasure { path: p, hop: h });
                }
            }
        }
        if rtt_slots == 0 || !rtt_slots.is_multiple_of(2) {
            return Err(TopologyError::OddRtt(rtt_slots));
        }
        let needed = 2 * hops as u64;
        if !rtt_slots.is_multiple_of(needed) {
            return Err(TopologyError::IndivisibleRtt { rtt: rtt_slots, hops, needed });
        }
        Ok(Topology { eps, rtt_slots, feedback_mode })
    }

    pub fn single_hop(path_eps: Vec<f64>, rtt_slots: u64) -> Result<Topology, TopologyError> {
        let eps = path_eps.into_iter().map(|e| vec![e]).collect();
        Topology::new(eps, rtt_slots, FeedbackMode::EndToEnd)
    }

    pub fn paths(&self) -> usize {
        self.eps.len()
    }

    pub fn hops(&self) -> usize {
        self.eps[0].len()
    }

    pub fn rtt(&self) -> u64 {
        self.rtt_slots
    }

    pub fn feedback_mode(&self) -> FeedbackMode {
        self.feedback_mode
    }

    pub fn erasure(&self, path: usize, hop: usize) -> f64 {
        self.eps[path][hop]
    }

    /// rates[path][hop] = 1 - eps
    pub fn rates(&self) -> Vec<Vec<f64>> {
        self.eps
            .iter()
            .map(|row| row.iter().map(|e| 1.0 - e).collect())
            .collect()
    }

    pub fn eps_matrix(&self) -> &[Vec<f64>] {
        &self.eps
    }

    /// One-way latency across a single hop.
    pub fn hop_latency(&self) -> u64 {
        self.rtt_slots / (2 * self.hops() as u64)
    }

    /// One-way latency sender to receiver.
    pub fn forward_latency(&self) -> u64 {
        self.rtt_slots / 2
    }

    /// Round trip of one hop in hop-by-hop operation.
    pub fn hop_rtt(&self) -> u64 {
        self.rtt_slots / self.hops() as u64
    }
}

/// One Bernoulli erasure draw.
pub fn sample_erasure(rng: &mut impl Rng, eps: f64) -> bool {
    if eps <= 0.0 {
        false
    } else if eps >= 1.0 {
        true
    } else {
        rng.gen::<f64>() < eps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Ack,
    Nack,
}

/// Receiver state snapshot piggybacked on every feedback message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DofReport {
    pub decoded_prefix: u64,
    pub rank: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackMsg {
    pub about_seq: u64,
    /// Did this transmission add a degree of freedom end to end? Feeds the
    /// sender's missing/added DoF sets.
    pub verdict: Verdict,
    /// Did a packet physically reach the receiver on this path? Feeds the
    /// erasure-rate estimate (identical to the verdict on a single hop up to
    /// rare coefficient collisions; recoding nodes can make them differ).
    pub delivered: bool,
    pub path: usize,
    pub deliver_slot: u64,
    pub report: DofReport,
}

/// Future events keyed by delivery slot.
#[derive(Debug)]
pub struct SlotQueue<T> {
    items: BTreeMap<u64, Vec<T>>,
}

impl<T> Default for SlotQueue<T> {
    fn default() -> Self {
        SlotQueue { items: BTreeMap::new() }
    }
}

impl<T> SlotQueue<T> {
    pub fn new() -> SlotQueue<T> {
        SlotQueue::default()
    }

    pub fn push(&mut self, slot: u64, item: T) {
        self.items.entry(slot).or_default().push(item);
    }

    /// Everything due exactly at `slot`.
    pub fn take(&mut self, slot: u64) -> Vec<T> {
        self.items.remove(&slot).unwrap_or_default()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn next_slot(&self) -> Option<u64> {
        self.items.keys().next().copied()
    }
}

/// Delivery-frequency estimate of one link or path: observed rate with an
/// uninformative 1/2 prior before the first observation. An optional sliding
/// horizon serves non-stationary extensions.
#[derive(Debug, Clone)]
pub struct RateEstimator {
    delivered: u64,
    total: u64,
    horizon: Option<usize>,
    window: std::collections::VecDeque<bool>,
}

impl RateEstimator {
    pub fn new(horizon: Option<usize>) -> RateEstimator {
        RateEstimator {
            delivered: 0,
            total: 0,
            horizon,
            window: std::collections::VecDeque::new(),
        }
    }

    pub fn record(&mut self, delivered: bool) {
        if let Some(h) = self.horizon {
            self.window.push_back(delivered);
            if self.window.len() > h {
                let old = self.window.pop_front().unwrap();
                if old {
                    self.delivered -= 1;
                }
                self.total -= 1;
            }
        }
        if delivered {
            self.delivered += 1;
        }
        self.total += 1;
    }

    /// Estimated delivery rate r = 1 - eps.
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.5
        } else {
            self.delivered as f64 / self.total as f64
        }
    }

    pub fn eps(&self) -> f64 {
        1.0 - self.rate()
    }

    pub fn observations(&self) -> u64 {
        self.total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_erasure_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| !sample_erasure(&mut rng, 0.0)));
        assert!((0..1000).all(|_| sample_erasure(&mut rng, 1.0)));
    }

    #[test]
    fn erasure_frequency_tracks_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let erased = (0..n).filter(|_| sample_erasure(&mut rng, 0.5)).count();
        let mean = erased as f64 / n as f64;
        assert!((0.49..=0.51).contains(&mean), "mean {mean}");
    }

    #[test]
    fn topology_validation() {
        assert!(Topology::single_hop(vec![0.2, 0.8], 20).is_ok());
        assert_eq!(
            Topology::single_hop(vec![0.2], 7).unwrap_err(),
            TopologyError::OddRtt(7)
        );
        assert_eq!(
            Topology::new(vec![vec![0.1, 0.2], vec![0.1]], 4, FeedbackMode::EndToEnd).unwrap_err(),
            TopologyError::Ragged
        );
        assert_eq!(
            Topology::new(vec![vec![1.2]], 4, FeedbackMode::EndToEnd).unwrap_err(),
            TopologyError::BadErasure { path: 0, hop: 0 }
        );
        // rtt 12 over 3 hops: 2 slots per hop each way
        let t = Topology::new(vec![vec![0.1; 3]; 4], 12, FeedbackMode::EndToEnd).unwrap();
        assert_eq!(t.hop_latency(), 2);
        assert_eq!(t.hop_rtt(), 4);
        // rtt 10 does not split over 3 hops
        assert!(matches!(
            Topology::new(vec![vec![0.1; 3]; 4], 10, FeedbackMode::EndToEnd),
            Err(TopologyError::IndivisibleRtt { .. })
        ));
    }

    #[test]
    fn slot_queue_timing_matches_rtt_split() {
        // one packet sent at slot 0 with rtt 20: arrival due at 10, feedback at 20
        let topo = Topology::single_hop(vec![0.0], 20).unwrap();
        let mut arrivals: SlotQueue<u64> = SlotQueue::new();
        let mut feedback: SlotQueue<u64> = SlotQueue::new();
        arrivals.push(0 + topo.forward_latency(), 7);
        for slot in 0..=30u64 {
            for seq in arrivals.take(slot) {
                assert_eq!(slot, 10);
                feedback.push(slot + topo.forward_latency(), seq);
            }
            for seq in feedback.take(slot) {
                assert_eq!(slot, 20);
                assert_eq!(seq, 7);
            }
        }
        assert!(arrivals.is_empty() && feedback.is_empty());
    }

    #[test]
    fn estimator_prior_and_frequency() {
        let mut est = RateEstimator::new(None);
        assert_eq!(est.rate(), 0.5); // uninformative prior
        for i in 0..10 {
            est.record(i >= 2); // 2 losses, 8 deliveries
        }
        assert!((est.rate() - 0.8).abs() < 1e-12);
        let mut all_lost = RateEstimator::new(None);
        for _ in 0..5 {
            all_lost.record(false);
        }
        assert_eq!(all_lost.rate(), 0.0);
    }

    #[test]
    fn windowed_estimator_forgets() {
        let mut est = RateEstimator::new(Some(4));
        for _ in 0..10 {
            est.record(false);
        }
        for _ in 0..4 {
            est.record(true);
        }
        assert_eq!(est.rate(), 1.0);
        assert_eq!(est.observations(), 4);
    }
}

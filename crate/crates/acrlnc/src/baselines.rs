//! Baseline senders: the single-path adaptive coded protocol (the machine the
//! multipath one must degenerate to at P = 1, implemented separately so the
//! equivalence is a real check), and selective-repeat ARQ for end-to-end and
//! hop-by-hop operation.

use crate::analysis::round_half_away;
use crate::coding::{encode_symbolic, CodedPacket, Span};
use crate::network::{FeedbackMsg, RateEstimator, Verdict};
use crate::protocol::{Decision, ProtocolError, SendCounters};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

#[derive(Debug, Clone)]
pub struct SpParams {
    pub rtt: u64,
    pub th: f64,
    pub window_factor: f64,
    pub total_packets: u64,
    pub estimator_horizon: Option<usize>,
}

impl SpParams {
    pub fn new(rtt: u64, total_packets: u64) -> SpParams {
        SpParams { rtt, th: 0.0, window_factor: 2.0, total_packets, estimator_horizon: None }
    }

    pub fn k(&self) -> u64 {
        self.rtt - 1
    }

    pub fn o_bar(&self) -> u64 {
        ((self.window_factor * self.k() as f64).round() as u64).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SpStatus {
    Pending,
    Acked,
    Nacked,
}

#[derive(Debug, Clone)]
struct SpRecord {
    repeated: bool,
    window: Span,
    status: SpStatus,
}

/// Single-path adaptive coded sender: one combination per slot, a-priori
/// repairs at the end of each window of k = rtt - 1 new combinations,
/// feedback repairs when the DoF gap turns positive, and the window size
/// limit with its repeat mode.
#[derive(Debug)]
pub struct SpSender {
    params: SpParams,
    k: u64,
    o_bar: u64,
    w_min: u64,
    next_new: u64,
    new_in_window: u64,
    m: u64,
    estimator: RateEstimator,
    // ordered like the multipath sender so both sum the DoF sets identically
    log: BTreeMap<u64, SpRecord>,
    next_seq: u64,
    known_prefix: u64,
    counters: SendCounters,
}

impl SpSender {
    pub fn new(params: SpParams) -> SpSender {
        let k = params.k();
        let o_bar = params.o_bar();
        let estimator = RateEstimator::new(params.estimator_horizon);
        SpSender {
            params,
            k,
            o_bar,
            w_min: 0,
            next_new: 0,
            new_in_window: 0,
            m: 0,
            estimator,
            log: BTreeMap::new(),
            next_seq: 0,
            known_prefix: 0,
            counters: SendCounters::default(),
        }
    }

    pub fn counters(&self) -> SendCounters {
        self.counters
    }

    pub fn known_prefix(&self) -> u64 {
        self.known_prefix
    }

    pub fn rate_estimate(&self) -> f64 {
        self.estimator.rate()
    }

    fn window(&self) -> Option<Span> {
        (self.next_new > self.w_min).then(|| Span::new(self.w_min, self.next_new - 1))
    }

    fn window_span(&self) -> u64 {
        self.next_new.saturating_sub(self.w_min)
    }

    /// DoF gap at P = 1: pending packets weighted by the rate estimate.
    fn gap_positive(&self) -> bool {
        if self.estimator.observations() == 0 {
            return false;
        }
        let rate = self.estimator.rate();
        let (mut md, mut ad) = (0.0f64, 0.0f64);
        for rec in self.log.values() {
            if rec.window.end < self.known_prefix {
                continue;
            }
            match (rec.status, rec.repeated) {
                (SpStatus::Nacked, false) => md += 1.0,
                (SpStatus::Pending, false) => md += 1.0 - rate,
                (SpStatus::Acked, true) => ad += 1.0,
                (SpStatus::Pending, true) => ad += rate,
                _ => {}
            }
        }
        if ad > 0.0 {
            // same tolerance the multipath allocator applies to the gap, so
            // the two machines agree at knife-edge values
            md / ad - 1.0 - self.params.th > 1e-12
        } else {
            md > 0.0
        }
    }

    fn emit(
        &mut self,
        decision: Decision,
        window: Span,
        slot: u64,
        rng: &mut impl rand::Rng,
    ) -> CodedPacket {
        let mut pkt = encode_symbolic(window, rng).expect("non-empty window");
        pkt.seq_id = self.next_seq;
        pkt.kind = decision.kind();
        pkt.send_slot = slot;
        self.log.insert(
            self.next_seq,
            SpRecord { repeated: pkt.kind.is_repeat(), window, status: SpStatus::Pending },
        );
        self.next_seq += 1;
        match decision {
            Decision::New => self.counters.new += 1,
            Decision::Fec | Decision::EwFec => self.counters.fec += 1,
            Decision::FbFec => self.counters.fbfec += 1,
            Decision::SizeLimitRepeat => self.counters.size_limit += 1,
        }
        pkt
    }

    /// One slot, at most one transmission.
    pub fn schedule_slot(
        &mut self,
        slot: u64,
        rng: &mut impl rand::Rng,
    ) -> Option<(Decision, CodedPacket)> {
        if self.window_span() >= self.o_bar {
            let window = self.window().unwrap();
            return Some((
                Decision::SizeLimitRepeat,
                self.emit(Decision::SizeLimitRepeat, window, slot, rng),
            ));
        }
        if self.m > 0 {
            if let Some(window) = self.window() {
                self.m -= 1;
                return Some((Decision::Fec, self.emit(Decision::Fec, window, slot, rng)));
            }
        }
        if let Some(window) = self.window() {
            if self.gap_positive() {
                return Some((Decision::FbFec, self.emit(Decision::FbFec, window, slot, rng)));
            }
        }
        if self.next_new < self.params.total_packets {
            if self.new_in_window >= self.k {
                self.m =
                    round_half_away(self.estimator.eps() * (self.params.rtt - 1) as f64);
                self.new_in_window = 0;
                if self.m > 0 {
                    if let Some(window) = self.window() {
                        self.m -= 1;
                        return Some((
                            Decision::EwFec,
                            self.emit(Decision::EwFec, window, slot, rng),
                        ));
                    }
                }
            }
            let span_after = self.next_new + 1 - self.w_min;
            if span_after <= self.o_bar {
                let window = Span::new(self.w_min, self.next_new);
                self.next_new += 1;
                self.new_in_window += 1;
                return Some((Decision::New, self.emit(Decision::New, window, slot, rng)));
            }
            let window = self.window().unwrap();
            return Some((
                Decision::SizeLimitRepeat,
                self.emit(Decision::SizeLimitRepeat, window, slot, rng),
            ));
        }
        self.window().map(|window| {
            (
                Decision::SizeLimitRepeat,
                self.emit(Decision::SizeLimitRepeat, window, slot, rng),
            )
        })
    }

    pub fn on_feedback(&mut self, msg: &FeedbackMsg) -> Result<(), ProtocolError> {
        let rec =
            self.log.get_mut(&msg.about_seq).ok_or(ProtocolError::UnknownSeq(msg.about_seq))?;
        rec.status = if msg.verdict == Verdict::Ack { SpStatus::Acked } else { SpStatus::Nacked };
        let channel_sample =
            if rec.repeated { msg.delivered } else { msg.verdict == Verdict::Ack };
        self.estimator.record(channel_sample);
        if msg.report.decoded_prefix > self.known_prefix {
            self.known_prefix = msg.report.decoded_prefix;
            self.w_min = self.w_min.max(self.known_prefix);
            let prefix = self.known_prefix;
            self.log.retain(|_, r| r.status == SpStatus::Pending || r.window.end >= prefix);
        }
        Ok(())
    }
}

/// Selective-repeat ARQ sender for one link, with the classical sequence
/// window: new packets may go out while their id stays within `window`
/// positions of the oldest unacknowledged id, and retransmissions take
/// priority. A loss therefore stalls the window head for a round trip, which
/// is the protocol's characteristic inefficiency. With reliable
/// per-transmission feedback after exactly one round trip, the retransmission
/// timer and the NACK arrival coincide, so retransmission is NACK-driven.
#[derive(Debug)]
pub struct SrArqSender {
    window: Option<u64>,
    retransmit: VecDeque<u64>,
    unacked: BTreeSet<u64>,
    backlog: VecDeque<u64>,
    source_exhausted: bool,
    pub sent: u64,
}

impl SrArqSender {
    /// `window`: sequence span measured from the oldest unacknowledged id
    /// (`None` = unbounded, the idealized loss-limited sender).
    pub fn new(window: Option<u64>) -> SrArqSender {
        SrArqSender {
            window,
            retransmit: VecDeque::new(),
            unacked: BTreeSet::new(),
            backlog: VecDeque::new(),
            source_exhausted: false,
            sent: 0,
        }
    }

    /// Window that streams continuously on a loss-free link.
    pub fn streaming_window(rtt: u64) -> u64 {
        rtt + 1
    }

    /// Make packet ids available for first transmission (arrival order kept).
    pub fn enqueue(&mut self, id: u64) {
        self.backlog.push_back(id);
    }

    pub fn finish_source(&mut self) {
        self.source_exhausted = true;
    }

    /// Pick the id to transmit this slot, if any.
    pub fn poll(&mut self) -> Option<u64> {
        while let Some(id) = self.retransmit.pop_front() {
            if self.unacked.contains(&id) {
                self.sent += 1;
                return Some(id);
            }
        }
        let in_window = match (self.window, self.backlog.front()) {
            (_, None) => false,
            (None, Some(_)) => true,
            (Some(w), Some(&id)) => match self.unacked.first() {
                Some(&head) => id < head + w,
                None => true,
            },
        };
        if in_window {
            let id = self.backlog.pop_front().unwrap();
            self.unacked.insert(id);
            self.sent += 1;
            return Some(id);
        }
        None
    }

    pub fn on_feedback(&mut self, id: u64, delivered: bool) {
        if delivered {
            self.unacked.remove(&id);
        } else if self.unacked.contains(&id) {
            self.retransmit.push_back(id);
        }
    }

    pub fn idle(&self) -> bool {
        self.source_exhausted
            && self.backlog.is_empty()
            && self.unacked.is_empty()
            && self.retransmit.is_empty()
    }
}

/// In-order tracking receiver shared by the ARQ variants.
#[derive(Debug, Default)]
pub struct InOrderReceiver {
    received: BTreeSet<u64>,
    in_order: u64,
}

impl InOrderReceiver {
    pub fn new() -> InOrderReceiver {
        InOrderReceiver::default()
    }

    /// Returns the ids that just became deliverable in order.
    pub fn receive(&mut self, id: u64) -> Vec<u64> {
        self.received.insert(id);
        let mut out = Vec::new();
        while self.received.remove(&self.in_order) {
            out.push(self.in_order);
            self.in_order += 1;
        }
        out
    }

    pub fn is_duplicate(&self, id: u64) -> bool {
        id < self.in_order || self.received.contains(&id)
    }

    pub fn in_order(&self) -> u64 {
        self.in_order
    }
}

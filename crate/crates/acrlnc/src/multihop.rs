//! Global-path construction across hops and intermediate-node recoding.
//!
//! A multi-hop network with P paths per hop is flattened into P global paths
//! by matching each hop's links to the next hop's links. The natural matching
//! sorts every hop's links by rate and pairs them rank to rank, which is
//! rate-optimal; the brute-force searcher here exists as its oracle. Once
//! global paths are fixed, the single-hop multipath protocol runs on top of
//! them, with intermediate nodes recoding in one of three modes.

use crate::coding::{CodedPacket, PacketKind, RowBasis, Span};
use crate::gf256::Gf256;
use itertools::Itertools;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatchingError {
    #[error("rate matrix must be rectangular and non-empty")]
    BadShape,
    #[error("brute-force search limited to P <= {max_paths}, H <= {max_hops}")]
    TooLarge { max_paths: usize, max_hops: usize },
    #[error("matching is not admissible")]
    NotAdmissible,
}

/// Per-hop link matching and the induced global paths.
///
/// `local[b][p]` is the hop-(b+2) link matched to link `p` of hop (b+1);
/// `global[p][h]` is the hop-(h+1) member link of global path `p`. Global
/// path `p` starts at hop-1 link `p`. All indices 0-based; the `*_printed`
/// accessors render the 1-based matrices with the identity first column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    local: Vec<Vec<usize>>,
    global: Vec<Vec<usize>>,
}

impl Matching {
    pub fn from_local(local: Vec<Vec<usize>>, paths: usize) -> Result<Matching, MatchingError> {
        for col in &local {
            if !is_permutation(col, paths) {
                return Err(MatchingError::NotAdmissible);
            }
        }
        let hops = local.len() + 1;
        let mut global = vec![vec![0usize; hops]; paths];
        for (p, row) in global.iter_mut().enumerate() {
            row[0] = p;
            for h in 1..hops {
                row[h] = local[h - 1][row[h - 1]];
            }
        }
        Ok(Matching { local, global })
    }

    pub fn identity(paths: usize, hops: usize) -> Matching {
        Matching::from_local(vec![(0..paths).collect(); hops - 1], paths).unwrap()
    }

    pub fn paths(&self) -> usize {
        self.global.len()
    }

    pub fn hops(&self) -> usize {
        self.global.first().map_or(0, |r| r.len())
    }

    /// Hop-(h+1) member link of global path `p` (0-based).
    pub fn member(&self, p: usize, h: usize) -> usize {
        self.global[p][h]
    }

    pub fn local(&self) -> &[Vec<usize>] {
        &self.local
    }

    pub fn global(&self) -> &[Vec<usize>] {
        &self.global
    }

    /// 1-based P x H local matrix with the identity first column.
    pub fn local_printed(&self) -> Vec<Vec<usize>> {
        let p = self.paths();
        (0..p)
            .map(|i| {
                let mut row = vec![i + 1];
                row.extend(self.local.iter().map(|col| col[i] + 1));
                row
            })
            .collect()
    }

    /// 1-based P x H global matrix.
    pub fn global_printed(&self) -> Vec<Vec<usize>> {
        self.global
            .iter()
            .map(|row| row.iter().map(|&x| x + 1).collect())
            .collect()
    }

    /// Consistency of the two representations.
    pub fn is_consistent(&self) -> bool {
        let (p, h) = (self.paths(), self.hops());
        for hh in 0..h {
            let col: Vec<usize> = (0..p).map(|i| self.global[i][hh]).collect();
            if !is_permutation(&col, p) {
                return false;
            }
        }
        self.global.iter().enumerate().all(|(i, row)| {
            row[0] == i
                && (1..h).all(|hh| row[hh] == self.local[hh - 1][row[hh - 1]])
        })
    }
}

fn is_permutation(xs: &[usize], n: usize) -> bool {
    if xs.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &x in xs {
        if x >= n || seen[x] {
            return false;
        }
        seen[x] = true;
    }
    true
}

fn check_shape(rates: &[Vec<f64>]) -> Result<(usize, usize), MatchingError> {
    let paths = rates.len();
    let hops = rates.first().map_or(0, |r| r.len());
    if paths == 0 || hops == 0 || rates.iter().any(|r| r.len() != hops) {
        return Err(MatchingError::BadShape);
    }
    Ok((paths, hops))
}

/// Rate-decreasing order of one hop's links, stable by link index.
pub(crate) fn rank_order(hop_rates: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..hop_rates.len()).collect();
    idx.sort_by(|&a, &b| {
        hop_rates[b].partial_cmp(&hop_rates[a]).unwrap().then(a.cmp(&b))
    });
    idx
}

/// Natural matching: per hop, sort links by rate and chain rank to rank.
/// `rates[p][h]` is the rate of link `p` on hop `h`.
pub fn natural_match(rates: &[Vec<f64>]) -> Result<Matching, MatchingError> {
    let (paths, hops) = check_shape(rates)?;
    let orders: Vec<Vec<usize>> = (0..hops)
        .map(|h| rank_order(&rates.iter().map(|r| r[h]).collect::<Vec<_>>()))
        .collect();
    let mut local = vec![vec![0usize; paths]; hops - 1];
    for b in 0..hops - 1 {
        for rank in 0..paths {
            local[b][orders[b][rank]] = orders[b + 1][rank];
        }
    }
    Matching::from_local(local, paths)
}

/// The same matching computed one node at a time: each node sees only its
/// adjacent hops plus the rank order token forwarded from upstream.
pub fn natural_match_decentralized(rates: &[Vec<f64>]) -> Result<Matching, MatchingError> {
    let (paths, hops) = check_shape(rates)?;
    let mut upstream_order = rank_order(&rates.iter().map(|r| r[0]).collect::<Vec<_>>());
    let mut local = Vec::with_capacity(hops - 1);
    for h in 1..hops {
        let next_order = rank_order(&rates.iter().map(|r| r[h]).collect::<Vec<_>>());
        let mut col = vec![0usize; paths];
        for rank in 0..paths {
            col[upstream_order[rank]] = next_order[rank];
        }
        local.push(col);
        upstream_order = next_order;
    }
    Matching::from_local(local, paths)
}

/// Sum over global paths of their bottleneck (minimum member) rate.
pub fn eta_max(matching: &Matching, rates: &[Vec<f64>]) -> f64 {
    (0..matching.paths())
        .map(|p| {
            (0..matching.hops())
                .map(|h| rates[matching.member(p, h)][h])
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Min-cut capacity of the layered network: the smallest per-hop rate sum.
pub fn min_cut_capacity(rates: &[Vec<f64>]) -> f64 {
    let hops = rates.first().map_or(0, |r| r.len());
    (0..hops)
        .map(|h| rates.iter().map(|r| r[h]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

const BRUTE_MAX_PATHS: usize = 6;
const BRUTE_MAX_HOPS: usize = 4;

/// Exhaustive search over all admissible matchings, maximizing [`eta_max`].
pub fn brute_force_match(rates: &[Vec<f64>]) -> Result<Matching, MatchingError> {
    let (paths, hops) = check_shape(rates)?;
    if paths > BRUTE_MAX_PATHS || hops > BRUTE_MAX_HOPS {
        return Err(MatchingError::TooLarge {
            max_paths: BRUTE_MAX_PATHS,
            max_hops: BRUTE_MAX_HOPS,
        });
    }
    if hops == 1 {
        return Ok(Matching::identity(paths, 1));
    }
    let mut best: Option<(f64, Matching)> = None;
    let perms: Vec<Vec<usize>> = (0..paths).permutations(paths).collect();
    let mut stack = vec![0usize; hops - 1];
    loop {
        let local: Vec<Vec<usize>> = stack.iter().map(|&i| perms[i].clone()).collect();
        let m = Matching::from_local(local, paths).unwrap();
        let eta = eta_max(&m, rates);
        if best.as_ref().is_none_or(|(b, _)| eta > *b) {
            best = Some((eta, m));
        }
        // odometer over permutation indices
        let mut pos = 0;
        loop {
            if pos == stack.len() {
                return Ok(best.unwrap().1);
            }
            stack[pos] += 1;
            if stack[pos] < perms.len() {
                break;
            }
            stack[pos] = 0;
            pos += 1;
        }
    }
}

/// Both balancing objectives for one permutation: the matched min-rate sum
/// and the matched absolute rate difference sum.
pub fn balancing_objectives(rates_in: &[f64], rates_out: &[f64], perm: &[usize]) -> (f64, f64) {
    assert_eq!(rates_in.len(), rates_out.len());
    assert_eq!(rates_in.len(), perm.len());
    let mut sum_min = 0.0;
    let mut sum_absdiff = 0.0;
    for (p, &q) in perm.iter().enumerate() {
        sum_min += rates_in[p].min(rates_out[q]);
        sum_absdiff += (rates_in[p] - rates_out[q]).abs();
    }
    (sum_min, sum_absdiff)
}

/// How an intermediate node turns arrivals into outgoing packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecodeMode {
    /// New-kind packets recode together across global paths; repair kinds
    /// recode together; never across the two classes.
    SelectiveMix,
    /// Recode only within each global path.
    PerPathIndependent,
    /// Retransmit the arrival unchanged; erased packets stay lost.
    ForwardOnly,
}

fn class_of(kind: PacketKind) -> usize {
    usize::from(kind.is_repeat())
}

const MIX_BASIS_CAP: usize = 24;
const PATH_BASIS_CAP: usize = 8;

/// Buffers and recoding logic of one intermediate node.
#[derive(Debug)]
pub struct NodeState {
    mode: RecodeMode,
    paths: usize,
    /// [class] for SelectiveMix
    mix: [RowBasis; 2],
    /// [path][class] for PerPathIndependent
    per_path: Vec<[RowBasis; 2]>,
    last_kind: Vec<Option<PacketKind>>,
    cursor: u64,
}

impl NodeState {
    pub fn new(mode: RecodeMode, paths: usize) -> NodeState {
        NodeState {
            mode,
            paths,
            mix: [RowBasis::new(MIX_BASIS_CAP), RowBasis::new(MIX_BASIS_CAP)],
            per_path: (0..paths)
                .map(|_| [RowBasis::new(PATH_BASIS_CAP), RowBasis::new(PATH_BASIS_CAP)])
                .collect(),
            last_kind: vec![None; paths],
            cursor: 0,
        }
    }

    /// Process one slot: buffer the arrivals (index = global path, `None` for
    /// an upstream erasure) and produce at most one outgoing packet per path.
    /// Metadata (`seq_id`, `path`, `send_slot`) is left for the caller.
    pub fn recode_slot(
        &mut self,
        arrivals: &[Option<CodedPacket>],
        rng: &mut impl Rng,
    ) -> Vec<Option<CodedPacket>> {
        assert_eq!(arrivals.len(), self.paths);
        if self.mode == RecodeMode::ForwardOnly {
            return arrivals.to_vec();
        }
        for (p, arrival) in arrivals.iter().enumerate() {
            if let Some(pkt) = arrival {
                self.cursor = self.cursor.max(pkt.window.start);
                self.last_kind[p] = Some(pkt.kind);
                let class = class_of(pkt.kind);
                match self.mode {
                    RecodeMode::SelectiveMix => self.mix[class].insert(pkt),
                    RecodeMode::PerPathIndependent => self.per_path[p][class].insert(pkt),
                    RecodeMode::ForwardOnly => unreachable!(),
                }
            }
        }
        // cross-window mixing is forbidden: drop rows behind the newest w_min
        for b in self.mix.iter_mut() {
            b.evict_below(self.cursor);
        }
        for pb in self.per_path.iter_mut() {
            pb[0].evict_below(self.cursor);
            pb[1].evict_below(self.cursor);
        }

        (0..self.paths)
            .map(|p| {
                let kind = match &arrivals[p] {
                    Some(pkt) => Some(pkt.kind),
                    None => self.last_kind[p],
                };
                match self.mode {
                    RecodeMode::SelectiveMix => self.mix_outgoing(kind, rng),
                    RecodeMode::PerPathIndependent => self.path_outgoing(p, kind, rng),
                    RecodeMode::ForwardOnly => unreachable!(),
                }
            })
            .collect()
    }

    fn mix_outgoing(&self, kind: Option<PacketKind>, rng: &mut impl Rng) -> Option<CodedPacket> {
        let preferred = kind.map(class_of).unwrap_or(0);
        let (class, kind) = if !self.mix[preferred].is_empty() {
            (preferred, kind.unwrap_or(PacketKind::New))
        } else if !self.mix[1 - preferred].is_empty() {
            let k = if preferred == 0 { PacketKind::Fec } else { PacketKind::New };
            (1 - preferred, k)
        } else {
            return None;
        };
        Self::emit(&self.mix[class], kind, rng)
    }

    fn path_outgoing(
        &self,
        path: usize,
        kind: Option<PacketKind>,
        rng: &mut impl Rng,
    ) -> Option<CodedPacket> {
        let preferred = kind.map(class_of).unwrap_or(0);
        let bases = &self.per_path[path];
        let (class, kind) = if !bases[preferred].is_empty() {
            (preferred, kind.unwrap_or(PacketKind::New))
        } else if !bases[1 - preferred].is_empty() {
            let k = if preferred == 0 { PacketKind::Fec } else { PacketKind::New };
            (1 - preferred, k)
        } else {
            return None;
        };
        Self::emit(&bases[class], kind, rng)
    }

    fn emit(basis: &RowBasis, kind: PacketKind, rng: &mut impl Rng) -> Option<CodedPacket> {
        let (window, coeffs, payload) = basis.random_combo(rng)?;
        Some(CodedPacket {
            seq_id: 0,
            window,
            coeffs,
            payload,
            kind,
            path: 0,
            send_slot: 0,
        })
    }
}

/// Support of a recoded packet, for tests that check mixing discipline.
pub fn support(coeffs: &[Gf256], window: Span) -> Vec<u64> {
    coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(i, _)| window.start + i as u64)
        .collect()
}

#[allow(unused_imports)]
pub use crate::coding::Span as WindowSpan;

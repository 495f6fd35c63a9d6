//! Experiment configuration: a single TOML file describes the topology, the
//! protocol under test, its tunables, the sweep grid and the iteration plan.
//! Reference configurations for the two standard comparisons ship as
//! constructors so examples, tests and the shipped config files stay in sync.

use crate::multihop::RecodeMode;
use crate::network::{FeedbackMode, Topology, TopologyError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolChoice {
    MpAcrlnc,
    SpAcrlncPerPath,
    SrArq,
    SrArqHopByHop,
    MhAcrlnc,
}

impl ProtocolChoice {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolChoice::MpAcrlnc => "mp_acrlnc",
            ProtocolChoice::SpAcrlncPerPath => "sp_acrlnc_per_path",
            ProtocolChoice::SrArq => "sr_arq",
            ProtocolChoice::SrArqHopByHop => "sr_arq_hop_by_hop",
            ProtocolChoice::MhAcrlnc => "mh_acrlnc",
        }
    }

    pub fn parse(name: &str) -> Option<ProtocolChoice> {
        match name {
            "mp_acrlnc" => Some(ProtocolChoice::MpAcrlnc),
            "sp_acrlnc_per_path" => Some(ProtocolChoice::SpAcrlncPerPath),
            "sr_arq" => Some(ProtocolChoice::SrArq),
            "sr_arq_hop_by_hop" => Some(ProtocolChoice::SrArqHopByHop),
            "mh_acrlnc" => Some(ProtocolChoice::MhAcrlnc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub hops: usize,
    pub paths: usize,
    pub rtt_slots: u64,
    /// eps[path][hop]
    pub eps: Vec<Vec<f64>>,
}

/// One sweep dimension: every listed cell takes each value in turn. Several
/// groups form a full grid (their cross product).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGroup {
    /// (path, hop) indices into the erasure matrix.
    pub cells: Vec<[usize; 2]>,
    pub values: Vec<f64>,
}

/// Selective-repeat window configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArqWindow {
    /// "default" (seven eighths of the round trip), "streaming" (rtt + 1,
    /// loss-free full rate) or "unbounded".
    Named(String),
    Slots(u64),
}

impl Default for ArqWindow {
    fn default() -> ArqWindow {
        ArqWindow::Named("default".into())
    }
}

impl ArqWindow {
    /// Resolve against a round trip; `None` means unbounded.
    pub fn resolve(&self, rtt: u64) -> Result<Option<u64>, ConfigError> {
        match self {
            ArqWindow::Slots(n) if *n > 0 => Ok(Some(*n)),
            ArqWindow::Slots(_) => {
                Err(ConfigError::Invalid("sr_arq_window must be positive".into()))
            }
            ArqWindow::Named(name) => match name.as_str() {
                // sized to the operating point reported for the selective
                // repeat baseline (just under half the channel capacity)
                "default" => Ok(Some((rtt * 7 / 8).max(1))),
                "streaming" => Ok(Some(rtt + 1)),
                "unbounded" => Ok(None),
                other => Err(ConfigError::Invalid(format!(
                    "unknown sr_arq_window '{other}' (use default/streaming/unbounded or a slot count)"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsSweepKind {
    /// Vary the round trip over `values`.
    Rtt,
    /// Vary the window factor f over `values`.
    WindowFactor,
    /// Evaluate the bounds on every cell of the simulation sweep grid.
    SweepCells,
}

fn default_target_error() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub sweep: BoundsSweepKind,
    #[serde(default)]
    pub values: Vec<f64>,
    #[serde(default = "default_target_error")]
    pub target_error: f64,
    /// Fraction of slots without feedback; measure it from a paired
    /// simulation or pass it explicitly.
    #[serde(default)]
    pub lambda: f64,
}

fn default_iterations() -> u64 {
    150
}

fn default_packet_count() -> u64 {
    5000
}

fn default_window_factor() -> f64 {
    2.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub protocol: ProtocolChoice,
    pub topology: TopologySection,
    #[serde(default)]
    pub feedback_mode: FeedbackMode,
    #[serde(default = "default_recode_mode")]
    pub recode_mode: RecodeMode,
    /// Multi-hop runs re-match global paths from hop-local rate estimates;
    /// disable to pin the natural matching of the configured rates.
    #[serde(default = "default_true")]
    pub adaptive_matching: bool,
    #[serde(default)]
    pub th: f64,
    /// o_bar = window_factor * k.
    #[serde(default = "default_window_factor")]
    pub window_factor: f64,
    /// Rate estimator horizon in observations (None keeps all history).
    #[serde(default)]
    pub estimator_horizon: Option<usize>,
    #[serde(default)]
    pub sr_arq_window: ArqWindow,
    /// Hop-by-hop ARQ on the single best-link-per-hop global path instead of
    /// all matched global paths.
    #[serde(default)]
    pub best_single_path: bool,
    #[serde(default = "default_iterations")]
    pub iterations: u64,
    #[serde(default = "default_packet_count")]
    pub packet_count: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub sweep: Vec<SweepGroup>,
    #[serde(default)]
    pub bounds: Option<BoundsSection>,
}

fn default_recode_mode() -> RecodeMode {
    RecodeMode::SelectiveMix
}

/// One point of the sweep grid: concrete erasure matrix plus its labels.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub index: usize,
    /// One value per sweep group, in group order.
    pub values: Vec<f64>,
    pub eps: Vec<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.topology;
        if t.eps.len() != t.paths || t.eps.iter().any(|r| r.len() != t.hops) {
            return Err(ConfigError::Invalid(format!(
                "eps matrix must be {} paths x {} hops",
                t.paths, t.hops
            )));
        }
        Topology::new(t.eps.clone(), t.rtt_slots, self.feedback_mode)?;
        if self.window_factor < 1.0 {
            return Err(ConfigError::Invalid("window_factor must be >= 1".into()));
        }
        if self.th < 0.0 {
            return Err(ConfigError::Invalid("th must be >= 0".into()));
        }
        if self.iterations == 0 || self.packet_count == 0 {
            return Err(ConfigError::Invalid("iterations and packet_count must be positive".into()));
        }
        self.sr_arq_window.resolve(t.rtt_slots)?;
        for (g, group) in self.sweep.iter().enumerate() {
            if group.values.is_empty() || group.cells.is_empty() {
                return Err(ConfigError::Invalid(format!("sweep group {g} is empty")));
            }
            for &[p, h] in &group.cells {
                if p >= t.paths || h >= t.hops {
                    return Err(ConfigError::Invalid(format!(
                        "sweep group {g} cell ({p},{h}) outside the {}x{} matrix",
                        t.paths, t.hops
                    )));
                }
            }
            if group.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(ConfigError::Invalid(format!(
                    "sweep group {g} has values outside [0,1]"
                )));
            }
        }
        if matches!(self.protocol, ProtocolChoice::MhAcrlnc) && t.hops < 2 {
            return Err(ConfigError::Invalid(
                "mh_acrlnc needs at least two hops (use mp_acrlnc on one hop)".into(),
            ));
        }
        Ok(())
    }

    /// Expand the sweep grid (a single cell when no sweep is configured).
    pub fn cells(&self) -> Vec<SweepCell> {
        if self.sweep.is_empty() {
            return vec![SweepCell { index: 0, values: Vec::new(), eps: self.topology.eps.clone() }];
        }
        let mut cells = Vec::new();
        let sizes: Vec<usize> = self.sweep.iter().map(|g| g.values.len()).collect();
        let total: usize = sizes.iter().product();
        for index in 0..total {
            let mut rem = index;
            let mut eps = self.topology.eps.clone();
            let mut values = Vec::with_capacity(self.sweep.len());
            for (group, &size) in self.sweep.iter().zip(&sizes) {
                let v = group.values[rem % size];
                rem /= size;
                values.push(v);
                for &[p, h] in &group.cells {
                    eps[p][h] = v;
                }
            }
            cells.push(SweepCell { index, values, eps });
        }
        cells
    }

    pub fn topology_for(&self, cell: &SweepCell) -> Topology {
        Topology::new(cell.eps.clone(), self.topology.rtt_slots, self.feedback_mode)
            .expect("validated at load time")
    }

    /// Stable FNV-1a hash of the canonical serialized form.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_toml().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        h
    }

    /// The single-hop four-path comparison setting: rtt 20, two paths fixed
    /// at 0.2 and 0.8, the other two swept together over [0.1, 0.8].
    pub fn mp_reference() -> ExperimentConfig {
        ExperimentConfig {
            name: "mp_reference".into(),
            protocol: ProtocolChoice::MpAcrlnc,
            topology: TopologySection {
                hops: 1,
                paths: 4,
                rtt_slots: 20,
                eps: vec![vec![0.1], vec![0.1], vec![0.2], vec![0.8]],
            },
            feedback_mode: FeedbackMode::EndToEnd,
            recode_mode: RecodeMode::SelectiveMix,
            adaptive_matching: true,
            th: 0.0,
            window_factor: 2.0,
            estimator_horizon: None,
            sr_arq_window: ArqWindow::default(),
            best_single_path: false,
            iterations: 150,
            packet_count: 5000,
            base_seed: 1,
            sweep: vec![SweepGroup {
                cells: vec![[0, 0], [1, 0]],
                values: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
            }],
            bounds: Some(BoundsSection {
                sweep: BoundsSweepKind::SweepCells,
                values: Vec::new(),
                target_error: 1e-3,
                lambda: 0.0,
            }),
        }
    }

    /// The three-hop four-path comparison setting: rtt 12, the erasure matrix
    /// with two groups of swept entries.
    pub fn mh_reference() -> ExperimentConfig {
        ExperimentConfig {
            name: "mh_reference".into(),
            protocol: ProtocolChoice::MhAcrlnc,
            topology: TopologySection {
                hops: 3,
                paths: 4,
                rtt_slots: 12,
                eps: vec![
                    vec![0.1, 0.6, 0.3],
                    vec![0.8, 0.1, 0.1],
                    vec![0.2, 0.1, 0.7],
                    vec![0.1, 0.4, 0.1],
                ],
            },
            feedback_mode: FeedbackMode::EndToEnd,
            recode_mode: RecodeMode::SelectiveMix,
            adaptive_matching: true,
            th: 0.0,
            window_factor: 2.0,
            estimator_horizon: None,
            sr_arq_window: ArqWindow::default(),
            best_single_path: false,
            iterations: 150,
            packet_count: 5000,
            base_seed: 7,
            sweep: vec![
                SweepGroup {
                    cells: vec![[0, 0], [1, 1], [1, 2]],
                    values: vec![0.1, 0.45, 0.8],
                },
                SweepGroup {
                    cells: vec![[2, 1], [3, 0], [3, 2]],
                    values: vec![0.1, 0.45, 0.8],
                },
            ],
            bounds: None,
        }
    }

    /// Bounds-only setting over the fixed reference erasures.
    pub fn mp_bounds_reference() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::mp_reference();
        cfg.name = "mp_bounds_reference".into();
        cfg.topology.eps = vec![vec![0.2], vec![0.4], vec![0.6], vec![0.8]];
        cfg.sweep.clear();
        cfg.bounds = Some(BoundsSection {
            sweep: BoundsSweepKind::Rtt,
            values: (1..=50).map(|i| (2 * i) as f64).collect(),
            target_error: 1e-3,
            lambda: 0.0,
        });
        cfg
    }
}

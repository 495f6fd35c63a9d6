//! Closed-form throughput and in-order-delay bounds for the adaptive causal
//! coded protocol, on multipath networks and on matched multi-hop networks.
//!
//! Conventions used throughout:
//!
//! - per-path rate r = 1 - eps; the a-priori repair count is
//!   m = round_half_away(eps * (rtt - 1));
//! - the non-causal rate fluctuation bound is
//!   r_up = min(1, r + sqrt(rtt * eps * r) / (rtt - 1 + m));
//! - the distance between the estimated and actual rate over one feedback
//!   period is the two-outcome Bernoulli Bhattacharyya distance per slot,
//!   accumulated over the rtt slots of the period.
//!
//! All functions are pure; sweeps parallelize trivially.

use crate::multihop::{min_cut_capacity, Matching};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BoundError {
    #[error("mean erasure rate is 1, network carries nothing")]
    DeadNetwork,
    #[error("target error probability must lie in (0,1), got {0}")]
    BadTargetError(f64),
    #[error("invalid inputs: {0}")]
    Invalid(String),
}

/// Everything the bound formulas need about one (possibly matched) network.
#[derive(Debug, Clone)]
pub struct BoundInputs {
    /// Erasure probability per path; for matched multi-hop networks, per
    /// global path.
    pub path_eps: Vec<f64>,
    pub rtt: u64,
    /// f = o_bar / k, the window-size factor.
    pub window_factor: f64,
    /// Retransmission threshold the protocol runs with (carried through to
    /// reports; the closed forms are derived for th = 0).
    pub th: f64,
    /// Target error probability P_e for the max-delay bound.
    pub target_error: f64,
    /// Fraction of slots without any feedback arrival.
    pub lambda: f64,
    /// Network capacity; defaults to the path rate sum when `None`
    /// (min-cut for matched multi-hop inputs).
    pub capacity: Option<f64>,
}

impl BoundInputs {
    pub fn new(path_eps: Vec<f64>, rtt: u64, window_factor: f64) -> BoundInputs {
        BoundInputs {
            path_eps,
            rtt,
            window_factor,
            th: 0.0,
            target_error: 1e-3,
            lambda: 0.0,
            capacity: None,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> BoundInputs {
        self.lambda = lambda;
        self
    }

    pub fn with_target_error(mut self, p_e: f64) -> BoundInputs {
        self.target_error = p_e;
        self
    }

    pub fn paths(&self) -> usize {
        self.path_eps.len()
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
            .unwrap_or_else(|| self.path_eps.iter().map(|e| 1.0 - e).sum())
    }

    fn validate(&self) -> Result<(), BoundError> {
        if self.path_eps.is_empty() || self.rtt < 2 {
            return Err(BoundError::Invalid("need paths and rtt >= 2".into()));
        }
        if self.path_eps.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(BoundError::Invalid("erasure probabilities must be in [0,1]".into()));
        }
        if self.window_factor < 1.0 {
            return Err(BoundError::Invalid("window factor must be >= 1".into()));
        }
        Ok(())
    }

    pub fn mean_eps(&self) -> f64 {
        self.path_eps.iter().sum::<f64>() / self.paths() as f64
    }
}

/// Every bound evaluated on one input set, plus the two throughput factors.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BoundReport {
    pub capacity: f64,
    pub throughput_ub: f64,
    pub throughput_lb: f64,
    /// 100 * lb / ub
    pub f_eta: f64,
    /// 100 * lb / capacity
    pub f_capacity: f64,
    pub mean_delay_ub: f64,
    pub t_max: u64,
    pub max_delay_ub: u64,
    pub genie_delay_lb: f64,
    pub prod_delay_lb: f64,
    /// Set when a bound degenerated (for example mean erasure too close to 1).
    pub diagnostic: Option<String>,
}

/// Round half away from zero, the convention for repair counts.
pub fn round_half_away(x: f64) -> u64 {
    x.round().max(0.0) as u64
}

/// A-priori repair count for one path.
pub fn fec_count(eps: f64, rtt: u64) -> u64 {
    round_half_away(eps * (rtt - 1) as f64)
}

/// erf via the Abramowitz-Stegun rational approximation 7.1.26
/// (absolute error <= 1.5e-7).
pub fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Per-slot Bernoulli Bhattacharyya distance between success rates r and r'.
pub fn bhattacharyya_bernoulli(r: f64, r_prime: f64) -> f64 {
    if r == r_prime {
        return 0.0;
    }
    let bc = (r * r_prime).sqrt() + ((1.0 - r) * (1.0 - r_prime)).sqrt();
    if bc <= 0.0 {
        f64::INFINITY
    } else {
        -bc.ln()
    }
}

/// Distance accumulated over one feedback period of `rtt` slots.
pub fn bhattacharyya_sequence(r: f64, r_prime: f64, rtt: u64) -> f64 {
    rtt as f64 * bhattacharyya_bernoulli(r, r_prime)
}

/// Non-causal upper bound on a path's actual rate given the rate estimated
/// one feedback period earlier, clamped into [0, 1].
pub fn rate_upper(eps: f64, rtt: u64) -> f64 {
    let r = 1.0 - eps;
    let variance = rtt as f64 * eps * r;
    let m = fec_count(eps, rtt) as f64;
    (r + variance.sqrt() / ((rtt - 1) as f64 + m)).min(1.0)
}

fn path_throughput_ub(eps: f64, rtt: u64) -> f64 {
    let r = 1.0 - eps;
    r - bhattacharyya_sequence(rate_upper(eps, rtt), r, rtt)
}

/// Throughput upper bound: per path, the estimated rate minus the distance
/// the actual rate can drift within one feedback period.
pub fn throughput_ub(inputs: &BoundInputs) -> Result<f64, BoundError> {
    inputs.validate()?;
    Ok(inputs.path_eps.iter().map(|&e| path_throughput_ub(e, inputs.rtt)).sum())
}

/// Throughput lower bound: the upper bound minus, per path, the useless
/// repeats a closing window costs relative to the packets one window carries.
pub fn throughput_lb(inputs: &BoundInputs) -> Result<f64, BoundError> {
    inputs.validate()?;
    let f = inputs.window_factor;
    let rtt = inputs.rtt;
    let wasted_factor = 1.0 - erf(1.0 / std::f64::consts::SQRT_2);
    Ok(inputs
        .path_eps
        .iter()
        .map(|&e| {
            let k = (rtt - 1) as f64;
            let n_ew = wasted_factor * (1.0 - e) * rtt as f64;
            let n_w = (k + k * e + k * e * e) * f + 1.0;
            path_throughput_ub(e, rtt) - n_ew / n_w
        })
        .sum())
}

fn ln_factorial(n: u64) -> f64 {
    // Lanczos-backed ln Gamma(n+1)
    ln_gamma(n as f64 + 1.0)
}

/// ln Gamma via the Lanczos approximation (g = 7, 9 coefficients).
#[allow(clippy::excessive_precision)]
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().abs().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// P[Binomial(n, p) in 1..=upto], computed in log space.
fn binomial_range_sum(n: u64, p: f64, upto: u64) -> f64 {
    if upto == 0 || p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return if upto >= n { 1.0 } else { 0.0 };
    }
    let ln_p = p.ln();
    let ln_q = (1.0 - p).ln();
    let mut sum = 0.0;
    for i in 1..=upto.min(n) {
        let ln_term = ln_factorial(n) - ln_factorial(i) - ln_factorial(n - i)
            + i as f64 * ln_p
            + (n - i) as f64 * ln_q;
        sum += ln_term.exp();
    }
    sum.min(1.0)
}

/// The fluctuation-bounded mean erasure rate over one double feedback period.
pub fn mean_eps_upper(mean_eps: f64, rtt: u64) -> f64 {
    let two_rtt = 2.0 * rtt as f64;
    mean_eps + (two_rtt * (1.0 - mean_eps) * mean_eps).sqrt() / two_rtt
}

/// Mean in-order delay upper bound via the virtual single path carrying the
/// network's mean erasure rate. Returns +infinity when the fluctuation bound
/// on the mean erasure rate reaches 1.
pub fn mean_delay_ub(inputs: &BoundInputs) -> Result<f64, BoundError> {
    inputs.validate()?;
    if !(0.0..=1.0).contains(&inputs.lambda) {
        return Err(BoundError::Invalid("lambda must be in [0,1]".into()));
    }
    let rtt = inputs.rtt as f64;
    let e_bar = inputs.mean_eps();
    let e_max = mean_eps_upper(e_bar, inputs.rtt);
    if e_max >= 1.0 {
        return Ok(f64::INFINITY);
    }
    // the virtual path sees k_p = k / P new packets per window
    let k_p = rtt - 1.0;
    let o_virtual = inputs.window_factor * k_p;
    let m_e = o_virtual * e_bar;
    let p_eow = (1.0 - e_bar).powf(o_virtual);
    let p_delta_neg =
        binomial_range_sum(o_virtual.round() as u64, e_bar, (o_virtual * e_max).floor() as u64);

    let d_no_feedback = (p_eow * (m_e + k_p) + (1.0 - p_eow) * rtt) / (1.0 - e_max);
    let d_nack = e_max / (1.0 - e_max)
        * (p_delta_neg * ((1.0 - p_eow) * rtt + p_eow * (m_e + k_p))
            + (1.0 - p_delta_neg) * (rtt + p_eow * (m_e + k_p)));
    let d_ack = (1.0 - e_max) * (p_eow * (m_e + k_p) + rtt);

    Ok(inputs.lambda * d_no_feedback + (1.0 - inputs.lambda) * (d_nack + d_ack))
}

/// Maximum in-order delay bound holding with probability 1 - P_e:
/// T_max transmissions shared by P paths plus the forward propagation.
pub fn max_delay_ub(inputs: &BoundInputs) -> Result<(u64, u64), BoundError> {
    inputs.validate()?;
    let p_e = inputs.target_error;
    if !(0.0..1.0).contains(&p_e) || p_e == 0.0 {
        return Err(BoundError::BadTargetError(p_e));
    }
    let e_bar = inputs.mean_eps();
    if e_bar >= 1.0 {
        return Err(BoundError::DeadNetwork);
    }
    let eps_max = inputs.path_eps.iter().cloned().fold(0.0, f64::max);
    let alpha = (eps_max / p_e).ln().max(0.0);
    let k = inputs.paths() as f64 * (inputs.rtt - 1) as f64;
    let o_bar = (inputs.window_factor * k).round();
    let one_minus = 1.0 - e_bar;
    // T_max is the larger root of the Hoeffding requirement
    // (T-1) * ((T - o_bar)/(T-1) - e_bar)^2 >= alpha / 2, i.e.
    // T = 1 + [alpha + 4(1-e)(o-1) + sqrt(alpha(alpha + 8(1-e)(o-1)))] / 4(1-e)^2.
    let b = o_bar - 1.0;
    let t_max = (1.0
        + b / one_minus
        + alpha / (4.0 * one_minus * one_minus)
        + (alpha * (alpha + 8.0 * one_minus * b)).sqrt() / (4.0 * one_minus * one_minus))
        .ceil() as u64;
    let d_max = (inputs.rtt as f64 / 2.0).ceil() as u64
        + (t_max as f64 / inputs.paths() as f64).ceil() as u64;
    Ok((t_max, d_max))
}

/// Genie-aided delay lower bound: forward propagation plus the expected
/// transmissions against the mean erasure rate.
pub fn genie_delay_lb(inputs: &BoundInputs) -> Result<f64, BoundError> {
    inputs.validate()?;
    let e_bar = inputs.mean_eps();
    if e_bar >= 1.0 {
        return Err(BoundError::DeadNetwork);
    }
    Ok(inputs.rtt as f64 / 2.0 + 1.0 / (1.0 - e_bar))
}

/// Delay lower bound when the same packet floods all paths: only a loss on
/// every path at once delays it.
pub fn prod_delay_lb(inputs: &BoundInputs) -> Result<f64, BoundError> {
    inputs.validate()?;
    let prod: f64 = inputs.path_eps.iter().product();
    if prod >= 1.0 {
        return Err(BoundError::DeadNetwork);
    }
    Ok(inputs.rtt as f64 / 2.0 + 1.0 / (1.0 - prod))
}

/// Evaluate everything at once.
pub fn bound_report(inputs: &BoundInputs) -> Result<BoundReport, BoundError> {
    let capacity = inputs.capacity();
    let ub = throughput_ub(inputs)?;
    let lb = throughput_lb(inputs)?;
    let mean_ub = mean_delay_ub(inputs)?;
    let (t_max, d_max) = max_delay_ub(inputs)?;
    let genie = genie_delay_lb(inputs)?;
    let prod = prod_delay_lb(inputs)?;
    let diagnostic = mean_ub
        .is_infinite()
        .then(|| "mean erasure fluctuation bound reached 1; mean delay unbounded".to_string());
    Ok(BoundReport {
        capacity,
        throughput_ub: ub,
        throughput_lb: lb,
        f_eta: 100.0 * lb / ub,
        f_capacity: 100.0 * lb / capacity,
        mean_delay_ub: mean_ub,
        t_max,
        max_delay_ub: d_max,
        genie_delay_lb: genie,
        prod_delay_lb: prod,
        diagnostic,
    })
}

/// Effective per-global-path erasure probabilities of a matched multi-hop
/// network: bottleneck rate with recoding, product rate when packets are
/// only forwarded.
pub fn global_path_eps(rates: &[Vec<f64>], matching: &Matching, forwarding: bool) -> Vec<f64> {
    (0..matching.paths())
        .map(|p| {
            let members = (0..matching.hops()).map(|h| rates[matching.member(p, h)][h]);
            let rate = if forwarding {
                members.product::<f64>()
            } else {
                members.fold(f64::INFINITY, f64::min)
            };
            1.0 - rate
        })
        .collect()
}

/// All bounds for a matched multi-hop network: the multipath formulas applied
/// to the global-path rates, with the mean erasure rate taken over them and
/// the min-cut as capacity.
pub fn mh_bounds(
    rates: &[Vec<f64>],
    matching: &Matching,
    rtt: u64,
    window_factor: f64,
    forwarding: bool,
) -> Result<BoundReport, BoundError> {
    let eps = global_path_eps(rates, matching, forwarding);
    let mut inputs = BoundInputs::new(eps, rtt, window_factor);
    inputs.capacity = Some(min_cut_capacity(rates));
    bound_report(&inputs)
}

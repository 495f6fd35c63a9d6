//! Bit-filling packet allocation: split the free paths into a set carrying
//! new information packets and a set carrying feedback-triggered repairs, so
//! that the repair set provides at least the missing DoF mass while the new
//! set keeps as much rate as possible.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AllocationError {
    #[error("no paths to allocate")]
    NoPaths,
    #[error("exhaustive enumeration limited to {limit} paths, got {got}")]
    TooManyPaths { limit: usize, got: usize },
}

/// Rates of the currently-free paths plus the required repair mass.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    pub rates: Vec<f64>,
    pub delta: f64,
}

/// Disjoint index sets over `AllocationProblem::rates`, both sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub new_paths: Vec<usize>,
    pub fbfec_paths: Vec<usize>,
}

const ENUM_LIMIT: usize = 20;

/// Candidate ordering shared by solver and oracle: minimize the repair-set
/// rate sum (equivalently maximize the new-set sum), then prefer the repair
/// set whose highest-rate member is smallest, then lexicographic indices.
fn candidate_key(rates: &[f64], fbfec: &[usize]) -> (f64, f64, Vec<usize>) {
    let sum: f64 = fbfec.iter().map(|&i| rates[i]).sum();
    let max = fbfec.iter().map(|&i| rates[i]).fold(0.0, f64::max);
    (sum, max, fbfec.to_vec())
}

fn better(a: &(f64, f64, Vec<usize>), b: &(f64, f64, Vec<usize>)) -> bool {
    const EPS: f64 = 1e-12;
    if a.0 < b.0 - EPS {
        return true;
    }
    if a.0 > b.0 + EPS {
        return false;
    }
    if a.1 < b.1 - EPS {
        return true;
    }
    if a.1 > b.1 + EPS {
        return false;
    }
    a.2 < b.2
}

fn partition_from(rates: &[f64], fbfec: Vec<usize>) -> Partition {
    let new_paths = (0..rates.len()).filter(|i| !fbfec.contains(i)).collect();
    Partition { new_paths, fbfec_paths: fbfec }
}

/// Exact bit-filling split. `delta <= 0` needs no repair paths; an
/// infeasible `delta` turns every path into a repair path.
pub fn bit_fill(problem: &AllocationProblem) -> Result<Partition, AllocationError> {
    let rates = &problem.rates;
    let n = rates.len();
    if n == 0 {
        return Err(AllocationError::NoPaths);
    }
    if n > ENUM_LIMIT {
        return Err(AllocationError::TooManyPaths { limit: ENUM_LIMIT, got: n });
    }
    if problem.delta <= 0.0 {
        return Ok(partition_from(rates, Vec::new()));
    }
    let total: f64 = rates.iter().sum();
    if total < problem.delta - 1e-12 {
        // degenerate repair mode
        return Ok(partition_from(rates, (0..n).collect()));
    }
    // enumerate subsets by bitmask, ascending
    let mut best: Option<(f64, f64, Vec<usize>)> = None;
    for mask in 0u32..(1u32 << n) {
        let fbfec: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let sum: f64 = fbfec.iter().map(|&i| rates[i]).sum();
        if sum + 1e-12 < problem.delta {
            continue;
        }
        let key = candidate_key(rates, &fbfec);
        if best.as_ref().is_none_or(|b| better(&key, b)) {
            best = Some(key);
        }
    }
    Ok(partition_from(rates, best.expect("feasible subset exists").2))
}

/// Independent oracle: recursive include/exclude enumeration with the same
/// tie-break rule. Deliberately a separate code path from `bit_fill`.
pub fn bit_fill_oracle(problem: &AllocationProblem) -> Result<Partition, AllocationError> {
    let rates = &problem.rates;
    let n = rates.len();
    if n == 0 {
        return Err(AllocationError::NoPaths);
    }
    if n > ENUM_LIMIT {
        return Err(AllocationError::TooManyPaths { limit: ENUM_LIMIT, got: n });
    }
    if problem.delta <= 0.0 {
        return Ok(partition_from(rates, Vec::new()));
    }

    fn walk(
        rates: &[f64],
        delta: f64,
        idx: usize,
        chosen: &mut Vec<usize>,
        best: &mut Option<(f64, f64, Vec<usize>)>,
    ) {
        if idx == rates.len() {
            let sum: f64 = chosen.iter().map(|&i| rates[i]).sum();
            if sum + 1e-12 >= delta {
                let key = candidate_key(rates, chosen);
                if best.as_ref().is_none_or(|b| better(&key, b)) {
                    *best = Some(key);
                }
            }
            return;
        }
        chosen.push(idx);
        walk(rates, delta, idx + 1, chosen, best);
        chosen.pop();
        walk(rates, delta, idx + 1, chosen, best);
    }

    let mut best = None;
    walk(rates, problem.delta, 0, &mut Vec::new(), &mut best);
    match best {
        Some((_, _, fbfec)) => Ok(partition_from(rates, fbfec)),
        None => Ok(partition_from(rates, (0..n).collect())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prob(rates: &[f64], delta: f64) -> AllocationProblem {
        AllocationProblem { rates: rates.to_vec(), delta }
    }

    #[test]
    fn zero_delta_sends_new_everywhere() {
        let p = bit_fill(&prob(&[0.9, 0.1, 0.5], 0.0)).unwrap();
        assert!(p.fbfec_paths.is_empty());
        assert_eq!(p.new_paths, vec![0, 1, 2]);
    }

    #[test]
    fn reference_split_prefers_low_rate_repair_paths_on_ties() {
        // {0.6} and {0.4, 0.2} both sum to 0.6; the tie goes to the subset
        // whose fastest member is slowest.
        let p = bit_fill(&prob(&[0.8, 0.6, 0.4, 0.2], 0.5)).unwrap();
        assert_eq!(p.fbfec_paths, vec![2, 3]);
        assert_eq!(p.new_paths, vec![0, 1]);
    }

    #[test]
    fn infeasible_delta_turns_all_paths_into_repair() {
        let p = bit_fill(&prob(&[0.3, 0.3], 1.0)).unwrap();
        assert_eq!(p.fbfec_paths, vec![0, 1]);
        assert!(p.new_paths.is_empty());
        assert_eq!(p, bit_fill_oracle(&prob(&[0.3, 0.3], 1.0)).unwrap());
    }

    #[test]
    fn single_path_small_delta_becomes_repair() {
        let p = bit_fill_oracle(&prob(&[0.7], 0.1)).unwrap();
        assert_eq!(p.fbfec_paths, vec![0]);
    }

    #[test]
    fn negative_delta_empty_repair() {
        let p = bit_fill_oracle(&prob(&[0.7, 0.4], -2.0)).unwrap();
        assert!(p.fbfec_paths.is_empty());
    }

    #[test]
    fn pure_function_identical_outputs() {
        let pr = prob(&[0.55, 0.3, 0.8, 0.1], 0.62);
        assert_eq!(bit_fill(&pr).unwrap(), bit_fill(&pr).unwrap());
    }

    #[test]
    fn matches_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..1000 {
            let n = rng.gen_range(1..=12);
            // quantized rates produce plenty of exact ties
            let rates: Vec<f64> =
                (0..n).map(|_| rng.gen_range(0..=10) as f64 / 10.0).collect();
            let total: f64 = rates.iter().sum();
            let delta = rng.gen_range(-0.5..total + 0.5);
            let pr = prob(&rates, delta);
            let a = bit_fill(&pr).unwrap();
            let b = bit_fill_oracle(&pr).unwrap();
            assert_eq!(a, b, "case {case}: rates {rates:?} delta {delta}");
            // feasibility: repair mass >= min(delta, total available)
            let repair: f64 = a.fbfec_paths.iter().map(|&i| rates[i]).sum();
            assert!(repair + 1e-9 >= delta.min(total));
        }
    }
}

//! Bit-filling path allocation: which paths carry new packets and which
//! carry repairs, for a few repair-mass requirements.
//!
//!     cargo run --release --example bit_filling

use acrlnc::allocation::{bit_fill, bit_fill_oracle, AllocationProblem};

fn main() {
    let rates = vec![0.8, 0.6, 0.4, 0.2];
    println!("path rates: {rates:?}");
    println!("{:>6} | {:<18} | {:<18}", "delta", "new paths", "repair paths");
    for delta in [0.0, 0.3, 0.5, 0.9, 1.4, 2.5] {
        let split = bit_fill(&AllocationProblem { rates: rates.clone(), delta }).unwrap();
        let fmt = |idx: &[usize]| {
            idx.iter().map(|&i| format!("{}({})", i, rates[i])).collect::<Vec<_>>().join(" ")
        };
        println!("{delta:>6.1} | {:<18} | {:<18}", fmt(&split.new_paths), fmt(&split.fbfec_paths));
    }

    // the independent enumerator agrees, tie cases included
    let tie = AllocationProblem { rates: rates.clone(), delta: 0.5 };
    assert_eq!(bit_fill(&tie).unwrap(), bit_fill_oracle(&tie).unwrap());
    println!("\n(with delta 0.5, the repair set {{0.4, 0.2}} beats the equal-sum {{0.6}}:");
    println!(" ties resolve toward the slowest paths, keeping fast ones for new packets)");
}

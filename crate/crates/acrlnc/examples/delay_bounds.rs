//! In-order delay bounds for the reference four-path network, compared with
//! a paired simulation: the genie-aided floor, the flooding floor, the mean
//! bound with the measured no-feedback fraction, and the probabilistic max
//! bound.
//!
//!     cargo run --release --example delay_bounds

use acrlnc::analysis::{bound_report, BoundInputs};
use acrlnc::metrics::measure;
use acrlnc::multihop::RecodeMode;
use acrlnc::network::Topology;
use acrlnc::protocol::ProtocolParams;
use acrlnc::sim::{run_coded, MatchingPolicy};

fn main() {
    let eps = vec![0.2, 0.4, 0.6, 0.8];
    let rtt = 20;
    let iterations = 30;

    let mut lambda_sum = 0.0;
    let mut mean_sum = 0.0;
    let mut max_worst = 0u64;
    for it in 0..iterations {
        let topo = Topology::single_hop(eps.clone(), rtt).unwrap();
        let out = run_coded(
            &topo,
            ProtocolParams::new(4, rtt, 2000),
            RecodeMode::SelectiveMix,
            MatchingPolicy::FixedTrue,
            acrlnc::derive_seed(11, &[it]),
            false,
        );
        let m = measure(&out.trace).expect("completed run");
        lambda_sum += m.lambda;
        mean_sum += m.mean_delay;
        max_worst = max_worst.max(m.max_delay);
    }
    let lambda = lambda_sum / iterations as f64;
    let sim_mean = mean_sum / iterations as f64;

    let inputs = BoundInputs::new(eps, rtt, 2.0).with_lambda(lambda).with_target_error(1e-3);
    let r = bound_report(&inputs).expect("bounds");

    println!("reference network, rtt {rtt}, {iterations} simulated iterations:");
    println!("  measured no-feedback fraction lambda = {lambda:.4}");
    println!();
    println!("  genie-aided delay floor     {:>8.2}", r.genie_delay_lb);
    println!("  flooding delay floor        {:>8.2}", r.prod_delay_lb);
    println!("  simulated mean delay        {:>8.2}", sim_mean);
    println!("  mean delay upper bound      {:>8.2}", r.mean_delay_ub);
    println!();
    println!("  max transmissions T_max     {:>8}", r.t_max);
    println!("  max delay upper bound       {:>8}", r.max_delay_ub);
    println!("  worst simulated max delay   {:>8}", max_worst);
    println!();
    println!(
        "  delay factors: mean/genie = {:.2}, bound/genie = {:.2}",
        sim_mean / r.genie_delay_lb,
        r.mean_delay_ub / r.genie_delay_lb
    );
}

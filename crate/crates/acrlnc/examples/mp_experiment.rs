//! The four-path single-hop comparison: the joint coded multipath protocol
//! against selective-repeat ARQ and against the single-path coded protocol
//! run independently per path. Prints one line per sweep cell with the
//! throughput and delay ratios. Scale down with `--quick` while exploring.
//!
//!     cargo run --release --example mp_experiment [-- --quick]

use acrlnc::config::{ExperimentConfig, ProtocolChoice};
use acrlnc::report::run_experiment;

fn main() {
    let quick = std::env::args().any(|a| a == "--quick");
    let mut cfg = ExperimentConfig::mp_reference();
    if quick {
        cfg.iterations = 10;
        cfg.packet_count = 1000;
        cfg.sweep[0].values = vec![0.1, 0.45, 0.8];
    } else {
        cfg.iterations = 50;
        cfg.packet_count = 2000;
    }

    println!(
        "multipath comparison: rtt {}, paths fixed at eps 0.2 / 0.8, {} iterations x {} packets",
        cfg.topology.rtt_slots, cfg.iterations, cfg.packet_count
    );
    let mp = run_experiment(&cfg, None).expect("multipath run");
    let sp = run_experiment(&cfg, Some(ProtocolChoice::SpAcrlncPerPath)).expect("per-path run");
    let arq = run_experiment(&cfg, Some(ProtocolChoice::SrArq)).expect("arq run");

    println!(
        "{:>6} | {:>22} | {:>21} | {:>21}",
        "eps12", "throughput (ratio)", "mean delay (ratio)", "max delay (ratio)"
    );
    for ((m, s), a) in mp.summaries.iter().zip(&sp.summaries).zip(&arq.summaries) {
        println!(
            "{:>6.2} | {:>5.2} vs arq {:>4.2} ({:>4.2}x) | {:>5.1} vs {:>6.1} ({:.2}x) | {:>5.0} vs {:>5.0} ({:.2}x)",
            m.sweep_a.unwrap_or(0.0),
            m.throughput_mean,
            a.throughput_mean,
            m.throughput_mean / a.throughput_mean,
            m.mean_delay_mean,
            a.mean_delay_mean,
            a.mean_delay_mean / m.mean_delay_mean,
            m.max_delay_mean,
            a.max_delay_mean,
            a.max_delay_mean / m.max_delay_mean,
        );
        println!(
            "       | vs per-path coded {:>4.2} ({:.2}x)               (per-path coded mean delay {:.1})",
            s.throughput_mean,
            m.throughput_mean / s.throughput_mean,
            s.mean_delay_mean,
        );
    }
}

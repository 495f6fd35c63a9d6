//! The three-hop comparison: the coded protocol with selective recoding at
//! the intermediate nodes, against the per-global-path baselines without
//! recoding (coded single path end to end, selective repeat end to end) and
//! hop-by-hop selective repeat.
//!
//!     cargo run --release --example mh_experiment [-- --quick]

use acrlnc::config::{ExperimentConfig, ProtocolChoice};
use acrlnc::multihop::{eta_max, min_cut_capacity, natural_match, RecodeMode};
use acrlnc::report::run_experiment;

fn main() {
    let quick = std::env::args().any(|a| a == "--quick");
    let mut cfg = ExperimentConfig::mh_reference();
    // sweep both erasure groups together: good, middling, bad channels
    let values = if quick { vec![0.1, 0.8] } else { vec![0.1, 0.45, 0.8] };
    cfg.sweep[0].values = values.clone();
    cfg.sweep[1].values = values.clone();
    cfg.iterations = if quick { 8 } else { 40 };
    cfg.packet_count = if quick { 800 } else { 2000 };

    println!(
        "multi-hop comparison: {} hops, rtt {}, {} iterations x {} packets",
        cfg.topology.hops, cfg.topology.rtt_slots, cfg.iterations, cfg.packet_count
    );

    let mh = run_experiment(&cfg, None).expect("recoded run");
    let sp = run_experiment(&cfg, Some(ProtocolChoice::SpAcrlncPerPath)).expect("sp run");
    let arq = run_experiment(&cfg, Some(ProtocolChoice::SrArq)).expect("arq run");
    let hbh = run_experiment(&cfg, Some(ProtocolChoice::SrArqHopByHop)).expect("hop-by-hop run");

    let mut fwd_cfg = cfg.clone();
    fwd_cfg.recode_mode = RecodeMode::ForwardOnly;
    let fwd = run_experiment(&fwd_cfg, None).expect("forwarding run");

    // diagonal cells only (both groups take the same value)
    let n = values.len();
    for (i, &v) in values.iter().enumerate() {
        let cell = i + n * i;
        let m = &mh.summaries[cell];
        let s = &sp.summaries[cell];
        let a = &arq.summaries[cell];
        let h = &hbh.summaries[cell];
        let f = &fwd.summaries[cell];
        let topo_eps = cfg.cells()[cell].eps.clone();
        let rates: Vec<Vec<f64>> =
            topo_eps.iter().map(|r| r.iter().map(|e| 1.0 - e).collect()).collect();
        let matching = natural_match(&rates).unwrap();
        println!("\neps1 = eps2 = {v}:");
        println!(
            "  matched global-path rate sum {:.2}, min-cut capacity {:.2}",
            eta_max(&matching, &rates),
            min_cut_capacity(&rates)
        );
        println!(
            "  throughput: recoded {:.2} | forwarded {:.2} | coded-sp e2e {:.2} ({:.2}x) | arq e2e {:.2} ({:.2}x) | arq hop-by-hop {:.2}",
            m.throughput_mean,
            f.throughput_mean,
            s.throughput_mean,
            m.throughput_mean / s.throughput_mean,
            a.throughput_mean,
            m.throughput_mean / a.throughput_mean,
            h.throughput_mean,
        );
        println!(
            "  mean delay: recoded {:.1} | coded-sp e2e {:.1} ({:.1}x) | arq e2e {:.1} ({:.1}x) | hop-by-hop {:.1} ({:.1}x)",
            m.mean_delay_mean,
            s.mean_delay_mean,
            s.mean_delay_mean / m.mean_delay_mean,
            a.mean_delay_mean,
            a.mean_delay_mean / m.mean_delay_mean,
            h.mean_delay_mean,
            h.mean_delay_mean / m.mean_delay_mean,
        );
    }
}

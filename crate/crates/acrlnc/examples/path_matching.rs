//! Global-path construction on a three-hop network: the natural matching,
//! its matrices, the throughput it recovers versus naive identity paths, and
//! a brute-force spot check of its optimality.
//!
//!     cargo run --release --example path_matching

use acrlnc::multihop::{
    balancing_objectives, brute_force_match, eta_max, min_cut_capacity, natural_match, Matching,
};
use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn print_matrix(name: &str, m: &[Vec<usize>]) {
    println!("  {name} =");
    for row in m {
        println!("    {row:?}");
    }
}

fn main() {
    // three hops, four paths; rates per path and hop
    let rates = vec![
        vec![0.7, 0.4, 0.7],
        vec![0.2, 0.6, 0.9],
        vec![0.8, 0.9, 0.2],
        vec![0.9, 0.7, 0.8],
    ];
    let natural = natural_match(&rates).unwrap();
    let identity = Matching::identity(4, 3);

    println!("link rates (rows = paths, columns = hops):");
    for row in &rates {
        println!("  {row:?}");
    }
    println!();
    print_matrix("local matching L", &natural.local_printed());
    print_matrix("global paths G", &natural.global_printed());
    println!();
    println!("  identity global paths:   {:.2} packets/slot", eta_max(&identity, &rates));
    println!("  naturally matched paths: {:.2} packets/slot", eta_max(&natural, &rates));
    println!("  min-cut capacity:        {:.2} packets/slot", min_cut_capacity(&rates));

    // brute-force optimality check on random instances
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for _ in 0..50 {
        let p = rng.gen_range(2..=5);
        let h = rng.gen_range(2..=4);
        let inst: Vec<Vec<f64>> = (0..p)
            .map(|_| (0..h).map(|_| (rng.gen_range(0..=10) as f64) / 10.0).collect())
            .collect();
        let nat = eta_max(&natural_match(&inst).unwrap(), &inst);
        let opt = eta_max(&brute_force_match(&inst).unwrap(), &inst);
        assert!((nat - opt).abs() < 1e-9, "natural matching missed the optimum on {inst:?}");
        checked += 1;
    }
    println!("\nnatural matching equals the brute-force optimum on {checked} random instances");

    // the two balancing objectives pick the same permutations
    let rin = [0.8, 0.2, 0.5];
    let rout = [0.3, 0.7, 0.6];
    let perms: Vec<Vec<usize>> = (0..3).permutations(3).collect();
    let best_min = perms
        .iter()
        .max_by(|a, b| {
            let (ma, _) = balancing_objectives(&rin, &rout, a);
            let (mb, _) = balancing_objectives(&rin, &rout, b);
            ma.partial_cmp(&mb).unwrap()
        })
        .unwrap();
    let best_diff = perms
        .iter()
        .min_by(|a, b| {
            let (_, da) = balancing_objectives(&rin, &rout, a);
            let (_, db) = balancing_objectives(&rin, &rout, b);
            da.partial_cmp(&db).unwrap()
        })
        .unwrap();
    println!(
        "balancing example: max-sum-of-mins permutation {best_min:?} = min-sum-of-differences permutation {best_diff:?}"
    );
}

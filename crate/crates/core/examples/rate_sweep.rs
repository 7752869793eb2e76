//! Measures block decode success versus flip probability for each code rate.
//! Usage: rate_sweep <n> <trials> <rate> <eps>...
use qkd_core::reconcile::*;
use qkd_core::seed::Seed;
use rand::Rng;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args[0].parse().unwrap();
    let trials: usize = args[1].parse().unwrap();
    let rate: f64 = args[2].parse().unwrap();
    for eps in args[3..].iter().map(|s| s.parse::<f64>().unwrap()) {
        let mut ok = 0;
        let mut iters = 0;
        for t in 0..trials {
            let seed = Seed::from_u64(t as u64 + 1000);
            let g = build_factor_graph(n, rate, seed.derive("g")).unwrap();
            let mut rng = seed.derive("k").rng();
            let a: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
            let b: Vec<u8> = a.iter().map(|&x| x ^ u8::from(rng.random::<f64>() < eps)).collect();
            let s = compute_syndrome(&a, &g).unwrap();
            if let Ok(d) = decode_with_known(&b, &s, &g, eps, 100, None) {
                if d.key == a { ok += 1; iters += d.iterations; }
            }
        }
        println!("rate {rate} eps {eps}: {ok}/{trials} mean iters {:.1}", iters as f64 / ok.max(1) as f64);
    }
}

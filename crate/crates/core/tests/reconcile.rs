use std::collections::HashSet;

use proptest::prelude::*;
use qkd_core::bits::xor;
use qkd_core::channel::{ClassicalChannel, Message};
use qkd_core::reconcile::*;
use qkd_core::seed::Seed;
use rand::Rng;

fn noisy_pair(n: usize, eps: f64, seed: Seed) -> (Vec<u8>, Vec<u8>) {
    let mut rng = seed.rng();
    let a: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
    let b = a.iter().map(|&x| x ^ u8::from(rng.random::<f64>() < eps)).collect();
    (a, b)
}

#[test]
fn graph_is_reproducible_and_sized() {
    let s = Seed::from_u64(1);
    let g1 = build_factor_graph(1024, 0.5, s).unwrap();
    let g2 = build_factor_graph(1024, 0.5, s).unwrap();
    assert_eq!(g1, g2);
    assert_eq!(g1.m, 512);
    assert_eq!(g1.adjacency_hash(), g2.adjacency_hash());
}

#[test]
fn distinct_seeds_give_distinct_graphs() {
    let mut hashes = HashSet::new();
    for k in 0..100u64 {
        let a = build_factor_graph(1024, 0.5, Seed::from_u64(2 * k)).unwrap();
        let b = build_factor_graph(1024, 0.5, Seed::from_u64(2 * k + 1)).unwrap();
        assert_ne!(a.adjacency_hash(), b.adjacency_hash());
        hashes.insert(a.adjacency_hash());
        hashes.insert(b.adjacency_hash());
    }
    assert_eq!(hashes.len(), 200);
}

#[test]
fn zero_error_takes_highest_rate() {
    let top = RATE_TABLE.iter().map(|&(_, r)| r).fold(0.0, f64::max);
    assert_eq!(rate_for_design(0.0).unwrap(), top);
    assert!(rate_for_error(0.0).unwrap() >= rate_for_error(0.027).unwrap());
    assert!(rate_for_error(0.027).unwrap() >= rate_for_error(0.08).unwrap());
    assert!(matches!(rate_for_error(0.2), Err(RateError::ErrorTooHigh(_))));
}

#[test]
fn clean_input_needs_no_correction() {
    let g = build_factor_graph(2048, 0.5, Seed::from_u64(3)).unwrap();
    let (a, _) = noisy_pair(2048, 0.0, Seed::from_u64(4));
    let s = compute_syndrome(&a, &g).unwrap();
    assert_eq!(decode(&a, &s, &g, 0.0, 50).unwrap(), a);
}

#[test]
fn base_error_rate_block_decodes() {
    let n = 10_000;
    let eps = 0.027;
    let rate = rate_for_error(eps).unwrap();
    let design = design_error(eps).unwrap();
    let mut ok = 0;
    for t in 0..30u64 {
        let seed = Seed::from_u64(500 + t);
        let (a, b) = noisy_pair(n, eps, seed.derive("keys"));
        let g = build_factor_graph(n, rate, seed.derive("graph")).unwrap();
        let s = compute_syndrome(&a, &g).unwrap();
        if decode(&b, &s, &g, design, DEFAULT_MAX_ITERS).is_ok_and(|k| k == a) {
            ok += 1;
        }
    }
    assert!(ok >= 29, "{ok}/30");
}

#[test]
fn twenty_percent_flips_fail() {
    let n = 10_000;
    let lowest = RATE_TABLE.iter().map(|&(_, r)| r).fold(1.0, f64::min);
    let (a, b) = noisy_pair(n, 0.2, Seed::from_u64(6));
    let g = build_factor_graph(n, lowest, Seed::from_u64(7)).unwrap();
    let s = compute_syndrome(&a, &g).unwrap();
    let r = decode(&b, &s, &g, 0.2, DEFAULT_MAX_ITERS);
    assert!(matches!(r, Err(DecodeError::DecodeFailure { .. })), "{r:?}");
    let mut ch = ClassicalChannel::new();
    let r = reconcile_keys(&a, &b, 0.2, DEFAULT_DESIGN_SUBSET, Seed::from_u64(8), &ReconcileConfig::default(), &mut ch);
    assert!(r.is_err());
}

#[test]
fn two_party_round_trip() {
    let n = 70_000;
    let (a, b) = noisy_pair(n, 0.03, Seed::from_u64(9));
    let mut ch = ClassicalChannel::new();
    let fg = Seed::from_u64(10);
    let r = reconcile_keys(&a, &b, 0.03, DEFAULT_DESIGN_SUBSET, fg, &ReconcileConfig::default(), &mut ch).unwrap();
    assert_eq!(r.alice, a);
    assert_eq!(r.bob, a);
    assert_eq!(r.blocks, 2);
    assert_eq!(r.corrected, qkd_core::bits::hamming(&a, &b));
    assert!((r.efficiency() - (1.0 - r.syndrome_bits as f64 / n as f64)).abs() < 1e-15);

    // Each syndrome on the wire is the one a graph rebuilt from the shared
    // seed produces for Alice's block.
    let sent: Vec<(u64, Vec<u8>)> = ch
        .log()
        .iter()
        .filter_map(|f| match Message::decode(&f.frame).unwrap().0 {
            Message::Syndrome { graph, bits, .. } => Some((graph, bits)),
            _ => None,
        })
        .collect();
    let sizes = block_sizes(n, MAX_BLOCK_BITS);
    assert_eq!(sent.len(), sizes.len());
    let mut start = 0;
    for (i, (&len, (graph, bits))) in sizes.iter().zip(&sent).enumerate() {
        let g = build_factor_graph(len, r.rate, fg.derive(&format!("block/{i}"))).unwrap();
        assert_eq!(*graph, g.identity());
        let s = compute_syndrome(&a[start..start + len], &g).unwrap();
        assert_eq!(&s.bits, bits);
        start += len;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn syndrome_is_linear(seed in any::<u64>(), n in 256usize..1500) {
        let g = build_factor_graph(n, 0.5, Seed::from_u64(seed)).unwrap();
        let (a, b) = noisy_pair(n, 0.5, Seed::from_u64(seed ^ 0x5a5a));
        let sa = compute_syndrome(&a, &g).unwrap();
        let sb = compute_syndrome(&b, &g).unwrap();
        let sx = compute_syndrome(&xor(&a, &b), &g).unwrap();
        prop_assert_eq!(sx.bits, xor(&sa.bits, &sb.bits));
    }

    #[test]
    fn single_flip_touches_exactly_its_checks(seed in any::<u64>(), v in 0usize..512) {
        let g = build_factor_graph(512, 0.5, Seed::from_u64(seed)).unwrap();
        let zero = vec![0u8; 512];
        let mut one = zero.clone();
        one[v] = 1;
        let s = compute_syndrome(&one, &g).unwrap();
        let hit: Vec<u32> = (0..g.m as u32).filter(|&c| s.bits[c as usize] == 1).collect();
        prop_assert_eq!(&hit, &g.vars[v]);
    }

    #[test]
    fn degrees_and_no_repeated_edges(seed in any::<u64>(), n in 256usize..3000, ri in 0usize..12) {
        let rate = RATE_TABLE[ri].1;
        let g = build_factor_graph(n, rate, Seed::from_u64(seed)).unwrap();
        prop_assert_eq!(g.m, check_count(n, rate));
        for vs in &g.vars {
            prop_assert!(vs.len() >= 2);
            prop_assert!(vs.windows(2).all(|w| w[0] < w[1]));
        }
        for cs in &g.checks {
            let set: HashSet<_> = cs.iter().collect();
            prop_assert_eq!(set.len(), cs.len());
        }
        prop_assert_eq!(g.edge_count(), g.vars.iter().map(Vec::len).sum::<usize>());
    }
}

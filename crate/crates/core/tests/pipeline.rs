use std::io::{self, Write};

use qkd_core::params::SystemParams;
use qkd_core::pipeline::*;
use qkd_core::seed::Seed;
use qkd_core::sweep::*;

fn config(values: &[f64], seconds: f64, reps: usize, seed: u64) -> RunConfig {
    RunConfig {
        values: values.to_vec(),
        seconds,
        reps,
        seed: Seed::from_u64(seed),
        ..RunConfig::default()
    }
}

fn csv_of(cfg: &RunConfig) -> (Vec<SweepRow>, Vec<u8>) {
    let mut out = Vec::new();
    let rows = match cfg.axis {
        SweepAxis::Background => sweep_background(cfg, None, &mut out).unwrap(),
        SweepAxis::Gate => sweep_gate(cfg, None, &mut out).unwrap(),
    };
    (rows, out)
}

#[test]
fn same_seed_same_bytes() {
    let cfg = config(&[0.0, 20_000.0], 0.3, 1, 1);
    let (rows, a) = csv_of(&cfg);
    let (_, b) = csv_of(&cfg);
    assert_eq!(a, b);
    let (_, c) = csv_of(&config(&[0.0, 20_000.0], 0.3, 1, 2));
    assert_ne!(a, c);

    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    for line in lines {
        assert_eq!(line.split(',').count(), CSV_HEADER.len());
    }
    assert!(rows.iter().all(|r| r.report.succeeded() && r.report.keys_match));
}

/// One-sided Spearman permutation test of a negative association.
fn spearman_negative_p(x: &[f64], y: &[f64], seed: Seed) -> (f64, f64) {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0 + 1.0;
            }
            i = j + 1;
        }
        r
    }
    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }
    let (rx, mut ry) = (ranks(x), ranks(y));
    let rho = pearson(&rx, &ry);
    let mut rng = seed.rng();
    let trials = 20_000;
    let mut as_low = 0;
    for _ in 0..trials {
        rand::seq::SliceRandom::shuffle(ry.as_mut_slice(), &mut rng);
        if pearson(&rx, &ry) <= rho {
            as_low += 1;
        }
    }
    (rho, (as_low + 1) as f64 / (trials + 1) as f64)
}

#[test]
fn secret_rate_falls_with_background() {
    let cfg = config(&DEFAULT_BACKGROUNDS, 1.0, 3, 3);
    let (rows, _) = csv_of(&cfg);
    let b: Vec<f64> = rows.iter().map(|r| r.report.background).collect();
    let s: Vec<f64> = rows.iter().map(|r| r.report.secret_bits_per_s).collect();
    let (rho, p) = spearman_negative_p(&b, &s, Seed::from_u64(4));
    assert!(rho < 0.0 && p < 0.01, "rho {rho} p {p}");
    // Means per grid point fall strictly.
    let means: Vec<f64> = s.chunks(3).map(|c| c.iter().sum::<f64>() / 3.0).collect();
    assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
}

#[test]
fn zero_background_error_near_base() {
    let (rows, _) = csv_of(&config(&[0.0], 1.0, 1, 5));
    let e = rows[0].report.epsilon;
    assert!((e - 0.027).abs() < 0.005, "{e}");
}

#[test]
fn gate_sweep_counts_grow_with_gate() {
    let cfg = RunConfig {
        axis: SweepAxis::Gate,
        values: DEFAULT_GATES_NS.to_vec(),
        backgrounds: vec![0.0, 15_000.0],
        seconds: 0.5,
        reps: 1,
        seed: Seed::from_u64(6),
        ..RunConfig::default()
    };
    let (rows, _) = csv_of(&cfg);
    assert_eq!(rows.len(), 6);
    for point in rows.chunks(3) {
        for w in point.windows(2) {
            assert!(w[1].report.gated_events >= w[0].report.gated_events);
            assert!(w[1].report.sifted_rate >= w[0].report.sifted_rate);
        }
        let best = point[0].best_gate_ns.unwrap();
        assert!(point.iter().all(|r| r.best_gate_ns == Some(best)));
        assert!(DEFAULT_GATES_NS.contains(&best));
    }
}

#[test]
fn full_period_gate_keeps_every_tag() {
    let mut p = SystemParams::default();
    p.pulse_jitter_rms_s = 0.0;
    let link = simulate_link(&p, 0.0, 0.2, Seed::from_u64(7)).unwrap();
    p.gate_width_s = p.pulse_period_s;
    let mut stores = KeyStores::in_memory(4096, Seed::from_u64(8));
    let r = process_link(&link, &p, 0.0, &mut stores, Seed::from_u64(9));
    assert_eq!(r.gated_events, link.bob.stream.len());
}

#[test]
fn injected_error_fails_at_estimation() {
    let mut cfg = config(&[0.0], 0.3, 1, 10);
    cfg.params.base_ber_per_channel = [0.14; 4];
    let (rows, out) = csv_of(&cfg);
    let f = rows[0].report.failure.as_ref().unwrap();
    assert_eq!(f.stage, Stage::EstimateError);
    let text = String::from_utf8(out).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let col = |name: &str| row[CSV_HEADER.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("status"), "failed");
    assert_eq!(col("fail_stage"), "estimate_error");
    assert_eq!(col("n_fin"), "0");
}

#[test]
fn shared_stores_are_spent_and_topped_up() {
    let cfg = config(&[0.0, 10_000.0], 0.3, 1, 11);
    let mut stores = KeyStores::in_memory(1_000, Seed::from_u64(12));
    let mut out = Vec::new();
    let rows = sweep_background(&cfg, Some(&mut stores), &mut out).unwrap();
    let cost = stores.cost.total();
    let mut remaining = 1_000;
    for r in &rows {
        assert!(r.report.keys_match);
        remaining = remaining - cost + r.report.n_fin.div_ceil(8);
        assert_eq!(r.report.otp_remaining, remaining);
    }
    assert_eq!(stores.alice.remaining(), stores.bob.remaining());
}

#[test]
fn exhausted_pad_gives_budget_failure() {
    let cfg = config(&[0.0], 0.2, 1, 13);
    let mut stores = KeyStores::in_memory(100, Seed::from_u64(14));
    let rows = sweep_background(&cfg, Some(&mut stores), io::sink()).unwrap();
    assert_eq!(rows[0].report.failure.as_ref().unwrap().stage, Stage::Budget);
    assert_eq!(stores.alice.remaining(), 100);
}

/// Accepts `limit` bytes, then fails every write.
struct Failing {
    kept: Vec<u8>,
    limit: usize,
}

impl Write for &mut Failing {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if self.kept.len() + buf.len() > self.limit {
            return Err(io::Error::other("disk full"));
        }
        self.kept.extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

#[test]
fn finished_rows_survive_a_failed_sweep() {
    let cfg = config(&[0.0, 5_000.0, 10_000.0], 0.2, 1, 15);
    let (_, full) = csv_of(&cfg);
    let text = String::from_utf8(full).unwrap();
    let first_two: usize = text.lines().take(3).map(|l| l.len() + 1).sum();
    let mut sink = Failing {
        kept: Vec::new(),
        limit: first_two + 10,
    };
    assert!(sweep_background(&cfg, None, &mut sink).is_err());
    assert_eq!(sink.kept, text.as_bytes()[..first_two]);
}

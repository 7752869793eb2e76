#![allow(dead_code)]

use std::path::Path;

use qkd_core::otp::{CrashPoint, OtpStore, Purpose};
use qkd_core::seed::Seed;
use rand::Rng;

const CRASHES: [CrashPoint; 4] = [
    CrashPoint::BeforeWrite,
    CrashPoint::TornTempWrite,
    CrashPoint::BeforeRename,
    CrashPoint::AfterRename,
];
const PURPOSES: [Purpose; 4] = [Purpose::FgSeed, Purpose::PaSeed, Purpose::Auth, Purpose::Export];

/// Runs one random sequence of consumes, top-ups and injected crashes
/// against a store file in `dir`, reopening from disk after every crash.
///
/// Checks that every byte handed out comes from the right pad position and
/// that no pad position is handed out twice.
pub fn crash_sequence(dir: &Path, seed: Seed, ops: usize) -> Result<(), String> {
    let mut rng = seed.rng();
    let path = dir.join(format!("{}.otp", seed.to_hex()));
    let mut truth: Vec<u8> = (0..rng.random_range(64..512)).map(|_| rng.random()).collect();
    let mut store = OtpStore::create(&path, truth.clone()).map_err(|e| e.to_string())?;
    // Highest pad position already served, plus one.
    let mut served_end = 0u64;

    for step in 0..ops {
        let crash = rng.random_bool(0.3).then(|| CRASHES[rng.random_range(0..4)]);
        if let Some(c) = crash {
            store.inject_crash(c);
        }
        let consume = rng.random_bool(0.7);
        let before = store.consumed_offset();
        let result = if consume {
            let n = rng.random_range(1..64);
            let purpose = PURPOSES[rng.random_range(0..4)];
            store.consume(n, purpose).map(Some)
        } else {
            let extra: Vec<u8> = (0..rng.random_range(1..128)).map(|_| rng.random()).collect();
            let r = store.top_up(&extra).map(|_| None);
            // A crash after the rename still commits the top-up.
            if r.is_ok() || crash == Some(CrashPoint::AfterRename) {
                truth.extend_from_slice(&extra);
            }
            r
        };
        match result {
            Ok(Some(bytes)) => {
                if before < served_end {
                    return Err(format!("step {step}: offset {before} already served up to {served_end}"));
                }
                let start = before as usize;
                if bytes[..] != truth[start..start + bytes.len()] {
                    return Err(format!("step {step}: wrong bytes at {start}"));
                }
                served_end = before + bytes.len() as u64;
            }
            Ok(None) => {}
            Err(_) => {
                drop(store);
                store = OtpStore::open(&path).map_err(|e| format!("step {step}: reopen: {e}"))?;
                if store.consumed_offset() < served_end {
                    return Err(format!("step {step}: offset rolled back below {served_end}"));
                }
                if store.pad_len() != truth.len() {
                    return Err(format!("step {step}: pad {} vs {}", store.pad_len(), truth.len()));
                }
            }
        }
        let mut entries = store.ledger().to_vec();
        entries.sort_by_key(|e| e.offset);
        if entries.windows(2).any(|w| w[0].offset + w[0].length > w[1].offset) {
            return Err(format!("step {step}: overlapping ledger entries"));
        }
    }
    Ok(())
}

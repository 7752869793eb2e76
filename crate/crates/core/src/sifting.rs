//! BB84 sifting and error estimation over the public channel.

use std::collections::HashSet;

use rand::seq::index;

use crate::channel::{ClassicalChannel, Direction, Message};
use crate::photonics::AliceRecord;
use crate::seed::Seed;
use crate::sync::{AlignmentResult, GatedEvents};

/// Error rate above which an eavesdropper is assumed and the run aborted.
pub const QBER_ABORT_THRESHOLD: f64 = 0.11;
/// Shortest sifted key on which an error estimate is attempted.
pub const MIN_ESTIMATION_KEY: usize = 500;
pub const DEFAULT_SUBSET_FRACTION: f64 = 0.25;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SiftError {
    #[error("estimated error rate {epsilon:.4} exceeds threshold {threshold}")]
    QberAboveThreshold { epsilon: f64, threshold: f64 },
    #[error("sifted key of {got} bits is shorter than the minimum {need}")]
    KeyTooShort { got: usize, need: usize },
    #[error("alice and bob keys disagree in length or positions")]
    KeyMismatch,
    #[error("subset fraction {0} outside (0, 1)")]
    BadFraction(f64),
}

/// One party's sifted key.
#[derive(Debug, Clone, PartialEq)]
pub struct SiftedKey {
    /// One bit per element.
    pub bits: Vec<u8>,
    /// Bob's slot of each bit (identical lists at both parties).
    pub pulse_slots: Vec<i64>,
    /// Sifted bits received, before any were spent on estimation.
    pub n_rec: usize,
    pub estimated_error: f64,
    /// Bits removed from the key to estimate the error rate.
    pub n_err: usize,
    /// Bits already disclosed on the channel (alignment); excluded from the final key.
    pub revealed_mask: Vec<bool>,
}

impl SiftedKey {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Runs the basis announcement and match reply and returns the sifted keys
/// of Alice and Bob, in that order.
///
/// Slots in which Bob saw more than one click are dropped before announcing.
/// Slots that fall outside Alice's record (background before or after her
/// transmission) never match.
pub fn sift(
    bob_events: &GatedEvents,
    alignment: &AlignmentResult,
    alice: &AliceRecord,
    channel: &mut ClassicalChannel,
) -> (SiftedKey, SiftedKey) {
    let events = &bob_events.events;
    // events are sorted by slot; keep only slots with exactly one click.
    let mut singles = Vec::with_capacity(events.len());
    let mut i = 0;
    while i < events.len() {
        let mut j = i + 1;
        while j < events.len() && events[j].slot == events[i].slot {
            j += 1;
        }
        if j == i + 1 {
            singles.push(events[i]);
        }
        i = j;
    }

    let announce: Vec<_> = singles
        .iter()
        .map(|e| (e.slot, e.polarization().basis()))
        .collect();
    let announce = match channel.send(Direction::BobToAlice, &Message::BasisAnnounce(announce)) {
        Message::BasisAnnounce(a) => a,
        _ => unreachable!(),
    };

    // Alice's side.
    let offset = alignment.start_offset_pulses;
    let matched: Vec<i64> = announce
        .iter()
        .filter(|(slot, basis)| {
            let i = slot + offset;
            i >= 0 && (i as usize) < alice.len() && alice.basis(i as usize) == *basis
        })
        .map(|(slot, _)| *slot)
        .collect();
    let alice_bits: Vec<u8> = matched
        .iter()
        .map(|s| alice.bit((s + offset) as usize))
        .collect();
    let matched = match channel.send(Direction::AliceToBob, &Message::MatchReply(matched)) {
        Message::MatchReply(m) => m,
        _ => unreachable!(),
    };

    // Bob's side: `matched` is a subsequence of his announcement.
    let mut bob_bits = Vec::with_capacity(matched.len());
    let mut k = 0;
    for slot in &matched {
        while singles[k].slot != *slot {
            k += 1;
        }
        bob_bits.push(singles[k].polarization().bit());
    }

    let revealed: HashSet<i64> = alignment.revealed.iter().map(|r| r.slot).collect();
    let mask: Vec<bool> = matched.iter().map(|s| revealed.contains(s)).collect();
    let n = matched.len();
    let make = |bits: Vec<u8>| SiftedKey {
        bits,
        pulse_slots: matched.clone(),
        n_rec: n,
        estimated_error: 0.0,
        n_err: 0,
        revealed_mask: mask.clone(),
    };
    (make(alice_bits), make(bob_bits))
}

/// Result of [`estimate_error`].
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorEstimate {
    pub epsilon: f64,
    pub n_err: usize,
    pub alice: SiftedKey,
    pub bob: SiftedKey,
}

/// Compares a random subset of the sifted keys in public and removes it.
///
/// The subset always contains the positions already revealed during
/// alignment and is topped up with random positions until it covers
/// `subset_fraction` of the key. The estimate is the fraction of subset
/// positions where the two keys disagree.
pub fn estimate_error(
    alice: &SiftedKey,
    bob: &SiftedKey,
    subset_fraction: f64,
    seed: Seed,
    channel: &mut ClassicalChannel,
) -> Result<ErrorEstimate, SiftError> {
    if !(subset_fraction > 0.0 && subset_fraction < 1.0) {
        return Err(SiftError::BadFraction(subset_fraction));
    }
    if alice.len() != bob.len() || alice.pulse_slots != bob.pulse_slots {
        return Err(SiftError::KeyMismatch);
    }
    let n = alice.len();
    if n < MIN_ESTIMATION_KEY {
        return Err(SiftError::KeyTooShort {
            got: n,
            need: MIN_ESTIMATION_KEY,
        });
    }

    let mut in_subset = bob.revealed_mask.clone();
    let already = in_subset.iter().filter(|&&r| r).count();
    let target = ((subset_fraction * n as f64).ceil() as usize).max(already);
    let free: Vec<usize> = (0..n).filter(|&i| !in_subset[i]).collect();
    let mut rng = seed.rng();
    for k in index::sample(&mut rng, free.len(), target - already) {
        in_subset[free[k]] = true;
    }
    let positions: Vec<u32> = (0..n).filter(|&i| in_subset[i]).map(|i| i as u32).collect();

    // Bob reveals his subset bits; Alice compares with hers.
    let bob_subset: Vec<u8> = positions.iter().map(|&p| bob.bits[p as usize]).collect();
    let received = channel.send(
        Direction::BobToAlice,
        &Message::SubsetReveal {
            positions,
            bits: bob_subset,
        },
    );
    let Message::SubsetReveal { positions, bits } = received else {
        unreachable!()
    };
    let wrong = positions
        .iter()
        .zip(&bits)
        .filter(|(&p, &b)| alice.bits[p as usize] != b)
        .count();
    let n_err = positions.len();
    let epsilon = wrong as f64 / n_err as f64;

    let trim = |key: &SiftedKey| {
        let keep: Vec<usize> = (0..n).filter(|&i| !in_subset[i]).collect();
        SiftedKey {
            bits: keep.iter().map(|&i| key.bits[i]).collect(),
            pulse_slots: keep.iter().map(|&i| key.pulse_slots[i]).collect(),
            n_rec: key.n_rec,
            estimated_error: epsilon,
            n_err: key.n_err + n_err,
            revealed_mask: vec![false; keep.len()],
        }
    };
    if epsilon > QBER_ABORT_THRESHOLD {
        return Err(SiftError::QberAboveThreshold {
            epsilon,
            threshold: QBER_ABORT_THRESHOLD,
        });
    }
    Ok(ErrorEstimate {
        epsilon,
        n_err,
        alice: trim(alice),
        bob: trim(bob),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Polarization, SystemParams};
    use crate::photonics::generate_alice_record;
    use crate::sync::{GatedEvent, RevealedEvent};

    fn gated(events: Vec<GatedEvent>) -> GatedEvents {
        GatedEvents {
            events,
            recovered_period_s: 200e-9,
            histogram_bin_s: 0.5e-9,
            phase_histogram: vec![],
            drift_intervals: 1,
        }
    }

    fn key(bits: Vec<u8>) -> SiftedKey {
        let n = bits.len();
        SiftedKey {
            bits,
            pulse_slots: (0..n as i64).collect(),
            n_rec: n,
            estimated_error: 0.0,
            n_err: 0,
            revealed_mask: vec![false; n],
        }
    }

    fn no_align(offset: i64) -> AlignmentResult {
        AlignmentResult {
            start_offset_pulses: offset,
            match_score: 1.0,
            runner_up_score: 0.5,
            revealed: vec![],
        }
    }

    #[test]
    fn single_matching_event() {
        let alice = generate_alice_record(&SystemParams::default(), 10, Seed::from_u64(4)).unwrap();
        let state = alice.states[7];
        let ev = GatedEvent {
            slot: 2,
            detector: state as u8,
            tag_index: 0,
        };
        let mut ch = ClassicalChannel::new();
        let (a, b) = sift(&gated(vec![ev]), &no_align(5), &alice, &mut ch);
        assert_eq!(a.bits, vec![state.bit()]);
        assert_eq!(a.bits, b.bits);
        assert_eq!(a.pulse_slots, vec![2]);
        assert_eq!(ch.log().len(), 2);
    }

    #[test]
    fn wrong_basis_double_fire_and_out_of_range_are_dropped() {
        let alice = generate_alice_record(&SystemParams::default(), 10, Seed::from_u64(4)).unwrap();
        let conj = |i: usize| Polarization::from_index(alice.states[i].index() ^ 1) as u8;
        let same = |i: usize| alice.states[i] as u8;
        let events = vec![
            GatedEvent { slot: 0, detector: conj(0), tag_index: 0 },
            GatedEvent { slot: 1, detector: same(1), tag_index: 1 },
            GatedEvent { slot: 1, detector: conj(1), tag_index: 2 },
            GatedEvent { slot: 3, detector: same(3), tag_index: 3 },
            GatedEvent { slot: 12, detector: 0, tag_index: 4 },
            GatedEvent { slot: -1, detector: 0, tag_index: 5 },
        ];
        let mut ch = ClassicalChannel::new();
        let (a, b) = sift(&gated(events), &no_align(0), &alice, &mut ch);
        assert_eq!(a.pulse_slots, vec![3]);
        assert_eq!(a.bits, b.bits);
    }

    #[test]
    fn revealed_alignment_slots_are_masked() {
        let alice = generate_alice_record(&SystemParams::default(), 10, Seed::from_u64(4)).unwrap();
        let events: Vec<_> = (0..10)
            .map(|i| GatedEvent {
                slot: i,
                detector: alice.states[i as usize] as u8,
                tag_index: i as usize,
            })
            .collect();
        let mut align = no_align(0);
        align.revealed = vec![RevealedEvent {
            slot: 4,
            bit: alice.bit(4),
            basis: alice.basis(4),
        }];
        let (a, _) = sift(&gated(events), &align, &alice, &mut ClassicalChannel::new());
        assert_eq!(a.revealed_mask.iter().filter(|&&m| m).count(), 1);
        assert!(a.revealed_mask[4]);
    }

    #[test]
    fn identical_keys_give_zero_error_and_trim_subset() {
        let bits: Vec<u8> = (0..1000).map(|i| (i * 7 % 3 == 0) as u8).collect();
        let a = key(bits.clone());
        let mut ch = ClassicalChannel::new();
        let est = estimate_error(&a, &a, 0.25, Seed::from_u64(1), &mut ch).unwrap();
        assert_eq!(est.epsilon, 0.0);
        assert_eq!(est.n_err, 250);
        assert_eq!(est.alice.len(), 750);
        assert_eq!(est.alice.n_rec, est.alice.len() + est.alice.n_err);
        assert_eq!(est.alice, est.bob);
    }

    #[test]
    fn high_error_aborts() {
        let a = key(vec![0; 1000]);
        let mut bits = vec![0u8; 1000];
        for b in bits.iter_mut().step_by(5) {
            *b = 1;
        }
        let b = key(bits);
        let err = estimate_error(&a, &b, 0.25, Seed::from_u64(1), &mut ClassicalChannel::new()).unwrap_err();
        assert!(matches!(err, SiftError::QberAboveThreshold { epsilon, .. } if epsilon > 0.15));
    }

    #[test]
    fn short_or_mismatched_keys_rejected() {
        let a = key(vec![0; 100]);
        assert_eq!(
            estimate_error(&a, &a, 0.25, Seed::from_u64(1), &mut ClassicalChannel::new()),
            Err(SiftError::KeyTooShort { got: 100, need: 500 })
        );
        let b = key(vec![0; 600]);
        let c = key(vec![0; 601]);
        assert_eq!(
            estimate_error(&b, &c, 0.25, Seed::from_u64(1), &mut ClassicalChannel::new()),
            Err(SiftError::KeyMismatch)
        );
        assert_eq!(
            estimate_error(&b, &b, 1.0, Seed::from_u64(1), &mut ClassicalChannel::new()),
            Err(SiftError::BadFraction(1.0))
        );
    }
}

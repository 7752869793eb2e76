//! Block-wise reconciliation of two sifted keys over the public channel.

use sha2::{Digest, Sha256};

use super::decode::{compute_syndrome, decode_with_known, DecodeError};
use super::graph::{build_factor_graph, GraphError};
use super::rate_table::{design_error_for, rate_for_design, RateError};
use crate::channel::{ClassicalChannel, Direction, Message};
use crate::seed::Seed;

/// Largest block handed to one decoder.
pub const MAX_BLOCK_BITS: usize = 1 << 16;
/// Shortest block; shorter keys are padded with public zeros.
pub const MIN_BLOCK_BITS: usize = 256;
pub const DEFAULT_MAX_ITERS: usize = 100;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ReconcileError {
    #[error("keys differ in length ({alice} vs {bob})")]
    LengthMismatch { alice: usize, bob: usize },
    #[error("nothing to reconcile")]
    Empty,
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("block {block}: {source}")]
    Decode { block: usize, source: DecodeError },
    #[error("block {block}: verification hash mismatch")]
    HashMismatch { block: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconcileConfig {
    pub max_block_bits: usize,
    pub max_iters: usize,
}

impl Default for ReconcileConfig {
    fn default() -> Self {
        ReconcileConfig {
            max_block_bits: MAX_BLOCK_BITS,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconciled {
    pub alice: Vec<u8>,
    /// Bob's corrected key; equal to `alice` whenever this struct is returned.
    pub bob: Vec<u8>,
    /// Total syndrome bits sent (`n_syn`).
    pub syndrome_bits: usize,
    pub rate: f64,
    pub design_error: f64,
    pub blocks: usize,
    /// Bits Bob actually changed.
    pub corrected: usize,
    pub iterations: usize,
}

impl Reconciled {
    /// `1 - n_syn / n` over the reconciled bits.
    pub fn efficiency(&self) -> f64 {
        if self.alice.is_empty() {
            return 0.0;
        }
        1.0 - self.syndrome_bits as f64 / self.alice.len() as f64
    }
}

/// 64-bit verification hash of a block.
pub fn block_hash(block: usize, bits: &[u8]) -> u64 {
    let mut h = Sha256::new();
    h.update((block as u64).to_be_bytes());
    h.update((bits.len() as u64).to_be_bytes());
    h.update(crate::bits::pack(bits));
    u64::from_be_bytes(h.finalize()[..8].try_into().unwrap())
}

/// Splits `n` bits into the fewest blocks of at most `max` bits, sizes
/// differing by at most one.
pub fn block_sizes(n: usize, max: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let k = n.div_ceil(max.max(1));
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// Reconciles Bob's key to Alice's.
///
/// `epsilon` is the estimated error rate and `subset_size` the number of bits
/// it was measured on; together they fix the design error and the code rate.
/// Each block uses the graph seeded by `fg_seed.derive("block/<i>")`.
pub fn reconcile_keys(
    alice: &[u8],
    bob: &[u8],
    epsilon: f64,
    subset_size: usize,
    fg_seed: Seed,
    cfg: &ReconcileConfig,
    channel: &mut ClassicalChannel,
) -> Result<Reconciled, ReconcileError> {
    if alice.len() != bob.len() {
        return Err(ReconcileError::LengthMismatch {
            alice: alice.len(),
            bob: bob.len(),
        });
    }
    if alice.is_empty() {
        return Err(ReconcileError::Empty);
    }
    let design = design_error_for(epsilon, subset_size)?;
    let rate = rate_for_design(design)?;

    let mut out_bob = Vec::with_capacity(bob.len());
    let mut syndrome_bits = 0;
    let mut iterations = 0;
    let mut start = 0;
    let sizes = block_sizes(alice.len(), cfg.max_block_bits);
    for (i, &len) in sizes.iter().enumerate() {
        let n = len.max(MIN_BLOCK_BITS);
        let mut a = alice[start..start + len].to_vec();
        let mut b = bob[start..start + len].to_vec();
        a.resize(n, 0);
        b.resize(n, 0);
        let known: Vec<bool> = (0..n).map(|v| v >= len).collect();
        start += len;

        let seed = fg_seed.derive(&format!("block/{i}"));
        let graph = build_factor_graph(n, rate, seed)?;
        let syn = compute_syndrome(&a, &graph).map_err(|source| ReconcileError::Decode { block: i, source })?;
        let Message::Syndrome { n: rn, m: _, graph: gid, bits } = channel.send(
            Direction::AliceToBob,
            &Message::Syndrome {
                n: syn.n as u32,
                m: syn.bits.len() as u32,
                graph: syn.graph,
                bits: syn.bits.clone(),
            },
        ) else {
            unreachable!()
        };
        syndrome_bits += bits.len();
        let received = super::Syndrome {
            bits,
            n: rn as usize,
            graph: gid,
        };
        let decoded = decode_with_known(&b, &received, &graph, design, cfg.max_iters, Some(&known))
            .map_err(|source| ReconcileError::Decode { block: i, source })?;
        iterations += decoded.iterations;

        let Message::HashCheck(h) = channel.send(Direction::AliceToBob, &Message::HashCheck(block_hash(i, &a[..len])))
        else {
            unreachable!()
        };
        if h != block_hash(i, &decoded.key[..len]) {
            return Err(ReconcileError::HashMismatch { block: i });
        }
        out_bob.extend_from_slice(&decoded.key[..len]);
    }

    let corrected = crate::bits::hamming(bob, &out_bob);
    Ok(Reconciled {
        alice: alice.to_vec(),
        bob: out_bob,
        syndrome_bits,
        rate,
        design_error: design,
        blocks: sizes.len(),
        corrected,
        iterations,
    })
}

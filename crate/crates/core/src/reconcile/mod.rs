//! Information reconciliation with seeded LDPC codes.
//!
//! Alice sends a single syndrome per block; Bob runs belief propagation to
//! move his key onto the coset it names, then both compare a 64-bit hash.

mod decode;
mod graph;
mod procedure;
mod rate_table;

pub use decode::{compute_syndrome, decode, decode_with_known, DecodeError, Decoded, Syndrome};
pub use graph::{build_factor_graph, check_count, FactorGraph, GraphError, VARIABLE_DEGREE};
pub use procedure::{
    block_hash, block_sizes, reconcile_keys, ReconcileConfig, ReconcileError, Reconciled, DEFAULT_MAX_ITERS,
    MAX_BLOCK_BITS, MIN_BLOCK_BITS,
};
pub use rate_table::{
    design_error, design_error_for, rate_for_design, rate_for_error, RateError, DEFAULT_DESIGN_SUBSET, RATE_TABLE,
};

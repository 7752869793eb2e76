//! Seeded construction of the sparse parity-check structure.
//!
//! Both parties rebuild the graph from `(n, rate, seed)`; only `n` and the
//! rate travel over the channel. The construction is a pure function of the
//! [`SeedStream`](crate::seed::SeedStream) draws, in this order:
//!
//! 1. `m = round(n * (1 - rate))`. Every variable gets degree 3, so there are
//!    `E = 3n` edge sockets. Variable socket `s` belongs to variable `s / 3`.
//!    Check `c` owns `floor(E / m)` consecutive sockets, and the first
//!    `E mod m` checks own one more.
//! 2. A permutation `π` of `0..E` starts as the identity and is shuffled by
//!    Fisher-Yates from the top: for `i = E-1` down to `1`, `j = below(i+1)`,
//!    swap `π[i]` and `π[j]`. Check socket `k` connects to variable `π[k] / 3`.
//! 3. Repair of repeated edges: sockets are scanned in order `k = 0..E`.
//!    If the variable at `k` already appears at an earlier-scanned or later
//!    socket of the same check, draw `j = below(E)` until `j` lies in a
//!    different check, neither swap endpoint would create a repeat, and then
//!    swap `π[k]` and `π[j]`. The scan repeats until a pass makes no swap.

use sha2::{Digest, Sha256};

use crate::seed::Seed;

pub const VARIABLE_DEGREE: usize = 3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GraphError {
    #[error("rate {rate} infeasible for n = {n}: m = {m} checks")]
    RateInfeasible { n: usize, rate: f64, m: usize },
    #[error("block length {0} below the minimum 256")]
    TooShort(usize),
}

/// Bipartite variable/check structure of a column-weight-3 LDPC code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorGraph {
    pub n: usize,
    pub m: usize,
    /// Variables of each check, in socket order.
    pub checks: Vec<Vec<u32>>,
    /// Checks of each variable, ascending.
    pub vars: Vec<Vec<u32>>,
    pub seed_fingerprint: u64,
}

pub fn check_count(n: usize, rate: f64) -> usize {
    (n as f64 * (1.0 - rate)).round() as usize
}

/// Builds the graph for `n` variables at `target_rate` from `seed`.
pub fn build_factor_graph(n: usize, target_rate: f64, seed: Seed) -> Result<FactorGraph, GraphError> {
    if n < 256 {
        return Err(GraphError::TooShort(n));
    }
    let m = if target_rate > 0.0 && target_rate < 1.0 {
        check_count(n, target_rate)
    } else {
        0
    };
    if m < VARIABLE_DEGREE || m >= n {
        return Err(GraphError::RateInfeasible {
            n,
            rate: target_rate,
            m,
        });
    }
    let e = VARIABLE_DEGREE * n;
    let base = e / m;
    let extra = e % m;
    let mut owner = Vec::with_capacity(e);
    let mut starts = Vec::with_capacity(m + 1);
    for c in 0..m {
        starts.push(owner.len());
        let deg = base + usize::from(c < extra);
        owner.extend(std::iter::repeat_n(c as u32, deg));
    }
    starts.push(e);

    let mut stream = seed.stream();
    let mut perm: Vec<u32> = (0..e as u32).collect();
    for i in (1..e).rev() {
        let j = stream.below(i as u32 + 1) as usize;
        perm.swap(i, j);
    }
    let var = |p: u32| p / VARIABLE_DEGREE as u32;

    let count_in = |perm: &[u32], c: usize, v: u32, skip: usize| -> usize {
        (starts[c]..starts[c + 1])
            .filter(|&k| k != skip && var(perm[k]) == v)
            .count()
    };
    loop {
        let mut swapped = false;
        for k in 0..e {
            let ck = owner[k] as usize;
            let vk = var(perm[k]);
            if count_in(&perm, ck, vk, k) == 0 {
                continue;
            }
            loop {
                let j = stream.below(e as u32) as usize;
                let cj = owner[j] as usize;
                if cj == ck {
                    continue;
                }
                let vj = var(perm[j]);
                if count_in(&perm, ck, vj, k) == 0 && count_in(&perm, cj, vk, j) == 0 {
                    perm.swap(k, j);
                    swapped = true;
                    break;
                }
            }
        }
        if !swapped {
            break;
        }
    }

    let checks: Vec<Vec<u32>> = (0..m)
        .map(|c| (starts[c]..starts[c + 1]).map(|k| var(perm[k])).collect())
        .collect();
    let mut vars = vec![Vec::with_capacity(VARIABLE_DEGREE); n];
    for (c, vs) in checks.iter().enumerate() {
        for &v in vs {
            vars[v as usize].push(c as u32);
        }
    }
    Ok(FactorGraph {
        n,
        m,
        checks,
        vars,
        seed_fingerprint: seed.fingerprint(),
    })
}

impl FactorGraph {
    /// Code rate `1 - m/n`.
    pub fn rate(&self) -> f64 {
        1.0 - self.m as f64 / self.n as f64
    }

    pub fn edge_count(&self) -> usize {
        self.checks.iter().map(Vec::len).sum()
    }

    /// SHA-256 over `n`, `m` and each check's sorted variable list.
    pub fn adjacency_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update((self.m as u64).to_le_bytes());
        for vs in &self.checks {
            let mut s = vs.clone();
            s.sort_unstable();
            h.update((s.len() as u32).to_le_bytes());
            for v in s {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().into()
    }

    /// Identity carried in syndrome messages.
    pub fn identity(&self) -> u64 {
        u64::from_le_bytes(self.adjacency_hash()[..8].try_into().unwrap())
    }
}

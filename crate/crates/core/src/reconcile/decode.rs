//! Syndrome computation and sum-product decoding toward a target syndrome.

use super::graph::FactorGraph;

/// Largest magnitude a log-likelihood ratio may take.
const LLR_CLAMP: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Syndrome {
    pub bits: Vec<u8>,
    pub n: usize,
    /// [`FactorGraph::identity`] of the graph that produced it.
    pub graph: u64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DecodeError {
    #[error("key has {got} bits, graph expects {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("syndrome belongs to a different graph")]
    GraphMismatch,
    #[error("no syndrome match after {iterations} iterations")]
    DecodeFailure { iterations: usize },
    #[error("error rate {0} outside [0, 0.5)")]
    BadErrorRate(f64),
}

/// Parity of the key bits on each check.
pub fn compute_syndrome(key: &[u8], graph: &FactorGraph) -> Result<Syndrome, DecodeError> {
    if key.len() != graph.n {
        return Err(DecodeError::LengthMismatch {
            got: key.len(),
            expected: graph.n,
        });
    }
    let bits = graph
        .checks
        .iter()
        .map(|vs| vs.iter().fold(0u8, |acc, &v| acc ^ key[v as usize]))
        .collect();
    Ok(Syndrome {
        bits,
        n: graph.n,
        graph: graph.identity(),
    })
}

fn syndrome_matches(key: &[u8], graph: &FactorGraph, target: &[u8]) -> bool {
    graph
        .checks
        .iter()
        .zip(target)
        .all(|(vs, &s)| vs.iter().fold(0u8, |acc, &v| acc ^ key[v as usize]) == s)
}

/// `phi(x) = -ln tanh(x/2)`, its own inverse on `x > 0`.
fn phi(x: f64) -> f64 {
    let x = x.clamp(1e-12, LLR_CLAMP);
    (2.0 / x.exp_m1()).ln_1p()
}

/// Decoding outcome with the number of iterations used.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub key: Vec<u8>,
    pub iterations: usize,
}

/// Belief propagation on the binary symmetric channel with crossover `epsilon`.
///
/// Bits in `known` (if given, same length as the key) are treated as certain.
pub fn decode_with_known(
    bob_key: &[u8],
    syndrome: &Syndrome,
    graph: &FactorGraph,
    epsilon: f64,
    max_iters: usize,
    known: Option<&[bool]>,
) -> Result<Decoded, DecodeError> {
    if bob_key.len() != graph.n {
        return Err(DecodeError::LengthMismatch {
            got: bob_key.len(),
            expected: graph.n,
        });
    }
    if syndrome.graph != graph.identity() || syndrome.bits.len() != graph.m || syndrome.n != graph.n {
        return Err(DecodeError::GraphMismatch);
    }
    if !(0.0..0.5).contains(&epsilon) {
        return Err(DecodeError::BadErrorRate(epsilon));
    }
    if syndrome_matches(bob_key, graph, &syndrome.bits) {
        return Ok(Decoded {
            key: bob_key.to_vec(),
            iterations: 0,
        });
    }

    let prior = if epsilon > 0.0 {
        ((1.0 - epsilon) / epsilon).ln().min(LLR_CLAMP)
    } else {
        LLR_CLAMP
    };
    let channel: Vec<f64> = bob_key
        .iter()
        .enumerate()
        .map(|(v, &b)| {
            let mag = if known.is_some_and(|k| k[v]) { LLR_CLAMP } else { prior };
            if b == 0 {
                mag
            } else {
                -mag
            }
        })
        .collect();

    // Edge storage in check-major order; var_edges maps each variable to its edges.
    let mut offsets = Vec::with_capacity(graph.m + 1);
    let mut edge_var = Vec::with_capacity(graph.edge_count());
    for vs in &graph.checks {
        offsets.push(edge_var.len());
        edge_var.extend(vs.iter().copied());
    }
    offsets.push(edge_var.len());
    // CSR of edges per variable.
    let mut var_start = vec![0usize; graph.n + 1];
    for &v in &edge_var {
        var_start[v as usize + 1] += 1;
    }
    for v in 0..graph.n {
        var_start[v + 1] += var_start[v];
    }
    let mut fill = var_start.clone();
    let mut var_edges = vec![0u32; edge_var.len()];
    for (e, &v) in edge_var.iter().enumerate() {
        var_edges[fill[v as usize]] = e as u32;
        fill[v as usize] += 1;
    }

    let mut to_check: Vec<f64> = edge_var.iter().map(|&v| channel[v as usize]).collect();
    let mut to_var = vec![0.0f64; edge_var.len()];
    let mut mags = Vec::new();
    let mut hard = bob_key.to_vec();

    for iter in 1..=max_iters {
        for c in 0..graph.m {
            let edges = offsets[c]..offsets[c + 1];
            let mut sign = if syndrome.bits[c] == 1 { -1.0 } else { 1.0 };
            let mut sum = 0.0;
            mags.clear();
            for e in edges.clone() {
                let q = to_check[e];
                if q < 0.0 {
                    sign = -sign;
                }
                let p = phi(q.abs());
                mags.push(p);
                sum += p;
            }
            for (k, e) in edges.enumerate() {
                let own_sign = if to_check[e] < 0.0 { -1.0 } else { 1.0 };
                let mag = phi((sum - mags[k]).max(0.0));
                to_var[e] = sign * own_sign * mag;
            }
        }
        for v in 0..graph.n {
            let edges = &var_edges[var_start[v]..var_start[v + 1]];
            let total: f64 = channel[v] + edges.iter().map(|&e| to_var[e as usize]).sum::<f64>();
            for &e in edges {
                to_check[e as usize] = (total - to_var[e as usize]).clamp(-LLR_CLAMP, LLR_CLAMP);
            }
            hard[v] = u8::from(total < 0.0);
        }
        if syndrome_matches(&hard, graph, &syndrome.bits) {
            return Ok(Decoded {
                key: hard,
                iterations: iter,
            });
        }
    }
    Err(DecodeError::DecodeFailure { iterations: max_iters })
}

/// Corrects `bob_key` toward the key that produced `syndrome`.
pub fn decode(
    bob_key: &[u8],
    syndrome: &Syndrome,
    graph: &FactorGraph,
    epsilon: f64,
    max_iters: usize,
) -> Result<Vec<u8>, DecodeError> {
    decode_with_known(bob_key, syndrome, graph, epsilon, max_iters, None).map(|d| d.key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconcile::graph::build_factor_graph;
    use crate::seed::Seed;
    use rand::Rng;

    fn random_key(n: usize, seed: u64) -> Vec<u8> {
        let mut rng = Seed::from_u64(seed).rng();
        (0..n).map(|_| rng.random_range(0..2u8)).collect()
    }

    #[test]
    fn zero_key_zero_syndrome() {
        let g = build_factor_graph(512, 0.5, Seed::from_u64(1)).unwrap();
        let s = compute_syndrome(&vec![0; 512], &g).unwrap();
        assert!(s.bits.iter().all(|&b| b == 0));
        assert_eq!(s.bits.len(), 256);
    }

    #[test]
    fn single_flip_touches_its_checks() {
        let g = build_factor_graph(512, 0.5, Seed::from_u64(1)).unwrap();
        let a = random_key(512, 2);
        let mut b = a.clone();
        b[77] ^= 1;
        let sa = compute_syndrome(&a, &g).unwrap();
        let sb = compute_syndrome(&b, &g).unwrap();
        let changed: Vec<u32> = (0..g.m as u32).filter(|&c| sa.bits[c as usize] != sb.bits[c as usize]).collect();
        assert_eq!(changed, g.vars[77]);
    }

    #[test]
    fn length_mismatch() {
        let g = build_factor_graph(512, 0.5, Seed::from_u64(1)).unwrap();
        assert_eq!(
            compute_syndrome(&[0; 10], &g),
            Err(DecodeError::LengthMismatch { got: 10, expected: 512 })
        );
    }

    #[test]
    fn noiseless_input_returned_without_iterating() {
        let g = build_factor_graph(1024, 0.7, Seed::from_u64(3)).unwrap();
        let a = random_key(1024, 4);
        let s = compute_syndrome(&a, &g).unwrap();
        let d = decode_with_known(&a, &s, &g, 0.0, 100, None).unwrap();
        assert_eq!(d.iterations, 0);
        assert_eq!(d.key, a);
    }

    #[test]
    fn corrects_few_errors() {
        let g = build_factor_graph(2000, 0.5, Seed::from_u64(3)).unwrap();
        let a = random_key(2000, 4);
        let mut b = a.clone();
        for i in (0..2000).step_by(50) {
            b[i] ^= 1;
        }
        let s = compute_syndrome(&a, &g).unwrap();
        assert_eq!(decode(&b, &s, &g, 0.02, 100).unwrap(), a);
    }

    #[test]
    fn foreign_syndrome_rejected() {
        let g = build_factor_graph(512, 0.5, Seed::from_u64(1)).unwrap();
        let h = build_factor_graph(512, 0.5, Seed::from_u64(2)).unwrap();
        let s = compute_syndrome(&vec![0; 512], &h).unwrap();
        assert_eq!(decode(&vec![0; 512], &s, &g, 0.01, 10), Err(DecodeError::GraphMismatch));
    }
}

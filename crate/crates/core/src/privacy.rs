//! Privacy amplification: how many bits survive a pulse-splitting
//! eavesdropper, and the Toeplitz hash that compresses the key to that length.
//!
//! A faint-pulse source emits Poisson photon numbers. Every pulse carrying
//! two or more photons is assumed to be split, so only the fraction `b` of
//! received bits that cannot be explained by multi-photon pulses counts as
//! secure. The yield then subtracts the syndrome leakage (through the
//! reconciliation efficiency) and the error-dependent term of the bound.

use crate::seed::Seed;

/// P(n) of a Poisson photon number with mean `m`.
pub fn poisson_pmf(m: f64, n: u32) -> f64 {
    let mut p = (-m).exp();
    for k in 1..=n {
        p *= m / f64::from(k);
    }
    p
}

/// Probability that a pulse carries two or more photons:
/// `1 - e^-M - M e^-M`.
pub fn poisson_multi_prob(m: f64) -> f64 {
    (-(-m).exp_m1() - m * (-m).exp()).max(0.0)
}

/// Fraction of received bits guaranteed secure against pulse splitting,
/// `b = 1 - P(n>=2) / ((1 - e^-M) T)`, clamped to `[0, 1]`.
pub fn secure_fraction(m: f64, t: f64) -> f64 {
    let p_nonempty = -(-m).exp_m1();
    if p_nonempty <= 0.0 || t <= 0.0 {
        return 0.0;
    }
    (1.0 - poisson_multi_prob(m) / (p_nonempty * t)).clamp(0.0, 1.0)
}

/// Inputs of [`final_length`].
#[derive(Debug, Clone, PartialEq)]
pub struct YieldInputs {
    /// Sifted bits received.
    pub n_rec: u64,
    /// Bits spent on the error estimate.
    pub n_err: u64,
    pub epsilon: f64,
    /// Reconciliation efficiency `1 - n_syn / n`.
    pub e_ec: f64,
    pub mean_photon_number: f64,
    pub channel_transmission: f64,
    pub safety_margin_bits: u64,
}

/// The bracket `E_ec - log2(1 + 4x - 4x^2)` with `x = ε/b`, clamped below at 0.
///
/// The log term peaks at one bit for `x = 1/2`; larger `x` is held there so
/// the bracket never grows again with the error rate.
pub fn information_bracket(epsilon: f64, b: f64, e_ec: f64) -> f64 {
    if b <= 0.0 {
        return 0.0;
    }
    let x = (epsilon / b).min(0.5);
    (e_ec - (1.0 + 4.0 * x - 4.0 * x * x).log2()).max(0.0)
}

/// Secure key length
/// `floor((n_rec - n_err) · b · (E_ec - log2(1 + 4ε/b - 4(ε/b)^2)) - n_s)`, at least 0.
pub fn final_length(inputs: &YieldInputs) -> u64 {
    let b = secure_fraction(inputs.mean_photon_number, inputs.channel_transmission);
    if b <= 0.0 || !(inputs.epsilon >= 0.0) || inputs.epsilon >= b {
        return 0;
    }
    let usable = inputs.n_rec.saturating_sub(inputs.n_err) as f64;
    let bracket = information_bracket(inputs.epsilon, b, inputs.e_ec);
    let n = (usable * b * bracket - inputs.safety_margin_bits as f64).floor();
    if n > 0.0 {
        n as u64
    } else {
        0
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PrivacyError {
    #[error("output length {out_len} exceeds input length {n}")]
    LengthInvalid { n: usize, out_len: usize },
    #[error("Toeplitz matrix needs {need} diagonal bits, got {got}")]
    DiagonalCount { need: usize, got: usize },
}

/// An `out_len × n` binary Toeplitz matrix, `T[i][j] = d[i - j + n - 1]`.
///
/// `d[0..n-1]` fixes the first row from right to left and `d[n-1..]` the first
/// column from top to bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToeplitzHash {
    n: usize,
    out_len: usize,
    diagonals: Vec<u8>,
}

impl ToeplitzHash {
    pub fn from_diagonals(n: usize, out_len: usize, diagonals: Vec<u8>) -> Result<Self, PrivacyError> {
        if out_len > n {
            return Err(PrivacyError::LengthInvalid { n, out_len });
        }
        let need = (n + out_len).saturating_sub(1);
        if diagonals.len() != need {
            return Err(PrivacyError::DiagonalCount {
                need,
                got: diagonals.len(),
            });
        }
        Ok(ToeplitzHash { n, out_len, diagonals })
    }

    /// Diagonals are the first `n + out_len - 1` bits of `seed.stream()`.
    pub fn from_seed(n: usize, out_len: usize, seed: Seed) -> Result<Self, PrivacyError> {
        let need = (n + out_len).saturating_sub(1);
        Self::from_diagonals(n, out_len, seed.stream().bits(need))
    }

    pub fn apply(&self, key: &[u8]) -> Result<Vec<u8>, PrivacyError> {
        if key.len() != self.n {
            return Err(PrivacyError::LengthInvalid {
                n: key.len(),
                out_len: self.out_len,
            });
        }
        if self.out_len == 0 {
            return Ok(Vec::new());
        }
        // out[i] = parity(d[i .. i+n] · reverse(key))
        let reversed: Vec<u8> = key.iter().rev().copied().collect();
        let r = crate::bits::pack_words(&reversed);
        let mut d = crate::bits::pack_words(&self.diagonals);
        d.push(0);
        let words = r.len();
        let out = (0..self.out_len)
            .map(|i| {
                let (w0, sh) = (i / 64, i % 64);
                let mut acc = 0u64;
                for (w, &rw) in r.iter().enumerate().take(words) {
                    let lo = d[w0 + w] >> sh;
                    let hi = if sh == 0 { 0 } else { d[w0 + w + 1] << (64 - sh) };
                    acc ^= (lo | hi) & rw;
                }
                (acc.count_ones() & 1) as u8
            })
            .collect();
        Ok(out)
    }
}

/// Compresses `key` to `out_len` bits with the Toeplitz hash drawn from `seed`.
pub fn compress(key: &[u8], out_len: usize, seed: Seed) -> Result<Vec<u8>, PrivacyError> {
    if out_len > key.len() {
        return Err(PrivacyError::LengthInvalid {
            n: key.len(),
            out_len,
        });
    }
    ToeplitzHash::from_seed(key.len(), out_len, seed)?.apply(key)
}

//! Keys are handled as `Vec<u8>` holding one bit (0 or 1) per element; these
//! helpers pack them for the wire and for hashing.

/// Packs bits LSB-first into bytes; the last byte is zero-padded.
pub fn pack(bits: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        out[i / 8] |= (b & 1) << (i % 8);
    }
    out
}

/// Inverse of [`pack`]; returns `None` if `bytes` is too short for `n` bits.
pub fn unpack(bytes: &[u8], n: usize) -> Option<Vec<u8>> {
    if bytes.len() < n.div_ceil(8) {
        return None;
    }
    Some((0..n).map(|i| (bytes[i / 8] >> (i % 8)) & 1).collect())
}

/// Packs into little-endian u64 words, bit `i` at word `i / 64`, position `i % 64`.
pub fn pack_words(bits: &[u8]) -> Vec<u64> {
    let mut out = vec![0u64; bits.len().div_ceil(64)];
    for (i, &b) in bits.iter().enumerate() {
        out[i / 64] |= u64::from(b & 1) << (i % 64);
    }
    out
}

pub fn xor(a: &[u8], b: &[u8]) -> Vec<u8> {
    assert_eq!(a.len(), b.len(), "xor of unequal lengths");
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

pub fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn pack_unpack_roundtrip(bits in proptest::collection::vec(0u8..2, 0..300)) {
            let packed = pack(&bits);
            prop_assert_eq!(packed.len(), bits.len().div_ceil(8));
            prop_assert_eq!(unpack(&packed, bits.len()).unwrap(), bits);
        }
    }

    #[test]
    fn word_layout() {
        let mut bits = vec![0u8; 130];
        bits[0] = 1;
        bits[65] = 1;
        bits[129] = 1;
        assert_eq!(pack_words(&bits), vec![1, 2, 2]);
        assert!(unpack(&[0], 9).is_none());
    }
}

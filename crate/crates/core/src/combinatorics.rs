//! Möbius function, Witt's necklace count, Lyndon words and necklace canonical
//! forms.

use num_bigint::{BigInt, BigUint};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Enumeration guard for [`lyndon_words`].
pub const MAX_ENUMERATION: u128 = 10_000_000;

/// Möbius function by trial factorization.
pub fn moebius(mut l: u64) -> i8 {
    assert!(l >= 1, "moebius is defined on positive integers");
    let mut sign = 1i8;
    let mut p = 2u64;
    while p * p <= l {
        if l % p == 0 {
            l /= p;
            if l % p == 0 {
                return 0;
            }
            sign = -sign;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if l > 1 {
        sign = -sign;
    }
    sign
}

pub fn divisors(k: u64) -> Vec<u64> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= k {
        if k % d == 0 {
            small.push(d);
            if d * d != k {
                large.push(k / d);
            }
        }
        d += 1;
    }
    small.extend(large.into_iter().rev());
    small
}

/// Number of aperiodic necklaces of length `k` over `n` colours:
/// `(1/k) Σ_{l | k} μ(l) n^{k/l}`.
pub fn witt_count(n: u64, k: u64) -> BigUint {
    assert!(k >= 1, "necklace length must be positive");
    let base = BigInt::from(n);
    let sum: BigInt = divisors(k)
        .into_iter()
        .map(|l| BigInt::from(moebius(l)) * base.pow((k / l) as u32))
        .sum();
    let kk = BigInt::from(k);
    assert!(
        (&sum % &kk) == BigInt::from(0),
        "Witt sum {sum} is not divisible by {k}"
    );
    (sum / kk).to_biguint().expect("Witt count is nonnegative")
}

/// `S_{2^m}(k)`: lower bound on the number of periodicity classes of order-k
/// subharmonics for a weight with `m` positive humps.
pub fn predicted_subharmonic_count(m: u32, k: u64) -> BigUint {
    let n = 1u64
        .checked_shl(m)
        .filter(|_| m < 64)
        .expect("alphabet 2^m must fit in 64 bits");
    witt_count(n, k)
}

/// All `n`-ary Lyndon words of length `k` in lexicographic order, generated
/// with Duval's successor algorithm.
pub fn lyndon_words(n: u32, k: u32) -> Result<Vec<Vec<u8>>> {
    if n == 0 || k == 0 || n > 256 {
        return Err(Error::BadParams(format!("lyndon_words needs 1 <= n <= 256 and k >= 1 (n = {n}, k = {k})")));
    }
    let total = (n as u128).checked_pow(k).unwrap_or(u128::MAX);
    if total > MAX_ENUMERATION {
        return Err(Error::TooLarge { n, k });
    }
    let k = k as usize;
    let top = n as i32 - 1;
    let mut out = Vec::new();
    let mut w: Vec<i32> = vec![-1];
    while let Some(last) = w.last_mut() {
        *last += 1;
        if w.len() == k {
            out.push(w.iter().map(|&c| c as u8).collect());
        }
        let len = w.len();
        while w.len() < k {
            w.push(w[w.len() - len]);
        }
        while w.last() == Some(&top) {
            w.pop();
        }
    }
    Ok(out)
}

/// Offset of the lexicographically least rotation (Duval factorization of
/// the doubled word).
pub fn least_rotation(s: &[u8]) -> usize {
    let n = s.len();
    if n == 0 {
        return 0;
    }
    let at = |i: usize| s[i % n];
    let mut i = 0;
    let mut ans = 0;
    while i < n {
        ans = i;
        let mut j = i + 1;
        let mut k = i;
        while j < 2 * n && at(k) <= at(j) {
            if at(k) < at(j) {
                k = i;
            } else {
                k += 1;
            }
            j += 1;
        }
        while i <= k {
            i += j - k;
        }
    }
    ans
}

/// Smallest `d` with `s` invariant under rotation by `d`.
pub fn cyclic_period(s: &[u8]) -> usize {
    let n = s.len();
    divisors(n as u64)
        .into_iter()
        .map(|d| d as usize)
        .find(|&d| (0..n).all(|i| s[i] == s[(i + d) % n]))
        .unwrap_or(n)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Necklace {
    pub canonical: Vec<u8>,
    pub aperiodic: bool,
    /// Left rotation taking the input to `canonical`.
    pub offset: usize,
}

pub fn canonical_necklace(s: &[u8]) -> Necklace {
    assert!(!s.is_empty(), "necklace must be nonempty");
    let offset = least_rotation(s);
    let canonical: Vec<u8> = s[offset..].iter().chain(&s[..offset]).copied().collect();
    Necklace { aperiodic: cyclic_period(s) == s.len(), canonical, offset }
}

/// Rotates a length-`k·m` bit string left by `blocks` blocks of `m` bits.
pub fn rotate_blocks(bits: &[u8], m: usize, blocks: usize) -> Vec<u8> {
    let n = bits.len();
    let r = (blocks * m) % n.max(1);
    bits[r..].iter().chain(&bits[..r]).copied().collect()
}

/// Lexicographically least block rotation and the number of blocks rotated.
pub fn canonical_block_rotation(bits: &[u8], m: usize) -> (Vec<u8>, usize) {
    let k = bits.len() / m.max(1);
    (0..k.max(1))
        .map(|l| (rotate_blocks(bits, m, l), l))
        .min()
        .expect("at least one rotation")
}

/// Renders digits with letters `a, b, …` (alphabets up to 26) or as
/// dot-separated numbers.
pub fn render_word(w: &[u8], n: u32) -> String {
    if n <= 26 {
        w.iter().map(|&c| (b'a' + c) as char).collect()
    } else {
        w.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(".")
    }
}

pub fn parse_word(s: &str) -> Vec<u8> {
    s.bytes().map(|b| b - b'a').collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NecklaceTable {
    pub n: u64,
    pub k: u64,
    pub count: BigUint,
    pub words: Option<Vec<String>>,
}

impl NecklaceTable {
    /// Count by Witt's formula, enumerating words too when the space is
    /// small enough.
    pub fn build(n: u64, k: u64, enumerate: bool) -> Result<Self> {
        let count = witt_count(n, k);
        let words = if enumerate && n <= 256 && k <= u32::MAX as u64 {
            match lyndon_words(n as u32, k as u32) {
                Ok(ws) => Some(ws.iter().map(|w| render_word(w, n as u32)).collect::<Vec<String>>()),
                Err(Error::TooLarge { .. }) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        if let Some(ws) = &words {
            assert_eq!(BigUint::from(ws.len()), count, "enumeration disagrees with Witt's formula");
        }
        Ok(Self { n, k, count, words })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(n: u32, k: u32) -> Vec<String> {
        lyndon_words(n, k).unwrap().iter().map(|w| render_word(w, n)).collect()
    }

    #[test]
    fn moebius_examples() {
        assert_eq!(moebius(1), 1);
        assert_eq!(moebius(6), 1);
        assert_eq!(moebius(12), 0);
        assert_eq!(moebius(30), -1);
        assert_eq!(moebius(97), -1);
    }

    #[test]
    fn binary_witt_table() {
        let got: Vec<BigUint> = (2..=10).map(|k| witt_count(2, k)).collect();
        let want: Vec<BigUint> = [1u32, 2, 3, 6, 9, 18, 30, 56, 99].into_iter().map(BigUint::from).collect();
        assert_eq!(got, want);
        assert_eq!(witt_count(2, 1), BigUint::from(2u32));
        assert_eq!(witt_count(4, 2), BigUint::from(6u32));
    }

    #[test]
    fn witt_is_exact_for_huge_arguments() {
        // Prime length: S_n(p) = (n^p - n) / p.
        let n = 1u64 << 40;
        let c = witt_count(n, 13);
        let expect = (BigUint::from(n).pow(13) - BigUint::from(n)) / BigUint::from(13u32);
        assert_eq!(c, expect);
    }

    #[test]
    fn lyndon_small_cases() {
        assert_eq!(words(2, 2), ["ab"]);
        assert_eq!(words(2, 3), ["aab", "abb"]);
        assert_eq!(words(2, 4), ["aaab", "aabb", "abbb"]);
        assert_eq!(words(3, 1), ["a", "b", "c"]);
    }

    #[test]
    fn predicted_counts() {
        assert_eq!(predicted_subharmonic_count(1, 2), BigUint::from(1u32));
        assert_eq!(predicted_subharmonic_count(1, 5), BigUint::from(6u32));
        assert_eq!(predicted_subharmonic_count(3, 2), BigUint::from(28u32));
    }

    #[test]
    fn necklace_examples() {
        let n = canonical_necklace(&parse_word("bbaa"));
        assert_eq!(render_word(&n.canonical, 2), "aabb");
        assert!(n.aperiodic);
        let n = canonical_necklace(&parse_word("abab"));
        assert_eq!(render_word(&n.canonical, 2), "abab");
        assert!(!n.aperiodic);
        let n = canonical_necklace(&parse_word("a"));
        assert_eq!(n.canonical, vec![0]);
        assert!(n.aperiodic);
    }

    #[test]
    fn too_large_is_rejected() {
        assert!(matches!(lyndon_words(10, 8), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn block_rotation() {
        assert_eq!(rotate_blocks(&[1, 0, 0, 1, 1, 0], 2, 1), vec![0, 1, 1, 0, 1, 0]);
        assert_eq!(canonical_block_rotation(&[1, 0], 1), (vec![0, 1], 1));
        assert_eq!(canonical_block_rotation(&[1, 1, 0, 0, 1, 0], 3), (vec![0, 1, 0, 1, 1, 0], 1));
    }
}

//! Code-offset secure sketch and the fuzzy extractor built on it.
//!
//! The sketch of `w` is `w ^ C(m)` for a random message `m`. Given a reading
//! `w'` close to `w`, decoding `w' ^ sketch` to the nearest codeword yields
//! `C(m)` again and hence `w` exactly. The extractor hashes the recovered
//! `w` together with a public seed and the password.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand_core::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

/// Length of extractor seeds and derived keys.
pub const KEY_BYTES: usize = 32;

/// Largest supported codeword length, bounded by the 2-byte `k` field and
/// the configuration limit `k * r <= 65535`.
pub const MAX_CODEWORD_BITS: usize = 65_535;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FuzzyError {
    #[error("repetition factor must be odd and at least 3, got {0}")]
    BadRepetition(u8),
    #[error("message length must be positive")]
    EmptyMessage,
    #[error("codeword length {0} exceeds {MAX_CODEWORD_BITS} bits")]
    CodewordTooLong(usize),
    #[error("expected {expected} bits, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("password must not be empty")]
    EmptyPassword,
    #[error("invalid bit string")]
    BadBitString,
}

/// A fixed-length bit string, packed most-significant bit first. Padding
/// bits in the last byte are always zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVector {
    bytes: Vec<u8>,
    len: usize,
}

/// Biometric readings (`B_T`, `B`) and masked templates (`BB_T`, `BB`).
pub type BiometricVector = BitVector;

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        BitVector { bytes: vec![0u8; len.div_ceil(8)], len }
    }

    /// Builds from packed bytes; rejects nonzero padding or a wrong byte count.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self, FuzzyError> {
        if bytes.len() != len.div_ceil(8) {
            return Err(FuzzyError::LengthMismatch {
                expected: len.div_ceil(8) * 8,
                actual: bytes.len() * 8,
            });
        }
        let v = BitVector { bytes: bytes.to_vec(), len };
        if v.padding_is_clear() {
            Ok(v)
        } else {
            Err(FuzzyError::BadBitString)
        }
    }

    /// Parses a string of `'0'`/`'1'` characters; bit 0 is the first char.
    pub fn from_bit_str(s: &str) -> Result<Self, FuzzyError> {
        let mut v = BitVector::zeros(s.len());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => v.set(i, true),
                _ => return Err(FuzzyError::BadBitString),
            }
        }
        Ok(v)
    }

    pub fn random<R: RngCore + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut v = BitVector::zeros(len);
        rng.fill_bytes(&mut v.bytes);
        v.clear_padding();
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 0x80 >> (i % 8);
        if bit {
            self.bytes[i / 8] |= mask;
        } else {
            self.bytes[i / 8] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        let b = self.get(i);
        self.set(i, !b);
    }

    pub fn xor(&self, other: &BitVector) -> Result<BitVector, FuzzyError> {
        if self.len != other.len {
            return Err(FuzzyError::LengthMismatch { expected: self.len, actual: other.len });
        }
        let bytes = self.bytes.iter().zip(&other.bytes).map(|(a, b)| a ^ b).collect();
        Ok(BitVector { bytes, len: self.len })
    }

    pub fn hamming_distance(&self, other: &BitVector) -> usize {
        assert_eq!(self.len, other.len);
        self.bytes
            .iter()
            .zip(&other.bytes)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    fn padding_is_clear(&self) -> bool {
        let used = self.len % 8;
        used == 0 || self.bytes.last().is_none_or(|b| b & (0xff >> used) == 0)
    }

    fn clear_padding(&mut self) {
        let used = self.len % 8;
        if used != 0 {
            if let Some(last) = self.bytes.last_mut() {
                *last &= !(0xff >> used);
            }
        }
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector[{}](", self.len)?;
        for i in 0..self.len.min(64) {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        if self.len > 64 {
            f.write_str("..")?;
        }
        f.write_str(")")
    }
}

/// A binary error-correcting code usable by the secure sketch.
pub trait SketchCode {
    fn message_bits(&self) -> usize;
    fn codeword_bits(&self) -> usize;
    fn encode(&self, message: &BitVector) -> BitVector;
    /// Nearest-codeword decoding, returning the message.
    fn decode(&self, word: &BitVector) -> BitVector;
}

/// Repetition code: each of `k` message bits is repeated `r` times, giving
/// `N = k * r` bits that tolerate `(r - 1) / 2` flips per block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeParams {
    k: u16,
    r: u8,
}

impl CodeParams {
    pub fn new(k: u16, r: u8) -> Result<Self, FuzzyError> {
        if r < 3 || r.is_multiple_of(2) {
            return Err(FuzzyError::BadRepetition(r));
        }
        if k == 0 {
            return Err(FuzzyError::EmptyMessage);
        }
        let n = usize::from(k) * usize::from(r);
        if n > MAX_CODEWORD_BITS {
            return Err(FuzzyError::CodewordTooLong(n));
        }
        Ok(CodeParams { k, r })
    }

    pub fn k(&self) -> u16 {
        self.k
    }

    pub fn r(&self) -> u8 {
        self.r
    }

    /// Biometric length `N`.
    pub fn n(&self) -> usize {
        usize::from(self.k) * usize::from(self.r)
    }

    /// Packed byte length of an `N`-bit vector.
    pub fn n_bytes(&self) -> usize {
        self.n().div_ceil(8)
    }

    /// Correctable flips per block.
    pub fn t(&self) -> usize {
        usize::from(self.r - 1) / 2
    }

    fn check(&self, v: &BitVector) -> Result<(), FuzzyError> {
        if v.len() == self.n() {
            Ok(())
        } else {
            Err(FuzzyError::LengthMismatch { expected: self.n(), actual: v.len() })
        }
    }
}

impl Default for CodeParams {
    /// `k = 128`, `r = 5`, `N = 640`.
    fn default() -> Self {
        CodeParams { k: 128, r: 5 }
    }
}

impl SketchCode for CodeParams {
    fn message_bits(&self) -> usize {
        usize::from(self.k)
    }

    fn codeword_bits(&self) -> usize {
        self.n()
    }

    fn encode(&self, message: &BitVector) -> BitVector {
        assert_eq!(message.len(), self.message_bits());
        let r = usize::from(self.r);
        let mut out = BitVector::zeros(self.n());
        for i in 0..message.len() {
            if message.get(i) {
                for j in 0..r {
                    out.set(i * r + j, true);
                }
            }
        }
        out
    }

    fn decode(&self, word: &BitVector) -> BitVector {
        assert_eq!(word.len(), self.n());
        let r = usize::from(self.r);
        let mut out = BitVector::zeros(self.message_bits());
        for i in 0..out.len() {
            let ones = (0..r).filter(|j| word.get(i * r + j)).count();
            if 2 * ones > r {
                out.set(i, true);
            }
        }
        out
    }
}

/// Public output of [`fe_gen`]: the sketch and the extractor seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HelperData {
    pub code: CodeParams,
    pub sketch: BitVector,
    pub seed: [u8; KEY_BYTES],
}

/// A 32-byte key extracted from a biometric reading and password.
#[derive(Clone, PartialEq, Eq)]
pub struct BioKey(pub [u8; KEY_BYTES]);

impl BioKey {
    pub fn as_bytes(&self) -> &[u8; KEY_BYTES] {
        &self.0
    }
}

impl fmt::Debug for BioKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("BioKey(..)")
    }
}

/// `sketch = w ^ C(m)` for a fresh random message `m`.
pub fn ss_sketch<R: RngCore + CryptoRng + ?Sized>(
    w: &BitVector,
    code: &CodeParams,
    rng: &mut R,
) -> Result<BitVector, FuzzyError> {
    let m = BitVector::random(code.message_bits(), rng);
    ss_sketch_with_message(w, code, &m)
}

/// [`ss_sketch`] with the coset message supplied by the caller.
pub fn ss_sketch_with_message(
    w: &BitVector,
    code: &CodeParams,
    message: &BitVector,
) -> Result<BitVector, FuzzyError> {
    code.check(w)?;
    if message.len() != code.message_bits() {
        return Err(FuzzyError::LengthMismatch {
            expected: code.message_bits(),
            actual: message.len(),
        });
    }
    w.xor(&code.encode(message))
}

/// Recovers the enrolled vector from a close reading. Noise beyond the
/// code's capacity yields a different vector; no error is raised here.
pub fn ss_recover(
    w_prime: &BitVector,
    sketch: &BitVector,
    code: &CodeParams,
) -> Result<BitVector, FuzzyError> {
    code.check(w_prime)?;
    code.check(sketch)?;
    let shifted = w_prime.xor(sketch)?;
    let codeword = code.encode(&code.decode(&shifted));
    codeword.xor(sketch)
}

/// `H(seed || w || pw)`.
fn extract(seed: &[u8; KEY_BYTES], w: &BitVector, pw: &[u8]) -> BioKey {
    let mut h = Sha256::new();
    h.update(seed);
    h.update(w.as_bytes());
    h.update(pw);
    BioKey(h.finalize().into())
}

/// Enrollment side of the fuzzy extractor.
pub fn fe_gen<R: RngCore + CryptoRng + ?Sized>(
    w: &BitVector,
    pw: &[u8],
    code: &CodeParams,
    rng: &mut R,
) -> Result<(BioKey, HelperData), FuzzyError> {
    if pw.is_empty() {
        return Err(FuzzyError::EmptyPassword);
    }
    let sketch = ss_sketch(w, code, rng)?;
    let mut seed = [0u8; KEY_BYTES];
    rng.fill_bytes(&mut seed);
    let key = extract(&seed, w, pw);
    Ok((key, HelperData { code: *code, sketch, seed }))
}

/// Reproduction side: returns the key and the reconstructed vector.
pub fn fe_rep(
    w_prime: &BitVector,
    pw: &[u8],
    hd: &HelperData,
) -> Result<(BioKey, BitVector), FuzzyError> {
    let w = ss_recover(w_prime, &hd.sketch, &hd.code)?;
    Ok((extract(&hd.seed, &w, pw), w))
}

/// Expands a key into `n_bits` of mask: `H(key || 0) || H(key || 1) || ...`
/// with a 4-byte big-endian counter, truncated.
pub fn mask_expand(key: &BioKey, n_bits: usize) -> BitVector {
    let n_bytes = n_bits.div_ceil(8);
    let mut bytes = Vec::with_capacity(n_bytes + KEY_BYTES);
    let mut counter: u32 = 0;
    while bytes.len() < n_bytes {
        let mut h = Sha256::new();
        h.update(key.as_bytes());
        h.update(counter.to_be_bytes());
        bytes.extend_from_slice(&h.finalize());
        counter += 1;
    }
    bytes.truncate(n_bytes);
    let mut v = BitVector { bytes, len: n_bits };
    v.clear_padding();
    v
}

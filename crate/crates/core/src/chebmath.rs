//! Chebyshev polynomials over `Z_p`.
//!
//! `T_n(x)` is evaluated with the doubling identities
//!
//! ```text
//! T_2k     = 2 T_k^2 - 1
//! T_2k+1   = 2 T_k T_k+1 - x
//! ```
//!
//! which costs a handful of modular multiplications per bit of `n`. Over a
//! prime field the family keeps the composition law `T_r(T_s(x)) = T_rs(x)`,
//! which is what the key agreement relies on.

use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand_core::{CryptoRng, RngCore};

/// Width in bytes of every serialized field element and secret degree.
pub const ELEMENT_BYTES: usize = 32;

/// Largest modulus we accept, so elements always fit [`ELEMENT_BYTES`].
pub const MAX_MODULUS_BITS: u64 = 256;

/// Secret degrees are drawn from `[2, 2^DEGREE_BITS)`.
pub const DEGREE_BITS: u32 = 255;

/// Errors from parameter validation and evaluation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParamError {
    #[error("modulus must be a prime greater than 3")]
    NotPrime,
    #[error("modulus exceeds {MAX_MODULUS_BITS} bits")]
    ModulusTooLarge,
    #[error("element is not reduced modulo p")]
    ElementOutOfRange,
    #[error("secret degree must be at least 2")]
    DegenerateDegree,
    #[error("value does not fit in {ELEMENT_BYTES} bytes")]
    Oversized,
}

/// A validated prime modulus `p > 3` of at most 256 bits.
#[derive(Clone, PartialEq, Eq)]
pub struct Modulus(BigUint);

impl Modulus {
    /// Validates `p` with a Miller-Rabin test.
    pub fn new(p: BigUint) -> Result<Self, ParamError> {
        if p.bits() > MAX_MODULUS_BITS {
            return Err(ParamError::ModulusTooLarge);
        }
        if p <= BigUint::from(3u8) || !is_probable_prime(&p) {
            return Err(ParamError::NotPrime);
        }
        Ok(Modulus(p))
    }

    /// `2^255 - 19`.
    pub fn default_prime() -> Self {
        let p = (BigUint::one() << 255usize) - BigUint::from(19u8);
        Modulus(p)
    }

    pub fn from_u64(p: u64) -> Result<Self, ParamError> {
        Self::new(BigUint::from(p))
    }

    pub fn from_be_bytes(bytes: &[u8]) -> Result<Self, ParamError> {
        Self::new(BigUint::from_bytes_be(bytes))
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn bits(&self) -> u64 {
        self.0.bits()
    }

    pub fn to_bytes(&self) -> [u8; ELEMENT_BYTES] {
        // Cannot fail: the constructor bounds p to 256 bits.
        element_to_bytes(&self.0).expect("modulus fits 32 bytes")
    }

    /// Checks `0 <= x < p`.
    pub fn check_element(&self, x: &BigUint) -> Result<(), ParamError> {
        if x < &self.0 {
            Ok(())
        } else {
            Err(ParamError::ElementOutOfRange)
        }
    }

    /// Samples a uniform element of `[0, p)` by rejection.
    pub fn random_element<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> BigUint {
        let bits = self.0.bits() as usize;
        let nbytes = bits.div_ceil(8);
        let top_mask = if bits.is_multiple_of(8) { 0xff } else { (1u8 << (bits % 8)) - 1 };
        let mut buf = [0u8; ELEMENT_BYTES];
        loop {
            rng.fill_bytes(&mut buf[..nbytes]);
            buf[0] &= top_mask;
            let candidate = BigUint::from_bytes_be(&buf[..nbytes]);
            if candidate < self.0 {
                return candidate;
            }
        }
    }
}

impl fmt::Debug for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Modulus({:#x})", self.0)
    }
}

/// A secret polynomial degree (`X_S`, `R_C`, `R_S`), always at least 2.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretDegree(BigUint);

impl SecretDegree {
    pub fn new(value: BigUint) -> Result<Self, ParamError> {
        if value < BigUint::from(2u8) {
            return Err(ParamError::DegenerateDegree);
        }
        if value.bits() > MAX_MODULUS_BITS {
            return Err(ParamError::Oversized);
        }
        Ok(SecretDegree(value))
    }

    /// Uniform in `[2, 2^255)`.
    pub fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        let mut buf = [0u8; ELEMENT_BYTES];
        loop {
            rng.fill_bytes(&mut buf);
            buf[0] &= 0x7f;
            let value = BigUint::from_bytes_be(&buf);
            if value >= BigUint::from(2u8) {
                return SecretDegree(value);
            }
        }
    }

    pub fn from_be_bytes(bytes: &[u8]) -> Result<Self, ParamError> {
        Self::new(BigUint::from_bytes_be(bytes))
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn to_bytes(&self) -> [u8; ELEMENT_BYTES] {
        element_to_bytes(&self.0).expect("degree fits 32 bytes")
    }
}

// Secret material stays out of debug output.
impl fmt::Debug for SecretDegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretDegree(..)")
    }
}

/// Public arithmetic context for one enrolled user: `p`, the base `s` and
/// the server public value `SPUB = T_{X_S}(s)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChebParams {
    pub p: Modulus,
    pub s: BigUint,
    pub spub: BigUint,
}

impl ChebParams {
    pub fn new(p: Modulus, s: BigUint, spub: BigUint) -> Result<Self, ParamError> {
        p.check_element(&s)?;
        p.check_element(&spub)?;
        Ok(ChebParams { p, s, spub })
    }
}

/// Output of [`server_keygen`].
#[derive(Clone, Debug)]
pub struct ServerKeys {
    pub s: BigUint,
    pub x_s: SecretDegree,
    pub spub: BigUint,
}

/// Serializes a value as a 32-byte big-endian string.
pub fn element_to_bytes(x: &BigUint) -> Result<[u8; ELEMENT_BYTES], ParamError> {
    let raw = x.to_bytes_be();
    if x.is_zero() {
        return Ok([0u8; ELEMENT_BYTES]);
    }
    if raw.len() > ELEMENT_BYTES {
        return Err(ParamError::Oversized);
    }
    let mut out = [0u8; ELEMENT_BYTES];
    out[ELEMENT_BYTES - raw.len()..].copy_from_slice(&raw);
    Ok(out)
}

/// `T_n(x) mod p` by fast doubling, `O(log n)` multiplications.
pub fn cheb_eval(n: &BigUint, x: &BigUint, p: &Modulus) -> Result<BigUint, ParamError> {
    p.check_element(x)?;
    let m = p.value();
    if n.is_zero() {
        return Ok(BigUint::one());
    }

    // Invariant: (lo, hi) = (T_k(x), T_{k+1}(x)) for k = prefix of n read so far.
    let mut lo = BigUint::one();
    let mut hi = x.clone();
    let two = BigUint::from(2u8);
    for i in (0..n.bits()).rev() {
        let cross = sub_mod(&(&two * &lo * &hi % m), x, m);
        if n.bit(i) {
            let next_hi = sub_mod(&(&two * &hi * &hi % m), &BigUint::one(), m);
            lo = cross;
            hi = next_hi;
        } else {
            let next_lo = sub_mod(&(&two * &lo * &lo % m), &BigUint::one(), m);
            lo = next_lo;
            hi = cross;
        }
    }
    Ok(lo)
}

/// `T_n(x) mod p` by iterating the three-term recurrence. Linear in `n`;
/// kept as a reference for testing [`cheb_eval`].
pub fn cheb_eval_naive(n: u64, x: &BigUint, p: &Modulus) -> Result<BigUint, ParamError> {
    p.check_element(x)?;
    let m = p.value();
    let mut prev = BigUint::one();
    if n == 0 {
        return Ok(prev);
    }
    let mut cur = x.clone();
    let two_x = (BigUint::from(2u8) * x) % m;
    for _ in 1..n {
        let next = sub_mod(&(&two_x * &cur % m), &prev, m);
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `[T_0(x), ..., T_{n_max}(x)] mod p` from the same recurrence as
/// [`cheb_eval_naive`], in one linear pass.
pub fn cheb_table_naive(n_max: u64, x: &BigUint, p: &Modulus) -> Result<Vec<BigUint>, ParamError> {
    p.check_element(x)?;
    let m = p.value();
    let two_x = (BigUint::from(2u8) * x) % m;
    let mut out = Vec::with_capacity(n_max as usize + 1);
    out.push(BigUint::one());
    if n_max >= 1 {
        out.push(x.clone());
    }
    for n in 2..=n_max as usize {
        let next = sub_mod(&(&two_x * &out[n - 1] % m), &out[n - 2], m);
        out.push(next);
    }
    Ok(out)
}

/// Draws `s` and `X_S` and computes `SPUB = T_{X_S}(s) mod p`.
pub fn server_keygen<R: RngCore + CryptoRng + ?Sized>(p: &Modulus, rng: &mut R) -> ServerKeys {
    let s = p.random_element(rng);
    let x_s = SecretDegree::random(rng);
    server_keygen_with(p, s, x_s).expect("sampled values are in range")
}

/// Deterministic variant of [`server_keygen`] with caller-chosen `s` and `X_S`.
pub fn server_keygen_with(
    p: &Modulus,
    s: BigUint,
    x_s: SecretDegree,
) -> Result<ServerKeys, ParamError> {
    let spub = cheb_eval(x_s.value(), &s, p)?;
    Ok(ServerKeys { s, x_s, spub })
}

fn sub_mod(a: &BigUint, b: &BigUint, m: &BigUint) -> BigUint {
    if a >= b {
        a - b
    } else {
        a + m - b
    }
}

const WITNESSES: [u32; 20] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
];

/// Miller-Rabin with fixed small-prime witnesses. Deterministic below
/// `3.3 * 10^24`; for larger inputs a composite passes with probability at
/// most `4^-20` unless it was built against these bases.
pub fn is_probable_prime(n: &BigUint) -> bool {
    let two = BigUint::from(2u8);
    if n < &two {
        return false;
    }
    for &w in WITNESSES.iter() {
        let w = BigUint::from(w);
        if n == &w {
            return true;
        }
        if (n % &w).is_zero() {
            return false;
        }
    }

    let one = BigUint::one();
    let n_minus_one = n - &one;
    let mut d = n_minus_one.clone();
    let mut rounds = 0u32;
    while d.is_even() {
        d >>= 1usize;
        rounds += 1;
    }

    'witness: for &w in WITNESSES.iter() {
        let mut y = BigUint::from(w).modpow(&d, n);
        if y == one || y == n_minus_one {
            continue;
        }
        for _ in 1..rounds {
            y = &y * &y % n;
            if y == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

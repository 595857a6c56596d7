//! Arithmetic in the binary extension field GF(2^m), 1 <= m <= 8.
//!
//! Coefficients of coded transmissions live in one of these fields. Addition
//! is XOR; multiplication and inversion go through log/antilog tables built
//! once per [`FieldContext`], so the per-slot coding loops pay O(1) per
//! operation.

use thiserror::Error;

/// Conventional reduction polynomials, indexed by m - 1. Any irreducible
/// choice yields an isomorphic field; fixing these keeps traces reproducible.
const DEFAULT_MODULI: [u16; 8] = [
    0b11,                // m=1: x + 1
    0b111,               // m=2: x^2 + x + 1
    0b1011,              // m=3: x^3 + x + 1
    0b1_0011,            // m=4: x^4 + x + 1
    0b10_0101,           // m=5: x^5 + x^2 + 1
    0b100_0011,          // m=6: x^6 + x + 1
    0b1000_1001,         // m=7: x^7 + x^3 + 1
    0b1_0001_1011,       // m=8: x^8 + x^4 + x^3 + x + 1
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GfError {
    #[error("field exponent m={0} outside supported range 1..=8")]
    UnsupportedExponent(u32),
    #[error("polynomial {0:#b} is not irreducible of degree {1}")]
    ReduciblePolynomial(u16, u32),
    #[error("value {0} is not an element of GF(2^{1})")]
    ValueOutOfRange(u16, u32),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
}

/// An element of GF(2^m), stored as the bit pattern of its polynomial
/// representation. Only meaningful relative to the [`FieldContext`] that
/// produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct FieldElement(pub(crate) u8);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

/// Immutable context for one field: exponent, reduction polynomial, and the
/// log/antilog tables. Safe to share across threads once built.
#[derive(Debug, Clone)]
pub struct FieldContext {
    m: u32,
    modulus: u16,
    size: u16,
    generator: u8,
    // antilog: exp[i] = g^i, doubled so mul can index log(a)+log(b) directly.
    exp: Vec<u8>,
    // log[v] = discrete log of v base g; log[0] is a sentinel, never read.
    log: Vec<u16>,
}

impl FieldContext {
    /// Field of order 2^m with the conventional reduction polynomial.
    pub fn new(m: u32) -> Result<Self, GfError> {
        if !(1..=8).contains(&m) {
            return Err(GfError::UnsupportedExponent(m));
        }
        Self::with_modulus(m, DEFAULT_MODULI[(m - 1) as usize])
    }

    /// Smallest field satisfying the innovation guarantee for `receivers`
    /// receivers, i.e. the least power of two >= max(receivers, 2).
    pub fn for_receivers(receivers: usize) -> Result<Self, GfError> {
        let mut m = 1;
        while (1usize << m) < receivers {
            m += 1;
        }
        Self::new(m)
    }

    /// Field with an explicit reduction polynomial (bit pattern including the
    /// degree-m term). Rejects reducible polynomials.
    pub fn with_modulus(m: u32, modulus: u16) -> Result<Self, GfError> {
        if !(1..=8).contains(&m) {
            return Err(GfError::UnsupportedExponent(m));
        }
        if !is_irreducible(m, modulus) {
            return Err(GfError::ReduciblePolynomial(modulus, m));
        }
        let size = 1u16 << m;
        let generator = find_generator(m, modulus, size);
        let order = (size - 1) as usize;
        let mut exp = vec![0u8; 2 * order.max(1)];
        let mut log = vec![0u16; size as usize];
        let mut acc: u8 = 1;
        for i in 0..order {
            exp[i] = acc;
            exp[i + order] = acc;
            log[acc as usize] = i as u16;
            acc = poly_mul_mod(acc, generator, m, modulus);
        }
        debug_assert_eq!(acc, 1, "generator order must divide 2^m - 1");
        Ok(FieldContext { m, modulus, size, generator, exp, log })
    }

    pub fn exponent(&self) -> u32 {
        self.m
    }

    /// Field order M = 2^m.
    pub fn order(&self) -> u16 {
        self.size
    }

    pub fn modulus(&self) -> u16 {
        self.modulus
    }

    /// The multiplicative generator the tables were built from.
    pub fn generator(&self) -> FieldElement {
        FieldElement(self.generator)
    }

    pub fn element(&self, value: u16) -> Result<FieldElement, GfError> {
        if value >= self.size {
            return Err(GfError::ValueOutOfRange(value, self.m));
        }
        Ok(FieldElement(value as u8))
    }

    /// All field elements in bit-pattern order, 0 first.
    pub fn elements(&self) -> impl Iterator<Item = FieldElement> {
        (0..self.size).map(|v| FieldElement(v as u8))
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        // Characteristic 2: addition and subtraction are both XOR.
        FieldElement(a.0 ^ b.0)
    }

    #[inline]
    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        self.add(a, b)
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        if a.0 == 0 || b.0 == 0 {
            return FieldElement::ZERO;
        }
        let idx = self.log[a.0 as usize] as usize + self.log[b.0 as usize] as usize;
        FieldElement(self.exp[idx])
    }

    pub fn inv(&self, a: FieldElement) -> Result<FieldElement, GfError> {
        if a.0 == 0 {
            return Err(GfError::ZeroInverse);
        }
        let order = (self.size - 1) as usize;
        let idx = (order - self.log[a.0 as usize] as usize) % order;
        Ok(FieldElement(self.exp[idx]))
    }

    pub fn div(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement, GfError> {
        Ok(self.mul(a, self.inv(b)?))
    }
}

/// Carry-less polynomial multiply with reduction, used only to build tables
/// and as an independent check against the table path in tests.
pub(crate) fn poly_mul_mod(a: u8, b: u8, m: u32, modulus: u16) -> u8 {
    let mut a = a as u16;
    let b = b as u16;
    let mut acc = 0u16;
    for i in 0..m {
        if (b >> i) & 1 == 1 {
            acc ^= a;
        }
        a <<= 1;
        if (a >> m) & 1 == 1 {
            a ^= modulus;
        }
    }
    acc as u8
}

/// Exhaustive trial division by every polynomial of degree 1..=m/2.
/// Feasible because m <= 8.
pub fn is_irreducible(m: u32, modulus: u16) -> bool {
    if modulus >> m != 1 {
        return false; // wrong degree
    }
    if m == 1 {
        return true;
    }
    for d in 1..=(m / 2) {
        for f in (1u16 << d)..(1u16 << (d + 1)) {
            if poly_rem(modulus, f) == 0 {
                return false;
            }
        }
    }
    true
}

fn poly_rem(mut a: u16, b: u16) -> u16 {
    let db = 15 - b.leading_zeros();
    loop {
        let da = if a == 0 { return 0 } else { 15 - a.leading_zeros() };
        if da < db {
            return a;
        }
        a ^= b << (da - db);
    }
}

fn find_generator(m: u32, modulus: u16, size: u16) -> u8 {
    // x is a generator for primitive moduli; the AES polynomial is not
    // primitive, so search from the smallest candidate.
    'outer: for g in 2..size {
        let g = g as u8;
        let mut acc = poly_mul_mod(g, g, m, modulus);
        let mut steps = 1;
        while acc != g {
            acc = poly_mul_mod(acc, g, m, modulus);
            steps += 1;
            if steps > size {
                continue 'outer; // hit zero or a short cycle not through g
            }
        }
        if steps == size - 1 {
            return g;
        }
    }
    // Order 2 field: the only nonzero element is 1.
    debug_assert_eq!(size, 2);
    1
}

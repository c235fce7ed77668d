//! Exact dyadic rationals for expert weights.
//!
//! Expert updates only ever halve or quarter weights, and pool statistics
//! are sums of such weights, so every quantity in the weighted-majority
//! bookkeeping is num / 2^exp for a nonnegative integer num. Keeping them
//! exact turns the weight invariants into equality-grade assertions instead
//! of floating-point tolerances.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigUint;

/// A nonnegative dyadic rational num / 2^exp, kept normalized: num is odd,
/// or the value is exactly zero with exp = 0.
#[derive(Clone, PartialEq, Eq)]
pub struct Dyadic {
    num: BigUint,
    exp: u64,
}

impl Dyadic {
    pub fn zero() -> Dyadic {
        Dyadic { num: BigUint::ZERO, exp: 0 }
    }

    pub fn one() -> Dyadic {
        Dyadic { num: BigUint::from(1u8), exp: 0 }
    }

    /// 1 / 2^k.
    pub fn pow2_neg(k: u64) -> Dyadic {
        Dyadic { num: BigUint::from(1u8), exp: k }
    }

    pub fn new(num: BigUint, exp: u64) -> Dyadic {
        Dyadic { num, exp }.normalized()
    }

    fn normalized(mut self) -> Dyadic {
        if self.num == BigUint::ZERO {
            self.exp = 0;
            return self;
        }
        let drop = self.num.trailing_zeros().unwrap_or(0).min(self.exp);
        if drop > 0 {
            self.num >>= drop;
            self.exp -= drop;
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.num == BigUint::ZERO
    }

    pub fn halved(&self) -> Dyadic {
        if self.is_zero() {
            return self.clone();
        }
        Dyadic { num: self.num.clone(), exp: self.exp + 1 }
    }

    pub fn quartered(&self) -> Dyadic {
        if self.is_zero() {
            return self.clone();
        }
        Dyadic { num: self.num.clone(), exp: self.exp + 2 }
    }

    pub fn add(&self, other: &Dyadic) -> Dyadic {
        let exp = self.exp.max(other.exp);
        let num = (&self.num << (exp - self.exp)) + (&other.num << (exp - other.exp));
        Dyadic { num, exp }.normalized()
    }

    /// Compares a_factor * a with b_factor * b exactly.
    pub fn scaled_cmp(a_factor: &BigUint, a: &Dyadic, b_factor: &BigUint, b: &Dyadic) -> Ordering {
        let lhs = a_factor * &a.num << b.exp;
        let rhs = b_factor * &b.num << a.exp;
        lhs.cmp(&rhs)
    }

    /// Approximate value for reporting only.
    pub fn to_f64(&self) -> f64 {
        let bits = self.num.bits();
        if bits == 0 {
            return 0.0;
        }
        // Take the top 53 bits and rescale.
        let shift = bits.saturating_sub(53);
        let head = (&self.num >> shift)
            .iter_u64_digits()
            .next()
            .unwrap_or(0) as f64;
        head * 2f64.powi(shift as i32 - self.exp as i32)
    }

    pub fn numerator(&self) -> &BigUint {
        &self.num
    }

    pub fn exponent(&self) -> u64 {
        self.exp
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Dyadic) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Dyadic) -> Ordering {
        let one = BigUint::from(1u8);
        Dyadic::scaled_cmp(&one, self, &one, other)
    }
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dyadic({self})")
    }
}

impl Default for Dyadic {
    fn default() -> Dyadic {
        Dyadic::zero()
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp == 0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/2^{}", self.num, self.exp)
        }
    }
}

//! Nonnegative rationals with a power-of-two denominator.

use std::cmp::Ordering;
use std::fmt;

use serde::{Serialize, Serializer};

/// `num / 2^exp`, kept in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dyadic {
    num: u128,
    exp: u32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { num: 0, exp: 0 };
    pub const ONE: Dyadic = Dyadic { num: 1, exp: 0 };

    pub fn new(num: u128, exp: u32) -> Self {
        if num == 0 {
            return Self::ZERO;
        }
        let shift = num.trailing_zeros().min(exp);
        Dyadic {
            num: num >> shift,
            exp: exp - shift,
        }
    }

    /// `2^e` for any integer `e`.
    pub fn pow2(e: i32) -> Self {
        if e >= 0 {
            Dyadic::new(1u128 << e, 0)
        } else {
            Dyadic::new(1, (-e) as u32)
        }
    }

    pub fn numerator(&self) -> u128 {
        self.num
    }

    pub fn exponent(&self) -> u32 {
        self.exp
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / 2f64.powi(self.exp as i32)
    }

    fn aligned(&self, other: &Dyadic) -> (u128, u128, u32) {
        let e = self.exp.max(other.exp);
        (self.num << (e - self.exp), other.num << (e - other.exp), e)
    }

    pub fn add(&self, other: &Dyadic) -> Dyadic {
        let (a, b, e) = self.aligned(other);
        Dyadic::new(a + b, e)
    }

    /// `self - other`, or `None` if negative.
    pub fn checked_sub(&self, other: &Dyadic) -> Option<Dyadic> {
        let (a, b, e) = self.aligned(other);
        a.checked_sub(b).map(|d| Dyadic::new(d, e))
    }

    pub fn mul(&self, other: &Dyadic) -> Dyadic {
        Dyadic::new(self.num * other.num, self.exp + other.exp)
    }

    pub fn mul_int(&self, m: u128) -> Dyadic {
        Dyadic::new(self.num * m, self.exp)
    }

    /// Multiply by `2^e`.
    pub fn scale2(&self, e: i32) -> Dyadic {
        self.mul(&Dyadic::pow2(e))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = self.aligned(other);
        a.cmp(&b)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
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

impl Serialize for Dyadic {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

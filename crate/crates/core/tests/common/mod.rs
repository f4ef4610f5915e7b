//! Fixed-point arithmetic with 60 decimal digits, used as an independent
//! reference for the double-precision routines.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{Signed, Zero};

pub const DIGITS: u32 = 60;

fn scale() -> BigInt {
    BigInt::from(10u32).pow(DIGITS)
}

/// `self.0 / 10^DIGITS`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fx(pub BigInt);

impl Fx {
    pub fn int(i: i64) -> Fx {
        Fx(BigInt::from(i) * scale())
    }

    pub fn ratio(a: i64, b: i64) -> Fx {
        Fx(BigInt::from(a) * scale() / BigInt::from(b))
    }

    /// Exact conversion of the binary value of `x` (truncated at 1e-60).
    pub fn from_f64(x: f64) -> Fx {
        assert!(x.is_finite());
        if x == 0.0 {
            return Fx(BigInt::zero());
        }
        let bits = x.to_bits();
        let negative = bits >> 63 == 1;
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mantissa, e) = if exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), exp - 1075)
        };
        let mut v = BigInt::from(mantissa) * scale();
        if e >= 0 {
            v <<= e as usize;
        } else {
            v >>= (-e) as usize;
        }
        Fx(if negative { -v } else { v })
    }

    /// Correctly rounded through the decimal representation.
    pub fn to_f64(&self) -> f64 {
        let negative = self.0.is_negative();
        let digits = self.0.abs().to_string();
        let width = DIGITS as usize + 1;
        let padded = format!("{digits:0>width$}");
        let (int, frac) = padded.split_at(padded.len() - DIGITS as usize);
        let s = format!("{}{int}.{frac}", if negative { "-" } else { "" });
        s.parse().unwrap()
    }

    pub fn exp(&self) -> Fx {
        const HALVINGS: usize = 20;
        let y = Fx(self.0.clone() >> HALVINGS);
        let mut sum = Fx::int(1);
        let mut term = Fx::int(1);
        let mut k = 1;
        loop {
            term = &(&term * &y) / &Fx::int(k);
            if term.0.is_zero() {
                break;
            }
            sum = &sum + &term;
            k += 1;
        }
        for _ in 0..HALVINGS {
            sum = &sum * &sum;
        }
        sum
    }

    pub fn sqrt(&self) -> Fx {
        assert!(!self.0.is_negative());
        Fx((&self.0 * scale()).sqrt())
    }

    pub fn powi(&self, k: u32) -> Fx {
        (0..k).fold(Fx::int(1), |acc, _| &acc * self)
    }

    /// Root of `f` in `[lo, hi]` by bisection, assuming `f(lo) < 0 < f(hi)`.
    pub fn bisect(mut lo: Fx, mut hi: Fx, f: impl Fn(&Fx) -> Fx) -> Fx {
        for _ in 0..220 {
            let mid = Fx((&lo.0 + &hi.0) >> 1);
            if f(&mid).0.is_negative() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

impl<'a> Add<&'a Fx> for &'a Fx {
    type Output = Fx;
    fn add(self, o: &Fx) -> Fx {
        Fx(&self.0 + &o.0)
    }
}

impl<'a> Sub<&'a Fx> for &'a Fx {
    type Output = Fx;
    fn sub(self, o: &Fx) -> Fx {
        Fx(&self.0 - &o.0)
    }
}

impl<'a> Mul<&'a Fx> for &'a Fx {
    type Output = Fx;
    fn mul(self, o: &Fx) -> Fx {
        Fx(&self.0 * &o.0 / scale())
    }
}

impl<'a> Div<&'a Fx> for &'a Fx {
    type Output = Fx;
    fn div(self, o: &Fx) -> Fx {
        Fx(&self.0 * scale() / &o.0)
    }
}

impl Neg for &Fx {
    type Output = Fx;
    fn neg(self) -> Fx {
        Fx(-&self.0)
    }
}

pub fn rel_err(actual: f64, expected: f64) -> f64 {
    match expected.partial_cmp(&0.0) {
        Some(Ordering::Equal) => actual.abs(),
        _ => ((actual - expected) / expected).abs(),
    }
}

#[test]
fn fixed_point_sanity() {
    assert_eq!(Fx::int(1).exp().to_f64(), std::f64::consts::E);
    assert_eq!(Fx::int(2).sqrt().to_f64(), std::f64::consts::SQRT_2);
    assert_eq!(Fx::from_f64(0.1).to_f64(), 0.1);
    assert_eq!(Fx::from_f64(-3.25).to_f64(), -3.25);
    assert_eq!(Fx::ratio(1, 3).to_f64(), 1.0 / 3.0);
}

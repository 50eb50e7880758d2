//! Small exact rationals over `i128`.
//!
//! Grid geometry only ever produces dyadic endpoints and intersections of
//! lines with dyadic coefficients, so numerators and denominators stay far
//! below the `i128` range for any collection a desk-scale run can build.
//! Every operation is checked; overflow panics instead of wrapping.

use num_integer::Integer;
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// A reduced fraction `num/den` with `den > 0`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    num: i128,
    den: i128,
}

const OVERFLOW: &str = "exact rational overflow: coordinates exceed the i128 range";

impl Rational {
    pub const ZERO: Rational = Rational { num: 0, den: 1 };
    pub const ONE: Rational = Rational { num: 1, den: 1 };

    pub fn new(num: i128, den: i128) -> Self {
        assert!(den != 0, "zero denominator");
        let g = num.gcd(&den);
        let (mut n, mut d) = (num / g, den / g);
        if d < 0 {
            n = n.checked_neg().expect(OVERFLOW);
            d = d.checked_neg().expect(OVERFLOW);
        }
        Rational { num: n, den: d }
    }

    pub fn int(n: i128) -> Self {
        Rational { num: n, den: 1 }
    }

    /// `m · 2^{-k}` for any integer `k`.
    pub fn dyadic(m: i128, k: i32) -> Self {
        if k >= 0 {
            assert!(k < 126, "{OVERFLOW}");
            Rational::new(m, 1i128 << k)
        } else {
            let sh = (-k) as u32;
            assert!(sh < 126, "{OVERFLOW}");
            Rational::int(m.checked_mul(1i128 << sh).expect(OVERFLOW))
        }
    }

    /// Exact conversion of a finite `f64`.
    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite(), "non-finite coordinate");
        if x == 0.0 {
            return Rational::ZERO;
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { -1i128 } else { 1 };
        let exp = ((bits >> 52) & 0x7ff) as i32;
        let frac = (bits & ((1u64 << 52) - 1)) as i128;
        let (mut mant, mut e) = if exp == 0 { (frac, -1074) } else { (frac | (1i128 << 52), exp - 1075) };
        let tz = mant.trailing_zeros();
        mant >>= tz;
        e += tz as i32;
        Rational::dyadic(sign * mant, -e)
    }

    pub fn numer(&self) -> i128 {
        self.num
    }

    pub fn denom(&self) -> i128 {
        self.den
    }

    pub fn to_f64(self) -> f64 {
        // Split to keep precision when both parts are large.
        let q = self.num / self.den;
        let r = self.num % self.den;
        q as f64 + r as f64 / self.den as f64
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    pub fn signum(&self) -> i32 {
        self.num.signum() as i32
    }

    pub fn abs(self) -> Self {
        Rational { num: self.num.checked_abs().expect(OVERFLOW), den: self.den }
    }

    pub fn floor(self) -> i128 {
        Integer::div_floor(&self.num, &self.den)
    }

    pub fn min(self, o: Self) -> Self {
        if self <= o {
            self
        } else {
            o
        }
    }

    pub fn max(self, o: Self) -> Self {
        if self >= o {
            self
        } else {
            o
        }
    }
}

impl Default for Rational {
    fn default() -> Self {
        Rational::ZERO
    }
}

impl From<i64> for Rational {
    fn from(n: i64) -> Self {
        Rational::int(n as i128)
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl Ord for Rational {
    fn cmp(&self, o: &Self) -> Ordering {
        if self.den == o.den {
            return self.num.cmp(&o.num);
        }
        let l = self.num.checked_mul(o.den).expect(OVERFLOW);
        let r = o.num.checked_mul(self.den).expect(OVERFLOW);
        l.cmp(&r)
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Add for Rational {
    type Output = Rational;
    fn add(self, o: Rational) -> Rational {
        if self.den == o.den {
            return Rational::new(self.num.checked_add(o.num).expect(OVERFLOW), self.den);
        }
        let g = self.den.gcd(&o.den);
        let (a, b) = (self.den / g, o.den / g);
        let n = self
            .num
            .checked_mul(b)
            .and_then(|x| o.num.checked_mul(a).and_then(|y| x.checked_add(y)))
            .expect(OVERFLOW);
        let d = self.den.checked_mul(b).expect(OVERFLOW);
        Rational::new(n, d)
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational { num: self.num.checked_neg().expect(OVERFLOW), den: self.den }
    }
}

impl Sub for Rational {
    type Output = Rational;
    fn sub(self, o: Rational) -> Rational {
        self + (-o)
    }
}

impl Mul for Rational {
    type Output = Rational;
    fn mul(self, o: Rational) -> Rational {
        let g1 = self.num.gcd(&o.den).max(1);
        let g2 = o.num.gcd(&self.den).max(1);
        let n = (self.num / g1).checked_mul(o.num / g2).expect(OVERFLOW);
        let d = (self.den / g2).checked_mul(o.den / g1).expect(OVERFLOW);
        Rational::new(n, d)
    }
}

impl Div for Rational {
    type Output = Rational;
    fn div(self, o: Rational) -> Rational {
        assert!(o.num != 0, "division by zero");
        self * Rational::new(o.den, o.num)
    }
}

//! Double-double arithmetic (an unevaluated sum `hi + lo` of two f64s,
//! about 106 significant bits) with exp, ln and a Stirling-series ln Γ.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

const LN2: Dd = Dd { hi: std::f64::consts::LN_2, lo: 2.319_046_813_846_299_6e-17 };
const HALF_LN_2PI: Dd = Dd { hi: 0.918_938_533_204_672_8, lo: -3.878_294_158_067_241_4e-17 };

// B_{2j} / (2j (2j-1)) as exact integer ratios, j = 1..=12
const STIRLING: [(f64, f64); 12] = [
    (1.0, 12.0),
    (-1.0, 360.0),
    (1.0, 1260.0),
    (-1.0, 1680.0),
    (1.0, 1188.0),
    (-691.0, 360_360.0),
    (1.0, 156.0),
    (-3617.0, 122_400.0),
    (43_867.0, 244_188.0),
    (-174_611.0, 125_400.0),
    (77_683.0, 5796.0),
    (-236_364_091.0, 1_506_960.0),
];

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub const fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    /// Exact product of two doubles.
    pub fn product(a: f64, b: f64) -> Self {
        let (hi, lo) = two_prod(a, b);
        Dd { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    fn scale_pow2(self, k: i32) -> Self {
        // two steps so that 2^k itself never overflows
        let a = k / 2;
        let b = k - a;
        let (fa, fb) = (2f64.powi(a), 2f64.powi(b));
        Dd { hi: self.hi * fa * fb, lo: self.lo * fa * fb }
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.78 {
            return Dd::new(f64::INFINITY);
        }
        if self.hi < -745.2 {
            return Dd::ZERO;
        }
        const SQUARINGS: i32 = 10;
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * k).scale_pow2(-SQUARINGS);
        // expm1(r) by Taylor; |r| < 3.4e-4 so 10 terms reach 1e-37
        let mut term = r;
        let mut sum = r;
        for i in 2..=10 {
            term = term * r / (i as f64);
            sum = sum + term;
        }
        // expm1(2r) = 2 expm1(r) + expm1(r)^2
        for _ in 0..SQUARINGS {
            sum = sum * 2.0 + sum * sum;
        }
        (sum + 1.0).scale_pow2(k as i32)
    }

    /// Natural log; NaN for nonpositive input.
    pub fn ln(self) -> Self {
        if self.hi <= 0.0 {
            return Dd::new(f64::NAN);
        }
        let y = Dd::new(self.hi.ln());
        // one Newton step on exp(y) = x doubles the f64 accuracy
        y + self * (-y).exp() - 1.0
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd::new(x)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, b.hi);
        let (t1, t2) = two_sum(self.lo, b.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2 + t2);
        Dd { hi, lo }
    }
}

impl Add<f64> for Dd {
    type Output = Dd;
    fn add(self, b: f64) -> Dd {
        let (s1, s2) = two_sum(self.hi, b);
        let (hi, lo) = quick_two_sum(s1, s2 + self.lo);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Sub<f64> for Dd {
    type Output = Dd;
    fn sub(self, b: f64) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p1, p2) = two_prod(self.hi, b.hi);
        let p2 = p2 + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p1, p2);
        Dd { hi, lo }
    }
}

impl Mul<f64> for Dd {
    type Output = Dd;
    fn mul(self, b: f64) -> Dd {
        let (p1, p2) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p1, p2 + self.lo * b);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * q1;
        let q2 = r.hi / b.hi;
        let r = r - b * q2;
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + q3
    }
}

impl Div<f64> for Dd {
    type Output = Dd;
    fn div(self, b: f64) -> Dd {
        self / Dd::new(b)
    }
}

fn stirling(y: Dd) -> Dd {
    let inv = Dd::ONE / y;
    let inv2 = inv * inv;
    let mut pow = inv;
    let mut series = Dd::ZERO;
    for &(num, den) in &STIRLING {
        series = series + pow * Dd::new(num) / Dd::new(den);
        pow = pow * inv2;
    }
    (y - 0.5) * y.ln() - y + HALF_LN_2PI + series
}

/// ln Γ(x) in double-double precision for x ≥ 1.
///
/// Shifts the argument up to 25 by the recurrence Γ(x+1) = xΓ(x), then sums
/// twelve Stirling corrections; the truncation error is below 1e-31.
pub fn ln_gamma_dd(x: Dd) -> Dd {
    debug_assert!(x.hi >= 1.0, "ln_gamma_dd requires x >= 1, got {}", x.hi);
    let mut y = x;
    let mut shift = Dd::ONE;
    while y.hi < 25.0 {
        shift = shift * y;
        y = y + 1.0;
    }
    stirling(y) - shift.ln()
}

//! Double-double arithmetic: an unevaluated sum of two `f64`s giving ~31
//! significant digits.
//!
//! The main-term polynomial evaluation cancels catastrophically in plain
//! `f64` (the summatory count and x*P(log x) agree to ~10 digits before the
//! error term emerges), so every Delta computation runs through this type.
//! Products use a Dekker split rather than `mul_add`: the split is exact,
//! portable, and does not fall back to a slow soft-float path on targets
//! without a fused multiply-add.

use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::OnceLock;

/// Two-float value `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

/// `a + b` as (rounded sum, exact rounding error). No magnitude precondition.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `a + b` as (rounded sum, exact error), valid when `|a| >= |b|` or a = 0.
#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

const SPLITTER: f64 = 134_217_729.0; // 2^27 + 1

/// `a * b` as (rounded product, exact rounding error), by Dekker splitting.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let ta = SPLITTER * a;
    let ahi = ta - (ta - a);
    let alo = a - ahi;
    let tb = SPLITTER * b;
    let bhi = tb - (tb - b);
    let blo = b - bhi;
    let err = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo;
    (p, err)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    /// ln 2 to double-double precision.
    pub const LN2: Dd = Dd {
        hi: 0.693_147_180_559_945_3,
        lo: 2.319_046_813_846_299_6e-17,
    };
    /// 2 pi to double-double precision; the phase reductions divide by this.
    pub const TAU: Dd = Dd {
        hi: 6.283_185_307_179_586,
        lo: 2.449_293_598_294_706_4e-16,
    };

    #[inline]
    pub const fn new(hi: f64, lo: f64) -> Dd {
        Dd { hi, lo }
    }

    #[inline]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    /// Exact conversion; `v` must stay below 2^106 in magnitude (true for
    /// every divisor sum this crate produces).
    pub fn from_i128(v: i128) -> Dd {
        let hi = v as f64;
        let lo = (v - hi as i128) as f64;
        let (h, l) = quick_two_sum(hi, lo);
        Dd { hi: h, lo: l }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn abs(self) -> Dd {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }

    /// Exact scaling by a power of two.
    #[inline]
    fn ldexp(self, e: i32) -> Dd {
        let f = f64_exp2(e);
        Dd { hi: self.hi * f, lo: self.lo * f }
    }

    /// Natural logarithm; requires a strictly positive value.
    ///
    /// Reduces to m*2^e with m in [sqrt(2)/2, sqrt(2)), then sums the atanh
    /// series of (m-1)/(m+1). 22 terms bound the truncation tail below the
    /// double-double roundoff for this reduction interval.
    pub fn ln(self) -> Dd {
        assert!(
            self.hi > 0.0,
            "Dd::ln requires a positive argument, got {}",
            self.hi
        );
        let mut e = frexp_exponent(self.hi);
        let mut m = self.ldexp(-e);
        if m.hi < std::f64::consts::FRAC_1_SQRT_2 {
            m = m.ldexp(1);
            e -= 1;
        }
        let u = (m - Dd::ONE) / (m + Dd::ONE);
        let u2 = u * u;
        let inv = inv_odd_table();
        let mut acc = inv[LN_TERMS - 1];
        for i in (0..LN_TERMS - 1).rev() {
            acc = acc * u2 + inv[i];
        }
        let atanh2 = u * acc * 2.0;
        Dd::LN2 * (e as f64) + atanh2
    }

    /// ln(1 + r) for small `|r|`, at absolute error ~1e-32 * |r|.
    ///
    /// The quadrature hot loops call this once per node against a per-cell
    /// anchor log, replacing a full `ln` with a handful of operations. Falls
    /// back to `ln` when |r| is too large for the short tail polynomial.
    pub fn ln1p(r: f64) -> Dd {
        if r.abs() > 0.003_906_25 {
            return (Dd::from_f64(1.0) + r).ln();
        }
        // atanh form: ln(1+r) = 2 atanh(t), t = r/(2+r); t and the leading
        // 2t are kept in double-double, the tail is fine in f64.
        let t = Dd::from_f64(r) / (Dd::from_f64(2.0) + r);
        let t2 = t.hi * t.hi;
        let tail = t2 * (1.0 / 3.0 + t2 * (1.0 / 5.0 + t2 * (1.0 / 7.0 + t2 * (1.0 / 9.0))));
        t * 2.0 + 2.0 * t.hi * tail
    }

    /// Largest integer <= self. When `hi` is already integral the low word
    /// decides the result; otherwise `lo` cannot move the value across an
    /// integer boundary (a normalized pair keeps |lo| below half an ulp).
    pub fn floor(self) -> Dd {
        let f = self.hi.floor();
        if f == self.hi {
            let (hi, lo) = quick_two_sum(f, self.lo.floor());
            Dd { hi, lo }
        } else {
            Dd { hi: f, lo: 0.0 }
        }
    }

    /// Decimal rendering with `sig` significant digits (round half away from
    /// zero on the digit after the last kept one). Plain notation while the
    /// leading digit sits between 10^-4 and 10^sig, scientific outside.
    pub fn to_decimal_string(self, sig: usize) -> String {
        assert!((1..=30).contains(&sig), "sig out of range: {sig}");
        if self.hi == 0.0 {
            return "0".to_string();
        }
        if !self.hi.is_finite() {
            return format!("{}", self.hi);
        }
        let neg = self.hi < 0.0;
        let v = self.abs();
        let mut e10 = v.hi.log10().floor() as i32;
        // scale into [1, 10); the estimate from hi can be off by one
        let mut w = v * pow10(-e10);
        while w.hi >= 10.0 {
            w = w * pow10(-1);
            e10 += 1;
        }
        while w.hi < 1.0 {
            w = w * pow10(1);
            e10 -= 1;
        }
        let mut digits = Vec::with_capacity(sig + 1);
        for _ in 0..=sig {
            let d = w.floor().hi;
            digits.push(d as i32);
            w = (w - d) * 10.0;
        }
        for i in (1..digits.len()).rev() {
            while digits[i] < 0 {
                digits[i] += 10;
                digits[i - 1] -= 1;
            }
            while digits[i] > 9 {
                digits[i] -= 10;
                digits[i - 1] += 1;
            }
        }
        if digits[sig] >= 5 {
            let mut i = sig - 1;
            loop {
                digits[i] += 1;
                if digits[i] < 10 {
                    break;
                }
                digits[i] = 0;
                if i == 0 {
                    digits[0] = 1;
                    e10 += 1;
                    break;
                }
                i -= 1;
            }
        }
        digits.truncate(sig);
        let body: String = digits.iter().map(|d| (b'0' + *d as u8) as char).collect();
        let mut out = String::new();
        if neg {
            out.push('-');
        }
        if e10 >= -4 && (e10 as i64) < sig as i64 {
            if e10 < 0 {
                out.push_str("0.");
                for _ in 0..(-e10 - 1) {
                    out.push('0');
                }
                out.push_str(&body);
            } else {
                let point = (e10 + 1) as usize;
                out.push_str(&body[..point]);
                if point < sig {
                    out.push('.');
                    out.push_str(&body[point..]);
                }
            }
        } else {
            out.push_str(&body[..1]);
            if sig > 1 {
                out.push('.');
                out.push_str(&body[1..]);
            }
            out.push_str(&format!("e{:+03}", e10));
        }
        out
    }
}

/// 10^e as a double-double; exact for 0 <= e <= 31, one rounding for e < 0.
fn pow10(e: i32) -> Dd {
    let mut p = Dd::ONE;
    for _ in 0..e.unsigned_abs() {
        p = p * 10.0;
    }
    if e < 0 {
        Dd::ONE / p
    } else {
        p
    }
}

const LN_TERMS: usize = 22;

/// 1/(2i+1) as double-doubles, for the atanh series.
fn inv_odd_table() -> &'static [Dd; LN_TERMS] {
    static TABLE: OnceLock<[Dd; LN_TERMS]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [Dd::ZERO; LN_TERMS];
        for (i, slot) in t.iter_mut().enumerate() {
            *slot = Dd::ONE / ((2 * i + 1) as f64);
        }
        t
    })
}

/// Exponent e with x = m * 2^e, m in [0.5, 1), for finite positive normal x.
#[inline]
fn frexp_exponent(x: f64) -> i32 {
    let bits = x.to_bits();
    (((bits >> 52) & 0x7ff) as i32) - 1022
}

/// 2^e as f64 for |e| within the normal range.
#[inline]
fn f64_exp2(e: i32) -> f64 {
    f64::from_bits(((e + 1023) as u64) << 52)
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s2, e2) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s2, e2 + f);
        Dd { hi, lo }
    }
}

impl Add<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, o: f64) -> Dd {
        let (s, e) = two_sum(self.hi, o);
        let (hi, lo) = quick_two_sum(s, e + self.lo);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Sub<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, o: f64) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Mul<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, o: f64) -> Dd {
        let (p, e) = two_prod(self.hi, o);
        let (hi, lo) = quick_two_sum(p, e + self.lo * o);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * q1;
        let q2 = r.hi / o.hi;
        let r = r - o * q2;
        let q3 = r.hi / o.hi;
        let (s, e) = quick_two_sum(q1, q2);
        let (hi, lo) = quick_two_sum(s, e + q3);
        Dd { hi, lo }
    }
}

impl Div<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn div(self, o: f64) -> Dd {
        let q1 = self.hi / o;
        let (p, e) = two_prod(q1, o);
        let q2 = ((self.hi - p) + (self.lo - e)) / o;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }
    }
}

//! Exact reduction of `k * a mod 1` for integer frequencies `k` of any size.
//!
//! Every finite `f64` is a dyadic rational `m * 2^e`, so products with `f64`
//! translation amounts reduce exactly through bit extraction; reciprocal
//! amounts `1/q` reduce through `|k| mod q`. The reduced fraction is rounded
//! to `f64` only at the very end, so accuracy does not degrade with `|k|`.

use std::f64::consts::TAU;

use num_bigint::{BigInt, Sign};
use num_complex::Complex64;

/// `|k|` as little-endian 64-bit limbs plus the sign of `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Magnitude {
    limbs: Vec<u64>,
    negative: bool,
}

impl Magnitude {
    pub fn new(k: &BigInt) -> Self {
        Self {
            limbs: k.magnitude().to_u64_digits(),
            negative: k.sign() == Sign::Minus,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.limbs.is_empty()
    }

    fn signed(&self, frac: f64) -> f64 {
        if self.negative && frac != 0.0 {
            1.0 - frac
        } else {
            frac
        }
    }

    /// `(k mod q) / q` in `[0, 1)`.
    pub fn frac_over(&self, q: u64) -> f64 {
        debug_assert!(q > 0);
        let mut rem: u128 = 0;
        for &limb in self.limbs.iter().rev() {
            rem = ((rem << 64) | limb as u128) % q as u128;
        }
        if self.negative && rem != 0 {
            rem = q as u128 - rem;
        }
        rem as f64 / q as f64
    }

    /// `(k mod 2^s) / 2^s` in `[0, 1)`.
    pub fn frac_pow2(&self, s: u64) -> f64 {
        self.signed(top_bits_frac(&self.limbs, s))
    }

    /// `(k * mant mod 2^s) / 2^s` in `[0, 1)`.
    pub fn frac_mul_pow2(&self, mant: u64, s: u64) -> f64 {
        let needed = (s as usize).div_ceil(64);
        let mut prod = Vec::with_capacity(needed + 1);
        let mut carry: u128 = 0;
        for &limb in self.limbs.iter().take(needed) {
            let t = limb as u128 * mant as u128 + carry;
            prod.push(t as u64);
            carry = t >> 64;
        }
        prod.push(carry as u64);
        self.signed(top_bits_frac(&prod, s))
    }

    /// `k * a mod 1` for an arbitrary finite `f64` amount `a`.
    pub fn frac_mul_f64(&self, a: f64) -> f64 {
        let d = Dyadic::from_f64(a);
        if d.mant == 0 || d.shift == 0 {
            return 0.0;
        }
        let f = self.frac_mul_pow2(d.mant, d.shift);
        if d.negative && f != 0.0 {
            1.0 - f
        } else {
            f
        }
    }
}

/// Fraction `x / 2^s` where `x` is the low `s` bits of the limb vector.
fn top_bits_frac(limbs: &[u64], s: u64) -> f64 {
    if s == 0 {
        return 0.0;
    }
    // 64 bits ending just below position s: bits [s-64, s).
    let lo = s.saturating_sub(64);
    let width = s - lo;
    let word = |start: u64| -> u64 {
        let w = (start / 64) as usize;
        let off = start % 64;
        let a = limbs.get(w).copied().unwrap_or(0);
        if off == 0 {
            a
        } else {
            let b = limbs.get(w + 1).copied().unwrap_or(0);
            (a >> off) | (b << (64 - off))
        }
    };
    let mut x = word(lo);
    if width < 64 {
        x &= (1u64 << width) - 1;
    }
    // 2^-width assembled directly from the exponent bits
    x as f64 * f64::from_bits((1023 - width) << 52)
}

/// `sign * mant * 2^-shift` with `mant` odd (or zero); `shift == 0` means integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dyadic {
    pub mant: u64,
    pub shift: u64,
    pub negative: bool,
}

impl Dyadic {
    pub fn from_f64(a: f64) -> Self {
        assert!(a.is_finite(), "translation amounts must be finite");
        if a == 0.0 {
            return Self { mant: 0, shift: 0, negative: false };
        }
        let bits = a.to_bits();
        let negative = bits >> 63 == 1;
        let exp_bits = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mut mant, mut exp) = if exp_bits == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), exp_bits - 1075)
        };
        let tz = mant.trailing_zeros() as i64;
        mant >>= tz;
        exp += tz;
        if exp >= 0 {
            Self { mant, shift: 0, negative }
        } else {
            Self { mant, shift: (-exp) as u64, negative }
        }
    }
}

/// `e^{2 pi i t}` for a reduced fraction `t`, exact at multiples of 1/4.
#[inline]
pub fn unit(frac: f64) -> Complex64 {
    // nearest quarter turn, avoiding the libm call behind f64::round
    let x = (frac + 0.125) * 4.0;
    let mut quarter = x as i64;
    if quarter as f64 > x {
        quarter -= 1;
    }
    let (s, c) = small_sin_cos(TAU * (frac - quarter as f64 * 0.25));
    match quarter.rem_euclid(4) {
        0 => Complex64::new(c, s),
        1 => Complex64::new(-s, c),
        2 => Complex64::new(-c, -s),
        _ => Complex64::new(s, -c),
    }
}

/// `(sin x, cos x)` for `|x| <= pi/4` by Taylor series; the truncation error is below 1e-19.
#[inline]
fn small_sin_cos(x: f64) -> (f64, f64) {
    let x2 = x * x;
    let s = -x2 / 355_687_428_096_000.0 + 1.0 / 1_307_674_368_000.0;
    let s = x2 * s + -1.0 / 6_227_020_800.0;
    let s = x2 * s + 1.0 / 39_916_800.0;
    let s = x2 * s + -1.0 / 362_880.0;
    let s = x2 * s + 1.0 / 5_040.0;
    let s = x2 * s + -1.0 / 120.0;
    let s = x2 * s + 1.0 / 6.0;
    let sin = x - x * x2 * s;
    let c = x2 * 1.0 / 6_402_373_705_728_000.0 + -1.0 / 20_922_789_888_000.0;
    let c = x2 * c + 1.0 / 87_178_291_200.0;
    let c = x2 * c + -1.0 / 479_001_600.0;
    let c = x2 * c + 1.0 / 3_628_800.0;
    let c = x2 * c + -1.0 / 40_320.0;
    let c = x2 * c + 1.0 / 720.0;
    let c = x2 * c + -1.0 / 24.0;
    let c = x2 * c + 0.5;
    let cos = 1.0 - x2 * c;
    (sin, cos)
}

/// Neumaier-compensated complex accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    sum: Complex64,
    comp: Complex64,
}

impl Accumulator {
    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.sum.re = neumaier(self.sum.re, z.re, &mut self.comp.re);
        self.sum.im = neumaier(self.sum.im, z.im, &mut self.comp.im);
    }

    pub fn value(&self) -> Complex64 {
        self.sum + self.comp
    }
}

#[inline]
fn neumaier(sum: f64, x: f64, comp: &mut f64) -> f64 {
    let t = sum + x;
    if sum.abs() >= x.abs() {
        *comp += (sum - t) + x;
    } else {
        *comp += (x - t) + sum;
    }
    t
}

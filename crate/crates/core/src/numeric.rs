//! Exact rational arithmetic for answer values.
//!
//! Answers in the supported domain are integers, fractions, decimals, or
//! percentages. Comparing them through `f64` would make equivalence checks
//! depend on rounding, so values are kept as normalized `i128` fractions.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// A normalized rational number: `den > 0`, `gcd(num, den) == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    num: i128,
    den: i128,
}

impl Rational {
    pub fn new(num: i128, den: i128) -> Option<Rational> {
        if den == 0 {
            return None;
        }
        let sign = if den < 0 { -1 } else { 1 };
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i128;
        Some(Rational {
            num: sign * num / g,
            den: sign * den / g,
        })
    }

    pub fn integer(value: i64) -> Rational {
        Rational {
            num: value as i128,
            den: 1,
        }
    }

    pub fn zero() -> Rational {
        Rational::integer(0)
    }

    pub fn num(&self) -> i128 {
        self.num
    }

    pub fn den(&self) -> i128 {
        self.den
    }

    pub fn is_integer(&self) -> bool {
        self.den == 1
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    pub fn is_negative(&self) -> bool {
        self.num < 0
    }

    pub fn abs(&self) -> Rational {
        Rational {
            num: self.num.abs(),
            den: self.den,
        }
    }

    pub fn as_integer(&self) -> Option<i64> {
        if self.den == 1 {
            i64::try_from(self.num).ok()
        } else {
            None
        }
    }

    /// Parse an integer ("-3") or a fraction ("7/2"). Decimal forms are
    /// handled by the answer parser, which needs to remember they were
    /// decimals.
    pub fn parse(text: &str) -> Option<Rational> {
        let t = text.trim();
        if let Some((p, q)) = t.split_once('/') {
            let num: i128 = p.trim().parse().ok()?;
            let den: i128 = q.trim().parse().ok()?;
            Rational::new(num, den)
        } else {
            let num: i128 = t.parse().ok()?;
            Some(Rational { num, den: 1 })
        }
    }

    /// Parse a decimal string like "2.50" into an exact fraction.
    pub fn parse_decimal(text: &str) -> Option<Rational> {
        let t = text.trim();
        let (int_part, frac_part) = t.split_once('.')?;
        if frac_part.is_empty() || frac_part.len() > 18 {
            return None;
        }
        let negative = int_part.trim_start().starts_with('-');
        let int_digits = int_part.trim_start_matches(['-', '+']);
        let whole: i128 = if int_digits.is_empty() {
            0
        } else {
            int_digits.parse().ok()?
        };
        if !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let frac: i128 = frac_part.parse().ok()?;
        let scale = 10i128.checked_pow(frac_part.len() as u32)?;
        let magnitude = whole.checked_mul(scale)?.checked_add(frac)?;
        let num = if negative { -magnitude } else { magnitude };
        Rational::new(num, scale)
    }

    /// |self - other| <= tol_num/tol_den * max(|self|, |other|), in exact
    /// arithmetic. Used for the relative comparison of decimal answers.
    pub fn approx_eq_rel(&self, other: &Rational, tol_num: i128, tol_den: i128) -> bool {
        let diff = (*self - *other).abs();
        if diff.is_zero() {
            return true;
        }
        let bound = if self.abs() >= other.abs() {
            self.abs()
        } else {
            other.abs()
        };
        // diff * tol_den <= bound * tol_num
        let lhs = diff.num * tol_den * bound.den;
        let rhs = bound.num * tol_num * diff.den;
        lhs <= rhs
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    if a == 0 {
        return b.max(1);
    }
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

impl Add for Rational {
    type Output = Rational;
    fn add(self, rhs: Rational) -> Rational {
        Rational::new(self.num * rhs.den + rhs.num * self.den, self.den * rhs.den)
            .expect("nonzero denominator")
    }
}

impl Sub for Rational {
    type Output = Rational;
    fn sub(self, rhs: Rational) -> Rational {
        self + (-rhs)
    }
}

impl Mul for Rational {
    type Output = Rational;
    fn mul(self, rhs: Rational) -> Rational {
        Rational::new(self.num * rhs.num, self.den * rhs.den).expect("nonzero denominator")
    }
}

impl Div for Rational {
    type Output = Option<Rational>;
    fn div(self, rhs: Rational) -> Option<Rational> {
        if rhs.is_zero() {
            return None;
        }
        Rational::new(self.num * rhs.den, self.den * rhs.num)
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational {
            num: -self.num,
            den: self.den,
        }
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Rational) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Rational) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

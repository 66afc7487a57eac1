//! Exact exponent arithmetic over the rationals extended by `∞`.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, Error, Result};

pub type Rational = Ratio<i64>;

/// An exponent in `[0, ∞]`, never stored as a large float.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Exponent {
    Finite(Rational),
    Infinite,
}

impl Exponent {
    pub const ONE: Exponent = Exponent::Finite(Ratio::new_raw(1, 1));
    pub const INF: Exponent = Exponent::Infinite;

    pub fn int(n: i64) -> Exponent {
        Exponent::Finite(Rational::from_integer(n))
    }

    pub fn ratio(num: i64, den: i64) -> Exponent {
        Exponent::Finite(Rational::new(num, den))
    }

    /// Closest rational with a small denominator; `inf` maps to `∞`.
    pub fn from_f64(x: f64) -> Result<Exponent> {
        if x == f64::INFINITY {
            return Ok(Exponent::Infinite);
        }
        if !(x.is_finite() && x >= 0.0) {
            return Err(domain(format!("exponent {x} is not in [0, ∞]")));
        }
        Rational::approximate_float(x)
            .map(Exponent::Finite)
            .ok_or_else(|| domain(format!("exponent {x} has no rational approximation")))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Exponent::Infinite)
    }

    pub fn is_one(&self) -> bool {
        *self == Exponent::ONE
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Exponent::Finite(r) => *r.numer() as f64 / *r.denom() as f64,
            Exponent::Infinite => f64::INFINITY,
        }
    }

    /// `1/p` as an exact rational, with `1/∞ = 0`.
    pub fn reciprocal(&self) -> Result<Rational> {
        match self {
            Exponent::Infinite => Ok(Rational::from_integer(0)),
            Exponent::Finite(r) if *r.numer() == 0 => Err(domain("reciprocal of exponent 0")),
            Exponent::Finite(r) => Ok(r.recip()),
        }
    }

    /// Exponent with the given reciprocal; reciprocal 0 means `∞`.
    pub fn from_reciprocal(inv: Rational) -> Result<Exponent> {
        if inv < Rational::from_integer(0) {
            return Err(domain(format!("negative reciprocal {inv}")));
        }
        if *inv.numer() == 0 {
            Ok(Exponent::Infinite)
        } else {
            Ok(Exponent::Finite(inv.recip()))
        }
    }

    /// Hölder conjugate `p' = p/(p-1)`; requires `p >= 1`.
    pub fn conjugate(&self) -> Result<Exponent> {
        let inv = self.reciprocal()?;
        let one = Rational::from_integer(1);
        if inv > one {
            return Err(domain(format!("conjugate of exponent {self} < 1")));
        }
        Exponent::from_reciprocal(one - inv)
    }

    /// `self / k` for a finite positive divisor; `∞ / k = ∞`.
    pub fn div(&self, k: Exponent) -> Result<Exponent> {
        match (self, k) {
            (_, Exponent::Infinite) => Err(domain("division by an infinite exponent")),
            (Exponent::Infinite, _) => Ok(Exponent::Infinite),
            (Exponent::Finite(a), Exponent::Finite(b)) => {
                if *b.numer() == 0 {
                    Err(domain("division by exponent 0"))
                } else {
                    Ok(Exponent::Finite(a / b))
                }
            }
        }
    }

    pub fn mul(&self, k: Exponent) -> Exponent {
        match (self, k) {
            (Exponent::Finite(a), Exponent::Finite(b)) => Exponent::Finite(a * b),
            _ => Exponent::Infinite,
        }
    }
}

impl PartialOrd for Exponent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Exponent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering::*;
        match (self, other) {
            (Exponent::Infinite, Exponent::Infinite) => Equal,
            (Exponent::Infinite, _) => Greater,
            (_, Exponent::Infinite) => Less,
            (Exponent::Finite(a), Exponent::Finite(b)) => a.cmp(b),
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Infinite => write!(f, "inf"),
            Exponent::Finite(r) if *r.denom() == 1 => write!(f, "{}", r.numer()),
            Exponent::Finite(r) => write!(f, "{}/{}", r.numer(), r.denom()),
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Exponent> {
        let t = s.trim();
        if matches!(t, "inf" | "infinity" | "∞") {
            return Ok(Exponent::Infinite);
        }
        if let Some((a, b)) = t.split_once('/') {
            let num: i64 = a.trim().parse().map_err(|_| domain(format!("bad exponent '{s}'")))?;
            let den: i64 = b.trim().parse().map_err(|_| domain(format!("bad exponent '{s}'")))?;
            if den <= 0 || num < 0 {
                return Err(domain(format!("bad exponent '{s}'")));
            }
            return Ok(Exponent::ratio(num, den));
        }
        let x: f64 = t.parse().map_err(|_| domain(format!("bad exponent '{s}'")))?;
        Exponent::from_f64(x)
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Exponent, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        let e = match Raw::deserialize(d)? {
            Raw::Num(x) => Exponent::from_f64(x),
            Raw::Str(s) => s.parse(),
        };
        e.map_err(serde::de::Error::custom)
    }
}

/// `1 <= p <= q <= ∞` with the derived exponents `s`, `r = q/s` and all
/// conjugates. `s` is defined by `1/p - 1/q = 1 - 1/s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct ExponentPair {
    pub p: Exponent,
    pub q: Exponent,
    pub s: Exponent,
    pub r: Exponent,
    pub p_conj: Exponent,
    pub q_conj: Exponent,
    pub r_conj: Exponent,
    pub s_conj: Exponent,
}

impl ExponentPair {
    pub fn new(p: Exponent, q: Exponent) -> Result<ExponentPair> {
        if p < Exponent::ONE {
            return Err(domain(format!("p = {p} must be at least 1")));
        }
        if q < p {
            return Err(domain(format!("q = {q} must be at least p = {p}")));
        }
        if p.is_one() && q.is_infinite() {
            return Err(domain("the pair p = 1, q = ∞ is not admissible"));
        }
        let one = Rational::from_integer(1);
        let s = Exponent::from_reciprocal(one - p.reciprocal()? + q.reciprocal()?)?;
        let r = q.div(s)?;
        Ok(ExponentPair {
            p,
            q,
            s,
            r,
            p_conj: p.conjugate()?,
            q_conj: q.conjugate()?,
            r_conj: r.conjugate()?,
            s_conj: s.conjugate()?,
        })
    }

    /// The diagonal pair `(p, p)`; `(1, 1)` is the `A_1` class.
    pub fn diagonal(p: Exponent) -> Result<ExponentPair> {
        ExponentPair::new(p, p)
    }

    pub fn pf(&self) -> f64 {
        self.p.to_f64()
    }

    pub fn qf(&self) -> f64 {
        self.q.to_f64()
    }

    pub fn sf(&self) -> f64 {
        self.s.to_f64()
    }

    pub fn rf(&self) -> f64 {
        self.r.to_f64()
    }
}

impl fmt::Display for ExponentPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.p, self.q)
    }
}

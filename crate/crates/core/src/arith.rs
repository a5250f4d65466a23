//! Small integer and rational helpers shared by every module.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: u64) -> Rational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn gcd(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

pub fn lcm(a: u64, b: u64) -> Result<u64> {
    if a == 0 || b == 0 {
        return Ok(0);
    }
    (a / gcd(a, b))
        .checked_mul(b)
        .ok_or_else(|| Error::CapExceeded(format!("lcm({a},{b}) overflows u64")))
}

pub fn checked_mul(a: u64, b: u64) -> Result<u64> {
    a.checked_mul(b)
        .ok_or_else(|| Error::CapExceeded(format!("{a}*{b} overflows u64")))
}

pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut r = 1u64;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    r
}

/// Inverse of `a` modulo `m`; requires gcd(a, m) = 1.
pub fn inv_mod(a: u64, m: u64) -> Option<u64> {
    if m == 1 {
        return Some(0);
    }
    let (g, x, _) = ext_gcd(a as i128 % m as i128, m as i128);
    if g != 1 {
        return None;
    }
    Some(x.rem_euclid(m as i128) as u64)
}

fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    if b == 0 {
        (a, 1, 0)
    } else {
        let (g, x, y) = ext_gcd(b, a % b);
        (g, y, x - (a / b) * y)
    }
}

/// The unique x in [0, s·t) with x ≡ a (mod s) and x ≡ b (mod t).
pub fn crt_pair(a: u64, s: u64, b: u64, t: u64) -> Result<u64> {
    if gcd(s, t) != 1 {
        return Err(Error::NotCoprime(s, t));
    }
    let st = checked_mul(s, t)?;
    let inv = inv_mod(s % t, t).expect("coprime moduli have an inverse");
    // x = a + s·k with k ≡ (b − a)·s⁻¹ (mod t)
    let diff = (b as i128 - a as i128).rem_euclid(t as i128) as u64;
    let k = mul_mod(diff, inv, t);
    Ok(((a as u128 + s as u128 * k as u128) % st as u128) as u64)
}

/// Prime factorisation by trial division, ascending, with multiplicity.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2u64;
    while p * p <= n {
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

pub fn is_squarefree(n: u64) -> bool {
    n >= 1 && factorize(n).iter().all(|&(_, e)| e == 1)
}

pub fn totient(n: u64) -> u64 {
    factorize(n)
        .iter()
        .fold(n, |acc, &(p, _)| acc / p * (p - 1))
}

/// Largest integer strictly below `r` (for r > 0), i.e. ⌈r⌉ − 1.
pub fn ceil_minus_one(r: &Rational) -> i64 {
    let c = r.ceil().to_integer();
    (c - BigInt::one()).to_i64().expect("offset fits i64")
}

pub fn is_dyadic(r: &Rational) -> bool {
    let d = r.denom();
    d.is_positive() && (d & (d - BigInt::one())).is_zero()
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Parse "a/b", an integer, or a finite decimal into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::arg(format!("not a rational number: {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((i, f)) = s.split_once('.') {
        let neg = i.starts_with('-');
        let digits = format!("{}{}", i.trim_start_matches('-'), f);
        let n: BigInt = digits.parse().map_err(|_| bad())?;
        let d = num_traits::pow(BigInt::from(10), f.len());
        let v = BigRational::new(n, d);
        return Ok(if neg { -v } else { v });
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(BigRational::from_integer(n))
}

/// Serde adapter writing rationals as "a/b" strings.
pub mod ratstr {
    use super::{parse_rational, Rational};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map_err(serde::de::Error::custom)
    }
}

/// As `ratstr`, for optional values.
pub mod ratstr_opt {
    use super::{parse_rational, Rational};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match r {
            Some(r) => s.serialize_some(&r.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| parse_rational(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Serde adapter writing a rational-keyed map as a list of "a/b" pairs.
pub mod ratmap {
    use std::collections::BTreeMap;

    use super::{parse_rational, Rational};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<Rational, Rational>, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<(String, String)> = m.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Rational, Rational>, D::Error> {
        let v = Vec::<(String, String)>::deserialize(d)?;
        v.into_iter()
            .map(|(k, v)| Ok((parse_rational(&k)?, parse_rational(&v)?)))
            .collect::<crate::error::Result<_>>()
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crt_matches_scan() {
        for s in 1..20u64 {
            for t in 1..20u64 {
                if gcd(s, t) != 1 {
                    assert!(crt_pair(0, s, 0, t).is_err());
                    continue;
                }
                for a in 0..s {
                    for b in 0..t {
                        let x = crt_pair(a, s, b, t).unwrap();
                        let brute = (0..s * t).find(|x| x % s == a && x % t == b).unwrap();
                        assert_eq!(x, brute);
                    }
                }
            }
        }
    }

    #[test]
    fn ceil_minus_one_is_strict_floor() {
        assert_eq!(ceil_minus_one(&rat(5, 4)), 1);
        assert_eq!(ceil_minus_one(&rat(2, 1)), 1);
        assert_eq!(ceil_minus_one(&rat(1, 2)), 0);
    }

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rational("2/5").unwrap(), rat(2, 5));
        assert_eq!(parse_rational("0.25").unwrap(), rat(1, 4));
        assert_eq!(parse_rational("3").unwrap(), rat(3, 1));
        assert!(parse_rational("x").is_err());
        assert!(parse_rational("1/0").is_err());
    }

    #[test]
    fn dyadic() {
        assert!(is_dyadic(&rat(1, 32)));
        assert!(is_dyadic(&rat(3, 1)));
        assert!(!is_dyadic(&rat(1, 3)));
    }
}

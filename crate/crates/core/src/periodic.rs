//! Explicit exact-rational functions on Z_T, stored as palette indices.

use std::collections::BTreeMap;

use base64::Engine;
use num_traits::Zero;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::arith::{int, Rational};
use crate::error::{Error, Result};
use crate::residue::ResidueSet;

/// A nonnegative function on Z_T. `palette` is sorted and duplicate free;
/// `values[x]` indexes into it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodicFunction {
    palette: Vec<Rational>,
    values: Vec<u16>,
}

impl PeriodicFunction {
    pub fn from_parts(palette: Vec<Rational>, values: Vec<u16>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::arg("period must be positive"));
        }
        if palette.len() > u16::MAX as usize {
            return Err(Error::CapExceeded("more than 65535 distinct values".into()));
        }
        if values.iter().any(|&v| v as usize >= palette.len()) {
            return Err(Error::Format("palette index out of range".into()));
        }
        if palette.iter().any(|v| v < &Rational::zero()) {
            return Err(Error::arg("values must be nonnegative"));
        }
        let mut f = PeriodicFunction { palette, values };
        f.normalize();
        Ok(f)
    }

    pub fn from_values(values: &[Rational]) -> Result<Self> {
        let mut palette: Vec<Rational> = values.to_vec();
        palette.sort();
        palette.dedup();
        let idx: Vec<u16> = values
            .iter()
            .map(|v| palette.binary_search(v).unwrap() as u16)
            .collect();
        Self::from_parts(palette, idx)
    }

    pub fn constant(period: u64, c: Rational) -> Self {
        PeriodicFunction {
            palette: vec![c],
            values: vec![0; period as usize],
        }
    }

    pub fn indicator(set: &ResidueSet) -> Self {
        let values = set.mask().into_iter().map(|b| b as u16).collect();
        PeriodicFunction::from_parts(vec![Rational::zero(), int(1)], values).unwrap()
    }

    /// Sorts and dedups the palette, dropping unused entries.
    fn normalize(&mut self) {
        let mut used = vec![false; self.palette.len()];
        for &v in &self.values {
            used[v as usize] = true;
        }
        let mut order: Vec<usize> = (0..self.palette.len()).filter(|&i| used[i]).collect();
        order.sort_by(|&a, &b| self.palette[a].cmp(&self.palette[b]));
        let mut remap = vec![0u16; self.palette.len()];
        let mut palette: Vec<Rational> = Vec::with_capacity(order.len());
        for i in order {
            if palette.last() != Some(&self.palette[i]) {
                palette.push(self.palette[i].clone());
            }
            remap[i] = (palette.len() - 1) as u16;
        }
        for v in &mut self.values {
            *v = remap[*v as usize];
        }
        self.palette = palette;
    }

    pub fn period(&self) -> u64 {
        self.values.len() as u64
    }

    pub fn palette(&self) -> &[Rational] {
        &self.palette
    }

    pub fn indices(&self) -> &[u16] {
        &self.values
    }

    pub fn index(&self, x: u64) -> u16 {
        self.values[(x % self.period()) as usize]
    }

    pub fn value(&self, x: u64) -> &Rational {
        &self.palette[self.index(x) as usize]
    }

    pub fn to_values(&self) -> Vec<Rational> {
        self.values.iter().map(|&i| self.palette[i as usize].clone()).collect()
    }

    /// Counts per palette entry.
    pub fn counts(&self) -> Vec<u64> {
        let mut c = vec![0u64; self.palette.len()];
        for &v in &self.values {
            c[v as usize] += 1;
        }
        c
    }

    pub fn histogram(&self) -> BTreeMap<Rational, u64> {
        self.palette.iter().cloned().zip(self.counts()).collect()
    }

    pub fn mean(&self) -> Rational {
        let total: Rational = self
            .palette
            .iter()
            .zip(self.counts())
            .map(|(v, c)| v * int(c))
            .sum();
        total / int(self.period())
    }

    pub fn is_constant(&self) -> bool {
        self.palette.len() == 1
    }

    /// Applies `g` to every palette value.
    pub fn map_values(&self, g: impl Fn(&Rational) -> Rational) -> Result<Self> {
        let palette = self.palette.iter().map(g).collect();
        Self::from_parts(palette, self.values.clone())
    }

    /// The same function viewed with period `n` (a multiple of the period).
    pub fn lift(&self, n: u64) -> Result<Self> {
        if n % self.period() != 0 {
            return Err(Error::arg(format!("{n} is not a multiple of the period {}", self.period())));
        }
        let values = (0..n).map(|x| self.index(x)).collect();
        Self::from_parts(self.palette.clone(), values)
    }

    /// Pointwise g(x) = op(self(x), other(x)) on the lcm of the periods.
    pub fn zip_with(&self, other: &Self, op: impl Fn(&Rational, &Rational) -> Rational) -> Result<Self> {
        let n = crate::arith::lcm(self.period(), other.period())?;
        let mut cache: BTreeMap<(u16, u16), u16> = BTreeMap::new();
        let mut palette = Vec::new();
        let mut values = Vec::with_capacity(n as usize);
        for x in 0..n {
            let key = (self.index(x), other.index(x));
            let idx = *cache.entry(key).or_insert_with(|| {
                palette.push(op(&self.palette[key.0 as usize], &other.palette[key.1 as usize]));
                (palette.len() - 1) as u16
            });
            values.push(idx);
        }
        Self::from_parts(palette, values)
    }
}

#[derive(Serialize, Deserialize)]
struct Wire {
    period: u64,
    palette: Vec<String>,
    /// base64 of little-endian u16 indices
    values: String,
}

impl Serialize for PeriodicFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut bytes = Vec::with_capacity(self.values.len() * 2);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        Wire {
            period: self.period(),
            palette: self.palette.iter().map(|r| r.to_string()).collect(),
            values: base64::engine::general_purpose::STANDARD.encode(bytes),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PeriodicFunction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = Wire::deserialize(d)?;
        let palette = w
            .palette
            .iter()
            .map(|s| crate::arith::parse_rational(s))
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(w.values)
            .map_err(D::Error::custom)?;
        if bytes.len() as u64 != 2 * w.period {
            return Err(D::Error::custom("value array length does not match period"));
        }
        let values = bytes.chunks(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
        PeriodicFunction::from_parts(palette, values).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;

    #[test]
    fn palette_is_canonical() {
        let f = PeriodicFunction::from_values(&[rat(1, 2), rat(0, 1), rat(1, 2), rat(3, 1)]).unwrap();
        assert_eq!(f.palette(), &[rat(0, 1), rat(1, 2), rat(3, 1)]);
        assert_eq!(f.mean(), rat(1, 1));
        let g = PeriodicFunction::from_parts(vec![rat(3, 1), rat(0, 1), rat(3, 1)], vec![0, 1, 2, 0]).unwrap();
        assert_eq!(g.palette(), &[rat(0, 1), rat(3, 1)]);
        assert_eq!(g.to_values(), vec![rat(3, 1), rat(0, 1), rat(3, 1), rat(3, 1)]);
    }

    #[test]
    fn json_round_trip() {
        let f = PeriodicFunction::from_values(&[rat(1, 3), rat(0, 1), rat(5, 2)]).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let g: PeriodicFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn zip_on_lcm() {
        let a = PeriodicFunction::from_values(&[rat(1, 1), rat(0, 1)]).unwrap();
        let b = PeriodicFunction::from_values(&[rat(1, 1), rat(2, 1), rat(3, 1)]).unwrap();
        let c = a.zip_with(&b, |x, y| x * y).unwrap();
        assert_eq!(c.period(), 6);
        assert_eq!(c.value(4), &rat(2, 1));
        assert_eq!(c.value(3), &rat(0, 1));
    }
}

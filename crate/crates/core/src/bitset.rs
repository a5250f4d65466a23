//! Fixed-length bit sets over Z_N with a compact wire format.

use base64::Engine;
use bitvec::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::arith::Rational;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct BitSet(BitVec<u64, Lsb0>);

impl BitSet {
    pub fn new(len: u64) -> Self {
        BitSet(bitvec![u64, Lsb0; 0; len as usize])
    }

    pub fn from_fn(len: u64, f: impl Fn(u64) -> bool) -> Self {
        BitSet((0..len).map(f).collect())
    }

    pub fn from_mask(mask: &[bool]) -> Self {
        BitSet(mask.iter().copied().collect())
    }

    pub fn len(&self) -> u64 {
        self.0.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: u64) -> bool {
        self.0[i as usize]
    }

    pub fn set(&mut self, i: u64, v: bool) {
        self.0.set(i as usize, v);
    }

    pub fn count(&self) -> u64 {
        self.0.count_ones() as u64
    }

    pub fn density(&self) -> Rational {
        Rational::new(self.count().into(), self.len().max(1).into())
    }

    pub fn ones(&self) -> impl Iterator<Item = u64> + '_ {
        self.0.iter_ones().map(|i| i as u64)
    }

    pub fn union_with(&mut self, other: &BitSet) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::arg("bit sets of different lengths"));
        }
        *self.0.as_mut_bitslice() |= other.0.as_bitslice();
        Ok(())
    }

    /// Number of members of `self` not in `other`.
    pub fn count_outside(&self, other: &BitSet) -> u64 {
        self.0.iter_ones().filter(|&i| !other.0[i]).count() as u64
    }

    pub fn is_subset(&self, other: &BitSet) -> bool {
        self.len() == other.len() && self.count_outside(other) == 0
    }
}

#[derive(Serialize, Deserialize)]
struct Wire {
    len: u64,
    words: String,
}

impl Serialize for BitSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let bytes: Vec<u8> = self.0.as_raw_slice().iter().flat_map(|w| w.to_le_bytes()).collect();
        Wire {
            len: self.len(),
            words: base64::engine::general_purpose::STANDARD.encode(bytes),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BitSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = Wire::deserialize(d)?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(w.words)
            .map_err(D::Error::custom)?;
        if bytes.len() % 8 != 0 || (bytes.len() as u64) * 8 < w.len {
            return Err(D::Error::custom("bit set payload has the wrong size"));
        }
        let words: Vec<u64> = bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut bits = BitVec::<u64, Lsb0>::from_vec(words);
        bits.truncate(w.len as usize);
        Ok(BitSet(bits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_counts() {
        let b = BitSet::from_fn(130, |i| i % 7 == 3);
        assert_eq!(b.count(), (0..130).filter(|i| i % 7 == 3).count() as u64);
        let s = serde_json::to_string(&b).unwrap();
        let c: BitSet = serde_json::from_str(&s).unwrap();
        assert_eq!(b, c);
        let mut u = BitSet::new(130);
        u.set(3, true);
        assert!(u.is_subset(&b));
        u.set(4, true);
        assert_eq!(u.count_outside(&b), 1);
        u.union_with(&b).unwrap();
        assert_eq!(u.count(), b.count() + 1);
    }
}

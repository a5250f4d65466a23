//! Lazily evaluated exact functions on Z_N built from tables, block-shift
//! rearrangements, residue-class switches and interval gates.
//!
//! A field of period N = B·r_1⋯r_k carries a coordinate map
//! x ↦ (x mod B, c_1, …, c_k) that is a bijection Z_N → Z_B × ∏ Z_{r_i}
//! whenever `coords_valid` holds. Gates introduce digits; rearrangements
//! and switches transport them. Distribution questions are then answered
//! by enumerating Z_B and counting digit tuples combinatorially.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::arith::{gcd, int, lcm, Rational};
use crate::error::{Error, Result};
use crate::periodic::PeriodicFunction;
use crate::rearrange::RearrangementPlan;

/// Counts per palette index over one full period.
pub type Hist = Vec<u128>;

type Bucket = SmallVec<[(u16, u128); 4]>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    /// Length of one gate cell; the digit is ⌊x/n0⌋ mod radix.
    pub n0: u64,
    pub radix: u64,
    /// Per branch: the branch is kept where the digit is below this value.
    pub thresholds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Const,
    Table { table: Arc<PeriodicFunction> },
    Scaled { inner: Field, factor: Rational },
    Rearranged { inner: Field, plan: Arc<RearrangementPlan> },
    Switch {
        q: u64,
        class: Vec<u8>,
        branches: Vec<Field>,
        gate: Option<Gate>,
    },
}

#[derive(Debug, PartialEq)]
struct Inner {
    node: Node,
    palette: Vec<Rational>,
    period: u64,
    base: u64,
    radices: Vec<u64>,
    coords: bool,
    /// Per node kind: Scaled → palette map; Switch → remap per branch.
    maps: Vec<Vec<u16>>,
    zero: Option<u16>,
    ungated: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field(Arc<Inner>);

fn radix_product(r: &[u64]) -> u128 {
    r.iter().map(|&v| v as u128).product()
}

fn merge(bucket: &mut Bucket, idx: u16, n: u128) {
    if n == 0 {
        return;
    }
    if let Some(e) = bucket.iter_mut().find(|e| e.0 == idx) {
        e.1 += n;
    } else {
        bucket.push((idx, n));
    }
}

impl Field {
    fn wrap(inner: Inner) -> Self {
        Field(Arc::new(inner))
    }

    pub fn constant(c: Rational) -> Self {
        Field::wrap(Inner {
            node: Node::Const,
            palette: vec![c],
            period: 1,
            base: 1,
            radices: Vec::new(),
            coords: true,
            maps: Vec::new(),
            zero: None,
            ungated: 1,
        })
    }

    pub fn table(f: PeriodicFunction) -> Self {
        let period = f.period();
        let palette = f.palette().to_vec();
        Field::wrap(Inner {
            node: Node::Table { table: Arc::new(f) },
            palette,
            period,
            base: period,
            radices: Vec::new(),
            coords: true,
            maps: Vec::new(),
            zero: None,
            ungated: period,
        })
    }

    /// c·inner for c > 0.
    pub fn scaled(inner: &Field, factor: Rational) -> Result<Self> {
        if factor <= int(0) {
            return Err(Error::arg("scale factor must be positive"));
        }
        let palette: Vec<Rational> = inner.palette().iter().map(|v| v * &factor).collect();
        // positive scaling keeps the palette sorted
        let map = (0..palette.len() as u16).collect();
        Ok(Field::wrap(Inner {
            node: Node::Scaled {
                inner: inner.clone(),
                factor,
            },
            palette,
            period: inner.period(),
            base: inner.base(),
            radices: inner.radices().to_vec(),
            coords: inner.coords_valid(),
            maps: vec![map],
            zero: None,
            ungated: inner.period(),
        }))
    }

    /// x ↦ inner(x + ξ(x mod pT)).
    pub fn rearranged(inner: &Field, plan: Arc<RearrangementPlan>) -> Result<Self> {
        let n = inner.period();
        if gcd(plan.p, n) != 1 {
            return Err(Error::NotCoprime(plan.p, n));
        }
        let period = lcm(plan.period(), n)?;
        let digit_free = inner.radices().is_empty();
        // digits survive only if the base already carries the block structure
        let coords = inner.coords_valid() && (digit_free || inner.base() % plan.t == 0);
        let keep_digits = coords && !digit_free;
        Ok(Field::wrap(Inner {
            node: Node::Rearranged {
                inner: inner.clone(),
                plan,
            },
            palette: inner.palette().to_vec(),
            period,
            base: if keep_digits { period / (n / inner.base()) } else { period },
            radices: if keep_digits { inner.radices().to_vec() } else { Vec::new() },
            coords,
            maps: Vec::new(),
            zero: None,
            ungated: period,
        }))
    }

    /// x ↦ branches[class[x mod q]](x), optionally zeroed outside an
    /// initial interval of gate cells.
    pub fn switch(q: u64, class: Vec<u8>, branches: Vec<Field>, gate: Option<Gate>) -> Result<Self> {
        if q == 0 || class.len() as u64 != q {
            return Err(Error::arg("class table must have length q"));
        }
        if class.iter().any(|&c| c as usize >= branches.len()) {
            return Err(Error::arg("class index without a branch"));
        }
        let mut ungated = q;
        let mut b0 = 1u64;
        for b in &branches {
            ungated = lcm(ungated, b.period())?;
            b0 = lcm(b0, b.base())?;
        }
        let mut palette: Vec<Rational> = branches.iter().flat_map(|b| b.palette().iter().cloned()).collect();
        if gate.is_some() {
            palette.push(int(0));
        }
        palette.sort();
        palette.dedup();
        let pos = |v: &Rational| palette.binary_search(v).unwrap() as u16;
        let maps: Vec<Vec<u16>> = branches
            .iter()
            .map(|b| b.palette().iter().map(pos).collect())
            .collect();
        let zero = gate.as_ref().map(|_| pos(&int(0)));
        let period = match &gate {
            Some(g) => {
                if g.n0 % ungated != 0 {
                    return Err(Error::arg(format!(
                        "gate cell {} is not a multiple of the ungated period {ungated}",
                        g.n0
                    )));
                }
                if g.thresholds.len() != branches.len() || g.thresholds.iter().any(|&t| t > g.radix) {
                    return Err(Error::arg("gate thresholds must be per branch and at most the radix"));
                }
                crate::arith::checked_mul(g.n0, g.radix)?
            }
            None => ungated,
        };
        let digit_branches: Vec<&Field> = branches.iter().filter(|b| !b.radices().is_empty()).collect();
        let mut coords = branches.iter().all(|b| b.coords_valid())
            && digit_branches.len() <= 1
            && gcd(q, b0) == 1
            && gate.as_ref().map_or(true, |g| g.n0 == ungated);
        let mut radices = Vec::new();
        if coords {
            if let Some(db) = digit_branches.first() {
                let r = radix_product(db.radices());
                let cofactor = (q as u128) * (b0 / db.base()) as u128;
                coords = num_integer::Integer::gcd(&cofactor, &r) == 1;
                radices = db.radices().to_vec();
            }
        }
        if let Some(g) = &gate {
            radices.push(g.radix);
        }
        let base = if coords { q * b0 } else { period };
        if !coords {
            radices.clear();
        }
        Ok(Field::wrap(Inner {
            node: Node::Switch {
                q,
                class,
                branches,
                gate,
            },
            palette,
            period,
            base,
            radices,
            coords,
            maps,
            zero,
            ungated,
        }))
    }

    /// f·1_S for a q-periodic set S given as a mask.
    pub fn masked(inner: &Field, mask: &[bool]) -> Result<Self> {
        let class = mask.iter().map(|&b| if b { 0 } else { 1 }).collect();
        Field::switch(mask.len() as u64, class, vec![inner.clone(), Field::constant(int(0))], None)
    }

    pub fn node(&self) -> &Node {
        &self.0.node
    }

    pub fn palette(&self) -> &[Rational] {
        &self.0.palette
    }

    pub fn period(&self) -> u64 {
        self.0.period
    }

    /// First coordinate modulus; equals the period when there are no digits.
    pub fn base(&self) -> u64 {
        self.0.base
    }

    pub fn radices(&self) -> &[u64] {
        &self.0.radices
    }

    pub fn coords_valid(&self) -> bool {
        self.0.coords
    }

    pub fn as_table(&self) -> Option<&PeriodicFunction> {
        match &self.0.node {
            Node::Table { table } => Some(table),
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.palette().len() == 1
    }

    pub fn value(&self, x: u64) -> &Rational {
        &self.0.palette[self.eval(x) as usize]
    }

    /// Palette index at x.
    pub fn eval(&self, x: u64) -> u16 {
        let s = &*self.0;
        let x = x % s.period;
        match &s.node {
            Node::Const => 0,
            Node::Table { table } => table.index(x),
            Node::Scaled { inner, .. } => s.maps[0][inner.eval(x) as usize],
            Node::Rearranged { inner, plan } => inner.eval(x + plan.shift_at(x)),
            Node::Switch {
                q,
                class,
                branches,
                gate,
            } => {
                let c = class[(x % q) as usize] as usize;
                if let Some(g) = gate {
                    if (x / g.n0) % g.radix >= g.thresholds[c] {
                        return s.zero.unwrap();
                    }
                }
                s.maps[c][branches[c].eval(x) as usize]
            }
        }
    }

    /// Values over all x ≡ w (mod base) in one period, as (index, count).
    fn base_bucket(&self, w: u64) -> Bucket {
        let s = &*self.0;
        debug_assert!(s.coords);
        match &s.node {
            Node::Const => smallvec::smallvec![(0, 1)],
            Node::Table { table } => smallvec::smallvec![(table.index(w), 1)],
            Node::Scaled { inner, .. } => {
                let mut b = inner.base_bucket(w);
                for e in b.iter_mut() {
                    e.0 = s.maps[0][e.0 as usize];
                }
                b
            }
            Node::Rearranged { inner, plan } => inner.base_bucket((w + plan.shift_at(w)) % inner.base()),
            Node::Switch {
                q,
                class,
                branches,
                gate,
            } => {
                let c = class[(w % q) as usize] as usize;
                let b = &branches[c];
                let inner_digits = radix_product(&s.radices[..s.radices.len() - gate.is_some() as usize]);
                let mult = inner_digits / radix_product(b.radices());
                let mut out = Bucket::new();
                let mut total = 0u128;
                for (i, n) in b.base_bucket(w % b.base()) {
                    let n = n * mult;
                    total += n;
                    let idx = s.maps[c][i as usize];
                    match gate {
                        Some(g) => merge(&mut out, idx, n * g.thresholds[c] as u128),
                        None => merge(&mut out, idx, n),
                    }
                }
                if let Some(g) = gate {
                    merge(&mut out, s.zero.unwrap(), total * (g.radix - g.thresholds[c]) as u128);
                }
                out
            }
        }
    }

    /// Largest palette index over all x ≡ w (mod base).
    fn base_max(&self, w: u64) -> u16 {
        let s = &*self.0;
        match &s.node {
            Node::Const => 0,
            Node::Table { table } => table.index(w),
            Node::Scaled { inner, .. } => s.maps[0][inner.base_max(w) as usize],
            Node::Rearranged { inner, plan } => inner.base_max((w + plan.shift_at(w)) % inner.base()),
            Node::Switch {
                q,
                class,
                branches,
                gate,
            } => {
                let c = class[(w % q) as usize] as usize;
                let b = &branches[c];
                let kept = s.maps[c][b.base_max(w % b.base()) as usize];
                match gate {
                    Some(g) if g.thresholds[c] == 0 => s.zero.unwrap(),
                    Some(g) if g.thresholds[c] < g.radix => kept.max(s.zero.unwrap()),
                    _ => kept,
                }
            }
        }
    }

    /// max_j self(w + j·m) over all lifts of w ∈ Z_m, for m a multiple of
    /// the base dividing the period.
    pub fn max_over_lifts(&self, w: u64, m: u64, cap: u64) -> Result<u16> {
        if self.coords_valid() && m % self.base() == 0 && self.period() % m == 0 {
            return Ok(self.base_max(w % self.base()));
        }
        let lifts = self.period() / gcd(self.period(), m);
        if lifts > cap {
            return Err(Error::CapExceeded(format!("{lifts} lifts per point exceed the cap {cap}")));
        }
        let step = m % self.period();
        let mut best = 0u16;
        let mut x = w % self.period();
        for _ in 0..lifts {
            best = best.max(self.eval(x));
            x = (x + step) % self.period();
        }
        Ok(best)
    }

    /// Exact histogram over one period.
    pub fn histogram(&self, cap: u64) -> Result<Hist> {
        let s = &*self.0;
        let n = s.palette.len();
        match &s.node {
            Node::Const => Ok(vec![1]),
            Node::Table { table } => Ok(table.counts().into_iter().map(|c| c as u128).collect()),
            Node::Scaled { inner, .. } => inner.histogram(cap),
            Node::Switch {
                q,
                class,
                branches,
                gate,
            } if branches.iter().all(|b| gcd(*q, b.period()) == 1) => {
                // x mod q and x mod P_b are independent on Z_{lcm}
                let mut class_sizes = vec![0u128; branches.len()];
                for &c in class {
                    class_sizes[c as usize] += 1;
                }
                let mut out = vec![0u128; n];
                for (c, b) in branches.iter().enumerate() {
                    if class_sizes[c] == 0 {
                        continue;
                    }
                    let copies = (s.ungated / (q * b.period())) as u128 * class_sizes[c];
                    let hb = b.histogram(cap)?;
                    let total: u128 = hb.iter().sum::<u128>() * copies;
                    for (i, cnt) in hb.into_iter().enumerate() {
                        let k = cnt * copies;
                        out[s.maps[c][i] as usize] += match gate {
                            Some(g) => k * g.thresholds[c] as u128,
                            None => k,
                        };
                    }
                    if let Some(g) = gate {
                        out[s.zero.unwrap() as usize] += total * (g.radix - g.thresholds[c]) as u128;
                    }
                }
                if let Some(g) = gate {
                    let extra = (g.n0 / s.ungated) as u128;
                    out.iter_mut().for_each(|v| *v *= extra);
                }
                Ok(out)
            }
            _ if s.coords => {
                if s.base > cap {
                    return Err(Error::CapExceeded(format!("base {} exceeds the cap {cap}", s.base)));
                }
                let mut out = vec![0u128; n];
                for w in 0..s.base {
                    for (i, c) in self.base_bucket(w) {
                        out[i as usize] += c;
                    }
                }
                Ok(out)
            }
            _ => self.brute_histogram(cap),
        }
    }

    /// Histogram by evaluating every point of the period.
    pub fn brute_histogram(&self, cap: u64) -> Result<Hist> {
        if self.period() > cap {
            return Err(Error::CapExceeded(format!(
                "period {} exceeds the enumeration cap {cap}",
                self.period()
            )));
        }
        let mut out = vec![0u128; self.palette().len()];
        for x in 0..self.period() {
            out[self.eval(x) as usize] += 1;
        }
        Ok(out)
    }

    /// Histogram by enumerating the base and counting digit tuples.
    pub fn coordinate_histogram(&self, cap: u64) -> Result<Hist> {
        if !self.coords_valid() {
            return Err(Error::Structure("coordinate map is not a bijection for this field".into()));
        }
        if self.base() > cap {
            return Err(Error::CapExceeded(format!("base {} exceeds the cap {cap}", self.base())));
        }
        let mut out = vec![0u128; self.palette().len()];
        for w in 0..self.base() {
            for (i, c) in self.base_bucket(w) {
                out[i as usize] += c;
            }
        }
        Ok(out)
    }

    /// Histogram of the field on {x : x mod m ∈ S}, for S given as a mask on Z_m.
    pub fn conditional_histogram(&self, m: u64, mask: &[bool], cap: u64) -> Result<Hist> {
        let s = &*self.0;
        if let Node::Switch {
            q,
            class,
            branches,
            gate,
        } = &s.node
        {
            if *q == m && branches.iter().all(|b| gcd(*q, b.period()) == 1) {
                let mut out = vec![0u128; s.palette.len()];
                for (r, &c) in class.iter().enumerate() {
                    if !mask[r] {
                        continue;
                    }
                    let c = c as usize;
                    let b = &branches[c];
                    let copies = (s.ungated / (q * b.period())) as u128;
                    let hb = b.histogram(cap)?;
                    let total: u128 = hb.iter().sum::<u128>() * copies;
                    for (i, cnt) in hb.into_iter().enumerate() {
                        let k = cnt * copies;
                        out[s.maps[c][i] as usize] += match gate {
                            Some(g) => k * g.thresholds[c] as u128,
                            None => k,
                        };
                    }
                    if let Some(g) = gate {
                        out[s.zero.unwrap() as usize] += total * (g.radix - g.thresholds[c]) as u128;
                    }
                }
                if let Some(g) = gate {
                    let extra = (g.n0 / s.ungated) as u128;
                    out.iter_mut().for_each(|v| *v *= extra);
                }
                return Ok(out);
            }
        }
        self.brute_conditional_histogram(m, mask, cap)
    }

    pub fn brute_conditional_histogram(&self, m: u64, mask: &[bool], cap: u64) -> Result<Hist> {
        let n = lcm(self.period(), m)?;
        if n > cap {
            return Err(Error::CapExceeded(format!("period {n} exceeds the enumeration cap {cap}")));
        }
        let mut out = vec![0u128; self.palette().len()];
        for x in 0..n {
            if mask[(x % m) as usize] {
                out[self.eval(x) as usize] += 1;
            }
        }
        Ok(out)
    }

    pub fn distribution(&self, cap: u64) -> Result<BTreeMap<Rational, Rational>> {
        Ok(distribution_of(self.palette(), &self.histogram(cap)?))
    }

    pub fn mean(&self, cap: u64) -> Result<Rational> {
        Ok(mean_of(self.palette(), &self.histogram(cap)?))
    }

    /// Explicit table over one period (digit-free fields only).
    pub fn materialize(&self, cap: u64) -> Result<PeriodicFunction> {
        if let Some(t) = self.as_table() {
            return Ok(t.clone());
        }
        if self.period() > cap {
            return Err(Error::CapExceeded(format!(
                "period {} exceeds the table cap {cap}",
                self.period()
            )));
        }
        let values = (0..self.period()).map(|x| self.eval(x)).collect();
        PeriodicFunction::from_parts(self.palette().to_vec(), values)
    }
}

pub fn distribution_of(palette: &[Rational], hist: &Hist) -> BTreeMap<Rational, Rational> {
    let total: u128 = hist.iter().sum();
    let mut out = BTreeMap::new();
    for (v, &c) in palette.iter().zip(hist) {
        if c > 0 {
            *out.entry(v.clone()).or_insert_with(|| int(0)) += Rational::new(c.into(), total.into());
        }
    }
    out
}

pub fn mean_of(palette: &[Rational], hist: &Hist) -> Rational {
    let total: u128 = hist.iter().sum();
    let s: Rational = palette
        .iter()
        .zip(hist)
        .map(|(v, &c)| v * Rational::from_integer(c.into()))
        .sum();
    s / Rational::from_integer(total.into())
}

/// Exact joint histogram of two fields over the lcm of their periods.
pub fn joint_histogram(a: &Field, b: &Field, cap: u64) -> Result<BTreeMap<(u16, u16), u128>> {
    let n = lcm(a.period(), b.period())?;
    if n > cap {
        return Err(Error::CapExceeded(format!("joint period {n} exceeds the enumeration cap {cap}")));
    }
    let mut out = BTreeMap::new();
    for x in 0..n {
        *out.entry((a.eval(x), b.eval(x))).or_insert(0) += 1;
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct WireField {
    #[serde(flatten)]
    node: Node,
    constant: Option<Rational>,
}

impl Serialize for Field {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let constant = matches!(self.0.node, Node::Const).then(|| self.0.palette[0].clone());
        WireField {
            node: self.0.node.clone(),
            constant,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Field {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = WireField::deserialize(d)?;
        let r = match w.node {
            Node::Const => Ok(Field::constant(
                w.constant.ok_or_else(|| D::Error::custom("constant node without value"))?,
            )),
            Node::Table { table } => Ok(Field::table((*table).clone())),
            Node::Scaled { inner, factor } => Field::scaled(&inner, factor),
            Node::Rearranged { inner, plan } => Field::rearranged(&inner, plan),
            Node::Switch {
                q,
                class,
                branches,
                gate,
            } => Field::switch(q, class, branches, gate),
        };
        r.map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;

    fn table(vals: &[i64]) -> Field {
        let v: Vec<Rational> = vals.iter().map(|&x| int(x as u64)).collect();
        Field::table(PeriodicFunction::from_values(&v).unwrap())
    }

    fn gated_example() -> Field {
        // period-3 table, rearranged by p = 5, switched mod 7 with a gate
        let f = table(&[1, 2, 0]);
        let plan = Arc::new(RearrangementPlan::new(3, 5, vec![2, 1]).unwrap());
        let r = Field::rearranged(&f, plan).unwrap();
        let s = Field::scaled(&r, rat(4, 3)).unwrap();
        let class = vec![0, 0, 1, 2, 0, 1, 2];
        let u = 7 * 15;
        Field::switch(
            7,
            class,
            vec![s, Field::constant(rat(1, 32)), Field::constant(int(0))],
            Some(Gate {
                n0: u,
                radix: 4,
                thresholds: vec![3, 1, 0],
            }),
        )
        .unwrap()
    }

    #[test]
    fn gated_histogram_matches_brute() {
        let x = gated_example();
        assert!(x.coords_valid());
        assert_eq!(x.period(), 7 * 15 * 4);
        assert_eq!(x.histogram(1 << 20).unwrap(), x.brute_histogram(1 << 20).unwrap());
        assert_eq!(x.coordinate_histogram(1 << 20).unwrap(), x.brute_histogram(1 << 20).unwrap());
    }

    #[test]
    fn nested_gates_match_brute() {
        let x1 = gated_example();
        let plan = Arc::new(RearrangementPlan::new(105, 11, vec![4, 100, 7]).unwrap());
        let r = Field::rearranged(&x1, plan).unwrap();
        let class: Vec<u8> = (0..13).map(|i| [0u8, 0, 1, 0, 2][i % 5]).collect();
        let n0 = 13 * r.period();
        let x2 = Field::switch(
            13,
            class,
            vec![Field::scaled(&r, rat(4, 3)).unwrap(), Field::constant(rat(1, 32)), Field::constant(int(0))],
            Some(Gate {
                n0,
                radix: 3,
                thresholds: vec![2, 1, 0],
            }),
        )
        .unwrap();
        assert!(x2.coords_valid());
        assert_eq!(x2.radices(), &[4, 3]);
        let brute = x2.brute_histogram(1 << 24).unwrap();
        assert_eq!(x2.histogram(1 << 24).unwrap(), brute);
        assert_eq!(x2.coordinate_histogram(1 << 24).unwrap(), brute);
        // max over lifts of w mod base
        for w in (0..x2.base()).step_by(37) {
            let fast = x2.max_over_lifts(w, x2.base(), 1 << 20).unwrap();
            let lifts = x2.period() / x2.base();
            let slow = (0..lifts).map(|j| x2.eval(w + j * x2.base())).max().unwrap();
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn conditional_matches_brute() {
        let x = gated_example();
        let m = Field::masked(&x, &[true, false, true, true, false, false, true, false, true, true, false]).unwrap();
        let mask: Vec<bool> = (0..11).map(|i| i % 3 != 1).collect();
        assert_eq!(
            m.conditional_histogram(11, &mask, 1 << 20).unwrap(),
            m.brute_conditional_histogram(11, &mask, 1 << 20).unwrap()
        );
    }

    #[test]
    fn json_round_trip() {
        let x = gated_example();
        let s = serde_json::to_string(&x).unwrap();
        let y: Field = serde_json::from_str(&s).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn rejects_bad_shapes() {
        let f = table(&[1, 2, 0]);
        let plan = Arc::new(RearrangementPlan::identity(2, 3).unwrap());
        assert!(Field::rearranged(&f, plan).is_err());
        assert!(Field::switch(3, vec![0, 0], vec![f.clone()], None).is_err());
        assert!(Field::scaled(&f, int(0)).is_err());
    }
}

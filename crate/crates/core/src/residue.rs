//! Residue sets Λ_t of the sequence, their thickenings, and the product set Qset.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::arith::{self, ceil_minus_one, crt_pair, gcd, int, pow_mod, Rational};
use crate::error::{Error, Result};
use crate::sieve::{self, PrimeStream};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidueSet {
    modulus: u64,
    elements: Vec<u64>,
}

impl ResidueSet {
    pub fn new(modulus: u64, mut elements: Vec<u64>) -> Result<Self> {
        if modulus == 0 {
            return Err(Error::arg("modulus must be positive"));
        }
        elements.sort_unstable();
        elements.dedup();
        if elements.last().map_or(false, |&e| e >= modulus) {
            return Err(Error::arg(format!("element outside [0,{modulus})")));
        }
        Ok(ResidueSet { modulus, elements })
    }

    pub fn from_mask(modulus: u64, mask: &[bool]) -> Self {
        let elements = mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i as u64)
            .collect();
        ResidueSet { modulus, elements }
    }

    pub fn full(modulus: u64) -> Self {
        ResidueSet {
            modulus,
            elements: (0..modulus).collect(),
        }
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn elements(&self) -> &[u64] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, x: u64) -> bool {
        self.elements.binary_search(&(x % self.modulus)).is_ok()
    }

    /// P(Λ) = |Λ|/t.
    pub fn density(&self) -> Rational {
        Rational::new(self.len().into(), self.modulus.into())
    }

    /// s_t = t/|Λ|; undefined for the empty set.
    pub fn mean_spacing(&self) -> Result<Rational> {
        if self.is_empty() {
            return Err(Error::arg("mean spacing of an empty set"));
        }
        Ok(Rational::new(self.modulus.into(), self.len().into()))
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.modulus as usize];
        for &e in &self.elements {
            m[e as usize] = true;
        }
        m
    }

    pub fn complement(&self) -> ResidueSet {
        let m = self.mask();
        let inv: Vec<bool> = m.iter().map(|b| !b).collect();
        ResidueSet::from_mask(self.modulus, &inv)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SequenceSpec {
    Power { d: u32 },
    Prime,
}

impl SequenceSpec {
    pub fn power(d: u32) -> Result<Self> {
        if d < 2 {
            return Err(Error::arg("power sequences need d >= 2"));
        }
        Ok(SequenceSpec::Power { d })
    }

    pub fn prime() -> Self {
        SequenceSpec::Prime
    }

    /// Λ_t for this sequence; Λ_1 = {0}.
    pub fn lambda(&self, t: u64) -> Result<ResidueSet> {
        if t == 1 {
            return Ok(ResidueSet::full(1));
        }
        match *self {
            SequenceSpec::Power { d } => power_residues(t, d),
            SequenceSpec::Prime => coprime_residues(t),
        }
    }

    /// Whether a prime may appear in a pool member for this sequence.
    pub fn admits_pool_prime(&self, p: u64) -> bool {
        match *self {
            SequenceSpec::Power { d } => p % d as u64 == 1,
            SequenceSpec::Prime => p > 2,
        }
    }

    /// The k-th term n_k mod m for a power sequence, or `None` for primes.
    pub(crate) fn power_term_mod(&self, k: u64, m: u64) -> Option<u64> {
        match *self {
            SequenceSpec::Power { d } => Some(pow_mod(k % m, d as u64, m)),
            SequenceSpec::Prime => None,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            SequenceSpec::Power { d } => format!("k^{d}"),
            SequenceSpec::Prime => "primes".into(),
        }
    }
}

/// Streams n_1, n_2, … reduced modulo `m`.
pub struct TermsMod {
    m: u64,
    k: u64,
    seq: SequenceSpec,
    primes: Option<PrimeStream>,
}

impl TermsMod {
    pub fn new(seq: SequenceSpec, m: u64) -> Self {
        let primes = matches!(seq, SequenceSpec::Prime).then(PrimeStream::new);
        TermsMod { m, k: 0, seq, primes }
    }
}

impl Iterator for TermsMod {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        self.k += 1;
        match &mut self.primes {
            Some(ps) => ps.next().map(|p| p % self.m),
            None => self.seq.power_term_mod(self.k, self.m),
        }
    }
}

pub fn power_residues(t: u64, d: u32) -> Result<ResidueSet> {
    if t <= 1 {
        return Err(Error::arg(format!("power_residues needs t >= 2, got {t}")));
    }
    if d < 2 {
        return Err(Error::arg("power_residues needs d >= 2"));
    }
    let mut mask = vec![false; t as usize];
    for k in 1..=t {
        if gcd(k, t) == 1 {
            mask[pow_mod(k, d as u64, t) as usize] = true;
        }
    }
    Ok(ResidueSet::from_mask(t, &mask))
}

pub fn coprime_residues(t: u64) -> Result<ResidueSet> {
    if t <= 1 {
        return Err(Error::arg(format!("coprime_residues needs t >= 2, got {t}")));
    }
    let elements = (0..t).filter(|&a| gcd(a, t) == 1).collect();
    Ok(ResidueSet { modulus: t, elements })
}

pub fn combine_crt(a: &ResidueSet, b: &ResidueSet) -> Result<ResidueSet> {
    let (s, t) = (a.modulus, b.modulus);
    if gcd(s, t) != 1 {
        return Err(Error::NotCoprime(s, t));
    }
    let st = arith::checked_mul(s, t)?;
    let mut elements = Vec::with_capacity(a.len() * b.len());
    for &x in &a.elements {
        for &y in &b.elements {
            elements.push(crt_pair(x, s, y, t)?);
        }
    }
    ResidueSet::new(st, elements)
}

/// m = ⌈γ·s_t⌉ − 1, the number of integer offsets in (0, γ·s_t).
pub fn thicken_width(lambda: &ResidueSet, gamma: &Rational) -> Result<u64> {
    check_unit_interval(gamma, "gamma")?;
    let s = lambda.mean_spacing()?;
    Ok(ceil_minus_one(&(gamma * s)).max(0) as u64)
}

/// Λ^γ = Λ + {1, …, m}.
pub fn thicken(lambda: &ResidueSet, gamma: &Rational) -> Result<ResidueSet> {
    let m = thicken_width(lambda, gamma)?;
    Ok(shift_union(lambda, m))
}

pub fn shift_union(lambda: &ResidueSet, m: u64) -> ResidueSet {
    let t = lambda.modulus;
    let mut mask = vec![false; t as usize];
    for &l in &lambda.elements {
        for u in 1..=m.min(t) {
            mask[((l + u) % t) as usize] = true;
        }
    }
    ResidueSet::from_mask(t, &mask)
}

pub fn negate(lambda: &ResidueSet) -> ResidueSet {
    let t = lambda.modulus;
    let elements = lambda.elements.iter().map(|&l| (t - l) % t).collect();
    ResidueSet::new(t, elements).expect("negation stays in range")
}

pub fn nth_terms(seq: SequenceSpec, n: usize) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(Error::arg("nth_terms needs N >= 1"));
    }
    match seq {
        SequenceSpec::Power { d } => (1..=n as u64)
            .map(|k| {
                k.checked_pow(d)
                    .ok_or_else(|| Error::CapExceeded(format!("{k}^{d} overflows u64")))
            })
            .collect(),
        SequenceSpec::Prime => Ok(sieve::first_primes(n)),
    }
}

pub(crate) fn check_unit_interval(r: &Rational, name: &str) -> Result<()> {
    if *r <= Rational::zero() || *r >= int(1) {
        return Err(Error::arg(format!("{name} must lie in (0,1)")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QsetCatalog {
    pub p_pool: Vec<u64>,
    pub q_pool: Vec<u64>,
    pub bound: u64,
    pub products: Vec<u64>,
}

impl QsetCatalog {
    /// Validates the pools (odd, > 1, pairwise coprime, squarefree) and
    /// tabulates the products up to `bound`.
    pub fn new(p_pool: Vec<u64>, q_pool: Vec<u64>, bound: u64) -> Result<Self> {
        let all: Vec<u64> = p_pool.iter().chain(q_pool.iter()).copied().collect();
        for (i, &a) in all.iter().enumerate() {
            if a < 3 || a % 2 == 0 {
                return Err(Error::arg(format!("pool member {a} must be odd and > 1")));
            }
            if !arith::is_squarefree(a) {
                return Err(Error::arg(format!("pool member {a} is not squarefree")));
            }
            for &b in &all[..i] {
                if a == b {
                    return Err(Error::arg(format!("pool member {a} repeated")));
                }
                if gcd(a, b) != 1 {
                    return Err(Error::NotCoprime(b, a));
                }
            }
        }
        let mut cat = QsetCatalog {
            p_pool,
            q_pool,
            bound,
            products: Vec::new(),
        };
        cat.products = qset_products(&cat, bound)?;
        Ok(cat)
    }

    /// As `new`, additionally requiring every prime factor to suit `seq`.
    pub fn for_sequence(
        seq: SequenceSpec,
        p_pool: Vec<u64>,
        q_pool: Vec<u64>,
        bound: u64,
    ) -> Result<Self> {
        for &m in p_pool.iter().chain(q_pool.iter()) {
            for (p, _) in arith::factorize(m) {
                if !seq.admits_pool_prime(p) {
                    return Err(Error::arg(format!(
                        "pool member {m} has prime factor {p} not admissible for {}",
                        seq.label()
                    )));
                }
            }
        }
        Self::new(p_pool, q_pool, bound)
    }

    pub fn members(&self) -> impl Iterator<Item = u64> + '_ {
        self.p_pool.iter().chain(self.q_pool.iter()).copied()
    }
}

pub fn qset_products(catalog: &QsetCatalog, bound: u64) -> Result<Vec<u64>> {
    let members: Vec<u64> = catalog.members().collect();
    for (i, &a) in members.iter().enumerate() {
        for &b in &members[..i] {
            if a == b {
                return Err(Error::arg(format!("pool member {a} repeated")));
            }
            if gcd(a, b) != 1 {
                return Err(Error::NotCoprime(b, a));
            }
        }
    }
    let mut out = Vec::new();
    fn walk(members: &[u64], i: usize, acc: u64, bound: u64, out: &mut Vec<u64>) {
        if i == members.len() {
            out.push(acc);
            return;
        }
        walk(members, i + 1, acc, bound, out);
        if let Some(next) = acc.checked_mul(members[i]) {
            if next <= bound {
                walk(members, i + 1, next, bound, out);
            }
        }
    }
    if bound >= 1 {
        walk(&members, 0, 1, bound, &mut out);
    }
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;

    fn brute_powers(t: u64, d: u32) -> Vec<u64> {
        let mut v: Vec<u64> = (1..=t)
            .filter(|&k| gcd(k, t) == 1)
            .map(|k| (k as u128).pow(d) as u64 % t)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    #[test]
    fn power_residue_examples() {
        assert_eq!(power_residues(5, 2).unwrap().elements(), &[1, 4]);
        assert_eq!(power_residues(13, 3).unwrap().elements(), &[1, 5, 8, 12]);
        assert_eq!(power_residues(2, 2).unwrap().elements(), &[1]);
        assert!(power_residues(1, 2).is_err());
        for t in 2..200 {
            for d in 2..5 {
                assert_eq!(power_residues(t, d).unwrap().elements(), &brute_powers(t, d)[..]);
            }
        }
    }

    #[test]
    fn coprime_examples() {
        assert_eq!(coprime_residues(6).unwrap().elements(), &[1, 5]);
        assert_eq!(coprime_residues(5).unwrap().elements(), &[1, 2, 3, 4]);
        assert_eq!(
            coprime_residues(15).unwrap().elements(),
            &[1, 2, 4, 7, 8, 11, 13, 14]
        );
        assert!(coprime_residues(1).is_err());
        for t in 2..300 {
            assert_eq!(coprime_residues(t).unwrap().len() as u64, arith::totient(t));
        }
    }

    #[test]
    fn crt_examples() {
        let l3 = power_residues(3, 2).unwrap();
        let l5 = power_residues(5, 2).unwrap();
        assert_eq!(combine_crt(&l3, &l5).unwrap().elements(), &[1, 4]);
        assert_eq!(combine_crt(&l3, &l5).unwrap(), power_residues(15, 2).unwrap());
        let l13 = power_residues(13, 2).unwrap();
        assert_eq!(combine_crt(&l5, &l13).unwrap().len(), 12);
        assert_eq!(brute_powers(65, 2).len(), 12);
        let full = ResidueSet::full(7);
        let c = combine_crt(&l5, &full).unwrap();
        let expect: Vec<u64> = (0..35).filter(|x| l5.contains(x % 5)).collect();
        assert_eq!(c.elements(), &expect[..]);
        assert!(matches!(
            combine_crt(&l3, &power_residues(9, 2).unwrap()),
            Err(Error::NotCoprime(3, 9))
        ));
    }

    #[test]
    fn thicken_examples() {
        let l5 = power_residues(5, 2).unwrap();
        assert_eq!(thicken_width(&l5, &rat(1, 2)).unwrap(), 1);
        assert_eq!(thicken(&l5, &rat(1, 2)).unwrap().elements(), &[0, 2]);
        // γ·s_t = 5/8 ≤ 1
        assert!(thicken(&l5, &rat(1, 4)).unwrap().is_empty());
        let l15 = power_residues(15, 2).unwrap();
        let g = rat(1, 4);
        let th = thicken(&l15, &g).unwrap();
        // brute force: offsets u with 0 < u < γ s_t
        let s = l15.mean_spacing().unwrap();
        let mut brute = std::collections::BTreeSet::new();
        for &l in l15.elements() {
            for u in 1..15u64 {
                if int(u) < &g * &s {
                    brute.insert((l + u) % 15);
                }
            }
        }
        assert_eq!(th.elements(), &brute.into_iter().collect::<Vec<_>>()[..]);
        assert!(int(th.len() as u64) <= g * int(15));
        assert!(thicken(&l15, &rat(1, 1)).is_err());
    }

    #[test]
    fn negate_examples() {
        let s = ResidueSet::new(5, vec![1, 4]).unwrap();
        assert_eq!(negate(&s), s);
        assert_eq!(negate(&ResidueSet::new(3, vec![1]).unwrap()).elements(), &[2]);
        assert_eq!(
            negate(&ResidueSet::new(7, vec![1, 2, 4]).unwrap()).elements(),
            &[3, 5, 6]
        );
    }

    #[test]
    fn nth_terms_examples() {
        assert_eq!(nth_terms(SequenceSpec::power(2).unwrap(), 4).unwrap(), vec![1, 4, 9, 16]);
        assert_eq!(nth_terms(SequenceSpec::prime(), 5).unwrap(), vec![2, 3, 5, 7, 11]);
        assert_eq!(nth_terms(SequenceSpec::power(3).unwrap(), 3).unwrap(), vec![1, 8, 27]);
        assert!(nth_terms(SequenceSpec::prime(), 0).is_err());
        let streamed: Vec<u64> = TermsMod::new(SequenceSpec::prime(), 1000).take(10).collect();
        assert_eq!(streamed, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
    }

    #[test]
    fn qset_examples() {
        let c = QsetCatalog::new(vec![5], vec![221], 2000).unwrap();
        assert_eq!(qset_products(&c, 2000).unwrap(), vec![1, 5, 221, 1105]);
        let e = QsetCatalog::new(vec![], vec![], 10).unwrap();
        assert_eq!(e.products, vec![1]);
        let c = QsetCatalog::new(vec![3, 5], vec![], 14).unwrap();
        assert_eq!(c.products, vec![1, 3, 5]);
        assert!(QsetCatalog::new(vec![3, 3], vec![], 14).is_err());
        assert!(QsetCatalog::new(vec![3], vec![15], 14).is_err());
        assert!(QsetCatalog::new(vec![9], vec![], 14).is_err());
        assert!(QsetCatalog::for_sequence(SequenceSpec::power(3).unwrap(), vec![5], vec![], 9).is_err());
        assert!(QsetCatalog::for_sequence(SequenceSpec::power(3).unwrap(), vec![7], vec![13 * 19], 9).is_ok());
    }
}

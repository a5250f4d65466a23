//! Residue-class equidistribution of n_k: counts, N(Q) and ψ(n).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::arith::Rational;
use crate::error::{Error, Result};
use crate::residue::{QsetCatalog, ResidueSet, SequenceSpec, TermsMod};

/// Counts |{1 ≤ k ≤ N : n_k ≡ a mod Q}| for every a ∈ Λ_Q.
pub fn residue_counts(seq: SequenceSpec, q: u64, n: u64) -> Result<BTreeMap<u64, u64>> {
    if q == 0 || n == 0 {
        return Err(Error::arg("residue_counts needs Q >= 1 and N >= 1"));
    }
    let lambda = seq.lambda(q)?;
    let mut out: BTreeMap<u64, u64> = lambda.elements().iter().map(|&a| (a, 0)).collect();
    for r in TermsMod::new(seq, q).take(n as usize) {
        if let Some(c) = out.get_mut(&r) {
            *c += 1;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: u64,
    pub min_count: u64,
    pub max_count: u64,
    /// βN/|Λ_Q|
    pub threshold: Rational,
    /// Full (a, count) table, kept only for small Λ_Q.
    pub counts: Option<Vec<(u64, u64)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquidistScan {
    pub q: u64,
    pub beta: Rational,
    pub horizon: u64,
    pub lambda_size: usize,
    pub checkpoints: Vec<Checkpoint>,
    /// Largest N ≤ H at which some a ∈ Λ_Q has count ≤ βN/|Λ_Q|; 0 if none.
    pub empirical_n: u64,
    /// True when no failure lies in (H/2, H].
    pub stabilized: bool,
    pub warning: Option<String>,
    /// N(Q) obtained from the closed form over one period rather than a scan.
    #[serde(default)]
    pub exact: bool,
}

const FULL_TABLE_LIMIT: usize = 64;

/// Scan n_1..n_H modulo Q and locate the last threshold failure.
pub fn empirical_n(seq: SequenceSpec, q: u64, beta: &Rational, horizon: u64) -> Result<EquidistScan> {
    let lambda = seq.lambda(q)?;
    scan_with(seq, &lambda, beta, horizon)
}

fn scan_with(seq: SequenceSpec, lambda: &ResidueSet, beta: &Rational, horizon: u64) -> Result<EquidistScan> {
    let q = lambda.modulus();
    if *beta <= Rational::from_integer(0.into()) || *beta >= Rational::from_integer(1.into()) {
        return Err(Error::arg("beta must lie in (0,1)"));
    }
    if horizon == 0 {
        return Err(Error::arg("horizon must be positive"));
    }
    let size = lambda.len();
    let mut index = vec![u32::MAX; q as usize];
    for (i, &a) in lambda.elements().iter().enumerate() {
        index[a as usize] = i as u32;
    }
    let bn: u128 = beta.numer().try_into().map_err(|_| Error::arg("beta too large"))?;
    let bd: u128 = beta.denom().try_into().map_err(|_| Error::arg("beta too large"))?;
    let mut counts = vec![0u64; size];
    // hist[c] = number of classes with count c
    let mut hist: Vec<u64> = vec![size as u64];
    let mut min = 0usize;
    let mut last_fail = 0u64;
    let mut checkpoints = Vec::new();
    let mut next_cp = 1u64;
    let bump = |r: u64, counts: &mut Vec<u64>, hist: &mut Vec<u64>, min: &mut usize| {
        let i = index[r as usize];
        if i == u32::MAX {
            return;
        }
        let c = counts[i as usize] as usize;
        counts[i as usize] += 1;
        hist[c] -= 1;
        if hist.len() <= c + 1 {
            hist.push(0);
        }
        hist[c + 1] += 1;
        while hist[*min] == 0 {
            *min += 1;
        }
    };
    let mut feed = |n: u64, r: u64| {
        bump(r, &mut counts, &mut hist, &mut min);
        // min·|Λ| ≤ βN
        if (min as u128) * (size as u128) * bd <= bn * n as u128 {
            last_fail = n;
        }
        if n == next_cp || n == horizon {
            let max = counts.iter().copied().max().unwrap_or(0);
            checkpoints.push(Checkpoint {
                n,
                min_count: min as u64,
                max_count: max,
                threshold: beta * Rational::new(n.into(), size.into()),
                counts: (size <= FULL_TABLE_LIMIT).then(|| {
                    lambda.elements().iter().copied().zip(counts.iter().copied()).collect()
                }),
            });
            if n == next_cp {
                next_cp *= 2;
            }
        }
    };
    match seq {
        SequenceSpec::Power { d: 2 } => {
            // (k+1)² = k² + 2k + 1
            let mut r = 0u64;
            for k in 1..=horizon {
                r = (r + (2 * (k - 1) + 1) % q) % q;
                feed(k, r);
            }
        }
        _ => {
            for (k, r) in TermsMod::new(seq, q).take(horizon as usize).enumerate() {
                feed(k as u64 + 1, r);
            }
        }
    }
    let stabilized = last_fail <= horizon / 2;
    let warning = (!stabilized).then(|| {
        format!("Q={q}: failure at N={last_fail} lies in the last half of the horizon H={horizon}")
    });
    Ok(EquidistScan {
        q,
        beta: beta.clone(),
        horizon,
        lambda_size: size,
        checkpoints,
        empirical_n: last_fail,
        stabilized,
        warning,
        exact: false,
    })
}

/// Whether `exact_n_power` applies to (d, Q).
pub fn exact_power_applies(d: u32, q: u64) -> bool {
    q == 1 || (crate::arith::is_squarefree(q) && crate::arith::factorize(q).iter().all(|&(p, _)| p % d as u64 == 1))
}

/// Exact N(Q) for n_k = k^d with Q squarefree and every prime factor ≡ 1 mod d.
///
/// Each a ∈ Λ_Q then has d^ω roots per period of k, so with N = jQ + s the
/// smallest count is j·d^ω + m(s) where m(s) is the smallest count over
/// k ≤ s; the failures for a given s are exactly the j below a linear bound.
/// Returns `None` when φ(Q)/Q ≤ β, i.e. failures never stop.
pub fn exact_n_power(d: u32, q: u64, beta: &Rational) -> Result<Option<u64>> {
    if d < 2 || !exact_power_applies(d, q) {
        return Err(Error::arg(format!("closed form needs squarefree Q with prime factors ≡ 1 mod {d}, got {q}")));
    }
    if *beta <= Rational::from_integer(0.into()) || *beta >= Rational::from_integer(1.into()) {
        return Err(Error::arg("beta must lie in (0,1)"));
    }
    let lambda = SequenceSpec::Power { d }.lambda(q)?;
    let size = lambda.len() as i128;
    let bn: i128 = beta.numer().try_into().map_err(|_| Error::arg("beta too large"))?;
    let bd: i128 = beta.denom().try_into().map_err(|_| Error::arg("beta too large"))?;
    let phi = crate::arith::totient(q) as i128;
    let drift = phi * bd - bn * q as i128;
    if drift <= 0 {
        return Ok(None);
    }
    let mut index = vec![u32::MAX; q as usize];
    for (i, &a) in lambda.elements().iter().enumerate() {
        index[a as usize] = i as u32;
    }
    let mut counts = vec![0u64; lambda.len()];
    let mut hist: Vec<u64> = vec![lambda.len() as u64];
    let mut min = 0usize;
    let mut best = 0u64;
    let mut r = 0u64;
    for s in 1..q {
        r = if d == 2 {
            (r + (2 * (s - 1) + 1) % q) % q
        } else {
            crate::arith::pow_mod(s, d as u64, q)
        };
        let i = index[r as usize];
        if i != u32::MAX {
            let c = counts[i as usize] as usize;
            counts[i as usize] += 1;
            hist[c] -= 1;
            if hist.len() <= c + 1 {
                hist.push(0);
            }
            hist[c + 1] += 1;
            while hist[min] == 0 {
                min += 1;
            }
        }
        let slack = bn * s as i128 - min as i128 * size * bd;
        if slack >= 0 {
            let j = (slack / drift) as u64;
            best = best.max(j * q + s);
        }
    }
    Ok(Some(best))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetRule {
    AllIntegers,
    PowersOfTwo,
}

impl SubsetRule {
    /// inf{s ∈ S : s > n}
    pub fn next_above(&self, n: u64) -> u64 {
        match self {
            SubsetRule::AllIntegers => n + 1,
            SubsetRule::PowersOfTwo => (n + 1).next_power_of_two(),
        }
    }

    pub fn contains(&self, s: u64) -> bool {
        match self {
            SubsetRule::AllIntegers => s >= 1,
            SubsetRule::PowersOfTwo => s.is_power_of_two(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "all" | "all_integers" => Ok(SubsetRule::AllIntegers),
            "pow2" | "powers_of_two" => Ok(SubsetRule::PowersOfTwo),
            _ => Err(Error::arg(format!("unknown subset rule {s:?}"))),
        }
    }
}

/// Horizon used for modulus Q: max(base, per_modulus·Q), doubled while the
/// scan has not stabilised, up to `max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonPolicy {
    pub base: u64,
    pub per_modulus: u64,
    pub max: u64,
}

impl Default for HorizonPolicy {
    fn default() -> Self {
        HorizonPolicy {
            base: 10_000,
            per_modulus: 8,
            max: 1 << 28,
        }
    }
}

impl HorizonPolicy {
    pub fn fixed(h: u64) -> Self {
        HorizonPolicy {
            base: h,
            per_modulus: 0,
            max: h,
        }
    }
}

/// N(Q) for every Q ∈ Qset up to a bound, and ψ derived from it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PsiTable {
    pub seq: SequenceSpec,
    pub beta: Rational,
    pub rule: SubsetRule,
    pub policy: HorizonPolicy,
    /// Q → scan summary (without checkpoints).
    pub scans: BTreeMap<u64, EquidistScan>,
    pub warnings: Vec<String>,
}

impl PsiTable {
    pub fn build(
        seq: SequenceSpec,
        catalog: &QsetCatalog,
        bound: u64,
        beta: &Rational,
        rule: SubsetRule,
        policy: HorizonPolicy,
    ) -> Result<Self> {
        let mut table = PsiTable {
            seq,
            beta: beta.clone(),
            rule,
            policy,
            scans: BTreeMap::new(),
            warnings: Vec::new(),
        };
        for &q in catalog.products.iter().filter(|&&q| q <= bound) {
            table.ensure(q)?;
        }
        Ok(table)
    }

    /// Scans Q (if not yet present) under the horizon policy.
    pub fn ensure(&mut self, q: u64) -> Result<u64> {
        if let Some(s) = self.scans.get(&q) {
            return Ok(s.empirical_n);
        }
        if let SequenceSpec::Power { d } = self.seq {
            if exact_power_applies(d, q) {
                let n = exact_n_power(d, q, &self.beta)?.ok_or_else(|| {
                    Error::Infeasible(format!("φ(Q)/Q ≤ β for Q={q}: the residue counts never clear the threshold"))
                })?;
                let lambda_size = self.seq.lambda(q)?.len();
                self.scans.insert(
                    q,
                    EquidistScan {
                        q,
                        beta: self.beta.clone(),
                        horizon: q,
                        lambda_size,
                        checkpoints: Vec::new(),
                        empirical_n: n,
                        stabilized: true,
                        warning: None,
                        exact: true,
                    },
                );
                return Ok(n);
            }
        }
        let lambda = self.seq.lambda(q)?;
        let mut h = self.policy.base.max(self.policy.per_modulus.saturating_mul(q)).min(self.policy.max);
        let mut scan = scan_with(self.seq, &lambda, &self.beta, h)?;
        while !scan.stabilized && h < self.policy.max {
            h = (h * 2).min(self.policy.max);
            scan = scan_with(self.seq, &lambda, &self.beta, h)?;
        }
        if let Some(w) = &scan.warning {
            self.warnings.push(w.clone());
        }
        scan.checkpoints.clear();
        let n = scan.empirical_n;
        self.scans.insert(q, scan);
        Ok(n)
    }

    pub fn n_of(&self, q: u64) -> Option<u64> {
        self.scans.get(&q).map(|s| s.empirical_n)
    }

    /// ψ(n) = inf{s ∈ S : s > N(Q) for all tabulated Q ≤ n}.
    pub fn psi(&self, n: u64) -> u64 {
        let worst = self
            .scans
            .range(..=n)
            .map(|(_, s)| s.empirical_n)
            .max()
            .unwrap_or(0);
        self.rule.next_above(worst)
    }

    /// Largest tabulated modulus.
    pub fn bound(&self) -> u64 {
        self.scans.keys().next_back().copied().unwrap_or(1)
    }
}

/// ψ(n) for a catalog; scans every Q ∈ Qset with Q ≤ n at horizon H.
pub fn psi(
    n: u64,
    catalog: &QsetCatalog,
    rule: SubsetRule,
    seq: SequenceSpec,
    beta: &Rational,
    horizon: u64,
) -> Result<(u64, Vec<String>)> {
    let bound = n.min(catalog.bound);
    let mut cat = catalog.clone();
    cat.products = crate::residue::qset_products(catalog, bound)?;
    let mut table = PsiTable::build(seq, &cat, bound, beta, rule, HorizonPolicy::fixed(horizon))?;
    table.ensure(1)?;
    Ok((table.psi(n), table.warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;
    use crate::residue::nth_terms;

    #[test]
    fn counts_examples() {
        let c = residue_counts(SequenceSpec::prime(), 3, 20).unwrap();
        assert_eq!(c[&1], 8);
        let c = residue_counts(SequenceSpec::power(2).unwrap(), 1, 7).unwrap();
        assert_eq!(c.into_iter().collect::<Vec<_>>(), vec![(0, 7)]);
        let c = residue_counts(SequenceSpec::power(2).unwrap(), 5, 10).unwrap();
        let terms = nth_terms(SequenceSpec::power(2).unwrap(), 10).unwrap();
        for a in [1u64, 4] {
            assert_eq!(c[&a], terms.iter().filter(|&&t| t % 5 == a).count() as u64);
        }
    }

    fn brute_n(seq: SequenceSpec, q: u64, beta: &Rational, h: u64) -> u64 {
        let lambda = seq.lambda(q).unwrap();
        let terms = nth_terms(seq, h as usize).unwrap();
        let mut last = 0;
        for n in 1..=h {
            let fails = lambda.elements().iter().any(|&a| {
                let c = terms[..n as usize].iter().filter(|&&t| t % q == a).count();
                Rational::from_integer(c.into()) <= beta * Rational::new(n.into(), lambda.len().into())
            });
            if fails {
                last = n;
            }
        }
        last
    }

    #[test]
    fn scan_matches_brute_force() {
        for (seq, q) in [
            (SequenceSpec::power(2).unwrap(), 15),
            (SequenceSpec::power(2).unwrap(), 21),
            (SequenceSpec::power(3).unwrap(), 7),
            (SequenceSpec::prime(), 15),
            (SequenceSpec::prime(), 7),
        ] {
            for beta in [rat(1, 4), rat(2, 5)] {
                let s = empirical_n(seq, q, &beta, 400).unwrap();
                assert_eq!(s.empirical_n, brute_n(seq, q, &beta, 400), "{seq:?} {q}");
            }
        }
    }

    #[test]
    fn q_one_and_monotone() {
        let sq = SequenceSpec::power(2).unwrap();
        assert_eq!(empirical_n(sq, 1, &rat(2, 5), 100).unwrap().empirical_n, 0);
        let a = empirical_n(SequenceSpec::prime(), 3, &rat(1, 5), 10_000).unwrap();
        let b = empirical_n(SequenceSpec::prime(), 3, &rat(2, 5), 10_000).unwrap();
        assert!(a.empirical_n <= b.empirical_n);
        assert!(b.stabilized);
        let w = empirical_n(sq, 105, &rat(2, 5), 50).unwrap();
        assert!(w.warning.is_some());
    }

    #[test]
    fn closed_form_matches_long_scan() {
        for (d, q) in [(2u32, 15u64), (2, 21), (2, 105), (2, 143), (3, 7), (3, 91), (4, 65)] {
            for beta in [rat(1, 4), rat(2, 5), rat(1, 10)] {
                let exact = exact_n_power(d, q, &beta).unwrap();
                let seq = SequenceSpec::power(d).unwrap();
                let scan = empirical_n(seq, q, &beta, 60 * q).unwrap();
                match exact {
                    Some(n) => {
                        assert!(n < 30 * q, "d={d} q={q}");
                        assert_eq!(n, scan.empirical_n, "d={d} q={q} beta={beta}");
                    }
                    None => assert!(scan.empirical_n > 30 * q),
                }
            }
        }
        assert_eq!(exact_n_power(2, 1, &rat(1, 2)).unwrap(), Some(0));
        assert!(exact_n_power(2, 9, &rat(1, 2)).is_err());
    }

    #[test]
    fn psi_examples() {
        let cat = QsetCatalog::new(vec![3, 5], vec![], 100).unwrap();
        let (v, _) = psi(2, &cat, SubsetRule::AllIntegers, SequenceSpec::prime(), &rat(2, 5), 1000).unwrap();
        assert_eq!(v, 1);
        assert_eq!(SubsetRule::PowersOfTwo.next_above(5), 8);
        let (v, _) = psi(15, &cat, SubsetRule::AllIntegers, SequenceSpec::prime(), &rat(2, 5), 10_000).unwrap();
        let worst = [1u64, 3, 5, 15]
            .iter()
            .map(|&q| empirical_n(SequenceSpec::prime(), q, &rat(2, 5), 10_000).unwrap().empirical_n)
            .max()
            .unwrap();
        assert_eq!(v, worst + 1);
    }
}

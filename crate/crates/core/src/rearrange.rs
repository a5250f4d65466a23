//! Block-shift rearrangements f ↦ f̃^ω of Z_T functions onto Z_{pT}.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arith::{gcd, int, Rational};
use crate::error::{Error, Result};
use crate::periodic::PeriodicFunction;
use crate::residue::ResidueSet;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RearrangementPlan {
    pub t: u64,
    pub p: u64,
    /// ξ_1..ξ_{⌊√p⌋}, each in [0, T).
    pub shifts: Vec<u64>,
}

pub fn isqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

impl RearrangementPlan {
    pub fn new(t: u64, p: u64, shifts: Vec<u64>) -> Result<Self> {
        if t == 0 || p == 0 {
            return Err(Error::arg("T and p must be positive"));
        }
        if gcd(p, t) != 1 {
            return Err(Error::NotCoprime(p, t));
        }
        if shifts.len() as u64 != isqrt(p) {
            return Err(Error::arg(format!("expected {} shifts, got {}", isqrt(p), shifts.len())));
        }
        if shifts.iter().any(|&s| s >= t) {
            return Err(Error::arg("shifts must lie in [0,T)"));
        }
        Ok(RearrangementPlan { t, p, shifts })
    }

    pub fn identity(t: u64, p: u64) -> Result<Self> {
        Self::new(t, p, vec![0; isqrt(p) as usize])
    }

    pub fn blocks(&self) -> u64 {
        self.shifts.len() as u64
    }

    pub fn block_len(&self) -> u64 {
        self.blocks() * self.t
    }

    pub fn tail_start(&self) -> u64 {
        self.blocks() * self.block_len()
    }

    pub fn period(&self) -> u64 {
        self.p * self.t
    }

    /// Shift applied at x ∈ Z_{pT}: ξ_i inside block i, 0 on the tail.
    pub fn shift_at(&self, x: u64) -> u64 {
        let x = x % self.period();
        if x < self.tail_start() {
            self.shifts[(x / self.block_len()) as usize]
        } else {
            0
        }
    }

    /// The point of Z_T whose value x inherits.
    pub fn source(&self, x: u64) -> u64 {
        (x % self.period() + self.shift_at(x)) % self.t
    }

    /// Block starts i·⌊√p⌋·T for i = 0..=⌊√p⌋, reduced mod pT and deduplicated.
    pub fn boundaries(&self) -> Vec<u64> {
        let mut b: Vec<u64> = (0..=self.blocks())
            .map(|i| (i * self.block_len()) % self.period())
            .collect();
        b.sort_unstable();
        b.dedup();
        b
    }
}

pub fn apply_rearrangement(f: &PeriodicFunction, plan: &RearrangementPlan) -> Result<PeriodicFunction> {
    if f.period() != plan.t {
        return Err(Error::arg(format!(
            "function period {} does not match plan period {}",
            f.period(),
            plan.t
        )));
    }
    let values = (0..plan.period()).map(|x| f.index(plan.source(x))).collect();
    PeriodicFunction::from_parts(f.palette().to_vec(), values)
}

/// Support of the rearranged indicator of E ⊂ Z_T.
pub fn rearranged_set(e: &ResidueSet, plan: &RearrangementPlan) -> Result<ResidueSet> {
    if e.modulus() != plan.t {
        return Err(Error::arg("set modulus does not match plan period"));
    }
    let mask = e.mask();
    let m: Vec<bool> = (0..plan.period()).map(|x| mask[plan.source(x) as usize]).collect();
    Ok(ResidueSet::from_mask(plan.period(), &m))
}

/// Ẽ^ω together with the windows [b − guard, b] around every block boundary b.
pub fn exceptional_e1(e: &ResidueSet, plan: &RearrangementPlan, guard: u64) -> Result<ResidueSet> {
    let base = rearranged_set(e, plan)?;
    let mut mask = base.mask();
    let n = plan.period();
    for b in plan.boundaries() {
        for back in 0..=guard.min(n - 1) {
            mask[((b + n - back % n) % n) as usize] = true;
        }
    }
    Ok(ResidueSet::from_mask(n, &mask))
}

/// Boundaries where the shift actually changes (or that border the tail
/// with a nonzero shift); the others need no guard.
pub fn active_boundaries(plan: &RearrangementPlan) -> Vec<u64> {
    let k = plan.blocks() as usize;
    let shift_of_block = |i: usize| if i < k { plan.shifts[i] } else { 0 };
    let mut out = Vec::new();
    for i in 0..=k {
        // boundary i separates block i−1 (tail when i = 0, by wraparound) and block i
        let before = if i == 0 { 0 } else { shift_of_block(i - 1) };
        let after = shift_of_block(i);
        if before != after {
            out.push((i as u64 * plan.block_len()) % plan.period());
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// |E¹|/(pT) − P(E) ≤ (guard + 2T)/(T√p), compared exactly.
pub fn e1_measure_bound_holds(e1_size: u64, e_density: &Rational, plan: &RearrangementPlan, guard: u64) -> bool {
    let excess = Rational::new(e1_size.into(), plan.period().into()) - e_density;
    if excess <= int(0) {
        return true;
    }
    let lhs = &excess * int(plan.t);
    let rhs = int(guard + 2 * plan.t);
    &lhs * &lhs * int(plan.p) <= &rhs * &rhs
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub plan: RearrangementPlan,
    pub candidates_tried: u64,
    /// Smallest slack of the certified inequality (nonnegative on success).
    pub worst_margin: Rational,
}

/// Singleton certificate: min over x ∈ Z_{pT}, b ∈ Z_T of
/// 2T·#{a ∈ Λ : source(x+a) = b} − |Λ|, with the minimising (x, b).
pub fn singleton_margin(plan: &RearrangementPlan, lambda: &ResidueSet) -> (i64, u64, u64) {
    let n = plan.period();
    let t = plan.t as usize;
    let sources: Vec<u64> = (0..n).map(|y| plan.source(y)).collect();
    let mut hits = vec![0i64; t];
    let mut worst = (i64::MAX, 0, 0);
    for x in 0..n {
        hits.iter_mut().for_each(|h| *h = 0);
        for &a in lambda.elements() {
            hits[sources[((x + a) % n) as usize] as usize] += 1;
        }
        for (b, &h) in hits.iter().enumerate() {
            let m = 2 * plan.t as i64 * h - lambda.len() as i64;
            if m < worst.0 {
                worst = (m, x, b as u64);
            }
        }
    }
    worst
}

fn random_plan(rng: &mut ChaCha8Rng, t: u64, p: u64) -> Result<RearrangementPlan> {
    let shifts = (0..isqrt(p)).map(|_| rng.gen_range(0..t)).collect();
    RearrangementPlan::new(t, p, shifts)
}

/// Seeded search for shifts such that every singleton indicator satisfies
/// Σ_{a∈Λ_{pT}} 1̃_b(x+a) ≥ |Λ_{pT}|/(2T) for all x; certified exhaustively.
pub fn find_good_omega(t: u64, p: u64, lambda: &ResidueSet, seed: u64, budget: u64) -> Result<SearchOutcome> {
    if gcd(p, t) != 1 {
        return Err(Error::NotCoprime(p, t));
    }
    if lambda.modulus() != p * t {
        return Err(Error::arg("residue set must live on Z_{pT}"));
    }
    if (lambda.len() as u64) < 2 * t {
        return Err(Error::arg(format!(
            "|Λ_pT| = {} < 2T = {}: the bound cannot hold for every singleton",
            lambda.len(),
            2 * t
        )));
    }
    let denom = int(2 * t);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(i64, u64, u64)> = None;
    for tried in 1..=budget {
        let plan = random_plan(&mut rng, t, p)?;
        let (m, x, b) = singleton_margin(&plan, lambda);
        if m >= 0 {
            return Ok(SearchOutcome {
                plan,
                candidates_tried: tried,
                worst_margin: Rational::from_integer(m.into()) / &denom,
            });
        }
        if best.map_or(true, |bm| m > bm.0) {
            best = Some((m, x, b));
        }
    }
    let (m, x, b) = best.unwrap_or((0, 0, 0));
    Err(Error::BudgetExhausted(format!(
        "no plan within {budget} candidates; best worst-case margin {} at x={x}, b={b}",
        Rational::from_integer(m.into()) / denom
    )))
}

/// For a fixed f ≥ 0 on Z_T: min over x of Σ_{a∈Λ_{pT}} f̃(x+a) − ½·E f·|Λ_{pT}|.
pub fn function_margin(f: &PeriodicFunction, plan: &RearrangementPlan, lambda: &ResidueSet) -> Result<(Rational, u64)> {
    if f.period() != plan.t || lambda.modulus() != plan.period() {
        return Err(Error::arg("period mismatch"));
    }
    let n = plan.period();
    let idx: Vec<u16> = (0..n).map(|y| f.index(plan.source(y))).collect();
    let mut counts = vec![0u64; f.palette().len()];
    let target = f.mean() * int(lambda.len() as u64) / int(2);
    let mut worst: Option<(Rational, u64)> = None;
    for x in 0..n {
        counts.iter_mut().for_each(|c| *c = 0);
        for &a in lambda.elements() {
            counts[idx[((x + a) % n) as usize] as usize] += 1;
        }
        let s: Rational = f.palette().iter().zip(&counts).map(|(v, &c)| v * int(c)).sum();
        let m = s - &target;
        if worst.as_ref().map_or(true, |w| m < w.0) {
            worst = Some((m, x));
        }
    }
    Ok(worst.expect("nonempty domain"))
}

/// Seeded search certifying the averaged bound for one specific f.
pub fn find_plan_for_function(
    f: &PeriodicFunction,
    p: u64,
    lambda: &ResidueSet,
    seed: u64,
    budget: u64,
) -> Result<SearchOutcome> {
    let t = f.period();
    if gcd(p, t) != 1 {
        return Err(Error::NotCoprime(p, t));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Rational, u64)> = None;
    for tried in 1..=budget {
        let plan = random_plan(&mut rng, t, p)?;
        let (m, x) = function_margin(f, &plan, lambda)?;
        if m >= int(0) {
            return Ok(SearchOutcome {
                plan,
                candidates_tried: tried,
                worst_margin: m,
            });
        }
        if best.as_ref().map_or(true, |b| m > b.0) {
            best = Some((m, x));
        }
    }
    let (m, x) = best.unwrap_or((int(0), 0));
    Err(Error::BudgetExhausted(format!(
        "no plan within {budget} candidates for p={p}; best margin {m} at x={x}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;
    use crate::residue::power_residues;

    #[test]
    fn hand_example() {
        let f = PeriodicFunction::indicator(&ResidueSet::new(2, vec![0]).unwrap());
        let plan = RearrangementPlan::new(2, 5, vec![1, 0]).unwrap();
        assert_eq!(plan.block_len(), 4);
        assert_eq!(plan.tail_start(), 8);
        let g = apply_rearrangement(&f, &plan).unwrap();
        let v: Vec<u16> = g.indices().to_vec();
        // block [0,4) shifted by 1, [4,8) and tail [8,10) unshifted
        assert_eq!(v, vec![0, 1, 0, 1, 1, 0, 1, 0, 1, 0]);
        assert_eq!(g.mean(), f.mean());
        let e = rearranged_set(&ResidueSet::new(2, vec![0]).unwrap(), &plan).unwrap();
        assert_eq!(e.len(), 5);
        assert_eq!(e.density(), rat(1, 2));
    }

    #[test]
    fn identity_plan_is_lift() {
        let f = PeriodicFunction::from_values(&[rat(1, 1), rat(2, 1), rat(0, 1)]).unwrap();
        let plan = RearrangementPlan::identity(3, 7).unwrap();
        let g = apply_rearrangement(&f, &plan).unwrap();
        for x in 0..21 {
            assert_eq!(g.value(x), f.value(x));
        }
        assert!(apply_rearrangement(&f, &RearrangementPlan::identity(2, 7).unwrap()).is_err());
    }

    #[test]
    fn e1_examples() {
        let empty = ResidueSet::new(2, vec![]).unwrap();
        let plan = RearrangementPlan::identity(2, 25).unwrap();
        let e1 = exceptional_e1(&empty, &plan, 2).unwrap();
        assert_eq!(e1.len(), 15);
        let e0 = exceptional_e1(&empty, &plan, 0).unwrap();
        assert_eq!(e0.elements(), &[0, 10, 20, 30, 40]);
        assert!(e1_measure_bound_holds(e1.len() as u64, &rat(0, 1), &plan, 2));
        assert!(active_boundaries(&plan).is_empty());
        let plan = RearrangementPlan::new(2, 25, vec![0, 1, 1, 0, 0]).unwrap();
        assert_eq!(active_boundaries(&plan), vec![10, 30]);
    }

    #[test]
    fn trivial_t_one() {
        let l = power_residues(11, 2).unwrap();
        let out = find_good_omega(1, 11, &l, 7, 1).unwrap();
        assert_eq!(out.candidates_tried, 1);
    }

    #[test]
    fn precondition() {
        let l = power_residues(15, 2).unwrap();
        assert!(find_good_omega(3, 5, &l, 1, 10).is_err());
    }

    #[test]
    fn singleton_margin_matches_brute() {
        let l = power_residues(3 * 101, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let plan = random_plan(&mut rng, 3, 101).unwrap();
        let (m, _, _) = singleton_margin(&plan, &l);
        let mut brute = i64::MAX;
        for b in 0..3u64 {
            let ind = PeriodicFunction::indicator(&ResidueSet::new(3, vec![b]).unwrap());
            let g = apply_rearrangement(&ind, &plan).unwrap();
            for x in 0..303u64 {
                let s: i64 = l.elements().iter().map(|&a| (*g.value(x + a) == int(1)) as i64).sum();
                brute = brute.min(6 * s - l.len() as i64);
            }
        }
        assert_eq!(m, brute);
    }
}

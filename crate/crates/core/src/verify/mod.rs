//! Exact checks of the four family properties, independence and
//! distribution checks, and the maximal-inequality demonstrator.

pub mod maximal;
pub mod restricted;
pub mod sums;

use std::collections::BTreeMap;

use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{int, ratmap, ratstr, ratstr_opt, Rational};
use crate::bitset::BitSet;
use crate::error::{Error, Result};
use crate::family::{y_distribution, Environment, Family};
use crate::field::{joint_histogram, Field, Hist};
use crate::periodic::PeriodicFunction;
use crate::residue::{ResidueSet, SequenceSpec, TermsMod};

pub use maximal::{demo_maximal, MaximalOptions, MaximalReport};
pub use restricted::{verify_restricted, RestrictionReport};
use sums::{direct_sum, lambda_sum_table, representatives, ScaledTable};

/// (1/|Λ_Q|) Σ_{a ∈ Λ_Q, 1 ≤ a ≤ Q} f(x + a), f extended periodically.
pub fn residue_average(f: &PeriodicFunction, lambda: &ResidueSet, x: u64) -> Result<Rational> {
    if lambda.is_empty() {
        return Err(Error::arg("Λ_Q is empty"));
    }
    let t = f.period();
    let s: Rational = representatives(lambda).iter().map(|&a| f.value((x + a) % t)).sum();
    Ok(s / int(lambda.len() as u64))
}

/// A_N f(x) = (1/N) Σ_{k ≤ N} f(x + n_k).
pub fn subsequence_average(f: &PeriodicFunction, seq: SequenceSpec, n: u64, x: u64) -> Result<Rational> {
    if n == 0 {
        return Err(Error::arg("N must be at least 1"));
    }
    let t = f.period();
    let s: Rational = TermsMod::new(seq, t)
        .take(n as usize)
        .map(|r| f.value((x % t + r) % t))
        .sum();
    Ok(s / int(n))
}

/// max over λ in the value set of λ·P(|g| ≥ λ).
pub fn weak_norm(g: &PeriodicFunction) -> Rational {
    let counts = g.counts();
    weak_norm_of_histogram(g.palette(), &counts.iter().map(|&c| c as u128).collect::<Vec<_>>())
}

pub fn weak_norm_of_histogram(palette: &[Rational], hist: &[u128]) -> Rational {
    let total: u128 = hist.iter().sum();
    if total == 0 {
        return Rational::zero();
    }
    let mut order: Vec<usize> = (0..palette.len()).collect();
    order.sort_by(|&a, &b| palette[b].cmp(&palette[a]));
    let mut at_least = 0u128;
    let mut best = Rational::zero();
    for i in order {
        at_least += hist[i];
        if hist[i] == 0 {
            continue;
        }
        let v = &palette[i] * Rational::new(at_least.into(), total.into());
        if v > best {
            best = v;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependenceCheck {
    pub independent: bool,
    /// Domain size the joint histogram was taken over.
    pub domain: u64,
    /// A value pair whose joint frequency differs from the product.
    pub witness: Option<(String, String)>,
}

fn factorizes(ha: &[u128], hb: &[u128], joint: &BTreeMap<(u16, u16), u128>) -> Option<(usize, usize)> {
    let n: u128 = ha.iter().sum();
    for (i, &a) in ha.iter().enumerate() {
        for (j, &b) in hb.iter().enumerate() {
            let j_ij = joint.get(&(i as u16, j as u16)).copied().unwrap_or(0);
            if j_ij * n != a * b {
                return Some((i, j));
            }
        }
    }
    None
}

/// Exact factorization of the joint histogram of two fields over the lcm
/// of their periods.
pub fn pairwise_independence_check(a: &Field, b: &Field, cap: u64) -> Result<IndependenceCheck> {
    if a.is_constant() || b.is_constant() {
        return Ok(IndependenceCheck {
            independent: true,
            domain: a.period().max(b.period()),
            witness: None,
        });
    }
    let joint = joint_histogram(a, b, cap)?;
    let mut ha = vec![0u128; a.palette().len()];
    let mut hb = vec![0u128; b.palette().len()];
    for (&(i, j), &c) in &joint {
        ha[i as usize] += c;
        hb[j as usize] += c;
    }
    let bad = factorizes(&ha, &hb, &joint);
    Ok(IndependenceCheck {
        independent: bad.is_none(),
        domain: ha.iter().sum::<u128>() as u64,
        witness: bad.map(|(i, j)| (a.palette()[i].to_string(), b.palette()[j].to_string())),
    })
}

/// As `pairwise_independence_check`, restricted to {x : x mod m ∈ S}.
pub fn conditional_independence_check(a: &Field, b: &Field, m: u64, mask: &[bool], cap: u64) -> Result<IndependenceCheck> {
    let n = crate::arith::lcm(crate::arith::lcm(a.period(), b.period())?, m)?;
    if n > cap {
        return Err(Error::CapExceeded(format!("joint period {n} exceeds the enumeration cap {cap}")));
    }
    let mut joint = BTreeMap::new();
    for x in 0..n {
        if mask[(x % m) as usize] {
            *joint.entry((a.eval(x), b.eval(x))).or_insert(0u128) += 1;
        }
    }
    let mut ha = vec![0u128; a.palette().len()];
    let mut hb = vec![0u128; b.palette().len()];
    for (&(i, j), &c) in &joint {
        ha[i as usize] += c;
        hb[j as usize] += c;
    }
    let bad = factorizes(&ha, &hb, &joint);
    Ok(IndependenceCheck {
        independent: bad.is_none(),
        domain: ha.iter().sum::<u128>() as u64,
        witness: bad.map(|(i, j)| (a.palette()[i].to_string(), b.palette()[j].to_string())),
    })
}

/// Distribution of a histogram as value ↦ probability.
pub fn distribution(palette: &[Rational], hist: &Hist) -> BTreeMap<Rational, Rational> {
    crate::field::distribution_of(palette, hist)
}

/// Per-point outcome of the (joker)/(thief) scan.
#[derive(Clone, Debug)]
pub struct Property4Scan {
    pub joker_fail: BitSet,
    pub thief_fail: BitSet,
    /// Smallest (Λ_{Q_x}-average of f_h) − X_h(x) over all x, with (x, h).
    pub worst_margin: Option<(Rational, u64, usize)>,
    /// The same minimum over x outside the family's E.
    pub worst_margin_outside_e: Option<(Rational, u64, usize)>,
    /// (Q, ψ(A·Q)) for every Q < T in use.
    pub thief_ranges: Vec<(u64, u64)>,
}

impl Property4Scan {
    pub fn failures(&self) -> BitSet {
        let mut f = self.joker_fail.clone();
        f.union_with(&self.thief_fail).expect("same length");
        f
    }
}

/// Λ_{Q}-sums of every f_h as integers with scale den_h.
pub(crate) struct AverageTables {
    pub tables: Vec<ScaledTable>,
    /// Per h: sums over Λ_T at every x, present when some Q_x = T.
    pub full: Vec<Option<Vec<u64>>>,
    pub lambda_len: BTreeMap<u64, u64>,
    pub reps: BTreeMap<u64, Vec<u64>>,
}

impl AverageTables {
    pub fn build(tables: Vec<ScaledTable>, t: u64, qvals: &BTreeMap<u64, u64>, seq: SequenceSpec, work: u64) -> Result<Self> {
        let k = tables.len();
        let mut lambda_len = BTreeMap::new();
        let mut reps = BTreeMap::new();
        for (&q, &count) in qvals {
            let len = if q == t {
                // the convolution reports |Λ_T| itself
                0
            } else {
                let lam = seq.lambda(q)?;
                let cost = (count as u128) * (lam.len() as u128) * (k as u128);
                if cost > work as u128 {
                    return Err(Error::CapExceeded(format!("direct Λ_{q}-sums exceed the work cap")));
                }
                reps.insert(q, representatives(&lam));
                lam.len() as u64
            };
            lambda_len.insert(q, len);
        }
        let full = if qvals.contains_key(&t) {
            let mut out = Vec::with_capacity(k);
            for tb in &tables {
                let (s, len) = lambda_sum_table(tb, seq, work)?;
                lambda_len.insert(t, len);
                out.push(Some(s));
            }
            out
        } else {
            vec![None; k]
        };
        Ok(AverageTables {
            tables,
            full,
            lambda_len,
            reps,
        })
    }

    #[inline]
    pub fn sum(&self, h: usize, q: u64, x: u64) -> u64 {
        match (&self.full[h], self.reps.get(&q)) {
            (_, Some(r)) => direct_sum(&self.tables[h], x, r),
            (Some(s), None) => s[x as usize],
            (None, None) => unreachable!("no sums for Q = {q}"),
        }
    }

    /// Integer scale of `sum` for (h, Q).
    #[inline]
    pub fn scale(&self, h: usize, q: u64) -> u128 {
        self.tables[h].den as u128 * self.lambda_len[&q] as u128
    }

    pub fn average(&self, h: usize, q: u64, x: u64) -> Rational {
        Rational::new(self.sum(h, q, x).into(), self.scale(h, q).into())
    }
}

/// ⌈v·scale⌉ as u128, saturating.
pub(crate) fn ceil_scaled(v: &Rational, scale: u128) -> u128 {
    let x = (v * Rational::from_integer(scale.into())).ceil().to_integer();
    x.to_u128().unwrap_or(u128::MAX)
}

/// Exact minimum of per-point margins, located through an f64 screen.
fn exact_worst(
    screen: &[(bool, f64)],
    keep: impl Fn(u64) -> bool + Sync,
    exact: impl Fn(u64) -> (Rational, usize),
) -> Option<(Rational, u64, usize)> {
    let best = screen
        .par_iter()
        .enumerate()
        .filter(|(x, _)| keep(*x as u64))
        .map(|(x, v)| (v.1, x as u64))
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)))?;
    // f64 rounding could misorder near-ties; resolve them exactly
    let tol = best.0.abs() * 1e-9 + 1e-12;
    screen
        .iter()
        .enumerate()
        .filter(|(x, v)| keep(*x as u64) && v.1 <= best.0 + tol)
        .map(|(x, _)| {
            let (m, h) = exact(x as u64);
            (m, x as u64, h)
        })
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)))
}

/// Points x ∈ Z_T whose block of Q values is in use, grouped by Q.
fn q_counts(fam: &Family) -> BTreeMap<u64, u64> {
    let mut per_q: BTreeMap<u64, u64> = BTreeMap::new();
    for &i in &fam.q_map.index {
        *per_q.entry(fam.q_map.values[i as usize]).or_insert(0) += 1;
    }
    per_q
}

/// For each x ∈ Z_t: does f_h(z) = f_h(z − Q) fail somewhere in
/// z ∈ [x + Q, x + hi]? Only x with `select(x)` are evaluated.
pub(crate) fn thief_failures(
    tables: &[ScaledTable],
    t: u64,
    q: u64,
    hi: u64,
    select: impl Fn(u64) -> bool + Sync,
) -> Vec<u64> {
    if hi < q || q % t == 0 {
        return Vec::new();
    }
    let len = hi - q + 1;
    let mis: Vec<bool> = (0..t)
        .into_par_iter()
        .map(|z| {
            let w = (z + t - q % t) % t;
            tables.iter().any(|tb| tb.at(z) != tb.at(w))
        })
        .collect();
    let any_mis = mis.iter().any(|&b| b);
    let mut pre = vec![0u32; 2 * t as usize + 1];
    for i in 0..2 * t as usize {
        pre[i + 1] = pre[i] + mis[i % t as usize] as u32;
    }
    (0..t)
        .into_par_iter()
        .filter(|&x| {
            select(x)
                && if len >= t {
                    any_mis
                } else {
                    let start = ((x + q) % t) as usize;
                    pre[start + len as usize] > pre[start]
                }
        })
        .collect()
}

/// Evaluates (joker) and (thief) at every x ∈ Z_T, ignoring E.
pub fn property4_scan(fam: &Family, env: &mut Environment) -> Result<Property4Scan> {
    let t = fam.t;
    let k = fam.k();
    let caps = env.caps;
    let tables = (0..k)
        .map(|h| ScaledTable::new(&fam.f_table(h, caps.table)?))
        .collect::<Result<Vec<_>>>()?;
    let avg = AverageTables::build(tables, t, &q_counts(fam), env.seq, caps.work)?;
    let lifts_cap = (caps.work / t.max(1)).max(1);

    // X_h at its largest lift of x, as palette indices
    let xmax: Vec<Vec<u16>> = fam
        .x
        .iter()
        .map(|xf| {
            (0..t)
                .into_par_iter()
                .map(|x| xf.max_over_lifts(x, t, lifts_cap))
                .collect::<Result<Vec<u16>>>()
        })
        .collect::<Result<_>>()?;

    // thresholds[h][qi][palette index] = ⌈X·den·|Λ_Q|⌉
    let qvals = fam.q_map.values.clone();
    let thresholds: Vec<Vec<Vec<u128>>> = (0..k)
        .map(|h| {
            qvals
                .iter()
                .map(|&q| {
                    let scale = avg.scale(h, q);
                    fam.x[h].palette().iter().map(|v| ceil_scaled(v, scale)).collect()
                })
                .collect()
        })
        .collect();

    let screen: Vec<(bool, f64)> = (0..t)
        .into_par_iter()
        .map(|x| {
            let qi = fam.q_map.index[x as usize] as usize;
            let q = qvals[qi];
            let mut ok = true;
            let mut worst = f64::INFINITY;
            for h in 0..k {
                let s = avg.sum(h, q, x) as u128;
                let thr = thresholds[h][qi][xmax[h][x as usize] as usize];
                ok &= s >= thr;
                worst = worst.min((s as f64 - thr as f64) / avg.scale(h, q) as f64);
            }
            (ok, worst)
        })
        .collect();
    let joker_fail = BitSet::from_fn(t, |x| !screen[x as usize].0);
    let exact = |x: u64| {
        let q = fam.q_map.get(x);
        (0..k)
            .map(|h| {
                let xv = &fam.x[h].palette()[xmax[h][x as usize] as usize];
                (avg.average(h, q, x) - xv, h)
            })
            .min_by(|a, b| a.0.cmp(&b.0))
            .expect("K ≥ 1")
    };
    let worst_margin = exact_worst(&screen, |_| true, exact);
    let worst_margin_outside_e = exact_worst(&screen, |x| !fam.exceptional.get(x), exact);

    let mut thief_fail = BitSet::new(t);
    let mut thief_ranges = Vec::new();
    for (qi, &q) in qvals.iter().enumerate() {
        if q == t {
            continue;
        }
        let aq = fam
            .params
            .a
            .checked_mul(q)
            .ok_or_else(|| Error::CapExceeded("A·Q overflows".into()))?;
        let hi = env.psi_at(aq)?;
        thief_ranges.push((q, hi));
        let index = &fam.q_map.index;
        for x in thief_failures(&avg.tables, t, q, hi, |x| index[x as usize] as usize == qi) {
            thief_fail.set(x, true);
        }
    }
    Ok(Property4Scan {
        joker_fail,
        thief_fail,
        worst_margin,
        worst_margin_outside_e,
        thief_ranges,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionResult {
    pub h: usize,
    pub expected_n: usize,
    pub matches: bool,
    #[serde(with = "ratmap")]
    pub observed: BTreeMap<Rational, Rational>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub k: usize,
    pub m: usize,
    pub l: usize,
    pub t: u64,
    pub r: u64,
    #[serde(with = "ratstr")]
    pub epsilon: Rational,
    pub means: Vec<String>,
    #[serde(with = "ratstr")]
    pub mean_upper_bound: Rational,
    pub distributions: Vec<DistributionResult>,
    pub independence: Vec<(usize, usize, IndependenceCheck)>,
    #[serde(with = "ratstr")]
    pub exceptional_measure: Rational,
    #[serde(with = "ratstr")]
    pub failure_measure: Rational,
    pub joker_failures: u64,
    pub thief_failures: u64,
    pub failures_outside_e: u64,
    /// A failing x outside E, if any.
    pub witness: Option<u64>,
    #[serde(with = "ratstr_opt")]
    pub worst_margin_outside_e: Option<Rational>,
    pub worst_margin_at: Option<(u64, usize)>,
    pub thief_ranges: Vec<(u64, u64)>,
    pub property1: PropertyResult,
    pub property2: PropertyResult,
    pub property3: PropertyResult,
    pub property4: PropertyResult,
    pub pass: bool,
}

/// Checks properties (1)–(4) exactly.
pub fn verify_family(fam: &Family, env: &mut Environment) -> Result<VerificationReport> {
    fam.validate_structure()?;
    let p = &fam.params;
    let caps = env.caps;
    let k = fam.k();

    // (1)
    let exponent = ((k - 1) * p.m + p.l) as i32;
    let upper = (int(1) + int(4) * &fam.epsilon).pow(exponent);
    let means: Vec<Rational> = fam.f.iter().map(|f| f.mean(caps.enumeration)).collect::<Result<_>>()?;
    let bad1 = means.iter().position(|m| *m < int(1) || *m > upper);
    let property1 = PropertyResult {
        pass: bad1.is_none(),
        detail: match bad1 {
            None => format!("1 ≤ E f_h ≤ {upper} for all h"),
            Some(h) => format!("E f_{} = {} outside [1, {upper}]", h + 1, means[h]),
        },
    };

    // (2)
    let mut distributions = Vec::new();
    for (h, x) in fam.x.iter().enumerate() {
        let n = if h + 1 < k { p.m } else { p.l };
        let y = y_distribution(n, &p.gamma, &p.alpha)?;
        let observed = x.distribution(caps.enumeration)?;
        distributions.push(DistributionResult {
            h: h + 1,
            expected_n: n,
            matches: observed == y.atoms,
            observed,
        });
    }
    let mut independence = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            independence.push((a + 1, b + 1, pairwise_independence_check(&fam.x[a], &fam.x[b], caps.enumeration)?));
        }
    }
    let bad2 = distributions.iter().find(|d| !d.matches);
    let bad_ind = independence.iter().find(|c| !c.2.independent);
    let property2 = PropertyResult {
        pass: bad2.is_none() && bad_ind.is_none(),
        detail: match (bad2, bad_ind) {
            (Some(d), _) => format!("X_{} is not distributed as Y_{}", d.h, d.expected_n),
            (None, Some((a, b, _))) => format!("X_{a} and X_{b} are not independent"),
            _ => "X_h ≐ Y with the prescribed n and pairwise independent".into(),
        },
    };

    // (3)
    let e_measure = fam.exceptional_measure();
    let property3 = PropertyResult {
        pass: e_measure <= p.delta,
        detail: format!("P(E) = {e_measure} against δ = {}", p.delta),
    };

    // (4)
    let scan = property4_scan(fam, env)?;
    let failures = scan.failures();
    let outside = failures.count_outside(&fam.exceptional);
    let witness = failures.ones().find(|&x| !fam.exceptional.get(x));
    let worst_outside = scan.worst_margin_outside_e.clone();
    let property4 = PropertyResult {
        pass: outside == 0,
        detail: if outside == 0 {
            "(joker) and (thief) hold at every x outside E".into()
        } else {
            format!("{outside} points outside E fail (joker) or (thief)")
        },
    };
    let pass = property1.pass && property2.pass && property3.pass && property4.pass;
    Ok(VerificationReport {
        k,
        m: p.m,
        l: p.l,
        t: fam.t,
        r: fam.r,
        epsilon: fam.epsilon.clone(),
        means: means.iter().map(|m| m.to_string()).collect(),
        mean_upper_bound: upper,
        distributions,
        independence,
        exceptional_measure: e_measure,
        failure_measure: failures.density(),
        joker_failures: scan.joker_fail.count(),
        thief_failures: scan.thief_fail.count(),
        failures_outside_e: outside,
        witness,
        worst_margin_outside_e: worst_outside.as_ref().map(|w| w.0.clone()),
        worst_margin_at: worst_outside.map(|w| (w.1, w.2 + 1)),
        thief_ranges: scan.thief_ranges,
        property1,
        property2,
        property3,
        property4,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;
    use crate::residue::power_residues;

    #[test]
    fn residue_average_examples() {
        let f = PeriodicFunction::from_values(&[int(1), int(0), int(0), int(0), int(0)]).unwrap();
        let lam = power_residues(5, 2).unwrap();
        assert_eq!(residue_average(&f, &lam, 4).unwrap(), rat(1, 2));
        let c = PeriodicFunction::constant(7, rat(3, 2));
        assert_eq!(residue_average(&c, &power_residues(7, 2).unwrap(), 3).unwrap(), rat(3, 2));
    }

    #[test]
    fn subsequence_average_examples() {
        let sq = SequenceSpec::power(2).unwrap();
        let f = PeriodicFunction::from_values(&[int(1), int(0), int(0), int(0)]).unwrap();
        // 1, 4, 9, 16 mod 4 = 1, 0, 1, 0
        assert_eq!(subsequence_average(&f, sq, 4, 0).unwrap(), rat(1, 2));
        let one = PeriodicFunction::constant(9, int(1));
        assert_eq!(subsequence_average(&one, SequenceSpec::prime(), 17, 5).unwrap(), int(1));
    }

    #[test]
    fn weak_norm_examples() {
        let g = PeriodicFunction::from_values(&[int(0), int(1), int(2)]).unwrap();
        assert_eq!(weak_norm(&g), rat(2, 3));
        let ind = PeriodicFunction::from_values(&[int(1), int(0), int(0), int(1), int(0)]).unwrap();
        assert_eq!(weak_norm(&ind), rat(2, 5));
        assert_eq!(weak_norm(&PeriodicFunction::constant(4, rat(5, 3))), rat(5, 3));
    }

    #[test]
    fn independence_examples() {
        let a = Field::table(PeriodicFunction::from_values(&[int(0), int(1)]).unwrap());
        let b = Field::table(PeriodicFunction::from_values(&[int(0), int(1), int(2)]).unwrap());
        assert!(pairwise_independence_check(&a, &b, 100).unwrap().independent);
        assert!(!pairwise_independence_check(&a, &a, 100).unwrap().independent);
        assert!(pairwise_independence_check(&a, &Field::constant(int(1)), 100).unwrap().independent);
    }
}

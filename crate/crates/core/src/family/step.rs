//! One inductive step Step (K,M,L) → Step (K,M,L+1).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::arith::{checked_mul, gcd, int, is_squarefree, ratstr, Rational};
use crate::bitset::BitSet;
use crate::error::{Error, Result};
use crate::field::{Field, Gate};
use crate::periodic::PeriodicFunction;
use crate::rearrange::{exceptional_e1, RearrangementPlan, SearchOutcome};
use crate::residue::{ResidueSet, SequenceSpec};
use crate::verify::property4_scan;
use crate::verify::sums::{lambda_sum_table, ScaledTable};

use super::partition::{PartitionDiagnostics, PartitionSets};
use super::restrict::{restrict_family, RestrictMode};
use super::{Environment, Family, QMap, StepParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub width: u64,
    pub thick: u64,
    pub phi: u64,
    pub phi_gamma: u64,
    pub psi: u64,
    pub delta: u64,
    pub filler: u64,
    pub r: u64,
    pub s: u64,
    pub t: u64,
    pub diagnostics: PartitionDiagnostics,
}

impl From<&PartitionSets> for PartitionSummary {
    fn from(p: &PartitionSets) -> Self {
        PartitionSummary {
            width: p.width,
            thick: p.thick.len() as u64,
            phi: p.phi.len() as u64,
            phi_gamma: p.phi_gamma.len() as u64,
            psi: p.psi.len() as u64,
            delta: p.delta.len() as u64,
            filler: p.filler,
            r: p.r,
            s: p.s,
            t: p.t,
            diagnostics: p.diagnostics.clone(),
        }
    }
}

/// Size conditions on q, evaluated and logged but not enforced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeConditions {
    #[serde(with = "ratstr")]
    pub s_q: Rational,
    /// 8δ⁻¹ψ(A·T_L)
    #[serde(with = "ratstr")]
    pub spacing_required: Rational,
    pub spacing_ok: bool,
    #[serde(with = "ratstr")]
    pub wine_epsilon: Rational,
    #[serde(with = "ratstr")]
    pub alpha_gamma: Rational,
    pub wine_ok: bool,
    pub earth_count: u64,
    #[serde(with = "ratstr")]
    pub earth_required: Rational,
    pub earth_ok: bool,
}

/// Everything chosen and measured in one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    /// L + 1
    pub level: usize,
    pub p: u64,
    pub q: u64,
    pub t_prev: u64,
    pub t: u64,
    pub r: u64,
    /// S and R' of the (K−1,M,M) ingredient (1 when K = 1).
    pub ingredient_t: u64,
    pub ingredient_r: u64,
    pub plan: RearrangementPlan,
    pub plan_seed: u64,
    pub plan_candidates: u64,
    #[serde(with = "ratstr")]
    pub plan_margin: Rational,
    pub partition: PartitionSummary,
    /// E f_K^{L+1} / E f_K^L against 1 + 4ε_q.
    #[serde(with = "ratstr")]
    pub growl_ratio: Rational,
    #[serde(with = "ratstr")]
    pub growl_bound: Rational,
    pub growl_ok: bool,
    pub fate: bool,
    /// P(E_{L+1}) for the certified E (the failure set of (4)).
    #[serde(with = "ratstr")]
    pub exceptional_measure: Rational,
    /// P(E¹ ∪ E² ∪ Ē') as assembled from its three pieces.
    #[serde(with = "ratstr")]
    pub assembled_exceptional_measure: Rational,
    /// Points failing (4) that the assembled set does not cover.
    pub failures_outside_assembled: u64,
    pub size: SizeConditions,
    /// Candidates tried before this one, with the reason each was dropped.
    pub rejections: Vec<String>,
}

/// True iff for every x with x mod q ∈ Ψ the Λ_Q-average of f is ≥ α.
///
/// For squarefree Q with n | Q (n the period of f), Λ_Q ≅ Λ_n × Λ_{Q/n}
/// and the Λ_Q-average of f equals its Λ_n-average.
pub fn fate_check(
    f: &PeriodicFunction,
    psi: &ResidueSet,
    q_big: u64,
    alpha: &Rational,
    seq: SequenceSpec,
    work: u64,
) -> Result<bool> {
    let n = f.period();
    let q = psi.modulus();
    if n % q != 0 || q_big % n != 0 {
        return Err(Error::arg(format!("need q | period {n} and period | Q = {q_big}")));
    }
    if !is_squarefree(q_big) {
        return Err(Error::arg(format!("Q = {q_big} is not squarefree")));
    }
    if psi.is_empty() {
        return Ok(true);
    }
    let table = ScaledTable::new(f)?;
    let (sums, len) = lambda_sum_table(&table, seq, work)?;
    let scale = table.den as u128 * len as u128;
    let need = crate::verify::ceil_scaled(alpha, scale);
    let mask = psi.mask();
    Ok((0..n).filter(|&x| mask[(x % q) as usize]).all(|x| sums[x as usize] as u128 >= need))
}

fn class_of(q: u64, f: impl Fn(u64) -> u8) -> Vec<u8> {
    (0..q).map(f).collect()
}

/// Distance from r ∈ Z_q to the next point outside Δ, or u64::MAX if Δ = Z_q.
fn next_exit(delta: &ResidueSet) -> Vec<u64> {
    let q = delta.modulus();
    let mask = delta.mask();
    if mask.iter().all(|&b| b) {
        return vec![u64::MAX; q as usize];
    }
    let mut out = vec![0u64; q as usize];
    // walk backwards twice around the circle
    let mut d = u64::MAX;
    for i in (0..2 * q).rev() {
        let r = (i % q) as usize;
        let next = ((i + 1) % q) as usize;
        d = if !mask[next] { 1 } else { d.saturating_add(1) };
        if i < q {
            out[r] = d;
        }
    }
    out
}

/// Assembles Step (K,M,L+1) from Step (K,M,L), an optional (K−1,M,M)
/// ingredient built with A_L = A·T_L·p·q, D_L = D·T_L·p·q, a certified plan
/// and partition sets for q. E_{L+1} is the exact failure set of (4).
#[allow(clippy::too_many_arguments)]
pub fn inductive_step(
    fam: &Family,
    ingredient: Option<&Family>,
    p: u64,
    q: u64,
    plan: &SearchOutcome,
    plan_seed: u64,
    parts: &PartitionSets,
    params: &StepParams,
    env: &mut Environment,
) -> Result<(Family, StepRecord)> {
    let k = fam.k();
    let (t_l, r_l) = (fam.t, fam.r);
    let d = params.d;
    if params.k != k || params.l != fam.params.l + 1 || params.l > params.m {
        return Err(Error::arg(format!(
            "target (K,L) = ({}, {}) does not follow ({k}, {})",
            params.k, params.l, fam.params.l
        )));
    }
    if parts.q != q {
        return Err(Error::arg("partition sets belong to another q"));
    }
    let plan = &plan.plan;
    if plan.t != t_l || plan.p != p {
        return Err(Error::arg("the plan does not match (T_L, p)"));
    }
    for (name, v) in [("T_L", t_l), ("R_L", r_l), ("D", d)] {
        for (c, w) in [("p", p), ("q", q)] {
            if gcd(v, w) != 1 {
                return Err(Error::Infeasible(format!("{c} = {w} shares a factor with {name} = {v}")));
            }
        }
    }
    if gcd(p, q) != 1 {
        return Err(Error::NotCoprime(p, q));
    }
    let (s_ing, r_ing) = match ingredient {
        Some(g) => {
            if g.k() + 1 != k || g.params.l != g.params.m {
                return Err(Error::arg("the ingredient must be a Step (K−1,M,M) family"));
            }
            for v in [t_l, p, q, d] {
                if gcd(g.t, v) != 1 || gcd(g.r, v) != 1 {
                    return Err(Error::Infeasible(format!(
                        "ingredient S = {}, R' = {} share a factor with {v}",
                        g.t, g.r
                    )));
                }
            }
            (g.t, g.r)
        }
        None if k == 1 => (1, 1),
        None => return Err(Error::arg("K > 1 needs a (K−1,M,M) ingredient")),
    };

    let b = checked_mul(t_l, p)?;
    let t_next = checked_mul(checked_mul(s_ing, b)?, q)?;
    let r_next = checked_mul(checked_mul(r_l, r_ing)?, parts.r)?;
    if gcd(r_next, d) != 1 {
        return Err(Error::Infeasible(format!("R_(L+1) = {r_next} shares a factor with D = {d}")));
    }
    let plan_arc = Arc::new(plan.clone());
    let delta = parts.delta.mask();
    let psi = parts.psi.mask();
    let thick = parts.thick.mask();
    let inv = (int(1) - &params.gamma).recip();

    let restricted = match ingredient {
        Some(g) => Some(restrict_family(g, env.seq, q, b, RestrictMode::Strict)?),
        None => None,
    };
    let xi = match &restricted {
        Some(rf) => rf.restriction.xi.mask(),
        None => vec![false; q as usize],
    };

    let mut f = Vec::with_capacity(k);
    let mut x = Vec::with_capacity(k);
    for h in 0..k - 1 {
        let rf = restricted.as_ref().expect("ingredient present for K > 1");
        let g = &rf.base;
        let cls = class_of(q, |r| {
            if delta[r as usize] {
                0
            } else if xi[r as usize] {
                1
            } else {
                2
            }
        });
        let g_bar = Field::scaled(&g.f[h], int(rf.restriction.lambda.len() as u64))?;
        f.push(Field::switch(
            q,
            cls,
            vec![Field::rearranged(&fam.f[h], plan_arc.clone())?, g_bar, Field::constant(int(0))],
            None,
        )?);
        let cls = class_of(q, |r| if delta[r as usize] { 0 } else { 1 });
        x.push(Field::switch(
            q,
            cls,
            vec![Field::rearranged(&fam.x[h], plan_arc.clone())?, g.x[h].clone()],
            None,
        )?);
    }
    let fk_tilde = Field::rearranged(&fam.f[k - 1], plan_arc.clone())?;
    f.push(Field::switch(
        q,
        class_of(q, |r| if delta[r as usize] { 0 } else { 1 }),
        vec![Field::scaled(&fk_tilde, inv.clone())?, Field::constant(int(0))],
        None,
    )?);
    let xk_tilde = Field::rearranged(&fam.x[k - 1], plan_arc.clone())?;
    let n0 = checked_mul(checked_mul(r_ing, r_l)?, t_next)?;
    x.push(Field::switch(
        q,
        class_of(q, |r| {
            if delta[r as usize] {
                0
            } else if psi[r as usize] {
                1
            } else {
                2
            }
        }),
        vec![
            Field::scaled(&xk_tilde, inv)?,
            Field::constant(params.alpha.clone()),
            Field::constant(int(0)),
        ],
        Some(Gate {
            n0,
            radix: parts.r,
            thresholds: vec![parts.s, parts.t, 0],
        }),
    )?);

    let pt = b;
    let q_map = QMap::from_fn(t_next, |z| {
        if delta[(z % q) as usize] {
            fam.q_map.get(plan.source(z % pt))
        } else {
            let qp = match ingredient {
                Some(g) => g.q_map.get(z % s_ing),
                None => 1,
            };
            pt * q * qp
        }
    })?;

    let wine = parts.diagnostics.wine_epsilon.clone();
    let mut epsilon = fam.epsilon.clone().max(wine.clone());
    if let Some(g) = ingredient {
        epsilon = epsilon.max(g.epsilon.clone());
    }
    let mut next = Family {
        params: params.clone(),
        t: t_next,
        r: r_next,
        f,
        x,
        exceptional: BitSet::new(t_next),
        q_map,
        epsilon,
        provenance: fam.provenance.clone(),
    };
    next.validate_structure()?;

    // certified E: the exact failure set of (4)
    let scan = property4_scan(&next, env)?;
    let failures = scan.failures();
    let e_measure = failures.density();

    // E¹ ∪ E² ∪ Ē' as assembled in the construction, for the log
    let guard = env.psi_at(checked_mul(params.a, t_l)?)?;
    let e_prev = ResidueSet::new(t_l, fam.exceptional.ones().collect())?;
    let e1 = exceptional_e1(&e_prev, plan, guard)?.mask();
    let exit = next_exit(&parts.delta);
    let mut psi_of_q = std::collections::BTreeMap::new();
    for &qv in &fam.q_map.values {
        psi_of_q.insert(qv, env.psi_at(checked_mul(params.a, qv)?)?);
    }
    let assembled = BitSet::from_fn(t_next, |z| {
        let zq = (z % q) as usize;
        if e1[(z % pt) as usize] {
            return true;
        }
        if delta[zq] {
            let qv = fam.q_map.get(plan.source(z % pt));
            if exit[zq] <= psi_of_q[&qv] {
                return true;
            }
        }
        match ingredient {
            Some(g) => thick[zq] && g.exceptional.get(z % s_ing),
            None => false,
        }
    });
    let failures_outside_assembled = failures.count_outside(&assembled);

    let caps = env.caps;
    let mean_prev = fam.f[k - 1].mean(caps.enumeration)?;
    let mean_next = next.f[k - 1].mean(caps.enumeration)?;
    let growl_ratio = &mean_next / &mean_prev;
    let growl_bound = int(1) + int(4) * &wine;
    let fk_table = next.f[k - 1].materialize(caps.table)?;
    let fate = fate_check(&fk_table, &parts.psi, checked_mul(pt, q)?, &params.alpha, env.seq, caps.work)?;

    let n_lambda = env.seq.lambda(q)?.len() as u64;
    let s_q = Rational::new(q.into(), n_lambda.into());
    let spacing_required = int(8) / &params.delta * int(guard);
    let alpha_gamma = &params.alpha * &params.gamma;
    let diag = &parts.diagnostics;
    let size = SizeConditions {
        spacing_ok: s_q > spacing_required,
        s_q,
        spacing_required,
        wine_ok: wine <= alpha_gamma,
        wine_epsilon: wine,
        alpha_gamma,
        earth_ok: int(diag.earth_count) >= diag.earth_required,
        earth_count: diag.earth_count,
        earth_required: diag.earth_required.clone(),
    };

    let record = StepRecord {
        k,
        level: params.l,
        p,
        q,
        t_prev: t_l,
        t: t_next,
        r: r_next,
        ingredient_t: s_ing,
        ingredient_r: r_ing,
        plan: plan.clone(),
        plan_seed,
        plan_candidates: 0,
        plan_margin: int(0),
        partition: parts.into(),
        growl_ok: growl_ratio >= int(1) && growl_ratio <= growl_bound,
        growl_ratio,
        growl_bound,
        fate,
        exceptional_measure: e_measure.clone(),
        assembled_exceptional_measure: assembled.density(),
        failures_outside_assembled,
        size,
        rejections: Vec::new(),
    };
    if e_measure > params.delta {
        return Err(Error::Infeasible(format!(
            "p = {p}, q = {q}: (4) fails on a set of measure {e_measure} > δ = {}",
            params.delta
        )));
    }
    next.exceptional = failures;
    Ok((next, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;

    #[test]
    fn next_exit_distances() {
        let d = ResidueSet::new(7, vec![0, 1, 2, 5]).unwrap();
        // exits: 3, 4, 6
        assert_eq!(next_exit(&d), vec![3, 2, 1, 1, 2, 1, 4]);
        assert_eq!(next_exit(&ResidueSet::full(3)), vec![u64::MAX; 3]);
    }

    #[test]
    fn fate_examples() {
        let seq = SequenceSpec::power(2).unwrap();
        let psi = ResidueSet::new(5, vec![1, 3]).unwrap();
        let c = PeriodicFunction::constant(15, rat(1, 32));
        assert!(fate_check(&c, &psi, 15, &rat(1, 32), seq, 1 << 30).unwrap());
        let z = PeriodicFunction::constant(15, int(0));
        assert!(!fate_check(&z, &psi, 15, &rat(1, 32), seq, 1 << 30).unwrap());
        assert!(fate_check(&c, &psi, 14, &rat(1, 32), seq, 1 << 30).is_err());
    }
}

//! Exact checks of (1̄)–(4̄) for a restricted family.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{checked_mul, int, ratstr, ratstr_opt, Rational};
use crate::error::Result;
use crate::family::{Environment, RestrictedFamily};
use crate::field::distribution_of;
use crate::residue::ResidueSet;

use super::sums::{lambda_sum_table, representatives, ScaledTable};
use super::{ceil_scaled, pairwise_independence_check, thief_failures, PropertyResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaCheck {
    pub label: String,
    pub size: u64,
    /// Per h: conditional distribution of X̄_h on Σ equals that of X_h.
    pub matches: Vec<bool>,
    /// Per pair (a, b): the conditional joint law factors.
    pub independent: Vec<(usize, usize, bool)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JokerByQ {
    pub q: u64,
    pub q_bar: u64,
    /// Points (x mod T, x mod q) with x_q in the thickening and x_T ∉ E.
    pub checked: u64,
    pub failures: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThiefCheck {
    pub q: u64,
    pub q_bar: u64,
    /// ψ(Ā·Q̄) = ψ(A·Q)
    pub hi: u64,
    pub status: String,
    pub failures: u64,
    /// Failures at points whose residue mod q lies in the thickening.
    pub failures_on_thick: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestrictionReport {
    pub q: u64,
    pub b: u64,
    pub t_bar: u64,
    #[serde(with = "ratstr")]
    pub a_bar: Rational,
    pub d_bar: u64,
    pub hypothesis_qb_le_a: bool,
    pub means: Vec<String>,
    pub means_bar: Vec<String>,
    pub property1: PropertyResult,
    pub sigmas: Vec<SigmaCheck>,
    pub property2: PropertyResult,
    #[serde(with = "ratstr")]
    pub exceptional_measure: Rational,
    #[serde(with = "ratstr")]
    pub exceptional_bound: Rational,
    pub property3: PropertyResult,
    pub joker: Vec<JokerByQ>,
    /// Failing x ∈ Z_{qT} per unit measure.
    #[serde(with = "ratstr")]
    pub joker_failure_measure: Rational,
    pub witness: Option<(u64, usize)>,
    #[serde(with = "ratstr_opt")]
    pub worst_margin: Option<Rational>,
    pub thief: Vec<ThiefCheck>,
    pub property4: PropertyResult,
    pub pass: bool,
}

/// Σ ⊂ (−Λ_q)^γ used for (2̄): the whole thickening, its first half, and
/// its smallest element.
pub fn sample_sigmas(thick: &ResidueSet) -> Vec<(String, ResidueSet)> {
    let q = thick.modulus();
    let e = thick.elements();
    let half = ResidueSet::new(q, e[..(e.len() + 1) / 2].to_vec()).expect("subset");
    let single = ResidueSet::new(q, e[..1.min(e.len())].to_vec()).expect("subset");
    vec![
        ("thickening".into(), thick.clone()),
        ("first half".into(), half),
        ("smallest point".into(), single),
    ]
}

pub fn verify_restricted(rf: &RestrictedFamily, env: &mut Environment) -> Result<RestrictionReport> {
    let fam = &rf.base;
    let res = &rf.restriction;
    let caps = env.caps;
    let (q, t, k) = (res.q, fam.t, rf.k());
    let gamma = &fam.params.gamma;

    // (1̄)
    let means: Vec<Rational> = fam.f.iter().map(|f| f.mean(caps.enumeration)).collect::<Result<_>>()?;
    let means_bar: Vec<Rational> = rf.f.iter().map(|f| f.mean(caps.enumeration)).collect::<Result<_>>()?;
    let bad1 = (0..k).find(|&h| means_bar[h] > gamma * &means[h]);
    let property1 = PropertyResult {
        pass: bad1.is_none(),
        detail: match bad1 {
            None => "E f̄_h ≤ γ·E f_h for all h".into(),
            Some(h) => format!("E f̄_{} = {} > γ·{}", h + 1, means_bar[h], means[h]),
        },
    };

    // (2̄)
    let mut sigmas = Vec::new();
    for (label, sigma) in sample_sigmas(&res.thick) {
        let mut matches = Vec::new();
        for h in 0..k {
            let x = &fam.x[h];
            let cond = rf.x_conditional_histogram(h, &sigma, caps.enumeration)?;
            matches.push(distribution_of(x.palette(), &cond) == x.distribution(caps.enumeration)?);
        }
        // on a q-periodic Σ the pair (X̄_a, X̄_b) is |Σ| copies of (X_a, X_b)
        let mut independent = Vec::new();
        for a in 0..k {
            for b in a + 1..k {
                let c = pairwise_independence_check(&fam.x[a], &fam.x[b], caps.enumeration)?;
                independent.push((a + 1, b + 1, c.independent));
            }
        }
        sigmas.push(SigmaCheck {
            label,
            size: sigma.len() as u64,
            matches,
            independent,
        });
    }
    let bad2 = sigmas
        .iter()
        .find(|s| s.matches.iter().any(|m| !m) || s.independent.iter().any(|c| !c.2));
    let property2 = PropertyResult {
        pass: bad2.is_none(),
        detail: match bad2 {
            None => format!("conditional laws on {} sets Σ match and factor", sigmas.len()),
            Some(s) => format!("conditional law fails on Σ = {}", s.label),
        },
    };

    // (3̄)
    let p_thick = res.thick.density();
    let exceptional_measure = fam.exceptional.density() * &p_thick;
    let exceptional_bound = &fam.params.delta * &p_thick;
    let property3 = PropertyResult {
        pass: exceptional_measure <= exceptional_bound,
        detail: format!("P(Ē) = {exceptional_measure} against δ·P((−Λ_q)^γ) = {exceptional_bound}"),
    };

    // (4̄) joker
    let tables = (0..k)
        .map(|h| ScaledTable::new(&fam.f_table(h, caps.table)?))
        .collect::<Result<Vec<_>>>()?;
    let lifts_cap = (caps.work / t.max(1)).max(1);
    let xmax: Vec<Vec<u16>> = fam
        .x
        .iter()
        .map(|xf| (0..t).map(|x| xf.max_over_lifts(x, t, lifts_cap)).collect::<Result<Vec<u16>>>())
        .collect::<Result<_>>()?;
    let lam_q = res.lambda.len() as u64;
    let hits = res.xi_hits();
    let thick: Vec<u64> = res.thick.elements().to_vec();
    let xi = res.xi.mask();
    // per x_q ∈ thick: the residues v ∈ Λ_q with x_q + v ∈ Ξ
    let hit_lists: Vec<Vec<u64>> = thick
        .iter()
        .map(|&xq| {
            res.lambda
                .elements()
                .iter()
                .copied()
                .filter(|&v| xi[((xq + v) % q) as usize])
                .collect()
        })
        .collect();
    let qb = checked_mul(q, res.b)?;
    let mut joker = Vec::new();
    let mut total_fail = 0u64;
    let mut worst: Option<(f64, u64, u64, usize)> = None;
    let mut exact_at: BTreeMap<(u64, u64, usize), Rational> = BTreeMap::new();

    let (tables, hits, thick_ref, hit_lists) = (&tables, &hits, &thick, &hit_lists);
    for (qi, &qv) in fam.q_map.values.iter().enumerate() {
        let xs: Vec<u64> = (0..t)
            .filter(|&x| fam.q_map.index[x as usize] as usize == qi && !fam.exceptional.get(x))
            .collect();
        let q_bar = checked_mul(qb, qv)?;
        // per (x_T, x_q): a scaled sum with avg = sum/scales[h]
        let (eval, scales): (Box<dyn Fn(usize, u64, usize) -> u128 + Sync>, Vec<u128>) = if qv == t {
            let full: Vec<(Vec<u64>, u64)> = tables
                .iter()
                .map(|tb| lambda_sum_table(tb, env.seq, caps.work))
                .collect::<Result<_>>()?;
            let scales = (0..k).map(|h| tables[h].den as u128 * full[h].1 as u128).collect();
            let eval: Box<dyn Fn(usize, u64, usize) -> u128 + Sync> = Box::new(move |h, x, ti| {
                hits[thick_ref[ti] as usize] as u128 * full[h].0[x as usize] as u128
            });
            (eval, scales)
        } else {
            let lam = env.seq.lambda(q_bar)?;
            let len = lam.len() as u64;
            let mut buckets: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
            for a in representatives(&lam) {
                buckets.entry(a % q).or_default().push(a);
            }
            let scales = (0..k).map(|h| tables[h].den as u128 * len as u128).collect();
            // per x_q: the representatives a with x_q + a mod q ∈ Ξ
            let shifted: Vec<Vec<u64>> = hit_lists
                .iter()
                .map(|vs| vs.iter().filter_map(|v| buckets.get(v)).flatten().copied().collect())
                .collect();
            let eval: Box<dyn Fn(usize, u64, usize) -> u128 + Sync> = Box::new(move |h, x, ti| {
                let tb = &tables[h];
                let s: u64 = shifted[ti].iter().map(|&a| tb.values[((x + a) % t) as usize]).sum();
                lam_q as u128 * s as u128
            });
            (eval, scales)
        };
        let needs: Vec<Vec<u128>> = (0..k)
            .map(|h| fam.x[h].palette().iter().map(|v| ceil_scaled(v, scales[h])).collect())
            .collect();
        let per_x: Vec<(u64, Option<(f64, u64, usize, usize)>)> = xs
            .par_iter()
            .map(|&x| {
                let mut fails = 0u64;
                let mut w: Option<(f64, u64, usize, usize)> = None;
                for ti in 0..thick.len() {
                    let mut failed = false;
                    for h in 0..k {
                        let s = eval(h, x, ti);
                        let need = needs[h][xmax[h][x as usize] as usize];
                        failed |= s < need;
                        let m = (s as f64 - need as f64) / scales[h] as f64;
                        if w.map_or(true, |c| m < c.0) {
                            w = Some((m, x, ti, h));
                        }
                    }
                    fails += failed as u64;
                }
                (fails, w)
            })
            .collect();
        let failures: u64 = per_x.iter().map(|r| r.0).sum();
        total_fail += failures;
        joker.push(JokerByQ {
            q: qv,
            q_bar,
            checked: xs.len() as u64 * thick.len() as u64,
            failures,
        });
        if let Some((m, x, ti, h)) = per_x
            .iter()
            .filter_map(|r| r.1)
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        {
            let s = eval(h, x, ti);
            let xv = &fam.x[h].palette()[xmax[h][x as usize] as usize];
            let exact = Rational::new(s.into(), scales[h].into()) - xv;
            let z = crate::arith::crt_pair(thick[ti], q, x, t)?;
            exact_at.insert((z, qv, h), exact);
            if worst.map_or(true, |c| m < c.0) {
                worst = Some((m, z, qv, h));
            }
        }
    }
    let (witness, worst_margin) = match worst {
        Some((_, z, qv, h)) => {
            let m = exact_at[&(z, qv, h)].clone();
            (if m < int(0) { Some((z, h + 1)) } else { None }, Some(m))
        }
        None => (None, None),
    };

    // (4̄) thief with period Q̄ over Q̄ ≤ y ≤ ψ(Ā·Q̄) = ψ(A·Q)
    let qt = checked_mul(q, t)?;
    let mut thief = Vec::new();
    for &qv in &fam.q_map.values {
        let q_bar = checked_mul(qb, qv)?;
        let hi = env.psi_at(checked_mul(fam.params.a, qv)?)?;
        let mut c = ThiefCheck {
            q: qv,
            q_bar,
            hi,
            status: String::new(),
            failures: 0,
            failures_on_thick: 0,
        };
        if hi < q_bar {
            c.status = "empty range".into();
        } else if q_bar % qt == 0 {
            c.status = "periodic".into();
        } else if qt > caps.table {
            c.status = format!("unchecked: Z_{{qT}} has {qt} points, above the table cap");
        } else {
            let bar_tables = rf
                .f
                .iter()
                .map(|f| ScaledTable::new(&f.materialize(caps.table)?.lift(qt)?))
                .collect::<Result<Vec<_>>>()?;
            let fails = thief_failures(&bar_tables, qt, q_bar % qt, hi - (q_bar - q_bar % qt), |x| {
                fam.q_map.get(x % t) == qv && !rf.in_exceptional(x)
            });
            c.failures = fails.len() as u64;
            c.failures_on_thick = fails.iter().filter(|&&x| res.thick.contains(x % q)).count() as u64;
            c.status = "checked".into();
        }
        thief.push(c);
    }
    let thief_ok = thief
        .iter()
        .all(|c| c.failures == 0 && !c.status.starts_with("unchecked"));
    let property4 = PropertyResult {
        pass: total_fail == 0 && thief_ok,
        detail: if total_fail == 0 && thief_ok {
            "(joker) and (thief) hold off Ē".into()
        } else {
            format!(
                "{total_fail} points of Z_qT fail the average bound; thief {}",
                if thief_ok { "holds" } else { "fails or is unchecked" }
            )
        },
    };
    let pass = property1.pass && property2.pass && property3.pass && property4.pass;
    Ok(RestrictionReport {
        q,
        b: res.b,
        t_bar: rf.t,
        a_bar: rf.a_bar.clone(),
        d_bar: rf.d_bar,
        hypothesis_qb_le_a: rf.hypothesis_qb_le_a,
        means: means.iter().map(|m| m.to_string()).collect(),
        means_bar: means_bar.iter().map(|m| m.to_string()).collect(),
        property1,
        sigmas,
        property2,
        exceptional_measure,
        exceptional_bound,
        property3,
        joker,
        joker_failure_measure: Rational::new(total_fail.into(), qt.into()),
        witness,
        worst_margin,
        thief,
        property4,
        pass,
    })
}

//! The double induction on K and L with candidate search over the pools.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::arith::{checked_mul, gcd, Rational};
use crate::error::{Error, Result};
use crate::rearrange::find_plan_for_function;

use super::partition::{select_partition_sets, PartitionSets};
use super::step::inductive_step;
use super::{Environment, Family, Provenance, StepParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub seed: u64,
    /// Candidates per rearrangement search.
    pub plan_budget: u64,
    /// Largest admissible T.
    pub t_cap: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            seed: 1,
            plan_budget: 1000,
            t_cap: 10_000_000,
        }
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn step_seed(seed: u64, k: usize, l: usize, p: u64, q: u64) -> u64 {
    [k as u64, l as u64, p, q].iter().fold(mix(seed), |acc, &v| mix(acc ^ v))
}

/// Builds Step (K,M,L) for `params` by the induction of the construction:
/// Step (1,M,0) is trivial, Step (K,M,0) extends Step (K−1,M,M), and
/// Step (K,M,L+1) comes from Step (K,M,L) built with δ/4.
pub fn build_family(params: &StepParams, env: &mut Environment, opts: &BuildOptions) -> Result<Family> {
    params.validate()?;
    let mut fam = build_at(params, params.k, params.l, params.a, params.delta.clone(), params.d, env, opts)?;
    fam.provenance.sequence = Some(env.seq);
    fam.provenance.p_pool = env.catalog.p_pool.clone();
    fam.provenance.q_pool = env.catalog.q_pool.clone();
    fam.provenance.seed = opts.seed;
    Ok(fam)
}

#[allow(clippy::too_many_arguments)]
fn build_at(
    base: &StepParams,
    k: usize,
    l: usize,
    a: u64,
    delta: Rational,
    d: u64,
    env: &mut Environment,
    opts: &BuildOptions,
) -> Result<Family> {
    let params = base.at(k, l, a, delta.clone(), d);
    if l == 0 {
        if k == 1 {
            return Family::trivial(&params);
        }
        let mut fam = build_at(base, k - 1, base.m, a, delta, d, env, opts)?.extend()?;
        fam.params = params;
        return Ok(fam);
    }
    let prev = build_at(base, k, l - 1, a, &delta / Rational::from_integer(4.into()), d, env, opts)?;
    let (t_l, r_l) = (prev.t, prev.r);
    let avoid = checked_mul(checked_mul(t_l, r_l)?, d)?;
    let fk = prev.f_table(k - 1, env.caps.table)?;
    let mut rejections: Vec<String> = Vec::new();
    let mut partitions: BTreeMap<u64, Result<PartitionSets>> = BTreeMap::new();
    let q_pool = env.catalog.q_pool.clone();
    let p_pool = env.catalog.p_pool.clone();

    for &q in &q_pool {
        if gcd(q, avoid) != 1 {
            rejections.push(format!("q = {q}: shares a factor with T_L·R_L·D"));
            continue;
        }
        let parts = match partitions.entry(q).or_insert_with(|| {
            env.seq
                .lambda(q)
                .and_then(|lam| select_partition_sets(&lam, &params))
        }) {
            Ok(p) => p.clone(),
            Err(e) => {
                rejections.push(format!("q = {q}: {e}"));
                continue;
            }
        };
        for &p in &p_pool {
            if gcd(p, avoid) != 1 || gcd(p, q) != 1 {
                rejections.push(format!("p = {p}, q = {q}: p shares a factor with T_L·R_L·D·q"));
                continue;
            }
            let pt = checked_mul(p, t_l)?;
            let tq = checked_mul(pt, q)?;
            if tq > opts.t_cap {
                rejections.push(format!("p = {p}, q = {q}: T_L·p·q = {tq} exceeds the cap {}", opts.t_cap));
                continue;
            }
            let seed = step_seed(opts.seed, k, l, p, q);
            let lam = env.seq.lambda(pt)?;
            let plan = match find_plan_for_function(&fk, p, &lam, seed, opts.plan_budget) {
                Ok(o) => o,
                Err(e) => {
                    rejections.push(format!("p = {p}, q = {q}: {e}"));
                    continue;
                }
            };
            let ingredient = if k > 1 {
                let a_l = checked_mul(a, tq)?;
                let d_l = checked_mul(d, tq)?;
                let quarter = &delta / Rational::from_integer(4.into());
                match build_at(base, k - 1, base.m, a_l, quarter, d_l, env, opts) {
                    Ok(g) => {
                        let t_next = g.t.checked_mul(tq);
                        if t_next.map_or(true, |t| t > opts.t_cap) {
                            rejections.push(format!(
                                "p = {p}, q = {q}: S·T_L·p·q with S = {} exceeds the cap {}",
                                g.t, opts.t_cap
                            ));
                            continue;
                        }
                        Some(g)
                    }
                    Err(e) => {
                        rejections.push(format!("p = {p}, q = {q}: ingredient: {e}"));
                        continue;
                    }
                }
            } else {
                None
            };
            match inductive_step(&prev, ingredient.as_ref(), p, q, &plan, seed, &parts, &params, env) {
                Ok((mut next, mut record)) => {
                    record.plan_candidates = plan.candidates_tried;
                    record.plan_margin = plan.worst_margin.clone();
                    record.rejections = rejections;
                    let mut steps = prev.provenance.steps.clone();
                    if let Some(g) = &ingredient {
                        steps.extend(g.provenance.steps.iter().cloned());
                    }
                    steps.push(record);
                    next.provenance = Provenance {
                        steps,
                        ..Provenance::default()
                    };
                    return Ok(next);
                }
                Err(e) => rejections.push(format!("p = {p}, q = {q}: {e}")),
            }
        }
    }
    let shown: Vec<&str> = rejections.iter().rev().take(6).map(|s| s.as_str()).collect();
    let cap_hit = rejections.iter().any(|r| r.contains("exceeds the cap"));
    let msg = format!(
        "Step ({k},{},{l}) from T_L = {t_l}: no admissible (p, q) in the pools; last rejections: {}",
        base.m,
        shown.join("; ")
    );
    if cap_hit {
        Err(Error::CapExceeded(msg))
    } else {
        Err(Error::Infeasible(msg))
    }
}

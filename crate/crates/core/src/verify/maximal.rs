//! The weak (1,1) demonstrator: sup_N A_N f against ‖f‖_1 on a built family.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{int, lcm, ratstr, to_f64, Rational};
use crate::error::{Error, Result};
use crate::family::{Environment, Family};
use crate::residue::TermsMod;

use super::sums::{direct_sum, lambda_sum_table, representatives, ScaledTable};
use super::weak_norm_of_histogram;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalOptions {
    /// Points sampled from Z_{RT} when RT exceeds `enumeration_cap`.
    pub sample_size: u64,
    /// sup_N A_N f is taken over N ∈ S with N ≤ n_cap, plus N = ψ(Q_x).
    pub n_cap: u64,
    pub seed: u64,
    pub enumeration_cap: u64,
}

impl Default for MaximalOptions {
    fn default() -> Self {
        MaximalOptions {
            sample_size: 10_000,
            n_cap: 1024,
            seed: 1,
            enumeration_cap: 100_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub x: u64,
    pub q: u64,
    pub n: u64,
    #[serde(with = "ratstr")]
    pub a_n: Rational,
    /// (1/|Λ_Q|) Σ_{a∈Λ_Q} f(x + a)
    #[serde(with = "ratstr")]
    pub residue_average: Rational,
    #[serde(with = "ratstr")]
    pub x_value: Rational,
    #[serde(with = "ratstr")]
    pub sup: Rational,
    pub first_ok: bool,
    pub second_ok: bool,
    /// The residue average vanishes, so the strict first inequality is void.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QRow {
    pub q: u64,
    pub n: u64,
    pub points: u64,
    pub first_failures: u64,
    pub second_failures: u64,
    pub degenerate: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalReport {
    pub k: usize,
    pub t: u64,
    pub r: u64,
    pub full_enumeration: bool,
    pub sampled: u64,
    /// Sampled points in E, skipped by (worth).
    pub in_exceptional: u64,
    pub n_cap: u64,
    #[serde(with = "ratstr")]
    pub mean_f: Rational,
    #[serde(with = "ratstr")]
    pub mean_x: Rational,
    #[serde(with = "ratstr")]
    pub weak_norm: Rational,
    #[serde(with = "ratstr")]
    pub ratio: Rational,
    pub ratio_f64: f64,
    /// Weak norm of β·X over the same points outside E.
    #[serde(with = "ratstr")]
    pub beta_x_weak_norm: Rational,
    pub violations: u64,
    pub degenerate: u64,
    pub per_q: Vec<QRow>,
    pub chebyshev_bound: f64,
    /// P(ΣX_h/K ≤ Cα²/2) over the sample.
    #[serde(with = "ratstr")]
    pub empirical_tail: Rational,
    pub points: Vec<SamplePoint>,
}

impl MaximalReport {
    pub fn pass(&self) -> bool {
        self.violations == 0
    }

    /// x, Q_x, N, A_N f(x), residue average, X(x), sup, worth.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,q,n,a_n,residue_average,x_value,sup,worth\n");
        for p in &self.points {
            let worth = if p.degenerate {
                "degenerate"
            } else if p.first_ok && p.second_ok {
                "pass"
            } else {
                "fail"
            };
            writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                p.x, p.q, p.n, p.a_n, p.residue_average, p.x_value, p.sup, worth
            )
            .unwrap();
        }
        s
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Σ_h f_h as one integer table over Z_T.
fn summed_table(fam: &Family, cap: u64) -> Result<ScaledTable> {
    let tables = (0..fam.k())
        .map(|h| ScaledTable::new(&fam.f_table(h, cap)?))
        .collect::<Result<Vec<_>>>()?;
    let mut den = 1u64;
    for tb in &tables {
        den = lcm(den, tb.den)?;
    }
    let values = (0..fam.t as usize)
        .map(|x| tables.iter().map(|tb| tb.values[x] * (den / tb.den)).sum())
        .collect();
    Ok(ScaledTable { values, den })
}

/// Sparse histogram of n_k mod T over k ≤ N.
fn term_counts(env: &Environment, t: u64, n: u64) -> Vec<(u64, u64)> {
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for r in TermsMod::new(env.seq, t).take(n as usize) {
        *counts.entry(r).or_insert(0) += 1;
    }
    counts.into_iter().collect()
}

/// For each sampled x ∉ E checks A_N f(x) > β·R(x) ≥ β·X(x) at N = ψ(Q_x),
/// with f = Σ f_h, X = Σ X_h and R the Λ_{Q_x}-average of f.
pub fn demo_maximal(fam: &Family, env: &mut Environment, opts: &MaximalOptions) -> Result<MaximalReport> {
    fam.validate_structure()?;
    let caps = env.caps;
    let t = fam.t;
    let k = fam.k();
    let params = &fam.params;
    let beta = env.psi.beta.clone();
    let rt = (fam.r as u128) * (t as u128);
    let full = rt <= opts.enumeration_cap as u128;
    let xs: Vec<u64> = if full {
        (0..rt as u64).collect()
    } else {
        let n = opts.sample_size.max(1);
        let stride = (rt / n as u128) as u64;
        let offset = mix(opts.seed) % stride.max(1);
        (0..n).map(|i| offset + i * stride).collect()
    };
    let f = summed_table(fam, caps.table)?;

    // N_x = ψ(Q_x) and the Λ_Q sums for each Q in use
    let mut n_of_q = BTreeMap::new();
    for &q in &fam.q_map.values {
        n_of_q.insert(q, env.psi_at(q)?);
    }
    let mut counts = BTreeMap::new();
    for &n in n_of_q.values() {
        if n.saturating_mul(xs.len() as u64) > caps.work.saturating_mul(8) {
            return Err(Error::CapExceeded(format!("A_N for N = {n} at {} points exceeds the work cap", xs.len())));
        }
        counts.entry(n).or_insert_with(|| term_counts(env, t, n));
    }
    let mut residue_sums: BTreeMap<u64, (Option<Vec<u64>>, Vec<u64>, u64)> = BTreeMap::new();
    for &q in &fam.q_map.values {
        if q == t {
            let (s, len) = lambda_sum_table(&f, env.seq, caps.work)?;
            residue_sums.insert(q, (Some(s), Vec::new(), len));
        } else {
            let lam = env.seq.lambda(q)?;
            let len = lam.len() as u64;
            residue_sums.insert(q, (None, representatives(&lam), len));
        }
    }
    let prefix_terms: Vec<u64> = TermsMod::new(env.seq, t).take(opts.n_cap as usize).collect();
    let rule = params.subset;

    let points: Vec<Option<SamplePoint>> = xs
        .par_iter()
        .map(|&x| {
            let xt = x % t;
            if fam.exceptional.get(xt) {
                return None;
            }
            let q = fam.q_map.get(xt);
            let n = n_of_q[&q];
            let s_n: u128 = counts[&n]
                .iter()
                .map(|&(r, c)| c as u128 * f.values[((xt + r) % t) as usize] as u128)
                .sum();
            let a_n = Rational::new(s_n.into(), (n as u128 * f.den as u128).into());
            let (full_s, reps, len) = &residue_sums[&q];
            let rs = match full_s {
                Some(s) => s[xt as usize],
                None => direct_sum(&f, xt, reps),
            };
            let residue_average = Rational::new(rs.into(), (*len as u128 * f.den as u128).into());
            let x_value: Rational = fam.x.iter().map(|xf| xf.value(x).clone()).sum();
            let mut sup = a_n.clone();
            let mut acc = 0u128;
            let mut best: Option<(u128, u64)> = None;
            for (i, &r) in prefix_terms.iter().enumerate() {
                acc += f.values[((xt + r) % t) as usize] as u128;
                let nn = i as u64 + 1;
                if rule.contains(nn) && best.map_or(true, |(bs, bn)| acc * bn as u128 > bs * nn as u128) {
                    best = Some((acc, nn));
                }
            }
            if let Some((bs, bn)) = best {
                let v = Rational::new(bs.into(), (bn as u128 * f.den as u128).into());
                if v > sup {
                    sup = v;
                }
            }
            let degenerate = rs == 0;
            let first_ok = degenerate || a_n > &beta * &residue_average;
            let second_ok = residue_average >= x_value;
            Some(SamplePoint {
                x,
                q,
                n,
                a_n,
                residue_average,
                x_value,
                sup,
                first_ok,
                second_ok,
                degenerate,
            })
        })
        .collect();
    let in_exceptional = points.iter().filter(|p| p.is_none()).count() as u64;
    let points: Vec<SamplePoint> = points.into_iter().flatten().collect();

    let mut per_q: BTreeMap<u64, QRow> = BTreeMap::new();
    for p in &points {
        let row = per_q.entry(p.q).or_insert(QRow {
            q: p.q,
            n: p.n,
            points: 0,
            first_failures: 0,
            second_failures: 0,
            degenerate: 0,
        });
        row.points += 1;
        row.first_failures += !p.first_ok as u64;
        row.second_failures += !p.second_ok as u64;
        row.degenerate += p.degenerate as u64;
    }
    let violations = points.iter().filter(|p| !p.first_ok || !p.second_ok).count() as u64;
    let degenerate = points.iter().filter(|p| p.degenerate).count() as u64;

    let weak = |vals: Vec<Rational>| {
        let mut hist: BTreeMap<Rational, u128> = BTreeMap::new();
        for v in vals {
            *hist.entry(v).or_insert(0) += 1;
        }
        let (pal, h): (Vec<Rational>, Vec<u128>) = hist.into_iter().unzip();
        weak_norm_of_histogram(&pal, &h)
    };
    let weak_norm = weak(points.iter().map(|p| p.sup.clone()).collect());
    let beta_x_weak_norm = weak(points.iter().map(|p| &beta * &p.x_value).collect());
    let mean_f: Rational = fam.f.iter().map(|f| f.mean(caps.enumeration)).sum::<Result<Rational>>()?;
    let mean_x: Rational = fam.x.iter().map(|x| x.mean(caps.enumeration)).sum::<Result<Rational>>()?;
    let ratio = &weak_norm / &mean_f;

    let c = to_f64(&params.c);
    let a = to_f64(&params.alpha);
    let chebyshev_bound = 8.0 * (2.0 * c).exp() / (a * a * c * c * k as f64);
    let threshold = &params.c * &params.alpha * &params.alpha / int(2);
    let all_x: Vec<Rational> = xs
        .iter()
        .map(|&x| fam.x.iter().map(|xf| xf.value(x).clone()).sum::<Rational>() / int(k as u64))
        .collect();
    let tail = all_x.iter().filter(|v| **v <= threshold).count() as u64;
    let empirical_tail = Rational::new(tail.into(), (xs.len() as u64).max(1).into());

    Ok(MaximalReport {
        k,
        t,
        r: fam.r,
        full_enumeration: full,
        sampled: xs.len() as u64,
        in_exceptional,
        n_cap: opts.n_cap,
        mean_f,
        mean_x,
        ratio_f64: to_f64(&ratio),
        weak_norm,
        ratio,
        beta_x_weak_norm,
        violations,
        degenerate,
        per_q: per_q.into_values().collect(),
        chebyshev_bound,
        empirical_tail,
        points,
    })
}

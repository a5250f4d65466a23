//! The sets Φ_q, Ψ_q, Δ_q ⊂ Z_q and the gate integers r, s, t.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::arith::{gcd, int, lcm, ratstr, Rational};
use crate::error::{Error, Result};
use crate::residue::{negate, shift_union, thicken_width, ResidueSet};
use crate::spacing::{condition_earth_count, condition_wine_epsilon};

use super::StepParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSets {
    pub q: u64,
    /// m with (0, γs_q) ∩ Z = {1, …, m}.
    pub width: u64,
    /// (−Λ_q)^γ
    pub thick: ResidueSet,
    pub phi: ResidueSet,
    pub phi_gamma: ResidueSet,
    pub psi: ResidueSet,
    pub delta: ResidueSet,
    /// Points of the thickening moved into Δ_q to fix gcd(|Δ_q|, D).
    pub filler: u64,
    pub r: u64,
    pub s: u64,
    pub t: u64,
    #[serde(with = "ratstr")]
    pub s_over_r: Rational,
    #[serde(with = "ratstr")]
    pub t_over_r: Rational,
    pub diagnostics: PartitionDiagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionDiagnostics {
    /// |Φ_q| ≥ 3α|Λ_q|
    pub phi_large: bool,
    /// |Φ_q ∩ Δ_q|; nonzero exactly when −Λ_q leaves its own thickening.
    pub phi_in_delta: u64,
    /// min over x ∈ Ψ_q of |{v ∈ Λ_q : x + v ∈ Δ_q}|
    pub falsely_min: u64,
    #[serde(with = "ratstr")]
    pub falsely_required: Rational,
    #[serde(with = "ratstr")]
    pub wine_epsilon: Rational,
    pub earth_count: u64,
    #[serde(with = "ratstr")]
    pub earth_required: Rational,
}

impl PartitionSets {
    /// |{v ∈ Λ_q : x + v ∈ Δ_q}| for every x ∈ Z_q.
    pub fn delta_hits(&self, lambda: &ResidueSet) -> Vec<u64> {
        let q = self.q;
        (0..q)
            .map(|x| {
                lambda
                    .elements()
                    .iter()
                    .filter(|&&v| self.delta.contains((x + v) % q))
                    .count() as u64
            })
            .collect()
    }

    pub fn delta_mask(&self) -> Vec<bool> {
        self.delta.mask()
    }

    pub fn psi_mask(&self) -> Vec<bool> {
        self.psi.mask()
    }
}

/// Chooses Φ_q, Ψ_q, Δ_q and (r, s, t). Ties are broken smallest residue first.
pub fn select_partition_sets(lambda: &ResidueSet, params: &StepParams) -> Result<PartitionSets> {
    let q = lambda.modulus();
    let n = lambda.len() as u64;
    let (gamma, alpha, delta, d) = (&params.gamma, &params.alpha, &params.delta, params.d);
    let m = thicken_width(lambda, gamma)?;
    if m == 0 {
        return Err(Error::Infeasible(format!(
            "q = {q}: γ·s_q ≤ 1, so the thickening (−Λ_q)^γ is empty"
        )));
    }
    let neg = negate(lambda);
    let thick = shift_union(&neg, m);
    let mut window = vec![false; q as usize];
    for &u in neg.elements() {
        for j in 0..=2 * m {
            window[((u + q * (m + 1) + j - m) % q) as usize] = true;
        }
    }
    // Φ_q: u ∈ −Λ_q with at least 2α|Λ_q| of u + Λ_q outside −Λ_q + [−m, m]
    let need_phi = int(2) * alpha * int(n);
    let phi_elems: Vec<u64> = neg
        .elements()
        .iter()
        .copied()
        .filter(|&u| {
            let outside = lambda
                .elements()
                .iter()
                .filter(|&&v| !window[((u + v) % q) as usize])
                .count() as u64;
            int(outside) >= need_phi
        })
        .collect();
    let phi = ResidueSet::new(q, phi_elems)?;
    let phi_gamma = shift_union(&phi, m);

    // Ψ_q ⊂ Φ_q^γ with P(Ψ_q) ≥ αγ, trimmed until gcd(|Ψ_q|, D) = 1
    let need_psi = alpha * gamma * int(q);
    if int(phi_gamma.len() as u64) < need_psi {
        return Err(Error::Infeasible(format!(
            "q = {q}: P(Φ_q^γ) = {}/{q} < αγ, so no Ψ_q ⊂ Φ_q^γ has measure αγ",
            phi_gamma.len()
        )));
    }
    let mut psi_elems: Vec<u64> = phi_gamma.elements().to_vec();
    let mut trimmed = 0usize;
    while gcd(psi_elems.len() as u64 - trimmed as u64, d) != 1 {
        trimmed += 1;
        if int((psi_elems.len() - trimmed) as u64) < need_psi || trimmed == psi_elems.len() {
            return Err(Error::Infeasible(format!(
                "q = {q}: cannot make gcd(|Ψ_q|, D) = 1 while keeping P(Ψ_q) ≥ αγ"
            )));
        }
    }
    psi_elems.drain(..trimmed);
    let psi = ResidueSet::new(q, psi_elems)?;

    // Δ_q = Z_q \ (−Λ_q)^γ plus a filler avoiding Φ_q ∪ Φ_q^γ ∪ Ψ_q
    let mut delta_mask: Vec<bool> = thick.mask().into_iter().map(|b| !b).collect();
    let budget = delta * int(q) / int(8);
    let candidates: Vec<u64> = thick
        .elements()
        .iter()
        .copied()
        .filter(|&x| !phi.contains(x) && !phi_gamma.contains(x) && !psi.contains(x))
        .collect();
    let mut size = q - thick.len() as u64;
    let mut filler = 0u64;
    while gcd(size, d) != 1 {
        if int(filler + 1) >= budget || filler as usize >= candidates.len() {
            return Err(Error::Infeasible(format!(
                "q = {q}: cannot make gcd(|Δ_q|, D) = 1 within the δ/8 budget"
            )));
        }
        delta_mask[candidates[filler as usize] as usize] = true;
        filler += 1;
        size += 1;
    }
    let delta_set = ResidueSet::from_mask(q, &delta_mask);
    if delta_set.elements().iter().any(|&x| psi.contains(x)) {
        return Err(Error::Structure(format!("q = {q}: Ψ_q meets Δ_q")));
    }

    // (1−γ)/P(Δ_q) = s/r and αγ/P(Ψ_q) = t/r
    let s_ratio = (int(1) - gamma) * int(q) / int(size);
    let t_ratio = alpha * gamma * int(q) / int(psi.len() as u64);
    let den = |r: &Rational| -> Result<u64> {
        u64::try_from(r.denom().clone()).map_err(|_| Error::CapExceeded("gate denominator overflows u64".into()))
    };
    let r = lcm(den(&s_ratio)?, den(&t_ratio)?)?;
    if gcd(r, d) != 1 {
        return Err(Error::Infeasible(format!("q = {q}: gcd(r, D) = gcd({r}, {d}) ≠ 1")));
    }
    let as_int = |x: Rational| -> Result<u64> {
        u64::try_from(x.to_integer()).map_err(|_| Error::CapExceeded("gate numerator overflows u64".into()))
    };
    let s = as_int(&s_ratio * int(r))?;
    let t = as_int(&t_ratio * int(r))?;
    if s > r || t > r {
        return Err(Error::Infeasible(format!("q = {q}: s/r or t/r exceeds 1")));
    }

    let mut out = PartitionSets {
        q,
        width: m,
        thick,
        phi: phi.clone(),
        phi_gamma,
        psi,
        delta: delta_set,
        filler,
        r,
        s,
        t,
        s_over_r: s_ratio,
        t_over_r: t_ratio,
        diagnostics: PartitionDiagnostics {
            phi_large: int(phi.len() as u64) >= int(3) * alpha * int(n),
            phi_in_delta: 0,
            falsely_min: 0,
            falsely_required: need_phi.clone(),
            wine_epsilon: condition_wine_epsilon(lambda, gamma)?,
            earth_count: condition_earth_count(lambda, gamma)?,
            earth_required: int(5) * alpha * int(n * n),
        },
    };
    out.diagnostics.phi_in_delta = phi.elements().iter().filter(|&&u| out.delta.contains(u)).count() as u64;
    let hits = out.delta_hits(lambda);
    out.diagnostics.falsely_min = out.psi.elements().iter().map(|&x| hits[x as usize]).min().unwrap_or(0);
    if int(out.diagnostics.falsely_min) < need_phi {
        return Err(Error::Infeasible(format!(
            "q = {q}: some x ∈ Ψ_q has only {} of x + Λ_q in Δ_q",
            out.diagnostics.falsely_min
        )));
    }
    if out.s_over_r.is_zero() {
        return Err(Error::Infeasible(format!("q = {q}: Δ_q is empty")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;
    use crate::family::tests::params;
    use crate::residue::power_residues;

    fn check_invariants(p: &PartitionSets, lambda: &ResidueSet, params: &StepParams) {
        let q = p.q;
        let thick = p.thick.mask();
        for x in 0..q {
            if !thick[x as usize] {
                assert!(p.delta.contains(x), "complement of the thickening lies in Δ");
            }
        }
        for &x in p.psi.elements() {
            assert!(p.phi_gamma.contains(x));
            assert!(!p.delta.contains(x));
        }
        assert!(int(p.psi.len() as u64) >= &params.alpha * &params.gamma * int(q));
        let bound = int(1) - p.thick.density() + &params.delta / int(8);
        assert!(p.delta.density() < bound);
        assert_eq!(gcd(p.psi.len() as u64, params.d), 1);
        assert_eq!(gcd(p.delta.len() as u64, params.d), 1);
        assert_eq!(gcd(p.r, params.d), 1);
        assert_eq!(rat(p.s as i64, p.r as i64), (int(1) - &params.gamma) / p.delta.density());
        assert_eq!(rat(p.t as i64, p.r as i64), &params.alpha * &params.gamma / p.psi.density());
        // (falsely) by brute force
        for &x in p.psi.elements() {
            let c = lambda.elements().iter().filter(|&&v| p.delta.contains((x + v) % q)).count();
            assert!(int(c as u64) >= int(2) * &params.alpha * int(lambda.len() as u64));
        }
    }

    #[test]
    fn feasible_selection_for_5_13_17() {
        let mut pr = params(1, 1, 0);
        pr.d = 3;
        let lambda = power_residues(5 * 13 * 17, 2).unwrap();
        let p = select_partition_sets(&lambda, &pr).unwrap();
        assert!(p.diagnostics.phi_large);
        check_invariants(&p, &lambda, &pr);
    }

    #[test]
    fn invariants_across_moduli() {
        for q in [15u64, 21, 105, 323, 1105, 667] {
            for d in [1u64, 3, 5, 7] {
                let mut pr = params(1, 1, 0);
                pr.d = d;
                if gcd(q, d) != 1 {
                    continue;
                }
                let lambda = power_residues(q, 2).unwrap();
                match select_partition_sets(&lambda, &pr) {
                    Ok(p) => check_invariants(&p, &lambda, &pr),
                    Err(Error::Infeasible(_)) => {}
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }

    #[test]
    fn phi_matches_definition() {
        let pr = params(1, 1, 0);
        let q = 105;
        let lambda = power_residues(q, 2).unwrap();
        let p = select_partition_sets(&lambda, &pr).unwrap();
        // distance from w to −Λ_q below γ·s_q  ⟺  |w − u'| ≤ m for some u'
        let s = rat(q as i64, lambda.len() as i64);
        let near = |w: u64| {
            lambda.elements().iter().any(|&l| {
                let u = (q - l) % q;
                let dist = ((w + q - u) % q).min((u + q - w) % q);
                int(dist) < &pr.gamma * &s
            })
        };
        for l in lambda.elements() {
            let u = (q - l) % q;
            let c = lambda.elements().iter().filter(|&&v| !near((u + v) % q)).count() as u64;
            assert_eq!(p.phi.contains(u), int(c) >= int(2) * &pr.alpha * int(lambda.len() as u64));
        }
    }

    #[test]
    fn reports_empty_thickening() {
        let pr = params(1, 1, 0);
        let lambda = power_residues(7, 2).unwrap();
        assert!(matches!(select_partition_sets(&lambda, &pr), Err(Error::Infeasible(_))));
    }
}

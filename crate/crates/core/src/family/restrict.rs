//! Restriction of a family onto (−Λ_q)^γ.

use serde::{Deserialize, Serialize};

use crate::arith::{gcd, int, ratstr, Rational};
use crate::error::{Error, Result};
use crate::field::{Field, Hist};
use crate::residue::{negate, shift_union, thicken_width, ResidueSet, SequenceSpec};

use super::Family;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestrictMode {
    /// Requires qB ≤ A.
    Strict,
    /// Accepts qB > A; Ā = A/(qB) is then a fraction below 1.
    AllowFractionalA,
}

/// The sets of one restriction: Λ_q, its width m, (−Λ_q)^γ and Ξ^γ_q ∩ Z_q.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Restriction {
    pub q: u64,
    pub b: u64,
    pub width: u64,
    pub lambda: ResidueSet,
    /// (−Λ_q)^γ
    pub thick: ResidueSet,
    /// (0, γs_q) + qZ reduced mod q, i.e. {1, …, m}.
    pub xi: ResidueSet,
}

impl Restriction {
    pub fn new(seq: SequenceSpec, q: u64, b: u64, gamma: &Rational) -> Result<Self> {
        if q < 2 {
            return Err(Error::arg("the restriction modulus must be at least 2"));
        }
        let lambda = seq.lambda(q)?;
        let width = thicken_width(&lambda, gamma)?;
        if width == 0 {
            return Err(Error::Infeasible(format!("q = {q}: (0, γ·s_q) contains no integer")));
        }
        let thick = shift_union(&negate(&lambda), width);
        let xi = ResidueSet::new(q, (1..=width.min(q - 1)).collect())?;
        Ok(Restriction {
            q,
            b,
            width,
            lambda,
            thick,
            xi,
        })
    }

    /// |{v ∈ Λ_q : x + v ∈ Ξ}| for every x ∈ Z_q.
    pub fn xi_hits(&self) -> Vec<u64> {
        let q = self.q;
        (0..q)
            .map(|x| {
                self.lambda
                    .elements()
                    .iter()
                    .filter(|&&v| self.xi.contains((x + v) % q))
                    .count() as u64
            })
            .collect()
    }

    /// |Λ_q|·f·1_Ξ.
    pub fn restrict_f(&self, f: &Field) -> Result<Field> {
        let class = self.xi.mask().iter().map(|&b| if b { 0 } else { 1 }).collect();
        let scaled = Field::scaled(f, int(self.lambda.len() as u64))?;
        Field::switch(self.q, class, vec![scaled, Field::constant(int(0))], None)
    }

    /// X·1_{(−Λ_q)^γ}; fails when the period q·P overflows.
    pub fn restrict_x(&self, x: &Field) -> Result<Field> {
        Field::masked(x, &self.thick.mask())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestrictedFamily {
    pub base: Family,
    pub restriction: Restriction,
    pub mode: RestrictMode,
    /// T̄ = qBT
    pub t: u64,
    pub f: Vec<Field>,
    #[serde(with = "ratstr")]
    pub a_bar: Rational,
    pub d_bar: u64,
    /// Whether qB ≤ A holds.
    pub hypothesis_qb_le_a: bool,
}

impl RestrictedFamily {
    pub fn k(&self) -> usize {
        self.base.k()
    }

    /// x ∈ Ē = E ∩ (−Λ_q)^γ.
    pub fn in_exceptional(&self, x: u64) -> bool {
        self.base.exceptional.get(x % self.base.t) && self.restriction.thick.contains(x % self.restriction.q)
    }

    /// Q̄_x = qB·Q_x.
    pub fn q_at(&self, x: u64) -> u64 {
        self.restriction.q * self.restriction.b * self.base.q_map.get(x % self.base.t)
    }

    /// X̄_h as a field, when its period fits.
    pub fn x_field(&self, h: usize) -> Result<Field> {
        self.restriction.restrict_x(&self.base.x[h])
    }

    /// Histogram of X̄_h on a q-periodic Σ ⊂ Z_q.
    ///
    /// Each residue class mod q meets every class mod RT exactly once in
    /// Z_{qRT}, so each r ∈ Σ contributes one copy of the histogram of X_h.
    pub fn x_conditional_histogram(&self, h: usize, sigma: &ResidueSet, cap: u64) -> Result<Hist> {
        let x = &self.base.x[h];
        if gcd(sigma.modulus(), x.period()) != 1 {
            return Err(Error::NotCoprime(sigma.modulus(), x.period()));
        }
        if sigma.elements().iter().any(|&r| !self.restriction.thick.contains(r)) {
            return Err(Error::arg("Σ must lie inside (−Λ_q)^γ"));
        }
        let hx = x.histogram(cap)?;
        Ok(hx.into_iter().map(|c| c * sigma.len() as u128).collect())
    }
}

/// f̄_h = |Λ_q|·f_h·1_Ξ, X̄_h = X_h·1_{(−Λ_q)^γ}, Ē = E ∩ (−Λ_q)^γ,
/// Q̄_x = qB·Q_x, Ā = A/(qB), D̄ = D/(D, qB), T̄ = qBT.
pub fn restrict_family(fam: &Family, seq: SequenceSpec, q: u64, b: u64, mode: RestrictMode) -> Result<RestrictedFamily> {
    fam.validate_structure()?;
    for (x, y) in [(q, b), (q, fam.t), (b, fam.t)] {
        if gcd(x, y) != 1 {
            return Err(Error::NotCoprime(x, y));
        }
    }
    if gcd(q, fam.r) != 1 {
        return Err(Error::NotCoprime(q, fam.r));
    }
    let qb = crate::arith::checked_mul(q, b)?;
    let hypothesis = qb <= fam.params.a;
    if !hypothesis && mode == RestrictMode::Strict {
        return Err(Error::arg(format!("qB = {qb} exceeds A = {}", fam.params.a)));
    }
    let restriction = Restriction::new(seq, q, b, &fam.params.gamma)?;
    let f = fam.f.iter().map(|f| restriction.restrict_f(f)).collect::<Result<Vec<_>>>()?;
    let t = crate::arith::checked_mul(qb, fam.t)?;
    Ok(RestrictedFamily {
        base: fam.clone(),
        restriction,
        mode,
        t,
        f,
        a_bar: Rational::new(fam.params.a.into(), qb.into()),
        d_bar: fam.params.d / gcd(fam.params.d, qb),
        hypothesis_qb_le_a: hypothesis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;
    use crate::family::tests::params;

    #[test]
    fn trivial_family_restriction() {
        let fam = Family::trivial(&params(1, 1, 0)).unwrap();
        let seq = SequenceSpec::power(2).unwrap();
        let rf = restrict_family(&fam, seq, 65, 1, RestrictMode::AllowFractionalA).unwrap();
        assert!(!rf.hypothesis_qb_le_a);
        assert_eq!(rf.a_bar, rat(1, 65));
        let r = &rf.restriction;
        // E f̄ = |Λ_q|·m/q
        let mean = rf.f[0].mean(1 << 20).unwrap();
        assert_eq!(mean, rat((r.lambda.len() as u64 * r.width) as i64, 65));
        assert!(mean <= fam.params.gamma);
        // from any x in the thickening some v ∈ Λ_q lands in Ξ, so the average is ≥ 1
        let hits = r.xi_hits();
        for &x in r.thick.elements() {
            assert!(hits[x as usize] >= 1);
        }
        assert!(restrict_family(&fam, seq, 65, 1, RestrictMode::Strict).is_err());
    }

    #[test]
    fn conditional_histogram_matches_brute() {
        let seq = SequenceSpec::power(2).unwrap();
        let mut fam = Family::trivial(&params(1, 1, 0)).unwrap();
        let xv = crate::periodic::PeriodicFunction::from_values(&[int(0), rat(1, 2), int(2)]).unwrap();
        fam.x[0] = Field::table(xv);
        fam.r = 3;
        let rf = restrict_family(&fam, seq, 65, 1, RestrictMode::AllowFractionalA).unwrap();
        let xbar = rf.x_field(0).unwrap();
        let thick = &rf.restriction.thick;
        let half = ResidueSet::new(65, thick.elements()[..thick.len() / 2].to_vec()).unwrap();
        for sigma in [thick.clone(), half] {
            let fast = rf.x_conditional_histogram(0, &sigma, 1 << 20).unwrap();
            let brute = xbar.brute_conditional_histogram(65, &sigma.mask(), 1 << 20).unwrap();
            // the masked field's palette gains 0, which X already has
            assert_eq!(fast, brute);
        }
    }
}

//! The prescribed distributions Y_{n,γ,α}.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::{int, is_dyadic, ratmap, ratstr, Rational};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YDistribution {
    pub n: usize,
    #[serde(with = "ratstr")]
    pub gamma: Rational,
    #[serde(with = "ratstr")]
    pub alpha: Rational,
    /// value ↦ probability
    #[serde(with = "ratmap")]
    pub atoms: BTreeMap<Rational, Rational>,
}

fn check_dyadic(r: &Rational, name: &str) -> Result<()> {
    if *r <= Rational::zero() || *r >= int(1) || !is_dyadic(r) {
        return Err(Error::arg(format!("{name} must be a dyadic rational in (0,1), got {r}")));
    }
    Ok(())
}

/// Y_0 ≡ 1; Y_{n+1} = (1−γ)^{-1}Y_n on a set of measure 1−γ, α on a set of
/// measure αγ, 0 on the rest.
pub fn y_distribution(n: usize, gamma: &Rational, alpha: &Rational) -> Result<YDistribution> {
    check_dyadic(gamma, "gamma")?;
    check_dyadic(alpha, "alpha")?;
    let keep = int(1) - gamma;
    let grow = keep.recip();
    let mut atoms = BTreeMap::from([(int(1), int(1))]);
    for _ in 0..n {
        let mut next: BTreeMap<Rational, Rational> = BTreeMap::new();
        for (v, p) in &atoms {
            *next.entry(v * &grow).or_insert_with(Rational::zero) += p * &keep;
        }
        *next.entry(alpha.clone()).or_insert_with(Rational::zero) += alpha * gamma;
        *next.entry(Rational::zero()).or_insert_with(Rational::zero) += gamma * (int(1) - alpha);
        next.retain(|_, p| !p.is_zero());
        atoms = next;
    }
    Ok(YDistribution {
        n,
        gamma: gamma.clone(),
        alpha: alpha.clone(),
        atoms,
    })
}

impl YDistribution {
    pub fn total(&self) -> Rational {
        self.atoms.values().sum()
    }

    pub fn mean(&self) -> Rational {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    pub fn second_moment(&self) -> Rational {
        self.atoms.iter().map(|(v, p)| v * v * p).sum()
    }

    /// 1 + nα²γ
    pub fn expected_mean(&self) -> Rational {
        int(1) + int(self.n as u64) * &self.alpha * &self.alpha * &self.gamma
    }

    /// 2(1−γ)^{-n}
    pub fn second_moment_bound(&self) -> Rational {
        int(2) * (int(1) - &self.gamma).recip().pow(self.n as i32)
    }

    /// Every atom is 0, (1−γ)^{-j} for j ≤ n, or α(1−γ)^{-j} for j < n.
    pub fn atoms_exact(&self) -> bool {
        let grow = (int(1) - &self.gamma).recip();
        let powers: Vec<Rational> = (0..=self.n as i32).map(|j| grow.pow(j)).collect();
        self.atoms.keys().all(|v| {
            v.is_zero()
                || powers.contains(v)
                || powers[..self.n].iter().any(|g| *v == &self.alpha * g)
        })
    }

    pub fn is_probability(&self) -> bool {
        self.total().is_one() && self.atoms.values().all(|p| *p > Rational::zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;

    #[test]
    fn base_and_one_step() {
        let y = y_distribution(0, &rat(1, 2), &rat(1, 2)).unwrap();
        assert_eq!(y.atoms, BTreeMap::from([(int(1), int(1))]));
        let y = y_distribution(1, &rat(1, 2), &rat(1, 2)).unwrap();
        // one unrolling: 2 w.p. 1/2, α = 1/2 w.p. αγ = 1/4, 0 w.p. γ(1−α) = 1/4
        assert_eq!(
            y.atoms,
            BTreeMap::from([(int(2), rat(1, 2)), (rat(1, 2), rat(1, 4)), (int(0), rat(1, 4))])
        );
        assert_eq!(y.mean(), rat(9, 8));
        assert_eq!(y.mean(), y.expected_mean());
    }

    #[test]
    fn moments_for_small_n() {
        for g in [rat(1, 4), rat(1, 2)] {
            for a in [rat(1, 4), rat(1, 32)] {
                for n in 0..=8 {
                    let y = y_distribution(n, &g, &a).unwrap();
                    assert!(y.is_probability());
                    assert_eq!(y.mean(), y.expected_mean());
                    assert!(y.second_moment() <= y.second_moment_bound());
                    assert!(y.atoms_exact());
                }
            }
        }
    }

    #[test]
    fn rejects_non_dyadic() {
        assert!(y_distribution(1, &rat(1, 3), &rat(1, 4)).is_err());
        assert!(y_distribution(1, &rat(1, 4), &int(1)).is_err());
    }

    #[test]
    fn json_round_trip() {
        let y = y_distribution(3, &rat(1, 4), &rat(1, 32)).unwrap();
        let s = serde_json::to_string(&y).unwrap();
        assert_eq!(serde_json::from_str::<YDistribution>(&s).unwrap(), y);
    }
}

//! Normalised gap statistics of residue sets on the circle.

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::{int, Rational};
use crate::error::{Error, Result};
use crate::residue::{self, ResidueSet};

/// Points y_i = λ_i/s_t on the circle of circumference |Λ|.
///
/// Values are kept as integers λ_i on Z_t; a normalised length ℓ of an
/// integer distance d is d·|Λ|/t.
#[derive(Clone, Debug)]
pub struct SpacingProfile {
    source: ResidueSet,
    gaps: Vec<u64>,
}

/// A rational threshold θ = num/den as machine integers.
#[derive(Clone, Copy)]
struct Frac {
    num: i128,
    den: i128,
}

fn frac(r: &Rational) -> Result<Frac> {
    let num = r
        .numer()
        .to_i128()
        .ok_or_else(|| Error::arg("threshold numerator too large"))?;
    let den = r
        .denom()
        .to_i128()
        .ok_or_else(|| Error::arg("threshold denominator too large"))?;
    Ok(Frac { num, den })
}

impl SpacingProfile {
    pub fn new(source: ResidueSet) -> Result<Self> {
        if source.is_empty() {
            return Err(Error::arg("spacing profile of an empty set"));
        }
        let e = source.elements();
        let t = source.modulus();
        let mut gaps: Vec<u64> = e.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.push(t + e[0] - e[e.len() - 1]);
        Ok(SpacingProfile { source, gaps })
    }

    pub fn source(&self) -> &ResidueSet {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn n(&self) -> i128 {
        self.len() as i128
    }

    fn t(&self) -> i128 {
        self.source.modulus() as i128
    }

    pub fn normalized_points(&self) -> Vec<Rational> {
        let n = self.len() as u64;
        let t = self.source.modulus();
        self.source
            .elements()
            .iter()
            .map(|&l| Rational::new((l * n).into(), t.into()))
            .collect()
    }

    /// Circular gaps g_i = y_{i+1} − y_i, the last one wrapping around.
    pub fn circular_gaps(&self) -> Vec<Rational> {
        let n = self.len() as u64;
        let t = self.source.modulus();
        self.gaps
            .iter()
            .map(|&g| Rational::new((g * n).into(), t.into()))
            .collect()
    }

    /// Integer gaps on Z_t, aligned with `circular_gaps`.
    pub fn integer_gaps(&self) -> &[u64] {
        &self.gaps
    }

    /// d·|Λ|/t > θ
    fn exceeds(&self, d: u64, th: Frac) -> bool {
        d as i128 * self.n() * th.den > th.num * self.t()
    }

    /// Circular distance on Z_t from `x` to the nearest element.
    fn nearest_distance(&self, x: u64) -> u64 {
        let e = self.source.elements();
        let t = self.source.modulus();
        let i = e.partition_point(|&v| v < x);
        let above = if i < e.len() { e[i] - x } else { t + e[0] - x };
        let below = if i > 0 { x - e[i - 1] } else { x + t - e[e.len() - 1] };
        above.min(below)
    }
}

pub fn gap_cdf(profile: &SpacingProfile, theta: &Rational) -> Result<Rational> {
    if theta < &Rational::zero() {
        return Err(Error::arg("theta must be nonnegative"));
    }
    let th = frac(theta)?;
    let above = profile
        .gaps
        .iter()
        .filter(|&&g| profile.exceeds(g, th))
        .count();
    Ok(Rational::new(above.into(), profile.len().into()))
}

/// (|Λ^γ|, Σ_i min(g_i, m)) in integer units; the two agree exactly.
pub fn thickened_measure_identity(lambda: &ResidueSet, gamma: &Rational) -> Result<(u64, u64)> {
    let m = residue::thicken_width(lambda, gamma)?;
    let lhs = residue::thicken(lambda, gamma)?.len() as u64;
    let profile = SpacingProfile::new(lambda.clone())?;
    let rhs = profile.gaps.iter().map(|&g| g.min(m)).sum();
    Ok((lhs, rhs))
}

/// ζ_l(θ): the fraction of i with |y_i − y_k − y_l| > θ for every k.
/// `l` is 1-based.
pub fn zeta(profile: &SpacingProfile, l: usize, theta: &Rational) -> Result<Rational> {
    if l == 0 || l > profile.len() {
        return Err(Error::arg(format!("index {l} outside 1..={}", profile.len())));
    }
    let th = frac(theta)?;
    Ok(Rational::new(
        zeta_count(profile, l - 1, th).into(),
        profile.len().into(),
    ))
}

fn zeta_count(profile: &SpacingProfile, l0: usize, th: Frac) -> usize {
    let e = profile.source.elements();
    let t = profile.source.modulus();
    let yl = e[l0];
    e.iter()
        .filter(|&&yi| {
            let z = (yi + t - yl) % t;
            profile.exceeds(profile.nearest_distance(z), th)
        })
        .count()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PoissonCheck {
    pub theta: Rational,
    pub j: Rational,
    pub threshold: Rational,
    pub lhs: Rational,
    pub rhs: Rational,
    pub pass: bool,
    /// P̃_l(ζ_l ≥ threshold), the non-strict form the argument yields.
    pub weak_lhs: Rational,
    /// (F(2θ) − F((J−2)θ))/2.
    pub weak_rhs: Rational,
    pub weak_pass: bool,
}

/// P̃_l(ζ_l(θ) > (F(Jθ)+F(2θ)−1)/2) ≥ F(2θ) − F((J−2)θ).
///
/// The stated form can fail: at threshold 0 a point with ζ_l = 0 is not
/// counted. `weak_pass` records P̃_l(ζ_l ≥ threshold) ≥ (F(2θ) − F((J−2)θ))/2,
/// which holds for every strictly increasing sequence.
pub fn poisson_lemma_check(
    profile: &SpacingProfile,
    theta: &Rational,
    j: &Rational,
) -> Result<PoissonCheck> {
    if theta <= &Rational::zero() {
        return Err(Error::arg("theta must be positive"));
    }
    if j <= &int(4) {
        return Err(Error::arg("J must exceed 4"));
    }
    let f = |x: Rational| gap_cdf(profile, &x);
    let f_j = f(j * theta)?;
    let f_2 = f(int(2) * theta)?;
    let f_j2 = f((j - int(2)) * theta)?;
    let threshold = (&f_j + &f_2 - int(1)) / int(2);
    let th = frac(theta)?;
    let n = profile.len();
    let cut = frac(&threshold)?;
    // ζ_l > threshold  ⟺  count·den > num·n
    let counts: Vec<i128> = (0..n).map(|l| zeta_count(profile, l, th) as i128 * cut.den).collect();
    let bound = cut.num * n as i128;
    let good = counts.iter().filter(|&&c| c > bound).count();
    let weak = counts.iter().filter(|&&c| c >= bound).count();
    let lhs = Rational::new(good.into(), n.into());
    let rhs = f_2 - f_j2;
    let pass = lhs >= rhs;
    let weak_lhs = Rational::new(weak.into(), n.into());
    let weak_rhs = &rhs / int(2);
    let weak_pass = weak_lhs >= weak_rhs;
    Ok(PoissonCheck {
        theta: theta.clone(),
        j: j.clone(),
        threshold,
        lhs,
        rhs,
        pass,
        weak_lhs,
        weak_rhs,
        weak_pass,
    })
}

/// |{(u,v) ∈ Λ×Λ : circular |u−v−w| > γ·s_t for all w ∈ Λ}|.
pub fn condition_earth_count(lambda: &ResidueSet, gamma: &Rational) -> Result<u64> {
    residue::check_unit_interval(gamma, "gamma")?;
    let profile = SpacingProfile::new(lambda.clone())?;
    let t = lambda.modulus();
    // distance d on Z_t exceeds γ·t/|Λ|  ⟺  d·|Λ| > γ·t
    let th = frac(gamma)?;
    let mut count = 0u64;
    for &u in lambda.elements() {
        for &v in lambda.elements() {
            let z = (u + t - v) % t;
            if profile.exceeds(profile.nearest_distance(z), th) {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// γ − |Λ^γ|/t for a single instance.
pub fn condition_wine_epsilon(lambda: &ResidueSet, gamma: &Rational) -> Result<Rational> {
    let th = residue::thicken(lambda, gamma)?;
    Ok(gamma - th.density())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Wind,
    Howl,
    Wine,
    Earth,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    /// (modulus, value) per instance.
    pub values: Vec<(u64, Rational)>,
    pub threshold: Rational,
    pub pass: bool,
    pub epsilon_gamma: Option<Rational>,
}

impl ConditionReport {
    /// (wind): P(Λ_{q_j}) decreasing below `threshold` at the last instance.
    pub fn wind(lambdas: &[ResidueSet], threshold: Rational) -> Self {
        let values: Vec<(u64, Rational)> =
            lambdas.iter().map(|l| (l.modulus(), l.density())).collect();
        let pass = values.last().map_or(false, |(_, v)| *v < threshold);
        ConditionReport {
            condition: Condition::Wind,
            values,
            threshold,
            pass,
            epsilon_gamma: None,
        }
    }

    /// (howl): every P(Λ_{p_j}) at least `threshold`.
    pub fn howl(lambdas: &[ResidueSet], threshold: Rational) -> Self {
        let values: Vec<(u64, Rational)> =
            lambdas.iter().map(|l| (l.modulus(), l.density())).collect();
        let pass = values.iter().all(|(_, v)| *v >= threshold);
        ConditionReport {
            condition: Condition::Howl,
            values,
            threshold,
            pass,
            epsilon_gamma: None,
        }
    }

    /// (wine): per-instance ε; passes when the largest is below `threshold`.
    pub fn wine(lambdas: &[ResidueSet], gamma: &Rational, threshold: Rational) -> Result<Self> {
        let mut values = Vec::new();
        for l in lambdas {
            values.push((l.modulus(), condition_wine_epsilon(l, gamma)?));
        }
        let eps = values.iter().map(|(_, v)| v.clone()).max();
        let pass = eps.as_ref().map_or(false, |e| *e < threshold);
        Ok(ConditionReport {
            condition: Condition::Wine,
            values,
            threshold,
            pass,
            epsilon_gamma: eps,
        })
    }

    /// (earth): per-instance pair count against 5α|Λ|².
    pub fn earth(lambdas: &[ResidueSet], gamma: &Rational, alpha: &Rational) -> Result<Self> {
        let mut values = Vec::new();
        let mut pass = true;
        for l in lambdas {
            let c = int(condition_earth_count(l, gamma)?);
            let bound = int(5) * alpha * int((l.len() * l.len()) as u64);
            pass &= c > bound;
            values.push((l.modulus(), c));
        }
        Ok(ConditionReport {
            condition: Condition::Earth,
            values,
            threshold: int(5) * alpha,
            pass,
            epsilon_gamma: None,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrendRow {
    pub q: u64,
    pub theta: Rational,
    pub f_q: Rational,
    pub exp_neg_theta: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PoissonTrend {
    pub rows: Vec<TrendRow>,
    /// (q, sup_θ |F_q(θ) − e^{−θ}|) along the chain.
    pub sup_deviation: Vec<(u64, f64)>,
    pub nonincreasing: bool,
}

/// F_q(θ) against e^{−θ} over a θ grid for each residue set of a chain.
pub fn poisson_trend(chain: &[ResidueSet], thetas: &[Rational]) -> Result<PoissonTrend> {
    let mut rows = Vec::new();
    let mut sup_deviation = Vec::new();
    for l in chain {
        let profile = SpacingProfile::new(l.clone())?;
        let mut sup = 0.0f64;
        for th in thetas {
            let f_q = gap_cdf(&profile, th)?;
            let e = (-th.to_f64().unwrap_or(f64::NAN)).exp();
            let dev = (f_q.to_f64().unwrap_or(f64::NAN) - e).abs();
            sup = sup.max(dev);
            rows.push(TrendRow {
                q: l.modulus(),
                theta: th.clone(),
                f_q,
                exp_neg_theta: e,
                deviation: dev,
            });
        }
        sup_deviation.push((l.modulus(), sup));
    }
    // float noise on the exponential only
    let nonincreasing = sup_deviation
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 + 1e-12);
    Ok(PoissonTrend {
        rows,
        sup_deviation,
        nonincreasing,
    })
}

pub fn trend_csv(trend: &PoissonTrend) -> String {
    let mut out = String::from("q,theta,F_q,exp_neg_theta\n");
    for r in &trend.rows {
        out.push_str(&format!(
            "{},{},{},{:.15}\n",
            r.q,
            r.theta,
            r.f_q,
            r.exp_neg_theta
        ));
    }
    out
}

pub fn quarter_grid() -> Vec<Rational> {
    (1..=8).map(|i| Rational::new(BigInt::from(i), BigInt::from(4))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;
    use crate::residue::power_residues;

    fn l5() -> SpacingProfile {
        SpacingProfile::new(power_residues(5, 2).unwrap()).unwrap()
    }

    #[test]
    fn gaps_and_cdf() {
        let p = l5();
        assert_eq!(p.circular_gaps(), vec![rat(6, 5), rat(4, 5)]);
        assert_eq!(p.circular_gaps().iter().sum::<Rational>(), int(2));
        assert_eq!(gap_cdf(&p, &rat(1, 1)).unwrap(), rat(1, 2));
        assert_eq!(gap_cdf(&p, &rat(0, 1)).unwrap(), int(1));
        assert_eq!(gap_cdf(&p, &int(2)).unwrap(), rat(0, 1));
    }

    #[test]
    fn identity_examples() {
        let l5 = power_residues(5, 2).unwrap();
        assert_eq!(thickened_measure_identity(&l5, &rat(1, 2)).unwrap(), (2, 2));
        assert_eq!(thickened_measure_identity(&l5, &rat(1, 4)).unwrap(), (0, 0));
        let (a, b) = thickened_measure_identity(&power_residues(15, 2).unwrap(), &rat(1, 4)).unwrap();
        assert_eq!(a, b);
    }

    fn zeta_brute(p: &SpacingProfile, l: usize, theta: &Rational) -> Rational {
        let y = p.normalized_points();
        let n = Rational::from_integer(y.len().into());
        let circ = |x: Rational| {
            let r = ((x % &n) + &n) % &n;
            let other = &n - &r;
            if r < other { r } else { other }
        };
        let good = (0..y.len())
            .filter(|&i| (0..y.len()).all(|k| circ(&y[i] - &y[k] - &y[l - 1]) > *theta))
            .count();
        Rational::new(good.into(), y.len().into())
    }

    #[test]
    fn zeta_matches_brute_force() {
        let p = l5();
        assert_eq!(zeta(&p, 1, &rat(1, 2)).unwrap(), zeta_brute(&p, 1, &rat(1, 2)));
        let p = SpacingProfile::new(power_residues(65, 2).unwrap()).unwrap();
        for l in 1..=p.len() {
            for th in [rat(1, 8), rat(1, 2), rat(1, 1)] {
                assert_eq!(zeta(&p, l, &th).unwrap(), zeta_brute(&p, l, &th));
            }
        }
        assert!(zeta(&p, 0, &rat(1, 2)).is_err());
        let single = SpacingProfile::new(ResidueSet::new(7, vec![3]).unwrap()).unwrap();
        // |y_1 − y_1 − y_1| = |y_1| = 3/7 on a circle of length 1
        assert_eq!(zeta(&single, 1, &rat(1, 4)).unwrap(), int(1));
        assert_eq!(zeta(&single, 1, &rat(1, 2)).unwrap(), int(0));
    }

    #[test]
    fn earth_matches_triple_loop() {
        let l5 = power_residues(5, 2).unwrap();
        let g = rat(1, 8);
        let s = l5.mean_spacing().unwrap();
        let mut brute = 0;
        for &u in l5.elements() {
            for &v in l5.elements() {
                let ok = l5.elements().iter().all(|&w| {
                    let r = (u as i64 - v as i64 - w as i64).rem_euclid(5) as u64;
                    let d = r.min(5 - r);
                    int(d) > &g * &s
                });
                brute += ok as u64;
            }
        }
        assert_eq!(condition_earth_count(&l5, &g).unwrap(), brute);
        let z = ResidueSet::new(9, vec![0]).unwrap();
        assert_eq!(condition_earth_count(&z, &rat(1, 16)).unwrap(), 0);
    }

    #[test]
    fn wine_example() {
        let l5 = power_residues(5, 2).unwrap();
        assert_eq!(condition_wine_epsilon(&l5, &rat(1, 2)).unwrap(), rat(1, 10));
    }

    #[test]
    fn poisson_on_l5() {
        let p = l5();
        let r = poisson_lemma_check(&p, &rat(1, 4), &int(8)).unwrap();
        assert!(r.pass);
        assert!(poisson_lemma_check(&p, &rat(1, 4), &int(4)).is_err());
    }
}

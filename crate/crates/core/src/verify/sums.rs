//! Integer-scaled tables and sums over Λ_Q.

use rayon::prelude::*;

use crate::arith::{factorize, inv_mod, lcm, mul_mod, Rational};
use crate::error::{Error, Result};
use crate::periodic::PeriodicFunction;
use crate::residue::{ResidueSet, SequenceSpec};

/// A function on Z_T as integers v·den.
#[derive(Clone, Debug)]
pub struct ScaledTable {
    pub values: Vec<u64>,
    pub den: u64,
}

impl ScaledTable {
    pub fn new(f: &PeriodicFunction) -> Result<Self> {
        let (ints, den) = scaled_palette(f.palette())?;
        let values = f.indices().iter().map(|&i| ints[i as usize]).collect();
        Ok(ScaledTable { values, den })
    }

    pub fn period(&self) -> u64 {
        self.values.len() as u64
    }

    pub fn max(&self) -> u64 {
        self.values.iter().copied().max().unwrap_or(0)
    }

    #[inline]
    pub fn at(&self, x: u64) -> u64 {
        self.values[(x % self.period()) as usize]
    }
}

/// Common denominator of a palette and the palette scaled by it.
pub fn scaled_palette(palette: &[Rational]) -> Result<(Vec<u64>, u64)> {
    let overflow = || Error::CapExceeded("palette does not fit 64-bit integers".into());
    let mut den = 1u64;
    for v in palette {
        den = lcm(den, u64::try_from(v.denom().clone()).map_err(|_| overflow())?)?;
    }
    let ints = palette
        .iter()
        .map(|v| u64::try_from((v * Rational::from_integer(den.into())).to_integer()).map_err(|_| overflow()))
        .collect::<Result<Vec<_>>>()?;
    Ok((ints, den))
}

/// Representatives of Λ_Q in [1, Q] (residue 0 is represented by Q).
pub fn representatives(lambda: &ResidueSet) -> Vec<u64> {
    let q = lambda.modulus();
    let mut r: Vec<u64> = lambda.elements().iter().map(|&a| if a == 0 { q } else { a }).collect();
    r.sort_unstable();
    r
}

/// Σ_{a ∈ reps} table(x + a).
#[inline]
pub fn direct_sum(table: &ScaledTable, x: u64, reps: &[u64]) -> u64 {
    let t = table.period();
    reps.iter().map(|&a| table.values[((x + a) % t) as usize]).sum()
}

/// S(x) = Σ_{a ∈ Λ_T} f(x + a) for every x ∈ Z_T, T = period of f.
///
/// For squarefree T, Λ_T is the CRT product of the Λ_p, so the sum is a
/// chain of one convolution per prime factor along its idempotent.
pub fn lambda_sum_table(table: &ScaledTable, seq: SequenceSpec, work_cap: u64) -> Result<(Vec<u64>, u64)> {
    let t = table.period();
    let factors = factorize(t);
    let lambda_len: u64 = if factors.iter().all(|&(_, e)| e == 1) {
        factors
            .iter()
            .map(|&(p, _)| seq.lambda(p).map(|l| l.len() as u64))
            .product::<Result<u64>>()?
    } else {
        seq.lambda(t)?.len() as u64
    };
    if (table.max() as u128) * (lambda_len as u128) > u64::MAX as u128 {
        return Err(Error::CapExceeded("Λ-sums overflow 64-bit integers".into()));
    }
    if t == 1 {
        return Ok((vec![table.values[0] * lambda_len], lambda_len));
    }
    if factors.iter().any(|&(_, e)| e > 1) {
        let reps = representatives(&seq.lambda(t)?);
        if (t as u128) * (reps.len() as u128) > work_cap as u128 {
            return Err(Error::CapExceeded(format!("direct Λ-sums over Z_{t} exceed the work cap")));
        }
        let sums = (0..t).into_par_iter().map(|x| direct_sum(table, x, &reps)).collect();
        return Ok((sums, lambda_len));
    }
    let mut g = table.values.clone();
    for (p, _) in factors {
        let m = t / p;
        let e = mul_mod(m, inv_mod(m % p, p).expect("coprime cofactor"), t);
        let shifts: Vec<u64> = seq.lambda(p)?.elements().iter().map(|&c| mul_mod(c, e, t)).collect();
        let prev = g;
        let mut next = vec![0u64; t as usize];
        next.par_chunks_mut(1 << 14).enumerate().for_each(|(ci, chunk)| {
            let base = (ci << 14) as u64;
            for (i, out) in chunk.iter_mut().enumerate() {
                let x = base + i as u64;
                let mut s = 0u64;
                for &sh in &shifts {
                    let y = x + sh;
                    s += prev[(if y >= t { y - t } else { y }) as usize];
                }
                *out = s;
            }
        });
        g = next;
    }
    Ok((g, lambda_len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::{int, rat};

    #[test]
    fn convolution_matches_direct() {
        let seq = SequenceSpec::power(2).unwrap();
        for t in [1u64, 15, 105, 1155] {
            let vals: Vec<Rational> = (0..t).map(|x| rat(((x * 7919) % 5) as i64, 3)).collect();
            let f = PeriodicFunction::from_values(&vals).unwrap();
            let table = ScaledTable::new(&f).unwrap();
            let (sums, n) = lambda_sum_table(&table, seq, u64::MAX).unwrap();
            let reps = representatives(&seq.lambda(t).unwrap());
            assert_eq!(n, reps.len() as u64);
            for x in 0..t {
                assert_eq!(sums[x as usize], direct_sum(&table, x, &reps));
            }
        }
    }

    #[test]
    fn non_squarefree_falls_back() {
        let seq = SequenceSpec::prime();
        let vals: Vec<Rational> = (0..36u64).map(|x| int(x % 4)).collect();
        let table = ScaledTable::new(&PeriodicFunction::from_values(&vals).unwrap()).unwrap();
        let (sums, n) = lambda_sum_table(&table, seq, u64::MAX).unwrap();
        let reps = representatives(&seq.lambda(36).unwrap());
        assert_eq!(n, 12);
        assert_eq!(sums[5], direct_sum(&table, 5, &reps));
    }
}

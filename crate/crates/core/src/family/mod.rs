//! (K,M,L) families and the constructive steps that produce them.

pub mod build;
pub mod partition;
pub mod restrict;
pub mod step;
pub mod ydist;

use std::path::Path;

use base64::Engine;
use num_traits::Zero;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::arith::{gcd, int, is_dyadic, ratstr, Rational};
use crate::bitset::BitSet;
use crate::equidist::{HorizonPolicy, PsiTable, SubsetRule};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::periodic::PeriodicFunction;
use crate::residue::{QsetCatalog, SequenceSpec};

pub use build::{build_family, BuildOptions};
pub use partition::{select_partition_sets, PartitionSets};
pub use restrict::{restrict_family, RestrictMode, RestrictedFamily, Restriction};
pub use step::{fate_check, inductive_step, StepRecord};
pub use ydist::{y_distribution, YDistribution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub k: usize,
    pub m: usize,
    pub l: usize,
    #[serde(with = "ratstr")]
    pub gamma: Rational,
    #[serde(with = "ratstr")]
    pub alpha: Rational,
    #[serde(with = "ratstr")]
    pub beta: Rational,
    #[serde(with = "ratstr")]
    pub delta: Rational,
    pub a: u64,
    pub d: u64,
    /// Target constant; used by the demonstrator only.
    #[serde(with = "ratstr")]
    pub c: Rational,
    pub subset: SubsetRule,
    #[serde(with = "ratstr")]
    pub gamma0: Rational,
}

impl StepParams {
    pub fn validate(&self) -> Result<()> {
        let dyadic_unit = |r: &Rational| *r > Rational::zero() && *r < int(1) && is_dyadic(r);
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if self.l > self.m {
            return Err(Error::Config(format!("L = {} exceeds M = {}", self.l, self.m)));
        }
        if !dyadic_unit(&self.gamma) {
            return Err(Error::Config(format!("gamma = {} must be a dyadic rational in (0,1)", self.gamma)));
        }
        if !dyadic_unit(&self.alpha) {
            return Err(Error::Config(format!("alpha = {} must be a dyadic rational in (0,1)", self.alpha)));
        }
        if self.gamma0 > Rational::new(1.into(), 2.into()) || self.gamma0 <= Rational::zero() {
            return Err(Error::Config(format!("gamma0 = {} must lie in (0,1/2]", self.gamma0)));
        }
        if self.gamma >= self.gamma0 {
            return Err(Error::Config(format!("gamma = {} must be below gamma0 = {}", self.gamma, self.gamma0)));
        }
        if self.beta <= Rational::zero() || self.beta >= int(1) {
            return Err(Error::Config(format!("beta = {} must lie in (0,1)", self.beta)));
        }
        if self.delta <= Rational::zero() || self.delta > int(1) {
            return Err(Error::Config(format!("delta = {} must lie in (0,1]", self.delta)));
        }
        if self.a == 0 {
            return Err(Error::Config("A must be at least 1".into()));
        }
        if self.d % 2 == 0 {
            return Err(Error::Config(format!("D = {} must be odd", self.d)));
        }
        if self.c <= Rational::zero() {
            return Err(Error::Config("C must be positive".into()));
        }
        Ok(())
    }

    /// The same parameters at another (K, L) with other A, δ, D.
    pub fn at(&self, k: usize, l: usize, a: u64, delta: Rational, d: u64) -> StepParams {
        StepParams {
            k,
            l,
            a,
            delta,
            d,
            ..self.clone()
        }
    }
}

/// x ↦ Q_x over Z_T, stored as an index into a short value list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QMap {
    pub values: Vec<u64>,
    pub index: Vec<u8>,
}

impl QMap {
    pub fn constant(t: u64, q: u64) -> Self {
        QMap {
            values: vec![q],
            index: vec![0; t as usize],
        }
    }

    pub fn from_fn(t: u64, f: impl Fn(u64) -> u64) -> Result<Self> {
        let mut values: Vec<u64> = Vec::new();
        let mut index = Vec::with_capacity(t as usize);
        for x in 0..t {
            let q = f(x);
            let i = match values.iter().position(|&v| v == q) {
                Some(i) => i,
                None => {
                    if values.len() == u8::MAX as usize {
                        return Err(Error::CapExceeded("more than 255 distinct Q_x values".into()));
                    }
                    values.push(q);
                    values.len() - 1
                }
            };
            index.push(i as u8);
        }
        Ok(QMap { values, index })
    }

    pub fn len(&self) -> u64 {
        self.index.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, x: u64) -> u64 {
        self.values[self.index[(x % self.len()) as usize] as usize]
    }
}

#[derive(Serialize, Deserialize)]
struct QMapWire {
    values: Vec<u64>,
    index: String,
}

impl Serialize for QMap {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        QMapWire {
            values: self.values.clone(),
            index: base64::engine::general_purpose::STANDARD.encode(&self.index),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for QMap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = QMapWire::deserialize(d)?;
        let index = base64::engine::general_purpose::STANDARD
            .decode(w.index)
            .map_err(D::Error::custom)?;
        if index.iter().any(|&i| i as usize >= w.values.len()) {
            return Err(D::Error::custom("Q map index out of range"));
        }
        Ok(QMap {
            values: w.values,
            index,
        })
    }
}

/// Build provenance: pools, seeds and every step taken.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sequence: Option<SequenceSpec>,
    pub p_pool: Vec<u64>,
    pub q_pool: Vec<u64>,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub params: StepParams,
    pub t: u64,
    pub r: u64,
    pub f: Vec<Field>,
    pub x: Vec<Field>,
    pub exceptional: BitSet,
    pub q_map: QMap,
    /// Largest thickening defect γ − P(Λ_q^γ) over the q used so far.
    #[serde(with = "ratstr")]
    pub epsilon: Rational,
    pub provenance: Provenance,
}

impl Family {
    /// Step (1,M,0): T = R = 1, f_1 ≡ X_1 ≡ 1, E = ∅, Q_x ≡ 1.
    pub fn trivial(params: &StepParams) -> Result<Self> {
        params.validate()?;
        if params.k != 1 || params.l != 0 {
            return Err(Error::arg("the trivial family is Step (1,M,0)"));
        }
        Ok(Family {
            params: params.clone(),
            t: 1,
            r: 1,
            f: vec![Field::constant(int(1))],
            x: vec![Field::constant(int(1))],
            exceptional: BitSet::new(1),
            q_map: QMap::constant(1, 1),
            epsilon: Rational::zero(),
            provenance: Provenance::default(),
        })
    }

    /// Step (K−1,M,M) → Step (K,M,0) by appending f_K ≡ X_K ≡ 1.
    pub fn extend(&self) -> Result<Self> {
        if self.params.l != self.params.m {
            return Err(Error::arg(format!(
                "only a Step (K,M,M) family extends; this one has L = {}",
                self.params.l
            )));
        }
        let mut out = self.clone();
        out.params.k += 1;
        out.params.l = 0;
        out.f.push(Field::constant(int(1)));
        out.x.push(Field::constant(int(1)));
        Ok(out)
    }

    pub fn k(&self) -> usize {
        self.f.len()
    }

    /// Shape checks: periods, coprimality with D, Q_x | T.
    pub fn validate_structure(&self) -> Result<()> {
        if self.f.len() != self.params.k || self.x.len() != self.params.k {
            return Err(Error::Structure(format!(
                "expected {} functions, found {} f and {} X",
                self.params.k,
                self.f.len(),
                self.x.len()
            )));
        }
        if gcd(self.t, self.params.d) != 1 || gcd(self.r, self.params.d) != 1 {
            return Err(Error::Structure(format!(
                "T = {} or R = {} shares a factor with D = {}",
                self.t, self.r, self.params.d
            )));
        }
        let rt = (self.r as u128) * (self.t as u128);
        for (h, f) in self.f.iter().enumerate() {
            if self.t % f.period() != 0 {
                return Err(Error::Structure(format!("f_{} has period {} not dividing T", h + 1, f.period())));
            }
        }
        for (h, x) in self.x.iter().enumerate() {
            if rt % (x.period() as u128) != 0 {
                return Err(Error::Structure(format!("X_{} has period {} not dividing RT", h + 1, x.period())));
            }
        }
        if self.exceptional.len() != self.t || self.q_map.len() != self.t {
            return Err(Error::Structure("E and Q_x must live on Z_T".into()));
        }
        for &q in &self.q_map.values {
            if q == 0 || self.t % q != 0 {
                return Err(Error::Structure(format!("Q_x = {q} does not divide T = {}", self.t)));
            }
        }
        Ok(())
    }

    /// f_h as an explicit table over Z_T.
    pub fn f_table(&self, h: usize, cap: u64) -> Result<PeriodicFunction> {
        if self.t > cap {
            return Err(Error::CapExceeded(format!("T = {} exceeds the table cap {cap}", self.t)));
        }
        let f = self.f[h].materialize(cap)?;
        if f.period() == self.t {
            Ok(f)
        } else {
            f.lift(self.t)
        }
    }

    pub fn exceptional_measure(&self) -> Rational {
        self.exceptional.density()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        let fam: Family = serde_json::from_str(&s).map_err(|e| Error::Format(e.to_string()))?;
        fam.validate_structure()?;
        Ok(fam)
    }
}

/// Desk-scale limits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    /// Largest T for explicit tables.
    pub table: u64,
    /// Largest period enumerated point by point.
    pub enumeration: u64,
    /// Largest n for which ψ(n) is tabulated.
    pub psi: u64,
    /// Largest number of elementary operations in one verification pass.
    pub work: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            table: 10_000_000,
            enumeration: 100_000_000,
            psi: 10_000_000,
            work: 50_000_000_000,
        }
    }
}

/// Sequence, pools and the ψ table shared by every step of a build.
#[derive(Clone, Debug)]
pub struct Environment {
    pub seq: SequenceSpec,
    pub catalog: QsetCatalog,
    pub psi: PsiTable,
    pub caps: Caps,
    scanned_to: u64,
}

impl Environment {
    pub fn new(
        seq: SequenceSpec,
        p_pool: Vec<u64>,
        q_pool: Vec<u64>,
        beta: &Rational,
        rule: SubsetRule,
        policy: HorizonPolicy,
        caps: Caps,
    ) -> Result<Self> {
        let catalog = QsetCatalog::for_sequence(seq, p_pool, q_pool, caps.psi)?;
        let mut psi = PsiTable::build(seq, &catalog, 1, beta, rule, policy)?;
        psi.ensure(1)?;
        Ok(Environment {
            seq,
            catalog,
            psi,
            caps,
            scanned_to: 1,
        })
    }

    /// ψ(n), tabulating N(Q) for every Q ∈ Qset with Q ≤ n first.
    pub fn psi_at(&mut self, n: u64) -> Result<u64> {
        if n > self.caps.psi {
            return Err(Error::CapExceeded(format!(
                "ψ({n}) needs N(Q) for Q up to {n}, above the cap {}",
                self.caps.psi
            )));
        }
        if n > self.scanned_to {
            let todo: Vec<u64> = self
                .catalog
                .products
                .iter()
                .copied()
                .filter(|&q| q > self.scanned_to && q <= n)
                .collect();
            for q in todo {
                self.psi.ensure(q)?;
            }
            self.scanned_to = n;
        }
        Ok(self.psi.psi(n))
    }

    /// Whether m is a product of pool members.
    pub fn in_qset(&self, m: u64) -> bool {
        let mut rest = m;
        for p in self.catalog.members() {
            if rest % p == 0 {
                rest /= p;
            }
        }
        rest == 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;

    pub(crate) fn params(k: usize, m: usize, l: usize) -> StepParams {
        StepParams {
            k,
            m,
            l,
            gamma: rat(1, 4),
            alpha: rat(1, 32),
            beta: rat(1, 4),
            delta: rat(1, 4),
            a: 1,
            d: 1,
            c: int(1),
            subset: SubsetRule::AllIntegers,
            gamma0: rat(1, 2),
        }
    }

    #[test]
    fn trivial_and_extend() {
        let p = params(1, 2, 0);
        let fam = Family::trivial(&p).unwrap();
        fam.validate_structure().unwrap();
        assert!(fam.extend().is_err());
        let mut done = fam.clone();
        done.params.l = 2;
        let ext = done.extend().unwrap();
        assert_eq!(ext.k(), 2);
        assert_eq!(ext.params.l, 0);
        ext.validate_structure().unwrap();
    }

    #[test]
    fn params_validation() {
        let mut p = params(1, 2, 0);
        p.validate().unwrap();
        p.gamma = rat(1, 3);
        assert!(p.validate().is_err());
        let mut p = params(1, 2, 3);
        assert!(p.validate().is_err());
        p.l = 0;
        p.d = 4;
        assert!(p.validate().is_err());
    }

    #[test]
    fn qmap_round_trip() {
        let q = QMap::from_fn(30, |x| if x % 3 == 0 { 1 } else { 15 }).unwrap();
        assert_eq!(q.get(33), 1);
        let s = serde_json::to_string(&q).unwrap();
        assert_eq!(serde_json::from_str::<QMap>(&s).unwrap(), q);
    }

    #[test]
    fn family_json_round_trip() {
        let fam = Family::trivial(&params(1, 1, 0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fam.json");
        fam.save(&path).unwrap();
        assert_eq!(Family::load(&path).unwrap(), fam);
    }
}

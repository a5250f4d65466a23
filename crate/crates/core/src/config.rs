//! Plain-text `key = value` run configuration with flag overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arith::{int, parse_rational, ratstr, Rational};
use crate::equidist::{HorizonPolicy, SubsetRule};
use crate::error::{Error, Result};
use crate::family::{BuildOptions, Caps, Environment, StepParams};
use crate::residue::SequenceSpec;
use crate::verify::MaximalOptions;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "BADSEQ_CONFIG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sequence: SequenceSpec,
    pub p_pool: Vec<u64>,
    pub q_pool: Vec<u64>,
    pub params: StepParams,
    pub seed: u64,
    pub plan_budget: u64,
    pub t_cap: u64,
    pub caps: Caps,
    pub horizon: HorizonPolicy,
    /// Modulus for `residues`.
    pub t: u64,
    /// Moduli for `spacing`.
    pub chain: Vec<u64>,
    /// θ grid for `spacing`.
    #[serde(with = "ratvec")]
    pub thetas: Vec<Rational>,
    /// J grid for the Poisson lemma check.
    #[serde(with = "ratvec")]
    pub js: Vec<Rational>,
    /// Modulus and horizon for `equidist`.
    pub equidist_q: u64,
    #[serde(with = "ratstr")]
    pub equidist_beta: Rational,
    pub equidist_horizon: u64,
    /// (T, p) for `rearrange`.
    pub rearrange_t: u64,
    pub rearrange_p: u64,
    /// Restriction applied by `verify-family` when set.
    pub restrict_q: Option<u64>,
    pub restrict_b: u64,
    pub sample_size: u64,
    pub n_cap: u64,
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub out_dir: PathBuf,
    #[serde(skip)]
    pub family: Option<PathBuf>,
}

mod ratvec {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::arith::{parse_rational, Rational};

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|r| r.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let v: Vec<String> = Vec::deserialize(d)?;
        v.iter()
            .map(|s| parse_rational(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let r = |n: i64, d: i64| Rational::new(n.into(), d.into());
        RunConfig {
            sequence: SequenceSpec::Power { d: 2 },
            p_pool: vec![11, 13, 41, 43, 47, 53],
            q_pool: vec![105, 323, 667, 1147],
            params: StepParams {
                k: 1,
                m: 2,
                l: 2,
                gamma: r(1, 4),
                alpha: r(1, 32),
                beta: r(1, 4),
                delta: r(1, 4),
                a: 1,
                d: 1,
                c: int(1),
                subset: SubsetRule::AllIntegers,
                gamma0: r(1, 2),
            },
            seed: 1,
            plan_budget: 1000,
            t_cap: 10_000_000,
            caps: Caps::default(),
            horizon: HorizonPolicy::default(),
            t: 65,
            chain: vec![65, 1105, 32045],
            thetas: crate::spacing::quarter_grid(),
            js: vec![int(5), int(6), int(8)],
            equidist_q: 15,
            equidist_beta: r(2, 5),
            equidist_horizon: 100_000,
            rearrange_t: 3,
            rearrange_p: 101,
            restrict_q: None,
            restrict_b: 1,
            sample_size: 10_000,
            n_cap: 1024,
            workers: 0,
            out_dir: PathBuf::from("."),
            family: None,
        }
    }
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.replace('_', "")
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected a nonnegative integer, got {v:?}")))
}

fn parse_list<T>(key: &str, v: &str, one: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| one(key, s))
        .collect()
}

fn parse_rat(key: &str, v: &str) -> Result<Rational> {
    parse_rational(v).map_err(|e| Error::Config(format!("{key}: {e}")))
}

fn parse_sequence(v: &str) -> Result<SequenceSpec> {
    match v {
        "prime" | "primes" => Ok(SequenceSpec::Prime),
        "squares" => Ok(SequenceSpec::Power { d: 2 }),
        _ => {
            let d = v
                .strip_prefix("power:")
                .and_then(|d| d.parse::<u32>().ok())
                .ok_or_else(|| Error::Config(format!("sequence: expected primes, squares or power:<d>, got {v:?}")))?;
            SequenceSpec::power(d).map_err(|e| Error::Config(format!("sequence: {e}")))
        }
    }
}

impl RunConfig {
    /// Sets one key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        let p = &mut self.params;
        match key {
            "sequence" => self.sequence = parse_sequence(v)?,
            "p_pool" => self.p_pool = parse_list(key, v, parse_u64)?,
            "q_pool" => self.q_pool = parse_list(key, v, parse_u64)?,
            "k" => p.k = parse_u64(key, v)? as usize,
            "m" => p.m = parse_u64(key, v)? as usize,
            "l" => p.l = parse_u64(key, v)? as usize,
            "gamma" => p.gamma = parse_rat(key, v)?,
            "alpha" => p.alpha = parse_rat(key, v)?,
            "beta" => p.beta = parse_rat(key, v)?,
            "delta" => p.delta = parse_rat(key, v)?,
            "a" => p.a = parse_u64(key, v)?,
            "d" => p.d = parse_u64(key, v)?,
            "c" => p.c = parse_rat(key, v)?,
            "gamma0" => p.gamma0 = parse_rat(key, v)?,
            "subset" => p.subset = SubsetRule::parse(v).map_err(|e| Error::Config(format!("subset: {e}")))?,
            "seed" => self.seed = parse_u64(key, v)?,
            "plan_budget" => self.plan_budget = parse_u64(key, v)?,
            "t_cap" => self.t_cap = parse_u64(key, v)?,
            "table_cap" => self.caps.table = parse_u64(key, v)?,
            "enumeration_cap" => self.caps.enumeration = parse_u64(key, v)?,
            "psi_cap" => self.caps.psi = parse_u64(key, v)?,
            "work_cap" => self.caps.work = parse_u64(key, v)?,
            "horizon_base" => self.horizon.base = parse_u64(key, v)?,
            "horizon_per_modulus" => self.horizon.per_modulus = parse_u64(key, v)?,
            "horizon_max" => self.horizon.max = parse_u64(key, v)?,
            "t" => self.t = parse_u64(key, v)?,
            "chain" => self.chain = parse_list(key, v, parse_u64)?,
            "thetas" => self.thetas = parse_list(key, v, parse_rat)?,
            "js" => self.js = parse_list(key, v, parse_rat)?,
            "equidist_q" => self.equidist_q = parse_u64(key, v)?,
            "equidist_beta" => self.equidist_beta = parse_rat(key, v)?,
            "equidist_horizon" => self.equidist_horizon = parse_u64(key, v)?,
            "rearrange_t" => self.rearrange_t = parse_u64(key, v)?,
            "rearrange_p" => self.rearrange_p = parse_u64(key, v)?,
            "restrict_q" => {
                self.restrict_q = match v {
                    "" | "none" => None,
                    _ => Some(parse_u64(key, v)?),
                }
            }
            "restrict_b" => self.restrict_b = parse_u64(key, v)?,
            "sample_size" => self.sample_size = parse_u64(key, v)?,
            "n_cap" => self.n_cap = parse_u64(key, v)?,
            "workers" => self.workers = parse_u64(key, v)? as usize,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "family" => self.family = Some(PathBuf::from(v)),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a config file: one `key = value` per line, `#` comments.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected key = value, got {line:?}", i + 1)))?;
            self.set(k.trim(), v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{origin}:{}: {m}", i + 1)),
                e => e,
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Module preconditions that do not depend on the subcommand.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.t < 2 {
            return Err(Error::Config(format!("t = {} must be at least 2", self.t)));
        }
        if self.chain.iter().any(|&q| q < 2) {
            return Err(Error::Config("chain moduli must be at least 2".into()));
        }
        if self.restrict_b == 0 {
            return Err(Error::Config("restrict_b must be at least 1".into()));
        }
        if self.equidist_q == 0 || self.equidist_horizon == 0 {
            return Err(Error::Config("equidist_q and equidist_horizon must be positive".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form; output paths and the worker
    /// count are not part of it.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            seed: self.seed,
            plan_budget: self.plan_budget,
            t_cap: self.t_cap,
        }
    }

    pub fn maximal_options(&self) -> MaximalOptions {
        MaximalOptions {
            sample_size: self.sample_size,
            n_cap: self.n_cap,
            seed: self.seed,
            enumeration_cap: self.caps.enumeration,
        }
    }

    pub fn environment(&self, seq: SequenceSpec, p_pool: Vec<u64>, q_pool: Vec<u64>, params: &StepParams) -> Result<Environment> {
        Environment::new(seq, p_pool, q_pool, &params.beta, params.subset, self.horizon, self.caps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;

    #[test]
    fn parse_and_override() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\nsequence = primes\nq_pool = 105, 323\ngamma = 1/8  # inline\n", "cfg")
            .unwrap();
        assert_eq!(c.sequence, SequenceSpec::Prime);
        assert_eq!(c.q_pool, vec![105, 323]);
        assert_eq!(c.params.gamma, rat(1, 8));
        c.set("gamma", "1/4").unwrap();
        assert_eq!(c.params.gamma, rat(1, 4));
    }

    #[test]
    fn diagnostics_name_the_line() {
        let mut c = RunConfig::default();
        let e = c.apply_text("seed = 3\nbogus = 1\n", "run.cfg").unwrap_err().to_string();
        assert!(e.contains("run.cfg:2") && e.contains("bogus"), "{e}");
        let e = c.apply_text("k = x\n", "run.cfg").unwrap_err().to_string();
        assert!(e.contains("run.cfg:1"), "{e}");
    }

    #[test]
    fn hash_ignores_output_paths() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = PathBuf::from("/tmp/x");
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }
}

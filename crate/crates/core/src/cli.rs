//! Subcommands, config resolution and report emission for the binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::arith::{factorize, Rational};
use crate::config::{RunConfig, CONFIG_ENV};
use crate::equidist::{empirical_n, EquidistScan};
use crate::error::{Error, Result};
use crate::family::{build_family, restrict_family, Family, Provenance, RestrictMode};
use crate::rearrange::find_good_omega;
use crate::residue::{combine_crt, ResidueSet, SequenceSpec};
use crate::spacing::{poisson_lemma_check, poisson_trend, thickened_measure_identity, trend_csv, PoissonCheck, SpacingProfile};
use crate::verify::{demo_maximal, verify_family, verify_restricted};

#[derive(Debug, Parser)]
#[command(name = "badseq", version, about = "Residue statistics and (K,M,L)-family constructions for subsequence averages")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Directory for JSON and CSV reports.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Λ_t table with density and a CRT cross-check.
    Residues {
        /// d-th powers.
        #[arg(long, conflicts_with = "primes")]
        d: Option<u32>,
        #[arg(long)]
        primes: bool,
        #[arg(long)]
        t: Option<u64>,
    },
    /// Gap statistics of Λ_q along a chain of moduli.
    Spacing {
        /// Comma-separated moduli.
        #[arg(long)]
        chain: Option<String>,
    },
    /// Residue counts of n_k mod Q and the empirical N(Q).
    Equidist {
        #[arg(long)]
        q: Option<u64>,
        #[arg(long)]
        beta: Option<String>,
        #[arg(long)]
        horizon: Option<u64>,
    },
    /// Seeded search for a rearrangement passing the singleton certificate.
    Rearrange {
        #[arg(long)]
        t: Option<u64>,
        #[arg(long)]
        p: Option<u64>,
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Build a Step (K,M,L) family, save it and verify it.
    BuildFamily {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        l: Option<usize>,
        /// Output path for the family; defaults to <out>/family.json.
        #[arg(long)]
        family: Option<PathBuf>,
    },
    /// Verify a saved family, optionally restricted to a fresh modulus.
    VerifyFamily {
        #[arg(long)]
        family: Option<PathBuf>,
        #[arg(long)]
        restrict_q: Option<u64>,
        #[arg(long)]
        restrict_b: Option<u64>,
    },
    /// The weak (1,1) demonstrator on a saved family.
    DemoMaximal {
        #[arg(long)]
        family: Option<PathBuf>,
        #[arg(long)]
        sample_size: Option<u64>,
        #[arg(long)]
        n_cap: Option<u64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Residues { .. } => "residues",
            Command::Spacing { .. } => "spacing",
            Command::Equidist { .. } => "equidist",
            Command::Rearrange { .. } => "rearrange",
            Command::BuildFamily { .. } => "build-family",
            Command::VerifyFamily { .. } => "verify-family",
            Command::DemoMaximal { .. } => "demo-maximal",
        }
    }

    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let mut put = |k: &'static str, val: Option<String>| {
            if let Some(val) = val {
                v.push((k, val));
            }
        };
        match self {
            Command::Residues { d, primes, t } => {
                put("sequence", d.map(|d| format!("power:{d}")));
                put("sequence", primes.then(|| "primes".to_string()));
                put("t", t.map(|t| t.to_string()));
            }
            Command::Spacing { chain } => put("chain", chain.clone()),
            Command::Equidist { q, beta, horizon } => {
                put("equidist_q", q.map(|x| x.to_string()));
                put("equidist_beta", beta.clone());
                put("equidist_horizon", horizon.map(|x| x.to_string()));
            }
            Command::Rearrange { t, p, budget } => {
                put("rearrange_t", t.map(|x| x.to_string()));
                put("rearrange_p", p.map(|x| x.to_string()));
                put("plan_budget", budget.map(|x| x.to_string()));
            }
            Command::BuildFamily { k, m, l, family } => {
                put("k", k.map(|x| x.to_string()));
                put("m", m.map(|x| x.to_string()));
                put("l", l.map(|x| x.to_string()));
                put("family", family.as_ref().map(|p| p.display().to_string()));
            }
            Command::VerifyFamily { family, restrict_q, restrict_b } => {
                put("family", family.as_ref().map(|p| p.display().to_string()));
                put("restrict_q", restrict_q.map(|x| x.to_string()));
                put("restrict_b", restrict_b.map(|x| x.to_string()));
            }
            Command::DemoMaximal { family, sample_size, n_cap } => {
                put("family", family.as_ref().map(|p| p.display().to_string()));
                put("sample_size", sample_size.map(|x| x.to_string()));
                put("n_cap", n_cap.map(|x| x.to_string()));
            }
        }
        v
    }
}

/// File, then `--set`, then dedicated flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for kv in &cli.common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)
            .map_err(|e| Error::Config(format!("--set {kv}: {e}")))?;
    }
    if let Some(o) = &cli.common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = cli.common.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.common.workers {
        cfg.workers = w;
    }
    for (k, v) in cli.command.overrides() {
        cfg.set(k, &v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    config_hash: String,
    config: &'a RunConfig,
    provenance: Option<&'a Provenance>,
    pass: bool,
    report: T,
}

/// Outcome of one subcommand: whether every asserted property held, plus
/// the files written and a human summary.
#[derive(Debug)]
pub struct Outcome {
    pub pass: bool,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

struct Emitter<'a> {
    cfg: &'a RunConfig,
    command: &'a str,
    files: Vec<PathBuf>,
}

impl<'a> Emitter<'a> {
    fn json<T: Serialize>(&mut self, provenance: Option<&Provenance>, pass: bool, report: T) -> Result<()> {
        let env = Envelope {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: self.cfg.hash(),
            config: self.cfg,
            provenance,
            pass,
            report,
        };
        let s = serde_json::to_string_pretty(&env).map_err(|e| Error::Format(e.to_string()))?;
        self.write(&format!("{}.json", self.command), &(s + "\n"))
    }

    fn csv(&mut self, name: &str, body: &str) -> Result<()> {
        self.write(name, body)
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        std::fs::create_dir_all(&self.cfg.out_dir)?;
        let path = self.cfg.out_dir.join(name);
        std::fs::write(&path, body)?;
        self.files.push(path);
        Ok(())
    }
}

#[derive(Serialize)]
struct ResidueReport {
    sequence: String,
    t: u64,
    size: usize,
    density: String,
    factors: Vec<(u64, usize)>,
    crt_agrees: bool,
    elements: Vec<u64>,
}

#[derive(Serialize)]
struct SpacingRow {
    q: u64,
    size: usize,
    thickened_identity: (u64, u64),
    poisson: Vec<PoissonCheck>,
}

#[derive(Serialize)]
struct SpacingReport {
    gamma: String,
    rows: Vec<SpacingRow>,
    sup_deviation: Vec<(u64, f64)>,
    trend_nonincreasing: bool,
}

#[derive(Serialize)]
struct EquidistReport {
    scan: EquidistScan,
    doubled: EquidistScan,
    stable_under_doubling: bool,
}

fn lambda_factors(seq: SequenceSpec, t: u64) -> Result<(Vec<(u64, usize)>, ResidueSet)> {
    let mut factors = Vec::new();
    let mut acc: Option<ResidueSet> = None;
    for (p, e) in factorize(t) {
        let pe = p.pow(e);
        let l = seq.lambda(pe)?;
        factors.push((pe, l.len()));
        acc = Some(match acc {
            None => l,
            Some(a) => combine_crt(&a, &l)?,
        });
    }
    let combined = acc.ok_or_else(|| Error::arg("t must be at least 2"))?;
    Ok((factors, combined))
}

fn family_path(cfg: &RunConfig) -> PathBuf {
    cfg.family.clone().unwrap_or_else(|| cfg.out_dir.join("family.json"))
}

fn load_family(cfg: &RunConfig) -> Result<Family> {
    let path = family_path(cfg);
    if !path.exists() {
        return Err(Error::Config(format!("family file {} not found", path.display())));
    }
    Family::load(&path)
}

fn family_environment(cfg: &RunConfig, fam: &Family) -> Result<crate::family::Environment> {
    let pv = &fam.provenance;
    let seq = pv.sequence.unwrap_or(cfg.sequence);
    let pick = |a: &Vec<u64>, b: &Vec<u64>| if a.is_empty() { b.clone() } else { a.clone() };
    cfg.environment(seq, pick(&pv.p_pool, &cfg.p_pool), pick(&pv.q_pool, &cfg.q_pool), &fam.params)
}

fn ratio(r: &Rational) -> String {
    r.to_string()
}

pub fn run(cmd: &Command, cfg: &RunConfig) -> Result<Outcome> {
    let mut em = Emitter {
        cfg,
        command: cmd.name(),
        files: Vec::new(),
    };
    let (pass, summary) = match cmd {
        Command::Residues { .. } => {
            let lambda = cfg.sequence.lambda(cfg.t)?;
            let (factors, combined) = lambda_factors(cfg.sequence, cfg.t)?;
            let crt_agrees = combined == lambda;
            let summary = format!(
                "|Λ_{}| = {} for {} (density {}); CRT {}",
                cfg.t,
                lambda.len(),
                cfg.sequence.label(),
                lambda.density(),
                if crt_agrees { "agrees" } else { "DISAGREES" }
            );
            let csv: String = std::iter::once("a\n".to_string())
                .chain(lambda.elements().iter().map(|a| format!("{a}\n")))
                .collect();
            em.json(
                None,
                crt_agrees,
                ResidueReport {
                    sequence: cfg.sequence.label(),
                    t: cfg.t,
                    size: lambda.len(),
                    density: ratio(&lambda.density()),
                    factors,
                    crt_agrees,
                    elements: lambda.elements().to_vec(),
                },
            )?;
            em.csv("residues.csv", &csv)?;
            (crt_agrees, summary)
        }
        Command::Spacing { .. } => {
            let gamma = &cfg.params.gamma;
            let mut rows = Vec::new();
            let mut chain = Vec::new();
            let mut pass = true;
            for &q in &cfg.chain {
                let lambda = cfg.sequence.lambda(q)?;
                let ident = thickened_measure_identity(&lambda, gamma)?;
                let profile = SpacingProfile::new(lambda.clone())?;
                let mut poisson = Vec::new();
                for th in &cfg.thetas {
                    for j in &cfg.js {
                        poisson.push(poisson_lemma_check(&profile, th, j)?);
                    }
                }
                pass &= ident.0 == ident.1 && poisson.iter().all(|c| c.weak_pass);
                rows.push(SpacingRow {
                    q,
                    size: lambda.len(),
                    thickened_identity: ident,
                    poisson,
                });
                chain.push(lambda);
            }
            let trend = poisson_trend(&chain, &cfg.thetas)?;
            let stated_fail: usize = rows.iter().map(|r| r.poisson.iter().filter(|c| !c.pass).count()).sum();
            let summary = format!(
                "Poisson lemma stated-form failures: {stated_fail}; sup |F_q − e^(−θ)| along the chain: {}; nonincreasing: {}",
                trend
                    .sup_deviation
                    .iter()
                    .map(|(q, d)| format!("{q}:{d:.4}"))
                    .collect::<Vec<_>>()
                    .join(", "),
                trend.nonincreasing
            );
            em.csv("spacing.csv", &trend_csv(&trend))?;
            em.json(
                None,
                pass,
                SpacingReport {
                    gamma: gamma.to_string(),
                    rows,
                    sup_deviation: trend.sup_deviation.clone(),
                    trend_nonincreasing: trend.nonincreasing,
                },
            )?;
            (pass, summary)
        }
        Command::Equidist { .. } => {
            let scan = empirical_n(cfg.sequence, cfg.equidist_q, &cfg.equidist_beta, cfg.equidist_horizon)?;
            let doubled = empirical_n(cfg.sequence, cfg.equidist_q, &cfg.equidist_beta, 2 * cfg.equidist_horizon)?;
            let stable = scan.empirical_n == doubled.empirical_n;
            let pass = scan.stabilized && stable;
            let summary = format!(
                "N({}) = {} at H = {}, {} at H = {}; stabilized: {}",
                cfg.equidist_q, scan.empirical_n, scan.horizon, doubled.empirical_n, doubled.horizon, scan.stabilized
            );
            let mut csv = String::from("n,min_count,max_count,threshold\n");
            for c in &scan.checkpoints {
                csv.push_str(&format!("{},{},{},{}\n", c.n, c.min_count, c.max_count, c.threshold));
            }
            em.csv("equidist.csv", &csv)?;
            em.json(
                None,
                pass,
                EquidistReport {
                    scan,
                    doubled,
                    stable_under_doubling: stable,
                },
            )?;
            (pass, summary)
        }
        Command::Rearrange { .. } => {
            let (t, p) = (cfg.rearrange_t, cfg.rearrange_p);
            let pt = t.checked_mul(p).ok_or_else(|| Error::Config("pT overflows".into()))?;
            let lambda = cfg.sequence.lambda(pt)?;
            match find_good_omega(t, p, &lambda, cfg.seed, cfg.plan_budget) {
                Ok(out) => {
                    let summary = format!(
                        "T = {t}, p = {p}: plan found after {} candidates, worst margin {}",
                        out.candidates_tried, out.worst_margin
                    );
                    em.json(None, true, &out)?;
                    (true, summary)
                }
                Err(Error::BudgetExhausted(msg)) => {
                    em.json(None, false, &msg)?;
                    (false, format!("T = {t}, p = {p}: {msg}"))
                }
                Err(e) => return Err(e),
            }
        }
        Command::BuildFamily { .. } => {
            let mut env = cfg.environment(cfg.sequence, cfg.p_pool.clone(), cfg.q_pool.clone(), &cfg.params)?;
            let fam = build_family(&cfg.params, &mut env, &cfg.build_options())?;
            let path = family_path(cfg);
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            fam.save(&path)?;
            em.files.push(path.clone());
            let report = verify_family(&fam, &mut env)?;
            let summary = format!(
                "Step ({},{},{}): T = {}, R = {}, P(E) = {}; verification {}",
                fam.params.k,
                fam.params.m,
                fam.params.l,
                fam.t,
                fam.r,
                fam.exceptional_measure(),
                if report.pass { "passed" } else { "FAILED" }
            );
            em.json(Some(&fam.provenance), report.pass, &report)?;
            (report.pass, summary)
        }
        Command::VerifyFamily { .. } => {
            let fam = load_family(cfg)?;
            let mut env = family_environment(cfg, &fam)?;
            let report = verify_family(&fam, &mut env)?;
            let mut pass = report.pass;
            let mut summary = format!(
                "Step ({},{},{}), T = {}: {}",
                fam.params.k,
                fam.params.m,
                fam.params.l,
                fam.t,
                if report.pass { "passed" } else { "FAILED" }
            );
            if let Some(w) = &report.witness {
                summary.push_str(&format!("; witness {w}"));
            }
            let restricted = match cfg.restrict_q {
                Some(q) => {
                    let rf = restrict_family(&fam, env.seq, q, cfg.restrict_b, RestrictMode::AllowFractionalA)?;
                    let rr = verify_restricted(&rf, &mut env)?;
                    pass &= rr.pass;
                    summary.push_str(&format!(
                        "; restriction q = {q}, B = {}: {}",
                        cfg.restrict_b,
                        if rr.pass { "passed" } else { "FAILED" }
                    ));
                    if let Some((x, h)) = rr.witness {
                        summary.push_str(&format!(" (witness x = {x}, h = {})", h + 1));
                    }
                    Some(rr)
                }
                None => None,
            };
            #[derive(Serialize)]
            struct Both<'a, A: Serialize, B: Serialize> {
                family: &'a A,
                restriction: Option<B>,
            }
            em.json(
                Some(&fam.provenance),
                pass,
                Both {
                    family: &report,
                    restriction: restricted,
                },
            )?;
            (pass, summary)
        }
        Command::DemoMaximal { .. } => {
            let fam = load_family(cfg)?;
            let mut env = family_environment(cfg, &fam)?;
            let mut report = demo_maximal(&fam, &mut env, &cfg.maximal_options())?;
            let pass = report.pass();
            em.csv("demo-maximal.csv", &report.to_csv())?;
            let summary = format!(
                "{} points ({}), {} in E skipped, {} violations; ‖sup A_N f‖_1,∞ / E f = {:.6}",
                report.sampled,
                if report.full_enumeration { "full enumeration" } else { "stride sample" },
                report.in_exceptional,
                report.violations,
                report.ratio_f64
            );
            report.points.clear();
            em.json(Some(&fam.provenance), pass, &report)?;
            (pass, summary)
        }
    };
    Ok(Outcome {
        pass,
        files: em.files,
        summary,
    })
}

/// 0 pass, 1 property failure or failed construction, 2 usage or config error.
pub fn exit_code(r: &Result<Outcome>) -> i32 {
    match r {
        Ok(o) if o.pass => 0,
        Ok(_) => 1,
        Err(Error::Config(_) | Error::InvalidArgument(_) | Error::Io(_) | Error::Format(_) | Error::NotCoprime(..)) => 2,
        Err(_) => 1,
    }
}

pub fn main_with(cli: Cli) -> i32 {
    let cfg = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if cfg.workers > 0 {
        // a second initialisation in one process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global();
    }
    let res = run(&cli.command, &cfg);
    match &res {
        Ok(o) => {
            println!("{}", o.summary);
            for f in &o.files {
                println!("wrote {}", display(f));
            }
            if !o.pass {
                eprintln!("{}: property failure", cli.command.name());
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    exit_code(&res)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

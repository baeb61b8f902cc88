//! `phasei`: checks, decompositions and fuzz campaigns for phase-isometries
//! between finite-dimensional normed spaces.
//!
//! Exit codes: 0 success, 1 failed check or campaign, 2 not decomposable,
//! 3 route or input-contract error, 4 functional not exposed, 64 malformed
//! input, 65 dimension mismatch, 66 unreadable or unwritable file.

mod io;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use phase_isometry::campaign::{instance, run_campaign, CampaignConfig, CampaignError};
use phase_isometry::decomposition::{plan_queries, recover_functional};
use phase_isometry::orthogonality::{is_birkhoff_orthogonal, l1_orthogonality_triple};
use phase_isometry::phase_maps::{check_phase_equation, random_points, PointKey};
use phase_isometry::rng::{derive, seeded, GENERATOR};
use phase_isometry::space::Functional;
use phase_isometry::{decompose, DecomposeOptions, NormSpec, PhaseMapOracle, Route, Settings};
use serde_json::json;

use crate::io::{emit, load_space, parse_vector, read_samples, write_samples, CliError, EXIT_FAILED_CHECK};

/// Largest number of pairs `check` forms from a sample pool.
const PAIR_CAP: usize = 10_000;

#[derive(Parser)]
#[command(name = "phasei", version, about = "Phase-isometry checks and decompositions")]
struct Cli {
    /// Relative tolerance; overrides PHASE_TOL.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write JSON output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the phase equation on every pair of a sample pool.
    Check {
        #[arg(long)]
        space: String,
        #[arg(long)]
        samples: PathBuf,
        /// Codomain space when it differs from the domain.
        #[arg(long)]
        codomain: Option<String>,
    },
    /// Factor an oracle as ε·T and print the certificate.
    Decompose {
        #[arg(long)]
        space: String,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long, default_value = "auto")]
        route: Route,
        #[arg(long)]
        declare_surjective: bool,
    },
    /// Birkhoff orthogonality of two vectors.
    Ortho {
        #[arg(long)]
        space: String,
        /// JSON array.
        #[arg(long)]
        x: String,
        /// JSON array.
        #[arg(long)]
        y: String,
    },
    /// Recover the functional φ with x*(x) = ±φ(f(x)).
    Lemma {
        #[arg(long)]
        space: String,
        /// JSON array of the functional's coordinates.
        #[arg(long)]
        functional: String,
        #[command(flatten)]
        oracle: OracleArgs,
        /// Verification samples for function oracles.
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
    /// Write samples of a generated phase-isometry and its hidden truth.
    Gen {
        #[arg(long)]
        space: String,
        /// Keep ε constant on lines through the origin.
        #[arg(long)]
        even: bool,
        /// Truth file with T and the sign rule.
        #[arg(long)]
        hidden: Option<PathBuf>,
        /// Decomposition seed whose query plan is included.
        #[arg(long, default_value_t = 0)]
        plan_seed: u64,
        #[arg(long, default_value = "auto")]
        route: Route,
        /// Extra random points.
        #[arg(long, default_value_t = 64)]
        pool: usize,
    },
    /// Generate, decompose and score many random instances.
    Fuzz {
        #[arg(long)]
        space: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value = "auto")]
        route: Route,
        /// Draw ε independently at x and −x.
        #[arg(long)]
        uneven: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    Identity,
    Generated,
}

#[derive(Args)]
struct OracleArgs {
    /// JSON Lines table of {"x": [...], "fx": [...]}; answers only these points.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "identity")]
    oracle: OracleKind,
    /// Seed of the generated oracle (as written by `gen --seed`).
    #[arg(long, default_value_t = 0)]
    oracle_seed: u64,
    #[arg(long)]
    even: bool,
}

impl OracleArgs {
    fn build(&self, space: &NormSpec) -> Result<PhaseMapOracle, CliError> {
        if let Some(path) = &self.samples {
            let samples = read_samples(path, space, space)?;
            return PhaseMapOracle::from_table(space.clone(), space.clone(), samples)
                .map_err(|e| CliError::Malformed { source: path.display().to_string(), line: None, message: e.to_string() });
        }
        Ok(match self.oracle {
            OracleKind::Identity => PhaseMapOracle::identity(space),
            OracleKind::Generated => instance(space, self.oracle_seed, self.even)
                .map_err(|e| CliError::Usage(e.to_string()))?
                .oracle,
        })
    }
}

fn settings(tol: Option<f64>) -> Result<Settings, CliError> {
    let base = Settings::from_env();
    match tol {
        Some(t) if t.is_finite() && t > 0.0 => Ok(base.with_tol(t)),
        Some(t) => Err(CliError::Usage(format!("--tol must be positive, got {t}"))),
        None => Ok(base),
    }
}

/// All unordered pairs of the pool, or a seeded subset of `PAIR_CAP` of them.
fn form_pairs(n: usize, seed: u64) -> (Vec<(usize, usize)>, usize) {
    let total = n * n.saturating_sub(1) / 2;
    let all = || (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
    if total <= PAIR_CAP {
        return (all().collect(), total);
    }
    let mut picked = rand::seq::index::sample(&mut seeded(seed), total, PAIR_CAP).into_vec();
    picked.sort_unstable();
    let mut chosen = Vec::with_capacity(PAIR_CAP);
    let mut next = picked.into_iter().peekable();
    for (k, pair) in all().enumerate() {
        if next.peek() == Some(&k) {
            chosen.push(pair);
            next.next();
        }
    }
    (chosen, total)
}

fn cmd_check(cli: &Cli, space: &str, samples: &Path, codomain: Option<&str>) -> Result<u8, CliError> {
    let settings = settings(cli.tol)?;
    let domain = load_space(space)?;
    let codomain = codomain.map(load_space).transpose()?.unwrap_or_else(|| domain.clone());
    let table = read_samples(samples, &domain, &codomain)?;
    let xs: Vec<DVector<f64>> = table.iter().map(|(x, _)| x.clone()).collect();
    let f = PhaseMapOracle::from_table(domain.clone(), codomain, table)
        .map_err(|e| CliError::Malformed { source: samples.display().to_string(), line: None, message: e.to_string() })?;
    let (index_pairs, formed) = form_pairs(xs.len(), cli.seed);
    let pairs: Vec<_> = index_pairs.iter().map(|&(i, j)| (xs[i].clone(), xs[j].clone())).collect();
    let report = check_phase_equation(&f, &pairs, &settings).map_err(|e| CliError::Usage(e.to_string()))?;
    eprintln!("{} of {} pairs pass, max discrepancy {:e}", report.passed, report.total, report.max_discrepancy);
    emit(
        cli.out.as_deref(),
        &json!({
            "space": domain,
            "settings": settings,
            "seed": cli.seed,
            "samples": xs.len(),
            "pairs_formed": formed,
            "pairs_checked": pairs.len(),
            "capped": formed > pairs.len(),
            "all_pass": report.all_pass(),
            "report": report,
        }),
    )?;
    Ok(if report.all_pass() { 0 } else { EXIT_FAILED_CHECK })
}

fn cmd_decompose(cli: &Cli, space: &str, oracle: &OracleArgs, route: Route, surjective: bool) -> Result<u8, CliError> {
    let settings = settings(cli.tol)?;
    let space = load_space(space)?;
    let f = oracle.build(&space)?;
    let options = DecomposeOptions { route, declared_surjective: surjective, seed: cli.seed, settings };
    let cert = decompose(&f, &options)?;
    eprintln!(
        "route {}, residual_max {:e}, verified_pairs {}",
        cert.route, cert.residual_max, cert.verified_pairs
    );
    emit(cli.out.as_deref(), &cert)?;
    Ok(0)
}

fn cmd_ortho(cli: &Cli, space: &str, x: &str, y: &str) -> Result<u8, CliError> {
    let settings = settings(cli.tol)?;
    let space = load_space(space)?;
    let x = parse_vector("--x", x, space.dim())?;
    let y = parse_vector("--y", y, space.dim())?;
    let usage = |e: &dyn std::fmt::Display| CliError::Usage(e.to_string());
    let forward = is_birkhoff_orthogonal(&space, &x, &y, &settings).map_err(|e| usage(&e))?;
    let backward = is_birkhoff_orthogonal(&space, &y, &x, &settings).map_err(|e| usage(&e))?;
    let triple = l1_orthogonality_triple(&space, &x, &y, &settings).ok();
    emit(
        cli.out.as_deref(),
        &json!({
            "space": space,
            "x": x.as_slice(),
            "y": y.as_slice(),
            "x_perp_y": forward,
            "y_perp_x": backward,
            "l1_triple": triple,
            "settings": settings,
        }),
    )?;
    Ok(0)
}

fn cmd_lemma(cli: &Cli, space: &str, functional: &str, oracle: &OracleArgs, count: usize) -> Result<u8, CliError> {
    let settings = settings(cli.tol)?;
    let space = load_space(space)?;
    let x_star = Functional::new(parse_vector("--functional", functional, space.dim())?);
    let f = oracle.build(&space)?;
    let samples: Vec<DVector<f64>> = match &oracle.samples {
        Some(path) => read_samples(path, &space, &space)?
            .into_iter()
            .map(|(x, _)| x)
            .filter(|x| x.iter().any(|v| *v != 0.0))
            .collect(),
        None => random_points(&space, cli.seed, count),
    };
    let r = recover_functional(&f, &x_star, &samples, &settings)?;
    eprintln!("φ stabilized at t = {}, max discrepancy {:e}", r.stabilized_at, r.max_discrepancy);
    emit(cli.out.as_deref(), &json!({ "recovery": r, "settings": settings }))?;
    Ok(0)
}

/// Points the `lemma` command queries for coordinate and all-ones functionals.
fn lemma_probes(space: &NormSpec, settings: &Settings) -> Vec<DVector<f64>> {
    let n = space.dim();
    let mut candidates: Vec<DVector<f64>> =
        (0..n).map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })).collect();
    candidates.push(DVector::from_element(n, 1.0));
    let mut probes = Vec::new();
    for c in candidates {
        let Ok(dual) = space.dual_norm(&Functional::new(c.clone())) else { continue };
        let Ok(exposure) = space.is_w_star_exposed(&Functional::new(c / dual), settings) else { continue };
        if let Some(u) = exposure.point {
            probes.extend((0..=settings.stabilization_cap.min(5)).map(|k| &u * f64::from(k).exp2()));
        }
    }
    probes
}

fn cmd_gen(cli: &Cli, space: &str, even: bool, hidden: Option<&PathBuf>, plan_seed: u64, route: Route, pool: usize) -> Result<u8, CliError> {
    let settings = settings(cli.tol)?;
    let space = load_space(space)?;
    let out = cli.out.as_deref().ok_or_else(|| CliError::Usage("gen needs --out for the sample file".into()))?;
    let g = instance(&space, cli.seed, even).map_err(|e| CliError::Usage(e.to_string()))?;
    let options = DecomposeOptions { route, declared_surjective: true, seed: plan_seed, settings };
    let planned = plan_queries(&space, &options)?;
    let probes = lemma_probes(&space, &settings);
    let random = random_points(&space, derive(cli.seed, 2), pool);
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for x in planned.iter().chain(&probes).chain(&random) {
        if seen.insert(PointKey::of(x)) {
            let fx = g.oracle.query(x).map_err(|e| CliError::Usage(e.to_string()))?;
            samples.push((x.clone(), fx));
        }
    }
    write_samples(out, &samples)?;
    if let Some(path) = hidden {
        let truth = json!({
            "space": space,
            "seed": cli.seed,
            "even": even,
            "generator": GENERATOR,
            "T": g.truth.map.rows(),
            "rule": g.truth.rule,
        });
        std::fs::write(path, serde_json::to_string_pretty(&truth).expect("truth serializes") + "\n")
            .map_err(|e| CliError::Io { path: path.clone(), message: e.to_string() })?;
    }
    eprintln!("{} samples ({} planned, {} lemma probes, {} random) written to {}", samples.len(), planned.len(), probes.len(), random.len(), out.display());
    Ok(0)
}

fn cmd_fuzz(cli: &Cli, space: &str, trials: usize, route: Route, uneven: bool) -> Result<u8, CliError> {
    let settings = settings(cli.tol)?;
    let space = load_space(space)?;
    let config = CampaignConfig { space, trials, seed: cli.seed, route, settings, even: !uneven };
    let (report, elapsed) = run_campaign(&config).map_err(|e| match e {
        CampaignError::ZeroTrials => CliError::Usage(e.to_string()),
        CampaignError::Route(e) => CliError::Decomposition(e),
    })?;
    eprintln!(
        "{} of {} trials succeeded in {:.3} s; failing seeds {:?}",
        report.counts.success,
        trials,
        elapsed.as_secs_f64(),
        report.failing_seeds
    );
    emit(cli.out.as_deref(), &report)?;
    Ok(if report.all_succeeded() { 0 } else { EXIT_FAILED_CHECK })
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Check { space, samples, codomain } => cmd_check(cli, space, samples, codomain.as_deref()),
        Command::Decompose { space, oracle, route, declare_surjective } => {
            cmd_decompose(cli, space, oracle, *route, *declare_surjective)
        }
        Command::Ortho { space, x, y } => cmd_ortho(cli, space, x, y),
        Command::Lemma { space, functional, oracle, count } => cmd_lemma(cli, space, functional, oracle, *count),
        Command::Gen { space, even, hidden, plan_seed, route, pool } => {
            cmd_gen(cli, space, *even, hidden.as_ref(), *plan_seed, *route, *pool)
        }
        Command::Fuzz { space, trials, route, uneven } => cmd_fuzz(cli, space, *trials, *route, *uneven),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { io::EXIT_MALFORMED } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let _ = emit(cli.out.as_deref(), &e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_pools_use_every_pair() {
        let (pairs, formed) = form_pairs(5, 0);
        assert_eq!(formed, 10);
        assert_eq!(pairs.len(), 10);
    }

    #[test]
    fn large_pools_are_capped_reproducibly() {
        let (pairs, formed) = form_pairs(200, 7);
        assert_eq!(formed, 19_900);
        assert_eq!(pairs.len(), PAIR_CAP);
        assert!(pairs.iter().all(|&(i, j)| i < j && j < 200));
        assert!(pairs.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(pairs, form_pairs(200, 7).0);
    }
}

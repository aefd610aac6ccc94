//! Command-line interface.
//!
//! A JSON [`RunConfig`] (`--config`) is the primary input; flags override its
//! fields. Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 numerical failure, 5 solver stopped at `max_iters`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use cmc_core::data::{generate_synthetic, mask_sample, observe_from_model, SamplingScheme};
use cmc_core::solver::{plais_impute_with, theory_bound, BoundParams, LambdaChoice, SolverConfig, Termination};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bench::{self, ExperimentOutput, ExperimentSpec, Method, ObservationModel};
use crate::config::{GenerateSpec, RunConfig};
use crate::error::{exit, Error, Result};
use crate::io;

#[derive(Debug, Parser)]
#[command(name = "cmc", version, about = "Collective matrix completion")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Observation probability, or a comma-separated grid for experiments.
    #[arg(long, global = true)]
    pub p: Option<String>,
    /// Final penalty: a number, or `auto` for the data-driven heuristic.
    #[arg(long, global = true)]
    pub lambda: Option<String>,
    #[arg(long, global = true)]
    pub nu: Option<f64>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    /// Experiment repetitions.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Worker threads for experiments (0 = all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Log one JSON line per solver iteration to stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    /// Report zero wall times so that outputs are byte-reproducible.
    #[arg(long, global = true)]
    pub no_timing: bool,
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Draw a synthetic collective matrix and write its masked observations.
    Generate,
    /// Fit observations with PLAIS-Impute.
    Fit,
    /// Relative-error sweep over the probability grid.
    Experiment,
    /// Cold-start comparison of the collective and per-source fits.
    Coldstart,
    /// Evaluate the theoretical error bound.
    Bounds,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("--p: {s:?} is not a number")))
        })
        .collect()
}

fn apply_solver_flags(cli: &Cli, solver: &mut SolverConfig) -> Result<()> {
    if let Some(l) = &cli.lambda {
        solver.lambda = if l.eq_ignore_ascii_case("auto") {
            match solver.lambda {
                LambdaChoice::Auto { c } => LambdaChoice::Auto { c },
                LambdaChoice::Fixed { .. } => LambdaChoice::Auto { c: 1.0 },
            }
        } else {
            let value = l
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("--lambda: expected a number or auto, got {l:?}")))?;
            LambdaChoice::Fixed { value }
        };
    }
    if let Some(nu) = cli.nu {
        solver.nu = nu;
    }
    if let Some(eps) = cli.epsilon {
        solver.epsilon = eps;
    }
    if let Some(t) = cli.max_iters {
        solver.max_iters = t;
    }
    Ok(())
}

/// Merges the configuration file with the flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.input.is_some() {
        cfg.input = cli.input.clone();
    }
    if cli.out.is_some() {
        cfg.output = cli.out.clone();
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    cfg.verbose |= cli.verbose;
    if cli.no_timing {
        cfg.timing = false;
    }
    apply_solver_flags(cli, &mut cfg.solver)?;
    if let Some(spec) = cfg.experiment.as_mut() {
        apply_solver_flags(cli, &mut spec.solver)?;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<u8> {
    let cfg = resolve_config(cli)?;
    match cli.command {
        Command::Generate => cmd_generate(cli, &cfg),
        Command::Fit => cmd_fit(&cfg),
        Command::Experiment => cmd_experiment(cli, &cfg, false),
        Command::Coldstart => cmd_experiment(cli, &cfg, true),
        Command::Bounds => cmd_bounds(cli, &cfg),
    }
}

fn print_json<T: Serialize>(value: &T) {
    let line = serde_json::to_string(value).expect("serializable value");
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

#[derive(Serialize)]
struct GenerateSummary<'a> {
    output: &'a Path,
    observations: usize,
    d_u: usize,
    d_vs: &'a [usize],
    p: f64,
}

fn cmd_generate(cli: &Cli, cfg: &RunConfig) -> Result<u8> {
    let seed = cfg.require_seed("generate")?;
    let out = cfg.require_output()?;
    let mut spec = cfg.generate.clone().unwrap_or_else(|| GenerateSpec::desk(1.0));
    if let Some(text) = &cli.p {
        match parse_grid(text)?.as_slice() {
            [p] => spec.p = *p,
            _ => return Err(Error::Config("generate takes a single --p".to_string())),
        }
    }
    let mut root = ChaCha8Rng::seed_from_u64(seed);
    spec.synthetic.seed = root.next_u64();
    let truth = generate_synthetic(&spec.synthetic)?.matrix;
    let scheme = SamplingScheme::Uniform(spec.p);
    let obs = match &spec.observation {
        ObservationModel::Exact => mask_sample(&truth, &scheme, &mut root)?,
        ObservationModel::Sampled { families } => observe_from_model(&truth, families, &scheme, &mut root)?,
    };
    io::save_observations(out, &obs)?;
    io::save_truth(out, &truth)?;
    print_json(&GenerateSummary {
        output: out,
        observations: obs.len(),
        d_u: obs.layout().rows(),
        d_vs: obs.layout().source_cols(),
        p: spec.p,
    });
    Ok(exit::OK)
}

#[derive(Serialize)]
struct FitSummary {
    lambda: f64,
    rank: usize,
    iterations: usize,
    terminated_by: Termination,
    final_objective: f64,
}

fn cmd_fit(cfg: &RunConfig) -> Result<u8> {
    let input = cfg.require_input()?;
    let out = cfg.require_output()?;
    let obs = io::load_observations(input)?;
    if obs.is_empty() {
        return Err(Error::Data(format!(
            "{} contains no observations",
            input.join(io::OBSERVATIONS_FILE).display()
        )));
    }
    let mut solver = cfg.solver.clone();
    if let Some(seed) = cfg.seed {
        solver.seed = seed;
    }
    let start = Instant::now();
    let verbose = cfg.verbose;
    let mut result = plais_impute_with(&obs, &solver, |rec| {
        if verbose {
            let line = serde_json::to_string(rec).expect("serializable record");
            eprintln!("{line}");
        }
    })?;
    result.wall_time_ms = if cfg.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    io::save_fit(out, &solver, &result)?;
    print_json(&FitSummary {
        lambda: result.lambda,
        rank: result.rank(),
        iterations: result.iterations,
        terminated_by: result.terminated_by,
        final_objective: result.final_objective(),
    });
    Ok(match result.terminated_by {
        Termination::MaxIters => exit::MAX_ITERS,
        Termination::Tolerance | Termination::ZeroSolution => exit::OK,
    })
}

fn experiment_spec(cli: &Cli, cfg: &RunConfig) -> Result<ExperimentSpec> {
    let seed = cfg.require_seed("experiment")?;
    let mut spec = match &cfg.experiment {
        Some(s) => s.clone(),
        None => {
            let mut s = ExperimentSpec::desk(1, vec![0.2, 0.4, 0.6, 0.8], 5, seed)?;
            apply_solver_flags(cli, &mut s.solver)?;
            s
        }
    };
    spec.seed = seed;
    spec.timing &= cfg.timing;
    if let Some(text) = &cli.p {
        spec.p_grid = parse_grid(text)?;
    }
    if let Some(t) = cli.trials {
        spec.trials = t;
    }
    spec.validate()?;
    Ok(spec)
}

#[derive(Serialize)]
struct ColdStartSummary {
    target: usize,
    fraction: f64,
    collective_mean_re: f64,
    collective_std_re: f64,
    per_source_mean_re: f64,
    per_source_std_re: f64,
    wins: usize,
    trials: usize,
    sign_test_p: f64,
}

fn write_outputs(out: &Path, stem: &str, output: &ExperimentOutput) -> Result<()> {
    io::write_jsonl(&out.join(format!("{stem}.jsonl")), &output.records)?;
    io::write_jsonl(&out.join(format!("{stem}_traces.jsonl")), &output.traces)
}

fn cmd_experiment(cli: &Cli, cfg: &RunConfig, cold: bool) -> Result<u8> {
    let out = cfg.require_output()?.to_path_buf();
    let spec = experiment_spec(cli, cfg)?;
    let kind = cfg.bound.kind;
    let params = cfg.bound.params;
    if cold {
        let output = bench::run_cold_start(&spec, cfg.jobs)?;
        write_outputs(&out, "coldstart", &output)?;
        let summaries = bench::summarize(&output.records);
        let pick = |m: Method| {
            summaries
                .iter()
                .find(|s| s.method == m)
                .map(|s| (s.mean_re, s.std_re))
                .unwrap_or((f64::NAN, f64::NAN))
        };
        let (wins, trials, sign_test_p) = bench::cold_start_wins(&output.records);
        let summary = ColdStartSummary {
            target: spec.cold_start.target,
            fraction: spec.cold_start.fraction,
            collective_mean_re: pick(Method::Collective).0,
            collective_std_re: pick(Method::Collective).1,
            per_source_mean_re: pick(Method::PerSource).0,
            per_source_std_re: pick(Method::PerSource).1,
            wins,
            trials,
            sign_test_p,
        };
        io::write_json(&out.join("coldstart_summary.json"), &summary)?;
        print_json(&summary);
    } else {
        let output = bench::run_experiment(&spec, cfg.jobs)?;
        write_outputs(&out, "metrics", &output)?;
        let summaries = bench::summarize(&output.records);
        io::write_json(&out.join("summary.json"), &summaries)?;
        for &m in &spec.methods {
            let rows = bench::curve(&output.records, m, kind, &params)?;
            io::write_file(&out.join(format!("curve_{}.csv", m.token())), bench::curve_csv(&rows).as_bytes())?;
        }
        let collective: Vec<_> = output
            .records
            .iter()
            .filter(|r| r.method == Method::Collective)
            .cloned()
            .collect();
        if let Ok(rate) = bench::rate_regression(&collective, kind, &params) {
            io::write_json(&out.join("rate.json"), &rate)?;
        }
        for s in &summaries {
            print_json(s);
        }
    }
    Ok(exit::OK)
}

#[derive(Serialize)]
struct BoundLine {
    kind: cmc_core::solver::BoundKind,
    params: BoundParams,
    bound: f64,
}

fn cmd_bounds(cli: &Cli, cfg: &RunConfig) -> Result<u8> {
    let ps = match &cli.p {
        Some(text) => parse_grid(text)?,
        None => vec![cfg.bound.params.p],
    };
    if ps.is_empty() {
        return Err(Error::Config("--p must list at least one probability".to_string()));
    }
    let mut lines = Vec::with_capacity(ps.len());
    for p in ps {
        let params = BoundParams { p, ..cfg.bound.params };
        lines.push(BoundLine {
            kind: cfg.bound.kind,
            params,
            bound: theory_bound(cfg.bound.kind, &params)?,
        });
    }
    if let Some(out) = &cfg.output {
        io::write_jsonl(&out.join("bounds.jsonl"), &lines)?;
    }
    for l in &lines {
        print_json(l);
    }
    Ok(exit::OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("cmc").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_the_config() {
        let cli = parse(&["fit", "--lambda", "0.5", "--nu", "0.5", "--epsilon", "0", "--seed", "9"]);
        let cfg = resolve_config(&cli).unwrap();
        assert_eq!(cfg.solver.lambda, LambdaChoice::Fixed { value: 0.5 });
        assert_eq!(cfg.solver.nu, 0.5);
        assert_eq!(cfg.solver.epsilon, 0.0);
        assert_eq!(cfg.seed, Some(9));
        let cli = parse(&["fit", "--lambda", "auto"]);
        let c = crate::bench::DESK_LAMBDA_C;
        assert_eq!(resolve_config(&cli).unwrap().solver.lambda, LambdaChoice::Auto { c });
        let cli = parse(&["fit", "--lambda", "much"]);
        assert!(matches!(resolve_config(&cli), Err(Error::Config(_))));
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0.2, 0.4,0.6").unwrap(), vec![0.2, 0.4, 0.6]);
        assert!(parse_grid("").unwrap().is_empty());
        assert!(parse_grid("0.2,x").is_err());
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["cmc", "nonsense"]), exit::CONFIG);
        assert_eq!(run(["cmc", "generate", "--out", "/nonexistent-dir-for-cmc"]), exit::CONFIG);
    }
}

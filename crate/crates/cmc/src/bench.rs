//! Synthetic experiment harness.
//!
//! Every `(p, trial)` pair is an independent job. The ground truth of a trial
//! depends only on `(seed, trial)`, so all probabilities of one trial share
//! the same matrix; masks, splits and solver seeds depend on `(seed, p, trial)`.

use std::time::Instant;

use cmc_core::data::{
    cold_start_fraction, generate_synthetic, mask_sample, observe_from_model, CollectiveMatrix,
    ObservationSet, SamplingScheme, SyntheticConfig,
};
use cmc_core::expfam::ExpFamilyModel;
use cmc_core::objective::{empirical_risk, neg_log_likelihood, FitMode};
use cmc_core::solver::{plais_impute, theory_bound, BoundKind, BoundParams, FitResult, SolverConfig, Termination};
use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `||est - truth||_F / ||truth||_F`.
pub fn relative_error(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if est.shape() != truth.shape() {
        return Err(cmc_core::Error::Shape {
            expected: truth.shape(),
            got: est.shape(),
        }
        .into());
    }
    let denom = truth.norm();
    if denom == 0.0 {
        return Err(cmc_core::Error::ZeroMatrix.into());
    }
    Ok((est - truth).norm() / denom)
}

/// How observed values are produced from the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservationModel {
    /// Masked truth without noise, fitted with a unit-variance Gaussian.
    Exact,
    /// Each kept entry drawn from its source's family at natural parameter `M_ij`.
    Sampled { families: Vec<ExpFamilyModel> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// One fit of the whole collective matrix.
    Collective,
    /// An independent fit of every source matrix.
    PerSource,
}

impl Method {
    pub fn token(&self) -> &'static str {
        match self {
            Method::Collective => "collective",
            Method::PerSource => "per_source",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColdStartSpec {
    pub target: usize,
    /// Share of the target's training entries set to zero.
    pub fraction: f64,
}

impl Default for ColdStartSpec {
    fn default() -> Self {
        ColdStartSpec {
            target: 0,
            fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: String,
    /// Factor model of the truth; its `seed` is replaced per trial.
    pub synthetic: SyntheticConfig,
    pub observation: ObservationModel,
    pub p_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub cold_start: ColdStartSpec,
    /// Record wall-clock times; off makes outputs byte-reproducible.
    #[serde(default = "default_true")]
    pub timing: bool,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Collective, Method::PerSource]
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_true() -> bool {
    true
}

impl ExperimentSpec {
    /// Desk-scale version of the three-source experiment `exp` (dimensions
    /// divided by ten), observed exactly, solved with warm-start width `5 r`.
    pub fn desk(exp: usize, p_grid: Vec<f64>, trials: usize, seed: u64) -> Result<Self> {
        let synthetic = SyntheticConfig::three_source(exp, 10, seed)?;
        let solver = desk_solver(synthetic.ranks[0]);
        Ok(ExperimentSpec {
            id: format!("exp{exp}-desk"),
            synthetic,
            observation: ObservationModel::Exact,
            p_grid,
            trials,
            seed,
            solver,
            methods: default_methods(),
            train_fraction: default_train_fraction(),
            cold_start: ColdStartSpec::default(),
            timing: true,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.p_grid.is_empty() {
            return bad("p_grid must not be empty".to_string());
        }
        if let Some(p) = self.p_grid.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
            return bad(format!("probabilities must lie in (0, 1], got {p}"));
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".to_string());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".to_string());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad(format!("train_fraction must lie in (0, 1], got {}", self.train_fraction));
        }
        let sources = self.synthetic.layout()?.sources();
        if let ObservationModel::Sampled { families } = &self.observation {
            if families.len() != sources {
                return bad(format!("{} families given for {sources} sources", families.len()));
            }
            for f in families {
                f.validate()?;
            }
        }
        if self.cold_start.target >= sources || !(0.0..=1.0).contains(&self.cold_start.fraction) {
            return bad(format!(
                "cold start needs a source below {sources} and a fraction in [0, 1]"
            ));
        }
        self.solver.validate()?;
        Ok(())
    }
}

/// Penalty constant of the desk experiments. Exact observations carry no
/// noise, so the heuristic's default `c = 1` over-shrinks them; `c = 0.1`
/// is still too strong on desk exp.1.
pub const DESK_LAMBDA_C: f64 = 0.01;

/// Solver settings of the desk experiments for blocks of rank `rank`:
/// [`DESK_LAMBDA_C`] and a warm start of width `5 rank`.
pub fn desk_solver(rank: usize) -> SolverConfig {
    SolverConfig {
        lambda: cmc_core::solver::LambdaChoice::Auto { c: DESK_LAMBDA_C },
        initial_rank: 5 * rank,
        ..SolverConfig::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Standard,
    ColdStart,
}

/// One fitted method on one `(p, trial)` job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub experiment: String,
    pub scenario: Scenario,
    pub p: f64,
    pub trial: usize,
    pub method: Method,
    /// Collective RE for the standard scenario; RE on the cold source otherwise.
    pub relative_error: Option<f64>,
    /// RE per source block (standard scenario only).
    pub source_errors: Vec<f64>,
    /// `||W_hat - M||_F^2 / (d_u D)` over the compared block(s).
    pub mse: Option<f64>,
    pub final_rank: usize,
    pub iterations: usize,
    pub terminated_by: Option<Termination>,
    pub lambda: Option<f64>,
    /// Held-out negative log-likelihood or empirical risk on the test split.
    pub heldout: Option<f64>,
    pub wall_time_ms: f64,
    pub trace_id: String,
    pub error: Option<String>,
}

/// Solver trace referenced by [`MetricRecord::trace_id`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub trace_id: String,
    pub objective_history: Vec<f64>,
    pub rank_history: Vec<usize>,
    pub input_rank_history: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub records: Vec<MetricRecord>,
    pub traces: Vec<TraceRecord>,
}

/// Data of one `(p, trial)` job after masking and splitting.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub truth: CollectiveMatrix,
    pub train: ObservationSet,
    pub test: ObservationSet,
    pub solver: SolverConfig,
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const TRUTH_STREAM: u64 = 1 << 63;

/// Generates, masks and splits the data of job `(p_idx, trial)`.
pub fn prepare_trial(spec: &ExperimentSpec, p_idx: usize, trial: usize) -> Result<TrialData> {
    let p = spec.p_grid[p_idx];
    let mut synthetic = spec.synthetic.clone();
    synthetic.seed = stream(spec.seed, TRUTH_STREAM | trial as u64).next_u64();
    let truth = generate_synthetic(&synthetic)?.matrix;
    let mut rng = stream(spec.seed, ((p_idx as u64) << 32) | trial as u64);
    let scheme = SamplingScheme::Uniform(p);
    let observed = match &spec.observation {
        ObservationModel::Exact => mask_sample(&truth, &scheme, &mut rng)?,
        ObservationModel::Sampled { families } => observe_from_model(&truth, families, &scheme, &mut rng)?,
    };
    let (train, test) = observed.split(spec.train_fraction, &mut rng)?;
    let solver = SolverConfig {
        seed: rng.next_u64(),
        ..spec.solver.clone()
    };
    Ok(TrialData {
        truth,
        train,
        test,
        solver,
    })
}

struct Fit {
    estimate: DMatrix<f64>,
    rank: usize,
    iterations: usize,
    terminated_by: Termination,
    lambda: f64,
    wall_time_ms: f64,
    trace: TraceRecord,
}

fn fit(obs: &ObservationSet, cfg: &SolverConfig, timing: bool, trace_id: String) -> Result<Fit> {
    let start = Instant::now();
    let r: FitResult = plais_impute(obs, cfg)?;
    let wall_time_ms = if timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    Ok(Fit {
        estimate: r.estimate(),
        rank: r.rank(),
        iterations: r.iterations,
        terminated_by: r.terminated_by,
        lambda: r.lambda,
        wall_time_ms,
        trace: TraceRecord {
            trace_id,
            objective_history: r.objective_history,
            rank_history: r.rank_history,
            input_rank_history: r.input_rank_history,
        },
    })
}

/// Fits every source on its own and places the estimates side by side.
fn fit_per_source(
    obs: &ObservationSet,
    sources: &[usize],
    cfg: &SolverConfig,
    timing: bool,
    trace_id: &str,
) -> Result<(Vec<Fit>, DMatrix<f64>)> {
    let layout = obs.layout();
    let mut estimate = DMatrix::zeros(layout.rows(), layout.total_cols());
    let mut fits = Vec::with_capacity(sources.len());
    for &v in sources {
        let local = obs.restrict_to_source(v)?;
        let cfg_v = SolverConfig {
            seed: cfg.seed ^ (v as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            ..cfg.clone()
        };
        let f = fit(&local, &cfg_v, timing, format!("{trace_id}/v{v}"))?;
        estimate
            .columns_mut(layout.offset(v), layout.cols(v))
            .copy_from(&f.estimate);
        fits.push(f);
    }
    Ok((fits, estimate))
}

fn heldout(test: &ObservationSet, estimate: &DMatrix<f64>, mode: &FitMode) -> Result<Option<f64>> {
    if test.is_empty() {
        return Ok(None);
    }
    let w = CollectiveMatrix::from_matrix(test.layout().clone(), estimate.clone())?;
    Ok(Some(match mode {
        FitMode::Likelihood => neg_log_likelihood(test, &w)?,
        FitMode::GeneralLoss { losses, .. } => empirical_risk(test, &w, losses)?,
    }))
}

fn source_errors(est: &DMatrix<f64>, truth: &CollectiveMatrix) -> Result<Vec<f64>> {
    let layout = truth.layout();
    (0..layout.sources())
        .map(|v| {
            let cols = est.columns(layout.offset(v), layout.cols(v)).into_owned();
            relative_error(&cols, &truth.block(v).into_owned())
        })
        .collect()
}

fn mean_sq(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    (est - truth).norm_squared() / (truth.nrows() * truth.ncols()) as f64
}

fn trace_id(spec: &ExperimentSpec, scenario: Scenario, p_idx: usize, trial: usize, method: Method) -> String {
    let tag = match scenario {
        Scenario::Standard => "std",
        Scenario::ColdStart => "cold",
    };
    format!("{}/{tag}/p{p_idx}/t{trial}/{}", spec.id, method.token())
}

fn failed(base: MetricRecord, e: &Error) -> MetricRecord {
    MetricRecord {
        error: Some(e.to_string()),
        ..base
    }
}

fn blank(spec: &ExperimentSpec, scenario: Scenario, p_idx: usize, trial: usize, method: Method) -> MetricRecord {
    MetricRecord {
        experiment: spec.id.clone(),
        scenario,
        p: spec.p_grid[p_idx],
        trial,
        method,
        relative_error: None,
        source_errors: Vec::new(),
        mse: None,
        final_rank: 0,
        iterations: 0,
        terminated_by: None,
        lambda: None,
        heldout: None,
        wall_time_ms: 0.0,
        trace_id: trace_id(spec, scenario, p_idx, trial, method),
        error: None,
    }
}

fn standard_job(spec: &ExperimentSpec, p_idx: usize, trial: usize) -> (Vec<MetricRecord>, Vec<TraceRecord>) {
    let mut records = Vec::new();
    let mut traces = Vec::new();
    let data = match prepare_trial(spec, p_idx, trial) {
        Ok(d) => d,
        Err(e) => {
            for &m in &spec.methods {
                records.push(failed(blank(spec, Scenario::Standard, p_idx, trial, m), &e));
            }
            return (records, traces);
        }
    };
    let all: Vec<usize> = (0..data.truth.layout().sources()).collect();
    for &method in &spec.methods {
        let base = blank(spec, Scenario::Standard, p_idx, trial, method);
        let outcome = (|| -> Result<MetricRecord> {
            let (estimate, rank, iterations, terminated_by, lambda, wall, mut tr) = match method {
                Method::Collective => {
                    let f = fit(&data.train, &data.solver, spec.timing, base.trace_id.clone())?;
                    (f.estimate, f.rank, f.iterations, Some(f.terminated_by), Some(f.lambda), f.wall_time_ms, vec![f.trace])
                }
                Method::PerSource => {
                    let (fits, est) = fit_per_source(&data.train, &all, &data.solver, spec.timing, &base.trace_id)?;
                    let rank = fits.iter().map(|f| f.rank).sum();
                    let iterations = fits.iter().map(|f| f.iterations).max().unwrap_or(0);
                    let wall = fits.iter().map(|f| f.wall_time_ms).sum();
                    let term = fits
                        .iter()
                        .map(|f| f.terminated_by)
                        .find(|t| *t == Termination::MaxIters)
                        .or(fits.first().map(|f| f.terminated_by));
                    (est, rank, iterations, term, None, wall, fits.into_iter().map(|f| f.trace).collect())
                }
            };
            traces.append(&mut tr);
            Ok(MetricRecord {
                relative_error: Some(relative_error(&estimate, data.truth.matrix())?),
                source_errors: source_errors(&estimate, &data.truth)?,
                mse: Some(mean_sq(&estimate, data.truth.matrix())),
                final_rank: rank,
                iterations,
                terminated_by,
                lambda,
                heldout: heldout(&data.test, &estimate, &data.solver.mode)?,
                wall_time_ms: wall,
                ..base.clone()
            })
        })();
        records.push(outcome.unwrap_or_else(|e| failed(base, &e)));
    }
    (records, traces)
}

/// Truth of the cold source with its zeroed training positions set to zero.
pub fn cold_truth(truth: &CollectiveMatrix, target: usize, zeroed: &[(usize, usize)]) -> DMatrix<f64> {
    let mut block = truth.block(target).into_owned();
    for &(i, j) in zeroed {
        block[(i, j)] = 0.0;
    }
    block
}

fn cold_job(spec: &ExperimentSpec, p_idx: usize, trial: usize) -> (Vec<MetricRecord>, Vec<TraceRecord>) {
    let mut records = Vec::new();
    let mut traces = Vec::new();
    let target = spec.cold_start.target;
    let prepared = prepare_trial(spec, p_idx, trial).and_then(|data| {
        let cold = cold_start_fraction(&data.train, target, spec.cold_start.fraction)?;
        Ok((data, cold))
    });
    let (data, cold) = match prepared {
        Ok(x) => x,
        Err(e) => {
            for &m in &spec.methods {
                records.push(failed(blank(spec, Scenario::ColdStart, p_idx, trial, m), &e));
            }
            return (records, traces);
        }
    };
    let target_truth = cold_truth(&data.truth, target, &cold.zeroed);
    let layout = data.truth.layout().clone();
    for &method in &spec.methods {
        let base = blank(spec, Scenario::ColdStart, p_idx, trial, method);
        let outcome = (|| -> Result<MetricRecord> {
            let (estimate, f) = match method {
                Method::Collective => {
                    let f = fit(&cold.observations, &data.solver, spec.timing, base.trace_id.clone())?;
                    (f.estimate.columns(layout.offset(target), layout.cols(target)).into_owned(), f)
                }
                Method::PerSource => {
                    let (mut fits, est) =
                        fit_per_source(&cold.observations, &[target], &data.solver, spec.timing, &base.trace_id)?;
                    let f = fits.pop().expect("one source fitted");
                    (est.columns(layout.offset(target), layout.cols(target)).into_owned(), f)
                }
            };
            let record = MetricRecord {
                relative_error: Some(relative_error(&estimate, &target_truth)?),
                mse: Some(mean_sq(&estimate, &target_truth)),
                final_rank: f.rank,
                iterations: f.iterations,
                terminated_by: Some(f.terminated_by),
                lambda: Some(f.lambda),
                wall_time_ms: f.wall_time_ms,
                ..base.clone()
            };
            traces.push(f.trace);
            Ok(record)
        })();
        records.push(outcome.unwrap_or_else(|e| failed(base, &e)));
    }
    (records, traces)
}

fn run_jobs<F>(spec: &ExperimentSpec, jobs: usize, job: F) -> Result<ExperimentOutput>
where
    F: Fn(&ExperimentSpec, usize, usize) -> (Vec<MetricRecord>, Vec<TraceRecord>) + Sync,
{
    spec.validate()?;
    let keys: Vec<(usize, usize)> = (0..spec.p_grid.len())
        .flat_map(|p| (0..spec.trials).map(move |t| (p, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start the work pool: {e}")))?;
    // `collect` on an indexed parallel iterator keeps the key order.
    let parts: Vec<_> = pool.install(|| keys.par_iter().map(|&(p, t)| job(spec, p, t)).collect());
    let mut out = ExperimentOutput::default();
    for (mut r, mut t) in parts {
        out.records.append(&mut r);
        out.traces.append(&mut t);
    }
    Ok(out)
}

/// Fits every method on every `(p, trial)` job. `jobs = 0` uses all cores.
/// Solver failures are recorded in [`MetricRecord::error`].
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> Result<ExperimentOutput> {
    run_jobs(spec, jobs, standard_job)
}

/// Cold-start comparison on source `spec.cold_start.target`: the training
/// entries of the target are partially zeroed, then the collective fit and a
/// fit of the target alone are compared with the zeroed truth of the target.
pub fn run_cold_start(spec: &ExperimentSpec, jobs: usize) -> Result<ExperimentOutput> {
    run_jobs(spec, jobs, cold_job)
}

/// Mean and sample standard deviation of the relative errors at one `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub p: f64,
    pub method: Method,
    pub mean_re: f64,
    pub std_re: f64,
    pub mean_mse: f64,
    pub count: usize,
    pub failures: usize,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per `(p, method)` aggregates in first-appearance order.
pub fn summarize(records: &[MetricRecord]) -> Vec<Summary> {
    let mut keys: Vec<(f64, Method)> = Vec::new();
    for r in records {
        if !keys.iter().any(|&(p, m)| p == r.p && m == r.method) {
            keys.push((r.p, r.method));
        }
    }
    keys.into_iter()
        .map(|(p, method)| {
            let group: Vec<&MetricRecord> = records.iter().filter(|r| r.p == p && r.method == method).collect();
            let res: Vec<f64> = group.iter().filter_map(|r| r.relative_error).collect();
            let mses: Vec<f64> = group.iter().filter_map(|r| r.mse).collect();
            let (mean_re, std_re) = mean_std(&res);
            Summary {
                p,
                method,
                mean_re,
                std_re,
                mean_mse: mean_std(&mses).0,
                count: res.len(),
                failures: group.len() - res.len(),
            }
        })
        .collect()
}

/// Row of a curve file `p,mean_re,std_re,bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub p: f64,
    pub mean_re: f64,
    pub std_re: f64,
    pub bound: f64,
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut s = String::from("p,mean_re,std_re,bound\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            crate::io::format_f64(r.p),
            crate::io::format_f64(r.mean_re),
            crate::io::format_f64(r.std_re),
            crate::io::format_f64(r.bound)
        ));
    }
    s
}

/// Curve of one method with the theory bound evaluated at every `p`.
pub fn curve(records: &[MetricRecord], method: Method, kind: BoundKind, bound: &BoundParams) -> Result<Vec<CurveRow>> {
    summarize(records)
        .into_iter()
        .filter(|s| s.method == method)
        .map(|s| {
            Ok(CurveRow {
                p: s.p,
                mean_re: s.mean_re,
                std_re: s.std_re,
                bound: theory_bound(kind, &BoundParams { p: s.p, ..*bound })?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub p: f64,
    pub mean_mse: f64,
    pub bound: f64,
}

/// Least-squares fit `mean_mse ~ intercept + slope / p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub curve: Vec<RatePoint>,
}

/// Regresses the mean normalized squared error of the successful records on
/// `1/p`. Needs at least four distinct probabilities.
pub fn rate_regression(records: &[MetricRecord], kind: BoundKind, bound: &BoundParams) -> Result<RateFit> {
    let mut ps: Vec<f64> = records.iter().filter(|r| r.mse.is_some()).map(|r| r.p).collect();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    if ps.len() < 4 {
        return Err(Error::Data(format!(
            "rate regression needs at least 4 distinct p values, got {}",
            ps.len()
        )));
    }
    let mut curve = Vec::with_capacity(ps.len());
    for &p in &ps {
        let mses: Vec<f64> = records.iter().filter(|r| r.p == p).filter_map(|r| r.mse).collect();
        curve.push(RatePoint {
            p,
            mean_mse: mean_std(&mses).0,
            bound: theory_bound(kind, &BoundParams { p, ..*bound })?,
        });
    }
    let xs: Vec<f64> = curve.iter().map(|c| 1.0 / c.p).collect();
    let ys: Vec<f64> = curve.iter().map(|c| c.mean_mse).collect();
    let (slope, intercept, r_squared) = ols(&xs, &ys);
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        curve,
    })
}

/// Simple linear regression; returns `(slope, intercept, R^2)`.
pub fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r_squared)
}

/// One-sided sign test: `P(X >= wins)` for `X ~ Binomial(n, 1/2)`.
pub fn sign_test(wins: usize, n: usize) -> f64 {
    if wins == 0 {
        return 1.0;
    }
    if wins > n {
        return 0.0;
    }
    let mut term = 0.5f64.powi(n as i32);
    let mut tail = 0.0;
    for k in 0..=n {
        if k >= wins {
            tail += term;
        }
        term *= (n - k) as f64 / (k + 1) as f64;
    }
    tail.min(1.0)
}

/// Paired comparison of the cold-start records: number of trials where the
/// collective RE is at most the per-source RE, the trial count and the sign
/// test p-value.
pub fn cold_start_wins(records: &[MetricRecord]) -> (usize, usize, f64) {
    let mut wins = 0;
    let mut n = 0;
    for c in records.iter().filter(|r| r.method == Method::Collective) {
        let other = records
            .iter()
            .find(|r| r.method == Method::PerSource && r.trial == c.trial && r.p == c.p);
        if let (Some(a), Some(b)) = (c.relative_error, other.and_then(|o| o.relative_error)) {
            n += 1;
            if a <= b {
                wins += 1;
            }
        }
    }
    (wins, n, sign_test(wins, n))
}

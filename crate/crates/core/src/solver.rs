//! Proximal-gradient solvers for the nuclear-norm penalized objective:
//! plain PG, APG with exact thresholding, and PLAIS-Impute (APG with
//! approximate thresholding, warm-started power iterations, continuation on
//! the penalty and momentum restarts). Also the penalty heuristics and the
//! theoretical error bounds.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{estimate_mu, CollectiveMatrix, ObservationSet};
use crate::error::{Error, Result};
use crate::expfam::Family;
use crate::lowrank::{self, PowerOptions, ThinFactors};
use crate::objective::{DataTerm, FitMode, LipschitzLoss};

/// Final penalty level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaChoice {
    Fixed { value: f64 },
    /// [`lambda_heuristic`] (or [`lambda_general_loss`]) with constant `c`.
    Auto { c: f64 },
}

/// Step size `1/L` of the gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSize {
    /// `L` = the gradient Lipschitz constant of the data term.
    Auto,
    Fixed { lipschitz: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub lambda: LambdaChoice,
    /// Continuation decay in (0, 1).
    pub nu: f64,
    /// Stop once the objective changes by at most `epsilon`; 0 runs all iterations.
    pub epsilon: f64,
    pub max_iters: usize,
    pub step: StepSize,
    /// Clip the reported estimate to `[-gamma, gamma]`.
    pub clip_gamma: Option<f64>,
    pub mode: FitMode,
    /// Width of the first power-method warm start.
    pub initial_rank: usize,
    /// Random columns added to the warm start when every direction survived.
    pub slack: usize,
    /// Floor of the warm-start drop tolerance. A direction of the previous
    /// row space is dropped when its residual against the current one is
    /// below this floor or below the power-method tolerance `delta_t`.
    pub warm_drop_tol: f64,
    pub power_max_iters: usize,
    pub seed: u64,
    /// Threshold with a full SVD instead of the power method.
    pub exact_svt: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: LambdaChoice::Auto { c: 1.0 },
            nu: 0.7,
            epsilon: 1e-6,
            max_iters: 500,
            step: StepSize::Auto,
            clip_gamma: None,
            mode: FitMode::Likelihood,
            initial_rank: 5,
            slack: 5,
            warm_drop_tol: 1e-10,
            power_max_iters: lowrank::POWER_MAX_ITERS,
            seed: 0,
            exact_svt: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return bad(format!("nu must lie in (0, 1), got {}", self.nu));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1".to_string());
        }
        match self.lambda {
            LambdaChoice::Fixed { value } if !(value >= 0.0) || !value.is_finite() => {
                return bad(format!("lambda must be >= 0, got {value}"));
            }
            LambdaChoice::Auto { c } if !(c > 0.0) || !c.is_finite() => {
                return bad(format!("lambda constant must be > 0, got {c}"));
            }
            _ => {}
        }
        if let StepSize::Fixed { lipschitz } = self.step {
            if !(lipschitz > 0.0) || !lipschitz.is_finite() {
                return bad(format!("Lipschitz constant must be > 0, got {lipschitz}"));
            }
        }
        if let Some(g) = self.clip_gamma {
            if !(g > 0.0) {
                return bad(format!("clip gamma must be > 0, got {g}"));
            }
        }
        if self.initial_rank == 0 || self.power_max_iters == 0 {
            return bad("initial_rank and power_max_iters must be >= 1".to_string());
        }
        if !(self.warm_drop_tol >= 0.0) {
            return bad(format!("warm_drop_tol must be >= 0, got {}", self.warm_drop_tol));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Tolerance,
    MaxIters,
    /// The penalty exceeds the gradient norm at zero, so zero is optimal.
    ZeroSolution,
}

/// One solver iteration, as reported to observers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lambda_t: f64,
    pub rank: usize,
    /// `F_{lambda_t}` at the new iterate.
    pub objective: f64,
    /// `F_lambda` (final penalty) at the new iterate.
    pub final_objective: f64,
    pub input_rank: usize,
    pub power_iterations: usize,
}

/// Trace and result of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(skip)]
    pub factors: ThinFactors,
    pub lambda: f64,
    pub lambda0: f64,
    pub lipschitz: f64,
    /// `F_lambda` at the starting point.
    pub initial_objective: f64,
    /// `F_{lambda_t}` at each new iterate.
    pub objective_history: Vec<f64>,
    /// `F_lambda` at each new iterate; the quantity compared for restarts.
    pub final_objective_history: Vec<f64>,
    pub lambda_history: Vec<f64>,
    pub rank_history: Vec<usize>,
    /// Width of the warm start built from the last two iterates.
    pub input_rank_history: Vec<usize>,
    /// Random probe columns added on top of the warm start.
    pub probe_history: Vec<usize>,
    pub power_iterations: Vec<usize>,
    /// Iterations at which the momentum counter was reset.
    pub restarts: Vec<usize>,
    pub power_cap_hits: usize,
    pub iterations: usize,
    pub terminated_by: Termination,
    pub clip_gamma: Option<f64>,
    /// Filled in by callers that time the fit.
    pub wall_time_ms: f64,
}

impl FitResult {
    pub fn rank(&self) -> usize {
        self.factors.rank()
    }

    /// The estimate, clipped to `[-gamma, gamma]` when requested.
    pub fn estimate(&self) -> DMatrix<f64> {
        let w = self.factors.to_matrix();
        match self.clip_gamma {
            Some(g) => w.map(|x| x.clamp(-g, g)),
            None => w,
        }
    }

    pub fn estimate_collective(&self, obs: &ObservationSet) -> Result<CollectiveMatrix> {
        CollectiveMatrix::from_matrix(obs.layout().clone(), self.estimate())
    }

    pub fn final_objective(&self) -> f64 {
        self.final_objective_history
            .last()
            .copied()
            .unwrap_or(self.initial_objective)
    }

    fn empty(rows: usize, cols: usize, cfg: &SolverConfig) -> Self {
        FitResult {
            factors: ThinFactors::empty(rows, cols),
            lambda: 0.0,
            lambda0: 0.0,
            lipschitz: 0.0,
            initial_objective: 0.0,
            objective_history: Vec::new(),
            final_objective_history: Vec::new(),
            lambda_history: Vec::new(),
            rank_history: Vec::new(),
            input_rank_history: Vec::new(),
            probe_history: Vec::new(),
            power_iterations: Vec::new(),
            restarts: Vec::new(),
            power_cap_hits: 0,
            iterations: 0,
            terminated_by: Termination::MaxIters,
            clip_gamma: cfg.clip_gamma,
            wall_time_ms: 0.0,
        }
    }
}

/// `U_gamma v K` over the sources, with `U_gamma = sqrt(max_v U^2_v)`.
fn curvature_scale(obs: &ObservationSet) -> f64 {
    let fams = obs.families();
    let u = fams
        .iter()
        .map(|m| m.strong_convexity_bounds().1)
        .fold(0.0, f64::max)
        .sqrt();
    let k = fams.iter().map(|m| m.kappa).fold(0.0, f64::max);
    u.max(k)
}

fn log_dim(obs: &ObservationSet) -> f64 {
    let l = obs.layout();
    (l.rows().max(l.total_cols()) as f64).ln()
}

/// `2c (U_gamma v K)(sqrt(mu) + log^{3/2}(d_u v D)) / (d_u D)` with the
/// plug-in `mu` of [`estimate_mu`].
pub fn lambda_heuristic(obs: &ObservationSet, c: f64) -> f64 {
    let mu = estimate_mu(obs);
    2.0 * c * curvature_scale(obs) * (mu.sqrt() + log_dim(obs).powf(1.5)) / obs.layout().entries() as f64
}

/// `2c rho (sqrt(mu) + sqrt(log(d_u v D))) / (d_u D)` with `rho = max_v rho_v`.
pub fn lambda_general_loss(obs: &ObservationSet, losses: &[LipschitzLoss], c: f64) -> f64 {
    let mu = estimate_mu(obs);
    let rho = losses.iter().map(|l| l.rho).fold(0.0, f64::max);
    2.0 * c * rho * (mu.sqrt() + log_dim(obs).sqrt()) / obs.layout().entries() as f64
}

/// The final penalty `cfg.lambda` resolves to on `obs`.
pub fn resolve_lambda(obs: &ObservationSet, cfg: &SolverConfig) -> f64 {
    match (cfg.lambda, &cfg.mode) {
        (LambdaChoice::Fixed { value }, _) => value,
        (LambdaChoice::Auto { c }, FitMode::Likelihood) => lambda_heuristic(obs, c),
        (LambdaChoice::Auto { c }, FitMode::GeneralLoss { losses, .. }) => lambda_general_loss(obs, losses, c),
    }
}

fn resolve_lipschitz(data: &DataTerm, step: StepSize) -> Result<f64> {
    match step {
        StepSize::Fixed { lipschitz } => Ok(lipschitz),
        StepSize::Auto => {
            let l = data.lipschitz()?;
            if l > 0.0 {
                Ok(l)
            } else {
                Err(Error::Numerical("data term has zero curvature".to_string()))
            }
        }
    }
}

/// One proximal-gradient step `SVT_{lambda/L}(W - grad(W)/L)`.
pub fn pg_step(data: &DataTerm, w: &DMatrix<f64>, lambda: f64, lipschitz: f64) -> Result<ThinFactors> {
    let z = w - data.gradient(w)? / lipschitz;
    lowrank::svt_exact(&z, lambda / lipschitz)
}

struct Problem {
    data: DataTerm,
    lambda: f64,
    lipschitz: f64,
    y: DMatrix<f64>,
}

fn setup(obs: &ObservationSet, cfg: &SolverConfig) -> Result<Problem> {
    cfg.validate()?;
    if matches!(cfg.mode, FitMode::Likelihood) {
        for m in obs.families() {
            if matches!(m.family, Family::Gamma { .. } | Family::NegativeBinomial { .. }) {
                return Err(Error::Unsupported(format!(
                    "{} sources need negative parameters, which the zero-centred iterations cannot keep",
                    m.family.token()
                )));
            }
        }
    }
    let data = DataTerm::new(obs, &cfg.mode)?;
    let y = data.observed_matrix();
    if y.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroMatrix);
    }
    let lipschitz = resolve_lipschitz(&data, cfg.step)?;
    Ok(Problem {
        data,
        lambda: resolve_lambda(obs, cfg),
        lipschitz,
        y,
    })
}

fn objective(data: &DataTerm, w: &DMatrix<f64>, nuclear: f64, lambda: f64) -> Result<f64> {
    let f = data.value(w)? + lambda * nuclear;
    if f.is_finite() {
        Ok(f)
    } else {
        Err(Error::Numerical("objective is not finite".to_string()))
    }
}

/// Zero is optimal exactly when `lambda >= ||grad(0)||_op`.
fn zero_is_optimal(p: &Problem) -> Result<bool> {
    let (r, c) = p.data.shape();
    let g0 = p.data.gradient(&DMatrix::zeros(r, c))?;
    Ok(p.lambda >= lowrank::spectral_norm(&g0)?)
}

fn zero_result(p: &Problem, cfg: &SolverConfig) -> Result<FitResult> {
    let (r, c) = p.data.shape();
    let mut out = FitResult::empty(r, c, cfg);
    out.lambda = p.lambda;
    out.lipschitz = p.lipschitz;
    out.initial_objective = objective(&p.data, &DMatrix::zeros(r, c), 0.0, p.lambda)?;
    out.terminated_by = Termination::ZeroSolution;
    Ok(out)
}

/// Accelerated proximal gradient with exact thresholding, started at the
/// observed matrix. `momentum = false` gives plain proximal gradient.
pub fn apg_solve(obs: &ObservationSet, cfg: &SolverConfig, momentum: bool) -> Result<FitResult> {
    let p = setup(obs, cfg)?;
    let (rows, cols) = p.data.shape();
    let mut out = FitResult::empty(rows, cols, cfg);
    out.lambda = p.lambda;
    out.lambda0 = p.lambda;
    out.lipschitz = p.lipschitz;
    let thr = p.lambda / p.lipschitz;

    let mut w_prev = p.y.clone();
    let mut w = p.y.clone();
    let mut f = objective(&p.data, &w, lowrank::nuclear_norm(&w)?, p.lambda)?;
    out.initial_objective = f;
    let (mut a_prev, mut a) = (1.0f64, 1.0f64);
    out.terminated_by = Termination::MaxIters;
    for t in 1..=cfg.max_iters {
        let theta = if momentum { (a_prev - 1.0) / a } else { 0.0 };
        let q = &w + (&w - &w_prev) * theta;
        let z = &q - p.data.gradient(&q)? / p.lipschitz;
        let next = lowrank::svt_exact(&z, thr)?;
        let w_next = next.to_matrix();
        let f_next = objective(&p.data, &w_next, next.nuclear_norm(), p.lambda)?;
        out.objective_history.push(f_next);
        out.final_objective_history.push(f_next);
        out.lambda_history.push(p.lambda);
        out.rank_history.push(next.rank());
        out.iterations = t;
        a_prev = a;
        a = 0.5 * ((4.0 * a * a + 1.0).sqrt() + 1.0);
        w_prev = core::mem::replace(&mut w, w_next);
        out.factors = next;
        let done = (f_next - f).abs() <= cfg.epsilon;
        f = f_next;
        if done {
            out.terminated_by = Termination::Tolerance;
            break;
        }
    }
    Ok(out)
}

fn gaussian_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// PLAIS-Impute; see [`plais_impute_with`].
pub fn plais_impute(obs: &ObservationSet, cfg: &SolverConfig) -> Result<FitResult> {
    plais_impute_with(obs, cfg, |_| {})
}

/// PLAIS-Impute with a callback invoked after every iteration.
///
/// The penalty follows `lambda_t = nu^t (lambda_0 - lambda) + lambda` with
/// `lambda_0 = L sigma_1(Y)`, so the threshold `lambda_t / L` starts at the
/// top singular value of the observed matrix. The power-method tolerance is
/// `nu^t ||Y||_F`. The momentum counter resets whenever `F_lambda` increases.
pub fn plais_impute_with<F>(obs: &ObservationSet, cfg: &SolverConfig, mut observer: F) -> Result<FitResult>
where
    F: FnMut(&IterationRecord),
{
    let p = setup(obs, cfg)?;
    if zero_is_optimal(&p)? {
        return zero_result(&p, cfg);
    }
    let (rows, cols) = p.data.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (u0, s0, v0) = lowrank::rank1_svd(&p.y)?;
    let lambda0 = p.lipschitz * s0;
    let delta0 = p.y.norm();

    let mut out = FitResult::empty(rows, cols, cfg);
    out.lambda = p.lambda;
    out.lambda0 = lambda0;
    out.lipschitz = p.lipschitz;

    let mut cur = ThinFactors {
        u: DMatrix::from_column_slice(rows, 1, u0.as_slice()),
        sigma: vec![s0],
        v: DMatrix::from_column_slice(cols, 1, v0.as_slice()),
    };
    let mut w = cur.to_matrix();
    let mut w_prev = w.clone();
    let mut v_prev = cur.v.clone();
    let mut f = objective(&p.data, &w, s0, p.lambda)?;
    out.initial_objective = f;
    let mut c = 1.0f64;
    let mut saturated = false;
    out.terminated_by = Termination::MaxIters;

    for t in 1..=cfg.max_iters {
        let decay = cfg.nu.powi(t as i32);
        let delta = decay * delta0;
        let lambda_t = decay * (lambda0 - p.lambda) + p.lambda;
        let theta = (c - 1.0) / (c + 2.0);
        let q = &w * (1.0 + theta) - &w_prev * theta;
        let z = &q - p.data.gradient(&q)? / p.lipschitz;
        let thr = lambda_t / p.lipschitz;

        // Warm start from the row spaces of the last two iterates.
        let (r, input_rank, probes) = if t == 1 {
            let k = cfg.initial_rank;
            let mut start = DMatrix::zeros(cols, k);
            start.set_column(0, &cur.v.column(0));
            start.columns_mut(1, k - 1).copy_from(&gaussian_columns(&mut rng, cols, k - 1));
            let r = lowrank::qr_orthonormalize(&start).q;
            let width = r.ncols();
            (r, width, 0)
        } else {
            let mut cols_r: Vec<nalgebra::DVector<f64>> = cur.v.column_iter().map(|c| c.into_owned()).collect();
            if cur.rank() > 0 {
                let resid = &v_prev - &cur.v * (cur.v.transpose() * &v_prev);
                for col in resid.column_iter() {
                    if col.norm() > cfg.warm_drop_tol.max(delta) {
                        cols_r.push(col.into_owned());
                    }
                }
            } else {
                cols_r.extend(v_prev.column_iter().map(|c| c.into_owned()));
            }
            let base = if cols_r.is_empty() {
                DMatrix::zeros(cols, 0)
            } else {
                lowrank::qr_orthonormalize(&DMatrix::from_columns(&cols_r)).q
            };
            let input_rank = base.ncols();
            let probes = if saturated || input_rank == 0 {
                cfg.slack.max(if input_rank == 0 { cfg.initial_rank } else { 0 })
            } else {
                0
            };
            let r = if probes > 0 {
                let extra = gaussian_columns(&mut rng, cols, probes);
                let mut joined = base.clone().resize_horizontally(input_rank + probes, 0.0);
                joined.columns_mut(input_rank, probes).copy_from(&extra);
                lowrank::qr_orthonormalize(&joined).q
            } else {
                base
            };
            (r, input_rank, probes)
        };

        let (next, power_iters) = if cfg.exact_svt {
            (lowrank::svt_exact(&z, thr)?, 0)
        } else {
            let opts = PowerOptions {
                delta,
                max_iters: cfg.power_max_iters,
            };
            let a = lowrank::approx_svt(&z, &r, thr, opts)?;
            if !a.converged {
                out.power_cap_hits += 1;
            }
            saturated = a.factors.rank() >= a.width;
            (a.factors, a.power_iterations)
        };

        let w_next = next.to_matrix();
        let nuclear = next.nuclear_norm();
        let data_next = p.data.value(&w_next)?;
        let f_next = data_next + p.lambda * nuclear;
        let f_t = data_next + lambda_t * nuclear;
        if !f_next.is_finite() || !f_t.is_finite() {
            return Err(Error::Numerical(format!("objective is not finite at iteration {t}")));
        }
        if f_next > f {
            c = 1.0;
            out.restarts.push(t);
        } else {
            c += 1.0;
        }

        let record = IterationRecord {
            iteration: t,
            lambda_t,
            rank: next.rank(),
            objective: f_t,
            final_objective: f_next,
            input_rank,
            power_iterations: power_iters,
        };
        observer(&record);
        out.objective_history.push(f_t);
        out.final_objective_history.push(f_next);
        out.lambda_history.push(lambda_t);
        out.rank_history.push(next.rank());
        out.input_rank_history.push(input_rank);
        out.probe_history.push(probes);
        out.power_iterations.push(power_iters);
        out.iterations = t;

        // Both iterates zero while the penalty is still decreasing: the
        // objective is flat only because the threshold is too high yet.
        let idle = next.rank() == 0 && cur.rank() == 0 && lambda_t > p.lambda;
        let done = !idle && (f_next - f).abs() <= cfg.epsilon;

        w_prev = core::mem::replace(&mut w, w_next);
        v_prev = core::mem::replace(&mut cur, next).v;
        f = f_next;
        if done {
            out.terminated_by = Termination::Tolerance;
            break;
        }
    }
    out.factors = cur;
    Ok(out)
}

/// Outcome of one constant in [`calibrate_lambda`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub c: f64,
    pub lambda: f64,
    /// `lambda / (2 ||grad L_Y(M)||_op)`; at least 1 means the margin holds.
    pub margin: f64,
}

/// Default constants of [`calibrate_lambda`].
pub const CALIBRATION_CONSTANTS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// Compares the heuristic penalty against twice the gradient norm at the
/// true parameter for each constant.
pub fn calibrate_lambda(obs: &ObservationSet, truth: &CollectiveMatrix, constants: &[f64]) -> Result<Vec<CalibrationPoint>> {
    let g = crate::objective::gradient_spectral_norm(obs, truth)?;
    Ok(constants
        .iter()
        .map(|&c| {
            let lambda = lambda_heuristic(obs, c);
            CalibrationPoint {
                c,
                lambda,
                margin: if g > 0.0 { lambda / (2.0 * g) } else { f64::INFINITY },
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Frobenius bound for the exponential-family estimator.
    Expfam,
    /// Excess-risk bound for the Lipschitz-loss estimator.
    General,
}

/// Inputs of [`theory_bound`]. `l2`, `u2` are the curvature bounds `L^2`,
/// `U^2`; `varsigma` is the Bernstein constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub rank: f64,
    pub p: f64,
    pub d_u: f64,
    pub d: f64,
    pub mu: f64,
    pub gamma: f64,
    pub l2: f64,
    pub u2: f64,
    pub kappa: f64,
    pub rho: f64,
    pub varsigma: f64,
    pub c: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        BoundParams {
            rank: 1.0,
            p: 1.0,
            d_u: 1.0,
            d: 1.0,
            mu: 1.0,
            gamma: 1.0,
            l2: 1.0,
            u2: 1.0,
            kappa: 1.0,
            rho: 1.0,
            varsigma: 1.0,
            c: 1.0,
        }
    }
}

/// Right-hand sides of the error bounds, up to the constant `c`:
///
/// * expfam: `c rk/(p^2 d_u D) (gamma^2 + (U v K)^2/L^4)(mu + log^3(d_u v D))`
/// * general: `c rk/p (rho^2 + rho^{3/2} sqrt(gamma/varsigma))(mu + log(d_u v D))/(d_u D)`
pub fn theory_bound(kind: BoundKind, b: &BoundParams) -> Result<f64> {
    let positive = [b.rank, b.p, b.d_u, b.d, b.c];
    if positive.iter().any(|x| !(*x > 0.0)) || !(b.mu >= 0.0) {
        return Err(Error::InvalidConfig("bound parameters must be positive".to_string()));
    }
    let n = b.d_u * b.d;
    let log = b.d_u.max(b.d).ln();
    Ok(match kind {
        BoundKind::Expfam => {
            if !(b.l2 > 0.0) {
                return Err(Error::InvalidConfig("L^2 must be positive".to_string()));
            }
            let scale = b.u2.sqrt().max(b.kappa);
            b.c * b.rank / (b.p * b.p * n) * (b.gamma * b.gamma + scale * scale / (b.l2 * b.l2)) * (b.mu + log.powi(3))
        }
        BoundKind::General => {
            if !(b.varsigma > 0.0) {
                return Err(Error::InvalidConfig("Bernstein constant must be positive".to_string()));
            }
            b.c * b.rank / b.p * (b.rho * b.rho + b.rho.powf(1.5) * (b.gamma / b.varsigma).sqrt()) * (b.mu + log) / n
        }
    })
}

//! Data-fit terms, their gradients and the penalized objective.
//!
//! Every data term is normalized by `1/(d_u D)`, the number of entries of the
//! collective matrix, regardless of how many entries are observed.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{CollectiveMatrix, ObservationSet};
use crate::error::{Error, Result};
use crate::expfam::{softplus, sigmoid, ExpFamilyModel};
use crate::lowrank;

/// Built-in Lipschitz losses `l(y, x)` with `x` the predicted parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loss", rename_all = "lowercase")]
pub enum LossKind {
    /// `max(0, 1 - y x)`, labels in {-1, +1}.
    Hinge,
    /// `log(1 + e^{-y x})`, labels in {-1, +1}.
    Logistic,
    /// Pinball loss `z (tau - 1{z <= 0})` of the residual `z = x - y`.
    Quantile { tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzLoss {
    #[serde(flatten)]
    pub kind: LossKind,
    /// Lipschitz constant in the second argument.
    #[serde(default = "one")]
    pub rho: f64,
}

fn one() -> f64 {
    1.0
}

/// Maps a stored label to {-1, +1}; `0` stands for `-1`.
pub fn binary_label(y: f64) -> Result<f64> {
    if y == 1.0 {
        Ok(1.0)
    } else if y == -1.0 || y == 0.0 {
        Ok(-1.0)
    } else {
        Err(Error::InvalidLabel(y))
    }
}

impl LipschitzLoss {
    pub fn hinge() -> Self {
        LipschitzLoss {
            kind: LossKind::Hinge,
            rho: 1.0,
        }
    }

    pub fn logistic() -> Self {
        LipschitzLoss {
            kind: LossKind::Logistic,
            rho: 1.0,
        }
    }

    pub fn quantile(tau: f64) -> Self {
        LipschitzLoss {
            kind: LossKind::Quantile { tau },
            rho: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidModel(format!("loss constant rho must be > 0, got {}", self.rho)));
        }
        if let LossKind::Quantile { tau } = self.kind {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::InvalidModel(format!("quantile level must lie in (0, 1), got {tau}")));
            }
        }
        Ok(())
    }

    pub fn token(&self) -> &'static str {
        match self.kind {
            LossKind::Hinge => "hinge",
            LossKind::Logistic => "logistic",
            LossKind::Quantile { .. } => "quantile",
        }
    }

    fn label(&self, y: f64) -> Result<f64> {
        match self.kind {
            LossKind::Hinge | LossKind::Logistic => binary_label(y),
            LossKind::Quantile { .. } if y.is_finite() => Ok(y),
            LossKind::Quantile { .. } => Err(Error::InvalidLabel(y)),
        }
    }

    pub fn value(&self, y: f64, x: f64) -> Result<f64> {
        let y = self.label(y)?;
        Ok(match self.kind {
            LossKind::Hinge => (1.0 - y * x).max(0.0),
            LossKind::Logistic => softplus(-y * x),
            LossKind::Quantile { tau } => pinball(tau, x - y),
        })
    }

    /// An element of the subdifferential in `x`. At the hinge kink the
    /// zero-slope endpoint is returned.
    pub fn subgradient(&self, y: f64, x: f64) -> Result<f64> {
        let y = self.label(y)?;
        Ok(match self.kind {
            LossKind::Hinge => {
                if y * x < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
            LossKind::Logistic => -y * sigmoid(-y * x),
            LossKind::Quantile { tau } => {
                if x - y > 0.0 {
                    tau
                } else {
                    tau - 1.0
                }
            }
        })
    }

    /// Value of the loss actually minimized by the solver: the logistic loss
    /// itself, or the Moreau envelope with parameter `s` of the pinball loss.
    pub fn smooth_value(&self, y: f64, x: f64, s: f64) -> Result<f64> {
        match self.kind {
            LossKind::Quantile { tau } if s > 0.0 => {
                let z = x - self.label(y)?;
                Ok(if z >= s * tau {
                    tau * z - s * tau * tau / 2.0
                } else if z <= s * (tau - 1.0) {
                    (tau - 1.0) * z - s * (tau - 1.0) * (tau - 1.0) / 2.0
                } else {
                    z * z / (2.0 * s)
                })
            }
            LossKind::Logistic => self.value(y, x),
            _ => Err(self.not_smooth()),
        }
    }

    pub fn smooth_gradient(&self, y: f64, x: f64, s: f64) -> Result<f64> {
        match self.kind {
            LossKind::Quantile { tau } if s > 0.0 => {
                let z = x - self.label(y)?;
                Ok((z / s).clamp(tau - 1.0, tau))
            }
            LossKind::Logistic => self.subgradient(y, x),
            _ => Err(self.not_smooth()),
        }
    }

    /// Lipschitz constant of [`smooth_gradient`](Self::smooth_gradient).
    pub fn smooth_curvature(&self, s: f64) -> Result<f64> {
        match self.kind {
            LossKind::Quantile { .. } if s > 0.0 => Ok(1.0 / s),
            LossKind::Logistic => Ok(0.25),
            _ => Err(self.not_smooth()),
        }
    }

    fn not_smooth(&self) -> Error {
        Error::Unsupported(format!(
            "{} loss has no Lipschitz gradient (hinge is evaluation-only; quantile needs smoothing > 0)",
            self.token()
        ))
    }
}

fn pinball(tau: f64, z: f64) -> f64 {
    if z > 0.0 {
        z * tau
    } else {
        z * (tau - 1.0)
    }
}

/// Which data term is fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FitMode {
    /// Negative log-likelihood of the per-source exponential families.
    Likelihood,
    /// Empirical risk of per-source Lipschitz losses, with Moreau smoothing
    /// parameter `smoothing` for the pinball loss.
    GeneralLoss {
        losses: Vec<LipschitzLoss>,
        #[serde(default)]
        smoothing: f64,
    },
}

/// `F_lambda(W) = data_term + lambda * penalty`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub data_term: f64,
    pub penalty: f64,
    pub total: f64,
    pub lambda: f64,
}

impl ObjectiveValue {
    pub fn new(data_term: f64, penalty: f64, lambda: f64) -> Self {
        ObjectiveValue {
            data_term,
            penalty,
            total: data_term + lambda * penalty,
            lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Term {
    Likelihood(Vec<ExpFamilyModel>),
    Risk { losses: Vec<LipschitzLoss>, smoothing: f64 },
}

/// Observations resolved to global coordinates together with the data term
/// they define. The dense-matrix methods are the solver's view.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTerm {
    rows: usize,
    cols: usize,
    scale: f64,
    index: Vec<(usize, usize, usize)>,
    y: Vec<f64>,
    term: Term,
}

impl DataTerm {
    pub fn new(obs: &ObservationSet, mode: &FitMode) -> Result<Self> {
        let layout = obs.layout();
        let term = match mode {
            FitMode::Likelihood => Term::Likelihood(obs.families().to_vec()),
            FitMode::GeneralLoss { losses, smoothing } => {
                if losses.len() != layout.sources() {
                    return Err(Error::InvalidConfig(format!(
                        "{} losses given for {} sources",
                        losses.len(),
                        layout.sources()
                    )));
                }
                for l in losses {
                    l.validate()?;
                }
                if !(*smoothing >= 0.0) || !smoothing.is_finite() {
                    return Err(Error::InvalidConfig(format!("smoothing must be >= 0, got {smoothing}")));
                }
                Term::Risk {
                    losses: losses.clone(),
                    smoothing: *smoothing,
                }
            }
        };
        let mut index = Vec::with_capacity(obs.len());
        let mut y = Vec::with_capacity(obs.len());
        for e in obs.entries() {
            let (r, c) = obs.position(e);
            index.push((e.source, r, c));
            y.push(e.value);
        }
        let term = DataTerm {
            rows: layout.rows(),
            cols: layout.total_cols(),
            scale: 1.0 / layout.entries() as f64,
            index,
            y,
            term,
        };
        let mut term = term;
        if let Term::Risk { losses, .. } = &term.term {
            for (&(v, _, _), y) in term.index.iter().zip(term.y.iter_mut()) {
                *y = losses[v].label(*y)?;
            }
        }
        Ok(term)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// `1/(d_u D)`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Dense `d_u x D` matrix of the observed values (labels mapped to
    /// {-1, +1} for margin losses), zero elsewhere.
    pub fn observed_matrix(&self) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.rows, self.cols);
        for (&(_, r, c), &v) in self.index.iter().zip(&self.y) {
            y[(r, c)] = v;
        }
        y
    }

    fn check_shape(&self, w: &DMatrix<f64>) -> Result<()> {
        if w.shape() != (self.rows, self.cols) {
            return Err(Error::Shape {
                expected: (self.rows, self.cols),
                got: w.shape(),
            });
        }
        Ok(())
    }

    /// Data term at `w`; the smoothed risk in general-loss mode when the
    /// smoothing parameter is positive.
    pub fn value(&self, w: &DMatrix<f64>) -> Result<f64> {
        self.check_shape(w)?;
        let mut sum = 0.0;
        for (&(v, r, c), &y) in self.index.iter().zip(&self.y) {
            let x = w[(r, c)];
            sum += match &self.term {
                Term::Likelihood(models) => models[v].log_partition(x)? - y * x,
                Term::Risk { losses, smoothing } if *smoothing > 0.0 => {
                    match losses[v].kind {
                        LossKind::Quantile { .. } => losses[v].smooth_value(y, x, *smoothing)?,
                        _ => losses[v].value(y, x)?,
                    }
                }
                Term::Risk { losses, .. } => losses[v].value(y, x)?,
            };
        }
        Ok(sum * self.scale)
    }

    /// Gradient at `w`, zero off the observed entries. In general-loss mode
    /// this is the gradient of the smoothed risk.
    pub fn gradient(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_shape(w)?;
        let mut g = DMatrix::zeros(self.rows, self.cols);
        for (&(v, r, c), &y) in self.index.iter().zip(&self.y) {
            let x = w[(r, c)];
            g[(r, c)] = self.scale
                * match &self.term {
                    Term::Likelihood(models) => models[v].mean(x)? - y,
                    Term::Risk { losses, smoothing } => losses[v].smooth_gradient(y, x, *smoothing)?,
                };
        }
        Ok(g)
    }

    /// Subgradient of the unsmoothed data term.
    pub fn subgradient(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.term {
            Term::Likelihood(_) => self.gradient(w),
            Term::Risk { losses, .. } => {
                self.check_shape(w)?;
                let mut g = DMatrix::zeros(self.rows, self.cols);
                for (&(v, r, c), &y) in self.index.iter().zip(&self.y) {
                    g[(r, c)] = self.scale * losses[v].subgradient(y, w[(r, c)])?;
                }
                Ok(g)
            }
        }
    }

    /// Lipschitz constant of [`gradient`](Self::gradient) on the region where
    /// every family's curvature bound holds: `max_v U^2_v / (d_u D)`.
    pub fn lipschitz(&self) -> Result<f64> {
        let curvature = match &self.term {
            Term::Likelihood(models) => models
                .iter()
                .map(|m| m.strong_convexity_bounds().1)
                .fold(0.0, f64::max),
            Term::Risk { losses, smoothing } => {
                let mut c: f64 = 0.0;
                for l in losses {
                    c = c.max(l.smooth_curvature(*smoothing)?);
                }
                c
            }
        };
        Ok(curvature * self.scale)
    }
}

fn check_layout(obs: &ObservationSet, w: &CollectiveMatrix) -> Result<()> {
    if obs.layout() != w.layout() {
        return Err(Error::InvalidLayout(
            "parameter matrix layout differs from the observations".to_string(),
        ));
    }
    Ok(())
}

/// `-(1/(d_u D)) sum_Omega (y W - G(W))`.
pub fn neg_log_likelihood(obs: &ObservationSet, w: &CollectiveMatrix) -> Result<f64> {
    check_layout(obs, w)?;
    DataTerm::new(obs, &FitMode::Likelihood)?.value(w.matrix())
}

/// Gradient of [`neg_log_likelihood`]; the entry at an observation is
/// `(G'(W) - y)/(d_u D)` and every other entry is zero.
pub fn grad_neg_log_likelihood(obs: &ObservationSet, w: &CollectiveMatrix) -> Result<CollectiveMatrix> {
    check_layout(obs, w)?;
    let g = DataTerm::new(obs, &FitMode::Likelihood)?.gradient(w.matrix())?;
    CollectiveMatrix::from_matrix(obs.layout().clone(), g)
}

/// `max_v U^2_v / (d_u D)`, the gradient Lipschitz constant of the
/// negative log-likelihood over parameters inside every admissible interval.
pub fn lipschitz_grad_constant(obs: &ObservationSet) -> f64 {
    let u2 = obs
        .families()
        .iter()
        .map(|m| m.strong_convexity_bounds().1)
        .fold(0.0, f64::max);
    u2 / obs.layout().entries() as f64
}

pub fn loss_value(loss: &LipschitzLoss, y: f64, x: f64) -> Result<f64> {
    loss.value(y, x)
}

fn risk_mode(losses: &[LipschitzLoss]) -> FitMode {
    FitMode::GeneralLoss {
        losses: losses.to_vec(),
        smoothing: 0.0,
    }
}

/// `(1/(d_u D)) sum_Omega l^v(y, W)`.
pub fn empirical_risk(obs: &ObservationSet, w: &CollectiveMatrix, losses: &[LipschitzLoss]) -> Result<f64> {
    check_layout(obs, w)?;
    DataTerm::new(obs, &risk_mode(losses))?.value(w.matrix())
}

/// A subgradient of [`empirical_risk`]; each entry is bounded by
/// `rho/(d_u D)`.
pub fn risk_subgradient(
    obs: &ObservationSet,
    w: &CollectiveMatrix,
    losses: &[LipschitzLoss],
) -> Result<CollectiveMatrix> {
    check_layout(obs, w)?;
    let g = DataTerm::new(obs, &risk_mode(losses))?.subgradient(w.matrix())?;
    CollectiveMatrix::from_matrix(obs.layout().clone(), g)
}

pub fn nuclear_norm(w: &CollectiveMatrix) -> Result<f64> {
    lowrank::nuclear_norm(w.matrix())
}

/// The penalized objective with the unsmoothed data term of `mode`.
pub fn objective_value(
    obs: &ObservationSet,
    w: &CollectiveMatrix,
    lambda: f64,
    mode: &FitMode,
) -> Result<ObjectiveValue> {
    check_layout(obs, w)?;
    let mode = match mode {
        FitMode::Likelihood => FitMode::Likelihood,
        FitMode::GeneralLoss { losses, .. } => risk_mode(losses),
    };
    let data = DataTerm::new(obs, &mode)?.value(w.matrix())?;
    Ok(ObjectiveValue::new(data, nuclear_norm(w)?, lambda))
}

/// `(1/(d_u D)) sum_Omega d_G(W_hat, W_true)`, the Bregman divergence of each
/// source's log-partition function summed over the observed entries.
pub fn bregman_fit(obs: &ObservationSet, w_hat: &CollectiveMatrix, w_true: &CollectiveMatrix) -> Result<f64> {
    check_layout(obs, w_hat)?;
    check_layout(obs, w_true)?;
    let models = obs.families();
    let mut sum = 0.0;
    for e in obs.entries() {
        let (r, c) = obs.position(e);
        sum += models[e.source].bregman(w_hat.matrix()[(r, c)], w_true.matrix()[(r, c)])?;
    }
    Ok(sum / obs.layout().entries() as f64)
}

/// Operator norm of the likelihood gradient at `w`.
pub fn gradient_spectral_norm(obs: &ObservationSet, w: &CollectiveMatrix) -> Result<f64> {
    lowrank::spectral_norm(grad_neg_log_likelihood(obs, w)?.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BlockLayout, Observation};
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layout_20x30() -> BlockLayout {
        BlockLayout::new(20, vec![10, 20]).unwrap()
    }

    fn models() -> Vec<(ExpFamilyModel, f64, f64)> {
        // (model, parameter range lo, hi)
        vec![
            (ExpFamilyModel::gaussian(1.3), -1.5, 1.5),
            (ExpFamilyModel::binomial(3), -1.5, 1.5),
            (ExpFamilyModel::poisson(), -1.5, 1.5),
            (ExpFamilyModel::gamma_family(2.0, 0.5), -1.9, -0.6),
            (ExpFamilyModel::negative_binomial(1.5, 0.5), -1.9, -0.6),
        ]
    }

    /// Random observed instance with every entry observed with probability 0.6.
    fn instance(model: ExpFamilyModel, lo: f64, hi: f64, seed: u64) -> (ObservationSet, CollectiveMatrix) {
        let layout = layout_20x30();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = CollectiveMatrix::zeros(layout.clone());
        let mut entries = Vec::new();
        for v in 0..2 {
            for i in 0..20 {
                for j in 0..layout.cols(v) {
                    let x = rng.random_range(lo..hi);
                    w.set(v, i, j, x);
                    if rng.random_bool(0.6) {
                        let y = model.sample(rng.random_range(lo..hi), &mut rng).unwrap();
                        entries.push(Observation { source: v, row: i, col: j, value: y });
                    }
                }
            }
        }
        let obs = ObservationSet::new(layout, vec![model, model], entries).unwrap();
        (obs, w)
    }

    fn single(model: ExpFamilyModel, n: usize, y: f64) -> ObservationSet {
        let layout = BlockLayout::single(1, n).unwrap();
        ObservationSet::new(
            layout,
            vec![model],
            vec![Observation { source: 0, row: 0, col: 0, value: y }],
        )
        .unwrap()
    }

    #[test]
    fn likelihood_examples() {
        let layout = layout_20x30();
        let empty = ObservationSet::gaussian(layout.clone(), vec![]).unwrap();
        let w = CollectiveMatrix::zeros(layout.clone());
        assert_eq!(neg_log_likelihood(&empty, &w).unwrap(), 0.0);
        assert_eq!(grad_neg_log_likelihood(&empty, &w).unwrap().matrix().amax(), 0.0);

        let obs = single(ExpFamilyModel::poisson(), 8, 1.0);
        let w = CollectiveMatrix::zeros(obs.layout().clone());
        assert!((neg_log_likelihood(&obs, &w).unwrap() - 1.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn likelihood_matches_loop_oracle() {
        for (k, (model, lo, hi)) in models().into_iter().enumerate() {
            let (obs, w) = instance(model, lo, hi, 10 + k as u64);
            let mut oracle = 0.0;
            for e in obs.entries() {
                let x = w.get(e.source, e.row, e.col);
                oracle += -(e.value * x - model.log_partition(x).unwrap());
            }
            oracle /= 600.0;
            let got = neg_log_likelihood(&obs, &w).unwrap();
            assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1e-300), "{}", model.family.token());
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let h = 1e-5;
        for (k, (model, lo, hi)) in models().into_iter().enumerate() {
            let (obs, w) = instance(model, lo, hi, 20 + k as u64);
            let g = grad_neg_log_likelihood(&obs, &w).unwrap();
            let mut fd = DMatrix::zeros(20, 30);
            for r in 0..20 {
                for c in 0..30 {
                    let mut plus = w.clone();
                    plus.matrix_mut()[(r, c)] += h;
                    let mut minus = w.clone();
                    minus.matrix_mut()[(r, c)] -= h;
                    fd[(r, c)] = (neg_log_likelihood(&obs, &plus).unwrap()
                        - neg_log_likelihood(&obs, &minus).unwrap())
                        / (2.0 * h);
                }
            }
            let rel = (&fd - g.matrix()).norm() / g.matrix().norm();
            assert!(rel < 1e-6, "{}: {rel}", model.family.token());
        }
    }

    #[test]
    fn gradient_vanishes_at_the_mean_link() {
        let layout = BlockLayout::single(3, 4).unwrap();
        let model = ExpFamilyModel::poisson();
        let w = CollectiveMatrix::from_matrix(layout.clone(), DMatrix::from_fn(3, 4, |i, j| 0.1 * (i + j) as f64)).unwrap();
        let entries = vec![
            Observation { source: 0, row: 0, col: 1, value: model.mean(0.1).unwrap() },
            Observation { source: 0, row: 2, col: 3, value: model.mean(0.5).unwrap() },
        ];
        let obs = ObservationSet::new(layout, vec![model], entries).unwrap();
        assert!(grad_neg_log_likelihood(&obs, &w).unwrap().matrix().amax() < 1e-15);
    }

    #[test]
    fn lipschitz_constant_examples() {
        let layout = BlockLayout::single(10, 10).unwrap();
        let obs = ObservationSet::gaussian(layout.clone(), vec![]).unwrap();
        assert!((lipschitz_grad_constant(&obs) - 0.01).abs() < 1e-15);
        let dt = DataTerm::new(&obs, &FitMode::Likelihood).unwrap();
        assert!((dt.lipschitz().unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_constant_bounds_gradient_ratio() {
        for (k, (model, _, _)) in models().into_iter().enumerate() {
            let (lo, hi) = model.admissible_interval();
            let (obs, _) = instance(model, lo.max(-1.9), hi.min(1.9), 30 + k as u64);
            let l = lipschitz_grad_constant(&obs);
            let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
            for _ in 0..100 {
                let a = DMatrix::from_fn(20, 30, |_, _| rng.random_range(lo..hi));
                let b = DMatrix::from_fn(20, 30, |_, _| rng.random_range(lo..hi));
                let ga = grad_neg_log_likelihood(&obs, &CollectiveMatrix::from_matrix(layout_20x30(), a.clone()).unwrap()).unwrap();
                let gb = grad_neg_log_likelihood(&obs, &CollectiveMatrix::from_matrix(layout_20x30(), b.clone()).unwrap()).unwrap();
                let ratio = (ga.matrix() - gb.matrix()).norm() / (a - b).norm();
                assert!(ratio <= l * (1.0 + 1e-9), "{}: {ratio} > {l}", model.family.token());
            }
        }
    }

    #[test]
    fn loss_examples() {
        assert_eq!(LipschitzLoss::hinge().value(1.0, 1.0).unwrap(), 0.0);
        assert!((LipschitzLoss::logistic().value(1.0, 0.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((LipschitzLoss::quantile(0.5).value(0.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(LipschitzLoss::hinge().value(0.5, 1.0), Err(Error::InvalidLabel(0.5)));
        assert_eq!(LipschitzLoss::hinge().value(0.0, 0.5).unwrap(), 1.5);
        assert!(LipschitzLoss::quantile(1.0).validate().is_err());
        assert!(LipschitzLoss { kind: LossKind::Logistic, rho: 0.0 }.validate().is_err());
    }

    #[test]
    fn hinge_kink_returns_zero_slope() {
        let l = LipschitzLoss::hinge();
        assert_eq!(l.subgradient(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(l.subgradient(1.0, 0.5).unwrap(), -1.0);
        assert_eq!(l.subgradient(-1.0, 0.5).unwrap(), 1.0);
    }

    fn label_instance(seed: u64, labels: bool) -> (ObservationSet, CollectiveMatrix) {
        let layout = layout_20x30();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = CollectiveMatrix::from_matrix(layout.clone(), DMatrix::from_fn(20, 30, |_, _| rng.random_range(-2.0..2.0))).unwrap();
        let mut entries = Vec::new();
        for v in 0..2 {
            for i in 0..20 {
                for j in 0..layout.cols(v) {
                    if rng.random_bool(0.5) {
                        let value = if labels {
                            [-1.0, 0.0, 1.0][rng.random_range(0..3)]
                        } else {
                            rng.random_range(-2.0..2.0)
                        };
                        entries.push(Observation { source: v, row: i, col: j, value });
                    }
                }
            }
        }
        (ObservationSet::gaussian(layout, entries).unwrap(), w)
    }

    #[test]
    fn risk_matches_loop_oracle_and_bounds() {
        let sets = [
            (vec![LipschitzLoss::hinge(), LipschitzLoss::logistic()], true),
            (vec![LipschitzLoss::quantile(0.3), LipschitzLoss::quantile(0.8)], false),
        ];
        for (k, (losses, labels)) in sets.iter().enumerate() {
            let (obs, w) = label_instance(40 + k as u64, *labels);
            let mut oracle = 0.0;
            for e in obs.entries() {
                oracle += losses[e.source].value(e.value, w.get(e.source, e.row, e.col)).unwrap();
            }
            oracle /= 600.0;
            let got = empirical_risk(&obs, &w, losses).unwrap();
            assert!((got - oracle).abs() <= 1e-12 * oracle);
            let g = risk_subgradient(&obs, &w, losses).unwrap();
            assert!(g.matrix().amax() <= 1.0 / 600.0 + 1e-18);
        }
        let empty = ObservationSet::gaussian(layout_20x30(), vec![]).unwrap();
        let w = CollectiveMatrix::zeros(layout_20x30());
        let losses = [LipschitzLoss::hinge(), LipschitzLoss::hinge()];
        assert_eq!(empirical_risk(&empty, &w, &losses).unwrap(), 0.0);
    }

    #[test]
    fn hinge_with_large_margins_has_zero_risk() {
        let (obs, _) = label_instance(3, true);
        let mut w = CollectiveMatrix::zeros(obs.layout().clone());
        for e in obs.entries() {
            let y = binary_label(e.value).unwrap();
            w.set(e.source, e.row, e.col, 2.0 * y);
        }
        let losses = [LipschitzLoss::hinge(), LipschitzLoss::hinge()];
        assert_eq!(empirical_risk(&obs, &w, &losses).unwrap(), 0.0);
        assert!(matches!(empirical_risk(&obs, &w, &losses[..1]), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn logistic_subgradient_matches_central_differences() {
        let (obs, w) = label_instance(5, true);
        let losses = [LipschitzLoss::logistic(), LipschitzLoss::logistic()];
        let g = risk_subgradient(&obs, &w, &losses).unwrap();
        let h = 1e-5;
        let mut fd = DMatrix::zeros(20, 30);
        for r in 0..20 {
            for c in 0..30 {
                let mut plus = w.clone();
                plus.matrix_mut()[(r, c)] += h;
                let mut minus = w.clone();
                minus.matrix_mut()[(r, c)] -= h;
                fd[(r, c)] = (empirical_risk(&obs, &plus, &losses).unwrap()
                    - empirical_risk(&obs, &minus, &losses).unwrap())
                    / (2.0 * h);
            }
        }
        assert!((&fd - g.matrix()).norm() / g.matrix().norm() < 1e-6);
    }

    #[test]
    fn smoothed_pinball_is_a_tight_envelope() {
        let l = LipschitzLoss::quantile(0.3);
        let s = 0.1;
        for k in -40..=40 {
            let x = k as f64 * 0.05;
            let exact = l.value(0.0, x).unwrap();
            let smooth = l.smooth_value(0.0, x, s).unwrap();
            assert!(smooth <= exact + 1e-15 && exact - smooth <= s / 2.0 + 1e-15);
            let fd = (l.smooth_value(0.0, x + 1e-6, s).unwrap() - l.smooth_value(0.0, x - 1e-6, s).unwrap()) / 2e-6;
            assert!((fd - l.smooth_gradient(0.0, x, s).unwrap()).abs() < 1e-6);
        }
        assert!(matches!(l.smooth_gradient(0.0, 1.0, 0.0), Err(Error::Unsupported(_))));
        assert!(matches!(LipschitzLoss::hinge().smooth_curvature(1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn nuclear_norm_and_objective() {
        let layout = BlockLayout::new(3, vec![1, 2]).unwrap();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 0.0]));
        let w = CollectiveMatrix::from_matrix(layout.clone(), d).unwrap();
        assert!((nuclear_norm(&w).unwrap() - 4.0).abs() < 1e-14);
        let obs = ObservationSet::gaussian(
            layout,
            vec![Observation { source: 0, row: 0, col: 0, value: 1.0 }],
        )
        .unwrap();
        let f = objective_value(&obs, &w, 0.5, &FitMode::Likelihood).unwrap();
        // G(3) - 1*3 = 4.5 - 3 over 9 entries.
        assert!((f.data_term - 1.5 / 9.0).abs() < 1e-15);
        assert!((f.total - (f.data_term + 0.5 * f.penalty)).abs() <= 1e-12 * f.total);
    }

    #[test]
    fn bregman_fit_examples() {
        let obs = single(ExpFamilyModel::gaussian(1.0), 5, 0.0);
        let a = CollectiveMatrix::zeros(obs.layout().clone());
        let mut b = a.clone();
        assert_eq!(bregman_fit(&obs, &a, &a).unwrap(), 0.0);
        b.set(0, 0, 0, 2.0);
        assert!((bregman_fit(&obs, &b, &a).unwrap() - 2.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn bregman_fit_is_sandwiched() {
        for (k, (model, lo, hi)) in models().into_iter().enumerate() {
            let (obs, w) = instance(model, lo, hi, 50 + k as u64);
            let (alo, ahi) = model.admissible_interval();
            let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
            let w2 = CollectiveMatrix::from_matrix(
                obs.layout().clone(),
                DMatrix::from_fn(20, 30, |_, _| rng.random_range(alo.max(lo)..ahi.min(hi))),
            )
            .unwrap();
            let mut delta2 = 0.0;
            for e in obs.entries() {
                let d = w.get(e.source, e.row, e.col) - w2.get(e.source, e.row, e.col);
                delta2 += d * d;
            }
            delta2 /= 600.0;
            let (l2, u2) = model.strong_convexity_bounds();
            let b = bregman_fit(&obs, &w, &w2).unwrap();
            assert!(l2 / 2.0 * delta2 <= b * (1.0 + 1e-9), "{}", model.family.token());
            assert!(b <= u2 / 2.0 * delta2 * (1.0 + 1e-9), "{}", model.family.token());
        }
    }

    #[test]
    fn objective_is_midpoint_convex() {
        let (obs, w) = instance(ExpFamilyModel::poisson(), -1.0, 1.0, 77);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let q = CollectiveMatrix::from_matrix(obs.layout().clone(), DMatrix::from_fn(20, 30, |_, _| rng.random_range(-1.0..1.0))).unwrap();
            let mid = CollectiveMatrix::from_matrix(obs.layout().clone(), (w.matrix() + q.matrix()) * 0.5).unwrap();
            let f = |m: &CollectiveMatrix| objective_value(&obs, m, 0.01, &FitMode::Likelihood).unwrap().total;
            assert!(f(&mid) <= (f(&w) + f(&q)) / 2.0 + 1e-10);
        }
    }
}

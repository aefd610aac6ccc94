//! Natural exponential families used to model each source.
//!
//! A source with natural parameter `eta` has density `h(x) exp(eta x - G(eta))`.
//! `G` is the log-partition function, `G'` the mean and `G''` the variance.
//! The strong-convexity constants `(L^2, U^2)` bound `G''` on the interval
//! `[-gamma - 1/K, gamma + 1/K]` (clipped to the family's domain for the
//! families defined only for negative `eta`).

use alloc::format;
use alloc::string::{String, ToString};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of grid points used when the bounds are computed numerically.
pub const BOUND_GRID_POINTS: usize = 10_001;

/// Distribution family with its known nuisance parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// Normal with known variance `sigma_sq`; `G(eta) = sigma_sq eta^2 / 2`.
    Gaussian { sigma_sq: f64 },
    /// `trials` Bernoulli draws with the logit link; `G(eta) = N log(1 + e^eta)`.
    Binomial { trials: u32 },
    /// Gamma with known shape; `eta = -rate < 0`, `G(eta) = -shape log(-eta)`.
    ///
    /// `min_abs_eta` is `|gamma_1| ^ |gamma_2|`, the distance from the admissible
    /// parameter interval to zero.
    Gamma { shape: f64, min_abs_eta: f64 },
    /// Negative binomial with known `r`; `eta = log(1 - p) < 0`,
    /// `G(eta) = -r log(1 - e^eta)`.
    NegativeBinomial { r: f64, min_abs_eta: f64 },
    /// Poisson; `G(eta) = e^eta`.
    Poisson,
}

impl Family {
    pub fn token(&self) -> &'static str {
        match self {
            Family::Gaussian { .. } => "gaussian",
            Family::Binomial { .. } => "binomial",
            Family::Gamma { .. } => "gamma",
            Family::NegativeBinomial { .. } => "negbinomial",
            Family::Poisson => "poisson",
        }
    }

    fn negative_domain(&self) -> bool {
        matches!(self, Family::Gamma { .. } | Family::NegativeBinomial { .. })
    }
}

/// One source's distribution family together with the sup-norm bound `gamma`
/// on the natural parameters and the constant `kappa` (the `K` of the
/// strong-convexity assumption).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct ExpFamilyModel {
    pub family: Family,
    pub gamma: f64,
    pub kappa: f64,
}

impl ExpFamilyModel {
    pub fn new(family: Family, gamma: f64, kappa: f64) -> Result<Self> {
        let model = ExpFamilyModel {
            family,
            gamma,
            kappa,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn gaussian(sigma_sq: f64) -> Self {
        Self::unchecked(Family::Gaussian { sigma_sq })
    }

    pub fn binomial(trials: u32) -> Self {
        Self::unchecked(Family::Binomial { trials })
    }

    /// Binomial with a single trial.
    pub fn bernoulli() -> Self {
        Self::binomial(1)
    }

    pub fn poisson() -> Self {
        Self::unchecked(Family::Poisson)
    }

    pub fn gamma_family(shape: f64, min_abs_eta: f64) -> Self {
        Self::unchecked(Family::Gamma { shape, min_abs_eta })
    }

    pub fn negative_binomial(r: f64, min_abs_eta: f64) -> Self {
        Self::unchecked(Family::NegativeBinomial { r, min_abs_eta })
    }

    fn unchecked(family: Family) -> Self {
        ExpFamilyModel {
            family,
            gamma: 1.0,
            kappa: 1.0,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.gamma) {
            return Err(Error::InvalidModel(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !positive(self.kappa) {
            return Err(Error::InvalidModel(format!("kappa must be > 0, got {}", self.kappa)));
        }
        match self.family {
            Family::Gaussian { sigma_sq } if !positive(sigma_sq) => Err(Error::InvalidModel(
                format!("gaussian variance must be > 0, got {sigma_sq}"),
            )),
            Family::Binomial { trials: 0 } => {
                Err(Error::InvalidModel("binomial trial count must be >= 1".to_string()))
            }
            Family::Gamma {
                shape: nuisance,
                min_abs_eta,
            }
            | Family::NegativeBinomial {
                r: nuisance,
                min_abs_eta,
            } => {
                if !positive(nuisance) {
                    return Err(Error::InvalidModel(format!(
                        "{} nuisance parameter must be > 0, got {nuisance}",
                        self.family.token()
                    )));
                }
                // gamma_1 gamma_2 > 0 with both negative: the interval stays away from zero.
                if !positive(min_abs_eta) || min_abs_eta > self.gamma {
                    return Err(Error::InvalidModel(format!(
                        "{} needs 0 < min_abs_eta <= gamma, got min_abs_eta={min_abs_eta}, gamma={}",
                        self.family.token(),
                        self.gamma
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Interval over which the strong-convexity constants are taken.
    pub fn admissible_interval(&self) -> (f64, f64) {
        let reach = self.gamma + 1.0 / self.kappa;
        match self.family {
            Family::Gamma { min_abs_eta, .. } | Family::NegativeBinomial { min_abs_eta, .. } => {
                (-reach, -min_abs_eta)
            }
            _ => (-reach, reach),
        }
    }

    pub fn check_domain(&self, eta: f64) -> Result<()> {
        if !eta.is_finite() || (self.family.negative_domain() && eta >= 0.0) {
            return Err(Error::Domain {
                family: self.family.token(),
                eta,
            });
        }
        Ok(())
    }

    /// Rejects values outside the closure of the family's support, where the
    /// negative log-likelihood is unbounded below.
    pub fn check_observation(&self, y: f64) -> Result<()> {
        let ok = y.is_finite()
            && match self.family {
                Family::Gaussian { .. } => true,
                Family::Binomial { trials } => (0.0..=f64::from(trials)).contains(&y),
                Family::Gamma { .. } | Family::NegativeBinomial { .. } | Family::Poisson => y >= 0.0,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidObservations(format!(
                "value {y} lies outside the support of the {} family",
                self.family.token()
            )))
        }
    }

    /// Log-partition function `G(eta)`.
    pub fn log_partition(&self, eta: f64) -> Result<f64> {
        self.check_domain(eta)?;
        Ok(match self.family {
            Family::Gaussian { sigma_sq } => 0.5 * sigma_sq * eta * eta,
            Family::Binomial { trials } => f64::from(trials) * softplus(eta),
            Family::Gamma { shape, .. } => -shape * (-eta).ln(),
            Family::NegativeBinomial { r, .. } => -r * (-eta.exp_m1()).ln(),
            Family::Poisson => eta.exp(),
        })
    }

    /// Mean `G'(eta)`.
    pub fn mean(&self, eta: f64) -> Result<f64> {
        self.check_domain(eta)?;
        Ok(match self.family {
            Family::Gaussian { sigma_sq } => sigma_sq * eta,
            Family::Binomial { trials } => f64::from(trials) * sigmoid(eta),
            Family::Gamma { shape, .. } => -shape / eta,
            Family::NegativeBinomial { r, .. } => r * eta.exp() / -eta.exp_m1(),
            Family::Poisson => eta.exp(),
        })
    }

    /// Variance `G''(eta)`.
    pub fn variance(&self, eta: f64) -> Result<f64> {
        self.check_domain(eta)?;
        Ok(match self.family {
            Family::Gaussian { sigma_sq } => sigma_sq,
            Family::Binomial { trials } => {
                let e = (-eta.abs()).exp();
                f64::from(trials) * e / ((1.0 + e) * (1.0 + e))
            }
            Family::Gamma { shape, .. } => shape / (eta * eta),
            Family::NegativeBinomial { r, .. } => {
                let d = eta.exp_m1();
                r * eta.exp() / (d * d)
            }
            Family::Poisson => eta.exp(),
        })
    }

    /// `(L^2_gamma, U^2_gamma)`: lower and upper bounds of `G''` on
    /// [`admissible_interval`](Self::admissible_interval).
    ///
    /// Closed forms are used for every family except the negative binomial,
    /// whose bounds are the grid extremes of `G''`.
    pub fn strong_convexity_bounds(&self) -> (f64, f64) {
        let reach = self.gamma + 1.0 / self.kappa;
        match self.family {
            Family::Gaussian { sigma_sq } => (sigma_sq, sigma_sq),
            Family::Binomial { trials } => {
                let n = f64::from(trials);
                let denom = 1.0 + reach.exp();
                (n * (-reach).exp() / (denom * denom), n / 4.0)
            }
            Family::Gamma { shape, min_abs_eta } => {
                (shape / (reach * reach), shape / (min_abs_eta * min_abs_eta))
            }
            Family::NegativeBinomial { .. } => self.grid_variance_bounds(BOUND_GRID_POINTS),
            Family::Poisson => ((-reach).exp(), reach.exp()),
        }
    }

    /// `U_gamma`, the square root of the variance upper bound.
    pub fn variance_bound_sqrt(&self) -> f64 {
        self.strong_convexity_bounds().1.sqrt()
    }

    fn grid_variance_bounds(&self, points: usize) -> (f64, f64) {
        let (lo, hi) = self.admissible_interval();
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for k in 0..points {
            let eta = if k + 1 == points {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (points - 1) as f64
            };
            // The interval lies inside the domain once the model validates.
            if let Ok(v) = self.variance(eta) {
                min = min.min(v);
                max = max.max(v);
            }
        }
        (min, max)
    }

    /// Bregman divergence of `G`: `G(x) - G(y) - (x - y) G'(y)`.
    pub fn bregman(&self, x: f64, y: f64) -> Result<f64> {
        let d = self.log_partition(x)? - self.log_partition(y)? - (x - y) * self.mean(y)?;
        Ok(d.max(0.0))
    }

    /// One draw from the family at natural parameter `eta`.
    pub fn sample<R: Rng + ?Sized>(&self, eta: f64, rng: &mut R) -> Result<f64> {
        self.check_domain(eta)?;
        Ok(match self.family {
            Family::Gaussian { sigma_sq } => Normal::new(sigma_sq * eta, sigma_sq.sqrt())
                .map_err(distr_err)?
                .sample(rng),
            Family::Binomial { trials } => Binomial::new(u64::from(trials), sigmoid(eta))
                .map_err(distr_err)?
                .sample(rng) as f64,
            Family::Gamma { shape, .. } => Gamma::new(shape, -1.0 / eta)
                .map_err(distr_err)?
                .sample(rng),
            Family::NegativeBinomial { r, .. } => {
                // Gamma-Poisson mixture with success odds e^eta / (1 - e^eta).
                let odds = eta.exp() / -eta.exp_m1();
                let rate: f64 = Gamma::new(r, odds)
                    .map_err(distr_err)?
                    .sample(rng);
                poisson_draw(rate, rng)?
            }
            Family::Poisson => poisson_draw(eta.exp(), rng)?,
        })
    }
}

fn distr_err<E: core::fmt::Display>(e: E) -> Error {
    Error::Numerical(format!("{e}"))
}

fn poisson_draw<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<f64> {
    if rate <= 0.0 {
        return Ok(0.0);
    }
    Ok(Poisson::new(rate)
        .map_err(distr_err)?
        .sample(rng))
}

/// `log(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Flat representation used in configuration and sidecar files:
/// `{"family": "poisson", "nuisance": null, "gamma": 1.0, "kappa": 1.0}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelRepr {
    family: String,
    #[serde(default)]
    nuisance: Option<f64>,
    #[serde(default = "one")]
    gamma: f64,
    #[serde(default = "one")]
    kappa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min_abs_eta: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<ModelRepr> for ExpFamilyModel {
    type Error = Error;

    fn try_from(repr: ModelRepr) -> Result<Self> {
        let need = |name: &str| {
            repr.nuisance.ok_or_else(|| {
                Error::InvalidModel(format!("family {name} requires a nuisance parameter"))
            })
        };
        let near = |name: &str| {
            repr.min_abs_eta.ok_or_else(|| {
                Error::InvalidModel(format!("family {name} requires min_abs_eta"))
            })
        };
        let family = match repr.family.as_str() {
            "gaussian" => Family::Gaussian {
                sigma_sq: need("gaussian")?,
            },
            "binomial" => {
                let n = need("binomial")?;
                if n < 1.0 || n.fract() != 0.0 || n > f64::from(u32::MAX) {
                    return Err(Error::InvalidModel(format!(
                        "binomial trial count must be a positive integer, got {n}"
                    )));
                }
                Family::Binomial { trials: n as u32 }
            }
            "gamma" => Family::Gamma {
                shape: need("gamma")?,
                min_abs_eta: near("gamma")?,
            },
            "negbinomial" => Family::NegativeBinomial {
                r: need("negbinomial")?,
                min_abs_eta: near("negbinomial")?,
            },
            "poisson" => Family::Poisson,
            other => return Err(Error::InvalidModel(format!("unknown family '{other}'"))),
        };
        ExpFamilyModel::new(family, repr.gamma, repr.kappa)
    }
}

impl From<ExpFamilyModel> for ModelRepr {
    fn from(model: ExpFamilyModel) -> Self {
        let (nuisance, min_abs_eta) = match model.family {
            Family::Gaussian { sigma_sq } => (Some(sigma_sq), None),
            Family::Binomial { trials } => (Some(f64::from(trials)), None),
            Family::Gamma { shape, min_abs_eta } => (Some(shape), Some(min_abs_eta)),
            Family::NegativeBinomial { r, min_abs_eta } => (Some(r), Some(min_abs_eta)),
            Family::Poisson => (None, None),
        };
        ModelRepr {
            family: model.family.token().to_string(),
            nuisance,
            gamma: model.gamma,
            kappa: model.kappa,
            min_abs_eta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_models() -> [ExpFamilyModel; 5] {
        [
            ExpFamilyModel::gaussian(2.0),
            ExpFamilyModel::binomial(4),
            ExpFamilyModel::gamma_family(2.0, 0.5),
            ExpFamilyModel::negative_binomial(3.0, 0.5),
            ExpFamilyModel::poisson(),
        ]
    }

    fn grid(model: &ExpFamilyModel, n: usize) -> impl Iterator<Item = f64> + '_ {
        let (lo, hi) = model.admissible_interval();
        (0..n).map(move |k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
    }

    #[test]
    fn log_partition_examples() {
        assert_eq!(ExpFamilyModel::poisson().log_partition(0.0).unwrap(), 1.0);
        assert_eq!(ExpFamilyModel::gaussian(1.0).log_partition(0.0).unwrap(), 0.0);
        let g = ExpFamilyModel::binomial(4).log_partition(0.0).unwrap();
        assert!((g - 4.0 * core::f64::consts::LN_2).abs() < 1e-12);
        assert!((g - 2.77259).abs() < 1e-5);
    }

    #[test]
    fn mean_and_variance_examples() {
        assert_eq!(ExpFamilyModel::poisson().mean(0.0).unwrap(), 1.0);
        assert!((ExpFamilyModel::binomial(2).mean(0.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(ExpFamilyModel::gaussian(2.0).variance(-7.3).unwrap(), 2.0);
        assert!((ExpFamilyModel::poisson().variance(3.0f64.ln()).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn observations_outside_the_support_are_rejected() {
        let [gauss, binom, gamma, nb, pois] = all_models();
        assert!(gauss.check_observation(-1e6).is_ok());
        assert!(binom.check_observation(0.0).is_ok() && binom.check_observation(-1.0).is_err());
        assert!(gamma.check_observation(2.5).is_ok() && gamma.check_observation(-0.1).is_err());
        assert!(nb.check_observation(3.0).is_ok() && nb.check_observation(-3.0).is_err());
        assert!(pois.check_observation(0.0).is_ok() && pois.check_observation(-3.0).is_err());
        assert!(pois.check_observation(f64::INFINITY).is_err());
    }

    #[test]
    fn negative_domain_is_rejected() {
        let gamma = ExpFamilyModel::gamma_family(1.0, 0.5);
        assert!(matches!(gamma.log_partition(0.0), Err(Error::Domain { .. })));
        assert!(matches!(gamma.mean(0.3), Err(Error::Domain { .. })));
        let nb = ExpFamilyModel::negative_binomial(1.0, 0.5);
        assert!(nb.variance(0.0).is_err());
        assert!(ExpFamilyModel::poisson().log_partition(f64::NAN).is_err());
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-5;
        for model in all_models() {
            for eta in grid(&model, 41) {
                let fd1 = (model.log_partition(eta + h).unwrap() - model.log_partition(eta - h).unwrap())
                    / (2.0 * h);
                let g1 = model.mean(eta).unwrap();
                assert!((fd1 - g1).abs() <= 1e-6 * g1.abs().max(1.0), "{model:?} eta={eta}");
                let fd2 = (model.mean(eta + h).unwrap() - model.mean(eta - h).unwrap()) / (2.0 * h);
                let g2 = model.variance(eta).unwrap();
                assert!((fd2 - g2).abs() <= 1e-5 * g2.abs().max(1.0), "{model:?} eta={eta}");
            }
        }
    }

    #[test]
    fn convexity_of_log_partition() {
        for model in all_models() {
            let pts: alloc::vec::Vec<f64> = grid(&model, 15).collect();
            for &a in &pts {
                for &b in &pts {
                    let mid = model.log_partition(0.5 * (a + b)).unwrap();
                    let chord =
                        0.5 * model.log_partition(a).unwrap() + 0.5 * model.log_partition(b).unwrap();
                    assert!(mid <= chord + 1e-12);
                    if a != b {
                        assert!(mid < chord, "{model:?} {a} {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn bounds_examples() {
        assert_eq!(ExpFamilyModel::gaussian(1.0).strong_convexity_bounds(), (1.0, 1.0));
        let (l, u) = ExpFamilyModel::poisson().strong_convexity_bounds();
        assert!((l - (-2.0f64).exp()).abs() < 1e-15);
        assert!((u - 2.0f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn bounds_sandwich_variance_on_fine_grid() {
        for model in all_models()
            .into_iter()
            .chain([ExpFamilyModel::poisson().with_gamma(2.0).with_kappa(0.5)])
        {
            let (l, u) = model.strong_convexity_bounds();
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for eta in grid(&model, 10_000) {
                let v = model.variance(eta).unwrap();
                lo = lo.min(v);
                hi = hi.max(v);
            }
            assert!(l <= lo * (1.0 + 1e-12), "{model:?}: {l} > {lo}");
            assert!(hi <= u * (1.0 + 1e-12), "{model:?}: {hi} > {u}");
        }
    }

    #[test]
    fn bregman_examples() {
        let g = ExpFamilyModel::gaussian(1.0);
        assert!((g.bregman(3.0, 1.0).unwrap() - 2.0).abs() < 1e-12);
        let p = ExpFamilyModel::poisson();
        assert!((p.bregman(1.0, 0.0).unwrap() - (core::f64::consts::E - 2.0)).abs() < 1e-12);
        for model in all_models() {
            for eta in grid(&model, 9) {
                assert_eq!(model.bregman(eta, eta).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(ExpFamilyModel::gaussian(0.0).validate().is_err());
        assert!(ExpFamilyModel::binomial(0).validate().is_err());
        assert!(ExpFamilyModel::poisson().with_gamma(-1.0).validate().is_err());
        assert!(ExpFamilyModel::poisson().with_kappa(0.0).validate().is_err());
        assert!(ExpFamilyModel::gamma_family(1.0, 2.0).validate().is_err());
        assert!(ExpFamilyModel::gamma_family(1.0, 0.0).validate().is_err());
    }

    fn moments(model: ExpFamilyModel, eta: f64, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: alloc::vec::Vec<f64> =
            (0..n).map(|_| model.sample(eta, &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        (mean, var)
    }

    #[test]
    fn sampler_examples() {
        let n = 100_000;
        let (m, _) = moments(ExpFamilyModel::gaussian(1.0), 0.7, n, 1);
        assert!((m - 0.7).abs() < 4.0 / (n as f64).sqrt());
        let (m, _) = moments(ExpFamilyModel::poisson(), 0.0, n, 2);
        assert!((m - 1.0).abs() < 0.02);
        let (m, _) = moments(ExpFamilyModel::bernoulli(), 0.0, n, 3);
        assert!((m - 0.5).abs() < 0.01);
    }

    #[test]
    fn sampler_moments_follow_derivatives() {
        let n = 100_000;
        for (k, model) in all_models().into_iter().enumerate() {
            let (lo, hi) = model.admissible_interval();
            let eta = 0.5 * (lo + hi);
            let (m, v) = moments(model, eta, n, 10 + k as u64);
            let mu = model.mean(eta).unwrap();
            let var = model.variance(eta).unwrap();
            let se = (var / n as f64).sqrt();
            assert!((m - mu).abs() < 5.0 * se, "{model:?}: mean {m} vs {mu}");
            assert!((v - var).abs() < 0.05 * var, "{model:?}: var {v} vs {var}");
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let model = ExpFamilyModel::negative_binomial(2.0, 0.3);
        let a = moments(model, -0.8, 100, 42);
        let b = moments(model, -0.8, 100, 42);
        assert_eq!(a, b);
    }

    #[test]
    fn large_parameters_do_not_overflow() {
        let b = ExpFamilyModel::binomial(3);
        assert!(b.log_partition(800.0).unwrap().is_finite());
        assert!((b.mean(800.0).unwrap() - 3.0).abs() < 1e-12);
        assert!(b.variance(-800.0).unwrap() >= 0.0);
        let nb = ExpFamilyModel::negative_binomial(1.0, 1e-3);
        assert!(nb.log_partition(-1e-9).unwrap().is_finite());
    }
}

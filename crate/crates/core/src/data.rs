//! Collective data model: block layout, dense parameter matrices, sparse
//! masked observations, sampling schemes and the synthetic generators.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::ExpFamilyModel;

/// Row count shared by all sources and the column count of each source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LayoutRepr", into = "LayoutRepr")]
pub struct BlockLayout {
    d_u: usize,
    d_vs: Vec<usize>,
    offsets: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct LayoutRepr {
    d_u: usize,
    d_vs: Vec<usize>,
}

impl TryFrom<LayoutRepr> for BlockLayout {
    type Error = Error;
    fn try_from(r: LayoutRepr) -> Result<Self> {
        BlockLayout::new(r.d_u, r.d_vs)
    }
}

impl From<BlockLayout> for LayoutRepr {
    fn from(l: BlockLayout) -> Self {
        LayoutRepr {
            d_u: l.d_u,
            d_vs: l.d_vs,
        }
    }
}

impl BlockLayout {
    pub fn new(d_u: usize, d_vs: Vec<usize>) -> Result<Self> {
        if d_u == 0 {
            return Err(Error::InvalidLayout("d_u must be >= 1".to_string()));
        }
        if d_vs.is_empty() {
            return Err(Error::InvalidLayout("at least one source is required".to_string()));
        }
        if let Some(v) = d_vs.iter().position(|&d| d == 0) {
            return Err(Error::InvalidLayout(format!("source {v} has no columns")));
        }
        let mut offsets = Vec::with_capacity(d_vs.len() + 1);
        offsets.push(0);
        for &d in &d_vs {
            offsets.push(offsets.last().copied().unwrap_or(0) + d);
        }
        Ok(BlockLayout { d_u, d_vs, offsets })
    }

    /// Single-source layout.
    pub fn single(d_u: usize, d: usize) -> Result<Self> {
        Self::new(d_u, vec![d])
    }

    pub fn rows(&self) -> usize {
        self.d_u
    }

    pub fn sources(&self) -> usize {
        self.d_vs.len()
    }

    pub fn source_cols(&self) -> &[usize] {
        &self.d_vs
    }

    pub fn cols(&self, v: usize) -> usize {
        self.d_vs[v]
    }

    /// `D`, the total column count.
    pub fn total_cols(&self) -> usize {
        self.offsets[self.d_vs.len()]
    }

    pub fn offset(&self, v: usize) -> usize {
        self.offsets[v]
    }

    /// `d_u * D`, the normalization of every data term.
    pub fn entries(&self) -> usize {
        self.d_u * self.total_cols()
    }

    pub fn global_col(&self, v: usize, j: usize) -> usize {
        debug_assert!(j < self.d_vs[v]);
        self.offsets[v] + j
    }

    /// Inverse of [`global_col`](Self::global_col).
    pub fn locate(&self, col: usize) -> Option<(usize, usize)> {
        if col >= self.total_cols() {
            return None;
        }
        let v = self.offsets.partition_point(|&o| o <= col) - 1;
        Some((v, col - self.offsets[v]))
    }
}

/// Dense `d_u x D` matrix split into source blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveMatrix {
    layout: BlockLayout,
    values: DMatrix<f64>,
}

impl CollectiveMatrix {
    pub fn zeros(layout: BlockLayout) -> Self {
        let values = DMatrix::zeros(layout.rows(), layout.total_cols());
        CollectiveMatrix { layout, values }
    }

    pub fn from_matrix(layout: BlockLayout, values: DMatrix<f64>) -> Result<Self> {
        let expected = (layout.rows(), layout.total_cols());
        if values.shape() != expected {
            return Err(Error::Shape {
                expected,
                got: values.shape(),
            });
        }
        Ok(CollectiveMatrix { layout, values })
    }

    /// Concatenates source blocks sharing the same row count.
    pub fn from_blocks(blocks: &[DMatrix<f64>]) -> Result<Self> {
        let d_u = blocks.first().map(|b| b.nrows()).unwrap_or(0);
        let layout = BlockLayout::new(d_u, blocks.iter().map(|b| b.ncols()).collect())?;
        let mut out = CollectiveMatrix::zeros(layout);
        for (v, b) in blocks.iter().enumerate() {
            if b.nrows() != d_u {
                return Err(Error::Shape {
                    expected: (d_u, b.ncols()),
                    got: b.shape(),
                });
            }
            out.block_mut(v).copy_from(b);
        }
        Ok(out)
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.values
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.values
    }

    pub fn get(&self, v: usize, i: usize, j: usize) -> f64 {
        self.values[(i, self.layout.global_col(v, j))]
    }

    pub fn set(&mut self, v: usize, i: usize, j: usize, value: f64) {
        let col = self.layout.global_col(v, j);
        self.values[(i, col)] = value;
    }

    pub fn block(&self, v: usize) -> DMatrixView<'_, f64> {
        self.values
            .columns(self.layout.offset(v), self.layout.cols(v))
    }

    pub fn block_mut(&mut self, v: usize) -> DMatrixViewMut<'_, f64> {
        let (off, n) = (self.layout.offset(v), self.layout.cols(v));
        self.values.columns_mut(off, n)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.amax()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.norm()
    }
}

/// One observed entry `Y^v_ij`; `col` is local to source `source`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub source: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Sparse masked observations with one family per source.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    layout: BlockLayout,
    families: Vec<ExpFamilyModel>,
    entries: Vec<Observation>,
}

impl ObservationSet {
    /// Checks ranges, uniqueness of `(v, i, j)` and one valid family per source.
    pub fn new(
        layout: BlockLayout,
        families: Vec<ExpFamilyModel>,
        entries: Vec<Observation>,
    ) -> Result<Self> {
        if families.len() != layout.sources() {
            return Err(Error::InvalidObservations(format!(
                "{} families given for {} sources",
                families.len(),
                layout.sources()
            )));
        }
        for f in &families {
            f.validate()?;
        }
        let mut seen = BTreeSet::new();
        for (k, e) in entries.iter().enumerate() {
            if e.source >= layout.sources() || e.row >= layout.rows() || e.col >= layout.cols(e.source)
            {
                return Err(Error::InvalidObservations(format!(
                    "entry {k} ({}, {}, {}) is out of range",
                    e.source, e.row, e.col
                )));
            }
            if !e.value.is_finite() {
                return Err(Error::InvalidObservations(format!("entry {k} is not finite")));
            }
            families[e.source].check_observation(e.value)?;
            if !seen.insert((e.source, e.row, e.col)) {
                return Err(Error::InvalidObservations(format!(
                    "entry ({}, {}, {}) is observed twice",
                    e.source, e.row, e.col
                )));
            }
        }
        Ok(ObservationSet {
            layout,
            families,
            entries,
        })
    }

    /// Observations with a unit-variance Gaussian (identity link) per source.
    pub fn gaussian(layout: BlockLayout, entries: Vec<Observation>) -> Result<Self> {
        let families = vec![ExpFamilyModel::gaussian(1.0); layout.sources()];
        Self::new(layout, families, entries)
    }

    pub fn with_families(self, families: Vec<ExpFamilyModel>) -> Result<Self> {
        Self::new(self.layout, families, self.entries)
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn families(&self) -> &[ExpFamilyModel] {
        &self.families
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(row, global column)` of an entry.
    pub fn position(&self, e: &Observation) -> (usize, usize) {
        (e.row, self.layout.global_col(e.source, e.col))
    }

    /// The observed collective matrix `Y` with zeros off the mask.
    pub fn dense(&self) -> CollectiveMatrix {
        let mut y = CollectiveMatrix::zeros(self.layout.clone());
        for e in &self.entries {
            y.set(e.source, e.row, e.col, e.value);
        }
        y
    }

    /// Observations of source `v` alone, as a single-source set.
    pub fn restrict_to_source(&self, v: usize) -> Result<ObservationSet> {
        if v >= self.layout.sources() {
            return Err(Error::InvalidObservations(format!("no source {v}")));
        }
        let layout = BlockLayout::single(self.layout.rows(), self.layout.cols(v))?;
        let entries = self
            .entries
            .iter()
            .filter(|e| e.source == v)
            .map(|e| Observation { source: 0, ..*e })
            .collect();
        ObservationSet::new(layout, vec![self.families[v]], entries)
    }

    /// Random partition into `ceil(fraction * |Omega|)` training entries and
    /// the rest. Both parts keep the original entry order.
    pub fn split<R: Rng + ?Sized>(
        &self,
        fraction: f64,
        rng: &mut R,
    ) -> Result<(ObservationSet, ObservationSet)> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidConfig(format!(
                "train fraction must be in [0, 1], got {fraction}"
            )));
        }
        let n = self.entries.len();
        let n_train = ceil_count(fraction * n as f64).min(n);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let mut in_train = vec![false; n];
        for &k in &idx[..n_train] {
            in_train[k] = true;
        }
        let (mut train, mut test) = (Vec::with_capacity(n_train), Vec::with_capacity(n - n_train));
        for (k, e) in self.entries.iter().enumerate() {
            if in_train[k] {
                train.push(*e);
            } else {
                test.push(*e);
            }
        }
        Ok((
            ObservationSet {
                layout: self.layout.clone(),
                families: self.families.clone(),
                entries: train,
            },
            ObservationSet {
                layout: self.layout.clone(),
                families: self.families.clone(),
                entries: test,
            },
        ))
    }
}

fn ceil_count(x: f64) -> usize {
    let c = x.ceil();
    // Guard against 0.8 * 10 = 8.000000000000002 style rounding.
    if c - x > 1.0 - 1e-9 {
        (c - 1.0) as usize
    } else {
        c as usize
    }
}

/// Per-entry sampling probabilities `pi^v_ij`.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingScheme {
    Uniform(f64),
    /// Dense `d_u x D` table of probabilities.
    PerEntry(DMatrix<f64>),
}

impl SamplingScheme {
    pub fn validate(&self, layout: &BlockLayout) -> Result<()> {
        let ok = |p: f64| p > 0.0 && p <= 1.0;
        match self {
            SamplingScheme::Uniform(p) if !ok(*p) => Err(Error::InvalidConfig(format!(
                "sampling probability must be in (0, 1], got {p}"
            ))),
            SamplingScheme::PerEntry(table) => {
                let expected = (layout.rows(), layout.total_cols());
                if table.shape() != expected {
                    return Err(Error::Shape {
                        expected,
                        got: table.shape(),
                    });
                }
                if table.iter().any(|&p| !ok(p)) {
                    return Err(Error::InvalidConfig(
                        "per-entry probabilities must lie in (0, 1]".to_string(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn probability(&self, row: usize, col: usize) -> f64 {
        match self {
            SamplingScheme::Uniform(p) => *p,
            SamplingScheme::PerEntry(t) => t[(row, col)],
        }
    }

    /// Lower bound `p` on all probabilities.
    pub fn min_probability(&self) -> f64 {
        match self {
            SamplingScheme::Uniform(p) => *p,
            SamplingScheme::PerEntry(t) => t.min(),
        }
    }
}

/// Bernoulli mask over all entries of `full`, each kept with its own probability.
///
/// Entries are produced in `(source, row, col)` order and carry the values of
/// `full`. Every source gets a unit-variance Gaussian family; replace with
/// [`ObservationSet::with_families`].
pub fn mask_sample<R: Rng + ?Sized>(
    full: &CollectiveMatrix,
    scheme: &SamplingScheme,
    rng: &mut R,
) -> Result<ObservationSet> {
    let layout = full.layout().clone();
    let positions = mask_positions(&layout, scheme, rng)?;
    let entries = positions
        .into_iter()
        .map(|(source, row, col)| Observation {
            source,
            row,
            col,
            value: full.get(source, row, col),
        })
        .collect();
    ObservationSet::gaussian(layout, entries)
}

fn mask_positions<R: Rng + ?Sized>(
    layout: &BlockLayout,
    scheme: &SamplingScheme,
    rng: &mut R,
) -> Result<Vec<(usize, usize, usize)>> {
    scheme.validate(layout)?;
    let mut out = Vec::new();
    for v in 0..layout.sources() {
        for i in 0..layout.rows() {
            for j in 0..layout.cols(v) {
                let p = scheme.probability(i, layout.global_col(v, j));
                // Bernoulli(1) must keep every entry.
                if p >= 1.0 || rng.random::<f64>() < p {
                    out.push((v, i, j));
                }
            }
        }
    }
    Ok(out)
}

/// Empirical row and column counts per source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Marginals {
    /// `rows[v][i]`: observed entries in row `i` of source `v`.
    pub rows: Vec<Vec<usize>>,
    /// `cols[v][j]`: observed entries in column `j` of source `v`.
    pub cols: Vec<Vec<usize>>,
}

pub fn empirical_marginals(obs: &ObservationSet) -> Marginals {
    let layout = obs.layout();
    let mut rows = vec![vec![0usize; layout.rows()]; layout.sources()];
    let mut cols: Vec<Vec<usize>> = (0..layout.sources()).map(|v| vec![0; layout.cols(v)]).collect();
    for e in obs.entries() {
        rows[e.source][e.row] += 1;
        cols[e.source][e.col] += 1;
    }
    Marginals { rows, cols }
}

/// Plug-in value of the marginal bound `mu`: the larger of the maximal row
/// count summed over sources and the maximal per-source column count.
pub fn estimate_mu(obs: &ObservationSet) -> f64 {
    let m = empirical_marginals(obs);
    let layout = obs.layout();
    let row_max = (0..layout.rows())
        .map(|i| m.rows.iter().map(|r| r[i]).sum::<usize>())
        .max()
        .unwrap_or(0);
    let col_max = m.cols.iter().flatten().copied().max().unwrap_or(0);
    row_max.max(col_max) as f64
}

/// `sum pi^v_ij (A^v_ij)^2`.
pub fn weighted_frobenius_sq(a: &CollectiveMatrix, scheme: &SamplingScheme) -> Result<f64> {
    scheme.validate(a.layout())?;
    Ok(match scheme {
        SamplingScheme::Uniform(p) => p * a.matrix().norm_squared(),
        SamplingScheme::PerEntry(t) => a.matrix().zip_fold(t, 0.0, |acc, x, p| acc + p * x * x),
    })
}

/// Distribution of the entries of the factors `L^v` and `R^v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum FactorLaw {
    Normal { mean: f64, std: f64 },
    Poisson { rate: f64 },
    Bernoulli { p: f64 },
    /// Every entry equal to one.
    Ones,
}

impl FactorLaw {
    fn draw_matrix<R: Rng + ?Sized>(&self, rows: usize, cols: usize, rng: &mut R) -> Result<DMatrix<f64>> {
        let err = |e: &dyn core::fmt::Display| Error::InvalidConfig(format!("factor law: {e}"));
        Ok(match *self {
            FactorLaw::Normal { mean, std } => {
                let d = Normal::new(mean, std).map_err(|e| err(&e))?;
                DMatrix::from_fn(rows, cols, |_, _| d.sample(rng))
            }
            FactorLaw::Poisson { rate } => {
                let d = Poisson::new(rate).map_err(|e| err(&e))?;
                DMatrix::from_fn(rows, cols, |_, _| d.sample(rng))
            }
            FactorLaw::Bernoulli { p } => {
                let d = Bernoulli::new(p).map_err(|e| err(&e))?;
                DMatrix::from_fn(rows, cols, |_, _| if d.sample(rng) { 1.0 } else { 0.0 })
            }
            FactorLaw::Ones => DMatrix::from_element(rows, cols, 1.0),
        })
    }
}

/// Ground-truth generator configuration: `M^v = L^v R^v^T`, each block scaled
/// to sup-norm `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub d_u: usize,
    pub d_vs: Vec<usize>,
    pub ranks: Vec<usize>,
    pub laws: Vec<FactorLaw>,
    pub gamma: f64,
    /// One row factor shared by every block (first `r_v` columns of a common
    /// `d_u x max r_v` draw from the first source's law) instead of
    /// independent row factors.
    #[serde(default)]
    pub shared_rows: bool,
    pub seed: u64,
}

impl SyntheticConfig {
    /// Gaussian `N(0.5, 1)`, Poisson(0.5) and Bernoulli(0.5) factors for the
    /// three experiments (`exp` in 1..=3), dimensions divided by `divisor`.
    pub fn three_source(exp: usize, divisor: usize, seed: u64) -> Result<Self> {
        if !(1..=3).contains(&exp) || divisor == 0 {
            return Err(Error::InvalidConfig(format!(
                "experiment must be 1, 2 or 3 with a positive divisor, got exp={exp}, divisor={divisor}"
            )));
        }
        let d_v = 1000 * exp / divisor;
        let rank = 5 * exp;
        Ok(SyntheticConfig {
            d_u: 3 * d_v,
            d_vs: vec![d_v; 3],
            ranks: vec![rank; 3],
            laws: vec![
                FactorLaw::Normal { mean: 0.5, std: 1.0 },
                FactorLaw::Poisson { rate: 0.5 },
                FactorLaw::Bernoulli { p: 0.5 },
            ],
            gamma: 1.0,
            shared_rows: false,
            seed,
        })
    }

    pub fn layout(&self) -> Result<BlockLayout> {
        BlockLayout::new(self.d_u, self.d_vs.clone())
    }

    fn validate(&self) -> Result<BlockLayout> {
        let layout = self.layout()?;
        let v = layout.sources();
        if self.ranks.len() != v || self.laws.len() != v {
            return Err(Error::InvalidConfig(format!(
                "need one rank and one factor law per source ({v})"
            )));
        }
        for (k, &r) in self.ranks.iter().enumerate() {
            if r == 0 || r > self.d_u.min(self.d_vs[k]) {
                return Err(Error::InvalidConfig(format!(
                    "rank {r} of source {k} must be in 1..=min(d_u, d_v)"
                )));
            }
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("gamma must be > 0, got {}", self.gamma)));
        }
        Ok(layout)
    }
}

/// Output of [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMatrix {
    pub matrix: CollectiveMatrix,
    /// Number of all-zero draws that were discarded, per source.
    pub resamples: Vec<usize>,
}

const MAX_RESAMPLES: usize = 1000;
const SHARED_STREAM: u64 = 1 << 63;

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticMatrix> {
    let layout = cfg.validate()?;
    let mut matrix = CollectiveMatrix::zeros(layout.clone());
    let mut resamples = vec![0; layout.sources()];
    let shared = if cfg.shared_rows {
        let r_max = cfg.ranks.iter().copied().max().unwrap_or(1);
        let mut attempt = 0u64;
        loop {
            let mut rng = substream(cfg.seed, SHARED_STREAM + attempt);
            let l = cfg.laws[0].draw_matrix(cfg.d_u, r_max, &mut rng)?;
            if l.iter().any(|&x| x != 0.0) || attempt as usize >= MAX_RESAMPLES {
                break Some(l);
            }
            attempt += 1;
        }
    } else {
        None
    };
    for (v, count) in resamples.iter_mut().enumerate() {
        let r = cfg.ranks[v];
        let block = loop {
            let attempt = *count as u64;
            let mut rng = substream(cfg.seed, ((v as u64) << 32) | attempt);
            let l = match &shared {
                Some(l) => l.columns(0, r).into_owned(),
                None => cfg.laws[v].draw_matrix(cfg.d_u, r, &mut rng)?,
            };
            let rf = cfg.laws[v].draw_matrix(layout.cols(v), r, &mut rng)?;
            let m = &l * rf.transpose();
            if m.amax() > 0.0 {
                break m;
            }
            *count += 1;
            if *count >= MAX_RESAMPLES {
                return Err(Error::Numerical(format!(
                    "source {v}: every factor draw produced a zero block"
                )));
            }
        };
        let scale = cfg.gamma / block.amax();
        matrix.block_mut(v).copy_from(&(block * scale));
    }
    Ok(SyntheticMatrix { matrix, resamples })
}

/// Masks `params` and draws each kept entry from its source's family at
/// natural parameter `M^v_ij`.
pub fn observe_from_model<R: Rng + ?Sized>(
    params: &CollectiveMatrix,
    families: &[ExpFamilyModel],
    scheme: &SamplingScheme,
    rng: &mut R,
) -> Result<ObservationSet> {
    let layout = params.layout().clone();
    if families.len() != layout.sources() {
        return Err(Error::InvalidObservations(format!(
            "{} families given for {} sources",
            families.len(),
            layout.sources()
        )));
    }
    for (v, f) in families.iter().enumerate() {
        f.validate()?;
        let sup = params.block(v).amax();
        if sup > f.gamma {
            return Err(Error::InvalidObservations(format!(
                "source {v}: parameter sup-norm {sup} exceeds gamma = {}",
                f.gamma
            )));
        }
    }
    let positions = mask_positions(&layout, scheme, rng)?;
    let mut entries = Vec::with_capacity(positions.len());
    for (source, row, col) in positions {
        let eta = params.get(source, row, col);
        let value = families[source].sample(eta, rng)?;
        entries.push(Observation {
            source,
            row,
            col,
            value,
        });
    }
    ObservationSet::new(layout, families.to_vec(), entries)
}

/// Result of [`cold_start_transform`].
#[derive(Debug, Clone, PartialEq)]
pub struct ColdStart {
    pub observations: ObservationSet,
    /// `(row, local col)` of the zeroed entries.
    pub zeroed: Vec<(usize, usize)>,
    /// Set when the target source had nothing to zero.
    pub no_observations: bool,
}

/// Sets the first `ceil(|Omega_v| / 5)` observed entries of source `target`
/// (row-major order) to zero. The mask is unchanged.
pub fn cold_start_transform(obs: &ObservationSet, target: usize) -> Result<ColdStart> {
    cold_start_fraction(obs, target, 0.2)
}

/// [`cold_start_transform`] with an arbitrary fraction in `[0, 1]`.
pub fn cold_start_fraction(obs: &ObservationSet, target: usize, fraction: f64) -> Result<ColdStart> {
    if target >= obs.layout().sources() {
        return Err(Error::InvalidObservations(format!("no source {target}")));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidConfig(format!("cold fraction {fraction} not in [0, 1]")));
    }
    let mut order: Vec<usize> = (0..obs.len())
        .filter(|&k| obs.entries[k].source == target)
        .collect();
    if order.is_empty() {
        return Ok(ColdStart {
            observations: obs.clone(),
            zeroed: Vec::new(),
            no_observations: true,
        });
    }
    order.sort_by_key(|&k| (obs.entries[k].row, obs.entries[k].col));
    let count = ceil_count(order.len() as f64 * fraction);
    let mut entries = obs.entries.clone();
    let mut zeroed = Vec::with_capacity(count);
    for &k in &order[..count] {
        entries[k].value = 0.0;
        zeroed.push((entries[k].row, entries[k].col));
    }
    Ok(ColdStart {
        observations: ObservationSet {
            layout: obs.layout.clone(),
            families: obs.families.clone(),
            entries,
        },
        zeroed,
        no_observations: false,
    })
}

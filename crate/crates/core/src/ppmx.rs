//! Covariate-dependent product partition prior: cohesions and auxiliary-model
//! similarity marginals, all in log space.
//!
//! The unnormalized prior of a partition `{S_1, ..., S_k}` is
//! `prod_j c(S_j) g(X*_j)`, where `g` factorizes over covariates. Continuous
//! covariates use the Normal / Normal-Inverse-Gamma auxiliary model
//!
//! ```text
//! x_i | m, s2 ~ N(m, s2),   m | s2 ~ N(m0, k0 * s2),   s2 ~ IG(shape nu0, rate kappa0)
//! ```
//!
//! and categorical covariates the multinomial / symmetric Dirichlet model
//! (per-observation product, no multinomial coefficient).

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::{ColumnData, ColumnKind, ColumnSpec, Dataset};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Cluster labels `0..k`, contiguous.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
}

impl Partition {
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut used = vec![false; k];
        labels.iter().for_each(|&l| used[l] = true);
        if let Some(gap) = used.iter().position(|u| !u) {
            return Err(Error::InvalidPartition(format!("label {gap} is unused")));
        }
        Ok(Self { labels })
    }

    /// Accepts labels starting at 1.
    pub fn from_one_based(labels: &[usize]) -> Result<Self> {
        if labels.contains(&0) {
            return Err(Error::InvalidPartition("one-based labels contain 0".into()));
        }
        Self::from_labels(labels.iter().map(|l| l - 1).collect())
    }

    /// Relabels arbitrary labels in order of first appearance.
    pub fn canonical(labels: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self { labels }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l + 1).collect()
    }

    pub fn n_units(&self) -> usize {
        self.labels.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_clusters()];
        self.labels.iter().for_each(|&l| out[l] += 1);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Cohesion {
    /// `c(S) = M * (|S| - 1)!`
    Dp { m: f64 },
    /// `c(S) = 1`
    Uniform,
}

impl Default for Cohesion {
    fn default() -> Self {
        Cohesion::Dp { m: 1.0 }
    }
}

impl Cohesion {
    pub fn validate(&self) -> Result<()> {
        match self {
            Cohesion::Dp { m } if !(*m > 0.0 && m.is_finite()) => {
                Err(Error::Config(format!("cohesion mass M must be positive, got {m}")))
            }
            _ => Ok(()),
        }
    }

    pub fn log_cohesion(&self, size: usize) -> Result<f64> {
        if size == 0 {
            return Err(Error::EmptyCluster);
        }
        Ok(match self {
            Cohesion::Dp { m } => m.ln() + ln_gamma(size as f64),
            Cohesion::Uniform => 0.0,
        })
    }

    /// `log c(n + 1) - log c(n)` for `n >= 1`.
    pub fn log_gain(&self, size: usize) -> f64 {
        match self {
            Cohesion::Dp { .. } => (size as f64).ln(),
            Cohesion::Uniform => 0.0,
        }
    }

    /// `log c({i})`
    pub fn log_singleton(&self) -> f64 {
        match self {
            Cohesion::Dp { m } => m.ln(),
            Cohesion::Uniform => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityHyper {
    pub m0: f64,
    pub k0: f64,
    pub nu0: f64,
    pub kappa0: f64,
    pub dirichlet_shape: f64,
}

impl Default for SimilarityHyper {
    fn default() -> Self {
        Self {
            m0: 0.0,
            k0: 0.5,
            nu0: 1.0,
            kappa0: 2.0,
            dirichlet_shape: 0.1,
        }
    }
}

impl SimilarityHyper {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k0", self.k0),
            ("nu0", self.nu0),
            ("kappa0", self.kappa0),
            ("dirichlet_shape", self.dirichlet_shape),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.m0.is_finite() {
            return Err(Error::Config("m0 must be finite".into()));
        }
        Ok(())
    }
}

/// Exact log marginal of `values` under the Normal-NIG auxiliary model.
pub fn log_similarity_continuous(values: &[f64], h: &SimilarityHyper) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("similarity of an empty cluster"));
    }
    let n = values.len() as f64;
    let xbar = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    Ok(nig_log_marginal(n, xbar, ss, h))
}

fn nig_log_marginal(n: f64, xbar: f64, ss: f64, h: &SimilarityHyper) -> f64 {
    let lambda0 = 1.0 / h.k0;
    let lambda_n = lambda0 + n;
    let alpha_n = h.nu0 + 0.5 * n;
    let dev = if n > 0.0 { xbar - h.m0 } else { 0.0 };
    let beta_n = h.kappa0 + 0.5 * (ss + lambda0 * n * dev * dev / lambda_n);
    ln_gamma(alpha_n) - ln_gamma(h.nu0) + h.nu0 * h.kappa0.ln() - alpha_n * beta_n.ln()
        + 0.5 * (lambda0 / lambda_n).ln()
        - 0.5 * n * LN_2PI
}

/// `log [B(a + counts) / B(a)]` with `a = shape * 1`.
pub fn log_similarity_categorical(counts: &[i64], shape: f64) -> Result<f64> {
    if let Some(&c) = counts.iter().find(|&&c| c < 0) {
        return Err(Error::NegativeCount(c));
    }
    let n: i64 = counts.iter().sum();
    if n < 1 {
        return Err(Error::Empty("similarity of an empty cluster"));
    }
    let k = counts.len() as f64;
    let mut out = ln_gamma(k * shape) - ln_gamma(k * shape + n as f64);
    for &c in counts {
        out += ln_gamma(shape + c as f64) - ln_gamma(shape);
    }
    Ok(out)
}

/// One covariate restricted to the members of a cluster.
#[derive(Clone, Copy, Debug)]
pub enum ClusterColumn<'a> {
    Continuous(&'a [f64]),
    Categorical { codes: &'a [usize], n_levels: usize },
}

impl ClusterColumn<'_> {
    fn len(&self) -> usize {
        match self {
            ClusterColumn::Continuous(v) => v.len(),
            ClusterColumn::Categorical { codes, .. } => codes.len(),
        }
    }
}

/// Product similarity over covariates; zero covariates give 0.
pub fn log_similarity_cluster(columns: &[ClusterColumn<'_>], h: &SimilarityHyper) -> Result<f64> {
    let Some(first) = columns.first() else {
        return Ok(0.0);
    };
    let n = first.len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::LengthMismatch("cluster covariate columns differ in length".into()));
    }
    columns.iter().try_fold(0.0, |acc, col| {
        Ok(acc
            + match col {
                ClusterColumn::Continuous(v) => log_similarity_continuous(v, h)?,
                ClusterColumn::Categorical { codes, n_levels } => {
                    let mut counts = vec![0i64; *n_levels];
                    for &c in codes.iter() {
                        *counts.get_mut(c).ok_or_else(|| Error::InvalidPartition(format!("level {c} out of range")))? += 1;
                    }
                    log_similarity_categorical(&counts, h.dirichlet_shape)?
                }
            })
    })
}

/// Unnormalized `log prod_j c(S_j) g(X*_j)`.
pub fn log_partition_prior(
    partition: &Partition,
    ds: &Dataset,
    cohesion: &Cohesion,
    h: &SimilarityHyper,
) -> Result<f64> {
    if partition.n_units() != ds.n_rows() {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} units, dataset has {} rows",
            partition.n_units(),
            ds.n_rows()
        )));
    }
    let mut total = 0.0;
    for members in partition.clusters() {
        total += cohesion.log_cohesion(members.len())?;
        let mut cont: Vec<Vec<f64>> = Vec::new();
        let mut cat: Vec<(Vec<usize>, usize)> = Vec::new();
        for (j, spec) in ds.columns().iter().enumerate() {
            match (ds.column(j), &spec.kind) {
                (ColumnData::Continuous(v), _) => cont.push(members.iter().map(|&i| v[i]).collect()),
                (ColumnData::Categorical(v), ColumnKind::Categorical { levels }) => {
                    cat.push((members.iter().map(|&i| v[i]).collect(), levels.len()))
                }
                _ => unreachable!(),
            }
        }
        let cols: Vec<ClusterColumn<'_>> = cont
            .iter()
            .map(|v| ClusterColumn::Continuous(v))
            .chain(cat.iter().map(|(codes, n_levels)| ClusterColumn::Categorical {
                codes,
                n_levels: *n_levels,
            }))
            .collect();
        total += log_similarity_cluster(&cols, h)?;
    }
    Ok(total)
}

/// A covariate value of a real or hypothetical unit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CovValue {
    Continuous(f64),
    Level(usize),
}

/// Row-major covariate values of a dataset.
pub fn covariate_rows(ds: &Dataset) -> Vec<Vec<CovValue>> {
    (0..ds.n_rows())
        .map(|i| {
            (0..ds.n_columns())
                .map(|j| match ds.column(j) {
                    ColumnData::Continuous(v) => CovValue::Continuous(v[i]),
                    ColumnData::Categorical(v) => CovValue::Level(v[i]),
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContinuousStats {
    pub n: usize,
    pub sum: f64,
    pub sumsq: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalStats {
    pub n: usize,
    pub counts: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnStats {
    Continuous(ContinuousStats),
    Categorical(CategoricalStats),
}

/// Sufficient statistics of one cluster's covariates.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterStats {
    pub columns: Vec<ColumnStats>,
}

/// Incremental similarity evaluation for a fixed covariate layout.
///
/// `log_predictive(stats, x) = log g(S + {x}) - log g(S)`, evaluated as the
/// closed-form one-point predictive (Student-t / Polya urn).
#[derive(Clone, Debug)]
pub struct SimilarityModel {
    hyper: SimilarityHyper,
    levels: Vec<Option<usize>>,
    /// `ln G(nu0 + n/2 + 1/2) - ln G(nu0 + n/2)` indexed by `n`.
    t_norm: Vec<f64>,
}

impl SimilarityModel {
    pub fn new(columns: &[ColumnSpec], hyper: SimilarityHyper, max_cluster: usize) -> Self {
        let t_norm = (0..=max_cluster + 1)
            .map(|n| t_normalizer(hyper.nu0, n))
            .collect();
        Self {
            hyper,
            levels: columns.iter().map(ColumnSpec::n_levels).collect(),
            t_norm,
        }
    }

    pub fn for_dataset(ds: &Dataset, hyper: SimilarityHyper) -> Self {
        Self::new(ds.columns(), hyper, ds.n_rows() + 1)
    }

    pub fn hyper(&self) -> &SimilarityHyper {
        &self.hyper
    }

    pub fn empty_stats(&self) -> ClusterStats {
        ClusterStats {
            columns: self
                .levels
                .iter()
                .map(|l| match l {
                    None => ColumnStats::Continuous(ContinuousStats::default()),
                    Some(k) => ColumnStats::Categorical(CategoricalStats {
                        n: 0,
                        counts: vec![0; *k],
                    }),
                })
                .collect(),
        }
    }

    pub fn add(&self, stats: &mut ClusterStats, x: &[CovValue]) {
        for (s, v) in stats.columns.iter_mut().zip(x) {
            match (s, v) {
                (ColumnStats::Continuous(s), CovValue::Continuous(v)) => {
                    s.n += 1;
                    s.sum += v;
                    s.sumsq += v * v;
                }
                (ColumnStats::Categorical(s), CovValue::Level(l)) => {
                    s.n += 1;
                    s.counts[*l] += 1;
                }
                _ => panic!("covariate value does not match column kind"),
            }
        }
    }

    pub fn remove(&self, stats: &mut ClusterStats, x: &[CovValue]) {
        for (s, v) in stats.columns.iter_mut().zip(x) {
            match (s, v) {
                (ColumnStats::Continuous(s), CovValue::Continuous(v)) => {
                    s.n -= 1;
                    if s.n == 0 {
                        *s = ContinuousStats::default();
                    } else {
                        s.sum -= v;
                        s.sumsq -= v * v;
                    }
                }
                (ColumnStats::Categorical(s), CovValue::Level(l)) => {
                    s.n -= 1;
                    s.counts[*l] -= 1;
                }
                _ => panic!("covariate value does not match column kind"),
            }
        }
    }

    /// `log g(S + {x}) - log g(S)`.
    pub fn log_predictive(&self, stats: &ClusterStats, x: &[CovValue]) -> f64 {
        let h = &self.hyper;
        let mut out = 0.0;
        for (s, v) in stats.columns.iter().zip(x) {
            out += match (s, v) {
                (ColumnStats::Continuous(s), CovValue::Continuous(x)) => {
                    let n = s.n as f64;
                    let lambda0 = 1.0 / h.k0;
                    let lambda_n = lambda0 + n;
                    let alpha_n = h.nu0 + 0.5 * n;
                    let (mean_n, beta_n) = if s.n == 0 {
                        (h.m0, h.kappa0)
                    } else {
                        let xbar = s.sum / n;
                        let ss = (s.sumsq - s.sum * xbar).max(0.0);
                        let dev = xbar - h.m0;
                        (
                            (lambda0 * h.m0 + s.sum) / lambda_n,
                            h.kappa0 + 0.5 * (ss + lambda0 * n * dev * dev / lambda_n),
                        )
                    };
                    let norm = self
                        .t_norm
                        .get(s.n)
                        .copied()
                        .unwrap_or_else(|| t_normalizer(h.nu0, s.n));
                    let scale2 = 2.0 * beta_n * (lambda_n + 1.0) / lambda_n;
                    let d = x - mean_n;
                    norm - 0.5 * (std::f64::consts::PI * scale2).ln() - (alpha_n + 0.5) * (d * d / scale2).ln_1p()
                }
                (ColumnStats::Categorical(s), CovValue::Level(l)) => {
                    let a = h.dirichlet_shape;
                    ((a + s.counts[*l] as f64) / (a * s.counts.len() as f64 + s.n as f64)).ln()
                }
                _ => panic!("covariate value does not match column kind"),
            };
        }
        out
    }

    /// `log g(S)` from sufficient statistics.
    pub fn log_marginal(&self, stats: &ClusterStats) -> f64 {
        let h = &self.hyper;
        stats
            .columns
            .iter()
            .map(|s| match s {
                ColumnStats::Continuous(s) => {
                    if s.n == 0 {
                        return 0.0;
                    }
                    let n = s.n as f64;
                    let xbar = s.sum / n;
                    nig_log_marginal(n, xbar, (s.sumsq - s.sum * xbar).max(0.0), h)
                }
                ColumnStats::Categorical(s) => {
                    if s.n == 0 {
                        return 0.0;
                    }
                    let a = h.dirichlet_shape;
                    let k = s.counts.len() as f64;
                    let mut out = ln_gamma(k * a) - ln_gamma(k * a + s.n as f64);
                    for &c in &s.counts {
                        out += ln_gamma(a + c as f64) - ln_gamma(a);
                    }
                    out
                }
            })
            .sum()
    }
}

fn t_normalizer(nu0: f64, n: usize) -> f64 {
    let a = nu0 + 0.5 * n as f64;
    ln_gamma(a + 0.5) - ln_gamma(a)
}

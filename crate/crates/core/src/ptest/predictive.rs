//! Posterior predictive draws for hypothetical units with chosen covariates.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnData, Dataset, Response};
use crate::discretize::{DiscretizedView, Item};
use crate::error::{Error, Result};
use crate::ppmx::{covariate_rows, CovValue, SimilarityModel};
use crate::sampler::{ClusterParams, PosteriorDraws, PriorConfig};
use crate::stats::{self, norm_cdf};

/// Covariate vector of a hypothetical unit: every column fixed, with the
/// candidate columns set to one level combination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateConfig {
    pub values: Vec<CovValue>,
    /// Candidate columns and their assigned levels.
    pub free: Vec<Item>,
}

/// Continuous columns at their median, categorical columns at their modal
/// level (lowest level index on ties). Values are on `ds`'s scale.
pub fn baseline_values(ds: &Dataset) -> Vec<CovValue> {
    (0..ds.n_columns())
        .map(|j| match ds.column(j) {
            ColumnData::Continuous(v) => CovValue::Continuous(stats::median(v)),
            ColumnData::Categorical(v) => {
                let k = ds.spec(j).n_levels().unwrap_or(0);
                let mut counts = vec![0usize; k];
                v.iter().for_each(|&l| counts[l] += 1);
                let best = counts
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                    .map_or(0, |(l, _)| l);
                CovValue::Level(best)
            }
        })
        .collect()
}

/// One configuration per level combination of `columns`, the first column
/// varying slowest. Continuous levels take the within-bin median of `view`.
pub fn level_grid(ds: &Dataset, view: &DiscretizedView, columns: &[usize]) -> Result<Vec<CovariateConfig>> {
    if view.n_rows() != ds.n_rows() || view.n_columns() != ds.n_columns() {
        return Err(Error::LengthMismatch("discretized view does not match dataset".into()));
    }
    for (x, &c) in columns.iter().enumerate() {
        if c >= ds.n_columns() {
            return Err(Error::UnknownColumn(format!("#{c}")));
        }
        if columns[..x].contains(&c) {
            return Err(Error::Config(format!("column `{}` listed twice", ds.spec(c).name)));
        }
    }
    let base = baseline_values(ds);
    let mut out = vec![CovariateConfig {
        values: base,
        free: Vec::new(),
    }];
    for &c in columns {
        let mut next = Vec::with_capacity(out.len() * view.n_levels(c));
        for cfg in &out {
            for level in 0..view.n_levels(c) {
                let mut cfg = cfg.clone();
                cfg.values[c] = match view.representative(c, level) {
                    Some(x) => CovValue::Continuous(x),
                    None => CovValue::Level(level),
                };
                cfg.free.push(Item { column: c, level });
                next.push(cfg);
            }
        }
        out = next;
    }
    Ok(out)
}

/// Allocation probabilities of hypothetical units over each retained state's
/// clusters (last entry: a new cluster), precomputed per configuration.
pub struct PredictiveEngine<'a> {
    draws: &'a PosteriorDraws,
    prior: PriorConfig,
    /// `alloc[g][t]` has `k_t + 1` probabilities.
    alloc: Vec<Vec<Vec<f64>>>,
    response: Option<crate::data::Affine>,
}

impl<'a> PredictiveEngine<'a> {
    /// `ds` must be the dataset the chain was fitted on; configurations are
    /// on its scale.
    pub fn new(draws: &'a PosteriorDraws, ds: &Dataset, configs: &[Vec<CovValue>]) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Empty("no retained draws"));
        }
        if draws.n_units != ds.n_rows() {
            return Err(Error::LengthMismatch(format!(
                "draws describe {} units, dataset has {}",
                draws.n_units,
                ds.n_rows()
            )));
        }
        for c in configs {
            check_config(ds, c)?;
        }
        let prior = draws.config.prior.clone();
        let sim = SimilarityModel::for_dataset(ds, prior.similarity);
        let rows = covariate_rows(ds);
        let empty = sim.empty_stats();
        let cohesion = prior.cohesion;
        let mut alloc = vec![Vec::with_capacity(draws.len()); configs.len()];
        let mut logw = Vec::new();
        for state in &draws.states {
            let k = state.n_clusters();
            let mut cl_stats = vec![empty.clone(); k];
            let mut sizes = vec![0usize; k];
            for (i, &l) in state.labels.iter().enumerate() {
                sim.add(&mut cl_stats[l as usize], &rows[i]);
                sizes[l as usize] += 1;
            }
            for (g, x0) in configs.iter().enumerate() {
                logw.clear();
                for j in 0..k {
                    logw.push(cohesion.log_gain(sizes[j]) + sim.log_predictive(&cl_stats[j], x0));
                }
                logw.push(cohesion.log_singleton() + sim.log_predictive(&empty, x0));
                let m = stats::logsumexp(&logw);
                alloc[g].push(logw.iter().map(|w| (w - m).exp()).collect());
            }
        }
        Ok(Self {
            draws,
            prior,
            alloc,
            response: ds.response_transform(),
        })
    }

    pub fn n_configs(&self) -> usize {
        self.alloc.len()
    }

    /// Probabilities over state `t`'s clusters, then a new cluster.
    pub fn allocation(&self, config: usize, t: usize) -> &[f64] {
        &self.alloc[config][t]
    }

    fn pick_params<R: Rng + ?Sized>(&self, config: usize, t: usize, rng: &mut R) -> ClusterParams {
        let state = &self.draws.states[t];
        let probs = &self.alloc[config][t];
        let mut u = rng.random::<f64>();
        let mut j = probs.len() - 1;
        for (x, p) in probs.iter().enumerate() {
            u -= p;
            if u < 0.0 {
                j = x;
                break;
            }
        }
        if j < state.n_clusters() {
            state.params[j]
        } else {
            let z: f64 = rng.sample(StandardNormal);
            ClusterParams {
                mu: state.hyper.mu0 + state.hyper.sigma0 * z,
                sigma: self.prior.a * (1.0 - rng.random::<f64>()),
            }
        }
    }

    /// One predictive draw and the index of the state it used. Continuous
    /// responses come back on the raw response scale, ordinal ones on the
    /// latent scale.
    pub fn draw<R: Rng + ?Sized>(&self, config: usize, rng: &mut R) -> (f64, u32) {
        let t = rng.random_range(0..self.draws.len());
        let p = self.pick_params(config, t, rng);
        let z: f64 = rng.sample(StandardNormal);
        let y = p.mu + p.sigma * z;
        (self.response.map_or(y, |a| a.inverse(y)), t as u32)
    }

    /// Posterior predictive grade probabilities: exact interval probabilities
    /// for existing clusters and the base-measure marginal for a new one.
    pub fn grade_probabilities(&self, config: usize) -> Vec<f64> {
        let k = self.prior.cutpoints.len() + 1;
        let mut acc = vec![0.0; k];
        for (t, state) in self.draws.states.iter().enumerate() {
            let probs = &self.alloc[config][t];
            let comps: Vec<(f64, ClusterParams)> = state.params.iter().zip(probs).map(|(p, &w)| (w, *p)).collect();
            let new_w = probs[probs.len() - 1];
            let mut out = mixture_grade_probabilities(&comps, &self.prior.cutpoints);
            let base = base_grade_probabilities(state.hyper.mu0, state.hyper.sigma0, self.prior.a, &self.prior.cutpoints);
            for (o, b) in out.iter_mut().zip(&base) {
                *o += new_w * b;
            }
            for (a, o) in acc.iter_mut().zip(&out) {
                *a += o;
            }
        }
        let n = self.draws.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        normalize(acc)
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
    v
}

fn check_config(ds: &Dataset, x0: &[CovValue]) -> Result<()> {
    if x0.len() != ds.n_columns() {
        return Err(Error::LengthMismatch(format!(
            "configuration has {} values for {} columns",
            x0.len(),
            ds.n_columns()
        )));
    }
    for (j, v) in x0.iter().enumerate() {
        let ok = match (ds.column(j), v) {
            (ColumnData::Continuous(_), CovValue::Continuous(x)) => x.is_finite(),
            (ColumnData::Categorical(_), CovValue::Level(l)) => *l < ds.spec(j).n_levels().unwrap_or(0),
            _ => false,
        };
        if !ok {
            return Err(Error::Config(format!("bad value for column `{}`", ds.spec(j).name)));
        }
    }
    Ok(())
}

/// Grade probabilities of a finite normal mixture: `sum_c w_c P(gamma_l <
/// Z <= gamma_{l+1})` with `Z ~ N(mu_c, sigma_c)`. Weights need not sum to 1;
/// the result is the weighted sum.
pub fn mixture_grade_probabilities(components: &[(f64, ClusterParams)], cutpoints: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cutpoints.len() + 1];
    for &(w, p) in components {
        if w == 0.0 {
            continue;
        }
        for (l, o) in out.iter_mut().enumerate() {
            let lo = if l == 0 { f64::NEG_INFINITY } else { cutpoints[l - 1] };
            let hi = cutpoints.get(l).copied().unwrap_or(f64::INFINITY);
            *o += w * stats::normal_interval_prob(lo, hi, p.mu, p.sigma);
        }
    }
    out
}

/// Grade probabilities of a fresh cluster: `mu ~ N(mu0, sigma0)` integrated
/// out exactly, `sigma ~ Unif(0, A)` by composite Gauss-Legendre quadrature.
/// Panels double in width from `sigma0`, where the integrand bends most.
pub fn base_grade_probabilities(mu0: f64, sigma0: f64, a: f64, cutpoints: &[f64]) -> Vec<f64> {
    let (nodes, weights) = gauss_legendre(48);
    let mut edges = vec![0.0];
    let mut e = sigma0.max(a * 1e-6);
    while e < a {
        edges.push(e);
        e *= 2.0;
    }
    edges.push(a);
    let mut cdf = vec![0.0; cutpoints.len()];
    for panel in edges.windows(2) {
        let (lo, half) = (panel[0], 0.5 * (panel[1] - panel[0]));
        for (x, w) in nodes.iter().zip(&weights) {
            let s = lo + half * (x + 1.0);
            let sd = (sigma0 * sigma0 + s * s).sqrt();
            for (c, g) in cdf.iter_mut().zip(cutpoints) {
                *c += half / a * w * norm_cdf((g - mu0) / sd);
            }
        }
    }
    let mut out = Vec::with_capacity(cutpoints.len() + 1);
    let mut prev = 0.0;
    for c in &cdf {
        out.push((c - prev).max(0.0));
        prev = *c;
    }
    out.push((1.0 - prev).max(0.0));
    out
}

/// Nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Response kind check used by callers that need the ordinal model.
pub fn require_ordinal(ds: &Dataset) -> Result<usize> {
    match ds.response() {
        Response::Ordinal { n_grades, .. } => Ok(*n_grades),
        Response::Continuous(_) => Err(Error::Config("grade probabilities need an ordinal response".into())),
    }
}

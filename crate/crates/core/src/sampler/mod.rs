//! Posterior simulation for the Gaussian PPMx mixture and its latent ordinal
//! variant.
//!
//! ```text
//! Y_i (or Z_i) | mu*, sigma*, s_i ~ N(mu*_{s_i}, sigma*_{s_i})
//! (mu*_l, sigma*_l) ~ N(mu0, sigma0^2) x Unif(0, A)
//! mu0 ~ N(0, 10^2),  sigma0 ~ Unif(0, 10)
//! rho | X ~ prod_j c(S_j) g(X*_j)
//! ```
//!
//! One sweep updates, in order: cluster labels (auxiliary-parameter Gibbs
//! with `n_aux` fresh candidates), cluster parameters (conjugate `mu*`,
//! reflected random-walk Metropolis on `log sigma*`), hyperparameters
//! (conjugate `mu0`, reflected random walk on `sigma0`) and, for ordinal
//! responses, the latent scores.

mod draws;
mod lpml;
pub mod truncnorm;

pub use draws::{config_checksum, AcceptanceRates, PosteriorDraws, StoredState, DRAWS_FORMAT_VERSION};
pub use lpml::{compute_lpml, LpmlReport};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Response};
use crate::error::{Error, Result};
use crate::ppmx::{covariate_rows, ClusterStats, Cohesion, CovValue, SimilarityHyper, SimilarityModel};
use crate::seed;
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub mu: f64,
    /// Standard deviation.
    pub sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperState {
    pub mu0: f64,
    pub sigma0: f64,
}

pub const DEFAULT_CUTPOINTS: [f64; 4] = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Upper bound of the uniform prior on cluster standard deviations.
    #[serde(rename = "A")]
    pub a: f64,
    pub cohesion: Cohesion,
    pub similarity: SimilarityHyper,
    /// Interior cutpoints `gamma_1 < ... < gamma_{K-1}` of the ordinal model.
    pub cutpoints: Vec<f64>,
    pub mu0_prior_sd: f64,
    pub sigma0_upper: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            cohesion: Cohesion::default(),
            similarity: SimilarityHyper::default(),
            cutpoints: DEFAULT_CUTPOINTS.to_vec(),
            mu0_prior_sd: 10.0,
            sigma0_upper: 10.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::Config(format!("A must be positive, got {}", self.a)));
        }
        if !(self.mu0_prior_sd > 0.0) || !(self.sigma0_upper > 0.0) {
            return Err(Error::Config("hyperprior scales must be positive".into()));
        }
        if self.cutpoints.windows(2).any(|w| !(w[0] < w[1])) || self.cutpoints.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("cutpoints must be finite and strictly increasing".into()));
        }
        self.cohesion.validate()?;
        self.similarity.validate()
    }

    /// `(gamma_l, gamma_{l+1}]` for grade `l`.
    pub fn grade_interval(&self, grade: usize) -> (f64, f64) {
        let lo = if grade == 0 { f64::NEG_INFINITY } else { self.cutpoints[grade - 1] };
        let hi = self.cutpoints.get(grade).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_aux: usize,
    pub seed: u64,
    pub prior: PriorConfig,
    /// Hold `(mu0, sigma0)` at these values instead of sampling them.
    pub fixed_hyper: Option<HyperState>,
    /// Tune Metropolis step sizes during burn-in.
    pub adapt: bool,
    /// Drop the likelihood and sample from the prior (diagnostics).
    pub prior_only: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_iter: 2000,
            burn_in: 1000,
            thin: 2,
            n_aux: 3,
            seed: 1,
            prior: PriorConfig::default(),
            fixed_hyper: None,
            adapt: true,
            prior_only: false,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.n_aux == 0 || self.n_iter == 0 {
            return Err(Error::Config("n_iter, thin and n_aux must be positive".into()));
        }
        if self.burn_in >= self.n_iter {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than n_iter ({})",
                self.burn_in, self.n_iter
            )));
        }
        if let Some(h) = self.fixed_hyper {
            if !(h.sigma0 > 0.0 && h.sigma0 < self.prior.sigma0_upper) {
                return Err(Error::Config("fixed sigma0 outside its prior support".into()));
            }
        }
        self.prior.validate()
    }

    pub fn n_retained(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

/// Current state of one chain. Labels are contiguous `0..k` after every
/// completed label sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub labels: Vec<usize>,
    pub params: Vec<ClusterParams>,
    pub sizes: Vec<usize>,
    pub hyper: HyperState,
    pub latent: Option<Vec<f64>>,
}

impl ChainState {
    pub fn n_clusters(&self) -> usize {
        self.sizes.iter().filter(|&&s| s > 0).count()
    }
}

#[derive(Clone, Debug, Default)]
struct Tuning {
    sigma_step: f64,
    sigma0_step: f64,
    sigma_acc: u64,
    sigma_tries: u64,
    sigma0_acc: u64,
    sigma0_tries: u64,
    batches: u32,
}

const ADAPT_BATCH: usize = 50;
const TARGET_ACCEPTANCE: f64 = 0.44;

pub struct Sampler<'a> {
    ds: &'a Dataset,
    cfg: McmcConfig,
    sim: SimilarityModel,
    rows: Vec<Vec<CovValue>>,
    y: Vec<f64>,
    grades: Option<Vec<usize>>,
    state: ChainState,
    stats: Vec<ClusterStats>,
    empty: ClusterStats,
    tuning: Tuning,
    rng: seed::Rng,
}

impl<'a> Sampler<'a> {
    pub fn new(ds: &'a Dataset, cfg: McmcConfig) -> Result<Self> {
        cfg.validate()?;
        if ds.n_rows() == 0 {
            return Err(Error::Empty("dataset has no rows"));
        }
        let (y, grades) = match ds.response() {
            Response::Continuous(y) => (y.clone(), None),
            Response::Ordinal { grades, n_grades } => {
                if cfg.prior.cutpoints.len() + 1 != *n_grades {
                    return Err(Error::Config(format!(
                        "{} cutpoints cannot describe {n_grades} grades",
                        cfg.prior.cutpoints.len()
                    )));
                }
                (Vec::new(), Some(grades.clone()))
            }
        };
        let sim = SimilarityModel::for_dataset(ds, cfg.prior.similarity);
        let rows = covariate_rows(ds);
        let rng = seed::rng(cfg.seed);
        let empty = sim.empty_stats();

        let latent = grades.as_ref().map(|g| {
            let cuts = &cfg.prior.cutpoints;
            let gap = if cuts.len() > 1 {
                (cuts[cuts.len() - 1] - cuts[0]) / (cuts.len() - 1) as f64
            } else {
                1.0
            };
            g.iter()
                .map(|&grade| {
                    let (lo, hi) = cfg.prior.grade_interval(grade);
                    match (lo.is_finite(), hi.is_finite()) {
                        (true, true) => 0.5 * (lo + hi),
                        (false, _) => hi - 0.5 * gap,
                        (_, false) => lo + 0.5 * gap,
                    }
                })
                .collect::<Vec<f64>>()
        });
        let values = latent.as_ref().unwrap_or(&y);
        let center = stats::mean(values);
        let hyper = cfg.fixed_hyper.unwrap_or(HyperState {
            mu0: center,
            sigma0: 1.0f64.min(0.5 * cfg.prior.sigma0_upper),
        });
        let m = ds.n_rows();
        let state = ChainState {
            labels: vec![0; m],
            params: vec![ClusterParams {
                mu: center,
                sigma: 0.5 * cfg.prior.a,
            }],
            sizes: vec![m],
            hyper,
            latent,
        };
        let mut sampler = Self {
            ds,
            sim,
            rows,
            y,
            grades,
            state,
            stats: Vec::new(),
            empty,
            tuning: Tuning {
                sigma_step: 0.5,
                sigma0_step: 0.5,
                ..Tuning::default()
            },
            rng,
            cfg,
        };
        sampler.rebuild_stats();
        Ok(sampler)
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn config(&self) -> &McmcConfig {
        &self.cfg
    }

    /// Value entering the Gaussian likelihood for unit `i`.
    fn value(&self, i: usize) -> f64 {
        match &self.state.latent {
            Some(z) => z[i],
            None => self.y[i],
        }
    }

    fn rebuild_stats(&mut self) {
        let mut stats = vec![self.empty.clone(); self.state.params.len()];
        for (i, &l) in self.state.labels.iter().enumerate() {
            self.sim.add(&mut stats[l], &self.rows[i]);
        }
        self.stats = stats;
    }

    fn draw_base(&mut self) -> ClusterParams {
        let z: f64 = self.rng.sample(StandardNormal);
        ClusterParams {
            mu: self.state.hyper.mu0 + self.state.hyper.sigma0 * z,
            sigma: self.cfg.prior.a * (1.0 - self.rng.random::<f64>()),
        }
    }

    fn loglik(&self, x: f64, p: &ClusterParams) -> f64 {
        if self.cfg.prior_only {
            0.0
        } else {
            stats::ln_normal_pdf(x, p.mu, p.sigma)
        }
    }

    /// Reassigns every unit in turn, then prunes empty clusters and
    /// relabels in order of first appearance.
    pub fn update_labels(&mut self) {
        let m = self.ds.n_rows();
        let n_aux = self.cfg.n_aux;
        let cohesion = self.cfg.prior.cohesion;
        let log_new = cohesion.log_singleton() - (n_aux as f64).ln();
        let mut aux = vec![ClusterParams { mu: 0.0, sigma: 1.0 }; n_aux];
        let mut free: Vec<usize> = Vec::new();
        let mut logw: Vec<f64> = Vec::new();
        let mut slots: Vec<usize> = Vec::new();

        for i in 0..m {
            let c = self.state.labels[i];
            self.state.sizes[c] -= 1;
            self.sim.remove(&mut self.stats[c], &self.rows[i]);
            let singleton = self.state.sizes[c] == 0;
            for (h, a) in aux.iter_mut().enumerate() {
                *a = if h == 0 && singleton {
                    self.state.params[c]
                } else {
                    ClusterParams { mu: 0.0, sigma: 0.0 }
                };
            }
            for h in usize::from(singleton)..n_aux {
                aux[h] = self.draw_base();
            }
            if singleton {
                free.push(c);
            }

            let x = self.value(i);
            logw.clear();
            slots.clear();
            for j in 0..self.state.params.len() {
                let size = self.state.sizes[j];
                if size == 0 {
                    continue;
                }
                let w = cohesion.log_gain(size)
                    + self.sim.log_predictive(&self.stats[j], &self.rows[i])
                    + self.loglik(x, &self.state.params[j]);
                logw.push(w);
                slots.push(j);
            }
            let new_sim = log_new + self.sim.log_predictive(&self.empty, &self.rows[i]);
            for a in &aux {
                logw.push(new_sim + self.loglik(x, a));
            }

            let pick = sample_log_weights(&mut self.rng, &logw);
            let target = if pick < slots.len() {
                slots[pick]
            } else {
                let params = aux[pick - slots.len()];
                let slot = match free.pop() {
                    Some(s) => s,
                    None => {
                        self.state.params.push(params);
                        self.state.sizes.push(0);
                        self.stats.push(self.empty.clone());
                        self.state.params.len() - 1
                    }
                };
                self.state.params[slot] = params;
                slot
            };
            self.state.labels[i] = target;
            self.state.sizes[target] += 1;
            self.sim.add(&mut self.stats[target], &self.rows[i]);
        }
        self.compact();
    }

    fn compact(&mut self) {
        let k = self.state.params.len();
        let mut map = vec![usize::MAX; k];
        let mut order = Vec::new();
        for l in self.state.labels.iter_mut() {
            if map[*l] == usize::MAX {
                map[*l] = order.len();
                order.push(*l);
            }
            *l = map[*l];
        }
        self.state.params = order.iter().map(|&o| self.state.params[o]).collect();
        self.state.sizes = order.iter().map(|&o| self.state.sizes[o]).collect();
        self.stats = order.iter().map(|&o| self.stats[o].clone()).collect();
        // refresh running sums so rounding does not accumulate
        self.rebuild_stats();
    }

    /// Conjugate draw of each `mu*` given `sigma*`, then one reflected
    /// random-walk Metropolis step on `log sigma*` within `(0, A)`.
    pub fn update_cluster_params(&mut self) {
        let k = self.state.params.len();
        let mut n = vec![0usize; k];
        let mut s1 = vec![0.0; k];
        let mut s2 = vec![0.0; k];
        if !self.cfg.prior_only {
            for (i, &l) in self.state.labels.iter().enumerate() {
                let x = self.value(i);
                n[l] += 1;
                s1[l] += x;
                s2[l] += x * x;
            }
        }
        let HyperState { mu0, sigma0 } = self.state.hyper;
        let log_a = self.cfg.prior.a.ln();
        for j in 0..k {
            let p = self.state.params[j];
            let prec = 1.0 / (sigma0 * sigma0) + n[j] as f64 / (p.sigma * p.sigma);
            let mean = (mu0 / (sigma0 * sigma0) + s1[j] / (p.sigma * p.sigma)) / prec;
            let z: f64 = self.rng.sample(StandardNormal);
            let mu = mean + z / prec.sqrt();

            let ss = (s2[j] - 2.0 * mu * s1[j] + n[j] as f64 * mu * mu).max(0.0);
            let nj = n[j] as f64;
            // density of log sigma: likelihood x uniform prior x Jacobian sigma
            let log_target = |log_s: f64| -> f64 { -(nj - 1.0) * log_s - ss * 0.5 * (-2.0 * log_s).exp() };
            let cur = p.sigma.ln();
            let step: f64 = self.rng.sample(StandardNormal);
            let mut prop = cur + self.tuning.sigma_step * step;
            while prop > log_a {
                prop = 2.0 * log_a - prop;
            }
            self.tuning.sigma_tries += 1;
            let sigma = if self.rng.random::<f64>().ln() < log_target(prop) - log_target(cur) {
                self.tuning.sigma_acc += 1;
                prop.exp().min(self.cfg.prior.a * (1.0 - f64::EPSILON))
            } else {
                p.sigma
            };
            self.state.params[j] = ClusterParams { mu, sigma };
        }
    }

    pub fn update_hyperparams(&mut self) {
        if self.cfg.fixed_hyper.is_some() {
            return;
        }
        let k = self.state.params.len() as f64;
        let sum_mu: f64 = self.state.params.iter().map(|p| p.mu).sum();
        let sigma0 = self.state.hyper.sigma0;
        let prior_prec = 1.0 / (self.cfg.prior.mu0_prior_sd * self.cfg.prior.mu0_prior_sd);
        let prec = prior_prec + k / (sigma0 * sigma0);
        let mean = (sum_mu / (sigma0 * sigma0)) / prec;
        let z: f64 = self.rng.sample(StandardNormal);
        let mu0 = mean + z / prec.sqrt();

        let ss: f64 = self.state.params.iter().map(|p| (p.mu - mu0) * (p.mu - mu0)).sum();
        let log_target = |s: f64| -> f64 { -k * s.ln() - 0.5 * ss / (s * s) };
        let upper = self.cfg.prior.sigma0_upper;
        let step: f64 = self.rng.sample(StandardNormal);
        let mut prop = sigma0 + self.tuning.sigma0_step * step;
        loop {
            if prop < 0.0 {
                prop = -prop;
            } else if prop > upper {
                prop = 2.0 * upper - prop;
            } else {
                break;
            }
        }
        self.tuning.sigma0_tries += 1;
        let sigma0 = if prop > 0.0 && self.rng.random::<f64>().ln() < log_target(prop) - log_target(sigma0) {
            self.tuning.sigma0_acc += 1;
            prop
        } else {
            sigma0
        };
        self.state.hyper = HyperState { mu0, sigma0 };
    }

    /// Redraws each latent score from its cluster normal truncated to the
    /// interval of its observed grade.
    pub fn update_latent(&mut self) {
        let Some(grades) = &self.grades else { return };
        let Some(z) = self.state.latent.as_mut() else { return };
        for (i, zi) in z.iter_mut().enumerate() {
            let p = self.state.params[self.state.labels[i]];
            let (lo, hi) = self.cfg.prior.grade_interval(grades[i]);
            *zi = truncnorm::sample(&mut self.rng, p.mu, p.sigma, lo, hi);
        }
    }

    pub fn sweep(&mut self) {
        self.update_labels();
        self.update_cluster_params();
        self.update_hyperparams();
        self.update_latent();
    }

    /// Replaces a continuous response by a draw from the current state's
    /// likelihood.
    pub fn simulate_response(&mut self) {
        if self.grades.is_some() {
            return;
        }
        for i in 0..self.y.len() {
            let p = self.state.params[self.state.labels[i]];
            let z: f64 = self.rng.sample(StandardNormal);
            self.y[i] = p.mu + p.sigma * z;
        }
    }

    pub fn response(&self) -> &[f64] {
        &self.y
    }

    fn adapt(&mut self) {
        let t = &mut self.tuning;
        t.batches += 1;
        let delta = (1.0 / f64::from(t.batches).sqrt()).min(0.1);
        let adjust = |acc: u64, tries: u64, step: &mut f64| {
            if tries == 0 {
                return;
            }
            let rate = acc as f64 / tries as f64;
            *step *= if rate > TARGET_ACCEPTANCE { delta.exp() } else { (-delta).exp() };
            *step = step.clamp(1e-4, 10.0);
        };
        adjust(t.sigma_acc, t.sigma_tries, &mut t.sigma_step);
        adjust(t.sigma0_acc, t.sigma0_tries, &mut t.sigma0_step);
        t.sigma_acc = 0;
        t.sigma_tries = 0;
        t.sigma0_acc = 0;
        t.sigma0_tries = 0;
    }

    fn snapshot(&self) -> StoredState {
        StoredState {
            labels: self.state.labels.iter().map(|&l| l as u32).collect(),
            params: self.state.params.clone(),
            hyper: self.state.hyper,
            latent: self.state.latent.clone(),
        }
    }

    /// Runs the configured chain and returns the retained states.
    pub fn run(mut self) -> PosteriorDraws {
        let mut states = Vec::with_capacity(self.cfg.n_retained());
        for it in 0..self.cfg.n_iter {
            if it == self.cfg.burn_in {
                let t = &mut self.tuning;
                t.sigma_acc = 0;
                t.sigma_tries = 0;
                t.sigma0_acc = 0;
                t.sigma0_tries = 0;
            }
            self.sweep();
            if it < self.cfg.burn_in {
                if self.cfg.adapt && (it + 1) % ADAPT_BATCH == 0 {
                    self.adapt();
                }
            } else if (it + 1 - self.cfg.burn_in) % self.cfg.thin == 0 {
                states.push(self.snapshot());
            }
        }
        let rate = |a: u64, t: u64| if t == 0 { f64::NAN } else { a as f64 / t as f64 };
        let acceptance = AcceptanceRates {
            sigma_star: rate(self.tuning.sigma_acc, self.tuning.sigma_tries),
            sigma0: rate(self.tuning.sigma0_acc, self.tuning.sigma0_tries),
        };
        PosteriorDraws::new(self.cfg, self.ds.response().kind(), self.ds.n_rows(), acceptance, states)
    }
}

/// Runs one chain; deterministic given `cfg.seed`.
pub fn run_mcmc(ds: &Dataset, cfg: &McmcConfig) -> Result<PosteriorDraws> {
    Ok(Sampler::new(ds, cfg.clone())?.run())
}

/// Index drawn with probability proportional to `exp(logw)`.
pub fn sample_log_weights<R: Rng + ?Sized>(rng: &mut R, logw: &[f64]) -> usize {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logw.iter().map(|w| (w - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in logw.iter().enumerate() {
        u -= (w - max).exp();
        if u < 0.0 {
            return i;
        }
    }
    logw.iter().rposition(|w| w.is_finite()).unwrap_or(logw.len() - 1)
}

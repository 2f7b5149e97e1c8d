//! Stage 3: posterior predictive samples at every level combination of a
//! candidate covariate set, compared by a Pólya-tree permutation test.

mod density;
mod polya;
mod predictive;

pub use density::{density_grid, silverman_bandwidth, DensityGrid, GRID_POINTS};
pub use polya::{
    default_depth, leaves, permutation_test, permutation_test_with, polya_tree_statistic, PermutationResult, TreeScorer,
    MAX_DEPTH,
};
pub use predictive::{
    base_grade_probabilities, baseline_values, level_grid, mixture_grade_probabilities, require_ordinal,
    CovariateConfig, PredictiveEngine,
};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::discretize::{DiscretizedView, Item};
use crate::error::{Error, Result};
use crate::sampler::PosteriorDraws;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestOptions {
    /// Predictive draws per group.
    pub n_pred: usize,
    pub n_perm: usize,
    /// Independent predictive resamples whose p-values are averaged.
    pub replications: usize,
    pub depth: Option<u32>,
    pub precision: f64,
    pub seed: u64,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            n_pred: 50,
            n_perm: 500,
            replications: 1,
            depth: None,
            precision: 1.0,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSample {
    pub label: String,
    pub free: Vec<Item>,
    pub draws: Vec<f64>,
    /// Retained state used for each draw.
    pub states: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub columns: Vec<String>,
    /// Samples of the first replication.
    pub groups: Vec<PredictiveSample>,
    pub statistic: f64,
    /// Average over replications.
    pub p_value: f64,
    pub n_perm: usize,
    pub replicate_p: Vec<f64>,
}

/// Tests equality of the posterior predictive densities across all level
/// combinations of `columns` (2 or 3 columns), other covariates held at their
/// median or modal level. `ds` and `view` must describe the fitted data.
pub fn test_interaction(
    draws: &PosteriorDraws,
    ds: &Dataset,
    view: &DiscretizedView,
    columns: &[usize],
    opts: &TestOptions,
) -> Result<TestReport> {
    if !(2..=3).contains(&columns.len()) {
        return Err(Error::Config(format!("expected a pair or a triple, got {} columns", columns.len())));
    }
    if opts.n_pred < 50 {
        return Err(Error::Config(format!("n_pred must be at least 50, got {}", opts.n_pred)));
    }
    if opts.replications == 0 {
        return Err(Error::Config("replications must be positive".into()));
    }
    let grid = level_grid(ds, view, columns)?;
    let configs: Vec<_> = grid.iter().map(|g| g.values.clone()).collect();
    let engine = PredictiveEngine::new(draws, ds, &configs)?;

    let mut replicate_p = Vec::with_capacity(opts.replications);
    let mut first: Option<(Vec<PredictiveSample>, f64)> = None;
    for rep in 0..opts.replications {
        let mut rng = seed::rng(seed::derive_seed(opts.seed, ["predictive", &rep.to_string()]));
        let samples: Vec<PredictiveSample> = grid
            .iter()
            .enumerate()
            .map(|(g, cfg)| {
                let (draws, states) = (0..opts.n_pred).map(|_| engine.draw(g, &mut rng)).unzip();
                PredictiveSample {
                    label: cfg.free.iter().map(|&it| view.item_label(it)).collect::<Vec<_>>().join("&"),
                    free: cfg.free.clone(),
                    draws,
                    states,
                }
            })
            .collect();
        let groups: Vec<Vec<f64>> = samples.iter().map(|s| s.draws.clone()).collect();
        let mut perm_rng = seed::rng(seed::derive_seed(opts.seed, ["permutation", &rep.to_string()]));
        let r = permutation_test_with(&groups, opts.n_perm, opts.depth, opts.precision, &mut perm_rng)?;
        replicate_p.push(r.p_value);
        if first.is_none() {
            first = Some((samples, r.statistic));
        }
    }
    let (groups, statistic) = first.expect("at least one replication");
    Ok(TestReport {
        columns: columns.iter().map(|&c| ds.spec(c).name.clone()).collect(),
        groups,
        statistic,
        p_value: replicate_p.iter().sum::<f64>() / replicate_p.len() as f64,
        n_perm: opts.n_perm,
        replicate_p,
    })
}

impl TestReport {
    pub fn density_grid(&self) -> Result<DensityGrid> {
        let labels: Vec<String> = self.groups.iter().map(|g| g.label.clone()).collect();
        let groups: Vec<Vec<f64>> = self.groups.iter().map(|g| g.draws.clone()).collect();
        density_grid(&labels, &groups)
    }
}

//! The three RAID stages chained: fit the PPMx mixture, mine rules inside
//! every retained partition, test candidate pairs on predictive draws.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::discretize::{discretize, DiscretizedView};
use crate::error::{Error, Result};
use crate::ptest::{test_interaction, TestOptions, TestReport};
use crate::rules::{aggregate, candidates, mine_iterate, CandidateMode, ColumnPair, PairSummary, RuleConfig};
use crate::sampler::{run_mcmc, McmcConfig, PosteriorDraws};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RaidConfig {
    pub mcmc: McmcConfig,
    /// Center and scale continuous covariates before fitting.
    pub standardize_covariates: bool,
    /// Also center and scale a continuous response.
    pub standardize_response: bool,
    pub bins: usize,
    pub rules: RuleConfig,
    pub mode: CandidateMode,
    pub test: TestOptions,
    /// A candidate is declared when its test p-value is below this.
    pub p_cut: f64,
    /// Test every pair, not only candidates (for p-value tables).
    pub test_all_pairs: bool,
}

impl Default for RaidConfig {
    fn default() -> Self {
        Self {
            mcmc: McmcConfig::default(),
            standardize_covariates: true,
            standardize_response: false,
            bins: 2,
            rules: RuleConfig::default(),
            mode: CandidateMode::default(),
            test: TestOptions::default(),
            p_cut: 0.01,
            test_all_pairs: false,
        }
    }
}

impl RaidConfig {
    pub fn validate(&self) -> Result<()> {
        self.mcmc.validate()?;
        if self.bins != 2 && self.bins != 3 {
            return Err(Error::InvalidBins(self.bins));
        }
        let r = &self.rules;
        if !(r.min_support > 0.0 && r.min_support <= 1.0) || !(r.min_confidence > 0.0 && r.min_confidence <= 1.0) {
            return Err(Error::Config("rule thresholds must lie in (0, 1]".into()));
        }
        if !(self.p_cut > 0.0 && self.p_cut <= 1.0) {
            return Err(Error::Config("p_cut must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// The dataset on the scale the chain sees. Standardizing the response
/// also standardizes the covariates.
pub fn prepare(ds: &Dataset, cfg: &RaidConfig) -> Result<Dataset> {
    if ds.is_standardized() || !(cfg.standardize_covariates || cfg.standardize_response) {
        Ok(ds.clone())
    } else {
        ds.standardize(cfg.standardize_response)
    }
}

/// Stage 2 over every retained state.
pub fn discover(draws: &PosteriorDraws, fitted: &Dataset, cfg: &RaidConfig) -> Result<(DiscretizedView, Vec<PairSummary>)> {
    let view = discretize(fitted, cfg.bins)?;
    let iterates: Vec<_> = draws
        .states
        .iter()
        .map(|s| {
            let labels: Vec<usize> = s.labels.iter().map(|&l| l as usize).collect();
            mine_iterate(&labels, &view, &cfg.rules)
        })
        .collect();
    Ok((view, aggregate(&iterates)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub pair: ColumnPair,
    pub column_a: String,
    pub column_b: String,
    pub candidate: bool,
    pub report: TestReport,
    pub detected: bool,
}

#[derive(Clone, Debug)]
pub struct RaidOutput {
    pub fitted: Dataset,
    pub draws: PosteriorDraws,
    pub view: DiscretizedView,
    pub summaries: Vec<PairSummary>,
    pub candidates: Vec<PairSummary>,
    pub tests: Vec<PairTest>,
}

impl RaidOutput {
    pub fn detected(&self) -> impl Iterator<Item = &PairTest> {
        self.tests.iter().filter(|t| t.detected)
    }
}

/// Seed of the predictive test of one pair, from the configured test seed.
pub fn pair_test_seed(base: u64, a: &str, b: &str) -> u64 {
    seed::derive_seed(base, ["test", a, b])
}

/// Stage 3 for one pair.
pub fn test_pair(
    draws: &PosteriorDraws,
    fitted: &Dataset,
    view: &DiscretizedView,
    pair: ColumnPair,
    cfg: &RaidConfig,
) -> Result<TestReport> {
    let opts = TestOptions {
        seed: pair_test_seed(cfg.test.seed, &fitted.spec(pair.a).name, &fitted.spec(pair.b).name),
        ..cfg.test
    };
    test_interaction(draws, fitted, view, &[pair.a, pair.b], &opts)
}

pub fn run_raid(ds: &Dataset, cfg: &RaidConfig) -> Result<RaidOutput> {
    cfg.validate()?;
    let fitted = prepare(ds, cfg)?;
    let draws = run_mcmc(&fitted, &cfg.mcmc)?;
    let (view, summaries) = discover(&draws, &fitted, cfg)?;
    let cands = candidates(&summaries, cfg.mode);

    let mut pairs: Vec<(ColumnPair, bool)> = cands.iter().map(|s| (s.pair, true)).collect();
    if cfg.test_all_pairs {
        for a in 0..fitted.n_columns() {
            for b in a + 1..fitted.n_columns() {
                let p = ColumnPair::new(a, b);
                if !pairs.iter().any(|(q, _)| *q == p) {
                    pairs.push((p, false));
                }
            }
        }
    }
    pairs.sort_by_key(|(p, _)| *p);
    let mut tests = Vec::with_capacity(pairs.len());
    for (pair, candidate) in pairs {
        let report = test_pair(&draws, &fitted, &view, pair, cfg)?;
        tests.push(PairTest {
            pair,
            column_a: fitted.spec(pair.a).name.clone(),
            column_b: fitted.spec(pair.b).name.clone(),
            candidate,
            detected: candidate && report.p_value < cfg.p_cut,
            report,
        });
    }
    Ok(RaidOutput {
        fitted,
        draws,
        view,
        summaries,
        candidates: cands,
        tests,
    })
}

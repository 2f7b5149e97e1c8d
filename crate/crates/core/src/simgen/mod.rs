//! Synthetic data for the simulation studies, a linear-model baseline and the
//! replicate harness.

mod lm;
mod study;

pub use lm::{lm_detect, LmPairTest};
pub use study::{run_study, CellOutcome, Method, MethodSummary, PairOutcome, StudyConfig, StudyResult};

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnData, ColumnSpec, Dataset, Response};
use crate::error::{Error, Result};
use crate::sampler::DEFAULT_CUTPOINTS;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyScenario {
    F0,
    F1,
    F2,
    F3,
}

impl ToyScenario {
    pub const ALL: [ToyScenario; 4] = [ToyScenario::F0, ToyScenario::F1, ToyScenario::F2, ToyScenario::F3];

    pub fn name(self) -> &'static str {
        match self {
            ToyScenario::F0 => "f0",
            ToyScenario::F1 => "f1",
            ToyScenario::F2 => "f2",
            ToyScenario::F3 => "f3",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Mean,
    Spread,
    Shape,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Categorical,
    Continuous,
}

/// Skew-normal `SN(location, scale, shape)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewNormal {
    pub location: f64,
    pub scale: f64,
    pub shape: f64,
}

impl Default for SkewNormal {
    /// `SN(10, 1, 20)`, the f3 default.
    fn default() -> Self {
        Self {
            location: 10.0,
            scale: 1.0,
            shape: 20.0,
        }
    }
}

impl SkewNormal {
    /// Location and scale chosen so the distribution has mean 0 and
    /// variance 1 for the given shape.
    pub fn standardized(shape: f64) -> Self {
        let delta = shape / (1.0 + shape * shape).sqrt();
        let b = 2.0 / std::f64::consts::PI;
        let scale = 1.0 / (1.0 - b * delta * delta).sqrt();
        Self {
            location: -scale * delta * b.sqrt(),
            scale,
            shape,
        }
    }

    pub fn delta(&self) -> f64 {
        self.shape / (1.0 + self.shape * self.shape).sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.location + self.scale * self.delta() * (2.0 / std::f64::consts::PI).sqrt()
    }

    pub fn variance(&self) -> f64 {
        let d = self.delta();
        self.scale * self.scale * (1.0 - 2.0 * d * d / std::f64::consts::PI)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let d = self.delta();
        let u0: f64 = rng.sample(StandardNormal);
        let u1: f64 = rng.sample(StandardNormal);
        self.location + self.scale * (d * u0.abs() + (1.0 - d * d).sqrt() * u1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Toy {
        scenario: ToyScenario,
        #[serde(default)]
        skew: SkewNormal,
    },
    Osteo {
        mechanism: Mechanism,
        covariate_kind: CovariateKind,
        sigma: f64,
        #[serde(default)]
        skew: SkewNormal,
    },
    /// Latent-score ordinal data with a planted `(X1, X2)` interaction.
    Ordinal {
        #[serde(default = "default_effect")]
        effect: f64,
        #[serde(default = "default_latent_sd")]
        latent_sd: f64,
    },
}

fn default_effect() -> f64 {
    1.2
}

fn default_latent_sd() -> f64 {
    0.3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Share of units whose response follows the interaction model; the rest
    /// are redrawn from N(0, 1).
    #[serde(default = "default_fraction")]
    pub interaction_fraction: f64,
}

fn default_n() -> usize {
    500
}

fn default_fraction() -> f64 {
    1.0
}

pub const OSTEO_SIGMAS: [f64; 4] = [1e-3, 1e-2, 1e-1, 1.0];
pub const FRACTIONS: [f64; 3] = [1.0, 0.6, 0.25];

impl GeneratorSpec {
    pub fn toy(scenario: ToyScenario, n: usize) -> Self {
        Self {
            family: Family::Toy {
                scenario,
                skew: SkewNormal::default(),
            },
            n,
            interaction_fraction: 1.0,
        }
    }

    pub fn osteo(mechanism: Mechanism, covariate_kind: CovariateKind, sigma: f64, n: usize) -> Self {
        Self {
            family: Family::Osteo {
                mechanism,
                covariate_kind,
                sigma,
                skew: SkewNormal::default(),
            },
            n,
            interaction_fraction: 1.0,
        }
    }

    pub fn with_skew(mut self, s: SkewNormal) -> Self {
        match &mut self.family {
            Family::Toy { skew, .. } | Family::Osteo { skew, .. } => *skew = s,
            Family::Ordinal { .. } => {}
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config("n must be at least 2".into()));
        }
        if !FRACTIONS.iter().any(|f| (f - self.interaction_fraction).abs() < 1e-12) {
            return Err(Error::Config(format!(
                "interaction_fraction must be one of {FRACTIONS:?}, got {}",
                self.interaction_fraction
            )));
        }
        match &self.family {
            Family::Osteo { sigma, .. } if !OSTEO_SIGMAS.iter().any(|s| (s - sigma).abs() < 1e-15) => Err(
                Error::Config(format!("sigma must be one of {OSTEO_SIGMAS:?}, got {sigma}")),
            ),
            Family::Toy { skew, .. } | Family::Osteo { skew, .. } if !(skew.scale > 0.0) => {
                Err(Error::Config("skew-normal scale must be positive".into()))
            }
            Family::Ordinal { latent_sd, .. } if !(*latent_sd > 0.0) => {
                Err(Error::Config("latent_sd must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Short label used in tables and seed coordinates.
    pub fn label(&self) -> String {
        let base = match &self.family {
            Family::Toy { scenario, .. } => scenario.name().to_string(),
            Family::Osteo {
                mechanism,
                covariate_kind,
                sigma,
                ..
            } => format!("{mechanism:?}-{covariate_kind:?}-{sigma:e}").to_lowercase(),
            Family::Ordinal { effect, latent_sd } => format!("ordinal-{effect}-{latent_sd}"),
        };
        let base = match &self.family {
            Family::Toy { skew, .. } | Family::Osteo { skew, .. } if *skew != SkewNormal::default() => {
                format!("{base}-sn({:.4},{:.4},{})", skew.location, skew.scale, skew.shape)
            }
            _ => base,
        };
        if self.interaction_fraction < 1.0 {
            format!("{base}@{}", self.interaction_fraction)
        } else {
            base
        }
    }

    /// Columns whose pair is the planted interaction.
    pub fn planted_pair(&self) -> (&'static str, &'static str) {
        ("X1", "X2")
    }
}

/// Generates a dataset; deterministic in `seed`.
pub fn generate(spec: &GeneratorSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = seed::rng(seed);
    let ds = match &spec.family {
        Family::Toy { scenario, skew } => toy(*scenario, spec.n, *skew, 1.0, 0, &mut rng),
        Family::Osteo {
            mechanism,
            covariate_kind: CovariateKind::Categorical,
            sigma,
            skew,
        } => {
            let scenario = match mechanism {
                Mechanism::Mean => ToyScenario::F1,
                Mechanism::Spread => ToyScenario::F2,
                Mechanism::Shape => ToyScenario::F3,
            };
            toy(scenario, spec.n, *skew, *sigma, 19, &mut rng)
        }
        Family::Osteo {
            mechanism,
            covariate_kind: CovariateKind::Continuous,
            sigma,
            ..
        } => osteo_continuous(*mechanism, spec.n, *sigma, &mut rng),
        Family::Ordinal { effect, latent_sd } => ordinal(spec.n, *effect, *latent_sd, &mut rng),
    }?;
    if spec.interaction_fraction < 1.0 {
        dilute(ds, spec.interaction_fraction, &mut rng)
    } else {
        Ok(ds)
    }
}

/// The three-binary-covariate toy study (`n_noise = 0`), or its variant with
/// `n_noise` Uniform(-1, 1) columns in place of X3. Every standard deviation
/// is multiplied by `sd_scale`.
fn toy<R: Rng + ?Sized>(
    scenario: ToyScenario,
    n: usize,
    skew: SkewNormal,
    sd_scale: f64,
    n_noise: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let bern = |rng: &mut R| -> Vec<usize> { (0..n).map(|_| usize::from(rng.random::<bool>())).collect() };
    let x1 = bern(rng);
    let x2 = bern(rng);
    let mut specs = vec![binary("X1"), binary("X2")];
    let mut data = vec![ColumnData::Categorical(x1.clone()), ColumnData::Categorical(x2.clone())];
    if n_noise == 0 {
        specs.push(binary("X3"));
        data.push(ColumnData::Categorical(bern(rng)));
    } else {
        for j in 0..n_noise {
            specs.push(ColumnSpec::continuous(format!("X{}", j + 3)));
            data.push(ColumnData::Continuous(uniform(n, rng)));
        }
    }
    let mix_mean = 15f64.sqrt() / 4.0;
    let y = (0..n)
        .map(|i| {
            let z: f64 = rng.sample(StandardNormal);
            match (scenario, x1[i], x2[i]) {
                (ToyScenario::F0, _, _) | (_, _, 1) => sd_scale * z,
                (ToyScenario::F1, 1, _) => 2.0 + sd_scale * z,
                (ToyScenario::F1, _, _) => 4.0 + sd_scale * z,
                (ToyScenario::F2, 1, _) => 3.0 * sd_scale * z,
                (ToyScenario::F2, _, _) => 6.0 * sd_scale * z,
                (ToyScenario::F3, 1, _) => {
                    let s = SkewNormal {
                        scale: skew.scale * sd_scale,
                        ..skew
                    };
                    s.sample(rng)
                }
                (ToyScenario::F3, _, _) => {
                    let m = if rng.random::<bool>() { mix_mean } else { -mix_mean };
                    m + 0.25 * sd_scale * z
                }
            }
        })
        .collect();
    Dataset::new(specs, data, Response::Continuous(y))
}

fn binary(name: &str) -> ColumnSpec {
    ColumnSpec::categorical(name, ["0", "1"])
}

fn uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()
}

/// X1, X2 and 17 further Uniform(-1, 1) columns, then two binary noise
/// columns (X20, X21).
fn osteo_continuous<R: Rng + ?Sized>(mechanism: Mechanism, n: usize, sigma: f64, rng: &mut R) -> Result<Dataset> {
    let mut specs = Vec::new();
    let mut data = Vec::new();
    for j in 0..19 {
        specs.push(ColumnSpec::continuous(format!("X{}", j + 1)));
        data.push(ColumnData::Continuous(uniform(n, rng)));
    }
    for j in 19..21 {
        specs.push(binary(&format!("X{}", j + 1)));
        data.push(ColumnData::Categorical((0..n).map(|_| usize::from(rng.random::<bool>())).collect()));
    }
    let (ColumnData::Continuous(x1), ColumnData::Continuous(x2)) = (&data[0], &data[1]) else {
        unreachable!()
    };
    let y = (0..n)
        .map(|i| {
            let t = x1[i] * x2[i];
            let z: f64 = rng.sample(StandardNormal);
            match mechanism {
                Mechanism::Mean => 5.0 * t + sigma * z,
                Mechanism::Spread => (5.0 * t).exp() * sigma * z,
                Mechanism::Shape => {
                    let pi = 1.0 / (1.0 + (200.0 * t).exp());
                    if rng.random::<f64>() < pi {
                        sigma * z
                    } else {
                        let m = if rng.random::<bool>() { 0.5 } else { -0.5 };
                        m + sigma * z
                    }
                }
            }
        })
        .collect();
    Dataset::new(specs, data, Response::Continuous(y))
}

/// Binary X1, X2, X5 and Uniform(-1, 1) X3, X4. The latent score is
/// `N(effect * X1 * X2, latent_sd)`, graded at the default cutpoints.
fn ordinal<R: Rng + ?Sized>(n: usize, effect: f64, latent_sd: f64, rng: &mut R) -> Result<Dataset> {
    let bern = |rng: &mut R| -> Vec<usize> { (0..n).map(|_| usize::from(rng.random::<bool>())).collect() };
    let x1 = bern(rng);
    let x2 = bern(rng);
    let x3 = uniform(n, rng);
    let x4 = uniform(n, rng);
    let x5 = bern(rng);
    let grades = (0..n)
        .map(|i| {
            let z = effect * (x1[i] * x2[i]) as f64 + latent_sd * rng.sample::<f64, _>(StandardNormal);
            DEFAULT_CUTPOINTS.iter().take_while(|&&c| z > c).count()
        })
        .collect();
    Dataset::new(
        vec![
            binary("X1"),
            binary("X2"),
            ColumnSpec::continuous("X3"),
            ColumnSpec::continuous("X4"),
            binary("X5"),
        ],
        vec![
            ColumnData::Categorical(x1),
            ColumnData::Categorical(x2),
            ColumnData::Continuous(x3),
            ColumnData::Continuous(x4),
            ColumnData::Categorical(x5),
        ],
        Response::Ordinal {
            grades,
            n_grades: DEFAULT_CUTPOINTS.len() + 1,
        },
    )
}

/// Replaces the responses of `round((1 - fraction) n)` uniformly chosen units
/// by N(0, 1) draws.
fn dilute<R: Rng + ?Sized>(ds: Dataset, fraction: f64, rng: &mut R) -> Result<Dataset> {
    let n = ds.n_rows();
    let k = ((1.0 - fraction) * n as f64).round() as usize;
    let Response::Continuous(mut y) = ds.response().clone() else {
        return Err(Error::Config("dilution needs a continuous response".into()));
    };
    for i in sample_indices(rng, n, k) {
        y[i] = rng.sample(StandardNormal);
    }
    let columns = ds.columns().to_vec();
    let data = (0..ds.n_columns()).map(|j| ds.column(j).clone()).collect();
    Dataset::new(columns, data, Response::Continuous(y))
}

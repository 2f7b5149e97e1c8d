//! Run configuration: one TOML file, command-line flags layered on top.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use raid_core::data::{ColumnSpec, ResponseKind};
use raid_core::pipeline::RaidConfig;
use raid_core::ppmx::Cohesion;
use raid_core::seed::derive_seed;
use raid_core::simgen::{GeneratorSpec, Method};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Delimited text file with a header row.
    pub path: Option<PathBuf>,
    pub columns: Vec<ColumnSpec>,
    pub response: String,
    pub response_kind: ResponseKind,
    pub delimiter: char,
    /// Generate the data instead of reading a file.
    pub generator: Option<GeneratorSpec>,
    /// Seed of the generated data; derived from the master seed when unset.
    pub generator_seed: Option<u64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            columns: Vec::new(),
            response: "y".into(),
            response_kind: ResponseKind::Continuous,
            delimiter: ',',
            generator: None,
            generator_seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub k0: Vec<f64>,
    pub cohesions: Vec<Cohesion>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            a: vec![0.1, 1.0, 10.0],
            k0: vec![0.1, 1.0, 10.0],
            cohesions: vec![Cohesion::Uniform, Cohesion::Dp { m: 1.0 }],
        }
    }
}

/// One prior configuration of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub label: String,
    pub a: f64,
    pub k0: f64,
    pub cohesion: Cohesion,
}

impl SweepGrid {
    /// Grid points, `A` varying slowest and cohesion fastest.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &a in &self.a {
            for &k0 in &self.k0 {
                for &cohesion in &self.cohesions {
                    let c = match cohesion {
                        Cohesion::Uniform => "uniform".to_string(),
                        Cohesion::Dp { m } => format!("dp{m}"),
                    };
                    out.push(SweepPoint {
                        label: format!("prior{:02}_A{a}_k0{k0}_{c}", out.len() + 1),
                        a,
                        k0,
                        cohesion,
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub replicates: usize,
    pub generators: Vec<GeneratorSpec>,
    pub methods: Vec<Method>,
    pub lm_alpha: f64,
}

impl Default for StudySection {
    fn default() -> Self {
        let d = raid_core::simgen::StudyConfig::default();
        Self {
            replicates: d.replicates,
            generators: d.generators,
            methods: d.methods,
            lm_alpha: d.lm_alpha,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; chain, test and cell seeds are derived from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads for sweeps and studies; 0 uses every core.
    pub workers: usize,
    pub data: DataConfig,
    pub raid: RaidConfig,
    /// Draws file read by `discover` and `test`; defaults to the one `fit`
    /// writes in `out_dir`.
    pub draws: Option<PathBuf>,
    /// Keep only pairs containing one of these columns.
    pub filter_cols: Vec<String>,
    /// Pair or triple tested by `test`.
    pub test_columns: Vec<String>,
    pub sweep: SweepGrid,
    pub study: StudySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("raid-out"),
            workers: 0,
            data: DataConfig::default(),
            raid: RaidConfig::default(),
            draws: None,
            filter_cols: Vec::new(),
            test_columns: Vec::new(),
            sweep: SweepGrid::default(),
            study: StudySection::default(),
        }
    }
}

/// Flag values that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub bins: Option<usize>,
    pub pred_draws: Option<usize>,
    pub permutations: Option<usize>,
    pub filter_cols: Option<Vec<String>>,
}

impl RunConfig {
    /// Reads a config file; relative data and draws paths are taken
    /// relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.data.path.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.draws.as_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(b) = o.bins {
            self.raid.bins = b;
        }
        if let Some(n) = o.pred_draws {
            self.raid.test.n_pred = n;
        }
        if let Some(p) = o.permutations {
            self.raid.test.n_perm = p;
        }
        if let Some(f) = &o.filter_cols {
            self.filter_cols = f.clone();
        }
    }

    pub fn data_seed(&self) -> u64 {
        self.data.generator_seed.unwrap_or_else(|| derive_seed(self.seed, ["data"]))
    }

    /// Chain and test seeds follow from the master seed.
    pub fn derive_seeds(&mut self) {
        self.raid.mcmc.seed = derive_seed(self.seed, ["mcmc"]);
        self.raid.test.seed = derive_seed(self.seed, ["test"]);
    }

    /// Checks every section, naming the offending one.
    pub fn validate(&self) -> Result<()> {
        self.raid.mcmc.prior.validate().context("raid.mcmc.prior")?;
        self.raid.mcmc.validate().context("raid.mcmc")?;
        self.raid.validate().context("raid")?;
        if self.raid.test.n_pred < 50 {
            bail!("raid.test.n_pred: at least 50 predictive draws are required, got {}", self.raid.test.n_pred);
        }
        if self.raid.test.n_perm == 0 {
            bail!("raid.test.n_perm: must be positive");
        }
        if let Some(g) = &self.data.generator {
            g.validate().context("data.generator")?;
        }
        if !self.data.delimiter.is_ascii() {
            bail!("data.delimiter: must be a single ASCII character");
        }
        for (i, p) in self.sweep.points().iter().enumerate() {
            let mut prior = self.raid.mcmc.prior.clone();
            prior.a = p.a;
            prior.similarity.k0 = p.k0;
            prior.cohesion = p.cohesion;
            prior.validate().with_context(|| format!("sweep point {}", i + 1))?;
        }
        Ok(())
    }

    /// Hash of the resolved configuration, independent of field order in
    /// the file and of where outputs go.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("out_dir");
        }
        // serde_json maps are sorted by key, so this text is canonical
        raid_core::seed::sha256_hex(v.to_string().as_bytes())
    }

    /// The configuration of one sweep point, as a standalone run would see it.
    pub fn at_sweep_point(&self, p: &SweepPoint) -> RunConfig {
        let mut c = self.clone();
        // every point sees the same data
        c.data.generator_seed = Some(self.data_seed());
        c.raid.mcmc.prior.a = p.a;
        c.raid.mcmc.prior.similarity.k0 = p.k0;
        c.raid.mcmc.prior.cohesion = p.cohesion;
        c.seed = derive_seed(self.seed, ["sweep", p.label.as_str()]);
        c.out_dir = self.out_dir.join(&p.label);
        c.derive_seeds();
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_field_order_and_out_dir() {
        let a: RunConfig = toml::from_str("seed = 4\nworkers = 2\n[raid]\nbins = 3\n").unwrap();
        let mut b: RunConfig = toml::from_str("[raid]\nbins = 3\n\n[sweep]\n").unwrap();
        b.workers = 2;
        b.seed = 4;
        b.out_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 5;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn default_grid_has_eighteen_points() {
        let pts = SweepGrid::default().points();
        assert_eq!(pts.len(), 18);
        let labels: std::collections::HashSet<_> = pts.iter().map(|p| &p.label).collect();
        assert_eq!(labels.len(), 18);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 3").is_err());
    }

    #[test]
    fn invalid_a_names_the_section() {
        let mut cfg = RunConfig::default();
        cfg.raid.mcmc.prior.a = 0.0;
        let msg = format!("{:#}", cfg.validate().unwrap_err());
        assert!(msg.starts_with("raid.mcmc.prior"), "{msg}");
    }

    #[test]
    fn flags_override_the_file() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides {
            bins: Some(3),
            pred_draws: Some(80),
            permutations: Some(99),
            ..Overrides::default()
        });
        assert_eq!((cfg.raid.bins, cfg.raid.test.n_pred, cfg.raid.test.n_perm), (3, 80, 99));
    }
}

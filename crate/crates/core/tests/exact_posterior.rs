mod oracles;

use std::collections::HashMap;

use raid_core::data::{ColumnData, ColumnSpec, Dataset, Response};
use raid_core::ppmx::{Cohesion, Partition, SimilarityHyper};
use raid_core::sampler::{HyperState, McmcConfig, PriorConfig, Sampler};

const X1: [usize; 6] = [0, 0, 1, 1, 0, 1];
const X2: [usize; 6] = [0, 1, 0, 1, 1, 0];
const Y: [f64; 6] = [-1.4, -1.1, 0.2, 1.3, 1.0, -0.3];

fn dataset(m: usize) -> Dataset {
    let bin = |v: &[usize]| ColumnData::Categorical(v[..m].to_vec());
    Dataset::new(
        vec![ColumnSpec::categorical("X1", ["0", "1"]), ColumnSpec::categorical("X2", ["0", "1"])],
        vec![bin(&X1), bin(&X2)],
        Response::Continuous(Y[..m].to_vec()),
    )
    .unwrap()
}

fn config(cohesion: Cohesion, prior_only: bool, seed: u64) -> McmcConfig {
    McmcConfig {
        n_iter: 2,
        burn_in: 1,
        seed,
        prior: PriorConfig {
            a: 2.0,
            cohesion,
            similarity: SimilarityHyper::default(),
            ..PriorConfig::default()
        },
        fixed_hyper: Some(HyperState { mu0: 0.0, sigma0: 1.0 }),
        prior_only,
        ..McmcConfig::default()
    }
}

/// Visit frequencies of each partition over `sweeps` sweeps after a short
/// warm-up, in the order of `parts`.
fn frequencies(ds: &Dataset, cfg: McmcConfig, parts: &[Vec<usize>], sweeps: usize) -> Vec<f64> {
    let index: HashMap<&[usize], usize> = parts.iter().enumerate().map(|(i, p)| (p.as_slice(), i)).collect();
    let mut sampler = Sampler::new(ds, cfg).unwrap();
    for _ in 0..1000 {
        sampler.sweep();
    }
    let mut counts = vec![0usize; parts.len()];
    for _ in 0..sweeps {
        sampler.sweep();
        let canon = Partition::canonical(&sampler.state().labels);
        counts[index[canon.labels()]] += 1;
    }
    counts.into_iter().map(|c| c as f64 / sweeps as f64).collect()
}

fn check(m: usize, cohesion: Cohesion, prior_only: bool, sweeps: usize, tol: f64) {
    let ds = dataset(m);
    let mass = match cohesion {
        Cohesion::Dp { m } => Some(m),
        Cohesion::Uniform => None,
    };
    let covs = [X1[..m].to_vec(), X2[..m].to_vec()];
    let y = (!prior_only).then_some(&Y[..m]);
    let exact = oracles::exact_partition_posterior(&covs, y, mass, 0.1, (0.0, 1.0, 2.0));
    let parts: Vec<Vec<usize>> = exact.iter().map(|(p, _)| p.clone()).collect();
    let probs: Vec<f64> = exact.iter().map(|(_, q)| *q).collect();
    let freq = frequencies(&ds, config(cohesion, prior_only, 7), &parts, sweeps);
    let tv = oracles::total_variation(&probs, &freq);
    eprintln!("m={m} {cohesion:?} prior_only={prior_only}: TV {tv:.4}");
    assert!(tv < tol, "m={m} {cohesion:?} prior_only={prior_only}: TV {tv}");
}

#[test]
fn prior_partition_distribution_dp() {
    check(5, Cohesion::Dp { m: 1.0 }, true, 100_000, 0.025);
}

#[test]
fn prior_partition_distribution_uniform() {
    check(6, Cohesion::Uniform, true, 100_000, 0.025);
}

#[test]
fn posterior_partition_distribution() {
    check(6, Cohesion::Dp { m: 1.0 }, false, 200_000, 0.05);
}

#[test]
fn posterior_partition_distribution_uniform_cohesion() {
    check(5, Cohesion::Uniform, false, 100_000, 0.025);
}

//! Pólya-tree k-sample statistic and its permutation test.
//!
//! The pooled sample is standardized and mapped through the standard normal
//! CDF onto `2^J` dyadic leaves. Each internal node at depth `j - 1` splits
//! with probability `Beta(c j^2, c j^2)`, so a set of leaf counts has the
//! marginal likelihood
//!
//! ```text
//! m_PT = prod_nodes B(a_j + n_left, a_j + n_right) / B(a_j, a_j)
//! ```
//!
//! and the statistic is `sum_g log m_PT(group g) - log m_PT(pooled)`, large
//! when the groups are better described by separate trees.

use rand::seq::SliceRandom;
use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::stats;

pub const MAX_DEPTH: u32 = 8;

/// `min(8, ceil(log2 n))`, at least 1.
pub fn default_depth(n: usize) -> u32 {
    let mut j = 0u32;
    while (1usize << j) < n {
        j += 1;
    }
    j.clamp(1, MAX_DEPTH)
}

/// Leaf indices of the pooled sample after standardization.
pub fn leaves(pooled: &[f64], depth: u32) -> Vec<u32> {
    let mean = stats::mean(pooled);
    let sd = if pooled.len() > 1 { stats::sample_sd(pooled) } else { 0.0 };
    let n_leaves = 1u32 << depth;
    pooled
        .iter()
        .map(|&x| {
            let z = if sd > 0.0 { (x - mean) / sd } else { 0.0 };
            let u = stats::norm_cdf(z);
            ((u * f64::from(n_leaves)) as u32).min(n_leaves - 1)
        })
        .collect()
}

/// Log marginal likelihoods of leaf-count vectors, with `ln Gamma` values
/// tabulated per level.
pub struct TreeScorer {
    depth: u32,
    /// `ln G(a_j + n)` and `ln G(2 a_j + n)` for `n = 0..=max_n`, per level.
    single: Vec<Vec<f64>>,
    double: Vec<Vec<f64>>,
}

impl TreeScorer {
    pub fn new(depth: u32, c: f64, max_n: usize) -> Self {
        let mut single = Vec::with_capacity(depth as usize);
        let mut double = Vec::with_capacity(depth as usize);
        for j in 1..=depth {
            let a = c * f64::from(j * j);
            single.push((0..=max_n).map(|n| ln_gamma(a + n as f64)).collect());
            double.push((0..=max_n).map(|n| ln_gamma(2.0 * a + n as f64)).collect());
        }
        Self { depth, single, double }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// `log m_PT` of a sample given its leaf counts (length `2^depth`).
    /// `scratch` is reused between calls.
    pub fn log_marginal(&self, leaf_counts: &[u32], scratch: &mut Vec<u32>) -> f64 {
        scratch.clear();
        scratch.extend_from_slice(leaf_counts);
        let mut total = 0.0;
        let mut width = leaf_counts.len();
        for j in (1..=self.depth as usize).rev() {
            let s = &self.single[j - 1];
            let d = &self.double[j - 1];
            let (s0, d0) = (s[0], d[0]);
            width /= 2;
            for node in 0..width {
                let l = scratch[2 * node] as usize;
                let r = scratch[2 * node + 1] as usize;
                if l + r > 0 {
                    // ln B(a+l, a+r) - ln B(a, a)
                    total += s[l] + s[r] - d[l + r] - 2.0 * s0 + d0;
                }
                scratch[node] = (l + r) as u32;
            }
        }
        total
    }
}

fn check_groups(groups: &[Vec<f64>]) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::Config("at least two groups are needed".into()));
    }
    if groups.iter().any(Vec::is_empty) {
        return Err(Error::Empty("a group has no observations"));
    }
    if groups.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Config("observations must be finite".into()));
    }
    Ok(())
}

struct Prepared {
    leaves: Vec<u32>,
    sizes: Vec<usize>,
    scorer: TreeScorer,
    pooled_term: f64,
}

fn prepare(groups: &[Vec<f64>], depth: Option<u32>, c: f64) -> Result<Prepared> {
    check_groups(groups)?;
    if !(c > 0.0) {
        return Err(Error::Config("Polya-tree precision must be positive".into()));
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let depth = depth.unwrap_or_else(|| default_depth(pooled.len())).clamp(1, 20);
    let leaves = leaves(&pooled, depth);
    let scorer = TreeScorer::new(depth, c, pooled.len());
    let mut counts = vec![0u32; 1 << depth];
    leaves.iter().for_each(|&l| counts[l as usize] += 1);
    let pooled_term = scorer.log_marginal(&counts, &mut Vec::new());
    Ok(Prepared {
        leaves,
        sizes: groups.iter().map(Vec::len).collect(),
        scorer,
        pooled_term,
    })
}

impl Prepared {
    fn statistic(&self, leaves: &[u32], counts: &mut Vec<u32>, scratch: &mut Vec<u32>) -> f64 {
        let mut start = 0;
        let mut total = 0.0;
        for &n in &self.sizes {
            counts.clear();
            counts.resize(1 << self.scorer.depth(), 0);
            leaves[start..start + n].iter().for_each(|&l| counts[l as usize] += 1);
            total += self.scorer.log_marginal(counts, scratch);
            start += n;
        }
        total - self.pooled_term
    }
}

/// The k-sample statistic with depth `J` (default `min(8, ceil(log2 n))`) and
/// precision `c`.
pub fn polya_tree_statistic(groups: &[Vec<f64>], depth: Option<u32>, c: f64) -> Result<f64> {
    let p = prepare(groups, depth, c)?;
    Ok(p.statistic(&p.leaves, &mut Vec::new(), &mut Vec::new()))
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PermutationResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_perm: usize,
    pub n_exceed: usize,
}

/// `p = (1 + #{T_perm >= T_obs}) / (1 + n_perm)`, permuting group labels
/// over the pooled sample with group sizes preserved.
pub fn permutation_test<R: Rng + ?Sized>(groups: &[Vec<f64>], n_perm: usize, rng: &mut R) -> Result<PermutationResult> {
    permutation_test_with(groups, n_perm, None, 1.0, rng)
}

pub fn permutation_test_with<R: Rng + ?Sized>(
    groups: &[Vec<f64>],
    n_perm: usize,
    depth: Option<u32>,
    c: f64,
    rng: &mut R,
) -> Result<PermutationResult> {
    if n_perm == 0 {
        return Err(Error::Config("n_perm must be at least 1".into()));
    }
    let p = prepare(groups, depth, c)?;
    let (mut counts, mut scratch) = (Vec::new(), Vec::new());
    let observed = p.statistic(&p.leaves, &mut counts, &mut scratch);
    // ties within rounding count as exceedances
    let tol = 1e-9 * observed.abs().max(1.0);
    let mut perm = p.leaves.clone();
    let mut n_exceed = 0;
    for _ in 0..n_perm {
        perm.shuffle(rng);
        if p.statistic(&perm, &mut counts, &mut scratch) >= observed - tol {
            n_exceed += 1;
        }
    }
    Ok(PermutationResult {
        statistic: observed,
        p_value: (1 + n_exceed) as f64 / (1 + n_perm) as f64,
        n_perm,
        n_exceed,
    })
}
